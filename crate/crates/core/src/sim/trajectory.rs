use std::f64::consts::FRAC_PI_2;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::kinematics::Pose;

/// Meters of path length charged per radian of orientation change, so pure
/// rotations still take time to execute.
pub const ROTATION_LENGTH: f64 = 0.2;
pub const DEFAULT_EE_SPEED: f64 = 0.4;
/// Approach pointing up, used at the top of the reachable height band.
pub const TOP_GRASP_PITCH: f64 = -FRAC_PI_2;
/// Approach pointing down, used at the bottom of the band.
pub const BOTTOM_GRASP_PITCH: f64 = FRAC_PI_2;
const ARC_STEP: f64 = 5.0 * std::f64::consts::PI / 180.0;

/// EE orientation whose approach (z) axis points along heading `yaw`,
/// tilted down by `pitch`. The x axis points along the heading when the
/// approach is straight down and up when it is horizontal, so every grasp is
/// a pure pitch away from a downward tool.
pub fn grasp_orientation(yaw: f64, pitch: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
        * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2 + pitch)
        * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryTag {
    Line,
    Arc,
    Door,
    Drawer,
    Cabinet,
    Planner,
    PickPlace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory", into = "RawTrajectory")]
pub struct EETrajectory {
    waypoints: Vec<Pose>,
    speed: f64,
    tag: TrajectoryTag,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTrajectory {
    waypoints: Vec<Pose>,
    speed: f64,
    tag: TrajectoryTag,
}

impl TryFrom<RawTrajectory> for EETrajectory {
    type Error = SimError;
    fn try_from(r: RawTrajectory) -> Result<Self, SimError> {
        EETrajectory::new(r.waypoints, r.speed, r.tag)
    }
}

impl From<EETrajectory> for RawTrajectory {
    fn from(t: EETrajectory) -> Self {
        RawTrajectory {
            waypoints: t.waypoints,
            speed: t.speed,
            tag: t.tag,
        }
    }
}

fn segment_length(a: &Pose, b: &Pose) -> f64 {
    let d = (b.position - a.position).norm();
    let rel = a.orientation.rotation_to(&b.orientation);
    // atan2 keeps tiny angles exact where acos would not
    let r = 2.0 * rel.imag().norm().atan2(rel.w.abs());
    d.max(r * ROTATION_LENGTH)
}

impl EETrajectory {
    pub fn new(waypoints: Vec<Pose>, speed: f64, tag: TrajectoryTag) -> Result<Self, SimError> {
        if waypoints.is_empty() {
            return Err(SimError::BadTrajectory("no waypoints".into()));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(SimError::BadTrajectory(format!("speed {speed} must be positive")));
        }
        if waypoints.iter().any(|w| !w.is_finite()) {
            return Err(SimError::BadTrajectory("non-finite waypoint".into()));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in waypoints.windows(2) {
            acc += segment_length(&w[0], &w[1]);
            cumulative.push(acc);
        }
        Ok(Self {
            waypoints,
            speed,
            tag,
            cumulative,
        })
    }

    pub fn waypoints(&self) -> &[Pose] {
        &self.waypoints
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn tag(&self) -> TrajectoryTag {
        self.tag
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Path length at which waypoint `k` is reached.
    pub fn length_at(&self, k: usize) -> f64 {
        self.cumulative[k.min(self.cumulative.len() - 1)]
    }

    pub fn start(&self) -> &Pose {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &Pose {
        self.waypoints.last().unwrap()
    }

    /// Pose at path length `s`, clamped to the ends. Positions interpolate
    /// linearly and orientations by slerp within each segment.
    pub fn sample(&self, s: f64) -> Pose {
        if s <= 0.0 || self.waypoints.len() == 1 {
            return *self.start();
        }
        if s >= self.length() {
            return *self.end();
        }
        let k = self.cumulative.partition_point(|c| *c <= s).max(1) - 1;
        let (a, b) = (&self.waypoints[k], &self.waypoints[k + 1]);
        let seg = self.cumulative[k + 1] - self.cumulative[k];
        if seg <= 0.0 {
            return *b;
        }
        let t = (s - self.cumulative[k]) / seg;
        Pose::new(a.position.lerp(&b.position, t), a.orientation.slerp(&b.orientation, t))
    }

    /// Same path with `pose` inserted in front.
    pub fn prepended(&self, pose: Pose) -> Self {
        let mut w = Vec::with_capacity(self.waypoints.len() + 1);
        w.push(pose);
        w.extend_from_slice(&self.waypoints);
        Self::new(w, self.speed, self.tag).expect("finite inputs")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticulatedKind {
    Door,
    Drawer,
    Cabinet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HingeSide {
    Left,
    Right,
}

/// Handle frame of an articulated object: origin at the handle, `yaw` is the
/// heading of the outward normal (toward the robot), z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectFrame {
    pub handle: Vector3<f64>,
    pub yaw: f64,
}

impl ObjectFrame {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    /// Left of the normal when looking at the object from the robot side
    /// is `-lateral`; this is the object's own +y.
    pub fn lateral(&self) -> Vector3<f64> {
        Vector3::new(-self.yaw.sin(), self.yaw.cos(), 0.0)
    }

    fn to_world(&self, local: Vector3<f64>) -> Vector3<f64> {
        self.handle + self.normal() * local.x + self.lateral() * local.y + Vector3::z() * local.z
    }

    /// EE orientation grasping the handle: approach into the object.
    pub fn grasp(&self) -> UnitQuaternion<f64> {
        grasp_orientation(self.yaw + std::f64::consts::PI, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArticulationParams {
    pub pull_length: f64,
    pub radius: f64,
    pub opening_angle: f64,
    pub hinge: HingeSide,
}

impl Default for ArticulationParams {
    fn default() -> Self {
        Self {
            pull_length: 0.3,
            radius: 0.8,
            opening_angle: FRAC_PI_2,
            hinge: HingeSide::Left,
        }
    }
}

/// EE motion that opens an articulated object, starting at its handle.
///
/// Drawers are pulled straight out along the normal. Doors and cabinets
/// swing toward the robot about a vertical hinge `radius` to the side of the
/// handle; the EE orientation turns with the leaf.
pub fn articulated_trajectory(
    kind: ArticulatedKind,
    object: &ObjectFrame,
    params: &ArticulationParams,
    speed: f64,
) -> Result<EETrajectory, SimError> {
    let finite = object.handle.iter().all(|v| v.is_finite()) && object.yaw.is_finite();
    if !finite {
        return Err(SimError::BadParams("object frame must be finite".into()));
    }
    let grasp = object.grasp();
    match kind {
        ArticulatedKind::Drawer => {
            if !(params.pull_length > 0.0 && params.pull_length.is_finite()) {
                return Err(SimError::BadParams(format!("pull length {} must be positive", params.pull_length)));
            }
            let end = object.handle + object.normal() * params.pull_length;
            EETrajectory::new(
                vec![Pose::new(object.handle, grasp), Pose::new(end, grasp)],
                speed,
                TrajectoryTag::Drawer,
            )
        }
        ArticulatedKind::Door | ArticulatedKind::Cabinet => {
            if !(params.radius > 0.0 && params.radius.is_finite()) {
                return Err(SimError::BadParams(format!("radius {} must be positive", params.radius)));
            }
            if !(params.opening_angle > 0.0 && params.opening_angle <= std::f64::consts::PI) {
                return Err(SimError::BadParams(format!(
                    "opening angle {} must lie in (0, pi]",
                    params.opening_angle
                )));
            }
            let side = match params.hinge {
                HingeSide::Left => 1.0,
                HingeSide::Right => -1.0,
            };
            let steps = (params.opening_angle / ARC_STEP).ceil().max(1.0) as usize;
            let r = params.radius;
            let waypoints = (0..=steps)
                .map(|k| {
                    let theta = params.opening_angle * k as f64 / steps as f64;
                    // hinge at local (0, side*r); handle starts at the origin
                    let local = Vector3::new(r * theta.sin(), side * r * (1.0 - theta.cos()), 0.0);
                    let turn = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), side * theta);
                    Pose::new(object.to_world(local), turn * grasp)
                })
                .collect();
            let tag = if kind == ArticulatedKind::Door {
                TrajectoryTag::Door
            } else {
                TrajectoryTag::Cabinet
            };
            EETrajectory::new(waypoints, speed, tag)
        }
    }
}
