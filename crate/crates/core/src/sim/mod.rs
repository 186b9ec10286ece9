//! Kinematic simulation of mobile manipulation episodes.
//!
//! Base velocities are integrated in closed form, the torso lift follows its
//! commanded velocity, and the arm takes one damped-least-squares step per
//! tick toward the current EE target. Each tick checks the base footprint
//! and the EE point against the map and measures the tracking error.
//!
//! There is no reward signal or discount: the controller is not learned, so
//! an episode only reports success or the first failure.

pub mod map;
pub mod planner;
pub mod tasks;
pub mod trajectory;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use map::{OccupancyMap, Rect};
pub use planner::plan_ee_path;
pub use tasks::{parse_task_list, sample_episode, DoorLeaf, TaskConfig, TaskEpisode, TaskId, Thresholds};
pub use trajectory::{articulated_trajectory, ArticulatedKind, ArticulationParams, EETrajectory, ObjectFrame};

use crate::kinematics::{forward_kinematics, link_transform, DlsProblem, IkSettings, Pose};
use crate::robot::{DriveType, RobotDescription};

pub const DEFAULT_DT: f64 = 0.02;
const LENGTH_EPS: f64 = 1e-9;
/// Per-step pull of the arm toward its home posture, inside the task null space.
const POSTURE_GAIN: f64 = 0.05;
pub const EE_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid map: {0}")]
    BadMap(String),
    #[error("invalid trajectory: {0}")]
    BadTrajectory(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("invalid episode record: {0}")]
    BadEpisode(String),
    #[error("no collision-free path")]
    NoPath,
    #[error("robot has no frame `{0}`")]
    Robot(String),
}

/// Planar base pose in the world.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl BasePose {
    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }
}

/// Base velocity in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2D {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist2D {
    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

/// A differential drive cannot move sideways: the lateral part is dropped.
pub fn project_to_drive(twist: Twist2D, drive: DriveType) -> Twist2D {
    match drive {
        DriveType::Omnidirectional => twist,
        DriveType::Differential => Twist2D { vy: 0.0, ..twist },
    }
}

/// Pose after holding a constant body twist for `dt` (exact on SE(2)).
pub fn integrate_base(pose: &BasePose, twist: Twist2D, dt: f64) -> BasePose {
    let th = twist.omega * dt;
    let (dx, dy) = if th.abs() < 1e-9 {
        // second-order series of the exact map, accurate to ~1e-27 here
        let a = dt * (1.0 - th * th / 6.0);
        let b = dt * (th / 2.0);
        (a * twist.vx - b * twist.vy, b * twist.vx + a * twist.vy)
    } else {
        let (s, c) = th.sin_cos();
        let a = s / twist.omega;
        let b = (1.0 - c) / twist.omega;
        (a * twist.vx - b * twist.vy, b * twist.vx + a * twist.vy)
    };
    let (s0, c0) = pose.yaw.sin_cos();
    BasePose {
        x: pose.x + c0 * dx - s0 * dy,
        y: pose.y + s0 * dx + c0 * dy,
        yaw: pose.yaw + th,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub base: BasePose,
    pub q: Vec<f64>,
    pub time: f64,
    pub steps: usize,
    /// Path length along the EE trajectory already commanded.
    pub progress: f64,
    /// EE pose in the world after the last step.
    pub ee: Pose,
    pub position_error: f64,
    pub orientation_error: f64,
    pub max_position_error: f64,
    pub max_orientation_error: f64,
    pub sum_position_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPart {
    Base,
    EndEffector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    Collision { part: CollisionPart },
    JointLimit { dof: usize },
    TrackingExceeded { position_error: f64, orientation_error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Collision,
    JointLimit,
    TrackingExceeded,
    Timeout,
}

impl Failure {
    pub fn kind(&self) -> FailureKind {
        match self {
            Failure::Collision { .. } => FailureKind::Collision,
            Failure::JointLimit { .. } => FailureKind::JointLimit,
            Failure::TrackingExceeded { .. } => FailureKind::TrackingExceeded,
        }
    }
}

/// One tick of whole-body commands.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub base: Twist2D,
    pub torso_velocity: f64,
    /// Speed along the EE trajectory, m/s of path length.
    pub ee_speed: f64,
}

pub trait Policy {
    fn command(&self, state: &SimState, sim: &Simulator<'_>) -> Command;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task: TaskId,
    pub seed: u64,
    pub success: bool,
    pub failure: Option<FailureKind>,
    pub steps: usize,
    pub mean_tracking_error: f64,
    pub max_position_error: f64,
    pub max_orientation_error: f64,
    /// Fraction of the EE path completed.
    pub progress: f64,
    pub thresholds: Thresholds,
}

/// Per-episode simulator: a designed robot and one task instance.
pub struct Simulator<'a> {
    robot: &'a RobotDescription,
    episode: &'a TaskEpisode,
    trajectory: EETrajectory,
    arm: DlsProblem<'a>,
    torso: Vec<usize>,
    dt: f64,
    ee_link: usize,
    anchor_link: usize,
    door_open_at: Option<f64>,
    door_cells: Vec<[f64; 2]>,
}

impl<'a> Simulator<'a> {
    pub fn new(robot: &'a RobotDescription, episode: &'a TaskEpisode) -> Result<Self, SimError> {
        Self::with_dt(robot, episode, DEFAULT_DT)
    }

    pub fn with_dt(robot: &'a RobotDescription, episode: &'a TaskEpisode, dt: f64) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::BadParams(format!("dt {dt} must be positive")));
        }
        let home = robot.home();
        let ee_local = forward_kinematics(robot, home, robot.ee_frame())
            .map_err(|e| SimError::Robot(e.to_string()))?;
        let ee_world = Pose::from_isometry(&(episode.start.to_isometry() * ee_local.to_isometry()));
        let trajectory = episode.trajectory.prepended(ee_world);
        let arm_dofs = robot.arm_dofs();
        let settings = IkSettings {
            active: Some(arm_dofs.clone()),
            ..IkSettings::default()
        };
        let caps = arm_dofs
            .iter()
            .map(|d| settings.max_step.min(robot.dof_limits(*d).velocity * dt))
            .collect();
        let arm = DlsProblem::new(robot, robot.ee_frame(), &settings)
            .map_err(|e| SimError::Robot(e.to_string()))?
            .with_step_caps(caps)
            .with_posture(home.to_vec(), POSTURE_GAIN);
        let arm_hook = robot.joint_index(&robot.hooks().arm).expect("validated hook");
        let anchor_link = robot.link_index(&robot.joints()[arm_hook].child).expect("validated hook");
        let door_open_at = episode.door.map(|d| trajectory.length_at(d.open_at_waypoint + 1));
        let door_cells = match &episode.door {
            Some(d) => episode
                .map
                .cells_overlapping(&d.rect)
                .into_iter()
                .map(|(i, j)| episode.map.cell_center(i, j))
                .collect(),
            None => Vec::new(),
        };
        Ok(Self {
            robot,
            episode,
            trajectory,
            arm,
            torso: robot.torso_dofs(),
            dt,
            ee_link: robot.link_index(robot.ee_frame()).expect("validated ee frame"),
            anchor_link,
            door_open_at,
            door_cells,
        })
    }

    pub fn robot(&self) -> &RobotDescription {
        self.robot
    }

    pub fn episode(&self) -> &TaskEpisode {
        self.episode
    }

    pub fn map(&self) -> &OccupancyMap {
        &self.episode.map
    }

    /// Full EE path, starting at the robot's initial EE pose.
    pub fn trajectory(&self) -> &EETrajectory {
        &self.trajectory
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Link at the base of the arm.
    pub fn anchor_link(&self) -> usize {
        self.anchor_link
    }

    pub fn door_open(&self, progress: f64) -> bool {
        self.door_open_at.is_none_or(|s| progress >= s)
    }

    /// Cell centers of the closed door leaf, empty once open.
    pub fn door_cells(&self, progress: f64) -> &[[f64; 2]] {
        if self.door_open(progress) {
            &[]
        } else {
            &self.door_cells
        }
    }

    pub fn ee_world(&self, base: &BasePose, q: &[f64]) -> Pose {
        Pose::from_isometry(&(base.to_isometry() * link_transform(self.robot, q, self.ee_link)))
    }

    pub fn initial_state(&self) -> SimState {
        let q = self.robot.home().to_vec();
        let ee = self.ee_world(&self.episode.start, &q);
        SimState {
            base: self.episode.start,
            q,
            time: 0.0,
            steps: 0,
            progress: 0.0,
            ee,
            position_error: 0.0,
            orientation_error: 0.0,
            max_position_error: 0.0,
            max_orientation_error: 0.0,
            sum_position_error: 0.0,
        }
    }

    fn collision(&self, base: &BasePose, ee: &Pose, progress: f64) -> Option<CollisionPart> {
        let half = self.robot.footprint().half_extents;
        let map = &self.episode.map;
        let leaf_hit = match &self.episode.door {
            Some(d) if !self.door_open(progress) => map::footprint_overlaps_rect(base, half, &d.rect),
            _ => false,
        };
        if leaf_hit || map.footprint_collides(base, half) {
            return Some(CollisionPart::Base);
        }
        if map.point_collides(&ee.position, EE_RADIUS) {
            return Some(CollisionPart::EndEffector);
        }
        None
    }

    /// Advances one tick toward `ee_target` (world frame).
    pub fn step(
        &self,
        state: &SimState,
        base_cmd: Twist2D,
        torso_velocity: f64,
        ee_target: &Pose,
        dt: f64,
    ) -> Result<SimState, Failure> {
        self.step_to(state, base_cmd, torso_velocity, ee_target, state.progress, dt)
    }

    fn step_to(
        &self,
        state: &SimState,
        base_cmd: Twist2D,
        torso_velocity: f64,
        ee_target: &Pose,
        progress: f64,
        dt: f64,
    ) -> Result<SimState, Failure> {
        assert!(dt > 0.0, "dt must be positive");
        if let Some(dof) = (0..self.robot.dof()).find(|d| !self.robot.dof_limits(*d).contains(state.q[*d])) {
            return Err(Failure::JointLimit { dof });
        }
        let twist = project_to_drive(base_cmd, self.robot.drive());
        let base = integrate_base(&state.base, twist, dt);
        let mut q = state.q.clone();
        for d in &self.torso {
            q[*d] = self.robot.dof_limits(*d).clamp(q[*d] + torso_velocity * dt);
        }
        let local_target = Pose::from_isometry(&(base.to_isometry().inverse() * ee_target.to_isometry()));
        self.arm.step(&mut q, &local_target);
        let ee = self.ee_world(&base, &q);
        if let Some(part) = self.collision(&base, &ee, progress) {
            return Err(Failure::Collision { part });
        }
        let (pe, oe) = ee.error_to(ee_target);
        let th = &self.episode.thresholds;
        if pe > th.translation || oe > th.rotation {
            return Err(Failure::TrackingExceeded {
                position_error: pe,
                orientation_error: oe,
            });
        }
        Ok(SimState {
            base,
            q,
            time: state.time + dt,
            steps: state.steps + 1,
            progress,
            ee,
            position_error: pe,
            orientation_error: oe,
            max_position_error: state.max_position_error.max(pe),
            max_orientation_error: state.max_orientation_error.max(oe),
            sum_position_error: state.sum_position_error + pe,
        })
    }

    fn result(&self, state: &SimState, failure: Option<FailureKind>) -> EpisodeResult {
        let len = self.trajectory.length();
        EpisodeResult {
            task: self.episode.task,
            seed: self.episode.seed,
            success: failure.is_none(),
            failure,
            steps: state.steps,
            mean_tracking_error: if state.steps > 0 {
                state.sum_position_error / state.steps as f64
            } else {
                0.0
            },
            max_position_error: state.max_position_error,
            max_orientation_error: state.max_orientation_error,
            progress: if len > 0.0 { (state.progress / len).min(1.0) } else { 1.0 },
            thresholds: self.episode.thresholds,
        }
    }

    /// Runs until the EE reaches the end of its path, a failure, or the
    /// horizon.
    pub fn run(&self, policy: &impl Policy) -> EpisodeResult {
        let mut state = self.initial_state();
        if self.collision(&state.base, &state.ee, 0.0).is_some() {
            return self.result(&state, Some(FailureKind::Collision));
        }
        let len = self.trajectory.length();
        if len <= LENGTH_EPS {
            return self.result(&state, None);
        }
        for _ in 0..self.episode.horizon {
            let mut cmd = policy.command(&state, self);
            if !(cmd.base.is_finite() && cmd.torso_velocity.is_finite() && cmd.ee_speed.is_finite()) {
                cmd = Command::default();
            }
            let progress = (state.progress + cmd.ee_speed.max(0.0) * self.dt).min(len);
            let target = self.trajectory.sample(progress);
            match self.step_to(&state, cmd.base, cmd.torso_velocity, &target, progress, self.dt) {
                Ok(next) => state = next,
                Err(f) => {
                    let mut s = state.clone();
                    s.steps += 1;
                    s.progress = progress;
                    return self.result(&s, Some(f.kind()));
                }
            }
            if state.progress >= len - LENGTH_EPS {
                return self.result(&state, None);
            }
        }
        self.result(&state, Some(FailureKind::Timeout))
    }
}

pub fn run_episode(robot: &RobotDescription, episode: &TaskEpisode, policy: &impl Policy) -> Result<EpisodeResult, SimError> {
    Ok(Simulator::new(robot, episode)?.run(policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::bundled;

    struct Idle;
    impl Policy for Idle {
        fn command(&self, _: &SimState, _: &Simulator<'_>) -> Command {
            Command::default()
        }
    }

    fn empty_episode(waypoints: Vec<Pose>) -> TaskEpisode {
        TaskEpisode {
            task: TaskId::RandomGoal,
            seed: 0,
            map: OccupancyMap::square([0.0, 0.0], 4.0, 0.1, vec![]).unwrap(),
            start: BasePose::default(),
            trajectory: EETrajectory::new(waypoints, 0.4, trajectory::TrajectoryTag::Line).unwrap(),
            thresholds: Thresholds::default(),
            horizon: 50,
            key_height: 1.0,
            door: None,
        }
    }

    #[test]
    fn constant_twist_matches_closed_form() {
        let tw = Twist2D { vx: 0.7, vy: -0.2, omega: 0.9 };
        let mut p = BasePose { x: 0.3, y: -1.0, yaw: 0.4 };
        let start = p;
        for _ in 0..1000 {
            p = integrate_base(&p, tw, 0.02);
        }
        let exact = integrate_base(&start, tw, 20.0);
        assert!((p.x - exact.x).abs() < 1e-9 && (p.y - exact.y).abs() < 1e-9 && (p.yaw - exact.yaw).abs() < 1e-9);
    }

    #[test]
    fn straight_line_without_rotation() {
        let p = integrate_base(&BasePose { x: 0.0, y: 0.0, yaw: std::f64::consts::FRAC_PI_2 }, Twist2D { vx: 1.0, vy: 0.0, omega: 0.0 }, 2.0);
        assert!(p.x.abs() < 1e-15 && (p.y - 2.0).abs() < 1e-15);
    }

    #[test]
    fn differential_drops_lateral() {
        let t = project_to_drive(Twist2D { vx: 0.5, vy: 0.3, omega: 0.1 }, DriveType::Differential);
        assert_eq!(t, Twist2D { vx: 0.5, vy: 0.0, omega: 0.1 });
    }

    #[test]
    fn idle_at_reachable_target_only_advances_time() {
        let r = bundled("fmm_franka").unwrap();
        let ep = empty_episode(vec![Pose::identity()]);
        let sim = Simulator::new(&r, &ep).unwrap();
        let s0 = sim.initial_state();
        let s1 = sim.step(&s0, Twist2D::default(), 0.0, &s0.ee, 0.02).unwrap();
        assert_eq!(s1.base, s0.base);
        assert_eq!(s1.q, s0.q);
        assert_eq!(s1.time, 0.02);
    }

    #[test]
    fn zero_length_path_succeeds_immediately() {
        let r = bundled("fmm_franka").unwrap();
        let ee = forward_kinematics(&r, r.home(), r.ee_frame()).unwrap();
        let ep = empty_episode(vec![ee]);
        let res = run_episode(&r, &ep, &Idle).unwrap();
        assert!(res.success, "{res:?}");
        assert!(res.steps <= 1);
    }

    #[test]
    fn driving_into_a_wall_collides() {
        let r = bundled("fmm_franka").unwrap();
        let mut ep = empty_episode(vec![Pose::identity()]);
        ep.map = OccupancyMap::square([0.0, 0.0], 4.0, 0.1, vec![Rect::new([0.55, -1.0], [0.8, 1.0], 0.3)]).unwrap();
        let sim = Simulator::new(&r, &ep).unwrap();
        let mut s = sim.initial_state();
        let fwd = Twist2D { vx: 1.0, vy: 0.0, omega: 0.0 };
        let mut failure = None;
        for _ in 0..20 {
            let target = s.ee;
            match sim.step(&s, fwd, 0.0, &Pose::new(target.position + Vector3::x() * 0.02, target.orientation), 0.02) {
                Ok(n) => s = n,
                Err(f) => {
                    failure = Some(f);
                    break;
                }
            }
        }
        assert_eq!(failure, Some(Failure::Collision { part: CollisionPart::Base }));
        // contact happens once the 0.48 m half length reaches x = 0.55
        assert!((s.base.x - 0.06).abs() < 0.021, "{}", s.base.x);
    }

    #[test]
    fn start_inside_obstacle_fails_at_once() {
        let r = bundled("fmm_franka").unwrap();
        let mut ep = empty_episode(vec![Pose::identity()]);
        ep.map = OccupancyMap::square([0.0, 0.0], 4.0, 0.1, vec![Rect::new([-0.1, -0.1], [0.1, 0.1], 0.2)]).unwrap();
        let res = run_episode(&r, &ep, &Idle).unwrap();
        assert_eq!(res.failure, Some(FailureKind::Collision));
        assert_eq!(res.steps, 0);
    }

    #[test]
    fn idle_policy_times_out() {
        let r = bundled("fmm_franka").unwrap();
        let ep = empty_episode(vec![Pose::new(Vector3::new(2.0, 0.0, 1.0), UnitQuaternion::identity())]);
        let res = run_episode(&r, &ep, &Idle).unwrap();
        assert_eq!(res.failure, Some(FailureKind::Timeout));
        assert_eq!(res.steps, 50);
    }
}
