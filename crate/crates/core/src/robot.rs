//! Robot descriptions: a tree of links and joints plus the three mount hooks
//! where a design point is injected.
//!
//! Descriptions are immutable once built. [`apply_design`] returns a new
//! description and leaves its input untouched.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::design::DesignParams;
use crate::units::{de_angle, de_angle3};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RobotError {
    #[error("{source_name}: {message}")]
    Parse { source_name: String, message: String },
    #[error("invalid robot description: {0}")]
    Validation(String),
    #[error("mount hook `{hook}` names no joint `{joint}`")]
    MountHookMissing { hook: &'static str, joint: String },
    #[error("unknown bundled robot `{0}`")]
    UnknownBundled(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveType {
    #[serde(rename = "omni")]
    Omnidirectional,
    #[serde(rename = "differential")]
    Differential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    None,
    Sphere(f64),
    /// Half extents.
    Box([f64; 3]),
    /// Radius and length along z.
    Cylinder([f64; 2]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
}

impl JointLimits {
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub axis: Unit<Vector3<f64>>,
    pub origin: Isometry3<f64>,
    /// Required for revolute and prismatic joints.
    pub limits: Option<JointLimits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub half_extents: [f64; 2],
    pub wheels: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountHooks {
    /// Joint placing the tower on the base.
    pub tower: String,
    /// Joint placing the arm base on the tower.
    pub arm: String,
    /// Joint placing the end effector on the arm flange.
    pub ee: String,
}

/// Index data derived from the joint tree.
#[derive(Debug, Clone, PartialEq)]
struct Topology {
    root: usize,
    link_index: HashMap<String, usize>,
    /// Joint whose child is this link; `None` for the root.
    parent_joint: Vec<Option<usize>>,
    joint_parent_link: Vec<usize>,
    /// Degree-of-freedom index of each joint (`None` for fixed joints).
    dof_of_joint: Vec<Option<usize>>,
    dof_joints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotDescription {
    name: String,
    links: Vec<Link>,
    joints: Vec<Joint>,
    footprint: Footprint,
    drive: DriveType,
    hooks: MountHooks,
    ee_frame: String,
    payload_kg: f64,
    max_base_speed: f64,
    max_base_yaw_rate: f64,
    home: Vec<f64>,
    topo: Topology,
}

/// Everything needed to build a [`RobotDescription`]; validated by
/// [`RobotDescription::new`].
#[derive(Debug, Clone)]
pub struct RobotParts {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub footprint: Footprint,
    pub drive: DriveType,
    pub hooks: MountHooks,
    /// Defaults to the child link of the EE mount joint.
    pub ee_frame: Option<String>,
    pub payload_kg: f64,
    pub max_base_speed: f64,
    pub max_base_yaw_rate: f64,
    /// Defaults to zero clamped into each joint's limits.
    pub home: Option<Vec<f64>>,
}

impl RobotDescription {
    pub fn new(parts: RobotParts) -> Result<Self, RobotError> {
        let RobotParts {
            name,
            links,
            joints,
            footprint,
            drive,
            hooks,
            ee_frame,
            payload_kg,
            max_base_speed,
            max_base_yaw_rate,
            home,
        } = parts;
        let invalid = |m: String| RobotError::Validation(m);

        if links.is_empty() {
            return Err(invalid("no links".into()));
        }
        let mut link_index = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.name.clone(), i).is_some() {
                return Err(invalid(format!("duplicate link `{}`", l.name)));
            }
            if !(l.mass.is_finite() && l.mass >= 0.0) {
                return Err(invalid(format!("link `{}` has invalid mass {}", l.name, l.mass)));
            }
            if !l.com.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("link `{}` has a non-finite COM", l.name)));
            }
        }

        let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
        let mut joint_parent_link = Vec::with_capacity(joints.len());
        let mut joint_names = HashMap::new();
        for (ji, j) in joints.iter().enumerate() {
            if joint_names.insert(j.name.clone(), ji).is_some() {
                return Err(invalid(format!("duplicate joint `{}`", j.name)));
            }
            let p = *link_index
                .get(&j.parent)
                .ok_or_else(|| invalid(format!("joint `{}`: unknown parent `{}`", j.name, j.parent)))?;
            let c = *link_index
                .get(&j.child)
                .ok_or_else(|| invalid(format!("joint `{}`: unknown child `{}`", j.name, j.child)))?;
            if parent_joint[c].is_some() {
                return Err(invalid(format!("link `{}` has more than one parent joint", j.child)));
            }
            parent_joint[c] = Some(ji);
            joint_parent_link.push(p);
            let finite_origin = j.origin.translation.vector.iter().all(|v| v.is_finite())
                && j.origin.rotation.coords.iter().all(|v| v.is_finite());
            if !finite_origin {
                return Err(invalid(format!("joint `{}` has a non-finite origin", j.name)));
            }
            if j.kind != JointKind::Fixed {
                let lim = j
                    .limits
                    .ok_or_else(|| invalid(format!("joint `{}` needs position limits", j.name)))?;
                if !(lim.lower.is_finite() && lim.upper.is_finite() && lim.lower <= lim.upper) {
                    return Err(invalid(format!(
                        "joint `{}` has non-finite or inverted limits [{}, {}]",
                        j.name, lim.lower, lim.upper
                    )));
                }
                if !(lim.velocity.is_finite() && lim.velocity > 0.0) {
                    return Err(invalid(format!("joint `{}` needs a positive velocity limit", j.name)));
                }
            }
        }

        let roots: Vec<usize> = (0..links.len()).filter(|i| parent_joint[*i].is_none()).collect();
        if roots.len() != 1 {
            let names: Vec<&str> = roots.iter().map(|i| links[*i].name.as_str()).collect();
            return Err(invalid(if roots.is_empty() {
                "joint graph has a cycle (no root link)".to_string()
            } else {
                format!("expected exactly one root link, found {names:?}")
            }));
        }
        let root = roots[0];
        // every link must reach the root by walking parents
        for start in 0..links.len() {
            let mut cur = start;
            let mut steps = 0;
            while let Some(j) = parent_joint[cur] {
                cur = joint_parent_link[j];
                steps += 1;
                if steps > joints.len() {
                    return Err(invalid(format!(
                        "joint graph has a cycle through link `{}`",
                        links[start].name
                    )));
                }
            }
        }

        for (hook, joint) in [("tower", &hooks.tower), ("arm", &hooks.arm), ("ee", &hooks.ee)] {
            if !joint_names.contains_key(joint) {
                return Err(RobotError::MountHookMissing {
                    hook,
                    joint: joint.clone(),
                });
            }
        }

        let mut dof_of_joint = vec![None; joints.len()];
        let mut dof_joints = Vec::new();
        for (ji, j) in joints.iter().enumerate() {
            if j.kind != JointKind::Fixed {
                dof_of_joint[ji] = Some(dof_joints.len());
                dof_joints.push(ji);
            }
        }

        let ee_frame = match ee_frame {
            Some(f) => f,
            None => joints[joint_names[&hooks.ee]].child.clone(),
        };
        if !link_index.contains_key(&ee_frame) {
            return Err(invalid(format!("ee_frame `{ee_frame}` is not a link")));
        }

        if footprint.wheels.len() < 3 {
            return Err(invalid("base footprint needs at least 3 wheel contacts".into()));
        }
        if !footprint.half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            return Err(invalid("base footprint half extents must be positive".into()));
        }
        if !(payload_kg.is_finite() && payload_kg >= 0.0) {
            return Err(invalid(format!("payload {payload_kg} kg is invalid")));
        }
        if !(max_base_speed > 0.0 && max_base_yaw_rate > 0.0) {
            return Err(invalid("base speed limits must be positive".into()));
        }

        let home = match home {
            Some(h) => {
                if h.len() != dof_joints.len() {
                    return Err(invalid(format!(
                        "home has {} values, robot has {} joints",
                        h.len(),
                        dof_joints.len()
                    )));
                }
                for (v, ji) in h.iter().zip(&dof_joints) {
                    if !joints[*ji].limits.unwrap().contains(*v) {
                        return Err(invalid(format!(
                            "home value {v} outside limits of `{}`",
                            joints[*ji].name
                        )));
                    }
                }
                h
            }
            None => dof_joints
                .iter()
                .map(|ji| joints[*ji].limits.unwrap().clamp(0.0))
                .collect(),
        };

        Ok(Self {
            name,
            links,
            joints,
            footprint,
            drive,
            hooks,
            ee_frame,
            payload_kg,
            max_base_speed,
            max_base_yaw_rate,
            home,
            topo: Topology {
                root,
                link_index,
                parent_joint,
                joint_parent_link,
                dof_of_joint,
                dof_joints,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn links(&self) -> &[Link] {
        &self.links
    }
    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }
    pub fn footprint(&self) -> &Footprint {
        &self.footprint
    }
    pub fn drive(&self) -> DriveType {
        self.drive
    }
    pub fn hooks(&self) -> &MountHooks {
        &self.hooks
    }
    pub fn ee_frame(&self) -> &str {
        &self.ee_frame
    }
    pub fn payload_kg(&self) -> f64 {
        self.payload_kg
    }
    pub fn max_base_speed(&self) -> f64 {
        self.max_base_speed
    }
    pub fn max_base_yaw_rate(&self) -> f64 {
        self.max_base_yaw_rate
    }
    /// Nominal start configuration, one value per movable joint.
    pub fn home(&self) -> &[f64] {
        &self.home
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn root_link(&self) -> usize {
        self.topo.root
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.topo.link_index.get(name).copied()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Number of movable (non-fixed) joints.
    pub fn dof(&self) -> usize {
        self.topo.dof_joints.len()
    }

    /// Joint indices of the movable joints, in configuration order.
    pub fn dof_joints(&self) -> &[usize] {
        &self.topo.dof_joints
    }

    pub fn dof_of_joint(&self, joint: usize) -> Option<usize> {
        self.topo.dof_of_joint[joint]
    }

    pub fn dof_limits(&self, dof: usize) -> JointLimits {
        self.joints[self.topo.dof_joints[dof]].limits.unwrap()
    }

    pub fn parent_joint(&self, link: usize) -> Option<usize> {
        self.topo.parent_joint[link]
    }

    pub fn joint_parent_link(&self, joint: usize) -> usize {
        self.topo.joint_parent_link[joint]
    }

    /// Joints from the root down to `link`, root first.
    pub fn chain_to(&self, link: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = link;
        while let Some(j) = self.topo.parent_joint[cur] {
            path.push(j);
            cur = self.topo.joint_parent_link[j];
        }
        path.reverse();
        path
    }

    /// Whether `link` lies in the subtree below `joint`.
    pub fn is_below_joint(&self, link: usize, joint: usize) -> bool {
        let mut cur = link;
        while let Some(j) = self.topo.parent_joint[cur] {
            if j == joint {
                return true;
            }
            cur = self.topo.joint_parent_link[j];
        }
        false
    }

    /// Movable joints downstream of the arm mount, in configuration order.
    pub fn arm_dofs(&self) -> Vec<usize> {
        let arm = self.joint_index(&self.hooks.arm).expect("validated hook");
        let arm_child = self.link_index(&self.joints[arm].child).unwrap();
        self.topo
            .dof_joints
            .iter()
            .enumerate()
            .filter(|(_, ji)| {
                let child = self.topo.link_index[&self.joints[**ji].child];
                child == arm_child || self.is_below_joint(child, arm)
            })
            .map(|(d, _)| d)
            .collect()
    }

    /// Movable joints upstream of the arm mount (the torso lift).
    pub fn torso_dofs(&self) -> Vec<usize> {
        let arm = self.arm_dofs();
        (0..self.dof()).filter(|d| !arm.contains(d)).collect()
    }

    pub fn with_payload(&self, payload_kg: f64) -> Self {
        let mut out = self.clone();
        out.payload_kg = payload_kg.max(0.0);
        out
    }

    pub fn with_drive(&self, drive: DriveType) -> Self {
        let mut out = self.clone();
        out.drive = drive;
        out
    }

    /// Copy with every link mass multiplied by `factor` where `select` holds.
    pub fn with_scaled_masses(&self, factor: f64, select: impl Fn(&Link) -> bool) -> Self {
        let mut out = self.clone();
        for l in out.links.iter_mut().filter(|l| select(l)) {
            l.mass *= factor;
        }
        out
    }

    fn joint_mut(&mut self, name: &str) -> Option<&mut Joint> {
        self.joints.iter_mut().find(|j| j.name == name)
    }
}

fn rot_y(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle)
}

fn rot_z(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
}

fn post_rotate(origin: &mut Isometry3<f64>, r: UnitQuaternion<f64>, angle: f64) {
    if angle != 0.0 {
        origin.rotation *= r;
    }
}

/// Mounts the arm according to `omega`.
///
/// * tower mount: shifted by `(forward_x, lateral_y)` in the base plane and
///   yawed by `tower_yaw` about its vertical axis;
/// * arm mount: shifted by `-forward_x` along its parent x axis, so the arm
///   keeps its place on the base while the tower moves, then pitched by
///   `arm_pitch` and yawed by `arm_yaw` about the already pitched z axis;
/// * EE mount: pitched by `ee_pitch`.
pub fn apply_design(base: &RobotDescription, omega: &DesignParams) -> Result<RobotDescription, RobotError> {
    let mut out = base.clone();
    let hooks = base.hooks.clone();
    let missing = |hook: &'static str, joint: &String| RobotError::MountHookMissing {
        hook,
        joint: joint.clone(),
    };

    let tower = out.joint_mut(&hooks.tower).ok_or_else(|| missing("tower", &hooks.tower))?;
    if omega.forward_x() != 0.0 || omega.lateral_y() != 0.0 {
        tower.origin.translation.vector += Vector3::new(omega.forward_x(), omega.lateral_y(), 0.0);
    }
    post_rotate(&mut tower.origin, rot_z(omega.tower_yaw()), omega.tower_yaw());

    let arm = out.joint_mut(&hooks.arm).ok_or_else(|| missing("arm", &hooks.arm))?;
    if omega.forward_x() != 0.0 {
        arm.origin.translation.vector.x -= omega.forward_x();
    }
    post_rotate(&mut arm.origin, rot_y(omega.arm_pitch()), omega.arm_pitch());
    post_rotate(&mut arm.origin, rot_z(omega.arm_yaw()), omega.arm_yaw());

    let ee = out.joint_mut(&hooks.ee).ok_or_else(|| missing("ee", &hooks.ee))?;
    post_rotate(&mut ee.origin, rot_y(omega.ee_pitch()), omega.ee_pitch());

    Ok(out)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    schema_version: u32,
    #[serde(default = "default_name")]
    name: String,
    #[serde(default = "default_drive")]
    drive: DriveType,
    payload_kg: f64,
    #[serde(default = "default_speed")]
    max_base_speed: f64,
    #[serde(default = "default_yaw_rate")]
    max_base_yaw_rate: f64,
    #[serde(default)]
    ee_frame: Option<String>,
    #[serde(default)]
    home: Option<Vec<f64>>,
    base_footprint: Footprint,
    mount_hooks: MountHooks,
    links: Vec<RawLink>,
    joints: Vec<RawJoint>,
}

fn default_name() -> String {
    "robot".into()
}
fn default_drive() -> DriveType {
    DriveType::Omnidirectional
}
fn default_speed() -> f64 {
    1.1
}
fn default_yaw_rate() -> f64 {
    1.5
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    name: String,
    #[serde(default)]
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    #[serde(default = "default_geometry")]
    geometry: Geometry,
}

fn default_geometry() -> Geometry {
    Geometry::None
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    name: String,
    #[serde(rename = "type")]
    kind: JointKind,
    parent: String,
    child: String,
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default, deserialize_with = "de_angle3")]
    rpy: [f64; 3],
    #[serde(default = "default_axis")]
    axis: [f64; 3],
    #[serde(default)]
    limits: Option<RawLimits>,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawLimits {
    #[serde(deserialize_with = "de_angle")]
    lower: f64,
    #[serde(deserialize_with = "de_angle")]
    upper: f64,
    #[serde(deserialize_with = "de_angle")]
    velocity: f64,
}

fn origin_from(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

impl RobotDescription {
    /// Parses the structured-text description format.
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self, RobotError> {
        let raw: RawRobot = toml::from_str(text).map_err(|e| RobotError::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(RobotError::Parse {
                source_name: source_name.to_string(),
                message: format!(
                    "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                    raw.schema_version
                ),
            });
        }
        let links = raw
            .links
            .into_iter()
            .map(|l| Link {
                name: l.name,
                mass: l.mass,
                com: Vector3::from(l.com),
                geometry: l.geometry,
            })
            .collect();
        let mut joints = Vec::with_capacity(raw.joints.len());
        for j in raw.joints {
            let axis = Vector3::from(j.axis);
            if !(axis.norm() > 1e-9) || !axis.iter().all(|v| v.is_finite()) {
                return Err(RobotError::Validation(format!("joint `{}` has a degenerate axis", j.name)));
            }
            if j.kind == JointKind::Prismatic && j.limits.is_none() {
                return Err(RobotError::Validation(format!("joint `{}` needs position limits", j.name)));
            }
            joints.push(Joint {
                name: j.name,
                kind: j.kind,
                parent: j.parent,
                child: j.child,
                axis: Unit::new_normalize(axis),
                origin: origin_from(j.xyz, j.rpy),
                limits: j.limits.map(|l| JointLimits {
                    lower: l.lower,
                    upper: l.upper,
                    velocity: l.velocity,
                }),
            });
        }
        Self::new(RobotParts {
            name: raw.name,
            links,
            joints,
            footprint: raw.base_footprint,
            drive: raw.drive,
            hooks: raw.mount_hooks,
            ee_frame: raw.ee_frame,
            payload_kg: raw.payload_kg,
            max_base_speed: raw.max_base_speed,
            max_base_yaw_rate: raw.max_base_yaw_rate,
            home: raw.home,
        })
    }

    /// Renders the description back into the file format.
    pub fn to_toml_string(&self) -> String {
        let raw = RawRobot {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            drive: self.drive,
            payload_kg: self.payload_kg,
            max_base_speed: self.max_base_speed,
            max_base_yaw_rate: self.max_base_yaw_rate,
            ee_frame: Some(self.ee_frame.clone()),
            home: Some(self.home.clone()),
            base_footprint: self.footprint.clone(),
            mount_hooks: self.hooks.clone(),
            links: self
                .links
                .iter()
                .map(|l| RawLink {
                    name: l.name.clone(),
                    mass: l.mass,
                    com: [l.com.x, l.com.y, l.com.z],
                    geometry: l.geometry,
                })
                .collect(),
            joints: self
                .joints
                .iter()
                .map(|j| {
                    let (r, p, y) = j.origin.rotation.euler_angles();
                    let t = j.origin.translation.vector;
                    RawJoint {
                        name: j.name.clone(),
                        kind: j.kind,
                        parent: j.parent.clone(),
                        child: j.child.clone(),
                        xyz: [t.x, t.y, t.z],
                        rpy: [r, p, y],
                        axis: [j.axis.x, j.axis.y, j.axis.z],
                        limits: j.limits.map(|l| RawLimits {
                            lower: l.lower,
                            upper: l.upper,
                            velocity: l.velocity,
                        }),
                    }
                })
                .collect(),
        };
        toml::to_string(&raw).expect("robot description serializes")
    }
}

/// Reads and validates a description file. Names of bundled robots
/// (`fmm_franka`, `fmm_franka_diff`, `fmm_ur5`) are accepted as well.
pub fn load_robot(path: impl AsRef<Path>) -> Result<RobotDescription, RobotError> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(name) = path.to_str() {
            if let Ok(r) = bundled(name) {
                return Ok(r);
            }
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| RobotError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RobotDescription::from_toml_str(&text, &path.display().to_string())
}

pub const BUNDLED_ROBOTS: [&str; 3] = ["fmm_franka", "fmm_franka_diff", "fmm_ur5"];

/// Desk-scale stand-ins for the omnidirectional/differential Franka platform
/// and the UR5 variant.
pub fn bundled(name: &str) -> Result<RobotDescription, RobotError> {
    let text = match name {
        "fmm_franka" => include_str!("../robots/fmm_franka.toml"),
        "fmm_ur5" => include_str!("../robots/fmm_ur5.toml"),
        "fmm_franka_diff" => {
            return Ok(bundled("fmm_franka")?
                .with_drive(DriveType::Differential)
                .renamed("fmm_franka_diff"))
        }
        other => return Err(RobotError::UnknownBundled(other.to_string())),
    };
    RobotDescription::from_toml_str(text, name)
}

impl RobotDescription {
    fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }
}

/// A planar serial arm in the base xy plane: revolute joints about z with
/// the given link lengths along x. Useful for analytic checks.
pub fn planar_arm(link_lengths: &[f64]) -> RobotDescription {
    use std::f64::consts::PI;
    let mut links = vec![
        Link { name: "base".into(), mass: 1.0, com: Vector3::zeros(), geometry: Geometry::None },
        Link { name: "tower".into(), mass: 0.0, com: Vector3::zeros(), geometry: Geometry::None },
        Link { name: "link0".into(), mass: 0.0, com: Vector3::zeros(), geometry: Geometry::None },
    ];
    let fixed = |name: &str, parent: &str, child: &str, x: f64| Joint {
        name: name.into(),
        kind: JointKind::Fixed,
        parent: parent.into(),
        child: child.into(),
        axis: Vector3::z_axis(),
        origin: Isometry3::translation(x, 0.0, 0.0),
        limits: None,
    };
    let mut joints = vec![
        fixed("tower_mount", "base", "tower", 0.0),
        fixed("arm_mount", "tower", "link0", 0.0),
    ];
    let mut prev_len = 0.0;
    for (i, len) in link_lengths.iter().enumerate() {
        let child = format!("link{}", i + 1);
        links.push(Link {
            name: child.clone(),
            mass: 0.0,
            com: Vector3::new(len / 2.0, 0.0, 0.0),
            geometry: Geometry::None,
        });
        joints.push(Joint {
            name: format!("joint{}", i + 1),
            kind: JointKind::Revolute,
            parent: format!("link{i}"),
            child,
            axis: Vector3::z_axis(),
            origin: Isometry3::translation(prev_len, 0.0, 0.0),
            limits: Some(JointLimits { lower: -2.0 * PI, upper: 2.0 * PI, velocity: 2.0 }),
        });
        prev_len = *len;
    }
    links.push(Link { name: "ee".into(), mass: 0.0, com: Vector3::zeros(), geometry: Geometry::None });
    joints.push(fixed("ee_mount", &format!("link{}", link_lengths.len()), "ee", prev_len));
    RobotDescription::new(RobotParts {
        name: "planar".into(),
        links,
        joints,
        footprint: Footprint {
            half_extents: [0.3, 0.3],
            wheels: vec![[0.2, 0.2], [0.2, -0.2], [-0.2, -0.2], [-0.2, 0.2]],
        },
        drive: DriveType::Omnidirectional,
        hooks: MountHooks {
            tower: "tower_mount".into(),
            arm: "arm_mount".into(),
            ee: "ee_mount".into(),
        },
        ee_frame: None,
        payload_kg: 0.0,
        max_base_speed: 1.0,
        max_base_yaw_rate: 1.0,
        home: None,
    })
    .expect("planar arm is valid")
}
