//! Forward kinematics, geometric Jacobians and damped-least-squares IK.
//!
//! Everything is expressed in the robot base frame. The whole-body Jacobian
//! prepends three virtual base joints: x and y translation and yaw about the
//! base z axis.

use std::ops::Deref;

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix6, Matrix6xX, Translation3, UnitQuaternion, Vector3, Vector6,
};
use serde::{Deserialize, Serialize};

use crate::robot::{JointKind, RobotDescription};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("configuration has {got} values, robot has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint selector index {0} is out of range")]
    BadSelector(usize),
}

/// One position per movable joint (radians or meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig(Vec<f64>);

impl JointConfig {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn home(robot: &RobotDescription) -> Self {
        Self(robot.home().to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn within_limits(&self, robot: &RobotDescription) -> bool {
        self.0.len() == robot.dof()
            && self.0.iter().enumerate().all(|(i, v)| robot.dof_limits(i).contains(*v))
    }

    pub fn clamp_to_limits(&mut self, robot: &RobotDescription) {
        for (i, v) in self.0.iter_mut().enumerate() {
            *v = robot.dof_limits(i).clamp(*v);
        }
    }
}

impl Deref for JointConfig {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Position plus unit-quaternion orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    /// Translational and rotational distance (rotation-vector norm).
    pub fn error_to(&self, target: &Pose) -> (f64, f64) {
        let (p, r) = pose_error(self, target);
        (p.norm(), r.norm())
    }
}

/// Linear and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

/// Position error and rotation-vector (log map) error from `current` to `target`.
pub fn pose_error(current: &Pose, target: &Pose) -> (Vector3<f64>, Vector3<f64>) {
    let dp = target.position - current.position;
    let dr = (target.orientation * current.orientation.inverse()).scaled_axis();
    (dp, dr)
}

/// Which joint velocities the Jacobian maps.
#[derive(Debug, Clone, PartialEq)]
pub enum JointSelector {
    /// All movable joints of the robot, in configuration order.
    Robot,
    /// Base x, y, yaw followed by all movable joints.
    WholeBody,
    /// A subset of configuration indices, in the given order.
    Dofs(Vec<usize>),
}

impl JointSelector {
    fn columns(&self, robot: &RobotDescription) -> Result<Vec<Column>, KinematicsError> {
        Ok(match self {
            JointSelector::Robot => (0..robot.dof()).map(Column::Dof).collect(),
            JointSelector::WholeBody => [Column::BaseX, Column::BaseY, Column::BaseYaw]
                .into_iter()
                .chain((0..robot.dof()).map(Column::Dof))
                .collect(),
            JointSelector::Dofs(d) => {
                if let Some(bad) = d.iter().find(|i| **i >= robot.dof()) {
                    return Err(KinematicsError::BadSelector(*bad));
                }
                d.iter().map(|i| Column::Dof(*i)).collect()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    BaseX,
    BaseY,
    BaseYaw,
    Dof(usize),
}

fn check_dim(robot: &RobotDescription, q: &[f64]) -> Result<(), KinematicsError> {
    if q.len() != robot.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: robot.dof(),
            got: q.len(),
        });
    }
    Ok(())
}

fn frame_index(robot: &RobotDescription, frame: &str) -> Result<usize, KinematicsError> {
    robot
        .link_index(frame)
        .ok_or_else(|| KinematicsError::UnknownFrame(frame.to_string()))
}

fn joint_motion(robot: &RobotDescription, joint: usize, q: &[f64]) -> Isometry3<f64> {
    let j = &robot.joints()[joint];
    match (j.kind, robot.dof_of_joint(joint)) {
        (JointKind::Revolute, Some(d)) => {
            Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&j.axis, q[d]))
        }
        (JointKind::Prismatic, Some(d)) => Isometry3::translation(
            j.axis.x * q[d],
            j.axis.y * q[d],
            j.axis.z * q[d],
        ),
        _ => Isometry3::identity(),
    }
}

/// Pose of `frame` in the base frame.
pub fn forward_kinematics(robot: &RobotDescription, q: &[f64], frame: &str) -> Result<Pose, KinematicsError> {
    check_dim(robot, q)?;
    let link = frame_index(robot, frame)?;
    Ok(Pose::from_isometry(&link_transform(robot, q, link)))
}

pub(crate) fn link_transform(robot: &RobotDescription, q: &[f64], link: usize) -> Isometry3<f64> {
    let mut t = Isometry3::identity();
    for j in robot.chain_to(link) {
        t = t * robot.joints()[j].origin * joint_motion(robot, j, q);
    }
    t
}

/// Poses of every link, indexed like [`RobotDescription::links`].
pub fn all_link_transforms(robot: &RobotDescription, q: &[f64]) -> Result<Vec<Isometry3<f64>>, KinematicsError> {
    check_dim(robot, q)?;
    let n = robot.links().len();
    let mut out: Vec<Option<Isometry3<f64>>> = vec![None; n];
    out[robot.root_link()] = Some(Isometry3::identity());
    fn resolve(robot: &RobotDescription, q: &[f64], link: usize, out: &mut [Option<Isometry3<f64>>]) -> Isometry3<f64> {
        if let Some(t) = out[link] {
            return t;
        }
        let j = robot.parent_joint(link).expect("non-root link has a parent");
        let parent = resolve(robot, q, robot.joint_parent_link(j), out);
        let t = parent * robot.joints()[j].origin * joint_motion(robot, j, q);
        out[link] = Some(t);
        t
    }
    for l in 0..n {
        resolve(robot, q, l, &mut out);
    }
    Ok(out.into_iter().map(|t| t.unwrap()).collect())
}

/// Frame pose and geometric Jacobian in one pass.
pub fn pose_and_jacobian(
    robot: &RobotDescription,
    q: &[f64],
    frame: &str,
    selector: &JointSelector,
) -> Result<(Pose, Matrix6xX<f64>), KinematicsError> {
    check_dim(robot, q)?;
    let link = frame_index(robot, frame)?;
    let columns = selector.columns(robot)?;
    Ok(pose_and_jacobian_idx(robot, q, link, &columns))
}

fn pose_and_jacobian_idx(
    robot: &RobotDescription,
    q: &[f64],
    link: usize,
    columns: &[Column],
) -> (Pose, Matrix6xX<f64>) {
    let chain = robot.chain_to(link);
    // joint frames (after origin, before motion) along the chain
    let mut frames: Vec<(usize, Isometry3<f64>)> = Vec::with_capacity(chain.len());
    let mut t = Isometry3::identity();
    for j in chain {
        let jf = t * robot.joints()[j].origin;
        frames.push((j, jf));
        t = jf * joint_motion(robot, j, q);
    }
    let p_ee = t.translation.vector;
    let mut jac = Matrix6xX::zeros(columns.len());
    for (c, col) in columns.iter().enumerate() {
        let v: Vector6<f64> = match col {
            Column::BaseX => Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            Column::BaseY => Vector6::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
            Column::BaseYaw => {
                let z = Vector3::z();
                let lin = z.cross(&p_ee);
                Vector6::new(lin.x, lin.y, lin.z, 0.0, 0.0, 1.0)
            }
            Column::Dof(d) => {
                let joint = robot.dof_joints()[*d];
                match frames.iter().find(|(j, _)| *j == joint) {
                    None => Vector6::zeros(),
                    Some((_, jf)) => {
                        let axis = jf.rotation * robot.joints()[joint].axis.into_inner();
                        match robot.joints()[joint].kind {
                            JointKind::Revolute => {
                                let lin = axis.cross(&(p_ee - jf.translation.vector));
                                Vector6::new(lin.x, lin.y, lin.z, axis.x, axis.y, axis.z)
                            }
                            JointKind::Prismatic => Vector6::new(axis.x, axis.y, axis.z, 0.0, 0.0, 0.0),
                            JointKind::Fixed => Vector6::zeros(),
                        }
                    }
                }
            }
        };
        jac.set_column(c, &v);
    }
    (Pose::from_isometry(&t), jac)
}

/// Geometric Jacobian (6×n, linear rows first) of `frame` for the selected joints.
pub fn jacobian(
    robot: &RobotDescription,
    q: &[f64],
    frame: &str,
    selector: &JointSelector,
) -> Result<Matrix6xX<f64>, KinematicsError> {
    pose_and_jacobian(robot, q, frame, selector).map(|(_, j)| j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkSettings {
    pub damping: f64,
    /// Largest per-joint update per iteration (rad or m).
    pub max_step: f64,
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    pub clamp_to_limits: bool,
    /// Ignore orientation and solve for position only.
    pub position_only: bool,
    /// Configuration indices the solver may move; `None` means all.
    pub active: Option<Vec<usize>>,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self {
            damping: 0.01,
            max_step: 0.2,
            max_iterations: 200,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            clamp_to_limits: true,
            position_only: false,
            active: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IkError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("no IK solution after {iterations} iterations (residual {position_error:.3e} m, {orientation_error:.3e} rad)")]
    NoSolution {
        iterations: usize,
        position_error: f64,
        orientation_error: f64,
        /// Last iterate, useful as a warm start.
        last: JointConfig,
    },
}

/// Precomputed per-call data for repeated DLS updates.
pub(crate) struct DlsProblem<'a> {
    robot: &'a RobotDescription,
    link: usize,
    columns: Vec<Column>,
    active: Vec<usize>,
    settings: IkSettings,
    /// Per-joint step cap (defaults to `max_step`).
    step_caps: Option<Vec<f64>>,
    /// Preferred configuration and gain for the null-space pull.
    posture: Option<(Vec<f64>, f64)>,
}

pub(crate) struct DlsStep {
    pub position_error: f64,
    pub orientation_error: f64,
    pub converged: bool,
}

impl<'a> DlsProblem<'a> {
    pub(crate) fn new(robot: &'a RobotDescription, frame: &str, settings: &IkSettings) -> Result<Self, KinematicsError> {
        let link = frame_index(robot, frame)?;
        let active: Vec<usize> = match &settings.active {
            Some(a) => {
                if let Some(bad) = a.iter().find(|i| **i >= robot.dof()) {
                    return Err(KinematicsError::BadSelector(*bad));
                }
                a.clone()
            }
            None => (0..robot.dof()).collect(),
        };
        let columns = active.iter().map(|d| Column::Dof(*d)).collect();
        Ok(Self {
            robot,
            link,
            columns,
            active,
            settings: settings.clone(),
            step_caps: None,
            posture: None,
        })
    }

    pub(crate) fn with_step_caps(mut self, caps: Vec<f64>) -> Self {
        self.step_caps = Some(caps);
        self
    }

    /// Adds a pull toward `reference` (full configuration) projected into
    /// the null space of the task, scaled by `gain` per step.
    pub(crate) fn with_posture(mut self, reference: Vec<f64>, gain: f64) -> Self {
        self.posture = Some((reference, gain));
        self
    }

    fn residual(&self, pose: &Pose, target: &Pose) -> (DVector<f64>, f64, f64) {
        let (dp, dr) = pose_error(pose, target);
        let (pe, oe) = (dp.norm(), dr.norm());
        let e = if self.settings.position_only {
            DVector::from_column_slice(dp.as_slice())
        } else {
            DVector::from_iterator(6, dp.iter().chain(dr.iter()).copied())
        };
        (e, pe, if self.settings.position_only { 0.0 } else { oe })
    }

    fn converged(&self, pe: f64, oe: f64) -> bool {
        pe < self.settings.position_tolerance && oe < self.settings.orientation_tolerance
    }

    /// Residual at `q` without moving.
    pub(crate) fn evaluate(&self, q: &[f64], target: &Pose) -> DlsStep {
        let pose = Pose::from_isometry(&link_transform(self.robot, q, self.link));
        let (_, pe, oe) = self.residual(&pose, target);
        DlsStep {
            position_error: pe,
            orientation_error: oe,
            converged: self.converged(pe, oe),
        }
    }

    /// One damped-least-squares update of `q` toward `target`. Returns the
    /// residual measured before the update; `q` is left unchanged when
    /// already converged.
    pub(crate) fn step(&self, q: &mut [f64], target: &Pose) -> DlsStep {
        let (pose, jac) = pose_and_jacobian_idx(self.robot, q, self.link, &self.columns);
        let (e, pe, oe) = self.residual(&pose, target);
        let converged = self.converged(pe, oe);
        if !converged {
            let j: DMatrix<f64> = if self.settings.position_only {
                DMatrix::from_fn(3, jac.ncols(), |r, c| jac[(r, c)])
            } else {
                DMatrix::from_fn(6, jac.ncols(), |r, c| jac[(r, c)])
            };
            let rows = j.nrows();
            let lambda2 = self.settings.damping * self.settings.damping;
            let mut jjt = &j * j.transpose();
            for i in 0..rows {
                jjt[(i, i)] += lambda2;
            }
            let solve = |rhs: &DVector<f64>| match jjt.clone().cholesky() {
                Some(ch) => ch.solve(rhs),
                None => jjt.clone().lu().solve(rhs).unwrap_or_else(|| DVector::zeros(rows)),
            };
            let mut dq = j.transpose() * solve(&e);
            if let Some((reference, gain)) = &self.posture {
                let z = DVector::from_iterator(self.active.len(), self.active.iter().map(|d| gain * (reference[*d] - q[*d])));
                dq += &z - j.transpose() * solve(&(&j * &z));
            }
            // uniform scaling keeps the step direction
            let mut scale: f64 = 1.0;
            for (k, v) in dq.iter().enumerate() {
                let cap = self.step_caps.as_ref().map_or(self.settings.max_step, |c| c[k]);
                if v.abs() > cap {
                    scale = scale.min(cap / v.abs());
                }
            }
            dq *= scale;
            for (k, d) in self.active.iter().enumerate() {
                let mut v = q[*d] + dq[k];
                if self.settings.clamp_to_limits {
                    v = self.robot.dof_limits(*d).clamp(v);
                }
                q[*d] = v;
            }
        }
        DlsStep {
            position_error: pe,
            orientation_error: oe,
            converged,
        }
    }
}

/// Damped-least-squares IK from `seed`. Deterministic; one attempt.
pub fn ik_dls(
    robot: &RobotDescription,
    target: &Pose,
    seed: &[f64],
    frame: &str,
    settings: &IkSettings,
) -> Result<IkSolution, IkError> {
    check_dim(robot, seed)?;
    let problem = DlsProblem::new(robot, frame, settings)?;
    let mut q = seed.to_vec();
    if settings.clamp_to_limits {
        for (i, v) in q.iter_mut().enumerate() {
            *v = robot.dof_limits(i).clamp(*v);
        }
    }
    if !target.is_finite() {
        return Err(IkError::NoSolution {
            iterations: 0,
            position_error: f64::INFINITY,
            orientation_error: f64::INFINITY,
            last: JointConfig(q),
        });
    }
    let mut last = DlsStep {
        position_error: f64::INFINITY,
        orientation_error: f64::INFINITY,
        converged: false,
    };
    for it in 0..=settings.max_iterations {
        if it == settings.max_iterations {
            last = problem.evaluate(&q, target);
            if last.converged {
                return Ok(IkSolution {
                    q: JointConfig(q),
                    iterations: it,
                    position_error: last.position_error,
                    orientation_error: last.orientation_error,
                });
            }
            break;
        }
        let s = problem.step(&mut q, target);
        if s.converged {
            return Ok(IkSolution {
                q: JointConfig(q),
                iterations: it,
                position_error: s.position_error,
                orientation_error: s.orientation_error,
            });
        }
        last = s;
    }
    Err(IkError::NoSolution {
        iterations: settings.max_iterations,
        position_error: last.position_error,
        orientation_error: last.orientation_error,
        last: JointConfig(q),
    })
}

/// 6×6 helper for callers that want `J Jᵀ` directly.
pub fn jjt(jac: &Matrix6xX<f64>) -> Matrix6<f64> {
    jac * jac.transpose()
}
