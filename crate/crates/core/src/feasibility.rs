//! Static and dynamic tipover checks.
//!
//! Components are point masses. The static check asks whether the ground
//! projection of the center of mass lies strictly inside the wheel polygon.
//! The dynamic check compares the restoring torque of the base about the front
//! axle with the torques that arm and payload exert while braking.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::design::DesignParams;
use crate::kinematics::all_link_transforms;
use crate::robot::{apply_design, RobotDescription, RobotError};

pub const GRAVITY: f64 = 9.81;
/// Full speed (1.1 m/s) braked to standstill in 0.5 s.
pub const DEFAULT_DECELERATION: f64 = 1.1 / 0.5;
pub const DEFAULT_EXTERNAL_TORQUE: f64 = 30.0;
const WORST_CASE_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Counted in the restoring torque.
    Base,
    /// Shifts the center of mass only (tower, carriage).
    Structure,
    Arm,
    Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassComponent {
    pub name: String,
    pub mass: f64,
    pub position: Vector3<f64>,
    pub role: Role,
}

/// Where arm and payload lever arms are measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorqueReference {
    /// The vertical through the system center of mass.
    #[default]
    SystemCom,
    /// The pivot axis itself.
    Pivot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassLayout {
    components: Vec<MassComponent>,
    wheels: Vec<[f64; 2]>,
    pub gravity: f64,
    pub deceleration: f64,
    pub max_payload: f64,
    pub reference: TorqueReference,
    /// Extra torque from the arm pulling on the environment, if enabled.
    pub external_torque: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum FeasibilityError {
    #[error("mass layout has no components")]
    EmptyLayout,
    #[error("component `{0}` must have a positive finite mass")]
    BadMass(String),
    #[error("need at least 3 wheel contacts, got {0}")]
    TooFewWheels(usize),
    #[error("deceleration must be finite and non-negative, got {0}")]
    BadDeceleration(f64),
    #[error(transparent)]
    Robot(#[from] RobotError),
}

impl MassLayout {
    pub fn new(components: Vec<MassComponent>, wheels: Vec<[f64; 2]>) -> Result<Self, FeasibilityError> {
        if components.is_empty() {
            return Err(FeasibilityError::EmptyLayout);
        }
        if let Some(c) = components.iter().find(|c| !(c.mass > 0.0 && c.mass.is_finite())) {
            return Err(FeasibilityError::BadMass(c.name.clone()));
        }
        if wheels.len() < 3 {
            return Err(FeasibilityError::TooFewWheels(wheels.len()));
        }
        let max_payload = components
            .iter()
            .filter(|c| c.role == Role::Payload)
            .map(|c| c.mass)
            .sum();
        Ok(Self {
            components,
            wheels,
            gravity: GRAVITY,
            deceleration: DEFAULT_DECELERATION,
            max_payload,
            reference: TorqueReference::default(),
            external_torque: None,
        })
    }

    pub fn with_deceleration(mut self, a: f64) -> Result<Self, FeasibilityError> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(FeasibilityError::BadDeceleration(a));
        }
        self.deceleration = a;
        Ok(self)
    }

    pub fn with_reference(mut self, reference: TorqueReference) -> Self {
        self.reference = reference;
        self
    }

    pub fn with_external_torque(mut self, torque: Option<f64>) -> Self {
        self.external_torque = torque;
        self
    }

    pub fn components(&self) -> &[MassComponent] {
        &self.components
    }

    pub fn wheels(&self) -> &[[f64; 2]] {
        &self.wheels
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(|c| c.mass).sum()
    }

    pub fn mass_of(&self, role: Role) -> f64 {
        self.components.iter().filter(|c| c.role == role).map(|c| c.mass).sum()
    }

    /// Front axle: the largest wheel x.
    pub fn front_pivot_x(&self) -> f64 {
        self.wheels.iter().map(|w| w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn center_of_mass(layout: &MassLayout) -> Result<Vector3<f64>, FeasibilityError> {
    if layout.components.is_empty() {
        return Err(FeasibilityError::EmptyLayout);
    }
    let m = layout.total_mass();
    let weighted = layout
        .components
        .iter()
        .fold(Vector3::zeros(), |acc, c| acc + c.position * c.mass);
    Ok(weighted / m)
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain).
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross2(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed distance from `p` to the boundary of a convex CCW polygon,
/// positive inside.
pub fn signed_distance_to_polygon(p: [f64; 2], hull: &[[f64; 2]]) -> f64 {
    let n = hull.len();
    let mut inside = true;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len2 = ex * ex + ey * ey;
        let t = (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0);
        let (dx, dy) = (p[0] - a[0] - t * ex, p[1] - a[1] - t * ey);
        best = best.min((dx * dx + dy * dy).sqrt());
        if cross2(a, b, p) < 0.0 {
            inside = false;
        }
    }
    if inside {
        best
    } else {
        -best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticStability {
    pub stable: bool,
    pub margin: f64,
}

/// COM strictly inside the wheel polygon; a COM on an edge is unstable.
pub fn static_stability(layout: &MassLayout) -> Result<StaticStability, FeasibilityError> {
    let com = center_of_mass(layout)?;
    let hull = convex_hull(&layout.wheels);
    let margin = signed_distance_to_polygon([com.x, com.y], &hull);
    Ok(StaticStability {
        stable: margin > 0.0,
        margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub com: [f64; 3],
    pub statically_stable: bool,
    pub static_margin: f64,
    pub pivot_x: f64,
    pub tau_critical: f64,
    pub tau_acc: f64,
    pub tau_grav: f64,
    pub tau_external: f64,
    pub dynamically_stable: bool,
    /// `tau_critical - (tau_acc + tau_grav + tau_external)`.
    pub margin: f64,
}

impl FeasibilityReport {
    pub fn com_xy(&self) -> [f64; 2] {
        [self.com[0], self.com[1]]
    }

    pub fn feasible(&self) -> bool {
        self.statically_stable && self.dynamically_stable
    }
}

impl std::fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let yes_no = |b: bool| if b { "stable" } else { "UNSTABLE" };
        writeln!(f, "center of mass   ({:.4}, {:.4}, {:.4}) m", self.com[0], self.com[1], self.com[2])?;
        writeln!(f, "static           {} (margin {:.4} m)", yes_no(self.statically_stable), self.static_margin)?;
        writeln!(f, "pivot x          {:.4} m", self.pivot_x)?;
        writeln!(f, "tau_critical     {:.2} N·m", self.tau_critical)?;
        writeln!(f, "tau_acc          {:.2} N·m", self.tau_acc)?;
        writeln!(f, "tau_grav         {:.2} N·m", self.tau_grav)?;
        if self.tau_external != 0.0 {
            writeln!(f, "tau_external     {:.2} N·m", self.tau_external)?;
        }
        write!(f, "dynamic          {} (margin {:.2} N·m)", yes_no(self.dynamically_stable), self.margin)
    }
}

/// Braking tipover about the axis `x = pivot_x`.
///
/// Restoring: `m_base g (pivot_x - com_x)`. Overturning, summed over arm and
/// payload components: `m a z cos(beta)` and `m g r sin(alpha)`, with `r` the
/// distance from the reference point on the ground to the component and
/// `alpha` its angle from the vertical.
pub fn dynamic_stability(layout: &MassLayout, pivot_x: f64) -> Result<FeasibilityReport, FeasibilityError> {
    let com = center_of_mass(layout)?;
    let st = static_stability(layout)?;
    let tau_critical = layout.mass_of(Role::Base) * layout.gravity * (pivot_x - com.x);
    let ref_x = match layout.reference {
        TorqueReference::SystemCom => com.x,
        TorqueReference::Pivot => pivot_x,
    };
    let (mut tau_acc, mut tau_grav) = (0.0, 0.0);
    for c in layout
        .components
        .iter()
        .filter(|c| matches!(c.role, Role::Arm | Role::Payload))
    {
        let dx = c.position.x - ref_x;
        let z = c.position.z;
        let r = dx.hypot(z);
        if r == 0.0 {
            continue;
        }
        let sin_alpha = dx / r;
        // cos(beta) = cos(pi/2 - alpha) = sin(alpha)
        tau_acc += c.mass * layout.deceleration * z * sin_alpha;
        tau_grav += c.mass * layout.gravity * r * sin_alpha;
    }
    let tau_external = layout.external_torque.unwrap_or(0.0);
    let margin = tau_critical - (tau_acc + tau_grav + tau_external);
    Ok(FeasibilityReport {
        com: [com.x, com.y, com.z],
        statically_stable: st.stable,
        static_margin: st.margin,
        pivot_x,
        tau_critical,
        tau_acc,
        tau_grav,
        tau_external,
        dynamically_stable: margin > 0.0,
        margin,
    })
}

/// Options for [`check_design_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckOptions {
    pub deceleration: f64,
    pub external_torque: Option<f64>,
    pub reference: TorqueReference,
    /// Payload at the EE; the robot's own payload when `None`.
    pub payload_kg: Option<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            deceleration: DEFAULT_DECELERATION,
            external_torque: None,
            reference: TorqueReference::default(),
            payload_kg: None,
        }
    }
}

/// Worst-case layout of a designed robot: torso fully raised, payload at the
/// EE, and the arm pose that pushes the center of mass furthest forward.
/// The two proximal arm joints are grid-searched over their limits; the rest
/// are held as close to straight (zero) as their limits allow.
pub fn worst_case_layout(robot: &RobotDescription, payload_kg: f64) -> Result<MassLayout, FeasibilityError> {
    let arm = robot.arm_dofs();
    let mut q: Vec<f64> = (0..robot.dof()).map(|d| robot.dof_limits(d).clamp(0.0)).collect();
    for d in robot.torso_dofs() {
        q[d] = robot.dof_limits(d).upper;
    }
    let searched: Vec<usize> = arm.iter().take(2).copied().collect();
    let samples = |d: usize| -> Vec<f64> {
        let l = robot.dof_limits(d);
        (0..WORST_CASE_SAMPLES)
            .map(|i| l.lower + (l.upper - l.lower) * i as f64 / (WORST_CASE_SAMPLES - 1) as f64)
            .collect()
    };
    let grids: Vec<Vec<f64>> = searched.iter().map(|d| samples(*d)).collect();
    let mut best: Option<(f64, MassLayout)> = None;
    let mut idx = vec![0usize; searched.len()];
    loop {
        for (k, d) in searched.iter().enumerate() {
            q[*d] = grids[k][idx[k]];
        }
        let layout = layout_at(robot, &q, payload_kg)?;
        let cx = center_of_mass(&layout)?.x;
        if best.as_ref().is_none_or(|(b, _)| cx > *b) {
            best = Some((cx, layout));
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(best.expect("at least one sample").1);
            }
            idx[k] += 1;
            if idx[k] < WORST_CASE_SAMPLES {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Mass layout of `robot` at configuration `q` with `payload_kg` at the EE.
pub fn layout_at(robot: &RobotDescription, q: &[f64], payload_kg: f64) -> Result<MassLayout, FeasibilityError> {
    let transforms = all_link_transforms(robot, q).map_err(|e| RobotError::Validation(e.to_string()))?;
    let arm_hook = robot.joint_index(&robot.hooks().arm).expect("validated hook");
    let arm_root = robot.link_index(&robot.joints()[arm_hook].child).expect("validated hook");
    let root = robot.root_link();
    let mut components = Vec::new();
    for (i, link) in robot.links().iter().enumerate() {
        if link.mass <= 0.0 {
            continue;
        }
        let role = if i == root {
            Role::Base
        } else if i == arm_root || robot.is_below_joint(i, arm_hook) {
            Role::Arm
        } else {
            Role::Structure
        };
        components.push(MassComponent {
            name: link.name.clone(),
            mass: link.mass,
            position: (transforms[i] * nalgebra::Point3::from(link.com)).coords,
            role,
        });
    }
    if payload_kg > 0.0 {
        let ee = robot.link_index(robot.ee_frame()).expect("validated ee frame");
        components.push(MassComponent {
            name: "payload".into(),
            mass: payload_kg,
            position: transforms[ee].translation.vector,
            role: Role::Payload,
        });
    }
    let mut layout = MassLayout::new(components, robot.footprint().wheels.clone())?;
    layout.max_payload = payload_kg;
    Ok(layout)
}

pub fn check_design(robot: &RobotDescription, omega: &DesignParams) -> Result<FeasibilityReport, FeasibilityError> {
    check_design_with(robot, omega, &CheckOptions::default())
}

pub fn check_design_with(
    robot: &RobotDescription,
    omega: &DesignParams,
    options: &CheckOptions,
) -> Result<FeasibilityReport, FeasibilityError> {
    let designed = apply_design(robot, omega)?;
    let payload = options.payload_kg.unwrap_or(designed.payload_kg());
    let layout = worst_case_layout(&designed, payload)?
        .with_deceleration(options.deceleration)?
        .with_reference(options.reference)
        .with_external_torque(options.external_torque);
    let pivot = layout.front_pivot_x();
    dynamic_stability(&layout, pivot)
}

/// The worst-case component table of the Franka-on-omnidirectional-base
/// robot, with positions relative to the base center in meters.
pub fn reference_tipover_layout() -> MassLayout {
    let mm = |x: f64, y: f64, z: f64| Vector3::new(x, y, z) / 1000.0;
    let rows: [(&str, f64, Vector3<f64>, Role); 12] = [
        ("franka_link0", 2.40, mm(430.0, 330.0, 907.0), Role::Arm),
        ("franka_link1", 2.79, mm(489.0, 389.0, 907.0), Role::Arm),
        ("franka_link2", 2.54, mm(681.0, 581.0, 879.0), Role::Arm),
        ("franka_link3", 2.25, mm(821.0, 721.0, 907.0), Role::Arm),
        ("franka_link4", 2.20, mm(837.0, 737.0, 884.0), Role::Arm),
        ("franka_link5", 2.29, mm(1005.0, 965.0, 880.0), Role::Arm),
        ("franka_link6", 1.35, mm(1105.0, 1005.0, 880.0), Role::Arm),
        ("franka_link7", 0.36, mm(1113.0, 1013.0, 959.0), Role::Arm),
        ("end_effector", 0.71, mm(1260.0, 1160.0, 928.0), Role::Arm),
        ("payload", 3.00, mm(1260.0, 1160.0, 928.0), Role::Payload),
        ("tower", 22.50, mm(300.0, 200.0, 280.0), Role::Structure),
        ("base", 135.00, mm(0.0, 0.0, 140.0), Role::Base),
    ];
    let components = rows
        .into_iter()
        .map(|(name, mass, position, role)| MassComponent {
            name: name.into(),
            mass,
            position,
            role,
        })
        .collect();
    MassLayout::new(
        components,
        vec![[0.319, 0.276], [0.319, -0.276], [-0.319, -0.276], [-0.319, 0.276]],
    )
    .expect("valid table")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::bundled;

    fn comp(name: &str, mass: f64, p: [f64; 3], role: Role) -> MassComponent {
        MassComponent {
            name: name.into(),
            mass,
            position: Vector3::from(p),
            role,
        }
    }

    fn square() -> Vec<[f64; 2]> {
        vec![[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]]
    }

    #[test]
    fn com_basics() {
        let one = MassLayout::new(vec![comp("a", 2.0, [0.0; 3], Role::Base)], square()).unwrap();
        assert_eq!(center_of_mass(&one).unwrap(), Vector3::zeros());
        let two = MassLayout::new(
            vec![
                comp("a", 3.0, [0.4, -0.2, 1.0], Role::Base),
                comp("b", 3.0, [-0.4, 0.2, -1.0], Role::Arm),
            ],
            square(),
        )
        .unwrap();
        assert!(center_of_mass(&two).unwrap().norm() < 1e-15);
        assert!(matches!(MassLayout::new(vec![], square()), Err(FeasibilityError::EmptyLayout)));
        assert!(MassLayout::new(vec![comp("a", 0.0, [0.0; 3], Role::Base)], square()).is_err());
        assert!(MassLayout::new(vec![comp("a", 1.0, [0.0; 3], Role::Base)], square()[..2].to_vec()).is_err());
    }

    #[test]
    fn static_edge_and_outside() {
        let on_edge = MassLayout::new(vec![comp("a", 1.0, [1.0, 0.3, 0.0], Role::Base)], square()).unwrap();
        let s = static_stability(&on_edge).unwrap();
        assert_eq!(s.margin, 0.0);
        assert!(!s.stable);
        let outside = MassLayout::new(vec![comp("a", 1.0, [1.5, 0.0, 0.0], Role::Base)], square()).unwrap();
        let s = static_stability(&outside).unwrap();
        assert!(!s.stable);
        assert!((s.margin + 0.5).abs() < 1e-12);
    }

    #[test]
    fn hull_ignores_interior_and_order() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((signed_distance_to_polygon([0.0, 0.0], &h) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reference_layout_matches_table() {
        let l = reference_tipover_layout();
        let c = center_of_mass(&l).unwrap();
        assert!((c.x - 0.132).abs() < 0.002 && (c.y - 0.109).abs() < 0.002);
        let s = static_stability(&l).unwrap();
        assert!(s.stable);
        // nearest edge is the front axle x = 0.319 vs the side at y = 0.276
        assert!((s.margin - (0.276 - c.y).min(0.319 - c.x)).abs() < 1e-12);
        assert!(s.margin > 0.16);
    }

    #[test]
    fn no_deceleration_means_no_acc_torque() {
        let l = reference_tipover_layout().with_deceleration(0.0).unwrap();
        let r = dynamic_stability(&l, 0.319).unwrap();
        assert_eq!(r.tau_acc, 0.0);
    }

    #[test]
    fn external_torque_adds_to_demand() {
        let l = reference_tipover_layout();
        let base = dynamic_stability(&l, 0.319).unwrap();
        let ext = dynamic_stability(&l.clone().with_external_torque(Some(DEFAULT_EXTERNAL_TORQUE)), 0.319).unwrap();
        assert!((base.margin - ext.margin - 30.0).abs() < 1e-9);
        assert!(ext.dynamically_stable);
    }

    #[test]
    fn critical_torque_is_linear() {
        let mk = |mb: f64| {
            MassLayout::new(
                vec![comp("b", mb, [0.0; 3], Role::Base), comp("a", 1.0, [0.0, 0.0, 1.0], Role::Arm)],
                square(),
            )
            .unwrap()
        };
        let t1 = dynamic_stability(&mk(10.0), 0.5).unwrap().tau_critical;
        let t2 = dynamic_stability(&mk(20.0), 0.5).unwrap().tau_critical;
        assert!((t2 - 2.0 * t1).abs() < 1e-9);
        let d1 = dynamic_stability(&mk(10.0), 0.25).unwrap().tau_critical;
        assert!((t1 - 2.0 * d1).abs() < 1e-9);
    }

    #[test]
    fn splitting_a_component_keeps_torques() {
        let l = reference_tipover_layout();
        let mut parts = l.components().to_vec();
        let first = parts.remove(0);
        for _ in 0..2 {
            parts.push(MassComponent {
                mass: first.mass / 2.0,
                ..first.clone()
            });
        }
        let split = MassLayout::new(parts, l.wheels().to_vec()).unwrap();
        let (a, b) = (dynamic_stability(&l, 0.319).unwrap(), dynamic_stability(&split, 0.319).unwrap());
        assert!((a.tau_grav - b.tau_grav).abs() < 1e-9);
        assert!((a.tau_acc - b.tau_acc).abs() < 1e-9);
    }

    #[test]
    fn tabletop_bundled_is_feasible() {
        let r = bundled("fmm_franka").unwrap();
        let rep = check_design(&r, &DesignParams::tabletop()).unwrap();
        assert!(rep.feasible(), "{rep}");
    }

    #[test]
    fn heavy_payload_far_forward_tips() {
        let r = bundled("fmm_franka").unwrap();
        let mut omega = DesignParams::tabletop().as_array();
        omega[3] = 0.15;
        let omega = DesignParams::from_array(omega).unwrap();
        let opts = CheckOptions {
            payload_kg: Some(r.payload_kg() * 10.0),
            ..CheckOptions::default()
        };
        let rep = check_design_with(&r, &omega, &opts).unwrap();
        assert!(!rep.dynamically_stable, "{rep}");
        // closed-form: total overturning torque exceeds the restoring torque
        assert!(rep.tau_acc + rep.tau_grav > rep.tau_critical);
    }

    #[test]
    fn massless_arm_exerts_nothing() {
        let r = bundled("fmm_franka").unwrap();
        let arm_root = r.link_index(&r.joints()[r.joint_index(&r.hooks().arm).unwrap()].child).unwrap();
        let arm_hook = r.joint_index(&r.hooks().arm).unwrap();
        let names: Vec<String> = r
            .links()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i == arm_root || r.is_below_joint(*i, arm_hook))
            .map(|(_, l)| l.name.clone())
            .collect();
        let light = r.with_scaled_masses(0.0, |l| names.contains(&l.name)).with_payload(0.0);
        let rep = check_design(&light, &DesignParams::tabletop()).unwrap();
        assert_eq!(rep.tau_grav, 0.0);
        assert_eq!(rep.tau_acc, 0.0);
        assert!(rep.feasible());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn lighter_arm_never_destabilizes(u in proptest::array::uniform6(0.0f64..=1.0), factor in 0.0f64..1.0, payload in 0.0f64..40.0) {
            let r = bundled("fmm_franka").unwrap();
            let omega = crate::design::DesignSpace::default().decode_unit(&u).unwrap();
            let opts = CheckOptions { payload_kg: Some(payload), ..CheckOptions::default() };
            let before = check_design_with(&r, &omega, &opts).unwrap();
            let light = r.with_scaled_masses(factor, |l| l.name.starts_with("arm_") || l.name == "hand");
            let after = check_design_with(&light, &omega, &opts).unwrap();
            if before.dynamically_stable {
                proptest::prop_assert!(after.dynamically_stable, "{before}\n---\n{after}");
            }
        }
    }
}
