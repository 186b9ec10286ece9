//! Yoshikawa manipulability and its mean over a base-relative workspace grid.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, Dyn, Matrix, RawStorage, UnitQuaternion, Vector3, U6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kinematics::{ik_dls, jacobian, IkSettings, JointSelector, Pose};
use crate::robot::RobotDescription;

const SINGULAR_EPS: f64 = 1e-12;

/// `sqrt(det(J Jᵀ))` as the product of singular values; zero when any
/// singular value falls below 1e-12 or when J has fewer columns than rows.
pub fn manipulability_measure(jac: &DMatrix<f64>) -> f64 {
    let (rows, cols) = jac.shape();
    if rows == 0 || cols == 0 || cols < rows {
        return 0.0;
    }
    let sv = jac.clone().svd(false, false).singular_values;
    let mut m = 1.0;
    for s in sv.iter() {
        if !(*s >= SINGULAR_EPS) {
            return 0.0;
        }
        m *= s;
    }
    m
}

/// Same as [`manipulability_measure`] for a 6×n Jacobian.
pub fn manipulability_6xn<S: RawStorage<f64, U6, Dyn>>(jac: &Matrix<f64, U6, Dyn, S>) -> f64 {
    manipulability_measure(&DMatrix::from_fn(6, jac.ncols(), |r, c| jac[(r, c)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceGrid {
    pub corner_min: [f64; 3],
    pub corner_max: [f64; 3],
    pub spacing: f64,
    pub orientations: Vec<UnitQuaternion<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManipulabilityError {
    #[error("invalid workspace grid: {0}")]
    InvalidGrid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

/// Six approach directions (EE z axis along ±x, ±y, ±z of the base) with a
/// fixed roll.
pub fn axis_aligned_orientations() -> Vec<UnitQuaternion<f64>> {
    let dirs = [
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ];
    dirs.iter()
        .map(|d| {
            UnitQuaternion::rotation_between(&Vector3::z(), d).unwrap_or_else(|| {
                // antiparallel: half turn about x
                UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
            })
        })
        .collect()
}

impl WorkspaceGrid {
    pub fn new(
        corner_min: [f64; 3],
        corner_max: [f64; 3],
        spacing: f64,
        orientations: Vec<UnitQuaternion<f64>>,
    ) -> Result<Self, ManipulabilityError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(ManipulabilityError::InvalidGrid(format!("spacing {spacing} must be positive")));
        }
        if !(0..3).all(|i| corner_min[i] < corner_max[i]) {
            return Err(ManipulabilityError::InvalidGrid("corner_min must be below corner_max".into()));
        }
        if orientations.len() != 6 {
            return Err(ManipulabilityError::InvalidGrid(format!(
                "expected 6 orientations, got {}",
                orientations.len()
            )));
        }
        Ok(Self {
            corner_min,
            corner_max,
            spacing,
            orientations,
        })
    }

    /// The default box around the base, `(-0.2, -0.8, 0.1)` to `(0.2, 0.8, 1.7)`.
    pub fn standard(spacing: f64) -> Result<Self, ManipulabilityError> {
        Self::new([-0.2, -0.8, 0.1], [0.2, 0.8, 1.7], spacing, axis_aligned_orientations())
    }

    fn axis_values(&self, axis: usize) -> Vec<f64> {
        let (lo, hi) = (self.corner_min[axis], self.corner_max[axis]);
        let steps = (hi - lo) / self.spacing;
        let n = (steps + 1e-9).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * self.spacing).collect();
        if let Some(last) = v.last_mut() {
            if (*last - hi).abs() < 1e-9 {
                *last = hi;
            }
        }
        v
    }

    /// Grid points, x slowest, z fastest. Corners are included exactly when
    /// the spacing divides the extent.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        let (xs, ys, zs) = (self.axis_values(0), self.axis_values(1), self.axis_values(2));
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for x in &xs {
            for y in &ys {
                for z in &zs {
                    out.push(Vector3::new(*x, *y, *z));
                }
            }
        }
        out
    }

    pub fn pose_count(&self) -> usize {
        self.points().len() * self.orientations.len()
    }
}

/// Per-(point, orientation) manipulability and its mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipField {
    pub points: Vec<Vector3<f64>>,
    pub orientations_per_point: usize,
    /// Point-major: entry `p * orientations_per_point + o`.
    pub values: Vec<f64>,
    pub mu: f64,
    pub reachable: usize,
}

impl ManipField {
    pub fn from_values(points: Vec<Vector3<f64>>, orientations_per_point: usize, values: Vec<f64>) -> Self {
        assert_eq!(points.len() * orientations_per_point, values.len());
        assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        let mu = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        let reachable = values.iter().filter(|v| **v > 0.0).count();
        Self {
            points,
            orientations_per_point,
            values,
            mu,
            reachable,
        }
    }

    pub fn empty() -> Self {
        Self::from_values(Vec::new(), 6, Vec::new())
    }

    /// Mean over orientations for each point.
    pub fn point_means(&self) -> Vec<f64> {
        self.values
            .chunks(self.orientations_per_point.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

fn pose_seed(rng_seed: u64, index: usize) -> u64 {
    // splitmix64 of (seed, index)
    let mut z = rng_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Manipulability at one grid pose: one IK attempt from a random seed over
/// torso + arm with the base fixed; the whole-body Jacobian (base x, y, yaw
/// included) at the solution gives `m`. Zero when IK fails.
pub fn pose_manipulability(robot: &RobotDescription, target: &Pose, seed: u64, settings: &IkSettings) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q0: Vec<f64> = (0..robot.dof())
        .map(|i| {
            let l = robot.dof_limits(i);
            if l.upper > l.lower {
                rng.random_range(l.lower..=l.upper)
            } else {
                l.lower
            }
        })
        .collect();
    match ik_dls(robot, target, &q0, robot.ee_frame(), settings) {
        Ok(sol) => {
            let j = jacobian(robot, &sol.q, robot.ee_frame(), &JointSelector::WholeBody)
                .expect("ee frame exists");
            manipulability_6xn(&j)
        }
        Err(_) => 0.0,
    }
}

/// Mean manipulability over every grid point and orientation. Deterministic
/// in `rng_seed`; each pose draws its IK seed from its own stream.
pub fn global_manipulability(robot: &RobotDescription, grid: &WorkspaceGrid, rng_seed: u64) -> ManipField {
    global_manipulability_with(robot, grid, rng_seed, &IkSettings::default())
}

pub fn global_manipulability_with(
    robot: &RobotDescription,
    grid: &WorkspaceGrid,
    rng_seed: u64,
    settings: &IkSettings,
) -> ManipField {
    let points = grid.points();
    let n_o = grid.orientations.len();
    let values: Vec<f64> = (0..points.len() * n_o)
        .into_par_iter()
        .map(|k| {
            let target = Pose::new(points[k / n_o], grid.orientations[k % n_o]);
            pose_manipulability(robot, &target, pose_seed(rng_seed, k), settings)
        })
        .collect();
    ManipField::from_values(points, n_o, values)
}

pub const HEATMAP_HEADER: &str = "x,y,z,orientation_index,m";

/// CSV with one row per (point, orientation) and a trailing `mu` row.
pub fn export_heatmap(field: &ManipField, path: impl AsRef<Path>) -> Result<(), ManipulabilityError> {
    let path = path.as_ref();
    let io = |source| ManipulabilityError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{HEATMAP_HEADER}")?;
        for (k, m) in field.values.iter().enumerate() {
            let p = field.points[k / field.orientations_per_point];
            writeln!(out, "{},{},{},{},{}", p.x, p.y, p.z, k % field.orientations_per_point, m)?;
        }
        writeln!(out, "mu,,,,{}", field.mu)?;
        out.flush()
    };
    write().map_err(io)
}

/// Reads a heatmap CSV back. `mu` is recomputed from the data rows.
pub fn import_heatmap(path: impl AsRef<Path>) -> Result<ManipField, ManipulabilityError> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| ManipulabilityError::Io {
        path: pstr.clone(),
        source,
    })?;
    let fmt = |line: usize, message: String| ManipulabilityError::Format {
        path: pstr.clone(),
        line,
        message,
    };
    let mut points: Vec<Vector3<f64>> = Vec::new();
    let mut values = Vec::new();
    let mut max_o = 0usize;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ManipulabilityError::Io {
            path: pstr.clone(),
            source,
        })?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != HEATMAP_HEADER {
                return Err(fmt(lineno, format!("unexpected header `{line}`")));
            }
            continue;
        }
        if line.starts_with("mu,") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(fmt(lineno, format!("expected 5 columns, got {}", cols.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| fmt(lineno, e.to_string()));
        let p = Vector3::new(num(cols[0])?, num(cols[1])?, num(cols[2])?);
        let o: usize = cols[3].trim().parse().map_err(|e: std::num::ParseIntError| fmt(lineno, e.to_string()))?;
        if o == 0 {
            points.push(p);
        }
        max_o = max_o.max(o + 1);
        values.push(num(cols[4])?);
    }
    let per = if points.is_empty() { 6 } else { max_o };
    if points.len() * per != values.len() {
        return Err(fmt(0, "rows do not form a complete point × orientation table".into()));
    }
    Ok(ManipField::from_values(points, per, values))
}
