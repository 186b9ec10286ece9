//! The six arm-mounting parameters and the box they live in.
//!
//! A [`DesignParams`] is always in range: constructors reject values outside
//! the closed intervals below, so downstream code never re-checks them.
//!
//! | field           | unit | range          |
//! |-----------------|------|----------------|
//! | `arm_pitch`     | rad  | [0, π/2]       |
//! | `arm_yaw`       | rad  | [−π/2, π/2]    |
//! | `ee_pitch`      | rad  | [0, π/2]       |
//! | `forward_x`     | m    | [−0.05, 0.15]  |
//! | `lateral_y`     | m    | [−0.20, 0.20]  |
//! | `tower_yaw`     | rad  | [−π/2, π/2]    |

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::units::{parse_angle, parse_length};

/// Number of mounting parameters.
pub const DESIGN_DIM: usize = 6;

/// Field names in storage order.
pub const DESIGN_FIELDS: [&str; DESIGN_DIM] = [
    "arm_pitch",
    "arm_yaw",
    "ee_pitch",
    "forward_x",
    "lateral_y",
    "tower_yaw",
];

const ANGULAR: [bool; DESIGN_DIM] = [true, true, true, false, false, true];

/// Absolute bounds of every mounting parameter.
pub const DESIGN_BOUNDS: [(f64, f64); DESIGN_DIM] = [
    (0.0, FRAC_PI_2),
    (-FRAC_PI_2, FRAC_PI_2),
    (0.0, FRAC_PI_2),
    (-0.05, 0.15),
    (-0.20, 0.20),
    (-FRAC_PI_2, FRAC_PI_2),
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("{field} = {value} is outside [{lower}, {upper}]")]
    OutOfBounds {
        field: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid design space: {0}")]
    InvalidSpace(String),
    #[error("cannot parse design `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

/// One point of the mounting design space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDesign", into = "RawDesign")]
pub struct DesignParams {
    values: [f64; DESIGN_DIM],
}

#[derive(Serialize, Deserialize)]
struct RawDesign {
    arm_pitch: f64,
    arm_yaw: f64,
    ee_pitch: f64,
    forward_x: f64,
    lateral_y: f64,
    tower_yaw: f64,
}

impl TryFrom<RawDesign> for DesignParams {
    type Error = DesignError;

    fn try_from(r: RawDesign) -> Result<Self, Self::Error> {
        DesignParams::from_array([
            r.arm_pitch,
            r.arm_yaw,
            r.ee_pitch,
            r.forward_x,
            r.lateral_y,
            r.tower_yaw,
        ])
    }
}

impl From<DesignParams> for RawDesign {
    fn from(d: DesignParams) -> Self {
        let [arm_pitch, arm_yaw, ee_pitch, forward_x, lateral_y, tower_yaw] = d.values;
        RawDesign {
            arm_pitch,
            arm_yaw,
            ee_pitch,
            forward_x,
            lateral_y,
            tower_yaw,
        }
    }
}

fn check_range(
    field: &'static str,
    value: f64,
    (lower, upper): (f64, f64),
) -> Result<(), DesignError> {
    if value.is_finite() && value >= lower && value <= upper {
        Ok(())
    } else {
        Err(DesignError::OutOfBounds {
            field,
            value,
            lower,
            upper,
        })
    }
}

impl DesignParams {
    pub fn new(
        arm_pitch: f64,
        arm_yaw: f64,
        ee_pitch: f64,
        forward_x: f64,
        lateral_y: f64,
        tower_yaw: f64,
    ) -> Result<Self, DesignError> {
        Self::from_array([arm_pitch, arm_yaw, ee_pitch, forward_x, lateral_y, tower_yaw])
    }

    pub fn from_array(values: [f64; DESIGN_DIM]) -> Result<Self, DesignError> {
        for (i, v) in values.iter().enumerate() {
            check_range(DESIGN_FIELDS[i], *v, DESIGN_BOUNDS[i])?;
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, DesignError> {
        let arr: [f64; DESIGN_DIM] = values.try_into().map_err(|_| DesignError::Dimension {
            expected: DESIGN_DIM,
            got: values.len(),
        })?;
        Self::from_array(arr)
    }

    /// The tabletop mount: every parameter zero.
    pub fn tabletop() -> Self {
        Self {
            values: [0.0; DESIGN_DIM],
        }
    }

    pub fn as_array(&self) -> [f64; DESIGN_DIM] {
        self.values
    }

    pub fn arm_pitch(&self) -> f64 {
        self.values[0]
    }
    pub fn arm_yaw(&self) -> f64 {
        self.values[1]
    }
    pub fn ee_pitch(&self) -> f64 {
        self.values[2]
    }
    pub fn forward_x(&self) -> f64 {
        self.values[3]
    }
    pub fn lateral_y(&self) -> f64 {
        self.values[4]
    }
    pub fn tower_yaw(&self) -> f64 {
        self.values[5]
    }

    pub fn is_tabletop(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

impl Default for DesignParams {
    fn default() -> Self {
        Self::tabletop()
    }
}

impl fmt::Display for DesignParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if ANGULAR[i] {
                write!(f, "{}={:.2}deg", DESIGN_FIELDS[i], v.to_degrees())?;
            } else {
                write!(f, "{}={:.3}m", DESIGN_FIELDS[i], v)?;
            }
        }
        Ok(())
    }
}

/// Parses either six comma-separated values (radians / meters, unit
/// suffixes allowed) or `key=value` pairs; missing keys default to zero.
impl FromStr for DesignParams {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: String| DesignError::Parse {
            input: s.to_string(),
            reason,
        };
        let parts: Vec<&str> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        let mut values = [0.0; DESIGN_DIM];
        if parts.iter().all(|p| !p.contains('=')) {
            if parts.len() != DESIGN_DIM {
                return Err(err(format!("expected {DESIGN_DIM} values, got {}", parts.len())));
            }
            for (i, p) in parts.iter().enumerate() {
                values[i] = parse_field(i, p).map_err(err)?;
            }
        } else {
            for p in parts {
                let (key, value) = p
                    .split_once('=')
                    .ok_or_else(|| err(format!("`{p}` is not key=value")))?;
                let i = DESIGN_FIELDS
                    .iter()
                    .position(|f| *f == key.trim())
                    .ok_or_else(|| err(format!("unknown field `{}`", key.trim())))?;
                values[i] = parse_field(i, value.trim()).map_err(err)?;
            }
        }
        Self::from_array(values)
    }
}

fn parse_field(i: usize, text: &str) -> Result<f64, String> {
    if ANGULAR[i] {
        parse_angle(text)
    } else {
        parse_length(text)
    }
}

/// Per-dimension bounds of the search box, a sub-box of [`DESIGN_BOUNDS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    bounds: [(f64, f64); DESIGN_DIM],
}

impl Default for DesignSpace {
    fn default() -> Self {
        Self {
            bounds: DESIGN_BOUNDS,
        }
    }
}

impl DesignSpace {
    pub fn new(bounds: [(f64, f64); DESIGN_DIM]) -> Result<Self, DesignError> {
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) {
                return Err(DesignError::InvalidSpace(format!(
                    "{}: lower {lo} must be below upper {hi}",
                    DESIGN_FIELDS[i]
                )));
            }
            check_range(DESIGN_FIELDS[i], *lo, DESIGN_BOUNDS[i])?;
            check_range(DESIGN_FIELDS[i], *hi, DESIGN_BOUNDS[i])?;
        }
        Ok(Self { bounds })
    }

    pub fn bounds(&self) -> &[(f64, f64); DESIGN_DIM] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        DESIGN_DIM
    }

    pub fn lower(&self) -> DesignParams {
        DesignParams {
            values: self.bounds.map(|b| b.0),
        }
    }

    pub fn upper(&self) -> DesignParams {
        DesignParams {
            values: self.bounds.map(|b| b.1),
        }
    }

    pub fn contains(&self, omega: &DesignParams) -> bool {
        omega
            .values
            .iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Affine map of `omega` onto the unit cube.
    pub fn encode_unit(&self, omega: &DesignParams) -> Result<[f64; DESIGN_DIM], DesignError> {
        let mut u = [0.0; DESIGN_DIM];
        for i in 0..DESIGN_DIM {
            let v = omega.values[i];
            check_range(DESIGN_FIELDS[i], v, self.bounds[i])?;
            let (lo, hi) = self.bounds[i];
            u[i] = if v == hi { 1.0 } else { (v - lo) / (hi - lo) };
        }
        Ok(u)
    }

    /// Inverse of [`encode_unit`](Self::encode_unit). Endpoints map exactly.
    pub fn decode_unit(&self, u: &[f64]) -> Result<DesignParams, DesignError> {
        if u.len() != DESIGN_DIM {
            return Err(DesignError::Dimension {
                expected: DESIGN_DIM,
                got: u.len(),
            });
        }
        let mut values = [0.0; DESIGN_DIM];
        for i in 0..DESIGN_DIM {
            check_range("unit coordinate", u[i], (0.0, 1.0))?;
            let (lo, hi) = self.bounds[i];
            // lerp form keeps u = 0 and u = 1 exact
            let v = lo * (1.0 - u[i]) + hi * u[i];
            values[i] = v.clamp(lo, hi);
        }
        Ok(DesignParams { values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_fields() {
        assert!(DesignParams::new(-0.01, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(DesignParams::new(0.0, 0.0, 0.0, 0.16, 0.0, 0.0).is_err());
        assert!(DesignParams::new(0.0, 0.0, 0.0, 0.0, 0.0, f64::NAN).is_err());
        assert!(DesignParams::new(FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, -0.05, 0.2, FRAC_PI_2).is_ok());
    }

    #[test]
    fn encode_endpoints_and_midpoint() {
        let space = DesignSpace::default();
        assert_eq!(space.encode_unit(&space.lower()).unwrap(), [0.0; 6]);
        assert_eq!(space.encode_unit(&space.upper()).unwrap(), [1.0; 6]);
        let mid = space.decode_unit(&[0.5; 6]).unwrap();
        for (u, e) in space.encode_unit(&mid).unwrap().iter().zip([0.5; 6]) {
            assert!((u - e).abs() <= f64::EPSILON, "{u}");
        }
    }

    #[test]
    fn decode_midpoint_and_lower() {
        let space = DesignSpace::default();
        let mid = space.decode_unit(&[0.5; 6]).unwrap();
        assert!((mid.forward_x() - 0.05).abs() < 1e-15);
        assert_eq!(mid.arm_yaw(), 0.0);
        assert_eq!(space.decode_unit(&[0.0; 6]).unwrap(), space.lower());
        assert_eq!(space.decode_unit(&[1.0; 6]).unwrap(), space.upper());
    }

    #[test]
    fn decode_rejects_outside_cube() {
        let space = DesignSpace::default();
        assert!(matches!(
            space.decode_unit(&[0.5, 0.5, 1.2, 0.5, 0.5, 0.5]),
            Err(DesignError::OutOfBounds { .. })
        ));
        assert!(matches!(
            space.decode_unit(&[0.5; 5]),
            Err(DesignError::Dimension { .. })
        ));
    }

    #[test]
    fn encode_rejects_point_outside_narrow_space() {
        let mut b = DESIGN_BOUNDS;
        b[3] = (0.0, 0.1);
        let space = DesignSpace::new(b).unwrap();
        let omega = DesignParams::new(0.0, 0.0, 0.0, 0.12, 0.0, 0.0).unwrap();
        assert!(space.encode_unit(&omega).is_err());
    }

    #[test]
    fn parses_key_value_and_positional_forms() {
        let d: DesignParams = "arm_pitch=45deg, forward_x=0.1".parse().unwrap();
        assert!((d.arm_pitch() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(d.forward_x(), 0.1);
        assert_eq!(d.lateral_y(), 0.0);
        let p: DesignParams = "0,0,90deg,0,-0.2,0".parse().unwrap();
        assert!((p.ee_pitch() - FRAC_PI_2).abs() < 1e-15);
        assert!("0,0,0".parse::<DesignParams>().is_err());
        assert!("bogus=1".parse::<DesignParams>().is_err());
    }

    #[test]
    fn serde_rejects_invalid_values() {
        let json = r#"{"arm_pitch":3.0,"arm_yaw":0,"ee_pitch":0,"forward_x":0,"lateral_y":0,"tower_yaw":0}"#;
        assert!(serde_json::from_str::<DesignParams>(json).is_err());
        let d = DesignParams::new(0.3, -0.2, 0.1, 0.05, 0.1, 0.4).unwrap();
        let back: DesignParams = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
