use serde::{Deserialize, Serialize};

use super::BohbError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BohbConfig {
    /// Reduction factor between rungs.
    pub eta: usize,
    pub b_min: f64,
    pub b_max: f64,
    /// Fraction of suggestions drawn uniformly at random.
    pub random_fraction: f64,
    /// Sweeps over all brackets.
    pub iterations: usize,
    /// Cap on evaluations, promotions included.
    pub max_designs: usize,
    /// Share of observations that form the good density.
    pub gamma: f64,
    /// Draws from the good density per model-based suggestion.
    pub candidates: usize,
    /// Candidates are drawn with the good bandwidths scaled by this factor.
    pub bandwidth_factor: f64,
    /// Observations needed at a budget before it is modeled; `None` means dimension + 1.
    pub min_points: Option<usize>,
    pub budget_unit: String,
    /// Store evaluation wall time in records. Off makes histories byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for BohbConfig {
    fn default() -> Self {
        Self {
            eta: 3,
            b_min: 300_000.0,
            b_max: 1_000_000.0,
            random_fraction: 1.0 / 3.0,
            iterations: 20,
            max_designs: 60,
            gamma: 0.15,
            candidates: 64,
            bandwidth_factor: 3.0,
            min_points: None,
            budget_unit: "steps".into(),
            record_wall_time: true,
        }
    }
}

impl BohbConfig {
    pub fn validate(&self) -> Result<(), BohbError> {
        let bad = |msg: &str| Err(BohbError::ConfigInvalid(msg.into()));
        if self.eta < 2 {
            return bad("eta must be at least 2");
        }
        if !(self.b_min > 0.0 && self.b_min <= self.b_max && self.b_max.is_finite()) {
            return bad("budgets need 0 < b_min <= b_max");
        }
        if !(0.0..=1.0).contains(&self.random_fraction) {
            return bad("random_fraction must lie in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.bandwidth_factor > 0.0 && self.bandwidth_factor.is_finite()) {
            return bad("bandwidth_factor must be positive");
        }
        if self.candidates == 0 {
            return bad("candidates must be positive");
        }
        Ok(())
    }

    /// Largest `s` with `b_min * eta^s <= b_max`.
    pub fn s_max(&self) -> usize {
        let mut s = 0;
        let mut b = self.b_min;
        // relative slack so that exact powers are not lost to rounding
        while b * self.eta as f64 <= self.b_max * (1.0 + 1e-12) {
            b *= self.eta as f64;
            s += 1;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub budget: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub rungs: Vec<Rung>,
}

/// Survivors of successive halving from `n0` configurations, one entry per rung.
/// A rung never shrinks below one configuration.
pub fn halving_counts(n0: usize, eta: usize, rungs: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(rungs);
    let mut n = n0;
    for _ in 0..rungs {
        out.push(n);
        n = (n / eta).max(1);
    }
    out
}

/// Hyperband brackets in schedule order, `s = s_max` down to 0.
pub fn make_brackets(config: &BohbConfig) -> Result<Vec<Bracket>, BohbError> {
    config.validate()?;
    let eta = config.eta;
    let s_max = config.s_max();
    Ok((0..=s_max)
        .rev()
        .map(|s| {
            let pow = eta.pow(s as u32);
            let n = ((s_max + 1) * pow).div_ceil(s + 1);
            let counts = halving_counts(n, eta, s + 1);
            let rungs = counts
                .into_iter()
                .enumerate()
                .map(|(i, count)| Rung {
                    budget: config.b_max * (eta as f64).powi(i as i32 - s as i32),
                    count,
                })
                .collect();
            Bracket { s, rungs }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(b_min: f64, b_max: f64, eta: usize) -> BohbConfig {
        BohbConfig {
            b_min,
            b_max,
            eta,
            ..Default::default()
        }
    }

    #[test]
    fn default_budgets() {
        let c = BohbConfig::default();
        assert_eq!(c.s_max(), 1);
        let b = make_brackets(&c).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].s, 1);
        assert_eq!(b[0].rungs.iter().map(|r| r.count).collect::<Vec<_>>(), vec![3, 1]);
        assert!((b[0].rungs[0].budget - 1e6 / 3.0).abs() < 1e-6);
        assert_eq!(b[0].rungs[1].budget, 1e6);
        assert_eq!(b[1].rungs, vec![Rung { budget: 1e6, count: 2 }]);
    }

    #[test]
    fn equal_budgets_make_one_rung() {
        let b = make_brackets(&cfg(5.0, 5.0, 3)).unwrap();
        assert_eq!(b, vec![Bracket { s: 0, rungs: vec![Rung { budget: 5.0, count: 1 }] }]);
    }

    #[test]
    fn exact_power_is_not_lost() {
        assert_eq!(cfg(1.0, 81.0, 3).s_max(), 4);
        assert_eq!(cfg(0.1, 0.9, 3).s_max(), 2);
        let b = make_brackets(&cfg(1.0, 81.0, 3)).unwrap();
        assert_eq!(b[0].rungs.iter().map(|r| r.count).collect::<Vec<_>>(), vec![81, 27, 9, 3, 1]);
        assert_eq!(b[0].rungs[0].budget, 1.0);
    }

    #[test]
    fn nine_configs_halve_to_three_then_one() {
        assert_eq!(halving_counts(9, 3, 3), vec![9, 3, 1]);
        assert_eq!(halving_counts(1, 3, 3), vec![1, 1, 1]);
    }

    #[test]
    fn invalid_configs() {
        assert!(make_brackets(&cfg(2.0, 1.0, 3)).is_err());
        assert!(make_brackets(&cfg(1.0, 2.0, 1)).is_err());
        assert!(make_brackets(&BohbConfig { gamma: 1.0, ..Default::default() }).is_err());
    }
}
