//! Parzen density models over the unit cube and the l/g candidate rule.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

const MIN_BANDWIDTH: f64 = 1e-3;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One scored point in unit coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub unit: Vec<f64>,
    pub budget: f64,
    pub score: f64,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Product-Gaussian kernel density truncated to `[0, 1]^d`.
///
/// Every kernel is renormalized by its own mass inside the cube, so the model
/// integrates to one over the cube.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenEstimator {
    points: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
    // log of each kernel's per-dimension normalizer, summed over dimensions
    log_mass: Vec<f64>,
}

impl ParzenEstimator {
    /// Fits bandwidths by Scott's rule, floored at 1e-3.
    ///
    /// # Panics
    /// If `points` is empty or the points disagree on dimension.
    pub fn fit(points: Vec<Vec<f64>>) -> Self {
        assert!(!points.is_empty(), "a density needs at least one point");
        let dim = points[0].len();
        assert!(points.iter().all(|p| p.len() == dim), "mixed dimensions");
        let n = points.len() as f64;
        let factor = n.powf(-1.0 / (dim as f64 + 4.0));
        let bandwidths = (0..dim)
            .map(|d| {
                let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
                let var = if points.len() > 1 {
                    points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (var.sqrt() * factor).max(MIN_BANDWIDTH)
            })
            .collect();
        Self::with_bandwidths(points, bandwidths)
    }

    pub fn with_bandwidths(points: Vec<Vec<f64>>, bandwidths: Vec<f64>) -> Self {
        let log_mass = points
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&bandwidths)
                    .map(|(m, h)| (normal_cdf((1.0 - m) / h) - normal_cdf(-m / h)).ln())
                    .sum()
            })
            .collect();
        Self {
            points,
            bandwidths,
            log_mass,
        }
    }

    pub fn dim(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Log density at `x`; `-inf` outside the cube.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return f64::NEG_INFINITY;
        }
        let terms: Vec<f64> = self
            .points
            .iter()
            .zip(&self.log_mass)
            .map(|(p, mass)| {
                let mut s = -mass;
                for ((xv, m), h) in x.iter().zip(p).zip(&self.bandwidths) {
                    let z = (xv - m) / h;
                    s += -0.5 * z * z - h.ln() - LN_SQRT_2PI;
                }
                s
            })
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln() - (self.points.len() as f64).ln()
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Density of kernel `k` restricted to dimension `d`.
    pub fn kernel_marginal(&self, k: usize, d: usize, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let (m, h) = (self.points[k][d], self.bandwidths[d]);
        let z = (x - m) / h;
        let mass = normal_cdf((1.0 - m) / h) - normal_cdf(-m / h);
        (-0.5 * z * z).exp() / (h * std::f64::consts::TAU.sqrt() * mass)
    }

    /// Draws from a uniformly chosen kernel with bandwidths scaled by
    /// `widen`, truncating by rejection.
    pub fn sample(&self, widen: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let k = rng.random_range(0..self.points.len());
        self.points[k]
            .iter()
            .zip(&self.bandwidths)
            .map(|(m, h)| {
                let h = h * widen;
                for _ in 0..64 {
                    let v = m + h * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    if (0.0..=1.0).contains(&v) {
                        return v;
                    }
                }
                // the kernel mass in the cube is tiny; its center is inside
                m.clamp(0.0, 1.0)
            })
            .collect()
    }
}

/// Good and bad densities fitted at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub good: ParzenEstimator,
    pub bad: ParzenEstimator,
    pub budget: f64,
}

/// Index split into (good, bad) by descending score, ties to the earlier point.
///
/// The good set holds the best `ceil(gamma * n)` points but at least
/// `min_good`, and never all of them.
pub fn split_good_bad(scores: &[f64], gamma: f64, min_good: usize) -> (Vec<usize>, Vec<usize>) {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    let n_good = ((gamma * n as f64).ceil() as usize)
        .max(min_good)
        .clamp(1, n.saturating_sub(1).max(1));
    let bad = order.split_off(n_good);
    (order, bad)
}

impl DensityPair {
    /// Fits at the largest budget holding at least `min_points` observations;
    /// `min_points` also floors the size of the good set.
    pub fn fit(observations: &[Observation], gamma: f64, min_points: usize) -> Option<Self> {
        let min_points = min_points.max(2);
        let mut budgets: Vec<f64> = observations.iter().map(|o| o.budget).collect();
        budgets.sort_by(|a, b| b.total_cmp(a));
        budgets.dedup();
        let budget = budgets
            .into_iter()
            .find(|b| observations.iter().filter(|o| o.budget == *b).count() >= min_points)?;
        let at: Vec<&Observation> = observations.iter().filter(|o| o.budget == budget).collect();
        let scores: Vec<f64> = at.iter().map(|o| o.score).collect();
        let (good, bad) = split_good_bad(&scores, gamma, min_points);
        let pick = |idx: &[usize]| idx.iter().map(|i| at[*i].unit.clone()).collect::<Vec<_>>();
        Some(Self {
            good: ParzenEstimator::fit(pick(&good)),
            bad: ParzenEstimator::fit(pick(&bad)),
            budget,
        })
    }

    /// `log l(x) - log g(x)`.
    pub fn log_ratio(&self, x: &[f64]) -> f64 {
        self.good.log_pdf(x) - self.bad.log_pdf(x)
    }

    /// Best of `count` draws from the widened good model by l/g, ties to the earliest.
    pub fn propose(&self, count: usize, widen: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut best: Option<(Vec<f64>, f64)> = None;
        for _ in 0..count.max(1) {
            let x = self.good.sample(widen, rng);
            let r = self.log_ratio(&x);
            if best.as_ref().is_none_or(|(_, b)| r > *b) {
                best = Some((x, r));
            }
        }
        best.expect("at least one candidate").0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_point_uses_floor_bandwidth() {
        let p = ParzenEstimator::fit(vec![vec![0.3, 0.7]]);
        assert_eq!(p.bandwidths(), &[1e-3, 1e-3]);
    }

    #[test]
    fn scott_rule_in_one_dimension() {
        let pts: Vec<Vec<f64>> = [0.1, 0.2, 0.4, 0.5].iter().map(|v| vec![*v]).collect();
        let p = ParzenEstimator::fit(pts);
        let mean = 0.3;
        let var = [0.1f64, 0.2, 0.4, 0.5].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        let expect = var.sqrt() * 4f64.powf(-0.2);
        assert!((p.bandwidths()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn split_keeps_at_least_one_bad() {
        let (g, b) = split_good_bad(&[0.5, 0.9], 0.99, 1);
        assert_eq!((g, b), (vec![1], vec![0]));
        let (g, b) = split_good_bad(&[1.0, 1.0, 0.0, 1.0], 0.15, 1);
        assert_eq!(g, vec![0]);
        assert_eq!(b, vec![1, 3, 2]);
        let (g, _) = split_good_bad(&[0.0; 20], 0.15, 7);
        assert_eq!(g.len(), 7);
    }

    #[test]
    fn samples_stay_in_cube() {
        let p = ParzenEstimator::with_bandwidths(vec![vec![0.0, 1.0]], vec![0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(p.sample(1.0, &mut rng).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn too_few_points_gives_no_model() {
        let obs = vec![
            Observation {
                unit: vec![0.1],
                budget: 1.0,
                score: 0.0,
            };
            3
        ];
        assert!(DensityPair::fit(&obs, 0.15, 4).is_none());
        assert!(DensityPair::fit(&obs, 0.15, 3).is_some());
    }
}
