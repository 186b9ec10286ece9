//! BOHB: Hyperband brackets whose first rungs are filled by a TPE model.
//!
//! Every evaluation becomes an [`EvaluationRecord`]. The history is
//! append-only and can be persisted as JSONL; replaying a persisted prefix
//! through [`Session::with_replay`] reproduces the run without calling the
//! evaluator for the replayed records.

mod hyperband;
mod tpe;

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use hyperband::{halving_counts, make_brackets, BohbConfig, Bracket, Rung};
pub use tpe::{split_good_bad, DensityPair, Observation, ParzenEstimator};

use crate::controller::{mix_seed, ControllerGains, TaskRate};
use crate::design::{DesignParams, DesignSpace, DESIGN_DIM};

pub type EvalFault = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum BohbError {
    #[error("invalid optimizer config: {0}")]
    ConfigInvalid(String),
    #[error("evaluating {omega} at budget {budget}: {message}")]
    Evaluation {
        omega: DesignParams,
        budget: f64,
        message: String,
    },
    #[error("history record {index} does not match the replayed run")]
    ResumeMismatch { index: usize },
    #[error("history line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Random,
    Model,
    Promoted,
}

/// What the evaluator is asked to score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRequest {
    pub omega: DesignParams,
    pub unit: [f64; DESIGN_DIM],
    pub budget: f64,
    pub seed: u64,
}

/// What the evaluator returns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub score: f64,
    pub rates: Vec<TaskRate>,
    pub feasible: bool,
    pub gains: Option<ControllerGains>,
}

impl Evaluation {
    /// A bare feasible score.
    pub fn scored(score: f64) -> Self {
        Self {
            score,
            feasible: true,
            ..Default::default()
        }
    }
}

pub trait Evaluator: Sync {
    fn evaluate(&self, request: &EvalRequest) -> Result<Evaluation, EvalFault>;
}

impl<F> Evaluator for F
where
    F: Fn(&EvalRequest) -> Result<Evaluation, EvalFault> + Sync,
{
    fn evaluate(&self, request: &EvalRequest) -> Result<Evaluation, EvalFault> {
        self(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub index: usize,
    /// Shared by a design and all its promotions.
    pub design_id: usize,
    pub iteration: usize,
    pub bracket: usize,
    pub rung: usize,
    pub omega: DesignParams,
    pub unit: [f64; DESIGN_DIM],
    pub budget: f64,
    pub budget_unit: String,
    pub seed: u64,
    pub score: f64,
    pub rates: Vec<TaskRate>,
    pub feasible: bool,
    pub gains: Option<ControllerGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub provenance: Provenance,
}

impl EvaluationRecord {
    fn matches(&self, r: &EvalRequest) -> bool {
        self.budget.to_bits() == r.budget.to_bits()
            && self.seed == r.seed
            && self.unit.iter().zip(&r.unit).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// One suggestion in unit coordinates.
///
/// With probability `random_fraction`, or while no budget has enough
/// observations, the point is uniform on the cube. Otherwise it is the best
/// of `candidates` draws from the good density by l/g.
pub fn suggest(observations: &[Observation], dim: usize, config: &BohbConfig, rng: &mut ChaCha8Rng) -> (Vec<f64>, Provenance) {
    let uniform = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    if rng.random::<f64>() < config.random_fraction {
        return (uniform(rng), Provenance::Random);
    }
    let min_points = config.min_points.unwrap_or(dim + 1);
    match DensityPair::fit(observations, config.gamma, min_points) {
        Some(pair) => (pair.propose(config.candidates, config.bandwidth_factor, rng), Provenance::Model),
        None => (uniform(rng), Provenance::Random),
    }
}

/// Argmax score at the largest budget present, ties to the earliest record.
pub fn best_record(history: &[EvaluationRecord]) -> Option<&EvaluationRecord> {
    let top = history.iter().map(|r| r.budget).fold(f64::NEG_INFINITY, f64::max);
    history
        .iter()
        .filter(|r| r.budget == top)
        .fold(None, |best: Option<&EvaluationRecord>, r| match best {
            Some(b) if b.score >= r.score => Some(b),
            _ => Some(r),
        })
}

/// Optimizer state: history, replay queue and the suggestion stream.
pub struct Session<'e, E: Evaluator> {
    space: DesignSpace,
    config: BohbConfig,
    seed: u64,
    evaluator: &'e E,
    rng: ChaCha8Rng,
    history: Vec<EvaluationRecord>,
    replay: VecDeque<EvaluationRecord>,
    designs: usize,
}

pub type Sink<'a> = &'a mut dyn FnMut(&EvaluationRecord) -> Result<(), BohbError>;

impl<'e, E: Evaluator> Session<'e, E> {
    pub fn new(space: DesignSpace, config: BohbConfig, seed: u64, evaluator: &'e E) -> Result<Self, BohbError> {
        config.validate()?;
        Ok(Self {
            space,
            config,
            seed,
            evaluator,
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: Vec::new(),
            replay: VecDeque::new(),
            designs: 0,
        })
    }

    /// Records to serve, in order, instead of calling the evaluator.
    pub fn with_replay(mut self, records: Vec<EvaluationRecord>) -> Self {
        self.replay = records.into();
        self
    }

    pub fn history(&self) -> &[EvaluationRecord] {
        &self.history
    }

    pub fn into_history(self) -> Vec<EvaluationRecord> {
        self.history
    }

    fn remaining(&self) -> usize {
        self.config.max_designs.saturating_sub(self.history.len())
    }

    fn observations(&self) -> Vec<Observation> {
        self.history
            .iter()
            .map(|r| Observation {
                unit: r.unit.to_vec(),
                budget: r.budget,
                score: r.score,
            })
            .collect()
    }

    /// Evaluates a rung. Replayed records are checked, the rest run in parallel
    /// and are appended in request order.
    fn evaluate_rung(
        &mut self,
        requests: Vec<(EvalRequest, usize, Provenance)>,
        (iteration, bracket, rung): (usize, usize, usize),
        sink: Sink<'_>,
    ) -> Result<Vec<usize>, BohbError> {
        let replayed = requests.len().min(self.replay.len());
        let mut results: Vec<(Evaluation, Option<f64>)> = Vec::with_capacity(requests.len());
        for (req, _, _) in &requests[..replayed] {
            let rec = self.replay.pop_front().expect("counted above");
            if !rec.matches(req) || rec.index != self.history.len() + results.len() {
                return Err(BohbError::ResumeMismatch { index: rec.index });
            }
            results.push((
                Evaluation {
                    score: rec.score,
                    rates: rec.rates,
                    feasible: rec.feasible,
                    gains: rec.gains,
                },
                rec.wall_time_s,
            ));
        }
        let timed = self.config.record_wall_time;
        let fresh: Vec<(Evaluation, Option<f64>)> = requests[replayed..]
            .par_iter()
            .map(|(req, _, _)| {
                let start = Instant::now();
                let e = self.evaluator.evaluate(req).map_err(|err| BohbError::Evaluation {
                    omega: req.omega,
                    budget: req.budget,
                    message: err.to_string(),
                })?;
                Ok((e, timed.then(|| start.elapsed().as_secs_f64())))
            })
            .collect::<Result<_, BohbError>>()?;
        results.extend(fresh);
        let mut indices = Vec::with_capacity(requests.len());
        for (k, ((req, design_id, provenance), (e, wall))) in requests.into_iter().zip(results).enumerate() {
            let record = EvaluationRecord {
                index: self.history.len(),
                design_id,
                iteration,
                bracket,
                rung,
                omega: req.omega,
                unit: req.unit,
                budget: req.budget,
                budget_unit: self.config.budget_unit.clone(),
                seed: req.seed,
                score: e.score,
                rates: e.rates,
                feasible: e.feasible,
                gains: e.gains,
                wall_time_s: wall,
                provenance,
            };
            if k >= replayed {
                sink(&record)?;
            }
            indices.push(record.index);
            self.history.push(record);
        }
        Ok(indices)
    }

    /// Runs successive halving on one bracket and returns the new record indices.
    ///
    /// The first rung is filled by [`suggest`]. Each later rung re-evaluates
    /// the best `floor(n / eta)` (at least one) of the previous rung at the
    /// next budget, ties to the earlier record. Stops early at `max_designs`.
    pub fn run_bracket(&mut self, bracket: &Bracket, iteration: usize, sink: Sink<'_>) -> Result<Vec<usize>, BohbError> {
        let mut all = Vec::new();
        let Some(first) = bracket.rungs.first() else {
            return Ok(all);
        };
        let count = first.count.min(self.remaining());
        let observations = self.observations();
        let mut requests = Vec::with_capacity(count);
        for _ in 0..count {
            let (u, provenance) = suggest(&observations, DESIGN_DIM, &self.config, &mut self.rng);
            let unit: [f64; DESIGN_DIM] = u.try_into().expect("suggest returns the design dimension");
            let omega = self.space.decode_unit(&unit).map_err(|e| BohbError::ConfigInvalid(e.to_string()))?;
            let design_id = self.designs;
            self.designs += 1;
            let req = EvalRequest {
                omega,
                unit,
                budget: first.budget,
                seed: mix_seed(self.seed, design_id as u64),
            };
            requests.push((req, design_id, provenance));
        }
        let mut current = self.evaluate_rung(requests, (iteration, bracket.s, 0), sink)?;
        all.extend(&current);
        for (i, rung) in bracket.rungs.iter().enumerate().skip(1) {
            let keep = (current.len() / self.config.eta).max(1).min(self.remaining());
            if keep == 0 || current.is_empty() {
                break;
            }
            let mut order = current.clone();
            order.sort_by(|a, b| self.history[*b].score.total_cmp(&self.history[*a].score).then(a.cmp(b)));
            order.truncate(keep);
            order.sort_unstable();
            let requests = order
                .iter()
                .map(|k| {
                    let r = &self.history[*k];
                    let req = EvalRequest {
                        omega: r.omega,
                        unit: r.unit,
                        budget: rung.budget,
                        seed: r.seed,
                    };
                    (req, r.design_id, Provenance::Promoted)
                })
                .collect();
            current = self.evaluate_rung(requests, (iteration, bracket.s, i), sink)?;
            all.extend(&current);
        }
        Ok(all)
    }

    /// Hyperband sweeps until `iterations` or `max_designs` runs out.
    pub fn run(&mut self, sink: Sink<'_>) -> Result<(), BohbError> {
        let brackets = make_brackets(&self.config)?;
        for iteration in 0..self.config.iterations {
            for b in &brackets {
                if self.remaining() == 0 {
                    return self.finish();
                }
                self.run_bracket(b, iteration, sink)?;
            }
        }
        self.finish()
    }

    fn finish(&self) -> Result<(), BohbError> {
        match self.replay.front() {
            Some(r) => Err(BohbError::ResumeMismatch { index: r.index }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: EvaluationRecord,
    pub history: Vec<EvaluationRecord>,
}

/// Full BOHB run, optionally replaying `replay` and streaming new records to `sink`.
pub fn optimize_with<E: Evaluator>(
    space: &DesignSpace,
    evaluator: &E,
    config: &BohbConfig,
    seed: u64,
    replay: Vec<EvaluationRecord>,
    sink: Sink<'_>,
) -> Result<OptimizeResult, BohbError> {
    let mut session = Session::new(*space, config.clone(), seed, evaluator)?.with_replay(replay);
    session.run(sink)?;
    let history = session.into_history();
    let best = best_record(&history)
        .cloned()
        .ok_or_else(|| BohbError::ConfigInvalid("no evaluations were allowed".into()))?;
    Ok(OptimizeResult { best, history })
}

pub fn optimize<E: Evaluator>(space: &DesignSpace, evaluator: &E, config: &BohbConfig, seed: u64) -> Result<OptimizeResult, BohbError> {
    optimize_with(space, evaluator, config, seed, Vec::new(), &mut |_| Ok(()))
}

/// Append-only JSONL history, flushed after every record.
pub struct HistoryWriter {
    out: BufWriter<File>,
}

impl HistoryWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, BohbError> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    /// Rewrites `path` with `records` and keeps it open for appending.
    pub fn rewrite(path: impl AsRef<Path>, records: &[EvaluationRecord]) -> Result<Self, BohbError> {
        let mut w = Self::create(path)?;
        for r in records {
            w.append(r)?;
        }
        Ok(w)
    }

    pub fn open_append(path: impl AsRef<Path>) -> Result<Self, BohbError> {
        Ok(Self {
            out: BufWriter::new(OpenOptions::new().append(true).create(true).open(path)?),
        })
    }

    pub fn append(&mut self, record: &EvaluationRecord) -> Result<(), BohbError> {
        serde_json::to_writer(&mut self.out, record).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a JSONL history. A torn final line (no trailing newline, not valid
/// JSON) is dropped; any other bad line is an error.
pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<EvaluationRecord>, BohbError> {
    let text = std::fs::read_to_string(path)?;
    let torn_tail = !text.is_empty() && !text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if torn_tail && i + 1 == lines.len() => break,
            Err(e) => {
                return Err(BohbError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(center: [f64; DESIGN_DIM]) -> impl Fn(&EvalRequest) -> Result<Evaluation, EvalFault> + Sync {
        move |r: &EvalRequest| {
            let d2: f64 = r.unit.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
            Ok(Evaluation::scored(1.0 - d2 / DESIGN_DIM as f64))
        }
    }

    fn quiet(config: BohbConfig) -> BohbConfig {
        BohbConfig {
            record_wall_time: false,
            ..config
        }
    }

    #[test]
    fn cap_of_one_gives_one_record() {
        let cfg = quiet(BohbConfig {
            max_designs: 1,
            ..Default::default()
        });
        let r = optimize(&DesignSpace::default(), &sphere([0.5; 6]), &cfg, 3).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.best.index, 0);
    }

    #[test]
    fn default_schedule_stops_at_the_design_cap() {
        let cfg = quiet(BohbConfig::default());
        let r = optimize(&DesignSpace::default(), &sphere([0.5; 6]), &cfg, 3).unwrap();
        assert_eq!(r.history.len(), 60);
        for (k, rec) in r.history.iter().enumerate() {
            assert_eq!(rec.index, k);
        }
        assert_eq!(r.best.budget, 1e6);
    }

    #[test]
    fn promotions_reuse_design_and_seed() {
        let cfg = quiet(BohbConfig {
            b_min: 1.0,
            b_max: 9.0,
            iterations: 1,
            max_designs: 1000,
            ..Default::default()
        });
        let r = optimize(&DesignSpace::default(), &sphere([0.3; 6]), &cfg, 11).unwrap();
        for p in r.history.iter().filter(|p| p.provenance == Provenance::Promoted) {
            let origin = r.history.iter().find(|o| o.design_id == p.design_id).unwrap();
            assert!(origin.index < p.index && origin.budget < p.budget);
            assert_eq!((origin.seed, origin.unit), (p.seed, p.unit));
        }
    }

    #[test]
    fn failing_evaluator_reports_the_design() {
        let bad = |_: &EvalRequest| -> Result<Evaluation, EvalFault> { Err("boom".into()) };
        let err = optimize(&DesignSpace::default(), &bad, &BohbConfig::default(), 0).unwrap_err();
        assert!(matches!(err, BohbError::Evaluation { .. }));
        assert!(err.to_string().contains("boom"));
    }

    #[test]
    fn best_prefers_largest_budget_then_earliest() {
        let cfg = quiet(BohbConfig {
            max_designs: 3,
            ..Default::default()
        });
        let flat = |_: &EvalRequest| -> Result<Evaluation, EvalFault> { Ok(Evaluation::scored(0.5)) };
        let r = optimize(&DesignSpace::default(), &flat, &cfg, 0).unwrap();
        assert_eq!(r.best.budget, 1e6 / 3.0);
        assert_eq!(r.best.index, 0);
    }
}
