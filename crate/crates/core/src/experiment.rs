//! End-to-end experiments: optimize the mounting, test the best designs and
//! the tabletop baseline on held-out tasks, and write the report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bohb::{optimize_with, read_history, BohbConfig, BohbError, EvalFault, EvalRequest, Evaluation, HistoryWriter};
use crate::controller::{mix_seed, score_design, ControllerError, ScoreSettings};
use crate::design::{DesignParams, DesignSpace};
use crate::feasibility::check_design_with;
use crate::manipulability::{global_manipulability, WorkspaceGrid};
use crate::report::{build_report, rank_designs, write_report, write_tests, RankingReport, ReportError, TestRecord, BASELINE_LABEL};
use crate::robot::{apply_design, load_robot, RobotDescription, RobotError};
use crate::sim::TaskId;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const TESTS_FILE: &str = "tests.jsonl";
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Validation success rate after controller tuning.
    #[default]
    Task,
    /// Global manipulability over a workspace grid.
    Manipulability,
}

impl ScoringMode {
    pub fn budget_unit(&self) -> &'static str {
        match self {
            ScoringMode::Task => "episodes",
            ScoringMode::Manipulability => "grid_level",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Bundled robot name or description file.
    pub robot: String,
    pub mode: ScoringMode,
    pub seed: u64,
    /// Training and validation tasks, episode counts and tuning settings.
    pub score: ScoreSettings,
    pub test: Vec<TaskId>,
    pub test_episodes: usize,
    /// Controller tuning budget (episodes) for every tested design.
    pub test_budget: usize,
    pub top_designs: usize,
    /// Grid spacings from coarsest to finest, used by manipulability scoring.
    pub spacings: Vec<f64>,
    /// Evaluate every manipulability design at the finest spacing, one rung only.
    pub flat: bool,
    /// Grid spacing for the μ column of the report; `None` skips it.
    pub report_spacing: Option<f64>,
    pub bohb: BohbConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            robot: "fmm_franka".into(),
            mode: ScoringMode::Task,
            seed: 0,
            score: ScoreSettings::default(),
            test: TaskId::ALL.to_vec(),
            test_episodes: 100,
            test_budget: 80,
            top_designs: 3,
            spacings: vec![0.2, 0.4 / 3.0, 0.1],
            flat: false,
            report_spacing: Some(0.2),
            bohb: BohbConfig {
                b_min: 24.0,
                b_max: 80.0,
                budget_unit: ScoringMode::Task.budget_unit().into(),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Optimizer(#[from] BohbError),
    #[error("testing {label}: {source}")]
    Test {
        label: String,
        #[source]
        source: ControllerError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The config as it is actually run: budget label from the mode, a single
    /// rung for flat manipulability runs.
    pub fn resolved(&self) -> Result<Self, ExperimentError> {
        let mut c = self.clone();
        c.bohb.budget_unit = c.mode.budget_unit().into();
        if c.flat {
            c.bohb.b_min = c.bohb.b_max;
        }
        c.bohb.validate()?;
        if c.score.train.is_empty() || c.score.validation.is_empty() || c.test.is_empty() {
            return Err(ExperimentError::Config("task sets must not be empty".into()));
        }
        if c.spacings.is_empty() || c.spacings.iter().any(|s| !(*s > 0.0)) {
            return Err(ExperimentError::Config("spacings must be positive".into()));
        }
        if c.mode == ScoringMode::Task && (c.bohb.b_min.round() as usize) < c.score.cem.population {
            return Err(ExperimentError::Config(format!(
                "b_min must cover one episode per candidate ({} episodes)",
                c.score.cem.population
            )));
        }
        Ok(c)
    }

    /// Grid spacing for a manipulability budget: the top rung gets the finest
    /// spacing, each rung below it the next coarser one.
    pub fn spacing_for(&self, budget: f64) -> f64 {
        let finest = self.spacings.len() - 1;
        if self.flat {
            return self.spacings[finest];
        }
        let below = ((self.bohb.b_max / budget).ln() / (self.bohb.eta as f64).ln()).round().max(0.0) as usize;
        self.spacings[finest - below.min(finest)]
    }
}

/// Evaluates one request in the configured scoring mode.
pub fn evaluate_request(config: &ExperimentConfig, base: &RobotDescription, req: &EvalRequest) -> Result<Evaluation, EvalFault> {
    match config.mode {
        ScoringMode::Task => {
            let budget = (req.budget.round() as usize).max(config.score.cem.population);
            let s = score_design(base, &req.omega, &config.score, budget, req.seed)?;
            Ok(Evaluation {
                score: s.score,
                rates: s.rates,
                feasible: s.feasible,
                gains: s.gains,
            })
        }
        ScoringMode::Manipulability => {
            let feasible = check_design_with(base, &req.omega, &config.score.feasibility)
                .map(|r| r.feasible())
                .unwrap_or(false);
            if !feasible {
                return Ok(Evaluation::default());
            }
            let robot = apply_design(base, &req.omega)?;
            let grid = WorkspaceGrid::standard(config.spacing_for(req.budget))?;
            Ok(Evaluation::scored(global_manipulability(&robot, &grid, req.seed).mu))
        }
    }
}

/// Tests one design on the held-out tasks with the shared test seed.
pub fn test_design(
    config: &ExperimentConfig,
    base: &RobotDescription,
    omega: &DesignParams,
    label: &str,
    design_id: Option<usize>,
) -> Result<TestRecord, ExperimentError> {
    let settings = ScoreSettings {
        validation: config.test.clone(),
        episodes_per_task: config.test_episodes,
        ..config.score.clone()
    };
    let seed = mix_seed(config.seed, 0x7E57);
    let s = score_design(base, omega, &settings, config.test_budget, seed).map_err(|source| ExperimentError::Test {
        label: label.into(),
        source,
    })?;
    let mu = match config.report_spacing {
        Some(spacing) => {
            let robot = apply_design(base, omega)?;
            let grid = WorkspaceGrid::standard(spacing).map_err(|e| ExperimentError::Config(e.to_string()))?;
            Some(global_manipulability(&robot, &grid, config.seed).mu)
        }
        None => None,
    };
    Ok(TestRecord {
        label: label.into(),
        design_id,
        omega: *omega,
        feasible: s.feasible,
        rates: s.rates,
        gains: s.gains,
        mu,
    })
}

/// Where an experiment writes its files.
#[derive(Debug, Clone)]
pub struct OutputDir(pub PathBuf);

impl OutputDir {
    pub fn history(&self) -> PathBuf {
        self.0.join(HISTORY_FILE)
    }
    pub fn tests(&self) -> PathBuf {
        self.0.join(TESTS_FILE)
    }
    pub fn config(&self) -> PathBuf {
        self.0.join(CONFIG_ECHO)
    }
}

/// Optimizes, tests the top designs plus the tabletop baseline and writes
/// `config.toml`, `history.jsonl`, `tests.jsonl` and the report files into
/// `out`. With `resume`, an existing history is replayed first.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, resume: bool) -> Result<RankingReport, ExperimentError> {
    let config = config.resolved()?;
    let dir = OutputDir(out.to_path_buf());
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| ExperimentError::Io { path, source }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    std::fs::write(dir.config(), config.to_toml()).map_err(io(&dir.config()))?;
    let base = load_robot(&config.robot)?;

    let replay = if resume && dir.history().exists() {
        read_history(dir.history())?
    } else {
        Vec::new()
    };
    let mut writer = HistoryWriter::rewrite(dir.history(), &replay)?;
    let evaluator = |req: &EvalRequest| evaluate_request(&config, &base, req);
    let result = optimize_with(&DesignSpace::default(), &evaluator, &config.bohb, config.seed, replay, &mut |r| {
        writer.append(r)
    })?;
    drop(writer);

    let mut tests = Vec::new();
    for (rank, rec) in rank_designs(&result.history).into_iter().take(config.top_designs).enumerate() {
        tests.push(test_design(&config, &base, &rec.omega, &format!("Design {}", rank + 1), Some(rec.design_id))?);
    }
    tests.push(test_design(&config, &base, &DesignParams::tabletop(), BASELINE_LABEL, None)?);
    write_tests(&dir.tests(), &tests)?;
    let report = build_report(&result.history, &tests);
    write_report(&report, out)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_follows_rungs() {
        let c = ExperimentConfig {
            bohb: BohbConfig {
                b_min: 1.0,
                b_max: 9.0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(c.spacing_for(9.0), 0.1);
        assert_eq!(c.spacing_for(3.0), 0.4 / 3.0);
        assert_eq!(c.spacing_for(1.0), 0.2);
        assert_eq!(c.spacing_for(1.0 / 9.0), 0.2);
        let flat = ExperimentConfig { flat: true, ..c };
        assert_eq!(flat.spacing_for(1.0), 0.1);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml()).unwrap(), c);
        let partial = ExperimentConfig::from_toml_str("mode = \"manipulability\"\n[bohb]\neta = 2\n").unwrap();
        assert_eq!(partial.mode, ScoringMode::Manipulability);
        assert_eq!(partial.bohb.eta, 2);
        assert_eq!(partial.bohb.gamma, 0.15);
        assert_eq!(partial.test_episodes, 100);
    }

    #[test]
    fn resolved_fixes_label_and_flat_budget() {
        let c = ExperimentConfig {
            mode: ScoringMode::Manipulability,
            flat: true,
            ..Default::default()
        }
        .resolved()
        .unwrap();
        assert_eq!(c.bohb.budget_unit, "grid_level");
        assert_eq!(c.bohb.b_min, c.bohb.b_max);
        let tiny = ExperimentConfig {
            bohb: BohbConfig {
                b_min: 2.0,
                ..ExperimentConfig::default().bohb
            },
            ..Default::default()
        };
        assert!(tiny.resolved().is_err());
    }
}
