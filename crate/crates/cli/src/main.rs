use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mount_codesign::bohb::read_history;
use mount_codesign::controller::{score_design, ScoreSettings};
use mount_codesign::experiment::{run_experiment, ExperimentConfig, OutputDir, CONFIG_ECHO};
use mount_codesign::feasibility::{check_design_with, CheckOptions};
use mount_codesign::manipulability::{export_heatmap, global_manipulability, WorkspaceGrid};
use mount_codesign::report::{build_report, read_tests, to_text, write_empty, write_report};
use mount_codesign::sim::TaskId;
use mount_codesign::{apply_design, load_robot, DesignParams};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_EMPTY: u8 = 3;

#[derive(Parser)]
#[command(name = "codesign", version, about = "Arm-mounting co-design for modular mobile manipulators")]
struct Cli {
    /// Worker threads for evaluations (all cores by default).
    #[arg(long, global = true, env = "CODESIGN_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment: optimize, test the top designs and write a report.
    Optimize {
        /// Experiment config (TOML); defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate every manipulability design at full resolution.
        #[arg(long)]
        flat: bool,
        /// Leave wall times out of the history so reruns are byte-identical.
        #[arg(long)]
        no_wall_time: bool,
    },
    /// Continue an interrupted experiment from its output directory.
    Resume {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Tune a controller for one design and report task success rates.
    Evaluate {
        #[command(flatten)]
        design: DesignArgs,
        /// Comma-separated task names.
        #[arg(long, value_delimiter = ',', default_value = "RandomGoal,Drawer")]
        tasks: Vec<TaskId>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Controller tuning budget in episodes.
        #[arg(long, default_value_t = 80)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Global manipulability of one design.
    Manipulability {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 0.1)]
        spacing: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-pose values as CSV.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Tipover check of one design; exits with 2 when it is infeasible.
    Feasibility {
        #[command(flatten)]
        design: DesignArgs,
        /// Add an external pulling torque (N·m) to the demand side.
        #[arg(long, num_args = 0..=1, default_missing_value = "30")]
        external_torque: Option<f64>,
        /// Payload at the EE in kg (the robot's own payload by default).
        #[arg(long)]
        payload: Option<f64>,
    },
    /// Rebuild the report of an experiment from its history and test results.
    Report {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        tests: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DesignArgs {
    /// Bundled robot name or description file.
    #[arg(long, default_value = "fmm_franka")]
    robot: String,
    /// Design as six comma-separated values or key=value pairs (tabletop by default).
    #[arg(long)]
    design: Option<DesignParams>,
}

impl DesignArgs {
    fn omega(&self) -> DesignParams {
        self.design.unwrap_or_else(DesignParams::tabletop)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Optimize {
            config,
            out,
            seed,
            flat,
            no_wall_time,
        } => {
            let mut c = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                c.seed = s;
            }
            c.flat |= flat;
            if no_wall_time {
                c.bohb.record_wall_time = false;
            }
            let report = run_experiment(&c, &out, false)?;
            print!("{}", to_text(&report));
            Ok(ExitCode::SUCCESS)
        }
        Command::Resume { out } => {
            let dir = OutputDir(out.clone());
            let c = ExperimentConfig::load(&dir.config()).with_context(|| format!("no {CONFIG_ECHO} in {}", out.display()))?;
            let report = run_experiment(&c, &out, true)?;
            print!("{}", to_text(&report));
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            design,
            tasks,
            episodes,
            budget,
            seed,
        } => {
            if tasks.is_empty() {
                bail!("no tasks given");
            }
            let base = load_robot(&design.robot)?;
            let settings = ScoreSettings {
                train: tasks.clone(),
                validation: tasks,
                episodes_per_task: episodes,
                ..Default::default()
            };
            let s = score_design(&base, &design.omega(), &settings, budget, seed)?;
            if !s.feasible {
                println!("design is infeasible: score 0");
            }
            for r in &s.rates {
                println!("{:<16}{:>4}/{:<4} {:.1}%", r.task.to_string(), r.successes, r.episodes, 100.0 * r.rate());
            }
            println!("score {:.4} over {} episodes", s.score, s.episodes);
            if let Some(g) = s.gains {
                println!("gains {g:?}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Manipulability {
            design,
            spacing,
            seed,
            heatmap,
        } => {
            let robot = apply_design(&load_robot(&design.robot)?, &design.omega())?;
            let field = global_manipulability(&robot, &WorkspaceGrid::standard(spacing)?, seed);
            println!("mu {:.6} ({} of {} poses reachable)", field.mu, field.reachable, field.values.len());
            if let Some(p) = heatmap {
                export_heatmap(&field, &p)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Feasibility {
            design,
            external_torque,
            payload,
        } => {
            let base = load_robot(&design.robot)?;
            let options = CheckOptions {
                external_torque,
                payload_kg: payload,
                ..Default::default()
            };
            let report = check_design_with(&base, &design.omega(), &options)?;
            println!("{report}");
            Ok(if report.feasible() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INFEASIBLE)
            })
        }
        Command::Report { history, tests, out } => report(&history, tests.as_deref(), &out),
    }
}

fn report(history: &Path, tests: Option<&Path>, out: &Path) -> Result<ExitCode> {
    let records = read_history(history)?;
    if records.is_empty() {
        write_empty(out)?;
        eprintln!("{} holds no evaluations", history.display());
        return Ok(ExitCode::from(EXIT_EMPTY));
    }
    let tests = match tests {
        Some(p) => read_tests(p)?,
        None => Vec::new(),
    };
    let report = build_report(&records, &tests);
    write_report(&report, out)?;
    print!("{}", to_text(&report));
    Ok(ExitCode::SUCCESS)
}
