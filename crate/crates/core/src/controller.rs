//! Whole-body controller and its gain search.
//!
//! The controller turns the EE path into base, torso and path-speed
//! commands: the base is pulled toward a standoff point behind a lookahead
//! target on the path and pushed away from nearby obstacles, the torso keeps
//! the arm at the height it has at home, and the EE advances along the path
//! only as fast as the arm keeps up. The arm itself is driven by the
//! simulator's IK step.
//!
//! [`tune_policy`] searches the gains by the cross-entropy method with an
//! episode budget, and [`score_design`] tunes and validates one design.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignParams;
use crate::feasibility::{check_design_with, CheckOptions, FeasibilityReport};
use crate::kinematics::link_transform;
use crate::robot::{apply_design, DriveType, RobotDescription};
use crate::sim::map::distance_to_footprint;
use crate::sim::{sample_episode, Command, Policy, SimError, SimState, Simulator, TaskConfig, TaskEpisode, TaskId, Twist2D};

pub const GAIN_DIM: usize = 6;
pub const GAIN_NAMES: [&str; GAIN_DIM] = ["base_gain", "standoff", "torso_gain", "speed_scale", "repulsion", "lookahead"];
pub const GAIN_BOUNDS: [(f64, f64); GAIN_DIM] = [(0.2, 3.0), (0.2, 1.0), (0.2, 5.0), (0.1, 1.0), (0.01, 2.0), (0.05, 1.0)];

/// Obstacles farther than this from the footprint do not push the base.
pub const REPULSION_RANGE: f64 = 0.5;
/// Offset of the tracked point ahead of a differential drive's axle.
pub const DIFF_DRIVE_LOOKAHEAD: f64 = 0.1;
const RESIDUAL_GAIN: f64 = 2.0;
const RESIDUAL_POSITION_SCALE: f64 = 0.1;
#[allow(clippy::approx_constant)]
const RESIDUAL_ROTATION_SCALE: f64 = 0.7854;
const VERTICAL_ERROR_WEIGHT: f64 = 4.0;
/// Path length over which the feedforward direction is measured, m.
const FEEDFORWARD_STEP: f64 = 0.05;
/// Below this horizontal distance to the target the base does not turn.
const TURN_DEADZONE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Base attraction, 1/s.
    pub base_gain: f64,
    /// Horizontal distance from the arm mount to the target the base aims for, m.
    pub standoff: f64,
    /// Torso height gain, 1/s.
    pub torso_gain: f64,
    /// Fraction of the nominal EE speed, in (0, 1].
    pub speed_scale: f64,
    pub repulsion: f64,
    /// How far ahead on the EE path the base aims, m.
    pub lookahead: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            base_gain: 1.2,
            standoff: 0.7,
            torso_gain: 2.0,
            speed_scale: 0.8,
            repulsion: 0.4,
            lookahead: 0.4,
        }
    }
}

impl ControllerGains {
    pub fn from_array(v: [f64; GAIN_DIM]) -> Self {
        Self {
            base_gain: v[0],
            standoff: 0.7,
            torso_gain: v[2],
            speed_scale: v[3],
            repulsion: v[4],
            lookahead: v[5],
        }
    }

    pub fn as_array(&self) -> [f64; GAIN_DIM] {
        [self.base_gain, self.standoff, self.torso_gain, self.speed_scale, self.repulsion, self.lookahead]
    }

    pub fn is_valid(&self) -> bool {
        self.as_array()
            .iter()
            .zip(GAIN_BOUNDS)
            .all(|(v, (lo, hi))| v.is_finite() && *v > 0.0 && *v >= lo && *v <= hi)
    }

    fn clamped(v: [f64; GAIN_DIM]) -> Self {
        let mut out = v;
        for (x, (lo, hi)) in out.iter_mut().zip(GAIN_BOUNDS) {
            *x = x.clamp(lo, hi);
        }
        Self::from_array(out)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Arm geometry at the home configuration, relative to the arm mount.
#[derive(Debug, Clone, Copy)]
struct HomeReach {
    bearing: f64,
    height: f64,
}

fn home_reach(robot: &RobotDescription, anchor: usize, ee: usize) -> HomeReach {
    let q = robot.home();
    let a = link_transform(robot, q, anchor).translation.vector;
    let e = link_transform(robot, q, ee).translation.vector;
    let d = e - a;
    HomeReach {
        bearing: if d.x.hypot(d.y) > 1e-9 { d.y.atan2(d.x) } else { 0.0 },
        height: d.z,
    }
}

/// One tick of whole-body commands for `state` in `sim`.
///
/// The result depends only on its arguments.
pub fn control_step(state: &SimState, sim: &Simulator<'_>, gains: &ControllerGains) -> Command {
    let robot = sim.robot();
    let ee_link = robot.link_index(robot.ee_frame()).expect("validated ee frame");
    let reach = home_reach(robot, sim.anchor_link(), ee_link);
    control_with(state, sim, gains, &reach)
}

fn control_with(state: &SimState, sim: &Simulator<'_>, gains: &ControllerGains, reach: &HomeReach) -> Command {
    let robot = sim.robot();
    let traj = sim.trajectory();
    let remaining = traj.length() - state.progress;
    if remaining <= 1e-9 && state.position_error <= 1e-9 && state.orientation_error <= 1e-9 {
        return Command::default();
    }
    let residual = (state.position_error / RESIDUAL_POSITION_SCALE).max(state.orientation_error / RESIDUAL_ROTATION_SCALE);
    let throttle = (1.0 - RESIDUAL_GAIN * residual).max(0.0);
    // a lagging arm pulls the aim point back toward its current target
    let target = traj.sample(state.progress + throttle * gains.lookahead);
    let base_iso = state.base.to_isometry();
    let anchor = base_iso * Point3::from(link_transform(robot, &state.q, sim.anchor_link()).translation.vector);

    // attraction toward the standoff band around the aim point
    let to_target = Vector2::new(target.position.x - anchor.x, target.position.y - anchor.y);
    let dist = to_target.norm();
    let mut v = Vector2::zeros();
    if dist > 1e-9 {
        let dir = to_target / dist;
        if dist > gains.standoff {
            v += dir * (gains.base_gain * (dist - gains.standoff));
        } else if dist < 0.5 * gains.standoff {
            v -= dir * (gains.base_gain * (0.5 * gains.standoff - dist));
        }
    }
    // the arm rides on the base, so moving the base reduces what the arm
    // misses; the path's own horizontal velocity is fed forward
    let now = traj.sample(state.progress);
    let ahead = traj.sample(state.progress + FEEDFORWARD_STEP);
    let advance = (traj.length() - state.progress).min(FEEDFORWARD_STEP);
    if advance > 1e-9 {
        let tangent = Vector2::new(ahead.position.x - now.position.x, ahead.position.y - now.position.y) / advance;
        v += tangent * (traj.speed() * gains.speed_scale * throttle);
    }
    v += Vector2::new(now.position.x - state.ee.position.x, now.position.y - state.ee.position.y) * gains.base_gain;

    // repulsion with a swirl so obstacles straight ahead are passed around
    let half = robot.footprint().half_extents;
    let center = Vector2::new(state.base.x, state.base.y);
    let mut cells: Vec<[f64; 2]> = sim.map().occupied_near(&state.base, half, REPULSION_RANGE);
    cells.extend_from_slice(sim.door_cells(state.progress));
    // nearest occupied cell only, so wide obstacles do not push harder
    let nearest = cells
        .iter()
        .map(|c| (distance_to_footprint(&state.base, half, *c), c))
        .filter(|(d, _)| *d < REPULSION_RANGE)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let mut push = Vector2::zeros();
    if let Some((d, c)) = nearest {
        let away = center - Vector2::new(c[0], c[1]);
        let n = away.norm();
        if n > 1e-9 {
            push = away / n * (gains.repulsion * (1.0 / d.max(0.02) - 1.0 / REPULSION_RANGE));
        }
    }
    if push.norm() > 0.0 {
        let perp = Vector2::new(-push.y, push.x);
        let side = if perp.dot(&v) < 0.0 { -1.0 } else { 1.0 };
        v += push + perp * side;
    }

    let vmax = robot.max_base_speed();
    if v.norm() > vmax {
        v *= vmax / v.norm();
    }
    let (s, c) = state.base.yaw.sin_cos();
    let wmax = robot.max_base_yaw_rate();
    let base = match robot.drive() {
        DriveType::Omnidirectional => {
            let omega = if dist > TURN_DEADZONE {
                let bearing = to_target.y.atan2(to_target.x);
                throttle * gains.base_gain * wrap_angle(bearing - (state.base.yaw + reach.bearing))
            } else {
                0.0
            };
            Twist2D {
                vx: c * v.x + s * v.y,
                vy: -s * v.x + c * v.y,
                omega: omega.clamp(-wmax, wmax),
            }
        }
        DriveType::Differential => Twist2D {
            vx: c * v.x + s * v.y,
            vy: 0.0,
            omega: ((-s * v.x + c * v.y) / DIFF_DRIVE_LOOKAHEAD).clamp(-wmax, wmax),
        },
    };

    let torso_velocity = robot.torso_dofs().first().map_or(0.0, |d| {
        let lim = robot.dof_limits(*d);
        // vertical EE error first, then drift toward the arm's home height
        let want = VERTICAL_ERROR_WEIGHT * (now.position.z - state.ee.position.z) + target.position.z - (anchor.z + reach.height);
        (gains.torso_gain * want).clamp(-lim.velocity, lim.velocity)
    });

    let ee_speed = if remaining > 1e-9 {
        traj.speed() * gains.speed_scale * throttle
    } else {
        0.0
    };
    Command {
        base,
        torso_velocity,
        ee_speed,
    }
}

/// The controller as a [`Policy`], with home geometry cached per robot.
#[derive(Debug, Clone)]
pub struct GainPolicy {
    pub gains: ControllerGains,
}

impl Policy for GainPolicy {
    fn command(&self, state: &SimState, sim: &Simulator<'_>) -> Command {
        control_step(state, sim, &self.gains)
    }
}

struct CachedPolicy {
    gains: ControllerGains,
    reach: HomeReach,
}

impl Policy for CachedPolicy {
    fn command(&self, state: &SimState, sim: &Simulator<'_>) -> Command {
        control_with(state, sim, &self.gains, &self.reach)
    }
}

fn run_with_gains(robot: &RobotDescription, episode: &TaskEpisode, gains: &ControllerGains) -> Result<crate::sim::EpisodeResult, SimError> {
    let sim = Simulator::new(robot, episode)?;
    let ee = robot.link_index(robot.ee_frame()).expect("validated ee frame");
    let policy = CachedPolicy {
        gains: *gains,
        reach: home_reach(robot, sim.anchor_link(), ee),
    };
    Ok(sim.run(&policy))
}

// ---------------------------------------------------------------------------
// Gain search

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("budget {budget} is below the population size {population}")]
    BudgetTooSmall { budget: usize, population: usize },
    #[error("no training tasks")]
    NoTasks,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemSettings {
    pub population: usize,
    /// Fraction of the population refit as elites.
    pub elite_fraction: f64,
    /// Initial standard deviation as a fraction of each gain's range.
    pub initial_std: f64,
    pub max_iterations: usize,
    /// Episodes per candidate when the budget allows it.
    pub episodes_per_candidate: usize,
    pub initial: ControllerGains,
}

impl Default for CemSettings {
    fn default() -> Self {
        Self {
            population: 8,
            elite_fraction: 0.25,
            initial_std: 0.3,
            max_iterations: 8,
            episodes_per_candidate: 3,
            initial: ControllerGains::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedPolicy {
    pub gains: ControllerGains,
    /// Episodes simulated during tuning.
    pub budget_used: usize,
    /// Mean training fitness of the returned gains.
    pub fitness: f64,
    pub iterations: usize,
}

/// How a budget splits into CEM iterations and episodes per candidate.
///
/// Candidates get `episodes_per_candidate` episodes when the budget allows,
/// the budget then buys up to `max_iterations` iterations, and whatever is
/// left goes to more episodes per candidate. Never exceeds the budget.
pub fn cem_schedule(budget: usize, s: &CemSettings) -> Result<(usize, usize), ControllerError> {
    let pop = s.population.max(1);
    if budget < pop {
        return Err(ControllerError::BudgetTooSmall { budget, population: pop });
    }
    let per = s.episodes_per_candidate.max(1).min(budget / pop);
    let iterations = (budget / (pop * per)).clamp(1, s.max_iterations.max(1));
    let per = budget / (iterations * pop);
    Ok((iterations, per))
}

/// Derives an independent stream seed from a base seed and a tag.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Episodes `0..count`, cycling through `tasks`, with seeds derived from `seed`.
pub fn episode_set(tasks: &[TaskId], count: usize, seed: u64, cfg: &TaskConfig) -> Result<Vec<TaskEpisode>, SimError> {
    (0..count)
        .map(|i| sample_episode(tasks[i % tasks.len()], cfg, mix_seed(seed, i as u64)))
        .collect()
}

/// Success counts fully; a failed episode earns a quarter of its progress.
pub fn episode_fitness(r: &crate::sim::EpisodeResult) -> f64 {
    if r.success {
        1.0
    } else {
        0.25 * r.progress
    }
}

/// Mean fitness of `gains` over `episodes`.
pub fn evaluate_gains(robot: &RobotDescription, episodes: &[TaskEpisode], gains: &ControllerGains) -> Result<f64, SimError> {
    let mut total = 0.0;
    for e in episodes {
        total += episode_fitness(&run_with_gains(robot, e, gains)?);
    }
    Ok(total / episodes.len().max(1) as f64)
}

/// Cross-entropy search over the controller gains.
///
/// All candidates of all iterations see the same training episodes, and the
/// first candidate is the initial mean, so the result never scores below the
/// initial gains on those episodes.
pub fn tune_policy(
    robot: &RobotDescription,
    tasks: &[TaskId],
    budget: usize,
    seed: u64,
    cfg: &TaskConfig,
    cem: &CemSettings,
) -> Result<TunedPolicy, ControllerError> {
    if tasks.is_empty() {
        return Err(ControllerError::NoTasks);
    }
    let (iterations, per) = cem_schedule(budget, cem)?;
    let episodes = episode_set(tasks, per, mix_seed(seed, 0x7EA1), cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = cem.initial.as_array();
    let mut std: [f64; GAIN_DIM] = std::array::from_fn(|k| cem.initial_std * (GAIN_BOUNDS[k].1 - GAIN_BOUNDS[k].0));
    let elites = ((cem.population as f64 * cem.elite_fraction).ceil() as usize).clamp(1, cem.population);
    let mut best: Option<(ControllerGains, f64)> = None;
    let mut used = 0;
    for it in 0..iterations {
        let candidates: Vec<ControllerGains> = (0..cem.population)
            .map(|k| {
                if it == 0 && k == 0 {
                    ControllerGains::clamped(mean)
                } else {
                    let v: [f64; GAIN_DIM] = std::array::from_fn(|d| {
                        let n = Normal::new(mean[d], std[d].max(1e-12)).expect("finite std");
                        n.sample(&mut rng)
                    });
                    ControllerGains::clamped(v)
                }
            })
            .collect();
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|g| evaluate_gains(robot, &episodes, g))
            .collect::<Result<_, _>>()?;
        used += candidates.len() * episodes.len();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
        if best.as_ref().is_none_or(|(_, f)| scores[order[0]] > *f) {
            best = Some((candidates[order[0]], scores[order[0]]));
        }
        let top = &order[..elites];
        for d in 0..GAIN_DIM {
            let range = GAIN_BOUNDS[d].1 - GAIN_BOUNDS[d].0;
            let m = top.iter().map(|i| candidates[*i].as_array()[d]).sum::<f64>() / top.len() as f64;
            let var = top.iter().map(|i| (candidates[*i].as_array()[d] - m).powi(2)).sum::<f64>() / top.len() as f64;
            mean[d] = m;
            std[d] = var.sqrt().max(0.02 * range);
        }
    }
    let (gains, fitness) = best.expect("at least one iteration");
    Ok(TunedPolicy {
        gains,
        budget_used: used,
        fitness,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Design scoring

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreSettings {
    pub train: Vec<TaskId>,
    pub validation: Vec<TaskId>,
    /// Fresh episodes per validation task.
    pub episodes_per_task: usize,
    pub tasks: TaskConfig,
    pub cem: CemSettings,
    pub feasibility: CheckOptions,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        Self {
            train: vec![TaskId::RandomGoal, TaskId::Drawer],
            validation: vec![TaskId::RandomGoal, TaskId::Drawer],
            episodes_per_task: 50,
            tasks: TaskConfig::default(),
            cem: CemSettings::default(),
            feasibility: CheckOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRate {
    pub task: TaskId,
    pub successes: usize,
    pub episodes: usize,
}

impl TaskRate {
    pub fn rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignScore {
    pub score: f64,
    pub rates: Vec<TaskRate>,
    pub feasible: bool,
    pub gains: Option<ControllerGains>,
    /// Episodes simulated in tuning plus validation.
    pub episodes: usize,
}

/// Unweighted mean of per-task success rates.
pub fn mean_rate(rates: &[TaskRate]) -> f64 {
    if rates.is_empty() {
        0.0
    } else {
        rates.iter().map(TaskRate::rate).sum::<f64>() / rates.len() as f64
    }
}

/// Success counts of `gains` on `per_task` fresh episodes of each task.
pub fn evaluate_policy(
    robot: &RobotDescription,
    gains: &ControllerGains,
    tasks: &[TaskId],
    per_task: usize,
    seed: u64,
    cfg: &TaskConfig,
) -> Result<Vec<TaskRate>, SimError> {
    tasks
        .iter()
        .map(|task| {
            let stream = mix_seed(seed, 0xE7A1 + *task as u64);
            let results: Vec<bool> = (0..per_task)
                .into_par_iter()
                .map(|i| {
                    let ep = sample_episode(*task, cfg, mix_seed(stream, i as u64))?;
                    Ok(run_with_gains(robot, &ep, gains)?.success)
                })
                .collect::<Result<_, SimError>>()?;
            Ok(TaskRate {
                task: *task,
                successes: results.iter().filter(|s| **s).count(),
                episodes: per_task,
            })
        })
        .collect()
}

/// Applies `omega`, tunes a controller with `budget` episodes and returns
/// the mean validation success rate. Designs that fail the tipover check
/// score 0 without simulation.
pub fn score_design(
    base: &RobotDescription,
    omega: &DesignParams,
    settings: &ScoreSettings,
    budget: usize,
    seed: u64,
) -> Result<DesignScore, ControllerError> {
    let robot = apply_design(base, omega).map_err(|e| SimError::Robot(e.to_string()))?;
    let report: Result<FeasibilityReport, _> = check_design_with(base, omega, &settings.feasibility);
    if !report.map(|r| r.feasible()).unwrap_or(false) {
        return Ok(DesignScore {
            score: 0.0,
            rates: settings
                .validation
                .iter()
                .map(|t| TaskRate {
                    task: *t,
                    successes: 0,
                    episodes: 0,
                })
                .collect(),
            feasible: false,
            gains: None,
            episodes: 0,
        });
    }
    let tuned = tune_policy(&robot, &settings.train, budget, seed, &settings.tasks, &settings.cem)?;
    let rates = evaluate_policy(
        &robot,
        &tuned.gains,
        &settings.validation,
        settings.episodes_per_task,
        mix_seed(seed, 0x5A11),
        &settings.tasks,
    )?;
    let episodes = tuned.budget_used + rates.iter().map(|r| r.episodes).sum::<usize>();
    Ok(DesignScore {
        score: mean_rate(&rates),
        rates,
        feasible: true,
        gains: Some(tuned.gains),
        episodes,
    })
}
