use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::map::{footprint_overlaps_rect, OccupancyMap, Rect};
use super::planner::plan_ee_path;
use super::trajectory::{
    articulated_trajectory, grasp_orientation, ArticulatedKind, ArticulationParams, EETrajectory, HingeSide,
    ObjectFrame, TrajectoryTag, BOTTOM_GRASP_PITCH, DEFAULT_EE_SPEED, TOP_GRASP_PITCH,
};
use super::{BasePose, SimError};
use crate::kinematics::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    RandomGoal,
    RandomObstacle,
    PickPlace,
    Door,
    Drawer,
    Cabinet,
}

impl TaskId {
    pub const ALL: [TaskId; 6] = [
        TaskId::RandomObstacle,
        TaskId::RandomGoal,
        TaskId::PickPlace,
        TaskId::Door,
        TaskId::Drawer,
        TaskId::Cabinet,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskId::RandomGoal => "RandomGoal",
            TaskId::RandomObstacle => "RandomObstacle",
            TaskId::PickPlace => "PickPlace",
            TaskId::Door => "Door",
            TaskId::Drawer => "Drawer",
            TaskId::Cabinet => "Cabinet",
        }
    }

    /// Height band of the task's key pose, if it has one.
    pub fn height_band(&self) -> Option<(f64, f64)> {
        match self {
            TaskId::RandomGoal | TaskId::RandomObstacle => Some((0.1, 1.7)),
            TaskId::Drawer => Some((0.4, 1.2)),
            TaskId::Cabinet => Some((0.4, 1.7)),
            TaskId::PickPlace | TaskId::Door => None,
        }
    }

    fn stream(&self) -> u64 {
        *self as u64 + 1
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "randomgoal" | "rg" => TaskId::RandomGoal,
            "randomobstacle" | "ro" => TaskId::RandomObstacle,
            "pickplace" | "pickandplace" | "pp" => TaskId::PickPlace,
            "door" | "opendoor" => TaskId::Door,
            "drawer" | "opendrawer" => TaskId::Drawer,
            "cabinet" | "opencabinet" => TaskId::Cabinet,
            _ => return Err(SimError::UnknownTask(s.to_string())),
        })
    }
}

/// Parses a comma-separated task list such as `"RandomGoal,Drawer"`.
pub fn parse_task_list(s: &str) -> Result<Vec<TaskId>, SimError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            out.extend(TaskId::ALL);
        } else {
            out.push(part.parse()?);
        }
    }
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub translation: f64,
    pub rotation: f64,
}

impl Default for Thresholds {
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        Self {
            translation: 0.1,
            rotation: 0.7854,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub map_half_extent: f64,
    pub cell_size: f64,
    /// Lattice spacing of obstacles in RandomObstacle maps.
    pub obstacle_spacing: f64,
    pub goal_distance: (f64, f64),
    pub obstacle_goal_distance: (f64, f64),
    pub object_distance: (f64, f64),
    /// Height margin at each end of a band where grasps turn vertical.
    pub edge_band: f64,
    pub mid_pitch: f64,
    pub pregrasp: f64,
    pub drawer_pull: f64,
    pub cabinet_radius: f64,
    pub door_radius: f64,
    pub door_gap: f64,
    pub opening_angle: f64,
    pub obstacle_in_path: bool,
    pub ee_speed: f64,
    pub thresholds: Thresholds,
    pub horizon: usize,
    /// Clearance kept around the base at the start.
    pub start_clearance: f64,
    pub planner_inflation: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            map_half_extent: 6.0,
            cell_size: 0.1,
            obstacle_spacing: 1.7,
            goal_distance: (1.0, 3.0),
            obstacle_goal_distance: (3.0, 5.0),
            object_distance: (1.5, 2.5),
            edge_band: 0.2,
            mid_pitch: FRAC_PI_4,
            pregrasp: 0.25,
            drawer_pull: 0.3,
            cabinet_radius: 0.4,
            door_radius: 0.8,
            door_gap: 0.9,
            opening_angle: FRAC_PI_2,
            obstacle_in_path: true,
            ee_speed: DEFAULT_EE_SPEED,
            thresholds: Thresholds::default(),
            horizon: 1000,
            start_clearance: 0.6,
            planner_inflation: 0.4,
        }
    }
}

/// Door leaf filling the door gap until the EE finishes the opening arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoorLeaf {
    pub rect: Rect,
    /// Index of the episode waypoint at which the door counts as open.
    pub open_at_waypoint: usize,
}

/// One sampled task instance. The EE trajectory starts wherever the robot's
/// EE is at the start; `trajectory` holds the waypoints after that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEpisode {
    pub task: TaskId,
    pub seed: u64,
    pub map: OccupancyMap,
    pub start: BasePose,
    pub trajectory: EETrajectory,
    pub thresholds: Thresholds,
    pub horizon: usize,
    /// Height of the goal, handle or object that defines the task.
    pub key_height: f64,
    pub door: Option<DoorLeaf>,
}

impl TaskEpisode {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("episodes serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::BadEpisode(e.to_string()))
    }
}

/// Robot footprint used to keep sampled layouts clear of the start pose.
const START_HALF: [f64; 2] = [0.5, 0.42];

struct Sampler<'a> {
    rng: ChaCha8Rng,
    cfg: &'a TaskConfig,
}

impl Sampler<'_> {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn angle(&mut self) -> f64 {
        self.uniform(-PI, PI)
    }

    fn start(&mut self) -> BasePose {
        BasePose {
            x: self.uniform(-0.5, 0.5),
            y: self.uniform(-0.5, 0.5),
            yaw: self.angle(),
        }
    }

    /// Pitch for a goal at height `z` in `band`: vertical grasps at the edges.
    fn goal_pitch(&mut self, z: f64, band: (f64, f64)) -> f64 {
        if z >= band.1 - self.cfg.edge_band {
            TOP_GRASP_PITCH
        } else if z <= band.0 + self.cfg.edge_band {
            BOTTOM_GRASP_PITCH
        } else {
            self.uniform(-self.cfg.mid_pitch, self.cfg.mid_pitch)
        }
    }

    fn goal_pose(&mut self, center: [f64; 2], dist: (f64, f64)) -> Pose {
        let band = TaskId::RandomGoal.height_band().unwrap();
        let heading = self.angle();
        let d = self.uniform(dist.0, dist.1);
        let z = self.uniform(band.0, band.1);
        let pitch = self.goal_pitch(z, band);
        let yaw = self.angle();
        Pose::new(
            Vector3::new(center[0] + d * heading.cos(), center[1] + d * heading.sin(), z),
            grasp_orientation(yaw, pitch),
        )
    }

    fn map(&self, center: [f64; 2], obstacles: Vec<Rect>) -> Result<OccupancyMap, SimError> {
        OccupancyMap::square(center, self.cfg.map_half_extent, self.cfg.cell_size, obstacles)
    }

    /// Object location `d` from the start, facing back toward it along the
    /// nearest axis direction so its box stays axis-aligned.
    fn object_frame(&mut self, start: &BasePose, z: f64) -> ObjectFrame {
        let heading = self.angle();
        let d = self.uniform(self.cfg.object_distance.0, self.cfg.object_distance.1);
        let back = heading + PI;
        let yaw = (back / FRAC_PI_2).round() * FRAC_PI_2;
        ObjectFrame {
            handle: Vector3::new(start.x + d * heading.cos(), start.y + d * heading.sin(), z),
            yaw,
        }
    }

    /// A low box roughly midway between `from` and `to`, clear of `keep_out`.
    fn obstacle_between(&mut self, from: [f64; 2], to: [f64; 2], keep_out: &[Rect], start: &BasePose) -> Option<Rect> {
        for _ in 0..20 {
            let t = self.uniform(0.4, 0.6);
            let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
            let len = dx.hypot(dy).max(1e-9);
            let off = self.uniform(-0.25, 0.25);
            let c = [from[0] + t * dx - off * dy / len, from[1] + t * dy + off * dx / len];
            let half = self.uniform(0.1, 0.2);
            let height = self.uniform(0.1, 0.35);
            let r = Rect::centered(c, [half, half], height);
            let clear_start = !footprint_overlaps_rect(start, [START_HALF[0] + 0.1, START_HALF[1] + 0.1], &r);
            if clear_start && keep_out.iter().all(|k| !k.expanded(0.3).overlaps(&r)) {
                return Some(r);
            }
        }
        None
    }
}

fn handle_box(frame: &ObjectFrame, width: f64, depth: f64, height: f64) -> Rect {
    // box behind the handle plane, handle sticking out 6 cm
    let n = frame.normal();
    let l = frame.lateral();
    let face = frame.handle - n * 0.06;
    let corners = [
        face + l * (width / 2.0),
        face - l * (width / 2.0),
        face - n * depth + l * (width / 2.0),
        face - n * depth - l * (width / 2.0),
    ];
    let (x0, x1) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.x), a.1.max(p.x)));
    let (y0, y1) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.y), a.1.max(p.y)));
    Rect::new([x0, y0], [x1, y1], height)
}

/// Draws one deterministic episode of `task`.
pub fn sample_episode(task: TaskId, cfg: &TaskConfig, seed: u64) -> Result<TaskEpisode, SimError> {
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        cfg,
    };
    s.rng.set_stream(task.stream());
    let start = s.start();
    let center = [start.x, start.y];
    let speed = cfg.ee_speed;
    let episode = |map, trajectory, key_height, door| TaskEpisode {
        task,
        seed,
        map,
        start,
        trajectory,
        thresholds: cfg.thresholds,
        horizon: cfg.horizon,
        key_height,
        door,
    };
    match task {
        TaskId::RandomGoal => {
            let goal = s.goal_pose(center, cfg.goal_distance);
            let traj = EETrajectory::new(vec![goal], speed, TrajectoryTag::Line)?;
            Ok(episode(s.map(center, vec![])?, traj, goal.position.z, None))
        }
        TaskId::RandomObstacle => {
            for _ in 0..50 {
                let goal = s.goal_pose(center, cfg.obstacle_goal_distance);
                let entry = [start.x + 0.6 * start.yaw.cos(), start.y + 0.6 * start.yaw.sin()];
                let mut obstacles = Vec::new();
                let sp = cfg.obstacle_spacing;
                let n = (cfg.map_half_extent / sp).ceil() as i64;
                for gi in -n..=n {
                    for gj in -n..=n {
                        let c = [
                            center[0] + gi as f64 * sp + s.uniform(-0.3, 0.3),
                            center[1] + gj as f64 * sp + s.uniform(-0.3, 0.3),
                        ];
                        let half = [s.uniform(0.15, 0.35), s.uniform(0.15, 0.35)];
                        let height = s.uniform(0.3, 1.2);
                        let r = Rect::centered(c, half, height);
                        let near_start = r.expanded(cfg.start_clearance).overlaps(&Rect::centered(center, START_HALF, 1.0));
                        let near_goal = r.expanded(0.6).overlaps(&Rect::centered(
                            [goal.position.x, goal.position.y],
                            [0.01, 0.01],
                            1.0,
                        ));
                        let near_entry = r.expanded(0.3).overlaps(&Rect::centered(entry, [0.01, 0.01], 1.0));
                        if !near_start && !near_goal && !near_entry {
                            obstacles.push(r);
                        }
                    }
                }
                let map = s.map(center, obstacles)?;
                let entry_pose = Pose::new(Vector3::new(entry[0], entry[1], goal.position.z.max(0.6)), goal.orientation);
                match plan_ee_path(&map, &entry_pose, &goal, cfg.planner_inflation, speed) {
                    Ok(traj) => return Ok(episode(map, traj, goal.position.z, None)),
                    Err(SimError::NoPath) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(SimError::NoPath)
        }
        TaskId::Drawer | TaskId::Cabinet => {
            let band = task.height_band().unwrap();
            let z = s.uniform(band.0, band.1);
            let frame = s.object_frame(&start, z);
            let (kind, width, top) = if task == TaskId::Drawer {
                (ArticulatedKind::Drawer, 0.6, z + 0.15)
            } else {
                (ArticulatedKind::Cabinet, cfg.cabinet_radius + 0.1, z + 0.3)
            };
            let hinge = if s.rng.random::<bool>() { HingeSide::Left } else { HingeSide::Right };
            let params = ArticulationParams {
                pull_length: cfg.drawer_pull,
                radius: cfg.cabinet_radius,
                opening_angle: cfg.opening_angle,
                hinge,
            };
            let mut body = handle_box(&frame, width, 0.5, top);
            if task == TaskId::Cabinet {
                // the leaf spans from the handle to the hinge
                let side = if hinge == HingeSide::Left { 1.0 } else { -1.0 };
                let shifted = ObjectFrame {
                    handle: frame.handle + frame.lateral() * (side * cfg.cabinet_radius / 2.0),
                    yaw: frame.yaw,
                };
                body = handle_box(&shifted, width + 0.1, 0.5, top);
            }
            let motion = articulated_trajectory(kind, &frame, &params, speed)?;
            let pre = Pose::new(frame.handle + frame.normal() * cfg.pregrasp, frame.grasp());
            let mut waypoints = vec![pre];
            waypoints.extend_from_slice(motion.waypoints());
            let mut obstacles = vec![body];
            if cfg.obstacle_in_path {
                if let Some(o) = s.obstacle_between(center, [pre.position.x, pre.position.y], &[body], &start) {
                    obstacles.push(o);
                }
            }
            let traj = EETrajectory::new(waypoints, speed, motion.tag())?;
            Ok(episode(s.map(center, obstacles)?, traj, z, None))
        }
        TaskId::PickPlace => {
            let pick_h = s.uniform(0.4, 0.9);
            let frame = s.object_frame(&start, pick_h);
            let n = frame.normal();
            // table whose near edge is 0.15 m in front of the object
            let table_center = frame.handle - n * 0.15;
            let pick_table = Rect::centered([table_center.x, table_center.y], [0.3, 0.3], pick_h);
            let mut place_table = pick_table;
            let mut place_center = table_center;
            for _ in 0..20 {
                let heading = s.angle();
                let d = s.uniform(1.5, 2.5);
                let c = table_center + Vector3::new(d * heading.cos(), d * heading.sin(), 0.0);
                let h = s.uniform(0.4, 0.9);
                let cand = Rect::centered([c.x, c.y], [0.3, 0.3], h);
                let clear_start = !footprint_overlaps_rect(&start, [START_HALF[0] + 0.3, START_HALF[1] + 0.3], &cand);
                if clear_start && !cand.expanded(0.8).overlaps(&pick_table) {
                    place_table = cand;
                    place_center = Vector3::new(c.x, c.y, h);
                    break;
                }
            }
            let down = |yaw: f64| grasp_orientation(yaw, BOTTOM_GRASP_PITCH);
            let yaw = frame.yaw + PI;
            let object = Vector3::new(frame.handle.x, frame.handle.y, pick_h + 0.08);
            let place = Vector3::new(place_center.x, place_center.y, place_table.height + 0.08);
            let lift = Vector3::z() * 0.2;
            let waypoints = vec![
                Pose::new(object + lift, down(yaw)),
                Pose::new(object, down(yaw)),
                Pose::new(object + lift, down(yaw)),
                Pose::new(place + lift, down(yaw)),
                Pose::new(place, down(yaw)),
            ];
            let mut obstacles = vec![pick_table];
            if place_table != pick_table {
                obstacles.push(place_table);
            }
            if cfg.obstacle_in_path {
                if let Some(o) = s.obstacle_between(center, [frame.handle.x, frame.handle.y], &obstacles.clone(), &start) {
                    obstacles.push(o);
                }
            }
            let traj = EETrajectory::new(waypoints, speed, TrajectoryTag::PickPlace)?;
            Ok(episode(s.map(center, obstacles)?, traj, pick_h, None))
        }
        TaskId::Door => {
            let z = s.uniform(0.95, 1.05);
            let frame = s.object_frame(&start, z);
            let hinge = if s.rng.random::<bool>() { HingeSide::Left } else { HingeSide::Right };
            let side = if hinge == HingeSide::Left { 1.0 } else { -1.0 };
            let n = frame.normal();
            let l = frame.lateral();
            // gap centered between the hinge and a point just past the handle
            let gap_center = frame.handle + l * (side * (cfg.door_radius - cfg.door_gap / 2.0 + 0.05)) - n * 0.06;
            let half_gap = cfg.door_gap / 2.0;
            let far = 2.0 * cfg.map_half_extent;
            let wall = |from: f64, to: f64| -> Rect {
                let a = gap_center + l * from;
                let b = gap_center + l * to - n * 0.1;
                Rect::new([a.x.min(b.x), a.y.min(b.y)], [a.x.max(b.x), a.y.max(b.y)], 2.0)
            };
            let walls = vec![wall(half_gap, far), wall(-far, -half_gap)];
            let leaf = wall(-half_gap, half_gap);
            let params = ArticulationParams {
                radius: cfg.door_radius,
                opening_angle: cfg.opening_angle,
                hinge,
                ..ArticulationParams::default()
            };
            let arc = articulated_trajectory(ArticulatedKind::Door, &frame, &params, speed)?;
            let pre = Pose::new(frame.handle + n * cfg.pregrasp, frame.grasp());
            let mut waypoints = vec![pre];
            waypoints.extend_from_slice(arc.waypoints());
            let open_at = waypoints.len() - 1;
            let through = grasp_orientation(frame.yaw + PI, 0.0);
            let before = gap_center + n * 0.6;
            let after = gap_center - n * 1.2;
            waypoints.push(Pose::new(Vector3::new(before.x, before.y, z), through));
            waypoints.push(Pose::new(Vector3::new(after.x, after.y, z), through));
            let mut obstacles = walls;
            if cfg.obstacle_in_path {
                if let Some(o) = s.obstacle_between(center, [pre.position.x, pre.position.y], &obstacles.clone(), &start) {
                    obstacles.push(o);
                }
            }
            let traj = EETrajectory::new(waypoints, speed, TrajectoryTag::Door)?;
            Ok(episode(
                s.map(center, obstacles)?,
                traj,
                z,
                Some(DoorLeaf {
                    rect: leaf,
                    open_at_waypoint: open_at,
                }),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_task_names() {
        assert_eq!("random_goal".parse::<TaskId>().unwrap(), TaskId::RandomGoal);
        assert_eq!("Drawer".parse::<TaskId>().unwrap(), TaskId::Drawer);
        assert_eq!("PP".parse::<TaskId>().unwrap(), TaskId::PickPlace);
        assert!(matches!("Fly".parse::<TaskId>(), Err(SimError::UnknownTask(_))));
        assert_eq!(parse_task_list("rg, drawer").unwrap(), vec![TaskId::RandomGoal, TaskId::Drawer]);
        assert_eq!(parse_task_list("all").unwrap().len(), 6);
    }

    #[test]
    fn every_task_samples_with_a_clear_start() {
        let cfg = TaskConfig::default();
        for task in TaskId::ALL {
            for seed in 0..20 {
                let e = sample_episode(task, &cfg, seed).unwrap();
                assert!(!e.map.footprint_collides(&e.start, START_HALF), "{task} seed {seed}");
                assert!(e.trajectory.waypoints().iter().all(|w| !e.map.point_collides(&w.position, 0.05)), "{task} seed {seed}");
            }
        }
    }

    #[test]
    fn deterministic_and_serializable() {
        let cfg = TaskConfig::default();
        let a = sample_episode(TaskId::Drawer, &cfg, 7).unwrap();
        let b = sample_episode(TaskId::Drawer, &cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let back = TaskEpisode::from_json(&a.to_json()).unwrap();
        assert_eq!(back.map, a.map);
        assert_eq!(back.trajectory.waypoints().len(), a.trajectory.waypoints().len());
        assert_ne!(a, sample_episode(TaskId::Drawer, &cfg, 8).unwrap());
    }

    #[test]
    fn edge_heights_get_vertical_grasps() {
        let cfg = TaskConfig::default();
        let mut s = Sampler {
            rng: ChaCha8Rng::seed_from_u64(0),
            cfg: &cfg,
        };
        assert_eq!(s.goal_pitch(1.7, (0.1, 1.7)), TOP_GRASP_PITCH);
        assert_eq!(s.goal_pitch(0.1, (0.1, 1.7)), BOTTOM_GRASP_PITCH);
        let mid = s.goal_pitch(0.9, (0.1, 1.7));
        assert!(mid.abs() <= FRAC_PI_4);
    }

    #[test]
    fn door_has_a_leaf_in_the_gap() {
        let e = sample_episode(TaskId::Door, &TaskConfig::default(), 3).unwrap();
        let leaf = e.door.unwrap();
        assert!(e.map.obstacles().iter().all(|w| !w.overlaps(&leaf.rect)));
        let w = (leaf.rect.max[0] - leaf.rect.min[0]).max(leaf.rect.max[1] - leaf.rect.min[1]);
        assert!((w - 0.9).abs() < 1e-9);
    }
}
