use std::collections::BinaryHeap;

use mount_codesign::controller::GainPolicy;
use mount_codesign::robot::{bundled, DriveType};
use mount_codesign::sim::planner::GridGraph;
use mount_codesign::sim::{
    integrate_base, project_to_drive, run_episode, sample_episode, BasePose, OccupancyMap, Rect, TaskConfig, TaskId, Thresholds, Twist2D,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arc(start: &BasePose, t: Twist2D, time: f64) -> BasePose {
    let th0 = start.yaw;
    let th1 = th0 + t.omega * time;
    let (s, c) = ((th1.sin() - th0.sin()) / t.omega, (th1.cos() - th0.cos()) / t.omega);
    BasePose {
        x: start.x + t.vx * s + t.vy * c,
        y: start.y - t.vx * c + t.vy * s,
        yaw: th1,
    }
}

#[test]
fn constant_twist_follows_the_arc_for_both_drives() {
    let cmd = Twist2D { vx: 0.6, vy: 0.25, omega: -0.7 };
    let start = BasePose { x: -1.2, y: 0.4, yaw: 2.1 };
    for drive in [DriveType::Omnidirectional, DriveType::Differential] {
        let tw = project_to_drive(cmd, drive);
        let mut p = start;
        for _ in 0..1000 {
            p = integrate_base(&p, tw, 0.02);
        }
        let exact = arc(&start, tw, 20.0);
        assert!((p.x - exact.x).abs() < 1e-9, "{drive:?} x {} vs {}", p.x, exact.x);
        assert!((p.y - exact.y).abs() < 1e-9, "{drive:?} y {} vs {}", p.y, exact.y);
        assert!((p.yaw - exact.yaw).abs() < 1e-9);
    }
}

#[test]
fn differential_base_never_slides_sideways() {
    let tw = project_to_drive(Twist2D { vx: 0.0, vy: 1.0, omega: 0.0 }, DriveType::Differential);
    let p = integrate_base(&BasePose::default(), tw, 5.0);
    assert_eq!((p.x, p.y), (0.0, 0.0));
}

// Plain Dijkstra with its own neighbour rule, used as the reference for A*.
fn dijkstra(cols: usize, rows: usize, blocked: &[bool], start: usize, goal: usize) -> Option<f64> {
    #[derive(PartialEq)]
    struct E(f64, usize);
    impl Eq for E {}
    impl PartialOrd for E {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for E {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0)
        }
    }
    let free = |i: i64, j: i64| i >= 0 && j >= 0 && i < cols as i64 && j < rows as i64 && !blocked[j as usize * cols + i as usize];
    let mut dist = vec![f64::INFINITY; cols * rows];
    let mut heap = BinaryHeap::from([E(0.0, start)]);
    dist[start] = 0.0;
    while let Some(E(d, c)) = heap.pop() {
        if c == goal {
            return Some(d);
        }
        if d > dist[c] {
            continue;
        }
        let (i, j) = ((c % cols) as i64, (c / cols) as i64);
        for di in -1..=1 {
            for dj in -1..=1 {
                if (di, dj) == (0, 0) || !free(i + di, j + dj) {
                    continue;
                }
                if di != 0 && dj != 0 && !(free(i + di, j) && free(i, j + dj)) {
                    continue;
                }
                let n = (j + dj) as usize * cols + (i + di) as usize;
                let nd = d + if di != 0 && dj != 0 { 2f64.sqrt() } else { 1.0 };
                if nd < dist[n] {
                    dist[n] = nd;
                    heap.push(E(nd, n));
                }
            }
        }
    }
    None
}

#[test]
fn astar_matches_dijkstra_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut reachable = 0;
    for _ in 0..20 {
        let (cols, rows) = (rng.random_range(8..30), rng.random_range(8..30));
        let density = rng.random_range(0.1..0.35);
        let mut blocked: Vec<bool> = (0..cols * rows).map(|_| rng.random_bool(density)).collect();
        let start = rng.random_range(0..cols * rows);
        let goal = rng.random_range(0..cols * rows);
        blocked[start] = false;
        blocked[goal] = false;
        let graph = GridGraph { cols, rows, blocked: &blocked };
        let found = graph.astar(start, goal);
        let oracle = dijkstra(cols, rows, &blocked, start, goal);
        match (found, oracle) {
            (Some((path, cost)), Some(best)) => {
                reachable += 1;
                assert!((cost - best).abs() < 1e-9, "A* {cost} vs Dijkstra {best}");
                assert_eq!((path[0], *path.last().unwrap()), (start, goal));
                let walked: f64 = path
                    .windows(2)
                    .map(|w| {
                        let step = graph.neighbors(w[0]).find(|(n, _)| *n == w[1]);
                        step.expect("path follows graph edges").1
                    })
                    .sum();
                assert!((walked - cost).abs() < 1e-9);
            }
            (None, None) => {}
            (a, b) => panic!("A* {a:?} vs Dijkstra {b:?}"),
        }
    }
    assert!(reachable >= 10);
}

#[test]
fn raster_and_exact_collision_agree_within_a_cell() {
    let cell = 0.1;
    let diag = cell * 2f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let half = [0.4, 0.3];
    let mut disagreements = 0;
    for _ in 0..20 {
        let rects: Vec<Rect> = (0..6)
            .map(|_| {
                let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                Rect::centered(c, [rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)], 1.0)
            })
            .collect();
        let map = OccupancyMap::square([0.0, 0.0], 4.0, cell, rects.clone()).unwrap();
        let grown = OccupancyMap::square([0.0, 0.0], 4.0, cell, rects.iter().map(|r| r.expanded(diag)).collect()).unwrap();
        for _ in 0..200 {
            let pose = BasePose {
                x: rng.random_range(-3.0..3.0),
                y: rng.random_range(-3.0..3.0),
                yaw: rng.random_range(-3.2..3.2),
            };
            let exact = map.footprint_collides(&pose, half);
            let raster = map.footprint_collides_raster(&pose, half);
            // cells cover their obstacles, so the raster never misses a hit
            if exact {
                assert!(raster, "{pose:?}");
            }
            // and a raster hit is always within one cell of a real obstacle
            if raster {
                assert!(grown.footprint_collides(&pose, half), "{pose:?}");
            }
            disagreements += usize::from(exact != raster);
        }
    }
    assert!(disagreements < 400, "{disagreements} of 4000 poses disagree");
}

#[test]
fn key_heights_stay_in_their_bands() {
    let cfg = TaskConfig::default();
    for task in [TaskId::RandomGoal, TaskId::Drawer, TaskId::Cabinet] {
        let (lo, hi) = task.height_band().unwrap();
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for seed in 0..10_000 {
            let h = sample_episode(task, &cfg, seed).unwrap().key_height;
            min = min.min(h);
            max = max.max(h);
        }
        assert!(min >= lo && max <= hi, "{task}: [{min}, {max}] outside [{lo}, {hi}]");
        // the samples should fill the band, not a corner of it
        assert!(min - lo < 0.05 * (hi - lo) && hi - max < 0.05 * (hi - lo), "{task}: [{min}, {max}]");
    }
}

#[test]
fn sampling_is_deterministic() {
    let cfg = TaskConfig::default();
    for task in TaskId::ALL {
        let a = sample_episode(task, &cfg, 42).unwrap();
        assert_eq!(a, sample_episode(task, &cfg, 42).unwrap());
        assert_ne!(a, sample_episode(task, &cfg, 43).unwrap());
    }
}

#[test]
fn rollouts_are_deterministic() {
    let robot = bundled("fmm_franka").unwrap();
    let ep = sample_episode(TaskId::Drawer, &TaskConfig::default(), 3).unwrap();
    let policy = GainPolicy { gains: Default::default() };
    let a = run_episode(&robot, &ep, &policy).unwrap();
    assert_eq!(a, run_episode(&robot, &ep, &policy).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The policy never reads the thresholds, so a run that survives tight
    // thresholds survives looser ones step for step.
    #[test]
    fn looser_thresholds_never_hurt(seed in 0u64..1000, task_ix in 0usize..6, scale in 1.0f64..3.0) {
        let robot = bundled("fmm_franka").unwrap();
        let task = TaskId::ALL[task_ix];
        let tight = sample_episode(task, &TaskConfig::default(), seed).unwrap();
        let mut loose = tight.clone();
        loose.thresholds = Thresholds {
            translation: tight.thresholds.translation * scale,
            rotation: tight.thresholds.rotation * scale,
        };
        let policy = GainPolicy { gains: Default::default() };
        let a = run_episode(&robot, &tight, &policy).unwrap();
        let b = run_episode(&robot, &loose, &policy).unwrap();
        if a.success {
            prop_assert!(b.success);
            prop_assert_eq!(a.steps, b.steps);
        }
        prop_assert!(b.progress >= a.progress - 1e-12);
    }
}
