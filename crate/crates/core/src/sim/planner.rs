use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::map::OccupancyMap;
use super::trajectory::{EETrajectory, TrajectoryTag};
use super::SimError;
use crate::kinematics::Pose;

const SQRT2: f64 = std::f64::consts::SQRT_2;
/// Neighbor order is part of the tie-breaking contract.
const NEIGHBORS: [(isize, isize); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    order: u64,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then on insertion order
        other.f.total_cmp(&self.f).then(other.order.cmp(&self.order))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A grid with blocked cells, searched 8-connected. Diagonal moves may not
/// cut the corner of a blocked cell.
pub struct GridGraph<'a> {
    pub cols: usize,
    pub rows: usize,
    pub blocked: &'a [bool],
}

impl GridGraph<'_> {
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (i, j) = ((cell % self.cols) as isize, (cell / self.cols) as isize);
        NEIGHBORS.iter().filter_map(move |(di, dj)| {
            let (ni, nj) = (i + di, j + dj);
            if !self.inside(ni, nj) || self.blocked_at(ni, nj) {
                return None;
            }
            if *di != 0 && *dj != 0 && (self.blocked_at(i + di, j) || self.blocked_at(i, j + dj)) {
                return None;
            }
            let cost = if *di != 0 && *dj != 0 { SQRT2 } else { 1.0 };
            Some((nj as usize * self.cols + ni as usize, cost))
        })
    }

    fn inside(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.cols && (j as usize) < self.rows
    }

    fn blocked_at(&self, i: isize, j: isize) -> bool {
        !self.inside(i, j) || self.blocked[j as usize * self.cols + i as usize]
    }

    fn heuristic(&self, a: usize, b: usize) -> f64 {
        let (ai, aj) = ((a % self.cols) as f64, (a / self.cols) as f64);
        let (bi, bj) = ((b % self.cols) as f64, (b / self.cols) as f64);
        (ai - bi).hypot(aj - bj)
    }

    /// Shortest path in cell units, or `None`.
    pub fn astar(&self, start: usize, goal: usize) -> Option<(Vec<usize>, f64)> {
        let n = self.cols * self.rows;
        let mut g = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut closed = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut order = 0u64;
        g[start] = 0.0;
        heap.push(Entry {
            f: self.heuristic(start, goal),
            order,
            cell: start,
        });
        while let Some(Entry { cell, .. }) = heap.pop() {
            if closed[cell] {
                continue;
            }
            if cell == goal {
                let mut path = vec![goal];
                let mut c = goal;
                while c != start {
                    c = parent[c];
                    path.push(c);
                }
                path.reverse();
                return Some((path, g[goal]));
            }
            closed[cell] = true;
            for (nb, cost) in self.neighbors(cell) {
                let cand = g[cell] + cost;
                if cand < g[nb] - 1e-12 {
                    g[nb] = cand;
                    parent[nb] = cell;
                    order += 1;
                    heap.push(Entry {
                        f: cand + self.heuristic(nb, goal),
                        order,
                        cell: nb,
                    });
                }
            }
        }
        None
    }
}

fn collinear(a: (isize, isize), b: (isize, isize), c: (isize, isize)) -> bool {
    (b.0 - a.0) * (c.1 - b.1) == (b.1 - a.1) * (c.0 - b.0)
}

/// EE path between two poses through the map, inflated by `inflation`.
///
/// The path runs through cell centers (collinear runs merged); heights and
/// orientations interpolate from `start` to `goal` by path fraction, and the
/// end points are the exact input poses. Start and goal cells may lie in the
/// inflated band but not in occupied cells.
pub fn plan_ee_path(
    map: &OccupancyMap,
    start: &Pose,
    goal: &Pose,
    inflation: f64,
    speed: f64,
) -> Result<EETrajectory, SimError> {
    let cell = |p: &Pose| -> Result<(usize, usize), SimError> {
        match map.cell_of(p.position.x, p.position.y) {
            Some((i, j)) if !map.is_occupied(i, j) => Ok((i, j)),
            _ => Err(SimError::NoPath),
        }
    };
    let (si, sj) = cell(start)?;
    let (gi, gj) = cell(goal)?;
    let cols = map.cols();
    let mut blocked = map.inflated(inflation);
    blocked[sj * cols + si] = false;
    blocked[gj * cols + gi] = false;
    let graph = GridGraph {
        cols,
        rows: map.rows(),
        blocked: &blocked,
    };
    let (cells, _) = graph.astar(sj * cols + si, gj * cols + gi).ok_or(SimError::NoPath)?;
    let ij: Vec<(isize, isize)> = cells.iter().map(|c| ((c % cols) as isize, (c / cols) as isize)).collect();
    let mut keep: Vec<usize> = vec![0];
    for k in 1..ij.len().saturating_sub(1) {
        if !collinear(ij[k - 1], ij[k], ij[k + 1]) {
            keep.push(k);
        }
    }
    if ij.len() > 1 {
        keep.push(ij.len() - 1);
    }
    let pts: Vec<[f64; 2]> = keep
        .iter()
        .map(|k| map.cell_center(ij[*k].0 as usize, ij[*k].1 as usize))
        .collect();
    let mut waypoints = vec![*start];
    let mut planar = vec![[start.position.x, start.position.y]];
    planar.extend(pts.iter().skip(1).take(pts.len().saturating_sub(2)));
    planar.push([goal.position.x, goal.position.y]);
    let mut lengths = vec![0.0];
    for w in planar.windows(2) {
        let l = lengths.last().unwrap() + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        lengths.push(l);
    }
    let total = *lengths.last().unwrap();
    for k in 1..planar.len() - 1 {
        let t = if total > 0.0 { lengths[k] / total } else { 1.0 };
        let z = start.position.z + (goal.position.z - start.position.z) * t;
        waypoints.push(Pose::new(
            nalgebra::Vector3::new(planar[k][0], planar[k][1], z),
            start.orientation.slerp(&goal.orientation, t),
        ));
    }
    if planar.len() > 1 {
        waypoints.push(*goal);
    }
    EETrajectory::new(waypoints, speed, TrajectoryTag::Planner)
}
