use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{BasePose, SimError};

/// Axis-aligned box standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2], height: f64) -> Self {
        Self { min, max, height }
    }

    pub fn centered(center: [f64; 2], half: [f64; 2], height: f64) -> Self {
        Self {
            min: [center[0] - half[0], center[1] - half[1]],
            max: [center[0] + half[0], center[1] + half[1]],
            height,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.min[0] < self.max[0]
            && self.min[1] < self.max[1]
            && self.height > 0.0
            && self.min.iter().chain(&self.max).all(|v| v.is_finite())
            && self.height.is_finite()
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min[0] < other.max[0] && other.min[0] < self.max[0] && self.min[1] < other.max[1] && other.min[1] < self.max[1]
    }

    pub fn expanded(&self, margin: f64) -> Rect {
        Rect {
            min: [self.min[0] - margin, self.min[1] - margin],
            max: [self.max[0] + margin, self.max[1] + margin],
            height: self.height,
        }
    }

    /// Euclidean distance from `p` to the solid box, zero inside.
    pub fn distance_3d(&self, p: &Vector3<f64>) -> f64 {
        let dx = (self.min[0] - p.x).max(0.0).max(p.x - self.max[0]);
        let dy = (self.min[1] - p.y).max(0.0).max(p.y - self.max[1]);
        let dz = (-p.z).max(0.0).max(p.z - self.height);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.min[0], self.min[1]],
            [self.max[0], self.min[1]],
            [self.max[0], self.max[1]],
            [self.min[0], self.max[1]],
        ]
    }
}

/// Rectangle of half extents `half` centered on `pose`, as four corners.
pub fn footprint_corners(pose: &BasePose, half: [f64; 2]) -> [[f64; 2]; 4] {
    let (s, c) = pose.yaw.sin_cos();
    let local = [[half[0], half[1]], [-half[0], half[1]], [-half[0], -half[1]], [half[0], -half[1]]];
    local.map(|[x, y]| [pose.x + c * x - s * y, pose.y + s * x + c * y])
}

fn project(points: &[[f64; 2]], axis: [f64; 2]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p[0] * axis[0] + p[1] * axis[1];
        (lo.min(d), hi.max(d))
    })
}

/// Separating-axis test between an oriented footprint and an axis-aligned
/// rectangle. Touching counts as overlap.
pub fn footprint_overlaps_rect(pose: &BasePose, half: [f64; 2], rect: &Rect) -> bool {
    let fp = footprint_corners(pose, half);
    let rc = rect.corners();
    let (s, c) = pose.yaw.sin_cos();
    let axes = [[1.0, 0.0], [0.0, 1.0], [c, s], [-s, c]];
    axes.iter().all(|axis| {
        let (a0, a1) = project(&fp, *axis);
        let (b0, b1) = project(&rc, *axis);
        a0 <= b1 && b0 <= a1
    })
}

/// Distance from `p` to an oriented footprint, zero inside.
pub fn distance_to_footprint(pose: &BasePose, half: [f64; 2], p: [f64; 2]) -> f64 {
    let (s, c) = pose.yaw.sin_cos();
    let (dx, dy) = (p[0] - pose.x, p[1] - pose.y);
    let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
    let ex = (lx.abs() - half[0]).max(0.0);
    let ey = (ly.abs() - half[1]).max(0.0);
    ex.hypot(ey)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct OccupancyMap {
    origin: [f64; 2],
    cell_size: f64,
    cols: usize,
    rows: usize,
    obstacles: Vec<Rect>,
    cells: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct RawMap {
    origin: [f64; 2],
    cell_size: f64,
    cols: usize,
    rows: usize,
    obstacles: Vec<Rect>,
}

impl TryFrom<RawMap> for OccupancyMap {
    type Error = SimError;
    fn try_from(r: RawMap) -> Result<Self, SimError> {
        OccupancyMap::new(r.origin, r.cell_size, r.cols, r.rows, r.obstacles)
    }
}

impl From<OccupancyMap> for RawMap {
    fn from(m: OccupancyMap) -> Self {
        RawMap {
            origin: m.origin,
            cell_size: m.cell_size,
            cols: m.cols,
            rows: m.rows,
            obstacles: m.obstacles,
        }
    }
}

impl OccupancyMap {
    /// Grid of `cols × rows` cells with its lower-left corner at `origin`.
    /// A cell is occupied when its open square overlaps an obstacle.
    pub fn new(origin: [f64; 2], cell_size: f64, cols: usize, rows: usize, obstacles: Vec<Rect>) -> Result<Self, SimError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(SimError::BadMap(format!("cell size {cell_size} must be positive")));
        }
        if cols == 0 || rows == 0 {
            return Err(SimError::BadMap("map needs at least one cell".into()));
        }
        if let Some(bad) = obstacles.iter().find(|r| !r.is_valid()) {
            return Err(SimError::BadMap(format!("degenerate obstacle {bad:?}")));
        }
        let mut map = Self {
            origin,
            cell_size,
            cols,
            rows,
            obstacles,
            cells: vec![false; cols * rows],
        };
        for k in 0..map.obstacles.len() {
            let r = map.obstacles[k];
            map.mark(&r, true);
        }
        Ok(map)
    }

    /// Square map of side `2 * half_extent` centered on `center`.
    pub fn square(center: [f64; 2], half_extent: f64, cell_size: f64, obstacles: Vec<Rect>) -> Result<Self, SimError> {
        let n = (2.0 * half_extent / cell_size).round().max(1.0) as usize;
        let origin = [center[0] - half_extent, center[1] - half_extent];
        Self::new(origin, cell_size, n, n, obstacles)
    }

    fn mark(&mut self, r: &Rect, value: bool) {
        for (i, j) in self.cells_overlapping(r) {
            self.cells[j * self.cols + i] = value;
        }
    }

    /// Cells whose open square overlaps `r`.
    pub fn cells_overlapping(&self, r: &Rect) -> Vec<(usize, usize)> {
        let cs = self.cell_size;
        let lo_i = ((r.min[0] - self.origin[0]) / cs).floor().max(0.0) as usize;
        let lo_j = ((r.min[1] - self.origin[1]) / cs).floor().max(0.0) as usize;
        let hi_i = (((r.max[0] - self.origin[0]) / cs).ceil().max(0.0) as usize).min(self.cols);
        let hi_j = (((r.max[1] - self.origin[1]) / cs).ceil().max(0.0) as usize).min(self.rows);
        let mut out = Vec::new();
        for j in lo_j..hi_j {
            for i in lo_i..hi_i {
                let cell = self.cell_rect(i, j);
                if cell.overlaps(r) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        let max = [
            self.origin[0] + self.cols as f64 * self.cell_size,
            self.origin[1] + self.rows as f64 * self.cell_size,
        ];
        (self.origin, max)
    }

    pub fn cell_rect(&self, i: usize, j: usize) -> Rect {
        let cs = self.cell_size;
        let x = self.origin[0] + i as f64 * cs;
        let y = self.origin[1] + j as f64 * cs;
        Rect::new([x, y], [x + cs, y + cs], 1.0)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let cs = self.cell_size;
        [
            self.origin[0] + (i as f64 + 0.5) * cs,
            self.origin[1] + (j as f64 + 0.5) * cs,
        ]
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.origin[0]) / self.cell_size).floor();
        let fj = ((y - self.origin[1]) / self.cell_size).floor();
        if fi < 0.0 || fj < 0.0 || !fi.is_finite() || !fj.is_finite() {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        (i < self.cols && j < self.rows).then_some((i, j))
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.cols + i]
    }

    /// Occupancy at a world point; outside the map counts as occupied.
    pub fn occupied_at(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_none_or(|(i, j)| self.is_occupied(i, j))
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn contains_footprint(&self, pose: &BasePose, half: [f64; 2]) -> bool {
        let (lo, hi) = self.extent();
        footprint_corners(pose, half)
            .iter()
            .all(|p| p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1])
    }

    /// Exact check against the obstacle rectangles and the map border.
    pub fn footprint_collides(&self, pose: &BasePose, half: [f64; 2]) -> bool {
        !self.contains_footprint(pose, half) || self.obstacles.iter().any(|r| footprint_overlaps_rect(pose, half, r))
    }

    /// Check against the rasterized cells.
    pub fn footprint_collides_raster(&self, pose: &BasePose, half: [f64; 2]) -> bool {
        if !self.contains_footprint(pose, half) {
            return true;
        }
        let corners = footprint_corners(pose, half);
        let (x0, x1) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[0]), a.1.max(p[0])));
        let (y0, y1) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[1]), a.1.max(p[1])));
        let bbox = Rect::new([x0, y0], [x1, y1], 1.0);
        self.cells_overlapping(&bbox).into_iter().any(|(i, j)| {
            self.is_occupied(i, j) && footprint_overlaps_rect(pose, half, &self.cell_rect(i, j))
        })
    }

    /// A sphere of `radius` at `p` touches an obstacle or the floor.
    pub fn point_collides(&self, p: &Vector3<f64>, radius: f64) -> bool {
        p.z < radius || self.obstacles.iter().any(|r| r.distance_3d(p) < radius)
    }

    /// Cells whose center lies within `radius` of an occupied cell center,
    /// plus the occupied cells themselves.
    pub fn inflated(&self, radius: f64) -> Vec<bool> {
        let mut out = self.cells.clone();
        let reach = (radius / self.cell_size).floor() as isize;
        let r2 = (radius / self.cell_size).powi(2) + 1e-9;
        for j in 0..self.rows {
            for i in 0..self.cols {
                if !self.is_occupied(i, j) {
                    continue;
                }
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        if (di * di + dj * dj) as f64 > r2 {
                            continue;
                        }
                        let (ni, nj) = (i as isize + di, j as isize + dj);
                        if ni >= 0 && nj >= 0 && (ni as usize) < self.cols && (nj as usize) < self.rows {
                            out[nj as usize * self.cols + ni as usize] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// Occupied cell centers within `radius` of the footprint at `pose`.
    pub fn occupied_near(&self, pose: &BasePose, half: [f64; 2], radius: f64) -> Vec<[f64; 2]> {
        let reach = half[0].hypot(half[1]) + radius;
        let window = Rect::new([pose.x - reach, pose.y - reach], [pose.x + reach, pose.y + reach], 1.0);
        self.cells_overlapping(&window)
            .into_iter()
            .filter(|(i, j)| self.is_occupied(*i, *j))
            .map(|(i, j)| self.cell_center(i, j))
            .filter(|c| distance_to_footprint(pose, half, *c) <= radius)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(x: f64, y: f64, yaw: f64) -> BasePose {
        BasePose { x, y, yaw }
    }

    #[test]
    fn rasterizes_rectangles() {
        let m = OccupancyMap::new([0.0, 0.0], 0.1, 20, 20, vec![Rect::new([0.5, 0.5], [0.7, 0.65], 1.0)]).unwrap();
        assert_eq!(m.occupied_count(), 2 * 2);
        assert!(m.is_occupied(5, 5) && m.is_occupied(6, 6));
        assert!(!m.is_occupied(7, 5));
        assert!(m.occupied_at(-0.01, 0.5));
        assert!(!m.occupied_at(0.05, 0.05));
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(OccupancyMap::new([0.0, 0.0], 0.0, 5, 5, vec![]).is_err());
        assert!(OccupancyMap::new([0.0, 0.0], 0.1, 0, 5, vec![]).is_err());
        assert!(OccupancyMap::new([0.0, 0.0], 0.1, 5, 5, vec![Rect::new([0.2, 0.0], [0.1, 0.1], 1.0)]).is_err());
    }

    #[test]
    fn rotated_footprint_sat() {
        let r = Rect::new([1.0, -0.1], [1.2, 0.1], 0.5);
        assert!(!footprint_overlaps_rect(&pose(0.0, 0.0, 0.0), [0.9, 0.3], &r));
        assert!(footprint_overlaps_rect(&pose(0.0, 0.0, 0.0), [1.05, 0.3], &r));
        // a square rotated 45° reaches sqrt(2)·0.75 ≈ 1.06 along x
        assert!(footprint_overlaps_rect(&pose(0.0, 0.0, std::f64::consts::FRAC_PI_4), [0.75, 0.75], &r));
        assert!(!footprint_overlaps_rect(&pose(0.0, 0.0, 0.0), [0.75, 0.75], &r));
    }

    #[test]
    fn point_collision_includes_floor_and_height() {
        let m = OccupancyMap::square([0.0, 0.0], 2.0, 0.1, vec![Rect::new([0.0, 0.0], [0.5, 0.5], 0.4)]).unwrap();
        assert!(m.point_collides(&Vector3::new(0.25, 0.25, 0.42), 0.05));
        assert!(!m.point_collides(&Vector3::new(0.25, 0.25, 0.46), 0.05));
        assert!(m.point_collides(&Vector3::new(-1.0, -1.0, 0.02), 0.05));
    }

    #[test]
    fn serde_round_trip_rebuilds_cells() {
        let m = OccupancyMap::square([0.0, 0.0], 1.0, 0.1, vec![Rect::new([0.0, 0.0], [0.3, 0.2], 1.0)]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(!text.contains("cells"));
        let back: OccupancyMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn inflation_radius() {
        let m = OccupancyMap::new([0.0, 0.0], 0.1, 11, 11, vec![Rect::new([0.5, 0.5], [0.6, 0.6], 1.0)]).unwrap();
        let inf = m.inflated(0.2);
        let count = inf.iter().filter(|c| **c).count();
        // lattice points with di² + dj² ≤ 4
        assert_eq!(count, 13);
    }
}
