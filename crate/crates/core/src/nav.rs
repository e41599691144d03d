//! 8-connected A* over the belief with obstacle inflation and goal
//! relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::belief::{BeliefCell, OccupancyBelief};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry, Point};

pub const DEFAULT_INFLATION: usize = 2;

const SQRT2: f64 = std::f64::consts::SQRT_2;
/// (drow, dcol) in a fixed order: orthogonal moves first.
const MOVES: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (0, 1),
    (1, 0),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPath {
    /// Cell centers from the start cell to the (relaxed) goal cell.
    pub waypoints: Vec<Point>,
    /// Meters.
    pub length: f64,
    pub orthogonal_steps: usize,
    pub diagonal_steps: usize,
    pub expanded_nodes: usize,
}

impl PlannedPath {
    pub fn goal(&self) -> Point {
        *self
            .waypoints
            .last()
            .expect("paths hold at least the start")
    }
}

/// Traversability derived from one belief snapshot.
#[derive(Clone, Debug)]
pub struct NavGrid {
    geometry: GridGeometry,
    free: Vec<bool>,
    traversable: Vec<bool>,
    inflation: usize,
}

impl NavGrid {
    /// A cell is traversable when it is `Free` and no `Occupied` cell lies
    /// within `inflation` cells (Euclidean). `Unknown` is never traversable.
    pub fn new(belief: &OccupancyBelief, inflation: usize) -> Self {
        let g = *belief.geometry();
        let free: Vec<bool> = belief
            .cells()
            .iter()
            .map(|c| *c == BeliefCell::Free)
            .collect();
        let mut traversable = free.clone();
        let rad = inflation as isize;
        let offsets: Vec<(isize, isize)> = (-rad..=rad)
            .flat_map(|dr| (-rad..=rad).map(move |dc| (dr, dc)))
            .filter(|(dr, dc)| dr * dr + dc * dc <= rad * rad)
            .collect();
        for (i, c) in belief.cells().iter().enumerate() {
            if *c != BeliefCell::Occupied {
                continue;
            }
            let (r, col) = ((i / g.width) as isize, (i % g.width) as isize);
            for (dr, dc) in &offsets {
                let (rr, cc) = (r + dr, col + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < g.height && (cc as usize) < g.width {
                    traversable[rr as usize * g.width + cc as usize] = false;
                }
            }
        }
        Self {
            geometry: g,
            free,
            traversable,
            inflation,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn inflation(&self) -> usize {
        self.inflation
    }

    pub fn is_traversable(&self, cell: Cell) -> bool {
        self.traversable[self.geometry.index(cell)]
    }

    pub fn traversable_mask(&self) -> &[bool] {
        &self.traversable
    }

    /// Validates the start point and returns its cell.
    pub fn start_cell(&self, start: Point) -> Result<Cell> {
        self.geometry
            .cell_of(start)
            .filter(|c| self.free[self.geometry.index(*c)])
            .ok_or(Error::InvalidStart {
                x: start.x,
                y: start.y,
            })
    }

    /// Nearest traversable cell within Chebyshev radius `radius` of the
    /// goal's cell, by Euclidean cell distance with ties on cell index.
    /// `also` is accepted even when not traversable (the start cell).
    /// Points outside the grid are clamped to the border cell first.
    pub fn relax_goal(&self, goal: Point, radius: usize, also: Option<Cell>) -> Option<Cell> {
        let g = &self.geometry;
        let (gx, gy) = g.to_grid(goal);
        let clamp = |v: f64, hi: usize| -> usize {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v.floor() as usize).min(hi - 1)
            }
        };
        let center = Cell::new(clamp(gy, g.height), clamp(gx, g.width));
        let r0 = center.row.saturating_sub(radius);
        let r1 = (center.row + radius).min(g.height - 1);
        let c0 = center.col.saturating_sub(radius);
        let c1 = (center.col + radius).min(g.width - 1);
        let mut best: Option<(usize, usize)> = None;
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cell = Cell::new(row, col);
                let idx = g.index(cell);
                if !self.traversable[idx] && Some(cell) != also {
                    continue;
                }
                let d = row.abs_diff(center.row).pow(2) + col.abs_diff(center.col).pow(2);
                if best.is_none_or(|(bd, bi)| (d, idx) < (bd, bi)) {
                    best = Some((d, idx));
                }
            }
        }
        best.map(|(_, i)| g.cell_at(i))
    }

    /// Plans from `start` to the relaxed goal. `Ok(None)` means unreachable.
    pub fn plan(&self, start: Point, goal: Point, relax: usize) -> Result<Option<PlannedPath>> {
        let s = self.start_cell(start)?;
        let Some(t) = self.relax_goal(goal, relax, Some(s)) else {
            return Ok(None);
        };
        Ok(self.astar(s, t))
    }

    pub fn check_reachable(&self, start: Point, goal: Point, relax: usize) -> Result<bool> {
        Ok(self.plan(start, goal, relax)?.is_some())
    }

    /// Moves out of `idx`. From a non-traversable cell (only ever the start
    /// or a cell reached from it the same way) any `Free` cell may be
    /// entered, so a robot caught inside an inflated zone can leave it.
    fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        let w = self.geometry.width as isize;
        let h = self.geometry.height as isize;
        let (r, c) = (idx as isize / w, idx as isize % w);
        let mask = if self.traversable[idx] {
            &self.traversable
        } else {
            &self.free
        };
        let ok = move |rr: isize, cc: isize| {
            rr >= 0 && cc >= 0 && rr < h && cc < w && mask[(rr * w + cc) as usize]
        };
        MOVES.iter().filter_map(move |&(dr, dc)| {
            let (rr, cc) = (r + dr, c + dc);
            if !ok(rr, cc) {
                return None;
            }
            let diagonal = dr != 0 && dc != 0;
            if diagonal && !(ok(r + dr, c) && ok(r, c + dc)) {
                return None;
            }
            Some(((rr * w + cc) as usize, diagonal))
        })
    }

    fn octile(&self, a: usize, b: usize) -> f64 {
        let w = self.geometry.width;
        let dr = (a / w).abs_diff(b / w) as f64;
        let dc = (a % w).abs_diff(b % w) as f64;
        let (lo, hi) = if dr < dc { (dr, dc) } else { (dc, dr) };
        (hi - lo) + SQRT2 * lo
    }

    fn astar(&self, start: Cell, goal: Cell) -> Option<PlannedPath> {
        let g = &self.geometry;
        let (s, t) = (g.index(start), g.index(goal));
        let n = g.len();
        let mut cost = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut closed = vec![false; n];
        let mut open = BinaryHeap::new();
        cost[s] = 0.0;
        let h0 = self.octile(s, t);
        open.push(OpenNode {
            f: h0,
            h: h0,
            idx: s,
        });
        let mut expanded = 0;
        while let Some(OpenNode { idx, .. }) = open.pop() {
            if closed[idx] {
                continue;
            }
            closed[idx] = true;
            expanded += 1;
            if idx == t {
                return Some(self.reconstruct(&parent, s, t, expanded));
            }
            for (nb, diagonal) in self.neighbors(idx) {
                if closed[nb] {
                    continue;
                }
                let next = cost[idx] + if diagonal { SQRT2 } else { 1.0 };
                if next < cost[nb] {
                    cost[nb] = next;
                    parent[nb] = idx;
                    let h = self.octile(nb, t);
                    open.push(OpenNode {
                        f: next + h,
                        h,
                        idx: nb,
                    });
                }
            }
        }
        None
    }

    fn reconstruct(&self, parent: &[usize], s: usize, t: usize, expanded: usize) -> PlannedPath {
        let g = &self.geometry;
        let mut cells = vec![t];
        let mut cur = t;
        while cur != s {
            cur = parent[cur];
            cells.push(cur);
        }
        cells.reverse();
        let (mut ortho, mut diag) = (0, 0);
        for pair in cells.windows(2) {
            if pair[0] / g.width != pair[1] / g.width && pair[0] % g.width != pair[1] % g.width {
                diag += 1;
            } else {
                ortho += 1;
            }
        }
        PlannedPath {
            waypoints: cells.iter().map(|&i| g.cell_center(g.cell_at(i))).collect(),
            length: step_length(ortho, diag, g.resolution),
            orthogonal_steps: ortho,
            diagonal_steps: diag,
            expanded_nodes: expanded,
        }
    }

    /// Single-source shortest step counts `(orthogonal, diagonal)` to every
    /// cell, `None` where unreachable. Uses the same move rules as A*.
    pub fn distance_field(&self, start: Point) -> Result<DistanceField> {
        let s = self.geometry.index(self.start_cell(start)?);
        let n = self.geometry.len();
        let mut cost = vec![f64::INFINITY; n];
        let mut steps = vec![None; n];
        let mut closed = vec![false; n];
        let mut open = BinaryHeap::new();
        cost[s] = 0.0;
        steps[s] = Some((0, 0));
        open.push(OpenNode {
            f: 0.0,
            h: 0.0,
            idx: s,
        });
        while let Some(OpenNode { idx, .. }) = open.pop() {
            if closed[idx] {
                continue;
            }
            closed[idx] = true;
            let (o, d) = steps[idx].expect("settled nodes have step counts");
            for (nb, diagonal) in self.neighbors(idx) {
                let next = cost[idx] + if diagonal { SQRT2 } else { 1.0 };
                if next < cost[nb] {
                    cost[nb] = next;
                    steps[nb] = Some(if diagonal { (o, d + 1) } else { (o + 1, d) });
                    open.push(OpenNode {
                        f: next,
                        h: 0.0,
                        idx: nb,
                    });
                }
            }
        }
        Ok(DistanceField {
            geometry: self.geometry,
            start: self.geometry.cell_at(s),
            steps,
        })
    }
}

/// Shortest-path step counts from one start cell.
#[derive(Clone, Debug)]
pub struct DistanceField {
    geometry: GridGeometry,
    start: Cell,
    steps: Vec<Option<(usize, usize)>>,
}

impl DistanceField {
    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn steps(&self, cell: Cell) -> Option<(usize, usize)> {
        self.steps[self.geometry.index(cell)]
    }

    /// Path length in meters, `None` if unreachable.
    pub fn length(&self, cell: Cell) -> Option<f64> {
        self.steps(cell)
            .map(|(o, d)| step_length(o, d, self.geometry.resolution))
    }
}

pub fn step_length(orthogonal: usize, diagonal: usize, resolution: f64) -> f64 {
    (orthogonal as f64 + diagonal as f64 * SQRT2) * resolution
}

/// Convenience wrapper: builds a [`NavGrid`] and plans once.
pub fn plan(
    belief: &OccupancyBelief,
    start: Point,
    goal: Point,
    inflation: usize,
    relax: usize,
) -> Result<Option<PlannedPath>> {
    NavGrid::new(belief, inflation).plan(start, goal, relax)
}

#[derive(Clone, Copy, Debug)]
struct OpenNode {
    f: f64,
    h: f64,
    idx: usize,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    // reversed so BinaryHeap pops the smallest (f, h, idx)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}
