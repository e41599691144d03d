//! Tri-state occupancy belief built from range scans under known pose.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry, GridRay, Point};
use crate::worldsim::{split_grid_text, RangeScan, WorldCell, WorldMap};

/// Slack used when matching a beam endpoint to a DDA cell boundary.
const ENDPOINT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum BeliefCell {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl BeliefCell {
    pub fn symbol(self) -> char {
        match self {
            BeliefCell::Unknown => '?',
            BeliefCell::Free => '.',
            BeliefCell::Occupied => '#',
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct OccupancyBelief {
    geometry: GridGeometry,
    cells: Vec<BeliefCell>,
    free_count: usize,
    occupied_count: usize,
}

impl fmt::Debug for OccupancyBelief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OccupancyBelief")
            .field("geometry", &self.geometry)
            .field("free", &self.free_count)
            .field("occupied", &self.occupied_count)
            .field("unknown", &self.unknown_count())
            .finish()
    }
}

impl OccupancyBelief {
    /// An all-unknown belief with the given geometry.
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            cells: vec![BeliefCell::Unknown; geometry.len()],
            geometry,
            free_count: 0,
            occupied_count: 0,
        }
    }

    pub fn for_world(world: &WorldMap) -> Self {
        Self::new(*world.geometry())
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[BeliefCell] {
        &self.cells
    }

    #[inline]
    pub fn cell(&self, cell: Cell) -> BeliefCell {
        self.cells[self.geometry.index(cell)]
    }

    pub fn cell_at_point(&self, p: Point) -> Option<BeliefCell> {
        self.geometry.cell_of(p).map(|c| self.cell(c))
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied_count
    }

    pub fn unknown_count(&self) -> usize {
        self.cells.len() - self.free_count - self.occupied_count
    }

    pub fn known_count(&self) -> usize {
        self.free_count + self.occupied_count
    }

    /// Counts (free, occupied, unknown) by scanning every cell.
    pub fn recount(&self) -> (usize, usize, usize) {
        let mut counts = [0usize; 3];
        for c in &self.cells {
            counts[*c as usize] += 1;
        }
        (counts[1], counts[2], counts[0])
    }

    /// Sets a cell, honoring the transition rules: nothing returns to
    /// `Unknown` and `Occupied` is never overwritten.
    pub fn set(&mut self, cell: Cell, value: BeliefCell) {
        let idx = self.geometry.index(cell);
        self.set_index(idx, value);
    }

    #[inline]
    fn set_index(&mut self, idx: usize, value: BeliefCell) {
        let cur = self.cells[idx];
        if cur == value || cur == BeliefCell::Occupied || value == BeliefCell::Unknown {
            return;
        }
        if cur == BeliefCell::Free {
            self.free_count -= 1;
        }
        match value {
            BeliefCell::Free => self.free_count += 1,
            BeliefCell::Occupied => self.occupied_count += 1,
            BeliefCell::Unknown => unreachable!(),
        }
        self.cells[idx] = value;
    }

    /// Integrates one scan: cells before each beam endpoint become `Free`;
    /// the endpoint becomes `Occupied` for beams that hit.
    pub fn integrate_scan(&mut self, scan: &RangeScan) -> Result<()> {
        let origin = scan.pose.position();
        if !self.geometry.contains(origin) {
            return Err(Error::OutOfBounds {
                x: origin.x,
                y: origin.y,
            });
        }
        // the robot stands in its own cell: it is free whatever earlier noisy
        // returns said, and no return from this scan marks it occupied
        let own = self
            .geometry
            .index(self.geometry.cell_of(origin).expect("checked above"));
        match self.cells[own] {
            BeliefCell::Occupied => {
                self.occupied_count -= 1;
                self.free_count += 1;
                self.cells[own] = BeliefCell::Free;
            }
            _ => self.set_index(own, BeliefCell::Free),
        }
        for ((&rel, &range), &hit) in scan.angles.iter().zip(&scan.ranges).zip(&scan.hit_flags) {
            let mut ray = GridRay::new(&self.geometry, origin, scan.pose.heading + rel).peekable();
            if hit {
                while let Some(rc) = ray.next() {
                    let idx = self.geometry.index(rc.cell);
                    let inside_next = ray
                        .peek()
                        .is_some_and(|next| next.t_enter <= range + ENDPOINT_EPS);
                    if rc.t_enter >= range - ENDPOINT_EPS || !inside_next {
                        if idx != own {
                            self.set_index(idx, BeliefCell::Occupied);
                        }
                        break;
                    }
                    self.set_index(idx, BeliefCell::Free);
                }
            } else {
                for rc in ray {
                    if rc.t_enter >= range {
                        break;
                    }
                    let idx = self.geometry.index(rc.cell);
                    self.set_index(idx, BeliefCell::Free);
                }
            }
        }
        Ok(())
    }

    /// ASCII snapshot: `?` unknown, `.` free, `#` occupied, with a meta line.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut out = String::with_capacity(g.len() + g.height + 64);
        out.push_str(&format!(
            "meta resolution={} origin={},{}\n",
            g.resolution, g.origin.x, g.origin.y
        ));
        for row in self.cells.chunks(g.width) {
            out.extend(row.iter().map(|c| c.symbol()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (meta, rows) = split_grid_text(text)?;
        let width = rows.first().map_or(0, |(_, r)| r.chars().count());
        if width == 0 {
            return Err(Error::EmptyInput("belief snapshot"));
        }
        let mut belief = OccupancyBelief::new(GridGeometry::new(
            width,
            rows.len(),
            meta.resolution,
            meta.origin,
        ));
        for (row_idx, &(line, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Format {
                    line,
                    column: width + 1,
                    message: "ragged row".into(),
                });
            }
            for (col, ch) in row.chars().enumerate() {
                let v = match ch {
                    '?' => BeliefCell::Unknown,
                    '.' => BeliefCell::Free,
                    '#' => BeliefCell::Occupied,
                    other => {
                        return Err(Error::Format {
                            line,
                            column: col + 1,
                            message: format!("unexpected character `{other}`"),
                        })
                    }
                };
                belief.set(Cell::new(row_idx, col), v);
            }
        }
        Ok(belief)
    }
}

/// The set of world cells that count toward map completeness: free cells
/// 4-connected to the start cell plus the occupied cells 8-adjacent to them.
#[derive(Clone, Debug)]
pub struct Explorable {
    geometry: GridGeometry,
    indices: Vec<usize>,
}

impl Explorable {
    pub fn new(world: &WorldMap, start: Point) -> Result<Self> {
        let g = *world.geometry();
        let start_cell =
            g.cell_of(start)
                .filter(|c| world.is_free(*c))
                .ok_or(Error::InvalidPose {
                    x: start.x,
                    y: start.y,
                })?;
        let mut mark = vec![false; g.len()];
        let mut queue = VecDeque::from([start_cell]);
        mark[g.index(start_cell)] = true;
        let mut free_cells = Vec::new();
        while let Some(c) = queue.pop_front() {
            free_cells.push(c);
            for n in g.neighbors4(c) {
                let i = g.index(n);
                if !mark[i] && world.is_free(n) {
                    mark[i] = true;
                    queue.push_back(n);
                }
            }
        }
        for c in free_cells {
            for n in g.neighbors8(c) {
                if world.cell(n) == WorldCell::Occupied {
                    mark[g.index(n)] = true;
                }
            }
        }
        let indices = (0..g.len()).filter(|&i| mark[i]).collect();
        Ok(Self {
            geometry: g,
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of explorable cells the belief has observed.
    pub fn observed(&self, belief: &OccupancyBelief) -> Result<usize> {
        if !belief.geometry().same_shape(&self.geometry) {
            return Err(Error::GeometryMismatch(format!(
                "belief {:?} vs world {:?}",
                belief.geometry(),
                self.geometry
            )));
        }
        let cells = belief.cells();
        Ok(self
            .indices
            .iter()
            .filter(|&&i| cells[i] != BeliefCell::Unknown)
            .count())
    }

    /// Fraction of explorable cells the belief has observed.
    pub fn completeness(&self, belief: &OccupancyBelief) -> Result<f64> {
        let seen = self.observed(belief)?;
        Ok(if self.indices.is_empty() {
            1.0
        } else {
            seen as f64 / self.indices.len() as f64
        })
    }
}

/// One-shot completeness of `belief` against `world` for a robot that
/// started at `start`.
pub fn completeness(belief: &OccupancyBelief, world: &WorldMap, start: Point) -> Result<f64> {
    Explorable::new(world, start)?.completeness(belief)
}
