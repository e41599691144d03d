//! Structured map representation: ROI classification, visited map and
//! pose mask, stacked into a three-channel decision input.
//!
//! The belief grid is tiled into `n × n` regions of interest (ROIs). Each ROI
//! is classified from its occupied/free/unknown counts `(C_o, C_f, C_u)`:
//!
//! ```text
//!  1  if C_o >= α·n²
//!  0  if C_o <  α·n² and C_f >= β·C_u
//! -1  otherwise
//! ```
//!
//! An ROI is a boundary region when it holds no occupied cell but at least
//! one free and one unknown cell.

use crate::belief::{BeliefCell, OccupancyBelief};
use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::worldsim::RobotPose;

/// Row/column of an ROI in the structured grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoiIndex {
    pub row: usize,
    pub col: usize,
}

impl RoiIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionParams {
    /// ROI side length in belief cells.
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Force the ROI grid to at least this many rows/cols (padding with
    /// unknown). `None` uses `ceil(height / n) × ceil(width / n)`.
    pub shape: Option<(usize, usize)>,
}

impl Default for PartitionParams {
    fn default() -> Self {
        Self {
            n: 4,
            alpha: 0.18,
            beta: 1.0,
            shape: None,
        }
    }
}

impl PartitionParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Parameter("ROI size n must be >= 1".into()));
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Parameter(format!(
                "alpha ({}) and beta ({}) must be >= 0",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// ROI grid dimensions for a belief geometry.
    pub fn roi_shape(&self, geometry: &GridGeometry) -> Result<(usize, usize)> {
        self.validate()?;
        let rows = geometry.height.div_ceil(self.n);
        let cols = geometry.width.div_ceil(self.n);
        match self.shape {
            None => Ok((rows, cols)),
            Some((f, g)) if f >= rows && g >= cols => Ok((f, g)),
            Some(shape) => Err(Error::DimensionMismatch {
                expected: shape,
                actual: (rows, cols),
            }),
        }
    }
}

/// Per-ROI cell counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoiCounts {
    pub occupied: u32,
    pub free: u32,
    pub unknown: u32,
}

/// Three-way classifier on one ROI's counts.
pub fn classify(counts: RoiCounts, n: usize, alpha: f64, beta: f64) -> i8 {
    let area = (n * n) as f64;
    if counts.occupied as f64 >= alpha * area {
        1
    } else if counts.free as f64 >= beta * counts.unknown as f64 {
        0
    } else {
        -1
    }
}

pub fn is_boundary(counts: RoiCounts) -> bool {
    counts.occupied == 0 && counts.free > 0 && counts.unknown > 0
}

/// Classified ROI grid (`M_d`) with boundary flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiGrid {
    rows: usize,
    cols: usize,
    n: usize,
    values: Vec<i8>,
    boundary: Vec<bool>,
    counts: Vec<RoiCounts>,
}

impl RoiGrid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn value(&self, idx: RoiIndex) -> i8 {
        self.values[idx.row * self.cols + idx.col]
    }

    pub fn is_boundary(&self, idx: RoiIndex) -> bool {
        self.boundary[idx.row * self.cols + idx.col]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn counts(&self, idx: RoiIndex) -> RoiCounts {
        self.counts[idx.row * self.cols + idx.col]
    }

    /// Boundary-flagged ROIs in row-major order.
    pub fn boundary_indices(&self) -> impl Iterator<Item = RoiIndex> + '_ {
        self.boundary
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| RoiIndex::new(i / self.cols, i % self.cols))
    }

    /// Builds a grid directly from classified values (no boundary flags).
    pub fn from_values(rows: usize, cols: usize, n: usize, values: Vec<i8>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: (rows, cols),
                actual: (values.len() / cols.max(1), cols),
            });
        }
        Ok(Self {
            rows,
            cols,
            n,
            boundary: vec![false; values.len()],
            counts: vec![RoiCounts::default(); values.len()],
            values,
        })
    }
}

/// Tiles the belief into ROIs in a single pass and classifies each one.
/// Cells beyond the belief's right/bottom edge count as unknown.
pub fn partition(belief: &OccupancyBelief, params: &PartitionParams) -> Result<RoiGrid> {
    let (rows, cols) = params.roi_shape(belief.geometry())?;
    let n = params.n;
    let g = belief.geometry();
    let mut tallies = vec![[0u32; 3]; rows * cols];
    for (r, row) in belief.cells().chunks(g.width).enumerate() {
        let base = (r / n) * cols;
        for (c, cell) in row.iter().enumerate() {
            tallies[base + c / n][*cell as usize] += 1;
        }
    }
    let area = (n * n) as u32;
    let mut values = Vec::with_capacity(tallies.len());
    let mut boundary = Vec::with_capacity(tallies.len());
    let mut counts = Vec::with_capacity(tallies.len());
    for t in tallies {
        let free = t[BeliefCell::Free as usize];
        let occupied = t[BeliefCell::Occupied as usize];
        let c = RoiCounts {
            occupied,
            free,
            unknown: area - free - occupied,
        };
        values.push(classify(c, n, params.alpha, params.beta));
        boundary.push(is_boundary(c));
        counts.push(c);
    }
    Ok(RoiGrid {
        rows,
        cols,
        n,
        values,
        boundary,
        counts,
    })
}

/// Binary map of ROIs ever classified as known (`M_v`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisitedGrid {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl VisitedGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, idx: RoiIndex) -> bool {
        self.bits[idx.row * self.cols + idx.col] == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }

    /// ORs in every ROI whose value is not `-1`. Returns the number of bits
    /// newly set.
    pub fn update(&mut self, roi: &RoiGrid) -> Result<usize> {
        if roi.shape() != self.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.shape(),
                actual: roi.shape(),
            });
        }
        let mut added = 0;
        for (bit, &v) in self.bits.iter_mut().zip(roi.values()) {
            if v != -1 && *bit == 0 {
                *bit = 1;
                added += 1;
            }
        }
        Ok(added)
    }
}

/// Functional form of [`VisitedGrid::update`].
pub fn update_visited(visited: &VisitedGrid, roi: &RoiGrid) -> Result<VisitedGrid> {
    let mut out = visited.clone();
    out.update(roi)?;
    Ok(out)
}

/// Chebyshev neighbourhood of the robot's ROI (`M_p`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoseMask {
    rows: usize,
    cols: usize,
    lambda: usize,
    bits: Vec<u8>,
}

impl PoseMask {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }

    pub fn get(&self, idx: RoiIndex) -> bool {
        self.bits[idx.row * self.cols + idx.col] == 1
    }
}

pub fn pose_mask(robot: RoiIndex, lambda: usize, rows: usize, cols: usize) -> Result<PoseMask> {
    if robot.row >= rows || robot.col >= cols {
        return Err(Error::Parameter(format!(
            "robot ROI {robot:?} outside {rows}x{cols} grid"
        )));
    }
    let mut bits = vec![0u8; rows * cols];
    let r0 = robot.row.saturating_sub(lambda);
    let r1 = (robot.row + lambda).min(rows - 1);
    let c0 = robot.col.saturating_sub(lambda);
    let c1 = (robot.col + lambda).min(cols - 1);
    for r in r0..=r1 {
        bits[r * cols + c0..=r * cols + c1].fill(1);
    }
    Ok(PoseMask {
        rows,
        cols,
        lambda,
        bits,
    })
}

/// ROI containing the robot: `floor((pose - origin) / (n·r))` per axis.
pub fn robot_roi(geometry: &GridGeometry, pose: &RobotPose, n: usize) -> Result<RoiIndex> {
    let cell = geometry
        .cell_of(pose.position())
        .ok_or(Error::OutOfBounds {
            x: pose.x,
            y: pose.y,
        })?;
    Ok(RoiIndex::new(cell.row / n, cell.col / n))
}

/// Three-channel tensor `{M_d; M_v; M_p}`, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredMap {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StructuredMap {
    pub const CHANNELS: usize = 3;

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; Self::CHANNELS * rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::CHANNELS * rows * cols {
            return Err(Error::DimensionMismatch {
                expected: (rows, cols),
                actual: (data.len() / (Self::CHANNELS * cols.max(1)), cols),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// `(channels, rows, cols)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (Self::CHANNELS, self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.rows * self.cols;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Text dump: a `structmap <rows> <cols>` header followed by the three
    /// channel grids, each separated by a blank line.
    pub fn to_text(&self) -> String {
        let mut out = format!("structmap {} {}\n", self.rows, self.cols);
        for c in 0..Self::CHANNELS {
            if c > 0 {
                out.push('\n');
            }
            for row in self.channel(c).chunks(self.cols) {
                let line: Vec<String> = row.iter().map(|v| format!("{}", *v as i64)).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let dims: Vec<usize> = header
            .strip_prefix("structmap")
            .map(|rest| {
                rest.split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect()
            })
            .unwrap_or_default();
        let [rows, cols] = dims[..] else {
            return Err(Error::Format {
                line: 1,
                column: 1,
                message: "expected `structmap <rows> <cols>`".into(),
            });
        };
        let mut data = Vec::with_capacity(Self::CHANNELS * rows * cols);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            for (j, tok) in line.split_whitespace().enumerate() {
                let v: i64 = tok.parse().map_err(|_| Error::Format {
                    line: i + 2,
                    column: j + 1,
                    message: format!("bad value `{tok}`"),
                })?;
                data.push(v as f64);
            }
        }
        Self::from_data(rows, cols, data)
    }
}

/// Stacks `(M_d, M_v, M_p)` in that fixed channel order.
pub fn assemble(roi: &RoiGrid, visited: &VisitedGrid, mask: &PoseMask) -> Result<StructuredMap> {
    let shape = roi.shape();
    for other in [visited.shape(), mask.shape()] {
        if other != shape {
            return Err(Error::DimensionMismatch {
                expected: shape,
                actual: other,
            });
        }
    }
    let mut data = Vec::with_capacity(3 * shape.0 * shape.1);
    data.extend(roi.values().iter().map(|&v| v as f64));
    data.extend(visited.bits().iter().map(|&v| v as f64));
    data.extend(mask.bits().iter().map(|&v| v as f64));
    StructuredMap::from_data(shape.0, shape.1, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, Point};

    fn counts(o: u32, f: u32, u: u32) -> RoiCounts {
        RoiCounts {
            occupied: o,
            free: f,
            unknown: u,
        }
    }

    #[test]
    fn classifier_matches_table_values() {
        // α·n² = 2.88 at n = 4
        assert_eq!(classify(counts(3, 13, 0), 4, 0.18, 1.0), 1);
        assert_eq!(classify(counts(2, 14, 0), 4, 0.18, 1.0), 0);
        assert_eq!(classify(counts(0, 16, 0), 4, 0.18, 1.0), 0);
        assert!(!is_boundary(counts(0, 16, 0)));
        assert_eq!(classify(counts(0, 8, 8), 4, 0.18, 1.0), 0);
        assert!(is_boundary(counts(0, 8, 8)));
        assert_eq!(classify(counts(0, 7, 9), 4, 0.18, 1.0), -1);
        assert_eq!(classify(counts(0, 0, 16), 4, 0.18, 1.0), -1);
    }

    fn belief_from(rows: &[&str]) -> OccupancyBelief {
        let text = rows.join("\n");
        OccupancyBelief::from_text(&text).unwrap()
    }

    #[test]
    fn partition_pads_with_unknown() {
        let b = belief_from(&[".....", ".....", "....."]);
        let p = PartitionParams {
            n: 2,
            ..Default::default()
        };
        let roi = partition(&b, &p).unwrap();
        assert_eq!(roi.shape(), (2, 3));
        assert_eq!(roi.counts(RoiIndex::new(0, 0)), counts(0, 4, 0));
        assert_eq!(roi.counts(RoiIndex::new(0, 2)), counts(0, 2, 2));
        assert_eq!(roi.counts(RoiIndex::new(1, 2)), counts(0, 1, 3));
        assert_eq!(roi.value(RoiIndex::new(1, 2)), -1);
        let forced = partition(
            &b,
            &PartitionParams {
                shape: Some((4, 4)),
                ..p
            },
        )
        .unwrap();
        assert_eq!(forced.shape(), (4, 4));
        assert_eq!(forced.value(RoiIndex::new(3, 3)), -1);
        assert!(partition(
            &b,
            &PartitionParams {
                shape: Some((1, 1)),
                ..p
            }
        )
        .is_err());
    }

    #[test]
    fn partition_rejects_bad_parameters() {
        let b = belief_from(&["..", ".."]);
        for p in [
            PartitionParams {
                n: 0,
                ..Default::default()
            },
            PartitionParams {
                alpha: -0.1,
                ..Default::default()
            },
            PartitionParams {
                beta: f64::NAN,
                ..Default::default()
            },
        ] {
            assert!(matches!(partition(&b, &p), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn visited_accumulates() {
        let mut v = VisitedGrid::new(1, 3);
        let unknown = RoiGrid::from_values(1, 3, 4, vec![-1, -1, -1]).unwrap();
        assert_eq!(v.update(&unknown).unwrap(), 0);
        assert_eq!(v.count(), 0);
        let seen = RoiGrid::from_values(1, 3, 4, vec![0, -1, 1]).unwrap();
        assert_eq!(v.update(&seen).unwrap(), 2);
        assert!(v.get(RoiIndex::new(0, 0)));
        assert_eq!(v.update(&unknown).unwrap(), 0);
        assert_eq!(v.count(), 2);
        let wrong = RoiGrid::from_values(3, 1, 4, vec![0, 0, 0]).unwrap();
        assert!(v.update(&wrong).is_err());
    }

    #[test]
    fn pose_mask_shapes() {
        let m = pose_mask(RoiIndex::new(10, 10), 3, 32, 64).unwrap();
        assert_eq!(m.count(), 49);
        assert!(m.get(RoiIndex::new(7, 7)) && m.get(RoiIndex::new(13, 13)));
        assert!(!m.get(RoiIndex::new(14, 10)) && !m.get(RoiIndex::new(6, 10)));
        assert_eq!(
            pose_mask(RoiIndex::new(0, 0), 3, 32, 64).unwrap().count(),
            16
        );
        let single = pose_mask(RoiIndex::new(5, 9), 0, 32, 64).unwrap();
        assert_eq!(single.count(), 1);
        assert!(single.get(RoiIndex::new(5, 9)));
        assert!(pose_mask(RoiIndex::new(32, 0), 3, 32, 64).is_err());
    }

    #[test]
    fn robot_roi_floors_per_axis() {
        let g = GridGeometry::new(256, 128, 0.1, Point::new(0.0, 0.0));
        let pose = RobotPose::new(1.25, 0.85, 0.0);
        assert_eq!(robot_roi(&g, &pose, 4).unwrap(), RoiIndex::new(2, 3));
        assert_eq!(Cell::new(8, 12).row / 4, 2);
    }

    #[test]
    fn assemble_stacks_channels() {
        let roi = RoiGrid::from_values(32, 64, 4, vec![0; 32 * 64]).unwrap();
        let v = VisitedGrid::new(32, 64);
        let m = PoseMask {
            rows: 32,
            cols: 64,
            lambda: 3,
            bits: vec![0; 32 * 64],
        };
        let s = assemble(&roi, &v, &m).unwrap();
        assert_eq!(s.shape(), (3, 32, 64));
        assert!(s.data().iter().all(|&x| x == 0.0));

        let values: Vec<i8> = (0..32 * 64).map(|i| (i % 3) as i8 - 1).collect();
        let roi = RoiGrid::from_values(32, 64, 4, values.clone()).unwrap();
        let mask = pose_mask(RoiIndex::new(3, 4), 3, 32, 64).unwrap();
        let s = assemble(&roi, &v, &mask).unwrap();
        let ch0: Vec<i8> = s.channel(0).iter().map(|&x| x as i8).collect();
        assert_eq!(ch0, values);
        assert_eq!(s.channel(2).iter().sum::<f64>(), 49.0);
        let back = StructuredMap::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);

        let small = VisitedGrid::new(2, 2);
        assert!(assemble(&roi, &small, &mask).is_err());
    }
}
