//! Boundary-point pipeline: ROI index to world coordinates, density
//! screening against the exclusion set, mean-shift compression and
//! nearest-proxy selection.

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, Point};
use crate::meanshift::{meanshift, Bandwidth, PointIndex};
use crate::structmap::{RoiGrid, RoiIndex};

/// World coordinates of an ROI: `x = x_o + n·i·r`, `y = y_o + n·j·r` with
/// `i` the column and `j` the row.
pub fn roi_to_world(index: RoiIndex, origin: Point, n: usize, r: f64) -> Point {
    let step = n as f64 * r;
    Point::new(
        origin.x + index.col as f64 * step,
        origin.y + index.row as f64 * step,
    )
}

/// Raw boundary points `L'` for every boundary-flagged ROI, row-major.
pub fn raw_boundaries(roi: &RoiGrid, geometry: &GridGeometry) -> Vec<Point> {
    roi.boundary_indices()
        .map(|idx| roi_to_world(idx, geometry.origin, roi.n(), geometry.resolution))
        .collect()
}

/// Points proven unreachable, matched with a tolerance ball.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExclusionSet {
    tolerance: f64,
    points: Vec<Point>,
}

impl ExclusionSet {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            points: Vec::new(),
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds `p`. Returns false if it was already present.
    pub fn insert(&mut self, p: Point) -> bool {
        if self.points.contains(&p) {
            return false;
        }
        self.points.push(p);
        true
    }

    pub fn contains(&self, p: Point) -> bool {
        self.points.iter().any(|q| q.dist(p) <= self.tolerance)
    }
}

/// `L_b = { l ∈ L' : |N(l, R)| ≥ k, l ∉ Q }`, with `l` counted in its own
/// neighbourhood. Preserves the order of `raw`.
pub fn feasible_boundaries(raw: &[Point], radius: f64, k: usize, q: &ExclusionSet) -> Vec<Point> {
    if raw.is_empty() {
        return Vec::new();
    }
    let index = PointIndex::new(raw, radius);
    raw.iter()
        .copied()
        .filter(|&l| index.count_within(l, radius) >= k && !q.contains(l))
        .collect()
}

/// Maps each centroid to its nearest member of `feasible` (ties go to the
/// lexicographically smallest), dropping duplicates. Output is sorted.
pub fn proxy_map(centroids: &[Point], feasible: &[Point]) -> Result<Vec<Point>> {
    if feasible.is_empty() {
        return Err(Error::EmptyInput("proxy candidates"));
    }
    let mut out: Vec<Point> = centroids
        .iter()
        .map(|u| {
            *feasible
                .iter()
                .min_by(|a, b| {
                    a.dist_sq(*u)
                        .total_cmp(&b.dist_sq(*u))
                        .then_with(|| a.lex_cmp(b))
                })
                .expect("non-empty")
        })
        .collect();
    out.sort_by(Point::lex_cmp);
    out.dedup();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrontierParams {
    /// Feasibility radius `R` in meters.
    pub radius: f64,
    /// Minimum neighbour count `k`.
    pub min_neighbors: usize,
    pub bandwidth: Bandwidth,
}

impl FrontierParams {
    /// Defaults for ROI size `n` at resolution `r`: `R = 1`, `k = 3`,
    /// adaptive bandwidth floored at one ROI footprint.
    pub fn for_roi(n: usize, r: f64) -> Self {
        Self {
            radius: 1.0,
            min_neighbors: 3,
            bandwidth: Bandwidth::Adaptive {
                floor: n as f64 * r,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || self.min_neighbors == 0 {
            return Err(Error::Parameter(format!(
                "feasibility needs R > 0 and k >= 1 (got R={}, k={})",
                self.radius, self.min_neighbors
            )));
        }
        Ok(())
    }
}

/// The pipeline's point sets plus the episode's exclusion set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundarySet {
    pub raw: Vec<Point>,
    pub feasible: Vec<Point>,
    pub centroids: Vec<Point>,
    pub representatives: Vec<Point>,
    pub excluded: ExclusionSet,
}

impl BoundarySet {
    /// Empty set whose exclusion tolerance is half an ROI footprint.
    pub fn new(n: usize, r: f64) -> Self {
        Self {
            excluded: ExclusionSet::new(n as f64 * r / 2.0),
            ..Default::default()
        }
    }

    /// Recomputes `L'`, `L_b`, `L_c` and `L` from raw boundary points,
    /// keeping `Q`.
    pub fn recompute(&mut self, raw: Vec<Point>, params: &FrontierParams) -> Result<()> {
        params.validate()?;
        self.feasible =
            feasible_boundaries(&raw, params.radius, params.min_neighbors, &self.excluded);
        self.raw = raw;
        if self.feasible.is_empty() {
            self.centroids.clear();
            self.representatives.clear();
            return Ok(());
        }
        let bw = params.bandwidth.resolve(&self.feasible);
        self.centroids = meanshift(&self.feasible, bw)?;
        self.representatives = proxy_map(&self.centroids, &self.feasible)?;
        Ok(())
    }

    /// Runs the full pipeline on a classified ROI grid.
    pub fn update(
        &mut self,
        roi: &RoiGrid,
        geometry: &GridGeometry,
        params: &FrontierParams,
    ) -> Result<()> {
        self.recompute(raw_boundaries(roi, geometry), params)
    }

    /// Adds `p` to `Q`. Takes effect at the next recompute.
    pub fn mark_unreachable(&mut self, p: Point) -> bool {
        self.excluded.insert(p)
    }
}
