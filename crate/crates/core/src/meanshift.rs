//! Flat-kernel mean-shift with a uniform-grid neighbour index.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::Point;

const SHIFT_TOL: f64 = 1e-4;
const MAX_ITERS: usize = 300;

/// Bucket index over a fixed point set. Queries return candidate indices in
/// a fixed order so floating-point sums over them are reproducible.
pub(crate) struct PointIndex<'a> {
    points: &'a [Point],
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> PointIndex<'a> {
    pub(crate) fn new(points: &'a [Point], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(*p, cell)).or_default().push(i);
        }
        Self {
            points,
            cell,
            buckets,
        }
    }

    fn key(p: Point, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Calls `f` for every indexed point within `radius` of `q`
    /// (`radius` must not exceed the bucket size).
    pub(crate) fn for_each_within(&self, q: Point, radius: f64, mut f: impl FnMut(usize, Point)) {
        let (kx, ky) = Self::key(q, self.cell);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(bucket) = self.buckets.get(&(kx + dx, ky + dy)) else {
                    continue;
                };
                for &i in bucket {
                    let p = self.points[i];
                    if p.dist(q) <= radius {
                        f(i, p);
                    }
                }
            }
        }
    }

    pub(crate) fn count_within(&self, q: Point, radius: f64) -> usize {
        let mut n = 0;
        self.for_each_within(q, radius, |_, _| n += 1);
        n
    }
}

/// How the kernel bandwidth is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Mean distance to the `⌊0.3·N⌋`-th nearest neighbour (at least the
    /// first), never below `floor`.
    Adaptive { floor: f64 },
    /// Use exactly this bandwidth.
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(&self, points: &[Point]) -> f64 {
        match *self {
            Bandwidth::Fixed(bw) => bw,
            Bandwidth::Adaptive { floor } => estimate_bandwidth(points).max(floor),
        }
    }
}

/// Mean k-th nearest neighbour distance with `k = max(1, ⌊0.3·N⌋)`.
/// Returns 0 for fewer than two points.
pub fn estimate_bandwidth(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let k = ((n as f64 * 0.3) as usize).clamp(1, n - 1);
    let mut total = 0.0;
    let mut dists = Vec::with_capacity(n - 1);
    for (i, p) in points.iter().enumerate() {
        dists.clear();
        dists.extend(
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.dist(*q)),
        );
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        total += *kth;
    }
    total / n as f64
}

/// Runs flat-kernel mean-shift from every input point and returns the
/// merged modes sorted lexicographically.
pub fn meanshift(points: &[Point], bandwidth: f64) -> Result<Vec<Point>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("mean-shift input"));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Parameter(format!(
            "mean-shift bandwidth must be positive, got {bandwidth}"
        )));
    }
    let index = PointIndex::new(points, bandwidth);
    let mut modes: Vec<(usize, Point)> = points
        .iter()
        .map(|&start| {
            let mut x = start;
            let mut support = 1;
            for _ in 0..MAX_ITERS {
                let (mut sx, mut sy, mut cnt) = (0.0, 0.0, 0usize);
                index.for_each_within(x, bandwidth, |_, p| {
                    sx += p.x;
                    sy += p.y;
                    cnt += 1;
                });
                if cnt == 0 {
                    break;
                }
                support = cnt;
                let next = Point::new(sx / cnt as f64, sy / cnt as f64);
                let shift = next.dist(x);
                x = next;
                if shift < SHIFT_TOL {
                    break;
                }
            }
            (support, x)
        })
        .collect();

    modes.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.lex_cmp(&b.1)));
    let merge = bandwidth / 2.0;
    let mut kept: Vec<Point> = Vec::new();
    for (_, m) in modes {
        if kept.iter().all(|k| k.dist(m) >= merge) {
            kept.push(m);
        }
    }
    kept.sort_by(Point::lex_cmp);
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_collapse() {
        let pts = vec![Point::new(1.5, -2.0); 7];
        let bw = Bandwidth::Adaptive { floor: 0.4 }.resolve(&pts);
        assert_eq!(bw, 0.4);
        assert_eq!(meanshift(&pts, bw).unwrap(), vec![Point::new(1.5, -2.0)]);
    }

    #[test]
    fn singleton_and_empty() {
        let p = Point::new(0.3, 0.7);
        assert_eq!(meanshift(&[p], 0.4).unwrap(), vec![p]);
        assert!(matches!(meanshift(&[], 0.4), Err(Error::EmptyInput(_))));
        assert!(meanshift(&[p], 0.0).is_err());
    }

    #[test]
    fn kth_neighbour_bandwidth() {
        // four points on a line, unit spacing: k = 1, nearest distances all 1
        let pts: Vec<Point> = (0..4).map(|i| Point::new(i as f64, 0.0)).collect();
        assert_eq!(estimate_bandwidth(&pts), 1.0);
        assert_eq!(estimate_bandwidth(&pts[..1]), 0.0);
    }

    #[test]
    fn index_matches_brute_force() {
        let pts: Vec<Point> = (0..50)
            .map(|i| Point::new((i * 37 % 23) as f64 * 0.13, (i * 11 % 17) as f64 * 0.21))
            .collect();
        let idx = PointIndex::new(&pts, 1.0);
        for q in &pts {
            let brute = pts.iter().filter(|p| p.dist(*q) <= 1.0).count();
            assert_eq!(idx.count_within(*q, 1.0), brute);
        }
    }
}
