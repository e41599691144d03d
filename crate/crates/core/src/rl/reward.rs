use crate::grid::Point;

/// `r = μ·ΔC − ‖L_t − L_{t−1}‖`, with `ΔC` the number of newly visited ROIs.
pub fn compute_reward(delta_coverage: usize, waypoint: Point, previous: Point, mu: f64) -> f64 {
    mu * delta_coverage as f64 - waypoint.dist(previous)
}
