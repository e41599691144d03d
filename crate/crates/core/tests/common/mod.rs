#![allow(dead_code)]

use mapaware_core::worldsim::WorldCell;
use mapaware_core::{BeliefCell, Cell, GridGeometry, OccupancyBelief, Point, WorldMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random world with scattered occupied cells and a solid border.
pub fn random_world(seed: u64, min_side: usize, max_side: usize, density: f64) -> WorldMap {
    let mut rng = rng(seed);
    let w = rng.random_range(min_side..=max_side);
    let h = rng.random_range(min_side..=max_side);
    let cells = (0..w * h)
        .map(|_| {
            if rng.random_bool(density) {
                WorldCell::Occupied
            } else {
                WorldCell::Free
            }
        })
        .collect();
    let origin = Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let mut cells: Vec<WorldCell> = cells;
    // keep at least one interior cell free
    cells[w + 1] = WorldCell::Free;
    WorldMap::from_cells(w, h, 0.1, origin, cells).expect("valid world")
}

pub fn free_cells(world: &WorldMap) -> Vec<Cell> {
    let g = world.geometry();
    (0..g.len())
        .map(|i| g.cell_at(i))
        .filter(|c| world.is_free(*c))
        .collect()
}

/// A random point strictly inside a random free cell.
pub fn free_point<R: Rng>(world: &WorldMap, rng: &mut R) -> Point {
    let cells = free_cells(world);
    let c = cells[rng.random_range(0..cells.len())];
    let g = world.geometry();
    Point::new(
        g.origin.x + (c.col as f64 + rng.random_range(0.05..0.95)) * g.resolution,
        g.origin.y + (c.row as f64 + rng.random_range(0.05..0.95)) * g.resolution,
    )
}

/// Belief that already knows the whole world.
pub fn known_belief(world: &WorldMap) -> OccupancyBelief {
    let g = *world.geometry();
    let mut b = OccupancyBelief::new(g);
    for i in 0..g.len() {
        let c = g.cell_at(i);
        b.set(
            c,
            if world.is_free(c) {
                BeliefCell::Free
            } else {
                BeliefCell::Occupied
            },
        );
    }
    b
}

/// Belief with independent per-cell states; `p_free`/`p_occ` pick the mix.
pub fn random_belief(seed: u64, max_side: usize, p_free: f64, p_occ: f64) -> OccupancyBelief {
    let mut rng = rng(seed);
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let mut b = OccupancyBelief::new(GridGeometry::new(w, h, 0.1, Point::new(0.0, 0.0)));
    for i in 0..w * h {
        let u: f64 = rng.random();
        let v = if u < p_free {
            BeliefCell::Free
        } else if u < p_free + p_occ {
            BeliefCell::Occupied
        } else {
            continue;
        };
        b.set(Cell::new(i / w, i % w), v);
    }
    b
}

pub fn world_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../worlds")
        .join(format!("{name}.world"))
}

/// Perfect maze from a depth-first carve: `cells × cells` maze cells, each
/// `pitch` grid cells wide with walls `wall` cells thick.
pub fn maze(seed: u64, cells: usize, pitch: usize, wall: usize) -> WorldMap {
    let side = cells * pitch + wall;
    let mut grid = vec![WorldCell::Occupied; side * side];
    let mut open = |r0: usize, r1: usize, c0: usize, c1: usize| {
        for r in r0..r1 {
            for c in c0..c1 {
                grid[r * side + c] = WorldCell::Free;
            }
        }
    };
    let mut r = rng(seed);
    let mut seen = vec![false; cells * cells];
    let mut stack = vec![(0usize, 0usize)];
    seen[0] = true;
    let room = |i: usize| i * pitch + wall;
    open(
        room(0),
        room(0) + pitch - wall,
        room(0),
        room(0) + pitch - wall,
    );
    while let Some(&(i, j)) = stack.last() {
        let mut next = Vec::new();
        if i > 0 && !seen[(i - 1) * cells + j] {
            next.push((i - 1, j));
        }
        if i + 1 < cells && !seen[(i + 1) * cells + j] {
            next.push((i + 1, j));
        }
        if j > 0 && !seen[i * cells + j - 1] {
            next.push((i, j - 1));
        }
        if j + 1 < cells && !seen[i * cells + j + 1] {
            next.push((i, j + 1));
        }
        if next.is_empty() {
            stack.pop();
            continue;
        }
        let (ni, nj) = next[r.random_range(0..next.len())];
        seen[ni * cells + nj] = true;
        let (r0, r1) = (room(i.min(ni)), room(i.max(ni)) + pitch - wall);
        let (c0, c1) = (room(j.min(nj)), room(j.max(nj)) + pitch - wall);
        open(r0, r1, c0, c1);
        stack.push((ni, nj));
    }
    WorldMap::from_cells(side, side, 0.1, Point::new(0.0, 0.0), grid).expect("valid maze")
}

/// Closed square room of `side` interior cells.
pub fn room(side: usize) -> WorldMap {
    let w = side + 2;
    let cells = (0..w * w).map(|_| WorldCell::Free).collect();
    WorldMap::from_cells(w, w, 0.1, Point::new(0.0, 0.0), cells).expect("valid room")
}
