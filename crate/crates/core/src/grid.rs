//! Grid geometry shared by the world, the belief map and the planner.
//!
//! Cell `(row, col)` covers `x ∈ [x0 + col·r, x0 + (col+1)·r)` and
//! `y ∈ [y0 + row·r, y0 + (row+1)·r)`, where `(x0, y0)` is the top-left
//! corner of the map. Rows grow along +y.

use std::fmt;

/// A point in map coordinates (meters).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Lexicographic order on (x, y); the tie-break used everywhere.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Integer cell coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Point,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point) -> Self {
        Self {
            width,
            height,
            resolution,
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    /// Continuous grid coordinates `(col, row)` of a world point.
    #[inline]
    pub fn to_grid(&self, p: Point) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.resolution,
            (p.y - self.origin.y) / self.resolution,
        )
    }

    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        let (gx, gy) = self.to_grid(p);
        if !(gx >= 0.0 && gy >= 0.0) {
            return None;
        }
        let (col, row) = (gx.floor() as usize, gy.floor() as usize);
        (col < self.width && row < self.height).then_some(Cell::new(row, col))
    }

    pub fn cell_center(&self, cell: Cell) -> Point {
        Point::new(
            self.origin.x + (cell.col as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn same_shape(&self, other: &GridGeometry) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin == other.origin
    }

    /// 4-neighbours in fixed order (up, left, right, down).
    pub fn neighbors4(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let Cell { row, col } = cell;
        [
            (row.wrapping_sub(1), col),
            (row, col.wrapping_sub(1)),
            (row, col + 1),
            (row + 1, col),
        ]
        .into_iter()
        .filter(|&(r, c)| r < self.height && c < self.width)
        .map(|(r, c)| Cell::new(r, c))
    }

    /// 8-neighbours in row-major order.
    pub fn neighbors8(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let Cell { row, col } = cell;
        (-1isize..=1)
            .flat_map(move |dr| (-1isize..=1).map(move |dc| (dr, dc)))
            .filter(|&d| d != (0, 0))
            .filter_map(move |(dr, dc)| {
                let r = row as isize + dr;
                let c = col as isize + dc;
                (r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width)
                    .then(|| Cell::new(r as usize, c as usize))
            })
    }
}

/// One cell visited by [`GridRay`], with the ray distance (meters) at which
/// the ray enters it. The first cell has `t_enter == 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayCell {
    pub cell: Cell,
    pub t_enter: f64,
}

/// Amanatides–Woo grid traversal from a point along a heading.
///
/// Yields every cell the ray passes through, in order, until it leaves the
/// grid. When the ray crosses a cell corner exactly, the x step is taken first.
#[derive(Clone, Debug)]
pub struct GridRay {
    width: usize,
    height: usize,
    resolution: f64,
    col: isize,
    row: isize,
    step_col: isize,
    step_row: isize,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    t_enter: f64,
    done: bool,
}

impl GridRay {
    pub fn new(geometry: &GridGeometry, from: Point, heading: f64) -> Self {
        let (gx, gy) = geometry.to_grid(from);
        let (dx, dy) = (heading.cos(), heading.sin());
        let col = gx.floor() as isize;
        let row = gy.floor() as isize;
        let (step_col, t_max_x, t_delta_x) = axis_setup(gx, col, dx);
        let (step_row, t_max_y, t_delta_y) = axis_setup(gy, row, dy);
        let inside = gx >= 0.0
            && gy >= 0.0
            && (col as usize) < geometry.width
            && (row as usize) < geometry.height;
        Self {
            width: geometry.width,
            height: geometry.height,
            resolution: geometry.resolution,
            col,
            row,
            step_col,
            step_row,
            t_max_x,
            t_max_y,
            t_delta_x,
            t_delta_y,
            t_enter: 0.0,
            done: !inside,
        }
    }
}

fn axis_setup(g: f64, cell: isize, d: f64) -> (isize, f64, f64) {
    if d > 0.0 {
        (1, (cell as f64 + 1.0 - g) / d, 1.0 / d)
    } else if d < 0.0 {
        (-1, (g - cell as f64) / -d, -1.0 / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

impl Iterator for GridRay {
    type Item = RayCell;

    fn next(&mut self) -> Option<RayCell> {
        if self.done {
            return None;
        }
        let out = RayCell {
            cell: Cell::new(self.row as usize, self.col as usize),
            t_enter: self.t_enter * self.resolution,
        };
        if self.t_max_x <= self.t_max_y {
            self.col += self.step_col;
            self.t_enter = self.t_max_x;
            self.t_max_x += self.t_delta_x;
        } else {
            self.row += self.step_row;
            self.t_enter = self.t_max_y;
            self.t_max_y += self.t_delta_y;
        }
        if self.col < 0
            || self.row < 0
            || self.col as usize >= self.width
            || self.row as usize >= self.height
            || !self.t_enter.is_finite()
        {
            self.done = true;
        }
        Some(out)
    }
}
