//! Ground-truth environment: world files, simulated 2D lidar and kinematic
//! path following.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridGeometry, GridRay, Point};

/// Default map resolution in meters per cell.
pub const DEFAULT_RESOLUTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorldCell {
    Free,
    Occupied,
}

/// Immutable ground-truth occupancy grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldMap {
    geometry: GridGeometry,
    cells: Vec<WorldCell>,
}

impl WorldMap {
    /// Builds a world from rows of cells, forcing the outer border to
    /// `Occupied`.
    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Point,
        mut cells: Vec<WorldCell>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter("world must have at least one cell".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Parameter(format!(
                "resolution {resolution} must be > 0"
            )));
        }
        if cells.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (height, width),
                actual: (cells.len() / width.max(1), width),
            });
        }
        for row in 0..height {
            for col in 0..width {
                if row == 0 || col == 0 || row + 1 == height || col + 1 == width {
                    cells[row * width + col] = WorldCell::Occupied;
                }
            }
        }
        if !cells.contains(&WorldCell::Free) {
            return Err(Error::EmptyWorld);
        }
        Ok(Self {
            geometry: GridGeometry::new(width, height, resolution, origin),
            cells,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cell(&self, cell: Cell) -> WorldCell {
        self.cells[self.geometry.index(cell)]
    }

    pub fn cells(&self) -> &[WorldCell] {
        &self.cells
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.cell(cell) == WorldCell::Free
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == WorldCell::Free).count()
    }

    /// Returns a copy with one extra occupied cell.
    pub fn with_occupied(&self, cell: Cell) -> Self {
        let mut out = self.clone();
        let idx = out.geometry.index(cell);
        out.cells[idx] = WorldCell::Occupied;
        out
    }

    /// Renders the world back to the ASCII world format.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut out = format!(
            "meta resolution={} origin={},{}\n",
            g.resolution, g.origin.x, g.origin.y
        );
        for row in 0..g.height {
            for col in 0..g.width {
                out.push(match self.cell(Cell::new(row, col)) {
                    WorldCell::Free => '.',
                    WorldCell::Occupied => '#',
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Header values accepted on an optional first `meta` line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct MapMeta {
    pub resolution: f64,
    pub origin: Point,
}

/// Whitespace-separated tokens with their 1-based starting column.
fn tokens_with_columns(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line
        .char_indices()
        .chain(std::iter::once((line.len(), ' ')))
    {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((line[..s].chars().count() + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    out
}

pub(crate) fn parse_meta(line: &str, line_no: usize) -> Result<MapMeta> {
    let mut meta = MapMeta {
        resolution: DEFAULT_RESOLUTION,
        origin: Point::new(0.0, 0.0),
    };
    let bad = |column: usize, message: String| Error::Format {
        line: line_no,
        column,
        message,
    };
    for (column, token) in tokens_with_columns(line).into_iter().skip(1) {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad(column, format!("expected key=value, got `{token}`")))?;
        match key {
            "resolution" => {
                meta.resolution = value
                    .parse::<f64>()
                    .ok()
                    .filter(|r| *r > 0.0 && r.is_finite())
                    .ok_or_else(|| bad(column, format!("invalid resolution `{value}`")))?;
            }
            "origin" => {
                let parsed = value
                    .split_once(',')
                    .and_then(|(x, y)| Some(Point::new(x.parse().ok()?, y.parse().ok()?)));
                meta.origin =
                    parsed.ok_or_else(|| bad(column, format!("invalid origin `{value}`")))?;
            }
            other => return Err(bad(column, format!("unknown meta key `{other}`"))),
        }
    }
    Ok(meta)
}

/// Splits grid text into the meta header (or defaults) and 1-based numbered
/// grid rows, dropping trailing blank lines.
pub(crate) fn split_grid_text(text: &str) -> Result<(MapMeta, Vec<(usize, &str)>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .peekable();
    let mut meta = MapMeta {
        resolution: DEFAULT_RESOLUTION,
        origin: Point::new(0.0, 0.0),
    };
    if let Some(&(no, first)) = lines.peek() {
        if first.starts_with("meta") {
            meta = parse_meta(first, no)?;
            lines.next();
        }
    }
    let mut rows: Vec<(usize, &str)> = lines.collect();
    while rows.last().is_some_and(|(_, l)| l.trim().is_empty()) {
        rows.pop();
    }
    Ok((meta, rows))
}

/// Parses the ASCII world format: `#` occupied, `.` free, one row per line,
/// optional first line `meta resolution=<r> origin=<x>,<y>`.
pub fn load_world(text: &str) -> Result<WorldMap> {
    let (meta, rows) = split_grid_text(text)?;
    let Some(&(_, first)) = rows.first() else {
        return Err(Error::EmptyWorld);
    };
    let width = first.chars().count();
    let mut cells = Vec::with_capacity(width * rows.len());
    for &(line, row) in &rows {
        let mut n = 0;
        for (i, ch) in row.chars().enumerate() {
            cells.push(match ch {
                '#' => WorldCell::Occupied,
                '.' => WorldCell::Free,
                other => {
                    return Err(Error::Format {
                        line,
                        column: i + 1,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            });
            n += 1;
        }
        if n != width {
            return Err(Error::Format {
                line,
                column: n.min(width) + 1,
                message: format!("ragged row: expected {width} cells, found {n}"),
            });
        }
    }
    WorldMap::from_cells(width, rows.len(), meta.resolution, meta.origin, cells)
}

pub fn load_world_file(path: impl AsRef<std::path::Path>) -> Result<WorldMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    load_world(&text)
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[-π, π)`.
    pub heading: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorModel {
    pub fov: f64,
    pub max_range: f64,
    pub beam_count: usize,
    pub noise_sigma: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov: PI,
            max_range: 8.0,
            beam_count: 361,
            noise_sigma: 0.02,
        }
    }
}

impl SensorModel {
    pub fn noiseless(self) -> Self {
        Self {
            noise_sigma: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI) {
            return Err(Error::Parameter(format!("fov {} not in (0, 2π]", self.fov)));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::Parameter("max_range must be > 0".into()));
        }
        if self.beam_count < 2 {
            return Err(Error::Parameter("beam_count must be >= 2".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Parameter("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Beam angles relative to the heading, evenly spanning the field of view.
    pub fn beam_angles(&self) -> Vec<f64> {
        let step = self.fov / (self.beam_count - 1) as f64;
        (0..self.beam_count)
            .map(|i| -self.fov / 2.0 + i as f64 * step)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeScan {
    pub pose: RobotPose,
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub hit_flags: Vec<bool>,
    pub max_range: f64,
}

const MIN_RANGE: f64 = 1e-6;

/// Distance along a ray to the first occupied cell boundary, or `None` if no
/// obstacle is met within `max_range`.
pub fn trace_ray(world: &WorldMap, from: Point, angle: f64, max_range: f64) -> Option<f64> {
    for rc in GridRay::new(world.geometry(), from, angle) {
        if rc.t_enter > max_range {
            return None;
        }
        if world.cell(rc.cell) == WorldCell::Occupied {
            return Some(rc.t_enter);
        }
    }
    None
}

/// Simulates one lidar sweep. Ranges carry additive Gaussian noise on hits
/// and are clamped to `(0, max_range]`.
pub fn raycast(
    world: &WorldMap,
    pose: &RobotPose,
    model: &SensorModel,
    rng_seed: u64,
) -> Result<RangeScan> {
    model.validate()?;
    let origin = pose.position();
    match world.geometry().cell_of(origin) {
        Some(c) if world.is_free(c) => {}
        _ => {
            return Err(Error::InvalidPose {
                x: pose.x,
                y: pose.y,
            })
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = (model.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, model.noise_sigma).expect("sigma validated"));
    let angles = model.beam_angles();
    let mut ranges = Vec::with_capacity(angles.len());
    let mut hit_flags = Vec::with_capacity(angles.len());
    for &rel in &angles {
        match trace_ray(world, origin, pose.heading + rel, model.max_range) {
            Some(d) => {
                let noisy = match &noise {
                    Some(n) => d + n.sample(&mut rng),
                    None => d,
                };
                ranges.push(noisy.clamp(MIN_RANGE, model.max_range));
                hit_flags.push(true);
            }
            None => {
                ranges.push(model.max_range);
                hit_flags.push(false);
            }
        }
    }
    Ok(RangeScan {
        pose: *pose,
        angles,
        ranges,
        hit_flags,
        max_range: model.max_range,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Traversal {
    pub pose: RobotPose,
    pub elapsed: f64,
    pub distance: f64,
}

/// Moves the robot kinematically through `path` at constant `speed`.
pub fn traverse(
    world: &WorldMap,
    start: &RobotPose,
    path: &[Point],
    speed: f64,
) -> Result<Traversal> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::Parameter(format!("speed {speed} must be > 0")));
    }
    for p in path {
        let cell = world
            .geometry()
            .cell_of(*p)
            .ok_or(Error::OutOfBounds { x: p.x, y: p.y })?;
        if !world.is_free(cell) {
            return Err(Error::Collision {
                row: cell.row,
                col: cell.col,
            });
        }
    }
    let mut pose = *start;
    let mut prev = start.position();
    let mut distance = 0.0;
    for &p in path {
        let seg = prev.dist(p);
        if seg > 0.0 {
            pose.heading = wrap_angle((p.y - prev.y).atan2(p.x - prev.x));
        }
        distance += seg;
        prev = p;
    }
    pose.x = prev.x;
    pose.y = prev.y;
    Ok(Traversal {
        pose,
        elapsed: distance / speed,
        distance,
    })
}
