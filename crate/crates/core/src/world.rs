//! Static gridworld, sensing, and robot-local knowledge maps.
//!
//! The world is an occupancy grid with an implicit hard boundary: anything
//! outside `[0, width) x [0, height)` is inaccessible. Robots never read the
//! grid directly. They learn it through [`GridWorld::sense`], which reports
//! out-of-world cells as [`CellClass::Boundary`] so walls are only known once
//! they come into sensor range.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum fraction of the world the generator will cover with obstacles.
pub const MAX_OBSTACLE_FRACTION: f64 = 0.20;
/// Placement attempts per obstacle before generation gives up.
pub const PLACEMENT_RETRIES: usize = 200;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world dimensions must be positive, got {width}x{height}")]
    BadDimensions { width: i32, height: i32 },
    #[error("obstacle mask has {got} entries, expected {expected}")]
    MaskSize { got: usize, expected: usize },
    #[error("obstacle spec cannot be satisfied: {0}")]
    Infeasible(String),
    #[error("invalid obstacle spec `{0}`")]
    BadSpec(String),
    #[error("sensor centre {0} is not accessible")]
    InaccessibleCentre(Cell),
    #[error("malformed environment file: {0}")]
    Parse(String),
    #[error("cannot read environment file {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Integer grid coordinate. `x` is the column, `y` the row (row 0 is south).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn dist2(self, other: Cell) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Cell) -> f64 {
        (self.dist2(other) as f64).sqrt()
    }

    /// Number of 8-connected moves between the two cells in free space.
    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn is_8_adjacent(self, other: Cell) -> bool {
        self != other && self.chebyshev(other) == 1
    }

    /// Ordering used for deterministic tie-breaks: lowest row first, then lowest column.
    pub fn row_major_key(self) -> (i32, i32) {
        (self.y, self.x)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// What a sensor reports for a single cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    Free,
    Obstacle,
    Boundary,
}

/// Circular sensing area centred on a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorFootprint {
    pub center: Cell,
    pub radius: i32,
}

impl SensorFootprint {
    pub fn new(center: Cell, radius: i32) -> Self {
        assert!(radius >= 1, "sensor radius must be at least one cell");
        Self { center, radius }
    }
}

/// Precomputed offsets of every lattice point within a Euclidean radius.
#[derive(Debug, Clone)]
pub struct DiskKernel {
    radius: i32,
    offsets: Vec<(i32, i32)>,
}

impl DiskKernel {
    pub fn new(radius: i32) -> Self {
        assert!(radius >= 1, "sensor radius must be at least one cell");
        let r2 = (radius as i64) * (radius as i64);
        let mut offsets = Vec::new();
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if (dx as i64) * (dx as i64) + (dy as i64) * (dy as i64) <= r2 {
                    offsets.push((dx, dy));
                }
            }
        }
        Self { radius, offsets }
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Static 2-D occupancy environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    width: i32,
    height: i32,
    obstacles: Vec<bool>,
}

impl GridWorld {
    /// An obstacle-free world.
    pub fn empty(width: i32, height: i32) -> Result<Self, WorldError> {
        if width <= 0 || height <= 0 {
            return Err(WorldError::BadDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            obstacles: vec![false; (width as usize) * (height as usize)],
        })
    }

    pub fn from_mask(width: i32, height: i32, obstacles: Vec<bool>) -> Result<Self, WorldError> {
        if width <= 0 || height <= 0 {
            return Err(WorldError::BadDimensions { width, height });
        }
        let expected = (width as usize) * (height as usize);
        if obstacles.len() != expected {
            return Err(WorldError::MaskSize {
                got: obstacles.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            obstacles,
        })
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn area(&self) -> usize {
        self.obstacles.len()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    fn index(&self, c: Cell) -> usize {
        (c.y as usize) * (self.width as usize) + c.x as usize
    }

    /// Row-major index of an in-bounds cell.
    pub fn cell_index(&self, c: Cell) -> Option<usize> {
        self.in_bounds(c).then(|| self.index(c))
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.obstacles[self.index(c)]
    }

    /// False iff `c` lies outside the world or on an obstacle.
    pub fn is_accessible(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.obstacles[self.index(c)]
    }

    pub fn set_obstacle(&mut self, c: Cell, blocked: bool) {
        if self.in_bounds(c) {
            let i = self.index(c);
            self.obstacles[i] = blocked;
        }
    }

    /// Marks every cell of the axis-aligned rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn fill_rect(&mut self, x0: i32, y0: i32, w: i32, h: i32) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.set_obstacle(Cell::new(x, y), true);
            }
        }
    }

    pub fn classify(&self, c: Cell) -> CellClass {
        if !self.in_bounds(c) {
            CellClass::Boundary
        } else if self.obstacles[self.index(c)] {
            CellClass::Obstacle
        } else {
            CellClass::Free
        }
    }

    pub fn free_count(&self) -> usize {
        self.obstacles.iter().filter(|b| !**b).count()
    }

    pub fn obstacle_mask(&self) -> &[bool] {
        &self.obstacles
    }

    /// Classification of every cell in the footprint.
    pub fn sense(&self, footprint: &SensorFootprint) -> Result<Vec<(Cell, CellClass)>, WorldError> {
        let kernel = DiskKernel::new(footprint.radius);
        let mut out = Vec::with_capacity(kernel.len());
        self.sense_with(&kernel, footprint.center, |c, class| out.push((c, class)))?;
        Ok(out)
    }

    /// Allocation-free sensing with a cached kernel.
    pub fn sense_with<F: FnMut(Cell, CellClass)>(
        &self,
        kernel: &DiskKernel,
        center: Cell,
        mut visit: F,
    ) -> Result<(), WorldError> {
        if !self.is_accessible(center) {
            return Err(WorldError::InaccessibleCentre(center));
        }
        for &(dx, dy) in kernel.offsets() {
            let c = center.offset(dx, dy);
            visit(c, self.classify(c));
        }
        Ok(())
    }

    /// Renders the environment text format: a `width height` header followed by
    /// `height` rows of `.`/`#`, row 0 (south) first.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.area() + self.height as usize + 16);
        s.push_str(&format!("{} {}\n", self.width, self.height));
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.obstacles[self.index(Cell::new(x, y))] {
                    '#'
                } else {
                    '.'
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_text()).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }
}

impl FromStr for GridWorld {
    type Err = WorldError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| WorldError::Parse("empty file".into()))?;
        let dims: Vec<&str> = header.split(' ').collect();
        if dims.len() != 2 {
            return Err(WorldError::Parse(format!("bad header `{header}`")));
        }
        let parse_dim = |s: &str| {
            s.parse::<i32>()
                .map_err(|_| WorldError::Parse(format!("bad dimension `{s}`")))
        };
        let width = parse_dim(dims[0])?;
        let height = parse_dim(dims[1])?;
        let mut world = GridWorld::empty(width, height)?;
        for y in 0..height {
            let row = lines
                .next()
                .ok_or_else(|| WorldError::Parse(format!("missing row {y}")))?;
            if row.len() != width as usize {
                return Err(WorldError::Parse(format!(
                    "row {y} has {} characters, expected {width}",
                    row.len()
                )));
            }
            for (x, ch) in row.bytes().enumerate() {
                match ch {
                    b'.' => {}
                    b'#' => world.set_obstacle(Cell::new(x as i32, y), true),
                    other => {
                        return Err(WorldError::Parse(format!(
                            "unexpected character `{}` at ({x}, {y})",
                            other as char
                        )))
                    }
                }
            }
        }
        if lines.next().is_some_and(|l| !l.is_empty()) {
            return Err(WorldError::Parse("trailing content after last row".into()));
        }
        Ok(world)
    }
}

/// Inclusive integer range used by [`ObstacleSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: i32,
    pub max: i32,
}

impl Span {
    pub const fn new(min: i32, max: i32) -> Self {
        Self { min, max }
    }

    pub const fn exactly(v: i32) -> Self {
        Self { min: v, max: v }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> i32 {
        rng.gen_range(self.min..=self.max)
    }

    fn is_valid(&self) -> bool {
        self.min <= self.max
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.min == self.max {
            write!(f, "{}", self.min)
        } else {
            write!(f, "{}-{}", self.min, self.max)
        }
    }
}

/// Count and size ranges for randomly placed rectangles and discs.
///
/// Text form: `rects=COUNT:SIZE,circles=COUNT:RADIUS` where each range is
/// `N` or `MIN-MAX`, e.g. `rects=4-8:20-60,circles=1-3:10-25`. Either part
/// may be omitted; `none` means an empty world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub rect_count: Span,
    pub rect_size: Span,
    pub circle_count: Span,
    pub circle_radius: Span,
}

impl ObstacleSpec {
    pub const fn none() -> Self {
        Self {
            rect_count: Span::exactly(0),
            rect_size: Span::exactly(1),
            circle_count: Span::exactly(0),
            circle_radius: Span::exactly(1),
        }
    }

    pub const fn rects(count: i32, size: i32) -> Self {
        Self {
            rect_count: Span::exactly(count),
            rect_size: Span::exactly(size),
            ..Self::none()
        }
    }

    /// Sparse unstructured worlds used by the experiment presets.
    pub const fn sparse() -> Self {
        Self {
            rect_count: Span::new(5, 10),
            rect_size: Span::new(15, 50),
            circle_count: Span::new(2, 5),
            circle_radius: Span::new(8, 20),
        }
    }

    fn validate(&self) -> Result<(), WorldError> {
        let ok = self.rect_count.is_valid()
            && self.rect_size.is_valid()
            && self.circle_count.is_valid()
            && self.circle_radius.is_valid()
            && self.rect_count.min >= 0
            && self.circle_count.min >= 0
            && self.rect_size.min >= 1
            && self.circle_radius.min >= 1;
        if ok {
            Ok(())
        } else {
            Err(WorldError::BadSpec(self.to_string()))
        }
    }
}

impl fmt::Display for ObstacleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rects={}:{},circles={}:{}",
            self.rect_count, self.rect_size, self.circle_count, self.circle_radius
        )
    }
}

impl FromStr for ObstacleSpec {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WorldError::BadSpec(s.to_string());
        let mut spec = ObstacleSpec::none();
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(spec);
        }
        if s == "sparse" {
            return Ok(ObstacleSpec::sparse());
        }
        let parse_span = |t: &str| -> Result<Span, WorldError> {
            match t.split_once('-') {
                Some((a, b)) => Ok(Span::new(
                    a.parse().map_err(|_| bad())?,
                    b.parse().map_err(|_| bad())?,
                )),
                None => Ok(Span::exactly(t.parse().map_err(|_| bad())?)),
            }
        };
        for part in s.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            let (count, size) = value.split_once(':').ok_or_else(bad)?;
            let (count, size) = (parse_span(count)?, parse_span(size)?);
            match key.trim() {
                "rects" => {
                    spec.rect_count = count;
                    spec.rect_size = size;
                }
                "circles" => {
                    spec.circle_count = count;
                    spec.circle_radius = size;
                }
                _ => return Err(bad()),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Clearance between obstacles, and between obstacles and the boundary.
const OBSTACLE_GAP: i32 = 2;

/// Generates a world with non-overlapping rectangles and rasterised discs.
///
/// The result is a pure function of the arguments. Obstacles stay at least
/// [`OBSTACLE_GAP`] cells away from each other and from the boundary, and
/// never cover more than [`MAX_OBSTACLE_FRACTION`] of the area.
pub fn generate_random(
    seed: u64,
    width: i32,
    height: i32,
    spec: &ObstacleSpec,
) -> Result<GridWorld, WorldError> {
    spec.validate()?;
    let mut world = GridWorld::empty(width, height)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = (MAX_OBSTACLE_FRACTION * world.area() as f64).floor() as usize;
    let mut used = 0usize;

    let n_rects = spec.rect_count.sample(&mut rng);
    let n_circles = spec.circle_count.sample(&mut rng);
    let mut shapes: Vec<Shape> = Vec::new();

    let mut place = |make: &mut dyn FnMut(&mut ChaCha8Rng) -> Option<Shape>,
                     rng: &mut ChaCha8Rng,
                     shapes: &mut Vec<Shape>|
     -> Result<(), WorldError> {
        for _ in 0..PLACEMENT_RETRIES {
            let Some(shape) = make(rng) else { continue };
            if used + shape.area() > cap {
                continue;
            }
            if shapes.iter().any(|s| s.too_close(&shape)) {
                continue;
            }
            used += shape.area();
            shapes.push(shape);
            return Ok(());
        }
        Err(WorldError::Infeasible(format!(
            "could not place obstacle #{} after {PLACEMENT_RETRIES} attempts",
            shapes.len() + 1
        )))
    };

    for _ in 0..n_rects {
        let mut make = |rng: &mut ChaCha8Rng| {
            let w = spec.rect_size.sample(rng);
            let h = spec.rect_size.sample(rng);
            let max_x = width - OBSTACLE_GAP - w;
            let max_y = height - OBSTACLE_GAP - h;
            if max_x < OBSTACLE_GAP || max_y < OBSTACLE_GAP {
                return None;
            }
            let x = rng.gen_range(OBSTACLE_GAP..=max_x);
            let y = rng.gen_range(OBSTACLE_GAP..=max_y);
            Some(Shape::Rect { x, y, w, h })
        };
        place(&mut make, &mut rng, &mut shapes)?;
    }
    for _ in 0..n_circles {
        let mut make = |rng: &mut ChaCha8Rng| {
            let r = spec.circle_radius.sample(rng);
            let lo = OBSTACLE_GAP + r;
            let (hx, hy) = (width - 1 - OBSTACLE_GAP - r, height - 1 - OBSTACLE_GAP - r);
            if hx < lo || hy < lo {
                return None;
            }
            let cx = rng.gen_range(lo..=hx);
            let cy = rng.gen_range(lo..=hy);
            Some(Shape::Disc { cx, cy, r })
        };
        place(&mut make, &mut rng, &mut shapes)?;
    }

    for shape in &shapes {
        shape.rasterize(&mut world);
    }
    Ok(world)
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { x: i32, y: i32, w: i32, h: i32 },
    Disc { cx: i32, cy: i32, r: i32 },
}

impl Shape {
    /// Bounding box as `(x0, y0, x1, y1)`, exclusive upper corner.
    fn bbox(&self) -> (i32, i32, i32, i32) {
        match *self {
            Shape::Rect { x, y, w, h } => (x, y, x + w, y + h),
            Shape::Disc { cx, cy, r } => (cx - r, cy - r, cx + r + 1, cy + r + 1),
        }
    }

    fn area(&self) -> usize {
        match *self {
            Shape::Rect { w, h, .. } => (w * h) as usize,
            Shape::Disc { r, .. } => DiskKernel::new(r).len(),
        }
    }

    fn too_close(&self, other: &Shape) -> bool {
        let (a0, a1, a2, a3) = self.bbox();
        let (b0, b1, b2, b3) = other.bbox();
        let gx = (b0 - a2).max(a0 - b2);
        let gy = (b1 - a3).max(a1 - b3);
        gx.max(gy) < OBSTACLE_GAP
    }

    fn rasterize(&self, world: &mut GridWorld) {
        match *self {
            Shape::Rect { x, y, w, h } => world.fill_rect(x, y, w, h),
            Shape::Disc { cx, cy, r } => {
                for &(dx, dy) in DiskKernel::new(r).offsets() {
                    world.set_obstacle(Cell::new(cx + dx, cy + dy), true);
                }
            }
        }
    }
}

/// Knowledge state of a cell in a robot's map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Known {
    Unknown = 0,
    Free = 1,
    Obstacle = 2,
    Boundary = 3,
}

impl From<CellClass> for Known {
    fn from(c: CellClass) -> Self {
        match c {
            CellClass::Free => Known::Free,
            CellClass::Obstacle => Known::Obstacle,
            CellClass::Boundary => Known::Boundary,
        }
    }
}

/// Walls inferred from sensed boundary cells. Each entry is the first
/// (or one-past-last) accessible coordinate on that side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KnownBounds {
    pub min_x: Option<i32>,
    pub max_x: Option<i32>,
    pub min_y: Option<i32>,
    pub max_y: Option<i32>,
}

impl KnownBounds {
    pub fn excludes(&self, c: Cell) -> bool {
        self.min_x.is_some_and(|v| c.x < v)
            || self.max_x.is_some_and(|v| c.x >= v)
            || self.min_y.is_some_and(|v| c.y < v)
            || self.max_y.is_some_and(|v| c.y >= v)
    }

    fn merge(&mut self, other: &KnownBounds) {
        self.min_x = self.min_x.or(other.min_x);
        self.max_x = self.max_x.or(other.max_x);
        self.min_y = self.min_y.or(other.min_y);
        self.max_y = self.max_y.or(other.max_y);
    }
}

/// A robot's explored map (its explored set plus what it learned there).
///
/// Storage covers the world extent padded by `pad` cells so out-of-world
/// cells within sensor range can be recorded. Map data is kept in
/// ground-truth coordinates; frame bookkeeping lives in the coordination
/// layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnownMap {
    origin: Cell,
    width: i32,
    height: i32,
    cells: Vec<Known>,
    bounds: KnownBounds,
    explored: usize,
}

impl KnownMap {
    pub fn new(world_width: i32, world_height: i32, pad: i32) -> Self {
        let width = world_width + 2 * pad;
        let height = world_height + 2 * pad;
        Self {
            origin: Cell::new(-pad, -pad),
            width,
            height,
            cells: vec![Known::Unknown; (width as usize) * (height as usize)],
            bounds: KnownBounds::default(),
            explored: 0,
        }
    }

    fn index(&self, c: Cell) -> Option<usize> {
        let x = c.x - self.origin.x;
        let y = c.y - self.origin.y;
        (x >= 0 && y >= 0 && x < self.width && y < self.height)
            .then(|| (y as usize) * (self.width as usize) + x as usize)
    }

    /// Stored extent as `(min corner, width, height)`.
    pub fn extent(&self) -> (Cell, i32, i32) {
        (self.origin, self.width, self.height)
    }

    pub fn bounds(&self) -> &KnownBounds {
        &self.bounds
    }

    pub fn get(&self, c: Cell) -> Known {
        if self.bounds.excludes(c) {
            return Known::Boundary;
        }
        match self.index(c) {
            Some(i) => self.cells[i],
            None => Known::Unknown,
        }
    }

    pub fn is_explored(&self, c: Cell) -> bool {
        self.get(c) != Known::Unknown
    }

    /// Cells known to be inaccessible. Unknown cells are not blocked.
    pub fn is_known_blocked(&self, c: Cell) -> bool {
        matches!(self.get(c), Known::Obstacle | Known::Boundary)
    }

    pub fn is_known_free(&self, c: Cell) -> bool {
        self.get(c) == Known::Free
    }

    /// Number of stored cells with any knowledge.
    pub fn explored_count(&self) -> usize {
        self.explored
    }

    fn set(&mut self, c: Cell, k: Known) -> bool {
        match self.index(c) {
            Some(i) if self.cells[i] == Known::Unknown && k != Known::Unknown => {
                self.cells[i] = k;
                self.explored += 1;
                true
            }
            _ => false,
        }
    }

    /// Records one sensing sweep. Returns the cells that were previously unknown.
    pub fn integrate(&mut self, readings: &[(Cell, CellClass)]) -> Vec<Cell> {
        let mut fresh = Vec::new();
        for &(c, class) in readings {
            if self.set(c, class.into()) {
                fresh.push(c);
            }
        }
        for &(c, class) in readings {
            if class == CellClass::Boundary {
                self.infer_wall(c);
            }
        }
        fresh
    }

    /// Senses directly from the world and records the result.
    pub fn sense_from(
        &mut self,
        world: &GridWorld,
        kernel: &DiskKernel,
        center: Cell,
        fresh: &mut Vec<Cell>,
    ) -> Result<(), WorldError> {
        let mut saw_boundary = false;
        world.sense_with(kernel, center, |c, class| {
            if self.set(c, class.into()) {
                fresh.push(c);
            }
            saw_boundary |= class == CellClass::Boundary;
        })?;
        if saw_boundary {
            for &(dx, dy) in kernel.offsets() {
                let c = center.offset(dx, dy);
                if world.classify(c) == CellClass::Boundary {
                    self.infer_wall(c);
                }
            }
        }
        Ok(())
    }

    /// A boundary cell next to a sensed in-world cell reveals a straight wall.
    fn infer_wall(&mut self, b: Cell) {
        let inside = |k: Known| matches!(k, Known::Free | Known::Obstacle);
        let stored = |m: &Self, c: Cell| m.index(c).map(|i| m.cells[i]).unwrap_or(Known::Unknown);
        if self.bounds.min_x.is_none() && inside(stored(self, b.offset(1, 0))) {
            self.bounds.min_x = Some(b.x + 1);
        }
        if self.bounds.max_x.is_none() && inside(stored(self, b.offset(-1, 0))) {
            self.bounds.max_x = Some(b.x);
        }
        if self.bounds.min_y.is_none() && inside(stored(self, b.offset(0, 1))) {
            self.bounds.min_y = Some(b.y + 1);
        }
        if self.bounds.max_y.is_none() && inside(stored(self, b.offset(0, -1))) {
            self.bounds.max_y = Some(b.y);
        }
    }

    /// Set union with another map of the same extent. Returns newly known cells.
    pub fn absorb(&mut self, other: &KnownMap) -> Vec<Cell> {
        assert_eq!(
            (self.origin, self.width, self.height),
            (other.origin, other.width, other.height),
            "maps must share an extent"
        );
        let mut fresh = Vec::new();
        for (i, (mine, theirs)) in self.cells.iter_mut().zip(&other.cells).enumerate() {
            if *mine == Known::Unknown && *theirs != Known::Unknown {
                *mine = *theirs;
                self.explored += 1;
                let x = (i % self.width as usize) as i32 + self.origin.x;
                let y = (i / self.width as usize) as i32 + self.origin.y;
                fresh.push(Cell::new(x, y));
            }
        }
        self.bounds.merge(&other.bounds);
        fresh
    }

    /// Iterates over every stored cell with its state.
    pub fn iter(&self) -> impl Iterator<Item = (Cell, Known)> + '_ {
        let w = self.width as usize;
        let o = self.origin;
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, k)| (Cell::new((i % w) as i32 + o.x, (i / w) as i32 + o.y), *k))
    }
}
