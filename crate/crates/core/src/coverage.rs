//! In-region search: zigzag sweeps, seeded unexplored-area estimates, and
//! frontier exploration.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::ExplorationRegion;
use crate::world::{Cell, Known, KnownMap};

/// Seeds drawn per unexplored-area estimate.
pub const DEFAULT_SEEDS: usize = 200;
/// Re-sweep only when more than this fraction of the region looks unexplored.
pub const RESWEEP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leg {
    /// Travel to the start of a lane.
    Entry,
    /// Run along the lane.
    Run,
}

/// What the sweep wants next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStep {
    Goto(Cell),
    /// All lanes handled; `swept_any` is false if no lane could be run.
    Done { swept_any: bool },
}

/// Boustrophedon plan over a rectangular region: horizontal lanes `2r` apart,
/// alternating direction, progressing away from the starting edge.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    region: ExplorationRegion,
    lanes: Vec<i32>,
    current: usize,
    leg: Leg,
    eastward: bool,
    entry_x: i32,
    swept_any: bool,
    r: i32,
}

impl SweepPlan {
    /// Starts at the region corner nearest to `from`.
    pub fn new(region: ExplorationRegion, r: i32, from: Cell) -> Self {
        let spacing = 2 * r;
        let y0 = region.origin.y;
        let n = (region.height + spacing - 1) / spacing;
        let mut lanes: Vec<i32> = (0..n)
            .map(|i| (y0 + r + spacing * i).min(region.y_end() - 1))
            .collect();
        lanes.dedup();
        if (from.y - region.y_end()).abs() < (from.y - y0).abs() {
            lanes.reverse();
        }
        let (west, east) = (region.origin.x, region.x_end() - 1);
        let eastward = (from.x - west).abs() <= (from.x - east).abs();
        Self {
            region,
            lanes,
            current: 0,
            leg: Leg::Entry,
            eastward,
            entry_x: if eastward { west } else { east },
            swept_any: false,
            r,
        }
    }

    pub fn region(&self) -> &ExplorationRegion {
        &self.region
    }

    pub fn lanes(&self) -> &[i32] {
        &self.lanes
    }

    pub fn lane_spacing(&self) -> i32 {
        if self.lanes.len() > 1 {
            (self.lanes[1] - self.lanes[0]).abs()
        } else {
            self.region.height
        }
    }

    pub fn current_lane(&self) -> usize {
        self.current
    }

    fn step_x(&self) -> i32 {
        if self.eastward {
            1
        } else {
            -1
        }
    }

    fn in_region_x(&self, x: i32) -> bool {
        x >= self.region.origin.x && x < self.region.x_end()
    }

    /// First non-blocked cell of the lane at or after `x` in the sweep direction.
    fn lane_entry(&self, map: &KnownMap, y: i32, mut x: i32) -> Option<Cell> {
        while self.in_region_x(x) {
            let c = Cell::new(x, y);
            if !map.is_known_blocked(c) {
                return Some(c);
            }
            x += self.step_x();
        }
        None
    }

    /// Last non-blocked cell reachable along the lane from `from`.
    fn lane_end(&self, map: &KnownMap, from: Cell) -> Cell {
        let mut c = from;
        loop {
            let n = c.offset(self.step_x(), 0);
            if !self.in_region_x(n.x) || map.is_known_blocked(n) {
                return c;
            }
            c = n;
        }
    }

    fn advance_lane(&mut self, x: i32) {
        self.current += 1;
        self.leg = Leg::Entry;
        self.eastward = !self.eastward;
        self.entry_x = x.clamp(self.region.origin.x, self.region.x_end() - 1);
    }

    /// Gives up on the current leg (e.g. its target proved unreachable).
    pub fn skip_leg(&mut self, pos: Cell) {
        self.advance_lane(pos.x);
    }

    /// Row of the current lane, pulled back inside known walls. `None` when
    /// the pulled-back row would be more than `r` away (nothing left to see).
    fn lane_row(&self, map: &KnownMap) -> Option<i32> {
        let y = self.lanes[self.current];
        let b = map.bounds();
        let lo = b.min_y.unwrap_or(i32::MIN);
        let hi = b.max_y.map_or(i32::MAX, |v| v - 1);
        let clamped = y.clamp(lo, hi).clamp(self.region.origin.y, self.region.y_end() - 1);
        ((clamped - y).abs() <= self.r && clamped >= lo && clamped <= hi).then_some(clamped)
    }

    /// Next target for a robot at `pos`, recomputed from current knowledge.
    pub fn next_target(&mut self, map: &KnownMap, pos: Cell) -> SweepStep {
        while self.current < self.lanes.len() {
            let Some(y) = self.lane_row(map) else {
                // lane lies wholly beyond a known wall
                self.advance_lane(pos.x);
                continue;
            };
            match self.leg {
                Leg::Entry => match self.lane_entry(map, y, self.entry_x) {
                    Some(entry) if entry == pos => self.leg = Leg::Run,
                    Some(entry) => {
                        self.entry_x = entry.x;
                        return SweepStep::Goto(entry);
                    }
                    None => self.advance_lane(pos.x),
                },
                Leg::Run => {
                    if pos.y != y || !self.in_region_x(pos.x) {
                        // knocked off the lane by a detour; resume from here
                        match self.lane_entry(map, y, pos.x.clamp(self.region.origin.x, self.region.x_end() - 1)) {
                            Some(c) if c != pos => return SweepStep::Goto(c),
                            Some(_) => {}
                            None => {
                                self.advance_lane(pos.x);
                                continue;
                            }
                        }
                    }
                    let end = self.lane_end(map, pos);
                    if end == pos {
                        self.swept_any = true;
                        self.advance_lane(pos.x);
                    } else {
                        return SweepStep::Goto(end);
                    }
                }
            }
        }
        SweepStep::Done {
            swept_any: self.swept_any,
        }
    }
}

/// Result of seeding a region with uniform samples.
#[derive(Debug, Clone, PartialEq)]
pub struct UnexploredEstimate {
    pub sampled_seeds: usize,
    pub unexplored_hits: usize,
    pub hit_cells: Vec<Cell>,
    region_area: i64,
}

impl UnexploredEstimate {
    pub fn fraction(&self) -> f64 {
        self.unexplored_hits as f64 / self.sampled_seeds as f64
    }

    pub fn area(&self) -> f64 {
        self.fraction() * self.region_area as f64
    }

    /// Worth another pass: enough of the region is unexplored, and it adds up to at least one sensor disk.
    pub fn is_significant(&self, r: f64) -> bool {
        self.fraction() > RESWEEP_FRACTION && self.area() >= std::f64::consts::PI * r * r
    }
}

/// Draws `n_seeds` uniform cells in the region and reports the unexplored ones.
pub fn estimate_unexplored(
    region: &ExplorationRegion,
    map: &KnownMap,
    n_seeds: usize,
    seed: u64,
) -> UnexploredEstimate {
    assert!(n_seeds >= 1, "need at least one seed");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hit_cells = Vec::new();
    for _ in 0..n_seeds {
        let c = Cell::new(
            rng.gen_range(region.origin.x..region.x_end()),
            rng.gen_range(region.origin.y..region.y_end()),
        );
        if !map.is_explored(c) {
            hit_cells.push(c);
        }
    }
    UnexploredEstimate {
        sampled_seeds: n_seeds,
        unexplored_hits: hit_cells.len(),
        hit_cells,
        region_area: region.area(),
    }
}

const NEIGHBOURS4: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// True if `c` is known free and 4-adjacent to an unknown cell.
pub fn is_frontier(map: &KnownMap, c: Cell) -> bool {
    map.is_known_free(c)
        && NEIGHBOURS4
            .iter()
            .any(|&(dx, dy)| map.get(c.offset(dx, dy)) == Known::Unknown)
}

/// Every frontier cell of the map, in row-major order.
pub fn detect_frontiers(map: &KnownMap) -> Vec<Cell> {
    let mut out: Vec<Cell> = map
        .iter()
        .filter(|&(c, k)| k == Known::Free && is_frontier(map, c))
        .map(|(c, _)| c)
        .collect();
    out.sort_by_key(|c| c.row_major_key());
    out
}

/// Frontier candidates maintained from sensing deltas.
///
/// Cells only ever leave the frontier as knowledge grows, so stale entries
/// are pruned lazily when queried.
#[derive(Debug, Clone, Default)]
pub struct FrontierSet {
    cells: HashSet<Cell>,
}

impl FrontierSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers freshly known cells.
    pub fn update(&mut self, map: &KnownMap, fresh: &[Cell]) {
        for &c in fresh {
            if is_frontier(map, c) {
                self.cells.insert(c);
            }
        }
    }

    /// Rebuilds from a full scan (after a map merge).
    pub fn rebuild(&mut self, map: &KnownMap) {
        self.cells = detect_frontiers(map).into_iter().collect();
    }

    pub fn prune(&mut self, map: &KnownMap) {
        self.cells.retain(|&c| is_frontier(map, c));
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.cells.contains(&c)
    }

    pub fn remove(&mut self, c: Cell) {
        self.cells.remove(&c);
    }

    pub fn iter(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().copied()
    }
}

/// Angular sector around a point, as a bisector angle and half-width in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub apex: Cell,
    pub bisector: f64,
    pub half_width: f64,
}

impl Sector {
    pub fn contains(&self, c: Cell) -> bool {
        if c == self.apex {
            return true;
        }
        let a = ((c.y - self.apex.y) as f64).atan2((c.x - self.apex.x) as f64);
        let mut d = (a - self.bisector).rem_euclid(std::f64::consts::TAU);
        if d > std::f64::consts::PI {
            d -= std::f64::consts::TAU;
        }
        d.abs() <= self.half_width + 1e-12
    }
}

/// Penalty multiplier for frontiers outside the robot's own sector.
pub const OFF_SECTOR_FACTOR: f64 = 1.5;

/// How a robot ranks frontiers beyond plain distance.
#[derive(Debug, Clone, Copy)]
pub enum FrontierPreference<'a> {
    None,
    /// Skip frontiers inside these regions unless nothing else is left.
    Avoid(&'a [ExplorationRegion]),
    /// Inflate the cost of frontiers outside the sector.
    Sector(Sector),
}

/// Nearest acceptable frontier; ties go to the lowest row, then column.
pub fn select_frontier<I>(frontiers: I, pos: Cell, pref: FrontierPreference<'_>) -> Option<Cell>
where
    I: IntoIterator<Item = Cell>,
{
    let key = |c: Cell, cost: f64| (cost, c.y, c.x);
    let better = |a: (f64, i32, i32), b: (f64, i32, i32)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt()
    };
    let mut best: Option<((f64, i32, i32), Cell)> = None;
    let mut fallback: Option<((f64, i32, i32), Cell)> = None;
    for c in frontiers {
        let d = c.dist2(pos) as f64;
        let (slot, cost) = match pref {
            FrontierPreference::None => (&mut best, d),
            FrontierPreference::Avoid(regions) => {
                if regions.iter().any(|r| r.contains(c)) {
                    (&mut fallback, d)
                } else {
                    (&mut best, d)
                }
            }
            FrontierPreference::Sector(s) => {
                let f = if s.contains(c) { 1.0 } else { OFF_SECTOR_FACTOR };
                (&mut best, d.sqrt() * f)
            }
        };
        let k = key(c, cost);
        if slot.as_ref().is_none_or(|(bk, _)| better(k, *bk)) {
            *slot = Some((k, c));
        }
    }
    best.or(fallback).map(|(_, c)| c)
}
