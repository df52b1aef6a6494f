//! Point-to-goal motion on 8-connected grids.
//!
//! Robots move along digital straight lines and fall back to Bug-style
//! boundary following when the next cell is blocked. The boundary follower
//! keeps the obstacle on its left, so it circulates counterclockwise.
//!
//! Each planner returns the path (start exclusive, goal inclusive) and a
//! [`BugCertificate`] recording the obstacles met, which is enough to check
//! the classic worst-case bounds after the fact.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ExplorationRegion;
use crate::world::{Cell, GridWorld, KnownMap};

/// Unit moves, counterclockwise from east.
pub const DIRS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dx: i32, dy: i32) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("not a unit move")
}

/// Anything a planner can ask "is this cell blocked?".
pub trait Occupancy {
    fn is_blocked(&self, c: Cell) -> bool;
}

impl Occupancy for GridWorld {
    fn is_blocked(&self, c: Cell) -> bool {
        !self.is_accessible(c)
    }
}

impl<T: Occupancy + ?Sized> Occupancy for &T {
    fn is_blocked(&self, c: Cell) -> bool {
        (**self).is_blocked(c)
    }
}

/// A robot's planning view: its known map with unknown cells assumed free,
/// plus soft obstacles it prefers not to enter.
///
/// Cells outside the map's stored extent are treated as blocked. This is the
/// robot's virtual world; without it a partially known wall would be an
/// unbounded obstacle.
pub struct RobotView<'a> {
    pub map: &'a KnownMap,
    pub soft: &'a [ExplorationRegion],
}

impl<'a> RobotView<'a> {
    pub fn new(map: &'a KnownMap, soft: &'a [ExplorationRegion]) -> Self {
        Self { map, soft }
    }
}

impl Occupancy for RobotView<'_> {
    fn is_blocked(&self, c: Cell) -> bool {
        let (o, w, h) = self.map.extent();
        if c.x < o.x || c.y < o.y || c.x >= o.x + w || c.y >= o.y + h {
            return true;
        }
        self.map.is_known_blocked(c) || self.soft.iter().any(|r| r.contains(c))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NavError {
    #[error("goal {0} is blocked")]
    GoalBlocked(Cell),
    #[error("goal {goal} is unreachable from {from}")]
    Unreachable { from: Cell, goal: Cell },
    #[error("robot at {0} is enclosed on all sides")]
    Enclosed(Cell),
    #[error("planner exceeded {0} steps")]
    StepLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BugKind {
    Bug1,
    Bug2,
    DistBug,
}

impl BugKind {
    /// Coefficient on the obstacle term of the worst-case bound.
    pub fn bound_factor(self) -> f64 {
        match self {
            BugKind::Bug1 => 1.5,
            BugKind::Bug2 => 0.5,
            BugKind::DistBug => 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BugConfig {
    pub kind: BugKind,
    /// How far ahead the distance-bug leave test can see.
    pub sensor_range: i32,
    pub max_steps: usize,
}

impl BugConfig {
    pub fn new(kind: BugKind) -> Self {
        Self {
            kind,
            sensor_range: 20,
            max_steps: 1_000_000,
        }
    }
}

/// One boundary-following episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObstacleEncounter {
    pub hit: Cell,
    /// Length of the closed boundary walk around the obstacle.
    pub perimeter: usize,
    /// How often that walk crosses the segment from the leg start to the goal (at least 1).
    pub crossings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BugCertificate {
    pub start: Cell,
    pub goal: Cell,
    pub steps_taken: usize,
    pub obstacles_met: Vec<ObstacleEncounter>,
}

impl BugCertificate {
    pub fn delta(&self) -> f64 {
        self.start.dist(self.goal)
    }

    /// Worst-case step bound for `kind`, with 4 cells of slack per obstacle.
    pub fn bound(&self, kind: BugKind) -> f64 {
        let k = self.obstacles_met.len() as f64;
        let term: f64 = self
            .obstacles_met
            .iter()
            .map(|o| match kind {
                BugKind::Bug1 => o.perimeter as f64,
                _ => (o.crossings * o.perimeter) as f64,
            })
            .sum();
        self.delta() + kind.bound_factor() * term + 4.0 * k
    }

    pub fn within_bound(&self, kind: BugKind) -> bool {
        self.steps_taken as f64 <= self.bound(kind) + 1e-9
    }
}

fn round_div(a: i64, b: i64) -> i64 {
    // round half away from zero, b > 0
    if a >= 0 {
        (2 * a + b) / (2 * b)
    } else {
        -((-2 * a + b) / (2 * b))
    }
}

/// 8-connected digital line from `start` to `goal`, start exclusive, goal inclusive.
pub fn plan_straight(start: Cell, goal: Cell) -> Vec<Cell> {
    let dx = (goal.x - start.x) as i64;
    let dy = (goal.y - start.y) as i64;
    let n = dx.abs().max(dy.abs());
    (1..=n)
        .map(|i| {
            Cell::new(
                start.x + round_div(dx * i, n) as i32,
                start.y + round_div(dy * i, n) as i32,
            )
        })
        .collect()
}

fn first_step(from: Cell, goal: Cell) -> Cell {
    let dx = (goal.x - from.x) as i64;
    let dy = (goal.y - from.y) as i64;
    let n = dx.abs().max(dy.abs());
    Cell::new(
        from.x + round_div(dx, n) as i32,
        from.y + round_div(dy, n) as i32,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Follow {
    pos: Cell,
    /// Index into [`DIRS`] of a blocked neighbour.
    wall: u8,
}

fn follow_step<V: Occupancy>(view: &V, s: Follow) -> Option<Follow> {
    for i in 1..8u8 {
        let d = ((s.wall + 8 - i) % 8) as usize;
        let n = s.pos.offset(DIRS[d].0, DIRS[d].1);
        if !view.is_blocked(n) {
            let b = (d + 1) % 8;
            let wall = dir_index(DIRS[b].0 - DIRS[d].0, DIRS[b].1 - DIRS[d].1);
            return Some(Follow { pos: n, wall: wall as u8 });
        }
    }
    None
}

/// Boundary walk from a hit state until some state repeats.
struct Trace {
    states: Vec<Follow>,
    cycle_start: usize,
}

impl Trace {
    fn len(&self) -> usize {
        self.states.len()
    }

    /// Position after `i` moves along the walk, `i` in `0..=len`.
    fn pos_at(&self, i: usize) -> Cell {
        if i == self.states.len() {
            self.states[self.cycle_start].pos
        } else {
            self.states[i].pos
        }
    }
}

fn trace_boundary<V: Occupancy>(view: &V, start: Follow, limit: usize) -> Result<Trace, NavError> {
    let mut seen: HashMap<Follow, usize> = HashMap::new();
    let mut states = Vec::new();
    let mut s = start;
    loop {
        if let Some(&i) = seen.get(&s) {
            return Ok(Trace {
                states,
                cycle_start: i,
            });
        }
        if states.len() >= limit {
            return Err(NavError::StepLimit(limit));
        }
        seen.insert(s, states.len());
        states.push(s);
        s = follow_step(view, s).ok_or(NavError::Enclosed(s.pos))?;
    }
}

fn cross(a: Cell, b: Cell, p: Cell) -> i64 {
    let (ux, uy) = ((b.x - a.x) as i64, (b.y - a.y) as i64);
    let (vx, vy) = ((p.x - a.x) as i64, (p.y - a.y) as i64);
    ux * vy - uy * vx
}

fn on_segment_span(a: Cell, b: Cell, p: Cell) -> bool {
    let (ux, uy) = ((b.x - a.x) as i64, (b.y - a.y) as i64);
    let (vx, vy) = ((p.x - a.x) as i64, (p.y - a.y) as i64);
    let dot = ux * vx + uy * vy;
    dot >= 0 && dot <= ux * ux + uy * uy
}

/// Sign changes of the side-of-line test around the closed walk, counting
/// only those where the walk is level with the segment.
fn count_crossings(trace: &Trace, a: Cell, b: Cell) -> usize {
    let cycle: Vec<Cell> = (trace.cycle_start..trace.len())
        .map(|i| trace.states[i].pos)
        .collect();
    let signed: Vec<(i64, bool)> = cycle
        .iter()
        .map(|&p| (cross(a, b, p).signum(), on_segment_span(a, b, p)))
        .filter(|(s, _)| *s != 0)
        .collect();
    let mut n = 0;
    for i in 0..signed.len() {
        let (s0, in0) = signed[i];
        let (s1, in1) = signed[(i + 1) % signed.len()];
        if s0 != s1 && (in0 || in1) {
            n += 1;
        }
    }
    n.max(1)
}

/// Plans from `start` to `goal` with the configured Bug variant.
pub fn plan<V: Occupancy>(
    view: &V,
    start: Cell,
    goal: Cell,
    cfg: &BugConfig,
) -> Result<(Vec<Cell>, BugCertificate), NavError> {
    if view.is_blocked(goal) {
        return Err(NavError::GoalBlocked(goal));
    }
    let mut path: Vec<Cell> = Vec::new();
    let mut met = Vec::new();
    let mut pos = start;
    let mut leg_start = start;
    let mut left_from: HashSet<Cell> = HashSet::new();
    let unreachable = NavError::Unreachable { from: start, goal };

    'legs: loop {
        if pos == goal {
            break;
        }
        if path.len() > cfg.max_steps {
            return Err(NavError::StepLimit(cfg.max_steps));
        }
        let line = line_step(leg_start, goal, pos);
        if !view.is_blocked(line) {
            pos = line;
            path.push(pos);
            continue;
        }

        // Blocked: follow the boundary.
        let hit = pos;
        let wall = dir_index(line.x - pos.x, line.y - pos.y) as u8;
        let trace = trace_boundary(view, Follow { pos, wall }, cfg.max_steps)?;
        met.push(ObstacleEncounter {
            hit,
            perimeter: trace.len(),
            crossings: count_crossings(&trace, leg_start, goal),
        });
        let hit_d2 = hit.dist2(goal);
        let leaves = |prev: Cell, q: Cell, d_min: &mut f64| -> bool {
            match cfg.kind {
                BugKind::Bug1 => false,
                BugKind::Bug2 => {
                    let (cp, cq) = (cross(start, goal, prev), cross(start, goal, q));
                    let crossed = cq == 0 || (cp != 0 && cp.signum() != cq.signum());
                    crossed
                        && on_segment_span(start, goal, q)
                        && q.dist2(goal) < hit_d2
                        && !view.is_blocked(first_step(q, goal))
                }
                BugKind::DistBug => {
                    let (visible, reach) = free_reach(view, q, goal, cfg.sensor_range);
                    let d = q.dist(goal);
                    let leave = visible || (reach > 0.0 && d - reach <= *d_min - 1.0);
                    *d_min = d_min.min(d);
                    leave
                }
            }
        };
        let first_leave = |at: &dyn Fn(usize) -> Cell, len: usize| -> Option<usize> {
            let mut d_min = hit.dist(goal);
            (1..=len).find(|&i| {
                let q = at(i);
                q == goal || leaves(at(i - 1), q, &mut d_min)
            })
        };
        let n = trace.len();
        let cs = trace.cycle_start;
        let c = n - cs;
        // walking the cycle backwards follows the same boundary on the other hand
        let entry = (cs..n).find(|&j| trace.states[j].pos == hit).unwrap_or(cs);
        let fwd_at = |i: usize| trace.pos_at(i);
        let back_at = |i: usize| trace.states[cs + (entry - cs + c - i % c) % c].pos;
        let fwd = first_leave(&fwd_at, n);
        let back = if trace.states[entry].pos == hit && cfg.kind != BugKind::Bug1 {
            first_leave(&back_at, c)
        } else {
            None
        };
        let chosen = match (fwd, back) {
            (Some(f), Some(b)) if b < f => Some((b, &back_at as &dyn Fn(usize) -> Cell)),
            (Some(f), _) => Some((f, &fwd_at as &dyn Fn(usize) -> Cell)),
            (None, Some(b)) => Some((b, &back_at as &dyn Fn(usize) -> Cell)),
            (None, None) => None,
        };
        if let Some((k, at)) = chosen {
            path.extend((1..=k).map(at));
            let q = at(k);
            if q == goal {
                break 'legs;
            }
            pos = q;
            leg_start = q;
            continue 'legs;
        }
        path.extend((1..=n).map(|i| trace.pos_at(i)));

        // Full loop without leaving: go to the closest point seen and leave there.
        let best = (0..=trace.len())
            .min_by_key(|&i| (trace.pos_at(i).dist2(goal), i))
            .expect("trace is nonempty");
        let here = trace.len();
        walk_trace(&trace, here, best, &mut path);
        let l = trace.pos_at(best);
        if !left_from.insert(l) {
            return Err(unreachable);
        }
        let step = first_step(l, goal);
        let exit = if !view.is_blocked(step) {
            Some(step)
        } else {
            let dl = l.dist2(goal);
            DIRS.iter()
                .map(|&(dx, dy)| l.offset(dx, dy))
                .filter(|n| !view.is_blocked(*n) && n.dist2(goal) < dl)
                .min_by_key(|n| (n.dist2(goal), n.row_major_key()))
        };
        match exit {
            Some(e) => {
                path.push(e);
                pos = e;
                leg_start = e;
            }
            None => return Err(unreachable),
        }
    }

    let cert = BugCertificate {
        start,
        goal,
        steps_taken: path.len(),
        obstacles_met: met,
    };
    Ok((path, cert))
}

/// Next cell of the digital line from `leg_start` to `goal` after `pos`, if
/// `pos` is on that line; otherwise the first step of a fresh line.
fn line_step(leg_start: Cell, goal: Cell, pos: Cell) -> Cell {
    let n = leg_start.chebyshev(goal);
    let i = leg_start.chebyshev(pos);
    if i < n {
        let dx = (goal.x - leg_start.x) as i64;
        let dy = (goal.y - leg_start.y) as i64;
        let expect = |k: i64| {
            Cell::new(
                leg_start.x + round_div(dx * k, n as i64) as i32,
                leg_start.y + round_div(dy * k, n as i64) as i32,
            )
        };
        if expect(i as i64) == pos {
            return expect(i as i64 + 1);
        }
    }
    first_step(pos, goal)
}

/// Free distance toward the goal along the digital line, up to `range` cells.
fn free_reach<V: Occupancy>(view: &V, from: Cell, goal: Cell, range: i32) -> (bool, f64) {
    let mut last = from;
    for (k, c) in plan_straight(from, goal).into_iter().enumerate() {
        if k as i32 >= range || view.is_blocked(c) {
            break;
        }
        last = c;
        if c == goal {
            return (true, from.dist(goal));
        }
    }
    (false, from.dist(last))
}

/// Appends the shorter walk along the traced boundary from index `from` to `to`.
fn walk_trace(trace: &Trace, from: usize, to: usize, path: &mut Vec<Cell>) {
    // `from == len` is the same place as `cycle_start`
    let n = trace.len();
    let cs = trace.cycle_start;
    let from = if from == n { cs } else { from };
    let to = if to == n { cs } else { to };
    if to == from {
        return;
    }
    if to >= cs && from >= cs {
        let c = n - cs;
        let fwd = (to + c - from) % c;
        let back = c - fwd;
        if fwd <= back {
            for k in 1..=fwd {
                path.push(trace.states[cs + (from - cs + k) % c].pos);
            }
        } else {
            for k in 1..=back {
                path.push(trace.states[cs + (from - cs + c - k) % c].pos);
            }
        }
    } else {
        // target sits on the lead-in before the cycle: retrace it backwards
        for i in (to..from).rev() {
            path.push(trace.states[i].pos);
        }
    }
}

pub fn bug1<V: Occupancy>(view: &V, start: Cell, goal: Cell) -> Result<(Vec<Cell>, BugCertificate), NavError> {
    plan(view, start, goal, &BugConfig::new(BugKind::Bug1))
}

pub fn bug2<V: Occupancy>(view: &V, start: Cell, goal: Cell) -> Result<(Vec<Cell>, BugCertificate), NavError> {
    plan(view, start, goal, &BugConfig::new(BugKind::Bug2))
}

pub fn distance_bug<V: Occupancy>(
    view: &V,
    start: Cell,
    goal: Cell,
) -> Result<(Vec<Cell>, BugCertificate), NavError> {
    plan(view, start, goal, &BugConfig::new(BugKind::DistBug))
}

/// Step-at-a-time navigation on a view that changes as the robot senses.
///
/// The stored plan is reused until its next cell turns out to be blocked,
/// at which point the planner runs again from the current position.
#[derive(Debug, Clone)]
pub struct Navigator {
    goal: Cell,
    cfg: BugConfig,
    path: VecDeque<Cell>,
}

impl Navigator {
    pub fn new(goal: Cell, cfg: BugConfig) -> Self {
        Self {
            goal,
            cfg,
            path: VecDeque::new(),
        }
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn remaining(&self) -> usize {
        self.path.len()
    }

    /// Next cell to move to, or `None` once at the goal.
    pub fn next_step<V: Occupancy>(&mut self, view: &V, pos: Cell) -> Result<Option<Cell>, NavError> {
        if pos == self.goal {
            return Ok(None);
        }
        let stale = match self.path.front() {
            Some(&n) => !n.is_8_adjacent(pos) || view.is_blocked(n),
            None => true,
        };
        if stale {
            let (p, _) = plan(view, pos, self.goal, &self.cfg)?;
            self.path = p.into();
        }
        Ok(self.path.pop_front())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world_with_block(w: i32, h: i32, x0: i32, y0: i32, side: i32) -> GridWorld {
        let mut g = GridWorld::empty(w, h).unwrap();
        g.fill_rect(x0, y0, side, side);
        g
    }

    #[test]
    fn straight_lines() {
        assert_eq!(
            plan_straight(Cell::new(0, 0), Cell::new(3, 0)),
            vec![Cell::new(1, 0), Cell::new(2, 0), Cell::new(3, 0)]
        );
        assert_eq!(
            plan_straight(Cell::new(0, 0), Cell::new(3, 3)),
            vec![Cell::new(1, 1), Cell::new(2, 2), Cell::new(3, 3)]
        );
        assert!(plan_straight(Cell::new(4, 4), Cell::new(4, 4)).is_empty());
    }

    #[test]
    fn straight_line_matches_rounding_oracle() {
        // oracle: float rasterizer with explicit half-away rounding
        let oracle = |a: Cell, b: Cell| -> Vec<Cell> {
            let n = a.chebyshev(b);
            (1..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    let x = a.x as f64 + (b.x - a.x) as f64 * t;
                    let y = a.y as f64 + (b.y - a.y) as f64 * t;
                    Cell::new(x.round() as i32, y.round() as i32)
                })
                .collect()
        };
        let got = plan_straight(Cell::new(0, 0), Cell::new(5, 2));
        assert_eq!(got, oracle(Cell::new(0, 0), Cell::new(5, 2)));
        assert_eq!(
            got,
            vec![
                Cell::new(1, 0),
                Cell::new(2, 1),
                Cell::new(3, 1),
                Cell::new(4, 2),
                Cell::new(5, 2)
            ]
        );
        for (bx, by) in [(-7, 3), (2, -9), (-4, -4), (11, 6)] {
            let b = Cell::new(bx, by);
            let relative: Vec<Cell> = oracle(Cell::new(0, 0), b);
            assert_eq!(plan_straight(Cell::new(0, 0), b), relative);
        }
    }

    #[test]
    fn boundary_loop_of_four_block_is_sixteen() {
        let w = world_with_block(20, 20, 8, 8, 4);
        let t = trace_boundary(&w, Follow { pos: Cell::new(7, 9), wall: 0 }, 1000).unwrap();
        assert_eq!(t.len() - t.cycle_start, 16);
    }

    #[test]
    fn follower_keeps_obstacle_on_the_left() {
        let w = world_with_block(20, 20, 8, 8, 4);
        // west face, wall to the east: first move is south
        let s = follow_step(&w, Follow { pos: Cell::new(7, 10), wall: 0 }).unwrap();
        assert_eq!(s.pos, Cell::new(7, 9));
    }

    #[test]
    fn empty_world_paths_are_straight() {
        let w = GridWorld::empty(30, 30).unwrap();
        for kind in [BugKind::Bug1, BugKind::Bug2, BugKind::DistBug] {
            let (p, c) = plan(&w, Cell::new(0, 0), Cell::new(10, 0), &BugConfig::new(kind)).unwrap();
            assert_eq!(p.len(), 10);
            assert!(c.obstacles_met.is_empty());
            assert_eq!(c.steps_taken, 10);
        }
    }

    #[test]
    fn block_on_segment_respects_bounds() {
        let w = world_with_block(20, 20, 8, 8, 4);
        let (s, g) = (Cell::new(0, 10), Cell::new(19, 10));
        let mut lens = Vec::new();
        for kind in [BugKind::Bug1, BugKind::Bug2, BugKind::DistBug] {
            let (p, c) = plan(&w, s, g, &BugConfig::new(kind)).unwrap();
            assert_eq!(*p.last().unwrap(), g);
            // distance bug may leave early and touch the block again
            assert_eq!(c.obstacles_met[0].perimeter, 16);
            assert!(c.within_bound(kind), "{kind:?}: {} > {}", c.steps_taken, c.bound(kind));
            assert!(p.iter().all(|&x| w.is_accessible(x)));
            lens.push(p.len());
        }
        // bug1 circles the whole block first; the other two take the short side
        assert!(lens[1] <= lens[0]);
        assert!(lens[2] <= lens[0]);
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let mut w = GridWorld::empty(30, 30).unwrap();
        w.fill_rect(10, 10, 9, 1);
        w.fill_rect(10, 18, 9, 1);
        w.fill_rect(10, 10, 1, 9);
        w.fill_rect(18, 10, 1, 9);
        for kind in [BugKind::Bug1, BugKind::Bug2, BugKind::DistBug] {
            let r = plan(&w, Cell::new(2, 14), Cell::new(14, 14), &BugConfig::new(kind));
            assert!(matches!(r, Err(NavError::Unreachable { .. })), "{kind:?}: {r:?}");
        }
    }

    #[test]
    fn blocked_goal_is_reported() {
        let w = world_with_block(20, 20, 8, 8, 4);
        assert_eq!(
            bug1(&w, Cell::new(0, 0), Cell::new(9, 9)).unwrap_err(),
            NavError::GoalBlocked(Cell::new(9, 9))
        );
    }

    #[test]
    fn navigator_replans_on_discovery() {
        let truth = world_with_block(40, 40, 15, 15, 6);
        let mut map = KnownMap::new(40, 40, 3);
        let kernel = crate::world::DiskKernel::new(3);
        let mut pos = Cell::new(2, 18);
        let goal = Cell::new(35, 18);
        let mut nav = Navigator::new(goal, BugConfig::new(BugKind::DistBug));
        let mut scratch = Vec::new();
        map.sense_from(&truth, &kernel, pos, &mut scratch).unwrap();
        for _ in 0..500 {
            let view = RobotView::new(&map, &[]);
            match nav.next_step(&view, pos).unwrap() {
                Some(n) => {
                    assert!(truth.is_accessible(n));
                    assert!(n.is_8_adjacent(pos));
                    pos = n;
                    map.sense_from(&truth, &kernel, pos, &mut scratch).unwrap();
                }
                None => break,
            }
        }
        assert_eq!(pos, goal);
    }
}
