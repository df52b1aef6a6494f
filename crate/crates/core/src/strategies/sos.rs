//! Soft obstacle strategy: sweep an assigned region, re-sweep the gaps,
//! sweep the margin, then pick a fresh region nearby.

use std::collections::BTreeMap;

use crate::coordination::{assign, decompose, MissionPlan, RobotId};
use crate::coverage::{estimate_unexplored, FrontierPreference, SweepPlan, SweepStep};
use crate::geometry::{region_side, ExplorationRegion, SearchBudget};
use crate::world::{Cell, KnownBounds, KnownMap};

use super::{centroid_cell, gather, mix_seed, Assignment, EncounterRecord, Params, Phase, RobotState};

/// Re-sweep passes over one region before moving on.
pub const MAX_RESWEEPS: u32 = 3;

#[derive(Debug, Clone)]
enum Mode {
    Sweep(SweepPlan),
    Resweep(Vec<Cell>),
    Margin {
        rings: Vec<(ExplorationRegion, usize)>,
        corner: usize,
    },
    Frontier,
    Done,
}

/// Per-robot SOS controller state.
#[derive(Debug, Clone)]
pub struct SosMind {
    mode: Mode,
    /// Regions this robot has already been given.
    past: Vec<ExplorationRegion>,
    resweeps: u32,
    /// The lone start region, not yet agreed with anyone.
    provisional: bool,
}

impl SosMind {
    /// Lone start: a region sized for the whole budget with the robot at the
    /// entry of its first lane.
    pub fn new(robot: &mut RobotState, p: &Params) -> Self {
        let side = region_side(&SearchBudget::new(p.tau as f64, p.r as f64, p.gamma));
        let region = ExplorationRegion::new(robot.pos.offset(0, -p.r), side, side, p.m);
        robot.region = Some(region);
        Self {
            mode: Mode::Sweep(SweepPlan::new(region, p.r, robot.pos)),
            past: Vec::new(),
            resweeps: 0,
            provisional: true,
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.mode, Mode::Done)
    }

    /// Still sweeping an agreed region that is not wholly behind a known wall.
    pub fn has_live_region(&self, robot: &RobotState, bounds: &KnownBounds) -> bool {
        !self.provisional
            && matches!(self.mode, Mode::Sweep(_) | Mode::Resweep(_))
            && robot.region.is_some_and(|r| inside_known(&r, bounds))
    }

    fn start_region(&mut self, robot: &mut RobotState, region: ExplorationRegion, p: &Params, t: u64) {
        if let Some(old) = robot.region {
            if t > 0 {
                self.past.push(old);
            }
        }
        robot.region = Some(region);
        robot.clear_navigation();
        self.mode = Mode::Sweep(SweepPlan::new(region, p.r, robot.pos));
        self.resweeps = 0;
        self.provisional = false;
    }

    /// Chooses the next move, or `None` to stay put.
    pub fn step(&mut self, robot: &mut RobotState, p: &Params, t: u64) -> Option<Cell> {
        let cfg = p.bug_config();
        for _ in 0..32 {
            let soft = robot.interference.0.clone();
            match &mut self.mode {
                Mode::Sweep(plan) => match plan.next_target(&robot.map, robot.pos) {
                    SweepStep::Goto(target) => match robot.step_toward(target, &soft, &cfg) {
                        Ok(Some(next)) => {
                            let inside = robot.region.is_some_and(|r| r.contains(robot.pos));
                            robot.phase = if inside { Phase::Sweeping } else { Phase::Traveling };
                            return Some(next);
                        }
                        _ => plan.skip_leg(robot.pos),
                    },
                    SweepStep::Done { swept_any: false } => {
                        // nothing reachable in this region, so no margin either
                        self.self_assign(robot, p, t);
                    }
                    SweepStep::Done { .. } => self.after_pass(robot, p, t),
                },
                Mode::Resweep(targets) => {
                    targets.retain(|&c| !robot.map.is_explored(c));
                    let pos = robot.pos;
                    let Some((i, &goal)) = targets
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, c)| (c.dist2(pos), c.y, c.x))
                    else {
                        self.after_pass(robot, p, t);
                        continue;
                    };
                    match robot.step_toward(goal, &soft, &cfg) {
                        Ok(Some(next)) => {
                            robot.phase = Phase::Sweeping;
                            return Some(next);
                        }
                        _ => {
                            targets.swap_remove(i);
                        }
                    }
                }
                Mode::Margin { rings, corner } => {
                    let Some(goal) = ring_corner(rings, *corner, robot.map.bounds()) else {
                        self.self_assign(robot, p, t);
                        continue;
                    };
                    match robot.step_toward(goal, &soft, &cfg) {
                        Ok(Some(next)) => {
                            robot.phase = Phase::MarginSweeping;
                            return Some(next);
                        }
                        _ => *corner += 1,
                    }
                }
                Mode::Frontier => {
                    let mut avoid = soft.clone();
                    avoid.extend(self.past.iter().copied());
                    match robot.frontier_step(FrontierPreference::Avoid(&avoid), &soft, &cfg) {
                        Some(next) => {
                            robot.phase = Phase::Exploring;
                            return Some(next);
                        }
                        None => self.mode = Mode::Done,
                    }
                }
                Mode::Done => {
                    robot.phase = Phase::Done;
                    return None;
                }
            }
        }
        None
    }

    /// After a sweep or re-sweep pass: re-sweep if the seeded estimate
    /// still finds a meaningful unexplored share, otherwise do the margin.
    fn after_pass(&mut self, robot: &mut RobotState, p: &Params, t: u64) {
        let Some(region) = robot.region else {
            self.mode = Mode::Frontier;
            return;
        };
        if self.resweeps < MAX_RESWEEPS {
            let seed = mix_seed(&[p.seed, robot.id as u64, t, self.resweeps as u64]);
            let est = estimate_unexplored(&region, &robot.map, p.n_seeds, seed);
            if est.is_significant(p.r as f64) {
                self.resweeps += 1;
                self.mode = Mode::Resweep(est.hit_cells);
                return;
            }
        }
        self.resweeps = MAX_RESWEEPS;
        self.mode = Mode::Margin {
            rings: margin_rings(&region, p.r, robot.pos),
            corner: 0,
        };
    }

    /// Region sized for the remaining budget next to the ones already
    /// known, or frontier exploration if none fits.
    fn self_assign(&mut self, robot: &mut RobotState, p: &Params, t: u64) {
        let budget = SearchBudget::new(p.tau as f64, p.r as f64, p.gamma).at(t as f64, 0.0);
        let side = region_side(&budget);
        let cands = self_assign_candidates(robot, &self.past, side, p.m);
        for (k, c) in cands.into_iter().enumerate() {
            let seed = mix_seed(&[p.seed, robot.id as u64, t, 0x5e1f, k as u64]);
            if estimate_unexplored(&c, &robot.map, p.n_seeds, seed).is_significant(p.r as f64) {
                robot.history.record(robot.id, c, t);
                self.start_region(robot, c, p, t);
                return;
            }
        }
        if let Some(old) = robot.region.take() {
            self.past.push(old);
        }
        robot.clear_navigation();
        self.mode = Mode::Frontier;
    }
}

/// Rectangles traced through the middle of each `2r` band of the margin.
fn margin_rings(region: &ExplorationRegion, r: i32, from: Cell) -> Vec<(ExplorationRegion, usize)> {
    let mut out = Vec::new();
    let mut off = r;
    while off <= region.margin - r || (out.is_empty() && off <= region.margin) {
        let ring = region.grown(off);
        let corners = corners(&ring);
        let start = (0..4).min_by_key(|&i| corners[i].dist2(from)).unwrap_or(0);
        out.push((ring, start));
        off += 2 * r;
    }
    out
}

fn corners(ring: &ExplorationRegion) -> [Cell; 4] {
    let (x0, y0) = (ring.origin.x, ring.origin.y);
    let (x1, y1) = (ring.x_end() - 1, ring.y_end() - 1);
    [Cell::new(x0, y0), Cell::new(x1, y0), Cell::new(x1, y1), Cell::new(x0, y1)]
}

/// The `k`th waypoint of the margin tour, clamped inside known walls. Each
/// ring is walked all the way round back to its first corner.
fn ring_corner(rings: &[(ExplorationRegion, usize)], k: usize, bounds: &KnownBounds) -> Option<Cell> {
    let (ring, start) = rings.get(k / 5)?;
    let c = corners(ring)[(start + k % 5) % 4];
    Some(clamp_to_bounds(c, bounds))
}

fn clamp_to_bounds(c: Cell, b: &KnownBounds) -> Cell {
    let x = c
        .x
        .max(b.min_x.unwrap_or(i32::MIN))
        .min(b.max_x.map_or(i32::MAX, |v| v - 1));
    let y = c
        .y
        .max(b.min_y.unwrap_or(i32::MIN))
        .min(b.max_y.map_or(i32::MAX, |v| v - 1));
    Cell::new(x, y)
}

/// Candidate squares beside the current region and beside the bounding box
/// of everything assigned so far, nearest first. All are at least `m` from
/// other robots' regions, clear of this robot's past regions and not wholly
/// behind a known wall.
fn self_assign_candidates(
    robot: &RobotState,
    past: &[ExplorationRegion],
    side: i32,
    m: i32,
) -> Vec<ExplorationRegion> {
    let mut anchors: Vec<ExplorationRegion> = Vec::new();
    let own = robot.region.or_else(|| past.last().copied());
    if let Some(own) = own {
        anchors.push(own);
        let bbox = robot.interference.0.iter().fold(own, |acc, z| acc.union_bbox(z));
        anchors.push(bbox);
    }
    let bounds = robot.map.bounds();
    let pos = robot.pos;
    let mut cands: Vec<ExplorationRegion> = Vec::new();
    for a in &anchors {
        let centre_x = pos.x.clamp(a.origin.x, a.x_end() - 1) - side / 2;
        let centre_y = pos.y.clamp(a.origin.y, a.y_end() - 1) - side / 2;
        let xs = [a.origin.x, a.x_end() - side, centre_x];
        let ys = [a.origin.y, a.y_end() - side, centre_y];
        for &y in &ys {
            cands.push(ExplorationRegion::new(Cell::new(a.origin.x - m - side, y), side, side, m));
            cands.push(ExplorationRegion::new(Cell::new(a.x_end() + m, y), side, side, m));
        }
        for &x in &xs {
            cands.push(ExplorationRegion::new(Cell::new(x, a.origin.y - m - side), side, side, m));
            cands.push(ExplorationRegion::new(Cell::new(x, a.y_end() + m), side, side, m));
        }
    }
    cands.retain(|c| {
        inside_known(c, bounds)
            && robot.interference.0.iter().all(|z| c.separation(z) >= m)
            && past.iter().chain(robot.region.iter()).all(|o| !c.intersects(o))
    });
    cands.sort_by(|a, b| {
        a.distance_to(pos)
            .total_cmp(&b.distance_to(pos))
            .then(a.origin.cmp(&b.origin))
    });
    cands.dedup();
    cands
}

fn inside_known(r: &ExplorationRegion, b: &KnownBounds) -> bool {
    !(b.min_x.is_some_and(|v| r.x_end() <= v)
        || b.max_x.is_some_and(|v| r.origin.x >= v)
        || b.min_y.is_some_and(|v| r.y_end() <= v)
        || b.max_y.is_some_and(|v| r.origin.y >= v))
}

/// Encounter handling: fuse at the leader, give fresh regions to the
/// members that need one, assign by minimum total distance and replicate
/// the plan. Members still sweeping an agreed region keep it.
pub fn coordinate(
    robots: &mut [RobotState],
    minds: &mut [SosMind],
    members: &[RobotId],
    p: &Params,
    t: u64,
) -> Option<EncounterRecord> {
    let g = gather(robots, members, p.r).ok()?;
    let group = g.group;
    let leader_map: KnownMap = g.fused.map;
    // a member keeps its region only if it is live and clear of every region
    // kept so far and of what the others last reported
    let mut needy: Vec<RobotId> = Vec::new();
    let mut assignments: BTreeMap<RobotId, ExplorationRegion> = BTreeMap::new();
    for &id in &group.members {
        let keep = robots[id].region.filter(|r| {
            minds[id].has_live_region(&robots[id], leader_map.bounds())
                && assignments.values().all(|k| k.separation(r) >= p.m)
                && g.fused
                    .history
                    .by_robot()
                    .all(|(other, h)| other == id || h == r || h.separation(r) >= p.m)
        });
        match keep {
            Some(r) => {
                assignments.insert(id, r);
            }
            None => needy.push(id),
        }
    }
    let mut fresh: Vec<RobotId> = Vec::new();
    if !needy.is_empty() {
        let budget = SearchBudget::new(p.tau as f64, p.r as f64, p.gamma).at(t as f64, group.delta_t as f64);
        let side = region_side(&budget);
        let poses: Vec<Cell> = needy.iter().map(|&id| robots[id].pos).collect();
        let center = centroid_cell(&poses);
        let mut forbidden: Vec<ExplorationRegion> = g.fused.history.regions().copied().collect();
        forbidden.extend(g.fused.interference.0.iter().copied());
        forbidden.extend(assignments.values().copied());
        forbidden.sort();
        forbidden.dedup();
        let (_, w, h) = leader_map.extent();
        let max_window = 4 * w.max(h) as i64;
        // when nothing fits, everyone keeps its current plan
        if let Ok(regions) = decompose(center, needy.len(), side, p.m, &forbidden, leader_map.bounds(), max_window) {
            for (&id, &k) in needy.iter().zip(&assign(&regions, &poses)) {
                assignments.insert(id, regions[k]);
                fresh.push(id);
            }
        }
    }
    robots[group.leader].adopt_map(leader_map);
    let plan = MissionPlan::new(group.leader, g.fused.history, assignments, t);
    let mut record = EncounterRecord {
        tick: t,
        members: group.members.clone(),
        leader: group.leader,
        delta_t: group.delta_t,
        assignments: Vec::new(),
    };
    for &id in &group.members {
        let robot = &mut robots[id];
        robot.history = plan.history.clone();
        robot.interference = plan.interference_for(id, &robot.interference);
        if fresh.contains(&id) {
            minds[id].start_region(robot, plan.assignments[&id], p, t);
        }
        if let Some(&r) = plan.assignments.get(&id) {
            record.assignments.push((id, Assignment::Region(r)));
        }
    }
    Some(record)
}
