//! Per-robot controllers and the state they share with the engine.
//!
//! Three strategies are available:
//! * `sos` partitions space into exploration regions with margins at every
//!   encounter and treats other robots' regions as soft obstacles.
//! * `ars` explores greedily by frontiers and splits the plane into angular
//!   sectors when robots happen to meet.
//! * `prs` explores by frontiers and meets at scheduled rendezvous.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordination::{
    fuse, unify_frames, CoordError, EncounterGroup, FusionPayload, InteractionHistory, RegionSet, RelativePoses, RobotId,
};
use crate::coverage::{select_frontier, FrontierPreference, FrontierSet};
use crate::geometry::ExplorationRegion;
use crate::navigation::{BugConfig, BugKind, NavError, Navigator, RobotView};
use crate::world::{Cell, DiskKernel, GridWorld, KnownMap, WorldError};

pub mod ars;
pub mod prs;
pub mod sos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Sos,
    Ars,
    Prs,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Sos, StrategyKind::Ars, StrategyKind::Prs];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Sos => "sos",
            StrategyKind::Ars => "ars",
            StrategyKind::Prs => "prs",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown strategy `{0}` (expected sos, ars or prs)")]
pub struct UnknownStrategy(String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sos" => Ok(StrategyKind::Sos),
            "ars" => Ok(StrategyKind::Ars),
            "prs" => Ok(StrategyKind::Prs),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

/// What a robot is doing, as written to the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Traveling,
    Sweeping,
    MarginSweeping,
    Exploring,
    /// Waiting at a meeting point.
    Idle,
    Coordinating,
    Done,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Traveling => "traveling",
            Phase::Sweeping => "sweeping",
            Phase::MarginSweeping => "margin-sweeping",
            Phase::Exploring => "exploring",
            Phase::Idle => "idle-at-rendezvous",
            Phase::Coordinating => "coordinating",
            Phase::Done => "done",
        }
    }
}

/// Where each tick of a robot's budget went.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimeLedger {
    pub explore: u64,
    pub protocol: u64,
    pub interrupt: u64,
}

impl TimeLedger {
    pub fn total(&self) -> u64 {
        self.explore + self.protocol + self.interrupt
    }
}

/// Fixed run parameters every controller needs.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub r: i32,
    pub gamma: f64,
    pub tau: u64,
    /// Margin width.
    pub m: i32,
    /// PRS exploration allowance between meetings.
    pub b: u64,
    /// PRS travel allowance before the first meeting.
    pub first_a: u64,
    pub bug: BugKind,
    pub seed: u64,
    pub n_seeds: usize,
}

impl Params {
    pub fn bug_config(&self) -> BugConfig {
        BugConfig {
            kind: self.bug,
            sensor_range: self.r,
            max_steps: 200_000,
        }
    }
}

/// Everything one robot knows and carries.
#[derive(Debug, Clone)]
pub struct RobotState {
    pub id: RobotId,
    pub pos: Cell,
    /// World position of this robot's coordinate origin.
    pub frame_origin: Cell,
    /// Explored set with what was learned there.
    pub map: KnownMap,
    pub frontiers: FrontierSet,
    /// Other robots' regions.
    pub interference: RegionSet,
    pub history: InteractionHistory,
    pub region: Option<ExplorationRegion>,
    pub phase: Phase,
    /// Stationary for protocol work until this tick (exclusive).
    pub busy_until: u64,
    pub ledger: TimeLedger,
    nav: Option<(Navigator, bool)>,
    /// Targets that proved unreachable.
    pub unreachable: HashSet<Cell>,
}

impl RobotState {
    pub fn new(id: RobotId, pos: Cell, world: &GridWorld, r: i32) -> Self {
        Self {
            id,
            pos,
            frame_origin: pos,
            map: KnownMap::new(world.width(), world.height(), r),
            frontiers: FrontierSet::new(),
            interference: RegionSet::default(),
            history: InteractionHistory::new(),
            region: None,
            phase: Phase::Exploring,
            busy_until: 0,
            ledger: TimeLedger::default(),
            nav: None,
            unreachable: HashSet::new(),
        }
    }

    /// Senses from the current cell. Returns the cells learned for the first time.
    pub fn sense(&mut self, world: &GridWorld, kernel: &DiskKernel) -> Result<Vec<Cell>, WorldError> {
        let mut fresh = Vec::new();
        self.map.sense_from(world, kernel, self.pos, &mut fresh)?;
        self.frontiers.update(&self.map, &fresh);
        Ok(fresh)
    }

    /// Replaces the map after fusion and refreshes derived state.
    pub fn adopt_map(&mut self, map: KnownMap) {
        self.map = map;
        self.frontiers.rebuild(&self.map);
        self.nav = None;
    }

    pub fn is_busy(&self, t: u64) -> bool {
        t < self.busy_until
    }

    pub fn clear_navigation(&mut self) {
        self.nav = None;
    }

    /// One step toward `goal`. Soft obstacles are respected unless that
    /// makes the goal unreachable. Regions containing the robot or the goal
    /// are never treated as obstacles.
    pub fn step_toward(
        &mut self,
        goal: Cell,
        soft: &[ExplorationRegion],
        cfg: &BugConfig,
    ) -> Result<Option<Cell>, NavError> {
        if self.pos == goal {
            return Ok(None);
        }
        let pos = self.pos;
        let soft: Vec<ExplorationRegion> = soft
            .iter()
            .filter(|r| !r.contains(pos) && !r.contains(goal))
            .copied()
            .collect();
        let keep = matches!(&self.nav, Some((n, _)) if n.goal() == goal);
        if !keep {
            self.nav = Some((Navigator::new(goal, *cfg), !soft.is_empty()));
        }
        let (nav, use_soft) = self.nav.as_mut().expect("navigator set");
        if *use_soft {
            let view = RobotView::new(&self.map, &soft);
            match nav.next_step(&view, pos) {
                Ok(s) => return Ok(s),
                Err(_) => {
                    // trapped by soft obstacles: cross them
                    *nav = Navigator::new(goal, *cfg);
                    *use_soft = false;
                }
            }
        }
        let view = RobotView::new(&self.map, &[]);
        let r = nav.next_step(&view, pos);
        if r.is_err() {
            self.nav = None;
        }
        r
    }

    /// One step of greedy frontier exploration. `None` when no reachable
    /// frontier remains.
    pub fn frontier_step(
        &mut self,
        pref: FrontierPreference<'_>,
        soft: &[ExplorationRegion],
        cfg: &BugConfig,
    ) -> Option<Cell> {
        for _ in 0..8 {
            let current = self.nav.as_ref().map(|(n, _)| n.goal());
            let target = match current {
                Some(g) if g != self.pos && self.frontiers.contains(g) && crate::coverage::is_frontier(&self.map, g) => g,
                _ => {
                    self.frontiers.prune(&self.map);
                    let unreachable = &self.unreachable;
                    let pick = select_frontier(
                        self.frontiers.iter().filter(|c| !unreachable.contains(c) && *c != self.pos),
                        self.pos,
                        pref,
                    )?;
                    self.nav = None;
                    pick
                }
            };
            match self.step_toward(target, soft, cfg) {
                Ok(Some(next)) => return Some(next),
                Ok(None) => {
                    self.frontiers.remove(target);
                }
                Err(_) => {
                    self.unreachable.insert(target);
                    self.frontiers.remove(target);
                }
            }
        }
        None
    }
}

/// Assignment given to one member at an encounter, for the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Assignment {
    Region(ExplorationRegion),
    /// Angular sector: start angle and width in radians.
    Sector { start: f64, width: f64 },
}

impl From<crate::coverage::Sector> for Assignment {
    fn from(s: crate::coverage::Sector) -> Self {
        Assignment::Sector {
            start: s.bisector - s.half_width,
            width: 2.0 * s.half_width,
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Region(r) => write!(f, "{r}"),
            Assignment::Sector { start, width } => write!(f, "S({start:.4},{width:.4})"),
        }
    }
}

/// One coordination event.
#[derive(Debug, Clone, PartialEq)]
pub struct EncounterRecord {
    pub tick: u64,
    pub members: Vec<RobotId>,
    pub leader: RobotId,
    pub delta_t: u64,
    pub assignments: Vec<(RobotId, Assignment)>,
}

impl fmt::Display for EncounterRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<String> = self.members.iter().map(|m| m.to_string()).collect();
        let assigned: Vec<String> = self.assignments.iter().map(|(id, a)| format!("{id}={a}")).collect();
        write!(
            f,
            "E,{},{},{},{},{}",
            self.tick,
            members.join(";"),
            self.leader,
            self.delta_t,
            assigned.join(";")
        )
    }
}

/// A formed group after frames are unified and state is fused at the leader.
#[derive(Debug, Clone)]
pub struct Gathering {
    pub group: EncounterGroup,
    /// Leader's state after fusion.
    pub fused: FusionPayload,
}

struct WorldPoses<'a>(&'a [RobotState]);

impl RelativePoses for WorldPoses<'_> {
    fn local_pose(&self, id: RobotId) -> Cell {
        let r = &self.0[id];
        Cell::new(r.pos.x - r.frame_origin.x, r.pos.y - r.frame_origin.y)
    }

    fn displacement(&self, from: RobotId, to: RobotId) -> (i32, i32) {
        let (a, b) = (self.0[from].pos, self.0[to].pos);
        (b.x - a.x, b.y - a.y)
    }
}

/// Forms the group over `members` (linked when within `r`), moves every
/// member into the leader's frame and fuses history, map and interference
/// sets up the spanning tree. `robots[i].id` must equal `i`.
pub fn gather(robots: &mut [RobotState], members: &[RobotId], r: i32) -> Result<Gathering, CoordError> {
    let r2 = (r as i64) * (r as i64);
    let group = EncounterGroup::form(members, |a, b| robots[a].pos.dist2(robots[b].pos) <= r2)?;
    let transforms = unify_frames(&group.tree, group.leader, &WorldPoses(robots));
    let leader_origin = robots[group.leader].frame_origin;
    for (&id, tf) in &transforms {
        // local maps are kept in world cells, so only the origin changes
        debug_assert_eq!(tf.apply(leader_origin), robots[id].frame_origin);
        robots[id].frame_origin = leader_origin;
    }
    let mut states: BTreeMap<RobotId, FusionPayload> = group
        .members
        .iter()
        .map(|&id| {
            let rb = &robots[id];
            (
                id,
                FusionPayload {
                    history: rb.history.clone(),
                    map: rb.map.clone(),
                    interference: rb.interference.clone(),
                },
            )
        })
        .collect();
    fuse(&group.tree, group.leader, &mut states);
    let fused = states.remove(&group.leader).expect("leader state");
    Ok(Gathering { group, fused })
}

/// Deterministic 64-bit mix used to derive independent seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix64(h);
    }
    h
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Integer cell nearest to the mean of `cells`.
pub fn centroid_cell(cells: &[Cell]) -> Cell {
    let n = cells.len().max(1) as f64;
    let sx: f64 = cells.iter().map(|c| c.x as f64).sum();
    let sy: f64 = cells.iter().map(|c| c.y as f64).sum();
    Cell::new((sx / n).round() as i32, (sy / n).round() as i32)
}
