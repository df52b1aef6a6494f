//! Tick engine, run configuration, metrics and replication helpers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordination::RobotId;
use crate::geometry::{max_area_exact, search_time, GeometryError};
use crate::navigation::BugKind;
use crate::strategies::ars::{self, ArsMind};
use crate::strategies::prs::PrsTeam;
use crate::strategies::sos::{self, SosMind};
use crate::strategies::{mix_seed, splitmix64, EncounterRecord, Params, Phase, RobotState, StrategyKind};
use crate::world::{generate_random, Cell, DiskKernel, GridWorld, ObstacleSpec, WorldError};

pub const SCHEMA_VERSION: u32 = 1;
/// Overlap bitmasks hold one bit per robot.
pub const MAX_ROBOTS: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("could not place robot {0} near the start point")]
    Placement(RobotId),
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_r() -> i32 {
    20
}
fn default_gamma() -> f64 {
    1.0
}
fn default_k() -> f64 {
    0.6
}
fn default_b() -> u64 {
    50
}
fn default_bug() -> BugKind {
    BugKind::DistBug
}
fn default_estimate_seeds() -> usize {
    crate::coverage::DEFAULT_SEEDS
}
fn default_width() -> i32 {
    480
}
fn default_height() -> i32 {
    600
}
fn default_obstacles() -> String {
    "sparse".to_string()
}
fn default_world_seed() -> u64 {
    1
}

/// Where the world comes from: a text file, or the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "default_width")]
    pub width: i32,
    #[serde(default = "default_height")]
    pub height: i32,
    /// Obstacle spec in its text form (`sparse`, `none`, `rects=...`).
    #[serde(default = "default_obstacles")]
    pub obstacles: String,
    #[serde(default = "default_world_seed")]
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            file: None,
            width: default_width(),
            height: default_height(),
            obstacles: default_obstacles(),
            seed: default_world_seed(),
        }
    }
}

impl WorldConfig {
    /// Short label used in metrics rows.
    pub fn label(&self) -> String {
        match &self.file {
            Some(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().replace(',', "_"))
                .unwrap_or_else(|| "file".into()),
            None => format!("gen{}", self.seed),
        }
    }

    pub fn load(&self) -> Result<GridWorld, SimError> {
        match &self.file {
            Some(p) => Ok(GridWorld::load(p)?),
            None => {
                let spec: ObstacleSpec = self.obstacles.parse()?;
                Ok(generate_random(self.seed, self.width, self.height, &spec)?)
            }
        }
    }
}

/// Start cluster: robots are dropped within `spread` of `center`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    /// Random accessible cell when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[i32; 2]>,
    /// Defaults to 2r.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<i32>,
}

/// One simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub strategy: StrategyKind,
    pub robots: usize,
    #[serde(default = "default_r")]
    pub r: i32,
    /// Cells moved per tick; must be a positive whole number.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    /// Derived from the world size, `robots` and `k` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<u64>,
    /// Margin width; defaults to 2r.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<i32>,
    #[serde(default = "default_b")]
    pub b: u64,
    /// PRS travel allowance before the first meeting.
    #[serde(default = "default_b")]
    pub first_a: u64,
    #[serde(default = "default_bug")]
    pub bug: BugKind,
    #[serde(default)]
    pub seed: u64,
    /// Samples per region for the unexplored estimate.
    #[serde(default = "default_estimate_seeds")]
    pub estimate_seeds: usize,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub start: StartConfig,
}

impl RunConfig {
    pub fn new(strategy: StrategyKind, robots: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            strategy,
            robots,
            r: default_r(),
            gamma: default_gamma(),
            k: default_k(),
            tau: None,
            margin: None,
            b: default_b(),
            first_a: default_b(),
            bug: default_bug(),
            seed: 0,
            estimate_seeds: default_estimate_seeds(),
            world: WorldConfig::default(),
            start: StartConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.robots == 0 || self.robots > MAX_ROBOTS {
            return bad(format!("robots must be in 1..={MAX_ROBOTS}, got {}", self.robots));
        }
        if self.r < 1 {
            return bad(format!("r must be at least 1, got {}", self.r));
        }
        if !(self.gamma >= 1.0 && self.gamma.fract() == 0.0) {
            return bad(format!("gamma must be a positive whole number of cells per tick, got {}", self.gamma));
        }
        if !(0.5..=0.8).contains(&self.k) {
            return bad(format!("k must lie in [0.5, 0.8], got {}", self.k));
        }
        if let Some(m) = self.margin {
            if m != 0 && m < 2 * self.r {
                return bad(format!("margin must be 0 or at least 2r = {}, got {m}", 2 * self.r));
            }
        }
        if self.estimate_seeds == 0 {
            return bad("estimate_seeds must be positive".into());
        }
        if self.tau == Some(0) {
            return bad("tau must be positive".into());
        }
        Ok(())
    }

    /// Search time from the world size unless set explicitly.
    pub fn search_time(&self, world: &GridWorld) -> Result<u64, SimError> {
        match self.tau {
            Some(t) => Ok(t),
            None => Ok(search_time(
                world.width(),
                world.height(),
                self.r as f64,
                self.gamma,
                self.robots,
                self.k,
            )?),
        }
    }

    /// Copy with every derived default written out, so that running the
    /// result reproduces this run exactly.
    pub fn resolved(&self, world: &GridWorld) -> Result<RunConfig, SimError> {
        self.validate()?;
        let mut out = self.clone();
        out.tau = Some(self.search_time(world)?);
        out.margin = Some(self.margin.unwrap_or(2 * self.r));
        let center = start_center(self, world)?;
        out.start.center = Some([center.x, center.y]);
        out.start.spread = Some(self.start.spread.unwrap_or(2 * self.r));
        if out.world.file.is_some() {
            out.world.width = world.width();
            out.world.height = world.height();
        }
        Ok(out)
    }

    fn params(&self, tau: u64) -> Params {
        Params {
            r: self.r,
            gamma: self.gamma,
            tau,
            m: self.margin.unwrap_or(2 * self.r),
            b: self.b,
            first_a: self.first_a,
            bug: self.bug,
            seed: self.seed,
            n_seeds: self.estimate_seeds,
        }
    }
}

/// Nearest accessible cell to `c`, scanning square rings outward.
fn snap_accessible(world: &GridWorld, c: Cell) -> Option<Cell> {
    let c = Cell::new(c.x.clamp(0, world.width() - 1), c.y.clamp(0, world.height() - 1));
    let max = world.width().max(world.height());
    for d in 0..=max {
        let mut best: Option<Cell> = None;
        for dy in -d..=d {
            for dx in -d..=d {
                if dx.abs() != d && dy.abs() != d {
                    continue;
                }
                let q = c.offset(dx, dy);
                if world.is_accessible(q)
                    && best.is_none_or(|b| (q.dist2(c), q.row_major_key()) < (b.dist2(c), b.row_major_key()))
                {
                    best = Some(q);
                }
            }
        }
        if best.is_some() {
            return best;
        }
    }
    None
}

fn start_center(cfg: &RunConfig, world: &GridWorld) -> Result<Cell, SimError> {
    let raw = match cfg.start.center {
        Some([x, y]) => Cell::new(x, y),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x57a7]));
            Cell::new(rng.gen_range(0..world.width()), rng.gen_range(0..world.height()))
        }
    };
    snap_accessible(world, raw).ok_or(SimError::Placement(0))
}

/// Start cells: robot 0 at the centre, each later robot at a random free
/// cell within `spread` of the centre and within `r` of an earlier robot,
/// so the team starts as one connected group.
pub fn place_robots(cfg: &RunConfig, world: &GridWorld) -> Result<Vec<Cell>, SimError> {
    let center = start_center(cfg, world)?;
    let spread = cfg.start.spread.unwrap_or(2 * cfg.r);
    let r2 = (cfg.r as i64).pow(2);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0x91ace]));
    let mut out = vec![center];
    for id in 1..cfg.robots {
        let mut placed = None;
        for _ in 0..10_000 {
            let q = center.offset(rng.gen_range(-spread..=spread), rng.gen_range(-spread..=spread));
            if q.dist2(center) > (spread as i64).pow(2) || !world.is_accessible(q) || out.contains(&q) {
                continue;
            }
            if out.iter().any(|p| p.dist2(q) <= r2) {
                placed = Some(q);
                break;
            }
        }
        let q = placed
            .or_else(|| {
                // crowded start: take the nearest unused free cell to the centre
                let k = cfg.r.max(spread);
                (-k..=k)
                    .flat_map(|dy| (-k..=k).map(move |dx| center.offset(dx, dy)))
                    .filter(|q| world.is_accessible(*q) && !out.contains(q) && q.dist2(center) <= r2)
                    .min_by_key(|q| (q.dist2(center), q.row_major_key()))
            })
            .ok_or(SimError::Placement(id))?;
        out.push(q);
    }
    Ok(out)
}

/// Ground-truth record of who sensed which world cell. Each cell is
/// credited to the first robot that senses it.
#[derive(Debug, Clone)]
pub struct CoverageLedger {
    width: i32,
    height: i32,
    seen: Vec<u64>,
    credited: Vec<u64>,
}

impl CoverageLedger {
    pub fn new(width: i32, height: i32, robots: usize) -> Self {
        assert!(robots <= MAX_ROBOTS);
        Self {
            width,
            height,
            seen: vec![0; (width as usize) * (height as usize)],
            credited: vec![0; robots],
        }
    }

    /// Records a sensing disk of `robot` at `center`.
    pub fn sense(&mut self, robot: RobotId, center: Cell, kernel: &DiskKernel) {
        let bit = 1u64 << robot;
        for &(dx, dy) in kernel.offsets() {
            let (x, y) = (center.x + dx, center.y + dy);
            if x < 0 || y < 0 || x >= self.width || y >= self.height {
                continue;
            }
            let m = &mut self.seen[(y * self.width + x) as usize];
            if *m == 0 {
                self.credited[robot] += 1;
            }
            *m |= bit;
        }
    }

    pub fn credited(&self, robot: RobotId) -> u64 {
        self.credited[robot]
    }

    /// Cells sensed by `robot` that some other robot also sensed.
    pub fn overlap(&self, robot: RobotId) -> u64 {
        let bit = 1u64 << robot;
        self.seen.iter().filter(|&&m| m & bit != 0 && m & !bit != 0).count() as u64
    }

    /// |Cᵢ ∩ Cⱼ| for every pair i < j.
    pub fn pairwise(&self) -> Vec<(RobotId, RobotId, u64)> {
        let n = self.credited.len();
        let mut counts = vec![0u64; n * n];
        for &m in &self.seen {
            if m.count_ones() < 2 {
                continue;
            }
            for i in 0..n {
                if m >> i & 1 == 0 {
                    continue;
                }
                for j in i + 1..n {
                    if m >> j & 1 == 1 {
                        counts[i * n + j] += 1;
                    }
                }
            }
        }
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push((i, j, counts[i * n + j]));
            }
        }
        out
    }

    /// Cells sensed by anyone.
    pub fn union(&self) -> u64 {
        self.seen.iter().filter(|&&m| m != 0).count() as u64
    }

    /// Cells sensed by `robot`, whoever was credited.
    pub fn sensed_by(&self, robot: RobotId) -> u64 {
        let bit = 1u64 << robot;
        self.seen.iter().filter(|&&m| m & bit != 0).count() as u64
    }
}

/// Connected components of the "within `r`" graph over `positions`, each
/// sorted, ordered by smallest member. Entries set to `None` are left out.
pub fn encounter_components(positions: &[Option<Cell>], r: i32) -> Vec<Vec<RobotId>> {
    let r2 = (r as i64).pow(2);
    let n = positions.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] || positions[s].is_none() {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            let a = positions[comp[i]].expect("present");
            for b in 0..n {
                if !seen[b] && positions[b].is_some_and(|q| q.dist2(a) <= r2) {
                    seen[b] = true;
                    comp.push(b);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

enum Controller {
    Sos(Vec<SosMind>),
    Ars(Vec<ArsMind>),
    Prs(PrsTeam),
}

/// Per-robot outcome of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotMetrics {
    pub id: RobotId,
    pub coverage_cells: u64,
    pub coverage_norm: f64,
    pub overlap_cells: u64,
    pub sensed_cells: u64,
    pub explore_ticks: u64,
    pub protocol_ticks: u64,
    pub interrupt_ticks: u64,
    pub final_pos: Cell,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub tau: u64,
    /// Scannable area for one robot in `tau` ticks.
    pub area: f64,
    pub start: Vec<Cell>,
    pub robots: Vec<RobotMetrics>,
    pub pairwise_overlap: Vec<(RobotId, RobotId, u64)>,
    pub union_cells: u64,
    pub encounters: Vec<EncounterRecord>,
    /// Line records, empty unless tracing was on.
    pub trace: String,
}

impl RunResult {
    pub fn mean_coverage(&self) -> f64 {
        self.robots.iter().map(|r| r.coverage_norm).sum::<f64>() / self.robots.len() as f64
    }
}

/// A run in progress. Drive it with [`Simulation::step`] or [`Simulation::run`].
pub struct Simulation<'w> {
    world: &'w GridWorld,
    params: Params,
    kernel: DiskKernel,
    robots: Vec<RobotState>,
    ctrl: Controller,
    ledger: CoverageLedger,
    last_coord: HashMap<(RobotId, RobotId), u64>,
    linked_prev: HashSet<(RobotId, RobotId)>,
    cooldown: u64,
    moves_per_tick: usize,
    start: Vec<Cell>,
    t: u64,
    encounters: Vec<EncounterRecord>,
    trace: Option<String>,
}

impl<'w> Simulation<'w> {
    pub fn new(cfg: &RunConfig, world: &'w GridWorld, trace: bool) -> Result<Self, SimError> {
        cfg.validate()?;
        let tau = cfg.search_time(world)?;
        let params = cfg.params(tau);
        let start = place_robots(cfg, world)?;
        let mut robots: Vec<RobotState> = start
            .iter()
            .enumerate()
            .map(|(id, &p)| RobotState::new(id, p, world, cfg.r))
            .collect();
        let ctrl = match cfg.strategy {
            StrategyKind::Sos => Controller::Sos(robots.iter_mut().map(|r| SosMind::new(r, &params)).collect()),
            StrategyKind::Ars => Controller::Ars(vec![ArsMind::default(); robots.len()]),
            StrategyKind::Prs => Controller::Prs(PrsTeam::new(robots.len())),
        };
        Ok(Self {
            world,
            kernel: DiskKernel::new(cfg.r),
            ledger: CoverageLedger::new(world.width(), world.height(), robots.len()),
            robots,
            ctrl,
            last_coord: HashMap::new(),
            linked_prev: HashSet::new(),
            cooldown: (2.0 * cfg.r as f64 / cfg.gamma).ceil() as u64,
            moves_per_tick: cfg.gamma as usize,
            start,
            params,
            t: 0,
            encounters: Vec::new(),
            trace: trace.then(String::new),
        })
    }

    pub fn tick(&self) -> u64 {
        self.t
    }

    pub fn tau(&self) -> u64 {
        self.params.tau
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.params.tau
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn ledger(&self) -> &CoverageLedger {
        &self.ledger
    }

    pub fn encounters(&self) -> &[EncounterRecord] {
        &self.encounters
    }

    fn sense(&mut self, id: RobotId) -> Result<(), SimError> {
        self.robots[id].sense(self.world, &self.kernel)?;
        self.ledger.sense(id, self.robots[id].pos, &self.kernel);
        Ok(())
    }

    /// Pairs that just came within range and are off cooldown.
    fn triggering(&mut self, t: u64) -> HashSet<(RobotId, RobotId)> {
        let r2 = (self.params.r as i64).pow(2);
        let n = self.robots.len();
        let mut linked = HashSet::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.robots[i].pos.dist2(self.robots[j].pos) <= r2 {
                    linked.insert((i, j));
                }
            }
        }
        let fresh = linked
            .iter()
            .copied()
            .filter(|p| !self.linked_prev.contains(p))
            .filter(|p| self.last_coord.get(p).is_none_or(|&l| t >= l + self.cooldown))
            .filter(|&(a, b)| self.has_news(a, b))
            .collect();
        self.linked_prev = linked;
        fresh
    }

    /// Whether two robots that meet have anything to exchange. SOS robots
    /// that already coordinated and still hold the same history would only
    /// re-derive the plan they share.
    fn has_news(&self, a: RobotId, b: RobotId) -> bool {
        match self.ctrl {
            Controller::Sos(_) => {
                !self.last_coord.contains_key(&(a, b)) || self.robots[a].history != self.robots[b].history
            }
            _ => true,
        }
    }

    fn coordinate(&mut self, t: u64) -> Vec<EncounterRecord> {
        let p = self.params;
        match &mut self.ctrl {
            Controller::Prs(team) => team.meet(&mut self.robots, &p, t).into_iter().collect(),
            Controller::Sos(_) | Controller::Ars(_) => {
                let fresh = self.triggering(t);
                if fresh.is_empty() {
                    return Vec::new();
                }
                let avail: Vec<Option<Cell>> = self
                    .robots
                    .iter()
                    .map(|r| (!r.is_busy(t)).then_some(r.pos))
                    .collect();
                let mut out = Vec::new();
                for comp in encounter_components(&avail, p.r) {
                    if comp.len() < 2 {
                        continue;
                    }
                    let triggered = comp
                        .iter()
                        .enumerate()
                        .any(|(k, &a)| comp[k + 1..].iter().any(|&b| fresh.contains(&(a, b))));
                    if !triggered {
                        continue;
                    }
                    let rec = match &mut self.ctrl {
                        Controller::Sos(minds) => sos::coordinate(&mut self.robots, minds, &comp, &p, t),
                        Controller::Ars(minds) => ars::coordinate(&mut self.robots, minds, &comp, &p, t),
                        Controller::Prs(_) => unreachable!(),
                    };
                    for (k, &a) in comp.iter().enumerate() {
                        for &b in &comp[k + 1..] {
                            self.last_coord.insert((a, b), t);
                        }
                    }
                    out.extend(rec);
                }
                out
            }
        }
    }

    fn decide(&mut self, id: RobotId, t: u64) -> Option<Cell> {
        let p = self.params;
        let robot = &mut self.robots[id];
        match &mut self.ctrl {
            Controller::Sos(minds) => minds[id].step(robot, &p, t),
            Controller::Ars(minds) => minds[id].step(robot, &p),
            Controller::Prs(team) => team.step(robot, &p, t),
        }
    }

    fn interrupted(&self, id: RobotId) -> bool {
        match &self.ctrl {
            Controller::Prs(team) => team.is_interrupted(id),
            _ => false,
        }
    }

    /// Advances one tick: sense, detect encounters, coordinate, move.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.is_finished() {
            return Ok(());
        }
        let t = self.t;
        for id in 0..self.robots.len() {
            self.sense(id)?;
        }
        for rec in self.coordinate(t) {
            for &m in &rec.members {
                self.robots[m].busy_until = t + rec.delta_t;
                self.robots[m].clear_navigation();
            }
            if let Some(tr) = self.trace.as_mut() {
                let _ = writeln!(tr, "{rec}");
            }
            self.encounters.push(rec);
        }
        for id in 0..self.robots.len() {
            if self.robots[id].is_busy(t) {
                self.robots[id].ledger.protocol += 1;
                self.robots[id].phase = Phase::Coordinating;
            } else {
                for sub in 0..self.moves_per_tick {
                    let Some(next) = self.decide(id, t) else { break };
                    let from = self.robots[id].pos;
                    assert!(
                        next.is_8_adjacent(from) && self.world.is_accessible(next),
                        "robot {id} tried an illegal move {from} -> {next}"
                    );
                    self.robots[id].pos = next;
                    if sub + 1 < self.moves_per_tick {
                        self.sense(id)?;
                    }
                }
                if self.interrupted(id) {
                    self.robots[id].ledger.interrupt += 1;
                } else {
                    self.robots[id].ledger.explore += 1;
                }
            }
            if let Some(tr) = self.trace.as_mut() {
                let r = &self.robots[id];
                let _ = writeln!(
                    tr,
                    "P,{},{},{},{},{},{}",
                    t,
                    id,
                    r.pos.x,
                    r.pos.y,
                    r.phase.name(),
                    self.ledger.credited(id)
                );
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Runs to the end of the budget and collects metrics.
    pub fn run(mut self) -> Result<RunResult, SimError> {
        while !self.is_finished() {
            self.step()?;
        }
        self.finish()
    }

    /// Final sense at the frozen positions, then metrics.
    pub fn finish(mut self) -> Result<RunResult, SimError> {
        for id in 0..self.robots.len() {
            self.sense(id)?;
        }
        let area = max_area_exact(self.params.tau as f64, self.params.r as f64, self.params.gamma);
        let robots = self
            .robots
            .iter()
            .map(|r| RobotMetrics {
                id: r.id,
                coverage_cells: self.ledger.credited(r.id),
                coverage_norm: self.ledger.credited(r.id) as f64 / area,
                overlap_cells: self.ledger.overlap(r.id),
                sensed_cells: self.ledger.sensed_by(r.id),
                explore_ticks: r.ledger.explore,
                protocol_ticks: r.ledger.protocol,
                interrupt_ticks: r.ledger.interrupt,
                final_pos: r.pos,
            })
            .collect();
        Ok(RunResult {
            tau: self.params.tau,
            area,
            start: self.start,
            robots,
            pairwise_overlap: self.ledger.pairwise(),
            union_cells: self.ledger.union(),
            encounters: self.encounters,
            trace: self.trace.unwrap_or_default(),
        })
    }
}

/// Loads the world and runs `cfg` to completion.
pub fn run(cfg: &RunConfig, trace: bool) -> Result<RunResult, SimError> {
    let world = cfg.world.load()?;
    Simulation::new(cfg, &world, trace)?.run()
}

/// Header of the per-robot metrics CSV.
pub const METRICS_HEADER: &str = "strategy,world,seed,N,robot,coverage_cells,coverage_norm,overlap_cells,interrupt_ticks";

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: StrategyKind,
    pub world: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub robot: RobotId,
    pub coverage_cells: u64,
    pub coverage_norm: f64,
    pub overlap_cells: u64,
    pub interrupt_ticks: u64,
}

pub fn metrics_rows(cfg: &RunConfig, result: &RunResult) -> Vec<MetricsRow> {
    result
        .robots
        .iter()
        .map(|r| MetricsRow {
            strategy: cfg.strategy,
            world: cfg.world.label(),
            seed: cfg.seed,
            n: cfg.robots,
            robot: r.id,
            coverage_cells: r.coverage_cells,
            coverage_norm: r.coverage_norm,
            overlap_cells: r.overlap_cells,
            interrupt_ticks: r.interrupt_ticks,
        })
        .collect()
}

/// Independent per-replication seeds from one master seed.
pub fn replication_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64)
        .map(|i| splitmix64(master.wrapping_add(i.wrapping_mul(0x9e37_79b9_7f4a_7c15))))
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pooled statistics for one strategy over robots and replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: StrategyKind,
    /// World label, or `all` when pooled across worlds.
    pub world: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub runs: usize,
    pub samples: usize,
    pub mean_coverage_norm: f64,
    pub std_coverage_norm: f64,
    pub mean_overlap_cells: f64,
    pub mean_interrupt_ticks: f64,
}

/// Per (strategy, N, world) and per (strategy, N) pooled over worlds. The
/// result does not depend on the order of `rows`.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.strategy, a.n, &a.world, a.seed, a.robot).cmp(&(b.strategy, b.n, &b.world, b.seed, b.robot))
    });
    let mut groups: BTreeMap<(StrategyKind, usize, String), Vec<&MetricsRow>> = BTreeMap::new();
    for r in sorted {
        groups.entry((r.strategy, r.n, r.world.clone())).or_default().push(r);
        groups.entry((r.strategy, r.n, "all".to_string())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((strategy, n, world), rs)| {
            let cov: Vec<f64> = rs.iter().map(|r| r.coverage_norm).collect();
            let (mean, std) = mean_std(&cov);
            let runs: HashSet<(&str, u64)> = rs.iter().map(|r| (r.world.as_str(), r.seed)).collect();
            let k = rs.len() as f64;
            AggregateRow {
                strategy,
                world,
                n,
                runs: runs.len(),
                samples: rs.len(),
                mean_coverage_norm: mean,
                std_coverage_norm: std,
                mean_overlap_cells: rs.iter().map(|r| r.overlap_cells as f64).sum::<f64>() / k,
                mean_interrupt_ticks: rs.iter().map(|r| r.interrupt_ticks as f64).sum::<f64>() / k,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn empty_cfg(strategy: StrategyKind, n: usize, tau: u64) -> RunConfig {
        let mut c = RunConfig::new(strategy, n);
        c.world.obstacles = "none".into();
        c.tau = Some(tau);
        c.start.center = Some([240, 300]);
        c
    }

    #[test]
    fn ledger_closes_and_is_deterministic() {
        for s in StrategyKind::ALL {
            let cfg = empty_cfg(s, 3, 300);
            let a = run(&cfg, true).unwrap();
            for r in &a.robots {
                assert_eq!(r.explore_ticks + r.protocol_ticks + r.interrupt_ticks, 300, "{s}");
            }
            let b = run(&cfg, true).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.robots, b.robots);
            // three clustered robots coordinate at the start
            assert_eq!(a.encounters[0].tick, 0);
            assert_eq!(a.encounters[0].members, vec![0, 1, 2]);
            assert!(a.robots.iter().all(|r| r.protocol_ticks >= 2));
        }
    }

    #[test]
    fn lone_robot_reaches_the_area_bound() {
        for s in StrategyKind::ALL {
            let cfg = empty_cfg(s, 1, 1061);
            let res = run(&cfg, false).unwrap();
            let c = res.robots[0].coverage_norm;
            let cap = 1.0 + std::f64::consts::PI * 400.0 / res.area;
            assert!(c <= cap);
            if s == StrategyKind::Sos {
                assert!(c >= 0.95, "{s}: {c}");
            }
        }
    }

    #[test]
    fn trace_lines_have_the_documented_shape() {
        let cfg = empty_cfg(StrategyKind::Sos, 2, 50);
        let res = run(&cfg, true).unwrap();
        let p_lines = res.trace.lines().filter(|l| l.starts_with("P,")).count();
        assert_eq!(p_lines, 100);
        let first = res.trace.lines().next().unwrap();
        assert!(first.starts_with("E,0,0;1,"), "{first}");
        let last = res.trace.lines().last().unwrap();
        let f: Vec<&str> = last.split(',').collect();
        assert_eq!(f.len(), 7);
        assert_eq!(f[1], "49");
        // the closing sense after the last tick can only add
        assert!(f[6].parse::<u64>().unwrap() <= res.robots[1].coverage_cells);
    }

    #[test]
    fn resolved_config_reproduces_the_run() {
        let mut cfg = RunConfig::new(StrategyKind::Ars, 2);
        cfg.seed = 11;
        cfg.tau = Some(120);
        let world = cfg.world.load().unwrap();
        let resolved = cfg.resolved(&world).unwrap();
        assert_eq!(resolved.margin, Some(40));
        assert!(resolved.start.center.is_some());
        let a = Simulation::new(&cfg, &world, true).unwrap().run().unwrap();
        let b = Simulation::new(&resolved, &world, true).unwrap().run().unwrap();
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(StrategyKind::Sos, 2);
        c.k = 0.9;
        assert!(c.validate().is_err());
        let mut c = RunConfig::new(StrategyKind::Sos, 0);
        assert!(c.validate().is_err());
        c.robots = 2;
        c.margin = Some(10);
        assert!(c.validate().is_err());
        c.margin = Some(0);
        c.gamma = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn placement_is_connected() {
        let world = generate_random(3, 480, 600, &ObstacleSpec::sparse()).unwrap();
        for seed in 0..20 {
            let mut cfg = RunConfig::new(StrategyKind::Sos, 8);
            cfg.seed = seed;
            let cells = place_robots(&cfg, &world).unwrap();
            assert!(cells.iter().all(|c| world.is_accessible(*c)));
            let comps = encounter_components(&cells.iter().map(|&c| Some(c)).collect::<Vec<_>>(), 20);
            assert_eq!(comps.len(), 1, "seed {seed}");
            for c in &cells {
                assert!(c.dist(cells[0]) <= 40.0 + 1e-9);
            }
        }
    }

    #[test]
    fn replication_seeds_are_distinct() {
        let s = replication_seeds(42, 100);
        let set: HashSet<u64> = s.iter().copied().collect();
        assert_eq!(set.len(), 100);
        assert_eq!(s[..10], replication_seeds(42, 10)[..]);
    }

    #[test]
    fn one_replication_aggregate() {
        let rows: Vec<MetricsRow> = (0..3)
            .map(|i| MetricsRow {
                strategy: StrategyKind::Sos,
                world: "w".into(),
                seed: 1,
                n: 3,
                robot: i,
                coverage_cells: 0,
                coverage_norm: [0.5, 0.7, 0.9][i],
                overlap_cells: 0,
                interrupt_ticks: 0,
            })
            .collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        assert!((agg[0].mean_coverage_norm - 0.7).abs() < 1e-12);
        let pop = ((0.04 + 0.0 + 0.04) / 3.0f64).sqrt();
        assert!((agg[0].std_coverage_norm - pop).abs() < 1e-12);
        assert_eq!(agg[0].runs, 1);
    }

    fn brute_components(pos: &[Cell], r: i32) -> Vec<Vec<usize>> {
        let n = pos.len();
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                reach[i][j] = i == j || pos[i].dist(pos[j]) <= r as f64;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        let mut out: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let comp: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
            if !out.contains(&comp) {
                out.push(comp);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn components_match_closure(raw in prop::collection::vec((0i32..120, 0i32..120), 1..14), r in 1i32..40) {
            let pos: Vec<Cell> = raw.iter().map(|&(x, y)| Cell::new(x, y)).collect();
            let got = encounter_components(&pos.iter().map(|&c| Some(c)).collect::<Vec<_>>(), r);
            prop_assert_eq!(got, brute_components(&pos, r));
        }

        #[test]
        fn aggregate_is_order_invariant(covs in prop::collection::vec(0.0f64..1.2, 2..30), rot in 0usize..30) {
            let rows: Vec<MetricsRow> = covs.iter().enumerate().map(|(i, &c)| MetricsRow {
                strategy: StrategyKind::ALL[i % 3],
                world: format!("w{}", i % 2),
                seed: (i / 6) as u64,
                n: 2,
                robot: i % 2,
                coverage_cells: 0,
                coverage_norm: c,
                overlap_cells: i as u64,
                interrupt_ticks: 0,
            }).collect();
            let mut shuffled = rows.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(aggregate(&rows), aggregate(&shuffled));
        }
    }
}
