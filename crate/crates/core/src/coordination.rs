//! The rendezvous protocol: spanning tree, leader election, data fusion,
//! frame unification, cellular decomposition, assignment, and replication.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::geometry::ExplorationRegion;
use crate::world::{Cell, KnownBounds, KnownMap};

pub type RobotId = usize;

/// Largest group a leader will decompose for.
pub const MAX_GROUP: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoordError {
    #[error("members {0:?} are not connected")]
    Disconnected(Vec<RobotId>),
    #[error("empty member list")]
    NoMembers,
    #[error("group of {0} exceeds the maximum of {MAX_GROUP}")]
    TooMany(usize),
    #[error("no placement for {n} regions within a window of {window} cells")]
    NoPlacement { n: usize, window: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HistoryEntry {
    pub region: ExplorationRegion,
    /// Tick of the assignment; newer wins on merge.
    pub stamp: u64,
}

/// Latest known assignment per robot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionHistory {
    entries: BTreeMap<RobotId, HistoryEntry>,
}

impl InteractionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, robot: RobotId, region: ExplorationRegion, stamp: u64) {
        let e = HistoryEntry { region, stamp };
        match self.entries.get(&robot) {
            Some(old) if old.stamp > stamp => {}
            _ => {
                self.entries.insert(robot, e);
            }
        }
    }

    pub fn get(&self, robot: RobotId) -> Option<&HistoryEntry> {
        self.entries.get(&robot)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(robot, width, height, centroid)` tuples.
    pub fn tuples(&self) -> impl Iterator<Item = (RobotId, i32, i32, (f64, f64))> + '_ {
        self.entries
            .iter()
            .map(|(&id, e)| (id, e.region.width, e.region.height, e.region.centroid()))
    }

    pub fn regions(&self) -> impl Iterator<Item = &ExplorationRegion> + '_ {
        self.entries.values().map(|e| &e.region)
    }

    /// Latest region per robot.
    pub fn by_robot(&self) -> impl Iterator<Item = (RobotId, &ExplorationRegion)> + '_ {
        self.entries.iter().map(|(&id, e)| (id, &e.region))
    }
}

/// State that can be merged into a peer's copy during fusion.
pub trait Fusable {
    fn absorb(&mut self, other: &Self);
}

impl Fusable for InteractionHistory {
    fn absorb(&mut self, other: &Self) {
        for (&id, e) in &other.entries {
            self.record(id, e.region, e.stamp);
        }
    }
}

impl Fusable for KnownMap {
    fn absorb(&mut self, other: &Self) {
        KnownMap::absorb(self, other);
    }
}

impl<T: Ord + Clone> Fusable for BTreeSet<T> {
    fn absorb(&mut self, other: &Self) {
        self.extend(other.iter().cloned());
    }
}

/// Deduplicated list of interference regions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionSet(pub Vec<ExplorationRegion>);

impl RegionSet {
    pub fn insert(&mut self, r: ExplorationRegion) -> bool {
        if self.0.contains(&r) {
            false
        } else {
            self.0.push(r);
            true
        }
    }

    pub fn as_slice(&self) -> &[ExplorationRegion] {
        &self.0
    }
}

impl Fusable for RegionSet {
    fn absorb(&mut self, other: &Self) {
        for r in &other.0 {
            self.insert(*r);
        }
    }
}

/// What robots exchange during fusion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionPayload {
    pub history: InteractionHistory,
    pub map: KnownMap,
    pub interference: RegionSet,
}

impl Fusable for FusionPayload {
    fn absorb(&mut self, other: &Self) {
        self.history.absorb(&other.history);
        self.map.absorb(&other.map);
        self.interference.absorb(&other.interference);
    }
}

/// Undirected tree over a group's members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: RobotId,
    adj: BTreeMap<RobotId, BTreeSet<RobotId>>,
}

impl SpanningTree {
    pub fn members(&self) -> impl Iterator<Item = RobotId> + '_ {
        self.adj.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbours(&self, id: RobotId) -> impl Iterator<Item = RobotId> + '_ {
        self.adj[&id].iter().copied()
    }

    pub fn edges(&self) -> Vec<(RobotId, RobotId)> {
        let mut out = Vec::new();
        for (&a, ns) in &self.adj {
            for &b in ns {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Hop counts from `from` to every member.
    pub fn depths(&self, from: RobotId) -> BTreeMap<RobotId, usize> {
        let mut d = BTreeMap::from([(from, 0)]);
        let mut q = VecDeque::from([from]);
        while let Some(u) = q.pop_front() {
            for v in self.neighbours(u) {
                if !d.contains_key(&v) {
                    d.insert(v, d[&u] + 1);
                    q.push_back(v);
                }
            }
        }
        d
    }

    /// Parent of each non-root member when the tree hangs from `root`.
    pub fn parents(&self, root: RobotId) -> BTreeMap<RobotId, RobotId> {
        let mut parent = BTreeMap::new();
        let mut q = VecDeque::from([root]);
        let mut seen = BTreeSet::from([root]);
        while let Some(u) = q.pop_front() {
            for v in self.neighbours(u) {
                if seen.insert(v) {
                    parent.insert(v, u);
                    q.push_back(v);
                }
            }
        }
        parent
    }

    /// `(child, parent)` pairs with every child listed after all of its own children.
    pub fn fusion_order(&self, root: RobotId) -> Vec<(RobotId, RobotId)> {
        fn visit(t: &SpanningTree, u: RobotId, from: Option<RobotId>, out: &mut Vec<(RobotId, RobotId)>) {
            for v in t.neighbours(u) {
                if Some(v) != from {
                    visit(t, v, Some(u), out);
                    out.push((v, u));
                }
            }
        }
        let mut out = Vec::new();
        visit(self, root, None, &mut out);
        out
    }
}

/// BFS tree from the lowest id, visiting neighbours in ascending order.
pub fn build_spanning_tree<F>(members: &[RobotId], linked: F) -> Result<SpanningTree, CoordError>
where
    F: Fn(RobotId, RobotId) -> bool,
{
    let ids: BTreeSet<RobotId> = members.iter().copied().collect();
    let root = *ids.first().ok_or(CoordError::NoMembers)?;
    let mut adj: BTreeMap<RobotId, BTreeSet<RobotId>> = ids.iter().map(|&i| (i, BTreeSet::new())).collect();
    let mut seen = BTreeSet::from([root]);
    let mut q = VecDeque::from([root]);
    while let Some(u) = q.pop_front() {
        for &v in &ids {
            if !seen.contains(&v) && linked(u, v) {
                seen.insert(v);
                adj.get_mut(&u).unwrap().insert(v);
                adj.get_mut(&v).unwrap().insert(u);
                q.push_back(v);
            }
        }
    }
    if seen.len() != ids.len() {
        return Err(CoordError::Disconnected(ids.difference(&seen).copied().collect()));
    }
    Ok(SpanningTree { root, adj })
}

/// Closeness centrality `(n-1) / sum of tree distances`.
pub fn closeness(tree: &SpanningTree, id: RobotId) -> f64 {
    let total: usize = tree.depths(id).values().sum();
    if total == 0 {
        1.0
    } else {
        (tree.len() - 1) as f64 / total as f64
    }
}

/// Most central member; ties go to the lowest id.
pub fn elect_leader(tree: &SpanningTree) -> RobotId {
    tree.members()
        .min_by_key(|&id| (tree.depths(id).values().sum::<usize>(), id))
        .expect("tree is nonempty")
}

/// Merges every member's state into the leader's, children before parents.
/// Intermediate members end up holding the union of their subtree.
pub fn fuse<T: Fusable>(tree: &SpanningTree, leader: RobotId, states: &mut BTreeMap<RobotId, T>) {
    for (child, parent) in tree.fusion_order(leader) {
        let c = states.remove(&child).expect("member state");
        states.get_mut(&parent).expect("member state").absorb(&c);
        states.insert(child, c);
    }
}

/// Translation taking one robot's local coordinates into another's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameTransform {
    pub dx: i32,
    pub dy: i32,
}

impl FrameTransform {
    pub fn apply(&self, c: Cell) -> Cell {
        c.offset(self.dx, self.dy)
    }

    pub fn then(&self, next: &FrameTransform) -> FrameTransform {
        FrameTransform {
            dx: self.dx + next.dx,
            dy: self.dy + next.dy,
        }
    }
}

/// For each tree edge, what the robots know at the encounter: their own
/// local poses and the measured displacement between them.
pub trait RelativePoses {
    /// Position of `id` in its own frame.
    fn local_pose(&self, id: RobotId) -> Cell;
    /// Displacement from `from` to `to`, measured by `from`.
    fn displacement(&self, from: RobotId, to: RobotId) -> (i32, i32);
}

/// Per-member transform into the leader's frame, composed along the tree.
pub fn unify_frames<P: RelativePoses>(
    tree: &SpanningTree,
    leader: RobotId,
    poses: &P,
) -> BTreeMap<RobotId, FrameTransform> {
    let parents = tree.parents(leader);
    let mut out = BTreeMap::from([(leader, FrameTransform::default())]);
    let mut order: Vec<RobotId> = tree.members().collect();
    let depth = tree.depths(leader);
    order.sort_by_key(|id| (depth[id], *id));
    for id in order {
        if id == leader {
            continue;
        }
        let p = parents[&id];
        let (dx, dy) = poses.displacement(p, id);
        // where the parent sees this robot, in the parent's frame
        let seen = poses.local_pose(p).offset(dx, dy);
        let own = poses.local_pose(id);
        let to_parent = FrameTransform {
            dx: seen.x - own.x,
            dy: seen.y - own.y,
        };
        out.insert(id, to_parent.then(&out[&p]));
    }
    out
}

fn region_ok(r: &ExplorationRegion, forbidden: &[ExplorationRegion], gap: i32, bounds: &KnownBounds) -> bool {
    let inside_known = !(bounds.min_x.is_some_and(|v| r.x_end() <= v)
        || bounds.max_x.is_some_and(|v| r.origin.x >= v)
        || bounds.min_y.is_some_and(|v| r.y_end() <= v)
        || bounds.max_y.is_some_and(|v| r.origin.y >= v));
    inside_known && forbidden.iter().all(|f| r.separation(f) >= gap)
}

/// Places `n` square regions of side `side` on a lattice of pitch `side + m`
/// around `center`, nearest slots first, skipping slots within `m` of any
/// forbidden region or wholly behind a known wall.
///
/// Two or three regions form a row centred on `center`; larger groups form
/// blocks around a lattice corner at `center`.
pub fn decompose(
    center: Cell,
    n: usize,
    side: i32,
    m: i32,
    forbidden: &[ExplorationRegion],
    bounds: &KnownBounds,
    max_window: i64,
) -> Result<Vec<ExplorationRegion>, CoordError> {
    if n == 0 {
        return Err(CoordError::NoMembers);
    }
    if n > MAX_GROUP {
        return Err(CoordError::TooMany(n));
    }
    let pitch = side + m;
    let base = match n {
        1 => Cell::new(center.x - side / 2, center.y - side / 2),
        2 => Cell::new(center.x - side - m / 2, center.y - side / 2),
        3 => Cell::new(center.x - side / 2 - pitch, center.y - side / 2),
        _ => Cell::new(center.x - side - m / 2, center.y - side - m / 2),
    };
    let slot = |i: i32, j: i32| ExplorationRegion::new(base.offset(i * pitch, j * pitch), side, side, m);
    let key = |r: &ExplorationRegion| {
        let (cx, cy) = r.centroid();
        let (dx, dy) = (cx - center.x as f64, cy - center.y as f64);
        (dx * dx + dy * dy, dy.abs(), dy.atan2(dx))
    };

    let mut ring = 1i32;
    loop {
        let window = 2 * (ring as i64 + 1) * pitch as i64;
        if window > max_window && ring > 1 {
            return Err(CoordError::NoPlacement { n, window });
        }
        let mut cands: Vec<ExplorationRegion> = Vec::new();
        for j in -ring..=ring + 1 {
            for i in -ring..=ring + 1 {
                cands.push(slot(i, j));
            }
        }
        cands.sort_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
        });
        // only slots fully inside this ring's disk are final in this pass
        let reach = ring as f64 * pitch as f64;
        let picked: Vec<ExplorationRegion> = cands
            .into_iter()
            .filter(|r| key(r).0.sqrt() <= reach)
            .filter(|r| region_ok(r, forbidden, m, bounds))
            .take(n)
            .collect();
        if picked.len() == n {
            return Ok(picked);
        }
        ring += 1;
    }
}

/// Minimum-cost perfect matching on a square cost matrix. Returns the column
/// assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|row| row.len() == n), "cost matrix must be square");
    // potentials formulation, 1-based with a dummy column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![0; n];
    for j in 1..=n {
        rows[p[j] - 1] = j - 1;
    }
    rows
}

pub fn assignment_cost(cost: &[Vec<f64>], rows: &[usize]) -> f64 {
    rows.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Matches robots to regions minimising total distance to region centroids.
/// `result[k]` is the region index for `poses[k]`.
pub fn assign(regions: &[ExplorationRegion], poses: &[Cell]) -> Vec<usize> {
    assert_eq!(regions.len(), poses.len(), "one region per robot");
    let cost: Vec<Vec<f64>> = poses
        .iter()
        .map(|p| {
            regions
                .iter()
                .map(|r| {
                    let (cx, cy) = r.centroid();
                    ((cx - p.x as f64).powi(2) + (cy - p.y as f64).powi(2)).sqrt()
                })
                .collect()
        })
        .collect();
    hungarian(&cost)
}

/// Outcome of one encounter's coordination, as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncounterGroup {
    pub members: Vec<RobotId>,
    pub tree: SpanningTree,
    pub leader: RobotId,
    pub delta_t: u64,
}

impl EncounterGroup {
    pub fn form<F>(members: &[RobotId], linked: F) -> Result<Self, CoordError>
    where
        F: Fn(RobotId, RobotId) -> bool,
    {
        let tree = build_spanning_tree(members, linked)?;
        let leader = elect_leader(&tree);
        let members: Vec<RobotId> = tree.members().collect();
        let delta_t = members.len() as u64 - 1;
        Ok(Self {
            members,
            tree,
            leader,
            delta_t,
        })
    }
}

/// The leader's decisions, replicated to every member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissionPlan {
    pub leader: RobotId,
    pub history: InteractionHistory,
    pub assignments: BTreeMap<RobotId, ExplorationRegion>,
}

impl MissionPlan {
    /// Leader's fused history updated with the new assignments.
    pub fn new(
        leader: RobotId,
        mut history: InteractionHistory,
        assignments: BTreeMap<RobotId, ExplorationRegion>,
        stamp: u64,
    ) -> Self {
        for (&id, &r) in &assignments {
            history.record(id, r, stamp);
        }
        Self {
            leader,
            history,
            assignments,
        }
    }

    /// `prior` extended with every other member's new region.
    pub fn interference_for(&self, id: RobotId, prior: &RegionSet) -> RegionSet {
        let mut z = prior.clone();
        for (&other, &r) in &self.assignments {
            if other != id {
                z.insert(r);
            }
        }
        z
    }
}
