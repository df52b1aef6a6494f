//! Planned rendezvous strategy: frontier exploration with the whole team
//! returning to a scheduled meeting point.

use crate::coordination::RobotId;
use crate::coverage::{FrontierPreference, Sector};
use crate::world::{Cell, Known, KnownMap};

use super::ars::assign_sectors;
use super::{gather, Assignment, EncounterRecord, Params, Phase, RobotState};

/// Next meeting: where, when, and the travel allowance used to set it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub point: Cell,
    pub t_r: u64,
    pub a: u64,
}

impl Schedule {
    /// After this tick the meeting goes ahead with whoever has arrived.
    pub fn deadline(&self) -> u64 {
        self.t_r + 2 * self.a
    }
}

/// Shared PRS state for one team.
#[derive(Debug, Clone)]
pub struct PrsTeam {
    schedule: Option<Schedule>,
    heading: Vec<bool>,
    sectors: Vec<Option<Sector>>,
}

impl PrsTeam {
    pub fn new(n: usize) -> Self {
        Self {
            schedule: None,
            heading: vec![false; n],
            sectors: vec![None; n],
        }
    }

    pub fn schedule(&self) -> Option<Schedule> {
        self.schedule
    }

    /// Heading to or waiting at the meeting point.
    pub fn is_interrupted(&self, id: RobotId) -> bool {
        self.heading[id]
    }

    pub fn step(&mut self, robot: &mut RobotState, p: &Params, t: u64) -> Option<Cell> {
        let cfg = p.bug_config();
        let id = robot.id;
        if let Some(s) = self.schedule {
            let travel = robot.pos.chebyshev(s.point) as f64 / p.gamma;
            if !self.heading[id] && t as f64 + travel.ceil() >= s.t_r as f64 {
                self.heading[id] = true;
                robot.clear_navigation();
            }
            if self.heading[id] {
                let next = robot.step_toward(s.point, &[], &cfg).ok().flatten();
                robot.phase = if next.is_some() { Phase::Traveling } else { Phase::Idle };
                return next;
            }
        }
        let pref = match self.sectors[id] {
            Some(s) => FrontierPreference::Sector(s),
            None => FrontierPreference::None,
        };
        let next = robot.frontier_step(pref, &[], &cfg);
        robot.phase = if next.is_some() { Phase::Exploring } else { Phase::Done };
        next
    }

    /// Runs the meeting if it is due: at the start, once everyone has
    /// arrived, or at the deadline with those present.
    pub fn meet(&mut self, robots: &mut [RobotState], p: &Params, t: u64) -> Option<EncounterRecord> {
        let present: Vec<RobotId> = match self.schedule {
            None => robots.iter().map(|r| r.id).collect(),
            Some(s) => {
                let here: Vec<RobotId> = robots
                    .iter()
                    .filter(|r| self.heading[r.id] && r.pos == s.point && !r.is_busy(t))
                    .map(|r| r.id)
                    .collect();
                if here.len() < robots.len() && t < s.deadline() {
                    return None;
                }
                if here.is_empty() {
                    self.schedule = Some(Schedule {
                        t_r: t + 2 * s.a + p.b,
                        ..s
                    });
                    self.heading.iter_mut().for_each(|h| *h = false);
                    return None;
                }
                here
            }
        };
        let (leader, delta_t, members) = if present.len() > 1 {
            let g = gather(robots, &present, p.r).ok()?;
            for &id in &g.group.members {
                robots[id].adopt_map(g.fused.map.clone());
            }
            (g.group.leader, g.group.delta_t, g.group.members)
        } else {
            (present[0], 0, present)
        };
        let a = match self.schedule {
            None => p.first_a,
            Some(_) => {
                let free = free_cells(&robots[leader].map);
                let (_, _, rad) = min_enclosing_circle(&hull(&free));
                (rad / p.gamma).ceil() as u64
            }
        };
        let point = meeting_point(&robots[leader].map).unwrap_or(robots[leader].pos);
        // split directions so the team does not leave the meeting as a clump
        let mut assignments = Vec::new();
        if members.len() > 1 {
            let poses: Vec<Cell> = members.iter().map(|&id| robots[id].pos).collect();
            for (k, s) in assign_sectors(&poses, p.r).into_iter().enumerate() {
                self.sectors[members[k]] = Some(s);
                assignments.push((members[k], Assignment::from(s)));
            }
        }
        self.schedule = Some(Schedule {
            point,
            t_r: t + 2 * a + p.b,
            a,
        });
        for (h, r) in self.heading.iter_mut().zip(robots.iter_mut()) {
            *h = false;
            r.clear_navigation();
        }
        Some(EncounterRecord {
            tick: t,
            members,
            leader,
            delta_t,
            assignments,
        })
    }
}

fn free_cells(map: &KnownMap) -> Vec<Cell> {
    map.iter().filter(|(_, k)| *k == Known::Free).map(|(c, _)| c).collect()
}

/// Known-free cell nearest the centroid of all known-free cells.
pub fn meeting_point(map: &KnownMap) -> Option<Cell> {
    let free = free_cells(map);
    if free.is_empty() {
        return None;
    }
    let n = free.len() as f64;
    let cx = free.iter().map(|c| c.x as f64).sum::<f64>() / n;
    let cy = free.iter().map(|c| c.y as f64).sum::<f64>() / n;
    free.into_iter().min_by(|a, b| {
        let da = (a.x as f64 - cx).powi(2) + (a.y as f64 - cy).powi(2);
        let db = (b.x as f64 - cx).powi(2) + (b.y as f64 - cy).powi(2);
        da.total_cmp(&db).then(a.row_major_key().cmp(&b.row_major_key()))
    })
}

/// Convex hull corners of a cell set, counter-clockwise.
pub fn hull(cells: &[Cell]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(i64, i64)> = cells.iter().map(|c| (c.x as i64, c.y as i64)).collect();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.into_iter().map(|(x, y)| (x as f64, y as f64)).collect()
}

type Circle = (f64, f64, f64);

fn circle2(a: (f64, f64), b: (f64, f64)) -> Circle {
    let (cx, cy) = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
    (cx, cy, ((a.0 - cx).powi(2) + (a.1 - cy).powi(2)).sqrt())
}

fn circle3(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<Circle> {
    let d = 2.0 * (a.0 * (b.1 - c.1) + b.0 * (c.1 - a.1) + c.0 * (a.1 - b.1));
    if d.abs() < 1e-12 {
        return None;
    }
    let sq = |p: (f64, f64)| p.0 * p.0 + p.1 * p.1;
    let ux = (sq(a) * (b.1 - c.1) + sq(b) * (c.1 - a.1) + sq(c) * (a.1 - b.1)) / d;
    let uy = (sq(a) * (c.0 - b.0) + sq(b) * (a.0 - c.0) + sq(c) * (b.0 - a.0)) / d;
    Some((ux, uy, ((a.0 - ux).powi(2) + (a.1 - uy).powi(2)).sqrt()))
}

fn inside(c: &Circle, p: (f64, f64)) -> bool {
    ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt() <= c.2 + 1e-7
}

/// Smallest circle enclosing all points, as (x, y, radius). Incremental
/// construction; fine for hull-sized inputs.
pub fn min_enclosing_circle(pts: &[(f64, f64)]) -> Circle {
    let Some(&first) = pts.first() else {
        return (0.0, 0.0, 0.0);
    };
    let mut c = (first.0, first.1, 0.0);
    for i in 1..pts.len() {
        if inside(&c, pts[i]) {
            continue;
        }
        c = (pts[i].0, pts[i].1, 0.0);
        for j in 0..i {
            if inside(&c, pts[j]) {
                continue;
            }
            c = circle2(pts[i], pts[j]);
            for k in 0..j {
                if !inside(&c, pts[k]) {
                    c = circle3(pts[i], pts[j], pts[k]).unwrap_or(c);
                }
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigation::BugKind;
    use crate::world::{DiskKernel, GridWorld};
    use proptest::prelude::*;

    /// Brute force over all pair and triple circles.
    fn mec_oracle(pts: &[(f64, f64)]) -> f64 {
        let mut best = f64::INFINITY;
        let covers = |c: &Circle| pts.iter().all(|&p| inside(c, p));
        for i in 0..pts.len() {
            if covers(&(pts[i].0, pts[i].1, 0.0)) {
                best = best.min(0.0);
            }
            for j in i + 1..pts.len() {
                let c = circle2(pts[i], pts[j]);
                if covers(&c) {
                    best = best.min(c.2);
                }
                for k in j + 1..pts.len() {
                    if let Some(c) = circle3(pts[i], pts[j], pts[k]) {
                        if covers(&c) {
                            best = best.min(c.2);
                        }
                    }
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn enclosing_circle_is_minimal(raw in prop::collection::vec((-50i32..50, -50i32..50), 1..12)) {
            let pts: Vec<(f64, f64)> = raw.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
            let c = min_enclosing_circle(&pts);
            for &p in &pts {
                prop_assert!(inside(&c, p));
            }
            prop_assert!((c.2 - mec_oracle(&pts)).abs() < 1e-6);
        }

        #[test]
        fn hull_circle_equals_full_circle(raw in prop::collection::vec((-30i32..30, -30i32..30), 1..40)) {
            let cells: Vec<Cell> = raw.iter().map(|&(x, y)| Cell::new(x, y)).collect();
            let all: Vec<(f64, f64)> = cells.iter().map(|c| (c.x as f64, c.y as f64)).collect();
            let full = min_enclosing_circle(&all);
            let h = min_enclosing_circle(&hull(&cells));
            prop_assert!((full.2 - h.2).abs() < 1e-6);
        }
    }

    #[test]
    fn meeting_point_is_free_and_central() {
        let mut mask = vec![false; 60 * 60];
        // block the exact centre
        for y in 28..32 {
            for x in 28..32 {
                mask[y * 60 + x] = true;
            }
        }
        let world = GridWorld::from_mask(60, 60, mask).unwrap();
        let kernel = DiskKernel::new(40);
        let mut map = KnownMap::new(60, 60, 40);
        map.sense_from(&world, &kernel, Cell::new(10, 10), &mut Vec::new()).unwrap();
        map.sense_from(&world, &kernel, Cell::new(50, 50), &mut Vec::new()).unwrap();
        let p = meeting_point(&map).unwrap();
        assert!(map.is_known_free(p));
        assert!(p.dist(Cell::new(30, 30)) < 4.0);
    }

    #[test]
    fn team_meets_then_schedules() {
        let world = GridWorld::empty(300, 300).unwrap();
        let kernel = DiskKernel::new(20);
        let p = Params {
            r: 20,
            gamma: 1.0,
            tau: 2000,
            m: 40,
            b: 50,
            first_a: 50,
            bug: BugKind::DistBug,
            seed: 3,
            n_seeds: 200,
        };
        let mut robots = vec![
            RobotState::new(0, Cell::new(150, 150), &world, 20),
            RobotState::new(1, Cell::new(160, 150), &world, 20),
        ];
        for r in robots.iter_mut() {
            r.sense(&world, &kernel).unwrap();
        }
        let mut team = PrsTeam::new(2);
        let rec = team.meet(&mut robots, &p, 0).unwrap();
        assert_eq!(rec.members, vec![0, 1]);
        let s = team.schedule().unwrap();
        assert_eq!(s.t_r, 150);
        assert_eq!(s.a, 50);
        assert!(team.meet(&mut robots, &p, 1).is_none());
        // run both robots until the second meeting
        let mut met = None;
        for t in 1..600 {
            if let Some(rec) = team.meet(&mut robots, &p, t) {
                met = Some((t, rec));
                break;
            }
            for i in 0..2 {
                if let Some(n) = team.step(&mut robots[i], &p, t) {
                    robots[i].pos = n;
                    robots[i].sense(&world, &kernel).unwrap();
                }
            }
        }
        let (t, rec) = met.expect("second meeting");
        assert!(t >= 150 && t <= s.deadline());
        assert_eq!(rec.members.len(), 2);
        let next = team.schedule().unwrap();
        assert!(next.a > 50);
        assert_eq!(next.t_r, t + 2 * next.a + 50);
    }
}
