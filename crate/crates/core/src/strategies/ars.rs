//! Accidental rendezvous strategy: frontier exploration, with the plane cut
//! into angular sectors whenever robots happen to meet.

use std::f64::consts::TAU;

use crate::coordination::{hungarian, RobotId};
use crate::coverage::{FrontierPreference, Sector};
use crate::world::Cell;

use super::{centroid_cell, gather, Assignment, EncounterRecord, Params, Phase, RobotState};

/// Per-robot ARS controller state.
#[derive(Debug, Clone, Default)]
pub struct ArsMind {
    pub sector: Option<Sector>,
}

impl ArsMind {
    pub fn step(&mut self, robot: &mut RobotState, p: &Params) -> Option<Cell> {
        let pref = match self.sector {
            Some(s) => FrontierPreference::Sector(s),
            None => FrontierPreference::None,
        };
        let next = robot.frontier_step(pref, &[], &p.bug_config());
        robot.phase = if next.is_some() { Phase::Exploring } else { Phase::Done };
        next
    }
}

/// `n` equal sectors around `apex`, the first starting at angle zero.
pub fn sectors(apex: Cell, n: usize) -> Vec<Sector> {
    let width = TAU / n as f64;
    (0..n)
        .map(|k| Sector {
            apex,
            bisector: width * k as f64 + width / 2.0,
            half_width: width / 2.0,
        })
        .collect()
}

/// Equal sectors around the centroid of `poses`, matched to the robots by
/// minimum total distance to a point `2r` out along each bisector.
/// `result[k]` is the sector for `poses[k]`.
pub fn assign_sectors(poses: &[Cell], r: i32) -> Vec<Sector> {
    let apex = centroid_cell(poses);
    let secs = sectors(apex, poses.len());
    let reach = 2.0 * r as f64;
    let cost: Vec<Vec<f64>> = poses
        .iter()
        .map(|q| {
            secs.iter()
                .map(|s| {
                    let tx = apex.x as f64 + reach * s.bisector.cos();
                    let ty = apex.y as f64 + reach * s.bisector.sin();
                    ((tx - q.x as f64).powi(2) + (ty - q.y as f64).powi(2)).sqrt()
                })
                .collect()
        })
        .collect();
    hungarian(&cost).into_iter().map(|k| secs[k]).collect()
}

/// Encounter handling: share the fused map with every member and hand out
/// sectors around the meeting point.
pub fn coordinate(
    robots: &mut [RobotState],
    minds: &mut [ArsMind],
    members: &[RobotId],
    p: &Params,
    t: u64,
) -> Option<EncounterRecord> {
    let g = gather(robots, members, p.r).ok()?;
    let group = g.group;
    for &id in &group.members {
        robots[id].adopt_map(g.fused.map.clone());
        robots[id].history = g.fused.history.clone();
    }
    let poses: Vec<Cell> = group.members.iter().map(|&id| robots[id].pos).collect();
    let mut assignments = Vec::new();
    for (&id, s) in group.members.iter().zip(assign_sectors(&poses, p.r)) {
        minds[id].sector = Some(s);
        assignments.push((id, Assignment::from(s)));
    }
    Some(EncounterRecord {
        tick: t,
        members: group.members,
        leader: group.leader,
        delta_t: group.delta_t,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigation::BugKind;
    use crate::world::{DiskKernel, GridWorld};

    #[test]
    fn sectors_tile_the_circle() {
        let apex = Cell::new(50, 50);
        let secs = sectors(apex, 3);
        for dx in -20..=20 {
            for dy in -20..=20 {
                let c = apex.offset(dx, dy);
                let n = secs.iter().filter(|s| s.contains(c)).count();
                assert!(n >= 1, "{c} uncovered");
                if c != apex {
                    assert!(n <= 2);
                }
            }
        }
    }

    #[test]
    fn meeting_shares_maps_and_splits_directions() {
        let world = GridWorld::empty(400, 400).unwrap();
        let kernel = DiskKernel::new(20);
        let p = Params {
            r: 20,
            gamma: 1.0,
            tau: 500,
            m: 40,
            b: 50,
            first_a: 50,
            bug: BugKind::DistBug,
            seed: 1,
            n_seeds: 200,
        };
        let mut robots = vec![
            RobotState::new(0, Cell::new(200, 190), &world, 20),
            RobotState::new(1, Cell::new(200, 210), &world, 20),
        ];
        for r in robots.iter_mut() {
            r.sense(&world, &kernel).unwrap();
        }
        let mut minds = vec![ArsMind::default(); 2];
        let rec = coordinate(&mut robots, &mut minds, &[0, 1], &p, 3).unwrap();
        assert_eq!(rec.delta_t, 1);
        assert_eq!(robots[0].map.explored_count(), robots[1].map.explored_count());
        // two sectors face +y and -y; each robot takes the one on its side
        let s1 = minds[1].sector.unwrap();
        assert!(s1.contains(Cell::new(200, 260)));
        let s0 = minds[0].sector.unwrap();
        assert!(s0.contains(Cell::new(200, 140)));
    }
}
