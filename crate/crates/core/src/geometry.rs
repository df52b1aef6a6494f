//! Scannable-area formulas, margin timing, and rectangular exploration regions.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Cell;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("remaining search time is negative ({0})")]
    NegativeRemaining(f64),
    #[error("margin width {m} is below the minimum 2r = {min}")]
    MarginTooNarrow { m: i32, min: i32 },
    #[error("search time is not positive ({0})")]
    NonPositiveTime(f64),
    #[error("robot count must be at least 1")]
    NoRobots,
}

/// Time and sensing parameters that bound what one robot can scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Total search time τ.
    pub tau: f64,
    /// Time already elapsed.
    pub t: f64,
    /// Duration of the current coordination event.
    pub delta_t: f64,
    /// Perception radius in cells.
    pub r: f64,
    /// Motion scale in cells per tick.
    pub gamma: f64,
}

impl SearchBudget {
    pub fn new(tau: f64, r: f64, gamma: f64) -> Self {
        Self {
            tau,
            t: 0.0,
            delta_t: 0.0,
            r,
            gamma,
        }
    }

    pub fn at(self, t: f64, delta_t: f64) -> Self {
        Self { t, delta_t, ..self }
    }

    /// τ − t − ΔT.
    pub fn remaining(&self) -> f64 {
        self.tau - self.t - self.delta_t
    }
}

/// Per-robot time budget for `n` robots sharing a `w`×`h` world, scaled by
/// `k`, truncated to whole ticks.
pub fn search_time(w: i32, h: i32, r: f64, gamma: f64, n: usize, k: f64) -> Result<u64, GeometryError> {
    if n == 0 {
        return Err(GeometryError::NoRobots);
    }
    let tau = k * ((w as f64 * h as f64) / (2.0 * gamma * r * n as f64) - PI * r / (2.0 * gamma));
    if tau < 1.0 {
        return Err(GeometryError::NonPositiveTime(tau));
    }
    Ok(tau.trunc() as u64)
}

/// Exact area a robot can scan in `tau` ticks: a start disk plus a swept band.
pub fn max_area_exact(tau: f64, r: f64, gamma: f64) -> f64 {
    PI * r * r + 2.0 * gamma * r * tau
}

/// [`max_area_exact`] truncated to whole cells.
pub fn max_area(tau: f64, r: f64, gamma: f64) -> u64 {
    max_area_exact(tau, r, gamma).floor() as u64
}

/// Time to sweep a width-`m` frame around the square matching the remaining budget.
pub fn margin_time(m: f64, budget: &SearchBudget) -> Result<f64, GeometryError> {
    let rem = budget.remaining();
    if rem < 0.0 {
        return Err(GeometryError::NegativeRemaining(rem));
    }
    let s = max_area_exact(rem, budget.r, budget.gamma).sqrt();
    Ok(2.0 / (budget.r * budget.gamma) * (m * m + m * s))
}

/// Scannable area once the margin time `tau0` is added to the budget.
pub fn augmented_area(budget: &SearchBudget, tau0: f64) -> Result<f64, GeometryError> {
    let rem = budget.remaining();
    if rem < 0.0 {
        return Err(GeometryError::NegativeRemaining(rem));
    }
    Ok(max_area_exact(rem + tau0, budget.r, budget.gamma))
}

/// Side of the square whose area covers the remaining scannable area.
pub fn region_side(budget: &SearchBudget) -> i32 {
    let rem = budget.remaining().max(0.0);
    let area = max_area_exact(rem, budget.r, budget.gamma);
    let side = area.sqrt().ceil() as i32;
    // guard against sqrt rounding just below an exact square
    if ((side - 1) as f64).powi(2) >= area {
        side - 1
    } else {
        side.max(1)
    }
}

/// Axis-aligned rectangle of cells assigned to one robot, with an optional margin frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExplorationRegion {
    /// Left-lower corner.
    pub origin: Cell,
    pub width: i32,
    pub height: i32,
    pub margin: i32,
}

impl ExplorationRegion {
    pub fn new(origin: Cell, width: i32, height: i32, margin: i32) -> Self {
        assert!(width >= 1 && height >= 1, "region must be nonempty");
        assert!(margin >= 0, "margin cannot be negative");
        Self {
            origin,
            width,
            height,
            margin,
        }
    }

    /// Square of `side` cells centred (as closely as the lattice allows) on `center`.
    pub fn centered(center: Cell, side: i32, margin: i32) -> Self {
        Self::new(center.offset(-side / 2, -side / 2), side, side, margin)
    }

    pub fn centroid(&self) -> (f64, f64) {
        (
            self.origin.x as f64 + self.width as f64 / 2.0,
            self.origin.y as f64 + self.height as f64 / 2.0,
        )
    }

    /// Cell containing the centroid.
    pub fn center_cell(&self) -> Cell {
        self.origin.offset(self.width / 2, self.height / 2)
    }

    pub fn x_end(&self) -> i32 {
        self.origin.x + self.width
    }

    pub fn y_end(&self) -> i32 {
        self.origin.y + self.height
    }

    pub fn area(&self) -> i64 {
        self.width as i64 * self.height as i64
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= self.origin.x && c.x < self.x_end() && c.y >= self.origin.y && c.y < self.y_end()
    }

    /// True if `c` lies in the region or its margin frame.
    pub fn contains_with_margin(&self, c: Cell) -> bool {
        self.grown(self.margin).contains(c)
    }

    /// Same region expanded by `d` cells on each side.
    pub fn grown(&self, d: i32) -> Self {
        Self {
            origin: self.origin.offset(-d, -d),
            width: self.width + 2 * d,
            height: self.height + 2 * d,
            margin: self.margin,
        }
    }

    /// Chebyshev-style gap between two rectangles: the number of whole cells
    /// between them along the separating axis. Negative when they overlap.
    pub fn separation(&self, other: &ExplorationRegion) -> i32 {
        let gx = (other.origin.x - self.x_end()).max(self.origin.x - other.x_end());
        let gy = (other.origin.y - self.y_end()).max(self.origin.y - other.y_end());
        gx.max(gy)
    }

    pub fn intersects(&self, other: &ExplorationRegion) -> bool {
        self.separation(other) < 0
    }

    /// Nearest cell of the rectangle to `c`.
    pub fn clamp(&self, c: Cell) -> Cell {
        Cell::new(
            c.x.clamp(self.origin.x, self.x_end() - 1),
            c.y.clamp(self.origin.y, self.y_end() - 1),
        )
    }

    /// Euclidean distance from `c` to the nearest region cell.
    pub fn distance_to(&self, c: Cell) -> f64 {
        self.clamp(c).dist(c)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.origin.y..self.y_end())
            .flat_map(move |y| (self.origin.x..self.x_end()).map(move |x| Cell::new(x, y)))
    }

    /// Smallest rectangle containing both.
    pub fn union_bbox(&self, other: &ExplorationRegion) -> ExplorationRegion {
        let x0 = self.origin.x.min(other.origin.x);
        let y0 = self.origin.y.min(other.origin.y);
        let x1 = self.x_end().max(other.x_end());
        let y1 = self.y_end().max(other.y_end());
        ExplorationRegion::new(Cell::new(x0, y0), x1 - x0, y1 - y0, self.margin)
    }
}

impl fmt::Display for ExplorationRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "R({},{},{},{},{})",
            self.origin.x, self.origin.y, self.width, self.height, self.margin
        )
    }
}

/// Square region sized for the remaining budget, centred on `anchor`.
pub fn region_for_budget(
    anchor: Cell,
    budget: &SearchBudget,
    m: i32,
) -> Result<ExplorationRegion, GeometryError> {
    let min = (2.0 * budget.r).ceil() as i32;
    if m != 0 && m < min {
        return Err(GeometryError::MarginTooNarrow { m, min });
    }
    Ok(ExplorationRegion::centered(anchor, region_side(budget), m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_areas() {
        assert_eq!(max_area(2141.0, 20.0, 1.0), 86896);
        assert_eq!(max_area(1061.0, 20.0, 1.0), 43696);
        assert_eq!(max_area(0.0, 20.0, 1.0), 1256);
    }

    #[test]
    fn table_one_rows() {
        let rows = [
            (2, 2141, 86896),
            (3, 1421, 58096),
            (4, 1061, 43696),
            (7, 598, 25176),
            (8, 521, 22096),
            (10, 413, 17776),
        ];
        for (n, tau, area) in rows {
            let t = search_time(480, 600, 20.0, 1.0, n, 0.6).unwrap();
            assert_eq!(t, tau, "N={n}");
            assert_eq!(max_area(t as f64, 20.0, 1.0), area, "N={n}");
        }
        assert!(search_time(10, 10, 20.0, 1.0, 1, 0.6).is_err());
        assert!(search_time(480, 600, 20.0, 1.0, 0, 0.6).is_err());
    }

    #[test]
    fn margin_time_examples() {
        // oracle: direct evaluation with the disk area written out by hand
        let disk = 400.0 * std::f64::consts::PI;
        let b = SearchBudget::new(0.0, 20.0, 1.0);
        let oracle = 0.1 * (1600.0 + 40.0 * disk.sqrt());
        let t0 = margin_time(40.0, &b).unwrap();
        assert!((t0 - oracle).abs() < 1e-9);
        assert!((t0 - 301.80).abs() < 0.01);

        let b = SearchBudget::new(1000.0, 20.0, 1.0);
        let t0 = margin_time(40.0, &b).unwrap();
        let s = (disk + 40.0 * 1000.0).sqrt();
        assert!((t0 - 0.1 * (1600.0 + 40.0 * s)).abs() < 1e-9);
        assert!((t0 - 972.47).abs() < 0.01);
    }

    #[test]
    fn augmented_area_example() {
        let b = SearchBudget::new(1000.0, 20.0, 1.0);
        let a = augmented_area(&b, 972.47).unwrap();
        assert!((a - 80155.4).abs() < 0.05);
        assert_eq!(augmented_area(&b, 0.0).unwrap(), max_area_exact(1000.0, 20.0, 1.0));
    }

    #[test]
    fn negative_remaining_is_rejected() {
        let b = SearchBudget::new(10.0, 20.0, 1.0).at(8.0, 3.0);
        assert!(margin_time(40.0, &b).is_err());
        assert!(augmented_area(&b, 1.0).is_err());
    }

    #[test]
    fn region_sides() {
        assert_eq!(region_side(&SearchBudget::new(1061.0, 20.0, 1.0)), 210);
        assert_eq!(region_side(&SearchBudget::new(1e-9, 20.0, 1.0)), 36);
        let r = region_for_budget(Cell::new(0, 0), &SearchBudget::new(1061.0, 20.0, 1.0), 40).unwrap();
        assert!(r.area() as f64 >= max_area_exact(1061.0, 20.0, 1.0));
        assert!(region_for_budget(Cell::new(0, 0), &SearchBudget::new(5.0, 20.0, 1.0), 10).is_err());
    }

    #[test]
    fn separation_counts_gap_cells() {
        let a = ExplorationRegion::new(Cell::new(0, 0), 10, 10, 0);
        let touching = ExplorationRegion::new(Cell::new(10, 0), 5, 5, 0);
        let gap3 = ExplorationRegion::new(Cell::new(13, 2), 5, 5, 0);
        let overlap = ExplorationRegion::new(Cell::new(9, 9), 5, 5, 0);
        assert_eq!(a.separation(&touching), 0);
        assert_eq!(a.separation(&gap3), 3);
        assert!(a.intersects(&overlap));
        assert!(!a.intersects(&touching));
    }

    #[test]
    fn centroid_is_derived() {
        let r = ExplorationRegion::new(Cell::new(10, 20), 4, 6, 0);
        assert_eq!(r.centroid(), (12.0, 23.0));
        assert!(r.contains(Cell::new(13, 25)));
        assert!(!r.contains(Cell::new(14, 25)));
        assert_eq!(r.cells().count(), 24);
    }
}
