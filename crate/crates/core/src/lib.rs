//! Multi-robot search of unknown gridworlds with soft-obstacle coordination.
//!
//! The crate is layered bottom-up: [`world`] holds the environment and
//! robot maps, [`geometry`] the area/time formulas, [`navigation`] the Bug
//! planners, [`coverage`] sweep and frontier search, [`coordination`] the
//! rendezvous protocol, [`strategies`] the three controllers, and [`sim`]
//! the tick engine and metrics.

pub mod coordination;
pub mod coverage;
pub mod geometry;
pub mod navigation;
pub mod sim;
pub mod strategies;
pub mod world;

pub use geometry::{ExplorationRegion, SearchBudget};
pub use world::{Cell, CellClass, GridWorld, KnownMap};
