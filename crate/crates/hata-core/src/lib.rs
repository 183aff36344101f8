//! Human-aware task allocation for robot fleets.
//!
//! The pipeline, end to end: pedestrian detection logs become per-person
//! trajectories ([`trajectory`]), which aggregate into time-layered
//! occupancy-probability maps ([`mod_map`]). A thresholded grid planner
//! ([`planner`]) produces candidate robot→task paths, priced by a weighted
//! distance/encounter cost ([`cost`]) and matched optimally ([`assign`]).
//! The two cost weights can be tuned automatically against any scalar
//! objective ([`gp`], [`bo`]). Allocations are then executed among the
//! recorded humans by a rule-based coordination simulator ([`sim`]), and
//! [`experiment`] wires one full comparison run together. [`io`] holds the
//! on-disk formats.

pub mod assign;
pub mod bo;
pub mod cost;
pub mod experiment;
pub mod gp;
pub mod grid;
pub mod io;
pub mod mod_map;
pub mod planner;
pub mod sim;
pub mod trajectory;
