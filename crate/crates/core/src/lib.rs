//! Brewery refrigeration demand-response simulation.
//!
//! Modules, bottom-up:
//! - [`thermo`]: fermentation kinetics, wort properties, tank geometry and
//!   the exact tank thermal step.
//! - [`market`]: hourly price, CO₂ and ambient series plus cost accounting.
//! - [`population`]: size categories, facility locations, batch plans and
//!   tank fleets.
//! - [`flexibility`]: thermostat baseline, window planner and its
//!   exhaustive oracle.
//! - [`process`]: the discrete-event brewery simulation.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod flexibility;
pub mod market;
pub mod population;
pub mod process;
pub mod thermo;
