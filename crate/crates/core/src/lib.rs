//! Deterministic tabletop rearrangement simulator for closed-loop planning
//! under scene perturbations.
//!
//! A campaign generates seeded episodes ([`tasks`]), runs a planner
//! ([`planner`]) against a stochastic executor ([`executor`]), injects
//! additions, removals and displacements ([`perturb`]) and reports what
//! happened through a monitor ([`monitor`]). [`harness`] ties the loop
//! together and aggregates metrics.

pub mod executor;
pub mod harness;
pub mod instr;
pub mod monitor;
pub mod perturb;
pub mod planner;
pub mod promptkit;
pub mod rng;
pub mod tasks;
pub mod world;
