//! Trust-aware planning for human-robot collaboration.
//!
//! The robot treats the human's trust as a hidden variable in a
//! mixed-observability POMDP and plans over beliefs about it.

pub mod learning;
pub mod pomdp;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod task;
pub mod trust;
