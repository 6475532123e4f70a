//! Deterministic core of an agentic cardiac MRI interpretation system.
//!
//! Arrays are `(phase, slice, row, col)` throughout; see [`volume`].

pub mod volume;
pub mod metrics;
pub mod quantify;
pub mod aha17;
pub mod backends;
pub mod tool;
pub mod preprocess;
pub mod grounding;
pub mod report;
pub mod agent;
