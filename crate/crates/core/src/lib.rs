//! Reward engine and dataset generator for spatially grounded
//! chain-of-thought reasoning.
//!
//! - [`geometry`]: boxes, box sets and the HIoU metric.
//! - [`trace`]: the `<think>/<area>/<text>/<answer>` trace grammar.
//! - [`scaffold`]: reverse expansion into focus trajectories.
//! - [`depth`] and [`netpbm`]: depth maps and image I/O.
//! - [`rewards`] and [`scoring`]: composite rewards, judge history and
//!   group advantages.
//! - [`datagen`]: the offline record-generation pipeline.

pub mod datagen;
pub mod depth;
pub mod geometry;
pub mod netpbm;
pub mod prompts;
pub mod rewards;
pub mod scaffold;
pub mod scoring;
pub mod trace;
