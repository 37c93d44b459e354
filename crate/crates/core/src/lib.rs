//! Corpus forging, staged curriculum objectives and a loss-driven curriculum
//! scheduler, with a toy harness that closes the training loop.

pub mod forge;
pub mod geometry;
pub mod harness;
pub mod jsonl;
pub mod losses;
pub mod registry;
pub mod scheduler;
pub mod synthetic;
