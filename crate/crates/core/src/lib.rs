//! Robust clustering of linear contextual bandits with corrupted users.
//!
//! The crate simulates a population of users whose preferences fall into a
//! few unknown clusters, some of whom corrupt their feedback. It provides
//! the robust clustering policy (weighted ridge regression on a
//! deletion-only user graph), its non-robust and single-model baselines,
//! online corrupted-user detection with an AUC evaluation, a feature
//! extraction path for rating matrices, and an experiment harness with CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bandits;
pub mod detector;
pub mod envsim;
pub mod error;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod numkit;
pub mod seeds;

pub use error::{Error, Result};
