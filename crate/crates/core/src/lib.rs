//! Exact robustness verification for message-passing graph neural networks
//! on node classification.
//!
//! The crate takes a trained GNN, an attributed graph, a target node and a
//! perturbation budget, and decides whether any admissible combination of
//! edge edits and attribute changes flips the prediction at the target.
//! Decisions are reached by a mixed-integer encoding solved layer by layer,
//! with interval bounds supplying the big-M constants.

pub mod bounds;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod io;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod verifier;

pub use error::{Error, Result};
