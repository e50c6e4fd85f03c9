//! Scope × abstraction memory for multi-trajectory tool-use search.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`]: trajectories, context units and bundles, telemetry.
//! * [`models`]: policy, reward, augmentor and embedder roles, with scripted
//!   and remote implementations.
//! * [`augment`]: the memory store and the four memory methods.
//! * [`search`]: best-of-N, single-round beam search and MCTS.
//! * [`envs`]: toy SQL, knowledge-graph and shell worlds plus the grader.
//! * [`matrix`]: admissibility rules and the experiment runner.
//! * [`stats`]: exact McNemar, Benjamini-Hochberg and the report.
//! * [`cli`]: the `validate` / `run` / `analyze` commands.

pub mod augment;
pub mod cli;
pub mod envs;
mod error;
pub mod matrix;
pub mod models;
pub mod search;
pub mod stats;
pub mod types;

pub use error::{EnvError, Error, ModelError, Result};
