//! Cooperative multi-agent systems whose agents sit on
//! the vertices of a DAG. Directives flow down the edges, messages and proxy
//! rewards flow up, and every agent trains its own PPO policy.

pub mod agents;
pub mod engine;
pub mod envs;
pub mod error;
pub mod graph;
pub mod learn;
pub mod levelenv;
pub mod net;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
