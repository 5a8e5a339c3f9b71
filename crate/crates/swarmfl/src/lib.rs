//! Deterministic simulator of blockchain-secured federated learning in a
//! robot swarm.
//!
//! A swarm of mobile robots collects trajectory data about its peers, trains
//! a small recurrent model locally, and aggregates the local models through a
//! quorum-triggered smart contract replicated on a simplified
//! proof-of-authority blockchain. The contract adds Sybil protection
//! (token-priced submissions), outlier rejection, a median-anchored ranking
//! system, and sample-weighted token redistribution. Configurable Byzantine
//! strategies (faulty, malicious, smart) replace honest training for
//! designated robots.
//!
//! Everything is a pure function of `(config, seed)`: motion, sensing,
//! message delivery, sealing, contract execution, and training are all
//! deterministic, so whole experiments replay bit-identically.
//!
//! Module map:
//!
//! - [`arena`] — kinematic world: motion, obstacle avoidance, neighbor
//!   sensing, trajectory recording, data expiration.
//! - [`netsim`] — connectivity graph and per-tick gossip delivery.
//! - [`chain`] — per-robot blockchain node: sealing rotation, fork choice,
//!   deterministic contract replay, canonical serialization.
//! - [`contract`] — the smart-contract state machine: FedAvg aggregation,
//!   fee gate, outlier rejection, ranking, payouts.
//! - [`learner`] — the LSTM trajectory predictor with mini-batch SGD and
//!   backpropagation through time.
//! - [`byzantine`] — the three adversarial submission strategies.
//! - [`harness`] — experiment orchestration, metrics, CSV output, audits.
//!
//! Each major capability has a runnable example under `examples/`; the
//! `swarmfl` binary exposes `run`, `suite`, and `audit` subcommands.

pub mod arena;
pub mod byzantine;
pub mod chain;
pub mod contract;
pub mod harness;
pub mod learner;
pub mod netsim;
pub mod rng;

/// Errors surfaced by configuration validation and run orchestration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("world construction failed: {0}")]
    World(String),
    #[error("audit failed: {0}")]
    Audit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
