//! Online portfolio selection with multiplicative weights seen as dual
//! averaging over the simplex.
//!
//! The crate ships four parameterizations of the same iteration -- the
//! classic horizon-tuned update, an optimally tuned one, a horizon-free one,
//! and a recency-weighted one -- together with their certified regret
//! bounds, the entropic simplex machinery they stand on, and a regime-shift
//! market simulator for head-to-head comparisons.
//!
//! The moving parts:
//!
//! * [`simplex`]: portfolios, the entropic prox-function, and the softmax
//!   mirror operator in log-domain form.
//! * [`schedule`] / [`engine`]: the generic weighted iteration with full
//!   regret accounting.
//! * [`variants`]: the four schedule factories plus the multiplicative
//!   weight update used to cross-check the engine.
//! * [`bounds`]: the generic guarantee, each variant's closed form, and the
//!   bound-vs-run certificate.
//! * [`rng`] / [`sim`] / [`tape`]: deterministic counter-based streams, the
//!   regime-shift market model, CSV tapes, and oracles.
//! * [`experiment`]: multi-replication orchestration and report building.

pub mod bounds;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod simplex;
pub mod tape;
pub mod variants;

pub use error::{Error, Result};
