//! Knowledge graph embeddings from the TripleRE family.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`kgdata`]: triple ingestion, vocabularies, splits, adjacency, the
//!   filter index and a synthetic graph generator.
//! - [`models`]: TransE, PairRE, TripleRE (v1) and TripleRE with residual
//!   projections (v2), with analytic gradients.
//! - [`nodepiece`]: anchor-based entity tokenization and the token encoder
//!   that replaces the entity table.
//! - [`training`]: negative sampling, self-adversarial loss, sparse Adam and
//!   the training loop.
//! - [`eval`]: filtered and sampled link-prediction ranking metrics.
//! - [`checkpoint`]: the `KGE1` binary checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod kgdata;
pub mod models;
pub mod nodepiece;
pub mod real;
pub mod rng;
pub mod training;

pub use error::{KgeError, Result};
pub use real::Real;
