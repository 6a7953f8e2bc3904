//! Goal recognition over continuous, multi-dimensional sensor traces.
//!
//! The pipeline turns real-valued time series into discrete event traces,
//! learns one directly-follows process model per candidate goal, and scores a
//! newly observed prefix against every model with optimal alignments:
//!
//! 1. [`featsel`] picks representative features by clustering the
//!    absolute-correlation matrix and keeping one medoid per cluster.
//! 2. [`quantize`] fits a seeded k-means codebook and maps every row to an
//!    event symbol.
//! 3. [`discover`] builds a directly-follows automaton per goal.
//! 4. [`align`] computes optimal alignments between a trace and a model.
//! 5. [`recognize`] turns alignments into weights and a posterior over goals.
//!
//! [`lda`] provides the single-sample baseline, [`eval`] the cross-validation
//! harness and statistics, [`tune`] the structural and weight search, and
//! [`cli`] the command-line surface.

pub mod align;
pub mod cli;
pub mod data;
pub mod discover;
pub mod error;
pub mod eval;
pub mod featsel;
pub mod lda;
pub mod pipeline;
pub mod quantize;
pub mod recognize;
pub mod tune;

pub use error::{Error, Result};
