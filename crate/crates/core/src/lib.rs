//! Three-factor decomposition of regional house price indexes.
//!
//! The pipeline runs bottom-up:
//!
//! 1. [`ingest`] reads transactions and geography, pairs repeat sales.
//! 2. [`rsindex`] estimates fine-region log indexes by Laplacian-regularized
//!    repeat-sales regression and aggregates them.
//! 3. [`spectral`] runs PCA on the fine panel.
//! 4. [`factors`] builds the Market, Mining and Lifestyle factor series.
//! 5. [`tskit`] holds the state-space ARIMAX machinery (likelihood, fitting,
//!    order selection, diagnostics, forecast fans).
//! 6. [`scenario`] fits per-region loadings, expanding windows, decompositions
//!    and scenario bands.
//! 7. [`breaks`] covers structural-break analysis of a factor series.
//! 8. [`synth`] generates ground-truth worlds for every estimator above.
//!
//! Independent tasks (regions, windows, Monte Carlo replicates) are dispatched
//! through [`exec`], which uses rayon when the `parallel` feature is enabled
//! and falls back to a sequential loop otherwise.

pub mod breaks;
pub mod error;
pub mod exec;
pub mod factors;
pub mod ingest;
pub mod month;
pub mod rsindex;
pub mod scenario;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod tskit;

pub use error::{Error, Result};
pub use month::Month;
