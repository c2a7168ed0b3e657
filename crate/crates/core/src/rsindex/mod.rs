//! Repeat-sales index estimation with graph-Laplacian regularization.

mod estimate;
mod laplacian;
mod panel;

pub use estimate::{estimate_indexes, penalized_objective, RsConfig, RsFit};
pub use laplacian::{build_laplacians, spatial_laplacian, temporal_laplacian, Csr, LaplacianSet};
pub use panel::{aggregate, estimate_panel, AggregateLevel, AreaReport, IndexPanel, NATIONAL_ID};
