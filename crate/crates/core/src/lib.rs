//! Function preserving projections.
//!
//! Learns an orthonormal linear map from `D` input dimensions to a 2D plane
//! jointly with a small nonlinear predictor on that plane, so that one or
//! more user-chosen response functions become visible as simple patterns in
//! the embedding. The projection stays a plain linear map, so the two axes
//! of every plot keep their meaning in terms of the original inputs.
//!
//! The crate is organised as:
//!
//! * [`data`]: datasets, CSV/NPY ingestion, standardization, splitting and
//!   synthetic generators.
//! * [`models`]: the 2D heads (polynomial regressor, softmax classifier),
//!   their losses and analytic gradients.
//! * [`optimizer`]: projections on the Stiefel manifold, retraction and the
//!   mini-batch training loop.
//! * [`significance`]: null distributions from shuffled responses, p-values
//!   and the dimension × sample-size grid study.
//! * [`plot`]: dependency-free SVG rendering for scatterplots, histograms
//!   and heatmaps.
//! * [`pipeline`]: the end-to-end standardize / pre-project / split / fit /
//!   evaluate driver shared by the command line tool.

pub mod data;
mod error;
pub mod linalg;
pub mod models;
pub mod optimizer;
pub mod pipeline;
pub mod plot;
pub mod rng;
mod serde_util;
pub mod significance;

pub use error::{FppError, Result};

/// Library version recorded in every serialized report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
