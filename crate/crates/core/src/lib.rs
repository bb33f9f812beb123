//! Spatial extreme-precipitation risk zoning.
//!
//! The pipeline, run independently for each year of gridded daily
//! precipitation:
//!
//! 1. per-node features (mean, std, max, exceedance frequency), standardized
//!    across nodes ([`grid`]);
//! 2. a k-nearest-neighbour spatial graph and its normalized adjacency
//!    ([`graph`]);
//! 3. a two-layer graph convolutional autoencoder producing latent node
//!    embeddings ([`gcn`]);
//! 4. embedding tail scores, a tail set above the `tau` quantile, a
//!    generalized Pareto fit and four r-Pareto features per tail node
//!    ([`tail`], [`gpd`]);
//! 5. K-means on the augmented embeddings, with zones ordered by severity
//!    ([`zoning`]).
//!
//! Cross-year diagnostics (Mahalanobis change detection, ARI, precision and
//! recall of the high-risk zone, Hill estimates) live in [`metrics`]; the two
//! comparison methods live in [`baselines`]; [`pipeline`] ties everything
//! together and [`io`] / [`export`] handle the file formats.

pub mod baselines;
pub mod config;
pub mod error;
pub mod export;
pub mod gcn;
pub mod gpd;
pub mod graph;
pub mod grid;
pub mod io;
pub mod kdtree;
pub mod kmeans;
pub mod metrics;
pub mod pipeline;
pub mod seeds;
pub mod special;
pub mod synth;
pub mod tail;
pub mod zoning;

pub use error::{Error, ErrorKind, Result};
