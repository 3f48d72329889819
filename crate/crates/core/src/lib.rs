//! Reconstruction of continuous 2-D temperature fields from sparse station
//! observations.
//!
//! Three reconstructors share the [`Reconstructor`] interface:
//! inverse distance weighting ([`idw`]), ordinary kriging ([`kriging`]) and a
//! multiplicative Gabor coordinate network ([`inr`]). Around them sit the
//! pieces needed to compare the methods fairly: seeded station ingestion and
//! splitting ([`ingest`]), Bayesian hyper-parameter tuning ([`hpo`]), quality
//! metrics ([`metrics`]), rank-based statistics ([`stats`]) and a
//! reconstruction benchmark ([`bench`]).

pub mod bench;
pub mod domain;
pub mod error;
pub mod hpo;
pub mod idw;
pub mod ingest;
pub mod inr;
pub mod kriging;
pub mod methods;
pub mod metrics;
pub mod spatial;
pub mod stats;
pub mod synthetic;

pub use domain::{ClimatePoint, ClimatePointCloud, CoordinateSystem, QueryPoint};
pub use error::{Error, Result};

/// Predicts field values at arbitrary locations from a fitted model.
pub trait Reconstructor: Send + Sync {
    fn reconstruct(&self, targets: &[domain::QueryPoint]) -> Result<Vec<f64>>;
}
