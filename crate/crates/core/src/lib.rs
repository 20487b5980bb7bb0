//! Federated pix2pix: paired image-to-image GAN training across simulated
//! sites with FedGAN weight aggregation, plus the synthetic data and
//! evaluation statistics needed to compare single-site, central, and
//! federated models.

pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod params;
pub mod report;
pub mod training;
pub mod util;

pub use error::CoreError;
