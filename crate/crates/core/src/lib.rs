//! Outlier-robust learning of mixtures of arbitrary Gaussians.
//!
//! The crate is organized around a desk-scale pipeline: contaminated samples go
//! through robust Hermite-moment estimation ([`robust`]), list-decodable tensor
//! decomposition ([`decode`]), moment-matrix partial clustering ([`cluster`]),
//! and spectral separation of thin components ([`spectral`]), orchestrated by a
//! cluster-or-decode recursion with a robust tournament ([`pipeline`]). The
//! [`model`] module carries the Gaussian mixture data model plus the evaluation
//! utilities (total-variation bounds, component matching), and [`contamination`]
//! generates adversarially corrupted sample sets for experiments.
//!
//! All randomized operations take an explicit seeded generator and are
//! reproducible bit-for-bit given the same seed. Every unnamed constant from
//! the underlying method is exposed through [`config::Constants`] so that
//! reported results always carry the configuration that produced them.

pub mod cluster;
pub mod config;
pub mod contamination;
pub mod decode;
pub mod error;
pub mod hermite;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod robust;
pub mod spectral;

pub use config::{Constants, PipelineConfig};
pub use error::{Error, Result};
pub use model::{GaussianComponent, GaussianMixture, Hypothesis};
