//! Fréchet means (barycenters) in 2-Wasserstein space, exact pairwise
//! optimal transport for closed-form families, optimal multicouplings,
//! and a warped point-process estimation pipeline.

pub mod barycenter;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod registration;
pub mod scenarios;
pub mod serialize;
pub mod measures;
pub mod transport;

pub use error::{Error, Result};
