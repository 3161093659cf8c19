//! Diffeomorphic image registration by geodesic shooting of band-limited
//! velocity fields, optimized with an inexact Gauss-Newton-Krylov method.

pub mod error;
pub mod fft;
pub mod grid;
pub mod image;
pub mod lie;
pub mod optimizer;
pub mod problem;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{ScalarImage, SpatialVectorField};
pub use spectral::{BandLimitedField, CoeffGrid, FrequencyBand, SpectralJacobian, SpectralOperators};
