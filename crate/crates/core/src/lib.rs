//! Complex-valued deep learning with Wirtinger-calculus autodiff, and an
//! end-to-end compressive-sensing MRI reconstruction pipeline built on it.

pub mod activations;
pub mod autodiff;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod models;
pub mod mri;
pub mod nn;
pub mod tensor;
pub mod training;
pub mod wavelet;

pub use error::{Error, Result};
