//! Desk-scale conditional GAN laboratory.
//!
//! The crate trains spectral-normalized conditional MLP generators and
//! discriminators on labeled 2-D synthetic datasets, with a family of
//! conditioning objectives (contrastive, proxy-based, classifier-based,
//! projection-based) layered on top of a hinge adversarial loss. Everything
//! runs on a small reverse-mode differentiation tape so every gradient can be
//! checked against finite differences, and evaluation uses Frechet distances
//! between Gaussian fits of raw sample coordinates plus discriminator
//! overfitting diagnostics.

pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod linalg;
pub mod losses;
pub mod matrix;
pub mod models;
pub mod oracle;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
