//! Lossy image codec built on an `L`-level nested latent variable model.
//!
//! The image is mapped by a chain of analysis transforms to latents
//! `z_1 .. z_L`. The top latent is coded under a fixed standard logistic
//! prior; every lower latent `z_l` is coded under zero-mean Gaussians whose
//! scales are predicted from the already-decoded `z̃_{l+1}`. Symbols are
//! entropy coded with a 64-bit rANS coder into a self-describing container.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod codec;
pub mod entropy;
pub mod error;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod rans;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Param, Tensor};
