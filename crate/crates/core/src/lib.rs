//! Prior-informed latent diffusion reconstruction for accelerated longitudinal MRI.
//!
//! This crate holds the algorithmic core: the multi-coil Cartesian MRI forward
//! model, variance-preserving diffusion machinery with a trainable convolutional
//! score model, a small convolutional autoencoder, the PIPS / LDPS posterior
//! samplers with data-consistency optimization, conjugate-gradient and
//! zero-filled baselines, synthetic longitudinal phantom generation, and the
//! patch-grouped pSNR/SSIM evaluation protocol.
//!
//! The crate is `no_std` (with `alloc`); all I/O, file formats and the command
//! line live in the companion `pips-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
#[macro_use]
extern crate std;

pub mod autoencoder;
pub mod diffusion;
mod error;
pub mod fft;
pub mod forward;
pub mod image;
pub mod latent;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod phantom;
pub mod recon;
pub mod rng;
pub mod schedule;
pub mod score;

pub use error::{Error, Result};
