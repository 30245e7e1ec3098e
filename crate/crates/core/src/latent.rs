//! Latent tensors: the `channels x height x width` arrays the diffusion prior
//! operates on.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid_arg, shape_err};
use crate::image::RealImage;
use crate::rng::{self, SeedRng};
use crate::Result;

/// Shape of a latent tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A real-valued latent tensor, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    shape: LatentShape,
    data: Vec<f64>,
}

impl Latent {
    pub fn new(shape: LatentShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(shape_err!("latent data length {} != {:?}", data.len(), shape));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(invalid_arg!("latent contains non-finite values"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    /// i.i.d. N(0, 1) entries drawn from `rng` in index order.
    pub fn standard_normal(shape: LatentShape, rng: &mut SeedRng) -> Self {
        let mut data = vec![0.0; shape.len()];
        rng::fill_standard_normal(rng, &mut data);
        Self { shape, data }
    }

    /// View a real image as a single-channel latent.
    pub fn from_image(image: &RealImage) -> Self {
        Self {
            shape: LatentShape { channels: 1, height: image.height(), width: image.width() },
            data: image.data().to_vec(),
        }
    }

    /// Interpret a single-channel latent as a real image.
    pub fn to_image(&self) -> Result<RealImage> {
        if self.shape.channels != 1 {
            return Err(shape_err!("{}-channel latent is not an image", self.shape.channels));
        }
        RealImage::new(self.shape.height, self.shape.width, self.data.clone())
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self + c * other`, shapes must agree.
    pub fn add_scaled(&self, c: f64, other: &Latent) -> Result<Latent> {
        if self.shape != other.shape {
            return Err(shape_err!("latent shapes disagree"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + c * b).collect();
        Ok(Latent { shape: self.shape, data })
    }

    pub fn scale(&self, c: f64) -> Latent {
        Latent { shape: self.shape, data: self.data.iter().map(|v| c * v).collect() }
    }
}
