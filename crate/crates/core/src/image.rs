//! Pixel-grid types shared by the forward model and the reconstruction code.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{invalid_arg, shape_err};
use crate::{Error, Result};

/// A real-valued 2-D image, row-major, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape_err!(
                "image data length {} != {}x{}",
                data.len(),
                height,
                width
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(invalid_arg!("image contains non-finite values"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &RealImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// L2 norm of the pixel vector.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Relative L2 distance `|a - b| / |b|` (plain L2 distance when `b = 0`).
    pub fn rel_l2_distance(&self, reference: &RealImage) -> f64 {
        let num: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den = reference.norm();
        if den == 0.0 {
            libm::sqrt(num)
        } else {
            libm::sqrt(num) / den
        }
    }

    /// Copy with every pixel clamped to `[0, 1]`. Metric computation uses this;
    /// reconstruction paths never do.
    pub fn clamped_unit(&self) -> RealImage {
        let data = self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        RealImage { height: self.height, width: self.width, data }
    }
}

/// A complex-valued 2-D grid: coil images or k-space, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape_err!(
                "complex data length {} != {}x{}",
                data.len(),
                height,
                width
            ));
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(invalid_arg!("complex image contains non-finite values"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![Complex64::new(0.0, 0.0); height * width] }
    }

    /// Promote a real image: imaginary parts zero.
    pub fn from_real(image: &RealImage) -> Self {
        let data = image.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self { height: image.height(), width: image.width(), data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape(&self, other: &ComplexImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Real parts as a `RealImage`.
    pub fn real_part(&self) -> RealImage {
        RealImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.re).collect(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

pub(crate) fn ensure_same_shape_real(a: &RealImage, b: &RealImage, what: &str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(alloc::format!(
            "{what}: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(RealImage::new(2, 3, vec![0.0; 5]), Err(Error::ShapeMismatch(_))));
        assert!(ComplexImage::new(2, 2, vec![Complex64::new(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(RealImage::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(RealImage::new(1, 2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn real_roundtrip_through_complex() {
        let img = RealImage::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = ComplexImage::from_real(&img);
        assert_eq!(c.real_part(), img);
    }
}
