//! Multi-coil Cartesian MRI forward model.
//!
//! The forward operator is `A(x)_c = M .* F(S_c .* x)` per coil `c`, with `F`
//! the centered unitary 2-D DFT, `S_c` the complex coil sensitivity and `M` a
//! 1-D Cartesian row mask (phase-encode direction along image height). The
//! adjoint is `A^H(y) = sum_c conj(S_c) .* F^-1(M .* y_c)`.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{invalid_arg, shape_err};
use crate::fft::Dft2;
use crate::image::{ComplexImage, RealImage};
use crate::rng;
use crate::Result;

/// 1-D Cartesian undersampling pattern: a keep/drop flag per k-space row,
/// constant along the readout (width) direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    line_keep: Vec<bool>,
    acceleration: f64,
    center_fraction: f64,
}

impl SamplingMask {
    /// Uniform undersampling with a fully sampled center band.
    ///
    /// The center band spans `ceil(center_fraction * height)` contiguous rows
    /// centered on row `height / 2`. Outside the band, rows on an integer
    /// stride grid anchored at `offset` are kept; the stride is chosen so the
    /// total number of kept rows is as close as possible to `height / r`,
    /// ties broken toward more samples.
    pub fn uniform(
        height: usize,
        width: usize,
        r: f64,
        center_fraction: f64,
        offset: usize,
    ) -> Result<Self> {
        if !(r >= 1.0) {
            return Err(invalid_arg!("acceleration R = {r} must be >= 1"));
        }
        if !(0.0..=1.0).contains(&center_fraction) {
            return Err(invalid_arg!("center_fraction = {center_fraction} outside [0, 1]"));
        }
        if height < 2 {
            return Err(invalid_arg!("mask height {height} must be >= 2"));
        }

        let band = libm::ceil(center_fraction * height as f64) as usize;
        let band = band.min(height);
        let start = (height / 2).saturating_sub(band / 2).min(height - band);
        let in_band = |row: usize| row >= start && row < start + band;

        let target = height as f64 / r;
        let mut best: Option<(f64, usize, usize)> = None; // (|kept-target|, -kept via cmp, stride)
        for stride in 1..=height {
            let kept = band
                + (0..height)
                    .filter(|&row| !in_band(row) && on_grid(row, offset, stride))
                    .count();
            let dist = libm::fabs(kept as f64 - target);
            let better = match best {
                None => true,
                Some((bd, bk, _)) => dist < bd || (dist == bd && kept > bk),
            };
            if better {
                best = Some((dist, kept, stride));
            }
        }
        let stride = best.expect("stride search is non-empty").2;

        let line_keep: Vec<bool> =
            (0..height).map(|row| in_band(row) || on_grid(row, offset, stride)).collect();
        Ok(Self { height, width, line_keep, acceleration: r, center_fraction })
    }

    /// Rebuild a mask from its serialized form (kept row indices).
    pub fn from_kept_rows(
        height: usize,
        width: usize,
        kept: &[usize],
        r: f64,
        center_fraction: f64,
    ) -> Result<Self> {
        let mut line_keep = vec![false; height];
        for &row in kept {
            if row >= height {
                return Err(invalid_arg!("kept row {row} out of range for height {height}"));
            }
            line_keep[row] = true;
        }
        Ok(Self { height, width, line_keep, acceleration: r, center_fraction })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction
    }

    #[inline]
    pub fn keeps_row(&self, row: usize) -> bool {
        self.line_keep[row]
    }

    pub fn kept_rows(&self) -> Vec<usize> {
        (0..self.height).filter(|&r| self.line_keep[r]).collect()
    }

    pub fn num_kept(&self) -> usize {
        self.line_keep.iter().filter(|&&k| k).count()
    }

    /// `height / kept`: the acceleration actually realized.
    pub fn effective_acceleration(&self) -> f64 {
        self.height as f64 / self.num_kept() as f64
    }

    /// Zero every unsampled row of a k-space grid in place.
    fn apply(&self, k: &mut ComplexImage) {
        let w = self.width;
        let data = k.data_mut();
        for (row, keep) in self.line_keep.iter().enumerate() {
            if !keep {
                data[row * w..(row + 1) * w].fill(Complex64::new(0.0, 0.0));
            }
        }
    }
}

#[inline]
fn on_grid(row: usize, offset: usize, stride: usize) -> bool {
    (row as i64 - offset as i64).rem_euclid(stride as i64) == 0
}

/// Per-coil complex sensitivity profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSensitivityMaps {
    coils: Vec<ComplexImage>,
    rss_normalized: bool,
}

impl CoilSensitivityMaps {
    /// Wrap a coil stack. With `normalize` set, every pixel is divided by the
    /// root-sum-of-squares over coils so that RSS = 1 wherever any coil is
    /// nonzero.
    pub fn new(mut coils: Vec<ComplexImage>, normalize: bool) -> Result<Self> {
        let first = coils.first().ok_or_else(|| invalid_arg!("coil stack is empty"))?;
        let (h, w) = (first.height(), first.width());
        if !coils.iter().all(|c| c.height() == h && c.width() == w) {
            return Err(shape_err!("coil maps disagree in shape"));
        }
        if normalize {
            for i in 0..h * w {
                let rss = libm::sqrt(coils.iter().map(|c| c.data()[i].norm_sqr()).sum::<f64>());
                if rss > 0.0 {
                    for c in coils.iter_mut() {
                        c.data_mut()[i] /= rss;
                    }
                }
            }
        }
        Ok(Self { coils, rss_normalized: normalize })
    }

    pub fn num_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn height(&self) -> usize {
        self.coils[0].height()
    }

    pub fn width(&self) -> usize {
        self.coils[0].width()
    }

    pub fn coil(&self, c: usize) -> &ComplexImage {
        &self.coils[c]
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn rss_normalized(&self) -> bool {
        self.rss_normalized
    }
}

/// Masked multi-coil k-space measurements together with their mask.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceData {
    coils: Vec<ComplexImage>,
    mask: SamplingMask,
}

impl KSpaceData {
    /// Validating constructor: shapes must match the mask and unsampled rows
    /// must be exactly zero.
    pub fn new(coils: Vec<ComplexImage>, mask: SamplingMask) -> Result<Self> {
        if coils.is_empty() {
            return Err(invalid_arg!("k-space has no coils"));
        }
        for k in &coils {
            if k.height() != mask.height() || k.width() != mask.width() {
                return Err(shape_err!(
                    "k-space {}x{} vs mask {}x{}",
                    k.height(),
                    k.width(),
                    mask.height(),
                    mask.width()
                ));
            }
            for row in 0..mask.height() {
                if !mask.keeps_row(row)
                    && k.data()[row * mask.width()..(row + 1) * mask.width()]
                        .iter()
                        .any(|v| v.re != 0.0 || v.im != 0.0)
                {
                    return Err(invalid_arg!("unsampled row {row} holds nonzero k-space"));
                }
            }
        }
        Ok(Self { coils, mask })
    }

    pub fn num_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn coil(&self, c: usize) -> &ComplexImage {
        &self.coils[c]
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn norm_sq(&self) -> f64 {
        self.coils.iter().map(|c| c.norm_sq()).sum()
    }

    /// Entrywise difference `self - other`; masks must agree.
    pub fn sub(&self, other: &KSpaceData) -> Result<KSpaceData> {
        if self.mask != other.mask || self.coils.len() != other.coils.len() {
            return Err(shape_err!("k-space operands disagree in mask or coil count"));
        }
        let coils = self
            .coils
            .iter()
            .zip(&other.coils)
            .map(|(a, b)| {
                let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
                ComplexImage::new(a.height(), a.width(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KSpaceData { coils, mask: self.mask.clone() })
    }
}

fn check_geometry(
    maps: &CoilSensitivityMaps,
    mask: &SamplingMask,
    h: usize,
    w: usize,
) -> Result<()> {
    if maps.height() != h || maps.width() != w {
        return Err(shape_err!("maps {}x{} vs image {h}x{w}", maps.height(), maps.width()));
    }
    if mask.height() != h || mask.width() != w {
        return Err(shape_err!("mask {}x{} vs image {h}x{w}", mask.height(), mask.width()));
    }
    Ok(())
}

/// `A(x)`: coil-weighted, Fourier-transformed, row-masked measurements.
pub fn apply_forward(
    x: &RealImage,
    maps: &CoilSensitivityMaps,
    mask: &SamplingMask,
) -> Result<KSpaceData> {
    check_geometry(maps, mask, x.height(), x.width())?;
    let (h, w) = (x.height(), x.width());
    let plan = Dft2::new(h, w);
    let mut coils = Vec::with_capacity(maps.num_coils());
    for s in maps.coils() {
        let weighted: Vec<Complex64> =
            s.data().iter().zip(x.data()).map(|(sc, &xv)| sc * xv).collect();
        let mut k = plan.forward(&ComplexImage::new(h, w, weighted)?);
        mask.apply(&mut k);
        coils.push(k);
    }
    Ok(KSpaceData { coils, mask: mask.clone() })
}

/// `A^H(y)`: inverse transform of the masked data, coil-combined with
/// conjugate sensitivities.
pub fn apply_adjoint(y: &KSpaceData, maps: &CoilSensitivityMaps) -> Result<ComplexImage> {
    let (h, w) = (y.mask.height(), y.mask.width());
    check_geometry(maps, &y.mask, h, w)?;
    if maps.num_coils() != y.num_coils() {
        return Err(shape_err!("{} maps vs {} k-space coils", maps.num_coils(), y.num_coils()));
    }
    let plan = Dft2::new(h, w);
    let mut acc = vec![Complex64::new(0.0, 0.0); h * w];
    for (s, k) in maps.coils().iter().zip(&y.coils) {
        let mut masked = k.clone();
        y.mask.apply(&mut masked);
        let img = plan.inverse(&masked);
        for ((a, sc), v) in acc.iter_mut().zip(s.data()).zip(img.data()) {
            *a += sc.conj() * v;
        }
    }
    ComplexImage::new(h, w, acc)
}

/// Add i.i.d. circular complex Gaussian noise (std `sigma` per component) to
/// the sampled rows only. Deterministic given the seed.
pub fn add_measurement_noise(y: &KSpaceData, sigma: f64, rng_seed: u64) -> Result<KSpaceData> {
    if !(sigma >= 0.0) {
        return Err(invalid_arg!("noise sigma = {sigma} must be >= 0"));
    }
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = rng::seeded(rng_seed);
    let w = y.mask.width();
    let mut coils = y.coils.clone();
    for k in coils.iter_mut() {
        let data = k.data_mut();
        for row in 0..y.mask.height() {
            if !y.mask.keeps_row(row) {
                continue;
            }
            for v in data[row * w..(row + 1) * w].iter_mut() {
                let re = rng::standard_normal(&mut rng);
                let im = rng::standard_normal(&mut rng);
                *v += Complex64::new(sigma * re, sigma * im);
            }
        }
    }
    Ok(KSpaceData { coils, mask: y.mask.clone() })
}

/// The data-consistency value `|| y - A(x) ||_2^2`.
pub fn dc_residual(
    x: &RealImage,
    y: &KSpaceData,
    maps: &CoilSensitivityMaps,
    mask: &SamplingMask,
) -> Result<f64> {
    let ax = apply_forward(x, maps, mask)?;
    if ax.coils.len() != y.coils.len() {
        return Err(shape_err!("{} coils vs {} measured", ax.coils.len(), y.coils.len()));
    }
    let mut acc = 0.0;
    for (a, b) in ax.coils.iter().zip(&y.coils) {
        if !a.same_shape(b) {
            return Err(shape_err!("k-space shapes disagree"));
        }
        acc += a.data().iter().zip(b.data()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::fft2_centered;

    fn random_image(h: usize, w: usize, seed: u64) -> RealImage {
        let mut r = rng::seeded(seed);
        RealImage::new(h, w, (0..h * w).map(|_| rng::standard_normal(&mut r)).collect()).unwrap()
    }

    fn random_maps(coils: usize, h: usize, w: usize, seed: u64) -> CoilSensitivityMaps {
        let mut r = rng::seeded(seed);
        let stack = (0..coils)
            .map(|_| {
                let data = (0..h * w)
                    .map(|_| {
                        Complex64::new(rng::standard_normal(&mut r), rng::standard_normal(&mut r))
                    })
                    .collect();
                ComplexImage::new(h, w, data).unwrap()
            })
            .collect();
        CoilSensitivityMaps::new(stack, false).unwrap()
    }

    fn unit_single_coil(h: usize, w: usize) -> CoilSensitivityMaps {
        let ones = vec![Complex64::new(1.0, 0.0); h * w];
        CoilSensitivityMaps::new(vec![ComplexImage::new(h, w, ones).unwrap()], false).unwrap()
    }

    /// Independent re-derivation of the mask rule: enumerate every stride and
    /// pick by the stated criterion.
    fn oracle_kept_count(h: usize, r: f64, cf: f64, offset: usize) -> usize {
        let band = libm::ceil(cf * h as f64) as usize;
        let band = band.min(h);
        let start = (h / 2).saturating_sub(band / 2).min(h - band);
        let target = h as f64 / r;
        let mut best: Option<(f64, usize)> = None;
        for stride in 1..=h {
            let kept = (0..h)
                .filter(|&row| {
                    (row >= start && row < start + band)
                        || (row as i64 - offset as i64).rem_euclid(stride as i64) == 0
                })
                .count();
            let dist = libm::fabs(kept as f64 - target);
            let better = match best {
                None => true,
                Some((bd, bk)) => dist < bd || (dist == bd && kept > bk),
            };
            if better {
                best = Some((dist, kept));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn mask_no_acceleration_keeps_all() {
        let m = SamplingMask::uniform(256, 32, 1.0, 0.05, 0).unwrap();
        assert_eq!(m.num_kept(), 256);
    }

    #[test]
    fn mask_full_center_band_keeps_all() {
        let m = SamplingMask::uniform(256, 32, 4.0, 1.0, 0).unwrap();
        assert_eq!(m.num_kept(), 256);
    }

    #[test]
    fn mask_r4_matches_enumeration_oracle() {
        let m = SamplingMask::uniform(256, 32, 4.0, 0.05, 0).unwrap();
        let expected = oracle_kept_count(256, 4.0, 0.05, 0);
        assert_eq!(m.num_kept(), expected);
        assert!(libm::fabs(256.0 / m.num_kept() as f64 - 4.0) <= 0.5);
    }

    #[test]
    fn mask_center_band_always_sampled() {
        for (h, r) in [(256usize, 3.0), (256, 6.0), (256, 9.0), (256, 12.0), (64, 6.0)] {
            let m = SamplingMask::uniform(h, 16, r, 0.05, 0).unwrap();
            let band = libm::ceil(0.05 * h as f64) as usize;
            let start = h / 2 - band / 2;
            for row in start..start + band {
                assert!(m.keeps_row(row), "h={h} R={r} row {row}");
            }
        }
    }

    #[test]
    fn mask_keep_ratio_within_half_of_r() {
        for r in [1.0, 3.0, 6.0, 9.0, 12.0] {
            let m = SamplingMask::uniform(256, 16, r, 0.05, 0).unwrap();
            assert!(
                libm::fabs(m.effective_acceleration() - r) <= 0.5,
                "R={r}: effective {}",
                m.effective_acceleration()
            );
        }
    }

    #[test]
    fn mask_deterministic_and_validated() {
        let a = SamplingMask::uniform(128, 8, 6.0, 0.08, 3).unwrap();
        let b = SamplingMask::uniform(128, 8, 6.0, 0.08, 3).unwrap();
        assert_eq!(a, b);
        assert!(SamplingMask::uniform(128, 8, 0.5, 0.05, 0).is_err());
        assert!(SamplingMask::uniform(128, 8, 4.0, 1.5, 0).is_err());
    }

    #[test]
    fn forward_of_zero_is_zero() {
        let maps = random_maps(3, 16, 12, 1);
        let mask = SamplingMask::uniform(16, 12, 2.0, 0.1, 0).unwrap();
        let y = apply_forward(&RealImage::zeros(16, 12), &maps, &mask).unwrap();
        assert_eq!(y.norm_sq(), 0.0);
    }

    #[test]
    fn unit_coil_full_mask_roundtrip() {
        let (h, w) = (16, 16);
        let x = random_image(h, w, 2);
        let maps = unit_single_coil(h, w);
        let mask = SamplingMask::uniform(h, w, 1.0, 0.0, 0).unwrap();
        let y = apply_forward(&x, &maps, &mask).unwrap();
        let back = apply_adjoint(&y, &maps).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a.re - b).abs() < 1e-10 && a.im.abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_of_forward_kspace_recovers_image() {
        let (h, w) = (12, 10);
        let x = random_image(h, w, 5);
        let maps = unit_single_coil(h, w);
        let mask = SamplingMask::uniform(h, w, 1.0, 0.0, 0).unwrap();
        let k = fft2_centered(&ComplexImage::from_real(&x));
        let y = KSpaceData::new(vec![k], mask).unwrap();
        let back = apply_adjoint(&y, &maps).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn forward_adjoint_dot_product() {
        for (i, &(coils, h, w, r)) in
            [(1usize, 16usize, 16usize, 1.0), (3, 16, 12, 3.0), (8, 24, 24, 6.0), (2, 15, 9, 2.0)]
                .iter()
                .enumerate()
        {
            let seed = 100 + i as u64;
            let x = random_image(h, w, seed);
            let maps = random_maps(coils, h, w, seed + 50);
            let mask = SamplingMask::uniform(h, w, r, 0.1, i).unwrap();
            let mut rg = rng::seeded(seed + 99);
            let y_coils: Vec<ComplexImage> = (0..coils)
                .map(|_| {
                    let mut img = ComplexImage::new(
                        h,
                        w,
                        (0..h * w)
                            .map(|_| {
                                Complex64::new(
                                    rng::standard_normal(&mut rg),
                                    rng::standard_normal(&mut rg),
                                )
                            })
                            .collect(),
                    )
                    .unwrap();
                    mask.apply(&mut img);
                    img
                })
                .collect();
            let y = KSpaceData::new(y_coils, mask.clone()).unwrap();

            let ax = apply_forward(&x, &maps, &mask).unwrap();
            let ahy = apply_adjoint(&y, &maps).unwrap();
            let lhs: f64 = ax
                .coils()
                .iter()
                .zip(y.coils())
                .map(|(a, b)| {
                    a.data().iter().zip(b.data()).map(|(p, q)| (p * q.conj()).re).sum::<f64>()
                })
                .sum();
            let rhs: f64 = x.data().iter().zip(ahy.data()).map(|(p, q)| p * q.re).sum();
            let scale = x.norm() * libm::sqrt(y.norm_sq());
            assert!((lhs - rhs).abs() / scale < 1e-6, "case {i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn forward_is_linear() {
        let (h, w) = (16, 12);
        let maps = random_maps(2, h, w, 7);
        let mask = SamplingMask::uniform(h, w, 3.0, 0.1, 0).unwrap();
        let x1 = random_image(h, w, 8);
        let x2 = random_image(h, w, 9);
        let (a, b) = (0.7, -1.3);
        let combo = RealImage::new(
            h,
            w,
            x1.data().iter().zip(x2.data()).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        let lhs = apply_forward(&combo, &maps, &mask).unwrap();
        let y1 = apply_forward(&x1, &maps, &mask).unwrap();
        let y2 = apply_forward(&x2, &maps, &mask).unwrap();
        for c in 0..2 {
            for (l, (p, q)) in
                lhs.coil(c).data().iter().zip(y1.coil(c).data().iter().zip(y2.coil(c).data()))
            {
                assert!((l - (a * p + b * q)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn noise_zero_sigma_is_identity() {
        let (h, w) = (16, 12);
        let x = random_image(h, w, 11);
        let maps = random_maps(2, h, w, 12);
        let mask = SamplingMask::uniform(h, w, 2.0, 0.1, 0).unwrap();
        let y = apply_forward(&x, &maps, &mask).unwrap();
        assert_eq!(add_measurement_noise(&y, 0.0, 123).unwrap(), y);
        assert!(add_measurement_noise(&y, -0.1, 123).is_err());
    }

    #[test]
    fn noise_deterministic_under_seed() {
        let (h, w) = (16, 12);
        let y = apply_forward(
            &random_image(h, w, 13),
            &random_maps(2, h, w, 14),
            &SamplingMask::uniform(h, w, 2.0, 0.1, 0).unwrap(),
        )
        .unwrap();
        let a = add_measurement_noise(&y, 0.3, 77).unwrap();
        let b = add_measurement_noise(&y, 0.3, 77).unwrap();
        assert_eq!(a, b);
        let c = add_measurement_noise(&y, 0.3, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_sample_std_matches_sigma() {
        // 1 coil, 128x128 fully sampled: 16384 sampled entries
        let (h, w) = (128, 128);
        let maps = unit_single_coil(h, w);
        let mask = SamplingMask::uniform(h, w, 1.0, 0.0, 0).unwrap();
        let y = apply_forward(&RealImage::zeros(h, w), &maps, &mask).unwrap();
        let noisy = add_measurement_noise(&y, 0.1, 2024).unwrap();
        let n = (h * w) as f64;
        let mean: f64 = noisy.coil(0).data().iter().map(|v| v.re).sum::<f64>() / n;
        let var: f64 =
            noisy.coil(0).data().iter().map(|v| (v.re - mean) * (v.re - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        assert!((0.097..=0.103).contains(&std), "std = {std}");
    }

    #[test]
    fn dc_residual_examples() {
        let (h, w) = (16, 12);
        let x = random_image(h, w, 21);
        let maps = random_maps(3, h, w, 22);
        let mask = SamplingMask::uniform(h, w, 2.0, 0.1, 0).unwrap();
        let y = apply_forward(&x, &maps, &mask).unwrap();

        // consistent data -> zero
        assert!(dc_residual(&x, &y, &maps, &mask).unwrap() < 1e-12);
        // x = 0 -> ||y||^2
        let r0 = dc_residual(&RealImage::zeros(h, w), &y, &maps, &mask).unwrap();
        assert!((r0 - y.norm_sq()).abs() < 1e-9);
        // random x: matches explicit recomputation
        let x2 = random_image(h, w, 23);
        let r = dc_residual(&x2, &y, &maps, &mask).unwrap();
        let ax2 = apply_forward(&x2, &maps, &mask).unwrap();
        let explicit: f64 = ax2
            .coils()
            .iter()
            .zip(y.coils())
            .map(|(a, b)| {
                a.data().iter().zip(b.data()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>()
            })
            .sum();
        assert!((r - explicit).abs() <= 1e-9 * explicit.max(1.0));
    }

    #[test]
    fn kspace_constructor_rejects_unmasked_rows() {
        let (h, w) = (8, 8);
        let mask = SamplingMask::uniform(h, w, 4.0, 0.0, 1).unwrap();
        let bad = ComplexImage::new(h, w, vec![Complex64::new(1.0, 0.0); h * w]).unwrap();
        assert!(KSpaceData::new(vec![bad], mask).is_err());
    }

    #[test]
    fn rss_normalization_unit_everywhere() {
        let maps = {
            let raw = random_maps(4, 10, 10, 31);
            CoilSensitivityMaps::new(raw.coils().to_vec(), true).unwrap()
        };
        for i in 0..100 {
            let rss: f64 = maps.coils().iter().map(|c| c.data()[i].norm_sqr()).sum();
            assert!((libm::sqrt(rss) - 1.0).abs() < 1e-12);
        }
    }
}
