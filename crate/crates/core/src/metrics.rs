//! Evaluation protocol: normalized cross-correlation patch segmentation and
//! patch-grouped pSNR / SSIM reports.

use alloc::vec::Vec;

use crate::error::{invalid_arg, shape_err};
use crate::image::{ensure_same_shape_real, RealImage};
use crate::Result;

/// pSNR is capped here so reports stay finite on exact matches.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Normalized cross-correlation of two equal-shape patches, in `[-1, 1]`.
///
/// Degenerate patches (variance below 1e-12): 1.0 when both are degenerate
/// with means within 1e-9 of each other, else 0.0.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(shape_err!("ncc operands of length {} vs {}", a.len(), b.len()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let var_a = a.iter().map(|v| (v - mean_a) * (v - mean_a)).sum::<f64>() / n;
    let var_b = b.iter().map(|v| (v - mean_b) * (v - mean_b)).sum::<f64>() / n;
    const VAR_EPS: f64 = 1e-12;
    if var_a < VAR_EPS || var_b < VAR_EPS {
        let both = var_a < VAR_EPS && var_b < VAR_EPS;
        return Ok(if both && libm::fabs(mean_a - mean_b) <= 1e-9 { 1.0 } else { 0.0 });
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - mean_a) * (y - mean_b))
        .sum::<f64>()
        / n;
    Ok((cov / libm::sqrt(var_a * var_b)).clamp(-1.0, 1.0))
}

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &RealImage, reference: &RealImage, data_range: f64) -> Result<f64> {
    ensure_same_shape_real(x, reference, "psnr")?;
    if !(data_range > 0.0) {
        return Err(invalid_arg!("data_range must be > 0"));
    }
    let n = x.data().len() as f64;
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * libm::log10(data_range * data_range / mse)).min(PSNR_CAP_DB))
}

/// Mean local SSIM with a Gaussian window (valid positions only).
pub fn ssim(x: &RealImage, reference: &RealImage, data_range: f64) -> Result<f64> {
    ssim_with(x, reference, 11, 1.5, 0.01, 0.03, data_range)
}

/// SSIM with explicit window size, Gaussian sigma and stability constants.
pub fn ssim_with(
    x: &RealImage,
    reference: &RealImage,
    window: usize,
    sigma: f64,
    k1: f64,
    k2: f64,
    data_range: f64,
) -> Result<f64> {
    ensure_same_shape_real(x, reference, "ssim")?;
    let (h, w) = (x.height(), x.width());
    if h < window || w < window {
        return Err(invalid_arg!("image {h}x{w} smaller than the {window}-pixel window"));
    }
    if !(data_range > 0.0) || window == 0 {
        return Err(invalid_arg!("invalid ssim parameters"));
    }

    // normalized Gaussian window
    let half = (window - 1) as f64 / 2.0;
    let mut kernel = Vec::with_capacity(window * window);
    let mut ksum = 0.0;
    for ky in 0..window {
        for kx in 0..window {
            let dy = ky as f64 - half;
            let dx = kx as f64 - half;
            let v = libm::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            kernel.push(v);
            ksum += v;
        }
    }
    for v in kernel.iter_mut() {
        *v /= ksum;
    }

    let c1 = (k1 * data_range) * (k1 * data_range);
    let c2 = (k2 * data_range) * (k2 * data_range);
    let (oh, ow) = (h - window + 1, w - window + 1);
    let mut total = 0.0;
    for oy in 0..oh {
        for ox in 0..ow {
            let (mut mx, mut my) = (0.0, 0.0);
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            let mut ki = 0;
            for ky in 0..window {
                let row = (oy + ky) * w + ox;
                for kx in 0..window {
                    let kw = kernel[ki];
                    ki += 1;
                    let a = x.data()[row + kx];
                    let b = reference.data()[row + kx];
                    mx += kw * a;
                    my += kw * b;
                    sxx += kw * a * a;
                    syy += kw * b * b;
                    sxy += kw * a * b;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// Patch label from the similarity rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchLabel {
    Similar,
    Dissimilar,
}

/// One tile of the non-overlapping patch grid.
#[derive(Debug, Clone)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub label: PatchLabel,
    pub ncc: f64,
}

/// Non-overlapping tiling of a longitudinal pair into labeled patches.
#[derive(Debug, Clone)]
pub struct PatchGrouping {
    pub patch_size: usize,
    pub patches: Vec<Patch>,
}

impl PatchGrouping {
    pub fn num_similar(&self) -> usize {
        self.patches.iter().filter(|p| p.label == PatchLabel::Similar).count()
    }

    pub fn fraction_similar(&self) -> f64 {
        self.num_similar() as f64 / self.patches.len() as f64
    }
}

fn extract_patch(img: &RealImage, row0: usize, col0: usize, size: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(size * size);
    for row in row0..row0 + size {
        out.extend_from_slice(&img.data()[row * img.width() + col0..row * img.width() + col0 + size]);
    }
    out
}

/// Tile the pair into `patch_size` squares and label each by thresholding the
/// normalized cross-correlation (`similar` iff ncc > threshold).
pub fn segment_patches(
    prior: &RealImage,
    current: &RealImage,
    patch_size: usize,
    threshold: f64,
) -> Result<PatchGrouping> {
    ensure_same_shape_real(prior, current, "segment_patches")?;
    if patch_size == 0 || prior.height() % patch_size != 0 || prior.width() % patch_size != 0 {
        return Err(invalid_arg!(
            "image {}x{} not divisible into {patch_size}-pixel patches",
            prior.height(),
            prior.width()
        ));
    }
    let mut patches = Vec::new();
    for row in (0..prior.height()).step_by(patch_size) {
        for col in (0..prior.width()).step_by(patch_size) {
            let a = extract_patch(prior, row, col, patch_size);
            let b = extract_patch(current, row, col, patch_size);
            let r = ncc(&a, &b)?;
            let label = if r > threshold { PatchLabel::Similar } else { PatchLabel::Dissimilar };
            patches.push(Patch { row, col, label, ncc: r });
        }
    }
    Ok(PatchGrouping { patch_size, patches })
}

/// Patch-grouped metrics: per-group mean of per-patch pSNR and SSIM (each
/// patch scored as its own image). Empty groups report `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub psnr_similar: Option<f64>,
    pub psnr_dissimilar: Option<f64>,
    pub ssim_similar: Option<f64>,
    pub ssim_dissimilar: Option<f64>,
    pub num_similar: usize,
    pub num_dissimilar: usize,
    pub fraction_similar: f64,
    /// Whole-image pSNR and SSIM, for ungrouped comparisons.
    pub psnr_overall: f64,
    pub ssim_overall: f64,
}

/// Score a reconstruction against ground truth over the patch groups.
pub fn grouped_report(
    recon: &RealImage,
    ground_truth: &RealImage,
    grouping: &PatchGrouping,
) -> Result<MetricsReport> {
    ensure_same_shape_real(recon, ground_truth, "grouped_report")?;
    let size = grouping.patch_size;
    if grouping.patches.is_empty() {
        return Err(invalid_arg!("patch grouping is empty"));
    }
    let mut sums = [(0.0f64, 0.0f64, 0usize); 2]; // (psnr, ssim, count) per group
    for patch in &grouping.patches {
        if patch.row + size > recon.height() || patch.col + size > recon.width() {
            return Err(shape_err!("patch grid exceeds the reconstruction"));
        }
        let a = RealImage::new(size, size, extract_patch(recon, patch.row, patch.col, size))?;
        let b = RealImage::new(size, size, extract_patch(ground_truth, patch.row, patch.col, size))?;
        let p = psnr(&a, &b, 1.0)?;
        let s = ssim(&a, &b, 1.0)?;
        let g = if patch.label == PatchLabel::Similar { 0 } else { 1 };
        sums[g].0 += p;
        sums[g].1 += s;
        sums[g].2 += 1;
    }
    let group_mean = |g: usize| -> (Option<f64>, Option<f64>) {
        let (p, s, n) = sums[g];
        if n == 0 {
            (None, None)
        } else {
            (Some(p / n as f64), Some(s / n as f64))
        }
    };
    let (psnr_similar, ssim_similar) = group_mean(0);
    let (psnr_dissimilar, ssim_dissimilar) = group_mean(1);
    Ok(MetricsReport {
        psnr_similar,
        psnr_dissimilar,
        ssim_similar,
        ssim_dissimilar,
        num_similar: sums[0].2,
        num_dissimilar: sums[1].2,
        fraction_similar: sums[0].2 as f64 / grouping.patches.len() as f64,
        psnr_overall: psnr(recon, ground_truth, 1.0)?,
        ssim_overall: ssim(recon, ground_truth, 1.0)?,
    })
}
