//! Synthetic longitudinal data: ellipse phantoms, prior/current pairs with
//! localized lesions, smooth coil sensitivity profiles, and rigid
//! misregistration transforms.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use rand::Rng;

use crate::error::invalid_arg;
use crate::forward::CoilSensitivityMaps;
use crate::image::{ComplexImage, RealImage};
use crate::rng::{self, SeedRng};
use crate::Result;

/// One localized change: an ellipse of intensity delta applied to the prior
/// image. `axes` scales the radius per axis, `rotation_deg` tilts it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lesion {
    pub center: (f64, f64), // (row, col)
    pub radius: f64,
    pub delta: f64,
    pub axes: (f64, f64),
    pub rotation_deg: f64,
}

impl Lesion {
    pub fn disk(center: (f64, f64), radius: f64, delta: f64) -> Self {
        Self { center, radius, delta, axes: (1.0, 1.0), rotation_deg: 0.0 }
    }

    /// Normalized squared elliptical radius of a pixel; < 1 means inside.
    fn rho_sq(&self, row: f64, col: f64) -> f64 {
        let (dy, dx) = (row - self.center.0, col - self.center.1);
        let th = self.rotation_deg * PI / 180.0;
        let (c, s) = (libm::cos(th), libm::sin(th));
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let (ry, rx) = (self.radius * self.axes.0, self.radius * self.axes.1);
        (u / rx) * (u / rx) + (v / ry) * (v / ry)
    }
}

/// The set of lesions distinguishing the current image from the prior.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChangeSpec {
    pub lesions: Vec<Lesion>,
}

impl ChangeSpec {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        for l in &self.lesions {
            if !(l.radius > 0.0) || !(l.axes.0 > 0.0) || !(l.axes.1 > 0.0) {
                return Err(invalid_arg!("lesion radius and axes must be positive"));
            }
            if l.center.0 < 0.0
                || l.center.1 < 0.0
                || l.center.0 >= height as f64
                || l.center.1 >= width as f64
            {
                return Err(invalid_arg!("lesion center outside image bounds"));
            }
        }
        Ok(())
    }
}

/// A prior/current pair and the pixel set where they differ by construction.
#[derive(Debug, Clone)]
pub struct LongitudinalPair {
    pub prior: RealImage,
    pub current: RealImage,
    pub change_mask: Vec<bool>,
}

struct ShadedEllipse {
    center: (f64, f64),
    axes: (f64, f64),
    rotation: f64,
    intensity: f64,
    softness: f64,
}

impl ShadedEllipse {
    fn value(&self, row: f64, col: f64) -> f64 {
        let (dy, dx) = (row - self.center.0, col - self.center.1);
        let (c, s) = (libm::cos(self.rotation), libm::sin(self.rotation));
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let rho = libm::sqrt((u / self.axes.1) * (u / self.axes.1) + (v / self.axes.0) * (v / self.axes.0));
        // smooth shoulder: ~intensity inside, 0 outside, C1 across the edge
        self.intensity / (1.0 + libm::exp((rho - 1.0) / self.softness))
    }
}

/// Skull-like ring plus `complexity` interior ellipses, smoothly shaded,
/// normalized to `[0, 1]`. Deterministic in the seed.
pub fn make_phantom(seed: u64, height: usize, width: usize, complexity: usize) -> Result<RealImage> {
    if height < 32 || width < 32 {
        return Err(invalid_arg!("phantom dims {height}x{width} below the 32-pixel minimum"));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, 0x9a57));
    let (hf, wf) = (height as f64, width as f64);
    let center = (hf / 2.0, wf / 2.0);

    let mut ellipses: Vec<ShadedEllipse> = Vec::new();
    // outer skull ring: bright shell minus darker interior of the shell.
    // Tight shoulders keep the image border numerically dark, which the
    // zero-padded misregistration transform relies on.
    let skull = (0.44 * hf, 0.40 * wf);
    ellipses.push(ShadedEllipse {
        center,
        axes: skull,
        rotation: 0.0,
        intensity: 1.0,
        softness: 0.012,
    });
    ellipses.push(ShadedEllipse {
        center,
        axes: (skull.0 * 0.92, skull.1 * 0.92),
        rotation: 0.0,
        intensity: -0.55,
        softness: 0.018,
    });
    for _ in 0..complexity {
        let ang = r.gen_range(0.0..2.0 * PI);
        let rad = r.gen_range(0.0..0.45);
        let cy = center.0 + rad * skull.0 * libm::sin(ang);
        let cx = center.1 + rad * skull.1 * libm::cos(ang);
        ellipses.push(ShadedEllipse {
            center: (cy, cx),
            axes: (r.gen_range(0.05..0.16) * hf, r.gen_range(0.05..0.16) * wf),
            rotation: r.gen_range(0.0..PI),
            intensity: r.gen_range(-0.35..0.45),
            softness: r.gen_range(0.02..0.045),
        });
    }

    let mut data = vec![0.0f64; height * width];
    let mut hi = 0.0f64;
    for row in 0..height {
        for col in 0..width {
            // hard zero support just past the skull shoulder: the air around
            // the head is exactly dark, so zero-padded transforms are lossless
            let (dy, dx) = (row as f64 - center.0, col as f64 - center.1);
            let support = (dy / skull.0) * (dy / skull.0) + (dx / skull.1) * (dx / skull.1);
            if support > 1.05 * 1.05 {
                continue;
            }
            let mut v = 0.0;
            for e in &ellipses {
                v += e.value(row as f64, col as f64);
            }
            let v = v.max(0.0);
            hi = hi.max(v);
            data[row * width + col] = v;
        }
    }
    // scale by the peak: keeps the background at zero, unlike a min-max
    // stretch, which would lift it whenever the interior dips negative
    if hi > 0.0 {
        for v in data.iter_mut() {
            *v /= hi;
        }
    }
    RealImage::new(height, width, data)
}

/// Prior = phantom(seed); current = prior with the lesions applied (additive
/// with a smooth interior profile, clamped to `[0, 1]`). The change mask
/// marks exactly the pixels strictly inside a lesion.
pub fn make_longitudinal_pair(
    seed: u64,
    height: usize,
    width: usize,
    complexity: usize,
    change: &ChangeSpec,
) -> Result<LongitudinalPair> {
    change.validate(height, width)?;
    let prior = make_phantom(seed, height, width, complexity)?;
    let mut current = prior.clone();
    let mut change_mask = vec![false; height * width];
    for lesion in &change.lesions {
        for row in 0..height {
            for col in 0..width {
                let rho_sq = lesion.rho_sq(row as f64, col as f64);
                if rho_sq < 1.0 {
                    let i = row * width + col;
                    change_mask[i] = true;
                    let bump = lesion.delta * (1.0 - rho_sq);
                    let v = (current.data()[i] + bump).clamp(0.0, 1.0);
                    current.data_mut()[i] = v;
                }
            }
        }
    }
    Ok(LongitudinalPair { prior, current, change_mask })
}

/// Smooth complex coil profiles: Gaussian magnitude lobes centered on points
/// around the field-of-view perimeter, a gentle linear phase per coil,
/// RSS-normalized to 1 at every pixel.
pub fn make_coil_maps(
    num_coils: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<CoilSensitivityMaps> {
    if num_coils < 1 {
        return Err(invalid_arg!("need at least one coil"));
    }
    if height < 2 || width < 2 {
        return Err(invalid_arg!("coil map dims {height}x{width} too small"));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, 0xc011));
    let (hf, wf) = (height as f64, width as f64);
    let sigma = 0.55 * hf.max(wf);
    let mut coils = Vec::with_capacity(num_coils);
    for c in 0..num_coils {
        let ang = 2.0 * PI * c as f64 / num_coils as f64 + r.gen_range(-0.1..0.1);
        let cy = hf / 2.0 + 0.62 * hf * libm::sin(ang);
        let cx = wf / 2.0 + 0.62 * wf * libm::cos(ang);
        let ky = r.gen_range(-0.5..0.5) * PI / hf;
        let kx = r.gen_range(-0.5..0.5) * PI / wf;
        let phase0 = r.gen_range(0.0..2.0 * PI);
        let data = (0..height * width)
            .map(|i| {
                let (y, x) = ((i / width) as f64, (i % width) as f64);
                let d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                let mag = libm::exp(-d2 / (2.0 * sigma * sigma));
                let ph = phase0 + ky * y + kx * x;
                Complex64::new(mag * libm::cos(ph), mag * libm::sin(ph))
            })
            .collect();
        coils.push(ComplexImage::new(height, width, data)?);
    }
    CoilSensitivityMaps::new(coils, true)
}

/// Bilinear rigid transform: rotate about the image center by
/// `rotation_deg` (counterclockwise), then shift by `(dy, dx)` pixels.
/// Out-of-bounds samples are zero.
pub fn apply_misregistration(
    x: &RealImage,
    rotation_deg: f64,
    shift: (f64, f64),
) -> Result<RealImage> {
    if libm::fabs(rotation_deg) > 45.0 {
        return Err(invalid_arg!("|rotation| = {rotation_deg} exceeds 45 degrees"));
    }
    let (h, w) = (x.height(), x.width());
    let max_shift = (h.min(w) as f64) / 4.0;
    if libm::fabs(shift.0) > max_shift || libm::fabs(shift.1) > max_shift {
        return Err(invalid_arg!("shift {shift:?} exceeds a quarter of the image"));
    }
    let th = rotation_deg * PI / 180.0;
    let (c, s) = (libm::cos(th), libm::sin(th));
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = vec![0.0f64; h * w];
    for row in 0..h {
        for col in 0..w {
            // inverse map: undo shift, then rotate backwards about the center
            let y = row as f64 - shift.0 - cy;
            let xx = col as f64 - shift.1 - cx;
            let src_y = c * y + s * xx + cy;
            let src_x = -s * y + c * xx + cx;
            out[row * w + col] = bilinear(x, src_y, src_x);
        }
    }
    RealImage::new(h, w, out)
}

fn bilinear(img: &RealImage, y: f64, x: f64) -> f64 {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let y0 = libm::floor(y) as isize;
    let x0 = libm::floor(x) as isize;
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let mut acc = 0.0;
    for (dy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0isize, 1.0 - fx), (1, fx)] {
            let (yy, xx) = (y0 + dy, x0 + dx);
            if yy >= 0 && yy < h && xx >= 0 && xx < w && wy * wx != 0.0 {
                acc += wy * wx * img.get(yy as usize, xx as usize);
            }
        }
    }
    acc
}

/// Center-crop or zero-pad (per axis) to the target size, keeping the middle
/// window.
pub fn center_crop_pad(x: &RealImage, height: usize, width: usize) -> RealImage {
    let mut out = RealImage::zeros(height, width);
    for row in 0..height {
        for col in 0..width {
            let src_r = row as isize + (x.height() as isize - height as isize) / 2;
            let src_c = col as isize + (x.width() as isize - width as isize) / 2;
            if src_r >= 0
                && src_c >= 0
                && (src_r as usize) < x.height()
                && (src_c as usize) < x.width()
            {
                out.set(row, col, x.get(src_r as usize, src_c as usize));
            }
        }
    }
    out
}

/// Normalization policy for imported images: values already inside `[0, 1]`
/// pass through unchanged; anything else is min-max normalized, with constant
/// images mapping to zero.
pub fn normalize_unit_range(data: &mut [f64]) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in data.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if data.is_empty() || (lo >= 0.0 && hi <= 1.0) {
        return;
    }
    if hi > lo {
        for v in data.iter_mut() {
            *v = (*v - lo) / (hi - lo);
        }
    } else {
        data.fill(0.0);
    }
}

/// Convenience draw of a lesion set for experiment generation: one disk
/// lesion placed inside a chosen patch, sized to flip that patch's label.
pub fn random_lesion_in_patch(
    rng: &mut SeedRng,
    patch_row: usize,
    patch_col: usize,
    patch_size: usize,
    radius: f64,
    delta: f64,
) -> Lesion {
    let margin = radius + 2.0;
    let lo = margin;
    let hi = patch_size as f64 - margin;
    let cy = patch_row as f64 * patch_size as f64 + rng.gen_range(lo..hi);
    let cx = patch_col as f64 * patch_size as f64 + rng.gen_range(lo..hi);
    Lesion::disk((cy, cx), radius, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ncc;

    #[test]
    fn phantom_deterministic_and_in_range() {
        let a = make_phantom(3, 64, 64, 6).unwrap();
        let b = make_phantom(3, 64, 64, 6).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(make_phantom(3, 16, 64, 6).is_err());
    }

    #[test]
    fn distinct_seeds_give_distinct_anatomy() {
        for pair in 0..20u64 {
            let a = make_phantom(1000 + 2 * pair, 64, 64, 6).unwrap();
            let b = make_phantom(1001 + 2 * pair, 64, 64, 6).unwrap();
            let rel = a.rel_l2_distance(&b);
            assert!(rel > 0.05, "pair {pair}: relative L2 {rel}");
        }
    }

    #[test]
    fn empty_change_spec_gives_identical_pair() {
        let pair = make_longitudinal_pair(7, 64, 64, 5, &ChangeSpec::default()).unwrap();
        assert_eq!(pair.prior, pair.current);
        assert!(pair.change_mask.iter().all(|&m| !m));
    }

    #[test]
    fn disk_lesion_mask_matches_rasterization_oracle() {
        let lesion = Lesion::disk((32.0, 32.0), 4.0, 0.3);
        let change = ChangeSpec { lesions: vec![lesion] };
        let pair = make_longitudinal_pair(8, 64, 64, 5, &change).unwrap();
        // oracle: pixels strictly inside the disk
        for row in 0..64usize {
            for col in 0..64usize {
                let d2 = (row as f64 - 32.0).powi(2) + (col as f64 - 32.0).powi(2);
                let inside = d2 < 16.0;
                assert_eq!(
                    pair.change_mask[row * 64 + col],
                    inside,
                    "pixel ({row},{col}), d2 = {d2}"
                );
            }
        }
        // pair locality: equal outside the mask
        for (i, &m) in pair.change_mask.iter().enumerate() {
            if !m {
                assert_eq!(pair.prior.data()[i], pair.current.data()[i]);
            }
        }
    }

    #[test]
    fn lesion_respects_intensity_clamp() {
        let change = ChangeSpec { lesions: vec![Lesion::disk((32.0, 32.0), 6.0, 5.0)] };
        let pair = make_longitudinal_pair(9, 64, 64, 5, &change).unwrap();
        assert!(pair.current.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let bad = ChangeSpec { lesions: vec![Lesion::disk((100.0, 0.0), 2.0, 0.1)] };
        assert!(make_longitudinal_pair(9, 64, 64, 5, &bad).is_err());
    }

    #[test]
    fn coil_maps_rss_one_and_single_coil_unit() {
        let maps = make_coil_maps(12, 48, 40, 5).unwrap();
        for i in 0..48 * 40 {
            let rss: f64 = maps.coils().iter().map(|c| c.data()[i].norm_sqr()).sum();
            assert!((libm::sqrt(rss) - 1.0).abs() < 1e-6);
        }
        let single = make_coil_maps(1, 32, 32, 6).unwrap();
        for v in single.coil(0).data() {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn coil_maps_are_spatially_smooth() {
        // regression bound measured on the normalized profiles
        let maps = make_coil_maps(8, 64, 64, 7).unwrap();
        let mut max_grad = 0.0f64;
        for c in maps.coils() {
            for row in 0..63 {
                for col in 0..63 {
                    let v = c.get(row, col);
                    max_grad = max_grad.max((c.get(row + 1, col) - v).norm());
                    max_grad = max_grad.max((c.get(row, col + 1) - v).norm());
                }
            }
        }
        assert!(max_grad < 0.08, "max finite-difference step {max_grad}");
    }

    #[test]
    fn misregistration_identity_and_integer_shift() {
        let x = make_phantom(11, 64, 64, 5).unwrap();
        let same = apply_misregistration(&x, 0.0, (0.0, 0.0)).unwrap();
        assert!(same.rel_l2_distance(&x) < 1e-12);

        let fwd = apply_misregistration(&x, 0.0, (0.0, 3.0)).unwrap();
        let back = apply_misregistration(&fwd, 0.0, (0.0, -3.0)).unwrap();
        // phantom borders are dark, so the clipped columns are ~0
        assert!(back.rel_l2_distance(&x) < 1e-6, "rel {}", back.rel_l2_distance(&x));

        assert!(apply_misregistration(&x, 50.0, (0.0, 0.0)).is_err());
        assert!(apply_misregistration(&x, 0.0, (20.0, 0.0)).is_err());
    }

    #[test]
    fn rotation_changes_correlation() {
        for seed in 0..10u64 {
            let x = make_phantom(50 + seed, 64, 64, 6).unwrap();
            let rot = apply_misregistration(&x, 10.0, (0.0, 0.0)).unwrap();
            let corr = ncc(x.data(), rot.data()).unwrap();
            assert!(corr < 0.99, "seed {seed}: ncc {corr}");
        }
    }

    #[test]
    fn crop_keeps_centered_window() {
        let mut big = RealImage::zeros(72, 72);
        for row in 0..72 {
            for col in 0..72 {
                big.set(row, col, (row * 100 + col) as f64);
            }
        }
        let small = center_crop_pad(&big, 64, 64);
        assert_eq!(small.get(0, 0), big.get(4, 4));
        assert_eq!(small.get(63, 63), big.get(67, 67));
        // padding direction
        let padded = center_crop_pad(&small, 72, 72);
        assert_eq!(padded.get(4, 4), small.get(0, 0));
        assert_eq!(padded.get(0, 0), 0.0);
    }

    #[test]
    fn unit_range_normalization_policy() {
        let mut in_range = vec![0.2, 0.8];
        normalize_unit_range(&mut in_range);
        assert_eq!(in_range, vec![0.2, 0.8]);

        let mut wide = vec![-1.0, 0.0, 3.0];
        normalize_unit_range(&mut wide);
        assert_eq!(wide, vec![0.0, 0.25, 1.0]);

        let mut constant = vec![5.0, 5.0];
        normalize_unit_range(&mut constant);
        assert_eq!(constant, vec![0.0, 0.0]);
    }
}
