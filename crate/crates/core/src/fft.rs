//! Centered, unitary 2-D discrete Fourier transforms.
//!
//! Both domains are center-aligned (the zero frequency sits at `(h/2, w/2)`)
//! and the transform is scaled by `1/sqrt(h*w)`, so the inverse transform is
//! the exact adjoint with no extra scale factors. Power-of-two lengths use an
//! iterative radix-2 kernel; other lengths fall back to a direct O(n^2)
//! evaluation, which is exact and fast enough at the image sizes this crate
//! targets.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use crate::image::ComplexImage;

/// Transform plan for a fixed `height x width` grid: precomputed twiddle
/// tables shared across rows, columns and repeated applications.
pub struct Dft2 {
    height: usize,
    width: usize,
    row_tw: Vec<Complex64>,
    col_tw: Vec<Complex64>,
    scale: f64,
}

impl Dft2 {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            row_tw: twiddles(width),
            col_tw: twiddles(height),
            scale: 1.0 / libm::sqrt((height * width) as f64),
        }
    }

    /// Centered unitary forward transform.
    pub fn forward(&self, img: &ComplexImage) -> ComplexImage {
        self.transform(img, false)
    }

    /// Centered unitary inverse transform; exact adjoint of [`Dft2::forward`].
    pub fn inverse(&self, img: &ComplexImage) -> ComplexImage {
        self.transform(img, true)
    }

    fn transform(&self, img: &ComplexImage, inverse: bool) -> ComplexImage {
        assert_eq!(img.height(), self.height, "plan height mismatch");
        assert_eq!(img.width(), self.width, "plan width mismatch");
        let (h, w) = (self.height, self.width);

        // ifftshift both axes: out[i] = in[(i + n/2) mod n]
        let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
        shift2(img.data(), &mut buf, h, w, h / 2, w / 2);

        // inverse via conjugation reuses the forward kernel exactly
        if inverse {
            conj_slice(&mut buf);
        }
        for row in buf.chunks_exact_mut(w) {
            dft_1d(row, &self.row_tw);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = buf[r * w + c];
            }
            dft_1d(&mut col, &self.col_tw);
            for r in 0..h {
                buf[r * w + c] = col[r];
            }
        }
        if inverse {
            conj_slice(&mut buf);
        }

        // fftshift both axes: out[i] = in[(i + n - n/2) mod n]
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        shift2(&buf, &mut out, h, w, h - h / 2, w - w / 2);
        for v in out.iter_mut() {
            *v *= self.scale;
        }
        ComplexImage::new(h, w, out).expect("transform preserves shape and finiteness")
    }
}

/// One-shot centered unitary forward transform.
pub fn fft2_centered(img: &ComplexImage) -> ComplexImage {
    Dft2::new(img.height(), img.width()).forward(img)
}

/// One-shot centered unitary inverse transform.
pub fn ifft2_centered(img: &ComplexImage) -> ComplexImage {
    Dft2::new(img.height(), img.width()).inverse(img)
}

/// Cyclic shift of both axes: `out[r][c] = in[(r + dr) % h][(c + dc) % w]`.
fn shift2(input: &[Complex64], out: &mut [Complex64], h: usize, w: usize, dr: usize, dc: usize) {
    for r in 0..h {
        let src_r = (r + dr) % h;
        for c in 0..w {
            out[r * w + c] = input[src_r * w + (c + dc) % w];
        }
    }
}

fn conj_slice(data: &mut [Complex64]) {
    for v in data.iter_mut() {
        *v = v.conj();
    }
}

fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let angle = -2.0 * PI * k as f64 / n as f64;
            Complex64::new(libm::cos(angle), libm::sin(angle))
        })
        .collect()
}

/// Unnormalized forward DFT of one line, `tw[k] = exp(-2*pi*i*k/n)`.
fn dft_1d(data: &mut [Complex64], tw: &[Complex64]) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_pow2(data, tw);
    } else {
        naive_dft(data, tw);
    }
}

fn fft_pow2(data: &mut [Complex64], tw: &[Complex64]) {
    let n = data.len();
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = tw[k * step];
                let a = data[start + k];
                let b = data[start + k + len / 2] * w;
                data[start + k] = a + b;
                data[start + k + len / 2] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Direct O(n^2) DFT. Also serves as the independent oracle for the radix-2
/// kernel in tests.
fn naive_dft(data: &mut [Complex64], tw: &[Complex64]) {
    let n = data.len();
    let input: Vec<Complex64> = data.to_vec();
    for (k, out) in data.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut idx = 0usize;
        for x in &input {
            acc += x * tw[idx];
            idx += k;
            if idx >= n {
                idx -= n;
            }
        }
        *out = acc;
    }
}
