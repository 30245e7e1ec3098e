//! Conjugate-gradient baseline against a dense direct solve of the same
//! normal equations, assembled column by column from the operator itself.

use nalgebra::{DMatrix, DVector};
use pips_core::forward::{apply_adjoint, apply_forward, SamplingMask};
use pips_core::image::RealImage;
use pips_core::phantom::make_coil_maps;
use pips_core::recon::cg_prior;
use pips_core::rng;
use rand::Rng;

const H: usize = 32;
const W: usize = 32;
const N: usize = H * W;

#[test]
fn cg_matches_dense_direct_solve() {
    for (case, r_factor, coils, seed) in [(0usize, 1.0f64, 1usize, 11u64), (1, 4.0, 4, 12)] {
        let maps = make_coil_maps(coils, H, W, seed).unwrap();
        let mask = SamplingMask::uniform(H, W, r_factor, 0.1, 0).unwrap();
        let mut rg = rng::seeded(100 + seed);
        let lambda: f64 = rg.gen_range(0.0..10.0);
        let lambda_p: f64 = rg.gen_range(0.0..10.0);
        let x_true =
            RealImage::new(H, W, (0..N).map(|_| rng::standard_normal(&mut rg)).collect()).unwrap();
        let x_prior =
            RealImage::new(H, W, (0..N).map(|_| rng::standard_normal(&mut rg)).collect()).unwrap();
        let y = apply_forward(&x_true, &maps, &mask).unwrap();

        // dense normal-equation matrix, one column per basis vector
        let reg = lambda + lambda_p;
        let mut m = DMatrix::<f64>::zeros(N, N);
        for j in 0..N {
            let mut e = vec![0.0f64; N];
            e[j] = 1.0;
            let img = RealImage::new(H, W, e).unwrap();
            let col = apply_adjoint(&apply_forward(&img, &maps, &mask).unwrap(), &maps).unwrap();
            for (i, v) in col.data().iter().enumerate() {
                m[(i, j)] = v.re + if i == j { reg } else { 0.0 };
            }
        }
        let ahy = apply_adjoint(&y, &maps).unwrap();
        let rhs = DVector::<f64>::from_iterator(
            N,
            ahy.data().iter().zip(x_prior.data()).map(|(c, p)| c.re + lambda_p * p),
        );
        let dense = m.lu().solve(&rhs).expect("dense normal equations are solvable");

        let cg = cg_prior(&y, &maps, &x_prior, lambda, lambda_p, 400, 1e-10).unwrap();
        let num: f64 = cg
            .data()
            .iter()
            .zip(dense.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            num / den < 1e-6,
            "case {case} (R={r_factor}, lambda={lambda:.3}, lambda_p={lambda_p:.3}): rel {}",
            num / den
        );
    }
}
