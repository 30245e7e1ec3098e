//! Sampling-fidelity oracles for the diffusion machinery: with the exact
//! Gaussian score, the ancestral chain must reproduce the prior, and the
//! forward marginal must match its closed form.

use pips_core::diffusion::{forward_noise, reverse_step};
use pips_core::latent::{Latent, LatentShape};
use pips_core::rng;
use pips_core::schedule::NoiseSchedule;
use pips_core::score::GaussianScoreModel;

const SHAPE: LatentShape = LatentShape { channels: 1, height: 2, width: 2 };

fn pattern_mean() -> Latent {
    Latent::new(SHAPE, vec![0.7, -0.3, 1.2, 0.0]).unwrap()
}

fn run_chain(model: &GaussianScoreModel, schedule: &NoiseSchedule, seed: u64) -> Latent {
    let mut r = rng::seeded(seed);
    let mut z = Latent::standard_normal(SHAPE, &mut r);
    for t in (1..=schedule.num_steps()).rev() {
        z = reverse_step(&z, t, model, schedule, &mut r).unwrap();
    }
    z
}

#[test]
fn reverse_chain_recovers_gaussian_prior() {
    let schedule = NoiseSchedule::default_linear();
    let mu = pattern_mean();

    for (case, var0) in [(0usize, 1.0f64), (1, 0.64)] {
        let model = GaussianScoreModel::new(mu.clone(), var0).unwrap();
        let runs = 500usize;
        let n = SHAPE.len();
        let mut mean = vec![0.0f64; n];
        let mut m2 = vec![0.0f64; n];
        for run in 0..runs {
            let z0 = run_chain(&model, &schedule, 40_000 + (case * runs + run) as u64);
            for (i, v) in z0.data().iter().enumerate() {
                let d = v - mean[i];
                mean[i] += d / (run + 1) as f64;
                m2[i] += d * (v - mean[i]);
            }
        }
        // per-pixel mean within 3 standard errors of the prior mean
        for i in 0..n {
            let var = m2[i] / (runs - 1) as f64;
            let se = (var / runs as f64).sqrt();
            let err = (mean[i] - mu.data()[i]).abs();
            assert!(err <= 3.0 * se, "var0 {var0} pixel {i}: |{err}| > 3 * {se}");
        }
        // pooled sample variance within 10% of the prior variance
        let pooled: f64 = m2.iter().map(|v| v / (runs - 1) as f64).sum::<f64>() / n as f64;
        assert!(
            (pooled - var0).abs() <= 0.10 * var0,
            "var0 {var0}: pooled sample variance {pooled}"
        );
    }
}

#[test]
fn forward_marginal_matches_closed_form() {
    // z0 ~ N(mu, var0): forward_noise at t gives
    // N(sqrt(ab_t) mu, ab_t var0 + 1 - ab_t)
    let schedule = NoiseSchedule::default_linear();
    let scalar = LatentShape { channels: 1, height: 1, width: 1 };
    let (mu, var0) = (0.8f64, 0.49f64);
    for t in [50usize, 430, 900] {
        let mut r = rng::seeded(7_000 + t as u64);
        let samples = 20_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..samples {
            let z0 = Latent::new(
                scalar,
                vec![mu + var0.sqrt() * rng::standard_normal(&mut r)],
            )
            .unwrap();
            let eps = Latent::standard_normal(scalar, &mut r);
            let z = forward_noise(&z0, t, &eps, &schedule).unwrap().data()[0];
            sum += z;
            sum_sq += z * z;
        }
        let ab = schedule.alpha_bar(t);
        let want_mean = ab.sqrt() * mu;
        let want_var = ab * var0 + 1.0 - ab;
        let got_mean = sum / samples as f64;
        let got_var = sum_sq / samples as f64 - got_mean * got_mean;
        let se_mean = (want_var / samples as f64).sqrt();
        let se_var = want_var * (2.0 / samples as f64).sqrt();
        assert!(
            (got_mean - want_mean).abs() <= 3.0 * se_mean,
            "t={t}: mean {got_mean} vs {want_mean}"
        );
        assert!(
            (got_var - want_var).abs() <= 3.0 * se_var,
            "t={t}: var {got_var} vs {want_var}"
        );
    }
}
