//! Variance-preserving diffusion: forward noising, the Tweedie posterior-mean
//! estimate, and the ancestral reverse step.

use crate::error::shape_err;
use crate::latent::Latent;
use crate::rng::SeedRng;
use crate::schedule::NoiseSchedule;
use crate::score::ScoreModel;
use crate::Result;

/// VP forward marginal: `z_t = sqrt(a_bar_t) z_0 + sqrt(1 - a_bar_t) eps`,
/// valid for `0 <= t <= T` (`t = 0` returns `z_0`).
pub fn forward_noise(
    z0: &Latent,
    t: usize,
    eps: &Latent,
    schedule: &NoiseSchedule,
) -> Result<Latent> {
    schedule.check_step(t, true)?;
    if z0.shape() != eps.shape() {
        return Err(shape_err!("noise shape differs from latent"));
    }
    let ab = schedule.alpha_bar(t);
    z0.scale(libm::sqrt(ab)).add_scaled(libm::sqrt(1.0 - ab), eps)
}

/// Tweedie posterior mean
/// `E[z0|zt] = (z_t + sqrt(1 - a_bar_t) * s_theta(z_t, t)) / sqrt(a_bar_t)`.
pub fn tweedie_estimate(
    z_t: &Latent,
    t: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
) -> Result<Latent> {
    schedule.check_step(t, false)?;
    let s = model.evaluate(z_t, t, schedule)?;
    let ab = schedule.alpha_bar(t);
    Ok(z_t.add_scaled(libm::sqrt(1.0 - ab), &s)?.scale(1.0 / libm::sqrt(ab)))
}

/// Vector-Jacobian product of [`tweedie_estimate`] with respect to `z_t`:
/// `(cot + sqrt(1 - a_bar_t) * (ds/dz)^T cot) / sqrt(a_bar_t)`.
pub fn tweedie_vjp(
    z_t: &Latent,
    t: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    cotangent: &Latent,
) -> Result<Latent> {
    schedule.check_step(t, false)?;
    let jv = model.vjp(z_t, t, schedule, cotangent)?;
    let ab = schedule.alpha_bar(t);
    Ok(cotangent.add_scaled(libm::sqrt(1.0 - ab), &jv)?.scale(1.0 / libm::sqrt(ab)))
}

/// One ancestral reverse step:
/// `z_{t-1} = (z_t + beta_t * score) / sqrt(alpha_t) + sqrt(beta_tilde_t) n`
/// with `score = s_theta / sqrt(1 - a_bar_t)` and
/// `beta_tilde_t = beta_t (1 - a_bar_{t-1}) / (1 - a_bar_t)`; the noise term
/// is omitted at `t = 1`.
pub fn reverse_step(
    z_t: &Latent,
    t: usize,
    model: &dyn ScoreModel,
    schedule: &NoiseSchedule,
    rng: &mut SeedRng,
) -> Result<Latent> {
    schedule.check_step(t, false)?;
    let s = model.evaluate(z_t, t, schedule)?;
    let beta = schedule.beta(t);
    let ab_t = schedule.alpha_bar(t);
    let score_scale = beta / libm::sqrt(1.0 - ab_t);
    let mean = z_t.add_scaled(score_scale, &s)?.scale(1.0 / libm::sqrt(schedule.alpha(t)));
    if t == 1 {
        return Ok(mean);
    }
    let beta_tilde = beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - ab_t);
    let noise = Latent::standard_normal(z_t.shape(), rng);
    mean.add_scaled(libm::sqrt(beta_tilde), &noise)
}
