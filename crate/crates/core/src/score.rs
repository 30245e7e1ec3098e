//! Score models: the interface consumed by the samplers, the closed-form
//! Gaussian oracle, and the trainable convolutional model with its denoising
//! score-matching trainer.
//!
//! Convention: models return `s_theta = -eps_hat`, the negated noise
//! prediction, scaled so that `E[z0|zt] = (z_t + sqrt(1 - a_bar_t) * s_theta)
//! / sqrt(a_bar_t)` holds exactly.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::diffusion;
use crate::error::{invalid_arg, shape_err};
use crate::latent::Latent;
use crate::nn::{
    sinusoidal_embedding, Conv3x3, ParamLayout, ResBlock, ResBlockTape, TimeMlp, TimeMlpTape, T3,
};
use crate::optim::AdamState;
use crate::rng;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

/// A (possibly learned) approximation of the scaled score
/// `sqrt(1 - a_bar_t) * grad log p_t(z)`.
pub trait ScoreModel {
    /// `s_theta(z, t)` for `1 <= t <= T`.
    fn evaluate(&self, z: &Latent, t: usize, schedule: &NoiseSchedule) -> Result<Latent>;

    /// Vector-Jacobian product `(d s_theta / d z)^T * cotangent`, used by the
    /// data-consistency gradient.
    fn vjp(
        &self,
        z: &Latent,
        t: usize,
        schedule: &NoiseSchedule,
        cotangent: &Latent,
    ) -> Result<Latent>;
}

/// Exact score of a Gaussian prior `N(mean, var0 * I)`: under the VP forward
/// process the marginal at step `t` is `N(sqrt(a_bar_t) * mean, (a_bar_t *
/// var0 + 1 - a_bar_t) * I)`, whose score is linear in `z`. Used as the test
/// oracle for the sampling and reconstruction machinery.
#[derive(Debug, Clone)]
pub struct GaussianScoreModel {
    mean: Latent,
    var0: f64,
}

impl GaussianScoreModel {
    pub fn new(mean: Latent, var0: f64) -> Result<Self> {
        if !(var0 >= 0.0) {
            return Err(invalid_arg!("prior variance {var0} must be >= 0"));
        }
        Ok(Self { mean, var0 })
    }

    pub fn mean(&self) -> &Latent {
        &self.mean
    }

    pub fn var0(&self) -> f64 {
        self.var0
    }

    fn marginal(&self, t: usize, schedule: &NoiseSchedule) -> (f64, f64) {
        let ab = schedule.alpha_bar(t);
        (ab, ab * self.var0 + (1.0 - ab))
    }
}

impl ScoreModel for GaussianScoreModel {
    fn evaluate(&self, z: &Latent, t: usize, schedule: &NoiseSchedule) -> Result<Latent> {
        schedule.check_step(t, false)?;
        if z.shape() != self.mean.shape() {
            return Err(shape_err!("latent shape differs from prior mean"));
        }
        let (ab, var_t) = self.marginal(t, schedule);
        let coeff = -libm::sqrt(1.0 - ab) / var_t;
        let sqrt_ab = libm::sqrt(ab);
        let data = z
            .data()
            .iter()
            .zip(self.mean.data())
            .map(|(zv, mv)| coeff * (zv - sqrt_ab * mv))
            .collect();
        Latent::new(z.shape(), data)
    }

    fn vjp(
        &self,
        z: &Latent,
        t: usize,
        schedule: &NoiseSchedule,
        cotangent: &Latent,
    ) -> Result<Latent> {
        schedule.check_step(t, false)?;
        if cotangent.shape() != self.mean.shape() {
            return Err(shape_err!("cotangent shape differs from prior mean"));
        }
        let _ = z;
        let (ab, var_t) = self.marginal(t, schedule);
        Ok(cotangent.scale(-libm::sqrt(1.0 - ab) / var_t))
    }
}

/// Architecture descriptor for [`ConvScoreModel`]: a three-level residual
/// encoder-decoder with additive skips and a sinusoidal time embedding
/// projected per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreArch {
    pub latent_channels: usize,
    pub base_width: usize,
    pub time_embed_dim: usize,
}

impl Default for ScoreArch {
    fn default() -> Self {
        Self { latent_channels: 4, base_width: 32, time_embed_dim: 16 }
    }
}

struct ScoreLayers {
    tmlp: TimeMlp,
    stem: Conv3x3,
    enc1: ResBlock,
    down1: Conv3x3,
    enc2: ResBlock,
    down2: Conv3x3,
    mid: ResBlock,
    up2: Conv3x3,
    dec2: ResBlock,
    up1: Conv3x3,
    dec1: ResBlock,
    head: Conv3x3,
    param_count: usize,
}

impl ScoreLayers {
    fn build(arch: &ScoreArch) -> Self {
        let (c, b, e) = (arch.latent_channels, arch.base_width, arch.time_embed_dim);
        let mut layout = ParamLayout::default();
        let tmlp = TimeMlp::new(&mut layout, e, 2 * e);
        let cond = tmlp.out_dim();
        let stem = Conv3x3::new(&mut layout, c, b, 1);
        let enc1 = ResBlock::new(&mut layout, b, cond);
        let down1 = Conv3x3::new(&mut layout, b, 2 * b, 2);
        let enc2 = ResBlock::new(&mut layout, 2 * b, cond);
        let down2 = Conv3x3::new(&mut layout, 2 * b, 4 * b, 2);
        let mid = ResBlock::new(&mut layout, 4 * b, cond);
        let up2 = Conv3x3::new(&mut layout, 4 * b, 2 * b, 1);
        let dec2 = ResBlock::new(&mut layout, 2 * b, cond);
        let up1 = Conv3x3::new(&mut layout, 2 * b, b, 1);
        let dec1 = ResBlock::new(&mut layout, b, cond);
        let head = Conv3x3::new(&mut layout, b, c, 1);
        Self {
            tmlp,
            stem,
            enc1,
            down1,
            enc2,
            down2,
            mid,
            up2,
            dec2,
            up1,
            dec1,
            head,
            param_count: layout.total(),
        }
    }
}

struct ScoreTape {
    z: T3,
    tmlp_tape: TimeMlpTape,
    e1_tape: ResBlockTape,
    e1: T3,
    e2_tape: ResBlockTape,
    e2: T3,
    m_tape: ResBlockTape,
    u2_in: T3,
    d2_tape: ResBlockTape,
    u1_in: T3,
    d1_tape: ResBlockTape,
    pre_head: T3,
    head_in: T3,
}

/// Trainable epsilon-prediction network exposed through the [`ScoreModel`]
/// interface as `s_theta = -eps_hat`.
pub struct ConvScoreModel {
    arch: ScoreArch,
    layers: ScoreLayers,
    params: Vec<f32>,
    final_loss: f64,
}

impl ConvScoreModel {
    /// Freshly initialized (untrained) model; deterministic in the seed.
    pub fn init(arch: ScoreArch, seed: u64) -> Self {
        let layers = ScoreLayers::build(&arch);
        let mut params = vec![0.0f32; layers.param_count];
        let mut r = rng::seeded(seed);
        layers.tmlp.init_params(&mut params, &mut r);
        layers.stem.init_params(&mut params, &mut r, 1.0);
        layers.enc1.init_params(&mut params, &mut r);
        layers.down1.init_params(&mut params, &mut r, 1.0);
        layers.enc2.init_params(&mut params, &mut r);
        layers.down2.init_params(&mut params, &mut r, 1.0);
        layers.mid.init_params(&mut params, &mut r);
        layers.up2.init_params(&mut params, &mut r, 1.0);
        layers.dec2.init_params(&mut params, &mut r);
        layers.up1.init_params(&mut params, &mut r, 1.0);
        layers.dec1.init_params(&mut params, &mut r);
        // zero-init head: the untrained model predicts zero noise
        layers.head.init_params(&mut params, &mut r, 0.0);
        Self { arch, layers, params, final_loss: f64::NAN }
    }

    /// Rebuild from checkpoint parts.
    pub fn from_params(arch: ScoreArch, params: Vec<f32>, final_loss: f64) -> Result<Self> {
        let layers = ScoreLayers::build(&arch);
        if params.len() != layers.param_count {
            return Err(shape_err!(
                "checkpoint holds {} parameters, architecture needs {}",
                params.len(),
                layers.param_count
            ));
        }
        Ok(Self { arch, layers, params, final_loss })
    }

    pub fn arch(&self) -> &ScoreArch {
        &self.arch
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.layers.param_count
    }

    /// Last recorded training loss (NaN when untrained).
    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    fn check_input(&self, z: &Latent) -> Result<()> {
        let s = z.shape();
        if s.channels != self.arch.latent_channels {
            return Err(shape_err!(
                "latent has {} channels, model expects {}",
                s.channels,
                self.arch.latent_channels
            ));
        }
        if s.height % 4 != 0 || s.width % 4 != 0 || s.height < 4 || s.width < 4 {
            return Err(shape_err!(
                "latent {}x{} not divisible by the model's downsampling factor 4",
                s.height,
                s.width
            ));
        }
        Ok(())
    }

    fn forward_eps(&self, z: &T3, t: usize) -> (T3, ScoreTape) {
        let p = &self.params[..];
        let l = &self.layers;
        let raw = sinusoidal_embedding(t, self.arch.time_embed_dim);
        let (emb, tmlp_tape) = l.tmlp.forward(p, &raw);
        let x0 = l.stem.forward(p, z);
        let (e1, e1_tape) = l.enc1.forward(p, &x0, &emb);
        let d1 = l.down1.forward(p, &e1);
        let (e2, e2_tape) = l.enc2.forward(p, &d1, &emb);
        let d2 = l.down2.forward(p, &e2);
        let (m, m_tape) = l.mid.forward(p, &d2, &emb);
        let u2_in = crate::nn::upsample2(&m);
        let mut c2 = l.up2.forward(p, &u2_in);
        c2.add_assign(&e2);
        let (dd2, d2_tape) = l.dec2.forward(p, &c2, &emb);
        let u1_in = crate::nn::upsample2(&dd2);
        let mut c1 = l.up1.forward(p, &u1_in);
        c1.add_assign(&e1);
        let (dd1, d1_tape) = l.dec1.forward(p, &c1, &emb);
        let head_in = crate::nn::silu(&dd1);
        let eps = l.head.forward(p, &head_in);
        let tape = ScoreTape {
            z: z.clone(),
            tmlp_tape,
            e1_tape,
            e1,
            e2_tape,
            e2,
            m_tape,
            u2_in,
            d2_tape,
            u1_in,
            d1_tape,
            pre_head: dd1,
            head_in,
        };
        (eps, tape)
    }

    /// Backward pass: input gradient, optionally accumulating parameter
    /// gradients (including the shared conditioning trunk).
    fn backward_eps(&self, tape: &ScoreTape, d_eps: &T3, mut grads: Option<&mut [f32]>) -> T3 {
        let p = &self.params[..];
        let l = &self.layers;
        let mut d_emb = vec![0.0f32; l.tmlp.out_dim()];
        let train = grads.is_some();
        macro_rules! de {
            () => {
                if train { Some(&mut d_emb[..]) } else { None }
            };
        }
        if let Some(g) = grads.as_deref_mut() {
            l.head.backward_params(&tape.head_in, d_eps, g);
        }
        let dhead_in = l.head.backward_input(p, d_eps, tape.head_in.h, tape.head_in.w);
        let ddd1 = crate::nn::silu_backward(&tape.pre_head, &dhead_in);
        let dc1 = l.dec1.backward(p, &tape.d1_tape, &ddd1, grads.as_deref_mut(), de!());
        // skip connection: dc1 flows both to up1 and straight to e1
        if let Some(g) = grads.as_deref_mut() {
            l.up1.backward_params(&tape.u1_in, &dc1, g);
        }
        let du1 = l.up1.backward_input(p, &dc1, tape.u1_in.h, tape.u1_in.w);
        let ddd2 = crate::nn::upsample2_backward(&du1);
        let dc2 = l.dec2.backward(p, &tape.d2_tape, &ddd2, grads.as_deref_mut(), de!());
        if let Some(g) = grads.as_deref_mut() {
            l.up2.backward_params(&tape.u2_in, &dc2, g);
        }
        let du2 = l.up2.backward_input(p, &dc2, tape.u2_in.h, tape.u2_in.w);
        let dm = crate::nn::upsample2_backward(&du2);
        let dd2g = l.mid.backward(p, &tape.m_tape, &dm, grads.as_deref_mut(), de!());
        if let Some(g) = grads.as_deref_mut() {
            l.down2.backward_params(&tape.e2, &dd2g, g);
        }
        let mut de2 = l.down2.backward_input(p, &dd2g, tape.e2.h, tape.e2.w);
        de2.add_assign(&dc2);
        let dd1g = l.enc2.backward(p, &tape.e2_tape, &de2, grads.as_deref_mut(), de!());
        if let Some(g) = grads.as_deref_mut() {
            l.down1.backward_params(&tape.e1, &dd1g, g);
        }
        let mut de1 = l.down1.backward_input(p, &dd1g, tape.e1.h, tape.e1.w);
        de1.add_assign(&dc1);
        let dx0 = l.enc1.backward(p, &tape.e1_tape, &de1, grads.as_deref_mut(), de!());
        if let Some(g) = grads.as_deref_mut() {
            l.stem.backward_params(&tape.z, &dx0, g);
            l.tmlp.backward_params(&tape.tmlp_tape, &d_emb, g, p);
        }
        l.stem.backward_input(p, &dx0, tape.z.h, tape.z.w)
    }

    /// Denoising score-matching loss on a fixed set of latents with seeded
    /// `(t, eps)` draws: the quantity the trainer minimizes.
    pub fn denoising_loss(
        &self,
        latents: &[Latent],
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<f64> {
        if latents.is_empty() {
            return Err(invalid_arg!("empty latent batch"));
        }
        let mut r = rng::seeded(seed);
        let mut total = 0.0;
        for z0 in latents {
            self.check_input(z0)?;
            let t = r.gen_range(1..=schedule.num_steps());
            let eps = Latent::standard_normal(z0.shape(), &mut r);
            let z_t = diffusion::forward_noise(z0, t, &eps, schedule)?;
            let (eps_hat, _) = self.forward_eps(&T3::from_latent(&z_t), t);
            let n = eps_hat.data.len() as f64;
            total += eps_hat
                .data
                .iter()
                .zip(eps.data())
                .map(|(a, b)| {
                    let d = *a as f64 - b;
                    d * d
                })
                .sum::<f64>()
                / n;
        }
        Ok(total / latents.len() as f64)
    }
}

impl ScoreModel for ConvScoreModel {
    fn evaluate(&self, z: &Latent, t: usize, schedule: &NoiseSchedule) -> Result<Latent> {
        schedule.check_step(t, false)?;
        self.check_input(z)?;
        let (eps, _) = self.forward_eps(&T3::from_latent(z), t);
        Ok(eps.to_latent().scale(-1.0))
    }

    fn vjp(
        &self,
        z: &Latent,
        t: usize,
        schedule: &NoiseSchedule,
        cotangent: &Latent,
    ) -> Result<Latent> {
        schedule.check_step(t, false)?;
        self.check_input(z)?;
        if cotangent.shape() != z.shape() {
            return Err(shape_err!("cotangent shape differs from latent"));
        }
        let (_, tape) = self.forward_eps(&T3::from_latent(z), t);
        let mut d_eps = T3::from_latent(cotangent);
        for v in d_eps.data.iter_mut() {
            *v = -*v;
        }
        Ok(self.backward_eps(&tape, &d_eps, None).to_latent())
    }
}

/// Trainer configuration shared by the score-model and autoencoder trainers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the dataset withheld for the recorded held-out error.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 1500, batch_size: 8, learning_rate: 2e-3, holdout_fraction: 0.05 }
    }
}

/// Cosine decay from the base rate to 5% of it over the run.
pub(crate) fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    let progress = step as f64 / total.max(1) as f64;
    let floor = 0.05;
    base * (floor + (1.0 - floor) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress)))
}

/// Rescale a gradient in place so its global L2 norm is at most `max_norm`.
pub(crate) fn clip_grad_norm(grads: &mut [f32], max_norm: f32) {
    let norm = libm::sqrtf(grads.iter().map(|g| g * g).sum());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
}

/// Train a [`ConvScoreModel`] by denoising score matching: minimize
/// `E_{t, eps} || eps_hat(z_t, t) - eps ||^2` with `z_t` from the VP forward
/// marginal. Deterministic in the seed.
pub fn train_score_model(
    dataset: &[Latent],
    schedule: &NoiseSchedule,
    arch: ScoreArch,
    config: &TrainConfig,
    seed: u64,
) -> Result<ConvScoreModel> {
    if dataset.is_empty() {
        return Err(invalid_arg!("score training needs a non-empty dataset"));
    }
    let shape = dataset[0].shape();
    if !dataset.iter().all(|z| z.shape() == shape) {
        return Err(shape_err!("latent dataset shapes disagree"));
    }
    if config.batch_size == 0 || config.steps == 0 {
        return Err(invalid_arg!("steps and batch_size must be positive"));
    }

    let mut model = ConvScoreModel::init(arch, rng::derive_seed(seed, 0x5c0e));
    model.check_input(&dataset[0])?;
    let mut batch_rng = rng::seeded(rng::derive_seed(seed, 0xba7c));
    let mut adam = AdamState::<f32>::new(model.param_count(), config.learning_rate as f32);
    let mut grads = vec![0.0f32; model.param_count()];
    let mut ema: Vec<f32> = model.params.clone();
    let ema_decay = 0.998f32;
    let mut loss = f64::NAN;

    for step in 0..config.steps {
        grads.fill(0.0);
        let mut batch_loss = 0.0;
        for _ in 0..config.batch_size {
            let idx = batch_rng.gen_range(0..dataset.len());
            let t = batch_rng.gen_range(1..=schedule.num_steps());
            let eps = Latent::standard_normal(shape, &mut batch_rng);
            let z_t = diffusion::forward_noise(&dataset[idx], t, &eps, schedule)?;
            let (eps_hat, tape) = model.forward_eps(&T3::from_latent(&z_t), t);
            let n = eps_hat.data.len() as f64;
            let mut d_eps = T3::zeros(eps_hat.c, eps_hat.h, eps_hat.w);
            let scale = 2.0 / (n * config.batch_size as f64);
            let mut item_loss = 0.0;
            for ((d, a), b) in d_eps.data.iter_mut().zip(&eps_hat.data).zip(eps.data()) {
                let r = *a as f64 - b;
                item_loss += r * r;
                *d = (scale * r) as f32;
            }
            batch_loss += item_loss / n;
            model.backward_eps(&tape, &d_eps, Some(&mut grads));
        }
        loss = batch_loss / config.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite { context: "score training loss", step });
        }
        clip_grad_norm(&mut grads, 1.0);
        adam.learning_rate = cosine_lr(config.learning_rate, step, config.steps) as f32;
        adam.step(&mut model.params, &grads)?;
        for (e, p) in ema.iter_mut().zip(&model.params) {
            *e = ema_decay * *e + (1.0 - ema_decay) * p;
        }
    }
    // the smoothed parameters are the published model
    model.params = ema;
    model.final_loss = loss;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::tweedie_estimate;
    use crate::latent::LatentShape;

    fn scalar_latent(v: f64) -> Latent {
        Latent::new(LatentShape { channels: 1, height: 1, width: 1 }, vec![v]).unwrap()
    }

    #[test]
    fn gaussian_score_tweedie_example() {
        // alpha_bar = 0.25 via a single step with beta = 0.75
        let schedule = NoiseSchedule::linear(1, 0.75, 0.75).unwrap();
        let model = GaussianScoreModel::new(scalar_latent(0.0), 1.0).unwrap();
        let z = scalar_latent(1.0);
        let x0 = tweedie_estimate(&z, 1, &model, &schedule).unwrap();
        assert!((x0.data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn delta_prior_returns_mean() {
        let schedule = NoiseSchedule::linear(10, 0.05, 0.3).unwrap();
        let mu = scalar_latent(0.37);
        let model = GaussianScoreModel::new(mu.clone(), 0.0).unwrap();
        for t in [1usize, 5, 10] {
            for z in [-2.0, 0.0, 3.5] {
                let x0 = tweedie_estimate(&scalar_latent(z), t, &model, &schedule).unwrap();
                assert!((x0.data()[0] - 0.37).abs() < 1e-10, "t={t} z={z}");
            }
        }
    }

    #[test]
    fn near_unit_alpha_bar_returns_input() {
        let schedule = NoiseSchedule::linear(1, 1e-8, 1e-8).unwrap();
        let model = GaussianScoreModel::new(scalar_latent(0.0), 1.0).unwrap();
        let x0 = tweedie_estimate(&scalar_latent(1.7), 1, &model, &schedule).unwrap();
        assert!((x0.data()[0] - 1.7).abs() < 1e-6);
    }

    #[test]
    fn gaussian_tweedie_matches_closed_form_conditioning() {
        // independent closed form: E[z0|zt] = mu + sqrt(ab) var0 / v * (z - sqrt(ab) mu)
        let schedule = NoiseSchedule::default_linear();
        let mut r = rng::seeded(5);
        for case in 0..20 {
            let t = 1 + (case * 47) % schedule.num_steps();
            let mu = rng::standard_normal(&mut r);
            let var0 = libm::exp(rng::standard_normal(&mut r) * 0.5);
            let z = rng::standard_normal(&mut r) * 2.0;
            let model = GaussianScoreModel::new(scalar_latent(mu), var0).unwrap();
            let got = tweedie_estimate(&scalar_latent(z), t, &model, &schedule).unwrap().data()[0];
            let ab = schedule.alpha_bar(t);
            let v = ab * var0 + 1.0 - ab;
            let want = mu + libm::sqrt(ab) * var0 / v * (z - libm::sqrt(ab) * mu);
            assert!((got - want).abs() < 1e-10, "case {case}: {got} vs {want}");
        }
    }

    #[test]
    fn gaussian_vjp_matches_linearity() {
        let schedule = NoiseSchedule::default_linear();
        let shape = LatentShape { channels: 1, height: 2, width: 2 };
        let mu = Latent::zeros(shape);
        let model = GaussianScoreModel::new(mu, 0.8).unwrap();
        let mut r = rng::seeded(8);
        let z = Latent::standard_normal(shape, &mut r);
        let cot = Latent::standard_normal(shape, &mut r);
        let t = 321;
        // s(z) is linear, so s(z + h*cot) - s(z) = h * J * cot and J is
        // symmetric (diagonal); compare against the vjp directly.
        let h = 1e-6;
        let s0 = model.evaluate(&z, t, &schedule).unwrap();
        let s1 = model.evaluate(&z.add_scaled(h, &cot).unwrap(), t, &schedule).unwrap();
        let jv: Vec<f64> =
            s1.data().iter().zip(s0.data()).map(|(a, b)| (a - b) / h).collect();
        let vjp = model.vjp(&z, t, &schedule, &cot).unwrap();
        for (a, b) in jv.iter().zip(vjp.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_model_shape_and_determinism() {
        let arch = ScoreArch { latent_channels: 2, base_width: 8, time_embed_dim: 8 };
        let model = ConvScoreModel::init(arch, 7);
        let schedule = NoiseSchedule::linear(50, 1e-3, 0.1).unwrap();
        let shape = LatentShape { channels: 2, height: 8, width: 8 };
        let mut r = rng::seeded(9);
        let z = Latent::standard_normal(shape, &mut r);
        let a = model.evaluate(&z, 25, &schedule).unwrap();
        let b = model.evaluate(&z, 25, &schedule).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), shape);
        // zero-initialized head: untrained model predicts zero noise
        assert_eq!(a.norm_sq(), 0.0);
        // rejects incompatible shapes
        let bad = Latent::zeros(LatentShape { channels: 2, height: 6, width: 8 });
        assert!(model.evaluate(&bad, 25, &schedule).is_err());
    }

    #[test]
    fn conv_model_vjp_matches_directional_derivative() {
        let arch = ScoreArch { latent_channels: 1, base_width: 4, time_embed_dim: 8 };
        let mut model = ConvScoreModel::init(arch, 11);
        // give the head nonzero weights so the jacobian is nontrivial
        let mut r = rng::seeded(12);
        for p in model.params.iter_mut() {
            if *p == 0.0 {
                *p = 0.05 * rng::standard_normal(&mut r) as f32;
            }
        }
        let schedule = NoiseSchedule::linear(50, 1e-3, 0.1).unwrap();
        let shape = LatentShape { channels: 1, height: 8, width: 8 };
        let z = Latent::standard_normal(shape, &mut r);
        let dir = Latent::standard_normal(shape, &mut r);
        let cot = Latent::standard_normal(shape, &mut r);
        let t = 20;

        // <cot, J dir> vs <J^T cot, dir>
        let h = 1e-3;
        let s_plus = model.evaluate(&z.add_scaled(h, &dir).unwrap(), t, &schedule).unwrap();
        let s_minus = model.evaluate(&z.add_scaled(-h, &dir).unwrap(), t, &schedule).unwrap();
        let lhs: f64 = s_plus
            .data()
            .iter()
            .zip(s_minus.data())
            .zip(cot.data())
            .map(|((a, b), c)| (a - b) / (2.0 * h) * c)
            .sum();
        let vjp = model.vjp(&z, t, &schedule, &cot).unwrap();
        let rhs: f64 = vjp.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 2e-2 * rhs.abs().max(0.1), "{lhs} vs {rhs}");
    }

    #[test]
    fn training_collapses_on_single_constant_latent() {
        let shape = LatentShape { channels: 1, height: 8, width: 8 };
        let constant = Latent::new(shape, vec![0.8; shape.len()]).unwrap();
        let schedule = NoiseSchedule::linear(100, 1e-3, 0.05).unwrap();
        let arch = ScoreArch { latent_channels: 1, base_width: 4, time_embed_dim: 8 };
        let config =
            TrainConfig { steps: 3000, batch_size: 8, learning_rate: 1e-2, holdout_fraction: 0.0 };
        let model =
            train_score_model(&[constant.clone()], &schedule, arch, &config, 99).unwrap();
        assert!(model.final_loss().is_finite());

        // tweedie at mid-t maps a noised sample back near the constant
        let t = 50;
        let mut r = rng::seeded(1234);
        let mut max_rel = 0.0f64;
        for _ in 0..5 {
            let eps = Latent::standard_normal(shape, &mut r);
            let z_t = diffusion::forward_noise(&constant, t, &eps, &schedule).unwrap();
            let x0 = tweedie_estimate(&z_t, t, &model, &schedule).unwrap();
            let rel = libm::sqrt(
                x0.data()
                    .iter()
                    .zip(constant.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / constant.norm_sq(),
            );
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 0.05, "relative error {max_rel}");
    }

    #[test]
    fn training_improves_heldout_loss_and_is_deterministic() {
        let shape = LatentShape { channels: 1, height: 8, width: 8 };
        let mut r = rng::seeded(31);
        let dataset: Vec<Latent> = (0..12)
            .map(|_| {
                let base = rng::standard_normal(&mut r);
                Latent::new(shape, (0..shape.len()).map(|i| base + 0.1 * (i % 5) as f64).collect())
                    .unwrap()
            })
            .collect();
        let heldout: Vec<Latent> =
            (0..4).map(|_| dataset[r.gen_range(0..dataset.len())].clone()).collect();
        let schedule = NoiseSchedule::linear(100, 1e-3, 0.05).unwrap();
        let arch = ScoreArch { latent_channels: 1, base_width: 4, time_embed_dim: 8 };
        let config =
            TrainConfig { steps: 150, batch_size: 4, learning_rate: 4e-3, holdout_fraction: 0.0 };

        let init = ConvScoreModel::init(arch, rng::derive_seed(77, 0x5c0e));
        let loss_before = init.denoising_loss(&heldout, &schedule, 555).unwrap();
        let trained = train_score_model(&dataset, &schedule, arch, &config, 77).unwrap();
        let loss_after = trained.denoising_loss(&heldout, &schedule, 555).unwrap();
        assert!(loss_after < loss_before, "{loss_after} !< {loss_before}");

        let again = train_score_model(&dataset, &schedule, arch, &config, 77).unwrap();
        assert_eq!(trained.params(), again.params());
        assert!(train_score_model(&[], &schedule, arch, &config, 77).is_err());
    }
}
