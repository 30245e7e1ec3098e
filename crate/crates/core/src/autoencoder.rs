//! Autoencoders mapping images to latents and back: the exact identity pair
//! used by the oracle tests, and a small trainable convolutional pair with
//! spatial downsampling factor 4.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid_arg, shape_err};
use crate::image::RealImage;
use crate::latent::{Latent, LatentShape};
use crate::nn::{silu, silu_backward, upsample2, upsample2_backward, Conv3x3, ParamLayout, T3};
use crate::optim::AdamState;
use crate::rng;
use crate::score::TrainConfig;
use crate::{Error, Result};

/// Encoder/decoder pair. Implementations are immutable after construction and
/// differentiable through [`Autoencoder::decode_vjp`] / [`Autoencoder::encode_vjp`].
pub trait Autoencoder {
    /// Latent shape produced for an `height x width` input.
    fn latent_shape(&self, height: usize, width: usize) -> Result<LatentShape>;

    fn encode(&self, x: &RealImage) -> Result<Latent>;

    fn decode(&self, z: &Latent) -> Result<RealImage>;

    /// `(d decode / d z)^T * cotangent_image`.
    fn decode_vjp(&self, z: &Latent, cotangent: &RealImage) -> Result<Latent>;

    /// `(d encode / d x)^T * cotangent_latent`.
    fn encode_vjp(&self, x: &RealImage, cotangent: &Latent) -> Result<RealImage>;
}

/// Latent = image: reduces the latent pipeline to image-space diffusion.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityAutoencoder;

impl Autoencoder for IdentityAutoencoder {
    fn latent_shape(&self, height: usize, width: usize) -> Result<LatentShape> {
        Ok(LatentShape { channels: 1, height, width })
    }

    fn encode(&self, x: &RealImage) -> Result<Latent> {
        Ok(Latent::from_image(x))
    }

    fn decode(&self, z: &Latent) -> Result<RealImage> {
        z.to_image()
    }

    fn decode_vjp(&self, z: &Latent, cotangent: &RealImage) -> Result<Latent> {
        if z.shape() != (LatentShape { channels: 1, height: cotangent.height(), width: cotangent.width() }) {
            return Err(shape_err!("cotangent shape differs from latent"));
        }
        Ok(Latent::from_image(cotangent))
    }

    fn encode_vjp(&self, x: &RealImage, cotangent: &Latent) -> Result<RealImage> {
        let _ = x;
        cotangent.to_image()
    }
}

/// Architecture descriptor for [`ConvAutoencoder`]. The downsampling factor is
/// fixed at 4 (two stride-2 stages).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AeArch {
    pub base_width: usize,
    pub latent_channels: usize,
}

impl Default for AeArch {
    fn default() -> Self {
        Self { base_width: 16, latent_channels: 4 }
    }
}

struct AeLayers {
    enc1: Conv3x3, // 1 -> B, s1
    enc2: Conv3x3, // B -> 2B, s2
    enc3: Conv3x3, // 2B -> 2B, s1
    enc4: Conv3x3, // 2B -> C, s2
    dec1: Conv3x3, // C -> 2B, s1
    dec2: Conv3x3, // 2B -> B, s1 (after 2x upsample)
    dec3: Conv3x3, // B -> B, s1 (after 2x upsample)
    dec4: Conv3x3, // B -> 1, s1
    param_count: usize,
}

impl AeLayers {
    fn build(arch: &AeArch) -> Self {
        let (b, c) = (arch.base_width, arch.latent_channels);
        let mut layout = ParamLayout::default();
        let enc1 = Conv3x3::new(&mut layout, 1, b, 1);
        let enc2 = Conv3x3::new(&mut layout, b, 2 * b, 2);
        let enc3 = Conv3x3::new(&mut layout, 2 * b, 2 * b, 1);
        let enc4 = Conv3x3::new(&mut layout, 2 * b, c, 2);
        let dec1 = Conv3x3::new(&mut layout, c, 2 * b, 1);
        let dec2 = Conv3x3::new(&mut layout, 2 * b, b, 1);
        let dec3 = Conv3x3::new(&mut layout, b, b, 1);
        let dec4 = Conv3x3::new(&mut layout, b, 1, 1);
        Self { enc1, enc2, enc3, enc4, dec1, dec2, dec3, dec4, param_count: layout.total() }
    }
}

struct EncTape {
    x: T3,
    pre1: T3,
    h1: T3,
    pre2: T3,
    h2: T3,
    pre3: T3,
    h3: T3,
}

struct DecTape {
    z: T3,
    pre1: T3,
    up1: T3,
    pre2: T3,
    up2: T3,
    pre3: T3,
    h3: T3,
}

/// Convolutional autoencoder with spatial downsampling factor 4 and a plain
/// MSE reconstruction objective. The decoder output is unclamped.
pub struct ConvAutoencoder {
    arch: AeArch,
    layers: AeLayers,
    params: Vec<f32>,
    round_trip_error: f64,
    final_train_loss: f64,
}

impl ConvAutoencoder {
    pub const DOWNSAMPLING: usize = 4;

    pub fn init(arch: AeArch, seed: u64) -> Self {
        let layers = AeLayers::build(&arch);
        let mut params = vec![0.0f32; layers.param_count];
        let mut r = rng::seeded(seed);
        for conv in [
            &layers.enc1, &layers.enc2, &layers.enc3, &layers.enc4, &layers.dec1, &layers.dec2,
            &layers.dec3,
        ] {
            conv.init_params(&mut params, &mut r, 1.0);
        }
        layers.dec4.init_params(&mut params, &mut r, 1.0);
        Self { arch, layers, params, round_trip_error: f64::NAN, final_train_loss: f64::NAN }
    }

    pub fn from_params(
        arch: AeArch,
        params: Vec<f32>,
        round_trip_error: f64,
        final_train_loss: f64,
    ) -> Result<Self> {
        let layers = AeLayers::build(&arch);
        if params.len() != layers.param_count {
            return Err(shape_err!(
                "checkpoint holds {} parameters, architecture needs {}",
                params.len(),
                layers.param_count
            ));
        }
        Ok(Self { arch, layers, params, round_trip_error, final_train_loss })
    }

    pub fn arch(&self) -> &AeArch {
        &self.arch
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.layers.param_count
    }

    /// Held-out relative round-trip error recorded at train time (NaN when
    /// untrained).
    pub fn round_trip_error(&self) -> f64 {
        self.round_trip_error
    }

    pub fn final_train_loss(&self) -> f64 {
        self.final_train_loss
    }

    fn check_image(&self, h: usize, w: usize) -> Result<()> {
        if h % 4 != 0 || w % 4 != 0 || h < 8 || w < 8 {
            return Err(shape_err!("image {h}x{w} incompatible with downsampling factor 4"));
        }
        Ok(())
    }

    fn encode_t3(&self, x: &T3) -> (T3, EncTape) {
        let p = &self.params[..];
        let l = &self.layers;
        let pre1 = l.enc1.forward(p, x);
        let h1 = silu(&pre1);
        let pre2 = l.enc2.forward(p, &h1);
        let h2 = silu(&pre2);
        let pre3 = l.enc3.forward(p, &h2);
        let h3 = silu(&pre3);
        let z = l.enc4.forward(p, &h3);
        (z, EncTape { x: x.clone(), pre1, h1, pre2, h2, pre3, h3 })
    }

    fn encode_backward(&self, tape: &EncTape, dz: &T3, mut grads: Option<&mut [f32]>) -> T3 {
        let p = &self.params[..];
        let l = &self.layers;
        if let Some(g) = grads.as_deref_mut() {
            l.enc4.backward_params(&tape.h3, dz, g);
        }
        let dh3 = l.enc4.backward_input(p, dz, tape.h3.h, tape.h3.w);
        let dpre3 = silu_backward(&tape.pre3, &dh3);
        if let Some(g) = grads.as_deref_mut() {
            l.enc3.backward_params(&tape.h2, &dpre3, g);
        }
        let dh2 = l.enc3.backward_input(p, &dpre3, tape.h2.h, tape.h2.w);
        let dpre2 = silu_backward(&tape.pre2, &dh2);
        if let Some(g) = grads.as_deref_mut() {
            l.enc2.backward_params(&tape.h1, &dpre2, g);
        }
        let dh1 = l.enc2.backward_input(p, &dpre2, tape.h1.h, tape.h1.w);
        let dpre1 = silu_backward(&tape.pre1, &dh1);
        if let Some(g) = grads.as_deref_mut() {
            l.enc1.backward_params(&tape.x, &dpre1, g);
        }
        l.enc1.backward_input(p, &dpre1, tape.x.h, tape.x.w)
    }

    fn decode_t3(&self, z: &T3) -> (T3, DecTape) {
        let p = &self.params[..];
        let l = &self.layers;
        let pre1 = l.dec1.forward(p, z);
        let h1 = silu(&pre1);
        let up1 = upsample2(&h1);
        let pre2 = l.dec2.forward(p, &up1);
        let h2 = silu(&pre2);
        let up2 = upsample2(&h2);
        let pre3 = l.dec3.forward(p, &up2);
        let h3 = silu(&pre3);
        let out = l.dec4.forward(p, &h3);
        (out, DecTape { z: z.clone(), pre1, up1, pre2, up2, pre3, h3 })
    }

    fn decode_backward(&self, tape: &DecTape, dout: &T3, mut grads: Option<&mut [f32]>) -> T3 {
        let p = &self.params[..];
        let l = &self.layers;
        if let Some(g) = grads.as_deref_mut() {
            l.dec4.backward_params(&tape.h3, dout, g);
        }
        let dh3 = l.dec4.backward_input(p, dout, tape.h3.h, tape.h3.w);
        let dpre3 = silu_backward(&tape.pre3, &dh3);
        if let Some(g) = grads.as_deref_mut() {
            l.dec3.backward_params(&tape.up2, &dpre3, g);
        }
        let dup2 = l.dec3.backward_input(p, &dpre3, tape.up2.h, tape.up2.w);
        let dh2 = upsample2_backward(&dup2);
        let dpre2 = silu_backward(&tape.pre2, &dh2);
        if let Some(g) = grads.as_deref_mut() {
            l.dec2.backward_params(&tape.up1, &dpre2, g);
        }
        let dup1 = l.dec2.backward_input(p, &dpre2, tape.up1.h, tape.up1.w);
        let dh1 = upsample2_backward(&dup1);
        let dpre1 = silu_backward(&tape.pre1, &dh1);
        if let Some(g) = grads.as_deref_mut() {
            l.dec1.backward_params(&tape.z, &dpre1, g);
        }
        l.dec1.backward_input(p, &dpre1, tape.z.h, tape.z.w)
    }

    fn check_latent(&self, z: &Latent) -> Result<()> {
        if z.shape().channels != self.arch.latent_channels {
            return Err(shape_err!(
                "latent has {} channels, decoder expects {}",
                z.shape().channels,
                self.arch.latent_channels
            ));
        }
        Ok(())
    }
}

impl Autoencoder for ConvAutoencoder {
    fn latent_shape(&self, height: usize, width: usize) -> Result<LatentShape> {
        self.check_image(height, width)?;
        Ok(LatentShape { channels: self.arch.latent_channels, height: height / 4, width: width / 4 })
    }

    fn encode(&self, x: &RealImage) -> Result<Latent> {
        self.check_image(x.height(), x.width())?;
        let t = T3 {
            c: 1,
            h: x.height(),
            w: x.width(),
            data: x.data().iter().map(|&v| v as f32).collect(),
        };
        let (z, _) = self.encode_t3(&t);
        Ok(z.to_latent())
    }

    fn decode(&self, z: &Latent) -> Result<RealImage> {
        self.check_latent(z)?;
        let (out, _) = self.decode_t3(&T3::from_latent(z));
        RealImage::new(out.h, out.w, out.data.iter().map(|&v| v as f64).collect())
    }

    fn decode_vjp(&self, z: &Latent, cotangent: &RealImage) -> Result<Latent> {
        self.check_latent(z)?;
        let (out, tape) = self.decode_t3(&T3::from_latent(z));
        if out.h != cotangent.height() || out.w != cotangent.width() {
            return Err(shape_err!("cotangent shape differs from decoded image"));
        }
        let dout = T3 {
            c: 1,
            h: out.h,
            w: out.w,
            data: cotangent.data().iter().map(|&v| v as f32).collect(),
        };
        Ok(self.decode_backward(&tape, &dout, None).to_latent())
    }

    fn encode_vjp(&self, x: &RealImage, cotangent: &Latent) -> Result<RealImage> {
        self.check_image(x.height(), x.width())?;
        let t = T3 {
            c: 1,
            h: x.height(),
            w: x.width(),
            data: x.data().iter().map(|&v| v as f32).collect(),
        };
        let (z, tape) = self.encode_t3(&t);
        if cotangent.shape() != (LatentShape { channels: z.c, height: z.h, width: z.w }) {
            return Err(shape_err!("cotangent shape differs from encoded latent"));
        }
        let dx = self.encode_backward(&tape, &T3::from_latent(cotangent), None);
        RealImage::new(dx.h, dx.w, dx.data.iter().map(|&v| v as f64).collect())
    }
}

/// The fixed-point defect `|| encode(decode(z)) - z ||_2^2`, an optional
/// additive term of the data-consistency objective (weight 0 by default).
pub fn fixed_point_penalty(z: &Latent, ae: &dyn Autoencoder) -> Result<f64> {
    let h = ae.encode(&ae.decode(z)?)?;
    if h.shape() != z.shape() {
        return Err(shape_err!("autoencoder round trip changed the latent shape"));
    }
    Ok(h.data().iter().zip(z.data()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Penalty value together with its gradient
/// `2 (J_D^T J_E^T (E(D(z)) - z) - (E(D(z)) - z))`.
pub fn fixed_point_penalty_grad(z: &Latent, ae: &dyn Autoencoder) -> Result<(f64, Latent)> {
    let decoded = ae.decode(z)?;
    let h = ae.encode(&decoded)?;
    if h.shape() != z.shape() {
        return Err(shape_err!("autoencoder round trip changed the latent shape"));
    }
    let r = h.add_scaled(-1.0, z)?;
    let value = r.norm_sq();
    let through = ae.decode_vjp(z, &ae.encode_vjp(&decoded, &r)?)?;
    let grad = through.add_scaled(-1.0, &r)?.scale(2.0);
    Ok((value, grad))
}

/// Train a [`ConvAutoencoder`] on mean squared reconstruction error.
/// Deterministic in the seed; records the final train loss and the held-out
/// relative round-trip error.
pub fn train_autoencoder(
    dataset: &[RealImage],
    arch: AeArch,
    config: &TrainConfig,
    seed: u64,
) -> Result<ConvAutoencoder> {
    if dataset.is_empty() {
        return Err(invalid_arg!("autoencoder training needs a non-empty dataset"));
    }
    if config.batch_size == 0 || config.steps == 0 {
        return Err(invalid_arg!("steps and batch_size must be positive"));
    }
    let (h, w) = (dataset[0].height(), dataset[0].width());
    if !dataset.iter().all(|x| x.height() == h && x.width() == w) {
        return Err(shape_err!("image dataset shapes disagree"));
    }

    let mut model = ConvAutoencoder::init(arch, rng::derive_seed(seed, 0xae00));
    model.check_image(h, w)?;

    // deterministic holdout split
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut split_rng = rng::seeded(rng::derive_seed(seed, 0xae01));
    for i in (1..order.len()).rev() {
        order.swap(i, split_rng.gen_range(0..=i));
    }
    let n_hold = if dataset.len() > 1 {
        ((dataset.len() as f64 * config.holdout_fraction) as usize).min(dataset.len() - 1)
    } else {
        0
    };
    let (hold_idx, train_idx) = order.split_at(n_hold);

    let mut batch_rng = rng::seeded(rng::derive_seed(seed, 0xae02));
    let mut adam = AdamState::<f32>::new(model.param_count(), config.learning_rate as f32);
    let mut grads = vec![0.0f32; model.param_count()];
    let mut loss = f64::NAN;
    let npix = (h * w) as f64;

    for step in 0..config.steps {
        grads.fill(0.0);
        let mut batch_loss = 0.0;
        for _ in 0..config.batch_size {
            let idx = train_idx[batch_rng.gen_range(0..train_idx.len())];
            let x = &dataset[idx];
            let xt = T3 { c: 1, h, w, data: x.data().iter().map(|&v| v as f32).collect() };
            let (z, enc_tape) = model.encode_t3(&xt);
            let (xhat, dec_tape) = model.decode_t3(&z);
            let mut dout = T3::zeros(1, h, w);
            let scale = 2.0 / (npix * config.batch_size as f64);
            let mut item_loss = 0.0;
            for ((d, a), b) in dout.data.iter_mut().zip(&xhat.data).zip(x.data()) {
                let r = *a as f64 - b;
                item_loss += r * r;
                *d = (scale * r) as f32;
            }
            batch_loss += item_loss / npix;
            let dz = model.decode_backward(&dec_tape, &dout, Some(&mut grads));
            model.encode_backward(&enc_tape, &dz, Some(&mut grads));
        }
        loss = batch_loss / config.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite { context: "autoencoder training loss", step });
        }
        crate::score::clip_grad_norm(&mut grads, 1.0);
        adam.learning_rate = crate::score::cosine_lr(config.learning_rate, step, config.steps) as f32;
        adam.step(&mut model.params, &grads)?;
    }

    // recorded round-trip error: held-out images when available, else train
    let eval_idx = if hold_idx.is_empty() { train_idx } else { hold_idx };
    let mut err_sum = 0.0;
    for &i in eval_idx {
        let x = &dataset[i];
        let xhat = model.decode(&model.encode(x)?)?;
        err_sum += xhat.rel_l2_distance(x);
    }
    model.round_trip_error = err_sum / eval_idx.len() as f64;
    model.final_train_loss = loss;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_image(h: usize, w: usize, seed: u64) -> RealImage {
        // smooth bump plus a little texture, values in [0, 1]
        let mut r = rng::seeded(seed);
        let (cy, cx) = (
            h as f64 * (0.4 + 0.2 * rng::standard_normal(&mut r).clamp(-1.0, 1.0) * 0.2),
            w as f64 * (0.5 + 0.2 * rng::standard_normal(&mut r).clamp(-1.0, 1.0) * 0.2),
        );
        let data = (0..h * w)
            .map(|i| {
                let (y, x) = ((i / w) as f64, (i % w) as f64);
                let d2 = ((y - cy) / h as f64).powi(2) + ((x - cx) / w as f64).powi(2);
                (0.8 * libm::exp(-12.0 * d2)).clamp(0.0, 1.0)
            })
            .collect();
        RealImage::new(h, w, data).unwrap()
    }

    #[test]
    fn identity_autoencoder_is_exact() {
        let x = toy_image(8, 8, 1);
        let ae = IdentityAutoencoder;
        let z = ae.encode(&x).unwrap();
        assert_eq!(ae.decode(&z).unwrap(), x);
        assert_eq!(fixed_point_penalty(&z, &ae).unwrap(), 0.0);
    }

    #[test]
    fn conv_autoencoder_latent_shape() {
        let ae = ConvAutoencoder::init(AeArch { base_width: 4, latent_channels: 3 }, 5);
        let s = ae.latent_shape(64, 64).unwrap();
        assert_eq!((s.channels, s.height, s.width), (3, 16, 16));
        let z = ae.encode(&toy_image(16, 16, 2)).unwrap();
        assert_eq!(z.shape(), LatentShape { channels: 3, height: 4, width: 4 });
        let x = ae.decode(&z).unwrap();
        assert_eq!((x.height(), x.width()), (16, 16));
        assert!(ae.latent_shape(30, 64).is_err());
    }

    #[test]
    fn conv_autoencoder_deterministic() {
        let a = ConvAutoencoder::init(AeArch::default(), 9);
        let b = ConvAutoencoder::init(AeArch::default(), 9);
        assert_eq!(a.params(), b.params());
        let x = toy_image(16, 16, 3);
        assert_eq!(a.encode(&x).unwrap(), b.encode(&x).unwrap());
    }

    #[test]
    fn decode_vjp_matches_directional_fd() {
        let ae = ConvAutoencoder::init(AeArch { base_width: 4, latent_channels: 2 }, 17);
        let shape = LatentShape { channels: 2, height: 4, width: 4 };
        let mut r = rng::seeded(18);
        let z = Latent::standard_normal(shape, &mut r);
        let dir = Latent::standard_normal(shape, &mut r);
        let cot_data: Vec<f64> = (0..16 * 16).map(|_| rng::standard_normal(&mut r)).collect();
        let cot = RealImage::new(16, 16, cot_data).unwrap();

        let h = 1e-3;
        let f = |zz: &Latent| -> f64 {
            ae.decode(zz)
                .unwrap()
                .data()
                .iter()
                .zip(cot.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let fd = (f(&z.add_scaled(h, &dir).unwrap()) - f(&z.add_scaled(-h, &dir).unwrap()))
            / (2.0 * h);
        let vjp = ae.decode_vjp(&z, &cot).unwrap();
        let analytic: f64 = vjp.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        assert!((fd - analytic).abs() < 2e-2 * analytic.abs().max(0.1), "{fd} vs {analytic}");
    }

    #[test]
    fn training_collapses_on_constant_dataset() {
        let x = RealImage::new(16, 16, vec![0.5; 256]).unwrap();
        let config =
            TrainConfig { steps: 300, batch_size: 2, learning_rate: 5e-3, holdout_fraction: 0.0 };
        let ae = train_autoencoder(
            &[x.clone(), x.clone()],
            AeArch { base_width: 4, latent_channels: 2 },
            &config,
            4,
        )
        .unwrap();
        let xhat = ae.decode(&ae.encode(&x).unwrap()).unwrap();
        let mse: f64 = xhat
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 256.0;
        assert!(mse < 1e-3, "mse {mse}");
        assert!(ae.round_trip_error().is_finite());
    }

    #[test]
    fn training_deterministic_and_rejects_empty() {
        let imgs: Vec<RealImage> = (0..6).map(|i| toy_image(16, 16, 40 + i)).collect();
        let config =
            TrainConfig { steps: 30, batch_size: 2, learning_rate: 2e-3, holdout_fraction: 0.2 };
        let arch = AeArch { base_width: 4, latent_channels: 2 };
        let a = train_autoencoder(&imgs, arch, &config, 7).unwrap();
        let b = train_autoencoder(&imgs, arch, &config, 7).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.round_trip_error(), b.round_trip_error());
        assert!(train_autoencoder(&[], arch, &config, 7).is_err());
    }

    #[test]
    fn fixed_point_penalty_nonnegative_and_gradient_checks() {
        let ae = ConvAutoencoder::init(AeArch { base_width: 4, latent_channels: 2 }, 23);
        let shape = LatentShape { channels: 2, height: 4, width: 4 };
        let mut r = rng::seeded(24);
        let z = Latent::standard_normal(shape, &mut r);
        let (value, grad) = fixed_point_penalty_grad(&z, &ae).unwrap();
        assert!(value >= 0.0);
        assert!((value - fixed_point_penalty(&z, &ae).unwrap()).abs() < 1e-12);

        let dir = Latent::standard_normal(shape, &mut r);
        let h = 1e-3;
        let fp = fixed_point_penalty(&z.add_scaled(h, &dir).unwrap(), &ae).unwrap();
        let fm = fixed_point_penalty(&z.add_scaled(-h, &dir).unwrap(), &ae).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let analytic: f64 = grad.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        assert!((fd - analytic).abs() < 2e-2 * analytic.abs().max(0.1), "{fd} vs {analytic}");
    }
}
