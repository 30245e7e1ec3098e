//! On-disk formats: raw little-endian f32 blobs with JSON sidecars for
//! arrays, JSON for masks and manifests, and binary parameter blobs with
//! JSON manifests for model checkpoints. PGM (8/16-bit binary) import is
//! supported for external images.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use pips_core::autoencoder::{AeArch, ConvAutoencoder};
use pips_core::forward::{CoilSensitivityMaps, KSpaceData, SamplingMask};
use pips_core::image::{ComplexImage, RealImage};
use pips_core::phantom::{center_crop_pad, normalize_unit_range};
use pips_core::schedule::NoiseSchedule;
use pips_core::score::{ConvScoreModel, ScoreArch, TrainConfig};

/// Array sidecar: shape, element type and layout of the companion `.bin`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ArraySidecar {
    pub shape: Vec<usize>,
    pub dtype: String, // "f32" | "c64"
    pub layout: String,
}

fn blob_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("bin"), base.with_extension("json"))
}

fn write_f32_blob(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_f32_blob(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() % 4 != 0 {
        bail!("{}: length {} is not a multiple of 4", path.display(), bytes.len());
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn write_sidecar(path: &Path, sidecar: &ArraySidecar) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(sidecar)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_sidecar(path: &Path) -> Result<ArraySidecar> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Write a real image as `<base>.bin` + `<base>.json`.
pub fn write_real_image(base: &Path, image: &RealImage) -> Result<()> {
    let (bin, json) = blob_paths(base);
    write_f32_blob(&bin, image.data().iter().map(|&v| v as f32))?;
    write_sidecar(
        &json,
        &ArraySidecar {
            shape: vec![image.height(), image.width()],
            dtype: "f32".into(),
            layout: "row-major".into(),
        },
    )
}

pub fn read_real_image(base: &Path) -> Result<RealImage> {
    let (bin, json) = blob_paths(base);
    let sidecar = read_sidecar(&json)?;
    if sidecar.dtype != "f32" || sidecar.shape.len() != 2 {
        bail!("{}: expected a 2-D f32 array", json.display());
    }
    let data = read_f32_blob(&bin)?;
    let (h, w) = (sidecar.shape[0], sidecar.shape[1]);
    if data.len() != h * w {
        bail!("{}: {} values for shape {}x{}", bin.display(), data.len(), h, w);
    }
    RealImage::new(h, w, data.into_iter().map(|v| v as f64).collect())
        .map_err(|e| anyhow::anyhow!("{}: {e}", bin.display()))
}

fn complex_to_f32(values: &[Complex64]) -> impl Iterator<Item = f32> + '_ {
    values.iter().flat_map(|v| [v.re as f32, v.im as f32])
}

fn f32_to_complex(values: &[f32]) -> Vec<Complex64> {
    values.chunks_exact(2).map(|c| Complex64::new(c[0] as f64, c[1] as f64)).collect()
}

/// Write a stack of complex planes as interleaved re/im f32.
pub fn write_complex_stack(base: &Path, planes: &[ComplexImage]) -> Result<()> {
    let (bin, json) = blob_paths(base);
    let mut bytes = Vec::new();
    for plane in planes {
        for v in complex_to_f32(plane.data()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&bin, bytes).with_context(|| format!("writing {}", bin.display()))?;
    write_sidecar(
        &json,
        &ArraySidecar {
            shape: vec![planes.len(), planes[0].height(), planes[0].width()],
            dtype: "c64".into(),
            layout: "row-major".into(),
        },
    )
}

pub fn read_complex_stack(base: &Path) -> Result<Vec<ComplexImage>> {
    let (bin, json) = blob_paths(base);
    let sidecar = read_sidecar(&json)?;
    if sidecar.dtype != "c64" || sidecar.shape.len() != 3 {
        bail!("{}: expected a 3-D c64 array", json.display());
    }
    let raw = read_f32_blob(&bin)?;
    let (c, h, w) = (sidecar.shape[0], sidecar.shape[1], sidecar.shape[2]);
    if raw.len() != 2 * c * h * w {
        bail!("{}: {} floats for shape {c}x{h}x{w} c64", bin.display(), raw.len());
    }
    let all = f32_to_complex(&raw);
    all.chunks_exact(h * w)
        .map(|chunk| {
            ComplexImage::new(h, w, chunk.to_vec())
                .map_err(|e| anyhow::anyhow!("{}: {e}", bin.display()))
        })
        .collect()
}

pub fn write_coil_maps(base: &Path, maps: &CoilSensitivityMaps) -> Result<()> {
    write_complex_stack(base, maps.coils())
}

pub fn read_coil_maps(base: &Path) -> Result<CoilSensitivityMaps> {
    let planes = read_complex_stack(base)?;
    // profiles were normalized when generated; do not renormalize here
    CoilSensitivityMaps::new(planes, false).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Mask serialization: kept row indices plus the generation parameters.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaskFile {
    pub height: usize,
    pub width: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub kept_rows: Vec<usize>,
}

pub fn write_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    let file = MaskFile {
        height: mask.height(),
        width: mask.width(),
        acceleration: mask.acceleration(),
        center_fraction: mask.center_fraction(),
        kept_rows: mask.kept_rows(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: MaskFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    SamplingMask::from_kept_rows(
        file.height,
        file.width,
        &file.kept_rows,
        file.acceleration,
        file.center_fraction,
    )
    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn write_kspace(base: &Path, kspace: &KSpaceData) -> Result<()> {
    write_complex_stack(base, kspace.coils())
}

pub fn read_kspace(base: &Path, mask: &SamplingMask) -> Result<KSpaceData> {
    let planes = read_complex_stack(base)?;
    KSpaceData::new(planes, mask.clone()).map_err(|e| anyhow::anyhow!("{}: {e}", base.display()))
}

#[derive(Debug, Serialize, Deserialize, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { steps: 1000, beta_start: 1e-4, beta_end: 0.02 }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
            .map_err(|e| anyhow::anyhow!("schedule: {e}"))
    }
}

#[derive(Debug, Serialize, Deserialize, Clone, Copy, PartialEq)]
pub struct TrainSpec {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
}

impl From<TrainSpec> for TrainConfig {
    fn from(s: TrainSpec) -> Self {
        TrainConfig {
            steps: s.steps,
            batch_size: s.batch_size,
            learning_rate: s.learning_rate,
            holdout_fraction: s.holdout_fraction,
        }
    }
}

/// Score-model checkpoint manifest; the parameter blob sits next to it.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreManifest {
    pub kind: String,
    pub latent_channels: usize,
    pub base_width: usize,
    pub time_embed_dim: usize,
    pub schedule: ScheduleSpec,
    pub train: TrainSpec,
    pub seed: u64,
    pub final_loss: f64,
    pub param_count: usize,
}

pub fn write_score_checkpoint(
    base: &Path,
    model: &ConvScoreModel,
    schedule: ScheduleSpec,
    train: TrainSpec,
    seed: u64,
) -> Result<()> {
    let (bin, json) = blob_paths(base);
    write_f32_blob(&bin, model.params().iter().copied())?;
    let manifest = ScoreManifest {
        kind: "score".into(),
        latent_channels: model.arch().latent_channels,
        base_width: model.arch().base_width,
        time_embed_dim: model.arch().time_embed_dim,
        schedule,
        train,
        seed,
        final_loss: model.final_loss(),
        param_count: model.param_count(),
    };
    fs::write(&json, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", json.display()))?;
    Ok(())
}

pub fn read_score_checkpoint(base: &Path) -> Result<(ConvScoreModel, ScoreManifest)> {
    let (bin, json) = blob_paths(base);
    let text = fs::read_to_string(&json).with_context(|| format!("reading {}", json.display()))?;
    let manifest: ScoreManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", json.display()))?;
    if manifest.kind != "score" {
        bail!("{}: not a score checkpoint", json.display());
    }
    let params = read_f32_blob(&bin)?;
    let arch = ScoreArch {
        latent_channels: manifest.latent_channels,
        base_width: manifest.base_width,
        time_embed_dim: manifest.time_embed_dim,
    };
    let model = ConvScoreModel::from_params(arch, params, manifest.final_loss)
        .map_err(|e| anyhow::anyhow!("{}: {e}", bin.display()))?;
    Ok((model, manifest))
}

/// Autoencoder checkpoint manifest.
#[derive(Debug, Serialize, Deserialize)]
pub struct AeManifest {
    pub kind: String,
    pub base_width: usize,
    pub latent_channels: usize,
    pub downsampling: usize,
    pub train: TrainSpec,
    pub seed: u64,
    pub final_train_loss: f64,
    pub round_trip_error: f64,
    pub param_count: usize,
}

pub fn write_ae_checkpoint(
    base: &Path,
    model: &ConvAutoencoder,
    train: TrainSpec,
    seed: u64,
) -> Result<()> {
    let (bin, json) = blob_paths(base);
    write_f32_blob(&bin, model.params().iter().copied())?;
    let manifest = AeManifest {
        kind: "autoencoder".into(),
        base_width: model.arch().base_width,
        latent_channels: model.arch().latent_channels,
        downsampling: ConvAutoencoder::DOWNSAMPLING,
        train,
        seed,
        final_train_loss: model.final_train_loss(),
        round_trip_error: model.round_trip_error(),
        param_count: model.param_count(),
    };
    fs::write(&json, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", json.display()))?;
    Ok(())
}

pub fn read_ae_checkpoint(base: &Path) -> Result<(ConvAutoencoder, AeManifest)> {
    let (bin, json) = blob_paths(base);
    let text = fs::read_to_string(&json).with_context(|| format!("reading {}", json.display()))?;
    let manifest: AeManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", json.display()))?;
    if manifest.kind != "autoencoder" {
        bail!("{}: not an autoencoder checkpoint", json.display());
    }
    let params = read_f32_blob(&bin)?;
    let arch =
        AeArch { base_width: manifest.base_width, latent_channels: manifest.latent_channels };
    let model = ConvAutoencoder::from_params(
        arch,
        params,
        manifest.round_trip_error,
        manifest.final_train_loss,
    )
    .map_err(|e| anyhow::anyhow!("{}: {e}", bin.display()))?;
    Ok((model, manifest))
}

/// Load an external image (raw f32 + sidecar, or binary PGM), normalize it to
/// `[0, 1]` (values already in range pass through; constant out-of-range
/// images map to zero) and center-crop/pad to the target size.
pub fn import_image(path: &Path, height: usize, width: usize) -> Result<RealImage> {
    let is_pgm = path.extension().map(|e| e.eq_ignore_ascii_case("pgm")).unwrap_or(false);
    let img = if is_pgm {
        read_pgm(path)?
    } else {
        read_real_image(&path.with_extension(""))?
    };
    let (h, w) = (img.height(), img.width());
    let mut data = img.into_data();
    normalize_unit_range(&mut data);
    let img = RealImage::new(h, w, data).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(center_crop_pad(&img, height, width))
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    // skip whitespace and comment lines
    while *pos < bytes.len() {
        if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        bail!("truncated PGM header");
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Binary PGM (P5), 8-bit or 16-bit big-endian samples, scaled by maxval.
pub fn read_pgm(path: &Path) -> Result<RealImage> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pos = 0usize;

    let magic = pgm_token(&bytes, &mut pos)?;
    if magic != "P5" {
        bail!("{}: unsupported PGM magic {magic:?} (only binary P5)", path.display());
    }
    let width: usize = pgm_token(&bytes, &mut pos)?.parse().context("PGM width")?;
    let height: usize = pgm_token(&bytes, &mut pos)?.parse().context("PGM height")?;
    let maxval: usize = pgm_token(&bytes, &mut pos)?.parse().context("PGM maxval")?;
    pos += 1; // single whitespace after maxval
    if maxval == 0 || maxval > 65535 {
        bail!("{}: invalid PGM maxval {maxval}", path.display());
    }

    let n = height * width;
    let data: Vec<f64> = if maxval <= 255 {
        if bytes.len() < pos + n {
            bail!("{}: truncated 8-bit PGM payload", path.display());
        }
        bytes[pos..pos + n].iter().map(|&b| b as f64 / maxval as f64).collect()
    } else {
        if bytes.len() < pos + 2 * n {
            bail!("{}: truncated 16-bit PGM payload", path.display());
        }
        bytes[pos..pos + 2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
            .collect()
    };
    RealImage::new(height, width, data).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}
