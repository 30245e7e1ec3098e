//! Pipeline stages: dataset simulation, model training, reconstruction jobs
//! (with a worker pool), and report assembly.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

use pips_core::autoencoder::{train_autoencoder, Autoencoder};
use pips_core::forward::{add_measurement_noise, apply_forward};
use pips_core::image::RealImage;
use pips_core::latent::Latent;
use pips_core::metrics::{grouped_report, segment_patches, MetricsReport};
use pips_core::phantom::{
    make_coil_maps, make_longitudinal_pair, make_phantom, random_lesion_in_patch, ChangeSpec,
    Lesion,
};
use pips_core::recon::{cg_prior, ldps, pips, zero_filled, ReconResult};
use pips_core::rng::{self, derive_seed};
use pips_core::score::{train_score_model, ScoreArch};
use pips_core::{forward::SamplingMask, schedule::NoiseSchedule};

use crate::config::{dc_strategy_from_name, ExperimentConfig, KNOWN_METHODS};
use crate::io;

// seed stream tags, one per pipeline stage
const STREAM_TRAIN_IMAGES: u64 = 0x0001;
const STREAM_PAIRS: u64 = 0x0002;
const STREAM_COILS: u64 = 0x0003;
const STREAM_NOISE: u64 = 0x0004;
const STREAM_LESION: u64 = 0x0005;
const STREAM_TRAIN_AE: u64 = 0x0006;
const STREAM_TRAIN_SCORE: u64 = 0x0007;
const STREAM_RECON: u64 = 0x0008;

pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn recon(&self) -> PathBuf {
        self.root.join("recon")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data().join("manifest.json")
    }

    pub fn ae_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("ae")
    }

    pub fn score_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("score")
    }
}

fn r_tag(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{}", r as i64)
    } else {
        format!("{r}").replace('.', "p")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LesionSpec {
    pub center_row: f64,
    pub center_col: f64,
    pub radius: f64,
    pub delta: f64,
    /// Patch (row, col) indices this lesion was placed in.
    pub patch: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: usize,
    pub seed: u64,
    pub prior: PathBuf,
    pub current: PathBuf,
    pub change_mask: PathBuf,
    pub lesions: Vec<LesionSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KspaceEntry {
    pub pair_id: usize,
    pub r: f64,
    pub path: PathBuf,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

/// Everything `simulate` wrote, with the seeds that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub num_coils: usize,
    pub train_images: Vec<PathBuf>,
    pub pairs: Vec<PairEntry>,
    pub coil_maps: PathBuf,
    pub masks: Vec<(f64, PathBuf)>,
    pub kspace: Vec<KspaceEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn mask_for(&self, r: f64) -> Result<&PathBuf> {
        self.masks
            .iter()
            .find(|(rv, _)| *rv == r)
            .map(|(_, p)| p)
            .ok_or_else(|| anyhow::anyhow!("no mask for R = {r}"))
    }
}

/// Generate phantoms, longitudinal pairs, coil maps, masks and noisy k-space.
/// Deterministic in the seed; rerunning overwrites with identical bytes.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let started = Instant::now();
    let layout = OutputLayout::new(&cfg.out_dir);
    fs::create_dir_all(layout.data()).context("creating data directory")?;
    let (h, w) = (cfg.image.height, cfg.image.width);
    let s = &cfg.simulate;

    let train_stream = derive_seed(cfg.seed, STREAM_TRAIN_IMAGES);
    let mut train_images = Vec::with_capacity(s.num_train);
    for i in 0..s.num_train {
        let img = make_phantom(derive_seed(train_stream, i as u64), h, w, s.complexity)
            .map_err(|e| anyhow::anyhow!("phantom {i}: {e}"))?;
        let base = layout.data().join(format!("train_{i:04}"));
        io::write_real_image(&base, &img)?;
        train_images.push(base);
    }

    let patch = cfg.evaluate.patch_size;
    let pair_stream = derive_seed(cfg.seed, STREAM_PAIRS);
    let lesion_stream = derive_seed(cfg.seed, STREAM_LESION);
    let mut pairs = Vec::with_capacity(s.num_pairs);
    for p in 0..s.num_pairs {
        let pair_seed = derive_seed(pair_stream, p as u64);
        let mut lesion_rng = rng::seeded(derive_seed(lesion_stream, p as u64));
        let mut lesions: Vec<Lesion> = Vec::new();
        let mut specs = Vec::new();
        for _ in 0..s.lesions_per_pair {
            let (lesion, patch_idx) = place_verified_lesion(
                pair_seed,
                h,
                w,
                s.complexity,
                &lesions,
                &mut lesion_rng,
                patch,
                s.lesion_radius,
                s.lesion_delta,
                cfg.evaluate.ncc_threshold,
            )
            .map_err(|e| anyhow::anyhow!("pair {p}: {e}"))?;
            specs.push(LesionSpec {
                center_row: lesion.center.0,
                center_col: lesion.center.1,
                radius: lesion.radius,
                delta: lesion.delta,
                patch: patch_idx,
            });
            lesions.push(lesion);
        }
        let pair = make_longitudinal_pair(pair_seed, h, w, s.complexity, &ChangeSpec { lesions })
            .map_err(|e| anyhow::anyhow!("pair {p}: {e}"))?;
        let prior_base = layout.data().join(format!("pair_{p:04}_prior"));
        let current_base = layout.data().join(format!("pair_{p:04}_current"));
        let mask_base = layout.data().join(format!("pair_{p:04}_change"));
        io::write_real_image(&prior_base, &pair.prior)?;
        io::write_real_image(&current_base, &pair.current)?;
        let mask_img = RealImage::new(
            h,
            w,
            pair.change_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .map_err(|e| anyhow::anyhow!("change mask {p}: {e}"))?;
        io::write_real_image(&mask_base, &mask_img)?;
        pairs.push(PairEntry {
            id: p,
            seed: pair_seed,
            prior: prior_base,
            current: current_base,
            change_mask: mask_base,
            lesions: specs,
        });
    }

    let maps = make_coil_maps(s.num_coils, h, w, derive_seed(cfg.seed, STREAM_COILS))
        .map_err(|e| anyhow::anyhow!("coil maps: {e}"))?;
    let maps_base = layout.data().join("coil_maps");
    io::write_coil_maps(&maps_base, &maps)?;

    let mut masks = Vec::new();
    for &r in &s.r_values {
        let mask = SamplingMask::uniform(h, w, r, s.center_fraction, s.mask_offset)
            .map_err(|e| anyhow::anyhow!("mask R={r}: {e}"))?;
        let path = layout.data().join(format!("mask_r{}.json", r_tag(r)));
        io::write_mask(&path, &mask)?;
        masks.push((r, path));
    }

    let noise_stream = derive_seed(cfg.seed, STREAM_NOISE);
    let mut kspace = Vec::new();
    for pair in &pairs {
        let current = io::read_real_image(&pair.current)?;
        for (r, mask_path) in &masks {
            let mask = io::read_mask(mask_path)?;
            let clean = apply_forward(&current, &maps, &mask)
                .map_err(|e| anyhow::anyhow!("k-space pair {} R={r}: {e}", pair.id))?;
            let noise_seed =
                derive_seed(noise_stream, ((pair.id as u64) << 16) ^ ((*r * 16.0) as u64));
            let noisy = add_measurement_noise(&clean, s.noise_sigma, noise_seed)
                .map_err(|e| anyhow::anyhow!("noise pair {} R={r}: {e}", pair.id))?;
            let base = layout.data().join(format!("kspace_pair{:04}_r{}", pair.id, r_tag(*r)));
            io::write_kspace(&base, &noisy)?;
            kspace.push(KspaceEntry {
                pair_id: pair.id,
                r: *r,
                path: base,
                noise_sigma: s.noise_sigma,
                noise_seed,
            });
        }
    }

    let manifest = DatasetManifest {
        seed: cfg.seed,
        height: h,
        width: w,
        num_coils: s.num_coils,
        train_images,
        pairs,
        coil_maps: maps_base,
        masks,
        kspace,
    };
    fs::write(layout.manifest(), serde_json::to_string_pretty(&manifest)?)
        .context("writing manifest")?;
    eprintln!(
        "simulate: {} train images, {} pairs, {} k-space files in {:.1}s",
        s.num_train,
        s.num_pairs,
        manifest.kspace.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(manifest)
}

/// Train the autoencoder on the simulated training images.
pub fn cmd_train_ae(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let started = Instant::now();
    let layout = OutputLayout::new(&cfg.out_dir);
    let manifest = DatasetManifest::load(&layout.manifest())?;
    if manifest.train_images.is_empty() {
        bail!("train_ae: dataset has no training images");
    }
    let images: Vec<RealImage> = manifest
        .train_images
        .iter()
        .map(|p| io::read_real_image(p))
        .collect::<Result<_>>()?;
    let arch = pips_core::autoencoder::AeArch {
        base_width: cfg.train_ae.arch.base_width,
        latent_channels: cfg.train_ae.arch.latent_channels,
    };
    let seed = derive_seed(cfg.seed, STREAM_TRAIN_AE);
    let model = train_autoencoder(&images, arch, &cfg.train_ae.train_spec().into(), seed)
        .map_err(|e| anyhow::anyhow!("train_ae: {e}"))?;
    fs::create_dir_all(layout.checkpoints()).context("creating checkpoints directory")?;
    io::write_ae_checkpoint(&layout.ae_checkpoint(), &model, cfg.train_ae.train_spec(), seed)?;
    eprintln!(
        "train-ae: {} params, round-trip error {:.4}, final loss {:.3e} in {:.1}s",
        model.param_count(),
        model.round_trip_error(),
        model.final_train_loss(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Train the score model on the autoencoder latents of the training images.
pub fn cmd_train_score(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let started = Instant::now();
    let layout = OutputLayout::new(&cfg.out_dir);
    let manifest = DatasetManifest::load(&layout.manifest())?;
    let (ae, _) = io::read_ae_checkpoint(&layout.ae_checkpoint())
        .context("train_score needs the autoencoder checkpoint (run train-ae first)")?;
    if cfg.train_score.arch.latent_channels != ae.arch().latent_channels {
        bail!(
            "train_score.arch.latent_channels {} != autoencoder latent_channels {}",
            cfg.train_score.arch.latent_channels,
            ae.arch().latent_channels
        );
    }
    let latents: Vec<Latent> = manifest
        .train_images
        .iter()
        .map(|p| {
            let img = io::read_real_image(p)?;
            ae.encode(&img).map_err(|e| anyhow::anyhow!("encode {}: {e}", p.display()))
        })
        .collect::<Result<_>>()?;
    let schedule = cfg.schedule.build()?;
    let arch = ScoreArch {
        latent_channels: cfg.train_score.arch.latent_channels,
        base_width: cfg.train_score.arch.base_width,
        time_embed_dim: cfg.train_score.arch.time_embed_dim,
    };
    let seed = derive_seed(cfg.seed, STREAM_TRAIN_SCORE);
    let model =
        train_score_model(&latents, &schedule, arch, &cfg.train_score.train_spec().into(), seed)
            .map_err(|e| anyhow::anyhow!("train_score: {e}"))?;
    io::write_score_checkpoint(
        &layout.score_checkpoint(),
        &model,
        cfg.schedule,
        cfg.train_score.train_spec(),
        seed,
    )?;
    eprintln!(
        "train-score: {} params, final loss {:.4} in {:.1}s",
        model.param_count(),
        model.final_loss(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

/// A single reconstruction job: artifact paths, method, hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct JobFile {
    pub method: String,
    pub kspace: PathBuf,
    pub mask: PathBuf,
    pub maps: PathBuf,
    pub prior: Option<PathBuf>,
    pub score_checkpoint: Option<PathBuf>,
    pub ae_checkpoint: Option<PathBuf>,
    pub t_p: usize,
    pub n_opt: usize,
    pub dc_learning_rate: f64,
    pub fixed_point_weight: f64,
    pub rng_seed: u64,
    pub dc_strategy: String,
    pub cg_lambda: f64,
    pub cg_lambda_p: f64,
    pub cg_max_iters: usize,
    pub cg_tol: f64,
    pub output: PathBuf,
}

impl Default for JobFile {
    fn default() -> Self {
        Self {
            method: String::new(),
            kspace: PathBuf::new(),
            mask: PathBuf::new(),
            maps: PathBuf::new(),
            prior: None,
            score_checkpoint: None,
            ae_checkpoint: None,
            t_p: 200,
            n_opt: 10,
            dc_learning_rate: 5e-2,
            fixed_point_weight: 0.0,
            rng_seed: 0,
            dc_strategy: "gradient".into(),
            cg_lambda: 0.01,
            cg_lambda_p: 0.3,
            cg_max_iters: 200,
            cg_tol: 1e-8,
            output: PathBuf::new(),
        }
    }
}

/// Trace sidecar written next to every reconstruction.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReconTrace {
    pub method: String,
    pub rng_seed: u64,
    pub t_p: usize,
    pub n_opt: usize,
    pub dc_learning_rate: f64,
    pub fixed_point_weight: f64,
    pub dc_strategy: String,
    pub dc_trace: Vec<f64>,
}

/// Run one job file: load artifacts, dispatch on the method, write the
/// reconstructed image and its trace sidecar.
pub fn cmd_reconstruct(job_path: &Path) -> Result<()> {
    let text = fs::read_to_string(job_path)
        .with_context(|| format!("reading {}", job_path.display()))?;
    let job: JobFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", job_path.display()))?;
    run_job(&job)
}

pub fn run_job(job: &JobFile) -> Result<()> {
    if !KNOWN_METHODS.contains(&job.method.as_str()) {
        bail!("unknown method {:?}", job.method);
    }
    let mask = io::read_mask(&job.mask)?;
    let maps = io::read_coil_maps(&job.maps)?;
    let y = io::read_kspace(&job.kspace, &mask)?;
    let started = Instant::now();

    let need_prior = || -> Result<RealImage> {
        let p = job
            .prior
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("method {:?} needs a prior image", job.method))?;
        io::read_real_image(p)
    };

    let (image, trace): (RealImage, Vec<f64>) = match job.method.as_str() {
        "zero_filled" => {
            let img = zero_filled(&y, &maps).map_err(|e| anyhow::anyhow!("zero_filled: {e}"))?;
            (img, Vec::new())
        }
        "cg_prior" => {
            let prior = need_prior()?;
            let img = cg_prior(
                &y,
                &maps,
                &prior,
                job.cg_lambda,
                job.cg_lambda_p,
                job.cg_max_iters,
                job.cg_tol,
            )
            .map_err(|e| anyhow::anyhow!("cg_prior: {e}"))?;
            (img, Vec::new())
        }
        method @ ("pips" | "ldps") => {
            let score_path = job
                .score_checkpoint
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("method {method:?} needs a score checkpoint"))?;
            let ae_path = job
                .ae_checkpoint
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("method {method:?} needs an autoencoder checkpoint"))?;
            let (model, score_manifest) = io::read_score_checkpoint(score_path)?;
            let (ae, ae_manifest) = io::read_ae_checkpoint(ae_path)?;
            if ae_manifest.latent_channels != score_manifest.latent_channels {
                bail!(
                    "checkpoint mismatch: autoencoder latents {} vs score model latents {}",
                    ae_manifest.latent_channels,
                    score_manifest.latent_channels
                );
            }
            let schedule: NoiseSchedule = score_manifest.schedule.build()?;
            let config = pips_core::recon::ReconConfig {
                t_p: job.t_p,
                n_opt: job.n_opt,
                dc_learning_rate: job.dc_learning_rate,
                fixed_point_weight: job.fixed_point_weight,
                rng_seed: job.rng_seed,
                dc_strategy: dc_strategy_from_name(&job.dc_strategy)?,
            };
            let result: ReconResult = if method == "pips" {
                let prior = need_prior()?;
                pips(&y, &maps, &mask, &prior, &model, &ae, &schedule, &config)
                    .map_err(|e| anyhow::anyhow!("pips: {e}"))?
            } else {
                ldps(&y, &maps, &mask, &model, &ae, &schedule, &config)
                    .map_err(|e| anyhow::anyhow!("ldps: {e}"))?
            };
            (result.image, result.dc_trace)
        }
        _ => unreachable!("method list checked above"),
    };

    if let Some(dir) = job.output.parent() {
        fs::create_dir_all(dir).context("creating output directory")?;
    }
    io::write_real_image(&job.output, &image)?;
    let trace_path = job.output.with_extension("trace.json");
    let trace = ReconTrace {
        method: job.method.clone(),
        rng_seed: job.rng_seed,
        t_p: job.t_p,
        n_opt: job.n_opt,
        dc_learning_rate: job.dc_learning_rate,
        fixed_point_weight: job.fixed_point_weight,
        dc_strategy: job.dc_strategy.clone(),
        dc_trace: trace,
    };
    fs::write(&trace_path, serde_json::to_string_pretty(&trace)?)
        .with_context(|| format!("writing {}", trace_path.display()))?;
    eprintln!(
        "reconstruct {} -> {} ({:.1}s)",
        job.method,
        job.output.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn method_tag(name: &str) -> u64 {
    // FNV-1a, so job seeds do not depend on method order in the config
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Build the job list of the full sweep: every configured method against
/// every (pair, R) measurement.
pub fn make_jobs(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<Vec<JobFile>> {
    let layout = OutputLayout::new(&cfg.out_dir);
    let mut jobs = Vec::new();
    for entry in &manifest.kspace {
        let pair = &manifest.pairs[entry.pair_id];
        let mask_path = manifest.mask_for(entry.r)?;
        for method in &cfg.reconstruct.methods {
            let rng_seed = derive_seed(
                derive_seed(cfg.seed, STREAM_RECON),
                method_tag(method) ^ ((entry.pair_id as u64) << 20) ^ ((entry.r * 16.0) as u64),
            );
            let output = layout
                .recon()
                .join(format!("{}_r{}_pair{:04}", method, r_tag(entry.r), entry.pair_id));
            jobs.push(JobFile {
                method: method.clone(),
                kspace: entry.path.clone(),
                mask: mask_path.clone(),
                maps: manifest.coil_maps.clone(),
                prior: Some(pair.prior.clone()),
                score_checkpoint: Some(layout.score_checkpoint()),
                ae_checkpoint: Some(layout.ae_checkpoint()),
                t_p: cfg.reconstruct.t_p,
                n_opt: cfg.reconstruct.n_opt,
                dc_learning_rate: cfg.reconstruct.dc_learning_rate,
                fixed_point_weight: cfg.reconstruct.fixed_point_weight,
                rng_seed,
                dc_strategy: cfg.reconstruct.dc_strategy.clone(),
                cg_lambda: cfg.reconstruct.cg_lambda,
                cg_lambda_p: cfg.reconstruct.cg_lambda_p,
                cg_max_iters: cfg.reconstruct.cg_max_iters,
                cg_tol: cfg.reconstruct.cg_tol,
                output,
            });
        }
    }
    Ok(jobs)
}

/// Run jobs on a fixed-width worker pool. Each job is independent and writes
/// only its own artifacts, so scheduling order does not affect the output.
pub fn run_jobs(jobs: &[JobFile], workers: usize) -> Result<()> {
    let next = AtomicUsize::new(0);
    let failures = std::sync::Mutex::new(Vec::<String>::new());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                if let Err(e) = run_job(&jobs[i]) {
                    failures
                        .lock()
                        .unwrap()
                        .push(format!("{} ({}): {e:#}", jobs[i].method, jobs[i].output.display()));
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        bail!("{} job(s) failed:\n{}", failures.len(), failures.join("\n"));
    }
    Ok(())
}

/// One CSV/JSON row of the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub r: f64,
    pub pair_id: usize,
    pub psnr_similar: Option<f64>,
    pub psnr_dissimilar: Option<f64>,
    pub ssim_similar: Option<f64>,
    pub ssim_dissimilar: Option<f64>,
    pub num_similar: usize,
    pub num_dissimilar: usize,
    pub fraction_similar: f64,
    pub psnr_overall: f64,
    pub ssim_overall: f64,
}

pub const CSV_HEADER: &str = "method,r,pair_id,psnr_similar,psnr_dissimilar,ssim_similar,\
ssim_dissimilar,num_similar,num_dissimilar,fraction_similar,psnr_overall,ssim_overall";

fn csv_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Score every reconstruction in the sweep against its ground truth with the
/// patch-grouped protocol; write `metrics.csv` and `metrics.json`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let layout = OutputLayout::new(&cfg.out_dir);
    let manifest = DatasetManifest::load(&layout.manifest())?;
    fs::create_dir_all(layout.reports()).context("creating reports directory")?;

    let mut rows = Vec::new();
    for entry in &manifest.kspace {
        let pair = &manifest.pairs[entry.pair_id];
        let prior = io::read_real_image(&pair.prior)?;
        let current = io::read_real_image(&pair.current)
            .with_context(|| format!("ground truth for pair {}", pair.id))?;
        let grouping = segment_patches(
            &prior,
            &current,
            cfg.evaluate.patch_size,
            cfg.evaluate.ncc_threshold,
        )
        .map_err(|e| anyhow::anyhow!("segment pair {}: {e}", pair.id))?;
        for method in &cfg.reconstruct.methods {
            let base = layout
                .recon()
                .join(format!("{}_r{}_pair{:04}", method, r_tag(entry.r), entry.pair_id));
            let recon = io::read_real_image(&base)
                .with_context(|| format!("reconstruction {}", base.display()))?;
            // metrics are computed on the clamped image; reconstructions
            // themselves stay unclamped on disk
            let report: MetricsReport = grouped_report(&recon.clamped_unit(), &current, &grouping)
                .map_err(|e| anyhow::anyhow!("report {}: {e}", base.display()))?;
            rows.push(ReportRow {
                method: method.clone(),
                r: entry.r,
                pair_id: entry.pair_id,
                psnr_similar: report.psnr_similar,
                psnr_dissimilar: report.psnr_dissimilar,
                ssim_similar: report.ssim_similar,
                ssim_dissimilar: report.ssim_dissimilar,
                num_similar: report.num_similar,
                num_dissimilar: report.num_dissimilar,
                fraction_similar: report.fraction_similar,
                psnr_overall: report.psnr_overall,
                ssim_overall: report.ssim_overall,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.r.total_cmp(&b.r))
            .then(a.pair_id.cmp(&b.pair_id))
    });

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}\n",
            row.method,
            row.r,
            row.pair_id,
            csv_cell(row.psnr_similar),
            csv_cell(row.psnr_dissimilar),
            csv_cell(row.ssim_similar),
            csv_cell(row.ssim_dissimilar),
            row.num_similar,
            row.num_dissimilar,
            row.fraction_similar,
            row.psnr_overall,
            row.ssim_overall,
        ));
    }
    fs::write(layout.reports().join("metrics.csv"), csv).context("writing metrics.csv")?;
    fs::write(layout.reports().join("metrics.json"), serde_json::to_string_pretty(&rows)?)
        .context("writing metrics.json")?;
    eprintln!("evaluate: {} rows", rows.len());
    Ok(rows)
}

/// The full pipeline: simulate, train both models, reconstruct everything on
/// the worker pool, evaluate.
pub fn cmd_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<ReportRow>> {
    let manifest = cmd_simulate(cfg)?;
    cmd_train_ae(cfg)?;
    cmd_train_score(cfg)?;
    let jobs = make_jobs(cfg, &manifest)?;
    run_jobs(&jobs, workers)?;
    cmd_evaluate(cfg)
}
