use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::{checkpoint_name, save_discriminator, save_generator, CheckpointMeta};
use super::log::{to_csv, LogRecord};
use crate::dataset::{DatasetManifest, PairedSample, Split};
use crate::error::{Error, Result};
use crate::gan::{
    discriminator_loss_batch, generator_loss_with_grad, Discriminator, DiscriminatorConfig, Generator,
    GeneratorConfig, GeneratorLoss, LossWeights,
};
use crate::metrics::{self, SsimOptions};
use crate::nn::{Model, Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: u64,
    pub checkpoint_every: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub validate_every: u64,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 500_000,
            checkpoint_every: 10_000,
            batch_size: 1,
            seed: 0,
            validate_every: 100,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_every == 0 || self.batch_size == 0 || self.validate_every == 0 {
            return Err(Error::invalid(
                "checkpoint_every, batch_size and validate_every must be positive",
            ));
        }
        self.weights.validate()?;
        self.adam.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.generator.in_channels != self.discriminator.in_channels
            || self.generator.out_channels != self.discriminator.in_channels
        {
            return Err(Error::invalid("generator and discriminator channel counts disagree"));
        }
        Ok(())
    }
}

/// Stacked LQ inputs and HQ targets.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
}

impl Batch {
    pub fn from_samples(samples: &[&PairedSample]) -> Result<Self> {
        let xs: Vec<&Tensor> = samples.iter().map(|s| &s.lq).collect();
        let ys: Vec<&Tensor> = samples.iter().map(|s| &s.hq).collect();
        Ok(Batch {
            x: Tensor::stack(&xs)?,
            y: Tensor::stack(&ys)?,
        })
    }
}

fn logits(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn logit_tensor(g: &[f64]) -> Tensor {
    Tensor::from_vec(Shape::new(g.len(), 1, 1, 1), g.iter().map(|&v| v as f32).collect())
        .expect("one logit per batch item")
}

/// Relativistic loss with label 0 on `(D(G(x)), D(y))`; updates the
/// discriminator only.
pub fn train_discriminator_step(
    batch: &Batch,
    g: &Generator,
    d: &mut Discriminator,
    state: &mut AdamState,
) -> Result<f64> {
    let frozen = g.checksum();
    let gx = g.forward(&batch.x)?;
    let (fake, fake_cache) = d.forward_cached(&gx)?;
    let (real, real_cache) = d.forward_cached(&batch.y)?;
    let (loss, g_fake, g_real) = discriminator_loss_batch(&logits(&fake), &logits(&real), 0.0)?;
    d.zero_grad();
    d.backward(&fake_cache, &logit_tensor(&g_fake))?;
    d.backward(&real_cache, &logit_tensor(&g_real))?;
    adam_step(&mut d.parameters_mut(), state)?;
    if g.checksum() != frozen {
        return Err(Error::FreezeViolated("generator"));
    }
    Ok(loss)
}

/// Composite generator loss with label 1; updates the generator only,
/// back-propagating the adversarial term through the frozen discriminator.
pub fn train_generator_step(
    batch: &Batch,
    g: &mut Generator,
    d: &Discriminator,
    state: &mut AdamState,
    weights: &LossWeights,
) -> Result<GeneratorLoss> {
    let frozen = d.checksum();
    let (gx, g_cache) = g.forward_cached(&batch.x)?;
    let (fake, fake_cache) = d.forward_cached(&gx)?;
    let real = d.forward(&batch.y)?;
    let (loss, grad) = generator_loss_with_grad(&gx, &batch.y, &logits(&fake), &logits(&real), weights)?;
    let mut g_out = grad.gx;
    g_out.add_assign(&d.input_grad(&fake_cache, &logit_tensor(&grad.d_fake))?)?;
    g.zero_grad();
    g.backward(&g_cache, &g_out)?;
    adam_step(&mut g.parameters_mut(), state)?;
    if d.checksum() != frozen {
        return Err(Error::FreezeViolated("discriminator"));
    }
    Ok(loss)
}

/// Mean SSIM and PSNR of the clamped generator output against the targets.
pub fn validate_generator(g: &Generator, samples: &[PairedSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let (mut ssim, mut psnr) = (0.0, 0.0);
    for s in samples {
        let out = g.forward(&s.lq)?.clamp(0.0, 1.0);
        ssim += metrics::ssim(&out, &s.hq, &SsimOptions::default())?;
        psnr += metrics::psnr(&out, &s.hq, 1.0)?;
    }
    let n = samples.len() as f64;
    Ok((ssim / n, psnr / n))
}

#[derive(Clone, Debug)]
pub struct BestModel {
    pub iteration: u64,
    pub val_ssim: f64,
    pub val_psnr: f64,
    pub generator: Generator,
}

impl BestModel {
    fn beaten_by(&self, ssim: f64, psnr: f64) -> bool {
        ssim > self.val_ssim || (ssim == self.val_ssim && psnr > self.val_psnr)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub best: Option<BestModel>,
    pub log: Vec<LogRecord>,
    /// Every checkpoint file written, in order.
    pub checkpoints: Vec<PathBuf>,
    /// Update counts, for checking the 1:1 alternation.
    pub d_updates: u64,
    pub g_updates: u64,
    /// Generator loss of the first and of the last iteration.
    pub first_g_loss: Option<GeneratorLoss>,
    pub last_g_loss: Option<GeneratorLoss>,
}

fn finite(v: f64) -> Option<f64> {
    Some(v).filter(|v| v.is_finite())
}

/// Alternating training, one discriminator then one generator update per
/// iteration on a uniformly sampled batch. Every `validate_every`
/// iterations the generator is scored on `validation` and a log record is
/// emitted; the best model (SSIM, then PSNR) is kept.
///
/// With `out_dir`, writes `checkpoints/generator_<iteration>.ckpt` every
/// `checkpoint_every` iterations, `best.ckpt` on each improvement,
/// `final.ckpt`, `discriminator.ckpt` and `training_log.csv`.
pub fn train_loop(
    train: &[PairedSample],
    validation: &[PairedSample],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    on_record: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    if let Some(dir) = out_dir {
        let ck = dir.join("checkpoints");
        std::fs::create_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = Generator::new(cfg.generator, &mut rng)?;
    let mut d = Discriminator::new(cfg.discriminator, &mut rng)?;
    let mut g_state = AdamState::new(cfg.adam);
    let mut d_state = AdamState::new(cfg.adam);
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut best: Option<BestModel> = None;
    let (mut d_updates, mut g_updates) = (0u64, 0u64);
    let mut last_val: Option<(f64, f64)> = None;
    let (mut first_g_loss, mut last_g_loss) = (None, None);

    for it in 1..=cfg.iterations {
        let picks: Vec<&PairedSample> = (0..cfg.batch_size)
            .map(|_| &train[rng.gen_range(0..train.len())])
            .collect();
        let batch = Batch::from_samples(&picks)?;
        let d_loss = train_discriminator_step(&batch, &g, &mut d, &mut d_state)?;
        d_updates += 1;
        let g_loss = train_generator_step(&batch, &mut g, &d, &mut g_state, &cfg.weights)?;
        g_updates += 1;
        first_g_loss.get_or_insert(g_loss);
        last_g_loss = Some(g_loss);

        if it % cfg.validate_every == 0 {
            let (ssim, psnr) = validate_generator(&g, validation)?;
            last_val = Some((ssim, psnr));
            let record = LogRecord {
                iteration: it,
                d_loss,
                g_total: g_loss.total,
                g_mse_part: g_loss.mse_part,
                g_ssim_part: g_loss.ssim_part,
                g_bce_part: g_loss.bce_part,
                val_ssim: ssim,
                val_psnr: psnr,
            };
            on_record(&record);
            log.push(record);
            if best.as_ref().is_none_or(|b| b.beaten_by(ssim, psnr)) {
                best = Some(BestModel {
                    iteration: it,
                    val_ssim: ssim,
                    val_psnr: psnr,
                    generator: g.clone(),
                });
                if let Some(dir) = out_dir {
                    let p = dir.join("best.ckpt");
                    save_generator(&g, &meta(cfg, it, Some((ssim, psnr))), &p)?;
                    checkpoints.push(p);
                }
            }
        }
        if it % cfg.checkpoint_every == 0 {
            if let Some(dir) = out_dir {
                let p = dir.join("checkpoints").join(checkpoint_name(it));
                save_generator(&g, &meta(cfg, it, last_val), &p)?;
                checkpoints.push(p);
            }
        }
    }

    if let Some(dir) = out_dir {
        let p = dir.join("final.ckpt");
        save_generator(&g, &meta(cfg, cfg.iterations, last_val), &p)?;
        checkpoints.push(p);
        let p = dir.join("discriminator.ckpt");
        save_discriminator(&d, &meta(cfg, cfg.iterations, last_val), &p)?;
        checkpoints.push(p);
        let p = dir.join("training_log.csv");
        std::fs::write(&p, to_csv(&log)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(TrainOutcome {
        generator: g,
        discriminator: d,
        best,
        log,
        checkpoints,
        d_updates,
        g_updates,
        first_g_loss,
        last_g_loss,
    })
}

fn meta(cfg: &TrainConfig, iteration: u64, val: Option<(f64, f64)>) -> CheckpointMeta {
    CheckpointMeta {
        iteration,
        seed: cfg.seed,
        val_ssim: val.and_then(|v| finite(v.0)),
        val_psnr: val.and_then(|v| finite(v.1)),
    }
}

/// Square side shared by every sample.
fn common_side(samples: &[PairedSample]) -> Result<usize> {
    let s = samples[0].lq.shape();
    if s.h != s.w || samples.iter().any(|p| p.lq.shape() != s || p.hq.shape() != s) {
        return Err(Error::invalid(
            "training images must be square and all of one size",
        ));
    }
    Ok(s.h)
}

/// Loads the train and validation splits of a manifest and runs
/// [`train_loop`]. The discriminator's input size follows the data.
pub fn train_from_manifest(
    manifest_path: impl AsRef<Path>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    on_record: &mut dyn FnMut(&LogRecord),
) -> Result<TrainOutcome> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    if manifest.count(Split::Train) == 0 {
        return Err(Error::Empty("training split".into()));
    }
    if manifest.count(Split::Validation) == 0 {
        return Err(Error::Empty("validation split".into()));
    }
    let train = manifest.load_split(root, Split::Train)?;
    let validation = manifest.load_split(root, Split::Validation)?;
    let side = common_side(&train)?;
    if common_side(&validation)? != side {
        return Err(Error::invalid("validation images differ in size from training images"));
    }
    let mut cfg = cfg.clone();
    cfg.discriminator.image_size = side;
    train_loop(&train, &validation, &cfg, out_dir, on_record)
}
