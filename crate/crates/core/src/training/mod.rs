//! Optimization loop: per-batch iteration over every non-empty input
//! subset, buffer-mediated discriminator updates followed by generator
//! updates, per-epoch checkpoints and a JSON-lines loss log.

mod buffer;
mod checkpoint;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::conditioning::{enumerate_subsets, ConditionVector};
use crate::dataio::{CorpusManifest, SliceStack, TargetSlice};
use crate::error::{Error, Result};
use crate::fsutil::write_json_pretty;
use crate::losses::{
    apply_mask, channel_mask, cycle_losses, cycle_pass, generator_objective, lsgan_d_loss, lsgan_g_loss, scalar,
    total_objectives, CyclePass, LossParts, LossReport,
};
use crate::nets::{BundleSpec, ModelBundle};
use crate::seeding::stream_rng;

pub use buffer::ReplayBuffer;
pub use checkpoint::{checkpoint_path, load_checkpoint, save_checkpoint, sidecar_path, Checkpoint, CheckpointMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_rec: f64,
    pub buffer_capacity: usize,
    pub seed: u64,
    /// Input modalities, in condition-bit order.
    pub modalities: Vec<String>,
    pub target: String,
    pub canonical_size: usize,
    pub gen_width: usize,
    pub n_res_blocks: usize,
    pub disc_width: usize,
    pub disc_layers: usize,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0002,
            batch_size: 5,
            epochs: 20,
            lambda_rec: 10.0,
            buffer_capacity: 25,
            seed: 0,
            modalities: vec!["t1".into(), "t2".into(), "flair".into()],
            target: "dir".into(),
            canonical_size: crate::dataio::DEFAULT_CANONICAL_SIZE,
            gen_width: 64,
            n_res_blocks: 6,
            disc_width: 64,
            disc_layers: 3,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

impl TrainConfig {
    /// Full validation, as required before a training run.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        self.validate_structure()
    }

    /// Everything except the strict learning-rate bound; a zero rate is
    /// allowed here so that frozen-optimizer epochs can be run.
    fn validate_structure(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument(format!("learning_rate must be finite and ≥ 0, got {}", self.learning_rate)));
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("canonical_size", self.canonical_size),
            ("gen_width", self.gen_width),
            ("n_res_blocks", self.n_res_blocks),
            ("disc_width", self.disc_width),
            ("disc_layers", self.disc_layers),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if !(self.lambda_rec >= 0.0) || !self.lambda_rec.is_finite() {
            return Err(Error::Argument(format!("lambda_rec must be finite and ≥ 0, got {}", self.lambda_rec)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Argument("Adam betas must lie in [0, 1)".into()));
        }
        if self.modalities.is_empty() {
            return Err(Error::Argument("at least one input modality is required".into()));
        }
        let mut names = self.modalities.clone();
        names.sort();
        names.dedup();
        if names.len() != self.modalities.len() {
            return Err(Error::Argument("input modality names must be unique".into()));
        }
        if self.modalities.contains(&self.target) {
            return Err(Error::Argument(format!("target {:?} is also listed as an input", self.target)));
        }
        let stride = 1usize << self.disc_layers;
        if self.canonical_size % 4 != 0 || self.canonical_size % stride != 0 {
            return Err(Error::Argument(format!(
                "canonical_size {} must be divisible by 4 and by the discriminator stride {stride}",
                self.canonical_size
            )));
        }
        Ok(())
    }

    pub fn bundle_spec(&self) -> BundleSpec {
        BundleSpec::for_modalities(
            self.modalities.len(),
            self.canonical_size,
            self.gen_width,
            self.n_res_blocks,
            self.disc_width,
            self.disc_layers,
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCounters {
    pub generator: u64,
    pub discriminator: u64,
    pub batches: u64,
}

/// One line of the loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub condition: ConditionVector,
    #[serde(flatten)]
    pub losses: LossReport,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub epoch: usize,
    pub summary: LossReport,
    pub steps: Vec<StepRecord>,
}

struct Sample {
    inputs: Vec<f32>,
    target: Vec<f32>,
}

/// Forward pass of one subset update, shared by its D and G steps.
pub(crate) struct Prepared {
    masked: Tensor,
    target: Tensor,
    condition: ConditionVector,
    pass: CyclePass,
}

pub struct Trainer {
    cfg: TrainConfig,
    models: ModelBundle,
    opt_g: AdamW,
    opt_d: AdamW,
    buf_target: ReplayBuffer,
    buf_inputs: ReplayBuffer,
    samples: Vec<Sample>,
    subsets: Vec<ConditionVector>,
    counters: UpdateCounters,
    device: Device,
}

impl Trainer {
    /// Builds freshly initialized models and optimizers for preprocessed
    /// `(inputs, target)` pairs whose input channels follow `cfg.modalities`.
    pub fn new(cfg: TrainConfig, pairs: Vec<(SliceStack, TargetSlice)>) -> Result<Self> {
        cfg.validate_structure()?;
        let device = Device::Cpu;
        let models = ModelBundle::new(&cfg.bundle_spec(), DType::F32, &device, &mut stream_rng(cfg.seed, &[1]))?;
        Self::with_models(cfg, models, pairs)
    }

    pub fn from_manifest(cfg: TrainConfig, data: &CorpusManifest) -> Result<Self> {
        cfg.validate_structure()?;
        let pairs = data
            .entries
            .iter()
            .map(|e| data.load_pair(e, &cfg.modalities, &cfg.target, cfg.canonical_size))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cfg, pairs)
    }

    pub fn with_models(cfg: TrainConfig, models: ModelBundle, pairs: Vec<(SliceStack, TargetSlice)>) -> Result<Self> {
        cfg.validate_structure()?;
        if models.spec() != cfg.bundle_spec() {
            return Err(Error::Shape("model architecture does not match the training config".into()));
        }
        if pairs.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let n = cfg.modalities.len();
        let s = cfg.canonical_size;
        let mut samples = Vec::with_capacity(pairs.len());
        for (i, (x, t)) in pairs.into_iter().enumerate() {
            if x.channels() != n || x.height() != s || x.width() != s || t.height != s || t.width != s {
                return Err(Error::Shape(format!(
                    "sample {i} is {}x{}x{} / {}x{}, expected {n}x{s}x{s} / {s}x{s}",
                    x.channels(),
                    x.height(),
                    x.width(),
                    t.height,
                    t.width
                )));
            }
            samples.push(Sample {
                inputs: x.into_data(),
                target: t.data,
            });
        }
        let adam = |vars| {
            AdamW::new(
                vars,
                ParamsAdamW {
                    lr: cfg.learning_rate,
                    beta1: cfg.beta1,
                    beta2: cfg.beta2,
                    eps: 1e-8,
                    weight_decay: 0.0,
                },
            )
        };
        let opt_g = adam(models.generator_vars())?;
        let opt_d = adam(models.discriminator_vars())?;
        let buf_target = ReplayBuffer::new(cfg.buffer_capacity, &[1, 1, s, s], stream_rng(cfg.seed, &[3, 0]))?;
        let buf_inputs = ReplayBuffer::new(cfg.buffer_capacity, &[1, n, s, s], stream_rng(cfg.seed, &[3, 1]))?;
        Ok(Trainer {
            subsets: enumerate_subsets(n)?,
            cfg,
            models,
            opt_g,
            opt_d,
            buf_target,
            buf_inputs,
            samples,
            counters: UpdateCounters::default(),
            device: Device::Cpu,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn models(&self) -> &ModelBundle {
        &self.models
    }

    pub fn counters(&self) -> UpdateCounters {
        self.counters
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    /// One pass over the data in a seed- and epoch-determined order.
    pub fn train_epoch(&mut self, epoch: usize) -> Result<EpochOutcome> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut stream_rng(self.cfg.seed, &[2, epoch as u64]));
        let mut steps = Vec::with_capacity(order.len().div_ceil(self.cfg.batch_size) * self.subsets.len());
        for batch in order.chunks(self.cfg.batch_size) {
            self.train_batch(epoch, batch, &mut steps)?;
        }
        let reports: Vec<LossReport> = steps.iter().map(|s| s.losses).collect();
        let summary = LossReport::mean(&reports).expect("non-empty epoch");
        Ok(EpochOutcome { epoch, summary, steps })
    }

    fn batch_tensors(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let n = self.cfg.modalities.len();
        let s = self.cfg.canonical_size;
        let mut x = Vec::with_capacity(indices.len() * n * s * s);
        let mut t = Vec::with_capacity(indices.len() * s * s);
        for &i in indices {
            x.extend_from_slice(&self.samples[i].inputs);
            t.extend_from_slice(&self.samples[i].target);
        }
        let b = indices.len();
        Ok((
            Tensor::from_vec(x, (b, n, s, s), &self.device)?,
            Tensor::from_vec(t, (b, 1, s, s), &self.device)?,
        ))
    }

    fn train_batch(&mut self, epoch: usize, indices: &[usize], log: &mut Vec<StepRecord>) -> Result<()> {
        let (x, t) = self.batch_tensors(indices)?;
        for k in 0..self.subsets.len() {
            let c = self.subsets[k].clone();
            let step = log.len();
            let prepared = self.prepare(&x, &t, &c)?;
            let adv_d = self.discriminator_update(&prepared, epoch, step)?;
            let parts = self.generator_update(&prepared, adv_d, epoch, step)?;
            log.push(StepRecord {
                epoch,
                step,
                condition: c,
                losses: total_objectives(parts, self.cfg.lambda_rec)?,
            });
        }
        self.counters.batches += 1;
        Ok(())
    }

    pub(crate) fn prepare(&self, x: &Tensor, t: &Tensor, c: &ConditionVector) -> Result<Prepared> {
        let (b, n, h, w) = x.dims4()?;
        let masked = apply_mask(x, c)?;
        let cond = channel_mask(c, DType::F32, &self.device)?.broadcast_as((b, n, h, w))?.contiguous()?;
        let m = &self.models;
        // G2's output is masked like the real stack so that D1 and the
        // second half of the forward cycle see the same missing-channel fill.
        let pass = cycle_pass(
            &masked,
            t,
            c,
            |a, _| m.g1.forward(a, &cond),
            |a, c| apply_mask(&m.g2.forward(a, &cond)?, c),
        )?;
        Ok(Prepared {
            masked,
            target: t.clone(),
            condition: c.clone(),
            pass,
        })
    }

    /// Updates D1 and D2 on real images and buffer-mediated fakes; returns
    /// the summed discriminator loss.
    pub(crate) fn discriminator_update(&mut self, p: &Prepared, epoch: usize, step: usize) -> Result<f64> {
        let fake_t = self.buf_target.query_batch(&p.pass.fake_target)?;
        let fake_x = self.buf_inputs.query_batch(&p.pass.fake_inputs)?;
        let m = &self.models;
        let loss = (lsgan_d_loss(&m.d2.forward(&p.target)?, &m.d2.forward(&fake_t)?)?
            + lsgan_d_loss(&m.d1.forward(&p.masked)?, &m.d1.forward(&fake_x)?)?)?;
        let value = scalar(&loss)?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step,
                detail: format!("discriminator loss is {value}"),
            });
        }
        let grads = loss.backward()?;
        self.opt_d.step(&grads)?;
        self.counters.discriminator += 1;
        Ok(value)
    }

    /// Updates G1 and G2 on the full objective.
    pub(crate) fn generator_update(&mut self, p: &Prepared, adv_d: f64, epoch: usize, step: usize) -> Result<LossParts> {
        let m = &self.models;
        let adv_g = (lsgan_g_loss(&m.d2.forward(&p.pass.fake_target)?)? + lsgan_g_loss(&m.d1.forward(&p.pass.fake_inputs)?)?)?;
        let (rec_f, rec_b) = cycle_losses(&p.pass, &p.masked, &p.target, &p.condition)?;
        let total = generator_objective(&adv_g, &rec_f, &rec_b, self.cfg.lambda_rec)?;
        let parts = LossParts {
            rec_forward: scalar(&rec_f)?,
            rec_backward: scalar(&rec_b)?,
            adv_g: scalar(&adv_g)?,
            adv_d,
        };
        let total_value = scalar(&total)?;
        if !total_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step,
                detail: format!("generator objective is {total_value} ({parts:?})"),
            });
        }
        let grads = total.backward()?;
        self.opt_g.step(&grads)?;
        self.counters.generator += 1;
        Ok(parts)
    }

    fn meta(&self, epoch: usize, summary: Option<LossReport>) -> CheckpointMeta {
        CheckpointMeta {
            epoch,
            modalities: self.cfg.modalities.clone(),
            target: self.cfg.target.clone(),
            canonical_size: self.cfg.canonical_size,
            models: self.models.spec(),
            config: self.cfg.clone(),
            summary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub final_checkpoint: PathBuf,
    /// Mean losses per epoch, in order.
    pub summaries: Vec<LossReport>,
}

/// Trains on a manifest and writes `config.json`, `losses.jsonl` and
/// `checkpoints/epoch_NNN.{safetensors,json}` under `out_dir`; epoch 0 is
/// the initialization. Returns the final checkpoint path.
pub fn fit(cfg: &TrainConfig, data: &CorpusManifest, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let trainer = Trainer::from_manifest(cfg.clone(), data)?;
    Ok(fit_with(trainer, out_dir)?.final_checkpoint)
}

/// [`fit`] for an already constructed trainer.
pub fn fit_with(mut trainer: Trainer, out_dir: &Path) -> Result<FitOutcome> {
    trainer.cfg.validate()?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    write_json_pretty(&out_dir.join("config.json"), &trainer.cfg)?;

    let log_path = out_dir.join("losses.jsonl");
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);

    let mut last = checkpoint_path(&ckpt_dir, 0);
    save_checkpoint(&trainer.models, &trainer.meta(0, None), &last)?;
    let mut summaries = Vec::with_capacity(trainer.cfg.epochs);
    for epoch in 1..=trainer.cfg.epochs {
        let outcome = trainer.train_epoch(epoch)?;
        for step in &outcome.steps {
            serde_json::to_writer(&mut log, step)?;
            log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
        }
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        last = checkpoint_path(&ckpt_dir, epoch);
        save_checkpoint(&trainer.models, &trainer.meta(epoch, Some(outcome.summary)), &last)?;
        log::info!(
            "epoch {epoch}/{}: total_g {:.4} total_d {:.4} rec_forward {:.4} rec_backward {:.4}",
            trainer.cfg.epochs,
            outcome.summary.total_g,
            outcome.summary.total_d,
            outcome.summary.rec_forward,
            outcome.summary.rec_backward
        );
        summaries.push(outcome.summary);
    }
    log.into_inner()
        .map_err(|e| Error::io(&log_path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(&log_path, e))?;
    Ok(FitOutcome {
        final_checkpoint: last,
        summaries,
    })
}
