//! Maximum-likelihood instruction tuning with a staged curriculum.
//!
//! Stages run in order, each over a concatenation of named datasets. Batch
//! composition is a pure function of `(seed, stage, step)`, so a run resumed
//! from a checkpoint replays the uninterrupted run exactly.

mod optim;

pub use optim::{clip_global_norm, global_norm, Adam};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{forward_graph, is_embedding, Model, ModelCheckpoint, ModelError};
use crate::numerics::{kernels, Graph, Real};
use crate::segmenter::AssembledRecord;

pub const TRAIN_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("stage {stage:?} names dataset {dataset:?}, which is missing or empty")]
    MissingDataset { stage: String, dataset: String },
    #[error("batch has no response tokens to train on")]
    EmptyBatch,
    #[error("non-finite loss at stage {stage:?} step {step}: {detail}")]
    NonFinite { stage: String, step: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}: {1}")]
    Io(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    /// Datasets concatenated to form this stage's mixture.
    pub datasets: Vec<String>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: Real,
    pub batch_size: usize,
    pub seed: u64,
    pub freeze_embeddings: bool,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<Real>,
    /// Zero the optimizer moments when a new stage begins.
    pub reset_optimizer: bool,
    pub beta1: Real,
    pub beta2: Real,
    pub adam_eps: Real,
    pub stages: Vec<StageConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 8,
            seed: 0,
            freeze_embeddings: true,
            clip_norm: Some(1.0),
            reset_optimizer: true,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            stages: vec![
                StageConfig { name: "plain".into(), datasets: vec!["plain".into()], steps: 200 },
                StageConfig { name: "hinted".into(), datasets: vec!["hinted".into()], steps: 200 },
            ],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.stages.is_empty() {
            return bad("at least one stage is required");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.stages.iter().any(|s| s.steps == 0) {
            return bad("every stage needs at least one step");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogEntry {
    StageBegin { stage: String, index: usize },
    Step { step: usize, stage: String, stage_step: usize, loss: Real, learning_rate: Real, grad_norm: Real },
    StageEval { stage: String, index: usize, loss: Real },
}

pub fn write_log(path: &Path, log: &[LogEntry]) -> Result<(), TrainError> {
    let io = |e: std::io::Error| TrainError::Io(path.display().to_string(), e.to_string());
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for entry in log {
        let line = serde_json::to_string(entry).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: Real,
    /// Global gradient norm before clipping.
    pub grad_norm: Real,
}

/// Record indices for one batch. Each stage walks seeded per-epoch
/// permutations of its mixture.
pub fn batch_indices(seed: u64, stage: usize, step: usize, batch_size: usize, n: usize) -> Vec<usize> {
    let mut cached: Option<(usize, Vec<usize>)> = None;
    (0..batch_size)
        .map(|k| {
            let pos = step * batch_size + k;
            let epoch = pos / n;
            if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((stage as u64) << 40) | epoch as u64);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                cached = Some((epoch, perm));
            }
            cached.as_ref().map_or(0, |(_, p)| p[pos % n])
        })
        .collect()
}

/// One optimizer update on `batch`. The loss is the mean negative
/// log-likelihood over all response tokens in the batch.
pub fn train_step(
    model: &mut Model,
    batch: &[&AssembledRecord],
    adam: &mut Adam,
    config: &TrainConfig,
) -> Result<StepOutcome, TrainError> {
    let total: usize = batch.iter().map(|r| r.shifted_targets().1.iter().filter(|&&m| m).count()).sum();
    if total == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let mut g = Graph::new();
    let freeze = config.freeze_embeddings;
    let vars = model.params.map(|name, t| g.leaf(t.clone(), !(freeze && is_embedding(name))));
    let mut loss = None;
    for rec in batch {
        let (targets, mask) = rec.shifted_targets();
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            continue;
        }
        let logits = forward_graph(&mut g, &vars, &model.config, &rec.tokens, &rec.layout, None)?;
        let ce = g.cross_entropy_mle(logits, &targets, &mask).map_err(ModelError::from)?;
        let part = g.scale(ce, count as Real / total as Real).map_err(ModelError::from)?;
        loss = Some(match loss {
            None => part,
            Some(acc) => g.add(acc, part).map_err(ModelError::from)?,
        });
    }
    let loss = loss.ok_or(TrainError::EmptyBatch)?;
    let loss_value = g.value(loss).item();
    let mut grads = g.backward(loss).map_err(ModelError::from)?;
    let mut flat = Vec::new();
    vars.for_each(|_, &v| flat.push(grads.take(v)));

    let grad_norm = match config.clip_norm {
        Some(c) => clip_global_norm(&mut flat, c),
        None => global_norm(&flat),
    };
    if !grad_norm.is_finite() {
        return Err(TrainError::NonFinite { stage: String::new(), step: 0, detail: "gradient norm".into() });
    }
    adam.begin_step();
    let mut i = 0;
    model.params.for_each_mut(|_, p| {
        if let Some(gr) = &flat[i] {
            adam.update(i, p, gr, config.learning_rate);
        }
        i += 1;
    });
    Ok(StepOutcome { loss: loss_value, grad_norm })
}

/// Mean per-token negative log-likelihood over the response tokens of
/// `records`.
pub fn evaluate_loss(model: &Model, records: &[AssembledRecord]) -> Result<Real, TrainError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for rec in records {
        let (targets, mask) = rec.shifted_targets();
        if !mask.contains(&true) {
            continue;
        }
        let logits = model.logits(&rec.tokens, &rec.layout)?;
        for (t, (&target, &m)) in targets.iter().zip(&mask).enumerate() {
            if m {
                let row = logits.row(t);
                total += kernels::log_sum_exp(row) - row[target];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(TrainError::EmptyBatch);
    }
    Ok(total / count as Real)
}

fn param_shapes(model: &Model) -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    model.params.for_each(|_, t| shapes.push(t.shape().to_vec()));
    shapes
}

/// Complete trainer state; reloading it continues the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCheckpoint {
    pub version: u32,
    pub model: ModelCheckpoint,
    pub optimizer: Adam,
    pub stage: usize,
    pub stage_step: usize,
    pub global_step: usize,
    pub seed: u64,
    pub log: Vec<LogEntry>,
}

impl TrainCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let text = serde_json::to_string(self).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| TrainError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| TrainError::Io(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }
}

/// Named datasets a curriculum draws from.
pub type Datasets = BTreeMap<String, Vec<AssembledRecord>>;

/// Step-by-step curriculum runner.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    mixtures: Vec<Vec<AssembledRecord>>,
    model: Model,
    adam: Adam,
    stage: usize,
    stage_step: usize,
    global_step: usize,
    seed: u64,
    log: Vec<LogEntry>,
}

impl Trainer {
    pub fn new(config: TrainConfig, datasets: &Datasets, model: Model) -> Result<Self, TrainError> {
        config.validate()?;
        let mut mixtures = Vec::with_capacity(config.stages.len());
        for stage in &config.stages {
            let mut mix = Vec::new();
            for name in &stage.datasets {
                match datasets.get(name) {
                    Some(d) if !d.is_empty() => mix.extend(d.iter().cloned()),
                    _ => {
                        return Err(TrainError::MissingDataset { stage: stage.name.clone(), dataset: name.clone() })
                    }
                }
            }
            if mix.is_empty() {
                return Err(TrainError::MissingDataset { stage: stage.name.clone(), dataset: String::new() });
            }
            mixtures.push(mix);
        }
        let adam = Adam::new(&param_shapes(&model), config.beta1, config.beta2, config.adam_eps);
        let seed = config.seed;
        Ok(Self { config, mixtures, model, adam, stage: 0, stage_step: 0, global_step: 0, seed, log: Vec::new() })
    }

    /// Restores a trainer from `ckpt`; the data-order seed comes from the
    /// checkpoint.
    pub fn resume(config: TrainConfig, datasets: &Datasets, ckpt: TrainCheckpoint) -> Result<Self, TrainError> {
        if ckpt.version != TRAIN_CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        let model = Model::from_checkpoint(ckpt.model)?;
        let mut t = Self::new(config, datasets, model)?;
        let shapes = param_shapes(&t.model);
        let moment_shapes: Vec<Vec<usize>> = ckpt.optimizer.m.iter().map(|m| m.shape().to_vec()).collect();
        if moment_shapes != shapes || ckpt.optimizer.v.len() != shapes.len() {
            return Err(TrainError::Checkpoint("optimizer state does not match the model".into()));
        }
        if ckpt.stage > t.mixtures.len() {
            return Err(TrainError::Checkpoint(format!("stage {} beyond the configured stages", ckpt.stage)));
        }
        t.adam = ckpt.optimizer;
        t.stage = ckpt.stage;
        t.stage_step = ckpt.stage_step;
        t.global_step = ckpt.global_step;
        t.seed = ckpt.seed;
        t.log = ckpt.log;
        Ok(t)
    }

    pub fn checkpoint(&self) -> TrainCheckpoint {
        TrainCheckpoint {
            version: TRAIN_CHECKPOINT_VERSION,
            model: self.model.to_checkpoint(),
            optimizer: self.adam.clone(),
            stage: self.stage,
            stage_step: self.stage_step,
            global_step: self.global_step,
            seed: self.seed,
            log: self.log.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.stage >= self.mixtures.len()
    }

    pub fn global_step(&self) -> usize {
        self.global_step
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Runs one step. Returns `false` once every stage has finished.
    pub fn step(&mut self) -> Result<bool, TrainError> {
        if self.is_done() {
            return Ok(false);
        }
        let stage_cfg = &self.config.stages[self.stage];
        let name = stage_cfg.name.clone();
        if self.stage_step == 0 {
            if self.stage > 0 && self.config.reset_optimizer {
                self.adam.reset();
            }
            self.log.push(LogEntry::StageBegin { stage: name.clone(), index: self.stage });
        }
        let mix = &self.mixtures[self.stage];
        let idx = batch_indices(self.seed, self.stage, self.stage_step, self.config.batch_size, mix.len());
        let batch: Vec<&AssembledRecord> = idx.iter().map(|&i| &mix[i]).collect();
        let outcome = train_step(&mut self.model, &batch, &mut self.adam, &self.config).map_err(|e| match e {
            TrainError::Model(ModelError::Numerics(n)) => {
                TrainError::NonFinite { stage: name.clone(), step: self.global_step, detail: n.to_string() }
            }
            TrainError::NonFinite { detail, .. } => {
                TrainError::NonFinite { stage: name.clone(), step: self.global_step, detail }
            }
            other => other,
        })?;
        log::debug!("stage {name} step {} loss {:.6}", self.stage_step, outcome.loss);
        self.log.push(LogEntry::Step {
            step: self.global_step,
            stage: name.clone(),
            stage_step: self.stage_step,
            loss: outcome.loss,
            learning_rate: self.config.learning_rate,
            grad_norm: outcome.grad_norm,
        });
        self.stage_step += 1;
        self.global_step += 1;
        if self.stage_step == stage_cfg.steps {
            let loss = evaluate_loss(&self.model, mix)?;
            log::info!("stage {name} finished, eval loss {loss:.6}");
            self.log.push(LogEntry::StageEval { stage: name, index: self.stage, loss });
            self.stage += 1;
            self.stage_step = 0;
        }
        Ok(true)
    }

    /// Runs until `global_step` reaches `target` or training ends.
    pub fn run_until(&mut self, target: usize) -> Result<(), TrainError> {
        while self.global_step < target && self.step()? {}
        Ok(())
    }

    pub fn run(&mut self) -> Result<(), TrainError> {
        while self.step()? {}
        Ok(())
    }

    pub fn into_parts(self) -> (Model, Vec<LogEntry>) {
        (self.model, self.log)
    }
}

/// Runs every stage to completion and returns the trained model and its log.
pub fn run_curriculum(
    config: &TrainConfig,
    datasets: &Datasets,
    model: Model,
) -> Result<(Model, Vec<LogEntry>), TrainError> {
    let mut t = Trainer::new(config.clone(), datasets, model)?;
    t.run()?;
    Ok(t.into_parts())
}
