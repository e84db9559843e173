//! Training and evaluation on encoded slice stacks.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arp::{encode_volume, PoolingMethod};
use crate::autodiff::{adamw_step, cosine_lr, softmax, AdamWConfig, Graph, OptimState, Tensor};
use crate::curriculum::{calibrate_per_stage, complexity, ComplexityScore, CurriculumState};
use crate::error::{Error, Result};
use crate::metrics::{multiclass_report, regression_report, MetricsReport};
use crate::network::{build_model, Model, ModelSpec};
use crate::volume::{PlanarImage, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    /// Cosine schedule restart period, in epochs.
    pub period: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub method: PoolingMethod,
    /// Seed for the stochastic pooling baseline.
    pub encode_seed: u64,
    /// Threshold quantiles, one per curriculum stage (the last entry is
    /// reused for any remaining stages).
    pub quantiles: Vec<f64>,
    pub task: Task,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            lr: 1e-3,
            min_lr: 0.0,
            weight_decay: 0.01,
            period: 50,
            epochs: 12,
            batch_size: 16,
            seed: 0,
            method: PoolingMethod::Arp,
            encode_seed: 0,
            quantiles: vec![0.25, 0.5, 0.75],
            task: Task::Classification,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.period == 0 {
            return Err(Error::Config("period must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.min_lr.is_nan() || self.min_lr < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("lr must be > 0; min_lr and weight_decay >= 0".into()));
        }
        if self.task == Task::Regression && self.model.classes != 1 {
            return Err(Error::Config("regression needs model.classes == 1".into()));
        }
        self.model.validate()?;
        // Rejects bad quantile lists up front.
        calibrate_per_stage(&[vec![0.0]], &self.quantiles)?;
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Subject indices of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Fold>,
}

/// Seeded shuffle, then consecutive test blocks; the first
/// `subjects % k` folds hold one extra subject.
pub fn kfold_split(subjects: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if subjects < k {
        return Err(Error::Config(format!("k={k} exceeds subject count {subjects}")));
    }
    let mut order: Vec<usize> = (0..subjects).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (subjects / k, subjects % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let test: Vec<usize> = order[start..start + len].to_vec();
        let train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + len..])
            .copied()
            .collect();
        folds.push(Fold { train, test });
        start += len;
    }
    Ok(FoldPlan { k, folds })
}

/// Encoded inputs with labels (classification) or targets (regression).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<PlanarImage>,
    pub labels: Vec<usize>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: if self.labels.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.labels[i]).collect()
            },
            targets: if self.targets.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.targets[i]).collect()
            },
        }
    }

    fn batch_tensor(&self, idx: &[usize], scale: f64) -> Result<Tensor> {
        let first = &self.images[idx[0]];
        let (c, h, w) = (first.channels(), first.height(), first.width());
        let mut data = Vec::with_capacity(idx.len() * c * h * w);
        for &i in idx {
            let img = &self.images[i];
            if img.channels() != c || img.height() != h || img.width() != w {
                return Err(Error::Shape("dataset images differ in size".into()));
            }
            data.extend(img.values().iter().map(|&v| v as f64 * scale));
        }
        Tensor::new(&[idx.len(), c, h, w], data)
    }
}

/// Normalises and encodes every volume with `method`.
pub fn encode_dataset(
    volumes: &[Volume],
    labels: &[usize],
    method: PoolingMethod,
    encode_seed: u64,
) -> Result<Dataset> {
    if volumes.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} volumes but {} labels",
            volumes.len(),
            labels.len()
        )));
    }
    let images = volumes
        .iter()
        .map(|v| encode_subject(v, method, encode_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        images,
        labels: labels.to_vec(),
        targets: Vec::new(),
    })
}

fn encode_subject(v: &Volume, method: PoolingMethod, encode_seed: u64) -> Result<PlanarImage> {
    let seed = (method == PoolingMethod::Stochastic).then(|| subject_seed(encode_seed, v));
    Ok(encode_volume(&v.normalize(), method, seed)?.payload)
}

/// Sampling seed for one volume: the run's encode seed mixed with an FNV-1a
/// hash of the voxels. Distinct volumes draw independent samples while the
/// same volume always encodes the same way.
pub fn subject_seed(encode_seed: u64, v: &Volume) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ encode_seed;
    let dims = [v.t_len(), v.height(), v.width()].map(|d| d as u32);
    for bits in dims.into_iter().chain(v.voxels().iter().map(|x| x.to_bits())) {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// A model together with everything needed to feed it a raw volume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub method: PoolingMethod,
    pub encode_seed: u64,
    /// Multiplier applied to encoded pixels before the network.
    pub input_scale: f64,
    pub task: Task,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainedMeta {
    method: PoolingMethod,
    encode_seed: u64,
    input_scale: f64,
    task: Task,
    thresholds: Vec<f64>,
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = TrainedMeta {
            method: self.method,
            encode_seed: self.encode_seed,
            input_scale: self.input_scale,
            task: self.task,
            thresholds: self.thresholds.clone(),
        };
        self.model.save(path, serde_json::to_value(meta)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (model, meta) = Model::load(path)?;
        let meta: TrainedMeta = serde_json::from_value(meta)?;
        Ok(Self {
            model,
            method: meta.method,
            encode_seed: meta.encode_seed,
            input_scale: meta.input_scale,
            task: meta.task,
            thresholds: meta.thresholds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    /// Curriculum stage (1-based) at the end of the epoch.
    pub stage: usize,
    /// Mean complexity of the monitored stage over the epoch's batches.
    pub lambda: f64,
    /// Stage advancements during the epoch.
    pub advanced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trained: TrainedModel,
    pub history: Vec<HistoryRow>,
    /// `None` when training stopped before calibration finished.
    pub curriculum: Option<CurriculumState>,
}

pub fn write_history_csv(rows: &[HistoryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,loss,lr,stage,lambda,advanced\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.loss, r.lr, r.stage, r.lambda, r.advanced
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::write(path, e))
}

/// Inverse RMS of all training pixels; 1 when they are all zero.
fn input_scale(data: &Dataset) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for img in &data.images {
        for &v in img.values() {
            sum += (v as f64) * (v as f64);
            n += 1;
        }
    }
    let rms = (sum / n.max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        1.0 / rms
    } else {
        1.0
    }
}

fn check_dataset(config: &RunConfig, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let s = &config.model;
    for img in &data.images {
        if img.channels() != s.input_channels || img.height() != s.input_size || img.width() != s.input_size {
            return Err(Error::Shape(format!(
                "encoded image {}x{}x{} does not match model input {}x{}x{}",
                img.channels(),
                img.height(),
                img.width(),
                s.input_channels,
                s.input_size,
                s.input_size
            )));
        }
    }
    match config.task {
        Task::Classification => {
            if data.labels.len() != data.len() {
                return Err(Error::Shape("one label per image required".into()));
            }
            if let Some(&label) = data.labels.iter().find(|&&l| l >= s.classes) {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: s.classes,
                });
            }
        }
        Task::Regression => {
            if data.targets.len() != data.len() {
                return Err(Error::Shape("one target per image required".into()));
            }
        }
    }
    Ok(())
}

/// Runs the curriculum-driven optimisation.
///
/// The first epoch is a warm-up: every curriculum stage's complexity is
/// recorded per batch while only the first stage's gate trains. Thresholds
/// are then calibrated per stage and each later batch feeds the active
/// stage's complexity to the state machine; entering a stage unfreezes its
/// gate and fusion score.
pub fn train(config: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    check_dataset(config, data)?;
    let mut model = build_model(&config.model, config.seed)?;
    let stage_names = model.curriculum_stages();
    let scale = input_scale(data);
    let mut optim = OptimState::new(config.adamw(), model.params().tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_0a11);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut warmup: Vec<Vec<f64>> = vec![Vec::new(); stage_names.len()];
    let mut state: Option<CurriculumState> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.lr, config.min_lr, config.period);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut lambda_sum, mut batches, mut advanced) = (0.0, 0.0, 0usize, 0usize);
        for idx in order.chunks(config.batch_size) {
            let active = state.as_ref().map_or(0, |s| s.stage() - 1);
            let mut g = Graph::new();
            let vars = model.params().bind(&mut g, |r| Model::is_trainable(r, active));
            let x = g.input(data.batch_tensor(idx, scale)?);
            let out = model.forward_graph(&mut g, &vars, x)?;
            let loss = match config.task {
                Task::Classification => {
                    let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
                    g.softmax_cross_entropy(out.logits, &labels)?
                }
                Task::Regression => {
                    let t = Tensor::new(&[idx.len(), 1], idx.iter().map(|&i| data.targets[i]).collect())?;
                    g.l1_loss(out.logits, &t)?
                }
            };
            let loss_value = g.value(loss).item();
            if !loss_value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    last_good: Box::new(model),
                });
            }
            g.backward(loss)?;
            let grads: Vec<Option<Tensor>> = vars.iter().map(|&v| g.grad(v)).collect();
            // adamw_step checks every gradient before touching anything, so
            // on failure the model still holds the last good parameters.
            if let Err(e) = adamw_step(model.params_mut().tensors_mut(), &grads, &mut optim, lr) {
                return Err(match e {
                    Error::Numeric(_) => Error::Divergence {
                        epoch,
                        step,
                        last_good: Box::new(model),
                    },
                    other => other,
                });
            }

            let lambda = match &mut state {
                None => {
                    let mut first = 0.0;
                    for (k, (_, f)) in out.stage_features.iter().enumerate() {
                        let l = complexity(g.value(*f))?;
                        if k == 0 {
                            first = l;
                        }
                        warmup[k].push(l);
                    }
                    first
                }
                Some(st) => {
                    let name = st.active_name().to_string();
                    let f = out
                        .stage_features
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, v)| *v)
                        .expect("curriculum stage present in forward output");
                    let l = complexity(g.value(f))?;
                    let prev = st.stage();
                    st.advance(ComplexityScore {
                        value: l,
                        stage: name,
                        step,
                    })?;
                    advanced += st.stage() - prev;
                    l
                }
            };
            loss_sum += loss_value;
            lambda_sum += lambda;
            batches += 1;
            step += 1;
        }
        if state.is_none() {
            let thresholds = calibrate_per_stage(&warmup, &config.quantiles)?;
            state = Some(CurriculumState::new(stage_names.clone(), thresholds)?);
        }
        history.push(HistoryRow {
            epoch,
            loss: loss_sum / batches as f64,
            lr,
            stage: state.as_ref().map_or(1, CurriculumState::stage),
            lambda: lambda_sum / batches as f64,
            advanced,
        });
    }
    let thresholds = state.as_ref().map(|s| s.thresholds().to_vec()).unwrap_or_default();
    Ok(TrainOutcome {
        trained: TrainedModel {
            model,
            method: config.method,
            encode_seed: config.encode_seed,
            input_scale: scale,
            task: config.task,
            thresholds,
        },
        history,
        curriculum: state,
    })
}

const EVAL_CHUNK: usize = 32;

/// Raw network outputs for every image, in dataset order.
pub fn predict_outputs(trained: &TrainedModel, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(EVAL_CHUNK) {
        let logits = trained
            .model
            .forward(&data.batch_tensor(idx, trained.input_scale)?)?
            .logits;
        let m = logits.shape()[1];
        rows.extend(logits.data().chunks_exact(m).map(<[f64]>::to_vec));
    }
    Ok(rows)
}

pub fn evaluate(trained: &TrainedModel, data: &Dataset) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set is empty".into()));
    }
    let outputs = predict_outputs(trained, data)?;
    match trained.task {
        Task::Classification => {
            let probs: Vec<Vec<f64>> = outputs.iter().map(|r| softmax(r)).collect();
            multiclass_report(&probs, &data.labels)
        }
        Task::Regression => {
            let preds: Vec<f64> = outputs.iter().map(|r| r[0]).collect();
            regression_report(&preds, &data.targets)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    /// Softmax of the logits (the raw output for regression).
    pub scores: Vec<f64>,
}

/// Normalise, encode, run the network, take the argmax.
pub fn predict_subject(volume: &Volume, trained: &TrainedModel) -> Result<Prediction> {
    let img = encode_subject(volume, trained.method, trained.encode_seed)?;
    let data = Dataset {
        images: vec![img],
        labels: Vec::new(),
        targets: Vec::new(),
    };
    let spec = trained.model.spec();
    let p = &data.images[0];
    if p.height() != spec.input_size || p.width() != spec.input_size {
        return Err(Error::Shape(format!(
            "volume slices are {}x{}, model expects {}x{}",
            p.height(),
            p.width(),
            spec.input_size,
            spec.input_size
        )));
    }
    let row = predict_outputs(trained, &data)?.remove(0);
    let scores = match trained.task {
        Task::Classification => softmax(&row),
        Task::Regression => row,
    };
    let mut label = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[label] {
            label = i;
        }
    }
    Ok(Prediction { label, scores })
}
