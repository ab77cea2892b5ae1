//! AdamW, the mini-batch training loop and keyword-based prototype pretraining.

use std::fs;
use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encode::write_atomic;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::loss::backward;
use crate::model::{EmbeddingBatch, GradientSet, LabelSpace, LossWeights, VerbalizerModel};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl OptimConfig {
    /// Learning rate suited to the unit-norm vectors of the toy encoder.
    pub const TOY_LR: f64 = 1e-2;
    /// Learning rate for embeddings taken from a large pretrained model.
    pub const PLM_LR: f64 = 3e-5;

    pub fn toy(seed: u64) -> Self {
        Self {
            lr: Self::TOY_LR,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite()
            && self.batch_size > 0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings: {self:?}")));
        }
        Ok(())
    }
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: Self::PLM_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            epochs: 10,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Parameters plus AdamW moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: VerbalizerModel,
    m: GradientSet,
    v: GradientSet,
    step: u64,
}

impl TrainState {
    pub fn new(model: VerbalizerModel) -> Self {
        Self {
            m: GradientSet::zeros_like(&model),
            v: GradientSet::zeros_like(&model),
            model,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn into_model(self) -> VerbalizerModel {
        self.model
    }

    /// One bias-corrected AdamW update with decoupled weight decay:
    /// `θ ← θ − lr·(m̂/(√v̂ + eps) + wd·θ)`.
    pub fn adamw_step(&mut self, grads: &GradientSet, cfg: &OptimConfig) -> Result<()> {
        grads.check_shapes(&self.model)?;
        grads.check_finite()?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);

        let update = |theta: &mut Matrix, g: &Matrix, m: &mut Matrix, v: &mut Matrix| {
            let params = theta.as_mut_slice().iter_mut();
            let moments = m.as_mut_slice().iter_mut().zip(v.as_mut_slice().iter_mut());
            for ((p, &g), (m, v)) in params.zip(g.as_slice()).zip(moments) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *p);
            }
        };
        update(
            self.model.transform_matrix_mut(),
            &grads.d_transform,
            &mut self.m.d_transform,
            &mut self.v.d_transform,
        );
        update(
            self.model.prototypes_mut(),
            &grads.d_prototypes,
            &mut self.m.d_prototypes,
            &mut self.v.d_prototypes,
        );
        self.model.check_finite()
    }
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: VerbalizerModel,
    /// Loss of every mini-batch, in order.
    pub losses: Vec<f64>,
    pub batches_per_epoch: usize,
}

impl TrainOutcome {
    pub fn steps(&self) -> usize {
        self.losses.len()
    }

    /// Mean batch loss of each epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        self.losses
            .chunks(self.batches_per_epoch.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Mini-batch AdamW over `data` for `cfg.epochs` epochs, reshuffling every
/// epoch from the seeded generator. The last batch of an epoch may be short.
pub fn train(
    data: &EmbeddingBatch,
    model: VerbalizerModel,
    weights: &LossWeights,
    cfg: &OptimConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    weights.validate()?;
    data.check_labels(model.num_classes())?;
    if data.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "training data has dimension {} but model expects {}",
            data.dim(),
            model.input_dim()
        )));
    }

    let n = data.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let mut rng = rng::stream(cfg.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = TrainState::new(model);
    let mut losses = Vec::with_capacity(cfg.epochs * batches_per_epoch);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = EmbeddingBatch::new(
                chunk.iter().map(|&i| data.vectors()[i].clone()).collect(),
                chunk.iter().map(|&i| data.labels()[i]).collect(),
            )?;
            let (loss, grads) = backward(&batch, &state.model, weights)?;
            state.adamw_step(&grads, cfg)?;
            losses.push(loss);
        }
        debug!(
            "epoch {epoch}: mean loss {:.6}",
            losses[losses.len() - batches_per_epoch..].iter().sum::<f64>() / batches_per_epoch as f64
        );
    }
    Ok(TrainOutcome {
        model: state.into_model(),
        losses,
        batches_per_epoch,
    })
}

/// Initializes each prototype as the unit-normalized mean of its class's
/// transformed pretraining embeddings, then continues with ordinary training
/// on the pseudo-labeled pretraining set.
pub fn pretrain_prototypes(
    per_class: &[Vec<Vec<f64>>],
    model: VerbalizerModel,
    weights: &LossWeights,
    cfg: &OptimConfig,
) -> Result<TrainOutcome> {
    if per_class.len() != model.num_classes() {
        return Err(Error::Shape(format!(
            "{} pretraining classes for a model with {} prototypes",
            per_class.len(),
            model.num_classes()
        )));
    }
    let mut model = model;
    let d = model.feature_dim();
    let mut protos = Matrix::zeros(model.num_classes(), d);
    for (k, items) in per_class.iter().enumerate() {
        if items.is_empty() {
            return Err(Error::Config(format!("class {k} has no pretraining sentences")));
        }
        let mut mean = vec![0.0; d];
        for h in items {
            for (acc, u) in mean.iter_mut().zip(model.transform(h)?) {
                *acc += u;
            }
        }
        mean.iter_mut().for_each(|v| *v /= items.len() as f64);
        let (unit, _) = linalg::normalized(&mean, &format!("mean embedding of class {k}"))?;
        protos.row_mut(k).copy_from_slice(&unit);
    }
    *model.prototypes_mut() = protos;

    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            losses: Vec::new(),
            batches_per_epoch: 0,
        });
    }
    let (vectors, labels): (Vec<_>, Vec<_>) = per_class
        .iter()
        .enumerate()
        .flat_map(|(k, items)| items.iter().map(move |h| (h.clone(), k)))
        .unzip();
    train(&EmbeddingBatch::new(vectors, labels)?, model, weights, cfg)
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// How a checkpoint was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// `"pretrain"` or `"train"`.
    pub phase: String,
    pub seed: u64,
    /// Shots per class; 0 for a pretraining-only (zero-shot) head.
    pub k: usize,
    pub lambda: [f64; 3],
    pub optim: OptimConfig,
    pub pretrained: bool,
    pub source: String,
}

/// Versioned on-disk form of a trained head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    pub labels: Vec<String>,
    pub config: RunMeta,
}

impl Checkpoint {
    pub fn new(model: &VerbalizerModel, labels: &LabelSpace, config: RunMeta) -> Result<Self> {
        if labels.len() != model.num_classes() {
            return Err(Error::Shape(format!(
                "{} label names for {} prototypes",
                labels.len(),
                model.num_classes()
            )));
        }
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            m: model.input_dim(),
            d: model.feature_dim(),
            k: model.num_classes(),
            w: model.transform_matrix().as_slice().to_vec(),
            p: model.prototypes().as_slice().to_vec(),
            labels: labels.names().to_vec(),
            config,
        })
    }

    pub fn model(&self) -> Result<VerbalizerModel> {
        if self.labels.len() != self.k {
            return Err(Error::Data(format!(
                "checkpoint has {} labels but K = {}",
                self.labels.len(),
                self.k
            )));
        }
        VerbalizerModel::new(
            Matrix::from_vec(self.d, self.m, self.w.clone())?,
            Matrix::from_vec(self.k, self.d, self.p.clone())?,
        )
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        LabelSpace::from_names(self.labels.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        write_atomic(path.as_ref(), |w| {
            use std::io::Write;
            w.write_all(json.as_bytes())?;
            w.write_all(b"\n")
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported checkpoint format version {}",
                path.display(),
                ckpt.format_version
            )));
        }
        ckpt.model()?;
        Ok(ckpt)
    }
}
