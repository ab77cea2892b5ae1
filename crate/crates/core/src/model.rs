//! Domain types of the verbalizer head and its forward pass.
//!
//! The head is a bias-free linear map `W: R^M -> R^D` applied to the encoder's
//! `[MASK]` vector, followed by cosine similarity against one prototype per
//! class. Prediction is the softmax of those similarities.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, Stream};

/// Class names plus the literal label words used to sample pretraining sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpace {
    names: Vec<String>,
    label_words: Vec<Vec<String>>,
}

impl LabelSpace {
    pub fn new(names: Vec<String>, label_words: Vec<Vec<String>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("label space has no classes".into()));
        }
        if label_words.len() != names.len() {
            return Err(Error::Config(format!(
                "{} label names but {} label-word lists",
                names.len(),
                label_words.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate label name {name:?}")));
            }
        }
        Ok(Self { names, label_words })
    }

    /// Label space without label words; each name doubles as its own word list.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let words = names.iter().map(|n| vec![n.clone()]).collect();
        Self::new(names, words)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, k: usize) -> &str {
        &self.names[k]
    }

    pub fn words(&self, k: usize) -> &[String] {
        &self.label_words[k]
    }

    pub fn require_trainable(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::Config(format!(
                "training needs at least 2 classes, got {}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn require_label_words(&self) -> Result<()> {
        for (name, words) in self.names.iter().zip(&self.label_words) {
            if words.iter().all(|w| w.trim().is_empty()) {
                return Err(Error::Config(format!("label {name:?} has no label words")));
            }
        }
        Ok(())
    }
}

/// One `[MASK]`-position vector, optionally labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
    pub label: Option<usize>,
}

impl MaskEmbedding {
    pub fn new(id: impl Into<String>, vector: Vec<f64>, label: Option<usize>) -> Self {
        Self {
            id: id.into(),
            vector,
            label,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.vector.len() != m {
            return Err(Error::Shape(format!(
                "embedding {:?} has {} values, expected {m}",
                self.id,
                self.vector.len()
            )));
        }
        if let Some(i) = self.vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                what: format!("embedding {:?}", self.id),
                index: i,
            });
        }
        if self.vector.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(format!("embedding {:?} is all zeros", self.id)));
        }
        Ok(())
    }
}

/// A labeled mini-batch: the input of every loss and gradient computation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl EmbeddingBatch {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Data("batch is empty".into()));
        }
        if vectors.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        let m = vectors[0].len();
        if let Some(bad) = vectors.iter().position(|v| v.len() != m) {
            return Err(Error::Shape(format!(
                "batch item {bad} has dimension {}, expected {m}",
                vectors[bad].len()
            )));
        }
        Ok(Self { vectors, labels })
    }

    /// Builds a batch from labeled embeddings; unlabeled records are an error.
    pub fn from_embeddings(items: &[MaskEmbedding]) -> Result<Self> {
        let labels = items
            .iter()
            .map(|e| {
                e.label
                    .ok_or_else(|| Error::Data(format!("embedding {:?} has no label", e.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(items.iter().map(|e| e.vector.clone()).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn check_labels(&self, k: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l >= k) {
            Some(i) => Err(Error::Data(format!(
                "batch item {i} has label {} outside [0, {k})",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }
}

/// The entire trainable head: transform `W` (D×M) and prototypes `P` (K×D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalizerModel {
    w: Matrix,
    p: Matrix,
}

impl VerbalizerModel {
    pub fn new(w: Matrix, p: Matrix) -> Result<Self> {
        if w.cols() != 0 && p.cols() != w.rows() {
            return Err(Error::Shape(format!(
                "transform is {}x{} but prototypes are {}x{}",
                w.rows(),
                w.cols(),
                p.rows(),
                p.cols()
            )));
        }
        if w.rows() == 0 || w.cols() == 0 || p.rows() == 0 {
            return Err(Error::Shape("model dimensions must be positive".into()));
        }
        let model = Self { w, p };
        model.check_finite()?;
        for (k, row) in model.p.row_iter().enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::Degenerate(format!("prototype {k} is the zero vector")));
            }
        }
        Ok(model)
    }

    /// Seeded initialization: `W` uniform in `±1/√M`, prototype rows unit-norm Gaussian.
    pub fn init(m: usize, d: usize, k: usize, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 || k == 0 {
            return Err(Error::Config(format!(
                "dimensions must be positive (M={m}, D={d}, K={k})"
            )));
        }
        let mut rng = rng::stream(seed, Stream::Init);
        let bound = 1.0 / (m as f64).sqrt();
        let uniform = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w_data = (0..d * m).map(|_| rng.sample(uniform)).collect();
        let mut p = Matrix::zeros(k, d);
        for r in 0..k {
            loop {
                let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                if let Ok((unit, _)) = linalg::normalized(&row, "prototype") {
                    p.row_mut(r).copy_from_slice(&unit);
                    break;
                }
            }
        }
        Self::new(Matrix::from_vec(d, m, w_data)?, p)
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.p.rows()
    }

    pub fn transform_matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.p
    }

    pub fn transform_matrix_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn prototypes_mut(&mut self) -> &mut Matrix {
        &mut self.p
    }

    pub fn param_count(&self) -> usize {
        self.input_dim() * self.feature_dim() + self.num_classes() * self.feature_dim()
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.w.first_non_finite() {
            return Err(Error::Numerical {
                what: "transform matrix".into(),
                index: i,
            });
        }
        if let Some(i) = self.p.first_non_finite() {
            return Err(Error::Numerical {
                what: "prototype matrix".into(),
                index: i,
            });
        }
        Ok(())
    }

    /// `u = W h`.
    pub fn transform(&self, h: &[f64]) -> Result<Vec<f64>> {
        if let Some(i) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                what: "input embedding".into(),
                index: i,
            });
        }
        self.w.matvec(h)
    }

    /// Cosine similarity of the transformed input against every prototype.
    pub fn similarities(&self, h: &[f64]) -> Result<Vec<f64>> {
        let u = self.transform(h)?;
        let (u_hat, _) = linalg::normalized(&u, "transformed embedding")?;
        self.p
            .row_iter()
            .enumerate()
            .map(|(k, p)| {
                let (p_hat, _) = linalg::normalized(p, &format!("prototype {k}"))?;
                Ok(linalg::dot(&u_hat, &p_hat))
            })
            .collect()
    }

    /// `p(y|x) = softmax_y s(u, p_y)`.
    pub fn class_probabilities(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.class_probabilities_tempered(h, 1.0)
    }

    /// Softmax over `s(u, p_k) / temperature`; `temperature = 1` is the plain head.
    pub fn class_probabilities_tempered(&self, h: &[f64], temperature: f64) -> Result<Vec<f64>> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let sims = self.similarities(h)?;
        let logits: Vec<f64> = sims.iter().map(|s| s / temperature).collect();
        Ok(linalg::softmax(&logits))
    }

    /// Index of the most similar prototype; ties go to the lowest index.
    pub fn classify(&self, h: &[f64]) -> Result<usize> {
        Ok(argmax(&self.similarities(h)?))
    }
}

/// Cosine similarity; zero-norm inputs are an error rather than a silent 0.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (linalg::norm(a), linalg::norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    Ok((linalg::dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Coefficients of the combined objective `λ1·L_s + λ2·L_p1 + λ3·L_p2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub instance_instance: f64,
    pub instance_prototype: f64,
    pub prototype_instance: f64,
}

impl LossWeights {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        let w = Self {
            instance_instance: l1,
            instance_prototype: l2,
            prototype_instance: l3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got {all:?}"
            )));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("loss weights must not all be zero".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [
            self.instance_instance,
            self.instance_prototype,
            self.prototype_instance,
        ]
    }

    /// The five loss combinations of the objective ablation, in row order.
    pub fn ablation_set() -> Vec<(&'static str, LossWeights)> {
        [
            ("L_s", (1.0, 0.0, 0.0)),
            ("L_p1+L_p2", (0.0, 1.0, 1.0)),
            ("L_s+L_p1", (1.0, 1.0, 0.0)),
            ("L_s+L_p2", (1.0, 0.0, 1.0)),
            ("L_s+L_p1+L_p2", (1.0, 1.0, 1.0)),
        ]
        .into_iter()
        .map(|(name, (a, b, c))| (name, LossWeights::new(a, b, c).expect("valid weights")))
        .collect()
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            instance_instance: 1.0,
            instance_prototype: 1.0,
            prototype_instance: 1.0,
        }
    }
}

/// Gradients of the loss with respect to `W` and `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_transform: Matrix,
    pub d_prototypes: Matrix,
}

impl GradientSet {
    pub fn zeros_like(model: &VerbalizerModel) -> Self {
        Self {
            d_transform: Matrix::zeros(model.feature_dim(), model.input_dim()),
            d_prototypes: Matrix::zeros(model.num_classes(), model.feature_dim()),
        }
    }

    pub fn check_shapes(&self, model: &VerbalizerModel) -> Result<()> {
        if self.d_transform.shape() != model.transform_matrix().shape()
            || self.d_prototypes.shape() != model.prototypes().shape()
        {
            return Err(Error::Shape(format!(
                "gradients {:?}/{:?} do not match parameters {:?}/{:?}",
                self.d_transform.shape(),
                self.d_prototypes.shape(),
                model.transform_matrix().shape(),
                model.prototypes().shape()
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.d_transform.first_non_finite() {
            return Err(Error::Numerical {
                what: "transform gradient".into(),
                index: i,
            });
        }
        if let Some(i) = self.d_prototypes.first_non_finite() {
            return Err(Error::Numerical {
                what: "prototype gradient".into(),
                index: i,
            });
        }
        Ok(())
    }
}
