//! End-to-end episodes: encode, sample k shots, train or pretrain, score.

use crate::encode::{EmbeddingStore, ToyEncoder};
use crate::episodes::{k_shot_indices, TextDataset};
use crate::error::{Error, Result};
use crate::model::{EmbeddingBatch, LabelSpace, LossWeights, MaskEmbedding, VerbalizerModel};
use crate::optim::{pretrain_prototypes, train, OptimConfig, TrainOutcome};
use crate::report::{micro_f1, RunRecord};
use crate::templating::{KeywordSentence, Template};

/// Everything that parameterizes one training run besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub k: usize,
    pub template_index: usize,
    pub feature_dim: usize,
    pub weights: LossWeights,
    pub optim: OptimConfig,
}

impl RunSettings {
    pub fn seed(&self) -> u64 {
        self.optim.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.optim.seed = seed;
        out
    }
}

/// Template-fills and encodes every record; ids are `row<i>`.
pub fn encode_dataset(
    encoder: &ToyEncoder,
    template: &Template,
    dataset: &TextDataset,
) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(encoder.dim(), encoder.spec().source());
    for (i, rec) in dataset.records.iter().enumerate() {
        let vector = encoder.encode(&template.fill(&rec.text)?)?;
        store.push(MaskEmbedding::new(format!("row{i}"), vector, Some(rec.label)))?;
    }
    Ok(store)
}

/// Encodes keyword sentences wrapped in the pretraining template, per class.
pub fn encode_keyword_sentences(
    encoder: &ToyEncoder,
    samples: &[Vec<KeywordSentence>],
) -> Result<Vec<Vec<Vec<f64>>>> {
    samples
        .iter()
        .map(|class| class.iter().map(|s| encoder.encode(&s.prompt()?)).collect())
        .collect()
}

/// Per-class vectors of a labeled store, for pretraining from precomputed embeddings.
pub fn group_by_label(store: &EmbeddingStore, num_classes: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = vec![Vec::new(); num_classes];
    for (rec, label) in store.records().iter().zip(store.require_labels()?) {
        if label >= num_classes {
            return Err(Error::Data(format!(
                "embedding {:?} has label {label} outside [0, {num_classes})",
                rec.id
            )));
        }
        out[label].push(rec.vector.clone());
    }
    Ok(out)
}

/// `k` labeled embeddings per class.
pub fn k_shot_embeddings(
    store: &EmbeddingStore,
    num_classes: usize,
    k: usize,
    seed: u64,
) -> Result<EmbeddingStore> {
    let labels = store.require_labels()?;
    store.select(&k_shot_indices(&labels, num_classes, k, seed)?)
}

/// Zero-shot head: random transform, prototypes from keyword sentences.
pub fn pretrain_head(
    per_class: &[Vec<Vec<f64>>],
    labels: &LabelSpace,
    settings: &RunSettings,
) -> Result<TrainOutcome> {
    labels.require_trainable()?;
    for (k, items) in per_class.iter().enumerate() {
        if items.is_empty() {
            return Err(Error::Config(format!(
                "label {:?} has no pretraining sentences",
                labels.name(k)
            )));
        }
    }
    let dim = per_class
        .iter()
        .flatten()
        .next()
        .map(Vec::len)
        .ok_or_else(|| Error::Config("no pretraining embeddings".into()))?;
    let model = VerbalizerModel::init(dim, settings.feature_dim, labels.len(), settings.seed())?;
    pretrain_prototypes(per_class, model, &settings.weights, &settings.optim)
}

/// Trains on a labeled store, starting from `init` or a fresh seeded head.
pub fn train_head(
    train_set: &EmbeddingStore,
    num_classes: usize,
    init: Option<&VerbalizerModel>,
    settings: &RunSettings,
) -> Result<TrainOutcome> {
    let model = match init {
        Some(m) => {
            if m.input_dim() != train_set.dim() || m.num_classes() != num_classes {
                return Err(Error::Shape(format!(
                    "initial head is {}->{} with {} classes but data has dimension {} and {num_classes} classes",
                    m.input_dim(),
                    m.feature_dim(),
                    m.num_classes(),
                    train_set.dim()
                )));
            }
            m.clone()
        }
        None => VerbalizerModel::init(
            train_set.dim(),
            settings.feature_dim,
            num_classes,
            settings.seed(),
        )?,
    };
    let batch = EmbeddingBatch::from_embeddings(train_set.records())?;
    train(&batch, model, &settings.weights, &settings.optim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub gold: Vec<usize>,
    pub micro_f1: f64,
}

/// Scores a head on every record of a labeled store, in store order.
pub fn evaluate(model: &VerbalizerModel, test: &EmbeddingStore) -> Result<Evaluation> {
    if test.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "test embeddings have dimension {} but the head expects {}",
            test.dim(),
            model.input_dim()
        )));
    }
    let gold = test.require_labels()?;
    let predictions = test
        .records()
        .iter()
        .map(|r| model.classify(&r.vector))
        .collect::<Result<Vec<_>>>()?;
    let micro_f1 = micro_f1(&predictions, &gold, model.num_classes())?;
    Ok(Evaluation {
        predictions,
        gold,
        micro_f1,
    })
}

/// Samples `settings.k` shots per class, trains and scores on the full test store.
pub fn run_few_shot(
    train_pool: &EmbeddingStore,
    test: &EmbeddingStore,
    num_classes: usize,
    init: Option<&VerbalizerModel>,
    settings: &RunSettings,
) -> Result<(RunRecord, TrainOutcome)> {
    if settings.k == 0 {
        return Err(Error::Config(
            "k = 0 is zero-shot: pretrain a head and evaluate it instead of training".into(),
        ));
    }
    let shots = k_shot_embeddings(train_pool, num_classes, settings.k, settings.seed())?;
    let outcome = train_head(&shots, num_classes, init, settings)?;
    let eval = evaluate(&outcome.model, test)?;
    let record = RunRecord {
        seed: settings.seed(),
        template: settings.template_index,
        k: settings.k,
        lambda: settings.weights.as_array(),
        micro_f1: eval.micro_f1,
    };
    Ok((record, outcome))
}
