//! Scoring, multi-run aggregation, loss ablations, parameter accounting and
//! embedding dumps.
//!
//! Report files are canonical JSON: keys sorted, floats printed with six
//! decimals, so identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::encode::{write_atomic, EmbeddingStore};
use crate::error::{Error, Result};
use crate::experiment::{self, RunSettings};
use crate::model::{LossWeights, MaskEmbedding, VerbalizerModel};

/// Micro-averaged F1 over all classes.
///
/// Pooled over classes, every wrong prediction is one false positive (for
/// the predicted class) and one false negative (for the gold class).
pub fn micro_f1(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Data("cannot score an empty prediction list".into()));
    }
    if let Some(&bad) = pred.iter().chain(gold).find(|&&l| l >= num_classes) {
        return Err(Error::Data(format!("label {bad} outside [0, {num_classes})")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fne = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fne[g] += 1;
        }
    }
    let tp: usize = tp.iter().sum();
    let fp: usize = fp.iter().sum();
    let fne: usize = fne.iter().sum();
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fne) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mean, population standard deviation and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::Data("cannot aggregate an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Aggregate {
        mean,
        std: var.sqrt(),
        max: sorted[sorted.len() - 1],
    })
}

/// One scored run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub template: usize,
    pub k: usize,
    pub lambda: [f64; 3],
    pub micro_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: Value,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(config: Value, runs: Vec<RunRecord>) -> Result<Self> {
        let scores: Vec<f64> = runs.iter().map(|r| r.micro_f1).collect();
        Ok(Self {
            config,
            aggregate: aggregate(&scores)?,
            runs,
            timing: Timing::default(),
        })
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(&serde_json::to_value(self).expect("report serializes"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(path, &self.to_json())
    }
}

pub(crate) fn save_json(path: impl AsRef<Path>, body: &str) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        use std::io::Write;
        w.write_all(body.as_bytes())
    })
}

/// Pretty JSON with sorted keys and every float fixed at six decimals.
pub fn to_canonical_json(value: &Value) -> String {
    fn write(out: &mut String, v: &Value, indent: usize) {
        let pad = "  ".repeat(indent + 1);
        let close = "  ".repeat(indent);
        match v {
            Value::Null => out.push_str("null"),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
                (Some(u), _, _) => write!(out, "{u}").unwrap(),
                (None, Some(i), _) => write!(out, "{i}").unwrap(),
                (_, _, Some(f)) => write!(out, "{f:.6}").unwrap(),
                _ => out.push_str("null"),
            },
            Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
            Value::Array(items) if items.is_empty() => out.push_str("[]"),
            Value::Array(items) => {
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    out.push_str(&pad);
                    write(out, item, indent + 1);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&close);
                out.push(']');
            }
            Value::Object(map) if map.is_empty() => out.push_str("{}"),
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push_str("{\n");
                for (i, key) in keys.iter().enumerate() {
                    out.push_str(&pad);
                    out.push_str(&serde_json::to_string(key).expect("key"));
                    out.push_str(": ");
                    write(out, &map[*key], indent + 1);
                    out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
                }
                out.push_str(&close);
                out.push('}');
            }
        }
    }
    let mut out = String::new();
    write(&mut out, value, 0);
    out.push('\n');
    out
}

/// Runs the same episode once per loss combination and reports each.
///
/// Every combination sees identical data, initialization and shuffling; only
/// the loss weights differ.
pub fn ablation_sweep(
    train: &EmbeddingStore,
    test: &EmbeddingStore,
    num_classes: usize,
    init: Option<&VerbalizerModel>,
    base: &RunSettings,
    seeds: &[u64],
    combos: &[(String, LossWeights)],
) -> Result<Vec<RunReport>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    combos
        .iter()
        .map(|(name, weights)| {
            let settings = RunSettings {
                weights: *weights,
                ..base.clone()
            };
            let runs = seeds
                .iter()
                .map(|&seed| {
                    experiment::run_few_shot(train, test, num_classes, init, &settings.with_seed(seed))
                        .map(|(record, _)| record)
                })
                .collect::<Result<Vec<_>>>()?;
            let config = json!({
                "command": "ablate",
                "combo": name,
                "k": settings.k,
                "lambda": weights.as_array(),
                "dim_d": settings.feature_dim,
                "lr": settings.optim.lr,
                "epochs": settings.optim.epochs,
                "batch_size": settings.optim.batch_size,
                "weight_decay": settings.optim.weight_decay,
                "pretrained_init": init.is_some(),
                "train_source": train.source(),
                "test_items": test.len(),
            });
            RunReport::new(config, runs)
        })
        .collect()
}

/// Which classification head to count trainable parameters for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Transform `M×D` plus `K` prototypes of size `D`.
    Ppv,
    /// Soft verbalizer: a single `M×K` projection.
    Spv,
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppv" => Ok(Self::Ppv),
            "spv" => Ok(Self::Spv),
            other => Err(Error::Config(format!(
                "unknown head kind {other:?} (expected ppv or spv)"
            ))),
        }
    }
}

/// Trainable parameters of a head on top of a frozen encoder. `d` is ignored for `Spv`.
pub fn count_params(m: usize, d: usize, k: usize, head: HeadKind) -> Result<usize> {
    let dims_ok = match head {
        HeadKind::Ppv => m > 0 && d > 0 && k > 0,
        HeadKind::Spv => m > 0 && k > 0,
    };
    if !dims_ok {
        return Err(Error::Config(format!(
            "dimensions must be positive (M={m}, D={d}, K={k})"
        )));
    }
    Ok(match head {
        HeadKind::Ppv => m * d + k * d,
        HeadKind::Spv => m * k,
    })
}

pub const PROTOTYPE_ID_PREFIX: &str = "proto:";

/// Transformed embeddings plus the prototypes (ids `proto:<k>`), in the
/// interchange format, ready for external projection and plotting.
pub fn dump_embeddings(model: &VerbalizerModel, store: &EmbeddingStore) -> Result<EmbeddingStore> {
    let mut out = EmbeddingStore::new(model.feature_dim(), format!("dump:{}", store.source()));
    for rec in store.records() {
        out.push(MaskEmbedding::new(
            rec.id.clone(),
            model.transform(&rec.vector)?,
            rec.label,
        ))?;
    }
    for (k, p) in model.prototypes().row_iter().enumerate() {
        out.push(MaskEmbedding::new(
            format!("{PROTOTYPE_ID_PREFIX}{k}"),
            p.to_vec(),
            Some(k),
        ))?;
    }
    Ok(out)
}

pub fn write_dump(model: &VerbalizerModel, store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    dump_embeddings(model, store)?.save(path)
}
