//! Writes transformed test embeddings together with the learned prototypes,
//! ready for an external 2-D projection.
//!
//! ```bash
//! cargo run --release --example embedding_dump -- /tmp/dump.jsonl
//! ```

use std::error::Error;

use protoverb::encode::{EmbeddingStore, EncoderSpec, ToyEncoder};
use protoverb::episodes::{synth_generate, SynthConfig};
use protoverb::experiment::{self, RunSettings};
use protoverb::optim::OptimConfig;
use protoverb::report::{write_dump, PROTOTYPE_ID_PREFIX};
use protoverb::LossWeights;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("protoverb-dump.jsonl"));
    let data = synth_generate(&SynthConfig {
        num_classes: 4,
        n_test: 200,
        ..SynthConfig::default()
    })?;
    let encoder = ToyEncoder::new(EncoderSpec::toy(512, 0))?;
    let pool = experiment::encode_dataset(&encoder, &data.templates[1], &data.train)?;
    let test = experiment::encode_dataset(&encoder, &data.templates[1], &data.test)?;
    let settings = RunSettings {
        k: 10,
        template_index: 1,
        feature_dim: 64,
        weights: LossWeights::default(),
        optim: OptimConfig::toy(0),
    };
    let shots = experiment::k_shot_embeddings(&pool, data.labels.len(), settings.k, 0)?;
    let model = experiment::train_head(&shots, data.labels.len(), None, &settings)?.model;

    write_dump(&model, &test, &out)?;
    let dump = EmbeddingStore::load(&out)?;
    let protos = dump
        .records()
        .iter()
        .filter(|r| r.id.starts_with(PROTOTYPE_ID_PREFIX));
    println!(
        "{} rows of dimension {} in {}",
        dump.len(),
        dump.dim(),
        out.display()
    );
    for p in protos {
        println!(
            "{} ({}) first values {:?}",
            p.id,
            data.labels.name(p.label.unwrap_or(0)),
            &p.vector[..3]
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
