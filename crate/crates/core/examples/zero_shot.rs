//! Zero-shot prototypes from an unlabeled corpus: sentences containing a label
//! word are wrapped in the pretraining template, encoded, and used first to
//! place each prototype at its class mean and then to train the head.
//!
//! ```bash
//! cargo run --release --example zero_shot
//! ```

use std::error::Error;

use protoverb::encode::{EncoderSpec, ToyEncoder};
use protoverb::episodes::{synth_generate, SynthConfig};
use protoverb::experiment::{self, RunSettings};
use protoverb::optim::OptimConfig;
use protoverb::templating::{sample_keyword_sentences, split_sentences};
use protoverb::LossWeights;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let data = synth_generate(&SynthConfig::default())?;
    let encoder = ToyEncoder::new(EncoderSpec::toy(1024, 0))?;
    let test = experiment::encode_dataset(&encoder, &data.templates[0], &data.test)?;

    let sentences: Vec<String> = data.corpus.iter().flat_map(|doc| split_sentences(doc)).collect();
    let samples = sample_keyword_sentences(&sentences, &data.labels, 30, 0)?;
    println!(
        "{} corpus sentences; e.g. {:?}",
        sentences.len(),
        samples[0][0].prompt()?
    );
    let per_class = experiment::encode_keyword_sentences(&encoder, &samples)?;

    let settings = RunSettings {
        k: 0,
        template_index: 0,
        feature_dim: 256,
        weights: LossWeights::default(),
        optim: OptimConfig::toy(0),
    };
    let means_only = RunSettings {
        optim: OptimConfig {
            epochs: 0,
            ..settings.optim.clone()
        },
        ..settings.clone()
    };
    let chance = 1.0 / data.labels.len() as f64;
    let phase_one = experiment::pretrain_head(&per_class, &data.labels, &means_only)?;
    println!(
        "class-mean prototypes:   micro-F1 {:.3} (chance {chance:.3})",
        experiment::evaluate(&phase_one.model, &test)?.micro_f1
    );
    let full = experiment::pretrain_head(&per_class, &data.labels, &settings)?;
    println!(
        "after pretraining:       micro-F1 {:.3} ({} steps)",
        experiment::evaluate(&full.model, &test)?.micro_f1,
        full.steps()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
