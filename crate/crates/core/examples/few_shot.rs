//! A k-shot episode end to end: synthetic topics, toy encoder, training,
//! checkpointing and evaluation on the full test split.
//!
//! ```bash
//! cargo run --release --example few_shot
//! ```

use std::error::Error;

use protoverb::encode::{EncoderSpec, ToyEncoder};
use protoverb::episodes::{synth_generate, SynthConfig};
use protoverb::experiment::{self, RunSettings};
use protoverb::optim::{Checkpoint, OptimConfig, RunMeta};
use protoverb::LossWeights;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let data = synth_generate(&SynthConfig::default())?;
    let encoder = ToyEncoder::new(EncoderSpec::toy(1024, 0))?;
    let template = &data.templates[0];
    println!("template: {}", template.pattern());
    println!("prompt:   {}", template.fill(&data.train.records[0].text)?);

    let pool = experiment::encode_dataset(&encoder, template, &data.train)?;
    let test = experiment::encode_dataset(&encoder, template, &data.test)?;
    let num_classes = data.labels.len();

    for k in [1, 5, 20] {
        let settings = RunSettings {
            k,
            template_index: 0,
            feature_dim: 256,
            weights: LossWeights::default(),
            optim: OptimConfig::toy(0),
        };
        let (record, outcome) = experiment::run_few_shot(&pool, &test, num_classes, None, &settings)?;
        let means = outcome.epoch_means();
        println!(
            "k = {k:>2}: micro-F1 {:.3} on {} items, loss {:.3} -> {:.3}",
            record.micro_f1,
            test.len(),
            means[0],
            means[means.len() - 1]
        );

        if k == 20 {
            let dir = std::env::temp_dir().join("protoverb-few-shot");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("head.json");
            let meta = RunMeta {
                phase: "train".into(),
                seed: 0,
                k,
                lambda: settings.weights.as_array(),
                optim: settings.optim.clone(),
                pretrained: false,
                source: pool.source().to_string(),
            };
            Checkpoint::new(&outcome.model, &data.labels, meta)?.save(&path)?;
            let restored = Checkpoint::load(&path)?.model()?;
            let again = experiment::evaluate(&restored, &test)?;
            println!(
                "reloaded checkpoint {} scores {:.3}",
                path.display(),
                again.micro_f1
            );
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
