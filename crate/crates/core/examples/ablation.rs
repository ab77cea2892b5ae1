//! Reruns one 20-shot episode under every loss combination. Without a
//! prototype term the prototypes never move, so that row stays near chance.
//!
//! ```bash
//! cargo run --release --example ablation
//! ```

use std::error::Error;

use protoverb::encode::{EncoderSpec, ToyEncoder};
use protoverb::episodes::{synth_generate, SynthConfig};
use protoverb::experiment::{self, RunSettings};
use protoverb::optim::OptimConfig;
use protoverb::report::ablation_sweep;
use protoverb::LossWeights;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let data = synth_generate(&SynthConfig::default())?;
    let encoder = ToyEncoder::new(EncoderSpec::toy(1024, 0))?;
    let pool = experiment::encode_dataset(&encoder, &data.templates[0], &data.train)?;
    let test = experiment::encode_dataset(&encoder, &data.templates[0], &data.test)?;

    let base = RunSettings {
        k: 20,
        template_index: 0,
        feature_dim: 256,
        weights: LossWeights::default(),
        optim: OptimConfig::toy(0),
    };
    let combos: Vec<(String, LossWeights)> = LossWeights::ablation_set()
        .into_iter()
        .map(|(name, w)| (name.to_string(), w))
        .collect();
    let reports = ablation_sweep(&pool, &test, data.labels.len(), None, &base, &[0, 1], &combos)?;
    println!("{:<16} {:>8} {:>8}", "losses", "mean", "std");
    for ((name, _), report) in combos.iter().zip(&reports) {
        println!(
            "{name:<16} {:>8.3} {:>8.3}",
            report.aggregate.mean, report.aggregate.std
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
