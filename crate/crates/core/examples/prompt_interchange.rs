//! Prompts and embedding files as exchanged with an external encoder: fill a
//! template, write one prompt per line, and read back a JSONL embedding file.
//!
//! ```bash
//! cargo run --example prompt_interchange
//! ```

use std::error::Error;

use protoverb::encode::{EmbeddingStore, EncoderSpec, ToyEncoder};
use protoverb::templating::{fill_pretrain_template, Template};
use protoverb::MaskEmbedding;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let template = Template::new("A [MASK] news: [SENTENCE]")?;
    let sentences = [
        "Stocks rallied after the rate decision.",
        "The striker scored twice.",
    ];
    let prompts = sentences
        .iter()
        .map(|s| template.fill(s))
        .collect::<protoverb::Result<Vec<_>>>()?;
    for p in &prompts {
        println!("{p}");
    }
    println!(
        "{}",
        fill_pretrain_template("Fans of sports cheered the late goal.", "sports")?
    );

    // An external encoder reads the prompts and writes one [MASK] vector per
    // prompt; the toy encoder plays that role here.
    let encoder = ToyEncoder::new(EncoderSpec::toy(32, 0))?;
    let mut store = EmbeddingStore::new(32, "external:demo");
    for (i, p) in prompts.iter().enumerate() {
        store.push(MaskEmbedding::new(format!("row{i}"), encoder.encode(p)?, Some(i)))?;
    }
    let path = std::env::temp_dir().join("protoverb-interchange.jsonl");
    store.save(&path)?;
    let text = std::fs::read_to_string(&path)?;
    println!("header: {}", text.lines().next().unwrap_or_default());

    let back = EmbeddingStore::load(&path)?;
    println!(
        "read {} embeddings of dimension {} from {}",
        back.len(),
        back.dim(),
        back.source()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
