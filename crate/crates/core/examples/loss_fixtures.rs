//! The three contrastive objectives on hand-sized batches with known values.
//!
//! ```bash
//! cargo run --example loss_fixtures
//! ```

use std::error::Error;

use protoverb::linalg::Matrix;
use protoverb::loss::{loss_instance_instance, loss_instance_prototype, loss_prototype_instance};
use protoverb::{total_loss, EmbeddingBatch, LossWeights, VerbalizerModel};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // Identity transform and prototypes: similarities are read off the inputs directly.
    let model = VerbalizerModel::new(Matrix::identity(2), Matrix::identity(2))?;
    let orthogonal = EmbeddingBatch::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1])?;
    let single = EmbeddingBatch::new(vec![vec![1.0, 0.0]], vec![0])?;
    let one_class = EmbeddingBatch::new(vec![vec![1.0, 0.2], vec![0.3, 1.0]], vec![1, 1])?;

    println!(
        "instance-instance   orthogonal pair   {:.6}",
        loss_instance_instance(&orthogonal, &model)?
    );
    println!(
        "instance-instance   single class      {:.6}",
        loss_instance_instance(&one_class, &model)?
    );
    println!(
        "instance-prototype  single item       {:.6}",
        loss_instance_prototype(&single, &model)?
    );
    println!(
        "prototype-instance  orthogonal pair   {:.6}",
        loss_prototype_instance(&orthogonal, &model)?
    );
    println!(
        "prototype-instance  single class      {:.6}",
        loss_prototype_instance(&one_class, &model)?
    );

    let probs = model.class_probabilities(&[1.0, 0.0])?;
    println!(
        "class probabilities for similarities (1, 0): ({:.6}, {:.6})",
        probs[0], probs[1]
    );

    for (name, weights) in LossWeights::ablation_set() {
        println!(
            "{name:<16} total {:.6}",
            total_loss(&orthogonal, &model, &weights)?
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
