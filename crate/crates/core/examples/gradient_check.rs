//! Compares the analytic gradients of the combined loss with central finite
//! differences on a small random head.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use std::error::Error;

use protoverb::{backward, total_loss, EmbeddingBatch, LossWeights, VerbalizerModel};

const STEP: f64 = 1e-5;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let batch = EmbeddingBatch::new(
        vec![
            vec![0.9, -0.2, 0.4, 0.1, 0.0],
            vec![0.7, 0.1, 0.5, -0.3, 0.2],
            vec![-0.4, 0.8, 0.1, 0.6, -0.5],
            vec![-0.1, 0.9, -0.3, 0.4, 0.3],
            vec![0.2, 0.3, -0.9, 0.1, 0.7],
        ],
        vec![0, 0, 1, 1, 2],
    )?;
    let model = VerbalizerModel::init(5, 3, 3, 17)?;
    let weights = LossWeights::default();
    let (loss, grads) = backward(&batch, &model, &weights)?;
    println!("loss {loss:.6}");

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let n_w = probe.transform_matrix().as_slice().len();
    let n_p = probe.prototypes().as_slice().len();
    for idx in 0..n_w + n_p {
        let (analytic, numeric) = if idx < n_w {
            let g = grads.d_transform.as_slice()[idx];
            let numeric = central(&batch, &mut probe, &weights, |m| {
                &mut m.transform_matrix_mut().as_mut_slice()[idx]
            })?;
            (g, numeric)
        } else {
            let j = idx - n_w;
            let g = grads.d_prototypes.as_slice()[j];
            let numeric = central(&batch, &mut probe, &weights, |m| {
                &mut m.prototypes_mut().as_mut_slice()[j]
            })?;
            (g, numeric)
        };
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    println!("{} parameters checked, max relative error {worst:.2e}", n_w + n_p);
    assert!(worst < 1e-5);
    Ok(())
}

fn central(
    batch: &EmbeddingBatch,
    model: &mut VerbalizerModel,
    weights: &LossWeights,
    entry: impl Fn(&mut VerbalizerModel) -> &mut f64,
) -> protoverb::Result<f64> {
    let original = *entry(model);
    *entry(model) = original + STEP;
    let plus = total_loss(batch, model, weights)?;
    *entry(model) = original - STEP;
    let minus = total_loss(batch, model, weights)?;
    *entry(model) = original;
    Ok((plus - minus) / (2.0 * STEP))
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
