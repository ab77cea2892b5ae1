//! Trainable parameters of the prototype head versus a single-matrix verbalizer
//! when the encoder is frozen.
//!
//! ```bash
//! cargo run --example param_count
//! ```

use std::error::Error;

use protoverb::report::{count_params, HeadKind};
use protoverb::VerbalizerModel;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (m, d) = (1024, 256);
    println!("{:>8} {:>12} {:>12}", "classes", "prototype", "single");
    for k in [2, 4, 10, 14] {
        let ppv = count_params(m, d, k, HeadKind::Ppv)?;
        let spv = count_params(m, d, k, HeadKind::Spv)?;
        println!("{k:>8} {ppv:>12} {spv:>12}");
    }
    // The count agrees with an instantiated head.
    let model = VerbalizerModel::init(m, d, 10, 0)?;
    println!("instantiated 10-class head: {} parameters", model.param_count());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
