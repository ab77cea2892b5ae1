//! Prototypical prompt verbalizer.
//!
//! A classification head for prompt-based text classification: the encoder's
//! `[MASK]` vector is mapped by a learned linear transform into a metric space
//! where every class owns a learned prototype, and the prediction is the
//! prototype with the highest cosine similarity. The head is trained with
//! three contrastive objectives (instance-instance, instance-prototype and
//! prototype-instance) and can be initialized without labels by encoding
//! corpus sentences that contain each class's label word.
//!
//! Modules:
//!
//! * [`model`] and [`loss`]: the head, its objectives and analytic gradients.
//! * [`optim`]: AdamW, mini-batch training, keyword pretraining, checkpoints.
//! * [`encode`]: a deterministic hashed n-gram toy encoder and the embedding file format.
//! * [`templating`]: cloze templates and keyword-sentence sampling.
//! * [`episodes`]: dataset loading, k-shot sampling, synthetic benchmark.
//! * [`report`]: micro-F1, aggregation, ablations, parameter counts, dumps.
//! * [`experiment`]: glue that runs whole episodes.
//! * [`cli`]: the `protoverb` command line.
//!
//! See `examples/` for one runnable program per capability.

pub mod cli;
pub mod encode;
pub mod episodes;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod optim;
pub mod report;
pub mod rng;
pub mod templating;

pub use error::{Error, Result};
pub use loss::{backward, loss_components, total_loss};
pub use model::{
    cosine, EmbeddingBatch, GradientSet, LabelSpace, LossWeights, MaskEmbedding, VerbalizerModel,
};
