//! Shared test helpers: random instances, naive reference losses, finite
//! differences and a CLI runner.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use protoverb::linalg::Matrix;
use protoverb::{backward, total_loss, EmbeddingBatch, LossWeights, VerbalizerModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Size bounds of a random instance; every dimension is drawn from `1..=max`.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub k: usize,
}

pub const SMALL: Limits = Limits {
    n: 6,
    m: 8,
    d: 4,
    k: 4,
};

#[derive(Debug, Clone)]
pub struct Instance {
    pub batch: EmbeddingBatch,
    pub model: VerbalizerModel,
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_instance(rng: &mut ChaCha8Rng, limits: Limits) -> Instance {
    let n = rng.random_range(1..=limits.n);
    let m = rng.random_range(1..=limits.m);
    let d = rng.random_range(1..=limits.d);
    let k = rng.random_range(1..=limits.k);
    random_instance_with(rng, n, m, d, k)
}

pub fn random_instance_with(rng: &mut ChaCha8Rng, n: usize, m: usize, d: usize, k: usize) -> Instance {
    let vectors = (0..n).map(|_| gaussian(rng, m)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
    let w = Matrix::from_vec(d, m, gaussian(rng, d * m)).unwrap();
    let p = Matrix::from_vec(k, d, gaussian(rng, k * d)).unwrap();
    Instance {
        batch: EmbeddingBatch::new(vectors, labels).unwrap(),
        model: VerbalizerModel::new(w, p).unwrap(),
    }
}

/// The seven non-zero weightings with entries in {0, 1}.
pub fn binary_weightings() -> Vec<LossWeights> {
    (1..8u8)
        .map(|bits| {
            let b = |i: u8| f64::from((bits >> i) & 1);
            LossWeights::new(b(0), b(1), b(2)).unwrap()
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn naive_transform(model: &VerbalizerModel, h: &[f64]) -> Vec<f64> {
    let w = model.transform_matrix();
    let mut u = vec![0.0; w.rows()];
    for r in 0..w.rows() {
        for c in 0..w.cols() {
            u[r] += w[(r, c)] * h[c];
        }
    }
    u
}

fn naive_parts(inst: &Instance) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, &[usize]) {
    let u = inst
        .batch
        .vectors()
        .iter()
        .map(|h| naive_transform(&inst.model, h))
        .collect();
    let p = inst.model.prototypes().row_iter().map(<[f64]>::to_vec).collect();
    (u, p, inst.batch.labels())
}

/// Instance-instance loss, written term by term.
pub fn naive_instance_instance(inst: &Instance) -> f64 {
    let (u, _, y) = naive_parts(inst);
    let n = u.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let theta = if y[i] == y[j] {
                naive_cos(&u[i], &u[j]).exp()
            } else {
                1.0
            };
            let mut negatives = 0.0;
            for jn in 0..n {
                if y[jn] != y[i] {
                    negatives += naive_cos(&u[i], &u[jn]).exp();
                }
            }
            total -= (theta / (theta + negatives)).ln();
        }
    }
    total / (n * n) as f64
}

/// Instance-prototype loss, written term by term.
pub fn naive_instance_prototype(inst: &Instance) -> f64 {
    let (u, p, y) = naive_parts(inst);
    let mut total = 0.0;
    for i in 0..u.len() {
        let num = naive_cos(&u[i], &p[y[i]]).exp();
        let mut den = 0.0;
        for pk in &p {
            den += naive_cos(&u[i], pk).exp();
        }
        total -= (num / den).ln();
    }
    total / u.len() as f64
}

/// Prototype-instance loss, written term by term.
pub fn naive_prototype_instance(inst: &Instance) -> f64 {
    let (u, p, y) = naive_parts(inst);
    let mut total = 0.0;
    for i in 0..u.len() {
        let proto = &p[y[i]];
        let num = naive_cos(proto, &u[i]).exp();
        let mut den = num;
        for j in 0..u.len() {
            if y[j] != y[i] {
                den += naive_cos(proto, &u[j]).exp();
            }
        }
        total -= (num / den).ln();
    }
    total / u.len() as f64
}

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the gradient relative error, for entries near zero.
pub const FD_FLOOR: f64 = 1e-4;

/// Largest relative error between the analytic gradient and central finite
/// differences of the production loss, over every entry of `W` and `P`.
pub fn max_gradient_error(inst: &Instance, w: &LossWeights) -> f64 {
    let (_, grads) = backward(&inst.batch, &inst.model, w).unwrap();
    let mut worst = 0.0f64;
    let mut model = inst.model.clone();
    let entries = model.transform_matrix().as_slice().len();
    for idx in 0..entries {
        let numeric = central_difference(&inst.batch, &mut model, w, |m| {
            &mut m.transform_matrix_mut().as_mut_slice()[idx]
        });
        worst = worst.max(rel_err(grads.d_transform.as_slice()[idx], numeric, FD_FLOOR));
    }
    let entries = model.prototypes().as_slice().len();
    for idx in 0..entries {
        let numeric = central_difference(&inst.batch, &mut model, w, |m| {
            &mut m.prototypes_mut().as_mut_slice()[idx]
        });
        worst = worst.max(rel_err(grads.d_prototypes.as_slice()[idx], numeric, FD_FLOOR));
    }
    worst
}

fn central_difference(
    batch: &EmbeddingBatch,
    model: &mut VerbalizerModel,
    w: &LossWeights,
    entry: impl Fn(&mut VerbalizerModel) -> &mut f64,
) -> f64 {
    let original = *entry(model);
    *entry(model) = original + FD_STEP;
    let plus = total_loss(batch, model, w).unwrap();
    *entry(model) = original - FD_STEP;
    let minus = total_loss(batch, model, w).unwrap();
    *entry(model) = original;
    (plus - minus) / (2.0 * FD_STEP)
}

/// Runs the `protoverb` binary with `args`.
pub fn protoverb<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protoverb"))
        .args(args)
        .env("PROTOVERB_LOG", "error")
        .output()
        .expect("protoverb binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn protoverb_ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    let out = protoverb(args);
    assert!(
        out.status.success(),
        "protoverb {:?} failed: {}",
        args.iter()
            .map(|a| a.as_ref().to_string_lossy().into_owned())
            .collect::<Vec<_>>(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path_arg(path: &Path) -> String {
    path.to_str().expect("utf-8 temp path").to_string()
}
