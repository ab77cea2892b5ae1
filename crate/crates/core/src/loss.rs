//! Contrastive objectives of the head and their analytic gradients.
//!
//! With `u_i = W h_i`, `s(a, b)` the cosine similarity and `π(i)` the label of
//! item `i`:
//!
//! ```text
//! L_s   = -1/N²  Σ_{i,j} log Θ(i,j) / (Θ(i,j) + Σ_{j': π(j')≠π(i)} e^{s(u_i,u_j')})
//!         Θ(i,j) = e^{[π(i)=π(j)] · s(u_i,u_j)}
//! L_p1  = -1/N   Σ_i log e^{s(u_i,p_π(i))} / Σ_k e^{s(u_i,p_k)}
//! L_p2  = -1/N   Σ_i log e^{s(p_π(i),u_i)} / Σ_{j ∈ {i} ∪ {j: π(j)≠π(i)}} e^{s(p_π(i),u_j)}
//! L     = λ1 L_s + λ2 L_p1 + λ3 L_p2
//! ```
//!
//! The double sum in `L_s` runs over all ordered pairs including `i = j`.
//!
//! Gradients are accumulated with respect to the two similarity matrices
//! `S_uu[i][j] = s(u_i,u_j)` and `S_up[i][k] = s(u_i,p_k)` and then pushed
//! through the cosine (`∂s(a,b)/∂a = (b̂ - s·â)/‖a‖`) and the linear map.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{EmbeddingBatch, GradientSet, LossWeights, VerbalizerModel};

/// The three objective values for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub instance_instance: f64,
    pub instance_prototype: f64,
    pub prototype_instance: f64,
}

impl LossComponents {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.instance_instance * self.instance_instance
            + w.instance_prototype * self.instance_prototype
            + w.prototype_instance * self.prototype_instance
    }
}

/// Normalized embeddings, prototypes and their similarity matrices for one batch.
struct Forward<'a> {
    labels: &'a [usize],
    u_hat: Vec<Vec<f64>>,
    u_norm: Vec<f64>,
    p_hat: Vec<Vec<f64>>,
    p_norm: Vec<f64>,
    s_uu: Matrix,
    s_up: Matrix,
}

impl<'a> Forward<'a> {
    fn new(batch: &'a EmbeddingBatch, model: &VerbalizerModel) -> Result<Self> {
        if batch.dim() != model.input_dim() {
            return Err(Error::Shape(format!(
                "batch dimension {} but model expects {}",
                batch.dim(),
                model.input_dim()
            )));
        }
        batch.check_labels(model.num_classes())?;

        let n = batch.len();
        let mut u_hat = Vec::with_capacity(n);
        let mut u_norm = Vec::with_capacity(n);
        for (i, h) in batch.vectors().iter().enumerate() {
            let u = model.transform(h)?;
            let (unit, len) = linalg::normalized(&u, &format!("transformed batch item {i}"))?;
            u_hat.push(unit);
            u_norm.push(len);
        }
        let mut p_hat = Vec::with_capacity(model.num_classes());
        let mut p_norm = Vec::with_capacity(model.num_classes());
        for (k, p) in model.prototypes().row_iter().enumerate() {
            let (unit, len) = linalg::normalized(p, &format!("prototype {k}"))?;
            p_hat.push(unit);
            p_norm.push(len);
        }

        let mut s_uu = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s = linalg::dot(&u_hat[i], &u_hat[j]);
                s_uu[(i, j)] = s;
                s_uu[(j, i)] = s;
            }
        }
        let mut s_up = Matrix::zeros(n, p_hat.len());
        for (i, u) in u_hat.iter().enumerate() {
            for (k, p) in p_hat.iter().enumerate() {
                s_up[(i, k)] = linalg::dot(u, p);
            }
        }

        Ok(Self {
            labels: batch.labels(),
            u_hat,
            u_norm,
            p_hat,
            p_norm,
            s_uu,
            s_up,
        })
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    fn instance_instance(&self, scale: f64, mut d_uu: Option<&mut Matrix>) -> f64 {
        let n = self.n();
        let norm = 1.0 / (n * n) as f64;
        let mut total = 0.0;
        // Each term is written as ln(1 + competitors/numerator) so that it is
        // non-negative by construction and exactly zero without competitors.
        for i in 0..n {
            let neg: f64 = (0..n)
                .filter(|&j| self.labels[j] != self.labels[i])
                .map(|j| self.s_uu[(i, j)].exp())
                .sum();
            let mut inv_z_sum = 0.0;
            for j in 0..n {
                let same = self.labels[i] == self.labels[j];
                let exponent = if same { self.s_uu[(i, j)] } else { 0.0 };
                let theta = exponent.exp();
                let z = theta + neg;
                total += (neg * (-exponent).exp()).ln_1p();
                inv_z_sum += 1.0 / z;
                if let Some(d) = d_uu.as_deref_mut() {
                    if same {
                        d[(i, j)] += scale * norm * (theta / z - 1.0);
                    }
                }
            }
            if let Some(d) = d_uu.as_deref_mut() {
                for j in 0..n {
                    if self.labels[j] != self.labels[i] {
                        d[(i, j)] += scale * norm * self.s_uu[(i, j)].exp() * inv_z_sum;
                    }
                }
            }
        }
        total * norm
    }

    fn instance_prototype(&self, scale: f64, mut d_up: Option<&mut Matrix>) -> f64 {
        let n = self.n();
        let norm = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let logits = self.s_up.row(i);
            let z: f64 = logits.iter().map(|s| s.exp()).sum();
            let target = logits[self.labels[i]];
            let others: f64 = logits
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != self.labels[i])
                .map(|(_, s)| (s - target).exp())
                .sum();
            total += others.ln_1p();
            if let Some(d) = d_up.as_deref_mut() {
                for (k, s) in logits.iter().enumerate() {
                    let target = if k == self.labels[i] { 1.0 } else { 0.0 };
                    d[(i, k)] += scale * norm * (s.exp() / z - target);
                }
            }
        }
        total * norm
    }

    fn prototype_instance(&self, scale: f64, mut d_up: Option<&mut Matrix>) -> f64 {
        let n = self.n();
        let norm = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let c = self.labels[i];
            let members = || (0..n).filter(move |&j| j == i || self.labels[j] != c);
            let z: f64 = members().map(|j| self.s_up[(j, c)].exp()).sum();
            let own = self.s_up[(i, c)];
            let others: f64 = members()
                .filter(|&j| j != i)
                .map(|j| (self.s_up[(j, c)] - own).exp())
                .sum();
            total += others.ln_1p();
            if let Some(d) = d_up.as_deref_mut() {
                for j in members() {
                    let target = if j == i { 1.0 } else { 0.0 };
                    d[(j, c)] += scale * norm * (self.s_up[(j, c)].exp() / z - target);
                }
            }
        }
        total * norm
    }

    fn components(&self) -> LossComponents {
        LossComponents {
            instance_instance: self.instance_instance(0.0, None),
            instance_prototype: self.instance_prototype(0.0, None),
            prototype_instance: self.prototype_instance(0.0, None),
        }
    }
}

pub fn loss_components(batch: &EmbeddingBatch, model: &VerbalizerModel) -> Result<LossComponents> {
    Ok(Forward::new(batch, model)?.components())
}

/// `L_s`: pulls same-label embeddings together and pushes different labels apart.
pub fn loss_instance_instance(batch: &EmbeddingBatch, model: &VerbalizerModel) -> Result<f64> {
    Ok(Forward::new(batch, model)?.instance_instance(0.0, None))
}

/// `L_p1`: softmax of each embedding over all prototypes.
pub fn loss_instance_prototype(batch: &EmbeddingBatch, model: &VerbalizerModel) -> Result<f64> {
    Ok(Forward::new(batch, model)?.instance_prototype(0.0, None))
}

/// `L_p2`: each item's prototype against the item and the batch's other-label items.
pub fn loss_prototype_instance(batch: &EmbeddingBatch, model: &VerbalizerModel) -> Result<f64> {
    Ok(Forward::new(batch, model)?.prototype_instance(0.0, None))
}

pub fn total_loss(batch: &EmbeddingBatch, model: &VerbalizerModel, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(loss_components(batch, model)?.weighted(w))
}

/// Total loss and its exact gradients with respect to `W` and `P`.
pub fn backward(
    batch: &EmbeddingBatch,
    model: &VerbalizerModel,
    w: &LossWeights,
) -> Result<(f64, GradientSet)> {
    w.validate()?;
    let fw = Forward::new(batch, model)?;
    let n = fw.n();
    let k = model.num_classes();
    let d = model.feature_dim();

    let mut d_uu = Matrix::zeros(n, n);
    let mut d_up = Matrix::zeros(n, k);
    let components = LossComponents {
        instance_instance: fw.instance_instance(w.instance_instance, Some(&mut d_uu)),
        instance_prototype: fw.instance_prototype(w.instance_prototype, Some(&mut d_up)),
        prototype_instance: fw.prototype_instance(w.prototype_instance, Some(&mut d_up)),
    };
    let loss = components.weighted(w);
    if !loss.is_finite() {
        return Err(Error::Numerical {
            what: "loss".into(),
            index: 0,
        });
    }

    let mut grads = GradientSet::zeros_like(model);
    let mut grad_u = vec![0.0; d];
    for i in 0..n {
        grad_u.iter_mut().for_each(|g| *g = 0.0);
        let u_i = &fw.u_hat[i];
        for j in 0..n {
            // s_uu is symmetric, so both orientations of the pair feed u_i.
            let coeff = d_uu[(i, j)] + d_uu[(j, i)];
            if coeff == 0.0 || i == j {
                continue;
            }
            let s = fw.s_uu[(i, j)];
            for ((g, &uj), &ui) in grad_u.iter_mut().zip(&fw.u_hat[j]).zip(u_i) {
                *g += coeff * (uj - s * ui);
            }
        }
        for c in 0..k {
            let coeff = d_up[(i, c)];
            if coeff == 0.0 {
                continue;
            }
            let s = fw.s_up[(i, c)];
            for ((g, &pc), &ui) in grad_u.iter_mut().zip(&fw.p_hat[c]).zip(u_i) {
                *g += coeff * (pc - s * ui);
            }
            let scale = coeff / fw.p_norm[c];
            for ((g, &ui), &pc) in grads
                .d_prototypes
                .row_mut(c)
                .iter_mut()
                .zip(u_i)
                .zip(&fw.p_hat[c])
            {
                *g += scale * (ui - s * pc);
            }
        }
        let inv_norm = 1.0 / fw.u_norm[i];
        grads
            .d_transform
            .add_outer(inv_norm, &grad_u, &batch.vectors()[i]);
    }
    grads.check_finite()?;
    Ok((loss, grads))
}
