//! Embedding forward passes, shared classifier heads, the weighted
//! multi-covariate loss and its gradients.
//!
//! Samples are routed through their own modality branch only; the heads are
//! shared. Each covariate term is the mean cross-entropy over the whole
//! batch, weighted by its lambda.

use super::layers::{self, Batch, BnStats, LayerCache, Mode};
use super::params::ParamStore;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::par;
use crate::synthgen::{Modality, Sample};

/// Cached activations of one branch over its sub-batch.
#[derive(Debug, Clone)]
pub struct BranchForward {
    /// Positions of this branch's samples in the batch.
    pub batch_index: Vec<usize>,
    pub(crate) caches: Vec<LayerCache>,
    /// Batch statistics for every batchnorm layer that normalized with them.
    pub bn_stats: Vec<Option<BnStats>>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// One embedding per batch sample, in batch order.
    pub embeddings: Vec<Vec<f64>>,
    pub mode: Mode,
    pub a: Option<BranchForward>,
    pub b: Option<BranchForward>,
}

impl ForwardPass {
    pub fn branch(&self, modality: Modality) -> Option<&BranchForward> {
        match modality {
            Modality::A => self.a.as_ref(),
            Modality::B => self.b.as_ref(),
        }
    }
}

fn branch_forward(
    spec: &NetworkSpec,
    params: &ParamStore,
    modality: Modality,
    inputs: Batch,
    mode: Mode,
) -> Result<(Batch, Vec<LayerCache>, Vec<Option<BnStats>>)> {
    let shapes = spec.shapes(modality)?;
    let mut xs = inputs;
    let mut caches = Vec::new();
    let mut stats = Vec::new();
    for (i, (layer, lp)) in spec
        .layers(modality)
        .iter()
        .zip(params.branch(modality))
        .enumerate()
    {
        let (ys, cache, st) = layers::forward(layer, lp, &shapes[i], &shapes[i + 1], xs, mode);
        xs = ys;
        caches.push(cache);
        stats.push(st);
    }
    Ok((xs, caches, stats))
}

/// Runs every sample through its modality branch. Each branch normalizes
/// over its own sub-batch in train mode.
pub fn forward_batch(
    spec: &NetworkSpec,
    params: &ParamStore,
    batch: &[&Sample],
    mode: Mode,
) -> Result<ForwardPass> {
    let mut embeddings = vec![Vec::new(); batch.len()];
    let mut branches = [None, None];
    for (slot, modality) in [Modality::A, Modality::B].into_iter().enumerate() {
        let batch_index: Vec<usize> = (0..batch.len())
            .filter(|&i| batch[i].modality == modality)
            .collect();
        if batch_index.is_empty() {
            continue;
        }
        let want = &spec.input(modality).0;
        let mut inputs = Vec::with_capacity(batch_index.len());
        for &i in &batch_index {
            let got = batch[i].features.shape();
            if got != want.as_slice() {
                return Err(Error::shape(format!(
                    "modality {modality} sample has shape {got:?}, branch expects {want:?}"
                )));
            }
            inputs.push(batch[i].features.data().to_vec());
        }
        let (out, caches, bn_stats) = branch_forward(spec, params, modality, inputs, mode)?;
        for (&i, e) in batch_index.iter().zip(out) {
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("embedding of batch sample {i}")));
            }
            embeddings[i] = e;
        }
        branches[slot] = Some(BranchForward {
            batch_index,
            caches,
            bn_stats,
        });
    }
    let [a, b] = branches;
    Ok(ForwardPass {
        embeddings,
        mode,
        a,
        b,
    })
}

/// Embeds a single sample. In train mode batchnorm falls back to running
/// statistics, since a batch of one has no variance.
pub fn forward_embed(
    spec: &NetworkSpec,
    params: &ParamStore,
    sample: &Sample,
    mode: Mode,
) -> Result<(Vec<f64>, ForwardPass)> {
    let fwd = forward_batch(spec, params, &[sample], mode)?;
    Ok((fwd.embeddings[0].clone(), fwd))
}

/// Logits of the head for `covariate_index`. The same head serves both
/// modalities.
pub fn classify(
    params: &ParamStore,
    embedding: &[f64],
    covariate_index: usize,
) -> Result<Vec<f64>> {
    let head = params.heads.get(covariate_index).ok_or(Error::OutOfRange {
        what: "covariate index",
        index: covariate_index,
        limit: params.heads.len(),
    })?;
    let d = embedding.len();
    if head.weight.shape()[1] != d {
        return Err(Error::shape(format!(
            "embedding length {d}, head expects {}",
            head.weight.shape()[1]
        )));
    }
    Ok(head
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(k, b)| {
            b + head.weight.data()[k * d..(k + 1) * d]
                .iter()
                .zip(embedding)
                .map(|(w, e)| w * e)
                .sum::<f64>()
        })
        .collect())
}

/// Softmax cross-entropy with max subtraction; returns the loss and
/// `softmax - one_hot(label)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::OutOfRange {
            what: "label",
            index: label,
            limit: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.into_iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// `sum_C lambda_C * per_covariate[C]`
    pub total: f64,
    /// Unweighted batch-mean cross-entropy per covariate.
    pub per_covariate: Vec<f64>,
}

fn check_lambda(spec: &NetworkSpec, lambda: &[f64]) -> Result<()> {
    if lambda.len() != spec.heads.len() {
        return Err(Error::invalid(format!(
            "{} lambda weights for {} covariates",
            lambda.len(),
            spec.heads.len()
        )));
    }
    Ok(())
}

/// Loss from an existing forward pass.
pub fn loss_from_forward(
    spec: &NetworkSpec,
    params: &ParamStore,
    batch: &[&Sample],
    lambda: &[f64],
    fwd: &ForwardPass,
) -> Result<LossReport> {
    check_lambda(spec, lambda)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = batch.len() as f64;
    let per_sample = par::map_range(batch.len(), |i| -> Result<Vec<f64>> {
        (0..spec.heads.len())
            .map(|c| {
                let logits = classify(params, &fwd.embeddings[i], c)?;
                Ok(cross_entropy(&logits, batch[i].labels[c])?.0)
            })
            .collect()
    });
    let mut sums = vec![0.0; spec.heads.len()];
    for losses in per_sample {
        for (s, l) in sums.iter_mut().zip(losses?) {
            *s += l;
        }
    }
    let per_covariate: Vec<f64> = sums.into_iter().map(|s| s / n).collect();
    let total = per_covariate
        .iter()
        .zip(lambda)
        .filter(|(_, l)| **l != 0.0)
        .map(|(m, l)| l * m)
        .sum();
    Ok(LossReport {
        total,
        per_covariate,
    })
}

/// Forward pass in train mode followed by the weighted loss.
pub fn total_loss(
    spec: &NetworkSpec,
    params: &ParamStore,
    batch: &[&Sample],
    lambda: &[f64],
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let fwd = forward_batch(spec, params, batch, Mode::Train)?;
    loss_from_forward(spec, params, batch, lambda, &fwd)
}

/// Parameter gradients. `active_*` is false when the batch held no samples
/// of that modality; its tensors are then exactly zero and the optimizer
/// leaves that branch alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grads: ParamStore,
    pub active_a: bool,
    pub active_b: bool,
}

impl Gradients {
    pub fn active(&self, modality: Modality) -> bool {
        match modality {
            Modality::A => self.active_a,
            Modality::B => self.active_b,
        }
    }
}

pub fn backward(
    spec: &NetworkSpec,
    params: &ParamStore,
    batch: &[&Sample],
    lambda: &[f64],
    fwd: &ForwardPass,
) -> Result<Gradients> {
    check_lambda(spec, lambda)?;
    if batch.is_empty() || fwd.embeddings.len() != batch.len() {
        return Err(Error::invalid("forward pass does not match batch"));
    }
    let n = batch.len() as f64;
    let d = spec.embedding_dim;
    let active: Vec<usize> = (0..lambda.len()).filter(|&c| lambda[c] != 0.0).collect();

    // per sample: d(loss)/d(embedding) and scaled logit gradients per head
    let per_sample = par::map_range(batch.len(), |i| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let e = &fwd.embeddings[i];
        let mut de = vec![0.0; d];
        let mut head_g = Vec::with_capacity(active.len());
        for &c in &active {
            let logits = classify(params, e, c)?;
            let (_, mut g) = cross_entropy(&logits, batch[i].labels[c])?;
            let scale = lambda[c] / n;
            g.iter_mut().for_each(|v| *v *= scale);
            let w = params.heads[c].weight.data();
            for (k, gk) in g.iter().enumerate() {
                for (j, dj) in de.iter_mut().enumerate() {
                    *dj += gk * w[k * d + j];
                }
            }
            head_g.push(g);
        }
        Ok((de, head_g))
    });

    let mut grads = ParamStore::zeroed(spec)?;
    let mut d_embed = Vec::with_capacity(batch.len());
    for (i, item) in per_sample.into_iter().enumerate() {
        let (de, head_g) = item?;
        let e = &fwd.embeddings[i];
        for (&c, g) in active.iter().zip(&head_g) {
            let head = &mut grads.heads[c];
            let w = head.weight.data_mut();
            for (k, gk) in g.iter().enumerate() {
                for j in 0..d {
                    w[k * d + j] += gk * e[j];
                }
            }
            for (b, gk) in head.bias.data_mut().iter_mut().zip(g) {
                *b += gk;
            }
        }
        d_embed.push(de);
    }

    let mut active_flags = [false, false];
    for (slot, modality) in [Modality::A, Modality::B].into_iter().enumerate() {
        let Some(bf) = fwd.branch(modality) else {
            continue;
        };
        active_flags[slot] = true;
        let shapes = spec.shapes(modality)?;
        let layers_spec = spec.layers(modality);
        if bf.caches.len() != layers_spec.len() {
            return Err(Error::invalid("cache does not match network spec"));
        }
        let mut dys: Batch = bf.batch_index.iter().map(|&i| d_embed[i].clone()).collect();
        for li in (0..layers_spec.len()).rev() {
            let (dxs, layer_grads) = layers::backward(
                &layers_spec[li],
                &params.branch(modality)[li],
                &shapes[li],
                &shapes[li + 1],
                &bf.caches[li],
                dys,
            );
            grads.branch_mut(modality)[li].tensors = layer_grads;
            dys = dxs;
        }
    }
    Ok(Gradients {
        grads,
        active_a: active_flags[0],
        active_b: active_flags[1],
    })
}

/// `a·b / (|a| |b|)`. A zero-norm argument is an error.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("lengths {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Applies the batch statistics of a train-mode pass to the running
/// statistics: `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running_stats(params: &mut ParamStore, fwd: &ForwardPass, momentum: f64) {
    for modality in [Modality::A, Modality::B] {
        let Some(bf) = fwd.branch(modality) else {
            continue;
        };
        for (lp, st) in params.branch_mut(modality).iter_mut().zip(&bf.bn_stats) {
            if let Some(st) = st {
                for (r, m) in lp.tensors[2].data_mut().iter_mut().zip(&st.mean) {
                    *r = momentum * *r + (1.0 - momentum) * m;
                }
                for (r, v) in lp.tensors[3].data_mut().iter_mut().zip(&st.var) {
                    *r = momentum * *r + (1.0 - momentum) * v;
                }
            }
        }
    }
}

/// Infer-mode embeddings of many samples, in order.
pub fn embed_samples(
    spec: &NetworkSpec,
    params: &ParamStore,
    samples: &[&Sample],
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    Ok(forward_batch(spec, params, samples, Mode::Infer)?.embeddings)
}
