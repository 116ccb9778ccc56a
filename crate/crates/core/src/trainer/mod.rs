//! Mixed-modality minibatch SGD with momentum, weight decay and a step
//! learning-rate schedule.

mod config;

use std::io::Write;

pub use config::TrainConfig;

use crate::error::{Error, Result};
use crate::evalkit::{head_accuracy, ModalityAccuracy};
use crate::netcore::{
    backward, embed_samples, forward_batch, loss_from_forward, update_running_stats, Gradients,
    Group, Mode, NetworkSpec, ParamStore, BN_MOMENTUM,
};
use crate::rng::{self, below, Stream};
use crate::synthgen::{Dataset, Modality, Sample};

/// Momentum buffers (one per parameter tensor) and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub velocity: ParamStore,
    pub iteration: usize,
}

impl OptState {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        Ok(Self {
            velocity: ParamStore::zeroed(spec)?,
            iteration: 0,
        })
    }
}

/// Indices into `train.samples`: `round(batch_size * modality_mix)` A-samples
/// followed by B-samples, each drawn uniformly with replacement.
pub fn make_minibatch(
    train: &Dataset,
    config: &TrainConfig,
    rng: &mut Stream,
) -> Result<Vec<usize>> {
    let n_a = (config.batch_size as f64 * config.modality_mix).round() as usize;
    let n_b = config.batch_size - n_a;
    let mut batch = Vec::with_capacity(config.batch_size);
    for (modality, count) in [(Modality::A, n_a), (Modality::B, n_b)] {
        if count == 0 {
            continue;
        }
        let pool: Vec<usize> = (0..train.samples.len())
            .filter(|&i| train.samples[i].modality == modality)
            .collect();
        if pool.is_empty() {
            return Err(Error::invalid(format!(
                "minibatch needs modality {modality} but the training set has none"
            )));
        }
        batch.extend((0..count).map(|_| pool[below(rng, pool.len())]));
    }
    Ok(batch)
}

/// One SGD update: `v = momentum*v + g + weight_decay*p`, `p -= lr*v`.
/// Running statistics are left alone, and so is every tensor of a branch
/// that saw no samples in this batch.
pub fn sgd_step(
    spec: &NetworkSpec,
    params: &mut ParamStore,
    grads: &Gradients,
    opt: &mut OptState,
    config: &TrainConfig,
) -> Result<()> {
    params.check_shapes(spec)?;
    grads.grads.check_shapes(spec)?;
    opt.velocity.check_shapes(spec)?;
    let g_all = grads.grads.tensors(spec);
    if let Some((slot, _)) = g_all.iter().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient of {:?} {:?}",
            slot.group, slot.role
        )));
    }
    let lr = config.lr(opt.iteration);
    let p_all = params.tensors_mut(spec);
    let v_all = opt.velocity.tensors_mut(spec);
    for (((slot, p), (_, v)), (_, g)) in p_all.into_iter().zip(v_all).zip(g_all) {
        if !slot.role.trainable() {
            continue;
        }
        if let Group::Branch(m) = slot.group {
            if !grads.active(m) {
                continue;
            }
        }
        let (p, v) = (p.data_mut(), v.data_mut());
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g.data()) {
            *vi = config.momentum * *vi + gi + config.weight_decay * *pi;
            *pi -= lr * *vi;
        }
    }
    opt.iteration += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    /// Steps completed.
    pub iter: usize,
    /// Mean weighted training loss over the steps since the previous row.
    pub loss_total: f64,
    pub loss_per_covariate: Vec<f64>,
    /// Validation accuracy per covariate.
    pub val_accuracy: Vec<ModalityAccuracy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub covariates: Vec<String>,
    pub rows: Vec<HistoryRow>,
    /// Weighted training loss of every step.
    pub step_losses: Vec<f64>,
}

impl History {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["iter".to_string(), "loss_total".to_string()];
        header.extend(self.covariates.iter().map(|c| format!("loss_{c}")));
        for c in &self.covariates {
            header.push(format!("val_acc_{c}_A"));
            header.push(format!("val_acc_{c}_B"));
        }
        writeln!(w, "{}", header.join(","))?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut cells = vec![r.iter.to_string(), r.loss_total.to_string()];
            cells.extend(r.loss_per_covariate.iter().map(|l| l.to_string()));
            for acc in &r.val_accuracy {
                cells.push(fmt(acc.a));
                cells.push(fmt(acc.b));
            }
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub history: History,
}

fn check_schema(spec: &NetworkSpec, ds: &Dataset, what: &str) -> Result<()> {
    if ds.schema != spec.heads {
        return Err(Error::invalid(format!(
            "{what} schema `{}` differs from network heads `{}`",
            ds.schema, spec.heads
        )));
    }
    for m in [Modality::A, Modality::B] {
        if ds.shape(m) != spec.input(m) {
            return Err(Error::shape(format!(
                "{what} modality {m} shape {} differs from network input {}",
                ds.shape(m),
                spec.input(m)
            )));
        }
    }
    Ok(())
}

/// Trains from the seeded initialization for `config.total_iters` steps.
pub fn train(
    spec: &NetworkSpec,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = ParamStore::init(spec, rng::derive_seed(config.seed, rng::tag("init")))?;
    train_from(spec, params, train_set, val_set, config)
}

/// Trains starting from `params`.
pub fn train_from(
    spec: &NetworkSpec,
    mut params: ParamStore,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_schema(spec, train_set, "training set")?;
    if let Some(v) = val_set {
        check_schema(spec, v, "validation set")?;
    }
    let lambda = config.lambda_for(&spec.heads)?;
    let covariates: Vec<String> = spec
        .heads
        .covariates()
        .iter()
        .map(|c| c.name.clone())
        .collect();
    let mut opt = OptState::new(spec)?;
    let mut batch_rng = rng::child(config.seed, "batches");
    let mut history = History {
        covariates,
        rows: Vec::new(),
        step_losses: Vec::with_capacity(config.total_iters),
    };
    let mut window_total = 0.0;
    let mut window_cov = vec![0.0; spec.heads.len()];
    let mut window_len = 0usize;
    let val_refs: Vec<&Sample> = val_set
        .map(|v| v.samples.iter().collect())
        .unwrap_or_default();

    for iter in 0..config.total_iters {
        let idx = make_minibatch(train_set, config, &mut batch_rng)?;
        let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set.samples[i]).collect();
        let diverged = |reason: String| Error::Divergence {
            iteration: iter,
            reason,
        };
        let fwd = forward_batch(spec, &params, &batch, Mode::Train)
            .map_err(|e| diverged(e.to_string()))?;
        let loss = loss_from_forward(spec, &params, &batch, &lambda, &fwd)?;
        if !loss.total.is_finite() {
            return Err(diverged(format!("loss is {}", loss.total)));
        }
        let grads = backward(spec, &params, &batch, &lambda, &fwd)?;
        sgd_step(spec, &mut params, &grads, &mut opt, config)
            .map_err(|e| diverged(e.to_string()))?;
        update_running_stats(&mut params, &fwd, BN_MOMENTUM);
        if !params.is_finite(spec) {
            return Err(diverged("parameters became non-finite".into()));
        }

        history.step_losses.push(loss.total);
        window_total += loss.total;
        for (w, l) in window_cov.iter_mut().zip(&loss.per_covariate) {
            *w += l;
        }
        window_len += 1;
        let done = iter + 1;
        if config.val_interval > 0 && done % config.val_interval == 0 {
            let n = window_len as f64;
            let val_accuracy = if val_refs.is_empty() {
                vec![ModalityAccuracy::default(); spec.heads.len()]
            } else {
                let emb = embed_samples(spec, &params, &val_refs)?;
                (0..spec.heads.len())
                    .map(|c| head_accuracy(&params, &emb, &val_refs, c))
                    .collect::<Result<_>>()?
            };
            history.rows.push(HistoryRow {
                iter: done,
                loss_total: window_total / n,
                loss_per_covariate: window_cov.iter().map(|s| s / n).collect(),
                val_accuracy,
            });
            window_total = 0.0;
            window_cov.iter_mut().for_each(|w| *w = 0.0);
            window_len = 0;
        }
    }
    Ok(TrainOutcome { params, history })
}
