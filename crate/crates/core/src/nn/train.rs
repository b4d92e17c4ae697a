//! SGD loop: velocity update with optional momentum and weight decay, epoch
//! training over shuffled minibatches, and eval-mode metrics.

use ndarray::{Axis, Zip};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Matrix;

use super::backward::{backward, Gradients};
use super::forward::{forward, forward_eval, Mode};
use super::loss::{accuracy, softmax_cross_entropy_bits};
use super::{NetworkState, TrainConfig};

/// `base * anneal_factor^epoch`. An anneal factor of 1 keeps the rate flat.
pub fn effective_lr(base: f64, anneal_factor: f64, epoch: usize) -> f64 {
    base * anneal_factor.powi(epoch as i32)
}

/// One optimizer step over every parameter:
/// `v <- momentum*v + grad + weight_decay*w; w <- w - lr*v`.
pub fn sgd_step<F: Scalar>(
    state: &mut NetworkState<F>,
    grads: &Gradients<F>,
    effective_lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.affine.len() != state.affine.len() || grads.batch_norm.len() != state.batch_norm.len()
    {
        return Err(Error::state("gradients do not match this state's layout"));
    }
    let lr = F::from_f64(effective_lr);
    let m = F::from_f64(momentum);
    let wd = F::from_f64(weight_decay);

    fn update<F: Scalar, D: ndarray::Dimension>(
        w: &mut ndarray::Array<F, D>,
        v: &mut ndarray::Array<F, D>,
        g: &ndarray::Array<F, D>,
        lr: F,
        m: F,
        wd: F,
    ) -> Result<()> {
        if g.raw_dim() != w.raw_dim() {
            return Err(Error::state("gradient shape does not match parameter"));
        }
        Zip::from(&mut *v).and(g).and(&*w).for_each(|v, &g, &w| {
            *v = m * *v + g + wd * w;
        });
        Zip::from(w).and(&*v).for_each(|w, &v| {
            *w = *w - lr * v;
        });
        Ok(())
    }

    for (p, g) in state.affine.iter_mut().zip(&grads.affine) {
        update(&mut p.weight, &mut p.vel_weight, &g.weight, lr, m, wd)?;
        update(&mut p.bias, &mut p.vel_bias, &g.bias, lr, m, wd)?;
    }
    for (p, g) in state.batch_norm.iter_mut().zip(&grads.batch_norm) {
        update(&mut p.gamma, &mut p.vel_gamma, &g.gamma, lr, m, wd)?;
        update(&mut p.beta, &mut p.vel_beta, &g.beta, lr, m, wd)?;
    }

    let finite = state
        .affine
        .iter()
        .all(|p| p.weight.iter().all(|v| v.is_finite()) && p.bias.iter().all(|v| v.is_finite()))
        && state.batch_norm.iter().all(|p| {
            p.gamma.iter().all(|v| v.is_finite()) && p.beta.iter().all(|v| v.is_finite())
        });
    if !finite {
        return Err(Error::numerical("sgd step produced non-finite parameters"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub train_loss_bits: f64,
    pub train_acc: f64,
    /// Optimizer steps taken this epoch.
    pub steps: usize,
}

/// One pass over the data in shuffled minibatches. The shuffle comes from the
/// state's own generator, so a fixed state and data reproduce exactly. Loss
/// and accuracy are accumulated from the train-mode forward passes as the
/// epoch proceeds. Increments the state's epoch counter.
pub fn train_epoch<F: Scalar>(
    state: &mut NetworkState<F>,
    inputs: &Matrix<F>,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<EpochMetrics> {
    train_epoch_opts(state, inputs, labels, config, false)
}

/// As [`train_epoch`], optionally dropping a trailing partial batch. Probe
/// decoders train with `drop_last` so batch-norm never sees tiny batches.
pub(crate) fn train_epoch_opts<F: Scalar>(
    state: &mut NetworkState<F>,
    inputs: &Matrix<F>,
    labels: &[usize],
    config: &TrainConfig,
    drop_last: bool,
) -> Result<EpochMetrics> {
    config.validate()?;
    if inputs.nrows() == 0 {
        return Err(Error::input("train_epoch on an empty dataset"));
    }
    if inputs.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} input rows vs {} labels",
            inputs.nrows(),
            labels.len()
        )));
    }
    if drop_last && inputs.nrows() < config.batch_size {
        return Err(Error::input(
            "drop_last with batch_size larger than the dataset leaves nothing to train on",
        ));
    }

    let lr = effective_lr(config.learning_rate, config.anneal_factor, state.epoch);
    let mut order: Vec<usize> = (0..inputs.nrows()).collect();
    order.shuffle(&mut state.rng);

    let mut loss_sum = 0.0;
    let mut hit_sum = 0.0;
    let mut seen = 0usize;
    let mut steps = 0usize;
    for chunk in order.chunks(config.batch_size) {
        if drop_last && chunk.len() < config.batch_size {
            break;
        }
        let x = inputs.select(Axis(0), chunk);
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let trace = forward(state, &x, Mode::Train)?;
        let loss = softmax_cross_entropy_bits(trace.logits(), &y)?.as_f64();
        let acc = accuracy(trace.logits(), &y)?;
        let grads = backward(state, &trace, &y)?;
        sgd_step(state, &grads, lr, config.momentum, config.weight_decay)?;
        loss_sum += loss * chunk.len() as f64;
        hit_sum += acc * chunk.len() as f64;
        seen += chunk.len();
        steps += 1;
    }
    state.bump_epoch();
    Ok(EpochMetrics {
        train_loss_bits: loss_sum / seen as f64,
        train_acc: hit_sum / seen as f64,
        steps,
    })
}

/// Eval-mode accuracy and mean loss in bits. Deterministic.
pub fn evaluate<F: Scalar>(
    state: &NetworkState<F>,
    inputs: &Matrix<F>,
    labels: &[usize],
) -> Result<(f64, f64)> {
    let trace = forward_eval(state, inputs)?;
    let acc = accuracy(trace.logits(), labels)?;
    let loss = softmax_cross_entropy_bits(trace.logits(), labels)?.as_f64();
    Ok((acc, loss))
}
