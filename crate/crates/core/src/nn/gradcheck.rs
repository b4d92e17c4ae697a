//! Central-difference verification of the backward pass.
//!
//! Every parameter is perturbed twice and the loss re-evaluated from a clone
//! of the base state, so dropout masks and batch statistics are identical
//! across evaluations and match the analytic trace.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, tag};
use crate::scalar::Scalar;
use crate::Matrix64;

use super::backward::{backward, Gradients};
use super::forward::{forward, Mode};
use super::loss::softmax_cross_entropy_bits;
use super::{LayerSpec, NetworkSpec, NetworkState};

const MAX_PARAMS: usize = 500;
const BATCH: usize = 8;

/// Floors the relative-error denominator: gradients below this magnitude are
/// compared on an absolute scale, where finite-difference noise would
/// otherwise dominate the ratio.
const DENOM_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
enum ParamRef {
    AffineWeight(usize, usize, usize),
    AffineBias(usize, usize),
    BnGamma(usize, usize),
    BnBeta(usize, usize),
}

fn enumerate_params(state: &NetworkState<f64>) -> Vec<ParamRef> {
    let mut refs = Vec::with_capacity(state.num_params());
    for (a, p) in state.affine.iter().enumerate() {
        let (rows, cols) = p.weight.dim();
        for i in 0..rows {
            for j in 0..cols {
                refs.push(ParamRef::AffineWeight(a, i, j));
            }
        }
        for i in 0..p.bias.len() {
            refs.push(ParamRef::AffineBias(a, i));
        }
    }
    for (b, p) in state.batch_norm.iter().enumerate() {
        for i in 0..p.gamma.len() {
            refs.push(ParamRef::BnGamma(b, i));
        }
        for i in 0..p.beta.len() {
            refs.push(ParamRef::BnBeta(b, i));
        }
    }
    refs
}

fn nudge(state: &mut NetworkState<f64>, r: ParamRef, delta: f64) {
    match r {
        ParamRef::AffineWeight(a, i, j) => state.affine[a].weight[[i, j]] += delta,
        ParamRef::AffineBias(a, i) => state.affine[a].bias[i] += delta,
        ParamRef::BnGamma(b, i) => state.batch_norm[b].gamma[i] += delta,
        ParamRef::BnBeta(b, i) => state.batch_norm[b].beta[i] += delta,
    }
}

fn analytic(grads: &Gradients<f64>, r: ParamRef) -> f64 {
    match r {
        ParamRef::AffineWeight(a, i, j) => grads.affine[a].weight[[i, j]],
        ParamRef::AffineBias(a, i) => grads.affine[a].bias[i],
        ParamRef::BnGamma(b, i) => grads.batch_norm[b].gamma[i],
        ParamRef::BnBeta(b, i) => grads.batch_norm[b].beta[i],
    }
}

/// Compare analytic gradients against central differences on every parameter
/// of a freshly initialized network. Returns the maximum relative error.
pub fn gradient_check(spec: &NetworkSpec, seed: u64, step: f64) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::input(format!(
            "finite-difference step must be finite and > 0, got {step}"
        )));
    }
    spec.validate()?;
    if spec.num_params() > MAX_PARAMS {
        return Err(Error::input(format!(
            "{} parameters exceed the {MAX_PARAMS}-parameter gradient-check budget",
            spec.num_params()
        )));
    }

    let mut data_rng = rng_from_seed(derive_seed(seed, &[tag::GRADCHECK_DATA]));
    let x = Matrix64::from_shape_fn((BATCH, spec.input_dim), |_| {
        f64::standard_normal(&mut data_rng)
    });
    let labels: Vec<usize> = (0..BATCH)
        .map(|_| data_rng.random_range(0..spec.output_classes))
        .collect();

    let base = NetworkState::<f64>::init(spec, seed)?;
    let loss_of = |state: &NetworkState<f64>| -> Result<f64> {
        let mut s = state.clone();
        let trace = forward(&mut s, &x, Mode::Train)?;
        Ok(softmax_cross_entropy_bits(trace.logits(), &labels)?)
    };

    let grads = {
        let mut s = base.clone();
        let trace = forward(&mut s, &x, Mode::Train)?;
        backward(&base, &trace, &labels)?
    };

    let mut max_rel = 0.0f64;
    for r in enumerate_params(&base) {
        let mut plus = base.clone();
        nudge(&mut plus, r, step);
        let mut minus = base.clone();
        nudge(&mut minus, r, -step);
        let numeric = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * step);
        let a = analytic(&grads, r);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DENOM_FLOOR);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

/// The layer-kind coverage suite used by the CLI `gradcheck` subcommand and
/// the verification tests: each case pairs an architecture with its error
/// threshold (batch-norm paths tolerate 1e-3, the rest 1e-4).
pub struct GradCheckCase {
    pub name: &'static str,
    pub spec: NetworkSpec,
    pub threshold: f64,
}

pub fn standard_checks() -> Vec<GradCheckCase> {
    vec![
        GradCheckCase {
            name: "relu",
            spec: NetworkSpec::relu_stack(6, &[10, 7, 5], 3),
            threshold: 1e-4,
        },
        GradCheckCase {
            name: "leaky_relu",
            spec: NetworkSpec {
                input_dim: 5,
                layers: vec![
                    LayerSpec::affine(8),
                    LayerSpec::leaky_relu(0.2),
                    LayerSpec::affine(6),
                    LayerSpec::leaky_relu(0.2),
                    LayerSpec::affine(3),
                ],
                output_classes: 3,
            },
            threshold: 1e-4,
        },
        GradCheckCase {
            name: "dropout",
            spec: NetworkSpec {
                input_dim: 5,
                layers: vec![
                    LayerSpec::affine(8),
                    LayerSpec::Relu,
                    LayerSpec::dropout(0.5),
                    LayerSpec::affine(4),
                ],
                output_classes: 4,
            },
            threshold: 1e-4,
        },
        GradCheckCase {
            name: "batch_norm",
            spec: NetworkSpec {
                input_dim: 5,
                layers: vec![
                    LayerSpec::affine(8),
                    LayerSpec::batch_norm(),
                    LayerSpec::Relu,
                    LayerSpec::affine(3),
                ],
                output_classes: 3,
            },
            threshold: 1e-3,
        },
        GradCheckCase {
            name: "probe_stack",
            spec: NetworkSpec {
                input_dim: 4,
                layers: vec![
                    LayerSpec::affine(8),
                    LayerSpec::leaky_relu(0.2),
                    LayerSpec::batch_norm(),
                    LayerSpec::dropout(0.7),
                    LayerSpec::affine(6),
                    LayerSpec::leaky_relu(0.2),
                    LayerSpec::batch_norm(),
                    LayerSpec::dropout(0.7),
                    LayerSpec::affine(2),
                ],
                output_classes: 2,
            },
            threshold: 1e-3,
        },
    ]
}
