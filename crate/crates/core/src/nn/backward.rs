//! Reverse-mode differentiation of the bits-scaled cross-entropy loss with
//! respect to every trainable parameter.

use ndarray::{Array1, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Matrix;

use super::forward::{ForwardTrace, LayerCache, Mode};
use super::loss::softmax;
use super::{LayerSpec, NetworkState};

#[derive(Debug, Clone)]
pub struct AffineGrads<F> {
    pub weight: Matrix<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

/// Gradients in forward layer order, one entry per parameterized layer.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub affine: Vec<AffineGrads<F>>,
    pub batch_norm: Vec<BatchNormGrads<F>>,
}

/// Differentiate the mean cross-entropy (in bits) of `trace`'s logits against
/// `labels`. The trace must come from a train-mode forward pass on this
/// state; dropout masks and batch statistics are reused from the trace.
///
/// The logit gradient is `(softmax - onehot) / (batch * ln 2)`; everything
/// else follows by the chain rule.
pub fn backward<F: Scalar>(
    state: &NetworkState<F>,
    trace: &ForwardTrace<F>,
    labels: &[usize],
) -> Result<Gradients<F>> {
    let spec = &state.spec;
    if trace.mode != Mode::Train {
        return Err(Error::state("backward needs a train-mode trace"));
    }
    if trace.outputs.len() != spec.layers.len() {
        return Err(Error::state(format!(
            "trace has {} layer outputs, state expects {}",
            trace.outputs.len(),
            spec.layers.len()
        )));
    }
    if trace.input.ncols() != spec.input_dim {
        return Err(Error::state("trace input width does not match this state"));
    }
    let widths = spec.layer_widths();
    for (li, out) in trace.outputs.iter().enumerate() {
        if out.ncols() != widths[li] {
            return Err(Error::state(format!(
                "trace layer {li} is {} wide, state expects {}",
                out.ncols(),
                widths[li]
            )));
        }
    }
    let batch = trace.batch_len();
    if labels.len() != batch {
        return Err(Error::shape(format!(
            "{batch} trace rows vs {} labels",
            labels.len()
        )));
    }

    // d = dL/dlogits for L = mean_i -log2 softmax[label_i].
    let mut d = softmax(trace.logits());
    let scale = F::one() / (F::from_f64(batch as f64) * F::ln2());
    for (mut row, &label) in d.rows_mut().into_iter().zip(labels) {
        if label >= spec.output_classes {
            return Err(Error::input(format!(
                "label {label} out of range for {} classes",
                spec.output_classes
            )));
        }
        row[label] = row[label] - F::one();
        row.mapv_inplace(|v| v * scale);
    }

    let mut affine_rev: Vec<AffineGrads<F>> = Vec::with_capacity(state.affine.len());
    let mut bn_rev: Vec<BatchNormGrads<F>> = Vec::with_capacity(state.batch_norm.len());
    let mut affine_idx = state.affine.len();
    let mut bn_idx = state.batch_norm.len();

    for li in (0..spec.layers.len()).rev() {
        let layer_input = if li == 0 {
            &trace.input
        } else {
            &trace.outputs[li - 1]
        };
        let layer_output = &trace.outputs[li];
        match spec.layers[li] {
            LayerSpec::Affine { .. } => {
                affine_idx -= 1;
                let params = &state.affine[affine_idx];
                affine_rev.push(AffineGrads {
                    weight: layer_input.t().dot(&d),
                    bias: d.sum_axis(Axis(0)),
                });
                d = d.dot(&params.weight.t());
            }
            LayerSpec::Relu => {
                d.zip_mut_with(layer_output, |g, &y| {
                    if y <= F::zero() {
                        *g = F::zero();
                    }
                });
            }
            LayerSpec::LeakyRelu { slope } => {
                let s = F::from_f64(slope);
                // slope > 0 keeps the sign, so the output sign recovers the
                // input sign.
                d.zip_mut_with(layer_output, |g, &y| {
                    if y <= F::zero() {
                        *g = *g * s;
                    }
                });
            }
            LayerSpec::BatchNorm { .. } => {
                bn_idx -= 1;
                let params = &state.batch_norm[bn_idx];
                let LayerCache::BatchNorm { x_hat, inv_std } = &trace.caches[li] else {
                    return Err(Error::state(format!(
                        "layer {li}: batch_norm cache missing from trace"
                    )));
                };
                let dgamma = (&d * x_hat).sum_axis(Axis(0));
                let dbeta = d.sum_axis(Axis(0));
                let n_inv = F::one() / F::from_f64(batch as f64);
                let mean_d = &dbeta * n_inv;
                let mean_d_xhat = &dgamma * n_inv;
                let coeff = &params.gamma * inv_std;
                d = (d - &mean_d - x_hat * &mean_d_xhat) * &coeff;
                bn_rev.push(BatchNormGrads {
                    gamma: dgamma,
                    beta: dbeta,
                });
            }
            LayerSpec::Dropout { drop_prob } => {
                let LayerCache::Dropout { mask } = &trace.caches[li] else {
                    return Err(Error::state(format!(
                        "layer {li}: dropout cache missing from trace"
                    )));
                };
                let scale = F::from_f64(1.0 / (1.0 - drop_prob));
                d = d * mask * scale;
            }
        }
    }

    affine_rev.reverse();
    bn_rev.reverse();
    Ok(Gradients {
        affine: affine_rev,
        batch_norm: bn_rev,
    })
}
