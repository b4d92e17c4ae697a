//! Forward pass. Train mode normalizes with batch statistics and applies
//! inverted dropout (survivors scaled by 1/(1-p)); eval mode uses running
//! statistics and passes dropout through unchanged.

use ndarray::{Array1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::ChaCha8Rng;
use crate::scalar::Scalar;
use crate::Matrix;

use super::state::{AffineParams, BatchNormParams};
use super::{LayerSpec, NetworkSpec, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-layer state the backward pass needs beyond the outputs themselves.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache<F> {
    None,
    Dropout { mask: Matrix<F> },
    BatchNorm { x_hat: Matrix<F>, inv_std: Array1<F> },
}

/// Everything recorded during one forward pass: the input, each layer's
/// post-activation output (the last one being the logits), and the caches.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub(crate) mode: Mode,
    pub(crate) input: Matrix<F>,
    pub(crate) outputs: Vec<Matrix<F>>,
    pub(crate) caches: Vec<LayerCache<F>>,
}

impl<F: Scalar> ForwardTrace<F> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_len(&self) -> usize {
        self.input.nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.outputs.len()
    }

    /// Post-activation output of the given layer.
    pub fn output(&self, layer_index: usize) -> Option<&Matrix<F>> {
        self.outputs.get(layer_index)
    }

    pub fn logits(&self) -> &Matrix<F> {
        self.outputs.last().expect("validated spec has layers")
    }
}

enum PassCtx<'a, F> {
    Train {
        bn: &'a mut [BatchNormParams<F>],
        rng: &'a mut ChaCha8Rng,
    },
    Eval {
        bn: &'a [BatchNormParams<F>],
    },
}

/// Run the network on a batch. Train mode mutates the state: batch-norm
/// running statistics advance and the dropout generator is consumed.
pub fn forward<F: Scalar>(
    state: &mut NetworkState<F>,
    input: &Matrix<F>,
    mode: Mode,
) -> Result<ForwardTrace<F>> {
    let NetworkState {
        spec,
        affine,
        batch_norm,
        rng,
        ..
    } = state;
    let ctx = match mode {
        Mode::Train => PassCtx::Train {
            bn: batch_norm,
            rng,
        },
        Mode::Eval => PassCtx::Eval { bn: batch_norm },
    };
    run_layers(spec, affine, ctx, input, mode)
}

/// Eval-mode forward without touching the state.
pub fn forward_eval<F: Scalar>(state: &NetworkState<F>, input: &Matrix<F>) -> Result<ForwardTrace<F>> {
    run_layers(
        &state.spec,
        &state.affine,
        PassCtx::Eval {
            bn: &state.batch_norm,
        },
        input,
        Mode::Eval,
    )
}

fn run_layers<F: Scalar>(
    spec: &NetworkSpec,
    affine: &[AffineParams<F>],
    mut ctx: PassCtx<'_, F>,
    input: &Matrix<F>,
    mode: Mode,
) -> Result<ForwardTrace<F>> {
    if input.ncols() != spec.input_dim {
        return Err(Error::shape(format!(
            "input has {} features, spec expects {}",
            input.ncols(),
            spec.input_dim
        )));
    }
    let rows = input.nrows();
    let mut outputs: Vec<Matrix<F>> = Vec::with_capacity(spec.layers.len());
    let mut caches: Vec<LayerCache<F>> = Vec::with_capacity(spec.layers.len());
    let mut affine_idx = 0;
    let mut bn_idx = 0;

    for (li, layer) in spec.layers.iter().enumerate() {
        let x: &Matrix<F> = if li == 0 { input } else { &outputs[li - 1] };
        let mut cache = LayerCache::None;
        let y = match *layer {
            LayerSpec::Affine { .. } => {
                let p = &affine[affine_idx];
                affine_idx += 1;
                x.dot(&p.weight) + &p.bias
            }
            LayerSpec::Relu => x.mapv(|v| if v > F::zero() { v } else { F::zero() }),
            LayerSpec::LeakyRelu { slope } => {
                let s = F::from_f64(slope);
                x.mapv(|v| if v > F::zero() { v } else { s * v })
            }
            LayerSpec::BatchNorm { eps, stat_momentum } => {
                let eps = F::from_f64(eps);
                match &mut ctx {
                    PassCtx::Train { bn, .. } => {
                        if rows < 2 {
                            return Err(Error::input(format!(
                                "layer {li}: batch_norm needs a batch of >= 2 in train mode"
                            )));
                        }
                        let p = &mut bn[bn_idx];
                        bn_idx += 1;
                        let n_inv = F::one() / F::from_f64(rows as f64);
                        let mean = x.sum_axis(Axis(0)) * n_inv;
                        let mut x_hat = x - &mean;
                        let var = x_hat.mapv(|v| v * v).sum_axis(Axis(0)) * n_inv;
                        let inv_std = var.mapv(|v| (v + eps).sqrt().recip());
                        x_hat *= &inv_std;
                        let y = &x_hat * &p.gamma + &p.beta;

                        // Running stats use the unbiased variance, the usual
                        // framework convention.
                        let m = F::from_f64(stat_momentum);
                        let keep = F::one() - m;
                        let n = F::from_f64(rows as f64);
                        let unbiased = var.mapv(|v| v * n / (n - F::one()));
                        p.running_mean = p.running_mean.mapv(|v| v * keep) + mean.mapv(|v| v * m);
                        p.running_var =
                            p.running_var.mapv(|v| v * keep) + unbiased.mapv(|v| v * m);

                        cache = LayerCache::BatchNorm { x_hat, inv_std };
                        y
                    }
                    PassCtx::Eval { bn } => {
                        let p = &bn[bn_idx];
                        bn_idx += 1;
                        let inv_std = p.running_var.mapv(|v| (v + eps).sqrt().recip());
                        (x - &p.running_mean) * &inv_std * &p.gamma + &p.beta
                    }
                }
            }
            LayerSpec::Dropout { drop_prob } => match &mut ctx {
                PassCtx::Train { rng, .. } => {
                    let rng: &mut ChaCha8Rng = rng;
                    let scale = F::from_f64(1.0 / (1.0 - drop_prob));
                    let mask_values: Vec<F> = (0..x.len())
                        .map(|_| {
                            let u: f64 = rng.random();
                            if u >= drop_prob {
                                F::one()
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    let mask = Matrix::from_shape_vec(x.raw_dim(), mask_values)
                        .expect("mask matches activation shape");
                    let y = x * &mask * scale;
                    cache = LayerCache::Dropout { mask };
                    y
                }
                PassCtx::Eval { .. } => x.clone(),
            },
        };
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical(format!(
                "layer {li} produced a non-finite activation"
            )));
        }
        outputs.push(y);
        caches.push(cache);
    }

    Ok(ForwardTrace {
        mode,
        input: input.clone(),
        outputs,
        caches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix64;

    fn bn_spec(width: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: width,
            layers: vec![
                LayerSpec::batch_norm(),
                LayerSpec::affine(2),
            ],
            output_classes: 2,
        }
    }

    #[test]
    fn dropout_eval_is_identity() {
        let spec = NetworkSpec {
            input_dim: 3,
            layers: vec![LayerSpec::dropout(0.7), LayerSpec::affine(2)],
            output_classes: 2,
        };
        let state = NetworkState::<f64>::init(&spec, 0).unwrap();
        let x = Matrix64::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 - 4.0);
        let trace = forward_eval(&state, &x).unwrap();
        assert_eq!(trace.output(0).unwrap(), &x);
    }

    #[test]
    fn dropout_train_scales_survivors() {
        let spec = NetworkSpec {
            input_dim: 2,
            layers: vec![LayerSpec::dropout(0.5), LayerSpec::affine(2)],
            output_classes: 2,
        };
        let mut state = NetworkState::<f64>::init(&spec, 1).unwrap();
        let x = Matrix64::ones((64, 2));
        let trace = forward(&mut state, &x, Mode::Train).unwrap();
        let out = trace.output(0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
        // Some units survive, some drop, at p = 0.5 over 128 entries.
        assert!(out.iter().any(|&v| v == 0.0));
        assert!(out.iter().any(|&v| v == 2.0));
    }

    #[test]
    fn dropout_train_mean_preserves_expectation() {
        let spec = NetworkSpec {
            input_dim: 1,
            layers: vec![LayerSpec::dropout(0.7), LayerSpec::affine(1)],
            output_classes: 1,
        };
        let mut state = NetworkState::<f64>::init(&spec, 5).unwrap();
        let trials = 100_000;
        let x = Matrix64::from_elem((trials, 1), 3.0);
        let trace = forward(&mut state, &x, Mode::Train).unwrap();
        let mean = trace.output(0).unwrap().mean().unwrap();
        assert!(
            (mean - 3.0).abs() / 3.0 < 0.01,
            "dropout output mean {mean} strays from 3.0"
        );
    }

    #[test]
    fn batch_norm_train_normalizes_batch() {
        // gamma starts at 1 and beta at 0, so the layer output is x_hat itself.
        let mut state = NetworkState::<f64>::init(&bn_spec(3), 2).unwrap();
        let mut rng = crate::rng::rng_from_seed(9);
        let x = Matrix64::from_shape_fn((128, 3), |_| {
            2.5 * f64::standard_normal(&mut rng) + 1.0
        });
        let trace = forward(&mut state, &x, Mode::Train).unwrap();
        let out = trace.output(0).unwrap();
        for col in out.columns() {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-6, "column mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "column var {var}");
        }
    }

    #[test]
    fn batch_norm_running_stats_move_toward_batch() {
        let mut state = NetworkState::<f64>::init(&bn_spec(1), 2).unwrap();
        let x = Matrix64::from_shape_vec((4, 1), vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        forward(&mut state, &x, Mode::Train).unwrap();
        let bn = &state.batch_norm[0];
        // mean 4, biased var 5 -> unbiased 20/3; momentum 0.1 from (0, 1).
        assert!((bn.running_mean[0] - 0.4).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_train_rejects_single_row() {
        let mut state = NetworkState::<f64>::init(&bn_spec(2), 0).unwrap();
        let x = Matrix64::ones((1, 2));
        assert!(matches!(
            forward(&mut state, &x, Mode::Train),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn leaky_relu_slope() {
        let spec = NetworkSpec {
            input_dim: 1,
            layers: vec![LayerSpec::leaky_relu(0.2), LayerSpec::affine(1)],
            output_classes: 1,
        };
        let state = NetworkState::<f64>::init(&spec, 0).unwrap();
        let x = Matrix64::from_shape_vec((2, 1), vec![-1.0, 2.0]).unwrap();
        let trace = forward_eval(&state, &x).unwrap();
        let out = trace.output(0).unwrap();
        assert_eq!(out[[0, 0]], -0.2);
        assert_eq!(out[[1, 0]], 2.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let state = NetworkState::<f64>::init(&bn_spec(3), 0).unwrap();
        let x = Matrix64::ones((2, 4));
        assert!(matches!(forward_eval(&state, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn nan_input_is_a_numerical_error() {
        let spec = NetworkSpec::relu_stack(2, &[3], 2);
        let state = NetworkState::<f64>::init(&spec, 0).unwrap();
        let mut x = Matrix64::ones((2, 2));
        x[[0, 0]] = f64::NAN;
        assert!(matches!(forward_eval(&state, &x), Err(Error::Numerical(_))));
    }

    #[test]
    fn eval_forward_is_pure_and_repeatable() {
        let spec = NetworkSpec {
            input_dim: 4,
            layers: vec![
                LayerSpec::affine(6),
                LayerSpec::batch_norm(),
                LayerSpec::Relu,
                LayerSpec::dropout(0.3),
                LayerSpec::affine(3),
            ],
            output_classes: 3,
        };
        let state = NetworkState::<f64>::init(&spec, 4).unwrap();
        let x = Matrix64::from_shape_fn((5, 4), |(i, j)| (i as f64) - (j as f64) * 0.5);
        let a = forward_eval(&state, &x).unwrap();
        let b = forward_eval(&state, &x).unwrap();
        assert_eq!(a.logits(), b.logits());
    }
}
