//! Trainable network state: parameters, optimizer velocity, batch-norm
//! running statistics, and the generator that drives dropout masks and batch
//! shuffling. The whole struct serializes to a versioned checkpoint that
//! round-trips bit-exactly.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, ChaCha8Rng};
use crate::scalar::Scalar;
use crate::Matrix;

use super::{LayerSpec, NetworkSpec};

/// Weights `[in x out]`, bias `[out]`, and matching momentum buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineParams<F> {
    pub weight: Matrix<F>,
    pub bias: Array1<F>,
    pub vel_weight: Matrix<F>,
    pub vel_bias: Array1<F>,
}

/// Learnable scale/shift plus running statistics, all per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub vel_gamma: Array1<F>,
    pub vel_beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct NetworkState<F: Scalar> {
    pub(crate) spec: NetworkSpec,
    pub(crate) affine: Vec<AffineParams<F>>,
    pub(crate) batch_norm: Vec<BatchNormParams<F>>,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) epoch: usize,
}

impl<F: Scalar> NetworkState<F> {
    /// Fresh state: affine weights drawn from N(0, 2/fan_in), biases zero,
    /// velocities zero, batch-norm at identity with (mean 0, var 1) running
    /// stats. Deterministic given the seed.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut affine = Vec::with_capacity(spec.num_affine());
        let mut batch_norm = Vec::with_capacity(spec.num_batch_norm());
        let mut fan_in = spec.input_dim;
        for layer in &spec.layers {
            match *layer {
                LayerSpec::Affine { out_width } => {
                    let std = F::from_f64((2.0 / fan_in as f64).sqrt());
                    let values: Vec<F> = (0..fan_in * out_width)
                        .map(|_| F::standard_normal(&mut rng) * std)
                        .collect();
                    let weight = Matrix::from_shape_vec((fan_in, out_width), values)
                        .expect("weight shape matches sample count");
                    affine.push(AffineParams {
                        vel_weight: Matrix::zeros(weight.raw_dim()),
                        weight,
                        bias: Array1::zeros(out_width),
                        vel_bias: Array1::zeros(out_width),
                    });
                    fan_in = out_width;
                }
                LayerSpec::BatchNorm { .. } => {
                    batch_norm.push(BatchNormParams {
                        gamma: Array1::ones(fan_in),
                        beta: Array1::zeros(fan_in),
                        vel_gamma: Array1::zeros(fan_in),
                        vel_beta: Array1::zeros(fan_in),
                        running_mean: Array1::zeros(fan_in),
                        running_var: Array1::ones(fan_in),
                    });
                }
                _ => {}
            }
        }
        Ok(NetworkState {
            spec: spec.clone(),
            affine,
            batch_norm,
            rng,
            epoch: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Epochs of training this state has absorbed.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub(crate) fn bump_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Zero all momentum buffers. Used when the training objective switches
    /// so stale velocity does not bleed across tasks.
    pub fn reset_velocity(&mut self) {
        for a in &mut self.affine {
            a.vel_weight.fill(F::zero());
            a.vel_bias.fill(F::zero());
        }
        for b in &mut self.batch_norm {
            b.vel_gamma.fill(F::zero());
            b.vel_beta.fill(F::zero());
        }
    }

    pub fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    pub fn affine_params(&self) -> &[AffineParams<F>] {
        &self.affine
    }

    pub fn batch_norm_params(&self) -> &[BatchNormParams<F>] {
        &self.batch_norm
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let doc = Checkpoint {
            version: CHECKPOINT_VERSION,
            state: self.clone(),
        };
        let json = serde_json::to_string(&doc)
            .map_err(|e| Error::parse(format!("checkpoint encode: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Checkpoint<F> = serde_json::from_str(&raw)
            .map_err(|e| Error::parse(format!("checkpoint decode {}: {e}", path.display())))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::parse(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                doc.version
            )));
        }
        doc.state.spec.validate()?;
        Ok(doc.state)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct Checkpoint<F: Scalar> {
    version: u32,
    state: NetworkState<F>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> NetworkSpec {
        NetworkSpec::relu_stack(6, &[10, 7, 5, 4, 3], 2)
    }

    #[test]
    fn init_is_deterministic() {
        let a = NetworkState::<f64>::init(&small_spec(), 7).unwrap();
        let b = NetworkState::<f64>::init(&small_spec(), 7).unwrap();
        assert_eq!(a, b);
        let c = NetworkState::<f64>::init(&small_spec(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_layout_and_zeros() {
        let state = NetworkState::<f64>::init(&small_spec(), 0).unwrap();
        assert_eq!(state.affine.len(), 6);
        assert_eq!(state.batch_norm.len(), 0);
        assert_eq!(state.affine[0].weight.dim(), (6, 10));
        assert_eq!(state.affine[5].weight.dim(), (3, 2));
        for a in &state.affine {
            assert!(a.bias.iter().all(|&v| v == 0.0));
            assert!(a.vel_weight.iter().all(|&v| v == 0.0));
            assert!(a.vel_bias.iter().all(|&v| v == 0.0));
        }
        assert_eq!(state.epoch(), 0);
    }

    #[test]
    fn init_scale_tracks_fan_in() {
        // Wide layer so the sample std is a decent estimate of the draw std.
        let spec = NetworkSpec::relu_stack(100, &[400], 2);
        let state = NetworkState::<f64>::init(&spec, 3).unwrap();
        let w = &state.affine[0].weight;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 100.0;
        assert!((var / expected - 1.0).abs() < 0.1, "var {var} vs {expected}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn batch_norm_starts_at_identity() {
        let spec = NetworkSpec {
            input_dim: 4,
            layers: vec![
                LayerSpec::affine(8),
                LayerSpec::batch_norm(),
                LayerSpec::Relu,
                LayerSpec::affine(2),
            ],
            output_classes: 2,
        };
        let state = NetworkState::<f64>::init(&spec, 0).unwrap();
        let bn = &state.batch_norm[0];
        assert!(bn.gamma.iter().all(|&v| v == 1.0));
        assert!(bn.beta.iter().all(|&v| v == 0.0));
        assert!(bn.running_mean.iter().all(|&v| v == 0.0));
        assert!(bn.running_var.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = NetworkSpec {
            input_dim: 0,
            layers: vec![LayerSpec::affine(2)],
            output_classes: 2,
        };
        assert!(NetworkState::<f64>::init(&spec, 0).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("repinfo-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.json");

        let mut state = NetworkState::<f64>::init(&small_spec(), 11).unwrap();
        // Move the rng off its initial position so the position round-trips too.
        let _ = F64Draw::draw(&mut state.rng);
        state.bump_epoch();

        state.write_checkpoint(&path).unwrap();
        let loaded = NetworkState::<f64>::read_checkpoint(&path).unwrap();
        assert_eq!(state, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    struct F64Draw;
    impl F64Draw {
        fn draw(rng: &mut ChaCha8Rng) -> f64 {
            use rand::Rng;
            rng.random()
        }
    }
}
