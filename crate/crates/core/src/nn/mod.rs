//! Minimal dense-network engine: forward/backward passes, losses in bits,
//! SGD with optional momentum and exponential annealing, and a
//! finite-difference gradient checker.

mod backward;
mod forward;
mod gradcheck;
mod loss;
mod state;
mod train;

pub use backward::{backward, AffineGrads, BatchNormGrads, Gradients};
pub use forward::{forward, forward_eval, ForwardTrace, Mode};
pub use gradcheck::{gradient_check, standard_checks, GradCheckCase};
pub use loss::{accuracy, softmax, softmax_cross_entropy_bits};
pub use state::{AffineParams, BatchNormParams, NetworkState, CHECKPOINT_VERSION};
pub use train::{effective_lr, evaluate, sgd_step, train_epoch, EpochMetrics};
pub(crate) use train::train_epoch_opts;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of the network. Affine layers own the parameters; the rest are
/// parameter-free except batch-norm, which carries a learnable per-feature
/// scale/shift plus running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Affine { out_width: usize },
    Relu,
    LeakyRelu { slope: f64 },
    BatchNorm { eps: f64, stat_momentum: f64 },
    Dropout { drop_prob: f64 },
}

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_STAT_MOMENTUM: f64 = 0.1;

impl LayerSpec {
    pub fn affine(out_width: usize) -> Self {
        LayerSpec::Affine { out_width }
    }

    pub fn leaky_relu(slope: f64) -> Self {
        LayerSpec::LeakyRelu { slope }
    }

    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm {
            eps: BATCH_NORM_EPS,
            stat_momentum: BATCH_NORM_STAT_MOMENTUM,
        }
    }

    pub fn dropout(drop_prob: f64) -> Self {
        LayerSpec::Dropout { drop_prob }
    }

    fn validate(&self, index: usize) -> Result<()> {
        match *self {
            LayerSpec::Affine { out_width } => {
                if out_width == 0 {
                    return Err(Error::config(format!(
                        "layer {index}: affine out_width must be >= 1"
                    )));
                }
            }
            LayerSpec::Relu => {}
            LayerSpec::LeakyRelu { slope } => {
                if !(slope > 0.0) || !slope.is_finite() {
                    return Err(Error::config(format!(
                        "layer {index}: leaky_relu slope must be finite and > 0, got {slope}"
                    )));
                }
            }
            LayerSpec::BatchNorm { eps, stat_momentum } => {
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(Error::config(format!(
                        "layer {index}: batch_norm eps must be finite and > 0, got {eps}"
                    )));
                }
                if !(0.0..=1.0).contains(&stat_momentum) {
                    return Err(Error::config(format!(
                        "layer {index}: batch_norm stat_momentum must be in [0, 1], got {stat_momentum}"
                    )));
                }
            }
            LayerSpec::Dropout { drop_prob } => {
                if !(0.0..1.0).contains(&drop_prob) {
                    return Err(Error::config(format!(
                        "layer {index}: dropout drop_prob must be in [0, 1), got {drop_prob}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Architecture description: an ordered layer list mapping `input_dim`
/// features to `output_classes` logits. The final layer must be the output
/// affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub output_classes: usize,
}

impl NetworkSpec {
    /// The plain `affine -> relu` stack used by the main task networks:
    /// one block per hidden width, then the output affine.
    pub fn relu_stack(input_dim: usize, hidden_widths: &[usize], output_classes: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden_widths.len() * 2 + 1);
        for &w in hidden_widths {
            layers.push(LayerSpec::affine(w));
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::affine(output_classes));
        NetworkSpec {
            input_dim,
            layers,
            output_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be >= 1"));
        }
        if self.output_classes < 1 {
            return Err(Error::config("output_classes must be >= 1"));
        }
        if self.layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
        }
        match self.layers.last() {
            Some(&LayerSpec::Affine { out_width }) if out_width == self.output_classes => Ok(()),
            Some(&LayerSpec::Affine { out_width }) => Err(Error::config(format!(
                "last layer is affine({out_width}) but output_classes is {}",
                self.output_classes
            ))),
            _ => Err(Error::config("last layer must be the output affine")),
        }
    }

    /// Output width of every layer, in order.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.layers.len());
        let mut w = self.input_dim;
        for layer in &self.layers {
            if let LayerSpec::Affine { out_width } = *layer {
                w = out_width;
            }
            widths.push(w);
        }
        widths
    }

    /// Layer indices whose post-activation output represents each hidden
    /// block: for every affine except the output one, the last layer before
    /// the next affine. These are the activations the probes decode.
    pub fn probe_points(&self) -> Vec<usize> {
        let affine_at: Vec<usize> = self
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, LayerSpec::Affine { .. }).then_some(i))
            .collect();
        affine_at
            .windows(2)
            .map(|pair| pair[1] - 1)
            .collect()
    }

    pub fn num_affine(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Affine { .. }))
            .count()
    }

    pub fn num_batch_norm(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::BatchNorm { .. }))
            .count()
    }

    /// Total trainable parameter count (weights, biases, batch-norm scale/shift).
    pub fn num_params(&self) -> usize {
        let mut count = 0;
        let mut w = self.input_dim;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Affine { out_width } => {
                    count += w * out_width + out_width;
                    w = out_width;
                }
                LayerSpec::BatchNorm { .. } => count += 2 * w,
                _ => {}
            }
        }
        count
    }
}

/// Optimizer and schedule settings for one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub anneal_factor: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 100,
            momentum: 0.0,
            anneal_factor: 1.0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning_rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor <= 1.0) {
            return Err(Error::config(format!(
                "anneal_factor must be in (0, 1], got {}",
                self.anneal_factor
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_stack_shape() {
        let spec = NetworkSpec::relu_stack(6, &[10, 7, 5, 4, 3], 2);
        assert!(spec.validate().is_ok());
        // 5 hidden affines plus the output affine.
        assert_eq!(spec.num_affine(), 6);
        assert_eq!(spec.layer_widths(), vec![10, 10, 7, 7, 5, 5, 4, 4, 3, 3, 2]);
        // Post-relu output of each hidden block.
        assert_eq!(spec.probe_points(), vec![1, 3, 5, 7, 9]);
    }

    #[test]
    fn last_layer_must_be_output_affine() {
        let spec = NetworkSpec {
            input_dim: 4,
            layers: vec![LayerSpec::affine(3), LayerSpec::Relu],
            output_classes: 3,
        };
        assert!(spec.validate().is_err());

        let spec = NetworkSpec {
            input_dim: 4,
            layers: vec![LayerSpec::affine(3)],
            output_classes: 2,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn layer_validation_catches_bad_fields() {
        for bad in [
            LayerSpec::leaky_relu(0.0),
            LayerSpec::leaky_relu(-0.1),
            LayerSpec::dropout(1.0),
            LayerSpec::affine(0),
            LayerSpec::BatchNorm {
                eps: 0.0,
                stat_momentum: 0.1,
            },
        ] {
            let spec = NetworkSpec {
                input_dim: 4,
                layers: vec![bad, LayerSpec::affine(2)],
                output_classes: 2,
            };
            assert!(spec.validate().is_err());
        }
    }

    #[test]
    fn param_count() {
        let spec = NetworkSpec::relu_stack(6, &[10, 7, 5, 4, 3], 2);
        let expected = (6 * 10 + 10)
            + (10 * 7 + 7)
            + (7 * 5 + 5)
            + (5 * 4 + 4)
            + (4 * 3 + 3)
            + (3 * 2 + 2);
        assert_eq!(spec.num_params(), expected);
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            anneal_factor: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
