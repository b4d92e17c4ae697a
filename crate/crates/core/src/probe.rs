//! Usable-information estimation: train a decoder on captured activations,
//! evaluate its held-out cross-entropy in bits, and report
//! `H(Y) - L_CE` with the known class marginal as the entropy term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    evaluate, forward_eval, train_epoch_opts, LayerSpec, NetworkSpec, NetworkState, TrainConfig,
};
use crate::scalar::Scalar;
use crate::task::{CBConfig, LabelKind, Sample};
use crate::Matrix;

/// Decoder minibatch size. Trailing partial batches are dropped during probe
/// training so batch-norm always normalizes over full batches.
pub const PROBE_BATCH: usize = 32;

/// `-sum p log2 p`, with `0 log 0 = 0`. The distribution must be normalized.
pub fn entropy_bits(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::input("entropy of an empty distribution"));
    }
    let mut sum = 0.0;
    for &p in probabilities {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::input(format!("invalid probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum())
}

/// The uniform marginal over `classes` outcomes.
pub fn uniform_marginal(classes: usize) -> Vec<f64> {
    vec![1.0 / classes as f64; classes]
}

/// Per-row labels for a batch of captured activations, with class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFrame {
    pub direction: Vec<usize>,
    pub color: Vec<usize>,
    pub coarse: Vec<usize>,
    pub direction_classes: usize,
    pub coarse_classes: usize,
}

impl LabelFrame {
    pub fn from_samples<F: Scalar>(samples: &[Sample<F>], n: usize, groups: usize) -> Self {
        LabelFrame {
            direction: samples.iter().map(|s| s.direction).collect(),
            color: samples.iter().map(|s| s.color).collect(),
            coarse: samples.iter().map(|s| s.coarse).collect(),
            direction_classes: n,
            coarse_classes: groups,
        }
    }

    pub fn len(&self) -> usize {
        self.direction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direction.is_empty()
    }

    /// Labels and class count for one kind.
    pub fn of(&self, kind: LabelKind) -> (&[usize], usize) {
        match kind {
            LabelKind::Direction => (&self.direction, self.direction_classes),
            LabelKind::Color => (&self.color, self.direction_classes),
            LabelKind::Coarse => (&self.coarse, self.coarse_classes),
        }
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        LabelFrame {
            direction: self.direction[range.clone()].to_vec(),
            color: self.color[range.clone()].to_vec(),
            coarse: self.coarse[range].to_vec(),
            direction_classes: self.direction_classes,
            coarse_classes: self.coarse_classes,
        }
    }
}

/// Representation captured at one layer of a frozen network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMatrix<F> {
    pub layer_index: usize,
    pub epoch: usize,
    pub values: Matrix<F>,
    pub labels: LabelFrame,
}

impl<F: Scalar> ActivationMatrix<F> {
    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    /// Split rows into a head of `at` rows and the remaining tail.
    pub fn split_rows(&self, at: usize) -> Result<(Self, Self)> {
        if at == 0 || at >= self.values.nrows() {
            return Err(Error::input(format!(
                "cannot split {} rows at {at}",
                self.values.nrows()
            )));
        }
        let head = ActivationMatrix {
            layer_index: self.layer_index,
            epoch: self.epoch,
            values: self.values.slice(ndarray::s![..at, ..]).to_owned(),
            labels: self.labels.slice(0..at),
        };
        let tail = ActivationMatrix {
            layer_index: self.layer_index,
            epoch: self.epoch,
            values: self.values.slice(ndarray::s![at.., ..]).to_owned(),
            labels: self.labels.slice(at..self.values.nrows()),
        };
        Ok((head, tail))
    }
}

/// Eval-mode forward over the samples, recording the post-activation output
/// of the indexed layer. The network is untouched.
pub fn capture_activations<F: Scalar>(
    state: &NetworkState<F>,
    samples: &[Sample<F>],
    task: &CBConfig,
    layer_index: usize,
    epoch: usize,
) -> Result<ActivationMatrix<F>> {
    if layer_index >= state.spec().layers.len() {
        return Err(Error::input(format!(
            "layer index {layer_index} out of range for {} layers",
            state.spec().layers.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::input("no samples to capture activations from"));
    }
    let width = samples[0].input.len();
    let mut values = Vec::with_capacity(samples.len() * width);
    for s in samples {
        values.extend_from_slice(&s.input);
    }
    let x = Matrix::from_shape_vec((samples.len(), width), values)
        .expect("uniform sample width");
    let trace = forward_eval(state, &x)?;
    Ok(ActivationMatrix {
        layer_index,
        epoch,
        values: trace.output(layer_index).expect("index checked").clone(),
        labels: LabelFrame::from_samples(samples, task.n, task.groups()),
    })
}

/// Decoder settings. Hidden blocks are affine, leaky-relu, optional
/// batch-norm, optional dropout, followed by the output affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub drop_prob: f64,
    pub batch_norm: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden_widths: vec![128, 64, 32],
            leaky_slope: 0.2,
            drop_prob: 0.7,
            batch_norm: true,
            epochs: 100,
            learning_rate: 0.05,
            train_samples: 1250,
            test_samples: 3750,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(Error::config("probe needs at least one hidden width"));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("probe hidden widths must be >= 1"));
        }
        if self.test_samples == 0 {
            return Err(Error::config("probe test_samples must be >= 1"));
        }
        if self.train_samples == 0 {
            return Err(Error::config("probe train_samples must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::config(format!(
                "probe drop_prob must be in [0, 1), got {}",
                self.drop_prob
            )));
        }
        if !(self.leaky_slope > 0.0) {
            return Err(Error::config("probe leaky_slope must be > 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("probe learning_rate must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::config("probe epochs must be >= 1"));
        }
        Ok(())
    }

    /// Decoder architecture for a given input width and class count.
    pub fn decoder_spec(&self, input_width: usize, classes: usize) -> NetworkSpec {
        let mut layers = Vec::new();
        for &w in &self.hidden_widths {
            layers.push(LayerSpec::affine(w));
            layers.push(LayerSpec::leaky_relu(self.leaky_slope));
            if self.batch_norm {
                layers.push(LayerSpec::batch_norm());
            }
            if self.drop_prob > 0.0 {
                layers.push(LayerSpec::dropout(self.drop_prob));
            }
        }
        layers.push(LayerSpec::affine(classes));
        NetworkSpec {
            input_dim: input_width,
            layers,
            output_classes: classes,
        }
    }
}

/// A trained decoder `q(y|z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ProbeState<F: Scalar> {
    pub decoder: NetworkState<F>,
}

impl<F: Scalar> ProbeState<F> {
    pub fn new(decoder: NetworkState<F>) -> Self {
        ProbeState { decoder }
    }
}

/// Fit a decoder on raw (activations, labels) pairs with plain SGD. All
/// provided rows are used for training. Deterministic given `config.seed`.
pub fn train_probe_raw<F: Scalar>(
    x: &Matrix<F>,
    y: &[usize],
    classes: usize,
    config: &ProbeConfig,
) -> Result<ProbeState<F>> {
    config.validate()?;
    if x.nrows() == 0 {
        return Err(Error::input("probe training needs at least one row"));
    }
    if x.nrows() != y.len() {
        return Err(Error::shape(format!(
            "{} activation rows vs {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if classes < 2 {
        return Err(Error::input("probe needs at least two classes"));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        return Err(Error::input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let spec = config.decoder_spec(x.ncols(), classes);
    let mut decoder = NetworkState::init(&spec, config.seed)?;
    let train_config = TrainConfig {
        learning_rate: config.learning_rate,
        batch_size: PROBE_BATCH,
        epochs: config.epochs,
        momentum: 0.0,
        anneal_factor: 1.0,
        weight_decay: 0.0,
    };
    // Tiny fits (below one full batch) fall back to whole-batch steps.
    let drop_last = x.nrows() >= PROBE_BATCH;
    for _ in 0..config.epochs {
        train_epoch_opts(&mut decoder, x, y, &train_config, drop_last)?;
    }
    Ok(ProbeState { decoder })
}

/// Fit a decoder on the first `config.train_samples` rows of the captured
/// activations against the chosen label kind.
pub fn train_probe<F: Scalar>(
    train_acts: &ActivationMatrix<F>,
    kind: LabelKind,
    config: &ProbeConfig,
) -> Result<ProbeState<F>> {
    let rows = train_acts.values.nrows();
    if rows < config.train_samples {
        return Err(Error::input(format!(
            "{rows} activation rows < {} probe training samples",
            config.train_samples
        )));
    }
    let (labels, classes) = train_acts.labels.of(kind);
    let x = train_acts
        .values
        .slice(ndarray::s![..config.train_samples, ..])
        .to_owned();
    train_probe_raw(&x, &labels[..config.train_samples], classes, config)
}

/// One usable-information measurement.
///
/// `h_y_bits` comes from the known class marginal, never from counts;
/// `iu_raw_bits` may be negative when the decoder overfits, and `iu_bits`
/// clamps that at zero for presentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoEstimate {
    pub h_y_bits: f64,
    pub ce_bits: f64,
    pub iu_raw_bits: f64,
    pub iu_bits: f64,
    pub label_kind: LabelKind,
    pub layer_index: usize,
    pub epoch: usize,
}

impl InfoEstimate {
    pub fn new(
        h_y_bits: f64,
        ce_bits: f64,
        label_kind: LabelKind,
        layer_index: usize,
        epoch: usize,
    ) -> Self {
        let iu_raw_bits = h_y_bits - ce_bits;
        let est = InfoEstimate {
            h_y_bits,
            ce_bits,
            iu_raw_bits,
            iu_bits: iu_raw_bits.max(0.0),
            label_kind,
            layer_index,
            epoch,
        };
        debug_assert!(est.iu_bits <= est.h_y_bits + 1e-12);
        debug_assert!(est.iu_bits >= 0.0);
        est
    }
}

/// Evaluate a trained decoder on held-out activations: mean test
/// cross-entropy in bits against the labels, subtracted from the entropy of
/// the known class marginal.
pub fn estimate_usable_info<F: Scalar>(
    probe: &ProbeState<F>,
    test_acts: &ActivationMatrix<F>,
    kind: LabelKind,
    class_marginal: &[f64],
) -> Result<InfoEstimate> {
    if test_acts.values.nrows() == 0 {
        return Err(Error::input("empty probe test set"));
    }
    let (labels, classes) = test_acts.labels.of(kind);
    if class_marginal.len() != classes {
        return Err(Error::input(format!(
            "marginal has {} entries for {classes} classes",
            class_marginal.len()
        )));
    }
    if probe.decoder.spec().output_classes != classes {
        return Err(Error::input(format!(
            "decoder outputs {} classes, labels have {classes}",
            probe.decoder.spec().output_classes
        )));
    }
    let h_y = entropy_bits(class_marginal)?;
    let (_, ce_bits) = evaluate(&probe.decoder, &test_acts.values, labels)?;
    Ok(InfoEstimate::new(
        h_y,
        ce_bits,
        kind,
        test_acts.layer_index,
        test_acts.epoch,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::task::generate_samples;
    use crate::Matrix64;

    #[test]
    fn entropy_reference_values() {
        assert!((entropy_bits(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!((entropy_bits(&uniform_marginal(10)).unwrap() - 10f64.log2()).abs() < 1e-12);
        assert!((entropy_bits(&[0.5, 0.25, 0.25]).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(entropy_bits(&[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn entropy_rejects_bad_distributions() {
        assert!(entropy_bits(&[]).is_err());
        assert!(entropy_bits(&[0.5, 0.4]).is_err());
        assert!(entropy_bits(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn capture_reports_layer_width_and_is_repeatable() {
        let spec = crate::nn::NetworkSpec::relu_stack(6, &[10, 7, 5, 4, 3], 2);
        let state = NetworkState::<f64>::init(&spec, 0).unwrap();
        let task = CBConfig::default();
        let samples = generate_samples::<f64>(2, 40, 0.1, None, &mut rng_from_seed(3));
        // Post-relu output of the deepest hidden block.
        let acts = capture_activations(&state, &samples, &task, 9, 0).unwrap();
        assert_eq!(acts.width(), 3);
        assert_eq!(acts.values.nrows(), 40);
        assert!(acts.values.iter().all(|v| v.is_finite()));
        let again = capture_activations(&state, &samples, &task, 9, 0).unwrap();
        assert_eq!(acts, again);
        assert!(capture_activations(&state, &samples, &task, 11, 0).is_err());
    }

    fn quick_config(seed: u64) -> ProbeConfig {
        // Small decoder keeps unit tests fast; the defaults get exercised by
        // the integration suites.
        ProbeConfig {
            hidden_widths: vec![32, 16],
            epochs: 40,
            train_samples: 256,
            test_samples: 512,
            learning_rate: 0.05,
            seed,
            ..ProbeConfig::default()
        }
    }

    fn noise_acts(rows: usize, width: usize, seed: u64, classes: usize) -> ActivationMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let values = Matrix64::from_shape_fn((rows, width), |_| f64::standard_normal(&mut rng));
        let labels: Vec<usize> = (0..rows).map(|i| i % classes).collect();
        ActivationMatrix {
            layer_index: 0,
            epoch: 0,
            values,
            labels: LabelFrame {
                direction: labels.clone(),
                color: labels.clone(),
                coarse: labels.iter().map(|l| l % 2).collect(),
                direction_classes: classes,
                coarse_classes: 2,
            },
        }
    }

    #[test]
    fn probe_training_is_deterministic() {
        let acts = noise_acts(300, 4, 1, 2);
        let cfg = quick_config(5);
        let a = train_probe(&acts, LabelKind::Direction, &cfg).unwrap();
        let b = train_probe(&acts, LabelKind::Direction, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_labels_drive_test_ce_to_zero() {
        let mut acts = noise_acts(800, 4, 2, 2);
        acts.labels.direction = vec![0; 800];
        let cfg = quick_config(3);
        let (train, test) = acts.split_rows(cfg.train_samples).unwrap();
        let probe = train_probe(&train, LabelKind::Direction, &cfg).unwrap();
        let est =
            estimate_usable_info(&probe, &test, LabelKind::Direction, &[1.0, 0.0]).unwrap();
        assert!(est.ce_bits < 0.1, "ce {} bits", est.ce_bits);
    }

    #[test]
    fn independent_noise_keeps_test_ce_near_marginal_entropy() {
        let acts = noise_acts(1024, 8, 7, 2);
        let cfg = quick_config(11);
        let (train, test) = acts.split_rows(cfg.train_samples).unwrap();
        let probe = train_probe(&train, LabelKind::Direction, &cfg).unwrap();
        let est =
            estimate_usable_info(&probe, &test, LabelKind::Direction, &uniform_marginal(2))
                .unwrap();
        assert!(
            (est.ce_bits - 1.0).abs() < 0.1,
            "independent case ce {} bits",
            est.ce_bits
        );
    }

    #[test]
    fn decodable_labels_recover_the_bit() {
        // Activations carry the label in one coordinate, shifted well apart.
        let rows = 1024;
        let mut acts = noise_acts(rows, 3, 9, 2);
        for i in 0..rows {
            let l = acts.labels.direction[i];
            acts.values[[i, 0]] = if l == 0 { -2.0 } else { 2.0 };
        }
        let cfg = quick_config(13);
        let (train, test) = acts.split_rows(cfg.train_samples).unwrap();
        let probe = train_probe(&train, LabelKind::Direction, &cfg).unwrap();
        let est =
            estimate_usable_info(&probe, &test, LabelKind::Direction, &uniform_marginal(2))
                .unwrap();
        assert!(est.iu_bits > 0.9, "iu {} bits", est.iu_bits);
        assert!(est.iu_bits <= est.h_y_bits + 1e-12);
    }

    #[test]
    fn uniform_decoder_yields_exactly_zero_raw_iu() {
        let acts = noise_acts(64, 3, 4, 2);
        let cfg = quick_config(0);
        let spec = cfg.decoder_spec(3, 2);
        let mut decoder = NetworkState::<f64>::init(&spec, 0).unwrap();
        // Zero output layer forces uniform logits regardless of input.
        let last = decoder.affine_params().len() - 1;
        decoder.affine[last].weight.fill(0.0);
        decoder.affine[last].bias.fill(0.0);
        let probe = ProbeState::new(decoder);
        let est =
            estimate_usable_info(&probe, &acts, LabelKind::Direction, &uniform_marginal(2))
                .unwrap();
        assert_eq!(est.iu_raw_bits, 0.0);
        assert_eq!(est.iu_bits, 0.0);
    }

    #[test]
    fn overfit_estimates_clamp_to_zero() {
        let est = InfoEstimate::new(1.0, 1.05, LabelKind::Color, 0, 0);
        assert!((est.iu_raw_bits + 0.05).abs() < 1e-15);
        assert_eq!(est.iu_bits, 0.0);
    }

    #[test]
    fn train_probe_needs_enough_rows() {
        let acts = noise_acts(100, 3, 4, 2);
        let cfg = ProbeConfig {
            train_samples: 256,
            ..quick_config(0)
        };
        assert!(matches!(
            train_probe(&acts, LabelKind::Direction, &cfg),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn marginal_length_must_match_classes() {
        let acts = noise_acts(300, 3, 4, 2);
        let cfg = quick_config(0);
        let (train, test) = acts.split_rows(cfg.train_samples).unwrap();
        let probe = train_probe(&train, LabelKind::Direction, &cfg).unwrap();
        assert!(estimate_usable_info(&probe, &test, LabelKind::Direction, &uniform_marginal(3))
            .is_err());
    }
}
