//! The n-class checkerboard task.
//!
//! Each trial places n targets, one per position, carrying a uniformly random
//! permutation of the n colors. A checkerboard color is drawn uniformly; the
//! correct *direction* is the position whose target carries that color, and
//! the *color* label is the checkerboard color itself. Direction is the
//! trained (relevant) label; color is irrelevant given direction even though
//! it is causally needed to compute the answer. An optional coarse label
//! groups directions by `direction mod g`.
//!
//! Inputs concatenate n one-hot target-color blocks (noise-free) with one
//! one-hot checkerboard block perturbed by additive gaussian noise.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, tag, ChaCha8Rng};
use crate::scalar::Scalar;
use crate::Matrix;

/// Which label a dataset row is read with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Direction,
    Color,
    Coarse,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Direction => "direction",
            LabelKind::Color => "color",
            LabelKind::Coarse => "coarse",
        }
    }

    /// Stable word used in seed derivation.
    pub fn seed_tag(self) -> u64 {
        match self {
            LabelKind::Direction => 0,
            LabelKind::Color => 1,
            LabelKind::Coarse => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direction" => Ok(LabelKind::Direction),
            "color" => Ok(LabelKind::Color),
            "coarse" => Ok(LabelKind::Coarse),
            other => Err(Error::parse(format!("unknown label kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for LabelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CBConfig {
    pub n: usize,
    pub num_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub coarse_groups: Option<usize>,
}

impl Default for CBConfig {
    fn default() -> Self {
        CBConfig {
            n: 2,
            num_samples: 10_000,
            noise_std: 0.1,
            seed: 0,
            train_fraction: 0.9,
            coarse_groups: None,
        }
    }
}

impl CBConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::input(format!("n must be >= 2, got {}", self.n)));
        }
        if self.num_samples == 0 {
            return Err(Error::input("num_samples must be >= 1"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::input(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::input(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if let Some(g) = self.coarse_groups {
            if g == 0 || self.n % g != 0 {
                return Err(Error::input(format!(
                    "coarse_groups {g} must divide n = {}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Number of coarse classes; the identity grouping when unset.
    pub fn groups(&self) -> usize {
        self.coarse_groups.unwrap_or(self.n)
    }

    pub fn classes(&self, kind: LabelKind) -> usize {
        match kind {
            LabelKind::Direction | LabelKind::Color => self.n,
            LabelKind::Coarse => self.groups(),
        }
    }
}

/// `n` target blocks of `n` one-hot entries plus the checkerboard block.
pub fn input_dim(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::input(format!("n must be >= 2, got {n}")));
    }
    Ok(n * n + n)
}

/// `direction mod g`, the coarse grouping of directions.
pub fn coarse_label(direction: usize, g: usize, n: usize) -> Result<usize> {
    if g == 0 || n % g != 0 {
        return Err(Error::input(format!("g = {g} must divide n = {n}")));
    }
    if direction >= n {
        return Err(Error::input(format!(
            "direction {direction} out of range for n = {n}"
        )));
    }
    Ok(direction % g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<F> {
    pub input: Vec<F>,
    pub direction: usize,
    pub color: usize,
    pub coarse: usize,
    /// `permutation[position]` is the color assigned to that target.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<F> {
    pub samples: Vec<Sample<F>>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub config: CBConfig,
}

/// Build one input vector: target blocks exactly one-hot, checkerboard block
/// one-hot plus the provided noise values.
fn encode_input<F: Scalar>(n: usize, permutation: &[usize], color: usize, noise: &[F]) -> Vec<F> {
    let mut input = vec![F::zero(); n * n + n];
    for (pos, &target_color) in permutation.iter().enumerate() {
        input[pos * n + target_color] = F::one();
    }
    for (j, &eps) in noise.iter().enumerate() {
        let base = if j == color { F::one() } else { F::zero() };
        input[n * n + j] = base + eps;
    }
    input
}

/// Draw `count` samples from the task distribution using the given stream.
pub fn generate_samples<F: Scalar>(
    n: usize,
    count: usize,
    noise_std: f64,
    coarse_groups: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<Sample<F>> {
    let g = coarse_groups.unwrap_or(n);
    let std = F::from_f64(noise_std);
    let mut permutation: Vec<usize> = (0..n).collect();
    (0..count)
        .map(|_| {
            permutation.shuffle(rng);
            let color = rng.random_range(0..n);
            let direction = permutation
                .iter()
                .position(|&c| c == color)
                .expect("permutation covers every color");
            let noise: Vec<F> = (0..n).map(|_| F::standard_normal(rng) * std).collect();
            Sample {
                input: encode_input(n, &permutation, color, &noise),
                direction,
                color,
                coarse: direction % g,
                permutation: permutation.clone(),
            }
        })
        .collect()
}

/// Generate the full dataset with its train/validation split. Deterministic
/// given the config.
pub fn generate<F: Scalar>(config: &CBConfig) -> Result<Dataset<F>> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let samples = generate_samples(
        config.n,
        config.num_samples,
        config.noise_std,
        config.coarse_groups,
        &mut rng,
    );
    let (train_idx, val_idx) = split_indices(
        config.num_samples,
        config.train_fraction,
        derive_seed(config.seed, &[tag::SPLIT]),
    )?;
    Ok(Dataset {
        samples,
        train_idx,
        val_idx,
        config: config.clone(),
    })
}

/// Uniformly random disjoint split; both sides sorted. The train side gets
/// `round(fraction * count)` samples.
pub fn split_indices(count: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::input(format!(
            "train fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n_train = (fraction * count as f64).round() as usize;
    if n_train == 0 || n_train >= count {
        return Err(Error::input(format!(
            "fraction {fraction} leaves an empty split for {count} samples"
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut val: Vec<usize> = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Re-split an existing dataset.
pub fn split<F: Scalar>(dataset: &Dataset<F>, fraction: f64, seed: u64) -> Result<Dataset<F>> {
    let (train_idx, val_idx) = split_indices(dataset.samples.len(), fraction, seed)?;
    Ok(Dataset {
        samples: dataset.samples.clone(),
        train_idx,
        val_idx,
        config: CBConfig {
            train_fraction: fraction,
            ..dataset.config.clone()
        },
    })
}

impl<F: Scalar> Dataset<F> {
    pub fn input_width(&self) -> usize {
        self.config.n * self.config.n + self.config.n
    }

    /// Stack the selected samples into a row-per-sample matrix.
    pub fn inputs(&self, indices: &[usize]) -> Matrix<F> {
        let width = self.input_width();
        let mut values = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            values.extend_from_slice(&self.samples[i].input);
        }
        Matrix::from_shape_vec((indices.len(), width), values)
            .expect("sample width is uniform")
    }

    pub fn labels(&self, indices: &[usize], kind: LabelKind) -> Vec<usize> {
        indices
            .iter()
            .map(|&i| {
                let s = &self.samples[i];
                match kind {
                    LabelKind::Direction => s.direction,
                    LabelKind::Color => s.color,
                    LabelKind::Coarse => s.coarse,
                }
            })
            .collect()
    }

    pub fn train_inputs(&self) -> Matrix<F> {
        self.inputs(&self.train_idx)
    }

    pub fn val_inputs(&self) -> Matrix<F> {
        self.inputs(&self.val_idx)
    }

    pub fn train_labels(&self, kind: LabelKind) -> Vec<usize> {
        self.labels(&self.train_idx, kind)
    }

    pub fn val_labels(&self, kind: LabelKind) -> Vec<usize> {
        self.labels(&self.val_idx, kind)
    }

    /// CSV export: `sample_id,direction,color,coarse,x_0..x_{d-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let width = self.input_width();
        let mut header = String::from("sample_id,direction,color,coarse");
        for j in 0..width {
            header.push_str(&format!(",x_{j}"));
        }
        header.push('\n');
        w.write_all(header.as_bytes())
            .map_err(|e| Error::io("<csv>", e))?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut line = format!("{i},{},{},{}", s.direction, s.color, s.coarse);
            for v in &s.input {
                line.push_str(&format!(",{:.16e}", v.as_f64()));
            }
            line.push('\n');
            w.write_all(line.as_bytes())
                .map_err(|e| Error::io("<csv>", e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_dim_formula() {
        assert_eq!(input_dim(2).unwrap(), 6);
        assert_eq!(input_dim(10).unwrap(), 110);
        assert_eq!(input_dim(20).unwrap(), 420);
        assert!(input_dim(1).is_err());
    }

    #[test]
    fn encode_matches_construction_rule() {
        // n=2, identity permutation, checkerboard color 1, no noise.
        let input = encode_input::<f64>(2, &[0, 1], 1, &[0.0, 0.0]);
        assert_eq!(input, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn generated_labels_are_consistent() {
        let config = CBConfig {
            n: 6,
            num_samples: 500,
            coarse_groups: Some(3),
            ..CBConfig::default()
        };
        let ds: Dataset<f64> = generate(&config).unwrap();
        for s in &ds.samples {
            // The direction points at the unique target carrying the color.
            assert_eq!(s.permutation[s.direction], s.color);
            assert_eq!(
                s.permutation.iter().filter(|&&c| c == s.color).count(),
                1
            );
            assert_eq!(s.coarse, s.direction % 3);
            // Target blocks are exactly one-hot, noise lives only in the tail.
            for pos in 0..6 {
                for c in 0..6 {
                    let expected = if s.permutation[pos] == c { 1.0 } else { 0.0 };
                    assert_eq!(s.input[pos * 6 + c], expected);
                }
            }
        }
    }

    #[test]
    fn noise_std_matches_config() {
        let config = CBConfig {
            n: 2,
            num_samples: 50_000,
            noise_std: 0.1,
            ..CBConfig::default()
        };
        let ds: Dataset<f64> = generate(&config).unwrap();
        let mut deviations = Vec::with_capacity(ds.samples.len() * 2);
        for s in &ds.samples {
            for j in 0..2 {
                let base = if j == s.color { 1.0 } else { 0.0 };
                deviations.push(s.input[4 + j] - base);
            }
        }
        let n = deviations.len() as f64;
        let mean = deviations.iter().sum::<f64>() / n;
        let var = deviations.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.05, "noise std {std}");
    }

    #[test]
    fn direction_and_color_are_uniform_and_independent() {
        let config = CBConfig {
            n: 2,
            num_samples: 100_000,
            ..CBConfig::default()
        };
        let ds: Dataset<f64> = generate(&config).unwrap();
        let n = ds.samples.len() as f64;
        let mut joint = [[0.0f64; 2]; 2];
        for s in &ds.samples {
            joint[s.direction][s.color] += 1.0;
        }
        let p_dir0 = (joint[0][0] + joint[0][1]) / n;
        let p_col0 = (joint[0][0] + joint[1][0]) / n;
        assert!((p_dir0 - 0.5).abs() < 0.01, "P(direction=0) = {p_dir0}");
        assert!((p_col0 - 0.5).abs() < 0.01, "P(color=0) = {p_col0}");
        for d in 0..2 {
            for c in 0..2 {
                assert!(
                    (joint[d][c] / n - 0.25).abs() < 0.01,
                    "joint[{d}][{c}] = {}",
                    joint[d][c] / n
                );
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = CBConfig {
            n: 5,
            num_samples: 200,
            coarse_groups: None,
            ..CBConfig::default()
        };
        let a: Dataset<f64> = generate(&config).unwrap();
        let b: Dataset<f64> = generate(&config).unwrap();
        assert_eq!(a, b);
        let c: Dataset<f64> = generate(&CBConfig {
            seed: 1,
            ..config
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let (train, val) = split_indices(10_000, 0.9, 4).unwrap();
        assert_eq!(train.len(), 9_000);
        assert_eq!(val.len(), 1_000);
        let mut all: Vec<usize> = train.iter().chain(val.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10_000).collect::<Vec<_>>());

        let again = split_indices(10_000, 0.9, 4).unwrap();
        assert_eq!((train, val), again);
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        assert!(split_indices(3, 0.01, 0).is_err());
        assert!(split_indices(3, 0.99, 0).is_err());
        assert!(split_indices(100, 1.0, 0).is_err());
    }

    #[test]
    fn coarse_label_grouping() {
        assert_eq!(coarse_label(7, 2, 10).unwrap(), 1);
        assert_eq!(coarse_label(4, 2, 10).unwrap(), 0);
        for d in 0..10 {
            assert_eq!(coarse_label(d, 10, 10).unwrap(), d);
        }
        assert!(coarse_label(0, 3, 10).is_err());
    }

    #[test]
    fn csv_export_schema() {
        let config = CBConfig {
            n: 2,
            num_samples: 10,
            ..CBConfig::default()
        };
        let ds: Dataset<f64> = generate(&config).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "sample_id,direction,color,coarse,x_0,x_1,x_2,x_3,x_4,x_5"
        );
        assert_eq!(lines.count(), 10);
        // Exported floats parse back bit-exactly.
        let row = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        let x0: f64 = fields[4].parse().unwrap();
        assert_eq!(x0, ds.samples[0].input[0]);
    }

    #[test]
    fn labels_view_respects_kind() {
        let config = CBConfig {
            n: 4,
            num_samples: 50,
            coarse_groups: Some(2),
            ..CBConfig::default()
        };
        let ds: Dataset<f64> = generate(&config).unwrap();
        let idx: Vec<usize> = (0..50).collect();
        let dirs = ds.labels(&idx, LabelKind::Direction);
        let coarse = ds.labels(&idx, LabelKind::Coarse);
        for (d, c) in dirs.iter().zip(&coarse) {
            assert_eq!(d % 2, *c);
        }
    }
}
