//! Exact-MI validation of the usable-information estimator.
//!
//! A discrete joint over (atom, class) pairs has mutual information
//! computable by direct summation. Sampling from the joint, fitting the
//! decoder, and comparing its estimate against the exact value checks the
//! lower-bound property end to end: the estimate may fall below the true MI
//! but must never exceed it beyond sampling tolerance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{entropy_bits, train_probe_raw, InfoEstimate, ProbeConfig};
use crate::rng::{derive_seed, rng_from_seed, tag, ChaCha8Rng};
use crate::task::LabelKind;
use crate::{Matrix64, Scalar};

pub const MAX_ATOMS: usize = 64;
pub const MAX_CLASSES: usize = 16;

/// Slack allowed over the exact MI at >= 10^4 test samples, in bits.
pub const BOUND_TOLERANCE_BITS: f64 = 0.05;

/// A finite joint distribution p(z, y): atom vectors in R^d and a
/// probability table with one row per atom, one column per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJointSpec {
    pub atoms: Vec<Vec<f64>>,
    pub joint: Vec<Vec<f64>>,
}

impl DiscreteJointSpec {
    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() || self.atoms.len() > MAX_ATOMS {
            return Err(Error::input(format!(
                "atom count {} outside 1..={MAX_ATOMS}",
                self.atoms.len()
            )));
        }
        let dim = self.atoms[0].len();
        if dim == 0 || self.atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::input("atom vectors must share a non-zero dimension"));
        }
        if self.joint.len() != self.atoms.len() {
            return Err(Error::input("joint table needs one row per atom"));
        }
        let classes = self.joint[0].len();
        if classes < 2 || classes > MAX_CLASSES {
            return Err(Error::input(format!(
                "class count {classes} outside 2..={MAX_CLASSES}"
            )));
        }
        let mut total = 0.0;
        for row in &self.joint {
            if row.len() != classes {
                return Err(Error::input("ragged joint table"));
            }
            for &p in row {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::input(format!("invalid joint entry {p}")));
                }
                total += p;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("joint sums to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.joint[0].len()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let classes = self.num_classes();
        let mut m = vec![0.0; classes];
        for row in &self.joint {
            for (j, &p) in row.iter().enumerate() {
                m[j] += p;
            }
        }
        m
    }

    pub fn marginal_z(&self) -> Vec<f64> {
        self.joint.iter().map(|row| row.iter().sum()).collect()
    }

    /// I(Z;Y) in bits by direct summation over the table.
    pub fn exact_mi_bits(&self) -> f64 {
        let pz = self.marginal_z();
        let py = self.marginal_y();
        let mut mi = 0.0;
        for (i, row) in self.joint.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    mi += p * (p / (pz[i] * py[j])).log2();
                }
            }
        }
        mi
    }

    /// Draw iid (atom vector, class) pairs by inverse-CDF over the table.
    pub fn sample(&self, count: usize, rng: &mut ChaCha8Rng) -> (Matrix64, Vec<usize>) {
        let classes = self.num_classes();
        let dim = self.atoms[0].len();
        let flat: Vec<f64> = self.joint.iter().flatten().copied().collect();
        let mut x = Vec::with_capacity(count * dim);
        let mut y = Vec::with_capacity(count);
        for _ in 0..count {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = flat.len() - 1;
            for (k, &p) in flat.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            x.extend_from_slice(&self.atoms[pick / classes]);
            y.push(pick % classes);
        }
        (
            Matrix64::from_shape_vec((count, dim), x).expect("uniform atom dimension"),
            y,
        )
    }
}

/// Exact MI next to the decoder's estimate on data sampled from the joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub exact_mi_bits: f64,
    /// The decoder-side measurement; its `label_kind` is nominal since the
    /// oracle's class variable is synthetic.
    pub estimate: InfoEstimate,
}

/// Sample a train/test set from the joint, fit the decoder on the train
/// half, and measure usable information against the exact marginal entropy.
pub fn mi_bound_oracle(
    joint: &DiscreteJointSpec,
    probe_config: &ProbeConfig,
    n_train: usize,
    n_test: usize,
) -> Result<OracleOutcome> {
    joint.validate()?;
    if n_train == 0 || n_test == 0 {
        return Err(Error::input("oracle needs non-empty train and test sets"));
    }
    let mut rng = rng_from_seed(derive_seed(probe_config.seed, &[tag::ORACLE_DATA]));
    let (x_train, y_train) = joint.sample(n_train, &mut rng);
    let (x_test, y_test) = joint.sample(n_test, &mut rng);

    let classes = joint.num_classes();
    let probe = train_probe_raw(&x_train, &y_train, classes, probe_config)?;
    let (_, ce_bits) = crate::nn::evaluate(&probe.decoder, &x_test, &y_test)?;
    let h_y = entropy_bits(&joint.marginal_y())?;
    Ok(OracleOutcome {
        exact_mi_bits: joint.exact_mi_bits(),
        estimate: InfoEstimate::new(h_y, ce_bits, LabelKind::Direction, 0, 0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Independent,
    Deterministic,
    NoisyChannel,
    RandomJoint,
}

impl std::fmt::Display for TrialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrialKind::Independent => "independent",
            TrialKind::Deterministic => "deterministic",
            TrialKind::NoisyChannel => "noisy_channel",
            TrialKind::RandomJoint => "random_joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub kind: TrialKind,
    pub exact_mi_bits: f64,
    pub iu_raw_bits: f64,
    /// Estimate does not exceed exact MI + tolerance.
    pub bound_ok: bool,
    /// For deterministic maps only: estimate recovers >= 90% of the MI.
    pub tight_ok: Option<bool>,
}

fn normalized(mut weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

fn random_atoms(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| f64::standard_normal(rng)).collect())
        .collect()
}

/// Build one randomized joint of the given kind.
pub fn random_joint(kind: TrialKind, rng: &mut ChaCha8Rng) -> DiscreteJointSpec {
    let atoms_n = rng.random_range(4..=12);
    let classes = rng.random_range(2..=4usize);
    let atoms = random_atoms(atoms_n, 6, rng);
    let pz = normalized((0..atoms_n).map(|_| rng.random_range(0.2..1.0)).collect());
    let joint: Vec<Vec<f64>> = match kind {
        TrialKind::Independent => {
            let py = normalized((0..classes).map(|_| rng.random_range(0.2..1.0)).collect());
            pz.iter()
                .map(|&z| py.iter().map(|&y| z * y).collect())
                .collect()
        }
        TrialKind::Deterministic => {
            // Surjective map so every class keeps mass.
            let map: Vec<usize> = (0..atoms_n)
                .map(|i| {
                    if i < classes {
                        i
                    } else {
                        rng.random_range(0..classes)
                    }
                })
                .collect();
            pz.iter()
                .enumerate()
                .map(|(i, &z)| {
                    let mut row = vec![0.0; classes];
                    row[map[i]] = z;
                    row
                })
                .collect()
        }
        TrialKind::NoisyChannel => {
            let correct: Vec<usize> = (0..atoms_n).map(|_| rng.random_range(0..classes)).collect();
            let noise = 0.1 / (classes - 1) as f64;
            pz.iter()
                .enumerate()
                .map(|(i, &z)| {
                    (0..classes)
                        .map(|j| z * if j == correct[i] { 0.9 } else { noise })
                        .collect()
                })
                .collect()
        }
        TrialKind::RandomJoint => {
            let flat = normalized(
                (0..atoms_n * classes)
                    .map(|_| rng.random_range(0.05..1.0))
                    .collect(),
            );
            flat.chunks(classes).map(|c| c.to_vec()).collect()
        }
    };
    DiscreteJointSpec { atoms, joint }
}

/// Run `trials` randomized oracle comparisons, cycling through the four trial
/// kinds. Trials run in parallel; each derives its own seed from the master.
pub fn run_oracle_trials(
    trials: usize,
    master_seed: u64,
    probe_config: &ProbeConfig,
    n_train: usize,
    n_test: usize,
) -> Result<Vec<TrialReport>> {
    if trials == 0 {
        return Err(Error::input("need at least one oracle trial"));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let kind = match t % 4 {
                0 => TrialKind::Independent,
                1 => TrialKind::Deterministic,
                2 => TrialKind::NoisyChannel,
                _ => TrialKind::RandomJoint,
            };
            let trial_seed = derive_seed(master_seed, &[tag::ORACLE_TRIAL, t as u64]);
            let mut rng = rng_from_seed(trial_seed);
            let joint = random_joint(kind, &mut rng);
            let config = ProbeConfig {
                seed: trial_seed,
                ..probe_config.clone()
            };
            let outcome = mi_bound_oracle(&joint, &config, n_train, n_test)?;
            let raw = outcome.estimate.iu_raw_bits;
            let mi = outcome.exact_mi_bits;
            Ok(TrialReport {
                trial: t,
                kind,
                exact_mi_bits: mi,
                iu_raw_bits: raw,
                bound_ok: raw <= mi + BOUND_TOLERANCE_BITS,
                tight_ok: (kind == TrialKind::Deterministic).then(|| raw >= 0.9 * mi),
            })
        })
        .collect()
}

/// Default decoder settings for oracle trials: the standard stack, trained on
/// plenty of samples so deterministic maps are recovered tightly.
pub fn default_oracle_probe() -> (ProbeConfig, usize, usize) {
    let config = ProbeConfig {
        learning_rate: 0.1,
        epochs: 60,
        train_samples: 4000,
        test_samples: 10_000,
        ..ProbeConfig::default()
    };
    (config, 4000, 10_000)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atom_even_joint(p_y_given_z: [[f64; 2]; 2]) -> DiscreteJointSpec {
        DiscreteJointSpec {
            atoms: vec![vec![-1.0, 0.5], vec![1.0, -0.5]],
            joint: p_y_given_z
                .iter()
                .map(|row| row.iter().map(|&p| 0.5 * p).collect())
                .collect(),
        }
    }

    #[test]
    fn exact_mi_closed_forms() {
        // Independent: MI = 0.
        let indep = two_atom_even_joint([[0.5, 0.5], [0.5, 0.5]]);
        assert!(indep.exact_mi_bits().abs() < 1e-12);

        // Deterministic balanced map: MI = 1 bit.
        let det = two_atom_even_joint([[1.0, 0.0], [0.0, 1.0]]);
        assert!((det.exact_mi_bits() - 1.0).abs() < 1e-12);

        // Binary symmetric channel with flip 0.1: MI = 1 - H2(0.1).
        let bsc = two_atom_even_joint([[0.9, 0.1], [0.1, 0.9]]);
        let h2 = -(0.9f64.log2() * 0.9 + 0.1f64.log2() * 0.1);
        assert!((bsc.exact_mi_bits() - (1.0 - h2)).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_tables() {
        let mut j = two_atom_even_joint([[0.5, 0.5], [0.5, 0.5]]);
        j.joint[0][0] = 0.7;
        assert!(j.validate().is_err());

        let j = DiscreteJointSpec {
            atoms: vec![vec![0.0], vec![1.0]],
            joint: vec![vec![0.5, 0.5]],
        };
        assert!(j.validate().is_err());
    }

    #[test]
    fn sampling_matches_the_table() {
        let joint = two_atom_even_joint([[0.9, 0.1], [0.1, 0.9]]);
        let mut rng = rng_from_seed(0);
        let (x, y) = joint.sample(40_000, &mut rng);
        let mut counts = [[0usize; 2]; 2];
        for (row, &label) in x.rows().into_iter().zip(&y) {
            let atom = if row[0] < 0.0 { 0 } else { 1 };
            counts[atom][label] += 1;
        }
        for i in 0..2 {
            for j in 0..2 {
                let observed = counts[i][j] as f64 / 40_000.0;
                assert!(
                    (observed - joint.joint[i][j]).abs() < 0.01,
                    "cell ({i},{j}): {observed} vs {}",
                    joint.joint[i][j]
                );
            }
        }
    }

    #[test]
    fn random_joints_are_valid_and_typed() {
        let mut rng = rng_from_seed(5);
        for kind in [
            TrialKind::Independent,
            TrialKind::Deterministic,
            TrialKind::NoisyChannel,
            TrialKind::RandomJoint,
        ] {
            for _ in 0..10 {
                let j = random_joint(kind, &mut rng);
                j.validate().unwrap();
                match kind {
                    TrialKind::Independent => assert!(j.exact_mi_bits().abs() < 1e-9),
                    TrialKind::Deterministic => {
                        // MI equals H(Y) for a deterministic map.
                        let h_y = entropy_bits(&j.marginal_y()).unwrap();
                        assert!((j.exact_mi_bits() - h_y).abs() < 1e-9);
                    }
                    _ => assert!(j.exact_mi_bits() >= 0.0),
                }
            }
        }
    }
}
