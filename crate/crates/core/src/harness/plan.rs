//! Experiment plans and run records.
//!
//! A plan fixes everything about an experiment except the seed: task,
//! architecture, optimizer, probing protocol, schedule, and the optional
//! pretraining phase. `training.epochs` counts main-task epochs; pretraining
//! epochs are added in front of them, and the probe schedule indexes the
//! combined timeline (0 = the freshly initialized network).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, NetworkState, TrainConfig};
use crate::probe::{InfoEstimate, ProbeConfig};
use crate::task::{CBConfig, LabelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSpec {
    pub label_kind: LabelKind,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub task: CBConfig,
    pub network: NetworkSpec,
    pub training: TrainConfig,
    pub probe: ProbeConfig,
    /// Epochs at which to freeze the network and probe every hidden layer.
    pub probe_schedule: Vec<usize>,
    pub label_kind_main: LabelKind,
    pub pretrain: Option<PretrainSpec>,
    /// Label kinds each checkpoint is probed with.
    pub probed_kinds: Vec<LabelKind>,
    pub seeds: Vec<u64>,
}

impl ExperimentPlan {
    /// Pretraining epochs plus main-task epochs.
    pub fn total_epochs(&self) -> usize {
        self.pretrain.as_ref().map_or(0, |p| p.epochs) + self.training.epochs
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.network.validate()?;
        self.training.validate()?;
        self.probe.validate()?;

        let input = self.task.n * self.task.n + self.task.n;
        if self.network.input_dim != input {
            return Err(Error::config(format!(
                "network input_dim {} does not match task input width {input}",
                self.network.input_dim
            )));
        }
        let main_classes = self.task.classes(self.label_kind_main);
        if self.network.output_classes != main_classes {
            return Err(Error::config(format!(
                "network outputs {} classes but {} has {main_classes}",
                self.network.output_classes, self.label_kind_main
            )));
        }
        if let Some(p) = &self.pretrain {
            let pre_classes = self.task.classes(p.label_kind);
            if pre_classes != main_classes {
                return Err(Error::config(format!(
                    "pretraining on {} ({pre_classes} classes) does not fit the {main_classes}-way head",
                    p.label_kind
                )));
            }
        }
        if self.probed_kinds.is_empty() {
            return Err(Error::config("probed_kinds must not be empty"));
        }
        if self.label_kind_main == LabelKind::Coarse && self.task.coarse_groups.is_none() {
            return Err(Error::config(
                "training on coarse labels needs task.coarse_groups",
            ));
        }
        let total = self.total_epochs();
        if let Some(&bad) = self.probe_schedule.iter().find(|&&e| e > total) {
            return Err(Error::config(format!(
                "probe schedule epoch {bad} exceeds the {total}-epoch budget"
            )));
        }
        if self.probe_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("probe schedule must be strictly increasing"));
        }
        if self.network.probe_points().is_empty() && !self.probe_schedule.is_empty() {
            return Err(Error::config(
                "network has no hidden layers to probe on a non-empty schedule",
            ));
        }
        Ok(())
    }

    /// Probe every epoch from 0 through the end of training.
    pub fn every_epoch_schedule(total: usize) -> Vec<usize> {
        (0..=total).collect()
    }

    /// The quick-run schedule: every epoch through 10, then every 5th, and
    /// always the final epoch.
    pub fn sparse_schedule(total: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..=total.min(10)).collect();
        let mut e = 15;
        while e < total {
            out.push(e);
            e += 5;
        }
        if total > 10 {
            out.push(total);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Main,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Main => "main",
        })
    }
}

/// One row of the per-epoch metrics table. Validation accuracy is measured
/// on the label kind being trained during that epoch's phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss_bits: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub lr: f64,
}

/// One usable-information measurement plus the derived seed that produced
/// its probe, for exact replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoPoint {
    pub estimate: InfoEstimate,
    pub probe_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "reason")]
pub enum RunStatus {
    /// Written to plan.json before training starts; finished records carry
    /// one of the other two.
    Running,
    Completed,
    Aborted(String),
}

impl RunStatus {
    pub fn is_aborted(&self) -> bool {
        matches!(self, RunStatus::Aborted(_))
    }
}

/// Everything one seeded experiment produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub plan: ExperimentPlan,
    pub seed: u64,
    pub status: RunStatus,
    pub metrics: Vec<MetricsRow>,
    pub info: Vec<InfoPoint>,
    /// Network snapshots at each scheduled probe epoch.
    pub checkpoints: Vec<(usize, NetworkState<f64>)>,
    pub started_at: String,
    pub wall_secs: f64,
}

impl RunRecord {
    /// Info points at the deepest probed layer, in schedule order.
    pub fn last_hidden_curve(&self, kind: LabelKind) -> Vec<&InfoPoint> {
        let Some(&last) = self.plan.network.probe_points().last() else {
            return Vec::new();
        };
        self.info
            .iter()
            .filter(|p| p.estimate.layer_index == last && p.estimate.label_kind == kind)
            .collect()
    }

    /// Final-epoch estimate at the deepest probed layer.
    pub fn final_last_hidden(&self, kind: LabelKind) -> Option<&InfoPoint> {
        self.last_hidden_curve(kind)
            .into_iter()
            .max_by_key(|p| p.estimate.epoch)
    }

    pub fn final_val_acc(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.val_acc)
    }
}

/// Mean and standard error across completed seeds for one curve point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub layer_index: usize,
    pub label_kind: LabelKind,
    pub mean_iu_bits: f64,
    pub sem_iu_bits: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub epoch: usize,
    pub mean_val_acc: f64,
    pub sem_val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub seeds: Vec<u64>,
    pub info: Vec<CurvePoint>,
    pub accuracy: Vec<AccuracyPoint>,
    /// Seeds whose runs aborted, with reasons; their curves are excluded.
    pub failures: Vec<(u64, String)>,
}

/// A seed sweep's individual runs plus their pointwise aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub runs: Vec<RunRecord>,
    pub aggregate: SweepAggregate,
}

/// Aggregated endpoint of one pretraining-length setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainPoint {
    pub pretrain_epochs: usize,
    pub mean_direction_iu_bits: f64,
    pub sem_direction_iu_bits: f64,
    pub mean_color_iu_bits: f64,
    pub sem_color_iu_bits: f64,
    pub mean_val_acc: f64,
    pub sem_val_acc: f64,
    /// Per-seed (seed, direction iu, color iu, final val acc).
    pub per_seed: Vec<(u64, f64, f64, f64)>,
}

/// A pretraining sweep's aggregated points plus every underlying run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSweepOutcome {
    pub points: Vec<PretrainPoint>,
    pub runs: Vec<RunRecord>,
}

/// Coarse-variant run with its forgetting summary: how much fine-label
/// information the deepest hidden layer gained and then gave back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseOutcome {
    pub record: RunRecord,
    pub max_fine_iu_bits: f64,
    pub final_fine_iu_bits: f64,
    pub forgetting_gap_bits: f64,
}

/// Mean and SEM (sample std over sqrt n); SEM is 0 for a single value.
pub(crate) fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_schedule_shape() {
        let s = ExperimentPlan::sparse_schedule(100);
        assert!(s.starts_with(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]));
        assert!(s.contains(&15));
        assert!(s.contains(&95));
        assert_eq!(*s.last().unwrap(), 100);
        assert!(s.windows(2).all(|w| w[0] < w[1]));

        let short = ExperimentPlan::sparse_schedule(4);
        assert_eq!(short, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn mean_sem_basics() {
        let (m, s) = mean_sem(&[1.0, 1.0, 1.0]);
        assert_eq!(m, 1.0);
        assert_eq!(s, 0.0);
        let (m, s) = mean_sem(&[0.0, 2.0]);
        assert_eq!(m, 1.0);
        assert!((s - 1.0).abs() < 1e-12);
        let (_, s) = mean_sem(&[5.0]);
        assert_eq!(s, 0.0);
    }
}
