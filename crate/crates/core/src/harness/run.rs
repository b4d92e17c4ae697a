//! Experiment execution: seeded runs with checkpointed probing, seed sweeps,
//! the pretraining sweep, and the coarse-label variant.
//!
//! All randomness inside a run derives from the run seed through tagged
//! streams (dataset, init, per-checkpoint probe data, per-job probe seeds),
//! so results are identical regardless of execution order or parallelism.

use std::collections::BTreeSet;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{effective_lr, evaluate, train_epoch, NetworkState};
use crate::probe::{
    capture_activations, estimate_usable_info, train_probe, uniform_marginal, ProbeConfig,
};
use crate::rng::{derive_seed, rng_from_seed, tag};
use crate::task::{generate, generate_samples, CBConfig, Dataset, LabelKind};

use super::plan::{
    mean_sem, AccuracyPoint, CoarseOutcome, CurvePoint, ExperimentPlan, InfoPoint, MetricsRow,
    Phase, PretrainPoint, PretrainSpec, PretrainSweepOutcome, RunRecord, RunStatus,
    SweepAggregate, SweepOutcome,
};

/// Sustained-loss abort threshold, in bits.
const ABORT_LOSS_BITS: f64 = 100.0;
/// Consecutive over-threshold epochs tolerated before aborting.
const ABORT_PATIENCE: usize = 3;

/// Watches train loss for divergence: NaN aborts immediately, a loss above
/// [`ABORT_LOSS_BITS`] for [`ABORT_PATIENCE`] consecutive epochs aborts too.
#[derive(Debug, Default)]
pub struct AbortMonitor {
    high_streak: usize,
}

impl AbortMonitor {
    pub fn new() -> Self {
        AbortMonitor::default()
    }

    pub fn observe(&mut self, train_loss_bits: f64) -> Option<String> {
        if !train_loss_bits.is_finite() {
            return Some(format!("train loss became {train_loss_bits}"));
        }
        if train_loss_bits > ABORT_LOSS_BITS {
            self.high_streak += 1;
            if self.high_streak >= ABORT_PATIENCE {
                return Some(format!(
                    "train loss above {ABORT_LOSS_BITS} bits for {ABORT_PATIENCE} consecutive epochs"
                ));
            }
        } else {
            self.high_streak = 0;
        }
        None
    }
}

/// Probe every hidden layer of a frozen network with every planned label
/// kind, on freshly generated task samples. Probe jobs run in parallel; their
/// seeds are derived from (run seed, epoch, layer, kind), so scheduling does
/// not affect the numbers.
pub fn probe_checkpoint(
    plan: &ExperimentPlan,
    run_seed: u64,
    state: &NetworkState<f64>,
    epoch: usize,
) -> Result<Vec<InfoPoint>> {
    let count = plan.probe.train_samples + plan.probe.test_samples;
    let mut data_rng = rng_from_seed(derive_seed(run_seed, &[tag::PROBE_DATA, epoch as u64]));
    let samples = generate_samples::<f64>(
        plan.task.n,
        count,
        plan.task.noise_std,
        plan.task.coarse_groups,
        &mut data_rng,
    );

    let layers = plan.network.probe_points();
    let splits = layers
        .par_iter()
        .map(|&layer| {
            let acts = capture_activations(state, &samples, &plan.task, layer, epoch)?;
            acts.split_rows(plan.probe.train_samples)
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize, LabelKind)> = layers
        .iter()
        .enumerate()
        .flat_map(|(pos, &layer)| plan.probed_kinds.iter().map(move |&k| (pos, layer, k)))
        .collect();

    jobs.par_iter()
        .map(|&(pos, layer, kind)| {
            let (train_acts, test_acts) = &splits[pos];
            let probe_seed = derive_seed(
                run_seed,
                &[tag::PROBE_JOB, epoch as u64, layer as u64, kind.seed_tag()],
            );
            let config = ProbeConfig {
                seed: probe_seed,
                ..plan.probe.clone()
            };
            let probe = train_probe(train_acts, kind, &config)?;
            let marginal = uniform_marginal(plan.task.classes(kind));
            let estimate = estimate_usable_info(&probe, test_acts, kind, &marginal)?;
            Ok(InfoPoint {
                estimate,
                probe_seed,
            })
        })
        .collect()
}

/// Train one seeded network per the plan, probing at each scheduled epoch.
///
/// Numerical divergence does not error out: the run comes back with
/// `RunStatus::Aborted` and whatever metrics were collected.
pub fn run_experiment(plan: &ExperimentPlan, seed: u64) -> Result<RunRecord> {
    plan.validate()?;
    let t0 = Instant::now();
    let mut record = RunRecord {
        plan: plan.clone(),
        seed,
        status: RunStatus::Completed,
        metrics: Vec::new(),
        info: Vec::new(),
        checkpoints: Vec::new(),
        started_at: chrono::Utc::now().to_rfc3339(),
        wall_secs: 0.0,
    };

    let data_cfg = CBConfig {
        seed: derive_seed(seed, &[tag::DATASET]),
        ..plan.task.clone()
    };
    let dataset: Dataset<f64> = generate(&data_cfg)?;
    let x_train = dataset.train_inputs();
    let x_val = dataset.val_inputs();

    let mut state = NetworkState::<f64>::init(&plan.network, derive_seed(seed, &[tag::INIT]))?;
    let pre_epochs = plan.pretrain.as_ref().map_or(0, |p| p.epochs);
    let total = plan.total_epochs();
    let schedule: BTreeSet<usize> = plan.probe_schedule.iter().copied().collect();

    let snapshot = |record: &mut RunRecord, state: &NetworkState<f64>, epoch: usize| {
        info!("seed {seed}: probing checkpoint at epoch {epoch}");
        let points = probe_checkpoint(plan, seed, state, epoch)?;
        record.info.extend(points);
        record.checkpoints.push((epoch, state.clone()));
        Ok::<(), Error>(())
    };

    if schedule.contains(&0) {
        snapshot(&mut record, &state, 0)?;
    }

    let mut monitor = AbortMonitor::new();
    'epochs: for epoch in 0..total {
        let phase = if epoch < pre_epochs {
            Phase::Pretrain
        } else {
            Phase::Main
        };
        let kind = match phase {
            Phase::Pretrain => plan.pretrain.as_ref().expect("pretrain phase").label_kind,
            Phase::Main => plan.label_kind_main,
        };
        // Velocity does not carry across the objective switch.
        if pre_epochs > 0 && epoch == pre_epochs {
            state.reset_velocity();
        }
        let y_train = dataset.train_labels(kind);
        let y_val = dataset.val_labels(kind);
        let lr = effective_lr(
            plan.training.learning_rate,
            plan.training.anneal_factor,
            state.epoch(),
        );

        let metrics = match train_epoch(&mut state, &x_train, &y_train, &plan.training) {
            Ok(m) => m,
            Err(Error::Numerical(msg)) => {
                record.status = RunStatus::Aborted(msg);
                break 'epochs;
            }
            Err(e) => return Err(e),
        };
        let val_acc = match evaluate(&state, &x_val, &y_val) {
            Ok((acc, _)) => acc,
            Err(Error::Numerical(msg)) => {
                record.status = RunStatus::Aborted(msg);
                break 'epochs;
            }
            Err(e) => return Err(e),
        };
        debug!(
            "seed {seed} epoch {epoch} [{phase}] loss {:.4} bits acc {:.4} val {:.4}",
            metrics.train_loss_bits, metrics.train_acc, val_acc
        );
        record.metrics.push(MetricsRow {
            epoch,
            phase,
            train_loss_bits: metrics.train_loss_bits,
            train_acc: metrics.train_acc,
            val_acc,
            lr,
        });
        if let Some(reason) = monitor.observe(metrics.train_loss_bits) {
            record.status = RunStatus::Aborted(reason);
            break 'epochs;
        }
        if schedule.contains(&(epoch + 1)) {
            snapshot(&mut record, &state, epoch + 1)?;
        }
    }

    record.wall_secs = t0.elapsed().as_secs_f64();
    Ok(record)
}

/// Pointwise mean/SEM of clamped usable information and validation accuracy
/// over the completed runs.
pub fn aggregate_runs(runs: &[RunRecord]) -> SweepAggregate {
    let failures: Vec<(u64, String)> = runs
        .iter()
        .filter_map(|r| match &r.status {
            RunStatus::Aborted(reason) => Some((r.seed, reason.clone())),
            RunStatus::Completed | RunStatus::Running => None,
        })
        .collect();
    let completed: Vec<&RunRecord> = runs.iter().filter(|r| !r.status.is_aborted()).collect();

    let mut info_groups: std::collections::BTreeMap<(usize, usize, LabelKind), Vec<f64>> =
        std::collections::BTreeMap::new();
    let mut acc_groups: std::collections::BTreeMap<usize, Vec<f64>> =
        std::collections::BTreeMap::new();
    for run in &completed {
        for p in &run.info {
            info_groups
                .entry((p.estimate.epoch, p.estimate.layer_index, p.estimate.label_kind))
                .or_default()
                .push(p.estimate.iu_bits);
        }
        for m in &run.metrics {
            acc_groups.entry(m.epoch).or_default().push(m.val_acc);
        }
    }

    SweepAggregate {
        seeds: runs.iter().map(|r| r.seed).collect(),
        info: info_groups
            .into_iter()
            .map(|((epoch, layer_index, label_kind), vals)| {
                let (mean, sem) = mean_sem(&vals);
                CurvePoint {
                    epoch,
                    layer_index,
                    label_kind,
                    mean_iu_bits: mean,
                    sem_iu_bits: sem,
                    seeds: vals.len(),
                }
            })
            .collect(),
        accuracy: acc_groups
            .into_iter()
            .map(|(epoch, vals)| {
                let (mean, sem) = mean_sem(&vals);
                AccuracyPoint {
                    epoch,
                    mean_val_acc: mean,
                    sem_val_acc: sem,
                }
            })
            .collect(),
        failures,
    }
}

/// Run the plan once per seed (in parallel) and aggregate. Needs at least two
/// seeds; aborted seeds are reported as failures, not errors.
pub fn run_seed_sweep(plan: &ExperimentPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    if plan.seeds.len() < 2 {
        return Err(Error::input(format!(
            "a seed sweep needs at least 2 seeds, got {}",
            plan.seeds.len()
        )));
    }
    let runs: Vec<RunRecord> = plan
        .seeds
        .par_iter()
        .map(|&s| run_experiment(plan, s))
        .collect::<Result<_>>()?;
    let aggregate = aggregate_runs(&runs);
    Ok(SweepOutcome { runs, aggregate })
}

/// For each pretraining length P: pretrain on color for P epochs, train the
/// main task for the plan's full `training.epochs`, and aggregate the
/// final-epoch last-hidden information and validation accuracy over seeds.
///
/// The caller's schedule is kept (clamped to each run's budget) but the final
/// epoch is always probed, with direction and color always measured.
pub fn run_pretraining_sweep(
    plan: &ExperimentPlan,
    pretrain_epoch_list: &[usize],
) -> Result<PretrainSweepOutcome> {
    plan.validate()?;
    if pretrain_epoch_list.is_empty() {
        return Err(Error::input("empty pretraining epoch list"));
    }
    if plan.seeds.is_empty() {
        return Err(Error::input("pretraining sweep needs at least one seed"));
    }

    let mut points = Vec::with_capacity(pretrain_epoch_list.len());
    let mut all_runs = Vec::new();
    for &pre in pretrain_epoch_list {
        let mut sub = plan.clone();
        sub.pretrain = Some(PretrainSpec {
            label_kind: LabelKind::Color,
            epochs: pre,
        });
        let total = sub.total_epochs();
        let mut schedule: Vec<usize> = plan
            .probe_schedule
            .iter()
            .copied()
            .filter(|&e| e <= total)
            .collect();
        schedule.push(total);
        schedule.sort_unstable();
        schedule.dedup();
        sub.probe_schedule = schedule;
        for kind in [LabelKind::Direction, LabelKind::Color] {
            if !sub.probed_kinds.contains(&kind) {
                sub.probed_kinds.push(kind);
            }
        }
        sub.validate()?;

        let runs: Vec<RunRecord> = sub
            .seeds
            .par_iter()
            .map(|&s| run_experiment(&sub, s))
            .collect::<Result<_>>()?;
        let completed: Vec<&RunRecord> = runs.iter().filter(|r| !r.status.is_aborted()).collect();
        if completed.is_empty() {
            return Err(Error::numerical(format!(
                "every seed aborted at pretraining length {pre}"
            )));
        }

        let mut per_seed = Vec::with_capacity(completed.len());
        for run in &completed {
            let dir = run
                .final_last_hidden(LabelKind::Direction)
                .ok_or_else(|| Error::state("missing final direction estimate"))?;
            let col = run
                .final_last_hidden(LabelKind::Color)
                .ok_or_else(|| Error::state("missing final color estimate"))?;
            let acc = run
                .final_val_acc()
                .ok_or_else(|| Error::state("missing validation accuracy"))?;
            per_seed.push((run.seed, dir.estimate.iu_bits, col.estimate.iu_bits, acc));
        }
        let (dir_mean, dir_sem) = mean_sem(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>());
        let (col_mean, col_sem) = mean_sem(&per_seed.iter().map(|p| p.2).collect::<Vec<_>>());
        let (acc_mean, acc_sem) = mean_sem(&per_seed.iter().map(|p| p.3).collect::<Vec<_>>());
        points.push(PretrainPoint {
            pretrain_epochs: pre,
            mean_direction_iu_bits: dir_mean,
            sem_direction_iu_bits: dir_sem,
            mean_color_iu_bits: col_mean,
            sem_color_iu_bits: col_sem,
            mean_val_acc: acc_mean,
            sem_val_acc: acc_sem,
            per_seed,
        });
        all_runs.extend(runs);
    }
    Ok(PretrainSweepOutcome {
        points,
        runs: all_runs,
    })
}

/// Train on coarse labels while probing both coarse and fine (direction)
/// information, and summarize the fine-label forgetting gap at the deepest
/// hidden layer: max over probed epochs minus the final value.
pub fn run_coarse_variant(plan: &ExperimentPlan, seed: u64) -> Result<CoarseOutcome> {
    if plan.label_kind_main != LabelKind::Coarse {
        return Err(Error::config(
            "coarse variant requires label_kind_main = coarse",
        ));
    }
    for kind in [LabelKind::Coarse, LabelKind::Direction] {
        if !plan.probed_kinds.contains(&kind) {
            return Err(Error::config(format!(
                "coarse variant must probe {kind} information"
            )));
        }
    }
    if plan.probe_schedule.is_empty() {
        return Err(Error::config(
            "coarse variant needs a non-empty probe schedule",
        ));
    }
    let record = run_experiment(plan, seed)?;
    let fine: Vec<f64> = record
        .last_hidden_curve(LabelKind::Direction)
        .iter()
        .map(|p| p.estimate.iu_bits)
        .collect();
    if fine.is_empty() {
        return Err(Error::state("run produced no fine-label estimates"));
    }
    let max_fine = fine.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let final_fine = *fine.last().expect("non-empty");
    Ok(CoarseOutcome {
        record,
        max_fine_iu_bits: max_fine,
        final_fine_iu_bits: final_fine,
        forgetting_gap_bits: max_fine - final_fine,
    })
}
