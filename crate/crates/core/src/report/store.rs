//! Run directories and their file formats.
//!
//! Layout per run: `run_<timestamp>_<seed>/` holding `plan.json` (written
//! before training starts, finalized after), `metrics.csv`, `info.csv`,
//! `checkpoints/epoch_XXXXX.json`, and `figures/`. Floats are written with
//! 17 significant digits so every numeric field reloads bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentPlan, InfoPoint, MetricsRow, Phase, RunRecord, RunStatus};
use crate::nn::NetworkState;
use crate::probe::InfoEstimate;
use crate::task::LabelKind;

pub const FORMAT_VERSION: u32 = 1;

pub const INFO_CSV_HEADER: &str =
    "seed,epoch,layer,label_kind,h_y_bits,ce_bits,iu_raw_bits,iu_bits,probe_seed";
pub const METRICS_CSV_HEADER: &str = "seed,epoch,phase,train_loss_bits,train_acc,val_acc,lr";

/// 17 significant digits: enough for f64 to round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::parse(format!("bad float {s:?} in {what}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(format!("bad integer {s:?} in {what}")))
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| Error::parse(format!("bad integer {s:?} in {what}")))
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    format_version: u32,
    seed: u64,
    status: RunStatus,
    started_at: String,
    wall_secs: f64,
    plan: ExperimentPlan,
}

/// A root directory that collects run directories.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Fresh `run_<timestamp>_<seed>` directory; a numeric suffix resolves
    /// collisions so concurrent runs never clobber each other.
    pub fn create_run_dir(&self, seed: u64) -> Result<PathBuf> {
        let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
        let base = format!("run_{stamp}_{seed}");
        for attempt in 0..1000 {
            let name = if attempt == 0 {
                base.clone()
            } else {
                format!("{base}-{attempt}")
            };
            let dir = self.root.join(&name);
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(&dir, e)),
            }
        }
        Err(Error::io(
            &self.root,
            std::io::Error::other("exhausted run directory names"),
        ))
    }
}

fn write_plan_file(dir: &Path, record: &RunRecord, status: RunStatus) -> Result<()> {
    let doc = PlanFile {
        format_version: FORMAT_VERSION,
        seed: record.seed,
        status,
        started_at: record.started_at.clone(),
        wall_secs: record.wall_secs,
        plan: record.plan.clone(),
    };
    let path = dir.join("plan.json");
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::parse(format!("plan encode: {e}")))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Announce a run before it starts: create the directory and write plan.json
/// with a `running` status. `write_run_into` later finalizes the same dir.
pub fn begin_run(store: &RunStore, plan: &ExperimentPlan, seed: u64) -> Result<PathBuf> {
    let dir = store.create_run_dir(seed)?;
    let placeholder = RunRecord {
        plan: plan.clone(),
        seed,
        status: RunStatus::Running,
        metrics: Vec::new(),
        info: Vec::new(),
        checkpoints: Vec::new(),
        started_at: chrono::Utc::now().to_rfc3339(),
        wall_secs: 0.0,
    };
    write_plan_file(&dir, &placeholder, RunStatus::Running)?;
    Ok(dir)
}

fn metrics_csv(record: &RunRecord) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in &record.metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            record.seed,
            m.epoch,
            m.phase,
            fmt_f64(m.train_loss_bits),
            fmt_f64(m.train_acc),
            fmt_f64(m.val_acc),
            fmt_f64(m.lr),
        ));
    }
    out
}

fn info_csv(record: &RunRecord) -> String {
    let mut out = String::from(INFO_CSV_HEADER);
    out.push('\n');
    for p in &record.info {
        let e = &p.estimate;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            record.seed,
            e.epoch,
            e.layer_index,
            e.label_kind,
            fmt_f64(e.h_y_bits),
            fmt_f64(e.ce_bits),
            fmt_f64(e.iu_raw_bits),
            fmt_f64(e.iu_bits),
            p.probe_seed,
        ));
    }
    out
}

/// Write a completed (or aborted) record into an existing run directory.
pub fn write_run_into(record: &RunRecord, dir: &Path) -> Result<()> {
    write_plan_file(dir, record, record.status.clone())?;

    let metrics_path = dir.join("metrics.csv");
    fs::write(&metrics_path, metrics_csv(record)).map_err(|e| Error::io(&metrics_path, e))?;
    let info_path = dir.join("info.csv");
    fs::write(&info_path, info_csv(record)).map_err(|e| Error::io(&info_path, e))?;

    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    for (epoch, state) in &record.checkpoints {
        state.write_checkpoint(&ckpt_dir.join(format!("epoch_{epoch:05}.json")))?;
    }
    let fig_dir = dir.join("figures");
    fs::create_dir_all(&fig_dir).map_err(|e| Error::io(&fig_dir, e))?;
    Ok(())
}

/// plan.json before training, everything on completion, fresh directory.
pub fn save_run(record: &RunRecord, store: &RunStore) -> Result<PathBuf> {
    let dir = begin_run(store, &record.plan, record.seed)?;
    write_run_into(record, &dir)?;
    Ok(dir)
}

fn read_csv_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = raw.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(Error::parse(format!(
                "{}: header {other:?} does not match {header:?}",
                path.display()
            )))
        }
    }
    Ok(lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect())
}

/// Reload a run directory into a `RunRecord`. Numeric fields come back
/// bit-exact.
pub fn load_run(dir: &Path) -> Result<RunRecord> {
    let plan_path = dir.join("plan.json");
    let raw = fs::read_to_string(&plan_path).map_err(|e| Error::io(&plan_path, e))?;
    let doc: PlanFile =
        serde_json::from_str(&raw).map_err(|e| Error::parse(format!("plan decode: {e}")))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::parse(format!(
            "unsupported run format version {}",
            doc.format_version
        )));
    }

    let mut metrics = Vec::new();
    for f in read_csv_rows(&dir.join("metrics.csv"), METRICS_CSV_HEADER)? {
        if f.len() != 7 {
            return Err(Error::parse(format!("metrics row has {} fields", f.len())));
        }
        metrics.push(MetricsRow {
            epoch: parse_usize(&f[1], "metrics.epoch")?,
            phase: match f[2].as_str() {
                "pretrain" => Phase::Pretrain,
                "main" => Phase::Main,
                other => return Err(Error::parse(format!("unknown phase {other:?}"))),
            },
            train_loss_bits: parse_f64(&f[3], "metrics.train_loss_bits")?,
            train_acc: parse_f64(&f[4], "metrics.train_acc")?,
            val_acc: parse_f64(&f[5], "metrics.val_acc")?,
            lr: parse_f64(&f[6], "metrics.lr")?,
        });
    }

    let mut info = Vec::new();
    for f in read_csv_rows(&dir.join("info.csv"), INFO_CSV_HEADER)? {
        if f.len() != 9 {
            return Err(Error::parse(format!("info row has {} fields", f.len())));
        }
        let h_y = parse_f64(&f[4], "info.h_y_bits")?;
        let ce = parse_f64(&f[5], "info.ce_bits")?;
        let mut estimate = InfoEstimate::new(
            h_y,
            ce,
            LabelKind::parse(&f[3])?,
            parse_usize(&f[2], "info.layer")?,
            parse_usize(&f[1], "info.epoch")?,
        );
        // Stored raw/clamped values are authoritative; keep them bit-exact
        // rather than recomputed.
        estimate.iu_raw_bits = parse_f64(&f[6], "info.iu_raw_bits")?;
        estimate.iu_bits = parse_f64(&f[7], "info.iu_bits")?;
        info.push(InfoPoint {
            estimate,
            probe_seed: parse_u64(&f[8], "info.probe_seed")?,
        });
    }

    let mut checkpoints = Vec::new();
    let ckpt_dir = dir.join("checkpoints");
    if ckpt_dir.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(&ckpt_dir)
            .map_err(|e| Error::io(&ckpt_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let epoch = name
                .strip_prefix("epoch_")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::parse(format!("checkpoint name {name:?} is not epoch_<n>"))
                })?;
            checkpoints.push((epoch, NetworkState::<f64>::read_checkpoint(&path)?));
        }
    }

    Ok(RunRecord {
        plan: doc.plan,
        seed: doc.seed,
        status: doc.status,
        metrics,
        info,
        checkpoints,
        started_at: doc.started_at,
        wall_secs: doc.wall_secs,
    })
}
