//! JSON experiment configuration.
//!
//! A config document has sections {task, network, training, probe, schedule,
//! pretrain?, label_kind_main, probed_label_kinds, seeds, output}. Unknown
//! keys are rejected with the offending field path. Named presets cover the
//! standard experiment grid so a config file is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentPlan, PretrainSpec};
use crate::nn::{LayerSpec, NetworkSpec, TrainConfig};
use crate::probe::ProbeConfig;
use crate::task::{CBConfig, LabelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub n: usize,
    pub num_samples: usize,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub coarse_groups: Option<usize>,
}

fn default_noise_std() -> f64 {
    0.1
}
fn default_train_fraction() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationDoc {
    Relu,
    LeakyRelu { slope: f64 },
}

impl Default for ActivationDoc {
    fn default() -> Self {
        ActivationDoc::Relu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub activation: ActivationDoc,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(default)]
    pub dropout: Option<f64>,
}

impl NetworkDoc {
    fn to_spec(&self, input_dim: usize, output_classes: usize) -> NetworkSpec {
        let mut layers = Vec::new();
        for &w in &self.hidden_widths {
            layers.push(LayerSpec::affine(w));
            layers.push(match self.activation {
                ActivationDoc::Relu => LayerSpec::Relu,
                ActivationDoc::LeakyRelu { slope } => LayerSpec::leaky_relu(slope),
            });
            if self.batch_norm {
                layers.push(LayerSpec::batch_norm());
            }
            if let Some(p) = self.dropout {
                layers.push(LayerSpec::dropout(p));
            }
        }
        layers.push(LayerSpec::affine(output_classes));
        NetworkSpec {
            input_dim,
            layers,
            output_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingDoc {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_anneal")]
    pub anneal_factor: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_anneal() -> f64 {
    1.0
}

impl TrainingDoc {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            momentum: self.momentum,
            anneal_factor: self.anneal_factor,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeDoc {
    #[serde(default = "default_probe_widths")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
    #[serde(default = "default_drop_prob")]
    pub drop_prob: f64,
    #[serde(default = "default_true")]
    pub batch_norm: bool,
    #[serde(default = "default_probe_epochs")]
    pub epochs: usize,
    #[serde(default = "default_probe_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_train_samples")]
    pub train_samples: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
}

fn default_probe_widths() -> Vec<usize> {
    vec![128, 64, 32]
}
fn default_leaky_slope() -> f64 {
    0.2
}
fn default_drop_prob() -> f64 {
    0.7
}
fn default_true() -> bool {
    true
}
fn default_probe_epochs() -> usize {
    100
}
fn default_probe_lr() -> f64 {
    0.05
}
fn default_train_samples() -> usize {
    1250
}
fn default_test_samples() -> usize {
    3750
}

impl Default for ProbeDoc {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl ProbeDoc {
    fn to_config(&self) -> ProbeConfig {
        ProbeConfig {
            hidden_widths: self.hidden_widths.clone(),
            leaky_slope: self.leaky_slope,
            drop_prob: self.drop_prob,
            batch_norm: self.batch_norm,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            train_samples: self.train_samples,
            test_samples: self.test_samples,
            // Per-job seeds are derived from the run seed at probe time.
            seed: 0,
        }
    }
}

/// `"every"`, `"sparse"`, or an explicit epoch list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleDoc {
    Named(String),
    Epochs(Vec<usize>),
}

impl Default for ScheduleDoc {
    fn default() -> Self {
        ScheduleDoc::Named("every".into())
    }
}

impl ScheduleDoc {
    fn expand(&self, total_epochs: usize) -> Result<Vec<usize>> {
        match self {
            ScheduleDoc::Named(name) => match name.as_str() {
                "every" => Ok(ExperimentPlan::every_epoch_schedule(total_epochs)),
                "sparse" => Ok(ExperimentPlan::sparse_schedule(total_epochs)),
                other => Err(Error::config(format!(
                    "schedule: expected \"every\", \"sparse\", or an epoch list, got {other:?}"
                ))),
            },
            ScheduleDoc::Epochs(list) => {
                let mut out = list.clone();
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainDoc {
    pub label_kind: LabelKind,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDoc {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub task: TaskDoc,
    pub network: NetworkDoc,
    pub training: TrainingDoc,
    #[serde(default)]
    pub probe: ProbeDoc,
    #[serde(default)]
    pub schedule: ScheduleDoc,
    #[serde(default)]
    pub pretrain: Option<PretrainDoc>,
    #[serde(default = "default_label_kind_main")]
    pub label_kind_main: LabelKind,
    #[serde(default)]
    pub probed_label_kinds: Option<Vec<LabelKind>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputDoc,
}

fn default_label_kind_main() -> LabelKind {
    LabelKind::Direction
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl PlanDoc {
    pub fn to_plan(&self) -> Result<ExperimentPlan> {
        let task = CBConfig {
            n: self.task.n,
            num_samples: self.task.num_samples,
            noise_std: self.task.noise_std,
            seed: self.task.seed,
            train_fraction: self.task.train_fraction,
            coarse_groups: self.task.coarse_groups,
        };
        task.validate()?;
        let input_dim = task.n * task.n + task.n;
        let classes = task.classes(self.label_kind_main);
        let network = self.network.to_spec(input_dim, classes);
        let training = self.training.to_config();
        let pretrain = self.pretrain.as_ref().map(|p| PretrainSpec {
            label_kind: p.label_kind,
            epochs: p.epochs,
        });
        let total = pretrain.as_ref().map_or(0, |p| p.epochs) + training.epochs;
        let probe_schedule = self.schedule.expand(total)?;
        let probed_kinds = match &self.probed_label_kinds {
            Some(kinds) if !kinds.is_empty() => kinds.clone(),
            _ => match self.label_kind_main {
                LabelKind::Coarse => vec![LabelKind::Coarse, LabelKind::Direction],
                _ => vec![LabelKind::Direction, LabelKind::Color],
            },
        };
        let plan = ExperimentPlan {
            task,
            network,
            training,
            probe: self.probe.to_config(),
            probe_schedule,
            label_kind_main: self.label_kind_main,
            pretrain,
            probed_kinds,
            seeds: self.seeds.clone(),
        };
        plan.validate()?;
        Ok(plan)
    }
}

pub const PRESET_NAMES: [&str; 5] = [
    "smallfc_n2",
    "mediumfc_n10",
    "mediumfc_n20",
    "mediumfc_n25",
    "coarse_n10",
];

/// Built-in configurations for the standard experiment grid.
pub fn preset(name: &str) -> Option<PlanDoc> {
    let medium = |n: usize, num_samples: usize, batch_size: usize| PlanDoc {
        task: TaskDoc {
            n,
            num_samples,
            noise_std: 0.1,
            train_fraction: 0.9,
            seed: 0,
            coarse_groups: None,
        },
        network: NetworkDoc {
            hidden_widths: vec![100, 20, 20, 20],
            activation: ActivationDoc::Relu,
            batch_norm: false,
            dropout: None,
        },
        training: TrainingDoc {
            learning_rate: 0.5,
            batch_size,
            epochs: 100,
            momentum: 0.0,
            anneal_factor: 1.0,
            weight_decay: 0.0,
        },
        probe: ProbeDoc {
            learning_rate: 0.5,
            ..ProbeDoc::default()
        },
        schedule: ScheduleDoc::default(),
        pretrain: None,
        label_kind_main: LabelKind::Direction,
        probed_label_kinds: None,
        seeds: vec![0],
        output: OutputDoc::default(),
    };

    match name {
        "smallfc_n2" => Some(PlanDoc {
            task: TaskDoc {
                n: 2,
                num_samples: 10_000,
                noise_std: 0.1,
                train_fraction: 0.9,
                seed: 0,
                coarse_groups: None,
            },
            network: NetworkDoc {
                hidden_widths: vec![10, 7, 5, 4, 3],
                activation: ActivationDoc::Relu,
                batch_norm: false,
                dropout: None,
            },
            training: TrainingDoc {
                learning_rate: 0.05,
                batch_size: 32,
                epochs: 100,
                momentum: 0.0,
                anneal_factor: 1.0,
                weight_decay: 0.0,
            },
            probe: ProbeDoc {
                learning_rate: 0.05,
                ..ProbeDoc::default()
            },
            schedule: ScheduleDoc::default(),
            pretrain: None,
            label_kind_main: LabelKind::Direction,
            probed_label_kinds: None,
            seeds: vec![0],
            output: OutputDoc::default(),
        }),
        "mediumfc_n10" => Some(medium(10, 25_000, 64)),
        "mediumfc_n20" => Some(medium(20, 50_000, 128)),
        "mediumfc_n25" => Some(medium(25, 75_000, 128)),
        "coarse_n10" => {
            let mut doc = medium(10, 25_000, 32);
            doc.task.coarse_groups = Some(2);
            doc.label_kind_main = LabelKind::Coarse;
            doc
                .probed_label_kinds
                .replace(vec![LabelKind::Coarse, LabelKind::Direction]);
            Some(doc)
        }
        _ => None,
    }
}

/// Parse a config source: a preset name or a path to a JSON document.
/// Validation failures name the offending field path.
pub fn parse_config(source: &str) -> Result<(PlanDoc, ExperimentPlan)> {
    let doc = if let Some(doc) = preset(source) {
        doc
    } else {
        let path = Path::new(source);
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_config_str(&raw)?
    };
    let plan = doc.to_plan()?;
    Ok((doc, plan))
}

/// Parse a JSON config document from a string.
pub fn parse_config_str(raw: &str) -> Result<PlanDoc> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            Error::config(format!("config: {}", e.inner()))
        } else {
            Error::config(format!("config field `{path}`: {}", e.inner()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_valid_plans() {
        for name in PRESET_NAMES {
            let doc = preset(name).unwrap();
            let plan = doc.to_plan().unwrap();
            plan.validate().unwrap();
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn smallfc_preset_values() {
        let plan = preset("smallfc_n2").unwrap().to_plan().unwrap();
        assert_eq!(plan.task.n, 2);
        assert_eq!(plan.task.num_samples, 10_000);
        assert_eq!(plan.task.train_fraction, 0.9);
        assert_eq!(plan.training.batch_size, 32);
        assert_eq!(plan.training.learning_rate, 0.05);
        assert_eq!(plan.training.epochs, 100);
        assert_eq!(plan.network.input_dim, 6);
        assert_eq!(plan.probe.learning_rate, 0.05);
        assert_eq!(plan.probe.hidden_widths, vec![128, 64, 32]);
        assert_eq!(plan.probe.train_samples, 1250);
        assert_eq!(plan.probe.test_samples, 3750);
    }

    #[test]
    fn mediumfc_n20_preset_values() {
        let plan = preset("mediumfc_n20").unwrap().to_plan().unwrap();
        assert_eq!(plan.task.n, 20);
        assert_eq!(plan.task.num_samples, 50_000);
        assert_eq!(plan.training.batch_size, 128);
        assert_eq!(plan.training.learning_rate, 0.5);
        assert_eq!(plan.network.input_dim, 420);
    }

    #[test]
    fn coarse_preset_trains_a_two_way_head() {
        let plan = preset("coarse_n10").unwrap().to_plan().unwrap();
        assert_eq!(plan.network.output_classes, 2);
        assert_eq!(plan.label_kind_main, LabelKind::Coarse);
        assert_eq!(
            plan.probed_kinds,
            vec![LabelKind::Coarse, LabelKind::Direction]
        );
    }

    #[test]
    fn unknown_keys_are_named() {
        let raw = r#"{
            "task": {"n": 2, "num_samples": 100},
            "network": {"hidden_widths": [4]},
            "training": {"learning_rt": 0.05, "batch_size": 32, "epochs": 2}
        }"#;
        let err = parse_config_str(raw).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rt"), "{msg}");
        assert!(msg.contains("training"), "{msg}");
    }

    #[test]
    fn schedule_forms() {
        let base = r#"{
            "task": {"n": 2, "num_samples": 100},
            "network": {"hidden_widths": [4]},
            "training": {"learning_rate": 0.05, "batch_size": 32, "epochs": 10},
            "schedule": SCHED
        }"#;
        let parse = |sched: &str| {
            parse_config_str(&base.replace("SCHED", sched))
                .unwrap()
                .to_plan()
                .unwrap()
                .probe_schedule
        };
        assert_eq!(parse("\"every\""), (0..=10).collect::<Vec<_>>());
        assert_eq!(parse("[4, 0, 10, 4]"), vec![0, 4, 10]);
        assert_eq!(parse("\"sparse\""), (0..=10).collect::<Vec<_>>());
        assert!(parse_config_str(&base.replace("SCHED", "\"weekly\""))
            .unwrap()
            .to_plan()
            .is_err());
    }

    #[test]
    fn plan_doc_roundtrips_through_json() {
        let doc = preset("coarse_n10").unwrap();
        let json = serde_json::to_string(&doc).unwrap();
        let back = parse_config_str(&json).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn defaulted_sections_fill_in() {
        let raw = r#"{
            "task": {"n": 2, "num_samples": 100},
            "network": {"hidden_widths": [4], "activation": {"leaky_relu": {"slope": 0.2}}},
            "training": {"learning_rate": 0.05, "batch_size": 32, "epochs": 2}
        }"#;
        let doc = parse_config_str(raw).unwrap();
        assert_eq!(doc.probe.drop_prob, 0.7);
        assert_eq!(doc.seeds, vec![0]);
        let plan = doc.to_plan().unwrap();
        assert_eq!(
            plan.probed_kinds,
            vec![LabelKind::Direction, LabelKind::Color]
        );
        assert!(matches!(
            plan.network.layers[1],
            LayerSpec::LeakyRelu { slope } if slope == 0.2
        ));
    }
}
