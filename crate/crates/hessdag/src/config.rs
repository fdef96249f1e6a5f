//! Experiment configuration. A config file names an experiment and overrides
//! any subset of that experiment's preset; unknown keys are rejected.
//!
//! ```json
//! {"experiment": "decay", "seeds": [42, 43], "model": {"depths": [8]}, "training": {"epochs": 5}}
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::spec::hash_str;
use crate::task::{SyntheticTask, TaskKind};
use crate::train::TrainConfig;

pub const MAX_WIDTH: usize = 64;
pub const MAX_DEPTH: usize = 16;
pub const MAX_PARAMS: usize = 50_000;
pub const DEFAULT_SEEDS: [u64; 5] = [42, 43, 44, 45, 46];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Decay,
    Bottleneck,
    GngapActivations,
    Diamond,
    ToyAttention,
    OracleSuite,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Decay,
        ExperimentId::Bottleneck,
        ExperimentId::GngapActivations,
        ExperimentId::Diamond,
        ExperimentId::ToyAttention,
        ExperimentId::OracleSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Decay => "decay",
            ExperimentId::Bottleneck => "bottleneck",
            ExperimentId::GngapActivations => "gngap-activations",
            ExperimentId::Diamond => "diamond",
            ExperimentId::ToyAttention => "toy-attention",
            ExperimentId::OracleSuite => "oracle-suite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input: usize,
    pub width: usize,
    /// Number of hidden layers (residual: layers between first and last
    /// stream node, two per block).
    pub depths: Vec<usize>,
    pub bottlenecks: Vec<usize>,
    pub activations: Vec<String>,
    pub merges: Vec<String>,
    pub seq_len: usize,
    /// One-time rescale of every weight matrix to this spectral norm at init.
    pub spectral_target: Option<f64>,
    /// Multiplies the init variance (`1/fan_in` smooth, `2/fan_in` ReLU-family).
    pub init_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    pub task: SyntheticTask,
    pub training: TrainConfig,
    /// Probe count for stochastic estimates.
    pub probes: usize,
    pub power_iters: usize,
    pub output: Option<PathBuf>,
}

fn regression(train_size: usize, probe_size: usize) -> SyntheticTask {
    SyntheticTask {
        kind: TaskKind::TeacherRegression { noise: 0.01, teacher_seed: 0 },
        generator_seed: 11,
        train_size,
        probe_size,
    }
}

fn classification(train_size: usize, probe_size: usize) -> SyntheticTask {
    SyntheticTask {
        kind: TaskKind::GaussianClassification { classes: 10, separation: 1.0, spread: 1.0 },
        generator_seed: 7,
        train_size,
        probe_size,
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl ExperimentConfig {
    pub fn preset(id: ExperimentId) -> Self {
        let base_model = ModelConfig {
            input: 16,
            width: 16,
            depths: vec![6],
            bottlenecks: vec![],
            activations: names(&["relu"]),
            merges: vec![],
            seq_len: 8,
            spectral_target: None,
            init_gain: 1.0,
        };
        let base = ExperimentConfig {
            experiment: id,
            seeds: DEFAULT_SEEDS.to_vec(),
            model: base_model.clone(),
            task: regression(256, 16),
            training: TrainConfig { epochs: 20, batch_size: 32, ..TrainConfig::default() },
            probes: 100,
            power_iters: 50,
            output: None,
        };
        match id {
            ExperimentId::Decay => ExperimentConfig {
                model: ModelConfig { depths: vec![8, 12], spectral_target: Some(0.9), ..base_model },
                training: TrainConfig { spectral_target: Some(0.9), ..base.training.clone() },
                ..base
            },
            ExperimentId::Bottleneck => ExperimentConfig {
                model: ModelConfig {
                    width: 64,
                    bottlenecks: vec![2, 4, 8, 16],
                    activations: names(&["tanh"]),
                    ..base_model
                },
                task: classification(256, 32),
                training: TrainConfig { epochs: 10, ..base.training.clone() },
                ..base
            },
            ExperimentId::GngapActivations => ExperimentConfig {
                model: ModelConfig {
                    width: 64,
                    activations: names(&["relu", "leaky_relu", "softplus", "silu", "gelu"]),
                    ..base_model
                },
                task: classification(256, 16),
                ..base
            },
            ExperimentId::Diamond => ExperimentConfig {
                model: ModelConfig {
                    activations: names(&["relu", "silu"]),
                    merges: names(&["sum", "concat"]),
                    ..base_model
                },
                task: regression(256, 32),
                ..base
            },
            ExperimentId::ToyAttention => ExperimentConfig {
                model: ModelConfig { seq_len: 8, init_gain: 1.0 / 3.0, ..base_model },
                task: regression(2048, 64),
                training: TrainConfig { epochs: 30, batch_size: 128, ..base.training.clone() },
                ..base
            },
            ExperimentId::OracleSuite => ExperimentConfig {
                model: ModelConfig {
                    input: 3,
                    width: 4,
                    depths: vec![3],
                    seq_len: 3,
                    activations: names(&["tanh", "gelu", "silu", "softplus"]),
                    ..base_model
                },
                task: regression(0, 3),
                training: TrainConfig { epochs: 0, ..base.training.clone() },
                ..base
            },
        }
    }

    /// Overlays `text` on the preset named by its `experiment` key.
    pub fn from_json(text: &str) -> Result<Self> {
        let overlay: Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
        let id: ExperimentId = match overlay.get("experiment") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::config(format!("config: {e}")))?,
            None => return Err(CliError::config("config: missing \"experiment\"")),
        };
        let mut merged = serde_json::to_value(Self::preset(id)).expect("preset serializes");
        merge(&mut merged, overlay, "")?;
        let cfg: Self = serde_json::from_value(merged).map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hash_str(&serde_json::to_string(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let fail = |msg: String| Err(CliError::config(msg));
        if self.seeds.is_empty() {
            return fail("seeds: empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return fail("seeds: duplicates".into());
        }
        for (name, w) in [("input", m.input), ("width", m.width), ("seq_len", m.seq_len)] {
            if w == 0 || w > MAX_WIDTH {
                return fail(format!("model.{name} = {w} outside 1..={MAX_WIDTH}"));
            }
        }
        if let Some(&b) = m.bottlenecks.iter().find(|&&b| b == 0 || b > MAX_WIDTH) {
            return fail(format!("model.bottlenecks: {b} outside 1..={MAX_WIDTH}"));
        }
        if m.depths.is_empty() {
            return fail("model.depths: empty".into());
        }
        if let Some(&d) = m.depths.iter().find(|&&d| d == 0 || d > MAX_DEPTH) {
            return fail(format!("model.depths: {d} outside 1..={MAX_DEPTH}"));
        }
        for a in &m.activations {
            if hessdag_core::Activation::from_name(a).is_none() {
                return fail(format!("model.activations: unknown {a:?}"));
            }
        }
        if let Some(x) = m.merges.iter().find(|x| *x != "sum" && *x != "concat") {
            return fail(format!("model.merges: unknown {x:?}"));
        }
        if !(m.init_gain > 0.0 && m.init_gain.is_finite()) {
            return fail("model.init_gain must be positive".into());
        }
        if matches!(m.spectral_target, Some(s) if !(s > 0.0)) || matches!(self.training.spectral_target, Some(s) if !(s > 0.0)) {
            return fail("spectral_target must be positive".into());
        }
        let t = &self.training;
        if !(t.lr >= 0.0 && t.lr.is_finite()) || !(0.0..1.0).contains(&t.momentum) || !(t.clip_norm > 0.0) {
            return fail("training: need lr ≥ 0, 0 ≤ momentum < 1, clip_norm > 0".into());
        }
        if t.batch_size == 0 {
            return fail("training.batch_size must be positive".into());
        }
        if self.task.probe_size == 0 {
            return fail("task.probe_size must be positive".into());
        }
        if t.epochs > 0 && self.task.train_size == 0 {
            return fail("task.train_size must be positive when training".into());
        }
        let needs = |what: &str, v: &Vec<String>| if v.is_empty() { fail(format!("model.{what}: empty")) } else { Ok(()) };
        match self.experiment {
            ExperimentId::Bottleneck => {
                if m.bottlenecks.is_empty() {
                    return fail("model.bottlenecks: empty".into());
                }
                if m.depths.iter().any(|&d| d < 3) {
                    return fail("bottleneck depth must be at least 3".into());
                }
                needs("activations", &m.activations)?;
            }
            ExperimentId::Diamond => {
                needs("merges", &m.merges)?;
                needs("activations", &m.activations)?;
            }
            ExperimentId::Decay => {
                if m.depths.iter().any(|&d| d < 2 || d % 2 != 0) {
                    return fail("decay depths must be even and at least 2".into());
                }
                needs("activations", &m.activations)?;
            }
            _ => needs("activations", &m.activations)?,
        }
        let classification = matches!(self.task.kind, TaskKind::GaussianClassification { .. });
        let wants_classes = matches!(self.experiment, ExperimentId::Bottleneck | ExperimentId::GngapActivations);
        if classification != wants_classes {
            return fail(format!("{} needs a {} task", self.experiment.name(), if wants_classes { "classification" } else { "regression" }));
        }
        if let TaskKind::GaussianClassification { classes, spread, .. } = self.task.kind {
            if classes < 2 || classes > MAX_WIDTH || !(spread >= 0.0) {
                return fail("task: need 2 ≤ classes ≤ 64 and spread ≥ 0".into());
            }
        }
        if let TaskKind::TeacherRegression { noise, .. } = self.task.kind {
            if !(noise >= 0.0) {
                return fail("task.noise must be non-negative".into());
            }
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value, path: &str) -> Result<()> {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot @ Value::Object(_)) if v.is_object() && here != "task" => merge(slot, v, &here)?,
                    Some(slot) => *slot = v,
                    None => return Err(CliError::config(format!("config: unknown key {here:?}"))),
                }
            }
            Ok(())
        }
        (b, o) => {
            *b = o;
            Ok(())
        }
    }
}
