//! Desk-scale experiment runner.
//!
//! Layout of `<root>/<experiment>/`:
//!
//! ```text
//! experiment.json                      resolved config
//! seed-<s>/summary.json                scalars, graph hashes, status
//! seed-<s>/manifest.json               config hash, seed, versions, wall time
//! seed-<s>/metrics-<variant>-<ckpt>.csv
//! seed-<s>/profile-<metric>-<variant>-<ckpt>.csv
//! seed-<s>/losses-<variant>.csv        (trained experiments)
//! seed-<s>/oracle.csv                  (oracle-suite)
//! ```
//!
//! Scalars are keyed `<variant>/<checkpoint>/<name>`; cross-variant scalars
//! use `all` as the variant.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hessdag_core::decomposition::{block_matrix, decompose_batch, gn_block_unrolled, DEFAULT_GAP_EPS};
use hessdag_core::diagnostics::{
    decay_fit, distance_profile, mean_sq_second_derivative, pair_metrics, resonance, spearman, stable_rank_exact,
    MetricKind, PairMetrics,
};
use hessdag_core::hessian::{assemble_full_hessian, evaluate, AssemblyCap, BatchSession, Evaluated, Mode};
use hessdag_core::hvp::{param_hvp, stochastic_gn_gap, stochastic_stable_rank, PairOperator, ProbeStream, DEFAULT_SPECTRAL_FLOOR};
use hessdag_core::linalg::{norm, svd, sym_eigenvalues};
use hessdag_core::oracle::{fd_param_hessian, FdConfig};
use hessdag_core::zoo::{self, Architecture, InitScheme, LossKind, Merge};
use hessdag_core::{Activation, Graph, NodeKind};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentId, MAX_PARAMS};
use crate::error::{CliError, Result};
use crate::io::{metrics_csv, profile_csv, write_json, write_text, Manifest, Provenance, Versions};
use crate::spec::graph_hash;
use crate::task::{Dataset, TaskKind};
use crate::train::{train_sgd, Checkpoint, CheckpointTag};

/// Largest parameter count the finite-difference suite accepts.
pub const MAX_ORACLE_PARAMS: usize = 200;
/// Floor applied to vanishing gaps when forming ratios.
pub const GAP_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub experiment: String,
    pub seed: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub graphs: BTreeMap<String, String>,
    pub scalars: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub summary: SeedSummary,
    /// File name → contents, written under `seed-<s>/`.
    pub files: BTreeMap<String, String>,
    pub wall_ms: u64,
}

impl SeedOutcome {
    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.summary.scalars.get(key).copied()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> Vec<(u64, &str)> {
        self.seeds.iter().filter_map(|s| s.summary.failure.as_deref().map(|f| (s.summary.seed, f))).collect()
    }
}

pub fn seed_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}"))
}

/// Runs every seed and writes results under `<root>/<experiment>/`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    check_sizes(cfg)?;
    let dir = root.join(cfg.experiment.name());
    let mut text = cfg.to_json();
    text.push('\n');
    write_text(&dir.join("experiment.json"), &text)?;
    let seeds: Vec<SeedOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.seeds.iter().map(|&seed| scope.spawn(move || run_seed(cfg, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    });
    let hash = cfg.hash();
    for s in &seeds {
        let sd = seed_dir(&dir, s.summary.seed);
        for (name, body) in &s.files {
            write_text(&sd.join(name), body)?;
        }
        write_json(&sd.join("summary.json"), &s.summary)?;
        let manifest =
            Manifest { config_hash: hash.clone(), seed: s.summary.seed, versions: Versions::default(), wall_ms: s.wall_ms };
        write_json(&sd.join("manifest.json"), &manifest)?;
    }
    Ok(ExperimentOutcome { dir, seeds })
}

/// Builds every graph the config implies and checks the parameter caps.
fn check_sizes(cfg: &ExperimentConfig) -> Result<()> {
    for v in variants(cfg)? {
        let p = v.arch.graph.param_count();
        let cap = if cfg.experiment == ExperimentId::OracleSuite { MAX_ORACLE_PARAMS } else { MAX_PARAMS };
        if p > cap {
            return Err(CliError::config(format!("variant {}: {p} parameters exceeds the cap of {cap}", v.name)));
        }
    }
    Ok(())
}

/// Runs one seed without touching the filesystem.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> SeedOutcome {
    let start = Instant::now();
    let mut run = SeedRun {
        cfg,
        seed,
        summary: SeedSummary {
            experiment: cfg.experiment.name().to_string(),
            seed,
            status: Status::Ok,
            failure: None,
            graphs: BTreeMap::new(),
            scalars: BTreeMap::new(),
        },
        files: BTreeMap::new(),
    };
    if let Err(e) = run.execute() {
        run.summary.status = Status::Failed;
        run.summary.failure = Some(e.to_string());
    }
    SeedOutcome { summary: run.summary, files: run.files, wall_ms: start.elapsed().as_millis() as u64 }
}

struct Variant {
    name: String,
    arch: Architecture,
    act: Activation,
    scheme: InitScheme,
    /// Same-topology graph whose init is truncated into this one.
    reference: Option<Graph>,
}

fn activation(name: &str) -> Result<Activation> {
    Activation::from_name(name).ok_or_else(|| CliError::config(format!("unknown activation {name:?}")))
}

fn classes(cfg: &ExperimentConfig) -> usize {
    match cfg.task.kind {
        TaskKind::GaussianClassification { classes, .. } => classes,
        TaskKind::TeacherRegression { .. } => 1,
    }
}

fn variants(cfg: &ExperimentConfig) -> Result<Vec<Variant>> {
    let m = &cfg.model;
    let mut out = Vec::new();
    let first_act = activation(&m.activations[0])?;
    match cfg.experiment {
        ExperimentId::Decay => {
            for &depth in &m.depths {
                for name in &m.activations {
                    let act = activation(name)?;
                    let suffix = if m.activations.len() > 1 { format!("-{name}") } else { String::new() };
                    out.push(Variant {
                        name: format!("plain-L{depth}{suffix}"),
                        arch: zoo::mlp_chain(m.input, &vec![m.width; depth], m.width, act, LossKind::Mse)?,
                        act,
                        scheme: InitScheme::for_activation(act),
                        reference: None,
                    });
                    out.push(Variant {
                        name: format!("residual-L{depth}{suffix}"),
                        arch: zoo::residual_chain(m.width, depth / 2, 2, act)?,
                        act,
                        scheme: InitScheme::for_activation(act),
                        reference: None,
                    });
                }
            }
        }
        ExperimentId::Bottleneck => {
            let k = classes(cfg);
            let widest = *m.bottlenecks.iter().max().expect("validated");
            for &depth in &m.depths {
                for name in &m.activations {
                    let act = activation(name)?;
                    let widths = |b: usize| {
                        let mut w = vec![m.width; depth];
                        w[bottleneck_index(depth)] = b;
                        w
                    };
                    let loss = LossKind::SoftmaxCe { classes: k };
                    let reference = zoo::mlp_chain(m.input, &widths(widest), k, act, loss)?.graph;
                    for &b in &m.bottlenecks {
                        let mut label = format!("du{b}");
                        if m.depths.len() > 1 {
                            label.push_str(&format!("-L{depth}"));
                        }
                        if m.activations.len() > 1 {
                            label.push_str(&format!("-{name}"));
                        }
                        out.push(Variant {
                            name: label,
                            arch: zoo::mlp_chain(m.input, &widths(b), k, act, loss)?,
                            act,
                            scheme: InitScheme::for_activation(act),
                            reference: Some(reference.clone()),
                        });
                    }
                }
            }
        }
        ExperimentId::GngapActivations => {
            let k = classes(cfg);
            for name in &m.activations {
                let act = activation(name)?;
                let arch = zoo::mlp_chain(m.input, &vec![m.width; m.depths[0]], k, act, LossKind::SoftmaxCe { classes: k })?;
                out.push(Variant { name: name.clone(), arch, act, scheme: InitScheme::for_activation(act), reference: None });
            }
        }
        ExperimentId::Diamond => {
            for merge in &m.merges {
                let kind = if merge == "sum" { Merge::Sum } else { Merge::Concat };
                for name in &m.activations {
                    let act = activation(name)?;
                    let arch = zoo::diamond(m.input, m.width, kind, act)?;
                    out.push(Variant { name: format!("{merge}-{name}"), arch, act, scheme: InitScheme::for_activation(act), reference: None });
                }
            }
        }
        ExperimentId::ToyAttention => {
            out.push(Variant {
                name: "attention".into(),
                arch: zoo::toy_attention(m.seq_len, m.width)?,
                act: first_act,
                scheme: InitScheme::Xavier,
                reference: None,
            });
            out.push(Variant {
                name: "control".into(),
                arch: zoo::relu_control(m.seq_len, m.width)?,
                act: Activation::Relu,
                scheme: InitScheme::He,
                reference: None,
            });
        }
        ExperimentId::OracleSuite => {
            let depth = m.depths[0];
            for name in &m.activations {
                let act = activation(name)?;
                let pairs = [
                    ("chain", zoo::mlp_chain(m.input, &vec![m.width; depth], 2, act, LossKind::Mse)?),
                    ("diamond-sum", zoo::diamond(m.input, m.width, Merge::Sum, act)?),
                    ("diamond-cat", zoo::diamond(m.input, m.width, Merge::Concat, act)?),
                    ("skip", zoo::skip_block(m.input, m.width, act)?),
                ];
                for (family, arch) in pairs {
                    out.push(Variant { name: format!("{family}-{name}"), arch, act, scheme: InitScheme::for_activation(act), reference: None });
                }
            }
            out.push(Variant {
                name: "attention".into(),
                arch: zoo::toy_attention(m.seq_len, m.width)?,
                act: first_act,
                scheme: InitScheme::Xavier,
                reference: None,
            });
        }
    }
    Ok(out)
}

/// Position of the narrow layer among `depth` hidden layers.
pub fn bottleneck_index(depth: usize) -> usize {
    (depth / 2).saturating_sub(1).max(1).min(depth - 2)
}

/// Copies the top-left corner of every Linear node of `reference` into a
/// graph of identical topology with narrower layers. Weights are rescaled by
/// `sqrt(fan_in_ref / fan_in)` so each layer keeps its init variance; biases
/// are copied as they are.
pub fn nested_params(g: &Graph, reference: &Graph, theta_ref: &[f64]) -> Result<Vec<f64>> {
    if g.len() != reference.len() {
        return Err(CliError::config("nested init: graphs differ in node count"));
    }
    let mut theta = vec![0.0; g.param_count()];
    for v in g.param_nodes() {
        let (NodeKind::Linear { out, bias }, NodeKind::Linear { out: ref_out, bias: ref_bias }) = (g.kind(v).clone(), reference.kind(v).clone())
        else {
            return Err(CliError::config("nested init: parameter nodes differ"));
        };
        let inp = g.dim(g.parents(v)[0]);
        let ref_inp = reference.dim(reference.parents(v)[0]);
        if out > ref_out || inp > ref_inp || bias != ref_bias {
            return Err(CliError::config("nested init: reference is not wider"));
        }
        let (s, rs) = (g.param_slot(v).expect("slot"), reference.param_slot(v).expect("slot"));
        let scale = (ref_inp as f64 / inp as f64).sqrt();
        for i in 0..out {
            for j in 0..inp {
                theta[s.offset + i * inp + j] = scale * theta_ref[rs.offset + i * ref_inp + j];
            }
        }
        if bias {
            for i in 0..out {
                theta[s.offset + out * inp + i] = theta_ref[rs.offset + ref_out * ref_inp + i];
            }
        }
    }
    Ok(theta)
}

fn scaled_init(g: &Graph, scheme: InitScheme, gain: f64, seed: u64) -> Vec<f64> {
    let s = gain.sqrt();
    zoo::init_params(g, scheme, seed).into_iter().map(|x| s * x).collect()
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    summary: SeedSummary,
    files: BTreeMap<String, String>,
}

impl SeedRun<'_> {
    fn set(&mut self, variant: &str, ckpt: &str, name: &str, x: f64) {
        if x.is_finite() {
            self.summary.scalars.insert(format!("{variant}/{ckpt}/{name}"), x);
        }
    }

    fn init_theta(&self, v: &Variant) -> Result<Vec<f64>> {
        let m = &self.cfg.model;
        let mut theta = match &v.reference {
            Some(r) => nested_params(&v.arch.graph, r, &scaled_init(r, v.scheme, m.init_gain, self.seed))?,
            None => scaled_init(&v.arch.graph, v.scheme, m.init_gain, self.seed),
        };
        if let Some(target) = m.spectral_target {
            zoo::rescale_spectral(&v.arch.graph, &mut theta, target);
        }
        Ok(theta)
    }

    fn execute(&mut self) -> Result<()> {
        let all = variants(self.cfg)?;
        if self.cfg.experiment == ExperimentId::OracleSuite {
            return self.oracle_suite(&all);
        }
        for v in &all {
            self.summary.graphs.insert(v.name.clone(), graph_hash(&v.arch.graph));
            let data = self.cfg.task.generate(&v.arch.graph, self.seed)?;
            let theta0 = self.init_theta(v)?;
            let checkpoints = self.train(v, &theta0, &data)?;
            for cp in &checkpoints {
                self.diagnose(v, cp, &data)?;
            }
        }
        self.cross_variant(&all)
    }

    fn train(&mut self, v: &Variant, theta0: &[f64], data: &Dataset) -> Result<Vec<Checkpoint>> {
        let t = &self.cfg.training;
        if t.epochs == 0 {
            return Ok(vec![Checkpoint { tag: CheckpointTag::Init, epoch: 0, theta: theta0.to_vec() }]);
        }
        let r = train_sgd(&v.arch.graph, theta0, &data.train, t, self.seed);
        let mut csv = String::from("epoch,loss\n");
        for (e, l) in r.losses.iter().enumerate() {
            csv.push_str(&format!("{e},{l}\n"));
        }
        self.files.insert(format!("losses-{}.csv", v.name), csv);
        self.set(&v.name, "init", "train_loss", r.losses[0]);
        if let Some(last) = r.losses.last() {
            self.set(&v.name, "final", "train_loss", *last);
        }
        if let Some(epoch) = r.diverged {
            return Err(CliError::numerical(format!("variant {}: non-finite training loss in epoch {epoch}", v.name)));
        }
        Ok(r.checkpoints)
    }

    fn diagnose(&mut self, v: &Variant, cp: &Checkpoint, data: &Dataset) -> Result<()> {
        let g = &v.arch.graph;
        let ckpt = cp.tag.name();
        let evals = evaluate(g, &cp.theta, &data.probe)?;
        if !evals.iter().all(|e| e.forward.loss().is_finite()) {
            return Err(CliError::numerical(format!("variant {}: non-finite probe loss at {ckpt}", v.name)));
        }
        let metrics = pair_metrics(g, &evals, &v.arch.layers, DEFAULT_GAP_EPS, false);
        let hash = graph_hash(g);
        let prov = |metric: &str| Provenance {
            metric: metric.to_string(),
            graph: hash.clone(),
            seed: self.seed,
            checkpoint: ckpt.to_string(),
        };
        self.files.insert(format!("metrics-{}-{ckpt}.csv", v.name), metrics_csv(g, &prov("all"), &metrics));
        for kind in MetricKind::ALL {
            let profile = distance_profile(&metrics, kind);
            self.files.insert(format!("profile-{}-{}-{ckpt}.csv", kind.name(), v.name), profile_csv(&prov(kind.name()), &profile));
        }
        let probe_loss = evals.iter().map(|e| e.forward.loss()).sum::<f64>() / evals.len() as f64;
        self.set(&v.name, ckpt, "probe_loss", probe_loss);
        match self.cfg.experiment {
            ExperimentId::Decay => self.decay_scalars(v, ckpt, &evals, &metrics),
            ExperimentId::Bottleneck => self.bottleneck_scalars(v, ckpt, &evals),
            ExperimentId::GngapActivations => self.gngap_scalars(v, ckpt, &evals, &metrics),
            ExperimentId::Diamond | ExperimentId::ToyAttention => {
                let (a, b) = match self.cfg.experiment {
                    ExperimentId::Diamond => (v.arch.layers[1], v.arch.layers[2]),
                    _ => (v.arch.layers[0], v.arch.layers[1]),
                };
                let mut batch = BatchSession::new(g, &evals);
                let d = decompose_batch(&mut batch, a, b);
                self.set(&v.name, ckpt, "gn_gap", d.gn_gap(DEFAULT_GAP_EPS));
                self.set(&v.name, ckpt, "gn_norm", d.gn_norm());
                self.set(&v.name, ckpt, "tensor_norm", d.tensor_norm());
                Ok(())
            }
            ExperimentId::OracleSuite => Ok(()),
        }
    }

    fn decay_scalars(&mut self, v: &Variant, ckpt: &str, evals: &[Evaluated], metrics: &[PairMetrics]) -> Result<()> {
        if v.name.starts_with("plain") {
            match decay_fit(&distance_profile(metrics, MetricKind::Resonance)) {
                Ok(fit) => {
                    self.set(&v.name, ckpt, "decay_slope", fit.slope);
                    if let Some(r2) = fit.r_squared {
                        self.set(&v.name, ckpt, "decay_r2", r2);
                    }
                }
                Err(_) => self.set(&v.name, ckpt, "decay_undefined", 1.0),
            }
        } else {
            let g = &v.arch.graph;
            let mut batch = BatchSession::new(g, evals);
            let s0 = v.arch.layers[0];
            let r: Vec<f64> = v.arch.layers[1..].iter().map(|&w| resonance(&batch.block(s0, w, Mode::Full))).collect();
            let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
            self.set(&v.name, ckpt, "resonance_spread", hi / lo);
        }
        Ok(())
    }

    fn bottleneck_scalars(&mut self, v: &Variant, ckpt: &str, evals: &[Evaluated]) -> Result<()> {
        let g = &v.arch.graph;
        let layers = &v.arch.layers;
        let b = bottleneck_index(layers.len());
        let du = g.dim(layers[b]);
        let mut batch = BatchSession::new(g, evals);
        let (mut ranks, mut tail) = (Vec::new(), 0.0f64);
        for &x in &layers[..b] {
            for &y in &layers[b + 1..] {
                let full = batch.block(x, y, Mode::Full);
                ranks.push(stable_rank_exact(&full).unwrap_or(0.0));
                for s in batch.sessions().iter_mut() {
                    let sv = svd(&s.block(x, y, Mode::GaussNewton)).s;
                    if sv.len() > du && sv[0] > 0.0 {
                        tail = tail.max(sv[du] / sv[0]);
                    }
                }
            }
        }
        let mean = ranks.iter().sum::<f64>() / ranks.len() as f64;
        self.set(&v.name, ckpt, "d_far", mean);
        self.set(&v.name, ckpt, "d_far_max", ranks.iter().cloned().fold(0.0, f64::max));
        self.set(&v.name, ckpt, "gn_tail", tail);
        let (x, y) = (layers[b - 1], layers[b + 1]);
        let exact = stable_rank_exact(&batch.block(x, y, Mode::Full)).unwrap_or(0.0);
        let op = PairOperator { g, evals, v: x, w: y, mode: Mode::Full };
        let mut stream = ProbeStream::rademacher(self.seed);
        let est = stochastic_stable_rank(&op, self.cfg.probes, self.cfg.power_iters, &mut stream, DEFAULT_SPECTRAL_FLOOR);
        self.set(&v.name, ckpt, "d_adjacent", exact);
        if let Some(e) = est.value() {
            self.set(&v.name, ckpt, "d_adjacent_stochastic", e);
        }
        Ok(())
    }

    fn gngap_scalars(&mut self, v: &Variant, ckpt: &str, evals: &[Evaluated], metrics: &[PairMetrics]) -> Result<()> {
        let g = &v.arch.graph;
        let mean = metrics.iter().map(|m| m.gn_gap).sum::<f64>() / metrics.len() as f64;
        self.set(&v.name, ckpt, "gn_gap_mean", mean);
        self.set(&v.name, ckpt, "sigma2", mean_sq_second_derivative(g, evals));
        let (x, y) = (v.arch.layers[0], v.arch.layers[1]);
        let exact = metrics.iter().find(|m| m.v == x && m.w == y).map(|m| m.gn_gap).unwrap_or(0.0);
        let gn = PairOperator { g, evals, v: x, w: y, mode: Mode::GaussNewton };
        let tensor = PairOperator { g, evals, v: x, w: y, mode: Mode::Tensor };
        let mut stream = ProbeStream::rademacher(self.seed);
        self.set(&v.name, ckpt, "gap_adjacent", exact);
        self.set(&v.name, ckpt, "gap_adjacent_stochastic", stochastic_gn_gap(&gn, &tensor, self.cfg.probes, &mut stream, DEFAULT_GAP_EPS));
        Ok(())
    }

    /// Seed-level scalars that compare variants.
    fn cross_variant(&mut self, all: &[Variant]) -> Result<()> {
        let ckpts: Vec<&str> = if self.cfg.training.epochs == 0 {
            vec!["init"]
        } else {
            CheckpointTag::ALL.iter().map(|t| t.name()).collect()
        };
        let get = |s: &SeedSummary, v: &str, c: &str, n: &str| s.scalars.get(&format!("{v}/{c}/{n}")).copied();
        for c in ckpts {
            match self.cfg.experiment {
                ExperimentId::GngapActivations => {
                    let gaps: Vec<f64> = all.iter().filter_map(|v| get(&self.summary, &v.name, c, "gn_gap_mean")).collect();
                    let s2: Vec<f64> = all.iter().filter_map(|v| get(&self.summary, &v.name, c, "sigma2")).collect();
                    if gaps.len() == all.len() && s2.len() == all.len() {
                        if let Some(rho) = spearman(&gaps, &s2) {
                            self.set("all", c, "spearman", rho);
                        }
                    }
                }
                ExperimentId::Diamond => {
                    let (mut smooth_cat, mut rest) = (f64::INFINITY, 0.0f64);
                    for v in all {
                        let Some(gap) = get(&self.summary, &v.name, c, "gn_gap") else { continue };
                        if v.name.starts_with("concat") && !v.act.is_piecewise_linear() {
                            smooth_cat = smooth_cat.min(gap);
                        } else {
                            rest = rest.max(gap);
                        }
                    }
                    if smooth_cat.is_finite() {
                        self.set("all", c, "separation_orders", smooth_cat.log10() - rest.max(GAP_FLOOR).log10());
                    }
                }
                ExperimentId::ToyAttention => {
                    if let (Some(a), Some(b)) =
                        (get(&self.summary, "attention", c, "gn_gap"), get(&self.summary, "control", c, "gn_gap"))
                    {
                        self.set("all", c, "gap_ratio", a / b.max(GAP_FLOOR));
                    }
                }
                ExperimentId::Bottleneck => {
                    let d: Vec<f64> = all.iter().filter_map(|v| get(&self.summary, &v.name, c, "d_far")).collect();
                    if d.len() == all.len() && self.cfg.model.depths.len() == 1 && self.cfg.model.activations.len() == 1 {
                        let mono = d.windows(2).all(|w| w[1] >= w[0]);
                        self.set("all", c, "d_far_monotone", if mono { 1.0 } else { 0.0 });
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn oracle_suite(&mut self, all: &[Variant]) -> Result<()> {
        let mut csv = String::from("graph,params,hessian_rel_err,hvp_col_rel_err,gn_unrolled_rel_err,split_rel_err,gn_min_eig_rel\n");
        for v in all {
            let g = &v.arch.graph;
            self.summary.graphs.insert(v.name.clone(), graph_hash(g));
            let data = self.cfg.task.generate(g, self.seed)?;
            let theta = zoo::random_params(g, 0.7, self.seed);
            let evals = evaluate(g, &theta, &data.probe)?;
            let exact = assemble_full_hessian(g, &evals, AssemblyCap::default())?;
            let fd = fd_param_hessian(g, &theta, &data.probe, &FdConfig::second_order())?;
            let h_err = exact.sub(&fd)?.frobenius_norm() / fd.frobenius_norm().max(f64::MIN_POSITIVE);

            let p = g.param_count();
            let mut col_err = 0.0f64;
            for k in 0..p {
                let mut e = vec![0.0; p];
                e[k] = 1.0;
                let hv = param_hvp(g, &evals, &e)?;
                let col = exact.column(k);
                let diff: Vec<f64> = hv.iter().zip(&col).map(|(a, b)| a - b).collect();
                col_err = col_err.max(norm(&diff) / norm(&col).max(1e-12));
            }

            let layers = &v.arch.layers;
            let mut batch = BatchSession::new(g, &evals);
            let (mut unrolled_err, mut split_err) = (0.0f64, 0.0f64);
            for (i, &x) in layers.iter().enumerate() {
                for &y in &layers[i..] {
                    let d = decompose_batch(&mut batch, x, y);
                    let unrolled = batch.mean(|s| gn_block_unrolled(s, x, y));
                    let scale = d.full_norm().max(d.gn_norm()).max(f64::MIN_POSITIVE);
                    unrolled_err = unrolled_err.max(d.gn.sub(&unrolled)?.frobenius_norm() / d.gn_norm().max(f64::MIN_POSITIVE));
                    split_err = split_err.max(d.full.sub(&d.gn.add(&d.tensor)?)?.frobenius_norm() / scale);
                }
            }
            let gn_all = block_matrix(&mut batch, layers, Mode::GaussNewton).assemble(layers).symmetric_part()?;
            let eig = sym_eigenvalues(&gn_all, 1e-14)?;
            let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let min_rel = min_eig / gn_all.frobenius_norm().max(f64::MIN_POSITIVE);

            csv.push_str(&format!("{},{p},{h_err},{col_err},{unrolled_err},{split_err},{min_rel}\n", v.name));
            for (name, x) in [
                ("hessian_rel_err", h_err),
                ("hvp_col_rel_err", col_err),
                ("gn_unrolled_rel_err", unrolled_err),
                ("split_rel_err", split_err),
                ("gn_min_eig_rel", min_rel),
            ] {
                self.set(&v.name, "init", name, x);
            }
        }
        self.files.insert("oracle.csv".into(), csv);
        Ok(())
    }
}
