//! Command-line interface. Exit codes: 0 success, 2 configuration or input
//! error, 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hessdag_core::decomposition::{decompose_batch, DEFAULT_GAP_EPS};
use hessdag_core::diagnostics::{distance_profile, pair_metrics, unordered_pairs, MetricKind};
use hessdag_core::hessian::{evaluate, BatchSession, Evaluated, Mode};
use hessdag_core::zoo::{self, InitScheme};
use hessdag_core::{Graph, NodeId, NodeKind};

use crate::bench::{bench_csv, hvp_bench, linear_fit};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiment::run_experiment;
use crate::io::{block_csv, blocks_json, metrics_csv, profile_csv, read_json, read_text, write_json, write_text, DecomposedRecord, Provenance};
use crate::report::write_report;
use crate::spec::{graph_hash, resolve_node, GraphSpec};

pub const OUT_ENV: &str = "HESSDAG_OUT";

#[derive(Debug, Parser)]
#[command(name = "hessdag", version, about = "Hessian blocks, decompositions and diagnostics for DAG networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Gn,
    Tensor,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Full => Mode::Full,
            ModeArg::Gn => Mode::GaussNewton,
            ModeArg::Tensor => Mode::Tensor,
        }
    }
}

/// Where parameters and samples come from.
#[derive(Debug, Clone, clap::Args)]
pub struct PointArgs {
    /// JSON array of parameters; default is a seeded fan-in init.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random probe samples.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a graph spec and print its size and hash.
    Validate { graph: PathBuf },
    /// Write batch-mean input-Hessian blocks as CSV.
    Blocks {
        graph: PathBuf,
        /// `v,w` node pairs (labels or indices); `all` for every measured pair.
        #[arg(long, num_args = 1.., required = true)]
        pairs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        mode: ModeArg,
        /// Also write every block into one `blocks.json`.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        point: PointArgs,
    },
    /// GN / tensor split of node-pair blocks as JSON.
    Decompose {
        graph: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        pairs: Vec<String>,
        /// Include the dense matrices.
        #[arg(long)]
        dense: bool,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Pair metrics and distance profiles over measured nodes.
    Metrics {
        graph: PathBuf,
        /// Nodes to include; default is the measured nodes.
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Clamp coupling at 1 and flag it.
        #[arg(long)]
        clamp: bool,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Time parameter-space HVPs against parameter count.
    HvpBench {
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64, 128])]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configured experiment over its seeds.
    Experiment {
        config: PathBuf,
        /// Output root; overrides the config and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate an experiment directory over seeds.
    Report { dir: PathBuf },
}

fn load_graph(path: &Path) -> Result<Graph> {
    GraphSpec::load(path)?.build()
}

fn point(g: &Graph, p: &PointArgs) -> Result<Vec<Evaluated>> {
    let theta: Vec<f64> = match &p.params {
        Some(path) => read_json(path)?,
        None => {
            let piecewise = g.ids().all(|v| match g.kind(v) {
                NodeKind::Activation(a) => a.is_piecewise_linear(),
                _ => true,
            });
            zoo::init_params(g, if piecewise { InitScheme::He } else { InitScheme::Xavier }, p.seed)
        }
    };
    if theta.len() != g.param_count() {
        return Err(CliError::config(format!("{} parameters given, graph has {}", theta.len(), g.param_count())));
    }
    if p.samples == 0 {
        return Err(CliError::config("--samples must be positive"));
    }
    let evals = evaluate(g, &theta, &zoo::random_samples(g, p.samples, p.seed))?;
    if !evals.iter().all(|e| e.forward.loss().is_finite()) {
        return Err(CliError::numerical("non-finite loss"));
    }
    Ok(evals)
}

fn parse_pairs(g: &Graph, specs: &[String]) -> Result<Vec<(NodeId, NodeId)>> {
    if specs.len() == 1 && specs[0] == "all" {
        return Ok(unordered_pairs(&g.measured_nodes()));
    }
    specs
        .iter()
        .map(|s| {
            let (a, b) = s.split_once(',').ok_or_else(|| CliError::config(format!("pair {s:?} is not v,w")))?;
            let (v, w) = (resolve_node(g, a.trim())?, resolve_node(g, b.trim())?);
            for x in [v, w] {
                if matches!(g.kind(x), NodeKind::LossMse | NodeKind::LossSoftmaxCe { .. }) {
                    return Err(CliError::config(format!("{:?} is the loss node", g.node(x).label)));
                }
            }
            Ok((v, w))
        })
        .collect()
}

fn file_stem(g: &Graph, v: NodeId, w: NodeId) -> String {
    let clean = |s: &str| s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect::<String>();
    format!("block-{}-{}", clean(&g.node(v).label), clean(&g.node(w).label))
}

/// Resolves the experiment output root: flag, then config, then environment.
pub fn output_root(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { graph } => {
            let g = load_graph(&graph)?;
            println!(
                "ok: {} nodes, {} parameters, {} measured, hash {}",
                g.len(),
                g.param_count(),
                g.measured_nodes().len(),
                graph_hash(&g)
            );
        }
        Command::Blocks { graph, pairs, out, mode, json, point: p } => {
            let g = load_graph(&graph)?;
            let pairs = parse_pairs(&g, &pairs)?;
            let evals = point(&g, &p)?;
            let mut batch = BatchSession::new(&g, &evals);
            let mut blocks = Vec::new();
            for (v, w) in pairs {
                let m = batch.block(v, w, mode.into());
                if !m.is_finite() {
                    return Err(CliError::numerical(format!("non-finite block {}", file_stem(&g, v, w))));
                }
                write_text(&out.join(format!("{}.csv", file_stem(&g, v, w))), &block_csv(&m))?;
                blocks.push((v, w, m));
            }
            if json {
                write_json(&out.join("blocks.json"), &blocks_json(&g, &blocks))?;
            }
            println!("wrote {} blocks to {}", blocks.len(), out.display());
        }
        Command::Decompose { graph, pairs, dense, out, point: p } => {
            let g = load_graph(&graph)?;
            let pairs = parse_pairs(&g, &pairs)?;
            let evals = point(&g, &p)?;
            let mut batch = BatchSession::new(&g, &evals);
            let records: Vec<DecomposedRecord> = pairs
                .into_iter()
                .map(|(v, w)| DecomposedRecord::new(&g, &decompose_batch(&mut batch, v, w), DEFAULT_GAP_EPS, dense))
                .collect();
            match out {
                Some(path) => write_json(&path, &records)?,
                None => println!("{}", serde_json::to_string_pretty(&records).expect("serializable")),
            }
        }
        Command::Metrics { graph, nodes, out, clamp, point: p } => {
            let g = load_graph(&graph)?;
            let nodes = if nodes.is_empty() {
                g.measured_nodes()
            } else {
                nodes.iter().map(|n| resolve_node(&g, n)).collect::<Result<Vec<_>>>()?
            };
            let evals = point(&g, &p)?;
            let metrics = pair_metrics(&g, &evals, &nodes, DEFAULT_GAP_EPS, clamp);
            let hash = graph_hash(&g);
            let prov = |metric: &str| Provenance {
                metric: metric.into(),
                graph: hash.clone(),
                seed: p.seed,
                checkpoint: "given".into(),
            };
            write_text(&out.join("metrics.csv"), &metrics_csv(&g, &prov("all"), &metrics))?;
            for kind in MetricKind::ALL {
                let profile = distance_profile(&metrics, kind);
                write_text(&out.join(format!("profile-{}.csv", kind.name())), &profile_csv(&prov(kind.name()), &profile))?;
            }
            println!("wrote metrics for {} pairs to {}", metrics.len(), out.display());
        }
        Command::HvpBench { widths, depth, samples, reps, out } => {
            if widths.is_empty() || widths.contains(&0) || depth == 0 {
                return Err(CliError::config("widths and depth must be positive"));
            }
            let rows = hvp_bench(&widths, depth, samples, reps, 0)?;
            let csv = bench_csv(&rows);
            match out {
                Some(path) => write_text(&path, &csv)?,
                None => print!("{csv}"),
            }
            let xs: Vec<f64> = rows.iter().map(|r| r.params as f64).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
            if let Some(fit) = linear_fit(&xs, &ys) {
                eprintln!("linear fit: {:.3e} s/param, R² = {:.4}", fit.slope, fit.r_squared);
            }
        }
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::from_json(&read_text(&config)?)?;
            let root = output_root(out, &cfg);
            let outcome = run_experiment(&cfg, &root)?;
            println!("wrote {}", outcome.dir.display());
            let failures = outcome.failures();
            if !failures.is_empty() {
                let lines: Vec<String> = failures.iter().map(|(s, f)| format!("seed {s}: {f}")).collect();
                return Err(CliError::numerical(lines.join("; ")));
            }
        }
        Command::Report { dir } => {
            let r = write_report(&dir)?;
            println!(
                "{}: {} seeds, {} scalars, {} profiles",
                r.experiment,
                r.seeds.len() - r.missing_seeds.len() - r.failed_seeds.len(),
                r.scalars.len(),
                r.profiles.len()
            );
            if !r.missing_seeds.is_empty() {
                eprintln!("missing seeds: {:?}", r.missing_seeds);
            }
            if !r.failed_seeds.is_empty() {
                eprintln!("failed seeds: {:?}", r.failed_seeds);
            }
        }
    }
    Ok(())
}
