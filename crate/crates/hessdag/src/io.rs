//! Result file formats.
//!
//! * block CSV: first record `rows,cols`, then `rows` records of `cols` values.
//! * blocks JSON: `{"v,w": {"rows": r, "cols": c, "data": [...]}}`, row-major.
//! * metrics/profile CSV: a `# metric=… graph=… seed=… checkpoint=…` line,
//!   then a header record and data records.
//!
//! Floats are written in shortest round-trip form, so equal results give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hessdag_core::decomposition::DecomposedBlock;
use hessdag_core::diagnostics::{DistanceProfile, MetricFlags, PairMetrics, ProfileEntry};
use hessdag_core::{Graph, Matrix, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for DenseMatrix {
    fn from(m: &Matrix) -> Self {
        DenseMatrix { rows: m.rows(), cols: m.cols(), data: m.data().to_vec() }
    }
}

impl DenseMatrix {
    pub fn to_matrix(&self) -> Result<Matrix> {
        Ok(Matrix::new(self.rows, self.cols, self.data.clone())?)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

fn csv_string(build: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>, preamble: &str) -> String {
    let mut buf = preamble.as_bytes().to_vec();
    {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(&mut buf);
        build(&mut w).expect("in-memory csv");
        w.flush().expect("in-memory csv");
    }
    String::from_utf8(buf).expect("utf-8 csv")
}

pub fn block_csv(m: &Matrix) -> String {
    csv_string(
        |w| {
            w.write_record([m.rows().to_string(), m.cols().to_string()])?;
            for i in 0..m.rows() {
                w.write_record(m.row(i).iter().map(|x| x.to_string()))?;
            }
            Ok(())
        },
        "",
    )
}

pub fn parse_block_csv(text: &str) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = r.records();
    let bad = |msg: &str| CliError::config(format!("block csv: {msg}"));
    let head = records.next().ok_or_else(|| bad("empty file"))??;
    let dim = |i: usize| head.get(i).and_then(|s| s.trim().parse::<usize>().ok()).ok_or_else(|| bad("bad rows,cols"));
    let (rows, cols) = (dim(0)?, dim(1)?);
    let mut data = Vec::with_capacity(rows * cols);
    for rec in records {
        let rec = rec?;
        if rec.len() != cols {
            return Err(bad(&format!("row of {} values, expected {cols}", rec.len())));
        }
        for field in rec.iter() {
            data.push(field.trim().parse::<f64>().map_err(|_| bad(&format!("bad number {field:?}")))?);
        }
    }
    if data.len() != rows * cols {
        return Err(bad(&format!("{} values for a {rows}x{cols} block", data.len())));
    }
    Ok(Matrix::new(rows, cols, data)?)
}

pub fn pair_key(g: &Graph, v: NodeId, w: NodeId) -> String {
    format!("{},{}", g.node(v).label, g.node(w).label)
}

pub fn blocks_json(g: &Graph, blocks: &[(NodeId, NodeId, Matrix)]) -> BTreeMap<String, DenseMatrix> {
    blocks.iter().map(|(v, w, m)| (pair_key(g, *v, *w), DenseMatrix::from(m))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedRecord {
    pub v: String,
    pub w: String,
    pub gn_norm: f64,
    pub tensor_norm: f64,
    pub full_norm: f64,
    pub gn_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gn: Option<DenseMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<DenseMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<DenseMatrix>,
}

impl DecomposedRecord {
    pub fn new(g: &Graph, d: &DecomposedBlock, gap_eps: f64, dense: bool) -> Self {
        let payload = |m: &Matrix| dense.then(|| DenseMatrix::from(m));
        DecomposedRecord {
            v: g.node(d.v).label.clone(),
            w: g.node(d.w).label.clone(),
            gn_norm: d.gn_norm(),
            tensor_norm: d.tensor_norm(),
            full_norm: d.full_norm(),
            gn_gap: d.gn_gap(gap_eps),
            gn: payload(&d.gn),
            tensor: payload(&d.tensor),
            full: payload(&d.full),
        }
    }
}

/// What a metrics or profile file describes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub metric: String,
    pub graph: String,
    pub seed: u64,
    pub checkpoint: String,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# metric={} graph={} seed={} checkpoint={}\n", self.metric, self.graph, self.seed, self.checkpoint)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let body = line.strip_prefix('#')?.trim();
        let mut fields = BTreeMap::new();
        for part in body.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            fields.insert(k, v);
        }
        Some(Provenance {
            metric: fields.get("metric")?.to_string(),
            graph: fields.get("graph")?.to_string(),
            seed: fields.get("seed")?.parse().ok()?,
            checkpoint: fields.get("checkpoint")?.to_string(),
        })
    }
}

pub const METRICS_HEADER: [&str; 9] =
    ["pair_v", "pair_w", "dist", "resonance", "coupling", "stable_rank", "d_eff", "gn_gap", "flags"];
pub const PROFILE_HEADER: [&str; 4] = ["dist", "mean", "std", "count"];

pub fn metrics_csv(g: &Graph, prov: &Provenance, metrics: &[PairMetrics]) -> String {
    csv_string(
        |w| {
            w.write_record(METRICS_HEADER)?;
            for m in metrics {
                w.write_record([
                    g.node(m.v).label.clone(),
                    g.node(m.w).label.clone(),
                    m.dist.to_string(),
                    m.resonance.to_string(),
                    m.coupling.to_string(),
                    m.stable_rank.to_string(),
                    m.d_eff.to_string(),
                    m.gn_gap.to_string(),
                    m.flags.to_string(),
                ])?;
            }
            Ok(())
        },
        &prov.line(),
    )
}

/// A metrics row as read back from disk, with labels instead of node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub pair_v: String,
    pub pair_w: String,
    pub dist: usize,
    pub resonance: f64,
    pub coupling: f64,
    pub stable_rank: f64,
    pub d_eff: f64,
    pub gn_gap: f64,
    pub flags: MetricFlags,
}

fn split_provenance(text: &str) -> Result<(Provenance, &str)> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let prov = Provenance::parse(first).ok_or_else(|| CliError::config("missing provenance line"))?;
    Ok((prov, rest))
}

fn num<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CliError::config(format!("bad or missing {name} field")))
}

pub fn parse_metrics_csv(text: &str) -> Result<(Provenance, Vec<MetricsRow>)> {
    let (prov, body) = split_provenance(text)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    if r.headers()?.iter().ne(METRICS_HEADER) {
        return Err(CliError::config("metrics csv: unexpected header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let flags = rec.get(8).unwrap_or("");
        rows.push(MetricsRow {
            pair_v: rec.get(0).unwrap_or("").to_string(),
            pair_w: rec.get(1).unwrap_or("").to_string(),
            dist: num(rec.get(2), "dist")?,
            resonance: num(rec.get(3), "resonance")?,
            coupling: num(rec.get(4), "coupling")?,
            stable_rank: num(rec.get(5), "stable_rank")?,
            d_eff: num(rec.get(6), "d_eff")?,
            gn_gap: num(rec.get(7), "gn_gap")?,
            flags: MetricFlags::parse(flags).ok_or_else(|| CliError::config(format!("unknown flags {flags:?}")))?,
        });
    }
    Ok((prov, rows))
}

pub fn profile_csv(prov: &Provenance, profile: &DistanceProfile) -> String {
    csv_string(
        |w| {
            w.write_record(PROFILE_HEADER)?;
            for e in &profile.entries {
                w.write_record([e.dist.to_string(), e.mean.to_string(), e.std.to_string(), e.count.to_string()])?;
            }
            Ok(())
        },
        &prov.line(),
    )
}

pub fn parse_profile_csv(text: &str) -> Result<(Provenance, DistanceProfile)> {
    let (prov, body) = split_provenance(text)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    if r.headers()?.iter().ne(PROFILE_HEADER) {
        return Err(CliError::config("profile csv: unexpected header"));
    }
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        entries.push(ProfileEntry {
            dist: num(rec.get(0), "dist")?,
            mean: num(rec.get(1), "mean")?,
            std: num(rec.get(2), "std")?,
            count: num(rec.get(3), "count")?,
        });
    }
    Ok((prov, DistanceProfile { entries }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub hessdag: String,
    pub hessdag_core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions { hessdag: env!("CARGO_PKG_VERSION").to_string(), hessdag_core: hessdag_core::VERSION.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub wall_ms: u64,
}
