//! Block-level metrics, distance profiles and the structural diagnostics
//! derived from them.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::calculus::{jacobian_edge, loss_hessian, ForwardState};
use crate::decomposition::decompose_batch;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeKind, PathSet};
use crate::hessian::{BatchSession, Evaluated, HessianSession, Mode};
use crate::linalg::{svd, truncated_svd, Matrix, TruncatedSvd};

pub const COUPLING_CLAMP: f64 = 1.0;

/// `‖H_{v,w}‖_F`
pub fn resonance(block: &Matrix) -> f64 {
    block.frobenius_norm()
}

/// `R(v,w) / sqrt(R(v,v) R(w,w))`; `None` when a diagonal resonance is zero.
pub fn coupling(r_vw: f64, r_vv: f64, r_ww: f64, clamp: bool) -> Option<f64> {
    if r_vv <= 0.0 || r_ww <= 0.0 {
        return None;
    }
    let c = r_vw / libm::sqrt(r_vv * r_ww);
    Some(if clamp { c.min(COUPLING_CLAMP) } else { c })
}

/// `‖H‖_F² / ‖H‖_2²`
pub fn stable_rank_exact(block: &Matrix) -> Option<f64> {
    let s = svd(block).s;
    let top = *s.first()?;
    if top <= 0.0 {
        return None;
    }
    Some(s.iter().map(|x| x * x).sum::<f64>() / (top * top))
}

/// `‖H‖_* / ‖H‖_2`
pub fn effective_dim(block: &Matrix) -> Option<f64> {
    let s = svd(block).s;
    let top = *s.first()?;
    if top <= 0.0 {
        return None;
    }
    Some(s.iter().sum::<f64>() / top)
}

/// Undirected hop count where only entering a measured node costs one hop,
/// so unmeasured glue nodes (affine maps, merges) do not add distance.
pub fn layer_distance(g: &Graph, measured: &[NodeId], v: NodeId, w: NodeId) -> Option<usize> {
    let mut is_measured = vec![false; g.len()];
    for m in measured {
        is_measured[m.0] = true;
    }
    let mut dist: Vec<Option<usize>> = vec![None; g.len()];
    dist[v.0] = Some(0);
    let mut queue = VecDeque::from([v]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x.0].expect("queued nodes have a distance");
        for &y in g.parents(x).iter().chain(g.children(x)) {
            let step = usize::from(is_measured[y.0]);
            if dist[y.0].is_none_or(|old| d + step < old) {
                dist[y.0] = Some(d + step);
                if step == 0 {
                    queue.push_front(y);
                } else {
                    queue.push_back(y);
                }
            }
        }
    }
    dist[w.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct MetricFlags(u8);

impl MetricFlags {
    pub const COUPLING_DEGENERATE: MetricFlags = MetricFlags(1);
    pub const RANK_DEGENERATE: MetricFlags = MetricFlags(2);
    pub const COUPLING_CLAMPED: MetricFlags = MetricFlags(4);
    pub const UNREACHABLE: MetricFlags = MetricFlags(8);

    const NAMES: [(MetricFlags, &'static str); 4] = [
        (Self::COUPLING_DEGENERATE, "coupling_degenerate"),
        (Self::RANK_DEGENERATE, "rank_degenerate"),
        (Self::COUPLING_CLAMPED, "coupling_clamped"),
        (Self::UNREACHABLE, "unreachable"),
    ];

    pub fn contains(self, other: MetricFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: MetricFlags) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn parse(s: &str) -> Option<MetricFlags> {
        let mut f = MetricFlags::default();
        for part in s.split('|').filter(|p| !p.is_empty()) {
            let (flag, _) = Self::NAMES.iter().find(|(_, n)| *n == part)?;
            f.insert(*flag);
        }
        Some(f)
    }
}

impl fmt::Display for MetricFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Self::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Metrics of one unordered pair. Degenerate entries hold 0 and set a flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMetrics {
    pub v: NodeId,
    pub w: NodeId,
    pub dist: usize,
    pub resonance: f64,
    pub coupling: f64,
    pub stable_rank: f64,
    pub d_eff: f64,
    pub gn_gap: f64,
    pub flags: MetricFlags,
}

/// `v ≤ w` pairs over `nodes` in the given order.
pub fn unordered_pairs(nodes: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for (i, &v) in nodes.iter().enumerate() {
        for &w in &nodes[i..] {
            out.push((v, w));
        }
    }
    out
}

/// Batch-mean metrics for every unordered pair of `nodes` (diagonal
/// included), with distances in measured-layer hops.
pub fn pair_metrics(g: &Graph, evals: &[Evaluated], nodes: &[NodeId], gap_eps: f64, clamp: bool) -> Vec<PairMetrics> {
    let mut batch = BatchSession::new(g, evals);
    let diag: Vec<f64> = nodes.iter().map(|&v| resonance(&batch.block(v, v, Mode::Full))).collect();
    let index = |x: NodeId| nodes.iter().position(|&n| n == x).expect("pair over listed nodes");
    let mut out = Vec::new();
    for (v, w) in unordered_pairs(nodes) {
        let dec = decompose_batch(&mut batch, v, w);
        let mut flags = MetricFlags::default();
        let dist = match layer_distance(g, nodes, v, w) {
            Some(d) => d,
            None => {
                flags.insert(MetricFlags::UNREACHABLE);
                0
            }
        };
        let r = resonance(&dec.full);
        let coupling = match coupling(r, diag[index(v)], diag[index(w)], false) {
            Some(c) if clamp && c > COUPLING_CLAMP => {
                flags.insert(MetricFlags::COUPLING_CLAMPED);
                COUPLING_CLAMP
            }
            Some(c) => c,
            None => {
                flags.insert(MetricFlags::COUPLING_DEGENERATE);
                0.0
            }
        };
        let (stable_rank, d_eff) = match (stable_rank_exact(&dec.full), effective_dim(&dec.full)) {
            (Some(s), Some(d)) => (s, d),
            _ => {
                flags.insert(MetricFlags::RANK_DEGENERATE);
                (0.0, 0.0)
            }
        };
        out.push(PairMetrics { v, w, dist, resonance: r, coupling, stable_rank, d_eff, gn_gap: dec.gn_gap(gap_eps), flags });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Resonance,
    Coupling,
    StableRank,
    EffectiveDim,
    GnGap,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] =
        [MetricKind::Resonance, MetricKind::Coupling, MetricKind::StableRank, MetricKind::EffectiveDim, MetricKind::GnGap];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Resonance => "resonance",
            MetricKind::Coupling => "coupling",
            MetricKind::StableRank => "stable_rank",
            MetricKind::EffectiveDim => "d_eff",
            MetricKind::GnGap => "gn_gap",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// `None` for degenerate entries.
    pub fn of(self, m: &PairMetrics) -> Option<f64> {
        if m.flags.contains(MetricFlags::UNREACHABLE) {
            return None;
        }
        match self {
            MetricKind::Resonance => Some(m.resonance),
            MetricKind::Coupling => (!m.flags.contains(MetricFlags::COUPLING_DEGENERATE)).then_some(m.coupling),
            MetricKind::StableRank => (!m.flags.contains(MetricFlags::RANK_DEGENERATE)).then_some(m.stable_rank),
            MetricKind::EffectiveDim => (!m.flags.contains(MetricFlags::RANK_DEGENERATE)).then_some(m.d_eff),
            MetricKind::GnGap => Some(m.gn_gap),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEntry {
    pub dist: usize,
    pub mean: f64,
    /// Population standard deviation over the pairs at this distance.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    pub entries: Vec<ProfileEntry>,
}

impl DistanceProfile {
    /// Groups `(dist, value)` points; entries sorted by distance. Sums run in
    /// input order.
    pub fn from_points(points: &[(usize, f64)]) -> Self {
        let mut dists: Vec<usize> = points.iter().map(|p| p.0).collect();
        dists.sort_unstable();
        dists.dedup();
        let entries = dists
            .into_iter()
            .map(|d| {
                let vals: Vec<f64> = points.iter().filter(|p| p.0 == d).map(|p| p.1).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                ProfileEntry { dist: d, mean, std: libm::sqrt(var), count: vals.len() }
            })
            .collect();
        DistanceProfile { entries }
    }

    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn mean_at(&self, d: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.dist == d).map(|e| e.mean)
    }
}

/// Profile over off-diagonal pairs (`dist ≥ 1`) with a defined metric value.
pub fn distance_profile(metrics: &[PairMetrics], kind: MetricKind) -> DistanceProfile {
    let points: Vec<(usize, f64)> =
        metrics.iter().filter(|m| m.dist >= 1).filter_map(|m| kind.of(m).map(|x| (m.dist, x))).collect();
    DistanceProfile::from_points(&points)
}

/// `log mean = intercept − slope·d`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` with fewer than three distances or a flat profile.
    pub r_squared: Option<f64>,
    pub points: usize,
}

pub fn decay_fit(profile: &DistanceProfile) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = profile
        .entries
        .iter()
        .filter(|e| e.count > 0 && e.mean > 0.0)
        .map(|e| (e.dist as f64, libm::log(e.mean)))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData("decay fit needs two distances with positive means"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let ss_res: f64 = pts.iter().map(|p| {
        let r = p.1 - alpha - beta * p.0;
        r * r
    }).sum();
    let r_squared = (pts.len() >= 3 && syy > 0.0).then(|| (1.0f64 - ss_res / syy).clamp(0.0, 1.0));
    Ok(DecayFit { slope: -beta, intercept: alpha, r_squared, points: pts.len() })
}

/// Largest edge-Jacobian spectral norm, edges into the loss excluded.
pub fn rho_max(g: &Graph, fs: &ForwardState) -> f64 {
    let mut best: f64 = 0.0;
    for u in g.ids().filter(|&u| u != g.out()) {
        for &p in g.parents(u) {
            let d = jacobian_edge(g, fs, u, p).expect("edge").to_dense();
            if let Some(&s) = svd(&d).s.first() {
                best = best.max(s);
            }
        }
    }
    best
}

/// Largest `‖J_{b←a}‖₂` over measured layers `a → b` one layer apart.
pub fn layer_rho_max(s: &mut HessianSession<'_>, layers: &[NodeId]) -> f64 {
    let g = s.graph();
    let mut best: f64 = 0.0;
    for &a in layers {
        for &b in layers {
            if a == b || !g.reaches(a, b) || layer_distance(g, layers, a, b) != Some(1) {
                continue;
            }
            if let Some(j) = s.total_jacobian(b, a) {
                best = best.max(svd(&j).s.first().copied().unwrap_or(0.0));
            }
        }
    }
    best
}

/// `(1/m) log ‖J_{last←first}‖₂` over `m` consecutive measured layers.
pub fn layer_lyapunov(s: &mut HessianSession<'_>, layers: &[NodeId]) -> Result<f64> {
    if layers.len() < 2 {
        return Err(Error::NotAChain(String::from("span of zero layers")));
    }
    let (first, last) = (layers[0], layers[layers.len() - 1]);
    let j = s
        .total_jacobian(last, first)
        .ok_or_else(|| Error::NotAChain(format!("{first} does not reach {last}")))?;
    let top = svd(&j).s.first().copied().unwrap_or(0.0);
    Ok(libm::log(top) / (layers.len() - 1) as f64)
}

/// Checks that consecutive nodes are parent → child and every node before
/// the last has a single child.
pub fn check_chain(g: &Graph, path: &[NodeId]) -> Result<()> {
    if path.is_empty() {
        return Err(Error::NotAChain(String::from("empty path")));
    }
    for pair in path.windows(2) {
        if !g.parents(pair[1]).contains(&pair[0]) {
            return Err(Error::NotAChain(format!("{} is not a parent of {}", pair[0], pair[1])));
        }
        if g.children(pair[0]).len() != 1 {
            return Err(Error::NotAChain(format!("{} has {} children", pair[0], g.children(pair[0]).len())));
        }
    }
    Ok(())
}

/// `Π = D_{k←k−1} ⋯ D_{1←0}` along a chain segment.
pub fn chain_product(g: &Graph, fs: &ForwardState, path: &[NodeId]) -> Result<Matrix> {
    check_chain(g, path)?;
    let mut acc = Matrix::identity(g.dim(path[0]));
    for pair in path.windows(2) {
        acc = jacobian_edge(g, fs, pair[1], pair[0])?.mul(&acc);
    }
    Ok(acc)
}

/// `(1/m) log ‖Π‖₂` over a chain segment of `m` edges.
pub fn lyapunov_exponent(g: &Graph, fs: &ForwardState, path: &[NodeId]) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::NotAChain(String::from("span of zero edges")));
    }
    let pi = chain_product(g, fs, path)?;
    let top = svd(&pi).s.first().copied().unwrap_or(0.0);
    Ok(libm::log(top) / (path.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `R(v_i, v_j) ≤ ‖H_{v_j,v_j}‖_F ‖Π_{j←i}‖₂` along a chain segment.
pub fn resonance_bound_check(s: &mut HessianSession<'_>, path: &[NodeId]) -> Result<BoundCheck> {
    let g = s.graph();
    let pi = chain_product(g, s.forward_state(), path)?;
    let (vi, vj) = (path[0], path[path.len() - 1]);
    let lhs = resonance(&s.block(vi, vj, Mode::Full));
    let spec = svd(&pi).s.first().copied().unwrap_or(0.0);
    let rhs = resonance(&s.block(vj, vj, Mode::Full)) * spec;
    Ok(BoundCheck { lhs, rhs, ok: lhs <= rhs * (1.0 + 1e-8) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Radius {
    Finite(usize),
    /// Decay factor at or above one.
    NoDecay,
}

/// Smallest `k` with `c·rate^k < eps·diag_floor`.
pub fn interaction_radius(rate: f64, c: f64, eps: f64, diag_floor: f64) -> Radius {
    if rate >= 1.0 {
        return Radius::NoDecay;
    }
    let target = eps * diag_floor;
    let below = |k: usize| c * libm::pow(rate, k as f64) < target;
    if below(0) {
        return Radius::Finite(0);
    }
    if rate <= 0.0 {
        return Radius::Finite(1);
    }
    let guess = libm::ceil(libm::log(target / c) / libm::log(rate)).max(0.0) as usize;
    let mut k = guess;
    while !below(k) {
        k += 1;
    }
    while k > 0 && below(k - 1) {
        k -= 1;
    }
    Radius::Finite(k)
}

/// Radius with `rate = e^{−slope}` and `c = e^{intercept}` from a fitted profile.
pub fn interaction_radius_from_fit(fit: &DecayFit, eps: f64, diag_floor: f64) -> Radius {
    interaction_radius(libm::exp(-fit.slope), libm::exp(fit.intercept), eps, diag_floor)
}

/// One `Π_{p_v}ᵀ ∇²L Π_{p_w}` term.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTerm {
    pub c: NodeId,
    pub path_v: Vec<NodeId>,
    pub path_w: Vec<NodeId>,
    pub contribution: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathDecomposition {
    pub terms: Vec<PathTerm>,
    pub overflow: bool,
}

impl PathDecomposition {
    pub fn total(&self, rows: usize, cols: usize) -> Matrix {
        let mut acc = Matrix::zeros(rows, cols);
        for t in &self.terms {
            acc.add_assign(&t.contribution).expect("term shape");
        }
        acc
    }
}

/// Product of edge Jacobians along `path`.
pub fn path_jacobian(s: &mut HessianSession<'_>, path: &[NodeId]) -> Matrix {
    let g = s.graph();
    let mut acc = Matrix::identity(g.dim(path[0]));
    for pair in path.windows(2) {
        acc = s.edge(pair[1], pair[0]).mul(&acc);
    }
    acc
}

/// GN block as a sum over path pairs into the loss input, the only node
/// carrying loss curvature. At most `cap` path pairs are formed.
pub fn path_decomposition_gn(s: &mut HessianSession<'_>, v: NodeId, w: NodeId, cap: usize) -> PathDecomposition {
    let g = s.graph();
    let c = g.loss_input();
    let pv: PathSet = g.enumerate_paths(v, c, cap);
    let pw: PathSet = g.enumerate_paths(w, c, cap);
    let mut overflow = pv.overflow || pw.overflow || pv.paths.len().saturating_mul(pw.paths.len()) > cap;
    let h = loss_hessian(g, s.forward_state());
    let jw: Vec<Matrix> = pw.paths.iter().map(|p| path_jacobian(s, p)).collect();
    let mut terms = Vec::new();
    'outer: for p in &pv.paths {
        let jv = path_jacobian(s, p);
        let left = jv.tr_matmul(&h).expect("shape");
        for (q, j) in pw.paths.iter().zip(&jw) {
            if terms.len() >= cap {
                overflow = true;
                break 'outer;
            }
            terms.push(PathTerm { c, path_v: p.clone(), path_w: q.clone(), contribution: left.matmul(j).expect("shape") });
        }
    }
    PathDecomposition { terms, overflow }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkipStep {
    pub step: usize,
    /// More skips than layers; the step was raised from 0 to 1.
    pub clamped: bool,
}

/// `⌊L/B⌋` for `B` uniformly placed skips over `L` layers.
pub fn optimal_skip_step(layers: usize, budget: usize) -> Result<SkipStep> {
    if budget == 0 {
        return Err(Error::ZeroBudget);
    }
    if layers == 0 {
        return Err(Error::InsufficientData("no layers"));
    }
    let step = layers / budget;
    Ok(if step == 0 { SkipStep { step: 1, clamped: true } } else { SkipStep { step, clamped: false } })
}

/// Rank-`r` factors; `tail_error` is the Frobenius residual.
pub fn low_rank_block(block: &Matrix, r: usize) -> Result<TruncatedSvd> {
    truncated_svd(block, r)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` when a
/// side is constant or fewer than two points are given.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / libm::sqrt(vx * vy))
}

/// `E[σ″(z)²]` over every activation unit and sample.
pub fn mean_sq_second_derivative(g: &Graph, evals: &[Evaluated]) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for e in evals {
        for u in g.ids() {
            if let NodeKind::Activation(act) = g.kind(u) {
                for &z in e.forward.value(g.parents(u)[0]) {
                    let d2 = act.d2(z);
                    acc += d2 * d2;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn coupling_cases() {
        assert_eq!(coupling(2.0, 2.0, 2.0, false), Some(1.0));
        assert_eq!(coupling(3.0, 1.0, 4.0, true), Some(1.0));
        assert_eq!(coupling(3.0, 1.0, 4.0, false), Some(1.5));
        assert_eq!(coupling(1.0, 0.0, 1.0, true), None);
    }

    #[test]
    fn rank_cases() {
        let r1 = Matrix::outer(&[1.0, 2.0, -1.0], &[0.5, 3.0]);
        assert!((stable_rank_exact(&r1).unwrap() - 1.0).abs() < 1e-12);
        assert!((effective_dim(&r1).unwrap() - 1.0).abs() < 1e-12);
        assert!((stable_rank_exact(&Matrix::identity(3)).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(stable_rank_exact(&Matrix::zeros(2, 2)), None);
    }

    #[test]
    fn decay_fit_cases() {
        let flat = DistanceProfile::from_points(&[(1, 2.0), (2, 2.0), (3, 2.0)]);
        let f = decay_fit(&flat).unwrap();
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r_squared, None);
        let pts: Vec<(usize, f64)> = (1..=6).map(|d| (d, libm::exp(-0.5 * d as f64))).collect();
        let f = decay_fit(&DistanceProfile::from_points(&pts)).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-9);
        assert!((f.r_squared.unwrap() - 1.0).abs() < 1e-12);
        let two = DistanceProfile::from_points(&[(1, 1.0), (2, 0.5)]);
        assert_eq!(decay_fit(&two).unwrap().r_squared, None);
        assert!(decay_fit(&DistanceProfile::from_points(&[(1, 1.0)])).is_err());
    }

    #[test]
    fn radius_cases() {
        assert_eq!(interaction_radius(0.5, 1.0, 1e-3, 1.0), Radius::Finite(10));
        assert_eq!(interaction_radius(1.0, 1.0, 1e-3, 1.0), Radius::NoDecay);
        assert_eq!(interaction_radius(1.3, 1.0, 1e-3, 1.0), Radius::NoDecay);
        let k = libm::ceil(libm::log(1e-4) / libm::log(0.9)) as usize;
        assert_eq!(interaction_radius(0.9, 1.0, 1e-4, 1.0), Radius::Finite(k));
    }

    #[test]
    fn skip_step_cases() {
        assert_eq!(optimal_skip_step(12, 3).unwrap(), SkipStep { step: 4, clamped: false });
        assert_eq!(optimal_skip_step(8, 8).unwrap(), SkipStep { step: 1, clamped: false });
        assert_eq!(optimal_skip_step(3, 5).unwrap(), SkipStep { step: 1, clamped: true });
        assert_eq!(optimal_skip_step(3, 0), Err(Error::ZeroBudget));
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }

    #[test]
    fn flags_round_trip() {
        let mut f = MetricFlags::default();
        assert_eq!(f.to_string(), "");
        f.insert(MetricFlags::RANK_DEGENERATE);
        f.insert(MetricFlags::UNREACHABLE);
        assert_eq!(f.to_string(), "rank_degenerate|unreachable");
        assert_eq!(MetricFlags::parse(&f.to_string()), Some(f));
        assert_eq!(MetricFlags::parse("bogus"), None);
    }
}
