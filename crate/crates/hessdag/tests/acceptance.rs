//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails that is not listed in `KNOWN_FAILURES`.

use std::time::Instant;

use hessdag::bench::{hvp_bench, linear_fit};
use hessdag::config::{ExperimentConfig, ExperimentId};
use hessdag::experiment::{run_experiment, ExperimentOutcome, SeedOutcome};
use hessdag_core::calculus::Sample;
use hessdag_core::decomposition::{
    block_matrix, decompose_batch, gn_block_recursive, gn_block_unrolled, DEFAULT_GAP_EPS,
};
use hessdag_core::diagnostics::{pair_metrics, path_decomposition_gn, resonance_bound_check, spearman};
use hessdag_core::hessian::{evaluate, BatchSession, HessianSession, Mode};
use hessdag_core::hvp::{
    stochastic_gn_gap, stochastic_stable_rank, PairOperator, ProbeStream, DEFAULT_POWER_ITERS,
    DEFAULT_SPECTRAL_FLOOR,
};
use hessdag_core::linalg::{svd, sym_eigenvalues};
use hessdag_core::oracle::check_kinks;
use hessdag_core::zoo::{self, InitScheme, LossKind, Merge};
use hessdag_core::{Activation, Graph, NodeId};

/// Criteria that fail at desk scale, with the reason printed next to them.
const KNOWN_FAILURES: &[(usize, &str)] = &[(
    6,
    "trained query/key gap settles near 2.5-3 after training; only the init checkpoint clears 10",
)];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

/// Collects individual check failures for one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    count: usize,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn verdict(self, summary: String) -> Verdict {
        if self.failures.is_empty() {
            Verdict::new(true, format!("{summary} ({} checks)", self.count))
        } else {
            let shown: Vec<&str> = self.failures.iter().take(4).map(String::as_str).collect();
            Verdict::new(false, format!("{summary}; {}/{} checks failed: {}", self.failures.len(), self.count, shown.join("; ")))
        }
    }
}

fn run(id: ExperimentId, edit: impl FnOnce(&mut ExperimentConfig)) -> (ExperimentOutcome, f64) {
    let mut cfg = ExperimentConfig::preset(id);
    edit(&mut cfg);
    let dir = tempfile::tempdir().expect("tempdir");
    let t = Instant::now();
    let out = run_experiment(&cfg, dir.path()).expect("experiment runs");
    let secs = t.elapsed().as_secs_f64();
    for (seed, f) in out.failures() {
        panic!("{} seed {seed} failed: {f}", id.name());
    }
    (out, secs)
}

fn init_only(cfg: &mut ExperimentConfig) {
    cfg.training.epochs = 0;
}

fn get(s: &SeedOutcome, key: &str) -> f64 {
    s.scalar(key).unwrap_or(f64::NAN)
}

fn seed(s: &SeedOutcome) -> u64 {
    s.summary.seed
}

fn variants(s: &SeedOutcome, suffix: &str) -> Vec<String> {
    s.summary.scalars.keys().filter_map(|k| k.strip_suffix(suffix)).map(str::to_string).collect()
}

fn kink_free(g: &Graph, seed: u64, n: usize) -> (Vec<f64>, Vec<Sample>) {
    for k in 0..100 {
        let theta = zoo::random_params(g, 0.7, seed * 1000 + k);
        let samples = zoo::random_samples(g, n, seed * 1000 + k + 500);
        if check_kinks(g, &theta, &samples, 1e-3).is_ok() {
            return (theta, samples);
        }
    }
    panic!("no kink-free point");
}

fn relu_graphs() -> Vec<(&'static str, Graph)> {
    vec![
        ("chain3-relu", zoo::mlp_chain(3, &[4, 4, 4], 2, Activation::Relu, LossKind::Mse).unwrap().graph),
        ("chain2-leaky-ce", zoo::mlp_chain(3, &[5, 4], 3, Activation::LeakyRelu, LossKind::SoftmaxCe { classes: 3 }).unwrap().graph),
        ("diamond-sum-relu", zoo::diamond(3, 4, Merge::Sum, Activation::Relu).unwrap().graph),
        ("diamond-cat-relu", zoo::diamond(3, 4, Merge::Concat, Activation::Relu).unwrap().graph),
        ("skip-relu", zoo::skip_block(3, 4, Activation::Relu).unwrap().graph),
        ("relu-control", zoo::relu_control(3, 3).unwrap().graph),
        ("chain4-leaky", zoo::mlp_chain(4, &[6, 6, 6, 6], 2, Activation::LeakyRelu, LossKind::Mse).unwrap().graph),
    ]
}

fn non_loss(g: &Graph) -> Vec<NodeId> {
    g.ids().filter(|&v| v != g.out()).collect()
}

fn oracle_equivalence(oracle: &(ExperimentOutcome, f64)) -> Verdict {
    let (out, secs) = oracle;
    let mut c = Checks::default();
    let mut worst = 0.0f64;
    for s in &out.seeds {
        for v in variants(s, "/init/hessian_rel_err") {
            let e = get(s, &format!("{v}/init/hessian_rel_err"));
            worst = worst.max(e);
            c.check(e < 1e-4, || format!("seed {} {v}: {e:e}", seed(s)));
        }
    }
    c.check(*secs < 60.0, || format!("runtime {secs:.1} s"));
    let graphs = out.seeds.first().map(|s| s.summary.graphs.len()).unwrap_or(0);
    c.verdict(format!("{graphs} graphs x {} seeds, worst FD rel err {worst:.2e}, {secs:.1} s", out.seeds.len()))
}

fn canonical_decomposition(oracle: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let (mut unrolled, mut split, mut eig) = (0.0f64, 0.0f64, 0.0f64);
    for s in &oracle.0.seeds {
        for v in variants(s, "/init/gn_unrolled_rel_err") {
            let u = get(s, &format!("{v}/init/gn_unrolled_rel_err"));
            let x = get(s, &format!("{v}/init/split_rel_err"));
            let m = get(s, &format!("{v}/init/gn_min_eig_rel"));
            unrolled = unrolled.max(u);
            split = split.max(x);
            eig = eig.min(m);
            c.check(u < 1e-10, || format!("seed {} {v}: unrolled {u:e}", seed(s)));
            c.check(x < 1e-10, || format!("seed {} {v}: split {x:e}", seed(s)));
            c.check(m >= -1e-8, || format!("seed {} {v}: min eig {m:e}", seed(s)));
        }
    }
    for (k, (name, g)) in relu_graphs().into_iter().enumerate() {
        let (theta, samples) = kink_free(&g, k as u64 + 70, 3);
        let evals = evaluate(&g, &theta, &samples).unwrap();
        let mut batch = BatchSession::new(&g, &evals);
        let ns = non_loss(&g);
        for &v in &ns {
            for &w in &ns {
                let d = decompose_batch(&mut batch, v, w);
                let rec = batch.mean(|s| gn_block_recursive(s, v, w));
                let unr = batch.mean(|s| gn_block_unrolled(s, v, w));
                let scale = d.full_norm().max(d.gn_norm()).max(f64::MIN_POSITIVE);
                let u = rec.sub(&unr).unwrap().frobenius_norm() / rec.frobenius_norm().max(f64::MIN_POSITIVE);
                let x = d.full.sub(&d.gn.add(&d.tensor).unwrap()).unwrap().frobenius_norm() / scale;
                unrolled = unrolled.max(u);
                split = split.max(x);
                c.check(u < 1e-10, || format!("{name} ({v}, {w}): unrolled {u:e}"));
                c.check(x < 1e-10, || format!("{name} ({v}, {w}): split {x:e}"));
            }
        }
        let gn = block_matrix(&mut batch, &ns, Mode::GaussNewton).assemble(&ns).symmetric_part().unwrap();
        let min = sym_eigenvalues(&gn, 1e-14).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        let m = min / gn.frobenius_norm().max(f64::MIN_POSITIVE);
        eig = eig.min(m);
        c.check(m >= -1e-8, || format!("{name}: min eig {m:e}"));
    }
    c.verdict(format!("max recursive/unrolled {unrolled:.1e}, max split {split:.1e}, min eig/|GN| {eig:.1e}"))
}

fn piecewise_linear_vanishing(gngap: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let (mut tensor, mut gap) = (0.0f64, 0.0f64);
    for (k, (name, g)) in relu_graphs().into_iter().enumerate() {
        for rep in 0..3u64 {
            let (theta, samples) = kink_free(&g, 10 * k as u64 + rep + 1, 4);
            let evals = evaluate(&g, &theta, &samples).unwrap();
            let mut batch = BatchSession::new(&g, &evals);
            let ns = non_loss(&g);
            for &v in &ns {
                for &w in &ns {
                    let d = decompose_batch(&mut batch, v, w);
                    let t = d.tensor_norm() / (1.0 + d.gn_norm());
                    let x = d.gn_gap(DEFAULT_GAP_EPS);
                    tensor = tensor.max(t);
                    gap = gap.max(x);
                    c.check(t < 1e-10, || format!("{name} ({v}, {w}): tensor {t:e}"));
                    c.check(x < 1e-6, || format!("{name} ({v}, {w}): gap {x:e}"));
                }
            }
        }
    }
    for s in &gngap.0.seeds {
        for act in ["relu", "leaky_relu"] {
            let x = get(s, &format!("{act}/init/gn_gap_mean"));
            gap = gap.max(x);
            c.check(x < 1e-6, || format!("seed {} {act} width-64 gap {x:e}", seed(s)));
        }
    }
    c.verdict(format!("max |T|/(1+|GN|) {tensor:.1e}, max gap {gap:.1e}"))
}

const GAP_ACTS: [&str; 5] = ["relu", "leaky_relu", "softplus", "silu", "gelu"];

fn activation_ordering(gngap: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let mut rows = Vec::new();
    for s in &gngap.0.seeds {
        let gaps: Vec<f64> = GAP_ACTS.iter().map(|a| get(s, &format!("{a}/init/gn_gap_mean"))).collect();
        let sig: Vec<f64> = GAP_ACTS.iter().map(|a| get(s, &format!("{a}/init/sigma2"))).collect();
        let rho = spearman(&gaps, &sig).unwrap_or(f64::NAN);
        let stored = get(s, "all/init/spearman");
        c.check(rho == 1.0, || format!("seed {}: rho {rho}", seed(s)));
        c.check(stored == rho, || format!("seed {}: stored rho {stored} vs {rho}", seed(s)));
        rows.push(format!("{:.3}", rho));
    }
    c.verdict(format!("Spearman per seed [{}]", rows.join(", ")))
}

fn diamond_separation(diamond: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let (mut lo, mut hi, mut sep) = (0.0f64, f64::INFINITY, f64::INFINITY);
    for s in &diamond.0.seeds {
        for v in ["sum-relu", "sum-silu", "concat-relu"] {
            let x = get(s, &format!("{v}/init/gn_gap"));
            lo = lo.max(x);
            c.check(x < 1e-6, || format!("seed {} {v}: {x:e}", seed(s)));
        }
        let x = get(s, "concat-silu/init/gn_gap");
        hi = hi.min(x);
        c.check(x > 1e-2, || format!("seed {} concat-silu: {x:e}", seed(s)));
        let o = get(s, "all/init/separation_orders");
        sep = sep.min(o);
        c.check(o >= 4.0, || format!("seed {} separation {o:.2}", seed(s)));
    }
    c.verdict(format!("max vanishing gap {lo:.1e}, min concat-silu gap {hi:.3}, min separation {sep:.1} orders"))
}

fn toy_attention(att: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let mut summary = Vec::new();
    for ckpt in ["init", "mid", "final"] {
        let mut gaps = Vec::new();
        for s in &att.0.seeds {
            let a = get(s, &format!("attention/{ckpt}/gn_gap"));
            let b = get(s, &format!("control/{ckpt}/gn_gap"));
            let r = get(s, &format!("all/{ckpt}/gap_ratio"));
            gaps.push(a);
            c.check(a > 10.0, || format!("seed {} {ckpt}: attention gap {a:.2}", seed(s)));
            c.check(b < 1e-6, || format!("seed {} {ckpt}: control gap {b:e}", seed(s)));
            c.check(r > 1e6, || format!("seed {} {ckpt}: ratio {r:e}", seed(s)));
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        summary.push(format!("{ckpt} {mean:.2}"));
    }
    for s in &att.0.seeds {
        let (a, b) = (get(s, "attention/init/train_loss"), get(s, "attention/final/train_loss"));
        c.check(b < a, || format!("seed {}: MSE {a:.3} -> {b:.3}", seed(s)));
    }
    c.verdict(format!("mean attention gap {}", summary.join(", ")))
}

fn decay(decay: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let (mut r2, mut slope, mut spread) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for s in &decay.0.seeds {
        for d in [8, 12] {
            let x = get(s, &format!("plain-L{d}/init/decay_r2"));
            let k = get(s, &format!("plain-L{d}/init/decay_slope"));
            let sp = get(s, &format!("residual-L{d}/init/resonance_spread"));
            r2 = r2.min(x);
            slope = slope.min(k);
            spread = spread.max(sp);
            c.check(x > 0.9, || format!("seed {} L{d}: R² {x:.3}", seed(s)));
            c.check(k > 0.0, || format!("seed {} L{d}: slope {k:.3}", seed(s)));
            c.check(sp <= 3.0, || format!("seed {} residual L{d}: spread {sp:.2}", seed(s)));
        }
    }
    c.verdict(format!("min R² {r2:.3}, min slope {slope:.3}, max residual spread {spread:.2}"))
}

fn chain_to_loss_input(g: &Graph, from: NodeId) -> Vec<NodeId> {
    let mut path = vec![from];
    let mut v = from;
    while v != g.loss_input() {
        v = g.children(v)[0];
        path.push(v);
    }
    path
}

fn lyapunov_bound() -> Verdict {
    let mut c = Checks::default();
    let mut tight = 0.0f64;
    let chains = [
        (Activation::Tanh, &[4usize, 5, 4][..]),
        (Activation::Gelu, &[4, 5, 4]),
        (Activation::Softplus, &[4, 5, 4]),
        (Activation::Silu, &[6, 6, 6, 6, 6]),
        (Activation::Relu, &[5, 5, 5, 5]),
    ];
    for (act, widths) in chains {
        let g = zoo::mlp_chain(3, widths, 2, act, LossKind::Mse).unwrap().graph;
        let path = chain_to_loss_input(&g, g.find("act1").unwrap());
        for rep in 0..4 {
            let (theta, samples) = kink_free(&g, rep + 90, 1);
            let evals = evaluate(&g, &theta, &samples).unwrap();
            let mut s = HessianSession::new(&g, &evals[0].forward, &evals[0].backward);
            for i in 0..path.len() {
                for j in i + 1..path.len() {
                    let b = resonance_bound_check(&mut s, &path[i..=j]).unwrap();
                    if b.rhs > 0.0 {
                        tight = tight.max(b.lhs / b.rhs);
                    }
                    c.check(b.ok, || format!("{act:?} rep {rep} ({i}, {j}): {} > {}", b.lhs, b.rhs));
                }
            }
        }
    }
    c.verdict(format!("max lhs/rhs {tight:.3}"))
}

fn rank_bottleneck(bn: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let classes = 10usize;
    let mut means = Vec::new();
    let mut per_seed_monotone = 0;
    let mut tail = 0.0f64;
    for du in [2usize, 4, 8] {
        let mut xs = Vec::new();
        for s in &bn.0.seeds {
            let t = get(s, &format!("du{du}/init/gn_tail"));
            let dmax = get(s, &format!("du{du}/init/d_far_max"));
            let bound = du.min(classes - 1) as f64 + 0.05;
            tail = tail.max(t);
            c.check(t < 1e-8, || format!("seed {} du{du}: tail {t:e}", seed(s)));
            c.check(dmax <= bound, || format!("seed {} du{du}: D {dmax:.3} > {bound}", seed(s)));
            xs.push(get(s, &format!("du{du}/init/d_far")));
        }
        means.push(xs.iter().sum::<f64>() / xs.len() as f64);
    }
    for s in &bn.0.seeds {
        let d: Vec<f64> = [2, 4, 8].iter().map(|du| get(s, &format!("du{du}/init/d_far"))).collect();
        if d.windows(2).all(|w| w[1] >= w[0]) {
            per_seed_monotone += 1;
        }
    }
    c.check(means.windows(2).all(|w| w[1] >= w[0]), || format!("seed-mean D not monotone: {means:?}"));
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    c.verdict(format!(
        "seed-mean D over du 2,4,8 [{}], monotone on {per_seed_monotone}/{} seeds individually, max tail {tail:.1e}",
        shown.join(", "),
        bn.0.seeds.len()
    ))
}

fn hvp_scaling(oracle: &(ExperimentOutcome, f64)) -> Verdict {
    let mut c = Checks::default();
    let mut col = 0.0f64;
    for s in &oracle.0.seeds {
        for v in variants(s, "/init/hvp_col_rel_err") {
            let e = get(s, &format!("{v}/init/hvp_col_rel_err"));
            col = col.max(e);
            c.check(e < 1e-8, || format!("seed {} {v}: {e:e}", seed(s)));
        }
    }
    let rows = hvp_bench(&[16, 32, 64, 128], 3, 4, 7, 0).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.params as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let r2 = linear_fit(&xs, &ys).map(|f| f.r_squared).unwrap_or(f64::NAN);
    c.check(r2 > 0.95, || format!("runtime fit R² {r2:.4}"));
    c.verdict(format!("max column rel err {col:.1e}, runtime vs P R² {r2:.4}"))
}

fn stochastic_estimators() -> Verdict {
    let mut c = Checks::default();
    let (mut gap_err, mut d_err) = (0.0f64, 0.0f64);
    for act in [Activation::Gelu, Activation::Tanh, Activation::Silu, Activation::Softplus] {
        let g = zoo::mlp_chain_with_head(8, &[48, 48, 48], 48, act, LossKind::Mse).unwrap().graph;
        let layers = g.measured_nodes();
        let (v, w) = (layers[0], layers[1]);
        for seed in 0..5u64 {
            let theta = zoo::init_params(&g, InitScheme::Xavier, seed);
            let evals = evaluate(&g, &theta, &zoo::random_samples(&g, 8, 100 + seed)).unwrap();
            let mut batch = BatchSession::new(&g, &evals);
            let exact = decompose_batch(&mut batch, v, w);
            let gap = exact.gn_gap(DEFAULT_GAP_EPS);
            let gn = PairOperator { g: &g, evals: &evals, v, w, mode: Mode::GaussNewton };
            let tensor = PairOperator { g: &g, evals: &evals, v, w, mode: Mode::Tensor };
            let est = stochastic_gn_gap(&gn, &tensor, 100, &mut ProbeStream::rademacher(seed), DEFAULT_GAP_EPS);
            let e = (est - gap).abs() / gap;
            gap_err = gap_err.max(e);
            c.check(e < 0.05, || format!("{act:?} seed {seed}: gap {est:.4} vs {gap:.4}"));

            let full = PairOperator { g: &g, evals: &evals, v, w, mode: Mode::Full };
            let sv = svd(&exact.full).s;
            let d_exact = sv.iter().map(|x| x * x).sum::<f64>() / (sv[0] * sv[0]);
            let d_est = stochastic_stable_rank(&full, 100, DEFAULT_POWER_ITERS, &mut ProbeStream::rademacher(seed), DEFAULT_SPECTRAL_FLOOR)
                .value()
                .unwrap_or(f64::NAN);
            let e = (d_est - d_exact).abs() / d_exact;
            d_err = d_err.max(e);
            c.check(e < 0.15, || format!("{act:?} seed {seed}: D {d_est:.3} vs {d_exact:.3}"));
        }
    }
    c.verdict(format!("max rel err: gap {:.2}%, stable rank {:.2}%", 100.0 * gap_err, 100.0 * d_err))
}

fn check_paths(c: &mut Checks, name: &str, g: &Graph, seed: u64, worst: &mut f64) {
    let theta = zoo::random_params(g, 0.7, seed);
    let evals = evaluate(g, &theta, &zoo::random_samples(g, 1, seed + 1)).unwrap();
    let mut s = HessianSession::new(g, &evals[0].forward, &evals[0].backward);
    let nodes = g.measured_nodes();
    for &v in &nodes {
        for &w in &nodes {
            let pd = path_decomposition_gn(&mut s, v, w, 16);
            c.check(!pd.overflow, || format!("{name} ({v}, {w}): path cap hit"));
            let unrolled = gn_block_unrolled(&mut s, v, w);
            let total = pd.total(g.dim(v), g.dim(w));
            let err = total.sub(&unrolled).unwrap().frobenius_norm() / unrolled.frobenius_norm().max(f64::MIN_POSITIVE);
            *worst = worst.max(err);
            c.check(err < 1e-8, || format!("{name} ({v}, {w}): {err:e}"));
        }
    }
}

fn scale_linear(g: &Graph, theta: &mut [f64], label: &str, weight: f64, bias: f64) {
    let v = g.find(label).unwrap();
    let slot = g.param_slot(v).unwrap();
    let out = g.dim(v);
    let inp = g.dim(g.parents(v)[0]);
    for (k, x) in theta[slot.offset..slot.offset + slot.len].iter_mut().enumerate() {
        *x *= if k < out * inp { weight } else { bias };
    }
}

fn path_decomposition() -> Verdict {
    let mut c = Checks::default();
    let mut worst = 0.0f64;
    let graphs = [
        ("chain", zoo::mlp_chain(3, &[4, 4, 4], 2, Activation::Gelu, LossKind::Mse).unwrap().graph),
        ("diamond-sum", zoo::diamond(3, 4, Merge::Sum, Activation::Silu).unwrap().graph),
        ("diamond-cat", zoo::diamond(3, 4, Merge::Concat, Activation::Silu).unwrap().graph),
        ("skip", zoo::skip_block(3, 4, Activation::Tanh).unwrap().graph),
        ("residual", zoo::residual_chain(3, 2, 2, Activation::Tanh).unwrap().graph),
    ];
    for (k, (name, g)) in graphs.iter().enumerate() {
        for rep in 0..3 {
            check_paths(&mut c, name, g, 10 * k as u64 + rep, &mut worst);
        }
    }

    let g = zoo::mlp_chain(3, &[5, 4, 5, 4], 2, Activation::Relu, LossKind::Mse).unwrap().graph;
    let nodes = g.measured_nodes();
    let mut drift = 0.0f64;
    for seed in 0..5 {
        let (theta, samples) = kink_free(&g, seed + 60, 3);
        let base = pair_metrics(&g, &evaluate(&g, &theta, &samples).unwrap(), &nodes, 1e-12, false);
        for (alpha, lin, next) in [(2.0, "lin2", "lin3"), (0.3, "lin1", "lin2"), (7.0, "lin3", "lin4")] {
            let mut scaled = theta.clone();
            scale_linear(&g, &mut scaled, lin, alpha, alpha);
            scale_linear(&g, &mut scaled, next, 1.0 / alpha, 1.0);
            let after = pair_metrics(&g, &evaluate(&g, &scaled, &samples).unwrap(), &nodes, 1e-12, false);
            for (a, b) in base.iter().zip(&after) {
                let d = (a.coupling - b.coupling).abs() / a.coupling.abs().max(f64::MIN_POSITIVE);
                drift = drift.max(d);
                c.check(d < 1e-9, || format!("seed {seed} alpha {alpha} ({}, {}): {d:e}", a.v, a.w));
            }
        }
    }
    c.verdict(format!("max path residual {worst:.1e}, max coupling drift under rescaling {drift:.1e}"))
}

fn main() {
    let start = Instant::now();
    let oracle = run(ExperimentId::OracleSuite, |_| {});
    let gngap = run(ExperimentId::GngapActivations, init_only);
    let diamond = run(ExperimentId::Diamond, init_only);
    let decay_run = run(ExperimentId::Decay, init_only);
    let bottleneck = run(ExperimentId::Bottleneck, init_only);
    let attention = run(ExperimentId::ToyAttention, |_| {});

    let results: Vec<(usize, &str, Verdict)> = vec![
        (1, "oracle equivalence", oracle_equivalence(&oracle)),
        (2, "canonical decomposition", canonical_decomposition(&oracle)),
        (3, "piecewise-linear vanishing", piecewise_linear_vanishing(&gngap)),
        (4, "activation ordering", activation_ordering(&gngap)),
        (5, "diamond separation", diamond_separation(&diamond)),
        (6, "toy attention", toy_attention(&attention)),
        (7, "decay", decay(&decay_run)),
        (8, "Lyapunov bound", lyapunov_bound()),
        (9, "rank bottleneck", rank_bottleneck(&bottleneck)),
        (10, "HVP consistency and scaling", hvp_scaling(&oracle)),
        (11, "stochastic estimators", stochastic_estimators()),
        (12, "path decomposition", path_decomposition()),
    ];

    let mut unexpected = Vec::new();
    for (n, name, v) in &results {
        let known = KNOWN_FAILURES.iter().find(|(k, _)| k == n).map(|(_, why)| *why);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {name}: {status}  {}", v.detail);
        match (v.pass, known) {
            (false, Some(why)) => println!("             known desk-scale failure: {why}"),
            (false, None) => unexpected.push(*n),
            (true, Some(_)) => println!("             listed as a known failure but now passes"),
            (true, None) => {}
        }
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria pass in {:.0} s", results.len(), start.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
