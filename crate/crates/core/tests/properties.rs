use hessdag_core::diagnostics::{
    coupling, interaction_radius, optimal_skip_step, spearman, DistanceProfile, MetricFlags, Radius,
};
use hessdag_core::hessian::{evaluate, symmetrize, HessianSession, Mode};
use hessdag_core::hvp::{hutchinson_frob_sq, stochastic_stable_rank, ProbeStream};
use hessdag_core::linalg::{frobenius_norm, spectral_norm_sq, svd, sym_eigenvalues, truncated_svd};
use hessdag_core::oracle::{fd_hessian_raw, FdConfig};
use hessdag_core::zoo;
use hessdag_core::{Graph, Matrix, NodeId};
use proptest::prelude::*;

mod common;
use common::random_dag;

fn matrix(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

fn ops() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
    prop::collection::vec(any::<(u8, u8, u8)>(), 1..9)
}

/// Path counts by dynamic programming over the topological order.
fn count_paths(g: &Graph, v: NodeId, c: NodeId) -> usize {
    let mut n = vec![0usize; g.len()];
    n[v.0] = 1;
    for &x in g.topological_order() {
        for &p in g.parents(x) {
            n[x.0] += n[p.0];
        }
        if x == v {
            n[x.0] = 1;
        }
    }
    n[c.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frobenius_dominates_spectral(m in matrix(7), seed in any::<u64>()) {
        let f2 = frobenius_norm(&m).powi(2);
        prop_assert!(f2 >= spectral_norm_sq(&m, 200, seed) - 1e-6 * f2);
    }

    #[test]
    fn gram_products_are_psd(a in matrix(7)) {
        let f2 = frobenius_norm(&a).powi(2);
        let ev = sym_eigenvalues(&a.tr_matmul(&a).unwrap(), 1e-15).unwrap();
        prop_assert!(ev.iter().all(|&l| l >= -1e-9 * f2));
    }

    #[test]
    fn truncation_error_non_increasing(m in matrix(6)) {
        let k = m.rows().min(m.cols());
        let errs: Vec<f64> = (1..=k).map(|r| truncated_svd(&m, r).unwrap().tail_error).collect();
        prop_assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(errs[k - 1] <= 1e-10 * frobenius_norm(&m).max(1.0));
    }

    #[test]
    fn svd_reconstructs(m in matrix(6)) {
        let d = svd(&m);
        let k = d.s.len();
        let us = Matrix::from_fn(m.rows(), k, |i, j| d.u[(i, j)] * d.s[j]);
        let back = us.matmul_tr(&Matrix::from_fn(m.cols(), k, |i, j| d.v[(i, j)])).unwrap();
        prop_assert!(back.sub(&m).unwrap().max_abs() < 1e-10 * m.max_abs().max(1.0));
    }

    #[test]
    fn topological_order_is_a_valid_permutation(ops in ops(), smooth in any::<bool>()) {
        let g = random_dag(&ops, smooth);
        let order = g.topological_order();
        let mut seen = vec![false; g.len()];
        for &v in order {
            prop_assert!(!seen[v.0]);
            for &p in g.parents(v) {
                prop_assert!(seen[p.0], "parent after child");
            }
            seen[v.0] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn graph_distance_is_a_metric(ops in ops()) {
        let g = random_dag(&ops, true);
        let ids: Vec<NodeId> = g.ids().collect();
        for &a in &ids {
            prop_assert_eq!(g.graph_distance(a, a), Some(0));
            for &b in &ids {
                let ab = g.graph_distance(a, b);
                prop_assert_eq!(ab, g.graph_distance(b, a));
                for &c in &ids {
                    if let (Some(ab), Some(bc), Some(ac)) = (ab, g.graph_distance(b, c), g.graph_distance(a, c)) {
                        prop_assert!(ac <= ab + bc);
                    }
                }
            }
        }
    }

    #[test]
    fn path_enumeration_matches_counting(ops in ops()) {
        let g = random_dag(&ops, true);
        let c = g.loss_input();
        for v in g.ids() {
            let set = g.enumerate_paths(v, c, 10_000);
            prop_assert!(!set.overflow);
            prop_assert_eq!(set.paths.len(), count_paths(&g, v, c));
            for p in &set.paths {
                prop_assert_eq!(p[0], v);
                prop_assert_eq!(*p.last().unwrap(), c);
                prop_assert!(p.windows(2).all(|e| g.parents(e[1]).contains(&e[0])));
            }
        }
    }

    #[test]
    fn blocks_vanish_without_common_descendant(ops in ops(), seed in 0u64..1000) {
        let g = random_dag(&ops, true);
        let theta = zoo::random_params(&g, 0.7, seed);
        let evals = evaluate(&g, &theta, &zoo::random_samples(&g, 1, seed)).unwrap();
        let mut s = HessianSession::new(&g, &evals[0].forward, &evals[0].backward);
        let nodes: Vec<NodeId> = g.ids().filter(|&v| !g.kind(v).is_loss()).collect();
        for &v in &nodes {
            for &w in &nodes {
                if g.common_descendants(v, w).is_empty() {
                    prop_assert_eq!(s.block(v, w, Mode::Full).max_abs(), 0.0);
                }
            }
        }
    }

    #[test]
    fn blocks_are_transposes(ops in ops(), seed in 0u64..1000) {
        let g = random_dag(&ops, true);
        let theta = zoo::random_params(&g, 0.7, seed);
        let evals = evaluate(&g, &theta, &zoo::random_samples(&g, 1, seed)).unwrap();
        let mut s = HessianSession::new(&g, &evals[0].forward, &evals[0].backward);
        let nodes: Vec<NodeId> = g.ids().filter(|&v| !g.kind(v).is_loss()).collect();
        for &v in &nodes {
            for &w in &nodes {
                let a = s.block(v, w, Mode::Full);
                let b = s.block(w, v, Mode::Full).transpose();
                prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-10 * a.max_abs().max(1e-12));
            }
        }
    }

    #[test]
    fn symmetrize_is_the_average(a in matrix(5), seed in any::<u64>()) {
        let b = Matrix::new(a.cols(), a.rows(), hessdag_core::linalg::gaussian_vector(a.rows() * a.cols(), seed)).unwrap();
        let s = symmetrize(&a, &b).unwrap();
        let expect = a.add(&b.transpose()).unwrap().scale(0.5);
        prop_assert!(s.sub(&expect).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn hutchinson_is_exact_on_orthogonal_maps(d in 1usize..20, m in 1usize..30, seed in any::<u64>()) {
        let mut stream = ProbeStream::rademacher(seed);
        let est = hutchinson_frob_sq(|z| z.to_vec(), d, m, &mut stream);
        prop_assert_eq!(est, d as f64);
        let signs: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let est = hutchinson_frob_sq(|z| z.iter().zip(&signs).map(|(a, b)| a * b).rev().collect(), d, m, &mut stream);
        prop_assert_eq!(est, d as f64);
    }

    #[test]
    fn stochastic_stable_rank_within_bounds(m in matrix(6), seed in any::<u64>()) {
        let sv = svd(&m).s;
        prop_assume!(sv[0] > 1e-6);
        let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count() as f64;
        let probes = 200;
        let est = stochastic_stable_rank(&m, probes, 100, &mut ProbeStream::rademacher(seed), 1e-24).value().unwrap();
        let f2 = sv.iter().map(|s| s * s).sum::<f64>();
        let quart = sv.iter().map(|s| s.powi(4)).sum::<f64>();
        let se = (2.0 * quart / probes as f64).sqrt() / (sv[0] * sv[0]);
        let exact = f2 / (sv[0] * sv[0]);
        prop_assert!(est >= 1.0 - 3.0 * se - 1e-6 && est <= rank + 3.0 * se + 1e-6, "est {} exact {} rank {} se {}", est, exact, rank, se);
    }

    #[test]
    fn flags_round_trip(bits in 0u8..16) {
        let mut f = MetricFlags::default();
        for k in [MetricFlags::COUPLING_DEGENERATE, MetricFlags::RANK_DEGENERATE, MetricFlags::COUPLING_CLAMPED, MetricFlags::UNREACHABLE] {
            if bits & k.bits() != 0 {
                f.insert(k);
            }
        }
        prop_assert_eq!(f.bits(), bits);
        prop_assert_eq!(MetricFlags::parse(&f.to_string()), Some(f));
    }

    #[test]
    fn coupling_is_scale_free(r in 0.0f64..10.0, a in 0.01f64..10.0, b in 0.01f64..10.0, s in 0.01f64..100.0) {
        let c1 = coupling(r, a, b, false).unwrap();
        let c2 = coupling(r * s, a * s, b * s, false).unwrap();
        prop_assert!((c1 - c2).abs() <= 1e-12 * c1.max(1.0));
        prop_assert!(coupling(r, a, b, true).unwrap() <= 1.0);
    }

    #[test]
    fn spearman_ignores_monotone_maps(xs in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        let ys: Vec<f64> = xs.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
        if let Some(r) = spearman(&xs, &ys) {
            prop_assert!((r - 1.0).abs() < 1e-12);
            let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
            prop_assert!((spearman(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_counts_partition_points(points in prop::collection::vec((1usize..6, 0.0f64..10.0), 1..40)) {
        let p = DistanceProfile::from_points(&points);
        prop_assert_eq!(p.total_count(), points.len());
        prop_assert!(p.entries.windows(2).all(|w| w[0].dist < w[1].dist));
        for e in &p.entries {
            let vals: Vec<f64> = points.iter().filter(|q| q.0 == e.dist).map(|q| q.1).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(e.mean >= lo - 1e-12 && e.mean <= hi + 1e-12 && e.std >= 0.0);
        }
    }

    #[test]
    fn radius_is_minimal(rate in 0.01f64..0.99, c in 0.1f64..10.0, eps in 1e-8f64..0.5) {
        let Radius::Finite(k) = interaction_radius(rate, c, eps, 1.0) else { panic!("decaying rate") };
        prop_assert!(c * rate.powi(k as i32) < eps);
        if k > 0 {
            prop_assert!(c * rate.powi(k as i32 - 1) >= eps);
        }
    }

    #[test]
    fn skip_step_is_floor(layers in 1usize..64, budget in 1usize..64) {
        let s = optimal_skip_step(layers, budget).unwrap();
        prop_assert_eq!(s.clamped, budget > layers);
        prop_assert_eq!(s.step, (layers / budget).max(1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fd_hessian_nearly_symmetric_before_symmetrization(ops in ops(), seed in 0u64..1000) {
        let g = random_dag(&ops, true);
        prop_assume!(g.param_count() <= 60);
        let theta = zoo::random_params(&g, 0.7, seed);
        let samples = zoo::random_samples(&g, 2, seed);
        let loss = |t: &[f64]| hessdag_core::oracle::batch_loss(&g, t, &samples);
        let raw = fd_hessian_raw(loss, &theta, &FdConfig::second_order());
        let asym = raw.sub(&raw.transpose()).unwrap().frobenius_norm();
        prop_assert!(asym <= 1e-6 * raw.frobenius_norm().max(1e-3));
    }
}

#[test]
fn richardson_step_halving() {
    let g = zoo::mlp_chain(3, &[4, 3], 2, hessdag_core::Activation::Gelu, zoo::LossKind::Mse).unwrap().graph;
    let theta = zoo::random_params(&g, 0.7, 3);
    let samples = zoo::random_samples(&g, 2, 4);
    let evals = evaluate(&g, &theta, &samples).unwrap();
    let exact = hessdag_core::hessian::assemble_full_hessian(&g, &evals, Default::default()).unwrap();
    let loss = |t: &[f64]| hessdag_core::oracle::batch_loss(&g, t, &samples);
    let cfg = FdConfig::second_order();
    let e1 = hessdag_core::oracle::fd_hessian(loss, &theta, &cfg.with_step(2e-3)).sub(&exact).unwrap().frobenius_norm();
    let e2 = hessdag_core::oracle::fd_hessian(loss, &theta, &cfg.with_step(1e-3)).sub(&exact).unwrap().frobenius_norm();
    assert!(e2 < e1 && e1 / e2 > 4.0 / 10.0 && e1 / e2 < 4.0 * 10.0, "{e1:e} → {e2:e}");
}
