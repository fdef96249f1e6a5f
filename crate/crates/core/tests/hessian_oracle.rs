use hessdag_core::calculus::Sample;
use hessdag_core::hessian::{assemble_full_hessian, evaluate, AssemblyCap, HessianSession, Mode};
use hessdag_core::oracle::{fd_block, fd_param_hessian, FdConfig};
use hessdag_core::zoo;

mod common;
use common::{rel, suite};

#[test]
fn assembled_hessian_matches_finite_differences() {
    for (seed, (name, g)) in suite().into_iter().enumerate() {
        assert!(g.param_count() <= 200, "{name}: P = {}", g.param_count());
        let theta = zoo::random_params(&g, 0.7, seed as u64 + 100);
        let samples: Vec<Sample> = zoo::random_samples(&g, 3, seed as u64 + 200);
        let evals = evaluate(&g, &theta, &samples).unwrap();
        let exact = assemble_full_hessian(&g, &evals, AssemblyCap::default()).unwrap();
        let fd = fd_param_hessian(&g, &theta, &samples, &FdConfig::second_order()).unwrap();
        let err = rel(&exact, &fd);
        assert!(err < 1e-4, "{name}: relative error {err:e}");
        assert!(exact.sub(&exact.transpose()).unwrap().max_abs() == 0.0);
    }
}

#[test]
fn input_blocks_match_offset_differences() {
    for (seed, (name, g)) in suite().into_iter().enumerate() {
        let theta = zoo::random_params(&g, 0.7, seed as u64 + 300);
        let sample = zoo::random_samples(&g, 1, seed as u64 + 400).remove(0);
        let evals = evaluate(&g, &theta, std::slice::from_ref(&sample)).unwrap();
        let mut sess = HessianSession::new(&g, &evals[0].forward, &evals[0].backward);
        let nodes: Vec<_> = g.ids().filter(|&v| v != g.out()).collect();
        for &v in &nodes {
            for &w in &nodes {
                let exact = sess.block(v, w, Mode::Full);
                let fd = fd_block(&g, &theta, &sample, v, w, &FdConfig::second_order()).unwrap();
                let scale = fd.frobenius_norm().max(1e-6);
                let err = exact.sub(&fd).unwrap().frobenius_norm() / scale;
                assert!(err < 1e-4, "{name} ({}, {}): {err:e}", g.node(v).label, g.node(w).label);
            }
        }
    }
}
