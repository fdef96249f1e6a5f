//! Parameter-space HVP timing against model size.

use std::time::Instant;

use hessdag_core::hessian::evaluate;
use hessdag_core::hvp::param_hvp;
use hessdag_core::linalg::gaussian_vector;
use hessdag_core::zoo::{self, InitScheme, LossKind};
use hessdag_core::Activation;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub width: usize,
    pub params: usize,
    /// Fastest of the repetitions, per sample.
    pub seconds: f64,
}

/// `y ≈ slope·x + intercept`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some(LinearFit { slope, intercept, r_squared: 1.0 - ss_res / syy })
}

/// Times `param_hvp` on tanh chains `width → [width; depth] → width`.
pub fn hvp_bench(widths: &[usize], depth: usize, samples: usize, reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &w in widths {
        let g = zoo::mlp_chain(w, &vec![w; depth], w, Activation::Tanh, LossKind::Mse)?.graph;
        let theta = zoo::init_params(&g, InitScheme::Xavier, seed);
        let evals = evaluate(&g, &theta, &zoo::random_samples(&g, samples, seed))?;
        let r = gaussian_vector(g.param_count(), seed);
        param_hvp(&g, &evals, &r)?;
        let mut best = f64::INFINITY;
        for _ in 0..reps.max(1) {
            let t = Instant::now();
            let out = param_hvp(&g, &evals, &r)?;
            best = best.min(t.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }
        rows.push(BenchRow { width: w, params: g.param_count(), seconds: best / samples.max(1) as f64 });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("width,params,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.width, r.params, r.seconds));
    }
    out
}
