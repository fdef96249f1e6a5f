//! Synthetic data replacing image datasets.

use hessdag_core::calculus::{Sample, Target};
use hessdag_core::{Graph, NodeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskKind {
    /// Class means `separation · N(0, I)`, samples `mean + spread · N(0, I)`.
    GaussianClassification { classes: usize, separation: f64, spread: f64 },
    /// `y = mean_rows tanh(X W_t) W_r + ε` with `W_t, W_r ~ N(0, 1/d)` drawn
    /// from `teacher_seed`, `ε ~ N(0, noise²)`; targets standardized per
    /// coordinate with training-split statistics.
    TeacherRegression { noise: f64, teacher_seed: u64 },
}

/// Unknown keys are rejected by the flattened [`TaskKind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    #[serde(flatten)]
    pub kind: TaskKind,
    pub generator_seed: u64,
    pub train_size: usize,
    /// Held-out batch on which diagnostics are evaluated.
    pub probe_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub probe: Vec<Sample>,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

struct Teacher {
    d: usize,
    d_out: usize,
    hidden: Vec<f64>,
    readout: Vec<f64>,
}

impl Teacher {
    fn new(d: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (d as f64).sqrt();
        let hidden = normal_vec(&mut rng, d * d).into_iter().map(|x| s * x).collect();
        let readout = normal_vec(&mut rng, d * d_out).into_iter().map(|x| s * x).collect();
        Teacher { d, d_out, hidden, readout }
    }

    /// `x` is `rows × d`, row-major.
    fn apply(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let d = self.d;
        let mut pooled = vec![0.0; d];
        for r in 0..rows {
            let xr = &x[r * d..(r + 1) * d];
            for (j, p) in pooled.iter_mut().enumerate() {
                let z: f64 = (0..d).map(|i| xr[i] * self.hidden[i * d + j]).sum();
                *p += z.tanh() / rows as f64;
            }
        }
        (0..self.d_out).map(|k| (0..d).map(|j| pooled[j] * self.readout[j * self.d_out + k]).sum()).collect()
    }
}

/// Zero mean, unit variance per coordinate, using the first `fit` rows.
fn standardize(ys: &mut [Vec<f64>], fit: usize) {
    let Some(dim) = ys.first().map(|y| y.len()) else { return };
    let fit = fit.clamp(1, ys.len());
    for k in 0..dim {
        let mean = ys[..fit].iter().map(|y| y[k]).sum::<f64>() / fit as f64;
        let var = ys[..fit].iter().map(|y| (y[k] - mean).powi(2)).sum::<f64>() / fit as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for y in ys.iter_mut() {
            y[k] = (y[k] - mean) / sd;
        }
    }
}

impl SyntheticTask {
    /// Class means and the teacher depend only on the task; the sample draws
    /// also depend on `seed`.
    pub fn generate(&self, g: &Graph, seed: u64) -> Result<Dataset> {
        let inputs = g.inputs();
        let n = self.train_size + self.probe_size;
        let mut rng = ChaCha8Rng::seed_from_u64(self.generator_seed);
        rng.set_stream(seed);
        let samples: Vec<Sample> = match &self.kind {
            TaskKind::GaussianClassification { classes, separation, spread } => {
                let k = match g.kind(g.out()) {
                    NodeKind::LossSoftmaxCe { classes: k } if k == classes => *k,
                    _ => return Err(CliError::config(format!("classification task needs a {classes}-class CE loss"))),
                };
                if inputs.len() != 1 {
                    return Err(CliError::config("classification task needs a single input node"));
                }
                let d = g.dim(inputs[0]);
                let mut mean_rng = ChaCha8Rng::seed_from_u64(self.generator_seed);
                let means: Vec<Vec<f64>> = (0..k)
                    .map(|_| normal_vec(&mut mean_rng, d).into_iter().map(|x| separation * x).collect())
                    .collect();
                (0..n)
                    .map(|i| {
                        let c = i % k;
                        let x = means[c].iter().map(|m| m + spread * rng.sample::<f64, _>(StandardNormal)).collect();
                        Sample::new(vec![x], Target::Class(c))
                    })
                    .collect()
            }
            TaskKind::TeacherRegression { noise, teacher_seed } => {
                if !matches!(g.kind(g.out()), NodeKind::LossMse) {
                    return Err(CliError::config("teacher regression needs an MSE loss"));
                }
                if inputs.len() != 1 {
                    return Err(CliError::config("teacher regression needs a single input node"));
                }
                let (rows, d) = g.shape(inputs[0]);
                let d_out = g.dim(g.loss_input());
                let teacher = Teacher::new(d, d_out, *teacher_seed);
                let mut xs = Vec::with_capacity(n);
                let mut ys = Vec::with_capacity(n);
                for _ in 0..n {
                    let x = normal_vec(&mut rng, rows * d);
                    let y: Vec<f64> =
                        teacher.apply(&x, rows).into_iter().map(|t| t + noise * rng.sample::<f64, _>(StandardNormal)).collect();
                    xs.push(x);
                    ys.push(y);
                }
                standardize(&mut ys, self.train_size);
                xs.into_iter().zip(ys).map(|(x, y)| Sample::new(vec![x], Target::Vector(y))).collect()
            }
        };
        let mut train = samples;
        let probe = train.split_off(self.train_size);
        Ok(Dataset { train, probe })
    }
}
