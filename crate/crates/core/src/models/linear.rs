//! One-vs-rest linear classifiers fitted by full-batch gradient descent.
//!
//! Each binary subproblem minimizes
//! `mean(loss(y_i * (w.x_i + b))) + |w|^2 / (2 * C * n)` with the bias left
//! unpenalized. Steps follow an Armijo backtracking line search that starts
//! from twice the previous accepted step. The loop stops once the objective
//! changes by less than [`TOLERANCE`] or after [`MAX_ITER`] iterations.

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;

pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearLoss {
    Logistic,
    SquaredHinge,
}

impl LinearLoss {
    fn value(self, z: f64) -> f64 {
        match self {
            // log(1 + e^-z), stable on both tails.
            LinearLoss::Logistic => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            LinearLoss::SquaredHinge => {
                let h = (1.0 - z).max(0.0);
                h * h
            }
        }
    }

    fn slope(self, z: f64) -> f64 {
        match self {
            LinearLoss::Logistic => {
                if z > 0.0 {
                    let e = (-z).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + z.exp())
                }
            }
            LinearLoss::SquaredHinge => -2.0 * (1.0 - z).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub loss: LinearLoss,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn scores(&self, row: &FeatureVector) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| row.dot(w) + b)
            .collect()
    }

    pub fn predict(&self, row: &FeatureVector) -> usize {
        super::argmax(&self.scores(row))
    }
}

struct Problem<'a> {
    x: &'a [FeatureVector],
    y: Vec<f64>,
    dimension: usize,
    /// 1 / (C * n)
    lambda: f64,
    loss: LinearLoss,
}

impl Problem<'_> {
    fn data_loss(&self, margins: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        margins
            .iter()
            .zip(&self.y)
            .map(|(m, y)| self.loss.value(y * m))
            .sum::<f64>()
            / n
    }

    fn objective(&self, margins: &[f64], w_sq: f64) -> f64 {
        self.data_loss(margins) + 0.5 * self.lambda * w_sq
    }

    /// Gradient over `(w, b)`; the bias entry is last.
    fn gradient(&self, w: &[f64], margins: &[f64]) -> Vec<f64> {
        let n = self.y.len() as f64;
        let mut g = vec![0.0; self.dimension + 1];
        for ((row, m), y) in self.x.iter().zip(margins).zip(&self.y) {
            let s = y * self.loss.slope(y * m) / n;
            if s != 0.0 {
                for &(j, v) in &row.entries {
                    g[j] += s * v;
                }
                g[self.dimension] += s;
            }
        }
        for (gj, wj) in g.iter_mut().zip(w) {
            *gj += self.lambda * wj;
        }
        g
    }

    fn solve(&self) -> (Vec<f64>, f64) {
        let d = self.dimension;
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut margins = vec![0.0; self.y.len()];
        let mut w_sq = 0.0;
        let mut obj = self.objective(&margins, w_sq);
        let mut step = 1.0;
        let mut trial = vec![0.0; margins.len()];
        for _ in 0..MAX_ITER {
            let g = self.gradient(&w, &margins);
            let g_sq: f64 = g.iter().map(|v| v * v).sum();
            if g_sq == 0.0 {
                break;
            }
            let gw: f64 = g[..d].iter().zip(&w).map(|(a, b)| a * b).sum();
            let gw_sq: f64 = g[..d].iter().map(|v| v * v).sum();
            let dm: Vec<f64> = self.x.iter().map(|r| r.dot(&g[..d]) + g[d]).collect();
            step *= 2.0;
            let new_obj = loop {
                for ((t, m), dmi) in trial.iter_mut().zip(&margins).zip(&dm) {
                    *t = m - step * dmi;
                }
                let trial_w_sq = w_sq - 2.0 * step * gw + step * step * gw_sq;
                let candidate = self.objective(&trial, trial_w_sq);
                if candidate <= obj - 1e-4 * step * g_sq || step < 1e-12 {
                    break candidate;
                }
                step *= 0.5;
            };
            for (wj, gj) in w.iter_mut().zip(&g) {
                *wj -= step * gj;
            }
            b -= step * g[d];
            std::mem::swap(&mut margins, &mut trial);
            w_sq = w.iter().map(|v| v * v).sum();
            let delta = (obj - new_obj).abs();
            obj = new_obj;
            if delta < TOLERANCE {
                break;
            }
        }
        (w, b)
    }
}

pub(crate) fn fit(
    x: &[FeatureVector],
    labels: &[usize],
    n_classes: usize,
    dimension: usize,
    c: f64,
    loss: LinearLoss,
) -> LinearModel {
    let lambda = 1.0 / (c * x.len() as f64);
    let binary = |positive: usize| {
        Problem {
            x,
            y: labels
                .iter()
                .map(|&l| if l == positive { 1.0 } else { -1.0 })
                .collect(),
            dimension,
            lambda,
            loss,
        }
        .solve()
    };
    let (weights, bias) = if n_classes == 2 {
        // The two one-vs-rest problems mirror each other exactly.
        let (w, b) = binary(1);
        (vec![w.iter().map(|v| -v).collect(), w], vec![-b, b])
    } else {
        (0..n_classes).map(binary).unzip()
    };
    LinearModel {
        loss,
        weights,
        bias,
    }
}
