//! Linear one-vs-rest SVM (hinge loss, L2 regularization) trained by dual
//! coordinate descent. Inputs are standardized by training-fold statistics
//! and a regularized bias is folded in as a constant feature.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SvmConfig {
    /// Hinge-loss weight in `½‖w‖² + C Σ max(0, 1 − y·f(x))`.
    pub c: f64,
    pub max_passes: usize,
    pub tol: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, max_passes: 1000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct OneVsRestSvm {
    classes: Vec<u32>,
    /// One weight vector per class, last entry is the bias.
    weights: Vec<Vec<f64>>,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl OneVsRestSvm {
    pub fn fit(xs: &[Vec<f64>], ys: &[u32], cfg: &SvmConfig) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidInput("empty or mismatched training set".into()));
        }
        let dim = xs[0].len();
        if xs.iter().any(|x| x.len() != dim) {
            return Err(Error::ShapeMismatch("inconsistent feature dimensions".into()));
        }
        let n = xs.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut inv_std = vec![0.0; dim];
        for (j, inv) in inv_std.iter_mut().enumerate() {
            let var = xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            *inv = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        }
        let features: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let mut f: Vec<f64> =
                    x.iter().enumerate().map(|(j, v)| (v - mean[j]) * inv_std[j]).collect();
                f.push(1.0);
                f
            })
            .collect();

        let mut classes: Vec<u32> = ys.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let weights = classes
            .iter()
            .map(|&cls| {
                let labels: Vec<f64> =
                    ys.iter().map(|&y| if y == cls { 1.0 } else { -1.0 }).collect();
                train_binary(&features, &labels, cfg)
            })
            .collect();
        Ok(OneVsRestSvm { classes, weights, mean, inv_std })
    }

    fn decision(&self, x: &[f64]) -> Vec<f64> {
        let f: Vec<f64> =
            x.iter().enumerate().map(|(j, v)| (v - self.mean[j]) * self.inv_std[j]).collect();
        self.weights
            .iter()
            .map(|w| {
                let mut d = w[w.len() - 1];
                for (wi, fi) in w.iter().zip(&f) {
                    d += wi * fi;
                }
                d
            })
            .collect()
    }

    /// Argmax over one-vs-rest decision values; ties break toward the
    /// smallest class id.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let d = self.decision(x);
        let mut best = 0;
        for i in 1..d.len() {
            if d[i] > d[best] {
                best = i;
            }
        }
        self.classes[best]
    }
}

/// Dual coordinate descent for the L1-loss binary SVM.
fn train_binary(features: &[Vec<f64>], labels: &[f64], cfg: &SvmConfig) -> Vec<f64> {
    let n = features.len();
    let dim = features[0].len();
    let sq_norms: Vec<f64> = features.iter().map(|f| f.iter().map(|v| v * v).sum()).collect();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; dim];
    for _ in 0..cfg.max_passes {
        let mut max_change = 0.0f64;
        for i in 0..n {
            if sq_norms[i] == 0.0 {
                continue;
            }
            let margin: f64 = w.iter().zip(&features[i]).map(|(a, b)| a * b).sum();
            let grad = labels[i] * margin - 1.0;
            let old = alpha[i];
            let new = (old - grad / sq_norms[i]).clamp(0.0, cfg.c);
            if new != old {
                let delta = (new - old) * labels[i];
                for (wj, fj) in w.iter_mut().zip(&features[i]) {
                    *wj += delta * fj;
                }
                alpha[i] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change < cfg.tol {
            break;
        }
    }
    w
}
