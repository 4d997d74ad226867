//! Deterministic shared response model: alternating minimization of
//! `(1/m) Σ ‖X_i − W_i S‖_F²` subject to `W_i^T W_i = I`.

use super::{validate_inputs, FactorFit, FitConfig, ModelId};
use crate::error::Result;
use crate::linalg::{compact_svd, random_orthonormal, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fit_srm(xs: &[Matrix], cfg: &FitConfig) -> Result<FactorFit> {
    let (m, v, t) = validate_inputs(xs, cfg.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // One shared random orthonormal init keeps the fit equivariant under
    // permutation of the subject order.
    let w0 = random_orthonormal(v, cfg.k, &mut rng);
    let mut w: Vec<Matrix> = vec![w0; m];
    let _ = t;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for n in 1..=cfg.max_iter {
        iterations = n;
        // S-step: exact minimizer given orthonormal W_i.
        let s = shared_response(&w, xs);
        // W-step: per-subject orthogonal Procrustes.
        for (wi, xi) in w.iter_mut().zip(xs) {
            *wi = procrustes(xi, &s)?;
        }
        let obj = objective(&w, &s, xs);
        let done = trace.last().is_some_and(|prev| prev - obj < cfg.tol);
        trace.push(obj);
        if done {
            converged = true;
            break;
        }
    }
    // Leave S consistent with the final maps.
    let s = shared_response(&w, xs);
    Ok(FactorFit { model: ModelId::Srm, w, s, objective_trace: trace, converged, iterations })
}

fn shared_response(w: &[Matrix], xs: &[Matrix]) -> Matrix {
    let mut s = Matrix::zeros(w[0].ncols(), xs[0].ncols());
    for (wi, xi) in w.iter().zip(xs) {
        s += wi.transpose() * xi;
    }
    s.scale(1.0 / w.len() as f64)
}

/// Orthonormal W minimizing `‖X − W S‖_F`: the polar factor of `X S^T`.
fn procrustes(x: &Matrix, s: &Matrix) -> Result<Matrix> {
    let svd = compact_svd(&(x * s.transpose()))?;
    Ok(&svd.u * &svd.vt)
}

pub(crate) fn objective(w: &[Matrix], s: &Matrix, xs: &[Matrix]) -> f64 {
    let m = xs.len() as f64;
    w.iter().zip(xs).map(|(wi, xi)| (xi - wi * s).norm().powi(2)).sum::<f64>() / m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pearson;
    use crate::models::fit_pca;
    use rand::{Rng, SeedableRng};

    fn noise_free_inputs(m: usize, v: usize, t: usize, k: usize, seed: u64) -> (Vec<Matrix>, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s0 = Matrix::from_fn(k, t, |_, _| rng.random_range(-1.0..1.0));
        let xs = (0..m)
            .map(|_| {
                let q = random_orthonormal(v, k, &mut rng);
                q * &s0
            })
            .collect();
        (xs, s0)
    }

    #[test]
    fn noise_free_data_is_fit_exactly() {
        let (xs, s0) = noise_free_inputs(3, 20, 30, 4, 1);
        let mut cfg = FitConfig::new(4).with_seed(7);
        cfg.tol = 1e-14;
        cfg.max_iter = 500;
        let fit = fit_srm(&xs, &cfg).unwrap();
        assert!(*fit.objective_trace.last().unwrap() < 1e-10);
        // Recovered S spans the same row space as S0: each true source is
        // reconstructed by projecting onto the recovered rows.
        let pinv = crate::linalg::pseudo_inverse(&fit.s.transpose()).unwrap();
        for i in 0..4 {
            let s0_row: Vec<f64> = s0.row(i).iter().copied().collect();
            let coefs = &pinv * Matrix::from_column_slice(30, 1, &s0_row);
            let recon = fit.s.transpose() * coefs;
            let recon_v: Vec<f64> = recon.iter().copied().collect();
            assert!(pearson(&s0_row, &recon_v).unwrap() > 1.0 - 1e-8);
        }
    }

    #[test]
    fn single_subject_matches_pca_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(10, 14, |_, _| rng.random_range(-1.0..1.0));
        let mut cfg = FitConfig::new(3).with_seed(3);
        cfg.tol = 1e-13;
        cfg.max_iter = 2000;
        let srm = fit_srm(&[x.clone()], &cfg).unwrap();
        let pca = fit_pca(&[x], &FitConfig::new(3)).unwrap();
        let srm_obj = *srm.objective_trace.last().unwrap();
        assert!((srm_obj - pca.objective_trace[0]).abs() < 1e-6);
    }

    #[test]
    fn square_maps_reproduce_hyperalignment() {
        // k = v: the W-step is plain per-subject Procrustes onto S.
        let (xs, _) = noise_free_inputs(3, 6, 25, 6, 4);
        let mut cfg = FitConfig::new(6).with_seed(5);
        cfg.tol = 1e-14;
        cfg.max_iter = 500;
        let fit = fit_srm(&xs, &cfg).unwrap();
        // Direct per-subject Procrustes oracle against the returned S.
        let mut oracle_obj = 0.0;
        for xi in &xs {
            let wi = procrustes(xi, &fit.s).unwrap();
            oracle_obj += (xi - wi * &fit.s).norm().powi(2);
        }
        oracle_obj /= xs.len() as f64;
        let fit_obj = objective(&fit.w, &fit.s, &xs);
        assert!((fit_obj - oracle_obj).abs() < 1e-9);
        assert!(fit_obj < 1e-10);
    }

    #[test]
    fn objective_trace_is_non_increasing_and_maps_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<Matrix> =
            (0..4).map(|_| Matrix::from_fn(15, 20, |_, _| rng.random_range(-1.0..1.0))).collect();
        let fit = fit_srm(&xs, &FitConfig::new(5).with_seed(8)).unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10);
        }
        for wi in &fit.w {
            let gram = wi.transpose() * wi;
            assert!((gram - Matrix::identity(5, 5)).amax() < 1e-6);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Matrix> =
            (0..3).map(|_| Matrix::from_fn(12, 16, |_, _| rng.random_range(-1.0..1.0))).collect();
        let mut cfg = FitConfig::new(4).with_seed(11);
        cfg.tol = 1e-12;
        cfg.max_iter = 500;
        let fit = fit_srm(&xs, &cfg).unwrap();
        let permuted = vec![xs[2].clone(), xs[0].clone(), xs[1].clone()];
        let fit_p = fit_srm(&permuted, &cfg).unwrap();
        // The converged objective value is permutation invariant.
        let a = *fit.objective_trace.last().unwrap();
        let b = *fit_p.objective_trace.last().unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}
