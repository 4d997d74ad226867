//! Shared Response ICA: block-structured FastICA that keeps one subject map
//! per subject while learning a single shared response.
//!
//! Each subject is whitened to k dimensions up front; the iteration then
//! alternates a shared-response average with per-subject fixed-point updates
//! followed by symmetric decorrelation. It stops once every subject map has
//! stabilized: `max |W_i^{n,T} W_i^{n-1} − I| < τ` for all i.

use super::ica::{canonicalize, fixed_point_step, whiten, Whitening};
use super::{validate_inputs, FactorFit, FitConfig, ModelId};
use crate::error::Result;
use crate::linalg::{random_orthonormal, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fit_srica(xs: &[Matrix], cfg: &FitConfig) -> Result<FactorFit> {
    let (m, _v, t) = validate_inputs(xs, cfg.k)?;
    let k = cfg.k;
    let mut whitenings: Vec<Whitening> = Vec::with_capacity(m);
    let mut zs: Vec<Matrix> = Vec::with_capacity(m);
    for x in xs {
        let (wh, z) = whiten(x, k)?;
        whitenings.push(wh);
        zs.push(z);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Whitened-space subject maps, k×k with orthonormal columns.
    let mut w: Vec<Matrix> = (0..m).map(|_| random_orthonormal(k, k, &mut rng)).collect();
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let t_f = t as f64;

    for n in 1..=cfg.max_iter {
        iterations = n;
        // Orthonormal maps make the pseudo-inverse a transpose.
        let s = shared_response(&w, &zs);
        trace.push(surrogate(&s, cfg));
        let mut max_delta = 0.0f64;
        for (wi, zi) in w.iter_mut().zip(&zs) {
            let u_prev = wi.transpose();
            let u_new = fixed_point_step(&u_prev, &s, zi, cfg.contrast, t_f)?;
            let w_new = u_new.transpose();
            let drift = (w_new.transpose() * &*wi - Matrix::identity(k, k)).amax();
            max_delta = max_delta.max(drift);
            *wi = w_new;
        }
        if max_delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let mut s = shared_response(&w, &zs);
    // De-whiten through the orthonormal PCA basis only, preserving the
    // orthonormal-columns contract on the returned maps.
    let mut w_out: Vec<Matrix> =
        whitenings.iter().zip(&w).map(|(wh, wi)| &wh.basis * wi).collect();
    // Mean pre-whitening projection variance per component.
    let energy: Vec<f64> = (0..k)
        .map(|j| {
            whitenings
                .iter()
                .zip(&w)
                .map(|(wh, wi)| {
                    wi.column(j)
                        .iter()
                        .zip(&wh.scale)
                        .map(|(&c, &sc)| (c * sc) * (c * sc))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / m as f64
        })
        .collect();
    canonicalize(&mut w_out, &mut s, &energy);
    Ok(FactorFit {
        model: ModelId::SrIca,
        w: w_out,
        s,
        objective_trace: trace,
        converged,
        iterations,
    })
}

fn shared_response(w: &[Matrix], zs: &[Matrix]) -> Matrix {
    let mut s = Matrix::zeros(w[0].ncols(), zs[0].ncols());
    for (wi, zi) in w.iter().zip(zs) {
        s += wi.transpose() * zi;
    }
    s.scale(1.0 / w.len() as f64)
}

fn surrogate(s: &Matrix, cfg: &FitConfig) -> f64 {
    let t = s.ncols() as f64;
    let base = cfg.contrast.gaussian_expectation();
    s.row_iter()
        .map(|row| {
            let e_g = row.iter().map(|&v| cfg.contrast.big_g(v)).sum::<f64>() / t;
            (e_g - base).powi(2)
        })
        .sum::<f64>()
        / s.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::super::ica::test_support::{laplacian_sources, matched_abs_correlations};
    use super::super::{fit_ica, FitConfig};
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_subject_matches_plain_fastica_quality() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s0 = laplacian_sources(3, 3000, &mut rng);
        let q = random_orthonormal(3, 3, &mut rng);
        let x = &q * &s0; // already whitened up to rotation
        let mut cfg = FitConfig::new(3).with_seed(11);
        cfg.max_iter = 400;
        let sr = fit_srica(&[x.clone()], &cfg).unwrap();
        let plain = fit_ica(&[x], &cfg).unwrap();
        let sr_mean = matched_abs_correlations(&sr.s, &s0).iter().sum::<f64>() / 3.0;
        let plain_mean = matched_abs_correlations(&plain.s, &s0).iter().sum::<f64>() / 3.0;
        assert!((sr_mean - plain_mean).abs() < 0.05, "sr={sr_mean} plain={plain_mean}");
        assert!(sr_mean > 0.9);
    }

    #[test]
    fn recovers_shared_sources_across_subjects() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s0 = laplacian_sources(4, 2500, &mut rng);
        let xs: Vec<Matrix> = (0..3)
            .map(|_| {
                let q = random_orthonormal(20, 4, &mut rng);
                q * &s0
            })
            .collect();
        let mut cfg = FitConfig::new(4).with_seed(13);
        cfg.max_iter = 5000;
        let fit = fit_srica(&xs, &cfg).unwrap();
        let matched = matched_abs_correlations(&fit.s, &s0);
        let mean = matched.iter().sum::<f64>() / matched.len() as f64;
        println!(
            "converged={} iters={} matched={:?}",
            fit.converged, fit.iterations, matched
        );
        assert!(mean > 0.95, "mean matched correlation {mean}");
    }

    #[test]
    fn converged_maps_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s0 = laplacian_sources(3, 1200, &mut rng);
        let xs: Vec<Matrix> = (0..2)
            .map(|_| {
                let q = random_orthonormal(10, 3, &mut rng);
                q * &s0
            })
            .collect();
        let fit = fit_srica(&xs, &FitConfig::new(3).with_seed(15)).unwrap();
        for wi in &fit.w {
            let gram = wi.transpose() * wi;
            assert!((gram - Matrix::identity(3, 3)).amax() < 1e-6);
        }
    }
}
