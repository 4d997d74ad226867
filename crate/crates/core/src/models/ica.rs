//! FastICA with symmetric decorrelation, plus the whitening and
//! canonicalization helpers shared by the ICA-family models.

use super::{validate_inputs, Contrast, FactorFit, FitConfig, ModelId};
use crate::error::{Error, Result};
use crate::linalg::{compact_svd, decorrelate, random_orthonormal, Matrix};
use crate::models::pca::stack_rows;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// PCA whitening of a v×t matrix down to k dimensions.
///
/// `z = diag(1/scale) · basis^T · x` satisfies `z z^T / t = I`.
pub(crate) struct Whitening {
    /// v×k, orthonormal columns (leading left singular vectors).
    pub basis: Matrix,
    /// Per-component standard deviations σ_j / √t.
    pub scale: Vec<f64>,
}

pub(crate) fn whiten(x: &Matrix, k: usize) -> Result<(Whitening, Matrix)> {
    let t = x.ncols();
    if k > x.nrows().min(t) {
        return Err(Error::RankError(format!(
            "cannot whiten {}x{} data to {k} dimensions",
            x.nrows(),
            t
        )));
    }
    let svd = compact_svd(x)?;
    let s_max = svd.singular_values[0];
    if svd.singular_values[k - 1] <= 1e-12 * s_max {
        return Err(Error::RankError(format!(
            "data rank below k={k} (singular value {:e})",
            svd.singular_values[k - 1]
        )));
    }
    let basis = svd.u.columns(0, k).into_owned();
    let sqrt_t = (t as f64).sqrt();
    let scale: Vec<f64> = svd.singular_values[..k].iter().map(|s| s / sqrt_t).collect();
    // z = diag(1/scale) basis^T x = sqrt(t) · Vt[..k]
    let mut z = svd.vt.rows(0, k).into_owned();
    z.scale_mut(sqrt_t);
    Ok((Whitening { basis, scale }, z))
}

pub(crate) struct FastIcaResult {
    /// k×k orthonormal unmixing matrix; sources are `u · z`.
    pub unmixing: Matrix,
    pub converged: bool,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

/// Symmetric fixed-point FastICA on whitened data `z` (k×t).
pub(crate) fn fastica_symmetric(
    z: &Matrix,
    cfg: &FitConfig,
    init: Option<Matrix>,
) -> Result<FastIcaResult> {
    let k = z.nrows();
    let t = z.ncols() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u = match init {
        Some(m) => m,
        None => random_orthonormal(k, k, &mut rng).transpose(),
    };
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();

    for n in 1..=cfg.max_iter {
        iterations = n;
        let s = &u * z;
        trace.push(negentropy_surrogate(&s, cfg.contrast));
        let u_new = fixed_point_step(&u, &s, z, cfg.contrast, t)?;
        // max |1 - |diag(U_new U^T)||: each source direction stabilized.
        let prod = &u_new * u.transpose();
        let delta = (0..k)
            .map(|i| (1.0 - prod[(i, i)].abs()).abs())
            .fold(0.0f64, f64::max);
        u = u_new;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(FastIcaResult { unmixing: u, converged, iterations, objective_trace: trace })
}

/// One symmetric FastICA update with decorrelation:
/// `U ← (g(S) Z^T)/t − diag(mean_t g'(S)) U`, then orthonormalization.
pub(crate) fn fixed_point_step(
    u: &Matrix,
    s: &Matrix,
    z: &Matrix,
    contrast: Contrast,
    t: f64,
) -> Result<Matrix> {
    let g_s = s.map(|v| contrast.g(v));
    let gp_means: Vec<f64> =
        s.row_iter().map(|row| row.iter().map(|&v| contrast.g_prime(v)).sum::<f64>() / t).collect();
    let mut u_new = (&g_s * z.transpose()).scale(1.0 / t);
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            u_new[(i, j)] -= gp_means[i] * u[(i, j)];
        }
    }
    // Symmetric decorrelation, operating on rows.
    Ok(decorrelate(&u_new.transpose())?.transpose())
}

fn negentropy_surrogate(s: &Matrix, contrast: Contrast) -> f64 {
    let t = s.ncols() as f64;
    let base = contrast.gaussian_expectation();
    let mut total = 0.0;
    for row in s.row_iter() {
        let e_g = row.iter().map(|&v| contrast.big_g(v)).sum::<f64>() / t;
        total += (e_g - base).powi(2);
    }
    total / s.nrows() as f64
}

/// Flips each shared-response row to non-negative skewness and orders rows
/// by descending `energy`, applying the same permutation and signs to every
/// subject map column. Makes ICA-family outputs reproducible despite the
/// inherent sign/permutation indeterminacy.
pub(crate) fn canonicalize(w: &mut [Matrix], s: &mut Matrix, energy: &[f64]) {
    let k = s.nrows();
    for i in 0..k {
        let row = s.row(i);
        let n = row.len() as f64;
        let skew = row.iter().map(|&v| v * v * v).sum::<f64>() / n;
        if skew < 0.0 {
            s.row_mut(i).scale_mut(-1.0);
            for wi in w.iter_mut() {
                wi.column_mut(i).scale_mut(-1.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| energy[b].partial_cmp(&energy[a]).unwrap().then(a.cmp(&b)));
    let s_old = s.clone();
    let w_old: Vec<Matrix> = w.to_vec();
    for (new_i, &old_i) in order.iter().enumerate() {
        s.row_mut(new_i).copy_from(&s_old.row(old_i));
        for (wi, wo) in w.iter_mut().zip(&w_old) {
            wi.column_mut(new_i).copy_from(&wo.column(old_i));
        }
    }
}

/// FastICA on the stacked subject data: whiten `[X_1; …; X_m]` to k
/// dimensions, run the symmetric fixed point, and partition the resulting
/// mixing matrix into subject blocks. Rows of S have unit mean-square
/// energy (unit variance when the input rows are centered).
pub fn fit_ica(xs: &[Matrix], cfg: &FitConfig) -> Result<FactorFit> {
    let (m, v, _t) = validate_inputs(xs, 1)?;
    let stacked = stack_rows(xs);
    if cfg.k == 0 || cfg.k > (m * v).min(stacked.ncols()) {
        return Err(Error::RankError(format!(
            "k={} exceeds min(mv={}, t={})",
            cfg.k,
            m * v,
            stacked.ncols()
        )));
    }
    let (wh, z) = whiten(&stacked, cfg.k)?;
    let res = fastica_symmetric(&z, cfg, None)?;
    let mut s = &res.unmixing * &z;
    // De-whitened mixing: X ≈ basis·diag(scale)·U^T · S.
    let mut w_full = wh.basis.clone();
    for (j, &sc) in wh.scale.iter().enumerate() {
        w_full.column_mut(j).scale_mut(sc);
    }
    let w_full = w_full * res.unmixing.transpose();
    let mut w: Vec<Matrix> = (0..m).map(|i| w_full.rows(i * v, v).into_owned()).collect();
    // Pre-whitening projection variance of each component.
    let energy: Vec<f64> = (0..cfg.k).map(|j| w_full.column(j).norm_squared()).collect();
    canonicalize(&mut w, &mut s, &energy);
    Ok(FactorFit {
        model: ModelId::Ica,
        w,
        s,
        objective_trace: res.objective_trace,
        converged: res.converged,
        iterations: res.iterations,
    })
}
