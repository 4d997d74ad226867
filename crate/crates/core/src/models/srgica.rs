//! Shared Response Group ICA: per-subject spatial PCA, a second PCA on the
//! stacked projections, then ICA, with subject maps `W_i = F_i G_i A`.

use super::ica::{canonicalize, fastica_symmetric, whiten};
use super::{validate_inputs, FactorFit, FitConfig, ModelId};
use crate::error::{Error, Result};
use crate::linalg::{compact_svd, Matrix};

pub fn fit_srgica(xs: &[Matrix], cfg: &FitConfig, k1: usize, k2: usize) -> Result<FactorFit> {
    let (m, v, t) = validate_inputs(xs, 1)?;
    if k1 == 0 || k1 > v.min(t) {
        return Err(Error::RankError(format!("k1={k1} infeasible for {v}x{t} data")));
    }
    if k2 == 0 || k2 > (m * k1).min(t) {
        return Err(Error::RankError(format!(
            "k2={k2} exceeds min(m*k1={}, t={t})",
            m * k1
        )));
    }

    // First PCA, per subject: X_i = F_i P_i.
    let mut fs = Vec::with_capacity(m);
    let mut stacked_p = Matrix::zeros(m * k1, t);
    for (i, x) in xs.iter().enumerate() {
        let svd = compact_svd(x)?;
        let f = svd.u.columns(0, k1).into_owned();
        stacked_p.rows_mut(i * k1, k1).copy_from(&(f.transpose() * x));
        fs.push(f);
    }

    // Second PCA on the stack: P = G Y.
    let svd2 = compact_svd(&stacked_p)?;
    if svd2.singular_values[k2 - 1] <= 1e-12 * svd2.singular_values[0] {
        return Err(Error::RankError(format!("stacked projections have rank below k2={k2}")));
    }
    let g = svd2.u.columns(0, k2).into_owned();
    let y = g.transpose() * &stacked_p;

    // ICA on Y: Y = A S.
    let (wh, z) = whiten(&y, k2)?;
    let mut ica_cfg = cfg.clone();
    ica_cfg.k = k2;
    let res = fastica_symmetric(&z, &ica_cfg, None)?;
    let mut s = &res.unmixing * &z;
    let mut a = wh.basis.clone();
    for (j, &sc) in wh.scale.iter().enumerate() {
        a.column_mut(j).scale_mut(sc);
    }
    let a = a * res.unmixing.transpose();

    // W_i = F_i G_i A.
    let mut w: Vec<Matrix> =
        (0..m).map(|i| &fs[i] * g.rows(i * k1, k1) * &a).collect();
    let energy: Vec<f64> = (0..k2).map(|j| a.column(j).norm_squared()).collect();
    canonicalize(&mut w, &mut s, &energy);
    Ok(FactorFit {
        model: ModelId::SrGica,
        w,
        s,
        objective_trace: res.objective_trace,
        converged: res.converged,
        iterations: res.iterations,
    })
}
