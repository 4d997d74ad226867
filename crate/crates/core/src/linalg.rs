//! Dense linear-algebra kernels shared by all factor models.
//!
//! Everything here is a pure function over immutable inputs; the matrices
//! involved are searchlight-sized (at most a few hundred rows), so clarity
//! and numerical accuracy win over raw speed.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Dense 64-bit matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Compact SVD `a = u · diag(s) · vt` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// m×r, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative, length r.
    pub singular_values: Vec<f64>,
    /// r×n, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let r = self.singular_values.len();
        let mut scaled = self.vt.clone();
        for i in 0..r {
            scaled.row_mut(i).scale_mut(self.singular_values[i]);
        }
        &self.u * scaled
    }
}

fn check_finite(a: &Matrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix contains non-finite entries".into()))
    }
}

/// Compact singular value decomposition, singular values sorted non-increasing.
pub fn compact_svd(a: &Matrix) -> Result<SvdResult> {
    check_finite(a)?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    Ok(SvdResult { u, singular_values, vt })
}

/// Moore–Penrose pseudo-inverse; singular values below `1e-12 · s_max`
/// are treated as zero.
pub fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    let svd = compact_svd(a)?;
    let s_max = svd.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = 1e-12 * s_max;
    let r = svd.singular_values.len();
    // a^+ = v · diag(1/s) · u^T
    let mut scaled_ut = svd.u.transpose();
    for i in 0..r {
        let s = svd.singular_values[i];
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        scaled_ut.row_mut(i).scale_mut(inv);
    }
    Ok(svd.vt.transpose() * scaled_ut)
}

/// Inverse matrix square root of a symmetric positive-definite matrix:
/// returns `B` with `B · a · B = I`.
pub fn sym_inv_sqrt(a: &Matrix) -> Result<Matrix> {
    check_finite(a)?;
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("sym_inv_sqrt needs a square matrix".into()));
    }
    let asym = a
        .iter()
        .zip(a.transpose().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    if asym > 1e-10 * (1.0 + a.amax()) {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    let sym = (a + a.transpose()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let max_ev = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max_ev > 0.0) || min_ev <= 1e-12 * max_ev {
        return Err(Error::SingularMatrix(format!(
            "not positive definite (eigenvalues in [{min_ev:e}, {max_ev:e}])"
        )));
    }
    let q = &eig.eigenvectors;
    let mut scaled_qt = q.transpose();
    for i in 0..eig.eigenvalues.len() {
        scaled_qt.row_mut(i).scale_mut(1.0 / eig.eigenvalues[i].sqrt());
    }
    Ok(q * scaled_qt)
}

/// Sample Pearson correlation coefficient, clamped to [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("pearson: length mismatch".into()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("pearson: need at least 2 samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVector("pearson: zero-variance input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Z-scores each row to mean 0 and unit population standard deviation.
/// Constant rows map to all-zero rows.
pub fn zscore_rows(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    let n = a.ncols() as f64;
    for mut row in out.row_iter_mut() {
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var > 0.0 {
            let inv_sd = 1.0 / var.sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv_sd;
            }
        } else {
            row.fill(0.0);
        }
    }
    out
}

/// Random matrix with orthonormal columns (QR of a seeded standard-normal
/// matrix). Requires `cols <= rows`.
pub fn random_orthonormal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    assert!(cols <= rows, "random_orthonormal: cols must be <= rows");
    let g = Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let q = qr.q();
    q.columns(0, cols).into_owned()
}

/// Orthonormalizes the columns of `w` via `w (w^T w)^{-1/2}`, falling back to
/// the SVD polar factor when `w^T w` is numerically singular.
pub fn decorrelate(w: &Matrix) -> Result<Matrix> {
    let gram = w.transpose() * w;
    match sym_inv_sqrt(&gram) {
        Ok(b) => Ok(w * b),
        Err(Error::SingularMatrix(_)) => {
            let svd = compact_svd(w)?;
            Ok(&svd.u * &svd.vt)
        }
        Err(e) => Err(e),
    }
}
