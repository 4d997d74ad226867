//! PCA shared-response model: truncated SVD of the stacked subject data.

use super::{validate_inputs, FactorFit, FitConfig, ModelId};
use crate::error::{Error, Result};
use crate::linalg::{compact_svd, Matrix};

/// Stacks the subjects along the spatial axis, takes the first k left
/// singular vectors as W, and partitions W into per-subject blocks.
/// The final objective-trace entry is the residual `‖X − W S‖_F²`, which
/// equals the sum of trailing squared singular values.
pub fn fit_pca(xs: &[Matrix], cfg: &FitConfig) -> Result<FactorFit> {
    let (m, v, t) = validate_inputs(xs, 1)?;
    if cfg.k > (m * v).min(t) {
        return Err(Error::RankError(format!(
            "k={} exceeds min(mv={}, t={})",
            cfg.k,
            m * v,
            t
        )));
    }
    let stacked = stack_rows(xs);
    let svd = compact_svd(&stacked)?;
    let w_full = svd.u.columns(0, cfg.k).into_owned();
    let s = w_full.transpose() * &stacked;
    let residual: f64 = svd.singular_values[cfg.k..].iter().map(|x| x * x).sum();
    let w = (0..m).map(|i| w_full.rows(i * v, v).into_owned()).collect();
    Ok(FactorFit {
        model: ModelId::Pca,
        w,
        s,
        objective_trace: vec![residual],
        converged: true,
        iterations: 1,
    })
}

pub(crate) fn stack_rows(xs: &[Matrix]) -> Matrix {
    let v = xs[0].nrows();
    let t = xs[0].ncols();
    let mut stacked = Matrix::zeros(v * xs.len(), t);
    for (i, x) in xs.iter().enumerate() {
        stacked.rows_mut(i * v, v).copy_from(x);
    }
    stacked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_rank_k_data_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_orthonormal(8, 3, &mut rng);
        let s = Matrix::from_fn(3, 12, |_, _| rng.random_range(-1.0..1.0));
        let x = &w * &s;
        let fit = fit_pca(&[x.clone()], &FitConfig::new(3)).unwrap();
        assert!(fit.objective_trace[0] < 1e-16);
        let recon = &fit.w[0] * &fit.s;
        assert!((recon - x).amax() < 1e-10);
    }

    #[test]
    fn residual_is_trailing_singular_value() {
        // diag(3,2,1) padded with a zero time column; k=2 leaves 1^2.
        let x = Matrix::from_row_slice(
            3,
            4,
            &[3.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        let fit = fit_pca(&[x], &FitConfig::new(2)).unwrap();
        assert!((fit.objective_trace[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_matches_svd_tail_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Matrix> =
            (0..3).map(|_| Matrix::from_fn(6, 10, |_, _| rng.random_range(-1.0..1.0))).collect();
        let k = 4;
        let fit = fit_pca(&xs, &FitConfig::new(k)).unwrap();
        let stacked = stack_rows(&xs);
        let svd = compact_svd(&stacked).unwrap();
        let tail: f64 = svd.singular_values[k..].iter().map(|s| s * s).sum();
        assert!((fit.objective_trace[0] - tail).abs() < 1e-8);
        // Residual recomputed directly agrees too.
        let mut recon = Matrix::zeros(18, 10);
        for (i, w) in fit.w.iter().enumerate() {
            recon.rows_mut(i * 6, 6).copy_from(&(w * &fit.s));
        }
        let direct = (stacked - recon).norm().powi(2);
        assert!((fit.objective_trace[0] - direct).abs() < 1e-8);
    }

    #[test]
    fn infeasible_k_is_rank_error() {
        let x = Matrix::zeros(4, 3);
        assert!(matches!(
            fit_pca(&[x], &FitConfig::new(4)),
            Err(Error::RankError(_))
        ));
    }
}
