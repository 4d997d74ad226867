//! Shared-response factor models behind one uniform fit/project interface.
//!
//! Every model factorizes per-subject data `X_i` (v×t) into subject maps
//! `W_i` (v×k) and a single shared response `S` (k×t).

mod ica;
mod pca;
mod srgica;
mod srica;
mod srm;

pub use ica::fit_ica;
pub use pca::fit_pca;
pub use srgica::fit_srgica;
pub use srica::fit_srica;
pub use srm::fit_srm;

use crate::binio;
use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, Matrix};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    Pca,
    Srm,
    Ica,
    SrIca,
    SrGica,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::Pca => "pca",
            ModelId::Srm => "srm",
            ModelId::Ica => "ica",
            ModelId::SrIca => "srica",
            ModelId::SrGica => "srgica",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ModelId::Pca),
            "srm" => Ok(ModelId::Srm),
            "ica" => Ok(ModelId::Ica),
            "srica" | "sr-ica" => Ok(ModelId::SrIca),
            "srgica" | "sr-gica" => Ok(ModelId::SrGica),
            other => Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            ModelId::Pca => 0,
            ModelId::Srm => 1,
            ModelId::Ica => 2,
            ModelId::SrIca => 3,
            ModelId::SrGica => 4,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ModelId::Pca),
            1 => Ok(ModelId::Srm),
            2 => Ok(ModelId::Ica),
            3 => Ok(ModelId::SrIca),
            4 => Ok(ModelId::SrGica),
            other => Err(Error::FormatError(format!("unknown model byte {other}"))),
        }
    }

    /// Models whose subject maps carry orthonormal columns, so projection
    /// uses the transpose instead of the pseudo-inverse.
    pub fn orthonormal_maps(&self) -> bool {
        matches!(self, ModelId::Srm | ModelId::SrIca)
    }
}

/// Nonquadratic contrast used by the ICA-family negentropy surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contrast {
    Logcosh,
    Cube,
}

impl Contrast {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logcosh" => Ok(Contrast::Logcosh),
            "cube" => Ok(Contrast::Cube),
            other => Err(Error::InvalidInput(format!("unknown contrast '{other}'"))),
        }
    }

    /// g, the derivative of the contrast function G.
    pub(crate) fn g(&self, x: f64) -> f64 {
        match self {
            Contrast::Logcosh => x.tanh(),
            Contrast::Cube => x * x * x,
        }
    }

    /// g', the second derivative of G.
    pub(crate) fn g_prime(&self, x: f64) -> f64 {
        match self {
            Contrast::Logcosh => 1.0 - x.tanh().powi(2),
            Contrast::Cube => 3.0 * x * x,
        }
    }

    /// G itself, for the objective trace.
    pub(crate) fn big_g(&self, x: f64) -> f64 {
        match self {
            Contrast::Logcosh => x.cosh().ln(),
            Contrast::Cube => 0.25 * x.powi(4),
        }
    }

    /// E[G(N(0,1))], the Gaussian baseline of the negentropy surrogate.
    pub(crate) fn gaussian_expectation(&self) -> f64 {
        match self {
            Contrast::Logcosh => 0.374_567_207_491_293_5,
            Contrast::Cube => 0.75,
        }
    }
}

/// Configuration shared by all fit functions.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold τ.
    pub tol: f64,
    pub seed: u64,
    pub contrast: Contrast,
}

impl FitConfig {
    pub fn new(k: usize) -> Self {
        FitConfig { k, max_iter: 100, tol: 1e-6, seed: 0, contrast: Contrast::Logcosh }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A fitted factor model: subject maps plus the shared response.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub model: ModelId,
    /// Subject maps W_i, each v×k.
    pub w: Vec<Matrix>,
    /// Shared response, k×t.
    pub s: Matrix,
    /// Per-iteration objective values (iterative models only).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FactorFit {
    pub fn n_subjects(&self) -> usize {
        self.w.len()
    }

    pub fn k(&self) -> usize {
        self.s.nrows()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        binio::write_magic(out, b"MSRF1")?;
        out.write_all(&[self.model.to_byte()])?;
        binio::write_u32(out, self.w.len() as u32)?;
        binio::write_u32(out, self.w[0].nrows() as u32)?;
        binio::write_u32(out, self.k() as u32)?;
        binio::write_u32(out, self.s.ncols() as u32)?;
        for wi in &self.w {
            binio::write_matrix_body(out, wi)?;
        }
        binio::write_matrix_body(out, &self.s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read(&mut r)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        binio::expect_magic(r, b"MSRF1")?;
        let mut model_byte = [0u8; 1];
        r.read_exact(&mut model_byte)
            .map_err(|_| Error::FormatError("truncated model id".into()))?;
        let model = ModelId::from_byte(model_byte[0])?;
        let m = binio::read_u32(r)? as usize;
        let v = binio::read_u32(r)? as usize;
        let k = binio::read_u32(r)? as usize;
        let t = binio::read_u32(r)? as usize;
        let mut w = Vec::with_capacity(m);
        for _ in 0..m {
            w.push(binio::read_matrix_body(r, v, k)?);
        }
        let s = binio::read_matrix_body(r, k, t)?;
        Ok(FactorFit { model, w, s, objective_trace: Vec::new(), converged: true, iterations: 0 })
    }
}

/// Projects held-out data for one subject into the shared space:
/// `W_i^T x` for orthonormal-map models, `W_i^+ x` otherwise.
pub fn project(fit: &FactorFit, x_new: &Matrix, subject: usize) -> Result<Matrix> {
    let wi = fit
        .w
        .get(subject)
        .ok_or_else(|| Error::IndexError(format!("subject {subject} out of range")))?;
    if x_new.nrows() != wi.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "x_new has {} rows, expected {}",
            x_new.nrows(),
            wi.nrows()
        )));
    }
    if fit.model.orthonormal_maps() {
        Ok(wi.transpose() * x_new)
    } else {
        Ok(pseudo_inverse(wi)? * x_new)
    }
}

/// Fits `model` on per-subject matrices with the given config. SR-GICA uses
/// `k1 = v` (the searchlight voxel count) and `k2 = cfg.k`.
pub fn fit(model: ModelId, xs: &[Matrix], cfg: &FitConfig) -> Result<FactorFit> {
    match model {
        ModelId::Pca => fit_pca(xs, cfg),
        ModelId::Srm => fit_srm(xs, cfg),
        ModelId::Ica => fit_ica(xs, cfg),
        ModelId::SrIca => fit_srica(xs, cfg),
        ModelId::SrGica => {
            let v = xs.first().map(|x| x.nrows()).unwrap_or(0);
            let t = xs.first().map(|x| x.ncols()).unwrap_or(0);
            fit_srgica(xs, cfg, v.min(t), cfg.k)
        }
    }
}

pub(crate) fn validate_inputs(xs: &[Matrix], k: usize) -> Result<(usize, usize, usize)> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("need at least one subject".into()));
    }
    let v = xs[0].nrows();
    let t = xs[0].ncols();
    for (i, x) in xs.iter().enumerate() {
        if x.nrows() != v || x.ncols() != t {
            return Err(Error::ShapeMismatch(format!(
                "subject {i} is {}x{}, expected {v}x{t}",
                x.nrows(),
                x.ncols()
            )));
        }
        if !x.iter().all(|e| e.is_finite()) {
            return Err(Error::InvalidInput(format!("subject {i} has non-finite entries")));
        }
    }
    if k == 0 || k > v.min(t) {
        return Err(Error::RankError(format!("k={k} infeasible for {v}x{t} data")));
    }
    Ok((xs.len(), v, t))
}
