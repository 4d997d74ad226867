//! Synthetic multi-subject dataset generation with known shared responses
//! planted in chosen regions, for ground-truth testing of the whole pipeline.
//!
//! Inside each planted region, subject i's data is `Q_i S₀ + noise` with a
//! per-subject random orthonormal `Q_i` and one shared `S₀`; noise is scaled
//! so the empirical SNR matches the requested value exactly.

use crate::binio;
use crate::error::{Error, Result};
use crate::linalg::{random_orthonormal, zscore_rows, Matrix};
use crate::volume::{Mask, SceneInterval, SubjectDataset, VolumeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Laplacian,
    Gaussian,
    SinusoidMix,
}

impl SourceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "laplacian" => Ok(SourceKind::Laplacian),
            "gaussian" => Ok(SourceKind::Gaussian),
            "sinusoid-mix" => Ok(SourceKind::SinusoidMix),
            other => Err(Error::SpecError(format!("unknown source kind '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceKind::Laplacian => "laplacian",
            SourceKind::Gaussian => "gaussian",
            SourceKind::SinusoidMix => "sinusoid-mix",
        }
    }

    fn to_byte(self) -> u8 {
        match self {
            SourceKind::Laplacian => 0,
            SourceKind::Gaussian => 1,
            SourceKind::SinusoidMix => 2,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(SourceKind::Laplacian),
            1 => Ok(SourceKind::Gaussian),
            2 => Ok(SourceKind::SinusoidMix),
            other => Err(Error::FormatError(format!("unknown source kind byte {other}"))),
        }
    }
}

/// Axis-aligned planted region `[lo, hi)` with its signal parameters.
/// `snr_db` may be ±∞: `+∞` plants a noise-free signal, `−∞` pure noise.
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub k_true: usize,
    pub snr_db: f64,
    pub kind: SourceKind,
}

impl Region {
    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] < self.hi[a])
    }

    pub fn n_voxels(&self) -> usize {
        (0..3).map(|a| self.hi[a] - self.lo[a]).product()
    }
}

/// Scene structure for recall-style datasets.
#[derive(Debug, Clone, Copy)]
pub struct SceneSpec {
    pub n_scenes: usize,
    pub trs_per_scene: usize,
    /// Scene centroid power vs within-scene jitter power, in dB.
    pub snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub m: usize,
    pub dims: [usize; 3],
    pub t: usize,
    pub regions: Vec<Region>,
    pub scenes: Option<SceneSpec>,
    pub seed: u64,
    pub tr_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RegionTruth {
    pub region: Region,
    /// Data row indices of the region voxels.
    pub rows: Vec<usize>,
    /// Shared sources, k_true×t.
    pub s0: Matrix,
    /// Per-subject orthonormal mixing, n_voxels×k_true.
    pub q: Vec<Matrix>,
    /// Shared-space scene centroids (k_true×n_scenes), scene datasets only.
    pub scene_centroids: Option<Matrix>,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub regions: Vec<RegionTruth>,
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.m == 0 {
        return Err(Error::SpecError("need at least one subject".into()));
    }
    if spec.dims.iter().any(|&d| d == 0) {
        return Err(Error::SpecError("grid dims must be positive".into()));
    }
    if spec.t < 2 {
        return Err(Error::SpecError("need at least 2 TRs".into()));
    }
    if !(spec.tr_seconds > 0.0) {
        return Err(Error::SpecError("tr_seconds must be positive".into()));
    }
    for (i, r) in spec.regions.iter().enumerate() {
        if (0..3).any(|a| r.lo[a] >= r.hi[a] || r.hi[a] > spec.dims[a]) {
            return Err(Error::SpecError(format!("region {i} outside the grid")));
        }
        if r.k_true == 0 || r.k_true > r.n_voxels().min(spec.t) || r.k_true > 125 {
            return Err(Error::SpecError(format!("region {i}: infeasible k_true {}", r.k_true)));
        }
        if r.snr_db.is_nan() {
            return Err(Error::SpecError(format!("region {i}: NaN snr")));
        }
        for (j, other) in spec.regions.iter().enumerate().skip(i + 1) {
            let disjoint =
                (0..3).any(|a| r.hi[a] <= other.lo[a] || other.hi[a] <= r.lo[a]);
            if !disjoint {
                return Err(Error::SpecError(format!("regions {i} and {j} overlap")));
            }
        }
    }
    if let Some(sc) = &spec.scenes {
        if sc.n_scenes < 2 || sc.trs_per_scene == 0 {
            return Err(Error::SpecError("need at least 2 scenes with at least 1 TR".into()));
        }
        if spec.t != sc.n_scenes * sc.trs_per_scene {
            return Err(Error::SpecError(format!(
                "t={} must equal n_scenes*trs_per_scene={}",
                spec.t,
                sc.n_scenes * sc.trs_per_scene
            )));
        }
    }
    Ok(())
}

fn laplace(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -(1.0 / 2f64.sqrt()) * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn sources(kind: SourceKind, k: usize, t: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let raw = match kind {
        SourceKind::Laplacian => Matrix::from_fn(k, t, |_, _| laplace(rng)),
        SourceKind::Gaussian => Matrix::from_fn(k, t, |_, _| rng.sample(StandardNormal)),
        SourceKind::SinusoidMix => {
            let mut m = Matrix::zeros(k, t);
            for i in 0..k {
                let params: Vec<(f64, f64, f64)> = (0..3)
                    .map(|_| {
                        (
                            rng.random_range(1.0..20.0),
                            rng.random_range(0.0..TAU),
                            rng.random_range(0.5..1.5),
                        )
                    })
                    .collect();
                for j in 0..t {
                    let x = j as f64 / t as f64;
                    let mut v: f64 = params
                        .iter()
                        .map(|(f, ph, a)| a * (TAU * f * x + ph).sin())
                        .sum();
                    v += 0.1 * rng.sample::<f64, _>(StandardNormal);
                    m[(i, j)] = v;
                }
            }
            m
        }
    };
    zscore_rows(&raw)
}

/// Scene-structured shared sources: per-scene centroid plus within-scene
/// jitter at the requested centroid-to-jitter ratio.
fn scene_sources(
    k: usize,
    sc: &SceneSpec,
    rng: &mut ChaCha8Rng,
) -> (Matrix, Matrix) {
    let centroids = Matrix::from_fn(k, sc.n_scenes, |_, _| rng.sample(StandardNormal));
    let t = sc.n_scenes * sc.trs_per_scene;
    let jitter_scale = if sc.snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-sc.snr_db / 20.0)
    };
    let mut s0 = Matrix::zeros(k, t);
    for scene in 0..sc.n_scenes {
        for rep in 0..sc.trs_per_scene {
            let col = scene * sc.trs_per_scene + rep;
            for i in 0..k {
                s0[(i, col)] = centroids[(i, scene)]
                    + jitter_scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    (s0, centroids)
}

fn power(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64
}

struct RegionLayout {
    rows: Vec<usize>,
    q: Vec<Matrix>,
}

fn build_dataset(
    spec: &SynthSpec,
    grid: &VolumeGrid,
    layouts: &[RegionLayout],
    scene_spec: Option<&SceneSpec>,
    rng: &mut ChaCha8Rng,
) -> Result<(SubjectDataset, Vec<RegionTruth>)> {
    let v = grid.n_voxels();
    let t = spec.t;
    let mut subjects: Vec<Matrix> =
        (0..spec.m).map(|_| Matrix::from_fn(v, t, |_, _| rng.sample(StandardNormal))).collect();
    let mut truths = Vec::with_capacity(spec.regions.len());
    for (region, layout) in spec.regions.iter().zip(layouts) {
        let (s0, centroids) = match scene_spec {
            Some(sc) => {
                let (s0, c) = scene_sources(region.k_true, sc, rng);
                (s0, Some(c))
            }
            None => (sources(region.kind, region.k_true, t, rng), None),
        };
        for (subject, q) in subjects.iter_mut().zip(&layout.q) {
            let signal = q * &s0;
            let p_sig = power(&signal);
            // Gather the pre-generated noise for this region's rows.
            let mut noise = Matrix::zeros(layout.rows.len(), t);
            for (i, &row) in layout.rows.iter().enumerate() {
                noise.row_mut(i).copy_from(&subject.row(row));
            }
            let block = if region.snr_db == f64::NEG_INFINITY {
                noise
            } else {
                let noise_scale = if region.snr_db == f64::INFINITY {
                    0.0
                } else {
                    let target = p_sig * 10f64.powf(-region.snr_db / 10.0);
                    let p_noise = power(&noise);
                    if p_noise > 0.0 { (target / p_noise).sqrt() } else { 0.0 }
                };
                signal + noise.scale(noise_scale)
            };
            for (i, &row) in layout.rows.iter().enumerate() {
                subject.row_mut(row).copy_from(&block.row(i));
            }
        }
        truths.push(RegionTruth {
            region: *region,
            rows: layout.rows.clone(),
            s0,
            q: layout.q.clone(),
            scene_centroids: centroids,
        });
    }
    let labels = scene_spec.map(|sc| {
        (0..sc.n_scenes)
            .map(|s| SceneInterval {
                start_tr: (s * sc.trs_per_scene) as u32,
                scene_id: s as u32,
            })
            .collect()
    });
    let ds = SubjectDataset::new(subjects, grid.clone(), spec.tr_seconds, labels)?;
    Ok((ds, truths))
}

fn region_layouts(
    spec: &SynthSpec,
    grid: &VolumeGrid,
    rng: &mut ChaCha8Rng,
) -> Vec<RegionLayout> {
    spec.regions
        .iter()
        .map(|region| {
            let mut rows = Vec::with_capacity(region.n_voxels());
            for z in region.lo[2]..region.hi[2] {
                for y in region.lo[1]..region.hi[1] {
                    for x in region.lo[0]..region.hi[0] {
                        rows.push(grid.row(x, y, z).expect("full mask"));
                    }
                }
            }
            let q = (0..spec.m)
                .map(|_| random_orthonormal(rows.len(), region.k_true, rng))
                .collect();
            RegionLayout { rows, q }
        })
        .collect()
}

/// Generates one dataset. With `spec.scenes` set, the dataset carries scene
/// labels and scene-structured shared sources.
pub fn generate(spec: &SynthSpec) -> Result<(SubjectDataset, GroundTruth)> {
    validate(spec)?;
    let grid = VolumeGrid::from_mask(&Mask::all_true(spec.dims))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layouts = region_layouts(spec, &grid, &mut rng);
    let (ds, regions) = build_dataset(spec, &grid, &layouts, spec.scenes.as_ref(), &mut rng)?;
    Ok((ds, GroundTruth { regions }))
}

/// Generates a training dataset plus a scene-labeled recall dataset that
/// share the same per-subject mixing, mirroring a movie→recall design.
/// `spec.t` is the training length; `spec.scenes` defines the recall run.
pub fn generate_with_recall(
    spec: &SynthSpec,
) -> Result<(SubjectDataset, SubjectDataset, GroundTruth)> {
    let scenes = spec
        .scenes
        .ok_or_else(|| Error::SpecError("generate_with_recall needs a scene structure".into()))?;
    let movie_spec = SynthSpec { scenes: None, ..spec.clone() };
    validate(&movie_spec)?;
    let recall_spec = SynthSpec {
        t: scenes.n_scenes * scenes.trs_per_scene,
        ..spec.clone()
    };
    validate(&recall_spec)?;
    let grid = VolumeGrid::from_mask(&Mask::all_true(spec.dims))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layouts = region_layouts(spec, &grid, &mut rng);
    let (movie, movie_truth) = build_dataset(&movie_spec, &grid, &layouts, None, &mut rng)?;
    let (recall, recall_truth) =
        build_dataset(&recall_spec, &grid, &layouts, Some(&scenes), &mut rng)?;
    // Report movie sources plus the recall scene centroids.
    let mut regions = movie_truth;
    for (r, rt) in regions.iter_mut().zip(recall_truth) {
        r.scene_centroids = rt.scene_centroids;
    }
    Ok((movie, recall, GroundTruth { regions }))
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, b"MSRG1")?;
        binio::write_u32(w, self.regions.len() as u32)?;
        for r in &self.regions {
            for a in 0..3 {
                binio::write_u32(w, r.region.lo[a] as u32)?;
            }
            for a in 0..3 {
                binio::write_u32(w, r.region.hi[a] as u32)?;
            }
            binio::write_u32(w, r.region.k_true as u32)?;
            binio::write_f64(w, r.region.snr_db)?;
            w.write_all(&[r.region.kind.to_byte()])?;
            binio::write_u32(w, r.rows.len() as u32)?;
            for &row in &r.rows {
                binio::write_u32(w, row as u32)?;
            }
            binio::write_u32(w, r.s0.nrows() as u32)?;
            binio::write_u32(w, r.s0.ncols() as u32)?;
            binio::write_matrix_body(w, &r.s0)?;
            binio::write_u32(w, r.q.len() as u32)?;
            for q in &r.q {
                binio::write_matrix_body(w, q)?;
            }
            match &r.scene_centroids {
                Some(c) => {
                    w.write_all(&[1])?;
                    binio::write_u32(w, c.ncols() as u32)?;
                    binio::write_matrix_body(w, c)?;
                }
                None => w.write_all(&[0])?,
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read(&mut r)
    }

    pub fn read<R: Read>(rd: &mut R) -> Result<Self> {
        binio::expect_magic(rd, b"MSRG1")?;
        let n = binio::read_u32(rd)? as usize;
        let mut regions = Vec::with_capacity(n);
        for _ in 0..n {
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for v in lo.iter_mut() {
                *v = binio::read_u32(rd)? as usize;
            }
            for v in hi.iter_mut() {
                *v = binio::read_u32(rd)? as usize;
            }
            let k_true = binio::read_u32(rd)? as usize;
            let snr_db = binio::read_f64(rd)?;
            let mut kind_byte = [0u8; 1];
            rd.read_exact(&mut kind_byte)
                .map_err(|_| Error::FormatError("truncated kind".into()))?;
            let kind = SourceKind::from_byte(kind_byte[0])?;
            let n_rows = binio::read_u32(rd)? as usize;
            let mut rows = Vec::with_capacity(n_rows);
            for _ in 0..n_rows {
                rows.push(binio::read_u32(rd)? as usize);
            }
            let k = binio::read_u32(rd)? as usize;
            let t = binio::read_u32(rd)? as usize;
            let s0 = binio::read_matrix_body(rd, k, t)?;
            let m = binio::read_u32(rd)? as usize;
            let mut q = Vec::with_capacity(m);
            for _ in 0..m {
                q.push(binio::read_matrix_body(rd, n_rows, k)?);
            }
            let mut flag = [0u8; 1];
            rd.read_exact(&mut flag)
                .map_err(|_| Error::FormatError("truncated centroid flag".into()))?;
            let scene_centroids = if flag[0] == 1 {
                let n_scenes = binio::read_u32(rd)? as usize;
                Some(binio::read_matrix_body(rd, k, n_scenes)?)
            } else {
                None
            };
            regions.push(RegionTruth {
                region: Region { lo, hi, k_true, snr_db, kind },
                rows,
                s0,
                q,
                scene_centroids,
            });
        }
        Ok(GroundTruth { regions })
    }
}
