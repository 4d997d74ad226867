//! 4D volume data model: masking, the binary dataset format, downsampling,
//! and searchlight neighborhood indexing.
//!
//! Flat voxel indices use x-fastest order: `flat = x + nx*(y + ny*z)`.

use crate::binio;
use crate::error::{Error, Result};
use crate::linalg::{zscore_rows, Matrix};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Boolean per-voxel mask over a 3D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub dims: [usize; 3],
    pub data: Vec<bool>,
}

impl Mask {
    pub fn all_true(dims: [usize; 3]) -> Self {
        Mask { dims, data: vec![true; dims[0] * dims[1] * dims[2]] }
    }

    pub fn flat(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.flat(x, y, z)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Bijection between in-mask 3D coordinates and flat data row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    pub dims: [usize; 3],
    /// Flat voxel ids of in-mask voxels, in data row order.
    pub coords: Vec<u32>,
    /// Per flat voxel id, the data row index if in-mask.
    row_of: Vec<Option<u32>>,
}

impl VolumeGrid {
    pub fn from_mask(mask: &Mask) -> Result<Self> {
        let coords: Vec<u32> = mask
            .data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i as u32))
            .collect();
        Self::from_coords(mask.dims, coords)
    }

    pub fn from_coords(dims: [usize; 3], coords: Vec<u32>) -> Result<Self> {
        let total = dims[0] * dims[1] * dims[2];
        if coords.is_empty() {
            return Err(Error::InvalidInput("mask has no in-mask voxels".into()));
        }
        let mut row_of = vec![None; total];
        for (row, &flat) in coords.iter().enumerate() {
            let flat = flat as usize;
            if flat >= total {
                return Err(Error::FormatError(format!("voxel coordinate {flat} out of bounds")));
            }
            if row_of[flat].is_some() {
                return Err(Error::FormatError(format!("duplicate voxel coordinate {flat}")));
            }
            row_of[flat] = Some(row as u32);
        }
        Ok(VolumeGrid { dims, coords, row_of })
    }

    pub fn n_voxels(&self) -> usize {
        self.coords.len()
    }

    pub fn flat(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn xyz(&self, flat: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [flat % nx, (flat / nx) % ny, flat / (nx * ny)]
    }

    pub fn in_mask(&self, x: usize, y: usize, z: usize) -> bool {
        self.row_of[self.flat(x, y, z)].is_some()
    }

    /// Data row index of an in-mask voxel.
    pub fn row(&self, x: usize, y: usize, z: usize) -> Option<usize> {
        self.row_of[self.flat(x, y, z)].map(|r| r as usize)
    }

    pub fn mask(&self) -> Mask {
        Mask { dims: self.dims, data: self.row_of.iter().map(|r| r.is_some()).collect() }
    }
}

/// Scene label attached to a contiguous TR interval (until the next label).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneInterval {
    pub start_tr: u32,
    pub scene_id: u32,
}

/// Per-subject voxel×time matrices sharing one grid, mask, and TR count.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDataset {
    pub subjects: Vec<Matrix>,
    pub grid: VolumeGrid,
    pub tr_seconds: f64,
    pub labels: Option<Vec<SceneInterval>>,
}

impl SubjectDataset {
    pub fn new(
        subjects: Vec<Matrix>,
        grid: VolumeGrid,
        tr_seconds: f64,
        labels: Option<Vec<SceneInterval>>,
    ) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::InvalidInput("dataset needs at least one subject".into()));
        }
        let v = grid.n_voxels();
        let t = subjects[0].ncols();
        for (i, s) in subjects.iter().enumerate() {
            if s.nrows() != v || s.ncols() != t {
                return Err(Error::ShapeMismatch(format!(
                    "subject {i} is {}x{}, expected {v}x{t}",
                    s.nrows(),
                    s.ncols()
                )));
            }
        }
        if !(tr_seconds > 0.0) {
            return Err(Error::InvalidInput("tr_seconds must be positive".into()));
        }
        Ok(SubjectDataset { subjects, grid, tr_seconds, labels })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_voxels(&self) -> usize {
        self.grid.n_voxels()
    }

    pub fn n_trs(&self) -> usize {
        self.subjects[0].ncols()
    }

    /// Returns a copy with every voxel time course z-scored
    /// (separate explicit step; loading does not normalize).
    pub fn zscored(&self) -> SubjectDataset {
        SubjectDataset {
            subjects: self.subjects.iter().map(zscore_rows).collect(),
            grid: self.grid.clone(),
            tr_seconds: self.tr_seconds,
            labels: self.labels.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_magic(w, b"MSRD1")?;
        binio::write_u32(w, self.n_subjects() as u32)?;
        binio::write_u32(w, self.n_voxels() as u32)?;
        binio::write_u32(w, self.n_trs() as u32)?;
        for d in self.grid.dims {
            binio::write_u32(w, d as u32)?;
        }
        binio::write_f32(w, self.tr_seconds as f32)?;
        let mask = self.grid.mask();
        let bytes: Vec<u8> = mask.data.iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
        for &c in &self.grid.coords {
            binio::write_u32(w, c)?;
        }
        for s in &self.subjects {
            binio::write_matrix_body(w, s)?;
        }
        if let Some(labels) = &self.labels {
            binio::write_u32(w, labels.len() as u32)?;
            for l in labels {
                binio::write_u32(w, l.start_tr)?;
                binio::write_u32(w, l.scene_id)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read(&mut r)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        binio::expect_magic(r, b"MSRD1")?;
        let m = binio::read_u32(r)? as usize;
        let v = binio::read_u32(r)? as usize;
        let t = binio::read_u32(r)? as usize;
        let nx = binio::read_u32(r)? as usize;
        let ny = binio::read_u32(r)? as usize;
        let nz = binio::read_u32(r)? as usize;
        let tr_seconds = binio::read_f32(r)? as f64;
        if m == 0 || v == 0 || t == 0 || nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::FormatError("zero dimension in header".into()));
        }
        let mut mask_bytes = vec![0u8; nx * ny * nz];
        r.read_exact(&mut mask_bytes)
            .map_err(|_| Error::FormatError("truncated mask".into()))?;
        let mut coords = Vec::with_capacity(v);
        for _ in 0..v {
            coords.push(binio::read_u32(r)?);
        }
        let grid = VolumeGrid::from_coords([nx, ny, nz], coords)?;
        // Mask bytes and coordinate list must describe the same voxel set.
        for (flat, &b) in mask_bytes.iter().enumerate() {
            let [x, y, z] = grid.xyz(flat);
            if (b != 0) != grid.in_mask(x, y, z) {
                return Err(Error::FormatError(format!(
                    "mask byte and coordinate list disagree at voxel {flat}"
                )));
            }
        }
        let mut subjects = Vec::with_capacity(m);
        for _ in 0..m {
            subjects.push(binio::read_matrix_body(r, v, t)?);
        }
        let labels = match binio::read_u32(r) {
            Ok(n) => {
                let mut ls = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    ls.push(SceneInterval {
                        start_tr: binio::read_u32(r)?,
                        scene_id: binio::read_u32(r)?,
                    });
                }
                Some(ls)
            }
            Err(_) => None,
        };
        SubjectDataset::new(subjects, grid, tr_seconds, labels)
    }
}

/// Averages each 2×2×2 voxel block into one voxel. A downsampled voxel is
/// in-mask iff at least one member voxel is in-mask, and its time course is
/// the mean over in-mask members only.
pub fn downsample_by_2(dataset: &SubjectDataset) -> Result<SubjectDataset> {
    let [nx, ny, nz] = dataset.grid.dims;
    let odims = [nx.div_ceil(2), ny.div_ceil(2), nz.div_ceil(2)];
    let t = dataset.n_trs();

    // Per output voxel, the member data rows of its block.
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut out_coords: Vec<u32> = Vec::new();
    for oz in 0..odims[2] {
        for oy in 0..odims[1] {
            for ox in 0..odims[0] {
                let mut rows = Vec::new();
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (x, y, z) = (2 * ox + dx, 2 * oy + dy, 2 * oz + dz);
                            if x < nx && y < ny && z < nz {
                                if let Some(r) = dataset.grid.row(x, y, z) {
                                    rows.push(r);
                                }
                            }
                        }
                    }
                }
                if !rows.is_empty() {
                    out_coords.push((ox + odims[0] * (oy + odims[1] * oz)) as u32);
                    members.push(rows);
                }
            }
        }
    }
    let grid = VolumeGrid::from_coords(odims, out_coords)?;
    let mut subjects = Vec::with_capacity(dataset.n_subjects());
    for x in &dataset.subjects {
        let mut out = Matrix::zeros(members.len(), t);
        for (orow, rows) in members.iter().enumerate() {
            let scale = 1.0 / rows.len() as f64;
            for &r in rows {
                for c in 0..t {
                    out[(orow, c)] += x[(r, c)] * scale;
                }
            }
        }
        subjects.push(out);
    }
    SubjectDataset::new(subjects, grid, dataset.tr_seconds, dataset.labels.clone())
}

/// Enumeration of valid cube neighborhoods over a masked grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchlightIndex {
    pub radius: usize,
    pub centers: Vec<[usize; 3]>,
    /// Per center, data row indices of the (2r+1)^3 cube, x-fastest offset order.
    pub neighborhoods: Vec<Vec<usize>>,
}

impl SearchlightIndex {
    pub fn cube_size(&self) -> usize {
        let side = 2 * self.radius + 1;
        side * side * side
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Enumerates every center whose full (2r+1)^3 cube lies inside the volume
/// bounds and entirely in-mask. Centers are ordered x-fastest lexicographic.
pub fn build_searchlights(grid: &VolumeGrid, radius: usize) -> SearchlightIndex {
    let [nx, ny, nz] = grid.dims;
    let r = radius as isize;
    let mut centers = Vec::new();
    let mut neighborhoods = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                if xi < r
                    || yi < r
                    || zi < r
                    || xi + r >= nx as isize
                    || yi + r >= ny as isize
                    || zi + r >= nz as isize
                {
                    continue;
                }
                let mut rows = Vec::with_capacity((2 * radius + 1).pow(3));
                let mut ok = true;
                'cube: for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            match grid.row(
                                (xi + dx) as usize,
                                (yi + dy) as usize,
                                (zi + dz) as usize,
                            ) {
                                Some(row) => rows.push(row),
                                None => {
                                    ok = false;
                                    break 'cube;
                                }
                            }
                        }
                    }
                }
                if ok {
                    centers.push([x, y, z]);
                    neighborhoods.push(rows);
                }
            }
        }
    }
    SearchlightIndex { radius, centers, neighborhoods }
}

/// Per-subject submatrices of the neighborhood rows, preserving order.
pub fn extract_searchlight(
    dataset: &SubjectDataset,
    index: &SearchlightIndex,
    center_id: usize,
) -> Result<Vec<Matrix>> {
    let rows = index
        .neighborhoods
        .get(center_id)
        .ok_or_else(|| Error::IndexError(format!("center {center_id} out of range")))?;
    let t = dataset.n_trs();
    Ok(dataset
        .subjects
        .iter()
        .map(|x| {
            let mut out = Matrix::zeros(rows.len(), t);
            for (i, &r) in rows.iter().enumerate() {
                out.row_mut(i).copy_from(&x.row(r));
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(dims: [usize; 3], m: usize, t: usize, seed: u64) -> SubjectDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = VolumeGrid::from_mask(&Mask::all_true(dims)).unwrap();
        let v = grid.n_voxels();
        let subjects = (0..m)
            .map(|_| Matrix::from_fn(v, t, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        SubjectDataset::new(subjects, grid, 2.0, None).unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let mut ds = random_dataset([3, 2, 2], 2, 10, 1);
        ds.labels = Some(vec![
            SceneInterval { start_tr: 0, scene_id: 3 },
            SceneInterval { start_tr: 5, scene_id: 7 },
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.msrd");
        ds.save(&path).unwrap();
        let back = SubjectDataset::load(&path).unwrap();
        assert_eq!(ds.grid, back.grid);
        assert_eq!(ds.labels, back.labels);
        for (a, b) in ds.subjects.iter().zip(&back.subjects) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn save_is_deterministic() {
        let ds = random_dataset([3, 3, 3], 2, 5, 42);
        let mut a = Vec::new();
        let mut b = Vec::new();
        ds.write(&mut a).unwrap();
        ds.write(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_subject_shapes_rejected() {
        let grid = VolumeGrid::from_mask(&Mask::all_true([2, 2, 2])).unwrap();
        let subjects = vec![Matrix::zeros(8, 10), Matrix::zeros(8, 9)];
        let err = SubjectDataset::new(subjects, grid, 2.0, None).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn malformed_header_rejected() {
        let mut bytes = b"XXXXX".to_vec();
        bytes.extend_from_slice(&[0u8; 64]);
        let err = SubjectDataset::read(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::FormatError(_)));
    }

    #[test]
    fn downsample_uniform_volume_is_identity_on_time_course() {
        let grid = VolumeGrid::from_mask(&Mask::all_true([4, 4, 4])).unwrap();
        let course: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let x = Matrix::from_fn(64, 6, |_, j| course[j]);
        let ds = SubjectDataset::new(vec![x], grid, 2.0, None).unwrap();
        let down = downsample_by_2(&ds).unwrap();
        assert_eq!(down.grid.dims, [2, 2, 2]);
        for row in down.subjects[0].row_iter() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - course[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn downsample_block_mean() {
        // 2x2x2 volume: half the voxels carry c, half 3c; mean is 2c.
        let grid = VolumeGrid::from_mask(&Mask::all_true([2, 2, 2])).unwrap();
        let x = Matrix::from_fn(8, 4, |i, j| {
            let c = (j + 1) as f64;
            if i % 2 == 0 {
                c
            } else {
                3.0 * c
            }
        });
        let ds = SubjectDataset::new(vec![x], grid, 2.0, None).unwrap();
        let down = downsample_by_2(&ds).unwrap();
        assert_eq!(down.n_voxels(), 1);
        for j in 0..4 {
            assert!((down.subjects[0][(0, j)] - 2.0 * (j + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn downsample_matches_brute_force_block_mean() {
        let ds = random_dataset([6, 6, 6], 1, 10, 3);
        let down = downsample_by_2(&ds).unwrap();
        for (orow, &flat) in down.grid.coords.iter().enumerate() {
            let [ox, oy, oz] = down.grid.xyz(flat as usize);
            for tr in 0..10 {
                let mut sum = 0.0;
                let mut n = 0.0;
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (x, y, z) = (2 * ox + dx, 2 * oy + dy, 2 * oz + dz);
                            if x < 6 && y < 6 && z < 6 {
                                if let Some(r) = ds.grid.row(x, y, z) {
                                    sum += ds.subjects[0][(r, tr)];
                                    n += 1.0;
                                }
                            }
                        }
                    }
                }
                assert!((down.subjects[0][(orow, tr)] - sum / n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn searchlights_exact_fit_and_counting() {
        let g5 = VolumeGrid::from_mask(&Mask::all_true([5, 5, 5])).unwrap();
        let idx = build_searchlights(&g5, 2);
        assert_eq!(idx.centers, vec![[2, 2, 2]]);
        assert_eq!(idx.neighborhoods[0].len(), 125);

        let g7 = VolumeGrid::from_mask(&Mask::all_true([7, 7, 7])).unwrap();
        let idx7 = build_searchlights(&g7, 2);
        assert_eq!(idx7.len(), 27);
    }

    #[test]
    fn searchlights_match_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [6, 7, 6];
        let mut mask = Mask::all_true(dims);
        for b in mask.data.iter_mut() {
            *b = rng.random_bool(0.9);
        }
        if mask.count() == 0 {
            mask.data[0] = true;
        }
        let grid = VolumeGrid::from_mask(&mask).unwrap();
        let idx = build_searchlights(&grid, 2);
        // Brute force: test all 125 members for every voxel.
        let mut expected = Vec::new();
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let mut ok = true;
                    for dz in -2i32..=2 {
                        for dy in -2i32..=2 {
                            for dx in -2i32..=2 {
                                let (xx, yy, zz) =
                                    (x as i32 + dx, y as i32 + dy, z as i32 + dz);
                                if xx < 0
                                    || yy < 0
                                    || zz < 0
                                    || xx >= dims[0] as i32
                                    || yy >= dims[1] as i32
                                    || zz >= dims[2] as i32
                                    || !grid.in_mask(xx as usize, yy as usize, zz as usize)
                                {
                                    ok = false;
                                }
                            }
                        }
                    }
                    if ok {
                        expected.push([x, y, z]);
                    }
                }
            }
        }
        assert_eq!(idx.centers, expected);
        for rows in &idx.neighborhoods {
            assert_eq!(rows.len(), 125);
        }
    }

    #[test]
    fn extract_matches_direct_indexing() {
        let ds = random_dataset([5, 5, 5], 2, 7, 11);
        let idx = build_searchlights(&ds.grid, 2);
        let xs = extract_searchlight(&ds, &idx, 0).unwrap();
        assert_eq!(xs.len(), 2);
        for (s, x) in xs.iter().enumerate() {
            assert_eq!(x.nrows(), 125);
            for (i, &r) in idx.neighborhoods[0].iter().enumerate() {
                for j in 0..7 {
                    assert_eq!(x[(i, j)], ds.subjects[s][(r, j)]);
                }
            }
        }
        assert!(matches!(
            extract_searchlight(&ds, &idx, 99),
            Err(Error::IndexError(_))
        ));
    }

    #[test]
    fn adjacent_searchlights_overlap_in_100_voxels() {
        let ds = random_dataset([7, 6, 6], 1, 3, 13);
        let idx = build_searchlights(&ds.grid, 2);
        for (i, ci) in idx.centers.iter().enumerate() {
            for (j, cj) in idx.centers.iter().enumerate().skip(i + 1) {
                let d: Vec<i64> = (0..3).map(|a| ci[a] as i64 - cj[a] as i64).collect();
                let one_axis_unit = d.iter().filter(|&&v| v != 0).count() == 1
                    && d.iter().map(|v| v.abs()).max() == Some(1);
                if one_axis_unit {
                    let a: std::collections::HashSet<_> =
                        idx.neighborhoods[i].iter().collect();
                    let overlap =
                        idx.neighborhoods[j].iter().filter(|r| a.contains(r)).count();
                    assert_eq!(overlap, 100);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn downsample_preserves_total_signal_mass(seed in 0u64..50) {
            let ds = random_dataset([5, 4, 3], 1, 6, seed);
            let down = downsample_by_2(&ds).unwrap();
            let input_sum: f64 = ds.subjects[0].iter().sum();
            // sum over output voxels×TRs of (output value · block population)
            let mut output_mass = 0.0;
            for (orow, &flat) in down.grid.coords.iter().enumerate() {
                let [ox, oy, oz] = down.grid.xyz(flat as usize);
                let mut pop = 0.0;
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (x, y, z) = (2 * ox + dx, 2 * oy + dy, 2 * oz + dz);
                            if x < 5 && y < 4 && z < 3 && ds.grid.in_mask(x, y, z) {
                                pop += 1.0;
                            }
                        }
                    }
                }
                for tr in 0..6 {
                    output_mass += down.subjects[0][(orow, tr)] * pop;
                }
            }
            prop_assert!((output_mass - input_sum).abs() < 1e-9);
        }
    }
}
