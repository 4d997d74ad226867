//! Validation protocols: time-segment matching and scene-recall matching,
//! both leave-one-subject-out.

pub mod svm;

use crate::error::{Error, Result};
use crate::linalg::{pearson, Matrix};
use crate::models::{project, FactorFit};
use crate::volume::SceneInterval;
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    TimeSegment,
    SceneRecall,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::TimeSegment => "time-segment",
            Protocol::SceneRecall => "scene-recall",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "time-segment" => Ok(Protocol::TimeSegment),
            "scene-recall" => Ok(Protocol::SceneRecall),
            other => Err(Error::InvalidInput(format!("unknown protocol '{other}'"))),
        }
    }
}

/// Configuration of an evaluation protocol.
#[derive(Debug, Clone)]
pub struct EvalSpec {
    pub protocol: Protocol,
    /// Matched segment length in TRs.
    pub segment_len: usize,
    pub svm: svm::SvmConfig,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { protocol: Protocol::TimeSegment, segment_len: 9, svm: svm::SvmConfig::default() }
    }
}

/// Correct-trial counts; accuracies aggregate by exact trial counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    pub correct: usize,
    pub trials: usize,
}

impl MatchOutcome {
    pub fn accuracy(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.correct as f64 / self.trials as f64
        }
    }

    pub fn add(&mut self, other: MatchOutcome) {
        self.correct += other.correct;
        self.trials += other.trials;
    }
}

/// Splits `t` TRs into a first half of `⌈t/2⌉` and the remainder.
/// Evaluation runs both directions and averages by trial counts.
pub fn split_halves(t: usize) -> (Range<usize>, Range<usize>) {
    let h = t.div_ceil(2);
    (0..h, h..t)
}

/// Chance accuracy of uniform guessing over all candidate segment starts.
pub fn chance_time_segment(test_len: usize, segment_len: usize) -> f64 {
    1.0 / (test_len - segment_len + 1) as f64
}

fn flatten_block(m: &Matrix, start: usize, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * len);
    for i in 0..m.nrows() {
        for j in start..start + len {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Exhaustive leave-one-subject-out segment matching on already-projected
/// test responses (one k×t matrix per subject).
///
/// For every test subject and every true start, the reference is the other
/// subjects' averaged projection; candidate starts overlapping the true
/// segment (other than the true start itself) are excluded, and ties break
/// toward the smallest start.
pub fn segment_match_projected(
    projections: &[Matrix],
    segment_len: usize,
) -> Result<MatchOutcome> {
    if projections.len() < 2 {
        return Err(Error::ProtocolError("need at least 2 subjects".into()));
    }
    let t_test = projections[0].ncols();
    for p in projections {
        if p.ncols() != t_test {
            return Err(Error::ShapeMismatch("projections differ in length".into()));
        }
    }
    if segment_len == 0 || t_test < segment_len {
        return Err(Error::ProtocolError(format!(
            "test half of {t_test} TRs is shorter than segment length {segment_len}"
        )));
    }
    let n_pos = t_test - segment_len + 1;
    let m = projections.len();
    let mut outcome = MatchOutcome::default();
    for test_subject in 0..m {
        // Average response of the other m-1 subjects.
        let mut reference = Matrix::zeros(projections[0].nrows(), t_test);
        for (j, p) in projections.iter().enumerate() {
            if j != test_subject {
                reference += p;
            }
        }
        reference.scale_mut(1.0 / (m - 1) as f64);
        for p_true in 0..n_pos {
            let probe = flatten_block(&projections[test_subject], p_true, segment_len);
            let mut best: Option<(usize, f64)> = None;
            for p in 0..n_pos {
                let overlap = p.abs_diff(p_true) < segment_len;
                if overlap && p != p_true {
                    continue;
                }
                let cand = flatten_block(&reference, p, segment_len);
                let corr = pearson(&cand, &probe).unwrap_or(f64::NEG_INFINITY);
                if best.as_ref().is_none_or(|&(_, b)| corr > b) {
                    best = Some((p, corr));
                }
            }
            outcome.trials += 1;
            if best.map(|(p, _)| p) == Some(p_true) {
                outcome.correct += 1;
            }
        }
    }
    Ok(outcome)
}

/// Projects each subject's held-out data through its fitted map and runs
/// exhaustive segment matching.
pub fn time_segment_match(
    fit: &FactorFit,
    test: &[Matrix],
    spec: &EvalSpec,
) -> Result<MatchOutcome> {
    if test.len() != fit.n_subjects() {
        return Err(Error::ShapeMismatch(format!(
            "{} test matrices for {} fitted subjects",
            test.len(),
            fit.n_subjects()
        )));
    }
    let projections: Vec<Matrix> = test
        .iter()
        .enumerate()
        .map(|(i, x)| project(fit, x, i))
        .collect::<Result<_>>()?;
    segment_match_projected(&projections, spec.segment_len)
}

/// Scene id and the recall TRs attributed to it, for one subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneTrs {
    pub scene_id: u32,
    pub trs: Vec<usize>,
}

/// Scene intervals per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneTable {
    pub per_subject: Vec<Vec<SceneTrs>>,
}

impl SceneTable {
    /// Expands a shared label track (each label runs until the next start)
    /// into identical per-subject scene tables.
    pub fn from_labels(labels: &[SceneInterval], t: usize, m: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::ProtocolError("no scene labels".into()));
        }
        let mut sorted = labels.to_vec();
        sorted.sort_by_key(|l| l.start_tr);
        let mut scenes = Vec::with_capacity(sorted.len());
        for (i, l) in sorted.iter().enumerate() {
            let end = sorted.get(i + 1).map(|n| n.start_tr as usize).unwrap_or(t);
            let start = l.start_tr as usize;
            if start >= end || end > t {
                return Err(Error::ProtocolError(format!(
                    "label interval [{start},{end}) invalid for {t} TRs"
                )));
            }
            scenes.push(SceneTrs { scene_id: l.scene_id, trs: (start..end).collect() });
        }
        Ok(SceneTable { per_subject: vec![scenes; m] })
    }
}

#[derive(Debug, Clone)]
pub struct SceneRecallResult {
    pub outcome: MatchOutcome,
    /// Scenes available for at least two subjects, i.e. actually classified.
    pub n_scenes: usize,
    pub excluded_scenes: Vec<u32>,
}

impl SceneRecallResult {
    pub fn chance(&self) -> f64 {
        if self.n_scenes == 0 {
            0.0
        } else {
            1.0 / self.n_scenes as f64
        }
    }
}

/// Leave-one-subject-out scene classification: recall TRs of each scene are
/// averaged, projected into the shared space per subject, and classified by
/// a linear one-vs-rest SVM trained on the other subjects' scene vectors.
pub fn scene_recall_match(
    fit: &FactorFit,
    recall: &[Matrix],
    table: &SceneTable,
    spec: &EvalSpec,
) -> Result<SceneRecallResult> {
    let m = recall.len();
    if m != fit.n_subjects() || table.per_subject.len() != m {
        return Err(Error::ShapeMismatch("subject count mismatch".into()));
    }
    // Per subject: (scene_id, shared-space scene vector).
    let mut vectors: Vec<Vec<(u32, Vec<f64>)>> = Vec::with_capacity(m);
    for (i, x) in recall.iter().enumerate() {
        let mut per = Vec::new();
        for scene in &table.per_subject[i] {
            if scene.trs.is_empty() {
                continue;
            }
            let mut avg = Matrix::zeros(x.nrows(), 1);
            for &tr in &scene.trs {
                if tr >= x.ncols() {
                    return Err(Error::IndexError(format!("scene TR {tr} out of range")));
                }
                avg += x.column(tr);
            }
            avg.scale_mut(1.0 / scene.trs.len() as f64);
            let projected = project(fit, &avg, i)?;
            per.push((scene.scene_id, projected.iter().copied().collect()));
        }
        vectors.push(per);
    }
    // Scenes usable for classification: present for at least two subjects.
    let mut counts: std::collections::BTreeMap<u32, usize> = Default::default();
    for per in &vectors {
        for (id, _) in per {
            *counts.entry(*id).or_default() += 1;
        }
    }
    let usable: std::collections::BTreeSet<u32> =
        counts.iter().filter(|(_, &c)| c >= 2).map(|(&id, _)| id).collect();
    let excluded_scenes: Vec<u32> =
        counts.iter().filter(|(_, &c)| c < 2).map(|(&id, _)| id).collect();
    if usable.is_empty() {
        return Err(Error::ProtocolError("no scene appears for at least two subjects".into()));
    }

    let mut outcome = MatchOutcome::default();
    for test_subject in 0..m {
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        for (j, per) in vectors.iter().enumerate() {
            if j == test_subject {
                continue;
            }
            for (id, v) in per {
                if usable.contains(id) {
                    train_x.push(v.clone());
                    train_y.push(*id);
                }
            }
        }
        let tests: Vec<&(u32, Vec<f64>)> = vectors[test_subject]
            .iter()
            .filter(|(id, _)| usable.contains(id))
            .collect();
        if tests.is_empty() || train_x.is_empty() {
            continue;
        }
        let classifier = svm::OneVsRestSvm::fit(&train_x, &train_y, &spec.svm)?;
        for (id, v) in tests {
            outcome.trials += 1;
            if classifier.predict(v) == *id {
                outcome.correct += 1;
            }
        }
    }
    Ok(SceneRecallResult { outcome, n_scenes: usable.len(), excluded_scenes })
}
