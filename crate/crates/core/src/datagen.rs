//! Synthetic classification data with ground truth, split into a small
//! labeled set, a large unlabeled set whose labels stay hidden from the
//! training loss, and a test set.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{MceError, Result};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    GaussianBlobs,
    TwoMoons,
    ConcentricRings,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::GaussianBlobs => "blobs",
            DataKind::TwoMoons => "moons",
            DataKind::ConcentricRings => "rings",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "blobs" => Some(DataKind::GaussianBlobs),
            "moons" => Some(DataKind::TwoMoons),
            "rings" => Some(DataKind::ConcentricRings),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: DataKind,
    pub k: usize,
    pub d: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    /// Blobs: distance between class means, in units of the noise std.
    /// Moons: scale of the two arcs. Rings: radius gap between rings.
    pub class_separation: f64,
    /// Per-coordinate Gaussian noise std.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(MceError::Spec(format!("need at least 2 classes, got {}", self.k)));
        }
        if self.d == 0 || self.n_labeled == 0 || self.n_unlabeled == 0 || self.n_test == 0 {
            return Err(MceError::Spec("all counts must be positive".into()));
        }
        if self.n_labeled < self.k {
            return Err(MceError::Spec(format!("{} labels cannot cover {} classes", self.n_labeled, self.k)));
        }
        if !(self.class_separation > 0.0) || !(self.noise >= 0.0) {
            return Err(MceError::Spec("separation must be positive and noise non-negative".into()));
        }
        match self.kind {
            DataKind::TwoMoons if self.k != 2 => Err(MceError::Spec(format!("two moons needs k = 2, got {}", self.k))),
            DataKind::TwoMoons | DataKind::ConcentricRings if self.d < 2 => {
                Err(MceError::Spec("moons and rings need d >= 2".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Labels of the unlabeled split. Only metrics code gets to look at them.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLabels(Vec<usize>);

impl HiddenLabels {
    /// Number of `(id, label)` pairs whose label matches the hidden one.
    pub fn agreement(&self, ids: &[usize], labels: &[usize]) -> usize {
        ids.iter().zip(labels).filter(|(&i, &l)| self.0[i] == l).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub x: Matrix,
    pub y: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSplit {
    pub x: Matrix,
    hidden: HiddenLabels,
}

impl UnlabeledSplit {
    pub fn new(x: Matrix, hidden: Vec<usize>) -> Self {
        Self { x, hidden: HiddenLabels(hidden) }
    }

    pub fn hidden(&self) -> &HiddenLabels {
        &self.hidden
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub k: usize,
    pub labeled: LabeledSplit,
    pub unlabeled: UnlabeledSplit,
    pub test: LabeledSplit,
    /// Class means used by the blob generator.
    pub generative_means: Option<Matrix>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.labeled.x.cols()
    }
}

/// Class counts: `⌊n/k⌋` each, the remainder going to the lowest class indices.
pub fn balanced_labels(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).flat_map(|c| std::iter::repeat_n(c, base + usize::from(c < extra))).collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn blob_means(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Matrix {
    // Orthonormal directions scaled by sep/√2 put every pair of means exactly `sep` apart.
    let radius = spec.class_separation / 2f64.sqrt();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.k);
    for c in 0..spec.k {
        let mut v: Vec<f64> = (0..spec.d).map(|_| gaussian(rng)).collect();
        if c < spec.d {
            for u in &means {
                let proj = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        means.push(v);
    }
    let mut m = Matrix::from_rows(&means);
    m.as_mut_slice().iter_mut().for_each(|a| *a *= radius);
    m
}

fn sample_point(spec: &SyntheticSpec, means: Option<&Matrix>, class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..spec.d).map(|_| spec.noise * gaussian(rng)).collect();
    match spec.kind {
        DataKind::GaussianBlobs => {
            let mu = means.expect("blob means").row(class);
            x.iter_mut().zip(mu).for_each(|(a, m)| *a += m);
        }
        DataKind::TwoMoons => {
            let t: f64 = rng.random::<f64>() * std::f64::consts::PI;
            let (px, py) = if class == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
            x[0] += spec.class_separation * px;
            x[1] += spec.class_separation * py;
        }
        DataKind::ConcentricRings => {
            let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let r = spec.class_separation * (class + 1) as f64;
            x[0] += r * t.cos();
            x[1] += r * t.sin();
        }
    }
    x
}

fn sample_split(spec: &SyntheticSpec, means: Option<&Matrix>, n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let mut labels = balanced_labels(n, spec.k);
    labels.shuffle(rng);
    let rows: Vec<Vec<f64>> = labels.iter().map(|&c| sample_point(spec, means, c, rng)).collect();
    (Matrix::from_rows(&rows), labels)
}

/// Deterministic for a fixed spec (including its seed).
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = (spec.kind == DataKind::GaussianBlobs).then(|| blob_means(spec, &mut rng));
    let (lx, ly) = sample_split(spec, means.as_ref(), spec.n_labeled, &mut rng);
    let (ux, uy) = sample_split(spec, means.as_ref(), spec.n_unlabeled, &mut rng);
    let (tx, ty) = sample_split(spec, means.as_ref(), spec.n_test, &mut rng);
    Ok(Dataset {
        k: spec.k,
        labeled: LabeledSplit { x: lx, y: ly },
        unlabeled: UnlabeledSplit::new(ux, uy),
        test: LabeledSplit { x: tx, y: ty },
        generative_means: means,
    })
}

/// Writes one row per sample: `split,label,visible,f0,..,f{d-1}`.
/// Hidden unlabeled labels are written with `visible = 0`.
pub fn write_csv<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let d = data.dim();
    let mut header = vec!["split".to_string(), "label".into(), "visible".into()];
    header.extend((0..d).map(|j| format!("f{j}")));
    out.write_record(&header)?;
    let mut emit = |split: &str, x: &Matrix, labels: &[usize], visible: bool| -> Result<()> {
        for (i, &l) in labels.iter().enumerate() {
            let mut rec = vec![split.to_string(), l.to_string(), u8::from(visible).to_string()];
            rec.extend(x.row(i).iter().map(|v| format!("{v:?}")));
            out.write_record(&rec)?;
        }
        Ok(())
    };
    emit("labeled", &data.labeled.x, &data.labeled.y, true)?;
    emit("unlabeled", &data.unlabeled.x, &data.unlabeled.hidden.0, false)?;
    emit("test", &data.test.x, &data.test.y, true)?;
    out.flush()?;
    Ok(())
}

/// Reads the format produced by [`write_csv`]. The class count is taken as
/// one more than the largest label seen.
pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(r);
    let d = rdr.headers()?.len().checked_sub(3).ok_or_else(|| MceError::Io("missing columns".into()))?;
    let mut parts: [(Vec<f64>, Vec<usize>); 3] = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        let slot = match &rec[0] {
            "labeled" => 0,
            "unlabeled" => 1,
            "test" => 2,
            other => return Err(MceError::Io(format!("unknown split {other:?}"))),
        };
        let label: usize = rec[1].parse().map_err(|e| MceError::Io(format!("bad label: {e}")))?;
        parts[slot].1.push(label);
        for j in 0..d {
            let v: f64 = rec[3 + j].parse().map_err(|e| MceError::Io(format!("bad feature: {e}")))?;
            parts[slot].0.push(v);
        }
    }
    let k = parts.iter().flat_map(|p| p.1.iter()).max().map_or(0, |m| m + 1);
    let [(lx, ly), (ux, uy), (tx, ty)] = parts;
    let mk = |x: Vec<f64>, n: usize| Matrix::from_vec(n, d, x);
    Ok(Dataset {
        k,
        labeled: LabeledSplit { x: mk(lx, ly.len())?, y: ly },
        unlabeled: UnlabeledSplit::new(mk(ux, uy.len())?, uy),
        test: LabeledSplit { x: mk(tx, ty.len())?, y: ty },
        generative_means: None,
    })
}
