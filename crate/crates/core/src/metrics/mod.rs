//! Fréchet distance between embedding sets and the logit score.

mod frontend;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub use frontend::{
    embed_audio, spectral_centroid, EmbeddingFrontEnd, LogMelFrontEnd, NearestCentroid,
    LOG_MEL_OFFSET,
};

use crate::error::{Error, Result};

/// Covariance regularization added before matrix square roots.
pub const COV_EPS: f64 = 1e-10;

/// `n x d` embeddings, one row per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub embeddings: DMatrix<f64>,
    pub source_tag: String,
}

impl EmbeddingSet {
    pub fn new(embeddings: DMatrix<f64>, source_tag: impl Into<String>) -> Result<Self> {
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "embedding set".into(),
            });
        }
        Ok(Self {
            embeddings,
            source_tag: source_tag.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source_tag: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::shape("embedding rows differ in length"));
        }
        let m = DMatrix::from_row_iterator(rows.len(), d, rows.iter().flatten().copied());
        Self::new(m, source_tag)
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Reads `u32 d, u32 n` (little endian) followed by `n * d` row-major `f32` values.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let bad = |m: &str| Error::Dataset(format!("{}: {m}", path.display()));
        if bytes.len() < 8 {
            return Err(bad("embedding file too short"));
        }
        let d = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = &bytes[8..];
        if body.len() != 4 * n * d {
            return Err(bad(&format!(
                "expected {} values for n={n}, d={d}, found {} bytes",
                n * d,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
        let tag = path.display().to_string();
        Self::new(DMatrix::from_row_iterator(n, d, values), tag)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(&(self.dim() as u32).to_le_bytes())?;
        out.write_all(&(self.len() as u32).to_le_bytes())?;
        for row in self.embeddings.row_iter() {
            for v in row.iter() {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Number of points the moments were estimated from.
    pub count: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fewer than `d + 1` points cannot give a full-rank covariance.
    pub fn is_rank_deficient(&self) -> bool {
        self.count < self.dim() + 1
    }
}

/// Sample mean and unbiased covariance.
pub fn fit_gaussian(set: &EmbeddingSet) -> Result<GaussianStats> {
    let n = set.len();
    if n < 2 {
        return Err(Error::domain(format!(
            "at least two embeddings are needed for a covariance, got {n}"
        )));
    }
    let x = &set.embeddings;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    symmetrize(&mut cov);
    Ok(GaussianStats {
        mean,
        covariance: cov,
        count: n,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::domain(format!(
            "{what} is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

/// Square root of a symmetric PSD matrix with negative eigenvalues clamped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `Tr((A B)^(1/2))` through the symmetric form `Tr((A^(1/2) B A^(1/2))^(1/2))`.
pub fn matrix_sqrt_product_trace(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::shape(format!(
            "square matrices of equal size required, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    check_symmetric(a, "first matrix")?;
    check_symmetric(b, "second matrix")?;
    let ra = psd_sqrt(a);
    let mut inner = &ra * b * &ra;
    symmetrize(&mut inner);
    let eig = SymmetricEigen::new(inner);
    Ok(eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

/// `|mu_r - mu_e|^2 + Tr(S_r + S_e - 2 (S_r S_e)^(1/2))`, clamped at 0.
///
/// When either covariance is rank deficient both get [`COV_EPS`] added to the diagonal.
pub fn frechet_distance(reference: &GaussianStats, evaluated: &GaussianStats) -> Result<f64> {
    if reference.dim() != evaluated.dim() {
        return Err(Error::shape(format!(
            "embedding dimensions differ: {} vs {}",
            reference.dim(),
            evaluated.dim()
        )));
    }
    let finite = |g: &GaussianStats| {
        g.mean
            .iter()
            .chain(g.covariance.iter())
            .all(|v| v.is_finite())
    };
    if !finite(reference) || !finite(evaluated) {
        return Err(Error::NonFinite {
            context: "Gaussian statistics".into(),
        });
    }
    let mut deficient = false;
    for g in [reference, evaluated] {
        if g.is_rank_deficient() {
            warn!(
                "covariance from {} points in {} dimensions is rank deficient",
                g.count,
                g.dim()
            );
            deficient = true;
        }
    }
    let d = reference.dim();
    let eps = if deficient { COV_EPS } else { 0.0 };
    let eps = DMatrix::<f64>::identity(d, d) * eps;
    let sr = &reference.covariance + &eps;
    let se = &evaluated.covariance + &eps;
    let cross = matrix_sqrt_product_trace(&sr, &se)?;
    let mean_term = (&reference.mean - &evaluated.mean).norm_squared();
    let fd = mean_term + sr.trace() + se.trace() - 2.0 * cross;
    Ok(fd.max(0.0))
}

/// Fits both sets and returns their Fréchet distance.
pub fn frechet_distance_sets(reference: &EmbeddingSet, evaluated: &EmbeddingSet) -> Result<f64> {
    frechet_distance(&fit_gaussian(reference)?, &fit_gaussian(evaluated)?)
}

/// Classifier outputs `(n, C)` before the softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    pub logits: DMatrix<f64>,
}

impl LogitMatrix {
    pub fn new(logits: DMatrix<f64>) -> Result<Self> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "logits".into(),
            });
        }
        Ok(Self { logits })
    }

    pub fn softmax_rows(&self) -> DMatrix<f64> {
        let mut p = self.logits.clone();
        for mut row in p.row_iter_mut() {
            let m = row.max();
            row.apply(|v| *v = (*v - m).exp());
            let z = row.sum();
            row /= z;
        }
        p
    }
}

/// `exp(mean_x KL(p(y|x) || p(y)))` with `p(y|x) = softmax(logits)`; lies in `[1, C]`.
pub fn logit_score(logits: &LogitMatrix) -> Result<f64> {
    let (n, c) = logits.logits.shape();
    if n == 0 || c < 2 {
        return Err(Error::domain(format!(
            "need at least one row and two classes, got {n} x {c}"
        )));
    }
    let p = logits.softmax_rows();
    let marginal = p.row_mean();
    let mut kl_sum = 0.0;
    for row in p.row_iter() {
        kl_sum += row
            .iter()
            .zip(marginal.iter())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, m)| p * (p / m).ln())
            .sum::<f64>();
    }
    let mean_kl = (kl_sum / n as f64).clamp(0.0, (c as f64).ln());
    Ok(mean_kl.exp())
}
