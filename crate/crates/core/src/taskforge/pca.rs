use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Descriptor;
use crate::{Error, Result};

/// Mean-centered projection onto the leading principal directions (no whitening).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `out_dim` orthonormal rows, by descending explained variance.
    pub basis: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

/// Fit on raw descriptor vectors via the eigendecomposition of their
/// sample covariance.
pub fn fit_pca(samples: &[Vec<f64>], out_dim: usize) -> Result<PcaProjection> {
    let dim = samples.first().map_or(0, Vec::len);
    if out_dim > dim {
        return Err(Error::OutDimTooLarge { out_dim, in_dim: dim });
    }
    if samples.len() < out_dim + 1 {
        return Err(Error::InsufficientSamples {
            needed: out_dim + 1,
            got: samples.len(),
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::Length {
            expected: dim,
            actual: bad.len(),
        });
    }
    let n = samples.len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut basis = Vec::with_capacity(out_dim);
    let mut explained_variance = Vec::with_capacity(out_dim);
    for &j in order.iter().take(out_dim) {
        let mut row: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        // sign convention: largest-magnitude entry positive
        let pivot = row
            .iter()
            .copied()
            .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        basis.push(row);
        explained_variance.push(eig.eigenvalues[j].max(0.0));
    }
    Ok(PcaProjection {
        mean,
        basis,
        explained_variance,
    })
}

impl PcaProjection {
    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.len()
    }

    /// Centered projection without renormalization.
    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.in_dim() {
            return Err(Error::Length {
                expected: self.in_dim(),
                actual: v.len(),
            });
        }
        Ok(self
            .basis
            .iter()
            .map(|row| row.iter().zip(v).zip(&self.mean).map(|((b, x), m)| b * (x - m)).sum())
            .collect())
    }

    /// Project and renormalize to unit length; a zero projection is flagged degenerate.
    pub fn project(&self, v: &[f64], image_id: &str) -> Result<Descriptor> {
        Ok(Descriptor::normalized(image_id, self.transform(v)?))
    }
}
