use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DecomposeError;
use crate::matrix::SampleMatrix;

pub const ICA_TOLERANCE: f64 = 1e-4;
pub const ICA_MAX_ITER: usize = 200;

/// Eigenvalues below this fraction of the largest count as zero.
const RANK_EPS: f64 = 1e-12;

/// Linear mixing model `x = mean + A s` fitted by FastICA.
///
/// `sources` are centered with unit variance; `source_means` holds the
/// means the sources would have if the input were not centered first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    /// `m × n_sources`, columns are the mixing directions.
    pub mixing: SampleMatrix,
    /// `n_sources × m`, maps centered input to sources.
    pub unmixing: SampleMatrix,
    pub sources: SampleMatrix,
    pub source_means: Vec<f64>,
    pub input_means: Vec<f64>,
    pub iterations: usize,
}

impl IcaModel {
    pub fn n_sources(&self) -> usize {
        self.mixing.n_cols()
    }

    /// Sources of new input rows under the fitted unmixing.
    pub fn unmix(&self, x: &SampleMatrix) -> Result<SampleMatrix, DecomposeError> {
        let m = self.input_means.len();
        if x.n_cols() != m {
            return Err(DecomposeError::Dimension { expected: m, got: x.n_cols() });
        }
        let u = self.unmixing.to_dmatrix();
        let mean = DVector::from_column_slice(&self.input_means);
        let mut xc = x.to_dmatrix().transpose();
        for mut col in xc.column_iter_mut() {
            col -= &mean;
        }
        Ok(SampleMatrix::from_dmatrix(&(u * xc).transpose())?)
    }

    /// `mean + A s` for each row of `s`.
    pub fn mix(&self, s: &SampleMatrix) -> Result<SampleMatrix, DecomposeError> {
        if s.n_cols() != self.n_sources() {
            return Err(DecomposeError::Dimension {
                expected: self.n_sources(),
                got: s.n_cols(),
            });
        }
        let a = self.mixing.to_dmatrix();
        let mean = DVector::from_column_slice(&self.input_means);
        let mut x = a * s.to_dmatrix().transpose();
        for mut col in x.column_iter_mut() {
            col += &mean;
        }
        Ok(SampleMatrix::from_dmatrix(&x.transpose())?)
    }
}

/// `(W Wᵀ)^{-1/2} W`: the nearest matrix with orthonormal rows.
fn decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Symmetric FastICA with the logcosh contrast.
///
/// Centers `x`, whitens it onto its top `n_sources` principal directions and
/// runs the fixed-point iteration until every unmixing row moves by less
/// than the tolerance.
pub fn fastica_fit(x: &SampleMatrix, n_sources: usize, seed: u64) -> Result<IcaModel, DecomposeError> {
    let (n, m) = (x.n_rows(), x.n_cols());
    if n_sources == 0 || n_sources > m {
        return Err(DecomposeError::Invalid(format!(
            "n_sources must lie in 1..={m}, got {n_sources}"
        )));
    }
    if n <= 10 * n_sources {
        return Err(DecomposeError::TooFewSamples {
            needed: 10 * n_sources + 1,
            got: n,
        });
    }
    let mean = DVector::from_column_slice(&x.column_means());
    // Columns are samples from here on.
    let mut xc = x.to_dmatrix().transpose();
    for mut col in xc.column_iter_mut() {
        col -= &mean;
    }
    let cov = &xc * xc.transpose() / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let kept = &order[..n_sources];
    let weakest = eig.eigenvalues[kept[n_sources - 1]];
    if !(top > 0.0) || weakest <= RANK_EPS * top {
        return Err(DecomposeError::Rank(format!(
            "covariance eigenvalue {weakest:e} is negligible next to {top:e}"
        )));
    }
    let e = DMatrix::from_fn(m, n_sources, |i, j| eig.eigenvectors[(i, kept[j])]);
    let sqrt_d = DVector::from_fn(n_sources, |j, _| eig.eigenvalues[kept[j]].sqrt());
    let whitening = DMatrix::from_diagonal(&sqrt_d.map(|s| 1.0 / s)) * e.transpose();
    let dewhitening = &e * DMatrix::from_diagonal(&sqrt_d);
    let z = &whitening * &xc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = decorrelate(&DMatrix::from_fn(n_sources, n_sources, |_, _| StandardNormal.sample(&mut rng)));
    let mut iterations = 0;
    loop {
        if iterations == ICA_MAX_ITER {
            return Err(DecomposeError::Convergence { iterations });
        }
        iterations += 1;
        let g = (&w * &z).map(f64::tanh);
        let g_prime_mean = DVector::from_fn(n_sources, |i, _| {
            g.row(i).iter().map(|v| 1.0 - v * v).sum::<f64>() / n as f64
        });
        let mut next = &g * z.transpose() / n as f64;
        for i in 0..n_sources {
            let shrink = w.row(i) * g_prime_mean[i];
            let mut row = next.row_mut(i);
            row -= shrink;
        }
        let next = decorrelate(&next);
        let moved = (0..n_sources)
            .map(|i| (next.row(i).dot(&w.row(i)).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = next;
        if moved < ICA_TOLERANCE {
            break;
        }
    }

    let unmixing = &w * &whitening;
    let mixing = dewhitening * w.transpose();
    let sources = &w * &z;
    let source_means = &unmixing * &mean;
    Ok(IcaModel {
        mixing: SampleMatrix::from_dmatrix(&mixing)?,
        unmixing: SampleMatrix::from_dmatrix(&unmixing)?,
        sources: SampleMatrix::from_dmatrix(&sources.transpose())?,
        source_means: source_means.iter().copied().collect(),
        input_means: mean.iter().copied().collect(),
        iterations,
    })
}
