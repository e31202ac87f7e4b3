//! Modal assurance criterion and the trace-based structural similarity proxy.

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};

/// Assignment optimum tolerance used when breaking ties between permutations.
const TIE_TOL: f64 = 1e-12;

/// Squared normalised inner product of two mode shapes, in `[0, 1]`.
pub fn mac(phi_s: &[f64], phi_t: &[f64]) -> Result<f64> {
    if phi_s.len() != phi_t.len() {
        return Err(Error::DimensionMismatch { expected: phi_s.len(), actual: phi_t.len() });
    }
    let dot: f64 = phi_s.iter().zip(phi_t).map(|(a, b)| a * b).sum();
    let ss: f64 = phi_s.iter().map(|a| a * a).sum();
    let tt: f64 = phi_t.iter().map(|b| b * b).sum();
    if ss == 0.0 || tt == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot * dot / (ss * tt)).clamp(0.0, 1.0))
}

fn mac_view(a: DVectorView<f64>, b: DVectorView<f64>) -> Result<f64> {
    let dot = a.dot(&b);
    let ss = a.norm_squared();
    let tt = b.norm_squared();
    if ss == 0.0 || tt == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot * dot / (ss * tt)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacMatrix {
    /// `values[(i, j)]` compares source mode `i` with target mode `j`.
    pub values: DMatrix<f64>,
    /// `permutation[i]` is the target mode placed opposite source mode `i`.
    pub permutation: Vec<usize>,
}

impl MacMatrix {
    pub fn n_modes(&self) -> usize {
        self.values.nrows()
    }

    /// The matrix with columns reordered by `permutation`.
    pub fn permuted(&self) -> DMatrix<f64> {
        let n = self.n_modes();
        DMatrix::from_fn(n, n, |i, j| self.values[(i, self.permutation[j])])
    }

    pub fn trace(&self) -> f64 {
        self.permutation.iter().enumerate().map(|(i, &j)| self.values[(i, j)]).sum()
    }
}

pub fn mac_matrix(phi_s: &DMatrix<f64>, phi_t: &DMatrix<f64>) -> Result<MacMatrix> {
    if phi_s.ncols() != phi_t.ncols() {
        return Err(Error::DimensionMismatch { expected: phi_s.ncols(), actual: phi_t.ncols() });
    }
    if phi_s.nrows() != phi_t.nrows() {
        return Err(Error::DimensionMismatch { expected: phi_s.nrows(), actual: phi_t.nrows() });
    }
    let n = phi_s.ncols();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            values[(i, j)] = mac_view(phi_s.column(i), phi_t.column(j))?;
        }
    }
    Ok(MacMatrix { values, permutation: (0..n).collect() })
}

/// Column permutation maximising the trace; ties resolve to the
/// lexicographically smallest permutation.
pub fn optimal_permutation(m: &MacMatrix) -> Vec<usize> {
    let n = m.n_modes();
    let weights: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m.values[(i, j)]).collect();
    max_weight_assignment(&weights, n, TIE_TOL).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub n_modes: usize,
}

/// Normalised trace of the optimally permuted MAC matrix over the first
/// `n_modes` modes of each model.
pub fn similarity_score(phi_s: &DMatrix<f64>, phi_t: &DMatrix<f64>, n_modes: usize) -> Result<SimilarityScore> {
    let available = phi_s.ncols().min(phi_t.ncols());
    if n_modes == 0 || n_modes > available {
        return Err(Error::InvalidModeCount { requested: n_modes, available });
    }
    let mut m = mac_matrix(&phi_s.columns(0, n_modes).into_owned(), &phi_t.columns(0, n_modes).into_owned())?;
    m.permutation = optimal_permutation(&m);
    let value = (m.trace() / n_modes as f64).clamp(0.0, 1.0);
    Ok(SimilarityScore { value, n_modes })
}
