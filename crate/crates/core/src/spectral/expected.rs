use faer::Mat;
use serde::{Deserialize, Serialize};

use super::SpectralError;
use crate::dense::sym_eigenvalues;

/// Confidence level of the expected-spectrum deviation radius.
pub const DEFAULT_CONFIDENCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapModel {
    Eps,
    Knn,
}

/// Predicted orders of `1 − λ_2` and `1 − |λ_n|`: `(ε², ε^{d+1}/n)` for the
/// ε-graph and `((k/n)^{2/d}, k^{2/d}/n^{(d+2)/d})` for the kNN graph.
pub fn gap_order_prediction(model: GapModel, n: usize, param: f64, dim: usize) -> (f64, f64) {
    let n = n as f64;
    let d = dim as f64;
    match model {
        GapModel::Eps => (param * param, param.powf(d + 1.0) / n),
        GapModel::Knn => ((param / n).powf(2.0 / d), param.powf(2.0 / d) / n.powf((d + 2.0) / d)),
    }
}

/// `2 √(3 log(4n/ε) / d̄_min)`.
pub fn chung_radcliffe_radius(n: usize, d_min_expected: f64, confidence: f64) -> f64 {
    2.0 * (3.0 * (4.0 * n as f64 / confidence).ln() / d_min_expected).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedSpectrum {
    /// Eigenvalues of the expected normalized Laplacian, ascending.
    pub laplacian_eigenvalues: Vec<f64>,
    /// Eigenvalues of the expected transition operator, descending.
    pub transition_eigenvalues: Vec<f64>,
    /// `1 − λ̄_2`
    pub expected_gap: f64,
    pub d_min_expected: f64,
    /// Bound on `|μ_j − μ̄_j|` holding with probability at least `1 − confidence`.
    pub deviation_radius: f64,
    pub confidence: f64,
}

impl ExpectedSpectrum {
    fn from_transition(mut transition: Vec<f64>, n: usize, d_min_expected: f64, confidence: f64) -> Self {
        transition.sort_by(|a, b| b.total_cmp(a));
        let laplacian_eigenvalues = transition.iter().rev().map(|l| 1.0 - l).collect();
        ExpectedSpectrum {
            expected_gap: 1.0 - transition.get(1).copied().unwrap_or(0.0),
            laplacian_eigenvalues,
            transition_eigenvalues: transition,
            d_min_expected,
            deviation_radius: chung_radcliffe_radius(n, d_min_expected, confidence),
            confidence,
        }
    }
}

/// Spectrum of `I − D̄^{-1/2} Ā D̄^{-1/2}` for the edge-probability matrix
/// `Ā`, with the deviation radius for sampled graphs.
pub fn expected_laplacian_comparison(p: &Mat<f64>, confidence: f64) -> Result<ExpectedSpectrum, SpectralError> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(SpectralError::InvalidProbability(f64::NAN));
    }
    for i in 0..n {
        for j in 0..n {
            let v = p[(i, j)];
            if !(0.0..=1.0).contains(&v) || v != p[(j, i)] {
                return Err(SpectralError::InvalidProbability(v));
            }
        }
    }
    let degrees: Vec<f64> = (0..n).map(|i| (0..n).map(|j| p[(i, j)]).sum()).collect();
    if degrees.iter().any(|&d| d <= 0.0) {
        return Err(SpectralError::InvalidProbability(0.0));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let a = Mat::from_fn(n, n, |i, j| p[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let transition = sym_eigenvalues(&a).map_err(|_| SpectralError::EigenFailure)?;
    let d_min = degrees.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ExpectedSpectrum::from_transition(transition, n, d_min, confidence))
}

/// Closed form for the planted bisection with self-loops: the expected
/// transition operator has eigenvalues `1`, `(p−q)/(p+q)` and `n − 2` zeros.
pub fn planted_expected_spectrum(n: usize, p: f64, q: f64, confidence: f64) -> Result<ExpectedSpectrum, SpectralError> {
    for v in [p, q] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SpectralError::InvalidProbability(v));
        }
    }
    if p + q <= 0.0 {
        return Err(SpectralError::InvalidProbability(0.0));
    }
    let mut transition = vec![0.0; n];
    transition[0] = 1.0;
    if n > 1 {
        transition[1] = (p - q) / (p + q);
    }
    let d = n as f64 * (p + q) / 2.0;
    Ok(ExpectedSpectrum::from_transition(transition, n, d, confidence))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_plug_ins() {
        assert!((gap_order_prediction(GapModel::Eps, 1000, 0.1, 2).0 - 0.01).abs() < 1e-15);
        assert!((gap_order_prediction(GapModel::Knn, 5000, 50.0, 2).0 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn er_expected_spectrum() {
        let n = 40;
        let p = Mat::from_fn(n, n, |_, _| 0.3);
        let e = expected_laplacian_comparison(&p, DEFAULT_CONFIDENCE).unwrap();
        assert!((e.transition_eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(e.transition_eigenvalues[1..].iter().all(|l| l.abs() < 1e-12));
        assert!((e.expected_gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn planted_closed_form_matches_dense() {
        let (n, p, q) = (30, 0.2, 0.05);
        let m = Mat::from_fn(n, n, |i, j| if (i < n / 2) == (j < n / 2) { p } else { q });
        let dense = expected_laplacian_comparison(&m, DEFAULT_CONFIDENCE).unwrap();
        let closed = planted_expected_spectrum(n, p, q, DEFAULT_CONFIDENCE).unwrap();
        assert!((closed.transition_eigenvalues[1] - 0.6).abs() < 1e-12);
        assert!((closed.expected_gap - 0.4).abs() < 1e-12);
        for (a, b) in dense.transition_eigenvalues.iter().zip(&closed.transition_eigenvalues) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((dense.deviation_radius - closed.deviation_radius).abs() < 1e-12);
    }

    #[test]
    fn invalid_probabilities() {
        let m = Mat::from_fn(3, 3, |i, j| if i == 0 && j == 1 { 1.5 } else { 0.5 });
        assert!(matches!(
            expected_laplacian_comparison(&m, DEFAULT_CONFIDENCE),
            Err(SpectralError::InvalidProbability(_))
        ));
        assert!(planted_expected_spectrum(4, -0.1, 0.1, 0.1).is_err());
    }
}
