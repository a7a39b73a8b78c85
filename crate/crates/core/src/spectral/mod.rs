//! Spectral gaps of the natural random walk and every bound built on them.

mod expected;
mod paths;

pub use expected::{
    chung_radcliffe_radius, expected_laplacian_comparison, gap_order_prediction, planted_expected_spectrum,
    ExpectedSpectrum, GapModel, DEFAULT_CONFIDENCE,
};
pub use paths::{
    canonical_paths, canonical_paths_with, cell_path, cell_path_pass_counts, path_grid_cells, CanonicalPathStats,
    DEFAULT_REDRAWS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::sym_eigenvalues;
use crate::exact::{pair_metrics, ExactError, PairMetrics, PseudoInverse};
use crate::graph::{connectivity_flags, normalized_adjacency, Graph};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("graph is bipartite")]
    Bipartite,
    #[error("eigendecomposition failed")]
    EigenFailure,
    #[error("bounds need two distinct vertices")]
    SameVertex,
    #[error("weighted and unweighted graphs have different edge sets")]
    EdgeSetMismatch,
    #[error("edge ({0}, {1}) has zero weight")]
    ZeroWeight(usize, usize),
    #[error("graph is not complete")]
    NotComplete,
    #[error("grid cell {0} holds no sample point")]
    EmptyCell(usize),
    #[error("canonical paths need a uniform density on a rectangle")]
    DomainNotRectangle,
    #[error("canonical paths need an unweighted graph")]
    NotUnweighted,
    #[error("edge ({0}, {1}) required by a canonical path is missing; the grid is too coarse")]
    MissingPathEdge(usize, usize),
    #[error("cannot force an odd path length: every cell on the path holds a single point")]
    OddLengthUnavailable,
    #[error("probability {0} outside [0, 1] or asymmetric matrix")]
    InvalidProbability(f64),
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// Eigenvalues of the transition matrix `P`, descending, with the derived gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambdas: Vec<f64>,
    /// `1 − λ_2`
    pub gap2: f64,
    /// `1 − max(λ_2, |λ_n|)`
    pub gap_abs: f64,
}

impl SpectralSummary {
    pub fn lambda2(&self) -> f64 {
        self.lambdas[1]
    }

    pub fn lambda_n(&self) -> f64 {
        *self.lambdas.last().unwrap()
    }

    pub fn from_descending(lambdas: Vec<f64>) -> Self {
        let l2 = lambdas[1];
        let ln = *lambdas.last().unwrap();
        SpectralSummary {
            gap2: 1.0 - l2,
            gap_abs: 1.0 - l2.max(ln.abs()),
            lambdas,
        }
    }
}

/// Spectrum of `P` through the similar symmetric matrix `D^{-1/2} W D^{-1/2}`.
pub fn spectrum(g: &Graph) -> Result<SpectralSummary, SpectralError> {
    if g.n() < 2 || !connectivity_flags(g).connected {
        return Err(SpectralError::Disconnected);
    }
    let a = normalized_adjacency(g).map_err(|_| SpectralError::Disconnected)?;
    let mut lambdas = sym_eigenvalues(&a).map_err(|_| SpectralError::EigenFailure)?;
    lambdas.reverse();
    Ok(SpectralSummary::from_descending(lambdas))
}

/// The spectrum of `P` read off an existing pseudoinverse (`λ = 1 − μ`).
pub fn spectrum_from_pinv(pinv: &PseudoInverse) -> SpectralSummary {
    let lambdas: Vec<f64> = pinv.eigenvalues.iter().map(|m| 1.0 - m).collect();
    SpectralSummary::from_descending(lambdas)
}

fn require_bound_preconditions(g: &Graph) -> Result<(), SpectralError> {
    let flags = connectivity_flags(g);
    if !flags.connected {
        return Err(SpectralError::Disconnected);
    }
    if flags.bipartite {
        return Err(SpectralError::Bipartite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub i: usize,
    pub j: usize,
    /// `|H_ij/vol − 1/d_j|`
    pub deviation_hitting: f64,
    /// `|C_ij/vol − (1/d_i + 1/d_j)|`
    pub deviation_commute: f64,
    pub bound_hitting_rhs: f64,
    pub bound_commute_rhs_tight: f64,
    pub bound_commute_rhs_loose: f64,
    pub lovasz_rhs: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.deviation_hitting <= self.bound_hitting_rhs
            && self.deviation_commute <= self.bound_commute_rhs_tight
            && self.bound_commute_rhs_tight <= self.bound_commute_rhs_loose
    }
}

/// Deviations of the exact hitting and commute times from their degree
/// approximations, next to the right-hand sides that bound them.
pub fn key_prop_bounds(g: &Graph, s: &SpectralSummary, m: &PairMetrics) -> Result<BoundReport, SpectralError> {
    require_bound_preconditions(g)?;
    if m.i == m.j {
        return Err(SpectralError::SameVertex);
    }
    let vol = g.volume();
    let (di, dj) = (g.degree(m.i), g.degree(m.j));
    let d_min = g.d_min();
    let w_max = g.w_max();
    let inv_gap = 1.0 / s.gap2;
    let pair = 1.0 / di + 1.0 / dj;
    Ok(BoundReport {
        i: m.i,
        j: m.j,
        deviation_hitting: (m.hitting_ij / vol - 1.0 / dj).abs(),
        deviation_commute: (m.commute / vol - pair).abs(),
        bound_hitting_rhs: 2.0 * (inv_gap + 1.0) * w_max / (d_min * d_min),
        bound_commute_rhs_tight: (w_max / d_min) * (inv_gap + 2.0) * pair,
        // Same factorization as the tight bound, so tight ≤ loose survives rounding
        // when d_i = d_j = d_min.
        bound_commute_rhs_loose: (w_max / d_min) * (inv_gap + 2.0) * (2.0 / d_min),
        lovasz_rhs: lovasz_rhs(g, s),
    })
}

/// [`key_prop_bounds`] with the exact metrics computed from `pinv`.
pub fn key_prop_bounds_for_pair(
    g: &Graph,
    s: &SpectralSummary,
    pinv: &PseudoInverse,
    i: usize,
    j: usize,
) -> Result<BoundReport, SpectralError> {
    let m = pair_metrics(g, pinv, i, j)?;
    key_prop_bounds(g, s, &m)
}

fn lovasz_rhs(g: &Graph, s: &SpectralSummary) -> f64 {
    (1.0 / s.gap2) * 2.0 / g.d_min()
}

/// `(1/(1−λ_2)) · 2/d_min`, the classical bound on the commute deviation.
pub fn lovasz_bound(g: &Graph, s: &SpectralSummary, i: usize, j: usize) -> Result<f64, SpectralError> {
    require_bound_preconditions(g)?;
    if i == j {
        return Err(SpectralError::SameVertex);
    }
    Ok(lovasz_rhs(g, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedGapBounds {
    /// `½ max_{i,j} Σ_k |w_ik/d_i − w_jk/d_j|`, an upper bound on `λ_2`.
    pub zen_upper_on_lambda2: f64,
    /// `(1 − λ_2ᵘ) w_min/w_max`, a lower bound on the weighted gap `1 − λ_2ʷ`.
    pub sandwich_lower: f64,
    /// `(1 − λ_2ᵘ) w_max/w_min`, an upper bound on the weighted gap.
    pub sandwich_upper: f64,
}

pub fn weighted_gap_bounds(weighted: &Graph, unweighted: &Graph) -> Result<WeightedGapBounds, SpectralError> {
    if weighted.n() != unweighted.n() {
        return Err(SpectralError::EdgeSetMismatch);
    }
    for i in 0..weighted.n() {
        if weighted.row_targets(i) != unweighted.row_targets(i) {
            return Err(SpectralError::EdgeSetMismatch);
        }
    }
    if let Some((i, j, _)) = weighted.edges().find(|e| e.2 <= 0.0) {
        return Err(SpectralError::ZeroWeight(i, j));
    }
    let n = weighted.n();
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        let d = weighted.degree(i);
        for (k, w) in weighted.neighbors(i) {
            row[k] = w / d;
        }
    }
    let mut zen = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).abs()).sum();
            zen = zen.max(0.5 * s);
        }
    }
    let gap_u = spectrum(unweighted)?.gap2;
    let ratio = weighted.w_min() / weighted.w_max();
    Ok(WeightedGapBounds {
        zen_upper_on_lambda2: zen,
        sandwich_lower: gap_u * ratio,
        sandwich_upper: gap_u / ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullyConnectedBound {
    /// `4 n (w_max/w_min) w_max/d_min²`
    pub rhs1: f64,
    /// `4 (w_max²/w_min³)/n`
    pub rhs2: f64,
}

/// Bounds on `|n/vol · H_ij − n/d_j|` for a complete weighted graph.
pub fn fully_connected_bound(g: &Graph) -> Result<FullyConnectedBound, SpectralError> {
    if !g.is_complete() {
        return Err(SpectralError::NotComplete);
    }
    let n = g.n() as f64;
    let (w_min, w_max, d_min) = (g.w_min(), g.w_max(), g.d_min());
    Ok(FullyConnectedBound {
        rhs1: 4.0 * n * (w_max / w_min) * w_max / (d_min * d_min),
        rhs2: 4.0 * w_max * w_max / (w_min * w_min * w_min) / n,
    })
}
