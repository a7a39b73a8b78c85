use serde::{Deserialize, Serialize};

use super::geometric::{knn_radii, GeometricGraphSpec};
use super::points::{evaluate_density, sample_points, DensitySpec, PointCloud};
use super::GeneratorError;
use crate::graph::Graph;

/// Volume of the unit ball in R^d, via η_d = η_{d-2} · 2π/d.
pub fn eta_d(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => eta_d(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusStats {
    /// Neighbor count the radii refer to.
    pub k: usize,
    pub r_k_min: f64,
    pub r_k_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub eta_d: f64,
    /// `a (k/n)^{1/d}` with `a = 1/(2 p_max η_d)^{1/d}`.
    pub predicted_r_k_min: f64,
    /// `ã (k/n)^{1/d}` with `ã = 2/(p_min η_d α)^{1/d}`.
    pub predicted_r_k_max: f64,
    /// `n ε^d η_d p_max`, when the spec carries a radius.
    pub predicted_eps_degree_max: Option<f64>,
    /// `n ε^d η_d p_min α`, when the spec carries a radius.
    pub predicted_eps_degree_min: Option<f64>,
    /// Boundary regularity constant used in the predictions.
    pub alpha: f64,
}

/// Fraction of a small ball around a boundary point that stays in the
/// support: a corner of a box keeps `2^{-d}`; unbounded supports keep all.
pub fn boundary_alpha(spec: &DensitySpec) -> f64 {
    match spec {
        DensitySpec::Uniform { lower, .. } => 0.5f64.powi(lower.len() as i32),
        DensitySpec::GaussianMixture { .. } => 1.0,
    }
}

/// kNN radii for `k = spec.k` (or `k = 1` for kinds without a neighbor
/// count) together with the degree range of `g` and the predicted orders.
/// Density extremes are taken over the sample points.
pub fn radius_and_degree_stats(cloud: &PointCloud, spec: &GeometricGraphSpec, g: &Graph) -> RadiusStats {
    let n = cloud.len();
    let d = cloud.dim();
    let k = spec.k.unwrap_or(1).min(n.saturating_sub(1)).max(1);
    let radii = if n > 1 { knn_radii(cloud, k) } else { vec![0.0] };
    let r_k_min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let r_k_max = radii.iter().copied().fold(0.0, f64::max);
    let densities: Vec<f64> = cloud.points().map(|x| evaluate_density(&cloud.density, x)).collect();
    let p_min = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = densities.iter().copied().fold(0.0, f64::max);
    let eta = eta_d(d);
    let alpha = boundary_alpha(&cloud.density);
    let inv_d = 1.0 / d as f64;
    let frac = (k as f64 / n as f64).powf(inv_d);
    let a = (2.0 * p_max * eta).powf(-inv_d);
    let a_tilde = 2.0 * (p_min * eta * alpha).powf(-inv_d);
    let eps_volume = spec.eps.map(|e| n as f64 * e.powi(d as i32) * eta);
    RadiusStats {
        k,
        r_k_min,
        r_k_max,
        d_min: g.d_min(),
        d_max: g.d_max(),
        eta_d: eta,
        predicted_r_k_min: a * frac,
        predicted_r_k_max: a_tilde * frac,
        predicted_eps_degree_max: eps_volume.map(|v| v * p_max),
        predicted_eps_degree_min: eps_volume.map(|v| v * p_min * alpha),
        alpha,
    }
}

/// Number of points in each cell of a regular grid with `cells_per_dim`
/// cells per axis over the rectangle of a uniform density.
pub fn cell_counts(cloud: &PointCloud, cells_per_dim: usize) -> Result<Vec<usize>, GeneratorError> {
    let (lower, upper) = cloud
        .density
        .rectangle()
        .ok_or_else(|| GeneratorError::InvalidDensitySpec("cell counts need a rectangular domain".into()))?;
    let d = cloud.dim();
    let mut counts = vec![0usize; cells_per_dim.pow(d as u32)];
    for x in cloud.points() {
        let mut key = 0;
        for k in (0..d).rev() {
            let t = (x[k] - lower[k]) / (upper[k] - lower[k]);
            let c = ((t * cells_per_dim as f64) as usize).min(cells_per_dim - 1);
            key = key * cells_per_dim + c;
        }
        counts[key] += 1;
    }
    Ok(counts)
}

/// Tail bound `K exp(-δ² n b_min / 3)` on the event that some cell receives
/// at most `(1-δ) n b_min` points.
pub fn concentration_bound(n: usize, cells: usize, b_min: f64, delta: f64) -> f64 {
    cells as f64 * (-delta * delta * n as f64 * b_min / 3.0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationResult {
    pub trials: usize,
    pub violations: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Binomial standard deviation of the frequency at the bound.
    pub sigma: f64,
}

/// Repeats a uniform sample on `[0,1]^d` over `trials` seeds and records how
/// often the smallest cell count falls to `(1-δ) n b_min` or below.
pub fn concentration_experiment(
    d: usize,
    n: usize,
    cells_per_dim: usize,
    delta: f64,
    trials: usize,
    base_seed: u64,
) -> Result<ConcentrationResult, GeneratorError> {
    let spec = DensitySpec::unit_cube(d);
    let cells = cells_per_dim.pow(d as u32);
    let b_min = 1.0 / cells as f64;
    let threshold = (1.0 - delta) * n as f64 * b_min;
    let mut violations = 0;
    for t in 0..trials {
        let cloud = sample_points(&spec, n, crate::rng::derive_seed(base_seed, t as u64))?;
        let min = cell_counts(&cloud, cells_per_dim)?.into_iter().min().unwrap_or(0);
        if min as f64 <= threshold {
            violations += 1;
        }
    }
    let bound = concentration_bound(n, cells, b_min, delta);
    let q = bound.min(1.0);
    Ok(ConcentrationResult {
        trials,
        violations,
        frequency: violations as f64 / trials as f64,
        bound,
        sigma: (q * (1.0 - q) / trials as f64).sqrt(),
    })
}
