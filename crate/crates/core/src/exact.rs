//! Exact hitting times, commute distances and resistances.
//!
//! Three independent routes: the spectral pseudoinverse of `L_sym`, grounded
//! linear solves on the first-step equations, and Monte Carlo walks. The
//! grounded solve is the reference oracle. [`GroundedLaplacian`] reuses one
//! Cholesky factor for many pairs on large graphs, where a full
//! eigendecomposition would dominate the runtime.

use faer::Mat;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{max_abs_diff, sym_eigen, sym_eigenvalues, Cholesky};
use crate::graph::{connectivity_flags, laplacian, normalized_adjacency, Graph, LaplacianKind};
use crate::rng::stream_rng;

pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("graph is bipartite")]
    Bipartite,
    #[error("eigendecomposition failed")]
    EigenFailure,
    #[error("grounded system is numerically singular")]
    SingularSystem,
    #[error("a walk exceeded the step cap of {0}")]
    StepCapExceeded(u64),
    #[error("vertex {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("at least one walk is required")]
    NoWalks,
}

fn require_connected(g: &Graph) -> Result<(), ExactError> {
    if g.n() == 0 || !connectivity_flags(g).connected {
        return Err(ExactError::Disconnected);
    }
    if g.n() == 1 {
        // A lone vertex has zero degree and no walk to speak of.
        return Err(ExactError::Disconnected);
    }
    Ok(())
}

fn check_index(g: &Graph, index: usize) -> Result<(), ExactError> {
    if index < g.n() {
        Ok(())
    } else {
        Err(ExactError::IndexOutOfRange { index, n: g.n() })
    }
}

/// Moore–Penrose pseudoinverse of `L_sym`, kept as its eigendecomposition,
/// together with the pseudoinverse of the unnormalized Laplacian.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    /// Eigenvalues of `L_sym`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors of `L_sym` as columns, matching `eigenvalues`.
    pub basis: Mat<f64>,
    /// Eigenvalues at or below this are treated as zero.
    pub cutoff: f64,
    sqrt_degrees: Vec<f64>,
    volume: f64,
    unnormalized: Mat<f64>,
}

pub fn pseudo_inverse(g: &Graph) -> Result<PseudoInverse, ExactError> {
    require_connected(g)?;
    let n = g.n();
    let lsym = laplacian(g, LaplacianKind::Normalized)
        .map_err(|_| ExactError::Disconnected)?
        .matrix;
    let (eigenvalues, basis) = sym_eigen(&lsym).map_err(|_| ExactError::EigenFailure)?;
    let cutoff = 1e-10 * eigenvalues.last().copied().unwrap_or(0.0).abs();

    // L† = (L + J/n)^{-1} − J/n for connected graphs.
    let l = laplacian(g, LaplacianKind::Unnormalized).unwrap().matrix;
    let shift = 1.0 / n as f64;
    let shifted = Mat::from_fn(n, n, |i, j| l[(i, j)] + shift);
    let inv = Cholesky::new(&shifted)
        .map_err(|_| ExactError::SingularSystem)?
        .inverse();
    let unnormalized = Mat::from_fn(n, n, |i, j| inv[(i, j)] - shift);

    Ok(PseudoInverse {
        eigenvalues,
        basis,
        cutoff,
        sqrt_degrees: g.degrees().iter().map(|d| d.sqrt()).collect(),
        volume: g.volume(),
        unnormalized,
    })
}

impl PseudoInverse {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of eigenvalues treated as zero.
    pub fn null_dimension(&self) -> usize {
        self.eigenvalues.iter().filter(|&&m| m <= self.cutoff).count()
    }

    /// Eigenvalues of `L_sym†`, in the order of `eigenvalues`.
    pub fn inverse_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&m| if m > self.cutoff { 1.0 / m } else { 0.0 })
            .collect()
    }

    /// `L_sym† v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let inv = self.inverse_eigenvalues();
        let mut out = vec![0.0; n];
        for k in 0..n {
            if inv[k] == 0.0 {
                continue;
            }
            let coeff: f64 = (0..n).map(|i| self.basis[(i, k)] * v[i]).sum::<f64>() * inv[k];
            for i in 0..n {
                out[i] += coeff * self.basis[(i, k)];
            }
        }
        out
    }

    /// Dense `L_sym†`.
    pub fn matrix(&self) -> Mat<f64> {
        let n = self.n();
        let inv = self.inverse_eigenvalues();
        let mut out = Mat::zeros(n, n);
        for k in 0..n {
            if inv[k] == 0.0 {
                continue;
            }
            for j in 0..n {
                let s = inv[k] * self.basis[(j, k)];
                for i in 0..n {
                    out[(i, j)] += self.basis[(i, k)] * s;
                }
            }
        }
        out
    }

    /// Pseudoinverse of `L = D − W`.
    pub fn unnormalized(&self) -> &Mat<f64> {
        &self.unnormalized
    }

    /// `R_ij = ⟨e_i − e_j, L† (e_i − e_j)⟩`.
    pub fn resistance(&self, i: usize, j: usize) -> f64 {
        let l = &self.unnormalized;
        l[(i, i)] + l[(j, j)] - 2.0 * l[(i, j)]
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn sqrt_degrees(&self) -> &[f64] {
        &self.sqrt_degrees
    }
}

/// `H_ij = vol ⟨e_j/√d_j, L_sym† (e_j/√d_j − e_i/√d_i)⟩`, expanded over the
/// eigenbasis. `H_ii = 0`.
pub fn hitting_closed_form(pinv: &PseudoInverse, i: usize, j: usize) -> f64 {
    if i == j {
        return 0.0;
    }
    let (si, sj) = (pinv.sqrt_degrees[i], pinv.sqrt_degrees[j]);
    let mut acc = 0.0;
    for (k, &mu) in pinv.eigenvalues.iter().enumerate() {
        if mu <= pinv.cutoff {
            continue;
        }
        let uj = pinv.basis[(j, k)] / sj;
        let ui = pinv.basis[(i, k)] / si;
        acc += uj * (uj - ui) / mu;
    }
    pinv.volume * acc
}

/// Solves the first-step equations `h = 1 + P h` on `V∖{j}` with `h_j = 0`,
/// written as `L h = d` after multiplying by `D`. Returns `H_ij` for all `i`.
pub fn hitting_linear_solve(g: &Graph, target: usize) -> Result<Vec<f64>, ExactError> {
    check_index(g, target)?;
    require_connected(g)?;
    let n = g.n();
    let keep: Vec<usize> = (0..n).filter(|&v| v != target).collect();
    let mut pos = vec![usize::MAX; n];
    for (r, &v) in keep.iter().enumerate() {
        pos[v] = r;
    }
    let mut m = Mat::zeros(n - 1, n - 1);
    for (r, &v) in keep.iter().enumerate() {
        m[(r, r)] += g.degree(v);
        for (u, w) in g.neighbors(v) {
            if u != target {
                m[(r, pos[u])] -= w;
            }
        }
    }
    let rhs: Vec<f64> = keep.iter().map(|&v| g.degree(v)).collect();
    let h = Cholesky::new(&m).map_err(|_| ExactError::SingularSystem)?.solve(&rhs);
    let mut out = vec![0.0; n];
    for (r, &v) in keep.iter().enumerate() {
        out[v] = h[r];
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(ExactError::SingularSystem);
    }
    Ok(out)
}

/// Laplacian with one vertex grounded, factored once. Its zero-padded
/// inverse `M` gives `R_ij = M_ii + M_jj − 2 M_ij` and
/// `H_ij = (Md)_i − vol M_ij − (Md)_j + vol M_jj`.
pub struct GroundedLaplacian {
    n: usize,
    root: usize,
    factor: Cholesky,
    md: Vec<f64>,
    volume: f64,
}

impl GroundedLaplacian {
    pub fn new(g: &Graph, root: usize) -> Result<Self, ExactError> {
        check_index(g, root)?;
        require_connected(g)?;
        let n = g.n();
        let idx = |v: usize| if v < root { v } else { v - 1 };
        let mut m = Mat::zeros(n - 1, n - 1);
        for v in (0..n).filter(|&v| v != root) {
            m[(idx(v), idx(v))] += g.degree(v);
            for (u, w) in g.neighbors(v) {
                if u != root {
                    m[(idx(v), idx(u))] -= w;
                }
            }
        }
        let factor = Cholesky::new(&m).map_err(|_| ExactError::SingularSystem)?;
        let mut grounded = GroundedLaplacian { n, root, factor, md: Vec::new(), volume: g.volume() };
        grounded.md = grounded.apply_inverse(g.degrees());
        Ok(grounded)
    }

    /// `M b`, the grounded inverse applied to `b` (the root entry of `b` is ignored).
    pub fn apply_inverse(&self, b: &[f64]) -> Vec<f64> {
        let reduced: Vec<f64> = (0..self.n).filter(|&v| v != self.root).map(|v| b[v]).collect();
        let x = self.factor.solve(&reduced);
        let mut out = Vec::with_capacity(self.n);
        out.extend_from_slice(&x[..self.root]);
        out.push(0.0);
        out.extend_from_slice(&x[self.root..]);
        out
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.n];
        e[j] = 1.0;
        self.apply_inverse(&e)
    }

    /// Potentials for a unit current injected at `s` and extracted at `t`.
    pub fn potential(&self, s: usize, t: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.n];
        b[s] += 1.0;
        b[t] -= 1.0;
        self.apply_inverse(&b)
    }

    pub fn resistance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let phi = self.potential(i, j);
        phi[i] - phi[j]
    }

    /// `H_ij` for every source `i` and the fixed target `j`.
    pub fn hitting_to(&self, j: usize) -> Vec<f64> {
        let mj = self.column(j);
        let shift = self.md[j] - self.volume * mj[j];
        (0..self.n)
            .map(|i| if i == j { 0.0 } else { self.md[i] - self.volume * mj[i] - shift })
            .collect()
    }

    pub fn hitting(&self, i: usize, j: usize) -> f64 {
        self.hitting_to(j)[i]
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Standard error of the mean; infinite for a single walk.
    pub stderr: f64,
    pub walks: usize,
}

/// Mean first-hit step count of `walks` independent walks from `i` to `j`.
/// Walk `w` uses stream `w` of `seed`.
pub fn monte_carlo_hitting(
    g: &Graph,
    i: usize,
    j: usize,
    walks: usize,
    step_cap: u64,
    seed: u64,
) -> Result<MonteCarloEstimate, ExactError> {
    check_index(g, i)?;
    check_index(g, j)?;
    require_connected(g)?;
    if walks == 0 {
        return Err(ExactError::NoWalks);
    }
    let n = g.n();
    let cumulative: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            let mut acc = 0.0;
            g.row_weights(v)
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect()
        })
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for w in 0..walks {
        let mut rng = stream_rng(seed, w as u64);
        let mut v = i;
        let mut steps = 0u64;
        while v != j {
            if steps >= step_cap {
                return Err(ExactError::StepCapExceeded(step_cap));
            }
            let cum = &cumulative[v];
            let u = rng.random::<f64>() * cum[cum.len() - 1];
            let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            v = g.row_targets(v)[k];
            steps += 1;
        }
        let s = steps as f64;
        sum += s;
        sum_sq += s * s;
    }
    let m = walks as f64;
    let mean = sum / m;
    let stderr = if walks > 1 {
        let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
        (var / m).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(MonteCarloEstimate { mean, stderr, walks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub i: usize,
    pub j: usize,
    pub hitting_ij: f64,
    pub hitting_ji: f64,
    pub commute: f64,
    /// From the quadratic form of the unnormalized pseudoinverse.
    pub resistance: f64,
    /// `1/d_i + 1/d_j`.
    pub approx: f64,
    pub volume: f64,
}

impl PairMetrics {
    /// `C_ij / vol`, the resistance obtained from the hitting times.
    pub fn resistance_from_commute(&self) -> f64 {
        self.commute / self.volume
    }

    /// Commute distance multiplied by `factor`, for rescaled reporting.
    pub fn rescaled_commute(&self, factor: f64) -> f64 {
        self.commute * factor
    }

    /// `|C/vol − (1/d_i + 1/d_j)|`.
    pub fn commute_deviation(&self) -> f64 {
        (self.resistance_from_commute() - self.approx).abs()
    }
}

pub fn pair_metrics(g: &Graph, pinv: &PseudoInverse, i: usize, j: usize) -> Result<PairMetrics, ExactError> {
    check_index(g, i)?;
    check_index(g, j)?;
    let hitting_ij = hitting_closed_form(pinv, i, j);
    let hitting_ji = hitting_closed_form(pinv, j, i);
    let approx = if i == j { 0.0 } else { 1.0 / g.degree(i) + 1.0 / g.degree(j) };
    Ok(PairMetrics {
        i,
        j,
        hitting_ij,
        hitting_ji,
        commute: hitting_ij + hitting_ji,
        resistance: pinv.resistance(i, j),
        approx,
        volume: g.volume(),
    })
}

/// Same fields as [`pair_metrics`], computed from a grounded factor.
pub fn pair_metrics_grounded(g: &Graph, grounded: &GroundedLaplacian, i: usize, j: usize) -> PairMetrics {
    let hitting_ij = grounded.hitting(i, j);
    let hitting_ji = grounded.hitting(j, i);
    PairMetrics {
        i,
        j,
        hitting_ij,
        hitting_ji,
        commute: hitting_ij + hitting_ji,
        resistance: grounded.resistance(i, j),
        approx: if i == j { 0.0 } else { 1.0 / g.degree(i) + 1.0 / g.degree(j) },
        volume: g.volume(),
    }
}

/// Frobenius residual between `L_sym†` and `I − P_1 + M`, where
/// `M = Σ_{r≥2} λ_r/(1−λ_r) v_r v_rᵀ` is assembled from a fresh
/// eigendecomposition of `A = D^{-1/2} W D^{-1/2}`.
pub fn lemma_m_identity_check(pinv: &PseudoInverse, g: &Graph) -> Result<f64, ExactError> {
    let flags = connectivity_flags(g);
    if !flags.connected {
        return Err(ExactError::Disconnected);
    }
    if flags.bipartite {
        return Err(ExactError::Bipartite);
    }
    let n = g.n();
    let a = normalized_adjacency(g).map_err(|_| ExactError::Disconnected)?;
    let (lambda, v) = sym_eigen(&a).map_err(|_| ExactError::EigenFailure)?;
    let sqrt_d = pinv.sqrt_degrees();
    let vol = g.volume();
    let mut assembled = Mat::from_fn(n, n, |i, j| {
        f64::from(u8::from(i == j)) - sqrt_d[i] * sqrt_d[j] / vol
    });
    // Eigenvalues come ascending; the last one is λ_1 = 1.
    for r in 0..n - 1 {
        let c = lambda[r] / (1.0 - lambda[r]);
        for j in 0..n {
            let s = c * v[(j, r)];
            for i in 0..n {
                assembled[(i, j)] += v[(i, r)] * s;
            }
        }
    }
    let target = pinv.matrix();
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            sum += (assembled[(i, j)] - target[(i, j)]).powi(2);
        }
    }
    Ok(sum.sqrt())
}

/// Largest entrywise deviation of `L_sym† L_sym` from `I − P_1`.
pub fn reconstruction_residual(pinv: &PseudoInverse, g: &Graph) -> f64 {
    let n = g.n();
    let lsym = laplacian(g, LaplacianKind::Normalized).unwrap().matrix;
    let prod = pinv.matrix() * &lsym;
    let sqrt_d = pinv.sqrt_degrees();
    let vol = g.volume();
    let expected = Mat::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - sqrt_d[i] * sqrt_d[j] / vol);
    max_abs_diff(&prod, &expected)
}

/// Eigenvalues of `L_sym`, ascending, without eigenvectors.
pub fn normalized_laplacian_eigenvalues(g: &Graph) -> Result<Vec<f64>, ExactError> {
    let lsym = laplacian(g, LaplacianKind::Normalized).map_err(|_| ExactError::Disconnected)?.matrix;
    sym_eigenvalues(&lsym).map_err(|_| ExactError::EigenFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, named};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn single_edge_pseudoinverse() {
        let g = named::path(2);
        let p = pseudo_inverse(&g).unwrap();
        assert!(close(p.eigenvalues[0], 0.0, 1e-12) && close(p.eigenvalues[1], 2.0, 1e-12));
        let inv = p.inverse_eigenvalues();
        assert_eq!(inv[0], 0.0);
        assert!(close(inv[1], 0.5, 1e-12));
        assert_eq!(p.null_dimension(), 1);
    }

    #[test]
    fn triangle_pseudoinverse() {
        let p = pseudo_inverse(&named::complete(3)).unwrap();
        let inv = p.inverse_eigenvalues();
        assert_eq!(inv[0], 0.0);
        assert!(close(inv[1], 2.0 / 3.0, 1e-12) && close(inv[2], 2.0 / 3.0, 1e-12));
    }

    #[test]
    fn disconnected_rejected() {
        let g = build_graph(&[(0, 1, 1.0), (2, 3, 1.0)], 4, false).unwrap();
        assert!(matches!(pseudo_inverse(&g), Err(ExactError::Disconnected)));
        assert!(matches!(hitting_linear_solve(&g, 0), Err(ExactError::Disconnected)));
    }

    #[test]
    fn closed_form_examples() {
        let edge = pseudo_inverse(&named::path(2)).unwrap();
        assert!(close(hitting_closed_form(&edge, 0, 1), 1.0, 1e-12));
        assert_eq!(hitting_closed_form(&edge, 1, 1), 0.0);

        let k3 = pseudo_inverse(&named::complete(3)).unwrap();
        assert!(close(hitting_closed_form(&k3, 0, 1), 2.0, 1e-12));

        let star = pseudo_inverse(&named::star(3)).unwrap();
        assert!(close(hitting_closed_form(&star, 1, 0), 1.0, 1e-12));
        assert!(close(hitting_closed_form(&star, 0, 1), 5.0, 1e-12));
    }

    #[test]
    fn linear_solve_examples() {
        let h = hitting_linear_solve(&named::path(2), 1).unwrap();
        assert!(close(h[0], 1.0, 1e-12));
        let h = hitting_linear_solve(&named::path(3), 2).unwrap();
        assert!(close(h[0], 4.0, 1e-12) && close(h[1], 3.0, 1e-12) && h[2] == 0.0);
        for j in 0..3 {
            let h = hitting_linear_solve(&named::complete(3), j).unwrap();
            for i in (0..3).filter(|&i| i != j) {
                assert!(close(h[i], 2.0, 1e-12));
            }
        }
    }

    #[test]
    fn monte_carlo_examples() {
        let est = monte_carlo_hitting(&named::path(2), 0, 1, 50, DEFAULT_STEP_CAP, 3).unwrap();
        assert_eq!((est.mean, est.stderr), (1.0, 0.0));

        let est = monte_carlo_hitting(&named::complete(3), 0, 1, 100_000, DEFAULT_STEP_CAP, 5).unwrap();
        assert!((est.mean - 2.0).abs() <= 4.0 * est.stderr, "{est:?}");

        let est = monte_carlo_hitting(&named::star(3), 0, 1, 100_000, DEFAULT_STEP_CAP, 6).unwrap();
        assert!((est.mean - 5.0).abs() <= 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn monte_carlo_step_cap() {
        let g = named::path(50);
        assert!(matches!(
            monte_carlo_hitting(&g, 0, 49, 1, 10, 0),
            Err(ExactError::StepCapExceeded(10))
        ));
    }

    #[test]
    fn pair_metric_examples() {
        let g = named::path(2);
        let m = pair_metrics(&g, &pseudo_inverse(&g).unwrap(), 0, 1).unwrap();
        assert!(close(m.resistance, 1.0, 1e-12) && close(m.commute, 2.0, 1e-12));

        let g = named::path(3);
        let m = pair_metrics(&g, &pseudo_inverse(&g).unwrap(), 0, 2).unwrap();
        assert!(close(m.resistance, 2.0, 1e-12));

        let g = named::complete(3);
        let m = pair_metrics(&g, &pseudo_inverse(&g).unwrap(), 0, 1).unwrap();
        assert!(close(m.resistance, 2.0 / 3.0, 1e-12) && close(m.commute, 4.0, 1e-12));
        assert!(close(m.resistance_from_commute(), m.resistance, 1e-9));
    }

    #[test]
    fn lemma_identity_examples() {
        let g = named::complete(3);
        let r = lemma_m_identity_check(&pseudo_inverse(&g).unwrap(), &g).unwrap();
        assert!(r <= 1e-10, "residual {r}");
        let g = named::path(2);
        assert!(matches!(
            lemma_m_identity_check(&pseudo_inverse(&g).unwrap(), &g),
            Err(ExactError::Bipartite)
        ));
    }

    #[test]
    fn grounded_matches_direct_routes() {
        let g = named::star(4);
        for root in 0..5 {
            let gl = GroundedLaplacian::new(&g, root).unwrap();
            let p = pseudo_inverse(&g).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    assert!(close(gl.hitting(i, j), hitting_closed_form(&p, i, j), 1e-10));
                    assert!(close(gl.resistance(i, j), p.resistance(i, j), 1e-10));
                }
            }
        }
    }

    #[test]
    fn reconstruction_and_null_vector() {
        let g = build_graph(&[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 0.5), (2, 3, 3.0)], 4, false).unwrap();
        let p = pseudo_inverse(&g).unwrap();
        assert!(reconstruction_residual(&p, &g) <= 1e-8);
        let norm = g.volume().sqrt();
        let sign = p.basis[(0, 0)].signum();
        for i in 0..4 {
            assert!((sign * p.basis[(i, 0)] - g.degree(i).sqrt() / norm).abs() <= 1e-8);
        }
    }
}
