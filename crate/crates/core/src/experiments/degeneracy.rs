use serde::{Deserialize, Serialize};

use super::records::median;
use crate::exact::{ExactError, PseudoInverse};
use crate::graph::{connectivity_flags, Graph};

/// How far the commute distance has collapsed onto its degree approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub n: usize,
    /// Vertex of largest degree (smallest index among ties).
    pub argmax_degree: usize,
    pub max_degree_unique: bool,
    /// Nearest neighbor of each vertex under the exact commute distance.
    pub exact_nn: Vec<usize>,
    /// Nearest neighbor under `1/d_i + 1/d_j`.
    pub approx_nn: Vec<usize>,
    /// Fraction of vertices other than the argmax whose approximate nearest
    /// neighbor is the argmax.
    pub approx_nn_fraction: f64,
    /// Same fraction for the exact nearest neighbor.
    pub exact_nn_fraction: f64,
    /// Mean over vertices of the Spearman correlation between the exact and
    /// approximate orderings of the other vertices.
    pub mean_rank_correlation: f64,
    /// Median over pairs of `|R_ij / (1/d_i + 1/d_j) − 1|`.
    pub median_relative_deviation: f64,
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + end - 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation with average ranks for ties; NaN when either side
/// is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn argmin_excluding(values: impl Iterator<Item = (usize, f64)>, skip: usize) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for (u, v) in values {
        if u != skip && v < best.1 {
            best = (u, v);
        }
    }
    best.0
}

pub fn degeneracy_report(g: &Graph, pinv: &PseudoInverse) -> Result<DegeneracyReport, ExactError> {
    let flags = connectivity_flags(g);
    if !flags.connected {
        return Err(ExactError::Disconnected);
    }
    if flags.bipartite {
        return Err(ExactError::Bipartite);
    }
    let n = g.n();
    let lp = pinv.unnormalized();
    let diag: Vec<f64> = (0..n).map(|i| lp[(i, i)]).collect();
    let inv_deg: Vec<f64> = g.degrees().iter().map(|d| 1.0 / d).collect();
    let argmax = argmin_excluding((0..n).map(|u| (u, -g.degree(u))), usize::MAX);
    let max_degree_unique = (0..n).filter(|&u| g.degree(u) == g.degree(argmax)).count() == 1;

    let mut exact_nn = Vec::with_capacity(n);
    let mut approx_nn = Vec::with_capacity(n);
    let mut rank_sum = 0.0;
    let mut rank_count = 0usize;
    let mut rel = Vec::with_capacity(n * (n - 1) / 2);
    let mut r_row = Vec::with_capacity(n);
    let mut a_row = Vec::with_capacity(n);
    for v in 0..n {
        r_row.clear();
        a_row.clear();
        for u in (0..n).filter(|&u| u != v) {
            let r = diag[v] + diag[u] - 2.0 * lp[(v, u)];
            let a = inv_deg[v] + inv_deg[u];
            r_row.push((u, r));
            a_row.push((u, a));
            if u > v {
                rel.push((r / a - 1.0).abs());
            }
        }
        exact_nn.push(argmin_excluding(r_row.iter().copied(), v));
        // Compare 1/d_u alone: adding 1/d_v could merge near-ties by rounding.
        approx_nn.push(argmin_excluding((0..n).map(|u| (u, inv_deg[u])), v));
        let rv: Vec<f64> = r_row.iter().map(|p| p.1).collect();
        let av: Vec<f64> = a_row.iter().map(|p| p.1).collect();
        let rho = spearman(&rv, &av);
        if rho.is_finite() {
            rank_sum += rho;
            rank_count += 1;
        }
    }
    let others = (n - 1) as f64;
    let hits = |nn: &[usize]| (0..n).filter(|&v| v != argmax && nn[v] == argmax).count() as f64 / others;
    Ok(DegeneracyReport {
        n,
        argmax_degree: argmax,
        max_degree_unique,
        approx_nn_fraction: hits(&approx_nn),
        exact_nn_fraction: hits(&exact_nn),
        exact_nn,
        approx_nn,
        mean_rank_correlation: if rank_count > 0 { rank_sum / rank_count as f64 } else { f64::NAN },
        median_relative_deviation: median(&mut rel),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::pseudo_inverse;
    use crate::graph::{build_graph, named};

    #[test]
    fn star_with_loops_points_at_center() {
        // Star K_{1,3} is bipartite; a loop at the center keeps it a star
        // metrically (R_leaf,center = 1, R_leaf,leaf = 2).
        let g = build_graph(&[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 0, 1.0)], 4, true).unwrap();
        let rep = degeneracy_report(&g, &pseudo_inverse(&g).unwrap()).unwrap();
        assert_eq!(rep.argmax_degree, 0);
        assert!(rep.max_degree_unique);
        assert_eq!(rep.exact_nn[1..], [0, 0, 0]);
        assert_eq!(rep.approx_nn_fraction, 1.0);
        assert_eq!(rep.exact_nn_fraction, 1.0);
    }

    #[test]
    fn bare_star_is_rejected() {
        let g = named::star(3);
        assert!(matches!(degeneracy_report(&g, &pseudo_inverse(&g).unwrap()), Err(ExactError::Bipartite)));
    }

    #[test]
    fn spearman_oracle() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // Average ranks: a → [0,1,2,3], b → [0.5,0.5,2,3].
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[5.0, 5.0, 6.0, 7.0]);
        let expected = 4.5 / (5.0f64 * 4.5).sqrt();
        assert!((rho - expected).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    }

    #[test]
    fn unique_max_degree_gives_full_approx_fraction() {
        let g = crate::generators::gen_er(60, 0.3, 11).unwrap();
        let rep = degeneracy_report(&g, &pseudo_inverse(&g).unwrap()).unwrap();
        if rep.max_degree_unique {
            assert_eq!(rep.approx_nn_fraction, 1.0);
        }
        assert!(rep.mean_rank_correlation.is_finite());
    }
}
