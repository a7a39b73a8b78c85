use rand::Rng as _;

use super::GeneratorError;
use crate::graph::{build_graph, Graph};
use crate::rng::stream_rng;

/// Samples an independent edge for every unordered pair `i <= j` with
/// probability `prob(i, j)`. Row `i` draws from stream `i`, one uniform per
/// pair in ascending `j`, so the result does not depend on the order in
/// which rows are processed.
fn independent_edges(n: usize, seed: u64, prob: impl Fn(usize, usize) -> f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        let mut rng = stream_rng(seed, i as u64);
        for j in i..n {
            let u: f64 = rng.random();
            if u < prob(i, j) {
                edges.push((i, j, 1.0));
            }
        }
    }
    build_graph(&edges, n, true).expect("sampled edges are valid")
}

fn check_probability(p: f64) -> Result<(), GeneratorError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GeneratorError::InvalidProbability(p))
    }
}

/// Erdős–Rényi graph with self-loops: every pair `i <= j` is an edge with
/// probability `p`.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<Graph, GeneratorError> {
    check_probability(p)?;
    Ok(independent_edges(n, seed, |_, _| p))
}

#[derive(Debug, Clone)]
pub struct PlantedPartition {
    pub graph: Graph,
    /// Cluster of each vertex, 0 for the first half and 1 for the second.
    pub labels: Vec<u8>,
}

/// Two equal clusters with within-cluster probability `p_within` and
/// cross-cluster probability `p_between`. Self-loops are drawn with
/// `p_within`, so equal probabilities reproduce [`gen_er`] draw for draw.
pub fn gen_planted_bisection(n: usize, p_within: f64, p_between: f64, seed: u64) -> Result<PlantedPartition, GeneratorError> {
    if n % 2 != 0 {
        return Err(GeneratorError::OddN(n));
    }
    check_probability(p_within)?;
    check_probability(p_between)?;
    let half = n / 2;
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= half)).collect();
    let graph = independent_edges(n, seed, |i, j| {
        if labels[i] == labels[j] {
            p_within
        } else {
            p_between
        }
    });
    Ok(PlantedPartition { graph, labels })
}

/// Random graph with given expected degrees: pair `i <= j` is an edge with
/// probability `d̄_i d̄_j / Σ d̄`. Self-loops are included so that vertex `i`
/// has expected degree exactly `d̄_i`.
pub fn gen_expected_degrees(dbar: &[f64], seed: u64) -> Result<Graph, GeneratorError> {
    if dbar.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(GeneratorError::InvalidDensitySpec("expected degrees must be nonnegative".into()));
    }
    let total: f64 = dbar.iter().sum();
    let max = dbar.iter().copied().fold(0.0, f64::max);
    if max * max > total {
        return Err(GeneratorError::ProbabilityOverflow { max_product: max * max, total });
    }
    Ok(independent_edges(dbar.len(), seed, |i, j| dbar[i] * dbar[j] / total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_count_stats(samples: &[f64]) -> (f64, f64) {
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, var)
    }

    #[test]
    fn er_full_probability() {
        let g = gen_er(3, 1.0, 0).unwrap();
        assert_eq!(g.num_edges(), 6);
        assert!((0..3).all(|i| g.has_edge(i, i)));
    }

    #[test]
    fn er_zero_probability() {
        assert_eq!(gen_er(5, 0.0, 0).unwrap().num_edges(), 0);
        assert!(matches!(gen_er(5, 1.5, 0), Err(GeneratorError::InvalidProbability(_))));
    }

    #[test]
    fn er_edge_count_moments() {
        let (n, p) = (200usize, 0.5);
        let counts: Vec<f64> = (0..100).map(|s| gen_er(n, p, s).unwrap().num_edges() as f64).collect();
        let pairs = (n * (n + 1) / 2) as f64;
        let (mean, _) = edge_count_stats(&counts);
        // Binomial(pairs, p): the mean of 100 draws has sd sqrt(pairs p (1-p) / 100).
        let sd = (pairs * p * (1.0 - p) / 100.0).sqrt();
        assert!((mean - p * pairs).abs() <= 4.0 * sd, "mean {mean}");
    }

    #[test]
    fn planted_extremes_are_two_cliques() {
        let pp = gen_planted_bisection(6, 1.0, 0.0, 1).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(pp.graph.has_edge(i, j), (i < 3) == (j < 3));
            }
        }
        assert_eq!(pp.labels, vec![0, 0, 0, 1, 1, 1]);
        assert!(matches!(gen_planted_bisection(5, 0.5, 0.1, 0), Err(GeneratorError::OddN(5))));
    }

    #[test]
    fn planted_collapses_to_er() {
        for seed in 0..5 {
            let pp = gen_planted_bisection(40, 0.3, 0.3, seed).unwrap();
            let er = gen_er(40, 0.3, seed).unwrap();
            assert_eq!(pp.graph.edges().collect::<Vec<_>>(), er.edges().collect::<Vec<_>>());
        }
    }

    #[test]
    fn planted_within_degree() {
        let (n, pw, pb) = (400usize, 0.2, 0.05);
        let half = n / 2;
        let mut means = Vec::new();
        for seed in 0..50 {
            let pp = gen_planted_bisection(n, pw, pb, seed).unwrap();
            let mut within = 0.0;
            for i in 0..n {
                within += pp.graph.neighbors(i).filter(|&(j, _)| pp.labels[j] == pp.labels[i]).count() as f64;
            }
            means.push(within / n as f64);
        }
        let (mean, _) = edge_count_stats(&means);
        // Each within-cluster degree is Binomial(n/2, pw) and rows are weakly
        // dependent; the sd of the average over n vertices and 50 seeds is at
        // most sqrt(2 (n/2) pw (1-pw) / (n 50)).
        let sd = (2.0 * half as f64 * pw * (1.0 - pw) / (n as f64 * 50.0)).sqrt();
        assert!((mean - half as f64 * pw).abs() <= 4.0 * sd, "mean {mean}");
    }

    #[test]
    fn expected_degrees_collapse_to_er() {
        let c = 6.0;
        let n = 60;
        for seed in 0..5 {
            let a = gen_expected_degrees(&vec![c; n], seed).unwrap();
            let b = gen_er(n, c / n as f64, seed).unwrap();
            assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        }
    }

    #[test]
    fn expected_degrees_mean() {
        let n = 500;
        let means: Vec<f64> = (0..50)
            .map(|s| gen_expected_degrees(&vec![20.0; n], s).unwrap().volume() / n as f64)
            .collect();
        let (mean, _) = edge_count_stats(&means);
        // Total degree is a sum of independent edge indicators; its variance
        // is at most 4 Σ p over pairs ≈ 2 n d.
        let sd = (2.0 * n as f64 * 20.0).sqrt() / n as f64 / 50f64.sqrt();
        assert!((mean - 20.0).abs() <= 4.0 * sd, "mean {mean}");
    }

    #[test]
    fn expected_degrees_overflow() {
        assert!(matches!(
            gen_expected_degrees(&[1.0, 100.0], 0),
            Err(GeneratorError::ProbabilityOverflow { .. })
        ));
    }
}
