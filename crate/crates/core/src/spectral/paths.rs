use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::SpectralError;
use crate::generators::PointCloud;
use crate::graph::Graph;
use crate::rng::stream_rng;

pub const DEFAULT_REDRAWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalPathStats {
    /// Largest cell side length in the original coordinates.
    pub grid_width: f64,
    /// Cells per axis.
    pub cells_per_dim: usize,
    /// Max over edges of the mean number of paths crossing the edge.
    pub load_b: f64,
    /// Longest path, in edges.
    pub gamma_max: usize,
    /// `vol/(d_max² γ_max b)`, a lower bound on `1 − λ_2`.
    pub gap_lower_2: f64,
    /// `2/(d_max γ_max b)`, a lower bound on `1 − |λ_n|`.
    pub gap_lower_n: f64,
    pub redraws: usize,
    pub n_min: usize,
}

/// Cells per axis such that points in the same or face-adjacent cells are
/// within `connect_radius`: the cube grid width is `r/√(d+3)` after mapping
/// the rectangle affinely onto the unit cube.
pub fn path_grid_cells(lower: &[f64], upper: &[f64], connect_radius: f64) -> usize {
    let d = lower.len() as f64;
    let max_side = lower.iter().zip(upper).map(|(l, u)| u - l).fold(0.0, f64::max);
    ((max_side * (d + 3.0).sqrt() / connect_radius) - 1e-9).ceil().max(1.0) as usize
}

/// Hamming path of cells from `a` to `b`: fix coordinate 0 first, then 1, and so on.
pub fn cell_path(a: &[usize], b: &[usize]) -> Vec<Vec<usize>> {
    let mut cur = a.to_vec();
    let mut out = vec![cur.clone()];
    for k in 0..a.len() {
        while cur[k] != b[k] {
            if cur[k] < b[k] {
                cur[k] += 1;
            } else {
                cur[k] -= 1;
            }
            out.push(cur.clone());
        }
    }
    out
}

fn unravel(mut idx: usize, d: usize, m: usize) -> Vec<usize> {
    let mut c = vec![0; d];
    for v in c.iter_mut() {
        *v = idx % m;
        idx /= m;
    }
    c
}

fn ravel(c: &[usize], m: usize) -> usize {
    c.iter().rev().fold(0, |acc, &v| acc * m + v)
}

/// For every cell of the `m^d` grid, the number of ordered pairs of distinct
/// cells whose Hamming path visits it (endpoints included).
pub fn cell_path_pass_counts(d: usize, m: usize) -> Vec<usize> {
    let total = m.pow(d as u32);
    let mut counts = vec![0usize; total];
    for a in 0..total {
        let ca = unravel(a, d, m);
        for b in (0..total).filter(|&b| b != a) {
            for cell in cell_path(&ca, &unravel(b, d, m)) {
                counts[ravel(&cell, m)] += 1;
            }
        }
    }
    counts
}

pub fn canonical_paths(
    cloud: &PointCloud,
    g: &Graph,
    connect_radius: f64,
    seed: u64,
) -> Result<CanonicalPathStats, SpectralError> {
    canonical_paths_with(cloud, g, connect_radius, DEFAULT_REDRAWS, seed)
}

/// Canonical paths between all ordered vertex pairs and the resulting
/// Poincaré bounds. Pairs in the same or face-adjacent cells use their direct
/// edge. Other pairs follow the Hamming cell path through one uniformly
/// chosen point per interior cell; an even-length path gets one extra point
/// from the last interior cell (or the nearest cell with a spare point).
/// The load is averaged over `redraws` independent draws, draw `r` using
/// stream `r` of `seed`.
pub fn canonical_paths_with(
    cloud: &PointCloud,
    g: &Graph,
    connect_radius: f64,
    redraws: usize,
    seed: u64,
) -> Result<CanonicalPathStats, SpectralError> {
    let (lower, upper) = cloud.density.rectangle().ok_or(SpectralError::DomainNotRectangle)?;
    if !g.is_unweighted() {
        return Err(SpectralError::NotUnweighted);
    }
    let n = cloud.len();
    let d = cloud.dim();
    let m = path_grid_cells(lower, upper, connect_radius);
    let cell_of: Vec<Vec<usize>> = cloud
        .points()
        .map(|x| {
            (0..d)
                .map(|k| {
                    let t = (x[k] - lower[k]) / (upper[k] - lower[k]);
                    ((t * m as f64).floor().max(0.0) as usize).min(m - 1)
                })
                .collect()
        })
        .collect();
    let total_cells = m.pow(d as u32);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); total_cells];
    for (v, c) in cell_of.iter().enumerate() {
        members[ravel(c, m)].push(v);
    }
    if let Some(empty) = members.iter().position(|c| c.is_empty()) {
        return Err(SpectralError::EmptyCell(empty));
    }
    let n_min = members.iter().map(Vec::len).min().unwrap_or(0);

    let edge_slot = |u: usize, v: usize| -> Result<usize, SpectralError> {
        g.slot(u.min(v), u.max(v)).ok_or(SpectralError::MissingPathEdge(u, v))
    };
    let mut direct = vec![0u64; g.nnz()];
    let mut drawn = vec![0u64; g.nnz()];
    let mut gamma_max = 0usize;
    let hamming = |a: &[usize], b: &[usize]| -> usize {
        a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum()
    };
    for a in 0..n {
        for b in (0..n).filter(|&b| b != a) {
            if hamming(&cell_of[a], &cell_of[b]) <= 1 {
                direct[edge_slot(a, b)?] += 1;
                gamma_max = gamma_max.max(1);
            }
        }
    }
    let mut path = Vec::new();
    for r in 0..redraws {
        let mut rng = stream_rng(seed, r as u64);
        for a in 0..n {
            for b in (0..n).filter(|&b| b != a) {
                if hamming(&cell_of[a], &cell_of[b]) <= 1 {
                    continue;
                }
                let cells = cell_path(&cell_of[a], &cell_of[b]);
                let interior: Vec<&Vec<usize>> = cells[1..cells.len() - 1].iter().map(|c| &members[ravel(c, m)]).collect();
                path.clear();
                path.push(a);
                let mut reps: Vec<usize> = interior.iter().map(|c| c[rng.random_range(0..c.len())]).collect();
                // Edges on the path: interior count + 1.
                if (reps.len() + 1) % 2 == 0 {
                    let spare = (0..interior.len()).rev().find(|&k| interior[k].len() >= 2);
                    if let Some(k) = spare {
                        let cell = interior[k];
                        let mut extra = cell[rng.random_range(0..cell.len() - 1)];
                        if extra == reps[k] {
                            extra = cell[cell.len() - 1];
                        }
                        reps.insert(k + 1, extra);
                    } else {
                        let start = &members[ravel(&cell_of[a], m)];
                        let end = &members[ravel(&cell_of[b], m)];
                        if let Some(&extra) = start.iter().find(|&&v| v != a) {
                            reps.insert(0, extra);
                        } else if let Some(&extra) = end.iter().find(|&&v| v != b) {
                            reps.push(extra);
                        } else {
                            return Err(SpectralError::OddLengthUnavailable);
                        }
                    }
                }
                path.extend_from_slice(&reps);
                path.push(b);
                gamma_max = gamma_max.max(path.len() - 1);
                for w in path.windows(2) {
                    drawn[edge_slot(w[0], w[1])?] += 1;
                }
            }
        }
    }
    let load_b = direct
        .iter()
        .zip(&drawn)
        .map(|(&c, &r)| c as f64 + if redraws > 0 { r as f64 / redraws as f64 } else { 0.0 })
        .fold(0.0, f64::max);
    let d_max = g.d_max();
    let gamma = gamma_max as f64;
    let grid_width = lower.iter().zip(upper).map(|(l, u)| (u - l) / m as f64).fold(0.0, f64::max);
    Ok(CanonicalPathStats {
        grid_width,
        cells_per_dim: m,
        load_b,
        gamma_max,
        gap_lower_2: g.volume() / (d_max * d_max * gamma * load_b),
        gap_lower_n: 2.0 / (d_max * gamma * load_b),
        redraws,
        n_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_geometric_graph, sample_points, DensitySpec, GeometricGraphSpec};
    use crate::spectral::spectrum;

    #[test]
    fn hamming_path_order() {
        let p = cell_path(&[0, 0], &[2, 1]);
        assert_eq!(p, vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![2, 1]]);
        assert_eq!(cell_path(&[1, 1], &[1, 1]), vec![vec![1, 1]]);
    }

    #[test]
    fn pass_counts_below_cube_bound() {
        for d in [2usize, 3] {
            for m in [3usize, 4, 5] {
                let bound = d * m.pow(d as u32 + 1);
                let worst = cell_path_pass_counts(d, m).into_iter().max().unwrap();
                assert!(worst <= bound, "d={d} m={m}: {worst} > {bound}");
            }
        }
        assert_eq!(2 * 4usize.pow(3), 128);
    }

    #[test]
    fn same_cell_pair_uses_direct_edge() {
        let pts = vec![vec![0.1, 0.1], vec![0.12, 0.1]];
        let cloud = crate::generators::PointCloud::from_points(&pts, DensitySpec::unit_cube(2), 0);
        let g = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(3.0)).unwrap();
        let s = canonical_paths_with(&cloud, &g, 3.0, 3, 0).unwrap();
        assert_eq!(s.cells_per_dim, 1);
        assert_eq!(s.gamma_max, 1);
        assert_eq!(s.load_b, 2.0);
    }

    #[test]
    fn non_rectangle_rejected() {
        let spec = DensitySpec::GaussianMixture {
            components: vec![crate::generators::MixtureComponent { weight: 1.0, mean: vec![0.0, 0.0], scale: 1.0 }],
        };
        let cloud = sample_points(&spec, 20, 0).unwrap();
        let g = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(5.0)).unwrap();
        assert!(matches!(canonical_paths(&cloud, &g, 5.0, 0), Err(SpectralError::DomainNotRectangle)));
    }

    #[test]
    fn empty_cell_rejected() {
        let cloud = sample_points(&DensitySpec::unit_cube(2), 20, 0).unwrap();
        let g = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(0.1)).unwrap();
        assert!(matches!(canonical_paths(&cloud, &g, 0.1, 0), Err(SpectralError::EmptyCell(_))));
    }

    #[test]
    fn poincare_bounds_below_measured_gaps() {
        let cloud = sample_points(&DensitySpec::unit_cube(2), 200, 4).unwrap();
        let eps = 0.45;
        let g = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(eps)).unwrap();
        let stats = canonical_paths_with(&cloud, &g, eps, 10, 1).unwrap();
        let s = spectrum(&g).unwrap();
        assert!(stats.gap_lower_2 <= s.gap2);
        assert!(stats.gap_lower_n <= 1.0 - s.lambda_n().abs());
        assert_eq!(stats.gamma_max % 2, 1);
    }
}
