use serde::{Deserialize, Serialize};

use super::points::PointCloud;
use super::GeneratorError;
use crate::graph::{build_graph, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricKind {
    Eps,
    KnnSymmetric,
    KnnMutual,
    GaussianFull,
    GaussianTruncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricGraphSpec {
    pub kind: GeometricKind,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

impl GeometricGraphSpec {
    pub fn eps(eps: f64) -> Self {
        GeometricGraphSpec { kind: GeometricKind::Eps, eps: Some(eps), k: None, bandwidth: None }
    }

    pub fn knn(k: usize, mutual: bool) -> Self {
        let kind = if mutual { GeometricKind::KnnMutual } else { GeometricKind::KnnSymmetric };
        GeometricGraphSpec { kind, eps: None, k: Some(k), bandwidth: None }
    }

    pub fn gaussian(bandwidth: f64, truncation: Option<f64>) -> Self {
        let kind = if truncation.is_some() {
            GeometricKind::GaussianTruncated
        } else {
            GeometricKind::GaussianFull
        };
        GeometricGraphSpec { kind, eps: truncation, k: None, bandwidth: Some(bandwidth) }
    }

    pub fn validate(&self, n: usize) -> Result<(), GeneratorError> {
        let mismatch = |msg: &str| Err(GeneratorError::SpecMismatch(msg.to_string()));
        let positive = |v: Option<f64>| matches!(v, Some(x) if x > 0.0 && x.is_finite());
        match self.kind {
            GeometricKind::Eps | GeometricKind::GaussianTruncated if !positive(self.eps) => {
                return mismatch("eps must be positive");
            }
            GeometricKind::KnnSymmetric | GeometricKind::KnnMutual => match self.k {
                Some(k) if k >= 1 && k < n => {}
                _ => return mismatch("k must satisfy 1 <= k < n"),
            },
            _ => {}
        }
        if matches!(self.kind, GeometricKind::GaussianFull | GeometricKind::GaussianTruncated)
            && !positive(self.bandwidth)
        {
            return mismatch("bandwidth must be positive");
        }
        Ok(())
    }
}

/// Gaussian similarity `(2πh²)^{-d/2} exp(-r²/(2h²))` for squared distance `r²`.
pub fn gaussian_weight(squared_distance: f64, bandwidth: f64, d: usize) -> f64 {
    let h2 = bandwidth * bandwidth;
    (2.0 * std::f64::consts::PI * h2).powf(-(d as f64) / 2.0) * (-squared_distance / (2.0 * h2)).exp()
}

/// Uniform bucket grid over the bounding box of a point cloud.
pub struct GridIndex<'a> {
    cloud: &'a PointCloud,
    cell: f64,
    lower: Vec<f64>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    starts: Vec<usize>,
    members: Vec<usize>,
}

impl<'a> GridIndex<'a> {
    /// Buckets of side at least `min_cell`. The side grows when the grid would
    /// otherwise have far more cells than points.
    pub fn new(cloud: &'a PointCloud, min_cell: f64) -> Self {
        let d = cloud.dim();
        let n = cloud.len();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for p in cloud.points() {
            for k in 0..d {
                lower[k] = lower[k].min(p[k]);
                upper[k] = upper[k].max(p[k]);
            }
        }
        let max_cells = (8 * n).max(64) as f64;
        let mut cell = min_cell.max(f64::MIN_POSITIVE);
        let count = |cell: f64| -> f64 {
            (0..d).map(|k| ((upper[k] - lower[k]) / cell).floor() + 1.0).product()
        };
        while count(cell) > max_cells {
            cell *= 1.5;
        }
        let dims: Vec<usize> = (0..d)
            .map(|k| ((upper[k] - lower[k]) / cell).floor() as usize + 1)
            .collect();
        let mut strides = vec![1usize; d];
        for k in 1..d {
            strides[k] = strides[k - 1] * dims[k - 1];
        }
        let total = strides[d - 1] * dims[d - 1];
        let mut index = GridIndex {
            cloud,
            cell,
            lower,
            dims,
            strides,
            starts: Vec::new(),
            members: Vec::new(),
        };
        let keys: Vec<usize> = (0..n).map(|i| index.linear(&index.cell_of(cloud.point(i)))).collect();
        let mut starts = vec![0usize; total + 1];
        for &key in &keys {
            starts[key + 1] += 1;
        }
        for c in 0..total {
            starts[c + 1] += starts[c];
        }
        let mut cursor = starts.clone();
        let mut members = vec![0usize; n];
        for (i, &key) in keys.iter().enumerate() {
            members[cursor[key]] = i;
            cursor[key] += 1;
        }
        index.starts = starts;
        index.members = members;
        index
    }

    fn cell_of(&self, x: &[f64]) -> Vec<usize> {
        (0..x.len())
            .map(|k| (((x[k] - self.lower[k]) / self.cell).floor().max(0.0) as usize).min(self.dims[k] - 1))
            .collect()
    }

    fn linear(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    fn bucket(&self, c: &[usize]) -> &[usize] {
        let key = self.linear(c);
        &self.members[self.starts[key]..self.starts[key + 1]]
    }

    /// Calls `visit` for every cell whose Chebyshev offset from `home` is exactly `r`.
    fn for_ring(&self, home: &[usize], r: usize, mut visit: impl FnMut(&[usize])) {
        let d = home.len();
        let r = r as i64;
        let lo: Vec<i64> = (0..d).map(|k| (home[k] as i64 - r).max(0)).collect();
        let hi: Vec<i64> = (0..d)
            .map(|k| (home[k] as i64 + r).min(self.dims[k] as i64 - 1))
            .collect();
        let mut cur = lo.clone();
        let mut cell = vec![0usize; d];
        loop {
            let on_ring = (0..d).any(|k| (cur[k] - home[k] as i64).abs() == r);
            if on_ring {
                for k in 0..d {
                    cell[k] = cur[k] as usize;
                }
                visit(&cell);
            }
            let mut k = 0;
            loop {
                if k == d {
                    return;
                }
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
                k += 1;
            }
        }
    }

    /// Indices `j > i` with `‖X_i − X_j‖ ≤ eps`, ascending. Requires `eps` not
    /// larger than the cell side used at construction.
    pub fn eps_neighbors_above(&self, i: usize, eps: f64) -> Vec<usize> {
        assert!(eps <= self.cell, "query radius exceeds grid cell");
        let home = self.cell_of(self.cloud.point(i));
        let mut out = Vec::new();
        for r in 0..=1 {
            self.for_ring(&home, r, |c| {
                for &j in self.bucket(c) {
                    if j > i && self.cloud.distance(i, j) <= eps {
                        out.push(j);
                    }
                }
            });
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest other points as `(distance, index)`, ordered by distance
    /// with ties broken by smaller index.
    pub fn knn(&self, i: usize, k: usize) -> Vec<(f64, usize)> {
        let home = self.cell_of(self.cloud.point(i));
        let max_r = self.dims.iter().max().copied().unwrap_or(1);
        let mut found: Vec<(f64, usize)> = Vec::new();
        for r in 0..=max_r {
            self.for_ring(&home, r, |c| {
                for &j in self.bucket(c) {
                    if j != i {
                        found.push((self.cloud.distance(i, j), j));
                    }
                }
            });
            if found.len() >= k {
                found.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                found.truncate(k.max(1));
                // Unvisited points are strictly farther than r cell sides.
                if found[k - 1].0 <= r as f64 * self.cell {
                    return found;
                }
            }
        }
        found.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(k);
        found
    }
}

fn knn_cell(cloud: &PointCloud, k: usize) -> f64 {
    let d = cloud.dim();
    let n = cloud.len();
    let mut extent = 1.0;
    for axis in 0..d {
        let (lo, hi) = cloud
            .points()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[axis]), hi.max(p[axis])));
        extent *= (hi - lo).max(1e-12);
    }
    (extent * k as f64 / n as f64).powf(1.0 / d as f64)
}

/// The `k` nearest neighbors of every point, see [`GridIndex::knn`].
pub fn knn_lists(cloud: &PointCloud, k: usize) -> Vec<Vec<(f64, usize)>> {
    let index = GridIndex::new(cloud, knn_cell(cloud, k));
    (0..cloud.len()).map(|i| index.knn(i, k)).collect()
}

/// Distance from each point to its `k`-th nearest neighbor.
pub fn knn_radii(cloud: &PointCloud, k: usize) -> Vec<f64> {
    knn_lists(cloud, k).iter().map(|l| l[k - 1].0).collect()
}

pub fn build_geometric_graph(cloud: &PointCloud, spec: &GeometricGraphSpec) -> Result<Graph, GeneratorError> {
    let n = cloud.len();
    spec.validate(n)?;
    let d = cloud.dim();
    let mut edges = Vec::new();
    match spec.kind {
        GeometricKind::Eps | GeometricKind::GaussianTruncated => {
            let eps = spec.eps.unwrap();
            let index = GridIndex::new(cloud, eps);
            for i in 0..n {
                for j in index.eps_neighbors_above(i, eps) {
                    let w = match spec.kind {
                        GeometricKind::Eps => 1.0,
                        _ => gaussian_weight(cloud.squared_distance(i, j), spec.bandwidth.unwrap(), d),
                    };
                    edges.push((i, j, w));
                }
            }
        }
        GeometricKind::KnnSymmetric | GeometricKind::KnnMutual => {
            let k = spec.k.unwrap();
            let mut pairs: Vec<(usize, usize)> = knn_lists(cloud, k)
                .iter()
                .enumerate()
                .flat_map(|(i, list)| list.iter().map(move |&(_, j)| (i.min(j), i.max(j))))
                .collect();
            pairs.sort_unstable();
            let mutual = spec.kind == GeometricKind::KnnMutual;
            let mut s = 0;
            while s < pairs.len() {
                let mut e = s + 1;
                while e < pairs.len() && pairs[e] == pairs[s] {
                    e += 1;
                }
                if !mutual || e - s == 2 {
                    edges.push((pairs[s].0, pairs[s].1, 1.0));
                }
                s = e;
            }
        }
        GeometricKind::GaussianFull => {
            let h = spec.bandwidth.unwrap();
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j, gaussian_weight(cloud.squared_distance(i, j), h, d)));
                }
            }
        }
    }
    Ok(build_graph(&edges, n, false).expect("geometric edges are valid by construction"))
}
