//! Electrical-network bounds on effective resistance: the degree-based lower
//! bound, flow energies (Thomson's principle), the harmonic flow, and the
//! grid-flow upper bound for geometric graphs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{ExactError, GroundedLaplacian};
use crate::generators::PointCloud;
use crate::graph::{connected_without, Graph};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("removing s and t disconnects the graph")]
    PreconditionViolated,
    #[error("degree of vertex {0} does not exceed the weight of the s-t edge")]
    DegenerateDegree(usize),
    #[error("conservation violated at vertex {vertex} (residual {residual})")]
    NotAFlow { vertex: usize, residual: f64 },
    #[error("flow uses ({0}, {1}), which is not an edge")]
    FlowOnMissingEdge(usize, usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("invalid grid parameters: {0}")]
    InvalidParams(String),
    #[error("grid cell {0} holds no sample point")]
    EmptyCell(usize),
    #[error("grid cell does not fit the bottleneck: {0}")]
    BottleneckTooNarrow(String),
    #[error("s and t are {dist} apart, not more than 4√d·g = {limit}")]
    PairTooClose { dist: f64, limit: f64 },
    #[error("points {0} and {1} lie in the same or adjacent cells but are not connected")]
    CellsNotConnected(usize, usize),
    #[error("grid bounds need a uniform density on a rectangle")]
    DomainNotRectangle,
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// A flow from `source` to `sink`. Entry `(i, j)` with `i < j` holds the
/// amount sent from `i` to `j`; the reverse direction is its negation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Flow {
    pub source: usize,
    pub sink: usize,
    values: BTreeMap<(usize, usize), f64>,
}

impl Flow {
    pub fn new(source: usize, sink: usize) -> Self {
        Flow { source, sink, values: BTreeMap::new() }
    }

    /// Sends `amount` from `i` to `j` on top of what is already there.
    pub fn add(&mut self, i: usize, j: usize, amount: f64) {
        if i == j {
            return;
        }
        let (key, signed) = if i < j { ((i, j), amount) } else { ((j, i), -amount) };
        *self.values.entry(key).or_insert(0.0) += signed;
    }

    /// Sends `amount` along a vertex path.
    pub fn add_path(&mut self, path: &[usize], amount: f64) {
        for w in path.windows(2) {
            self.add(w[0], w[1], amount);
        }
    }

    /// `u_ij`, antisymmetric in its arguments.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.values.get(&(i, j)).copied().unwrap_or(0.0)
        } else {
            -self.values.get(&(j, i)).copied().unwrap_or(0.0)
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    /// Net outflow minus the unit supply, per vertex.
    pub fn conservation_residuals(&self, n: usize) -> Vec<f64> {
        let mut net = vec![0.0; n];
        for (&(i, j), &u) in &self.values {
            net[i] += u;
            net[j] -= u;
        }
        net[self.source] -= 1.0;
        net[self.sink] += 1.0;
        net
    }
}

/// `R_st ≥ Q/(1 + w_st Q)` with `Q = 1/(d_s − w_st) + 1/(d_t − w_st)`.
pub fn lower_bound_resistance(g: &Graph, s: usize, t: usize) -> Result<f64, FlowError> {
    if !connected_without(g, &[s, t]) {
        return Err(FlowError::PreconditionViolated);
    }
    let w = g.weight(s, t);
    for v in [s, t] {
        if g.degree(v) <= w {
            return Err(FlowError::DegenerateDegree(v));
        }
    }
    let q = 1.0 / (g.degree(s) - w) + 1.0 / (g.degree(t) - w);
    Ok(q / (1.0 + w * q))
}

/// `Σ_e u_e²/w_e` for a unit flow.
pub fn flow_energy(g: &Graph, f: &Flow) -> Result<f64, FlowError> {
    let mut energy = 0.0;
    for ((i, j), u) in f.entries() {
        if !g.has_edge(i, j) {
            return Err(FlowError::FlowOnMissingEdge(i, j));
        }
        energy += u * u / g.weight(i, j);
    }
    for (vertex, residual) in f.conservation_residuals(g.n()).into_iter().enumerate() {
        if residual.abs() > 1e-9 {
            return Err(FlowError::NotAFlow { vertex, residual });
        }
    }
    Ok(energy)
}

/// Currents `u_ij = w_ij (φ_i − φ_j)` for the potential of a unit current
/// from `s` to `t`; the flow of least energy.
pub fn harmonic_flow(g: &Graph, s: usize, t: usize) -> Result<Flow, FlowError> {
    let grounded = GroundedLaplacian::new(g, t).map_err(|e| match e {
        ExactError::Disconnected => FlowError::Disconnected,
        other => FlowError::Exact(other),
    })?;
    let phi = grounded.potential(s, t);
    let mut f = Flow::new(s, t);
    for (i, j, w) in g.edges() {
        if i != j {
            f.add(i, j, w * (phi[i] - phi[j]));
        }
    }
    Ok(f)
}

/// Instance quantities entering the grid-flow bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFlowParams {
    /// Grid width (largest cell side).
    pub g: f64,
    /// Bottleneck width.
    pub h: f64,
    pub n_min: usize,
    /// `⌊h/(2g√(d−1))⌋`
    pub a: usize,
    /// Max number of cells between connected points.
    pub q: usize,
    pub dist_st: f64,
    pub d_s: f64,
    pub d_t: f64,
}

/// The upper bound on `R_st`, with the bracket term depending on `dim`:
/// `3 + dist/(g(2a+1)³)` for `d > 3`, `log a + 2 + dist/(g(2a+1)²)` for
/// `d = 3` and `2a + 2 + dist/(g(2a+1))` for `d = 2`.
pub fn grid_flow_upper_bound(p: &GridFlowParams, dim: usize) -> Result<f64, FlowError> {
    let invalid = |msg: &str| Err(FlowError::InvalidParams(msg.to_string()));
    if dim < 2 {
        return invalid("dimension must be at least 2");
    }
    if p.a < 1 || p.q < 1 || p.n_min < 1 {
        return invalid("a, Q and N_min must be at least 1");
    }
    if !(p.g > 0.0 && p.d_s > 0.0 && p.d_t > 0.0) {
        return invalid("grid width and degrees must be positive");
    }
    if p.dist_st <= 4.0 * (dim as f64).sqrt() * p.g {
        return invalid("dist(s, t) must exceed 4√d·g");
    }
    let a = p.a as f64;
    let spread = 2.0 * a + 1.0;
    let ratio = p.dist_st / p.g;
    let bracket = match dim {
        2 => 2.0 * a + 2.0 + ratio / spread,
        3 => a.ln() + 2.0 + ratio / (spread * spread),
        _ => 3.0 + ratio / (spread * spread * spread),
    } + 2.0 * p.q as f64;
    let inv = 1.0 / p.d_s + 1.0 / p.d_t;
    let nm = p.n_min as f64;
    Ok(inv + inv * 2.0 / nm + bracket / (nm * nm))
}

/// `r/(2√(d−1))`, the grid width used for ε- and kNN graphs.
pub fn nominal_grid_width(connect_radius: f64, dim: usize) -> f64 {
    connect_radius / (2.0 * ((dim - 1) as f64).sqrt())
}

/// The largest width not above [`nominal_grid_width`] for which any two points
/// in face-adjacent cells are within `connect_radius` (`g√(d+3) ≤ r`).
pub fn connected_grid_width(connect_radius: f64, dim: usize) -> f64 {
    nominal_grid_width(connect_radius, dim).min(connect_radius / ((dim + 3) as f64).sqrt())
}

/// Grid parameters with width [`nominal_grid_width`]; see
/// [`valid_grid_params_with_width`].
pub fn valid_grid_params(
    cloud: &PointCloud,
    g: &Graph,
    connect_radius: f64,
    s: usize,
    t: usize,
) -> Result<GridFlowParams, FlowError> {
    let width = nominal_grid_width(connect_radius, cloud.dim());
    valid_grid_params_with_width(cloud, g, connect_radius, s, t, width)
}

/// Lays a grid of cell side at most `width` over the rectangle (each axis
/// split into a whole number of cells), checks that it is valid for `g`
/// and measures the bound parameters. The bottleneck of a rectangle is its
/// shortest side.
pub fn valid_grid_params_with_width(
    cloud: &PointCloud,
    g: &Graph,
    connect_radius: f64,
    s: usize,
    t: usize,
    width: f64,
) -> Result<GridFlowParams, FlowError> {
    let (lower, upper) = cloud.density.rectangle().ok_or(FlowError::DomainNotRectangle)?;
    let d = cloud.dim();
    if d < 2 {
        return Err(FlowError::InvalidParams("dimension must be at least 2".into()));
    }
    let sides: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let h = sides.iter().copied().fold(f64::INFINITY, f64::min);
    let cells: Vec<usize> = sides
        .iter()
        .map(|side| ((side / width) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let gw = sides.iter().zip(&cells).map(|(s, &m)| s / m as f64).fold(0.0, f64::max);
    let sqrt_d = (d as f64).sqrt();
    if sqrt_d * gw > h {
        return Err(FlowError::BottleneckTooNarrow(format!("√d·g = {} > h = {h}", sqrt_d * gw)));
    }
    let a = (h / (2.0 * gw * ((d - 1) as f64).sqrt()) + 1e-9).floor() as usize;
    if a < 1 {
        return Err(FlowError::BottleneckTooNarrow(format!("a = 0 for g = {gw}, h = {h}")));
    }
    let dist = cloud.distance(s, t);
    if dist <= 4.0 * sqrt_d * gw {
        return Err(FlowError::PairTooClose { dist, limit: 4.0 * sqrt_d * gw });
    }

    let cell_of: Vec<Vec<usize>> = cloud
        .points()
        .map(|x| {
            (0..d)
                .map(|k| {
                    let c = ((x[k] - lower[k]) / (sides[k] / cells[k] as f64)).floor().max(0.0) as usize;
                    c.min(cells[k] - 1)
                })
                .collect()
        })
        .collect();
    let mut strides = vec![1usize; d];
    for k in 1..d {
        strides[k] = strides[k - 1] * cells[k - 1];
    }
    let total = strides[d - 1] * cells[d - 1];
    let key = |c: &[usize]| c.iter().zip(&strides).map(|(a, b)| a * b).sum::<usize>();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); total];
    for (v, c) in cell_of.iter().enumerate() {
        members[key(c)].push(v);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(FlowError::EmptyCell(empty));
    }
    let n_min = members.iter().map(Vec::len).min().unwrap();

    // Same and face-adjacent cells must be fully connected.
    for (k_cell, pts) in members.iter().enumerate() {
        let here = &cell_of[pts[0]];
        let mut others: Vec<usize> = vec![k_cell];
        for axis in 0..d {
            if here[axis] + 1 < cells[axis] {
                others.push(k_cell + strides[axis]);
            }
        }
        for &other in &others {
            for &u in pts {
                for &v in &members[other] {
                    if u != v && !g.has_edge(u, v) {
                        return Err(FlowError::CellsNotConnected(u, v));
                    }
                }
            }
        }
    }

    let mut q = ((connect_radius / gw) - 1e-9).ceil().max(1.0) as usize;
    for (i, j, _) in g.edges() {
        let apart = (0..d).map(|k| cell_of[i][k].abs_diff(cell_of[j][k])).max().unwrap_or(0);
        q = q.max(apart);
    }
    Ok(GridFlowParams {
        g: gw,
        h,
        n_min,
        a,
        q,
        dist_st: dist,
        d_s: g.degree(s),
        d_t: g.degree(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{pair_metrics, pseudo_inverse};
    use crate::generators::{build_geometric_graph, DensitySpec, GeometricGraphSpec};
    use crate::graph::{build_graph, named};

    fn exact_r(g: &Graph, s: usize, t: usize) -> f64 {
        pair_metrics(g, &pseudo_inverse(g).unwrap(), s, t).unwrap().resistance
    }

    #[test]
    fn lower_bound_examples() {
        let p = named::path(3);
        assert!((lower_bound_resistance(&p, 0, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!((exact_r(&p, 0, 2) - 2.0).abs() < 1e-12);
        let k3 = named::complete(3);
        assert!((lower_bound_resistance(&k3, 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            lower_bound_resistance(&named::path(2), 0, 1),
            Err(FlowError::PreconditionViolated)
        ));
    }

    #[test]
    fn energy_examples() {
        let p = named::path(3);
        let mut f = Flow::new(0, 2);
        f.add_path(&[0, 1, 2], 1.0);
        assert!((flow_energy(&p, &f).unwrap() - 2.0).abs() < 1e-15);

        let k3 = named::complete(3);
        let mut split = Flow::new(0, 1);
        split.add(0, 1, 2.0 / 3.0);
        split.add_path(&[0, 2, 1], 1.0 / 3.0);
        assert!((flow_energy(&k3, &split).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let mut direct = Flow::new(0, 1);
        direct.add(0, 1, 1.0);
        assert!((flow_energy(&k3, &direct).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_guards() {
        let p = named::path(3);
        let mut f = Flow::new(0, 2);
        f.add(0, 2, 1.0);
        assert!(matches!(flow_energy(&p, &f), Err(FlowError::FlowOnMissingEdge(0, 2))));
        let mut half = Flow::new(0, 2);
        half.add_path(&[0, 1, 2], 0.5);
        assert!(matches!(flow_energy(&p, &half), Err(FlowError::NotAFlow { .. })));
    }

    #[test]
    fn harmonic_flow_examples() {
        let f = harmonic_flow(&named::path(3), 0, 2).unwrap();
        assert!((f.value(0, 1) - 1.0).abs() < 1e-12 && (f.value(2, 1) + 1.0).abs() < 1e-12);

        let f = harmonic_flow(&named::complete(3), 0, 1).unwrap();
        assert!((f.value(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((f.value(0, 2) - 1.0 / 3.0).abs() < 1e-12 && (f.value(2, 1) - 1.0 / 3.0).abs() < 1e-12);

        let square = named::cycle(4);
        let f = harmonic_flow(&square, 0, 2).unwrap();
        for (i, j) in [(0, 1), (1, 2), (0, 3), (3, 2)] {
            assert!((f.value(i, j) - 0.5).abs() < 1e-12);
        }
        assert!((flow_energy(&square, &f).unwrap() - 1.0).abs() < 1e-12);
        assert!(f.conservation_residuals(4).iter().all(|r| r.abs() <= 1e-9));
    }

    #[test]
    fn harmonic_flow_needs_connectivity() {
        let g = build_graph(&[(0, 1, 1.0), (2, 3, 1.0)], 4, false).unwrap();
        assert!(matches!(harmonic_flow(&g, 0, 3), Err(FlowError::Disconnected)));
    }

    #[test]
    fn d4_arithmetic() {
        let p = GridFlowParams { g: 0.05, h: 1.0, n_min: 10, a: 2, q: 2, dist_st: 1.0, d_s: 40.0, d_t: 40.0 };
        let value = grid_flow_upper_bound(&p, 4).unwrap();
        let expected = 0.025 + 0.025 + 0.05 * 0.2 + 0.01 * (3.0 + 20.0 / 125.0 + 4.0);
        assert!((value - expected).abs() < 1e-15);
        assert!((value - 0.1316).abs() < 1e-12);
    }

    #[test]
    fn d3_with_a_one_uses_log_zero() {
        let p = GridFlowParams { g: 0.1, h: 0.3, n_min: 5, a: 1, q: 1, dist_st: 3.0, d_s: 10.0, d_t: 10.0 };
        let value = grid_flow_upper_bound(&p, 3).unwrap();
        let expected = 0.2 + 0.2 * 0.4 + (2.0 + 30.0 / 9.0 + 2.0) / 25.0;
        assert!((value - expected).abs() < 1e-15);
        let bad = GridFlowParams { a: 0, ..p };
        assert!(matches!(grid_flow_upper_bound(&bad, 3), Err(FlowError::InvalidParams(_))));
    }

    /// A point at every cell center of a 20×20 grid on the unit square.
    fn lattice() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(vec![0.025 + 0.05 * i as f64, 0.025 + 0.05 * j as f64]);
            }
        }
        PointCloud::from_points(&pts, DensitySpec::unit_cube(2), 0)
    }

    #[test]
    fn unit_square_plug_in() {
        let cloud = lattice();
        let g = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(0.1)).unwrap();
        let p = valid_grid_params(&cloud, &g, 0.1, 0, 399).unwrap();
        assert!((p.g - 0.05).abs() < 1e-15);
        assert_eq!((p.q, p.a, p.n_min), (2, 10, 1));
        assert_eq!(p.h, 1.0);
    }

    #[test]
    fn grid_guards() {
        let cloud = lattice();
        let g = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(0.1)).unwrap();
        // Cell width 0.02 leaves cells between lattice points empty.
        assert!(matches!(
            valid_grid_params_with_width(&cloud, &g, 0.1, 0, 399, 0.02),
            Err(FlowError::EmptyCell(_))
        ));
        // Vertices 0 and 3 sit 0.15 = 3g apart along one axis.
        assert!(matches!(valid_grid_params(&cloud, &g, 0.1, 0, 3), Err(FlowError::PairTooClose { .. })));
        let sparse = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(0.06)).unwrap();
        assert!(matches!(
            valid_grid_params_with_width(&cloud, &sparse, 0.06, 0, 399, 0.1),
            Err(FlowError::CellsNotConnected(..))
        ));
    }
}
