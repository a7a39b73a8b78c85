//! Browser bindings: sample a geometric graph, compare commute distances from
//! a vertex against `1/d_i + 1/d_j`, and report the spectral gap together with
//! how degenerate the nearest-neighbor structure has become.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use commute_core::exact::{pseudo_inverse, PseudoInverse};
use commute_core::experiments::degeneracy_report;
use commute_core::generators::{build_geometric_graph, sample_points, DensitySpec, GeometricGraphSpec, PointCloud};
use commute_core::graph::{connectivity_flags, Graph};
use commute_core::spectral::spectrum_from_pinv;

/// Dense routes are cubic in `n`; keep the page responsive.
pub const MAX_POINTS: usize = 600;

#[wasm_bindgen]
pub struct Demo {
    cloud: PointCloud,
    graph: Graph,
    pinv: PseudoInverse,
}

#[derive(Serialize)]
struct Row {
    vertex: usize,
    /// `C_vu / vol = R_vu`
    exact: f64,
    /// `1/d_v + 1/d_u`
    approx: f64,
}

#[derive(Serialize)]
struct FromVertex {
    source: usize,
    exact_nn: usize,
    approx_nn: usize,
    rows: Vec<Row>,
}

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Samples `n` uniform points in the unit square and connects them.
    /// `kind` is `"eps"` (param = radius), `"knn"` (param = k) or
    /// `"gauss"` (param = bandwidth, fully connected).
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, kind: &str, param: f64, seed: u64) -> Result<Demo, JsValue> {
        if !(3..=MAX_POINTS).contains(&n) {
            return Err(err(format!("n must lie in 3..={MAX_POINTS}")));
        }
        let spec = match kind {
            "eps" => GeometricGraphSpec::eps(param),
            "knn" => GeometricGraphSpec::knn(param.max(1.0) as usize, false),
            "gauss" => GeometricGraphSpec::gaussian(param, None),
            other => return Err(err(format!("unknown graph kind {other:?}"))),
        };
        let cloud = sample_points(&DensitySpec::unit_cube(2), n, seed).map_err(err)?;
        let graph = build_geometric_graph(&cloud, &spec).map_err(err)?;
        let flags = connectivity_flags(&graph);
        if !flags.connected {
            return Err(err("graph is disconnected; raise the radius or k"));
        }
        if flags.bipartite {
            return Err(err("graph is bipartite; the random walk does not mix"));
        }
        let pinv = pseudo_inverse(&graph).map_err(err)?;
        Ok(Demo { cloud, graph, pinv })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Interleaved `x, y` coordinates.
    pub fn points(&self) -> Vec<f64> {
        self.cloud.points().flat_map(|p| p.iter().copied()).collect()
    }

    /// Interleaved endpoint pairs of every edge (self-loops omitted).
    pub fn edges(&self) -> Vec<u32> {
        self.graph.edges().filter(|e| e.0 != e.1).flat_map(|(i, j, _)| [i as u32, j as u32]).collect()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.graph.degrees().to_vec()
    }

    /// JSON with the resistance and its degree approximation from `source`
    /// to every other vertex, plus both nearest neighbors.
    pub fn commute_from(&self, source: usize) -> Result<String, JsValue> {
        let n = self.graph.n();
        if source >= n {
            return Err(err(format!("vertex {source} out of range")));
        }
        let rows: Vec<Row> = (0..n)
            .filter(|&u| u != source)
            .map(|u| Row {
                vertex: u,
                exact: self.pinv.resistance(source, u),
                approx: 1.0 / self.graph.degree(source) + 1.0 / self.graph.degree(u),
            })
            .collect();
        let argmin = |f: fn(&Row) -> f64| rows.iter().min_by(|a, b| f(a).total_cmp(&f(b))).map_or(source, |r| r.vertex);
        let out = FromVertex { source, exact_nn: argmin(|r| r.exact), approx_nn: argmin(|r| r.approx), rows };
        serde_json::to_string(&out).map_err(err)
    }

    /// JSON with `λ_2`, the spectral gap and the degeneracy fractions.
    pub fn summary(&self) -> Result<String, JsValue> {
        let s = spectrum_from_pinv(&self.pinv);
        let rep = degeneracy_report(&self.graph, &self.pinv).map_err(err)?;
        let value = serde_json::json!({
            "n": self.graph.n(),
            "edges": self.graph.num_edges(),
            "volume": self.graph.volume(),
            "lambda2": s.lambda2(),
            "gap2": s.gap2,
            "argmax_degree": rep.argmax_degree,
            "approx_nn_fraction": rep.approx_nn_fraction,
            "exact_nn_fraction": rep.exact_nn_fraction,
            "mean_rank_correlation": rep.mean_rank_correlation,
            "median_relative_deviation": rep.median_relative_deviation,
        });
        Ok(value.to_string())
    }
}
