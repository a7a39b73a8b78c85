use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, Scenario};
use super::degeneracy::degeneracy_report;
use super::records::{emit_csv, emit_plot, median, GuideLine, SweepRecord};
use super::ExperimentError;
use crate::exact::{pair_metrics_grounded, pseudo_inverse, GroundedLaplacian};
use crate::flow::{
    connected_grid_width, grid_flow_upper_bound, harmonic_flow, flow_energy, lower_bound_resistance,
    valid_grid_params_with_width, FlowError,
};
use crate::generators::{
    build_geometric_graph, concentration_experiment, eta_d, evaluate_density, gen_er, gen_expected_degrees,
    gen_planted_bisection, sample_points, DensitySpec, GeometricGraphSpec, PointCloud,
};
use crate::graph::{connectivity_flags, Graph};
use crate::rng::{derive_seed, stream_rng};
use crate::spectral::{
    canonical_paths_with, fully_connected_bound, gap_order_prediction, key_prop_bounds, path_grid_cells,
    planted_expected_spectrum, spectrum, spectrum_from_pinv, GapModel, SpectralError, SpectralSummary,
};

/// Redraws allowed per (seed, n) cell before giving up.
const MAX_ATTEMPTS: usize = 50;
const PILOT_TAG: u64 = 0x7069_6c6f_74;
const PAIR_TAG: u64 = 0x7061_6972;
const PATH_TAG: u64 = 0x7061_7468;

fn cell_seed(base: u64, seed_index: usize, n: usize, attempt: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(base, seed_index as u64), n as u64), attempt as u64)
}

/// `(c log n / n)^{1/d}`
pub fn eps_rule(n: usize, dim: usize, c: f64) -> f64 {
    (c * (n as f64).ln() / n as f64).powf(1.0 / dim as f64)
}

/// `⌈3 log² n⌉`, capped at `n − 1`.
pub fn knn_rule(n: usize) -> usize {
    let l = (n as f64).ln();
    ((3.0 * l * l).ceil() as usize).min(n - 1)
}

/// `c (log n / n)^{1/(d+4)}`
pub fn adapted_bandwidth(n: usize, dim: usize, c: f64) -> f64 {
    c * ((n as f64).ln() / n as f64).powf(1.0 / (dim as f64 + 4.0))
}

/// The larger root `ε` of `h² = ε² / log(n ε^{d+2})`, if one exists.
pub fn truncation_radius(n: usize, dim: usize, h: f64) -> Option<f64> {
    let (ln_n, p) = ((n as f64).ln(), dim as f64 + 2.0);
    let f = |e: f64| e * e / (ln_n + p * e.ln());
    let target = h * h;
    // f is decreasing then increasing, with its minimum where log(n ε^{d+2}) = (d+2)/2.
    let mut lo = ((p / 2.0 - ln_n) / p).exp();
    if f(lo) > target {
        return None;
    }
    let mut hi = 2.0 * lo.max(h);
    while f(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Raises `c` by factors of 1.25 until at least 95% of `pilot_seeds` draws
/// at size `n` give a connected ε-graph. Returns `(c, rounds, fraction)`.
pub fn pilot_eps_constant(
    dim: usize,
    n: usize,
    c0: f64,
    pilot_seeds: usize,
    base_seed: u64,
) -> Result<(f64, usize, f64), ExperimentError> {
    let spec = DensitySpec::unit_cube(dim);
    let mut c = c0;
    for round in 0..40 {
        let eps = eps_rule(n, dim, c);
        let mut connected = 0;
        for s in 0..pilot_seeds {
            let cloud = sample_points(&spec, n, cell_seed(derive_seed(base_seed, PILOT_TAG), s, n, 0))?;
            let g = build_geometric_graph(&cloud, &GeometricGraphSpec::eps(eps))?;
            if connectivity_flags(&g).connected {
                connected += 1;
            }
        }
        let frac = connected as f64 / pilot_seeds as f64;
        if frac >= 0.95 {
            return Ok((c, round, frac));
        }
        c *= 1.25;
    }
    Err(ExperimentError::PreconditionUnsatisfiable(format!(
        "no ε constant up to {c} connects 95% of pilot graphs at n = {n}"
    )))
}

/// Sweep-wide quantities fixed before any cell runs.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Prepared {
    /// `(c, pilot rounds, connected fraction)` for ε sweeps.
    pub eps_constant: Option<(f64, usize, f64)>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let eps_constant = match &cfg.scenario {
            Scenario::EpsSweep { dim, c, pilot_seeds, .. } => {
                Some(pilot_eps_constant(*dim, cfg.n_list[0], *c, *pilot_seeds, cfg.base_seed)?)
            }
            _ => None,
        };
        Ok(Prepared { eps_constant })
    }
}

/// One accepted random graph of a sweep cell.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub cloud: Option<PointCloud>,
    pub labels: Option<Vec<u8>>,
    pub expected_degrees: Option<Vec<f64>>,
    pub param: f64,
    /// Seed of the accepted draw.
    pub seed: u64,
    /// Draws rejected before this one.
    pub discards: usize,
}

fn box_spec(extent: &[f64]) -> DensitySpec {
    DensitySpec::Uniform { lower: vec![0.0; extent.len()], upper: extent.to_vec() }
}

fn scenario_param(cfg: &ExperimentConfig, prep: &Prepared, n: usize) -> f64 {
    match &cfg.scenario {
        Scenario::EpsSweep { dim, .. } => eps_rule(n, *dim, prep.eps_constant.map_or(f64::NAN, |c| c.0)),
        Scenario::KnnSweep { k, .. } => k.unwrap_or_else(|| knn_rule(n)) as f64,
        Scenario::GaussianAdapted { dim, c, .. } => adapted_bandwidth(n, *dim, *c),
        Scenario::Er { p } => *p,
        Scenario::Planted { p_within, .. } => *p_within,
        Scenario::ExpectedDegrees { d_low, d_high } => 0.5 * (d_low + d_high),
        Scenario::WeightedFull { bandwidth, .. } | Scenario::Degeneracy { bandwidth, .. } => *bandwidth,
        Scenario::GapCheck { eps, .. } | Scenario::FlowSandwich { eps, .. } => *eps,
        Scenario::Concentration { delta, .. } => *delta,
    }
}

fn all_cells_occupied(cloud: &PointCloud, cells: &[usize]) -> bool {
    let Some((lower, upper)) = cloud.density.rectangle() else {
        return false;
    };
    let total: usize = cells.iter().product();
    let mut seen = vec![false; total];
    for x in cloud.points() {
        let mut key = 0;
        for k in (0..x.len()).rev() {
            let t = (x[k] - lower[k]) / (upper[k] - lower[k]);
            let c = ((t * cells[k] as f64).floor().max(0.0) as usize).min(cells[k] - 1);
            key = key * cells[k] + c;
        }
        seen[key] = true;
    }
    seen.into_iter().all(|s| s)
}

fn flow_cells(extent: &[f64], eps: f64) -> Vec<usize> {
    let width = connected_grid_width(eps, extent.len());
    extent.iter().map(|side| ((side / width) - 1e-9).ceil().max(1.0) as usize).collect()
}

/// Draws graphs for one (seed, n) cell until one is connected, not bipartite
/// and meets the scenario's grid requirements.
pub fn build_instance(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    n: usize,
    seed_index: usize,
) -> Result<Instance, ExperimentError> {
    let param = scenario_param(cfg, prep, n);
    for attempt in 0..MAX_ATTEMPTS {
        let seed = cell_seed(cfg.base_seed, seed_index, n, attempt);
        let geometric = |spec: &DensitySpec, gspec: GeometricGraphSpec| -> Result<(Graph, PointCloud), ExperimentError> {
            let cloud = sample_points(spec, n, seed)?;
            let g = build_geometric_graph(&cloud, &gspec)?;
            Ok((g, cloud))
        };
        let density = |dim: usize, given: &Option<DensitySpec>| given.clone().unwrap_or_else(|| DensitySpec::unit_cube(dim));
        let mut cloud = None;
        let mut labels = None;
        let mut expected = None;
        let graph = match &cfg.scenario {
            Scenario::EpsSweep { dim, .. } => {
                let (g, c) = geometric(&DensitySpec::unit_cube(*dim), GeometricGraphSpec::eps(param))?;
                cloud = Some(c);
                g
            }
            Scenario::KnnSweep { dim, mutual, .. } => {
                let (g, c) = geometric(&DensitySpec::unit_cube(*dim), GeometricGraphSpec::knn(param as usize, *mutual))?;
                cloud = Some(c);
                g
            }
            Scenario::GaussianAdapted { dim, .. } => {
                let (g, c) = geometric(&DensitySpec::unit_cube(*dim), GeometricGraphSpec::gaussian(param, None))?;
                cloud = Some(c);
                g
            }
            Scenario::WeightedFull { dim, density: d, .. } | Scenario::Degeneracy { dim, density: d, .. } => {
                let (g, c) = geometric(&density(*dim, d), GeometricGraphSpec::gaussian(param, None))?;
                cloud = Some(c);
                g
            }
            Scenario::GapCheck { dim, eps, .. } => {
                let (g, c) = geometric(&DensitySpec::unit_cube(*dim), GeometricGraphSpec::eps(*eps))?;
                let (lower, upper) = c.density.rectangle().unwrap();
                let m = path_grid_cells(lower, upper, *eps);
                let ok = all_cells_occupied(&c, &vec![m; *dim]);
                cloud = Some(c);
                if !ok {
                    continue;
                }
                g
            }
            Scenario::FlowSandwich { extent, eps } => {
                let (g, c) = geometric(&box_spec(extent), GeometricGraphSpec::eps(*eps))?;
                let ok = all_cells_occupied(&c, &flow_cells(extent, *eps));
                cloud = Some(c);
                if !ok {
                    continue;
                }
                g
            }
            Scenario::Er { p } => gen_er(n, *p, seed)?,
            Scenario::Planted { p_within, p_between, .. } => {
                let planted = gen_planted_bisection(n, *p_within, *p_between, seed)?;
                labels = Some(planted.labels);
                planted.graph
            }
            Scenario::ExpectedDegrees { d_low, d_high } => {
                let dbar: Vec<f64> = (0..n).map(|i| d_low + (d_high - d_low) * i as f64 / (n - 1) as f64).collect();
                let g = gen_expected_degrees(&dbar, seed)?;
                expected = Some(dbar);
                g
            }
            Scenario::Concentration { .. } => {
                return Err(ExperimentError::Config("concentration draws point clouds, not graphs".into()))
            }
        };
        let flags = connectivity_flags(&graph);
        if flags.connected && !flags.bipartite {
            return Ok(Instance { graph, cloud, labels, expected_degrees: expected, param, seed, discards: attempt });
        }
    }
    Err(ExperimentError::PreconditionUnsatisfiable(format!(
        "{MAX_ATTEMPTS} consecutive draws at n = {n} were disconnected, bipartite or left a grid cell empty"
    )))
}

/// Up to `count` distinct pairs drawn uniformly from those meeting
/// `admissible`; unordered pairs are returned with `i < j`. Rejection
/// sampling first, full enumeration when admissible pairs are rare.
pub fn sample_pairs(
    n: usize,
    count: usize,
    ordered: bool,
    admissible: impl Fn(usize, usize) -> bool,
    seed: u64,
) -> Vec<(usize, usize)> {
    let mut rng = stream_rng(seed, 0);
    let normalize = |i: usize, j: usize| if ordered || i < j { (i, j) } else { (j, i) };
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count && tries < 2000 * count.max(1) {
        tries += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let p = normalize(i, j);
        if admissible(p.0, p.1) && seen.insert(p) {
            out.push(p);
        }
    }
    if out.len() == count {
        return out;
    }
    let mut all: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let start = if ordered { 0 } else { i + 1 };
        for j in start..n {
            if i != j && admissible(i, j) {
                all.push((i, j));
            }
        }
    }
    let take = count.min(all.len());
    for k in 0..take {
        let r = rng.random_range(k..all.len());
        all.swap(k, r);
    }
    all.truncate(take);
    all
}

fn interior(cloud: &PointCloud, v: usize, margin: f64) -> bool {
    match cloud.density.rectangle() {
        Some((lower, upper)) => {
            let x = cloud.point(v);
            (0..x.len()).all(|k| x[k] - lower[k] >= margin && upper[k] - x[k] >= margin)
        }
        None => true,
    }
}

#[derive(Clone, Copy)]
enum Quantity {
    Commute,
    /// `H_ij` with the approximation `vol/d_j`.
    Hitting,
}

struct PairContext<'a> {
    scenario: &'static str,
    seed: u64,
    n: usize,
    param: f64,
    g: &'a Graph,
    grounded: &'a GroundedLaplacian,
    spectrum: &'a SpectralSummary,
    record_runtime: bool,
}

impl PairContext<'_> {
    /// Record for `(i, j)`: the exact and approximate quantities divided by
    /// `vol` and multiplied by `scale`, so the rescaled limit is `limit`.
    fn record(&self, i: usize, j: usize, q: Quantity, scale: f64, limit: f64) -> Result<SweepRecord, ExperimentError> {
        let start = Instant::now();
        let m = pair_metrics_grounded(self.g, self.grounded, i, j);
        let bounds = match key_prop_bounds(self.g, self.spectrum, &m) {
            Ok(b) => Some(b),
            Err(SpectralError::Bipartite) => None,
            Err(e) => return Err(e.into()),
        };
        let vol = m.volume;
        let (exact, approx, key, lovasz) = match q {
            Quantity::Commute => (
                scale * m.commute / vol,
                scale * m.approx,
                bounds.map_or(f64::NAN, |b| scale * b.bound_commute_rhs_tight),
                bounds.map_or(f64::NAN, |b| scale * b.lovasz_rhs),
            ),
            Quantity::Hitting => (
                scale * m.hitting_ij / vol,
                scale / self.g.degree(j),
                bounds.map_or(f64::NAN, |b| scale * b.bound_hitting_rhs),
                f64::NAN,
            ),
        };
        let runtime_ms = if self.record_runtime { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        Ok(SweepRecord {
            scenario: self.scenario.to_string(),
            seed: self.seed,
            n: self.n,
            param: self.param,
            i,
            j,
            exact_rescaled: exact,
            approx_rescaled: approx,
            limit_value: limit,
            deviation: (exact - approx).abs(),
            key_prop_rhs: key,
            lovasz_rhs: lovasz,
            gap2: self.spectrum.gap2,
            runtime_ms,
        })
    }
}

/// Everything a sweep produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub records: Vec<SweepRecord>,
    pub summary: Value,
    pub guides: Vec<GuideLine>,
}

struct CellResult {
    records: Vec<SweepRecord>,
    info: Value,
}

fn precondition(msg: String) -> ExperimentError {
    ExperimentError::PreconditionUnsatisfiable(msg)
}

fn density_at(cloud: &PointCloud, v: usize) -> f64 {
    evaluate_density(&cloud.density, cloud.point(v))
}

fn run_cell(cfg: &ExperimentConfig, prep: &Prepared, n: usize, seed_index: usize) -> Result<CellResult, ExperimentError> {
    if let Scenario::Concentration { dim, cells_per_dim, delta, trials } = &cfg.scenario {
        let seed = cell_seed(cfg.base_seed, seed_index, n, 0);
        let res = concentration_experiment(*dim, n, *cells_per_dim, *delta, *trials, seed)?;
        return Ok(CellResult {
            records: Vec::new(),
            info: json!({ "n": n, "seed": seed, "result": res,
                          "within_bound": res.frequency <= res.bound.min(1.0) + 3.0 * res.sigma }),
        });
    }
    let inst = build_instance(cfg, prep, n, seed_index)?;
    let g = &inst.graph;
    let scenario = cfg.scenario.name();
    let pair_seed = derive_seed(inst.seed, PAIR_TAG);
    let count = cfg.pairs_per_graph;
    let nf = n as f64;

    // Degeneracy needs the full pseudoinverse; everything else grounds one vertex.
    let pinv = if matches!(cfg.scenario, Scenario::Degeneracy { .. }) { Some(pseudo_inverse(g)?) } else { None };
    let spec = match &pinv {
        Some(p) => spectrum_from_pinv(p),
        None => spectrum(g)?,
    };
    let grounded = GroundedLaplacian::new(g, 0)?;
    let ctx = PairContext {
        scenario,
        seed: inst.seed,
        n,
        param: inst.param,
        g,
        grounded: &grounded,
        spectrum: &spec,
        record_runtime: cfg.record_runtime,
    };
    let mut info = json!({
        "n": n,
        "seed_index": seed_index,
        "seed": inst.seed,
        "param": inst.param,
        "discards": inst.discards,
        "gap2": spec.gap2,
        "gap_abs": spec.gap_abs,
        "lambda2": spec.lambda2(),
        "d_min": g.d_min(),
        "d_max": g.d_max(),
        "volume": g.volume(),
    });
    let mut records = Vec::new();
    let none_admissible = |what: &str| precondition(format!("no admissible pair at n = {n}: {what}"));

    match &cfg.scenario {
        Scenario::EpsSweep { dim, separation, boundary_margin, .. } => {
            let cloud = inst.cloud.as_ref().unwrap();
            let eps = inst.param;
            let margin = boundary_margin.unwrap_or(eps);
            let min_dist = separation * eps;
            let pairs = sample_pairs(n, count, false, |i, j| {
                interior(cloud, i, margin) && interior(cloud, j, margin) && cloud.distance(i, j) >= min_dist
            }, pair_seed);
            if pairs.is_empty() {
                return Err(none_admissible(&format!("distance ≥ {min_dist} with boundary margin {margin}")));
            }
            let eta = eta_d(*dim);
            let scale = nf * eps.powi(*dim as i32);
            for (i, j) in pairs {
                let limit = 1.0 / (eta * density_at(cloud, i)) + 1.0 / (eta * density_at(cloud, j));
                records.push(ctx.record(i, j, Quantity::Commute, scale, limit)?);
            }
        }
        Scenario::KnnSweep { dim, boundary_margin, .. } => {
            let cloud = inst.cloud.as_ref().unwrap();
            let k = inst.param;
            let p_max = (0..n).map(|v| density_at(cloud, v)).fold(0.0, f64::max);
            let radius = (k / nf).powf(1.0 / *dim as f64);
            let min_dist = 4.0 * radius / p_max;
            let margin = boundary_margin.unwrap_or(radius);
            let pairs = sample_pairs(n, count, false, |i, j| {
                interior(cloud, i, margin) && interior(cloud, j, margin) && cloud.distance(i, j) >= min_dist
            }, pair_seed);
            if pairs.is_empty() {
                return Err(none_admissible(&format!("distance ≥ {min_dist}")));
            }
            for (i, j) in pairs {
                records.push(ctx.record(i, j, Quantity::Commute, k, 2.0)?);
            }
        }
        Scenario::GaussianAdapted { dim, margin_factor, .. } => {
            let cloud = inst.cloud.as_ref().unwrap();
            let h = inst.param;
            let margin = margin_factor * h;
            let pairs = sample_pairs(n, count, false, |i, j| interior(cloud, i, margin) && interior(cloud, j, margin), pair_seed);
            if pairs.is_empty() {
                return Err(none_admissible(&format!("boundary margin {margin}")));
            }
            for &(i, j) in &pairs {
                let limit = 1.0 / density_at(cloud, i) + 1.0 / density_at(cloud, j);
                records.push(ctx.record(i, j, Quantity::Commute, nf, limit)?);
            }
            // Rayleigh: dropping edges beyond the truncation radius can only raise resistances.
            let truncation = truncation_radius(n, *dim, h);
            let mut rayleigh = Value::Null;
            if let Some(eps) = truncation {
                let gt = build_geometric_graph(cloud, &GeometricGraphSpec::gaussian(h, Some(eps)))?;
                if connectivity_flags(&gt).connected {
                    let gr = GroundedLaplacian::new(&gt, 0)?;
                    let ratios: Vec<f64> = pairs.iter().map(|&(i, j)| gr.resistance(i, j) / grounded.resistance(i, j)).collect();
                    let holds = ratios.iter().all(|r| *r >= 1.0 - 1e-9);
                    rayleigh = json!({ "median_ratio": median(&mut ratios.clone()), "holds": holds });
                }
            }
            info["truncation_radius"] = json!(truncation);
            info["rayleigh"] = rayleigh;
        }
        Scenario::Er { p } => {
            let pairs = sample_pairs(n, count, true, |_, _| true, pair_seed);
            let scale = g.volume() / nf;
            let mut corollary = 0.0f64;
            for (u, v) in pairs {
                let r = ctx.record(u, v, Quantity::Hitting, scale, 1.0)?;
                // n p |H/vol − 1/d_v| = n p · deviation / scale
                corollary = corollary.max(nf * p * r.deviation / scale);
                records.push(r);
            }
            let max_h = records.iter().map(|r| (r.exact_rescaled - 1.0).abs()).fold(0.0, f64::max);
            info["max_abs_h_over_n_minus_1"] = json!(max_h);
            info["max_np_scaled_deviation"] = json!(corollary);
            info["rate_1_over_np"] = json!(1.0 / (nf * p));
        }
        Scenario::Planted { p_within, p_between, confidence } => {
            let labels = inst.labels.as_ref().unwrap();
            let pairs = sample_pairs(n, count, false, |_, _| true, pair_seed);
            let scale = nf * (p_within + p_between) / 2.0;
            let (mut within, mut between) = (Vec::new(), Vec::new());
            for (i, j) in pairs {
                let r = ctx.record(i, j, Quantity::Commute, scale, 2.0)?;
                if labels[i] == labels[j] { within.push(r.exact_rescaled) } else { between.push(r.exact_rescaled) }
                records.push(r);
            }
            let expected = planted_expected_spectrum(n, *p_within, *p_between, *confidence)?;
            let lambda2_expected = expected.transition_eigenvalues[1];
            let (mw, mb) = (median(&mut within), median(&mut between));
            info["within_pairs"] = json!(within.len());
            info["between_pairs"] = json!(between.len());
            info["median_within"] = json!(mw);
            info["median_between"] = json!(mb);
            info["between_within_ratio"] = json!(mb / mw);
            info["lambda2_expected"] = json!(lambda2_expected);
            info["deviation_radius"] = json!(expected.deviation_radius);
            info["lambda2_within_radius"] = json!((spec.lambda2() - lambda2_expected).abs() <= expected.deviation_radius);
        }
        Scenario::ExpectedDegrees { .. } => {
            let dbar = inst.expected_degrees.as_ref().unwrap();
            let pairs = sample_pairs(n, count, false, |_, _| true, pair_seed);
            for (i, j) in pairs {
                let scale = 1.0 / (1.0 / dbar[i] + 1.0 / dbar[j]);
                records.push(ctx.record(i, j, Quantity::Commute, scale, 1.0)?);
            }
        }
        Scenario::WeightedFull { .. } => {
            let pairs = sample_pairs(n, count, true, |_, _| true, pair_seed);
            for (i, j) in pairs {
                records.push(ctx.record(i, j, Quantity::Hitting, nf, f64::NAN)?);
            }
            let fc = fully_connected_bound(g)?;
            let max_dev = records.iter().map(|r| r.deviation).fold(0.0, f64::max);
            info["rhs1"] = json!(fc.rhs1);
            info["rhs2"] = json!(fc.rhs2);
            info["max_deviation"] = json!(max_dev);
            info["rhs1_holds"] = json!(max_dev <= fc.rhs1);
        }
        Scenario::Degeneracy { .. } => {
            let pairs = sample_pairs(n, count, false, |_, _| true, pair_seed);
            for (i, j) in pairs {
                records.push(ctx.record(i, j, Quantity::Commute, nf, f64::NAN)?);
            }
            let rep = degeneracy_report(g, pinv.as_ref().unwrap())?;
            info["degeneracy"] = json!({
                "argmax_degree": rep.argmax_degree,
                "max_degree_unique": rep.max_degree_unique,
                "approx_nn_fraction": rep.approx_nn_fraction,
                "exact_nn_fraction": rep.exact_nn_fraction,
                "mean_rank_correlation": rep.mean_rank_correlation,
                "median_relative_deviation": rep.median_relative_deviation,
            });
        }
        Scenario::GapCheck { dim, eps, redraws } => {
            let cloud = inst.cloud.as_ref().unwrap();
            let pairs = sample_pairs(n, count, false, |_, _| true, pair_seed);
            let eta = eta_d(*dim);
            let scale = nf * eps.powi(*dim as i32);
            for (i, j) in pairs {
                let limit = 1.0 / (eta * density_at(cloud, i)) + 1.0 / (eta * density_at(cloud, j));
                records.push(ctx.record(i, j, Quantity::Commute, scale, limit)?);
            }
            let stats = canonical_paths_with(cloud, g, *eps, *redraws, derive_seed(inst.seed, PATH_TAG))?;
            let (pred2, predn) = gap_order_prediction(GapModel::Eps, n, *eps, *dim);
            info["canonical_paths"] = json!(stats);
            info["gap_n"] = json!(1.0 - spec.lambda_n().abs());
            info["sound_gap2"] = json!(stats.gap_lower_2 <= spec.gap2);
            info["sound_gapn"] = json!(stats.gap_lower_n <= 1.0 - spec.lambda_n().abs());
            info["predicted_gap2_order"] = json!(pred2);
            info["predicted_gapn_order"] = json!(predn);
        }
        Scenario::FlowSandwich { extent, eps } => {
            let cloud = inst.cloud.as_ref().unwrap();
            let d = extent.len();
            let width = connected_grid_width(*eps, d);
            let cells = flow_cells(extent, *eps);
            let gw = extent.iter().zip(&cells).map(|(s, &m)| s / m as f64).fold(0.0, f64::max);
            let limit = 4.0 * (d as f64).sqrt() * gw;
            let pairs = sample_pairs(n, count, false, |i, j| cloud.distance(i, j) > limit, pair_seed);
            if pairs.is_empty() {
                return Err(none_admissible(&format!("distance > 4√d·g = {limit}")));
            }
            let mut sandwich = Vec::new();
            for (s, t) in pairs {
                let r = ctx.record(s, t, Quantity::Commute, 1.0, f64::NAN)?;
                let exact = grounded.resistance(s, t);
                let lower = match lower_bound_resistance(g, s, t) {
                    Ok(v) => Some(v),
                    Err(FlowError::PreconditionViolated | FlowError::DegenerateDegree(_)) => None,
                    Err(e) => return Err(e.into()),
                };
                let params = valid_grid_params_with_width(cloud, g, *eps, s, t, width)?;
                let upper = grid_flow_upper_bound(&params, d)?;
                let energy = flow_energy(g, &harmonic_flow(g, s, t)?)?;
                sandwich.push(json!({
                    "s": s, "t": t, "lower": lower, "exact": exact, "upper": upper,
                    "harmonic_energy": energy, "params": params,
                    "holds": lower.is_none_or(|l| l <= exact * (1.0 + 1e-12)) && exact <= upper,
                }));
                records.push(r);
            }
            info["grid_cells"] = json!(cells);
            info["sandwich"] = Value::Array(sandwich);
        }
        Scenario::Concentration { .. } => unreachable!(),
    }
    Ok(CellResult { records, info })
}

fn run_cells(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<CellResult>, ExperimentError> {
    let cells: Vec<(usize, usize)> =
        (0..cfg.seeds).flat_map(|s| cfg.n_list.iter().map(move |&n| (s, n))).collect();
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get()).min(cells.len()).max(1);
    let slots: Mutex<Vec<Option<Result<CellResult, ExperimentError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= cells.len() {
                    break;
                }
                let (s, n) = cells[k];
                let res = run_cell(cfg, prep, n, s);
                slots.lock().unwrap()[k] = Some(res);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every cell runs")).collect()
}

fn guides(cfg: &ExperimentConfig, prep: &Prepared, per_n: &[(usize, f64)]) -> Vec<GuideLine> {
    let Some(&(n0, m0)) = per_n.iter().find(|p| p.1 > 0.0 && p.1.is_finite()) else {
        return Vec::new();
    };
    let anchored = |label: String, f: &dyn Fn(usize) -> f64| -> GuideLine {
        let f0 = f(n0);
        GuideLine { label, points: per_n.iter().map(|&(n, _)| (n as f64, m0 * f(n) / f0)).collect() }
    };
    match &cfg.scenario {
        Scenario::EpsSweep { dim, .. } => {
            let c = prep.eps_constant.map_or(1.0, |c| c.0);
            let d = *dim;
            vec![
                anchored("∝ ε² (gap order)".into(), &|n| gap_order_prediction(GapModel::Eps, n, eps_rule(n, d, c), d).0),
                anchored("∝ 1/(n ε^d)".into(), &|n| 1.0 / (n as f64 * eps_rule(n, d, c).powi(d as i32))),
            ]
        }
        Scenario::KnnSweep { dim, k, .. } => {
            let d = *dim;
            let kk = |n| k.unwrap_or_else(|| knn_rule(n)) as f64;
            vec![
                anchored("∝ (k/n)^{2/d} (gap order)".into(), &|n| gap_order_prediction(GapModel::Knn, n, kk(n), d).0),
                anchored("∝ 1/k".into(), &|n| 1.0 / kk(n)),
            ]
        }
        Scenario::GapCheck { dim, eps, .. } => {
            vec![anchored("∝ ε^{d+1}/n (gap order)".into(), &|n| gap_order_prediction(GapModel::Eps, n, *eps, *dim).1)]
        }
        Scenario::Er { p } => vec![anchored("∝ 1/(np)".into(), &|n| 1.0 / (n as f64 * p))],
        _ => vec![anchored("∝ 1/n".into(), &|n| 1.0 / n as f64)],
    }
}

/// Runs every (seed, n) cell, merges the records in (seed, n, pair) order and
/// summarizes them.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioOutput, ExperimentError> {
    let prep = Prepared::new(cfg)?;
    let cells = run_cells(cfg, &prep)?;
    let mut records = Vec::new();
    let mut infos = Vec::new();
    for c in cells {
        records.extend(c.records);
        infos.push(c.info);
    }

    let mut per_n = Vec::new();
    let mut curve = Vec::new();
    for &n in &cfg.n_list {
        let rows: Vec<&SweepRecord> = records.iter().filter(|r| r.n == n).collect();
        let col = |f: &dyn Fn(&SweepRecord) -> f64| -> f64 {
            let mut v: Vec<f64> = rows.iter().map(|r| f(r)).filter(|x| x.is_finite()).collect();
            median(&mut v)
        };
        let med_dev = col(&|r| r.deviation);
        let violations = rows.iter().filter(|r| r.deviation > r.key_prop_rhs * (1.0 + 1e-9) + 1e-12).count();
        per_n.push(json!({
            "n": n,
            "pairs": rows.len(),
            "median_param": col(&|r| r.param),
            "median_deviation": med_dev,
            "median_exact_rescaled": col(&|r| r.exact_rescaled),
            "median_limit": col(&|r| r.limit_value),
            "median_abs_limit_error": col(&|r| (r.exact_rescaled - r.limit_value).abs()),
            "median_gap2": col(&|r| r.gap2),
            "key_bound_violations": violations,
        }));
        curve.push((n, med_dev));
    }
    let devs: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let strictly_decreasing = devs.len() > 1 && devs.windows(2).all(|w| w[1] < w[0]);
    let discards: u64 = infos.iter().filter_map(|i| i["discards"].as_u64()).sum();
    let guides = if records.is_empty() { Vec::new() } else { guides(cfg, &prep, &curve) };

    let summary = json!({
        "name": cfg.name,
        "scenario": cfg.scenario.name(),
        "config": cfg,
        "eps_constant": prep.eps_constant.map(|(c, rounds, frac)| json!({ "c": c, "pilot_rounds": rounds, "connected_fraction": frac })),
        "per_n": per_n,
        "deviation_strictly_decreasing": strictly_decreasing,
        "total_discards": discards,
        "total_key_bound_violations": records.iter().filter(|r| r.deviation > r.key_prop_rhs * (1.0 + 1e-9) + 1e-12).count(),
        "instances": infos,
    });
    Ok(ScenarioOutput { records, summary, guides })
}

/// Writes the CSV, plot and summary named in `cfg.outputs` under `dir`.
/// Sweeps without pair records (concentration) only write the summary.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ScenarioOutput, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    if !out.records.is_empty() {
        emit_csv(&out.records, &dir.join(&cfg.outputs.csv))?;
        emit_plot(&out.records, &out.guides, &dir.join(&cfg.outputs.plot))?;
    }
    let text = serde_json::to_string_pretty(&out.summary)?;
    std::fs::write(dir.join(&cfg.outputs.summary), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules() {
        assert!((eps_rule(1000, 2, 1.0) - (1000f64.ln() / 1000.0).sqrt()).abs() < 1e-15);
        assert_eq!(knn_rule(1000), (3.0 * 1000f64.ln().powi(2)).ceil() as usize);
        assert_eq!(knn_rule(10), 9);
    }

    #[test]
    fn truncation_radius_solves_its_equation() {
        let (n, d, h) = (2000, 2, 0.3);
        let eps = truncation_radius(n, d, h).unwrap();
        let lhs = eps * eps / (n as f64 * eps.powi(d as i32 + 2)).ln();
        assert!((lhs - h * h).abs() < 1e-12);
        assert!(eps > h);
        assert!(truncation_radius(500, 2, 0.144).is_none());
    }

    #[test]
    fn pairs_are_distinct_admissible_and_reproducible() {
        let adm = |i: usize, j: usize| (i + j) % 3 == 0;
        let a = sample_pairs(50, 20, false, adm, 9);
        assert_eq!(a, sample_pairs(50, 20, false, adm, 9));
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|&(i, j)| i < j && adm(i, j)));
        assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), 20);
        // Scarce pairs fall back to enumeration.
        let rare = sample_pairs(40, 5, false, |i, j| i == 3 && j == 7, 1);
        assert_eq!(rare, vec![(3, 7)]);
        assert!(sample_pairs(10, 5, true, |_, _| false, 1).is_empty());
    }

    #[test]
    fn er_sweep_small() {
        let mut cfg = ExperimentConfig::new(Scenario::Er { p: 0.3 }, vec![40, 80]);
        cfg.pairs_per_graph = 5;
        cfg.seeds = 2;
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.records.len(), 20);
        for r in &out.records {
            assert!((r.deviation - (r.exact_rescaled - r.approx_rescaled).abs()).abs() <= 1e-12);
            assert!(r.deviation <= r.key_prop_rhs);
            assert_ne!(r.i, r.j);
        }
        // Ordered merge: seed-major, then n.
        assert_eq!(out.records[0].n, 40);
        assert_eq!(out.records[5].n, 80);
        assert_eq!(out.summary["total_key_bound_violations"], 0);
        let again = run_scenario(&cfg).unwrap();
        let bytes = |recs: &[SweepRecord]| {
            let mut buf = Vec::new();
            super::super::write_csv(recs, &mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(&out.records), bytes(&again.records));
    }

    #[test]
    fn eps_sweep_small_is_deterministic() {
        let scenario = Scenario::EpsSweep { dim: 2, c: 1.5, separation: 2.0, boundary_margin: None, pilot_seeds: 5 };
        let mut cfg = ExperimentConfig::new(scenario, vec![150, 300]);
        cfg.pairs_per_graph = 4;
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.records.len(), 8);
        assert!(out.summary["eps_constant"]["c"].as_f64().unwrap() >= 1.5);
        let limit = 2.0 / eta_d(2);
        assert!(out.records.iter().all(|r| (r.limit_value - limit).abs() < 1e-12));
        let mut a = Vec::new();
        let mut b = Vec::new();
        super::super::write_csv(&out.records, &mut a).unwrap();
        super::super::write_csv(&run_scenario(&cfg).unwrap().records, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_separation_is_reported() {
        let scenario = Scenario::EpsSweep { dim: 2, c: 3.0, separation: 100.0, boundary_margin: None, pilot_seeds: 2 };
        let cfg = ExperimentConfig::new(scenario, vec![100]);
        assert!(matches!(run_scenario(&cfg), Err(ExperimentError::PreconditionUnsatisfiable(_))));
    }

    #[test]
    fn concentration_has_summary_only() {
        let cfg = ExperimentConfig::new(Scenario::Concentration { dim: 2, cells_per_dim: 3, delta: 0.5, trials: 50 }, vec![200]);
        let out = run_scenario(&cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary["instances"][0]["within_bound"], true);
    }

    #[test]
    fn flow_sandwich_small() {
        let mut cfg = ExperimentConfig::new(Scenario::FlowSandwich { extent: vec![1.0, 1.0], eps: 0.3 }, vec![300]);
        cfg.pairs_per_graph = 3;
        let out = run_scenario(&cfg).unwrap();
        for s in out.summary["instances"][0]["sandwich"].as_array().unwrap() {
            assert_eq!(s["holds"], true, "{s}");
        }
    }
}
