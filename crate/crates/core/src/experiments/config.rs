use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::generators::DensitySpec;

/// Largest graph for which the dense spectral routes are used.
pub const MAX_DENSE_N: usize = 5000;

fn default_pairs() -> usize {
    30
}

fn default_seeds() -> usize {
    1
}

/// A declarative experiment: one scenario run over a list of graph sizes and
/// seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub scenario: Scenario,
    pub n_list: Vec<usize>,
    /// Number of independent seeds per graph size.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_pairs")]
    pub pairs_per_graph: usize,
    /// Store wall-clock time per pair. Off by default so that output files
    /// are byte-identical across runs.
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default = "Outputs::default_csv")]
    pub csv: String,
    #[serde(default = "Outputs::default_plot")]
    pub plot: String,
    #[serde(default = "Outputs::default_summary")]
    pub summary: String,
}

impl Outputs {
    fn default_csv() -> String {
        "records.csv".into()
    }
    fn default_plot() -> String {
        "deviation.svg".into()
    }
    fn default_summary() -> String {
        "summary.json".into()
    }
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            csv: Self::default_csv(),
            plot: Self::default_plot(),
            summary: Self::default_summary(),
        }
    }
}

fn default_eps_c() -> f64 {
    1.5
}
fn default_separation() -> f64 {
    8.0
}
fn default_pilot() -> usize {
    20
}
fn default_gauss_c() -> f64 {
    0.3
}
fn default_margin_factor() -> f64 {
    3.0
}
fn default_redraws() -> usize {
    crate::spectral::DEFAULT_REDRAWS
}
fn default_trials() -> usize {
    200
}
fn default_confidence() -> f64 {
    crate::spectral::DEFAULT_CONFIDENCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// ε-graphs with `ε(n) = (c log n / n)^{1/d}`.
    EpsSweep {
        dim: usize,
        #[serde(default = "default_eps_c")]
        c: f64,
        /// Pairs must be at least `separation · ε` apart.
        #[serde(default = "default_separation")]
        separation: f64,
        /// Distance from the boundary required of both endpoints; `ε` if unset.
        #[serde(default)]
        boundary_margin: Option<f64>,
        #[serde(default = "default_pilot")]
        pilot_seeds: usize,
    },
    /// kNN graphs with `k(n) = ⌈3 log² n⌉` unless `k` is fixed.
    KnnSweep {
        dim: usize,
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        mutual: bool,
        #[serde(default)]
        boundary_margin: Option<f64>,
    },
    /// Fully connected Gaussian graphs with `h = c (log n / n)^{1/(d+4)}`.
    GaussianAdapted {
        dim: usize,
        #[serde(default = "default_gauss_c")]
        c: f64,
        /// Endpoints stay `margin_factor · h` away from the boundary.
        #[serde(default = "default_margin_factor")]
        margin_factor: f64,
    },
    Er {
        p: f64,
    },
    Planted {
        p_within: f64,
        p_between: f64,
        #[serde(default = "default_confidence")]
        confidence: f64,
    },
    /// Expected degrees spread linearly over `[d_low, d_high]`.
    ExpectedDegrees {
        d_low: f64,
        d_high: f64,
    },
    /// Fully connected Gaussian graphs with a fixed bandwidth.
    WeightedFull {
        dim: usize,
        bandwidth: f64,
        #[serde(default)]
        density: Option<DensitySpec>,
    },
    /// Nearest-neighbor structure of the commute distance on a Gaussian graph.
    Degeneracy {
        dim: usize,
        bandwidth: f64,
        #[serde(default)]
        density: Option<DensitySpec>,
    },
    /// Measured spectral gaps against canonical-path bounds on ε-graphs.
    GapCheck {
        dim: usize,
        eps: f64,
        #[serde(default = "default_redraws")]
        redraws: usize,
    },
    /// Lower bound, exact resistance and grid-flow upper bound on ε-graphs
    /// over the box `[0, extent_1] × … × [0, extent_d]`.
    FlowSandwich {
        extent: Vec<f64>,
        eps: f64,
    },
    /// Frequency of sparse grid cells against the Chernoff-type bound.
    Concentration {
        dim: usize,
        cells_per_dim: usize,
        delta: f64,
        #[serde(default = "default_trials")]
        trials: usize,
    },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::EpsSweep { .. } => "eps_sweep",
            Scenario::KnnSweep { .. } => "knn_sweep",
            Scenario::GaussianAdapted { .. } => "gaussian_adapted",
            Scenario::Er { .. } => "er",
            Scenario::Planted { .. } => "planted",
            Scenario::ExpectedDegrees { .. } => "expected_degrees",
            Scenario::WeightedFull { .. } => "weighted_full",
            Scenario::Degeneracy { .. } => "degeneracy",
            Scenario::GapCheck { .. } => "gap_check",
            Scenario::FlowSandwich { .. } => "flow_sandwich",
            Scenario::Concentration { .. } => "concentration",
        }
    }
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, n_list: Vec<usize>) -> Self {
        ExperimentConfig {
            name: scenario.name().to_string(),
            scenario,
            n_list,
            seeds: 1,
            base_seed: 0,
            pairs_per_graph: default_pairs(),
            record_runtime: false,
            outputs: Outputs::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.n_list.is_empty() {
            return bad("n_list is empty".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_list must be strictly increasing".into());
        }
        let n_max = *self.n_list.last().unwrap();
        if n_max > MAX_DENSE_N && !matches!(self.scenario, Scenario::Concentration { .. }) {
            return bad(format!("n = {n_max} exceeds the dense limit {MAX_DENSE_N}"));
        }
        if self.n_list[0] < 4 {
            return bad("graphs need at least 4 vertices".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p) && p > 0.0;
        let dim_ok = |d: usize| (1..=10).contains(&d);
        match &self.scenario {
            Scenario::EpsSweep { dim, c, separation, pilot_seeds, .. } => {
                if !dim_ok(*dim) || *c <= 0.0 || *separation < 0.0 || *pilot_seeds == 0 {
                    return bad("eps_sweep needs 1 <= dim <= 10, c > 0, separation >= 0, pilot_seeds >= 1".into());
                }
            }
            Scenario::KnnSweep { dim, k, .. } => {
                if !dim_ok(*dim) {
                    return bad("knn_sweep needs 1 <= dim <= 10".into());
                }
                if let Some(k) = k {
                    if *k == 0 || *k >= self.n_list[0] {
                        return bad("k must satisfy 1 <= k < n".into());
                    }
                }
            }
            Scenario::GaussianAdapted { dim, c, margin_factor } => {
                if !dim_ok(*dim) || *c <= 0.0 || *margin_factor < 0.0 {
                    return bad("gaussian_adapted needs 1 <= dim <= 10, c > 0, margin_factor >= 0".into());
                }
            }
            Scenario::Er { p } => {
                if !prob(*p) {
                    return bad(format!("p = {p} outside (0, 1]"));
                }
            }
            Scenario::Planted { p_within, p_between, confidence } => {
                if !prob(*p_within) || !prob(*p_between) || p_between > p_within {
                    return bad("planted needs 0 < p_between <= p_within <= 1".into());
                }
                if !(*confidence > 0.0 && *confidence < 1.0) {
                    return bad("confidence must lie in (0, 1)".into());
                }
                if self.n_list.iter().any(|n| n % 2 != 0) {
                    return bad("planted needs even n".into());
                }
            }
            Scenario::ExpectedDegrees { d_low, d_high } => {
                if !(*d_low > 0.0 && d_low <= d_high) {
                    return bad("expected_degrees needs 0 < d_low <= d_high".into());
                }
            }
            Scenario::WeightedFull { dim, bandwidth, density } | Scenario::Degeneracy { dim, bandwidth, density } => {
                if !dim_ok(*dim) || *bandwidth <= 0.0 {
                    return bad("Gaussian scenarios need 1 <= dim <= 10 and bandwidth > 0".into());
                }
                if let Some(spec) = density {
                    spec.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
                    if spec.dim() != *dim {
                        return bad("density dimension differs from dim".into());
                    }
                }
            }
            Scenario::GapCheck { dim, eps, .. } => {
                if !dim_ok(*dim) || *eps <= 0.0 {
                    return bad("gap_check needs 1 <= dim <= 10 and eps > 0".into());
                }
            }
            Scenario::FlowSandwich { extent, eps } => {
                if extent.len() < 2 || extent.iter().any(|e| *e <= 0.0) || *eps <= 0.0 {
                    return bad("flow_sandwich needs at least 2 positive extents and eps > 0".into());
                }
            }
            Scenario::Concentration { dim, cells_per_dim, delta, trials } => {
                if !dim_ok(*dim) || *cells_per_dim == 0 || !(*delta > 0.0 && *delta < 1.0) || *trials == 0 {
                    return bad("concentration needs 1 <= dim <= 10, cells >= 1, 0 < delta < 1, trials >= 1".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": {"kind": "eps_sweep", "dim": 3}, "n_list": [500, 1000], "seeds": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.pairs_per_graph, 30);
        match cfg.scenario {
            Scenario::EpsSweep { c, separation, .. } => assert_eq!((c, separation), (1.5, 8.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            r#"{"scenario": {"kind": "er", "p": 0.1}, "n_list": [200, 100]}"#,
            r#"{"scenario": {"kind": "er", "p": 1.5}, "n_list": [100]}"#,
            r#"{"scenario": {"kind": "planted", "p_within": 0.1, "p_between": 0.2}, "n_list": [100]}"#,
            r#"{"scenario": {"kind": "er", "p": 0.1}, "n_list": [6000]}"#,
            r#"{"scenario": {"kind": "nope"}, "n_list": [100]}"#,
        ];
        for text in cases {
            assert!(matches!(ExperimentConfig::from_json(text), Err(ExperimentError::Config(_))), "{text}");
        }
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::new(Scenario::FlowSandwich { extent: vec![1.0, 1.0], eps: 0.2 }, vec![100]);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
