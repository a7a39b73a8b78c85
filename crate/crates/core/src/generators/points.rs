use std::io::{BufRead, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::GeneratorError;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic standard deviation.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    GaussianMixture { components: Vec<MixtureComponent> },
}

impl DensitySpec {
    pub fn unit_cube(d: usize) -> Self {
        DensitySpec::Uniform {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::Uniform { lower, .. } => lower.len(),
            DensitySpec::GaussianMixture { components } => {
                components.first().map_or(0, |c| c.mean.len())
            }
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |msg: String| Err(GeneratorError::InvalidDensitySpec(msg));
        match self {
            DensitySpec::Uniform { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad(format!(
                        "box bounds have lengths {} and {}",
                        lower.len(),
                        upper.len()
                    ));
                }
                for (k, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if !(l.is_finite() && u.is_finite() && l < u) {
                        return bad(format!("axis {k} has bounds [{l}, {u}]"));
                    }
                }
            }
            DensitySpec::GaussianMixture { components } => {
                let Some(first) = components.first() else {
                    return bad("mixture has no components".into());
                };
                let d = first.mean.len();
                if d == 0 {
                    return bad("mixture means are empty".into());
                }
                let mut total = 0.0;
                for (k, c) in components.iter().enumerate() {
                    if c.mean.len() != d {
                        return bad(format!("component {k} has dimension {}", c.mean.len()));
                    }
                    if !(c.weight >= 0.0 && c.weight.is_finite()) {
                        return bad(format!("component {k} has weight {}", c.weight));
                    }
                    if !(c.scale > 0.0 && c.scale.is_finite()) {
                        return bad(format!("component {k} has scale {}", c.scale));
                    }
                    if c.mean.iter().any(|m| !m.is_finite()) {
                        return bad(format!("component {k} has a non-finite mean"));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("mixture weights sum to {total}"));
                }
            }
        }
        Ok(())
    }

    /// Box bounds for the uniform case.
    pub fn rectangle(&self) -> Option<(&[f64], &[f64])> {
        match self {
            DensitySpec::Uniform { lower, upper } => Some((lower, upper)),
            DensitySpec::GaussianMixture { .. } => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DensitySpec::Uniform { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u),
            DensitySpec::GaussianMixture { .. } => x.iter().all(|v| v.is_finite()),
        }
    }
}

pub fn evaluate_density(spec: &DensitySpec, x: &[f64]) -> f64 {
    match spec {
        DensitySpec::Uniform { lower, upper } => {
            if spec.contains(x) {
                1.0 / lower.iter().zip(upper).map(|(l, u)| u - l).product::<f64>()
            } else {
                0.0
            }
        }
        DensitySpec::GaussianMixture { components } => components
            .iter()
            .map(|c| {
                let d = c.mean.len() as f64;
                let dist2: f64 = x.iter().zip(&c.mean).map(|(a, b)| (a - b) * (a - b)).sum();
                let s2 = c.scale * c.scale;
                c.weight * (2.0 * std::f64::consts::PI * s2).powf(-d / 2.0) * (-dist2 / (2.0 * s2)).exp()
            })
            .sum(),
    }
}

/// An immutable i.i.d. sample, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
    pub density: DensitySpec,
    pub seed: u64,
}

impl PointCloud {
    pub fn from_points(points: &[Vec<f64>], density: DensitySpec, seed: u64) -> Self {
        let dim = density.dim();
        assert!(points.iter().all(|p| p.len() == dim), "point dimension mismatch");
        PointCloud {
            coords: points.concat(),
            dim,
            density,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.point(i), self.point(j))
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.squared_distance(i, j).sqrt()
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Draws `n` points; point `i` comes from its own stream so the sample is
/// reproducible regardless of generation order.
pub fn sample_points(spec: &DensitySpec, n: usize, seed: u64) -> Result<PointCloud, GeneratorError> {
    spec.validate()?;
    if n == 0 {
        return Err(GeneratorError::InvalidDensitySpec("n must be at least 1".into()));
    }
    let d = spec.dim();
    let mut coords = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut rng = stream_rng(seed, i as u64);
        match spec {
            DensitySpec::Uniform { lower, upper } => {
                for (l, u) in lower.iter().zip(upper) {
                    coords.push(l + (u - l) * rng.random::<f64>());
                }
            }
            DensitySpec::GaussianMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.len() - 1;
                for (k, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                let c = &components[chosen];
                for m in &c.mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    coords.push(m + c.scale * z);
                }
            }
        }
    }
    Ok(PointCloud {
        coords,
        dim: d,
        density: spec.clone(),
        seed,
    })
}

/// Text format: header `n d seed`, then one whitespace-separated line per point.
pub fn write_point_cloud<W: Write>(cloud: &PointCloud, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {} {}", cloud.len(), cloud.dim(), cloud.seed)?;
    for p in cloud.points() {
        let line: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_point_cloud<R: BufRead>(input: R, density: DensitySpec) -> Result<PointCloud, GeneratorError> {
    let parse = |s: &str| -> Result<f64, GeneratorError> {
        s.parse().map_err(|_| GeneratorError::Parse(format!("cannot parse {s:?}")))
    };
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| GeneratorError::Parse("missing header".into()))??;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 {
        return Err(GeneratorError::Parse(format!("bad header {header:?}")));
    }
    let bad = |s: &str| GeneratorError::Parse(format!("bad header field {s:?}"));
    let n: usize = h[0].parse().map_err(|_| bad(h[0]))?;
    let d: usize = h[1].parse().map_err(|_| bad(h[1]))?;
    let seed: u64 = h[2].parse().map_err(|_| bad(h[2]))?;
    if d != density.dim() {
        return Err(GeneratorError::Parse(format!(
            "file dimension {d} differs from density dimension {}",
            density.dim()
        )));
    }
    let mut coords = Vec::with_capacity(n * d);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line.split_whitespace().map(parse).collect::<Result<_, _>>()?;
        if row.len() != d {
            return Err(GeneratorError::Parse(format!("point line {line:?} has wrong length")));
        }
        coords.extend(row);
    }
    if coords.len() != n * d {
        return Err(GeneratorError::Parse(format!("expected {n} points")));
    }
    Ok(PointCloud { coords, dim: d, density, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> DensitySpec {
        DensitySpec::GaussianMixture {
            components: vec![
                MixtureComponent { weight: 0.5, mean: vec![0.0, 0.0], scale: 0.3 },
                MixtureComponent { weight: 0.5, mean: vec![1.0, 0.0], scale: 0.3 },
            ],
        }
    }

    #[test]
    fn uniform_sample_in_unit_square() {
        let cloud = sample_points(&DensitySpec::unit_cube(2), 4, 7).unwrap();
        assert_eq!(cloud.len(), 4);
        assert!(cloud.points().all(|p| cloud.density.contains(p)));
    }

    #[test]
    fn unit_box_density_is_one() {
        assert_eq!(evaluate_density(&DensitySpec::unit_cube(2), &[0.3, 0.9]), 1.0);
        assert_eq!(evaluate_density(&DensitySpec::unit_cube(2), &[1.3, 0.9]), 0.0);
    }

    #[test]
    fn mixture_density_is_linear() {
        let spec = two_blobs();
        let DensitySpec::GaussianMixture { components } = &spec else { unreachable!() };
        let single = |c: &MixtureComponent| {
            evaluate_density(
                &DensitySpec::GaussianMixture {
                    components: vec![MixtureComponent { weight: 1.0, ..c.clone() }],
                },
                &[0.5, 0.0],
            )
        };
        let expected = 0.5 * (single(&components[0]) + single(&components[1]));
        assert!((evaluate_density(&spec, &[0.5, 0.0]) - expected).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_coordinates() {
        let a = sample_points(&two_blobs(), 50, 3).unwrap();
        let b = sample_points(&two_blobs(), 50, 3).unwrap();
        let c = sample_points(&two_blobs(), 50, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs() {
        let bad_weights = DensitySpec::GaussianMixture {
            components: vec![MixtureComponent { weight: 0.7, mean: vec![0.0], scale: 1.0 }],
        };
        assert!(matches!(sample_points(&bad_weights, 3, 0), Err(GeneratorError::InvalidDensitySpec(_))));
        let flat_box = DensitySpec::Uniform { lower: vec![0.0, 1.0], upper: vec![1.0, 1.0] };
        assert!(flat_box.validate().is_err());
        assert!(sample_points(&DensitySpec::unit_cube(1), 0, 0).is_err());
    }

    #[test]
    fn point_cloud_round_trip() {
        let cloud = sample_points(&two_blobs(), 20, 11).unwrap();
        let mut buf = Vec::new();
        write_point_cloud(&cloud, &mut buf).unwrap();
        assert!(buf.starts_with(b"20 2 11\n"));
        let back = read_point_cloud(&buf[..], two_blobs()).unwrap();
        assert_eq!(back, cloud);
    }
}
