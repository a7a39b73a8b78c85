//! Seeded samplers for point clouds, geometric graphs and random graph
//! models, plus kNN radius and degree statistics.

mod geometric;
mod points;
mod random;
mod stats;

pub use geometric::{
    build_geometric_graph, gaussian_weight, knn_lists, knn_radii, GeometricGraphSpec, GeometricKind, GridIndex,
};
pub use points::{
    evaluate_density, read_point_cloud, sample_points, squared_distance, write_point_cloud, DensitySpec,
    MixtureComponent, PointCloud,
};
pub use random::{gen_er, gen_expected_degrees, gen_planted_bisection, PlantedPartition};
pub use stats::{
    boundary_alpha, cell_counts, concentration_bound, concentration_experiment, eta_d, radius_and_degree_stats,
    ConcentrationResult, RadiusStats,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid density spec: {0}")]
    InvalidDensitySpec(String),
    #[error("graph spec does not fit the point cloud: {0}")]
    SpecMismatch(String),
    #[error("planted bisection needs an even number of vertices, got {0}")]
    OddN(usize),
    #[error("edge probability would exceed 1: max d_i d_j = {max_product} > sum of degrees {total}")]
    ProbabilityOverflow { max_product: f64, total: f64 },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("malformed point cloud: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
