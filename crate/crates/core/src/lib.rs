//! Hitting times, commute distances and effective resistances on random
//! geometric and random graphs.
//!
//! The crate computes the exact quantities through independent routes
//! (spectral pseudoinverse, grounded linear solves, Monte Carlo walks) and
//! compares them against the approximation `1/d_u + 1/d_v` and the spectral
//! and flow-based deviation bounds that control it.

pub mod dense;
pub mod exact;
pub mod experiments;
pub mod flow;
pub mod generators;
pub mod graph;
pub mod rng;
pub mod spectral;

pub use graph::{build_graph, connectivity_flags, laplacian, Graph, GraphError, LaplacianKind};
