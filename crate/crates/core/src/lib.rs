//! Ramified (branched) optimal transport between atomic measures on
//! constant-curvature model surfaces.
//!
//! The crate covers the full pipeline: geometry of the three model charts,
//! atomic measures, transport paths with their `M_alpha` cost, exact optimal
//! plans for small instances, a branched-transport solver over tree
//! topologies, closed-form angle/degree bounds with audits, and a transport
//! dimension estimator for nested cube collections.

pub mod bounds;
pub mod dimension;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod plans;
pub mod solver;
pub mod transport_path;

pub use error::{Error, Result};
pub use geometry::{comparison_angle, distance, geodesic_point, Curvature, ModelPoint};
pub use measures::{Atom, AtomicMeasure};
pub use solver::{solve, SolveResult, SolverConfig};
pub use transport_path::{Edge, TransportPath, ValidationReport, Violation};
