//! Graph rewiring from persistent homology of local neighborhoods, topology
//! weighted feature smoothing, and a resolvent graph convolution trained on
//! the rewired graph.

pub mod assignment;
pub mod error;
pub mod filtration;
pub mod graph;
pub mod harness;
pub mod io;
pub mod stability;
pub mod stan;
pub mod timr;
pub mod trinet;
pub mod wasserstein;

pub use error::{Error, Result};
pub use filtration::{Filtration, PersistenceDiagram};
pub use graph::{Graph, Masks, Metric};
pub use timr::{TimrGraph, Threshold};
pub use wasserstein::{TopoDistanceMatrix, WassersteinConfig};
