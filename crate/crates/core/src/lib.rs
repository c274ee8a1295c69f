//! Energy-based recurrent refinement of segmentation belief maps.
//!
//! Three dynamics operate on a per-pixel belief map laid out on the 4-connected
//! pixel lattice, each one a gradient-descent step on its own energy:
//!
//! * [`som`]: self-organizing propagation gated by a filter-derived component graph,
//! * [`crf`]: a pairwise conditional-random-field update,
//! * [`hopfield`]: modern Hopfield retrieval over belief-map patches.
//!
//! Around them sit a synthetic polygon dataset ([`shapes`]), segmentation losses and
//! metrics ([`metrics`]), Welch's t-test ([`stats`]) and a deterministic sweep
//! harness ([`experiment`]).

pub mod crf;
pub mod error;
pub mod experiment;
pub mod hopfield;
pub mod lattice;
pub mod metrics;
pub mod rng;
pub mod shapes;
pub mod som;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use lattice::{BeliefMap, ComponentGraph, Direction, FilterResponse, Grid, Image};
pub use trajectory::RunTrajectory;
