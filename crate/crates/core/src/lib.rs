pub mod bounds;
pub mod derandomize;
pub mod error;
pub mod estimator;
pub mod gnn;
pub mod graph;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod smoothing;
pub mod synthetic;

pub use error::{Error, Result};

pub use num_rational::BigRational;

/// Double-precision graph.
pub type GraphF64 = graph::Graph<f64>;
pub type GraphF32 = graph::Graph<f32>;
pub type GnnModelF64 = gnn::GnnModel<f64>;
pub type GnnModelF32 = gnn::GnnModel<f32>;
pub type SmoothingProbsF64 = smoothing::SmoothingProbs<f64>;
/// Smoothing probabilities as exact rationals.
pub type SmoothingProbsExact = smoothing::SmoothingProbs<BigRational>;
pub type DeltaBoundF64 = bounds::DeltaBound<f64>;
pub type DeltaBoundExact = bounds::DeltaBound<BigRational>;
