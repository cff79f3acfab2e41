//! Poincaré-ball margin softmax losses for speaker embeddings.
//!
//! The geometry, loss and metric code is generic over [`Scalar`] (`f32` or
//! `f64`). The synthetic data generator, trainer and experiment runner work
//! in `f64`.
//!
//! ```
//! use hyperspeaker::{BallPoint64, Curvature64, StabilityPolicy64};
//! use hyperspeaker::geometry::hyperbolic_distance;
//!
//! let c = Curvature64::unit();
//! let o = BallPoint64::origin(2, c);
//! let x = BallPoint64::new(vec![0.6, 0.0], c).unwrap();
//! let d = hyperbolic_distance(&o, &x, c, &StabilityPolicy64::default()).unwrap();
//! assert!((d - 4f64.ln()).abs() < 1e-12);
//! ```

// `!(x > 0)` is the NaN-rejecting form used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod experiment;
pub mod geometry;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod scalar;
pub mod synthdata;
pub mod trainer;

pub use geometry::{BallPoint, Curvature, GeometryError, StabilityPolicy};
pub use losses::{Batch, ClassCenters, LossConfig, LossError, LossKind};
pub use matrix::Matrix;
pub use metrics::{DcfParams, MetricsError, TrialScores};
pub use scalar::Scalar;

pub type BallPoint32 = BallPoint<f32>;
pub type BallPoint64 = BallPoint<f64>;
pub type Curvature32 = Curvature<f32>;
pub type Curvature64 = Curvature<f64>;
pub type StabilityPolicy32 = StabilityPolicy<f32>;
pub type StabilityPolicy64 = StabilityPolicy<f64>;
pub type LossConfig32 = LossConfig<f32>;
pub type LossConfig64 = LossConfig<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type TrialScores64 = TrialScores<f64>;
