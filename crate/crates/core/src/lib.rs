//! Two-sample tests built from gradients of statistical functionals, with the local
//! asymptotic machinery (tangents, LAN, power) and a Monte Carlo harness to check it.
//!
//! Everything is generic over the scalar type through [`Real`]; the `*64` aliases below
//! fix it to `f64`, which is what the simulation layer uses.

pub mod asymptotics;
pub mod error;
pub mod functionals;
pub mod measures;
pub mod montecarlo;
pub mod quadrature;
pub mod scalar;
pub mod tangents;
pub mod testing;

pub use error::{Error, Result};
pub use functionals::{CompositeOp, Functional, GradientPair, InvariantScore, Kernel, Score};
pub use measures::{hellinger, tv_distance, DiscreteMeasure, Measure, PiecewiseUniformMeasure, ProductSample};
pub use montecarlo::{Localization, SimConfig, SimResult};
pub use scalar::Real;
pub use tangents::{ProductTangent, Tangent};
pub use testing::{run_test, CriticalValueSource, PreparedTest, Sided, TestReport, TestSpec};

pub type Measure64 = Measure<f64>;
pub type Measure32 = Measure<f32>;
pub type Tangent64 = Tangent<f64>;
pub type Tangent32 = Tangent<f32>;
pub type ProductTangent64 = ProductTangent<f64>;
pub type ProductSample64 = ProductSample<f64>;
pub type Functional64 = Functional<f64>;
pub type Functional32 = Functional<f32>;
pub type GradientPair64 = GradientPair<f64>;
pub type TestSpec64 = TestSpec<f64>;
pub type TestReport64 = TestReport<f64>;
