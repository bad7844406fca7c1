//! Wasserstein projection tests for probabilistic fairness of logistic classifiers.
//!
//! The statistic is `N · R`, where `R` is the squared type-2 Wasserstein
//! distance from the empirical distribution to the set of distributions under
//! which the classifier satisfies probabilistic equal opportunity (`opp`) or
//! probabilistic equalized odds (`odd`). The core math is generic over
//! [`Real`] (`f32` or `f64`); file formats, generators and experiments use `f64`.
//!
//! ```
//! use otfair::{test_opp, Dataset64, Model64};
//!
//! let data = Dataset64::from_rows(
//!     vec![vec![1.0], vec![0.0], vec![0.5], vec![0.2]],
//!     vec![1, 0, 1, 0],
//!     vec![1, 1, 0, 0],
//! )
//! .unwrap();
//! let model = Model64::new(vec![2.0], 0.0).unwrap();
//! let report = test_opp(&data, &model, 0.05).unwrap();
//! assert!(report.statistic > 0.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod audit;
pub mod data;
pub mod domain;
pub mod error;
pub mod harness;
pub mod limits;
pub mod mfd;
pub mod projection;
pub mod scalar;
pub mod seed;

pub use audit::{run_test, test_odd, test_opp, Criterion, TestReport};
pub use domain::{compute_marginals, fairness_gap, Cell, Dataset, LogisticModel, Marginals};
pub use error::{Error, Result};
pub use mfd::{most_favorable_odd, most_favorable_opp, verify_plan, TransportPlan};
pub use projection::{squared_projection_odd, squared_projection_opp, ProjectionResult, Split};
pub use scalar::Real;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Model64 = LogisticModel<f64>;
pub type Model32 = LogisticModel<f32>;
pub type Projection64 = ProjectionResult<f64>;
pub type Projection32 = ProjectionResult<f32>;
pub type Plan64 = TransportPlan<f64>;
pub type Plan32 = TransportPlan<f32>;
