//! Gaussian-process surrogates over mixed continuous/categorical inputs,
//! with model-agnostic explanations: partial dependence and ICE curves,
//! Shapley attributions (exact and KernelSHAP), Monte Carlo Sobol' indices,
//! and split conformal prediction intervals.

pub mod benchmarks;
pub mod conformal;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod optim;
pub mod pdp;
pub mod rng;
pub mod shap;
pub mod sobol;
pub mod space;
pub mod stats;
pub mod surrogate;

pub use dataset::Dataset;
pub use error::{Error, Result, Violation};
pub use gp::{FitOptions, GpModel, Prediction};
pub use kernels::{CategoricalKernel, KernelConfig};
pub use space::{FeatureSpace, FeatureSpec, Point, Value};
pub use surrogate::{AnalyticModel, Surrogate};
pub use pdp::{ImportanceMethod, ImportanceTable};
