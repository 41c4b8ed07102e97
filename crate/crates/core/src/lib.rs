//! Exact quadratic-mean errors of composite Hermite spline approximation of
//! random processes with an isolated singularity at `t = 0`, quantile knot
//! designs, asymptotic constants and rate fitting.

pub mod dd;
pub mod design;
pub mod error;
pub mod kernel;
pub mod norm;
pub mod quadrature;
pub mod spline;

pub use dd::Dd;
pub use design::{
    check_condition, generate_knots, intermediate_design, ConditionVariant, ConditionVerdict, Design,
    GeneratingDensity, RegularVaryingBound,
};
pub use error::{Error, Result};
pub use kernel::{eval_cov, make_model, CovarianceModel, Kernel, LocalFn, ModelKind, SmoothnessProfile};
pub use norm::NormOrder;
pub use spline::{basis_weights, interpolate_deterministic, BasisEntry, BasisWeights, SplineScheme};
pub mod qmerror;
pub use qmerror::{norm_error, pointwise_error, sweep, NormResult, Precision, SweepRow};
pub mod asymptotics;
pub use asymptotics::{
    asymptotic_constant, b_constant, fit_rate, knots_for_accuracy, local_stationarity, optimal_density, BConstant,
    FitRange, RateFit,
};
pub mod cli;
