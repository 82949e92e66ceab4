//! Penalized least squares in clamped cubic B-spline bases, the weighted
//! pseudoinverse limits of the resulting hat matrix, and a seeded Monte Carlo
//! harness measuring how often the smoothing residual locates a single
//! dominant noise component and its sign.
//!
//! Module map:
//! - [`bspline`]: knots, basis evaluation, design matrix, curvature penalty.
//! - [`linalg`]: pseudoinverse, projectors, PSD square root, limit operators.
//! - [`estimator`]: hat matrix, fits and residual noise estimates.
//! - [`experiment`]: noise model, detection, Monte Carlo probabilities.
//! - [`oracle`]: independent reference computations used by the checks.
//! - [`cli`]: configuration, CSV/SVG/manifest output, oracle self-checks.

pub mod bspline;
pub mod cli;
pub mod estimator;
pub mod experiment;
pub mod linalg;
pub mod oracle;
