//! Reference computations that reach the same quantities as the main code
//! along a different route. Used by the self-check battery and the tests.
//!
//! - Curvature energy: each knot interval's cubic is recovered by Lagrange
//!   interpolation of spline *values*, differentiated exactly and squared
//!   under 5-point Gauss-Legendre. Neither the difference operator nor the
//!   Gram matrix is involved.
//! - Constrained minimizer: weighted least squares first, then the penalty
//!   minimized over an explicit null-space parametrization of the solution set.

use nalgebra::{DMatrix, DVector};

use crate::bspline::{BasisError, SplineFunction};
use crate::linalg::{self, LinalgError, RankTolerance};

/// Nodes and weights of 5-point Gauss-Legendre on `[-1, 1]`.
pub const GAUSS_LEGENDRE_5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Composite 5-point Gauss-Legendre of `f` over `[lo, hi]` split in `pieces`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, lo: f64, hi: f64, pieces: usize) -> f64 {
    let width = (hi - lo) / pieces as f64;
    (0..pieces)
        .map(|p| {
            let a = lo + width * p as f64;
            let half = 0.5 * width;
            let mid = a + half;
            GAUSS_LEGENDRE_5
                .iter()
                .map(|(x, w)| w * f(mid + half * x))
                .sum::<f64>()
                * half
        })
        .sum()
}

/// Second derivative of the cubic through `(nodes[k], values[k])`.
fn lagrange_cubic_second_derivative(nodes: &[f64; 4], values: &[f64; 4], x: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..4 {
        let others: Vec<f64> = (0..4).filter(|&m| m != k).map(|m| nodes[m]).collect();
        let denom: f64 = others.iter().map(|o| nodes[k] - o).product();
        // d^2/dx^2 of (x - o0)(x - o1)(x - o2)
        let second = 2.0 * ((x - others[0]) + (x - others[1]) + (x - others[2]));
        total += values[k] * second / denom;
    }
    total
}

/// `int_a^b |s''(x)|^2 dx` from spline values only.
pub fn curvature_energy(spline: &SplineFunction) -> Result<f64, BasisError> {
    let breakpoints = spline.knots().breakpoints();
    let mut total = 0.0;
    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let nodes = [lo, lo + (hi - lo) / 3.0, lo + 2.0 * (hi - lo) / 3.0, hi];
        // continuity makes the endpoint values those of this interval's piece
        let mut values = [0.0; 4];
        for (v, &x) in values.iter_mut().zip(&nodes) {
            *v = spline.eval(x, 0)?;
        }
        total += gauss_legendre(
            |x| lagrange_cubic_second_derivative(&nodes, &values, x).powi(2),
            lo,
            hi,
            4,
        );
    }
    Ok(total)
}

/// Central difference of `s^(deriv)`, approximating `s^(deriv + 1)` at `x`.
pub fn central_difference(
    spline: &SplineFunction,
    x: f64,
    deriv: usize,
    h: f64,
) -> Result<f64, BasisError> {
    Ok((spline.eval(x + h, deriv)? - spline.eval(x - h, deriv)?) / (2.0 * h))
}

/// `argmin { ||L beta|| : beta in argmin ||y - B beta||_M }` by an explicit
/// two-stage solve.
pub fn two_stage_minimizer(
    b: &DMatrix<f64>,
    m: &DMatrix<f64>,
    l: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>, LinalgError> {
    let tol = RankTolerance::default();
    let mb = m * b;
    let particular = linalg::pinv(&mb, tol)? * (m * y);

    // orthonormal basis of N(MB) from the SVD of the zero-padded square
    let d = b.ncols();
    let mut square = DMatrix::zeros(d.max(mb.nrows()), d);
    square.rows_mut(0, mb.nrows()).copy_from(&mb);
    let svd = linalg::svd(&square)?;
    let cut = tol.cutoff(svd.sigma_max(), mb.nrows(), d);
    let null_cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| !(s > cut && s > 0.0))
        .map(|(k, _)| svd.v.column(k).into_owned())
        .collect();
    if null_cols.is_empty() {
        return Ok(particular);
    }
    let basis = DMatrix::from_columns(&null_cols);
    let lz = l * &basis;
    let shift = linalg::pinv(&lz, tol)? * (l * &particular);
    Ok(particular - basis * shift)
}
