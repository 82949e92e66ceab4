//! Clamped cubic B-spline bases: knot vectors, Cox-de Boor evaluation,
//! design matrices and the exact curvature penalty.
//!
//! Basis functions are addressed by a signed index `j`. The order-`k`
//! function `S_{j,k}` is supported on `[t_{j+3}, t_{j+3+k}]` of the extended
//! (clamped) knot sequence `t`, so every order shares the same offset: index
//! `j` lives at extended position `j + 3`. The cubic space on `K` interior
//! knots is spanned by `j = -3..=K`, stored as matrix columns `0..K+4`
//! (see [`basis_column`]). Second derivatives of cubic splines live in the
//! piecewise-linear space `j = -1..=K`.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

/// Order (degree + 1) of the cubic basis.
pub const CUBIC_ORDER: usize = 4;

/// Offset between a signed basis index and its extended-knot position.
pub const INDEX_OFFSET: i64 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("invalid interval: a ({a}) must be strictly less than b ({b})")]
    InvalidInterval { a: f64, b: f64 },

    #[error("at least one interior knot is required")]
    NoInteriorKnots,

    #[error("interior knots must be finite, strictly increasing and strictly inside ({a}, {b})")]
    InvalidInteriorKnots { a: f64, b: f64 },

    #[error("x = {x} lies outside [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    #[error("order {0} is not supported (expected 1..=4)")]
    InvalidOrder(usize),

    #[error("basis index {index} is not valid for order {order} with {interior} interior knots")]
    InvalidIndex {
        index: i64,
        order: usize,
        interior: usize,
    },

    #[error("abscissae must be finite and strictly increasing")]
    UnsortedAbscissae,

    #[error("dataset has {xs} abscissae but {ys} observations")]
    LengthMismatch { xs: usize, ys: usize },

    #[error("at least two data points are required, got {0}")]
    TooFewPoints(usize),

    #[error("coefficient vector has length {found}, expected {expected}")]
    CoefficientLength { expected: usize, found: usize },

    #[error("derivative order {0} is not supported (expected 0..=2)")]
    InvalidDerivative(usize),

    #[error("penalty assembly failed: {0}")]
    Linalg(#[from] LinalgError),
}

/// Storage column of the cubic basis function with signed index `j`.
///
/// This is the only place the `j -> j + 3` shift is spelled out.
pub fn basis_column(j: i64) -> usize {
    debug_assert!(j >= -INDEX_OFFSET);
    (j + INDEX_OFFSET) as usize
}

/// `num / den`, with the de Boor convention `x / 0 = 0` for coincident knots.
fn knot_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Interval `[a, b]`, its interior knots, and the clamped extended sequence
/// `t_0 = .. = t_3 = a < t_4 < .. < t_{K+3} < t_{K+4} = .. = t_{K+7} = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    a: f64,
    b: f64,
    interior: Vec<f64>,
    extended: Vec<f64>,
}

impl KnotVector {
    pub fn new(a: f64, b: f64, interior: Vec<f64>) -> Result<Self, BasisError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(BasisError::InvalidInterval { a, b });
        }
        if interior.is_empty() {
            return Err(BasisError::NoInteriorKnots);
        }
        let inside = interior.iter().all(|&k| k.is_finite() && a < k && k < b);
        let increasing = interior.windows(2).all(|w| w[0] < w[1]);
        if !(inside && increasing) {
            return Err(BasisError::InvalidInteriorKnots { a, b });
        }

        let mut extended = Vec::with_capacity(interior.len() + 2 * CUBIC_ORDER);
        extended.extend(std::iter::repeat_n(a, CUBIC_ORDER));
        extended.extend_from_slice(&interior);
        extended.extend(std::iter::repeat_n(b, CUBIC_ORDER));

        Ok(Self {
            a,
            b,
            interior,
            extended,
        })
    }

    /// `K` equally spaced interior knots: `kappa_i = a + i (b - a) / (K + 1)`.
    pub fn uniform(a: f64, b: f64, num_interior: usize) -> Result<Self, BasisError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(BasisError::InvalidInterval { a, b });
        }
        if num_interior == 0 {
            return Err(BasisError::NoInteriorKnots);
        }
        let width = b - a;
        let segments = (num_interior + 1) as f64;
        let interior = (1..=num_interior)
            .map(|i| a + width * i as f64 / segments)
            .collect();
        Self::new(a, b, interior)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn extended(&self) -> &[f64] {
        &self.extended
    }

    /// Number of cubic basis functions, `K + 4`.
    pub fn num_basis(&self) -> usize {
        self.interior.len() + CUBIC_ORDER
    }

    /// Distinct breakpoints `kappa_0 = a, kappa_1, .., kappa_{K+1} = b`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut points = Vec::with_capacity(self.interior.len() + 2);
        points.push(self.a);
        points.extend_from_slice(&self.interior);
        points.push(self.b);
        points
    }

    /// Signed indices of the order-`order` functions defined on this sequence.
    pub fn basis_range(&self, order: usize) -> RangeInclusive<i64> {
        let last = self.extended.len() as i64 - order as i64 - 1 - INDEX_OFFSET;
        -INDEX_OFFSET..=last
    }

    /// Greville abscissae `(t_{i+1} + t_{i+2} + t_{i+3}) / 3` of the cubic basis.
    ///
    /// Any affine function `c0 + c1 x` has cubic coefficients
    /// `c0 + c1 * greville[i]`.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.num_basis())
            .map(|i| self.extended[i + 1..i + CUBIC_ORDER].iter().sum::<f64>() / 3.0)
            .collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }

    fn check_domain(&self, x: f64) -> Result<(), BasisError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(BasisError::OutOfDomain {
                x,
                a: self.a,
                b: self.b,
            })
        }
    }

    /// Extended index `mu` of the knot interval containing `x`:
    /// `t_mu <= x < t_{mu+1}`, except that `x = b` maps to the last
    /// non-empty interval (left-limit convention).
    pub fn span(&self, x: f64) -> Result<usize, BasisError> {
        self.check_domain(x)?;
        let last = self.extended.len() - CUBIC_ORDER - 1;
        let mu = self.extended.partition_point(|&t| t <= x) - 1;
        Ok(mu.clamp(CUBIC_ORDER - 1, last))
    }

    /// Values of the `order` functions of that order which can be nonzero on
    /// interval `span`, i.e. extended indices `span - order + 1 ..= span`.
    fn local_basis(&self, span: usize, order: usize, x: f64) -> [f64; CUBIC_ORDER] {
        let t = &self.extended;
        let mut values = [0.0; CUBIC_ORDER];
        let mut left = [0.0; CUBIC_ORDER];
        let mut right = [0.0; CUBIC_ORDER];
        values[0] = 1.0;
        for r in 1..order {
            left[r] = x - t[span + 1 - r];
            right[r] = t[span + r] - x;
            let mut saved = 0.0;
            for s in 0..r {
                let temp = knot_ratio(values[s], right[s + 1] + left[r - s]);
                values[s] = saved + right[s + 1] * temp;
                saved = left[r - s] * temp;
            }
            values[r] = saved;
        }
        values
    }
}

/// Uniform knot vector on `[a, b]` with `num_interior` interior knots.
pub fn make_uniform_knots(a: f64, b: f64, num_interior: usize) -> Result<KnotVector, BasisError> {
    KnotVector::uniform(a, b, num_interior)
}

/// Observations `ys` at strictly increasing abscissae `xs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, BasisError> {
        if xs.len() != ys.len() {
            return Err(BasisError::LengthMismatch {
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BasisError::UnsortedAbscissae);
        }
        Ok(Self { xs, ys })
    }

    /// Observations at `n` equally spaced abscissae spanning `[a, b]`.
    pub fn uniform(a: f64, b: f64, ys: Vec<f64>) -> Result<Self, BasisError> {
        let xs = uniform_abscissae(a, b, ys.len())?;
        Self::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// `x_i = a + (i - 1)(b - a)/(n - 1)` for `i = 1..=n`, with both ends exact.
pub fn uniform_abscissae(a: f64, b: f64, n: usize) -> Result<Vec<f64>, BasisError> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(BasisError::InvalidInterval { a, b });
    }
    if n < 2 {
        return Err(BasisError::TooFewPoints(n));
    }
    let step = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { b } else { a + step * i as f64 })
        .collect())
}

/// `S_{j,order}(x)` by the Cox-de Boor recursion.
pub fn eval_basis(knots: &KnotVector, j: i64, order: usize, x: f64) -> Result<f64, BasisError> {
    if !(1..=CUBIC_ORDER).contains(&order) {
        return Err(BasisError::InvalidOrder(order));
    }
    if !knots.basis_range(order).contains(&j) {
        return Err(BasisError::InvalidIndex {
            index: j,
            order,
            interior: knots.num_interior(),
        });
    }
    let span = knots.span(x)?;
    Ok(cox_de_boor(
        knots.extended(),
        basis_column(j),
        order,
        x,
        span,
    ))
}

fn cox_de_boor(t: &[f64], i: usize, order: usize, x: f64, span: usize) -> f64 {
    if order == 1 {
        return if i == span { 1.0 } else { 0.0 };
    }
    let k = order;
    let rising = knot_ratio(x - t[i], t[i + k - 1] - t[i]);
    let falling = knot_ratio(t[i + k] - x, t[i + k] - t[i + 1]);
    let mut value = 0.0;
    if rising != 0.0 {
        value += rising * cox_de_boor(t, i, k - 1, x, span);
    }
    if falling != 0.0 {
        value += falling * cox_de_boor(t, i + 1, k - 1, x, span);
    }
    value
}

/// The `n x (K + 4)` matrix of cubic basis values at the data abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn design_matrix(knots: &KnotVector, xs: &[f64]) -> Result<DesignMatrix, BasisError> {
    let mut matrix = DMatrix::zeros(xs.len(), knots.num_basis());
    for (row, &x) in xs.iter().enumerate() {
        let span = knots.span(x)?;
        let values = knots.local_basis(span, CUBIC_ORDER, x);
        let first = span + 1 - CUBIC_ORDER;
        for (s, &v) in values.iter().enumerate() {
            matrix[(row, first + s)] = v;
        }
    }
    Ok(DesignMatrix { matrix })
}

/// One application of the B-spline derivative formula.
///
/// Maps coefficients of the order-`order` functions `first..=last` to the
/// coefficients of the derivative in the order-`order - 1` functions
/// `first + 1..=last`: `c'_j = (order - 1)(c_j - c_{j-1}) / (t_{i+order-1} - t_i)`
/// with `i = j + 3`.
fn difference_matrix(knots: &KnotVector, order: usize, first: i64, last: i64) -> DMatrix<f64> {
    let t = knots.extended();
    let cols = (last - first + 1) as usize;
    let mut d = DMatrix::zeros(cols - 1, cols);
    for r in 0..cols - 1 {
        let i = basis_column(first + 1 + r as i64);
        let w = knot_ratio((order - 1) as f64, t[i + order - 1] - t[i]);
        d[(r, r)] = -w;
        d[(r, r + 1)] = w;
    }
    d
}

/// `(K + 3) x (K + 4)` map from cubic coefficients to the coefficients of the
/// first derivative in the quadratic functions `j = -2..=K`.
pub fn delta1_matrix(knots: &KnotVector) -> DMatrix<f64> {
    let k = knots.num_interior() as i64;
    difference_matrix(knots, CUBIC_ORDER, -3, k)
}

/// `(K + 2) x (K + 4)` weighted second-difference operator: the second
/// derivative of `sum_j beta_j S_{j,4}` is `sum_j (delta2 beta)_j S_{j,2}`.
pub fn delta2_matrix(knots: &KnotVector) -> DMatrix<f64> {
    let k = knots.num_interior() as i64;
    let quadratic = difference_matrix(knots, CUBIC_ORDER - 1, -2, k);
    quadratic * delta1_matrix(knots)
}

/// Gram matrix `R_{ij} = int_a^b S_{i,2} S_{j,2}` over `j = -1..=K`.
///
/// Two-point Gauss-Legendre per knot interval integrates the piecewise
/// quadratic integrand exactly.
pub fn gram_matrix_order2(knots: &KnotVector) -> DMatrix<f64> {
    let size = knots.num_interior() + 2;
    let mut gram = DMatrix::zeros(size, size);
    let node = 1.0 / 3.0_f64.sqrt();
    let breakpoints = knots.breakpoints();
    for (m, w) in breakpoints.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let span = m + CUBIC_ORDER - 1;
        // order-2 functions nonzero here sit at extended span-1, span, i.e.
        // gram rows span-3, span-2
        let row = span - 3;
        for x in [mid - half * node, mid + half * node] {
            let v = knots.local_basis(span, 2, x);
            for p in 0..2 {
                for q in 0..2 {
                    gram[(row + p, row + q)] += half * v[p] * v[q];
                }
            }
        }
    }
    gram
}

/// The curvature penalty `||L beta||^2 = int_a^b |s''|^2`, `L = R^{1/2} delta2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOperator {
    delta2: DMatrix<f64>,
    gram: DMatrix<f64>,
    l: DMatrix<f64>,
}

impl PenaltyOperator {
    pub fn delta2(&self) -> &DMatrix<f64> {
        &self.delta2
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `||L beta||^2`.
    pub fn energy(&self, beta: &DVector<f64>) -> f64 {
        (&self.l * beta).norm_squared()
    }
}

pub fn penalty_operator(knots: &KnotVector) -> Result<PenaltyOperator, BasisError> {
    let delta2 = delta2_matrix(knots);
    let gram = gram_matrix_order2(knots);
    let l = linalg::sqrt_psd(&gram)? * &delta2;
    Ok(PenaltyOperator { delta2, gram, l })
}

/// `s(x) = sum_j beta_j S_{j,4}(x)` together with its derivative coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFunction {
    knots: KnotVector,
    coeffs: DVector<f64>,
    first: DVector<f64>,
    second: DVector<f64>,
}

impl SplineFunction {
    pub fn new(knots: KnotVector, coeffs: DVector<f64>) -> Result<Self, BasisError> {
        if coeffs.len() != knots.num_basis() {
            return Err(BasisError::CoefficientLength {
                expected: knots.num_basis(),
                found: coeffs.len(),
            });
        }
        let first = delta1_matrix(&knots) * &coeffs;
        let second = delta2_matrix(&knots) * &coeffs;
        Ok(Self {
            knots,
            coeffs,
            first,
            second,
        })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// Value of the `deriv`-th derivative at `x`; one-sided at `a` and `b`.
    pub fn eval(&self, x: f64, deriv: usize) -> Result<f64, BasisError> {
        let (coeffs, order) = match deriv {
            0 => (&self.coeffs, CUBIC_ORDER),
            1 => (&self.first, CUBIC_ORDER - 1),
            2 => (&self.second, CUBIC_ORDER - 2),
            _ => return Err(BasisError::InvalidDerivative(deriv)),
        };
        let span = self.knots.span(x)?;
        let values = self.knots.local_basis(span, order, x);
        // order-k coefficients start at extended index 4 - k, so the first
        // local function always maps to coefficient span - 3
        let first = span + 1 - CUBIC_ORDER;
        Ok(values[..order]
            .iter()
            .enumerate()
            .map(|(s, v)| v * coeffs[first + s])
            .sum())
    }
}

pub fn eval_spline(f: &SplineFunction, x: f64, deriv: usize) -> Result<f64, BasisError> {
    f.eval(x, deriv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn knots4() -> KnotVector {
        make_uniform_knots(0.0, 1.0, 4).unwrap()
    }

    #[test]
    fn uniform_knots_examples() {
        let k = knots4();
        for (got, want) in k.interior().iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(make_uniform_knots(0.0, 1.0, 1).unwrap().interior(), &[0.5]);
        assert_eq!(
            make_uniform_knots(2.0, 4.0, 3).unwrap().interior(),
            &[2.5, 3.0, 3.5]
        );
        assert_eq!(k.extended().len(), 12);
        assert_eq!(&k.extended()[..4], &[0.0; 4]);
        assert_eq!(&k.extended()[8..], &[1.0; 4]);
    }

    #[test]
    fn invalid_interval_is_rejected() {
        assert!(matches!(
            make_uniform_knots(1.0, 1.0, 3),
            Err(BasisError::InvalidInterval { .. })
        ));
        assert!(matches!(
            make_uniform_knots(2.0, 1.0, 3),
            Err(BasisError::InvalidInterval { .. })
        ));
        assert!(matches!(
            make_uniform_knots(0.0, 1.0, 0),
            Err(BasisError::NoInteriorKnots)
        ));
        assert!(KnotVector::new(0.0, 1.0, vec![0.5, 0.4]).is_err());
        assert!(KnotVector::new(0.0, 1.0, vec![0.0, 0.4]).is_err());
    }

    #[test]
    fn clamped_ends_interpolate() {
        let k = knots4();
        assert_eq!(eval_basis(&k, -3, 4, 0.0).unwrap(), 1.0);
        for j in -2..=4 {
            assert_eq!(eval_basis(&k, j, 4, 0.0).unwrap(), 0.0);
        }
        assert_eq!(eval_basis(&k, 4, 4, 1.0).unwrap(), 1.0);
        for j in -3..=3 {
            assert_eq!(eval_basis(&k, j, 4, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn out_of_domain_and_bad_index() {
        let k = knots4();
        assert!(matches!(
            eval_basis(&k, 0, 4, 1.5),
            Err(BasisError::OutOfDomain { .. })
        ));
        assert!(matches!(
            eval_basis(&k, 5, 4, 0.5),
            Err(BasisError::InvalidIndex { .. })
        ));
        assert!(matches!(
            eval_basis(&k, 0, 5, 0.5),
            Err(BasisError::InvalidOrder(5))
        ));
        assert!(design_matrix(&k, &[0.1, -0.1]).is_err());
    }

    /// Cardinal cubic B-spline on knots 0, h, 2h, 3h, 4h in piecewise form.
    fn cardinal_cubic(x: f64, h: f64) -> f64 {
        let u = x / h;
        match u {
            u if (0.0..1.0).contains(&u) => u.powi(3) / 6.0,
            u if (1.0..2.0).contains(&u) => {
                (-3.0 * u.powi(3) + 12.0 * u.powi(2) - 12.0 * u + 4.0) / 6.0
            }
            u if (2.0..3.0).contains(&u) => {
                (3.0 * u.powi(3) - 24.0 * u.powi(2) + 60.0 * u - 44.0) / 6.0
            }
            u if (3.0..4.0).contains(&u) => (4.0 - u).powi(3) / 6.0,
            _ => 0.0,
        }
    }

    #[test]
    fn interior_cardinal_spline_matches_piecewise_form() {
        // K = 9 on [0, 1]: h = 0.1, j = 3 is supported on [0.3, 0.7]
        let k = make_uniform_knots(0.0, 1.0, 9).unwrap();
        let h = 0.1;
        let centre = eval_basis(&k, 3, 4, 0.5).unwrap();
        assert_abs_diff_eq!(centre, 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cardinal_cubic(2.0 * h, h), 2.0 / 3.0, epsilon = 1e-14);
        for step in 0..=400 {
            let x = 0.3 + 0.4 * step as f64 / 400.0;
            let got = eval_basis(&k, 3, 4, x).unwrap();
            assert_abs_diff_eq!(got, cardinal_cubic(x - 0.3, h), epsilon = 1e-12);
        }
    }

    #[test]
    fn design_matrix_shape_and_rows() {
        let k = knots4();
        let xs = uniform_abscissae(0.0, 1.0, 6).unwrap();
        let b = design_matrix(&k, &xs).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (6, 8));
        for row in b.matrix().row_iter() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-14);
        }

        let xs = uniform_abscissae(0.0, 1.0, 10).unwrap();
        let b = design_matrix(&k, &xs).unwrap();
        for row in b.matrix().row_iter() {
            assert!(row.iter().filter(|v| **v != 0.0).count() <= 4);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn design_matrix_at_breakpoints() {
        let k = knots4();
        let b = design_matrix(&k, &k.breakpoints()).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (6, 8));
        let m = b.matrix();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m.row(0).sum(), 1.0);
        assert_eq!(m[(5, 7)], 1.0);
        assert_eq!(m.row(5).sum(), 1.0);
    }

    #[test]
    fn design_matrix_agrees_with_recursion() {
        let k = KnotVector::new(-1.0, 2.0, vec![-0.7, 0.1, 0.15, 1.2, 1.9]).unwrap();
        let xs: Vec<f64> = (0..=60).map(|i| -1.0 + 3.0 * i as f64 / 60.0).collect();
        let b = design_matrix(&k, &xs).unwrap();
        for (r, &x) in xs.iter().enumerate() {
            for j in k.basis_range(4) {
                let v = eval_basis(&k, j, 4, x).unwrap();
                assert_abs_diff_eq!(b.matrix()[(r, basis_column(j))], v, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn delta2_annihilates_constants_and_identity() {
        let k = KnotVector::new(0.0, 2.0, vec![0.3, 0.5, 1.4, 1.7]).unwrap();
        let d2 = delta2_matrix(&k);
        assert_eq!((d2.nrows(), d2.ncols()), (6, 8));
        let ones = DVector::from_element(8, 1.0);
        assert!((&d2 * ones).amax() < 1e-12);
        let g = DVector::from_vec(k.greville());
        assert!((&d2 * &g).amax() < 1e-12);

        // the Greville coefficients reproduce s(x) = x
        let s = SplineFunction::new(k.clone(), g).unwrap();
        for x in [0.0, 0.2, 0.9, 1.55, 2.0] {
            assert_abs_diff_eq!(s.eval(x, 0).unwrap(), x, epsilon = 1e-13);
            assert_abs_diff_eq!(s.eval(x, 1).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gram_closed_form_uniform() {
        let k = knots4();
        let h = 0.2;
        let r = gram_matrix_order2(&k);
        assert_eq!(r.nrows(), 6);
        assert_abs_diff_eq!(r[(0, 0)], h / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(5, 5)], h / 3.0, epsilon = 1e-15);
        for i in 1..5 {
            assert_abs_diff_eq!(r[(i, i)], 2.0 * h / 3.0, epsilon = 1e-15);
        }
        for i in 0..5 {
            assert_abs_diff_eq!(r[(i, i + 1)], h / 6.0, epsilon = 1e-15);
            assert_eq!(r[(i, i + 1)], r[(i + 1, i)]);
        }
        for i in 0..6usize {
            for j in 0..6usize {
                if i.abs_diff(j) >= 2 {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn penalty_basic_examples() {
        let k = knots4();
        let p = penalty_operator(&k).unwrap();
        assert_eq!((p.l().nrows(), p.l().ncols()), (6, 8));
        assert!(p.energy(&DVector::from_element(8, 1.0)) < 1e-24);
        let mut delta = DVector::zeros(8);
        delta[basis_column(3)] = 1.0;
        assert!(p.energy(&delta) > 0.0);
    }

    #[test]
    fn spline_derivative_orders() {
        let k = knots4();
        let s = SplineFunction::new(k, DVector::from_element(8, 1.0)).unwrap();
        for x in [0.0, 0.33, 0.8, 1.0] {
            assert_abs_diff_eq!(s.eval(x, 0).unwrap(), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.eval(x, 1).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.eval(x, 2).unwrap(), 0.0, epsilon = 1e-12);
        }
        assert!(matches!(
            s.eval(0.5, 3),
            Err(BasisError::InvalidDerivative(3))
        ));
        assert!(SplineFunction::new(knots4(), DVector::zeros(7)).is_err());
    }

    #[test]
    fn second_derivative_matches_delta2_expansion() {
        let k = knots4();
        let beta = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5, -0.25, 1.5, 0.0, 0.7]);
        let d2 = delta2_matrix(&k) * &beta;
        let s = SplineFunction::new(k.clone(), beta).unwrap();
        for x in [0.05, 0.31, 0.5, 0.77, 0.99] {
            let expanded: f64 = k
                .basis_range(2)
                .filter(|j| *j >= -1 && *j <= 4)
                .map(|j| d2[(j + 1) as usize] * eval_basis(&k, j, 2, x).unwrap())
                .sum();
            assert_abs_diff_eq!(s.eval(x, 2).unwrap(), expanded, epsilon = 1e-11);
        }
    }

    #[test]
    fn uniform_abscissae_endpoints() {
        let xs = uniform_abscissae(0.0, 1.0, 10).unwrap();
        assert_eq!(xs[0], 0.0);
        assert_eq!(xs[9], 1.0);
        assert!(uniform_abscissae(0.0, 1.0, 1).is_err());
        assert!(Dataset::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert_eq!(Dataset::uniform(0.0, 1.0, vec![1.0; 5]).unwrap().len(), 5);
    }
}
