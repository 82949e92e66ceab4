//! Penalized weighted least squares:
//! `beta_hat = argmin ||y - B beta||_M^2 + lambda ||L beta||^2`, its hat
//! matrix `H(lambda, M, L)` and the residual noise estimate
//! `e_hat(lambda) = y - B H y`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use thiserror::Error;

use crate::bspline::{self, BasisError, KnotVector, SplineFunction};
use crate::linalg::{self, LinalgError};

/// Ratio of smallest to largest eigenvalue of the (unit-diagonal scaled)
/// regularized normal matrix below which the system counts as singular.
pub const SINGULARITY_RATIO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("smoothing parameter must be positive and finite, got {0}")]
    InvalidLambda(f64),

    #[error("weights must be positive and finite")]
    InvalidWeights,

    #[error("regularized normal matrix is singular (eigenvalues {min:e} / {max:e})")]
    Singular { min: f64, max: f64 },

    #[error(transparent)]
    Basis(#[from] BasisError),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Diagonal weight matrix `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    diag: DVector<f64>,
}

impl WeightMatrix {
    pub fn new(diag: Vec<f64>) -> Result<Self, EstimatorError> {
        if diag.is_empty() || diag.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(EstimatorError::InvalidWeights);
        }
        Ok(Self {
            diag: DVector::from_vec(diag),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            diag: DVector::from_element(n, 1.0),
        }
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }

    /// `||r||_M^2 = r^T M^T M r`.
    pub fn norm_squared(&self, r: &DVector<f64>) -> f64 {
        r.iter()
            .zip(self.diag.iter())
            .map(|(r, w)| (w * r).powi(2))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HatMatrix {
    lambda: f64,
    matrix: DMatrix<f64>,
}

impl HatMatrix {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.matrix * y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residual: DVector<f64>,
}

/// Coordinates `beta = V gamma` in which one of the two normal-matrix terms
/// is diagonal. The normal matrix is `c_f * fixed + c_d * diag(diag)`, with
/// `(c_f, c_d) = (1, lambda)` in the frame of `L` and `(lambda, 1)` in the
/// frame of `MB`.
#[derive(Debug, Clone)]
struct Frame {
    rotation: DMatrix<f64>,
    fixed: DMatrix<f64>,
    diag: DVector<f64>,
    /// `V^T B^T M^T M`
    rhs: DMatrix<f64>,
    lambda_on_diag: bool,
}

impl Frame {
    fn normal(&self, lambda: f64) -> DMatrix<f64> {
        let (cf, cd) = if self.lambda_on_diag {
            (1.0, lambda)
        } else {
            (lambda, 1.0)
        };
        let mut normal = &self.fixed * cf;
        for (k, v) in self.diag.iter().enumerate() {
            normal[(k, k)] += cd * v;
        }
        normal
    }
}

/// SVD of `a` zero-padded to at least `a.ncols()` rows, so that `V` spans
/// the whole column space.
fn padded_svd(a: &DMatrix<f64>) -> Result<linalg::Svd, LinalgError> {
    let d = a.ncols();
    let mut square = DMatrix::zeros(a.nrows().max(d), d);
    square.rows_mut(0, a.nrows()).copy_from(a);
    linalg::svd(&square)
}

/// A frame's unit-diagonal normal matrix with its eigenvalue extremes.
struct Candidate<'a> {
    min: f64,
    max: f64,
    frame: &'a Frame,
    scaled: DMatrix<f64>,
    scale: DVector<f64>,
}

/// Cholesky factor of the equilibrated system `D A D`, `A` a frame's
/// normal matrix and `D = diag(A)^{-1/2}`.
struct Factor<'a> {
    frame: &'a Frame,
    chol: Cholesky<f64, Dyn>,
    scale: DVector<f64>,
}

/// A fixed `(B, M, L)` triple with the `lambda`-independent products cached.
#[derive(Debug, Clone)]
pub struct PenalizedLeastSquares {
    design: DMatrix<f64>,
    weights: WeightMatrix,
    penalty: DMatrix<f64>,
    /// `B^T M^T M B`
    data_gram: DMatrix<f64>,
    /// `L^T L`
    penalty_gram: DMatrix<f64>,
    frames: [Frame; 2],
}

impl PenalizedLeastSquares {
    pub fn new(
        design: &DMatrix<f64>,
        weights: &WeightMatrix,
        penalty: &DMatrix<f64>,
    ) -> Result<Self, EstimatorError> {
        if weights.len() != design.nrows() {
            return Err(EstimatorError::DimensionMismatch(format!(
                "{} weights for {} observations",
                weights.len(),
                design.nrows()
            )));
        }
        if penalty.ncols() != design.ncols() {
            return Err(EstimatorError::DimensionMismatch(format!(
                "penalty has {} columns, design has {}",
                penalty.ncols(),
                design.ncols()
            )));
        }
        let n = design.nrows();
        let d = design.ncols();
        let mut weighted_design = design.clone();
        for (mut row, w) in weighted_design.row_iter_mut().zip(weights.diag().iter()) {
            row *= *w;
        }
        let data_gram = weighted_design.transpose() * &weighted_design;
        let penalty_gram = penalty.transpose() * penalty;
        let weighted_rhs = |rotated_design: &DMatrix<f64>| {
            let mut rhs = rotated_design.transpose();
            for (mut col, w) in rhs.column_iter_mut().zip(weights.diag().iter()) {
                col *= *w;
            }
            rhs
        };

        let l_svd = padded_svd(penalty)?;
        let md_l = &weighted_design * &l_svd.v;
        let penalty_frame = Frame {
            fixed: md_l.transpose() * &md_l,
            diag: DVector::from_iterator(d, l_svd.singular_values.iter().map(|s| s * s)),
            rhs: weighted_rhs(&md_l),
            rotation: l_svd.v,
            lambda_on_diag: true,
        };

        // MB V = U S exactly up to the SVD's accuracy; building it from the
        // factors keeps null directions of MB at the size of their singular
        // values instead of at rounding level
        let b_svd = padded_svd(&weighted_design)?;
        let mut md_b = b_svd.u.rows(0, n).into_owned();
        for (mut col, s) in md_b.column_iter_mut().zip(b_svd.singular_values.iter()) {
            col *= *s;
        }
        let l_b = penalty * &b_svd.v;
        let data_frame = Frame {
            fixed: l_b.transpose() * &l_b,
            diag: DVector::from_iterator(d, b_svd.singular_values.iter().map(|s| s * s)),
            rhs: weighted_rhs(&md_b),
            rotation: b_svd.v,
            lambda_on_diag: false,
        };

        Ok(Self {
            design: design.clone(),
            weights: weights.clone(),
            penalty: penalty.clone(),
            data_gram,
            penalty_gram,
            frames: [penalty_frame, data_frame],
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn num_observations(&self) -> usize {
        self.design.nrows()
    }

    pub fn num_coefficients(&self) -> usize {
        self.design.ncols()
    }

    /// `B^T M^T M B + lambda L^T L`.
    pub fn normal_matrix(&self, lambda: f64) -> DMatrix<f64> {
        &self.data_gram + &self.penalty_gram * lambda
    }

    /// Factors the normal matrix in whichever singular frame (of `L` or of
    /// `MB`) gives the better conditioned system after scaling to unit
    /// diagonal. The `L` frame wins as `lambda` grows and the `MB` frame as
    /// it shrinks, so both limits are approached without cancellation.
    fn factor(&self, lambda: f64) -> Result<Factor<'_>, EstimatorError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(EstimatorError::InvalidLambda(lambda));
        }
        let mut best: Option<Candidate<'_>> = None;
        for frame in &self.frames {
            let normal = frame.normal(lambda);
            let diag = normal.diagonal();
            if diag.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                continue;
            }
            let scale = diag.map(|v| 1.0 / v.sqrt());
            let scaled = DMatrix::from_fn(normal.nrows(), normal.ncols(), |i, j| {
                normal[(i, j)] * scale[i] * scale[j]
            });
            let eig = SymmetricEigen::new(scaled.clone());
            let (min, max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
            if best.as_ref().is_none_or(|b| min / max > b.min / b.max) {
                best = Some(Candidate {
                    min,
                    max,
                    frame,
                    scaled,
                    scale,
                });
            }
        }
        let Some(Candidate {
            min,
            max,
            frame,
            scaled,
            scale,
        }) = best
        else {
            return Err(EstimatorError::Singular { min: 0.0, max: 0.0 });
        };
        if max.is_nan() || max <= 0.0 || min < SINGULARITY_RATIO * max {
            return Err(EstimatorError::Singular { min, max });
        }
        let chol = Cholesky::new(scaled).ok_or(EstimatorError::Singular { min, max })?;
        Ok(Factor { frame, chol, scale })
    }

    /// `V A^{-1} rhs` for `rhs` given in the factor's frame.
    fn solve(factor: &Factor<'_>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = rhs.clone();
        for (mut row, s) in x.row_iter_mut().zip(factor.scale.iter()) {
            row *= *s;
        }
        let mut x = factor.chol.solve(&x);
        for (mut row, s) in x.row_iter_mut().zip(factor.scale.iter()) {
            row *= *s;
        }
        &factor.frame.rotation * x
    }

    pub fn hat_matrix(&self, lambda: f64) -> Result<HatMatrix, EstimatorError> {
        let factor = self.factor(lambda)?;
        Ok(HatMatrix {
            lambda,
            matrix: Self::solve(&factor, &factor.frame.rhs),
        })
    }

    /// `I - B H(lambda)`: maps observations to residuals.
    pub fn residual_operator(&self, lambda: f64) -> Result<DMatrix<f64>, EstimatorError> {
        let hat = self.hat_matrix(lambda)?;
        let n = self.num_observations();
        Ok(DMatrix::identity(n, n) - &self.design * hat.matrix())
    }

    pub fn fit(&self, y: &DVector<f64>, lambda: f64) -> Result<FitResult, EstimatorError> {
        if y.len() != self.num_observations() {
            return Err(EstimatorError::DimensionMismatch(format!(
                "{} observations for a {}-row design",
                y.len(),
                self.num_observations()
            )));
        }
        let factor = self.factor(lambda)?;
        let rhs = &factor.frame.rhs * y;
        let beta_hat = Self::solve(
            &factor,
            &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()),
        )
        .column(0)
        .into_owned();
        let fitted = &self.design * &beta_hat;
        let residual = y - &fitted;
        Ok(FitResult {
            beta_hat,
            fitted,
            residual,
        })
    }

    /// `||y - B beta||_M^2 + lambda ||L beta||^2`.
    pub fn objective(&self, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
        let r = y - &self.design * beta;
        self.weights.norm_squared(&r) + lambda * (&self.penalty * beta).norm_squared()
    }
}

/// `H(lambda, M, L) = (B^T M^T M B + lambda L^T L)^{-1} B^T M^T M`.
pub fn hat_matrix(
    design: &DMatrix<f64>,
    weights: &WeightMatrix,
    penalty: &DMatrix<f64>,
    lambda: f64,
) -> Result<HatMatrix, EstimatorError> {
    PenalizedLeastSquares::new(design, weights, penalty)?.hat_matrix(lambda)
}

pub fn fit(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    weights: &WeightMatrix,
    penalty: &DMatrix<f64>,
    lambda: f64,
) -> Result<FitResult, EstimatorError> {
    PenalizedLeastSquares::new(design, weights, penalty)?.fit(y, lambda)
}

/// Smooths data observed at the breakpoints `kappa_0..kappa_{K+1}` with the
/// exact curvature penalty and returns `(s''(a), s''(b))` of the fit.
///
/// The minimizer is a natural cubic spline, so both values vanish.
pub fn natural_spline_check(
    knots: &KnotVector,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<(f64, f64), EstimatorError> {
    let xs = knots.breakpoints();
    if y.len() != xs.len() {
        return Err(EstimatorError::DimensionMismatch(format!(
            "{} observations for {} breakpoints",
            y.len(),
            xs.len()
        )));
    }
    let design = bspline::design_matrix(knots, &xs)?;
    let penalty = bspline::penalty_operator(knots)?;
    let weights = WeightMatrix::identity(xs.len());
    let result = fit(y, design.matrix(), &weights, penalty.l(), lambda)?;
    let spline = SplineFunction::new(knots.clone(), result.beta_hat)?;
    Ok((spline.eval(knots.a(), 2)?, spline.eval(knots.b(), 2)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::{design_matrix, make_uniform_knots, penalty_operator, uniform_abscissae};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spline_problem(n: usize) -> (KnotVector, DMatrix<f64>, DMatrix<f64>) {
        let knots = make_uniform_knots(0.0, 1.0, 4).unwrap();
        let xs = uniform_abscissae(0.0, 1.0, n).unwrap();
        let b = design_matrix(&knots, &xs).unwrap().into_inner();
        let l = penalty_operator(&knots).unwrap().l().clone();
        (knots, b, l)
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn tikhonov_form() {
        let (_, b, _) = spline_problem(10);
        let d = b.ncols();
        let i = DMatrix::identity(d, d);
        let h = hat_matrix(&b, &WeightMatrix::identity(10), &i, 0.7).unwrap();
        let direct = (b.transpose() * &b + &i * 0.7).try_inverse().unwrap() * b.transpose();
        assert!((h.matrix() - direct).amax() < 1e-12);
    }

    #[test]
    fn identity_design_is_scalar_shrinkage() {
        let i = DMatrix::<f64>::identity(5, 5);
        let h = hat_matrix(&i, &WeightMatrix::identity(5), &i, 3.0).unwrap();
        assert!((h.matrix() - &i * 0.25).amax() < 1e-15);
        assert_eq!(h.lambda(), 3.0);
    }

    #[test]
    fn objective_is_minimized() {
        let (_, b, l) = spline_problem(10);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = random_vector(&mut rng, 10);
        let pls = PenalizedLeastSquares::new(&b, &WeightMatrix::identity(10), &l).unwrap();
        let beta = pls.fit(&y, 1.0).unwrap().beta_hat;
        let best = pls.objective(&y, &beta, 1.0);
        for _ in 0..100 {
            let v = random_vector(&mut rng, 8);
            let probe = &beta + v * 1e-4;
            assert!(pls.objective(&y, &probe, 1.0) >= best);
        }
    }

    #[test]
    fn normal_equation_identity() {
        let (_, b, l) = spline_problem(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = WeightMatrix::new((0..10).map(|i| 0.5 + 0.1 * i as f64).collect()).unwrap();
        let m = w.to_matrix();
        for lambda in [0.01, 1.0, 9.0] {
            let y = random_vector(&mut rng, 10);
            let r = fit(&y, &b, &w, &l, lambda).unwrap();
            let lhs = b.transpose() * m.transpose() * &m * &r.residual;
            let rhs = l.transpose() * &l * &r.beta_hat * lambda;
            assert!((&lhs - &rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
            assert!((&r.fitted + &r.residual - &y).amax() < 1e-15);
        }
    }

    #[test]
    fn affine_spline_is_a_fixed_point() {
        let (knots, b, l) = spline_problem(10);
        let g = DVector::from_vec(knots.greville());
        let beta0 = g * 2.0 - DVector::from_element(8, 0.5);
        let y = &b * &beta0;
        for lambda in [0.1, 1.0, 10.0] {
            let r = fit(&y, &b, &WeightMatrix::identity(10), &l, lambda).unwrap();
            assert!(r.residual.amax() < 1e-9, "{}", r.residual.amax());
            assert!((&r.fitted - &y).amax() < 1e-9);
        }
    }

    #[test]
    fn column_space_data_interpolated_as_lambda_vanishes() {
        let (_, b, l) = spline_problem(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = &b * random_vector(&mut rng, 8);
        let r = fit(&y, &b, &WeightMatrix::identity(6), &l, 1e-10).unwrap();
        assert!(r.residual.amax() < 1e-7);
    }

    #[test]
    fn penalty_decreases_along_path() {
        let (_, b, l) = spline_problem(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pls = PenalizedLeastSquares::new(&b, &WeightMatrix::identity(10), &l).unwrap();
        for _ in 0..20 {
            let y = random_vector(&mut rng, 10);
            let lambdas = [0.01, 0.1, 1.0, 5.0, 10.0];
            let energies: Vec<f64> = lambdas
                .iter()
                .map(|&lam| (&l * pls.fit(&y, lam).unwrap().beta_hat).norm())
                .collect();
            for w in energies.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
        }
    }

    #[test]
    fn natural_spline_boundary() {
        let knots = make_uniform_knots(0.0, 1.0, 4).unwrap();
        let (lo, hi) = natural_spline_check(&knots, &DVector::from_element(6, 2.5), 1.0).unwrap();
        assert!(lo.abs() < 1e-10 && hi.abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for lambda in [1.0, 10.0] {
            let y = random_vector(&mut rng, 6);
            let (lo, hi) = natural_spline_check(&knots, &y, lambda).unwrap();
            assert!(lo.abs() < 1e-7 * y.amax(), "s''(a) = {lo}");
            assert!(hi.abs() < 1e-7 * y.amax(), "s''(b) = {hi}");
        }
    }

    #[test]
    fn errors() {
        let (_, b, l) = spline_problem(10);
        let w = WeightMatrix::identity(10);
        assert!(matches!(
            hat_matrix(&b, &w, &l, 0.0),
            Err(EstimatorError::InvalidLambda(_))
        ));
        assert!(matches!(
            hat_matrix(&b, &WeightMatrix::identity(9), &l, 1.0),
            Err(EstimatorError::DimensionMismatch(_))
        ));
        assert!(WeightMatrix::new(vec![1.0, 0.0]).is_err());
        assert!(WeightMatrix::new(vec![]).is_err());

        // N(B) ∩ N(L) != {0}: a zero column in B with no penalty on it
        let mut b0 = b.clone();
        b0.column_mut(0).fill(0.0);
        let l0 = DMatrix::zeros(1, 8);
        assert!(matches!(
            hat_matrix(&b0, &w, &l0, 1.0),
            Err(EstimatorError::Singular { .. })
        ));
    }
}
