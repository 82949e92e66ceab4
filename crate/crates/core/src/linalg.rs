//! Dense kernels behind the estimator: SVD pseudoinverse, null-space
//! projectors, PSD square roots and the two limit operators of the
//! penalized least-squares hat matrix.
//!
//! Every pseudoinverse goes through [`pinv`]; there are no QR shortcuts.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("singular value decomposition did not converge")]
    DecompositionFailed,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("relative rank tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
}

/// Singular values at or below `rel_tol * sigma_max * max(rows, cols)` are
/// treated as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTolerance {
    rel_tol: f64,
}

impl RankTolerance {
    pub const DEFAULT_REL_TOL: f64 = 1e-12;

    pub fn new(rel_tol: f64) -> Result<Self, LinalgError> {
        if rel_tol.is_finite() && rel_tol > 0.0 {
            Ok(Self { rel_tol })
        } else {
            Err(LinalgError::InvalidTolerance(rel_tol))
        }
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn cutoff(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        self.rel_tol * sigma_max * rows.max(cols) as f64
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self {
            rel_tol: Self::DEFAULT_REL_TOL,
        }
    }
}

fn check_finite(a: &DMatrix<f64>) -> Result<(), LinalgError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Thin singular value decomposition `A = U diag(sigma) V^T` with
/// `k = min(rows, cols)` triplets (unsorted).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of a working copy are orthogonalized by plane rotations that are
/// accumulated into `V`; the column norms are the singular values. Wide
/// matrices are handled through their transpose.
pub fn svd(a: &DMatrix<f64>) -> Result<Svd, LinalgError> {
    check_finite(a)?;
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    // columns below this squared norm are rounding debris of a null direction
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    let orthogonality = f64::EPSILON * a.nrows() as f64;
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= orthogonality * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LinalgError::DecompositionFailed);
    }

    let mut singular_values = Vec::with_capacity(n);
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        singular_values.push(norm);
    }
    Ok(Svd {
        u: w,
        singular_values,
        v,
    })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let x = m[(r, p)];
        let y = m[(r, q)];
        m[(r, p)] = c * x - s * y;
        m[(r, q)] = s * x + c * y;
    }
}

/// SVD plus the rank cutoff for `tol`.
fn truncated_svd(a: &DMatrix<f64>, tol: RankTolerance) -> Result<(Svd, f64), LinalgError> {
    let svd = svd(a)?;
    let cut = tol.cutoff(svd.sigma_max(), a.nrows(), a.ncols());
    Ok((svd, cut))
}

fn above(s: f64, cut: f64) -> bool {
    s > cut && s > 0.0
}

/// Moore-Penrose pseudoinverse `A^+` by SVD truncation.
pub fn pinv(a: &DMatrix<f64>, tol: RankTolerance) -> Result<DMatrix<f64>, LinalgError> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let (svd, cut) = truncated_svd(a, tol)?;
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if above(s, cut) {
            out += (svd.v.column(k) * svd.u.column(k).transpose()) / s;
        }
    }
    Ok(out)
}

/// Numerical rank under `tol`.
pub fn rank(a: &DMatrix<f64>, tol: RankTolerance) -> Result<usize, LinalgError> {
    if a.is_empty() {
        return Ok(0);
    }
    let (svd, cut) = truncated_svd(a, tol)?;
    Ok(svd
        .singular_values
        .iter()
        .filter(|&&s| above(s, cut))
        .count())
}

/// Orthogonal projector onto `N(A)`, `P_A = I - A^+ A`.
///
/// Assembled as `sum v_k v_k^T` over the right singular vectors whose
/// singular values fall under the rank cutoff. This equals `I - A^+ A`, is
/// symmetric by construction, and is exactly zero when `A` has full column
/// rank.
pub fn null_projector(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    null_projector_with(a, RankTolerance::default())
}

pub fn null_projector_with(
    a: &DMatrix<f64>,
    tol: RankTolerance,
) -> Result<DMatrix<f64>, LinalgError> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::identity(cols, cols));
    }
    // zero rows leave N(A) unchanged and make the thin V square
    let square = if rows < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.rows_mut(0, rows).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = svd(&square)?;
    let cut = tol.cutoff(svd.sigma_max(), rows, cols);
    let mut p = DMatrix::zeros(cols, cols);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if !above(s, cut) {
            let v = svd.v.column(k);
            p += v * v.transpose();
        }
    }
    Ok(p)
}

/// Symmetric PSD square root `Q` with `Q Q = S`.
///
/// Eigenvalues in `[-1e-10 ||S||, 0)` are rounding noise and clamped to zero.
pub fn sqrt_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "square root needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    check_finite(s)?;
    let scale = s.amax();
    let asymmetry = (s - s.transpose()).amax();
    if asymmetry > 1e-10 * scale.max(1.0) {
        return Err(LinalgError::NotSymmetric(asymmetry));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let norm = eig.eigenvalues.amax();
    let floor = -1e-10 * norm;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < floor) {
        return Err(LinalgError::NotPsd(bad));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok((&q + q.transpose()) * 0.5)
}

fn check_triplet(b: &DMatrix<f64>, m: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.ncols() != b.nrows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "M has {} columns but B has {} rows",
            m.ncols(),
            b.nrows()
        )));
    }
    if l.ncols() != b.ncols() {
        return Err(LinalgError::DimensionMismatch(format!(
            "L has {} columns but B has {} columns",
            l.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// ML-weighted pseudoinverse `B^+_{ML} = (I - (L P_{MB})^+ L)(MB)^+ M`.
///
/// `B^+_{ML} y` is the minimum-`||L beta||` element among the minimizers of
/// `||y - B beta||_M`; it is the `lambda -> 0+` limit of the hat matrix
/// whenever `N(MB) ∩ N(L) = {0}`.
pub fn weighted_pinv(
    b: &DMatrix<f64>,
    m: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    weighted_pinv_with(b, m, l, RankTolerance::default())
}

pub fn weighted_pinv_with(
    b: &DMatrix<f64>,
    m: &DMatrix<f64>,
    l: &DMatrix<f64>,
    tol: RankTolerance,
) -> Result<DMatrix<f64>, LinalgError> {
    check_triplet(b, m, l)?;
    let mb = m * b;
    let mb_pinv = pinv(&mb, tol)?;
    let projector = null_projector_with(&mb, tol)?;
    let correction = pinv(&(l * projector), tol)? * l;
    let d = b.ncols();
    Ok((DMatrix::identity(d, d) - correction) * mb_pinv * m)
}

/// `lambda -> +inf` limit of the hat matrix, `C_{MBL} = (M B P_L)^+ M`.
pub fn lambda_inf_limit(
    b: &DMatrix<f64>,
    m: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    check_triplet(b, m, l)?;
    let tol = RankTolerance::default();
    let projector = null_projector_with(l, tol)?;
    Ok(pinv(&(m * b * projector), tol)? * m)
}
