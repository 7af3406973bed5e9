use nalgebra::{DMatrix, DVector, DVectorView};
use rand_distr::{Distribution, StandardNormal};

use super::RngStream;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SYMMETRY_TOL: f64 = 1e-12;

/// Dense symmetric matrix. Used for precisions, covariances and prior
/// precisions; symmetry is checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs() / scale);
            }
        }
        if worst > SYMMETRY_TOL || !worst.is_finite() {
            return Err(Error::NotSymmetric(worst));
        }
        Ok(Self(m))
    }

    /// Builds from a matrix known to be symmetric up to rounding, averaging
    /// the two triangles.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("non-square matrix".into()));
        }
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        Self(DMatrix::identity(d, d) * s)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Row-major upper triangle including the diagonal.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn from_upper_triangle(d: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != d * (d + 1) / 2 {
            return Err(Error::DimensionMismatch(format!(
                "upper triangle of a {d}x{d} matrix needs {} entries, got {}",
                d * (d + 1) / 2,
                upper.len()
            )));
        }
        let mut m = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        Ok(Self(m))
    }

    pub fn is_positive_definite(&self) -> bool {
        cholesky(self).is_ok()
    }
}

impl TryFrom<DMatrix<f64>> for SymMatrix {
    type Error = Error;
    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        SymMatrix::new(m)
    }
}

impl From<SymMatrix> for DMatrix<f64> {
    fn from(m: SymMatrix) -> Self {
        m.0
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = m`.
pub fn cholesky(m: &SymMatrix) -> Result<DMatrix<f64>> {
    cholesky_raw(m.as_matrix())
}

pub(crate) fn cholesky_raw(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub(crate) fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
pub(crate) fn solve_upper_t_in_place(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Inverse of an SPD matrix from its Cholesky factor.
pub(crate) fn inverse_from_cholesky(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for c in 0..n {
        e.fill(0.0);
        e[c] = 1.0;
        solve_lower_in_place(l, &mut e);
        solve_upper_t_in_place(l, &mut e);
        inv.set_column(c, &e);
    }
    // exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    inv
}

pub fn inverse_spd(m: &SymMatrix) -> Result<SymMatrix> {
    let l = cholesky(m)?;
    Ok(SymMatrix(inverse_from_cholesky(&l)))
}

/// `log |m|` for an SPD matrix.
pub fn log_det_spd(m: &SymMatrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Precision-parameterized Gaussian with a cached Cholesky factor, for
/// repeated density evaluations.
#[derive(Debug, Clone)]
pub struct GaussianPrecision {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianPrecision {
    pub fn new(mean: &DVector<f64>, precision: &SymMatrix) -> Result<Self> {
        if mean.len() != precision.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, precision is {}x{}",
                mean.len(),
                precision.dim(),
                precision.dim()
            )));
        }
        let chol = cholesky(precision)?;
        let half_log_det: f64 = chol.diagonal().iter().map(|x| x.ln()).sum();
        let log_norm = half_log_det - 0.5 * mean.len() as f64 * LN_2PI;
        Ok(Self {
            mean: mean.clone(),
            chol,
            log_norm,
        })
    }

    pub fn logpdf(&self, y: DVectorView<'_, f64>) -> f64 {
        // (y-mu)^T L L^T (y-mu) = |L^T (y-mu)|^2
        let d = self.mean.len();
        let mut quad = 0.0;
        for j in 0..d {
            let mut s = 0.0;
            for i in j..d {
                s += self.chol[(i, j)] * (y[i] - self.mean[i]);
            }
            quad += s * s;
        }
        self.log_norm - 0.5 * quad
    }
}

/// `log N_D(y | mu, omega⁻¹)` for a precision matrix `omega`.
pub fn mvn_logpdf(y: &DVector<f64>, mu: &DVector<f64>, omega: &SymMatrix) -> Result<f64> {
    if y.len() != mu.len() {
        return Err(Error::DimensionMismatch(format!(
            "y has length {}, mu has length {}",
            y.len(),
            mu.len()
        )));
    }
    let g = GaussianPrecision::new(mu, omega)?;
    Ok(g.logpdf(y.as_view()))
}

/// One draw from `N(mu, omega⁻¹)`.
pub fn mvn_sample(rng: &mut RngStream, mu: &DVector<f64>, omega: &SymMatrix) -> Result<DVector<f64>> {
    if mu.len() != omega.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, precision is {}x{}",
            mu.len(),
            omega.dim(),
            omega.dim()
        )));
    }
    let l = cholesky(omega)?;
    Ok(sample_with_precision_factor(rng, mu, &l))
}

/// Draw from `N(mu, (L Lᵀ)⁻¹)`: `mu + L⁻ᵀ z`.
pub(crate) fn sample_with_precision_factor(
    rng: &mut RngStream,
    mu: &DVector<f64>,
    l: &DMatrix<f64>,
) -> DVector<f64> {
    let mut z = DVector::from_fn(mu.len(), |_, _| StandardNormal.sample(rng));
    solve_upper_t_in_place(l, &mut z);
    z + mu
}

/// Draw from the Gaussian with precision `P` and mean `P⁻¹ b`.
pub(crate) fn sample_canonical(rng: &mut RngStream, precision: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let l = cholesky_raw(precision)?;
    let mut mean = b.clone();
    solve_lower_in_place(&l, &mut mean);
    solve_upper_t_in_place(&l, &mut mean);
    Ok(sample_with_precision_factor(rng, &mean, &l))
}
