use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::serde_util;
use crate::spaces::Vector;

/// Symmetric bilinear form `A[x, y] = xᵀ M y` on `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormRepr", into = "FormRepr")]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct FormRepr(#[serde(with = "serde_util::matrix")] DMatrix<f64>);

impl TryFrom<FormRepr> for QuadraticForm {
    type Error = LabError;
    fn try_from(r: FormRepr) -> Result<Self> {
        QuadraticForm::new(r.0)
    }
}

impl From<QuadraticForm> for FormRepr {
    fn from(f: QuadraticForm) -> Self {
        FormRepr(f.matrix)
    }
}

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.is_square() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

impl QuadraticForm {
    /// Accepts matrices symmetric up to `1e-12` (relative to the largest entry) and
    /// stores the exactly symmetrized matrix.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_square(&matrix)?;
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidArgument("form has non-finite entries".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * matrix.amax().max(1.0) {
            return Err(LabError::InvalidArgument(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self { matrix: (&matrix + matrix.transpose()) * 0.5 })
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n) }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self { matrix: DMatrix::from_diagonal(&Vector::from_row_slice(d)) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// `A[x, y]`.
    pub fn apply(&self, x: &Vector, y: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        Ok(self.bilinear(x.as_slice(), y.as_slice()))
    }

    /// `A[x, x]`.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.apply(x, x)
    }

    pub(crate) fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let m = &self.matrix;
        let mut acc = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += x[i] * m[(i, j)];
            }
            acc += col * y[j];
        }
        acc
    }

    pub(crate) fn quad(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// Symmetric factorization `A = Rᵀ R` with `R` upper triangular.
    ///
    /// Fails when a pivot drops below `1e-12 · trace(A)`; the error carries a
    /// direction `v` with `A[v, v]` equal to the offending pivot.
    pub fn factorize(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let a = &self.matrix;
        let trace = a.trace();
        if !(trace > 0.0) {
            let (i, _) = (0..n)
                .map(|i| (i, a[(i, i)]))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty");
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            return Err(LabError::NotPositiveDefinite { witness: v, value: a[(i, i)] });
        }
        let threshold = 1e-12 * trace;
        let mut l = DMatrix::<f64>::identity(n, n);
        let mut d = vec![0.0; n];
        for k in 0..n {
            let mut dk = a[(k, k)];
            for j in 0..k {
                dk -= l[(k, j)] * l[(k, j)] * d[j];
            }
            if !(dk > threshold) {
                // v solves Lᵀ v = e_k on the leading block, so vᵀ A v = d_k
                let mut v = vec![0.0; n];
                v[k] = 1.0;
                for j in (0..k).rev() {
                    let mut s = 0.0;
                    for i in j + 1..=k {
                        s += l[(i, j)] * v[i];
                    }
                    v[j] = -s;
                }
                let value = self.quad(&v);
                return Err(LabError::NotPositiveDefinite { witness: v, value });
            }
            d[k] = dk;
            for i in k + 1..n {
                let mut s = a[(i, k)];
                for j in 0..k {
                    s -= l[(i, j)] * l[(k, j)] * d[j];
                }
                l[(i, k)] = s / dk;
            }
        }
        let mut r = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let s = d[i].sqrt();
            for j in i..n {
                r[(i, j)] = s * l[(j, i)];
            }
        }
        Ok(r)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.factorize().is_ok()
    }

    pub fn inverse(&self) -> Result<QuadraticForm> {
        let r = self.factorize().map_err(|_| LabError::Singular)?;
        let rinv = r.try_inverse().ok_or(LabError::Singular)?;
        let inv = &rinv * rinv.transpose();
        Ok(Self { matrix: (&inv + inv.transpose()) * 0.5 })
    }
}

/// Symmetric part `(B + Bᵀ) / 2` of a square matrix.
///
/// The quadratic values agree: `xᵀ B x = A[x, x]`.
pub fn symmetrize(b: &DMatrix<f64>) -> Result<QuadraticForm> {
    check_square(b)?;
    Ok(QuadraticForm { matrix: (b + b.transpose()) * 0.5 })
}

/// Conjugate of `x ↦ ½ A[x, x]`, which is `s ↦ ½ A⁻¹[s, s]`.
pub fn conjugate_quadratic(a: &QuadraticForm) -> Result<QuadraticForm> {
    a.inverse()
}

/// `max |(A B - I)_{ij}|`.
pub fn inverse_pair_residual(a: &QuadraticForm, b: &QuadraticForm) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let n = a.dim();
    Ok((a.matrix() * b.matrix() - DMatrix::<f64>::identity(n, n)).amax())
}
