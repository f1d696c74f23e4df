use std::fmt;

use nalgebra::DMatrix;

use crate::error::{check_dim, LabError, Result};
use crate::spaces::Vector;

use super::function::{fd_step, SmoothFunction};

/// A map `T: R^n → R^n` whose values are read as dual vectors.
pub trait MonotoneOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &Vector) -> Vector;

    /// The matrix of `T` when it is linear.
    fn linear_matrix(&self) -> Option<DMatrix<f64>> {
        None
    }
}

impl<T: MonotoneOperator + ?Sized> MonotoneOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &Vector) -> Vector {
        (**self).apply(x)
    }
    fn linear_matrix(&self) -> Option<DMatrix<f64>> {
        (**self).linear_matrix()
    }
}

impl<T: MonotoneOperator + ?Sized> MonotoneOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &Vector) -> Vector {
        (**self).apply(x)
    }
    fn linear_matrix(&self) -> Option<DMatrix<f64>> {
        (**self).linear_matrix()
    }
}

/// `x ↦ Mx` for a square matrix `M`, not necessarily symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    matrix: DMatrix<f64>,
}

impl LinearOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(LabError::InvalidArgument(format!(
                "operator matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidArgument("operator matrix has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: DMatrix::identity(n, n) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl MonotoneOperator for LinearOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }

    fn linear_matrix(&self) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
}

/// The gradient field `x ↦ f′(x)` of a function.
#[derive(Debug, Clone)]
pub struct GradientOperator<F>(pub F);

impl<F: SmoothFunction> MonotoneOperator for GradientOperator<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &Vector) -> Vector {
        self.0.gradient(x)
    }
}

type ApplyFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// A [`MonotoneOperator`] from a closure.
pub struct FnOperator {
    dim: usize,
    apply: Box<ApplyFn>,
}

impl FnOperator {
    pub fn new(dim: usize, apply: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self { dim, apply: Box::new(apply) }
    }
}

impl fmt::Debug for FnOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOperator").field("dim", &self.dim).finish()
    }
}

impl MonotoneOperator for FnOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &Vector) -> Vector {
        (self.apply)(x)
    }
}

/// Derivative of `T` at `x`: the matrix itself for linear operators,
/// otherwise a central finite-difference Jacobian.
pub fn jacobian<T: MonotoneOperator + ?Sized>(t: &T, x: &Vector) -> Result<DMatrix<f64>> {
    check_dim(t.dim(), x.len())?;
    if let Some(m) = t.linear_matrix() {
        return Ok(m);
    }
    let n = x.len();
    let h = fd_step(x);
    let mut probe = x.clone();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        probe[j] = x[j] + h;
        let up = t.apply(&probe);
        probe[j] = x[j] - h;
        let down = t.apply(&probe);
        probe[j] = x[j];
        check_dim(n, up.len())?;
        m.set_column(j, &((up - down) / (2.0 * h)));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LabError::DifferentiabilityFailure(format!(
            "non-finite operator derivative at {:?}",
            x.as_slice()
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::CatalogFunction;
    use crate::rng::SeedStream;
    use nalgebra::dvector;
    use rand::Rng;

    #[test]
    fn linear_apply_matches_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let t = LinearOperator::new(m.clone()).unwrap();
        let mut rng = SeedStream::new(1).rng();
        for _ in 0..100 {
            let v = Vector::from_fn(2, |_, _| rng.random_range(-10.0..10.0));
            assert!((t.apply(&v) - &m * &v).amax() <= 1e-12);
        }
        assert_eq!(jacobian(&t, &dvector![3.0, 4.0]).unwrap(), m);
        assert!(LinearOperator::new(DMatrix::zeros(2, 3)).is_err());
        assert!(LinearOperator::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn jacobian_of_gradient_field_is_the_hessian() {
        let f = CatalogFunction::parse("quadratic:[[2,1],[1,3]]", 2).unwrap();
        let t = GradientOperator(f);
        let j = jacobian(&t, &dvector![0.5, -1.5]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert!((j - expected).amax() < 1e-9);
    }

    #[test]
    fn closure_operator() {
        let t = FnOperator::new(2, |x| dvector![x[0] + x[1].powi(3), x[1]]);
        let j = jacobian(&t, &dvector![0.0, 1.0]).unwrap();
        assert!((j - DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0])).amax() < 1e-8);
        assert!(jacobian(&t, &dvector![0.0]).is_err());
    }
}
