use std::fmt;

use nalgebra::DMatrix;

use crate::error::{check_dim, LabError, Result};
use crate::quadratic::{symmetrize, QuadraticForm};
use crate::spaces::{holder_conjugate, NormedSpace, Vector};

/// A scalar function on `R^n` with a gradient and optionally a Hessian.
///
/// Only `dim` and `value` are required. The default gradient is a central
/// finite difference; the default Hessian is absent, and callers fall back to
/// [`fd_hessian`]. Values may be `+∞` outside an effective domain.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    fn gradient(&self, x: &Vector) -> Vector {
        fd_gradient(self, x)
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    fn hessian(&self, _x: &Vector) -> Option<DMatrix<f64>> {
        None
    }
}

impl<F: SmoothFunction + ?Sized> SmoothFunction for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (**self).gradient(x)
    }
    fn has_analytic_gradient(&self) -> bool {
        (**self).has_analytic_gradient()
    }
    fn hessian(&self, x: &Vector) -> Option<DMatrix<f64>> {
        (**self).hessian(x)
    }
}

impl<F: SmoothFunction + ?Sized> SmoothFunction for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (**self).gradient(x)
    }
    fn has_analytic_gradient(&self) -> bool {
        (**self).has_analytic_gradient()
    }
    fn hessian(&self, x: &Vector) -> Option<DMatrix<f64>> {
        (**self).hessian(x)
    }
}

/// Central-difference step `cbrt(ε)·(1 + ‖x‖∞)`.
pub fn fd_step(x: &Vector) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.amax())
}

/// Central finite-difference gradient of `f.value`.
pub fn fd_gradient<F: SmoothFunction + ?Sized>(f: &F, x: &Vector) -> Vector {
    let h = fd_step(x);
    let mut probe = x.clone();
    Vector::from_fn(x.len(), |i, _| {
        let xi = x[i];
        probe[i] = xi + h;
        let up = f.value(&probe);
        probe[i] = xi - h;
        let down = f.value(&probe);
        probe[i] = xi;
        (up - down) / (2.0 * h)
    })
}

/// Finite-difference Hessian, not symmetrized.
///
/// Differentiates the analytic gradient when there is one, otherwise takes
/// second differences of values with step `ε^{1/4}·(1 + ‖x‖∞)`.
pub fn fd_hessian<F: SmoothFunction + ?Sized>(f: &F, x: &Vector) -> DMatrix<f64> {
    let n = x.len();
    let mut probe = x.clone();
    if f.has_analytic_gradient() {
        let h = fd_step(x);
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            probe[j] = x[j] + h;
            let up = f.gradient(&probe);
            probe[j] = x[j] - h;
            let down = f.gradient(&probe);
            probe[j] = x[j];
            m.set_column(j, &((up - down) / (2.0 * h)));
        }
        return m;
    }
    let h = f64::EPSILON.powf(0.25) * (1.0 + x.amax());
    let mut at = |i: usize, si: f64, j: usize, sj: f64| {
        probe[i] += si * h;
        probe[j] += sj * h;
        let v = f.value(&probe);
        probe[i] = x[i];
        probe[j] = x[j];
        v
    };
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Symmetrized second derivative at `x`: the analytic Hessian if available,
/// else [`fd_hessian`].
pub fn hessian_form<F: SmoothFunction + ?Sized>(f: &F, x: &Vector) -> Result<QuadraticForm> {
    check_dim(f.dim(), x.len())?;
    let raw = f.hessian(x).unwrap_or_else(|| fd_hessian(f, x));
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(LabError::DifferentiabilityFailure(format!(
            "non-finite second derivative at {:?}",
            x.as_slice()
        )));
    }
    symmetrize(&raw)
}

/// Functions addressable by name.
///
/// | name | function |
/// |------|----------|
/// | `quadratic:<matrix-json>` | `½ xᵀQx` (Q symmetrized) |
/// | `pnorm-squared:<p>` | `½ ‖x‖_p²`, `1 < p < ∞` |
/// | `logsumexp` | `log Σ exp(x_i)` |
/// | `expsum` | `Σ exp(x_i)` |
/// | `softplus` | `Σ log(1 + exp(x_i))` |
/// | `logsumexp-conjugate` | `Σ s_i log s_i` on the simplex |
/// | `expsum-conjugate` | `Σ (s_i log s_i − s_i)` on `s ≥ 0` |
/// | `softplus-conjugate` | `Σ s_i log s_i + (1 − s_i) log(1 − s_i)` on `[0, 1]^n` |
#[derive(Debug, Clone, PartialEq)]
pub enum CatalogFunction {
    Quadratic(QuadraticForm),
    Affine { slope: Vector, offset: f64 },
    PNormSquared { dim: usize, p: f64 },
    LogSumExp { dim: usize },
    ExpSum { dim: usize },
    Softplus { dim: usize },
    LogSumExpConjugate { dim: usize },
    ExpSumConjugate { dim: usize },
    SoftplusConjugate { dim: usize },
}

/// `x log x` with `0 log 0 = 0`.
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softmax(x: &Vector) -> Vector {
    let m = x.max();
    let e = x.map(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

const SIMPLEX_TOLERANCE: f64 = 1e-12;

impl CatalogFunction {
    /// Parses a catalog name for functions on `R^dim`.
    pub fn parse(name: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::InvalidArgument("dimension must be at least 1".into()));
        }
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (name.trim(), None),
        };
        let no_arg = |f: CatalogFunction| match arg {
            None => Ok(f),
            Some(_) => Err(LabError::UnknownCatalogEntry(format!("{head} takes no argument"))),
        };
        match head {
            "quadratic" => {
                let json = arg.ok_or_else(|| LabError::UnknownCatalogEntry("quadratic needs a matrix".into()))?;
                let rows: Vec<Vec<f64>> = serde_json::from_str(json)
                    .map_err(|e| LabError::InvalidArgument(format!("quadratic matrix: {e}")))?;
                let m = crate::serde_util::rows_to_matrix(&rows).map_err(LabError::InvalidArgument)?;
                let q = symmetrize(&m)?;
                check_dim(dim, q.dim())?;
                Ok(Self::Quadratic(q))
            }
            "pnorm-squared" => {
                let p: f64 = arg
                    .ok_or_else(|| LabError::UnknownCatalogEntry("pnorm-squared needs an exponent".into()))?
                    .parse()
                    .map_err(|e| LabError::InvalidArgument(format!("pnorm-squared exponent: {e}")))?;
                Self::pnorm_squared(dim, p)
            }
            "logsumexp" => no_arg(Self::LogSumExp { dim }),
            "expsum" => no_arg(Self::ExpSum { dim }),
            "softplus" => no_arg(Self::Softplus { dim }),
            "logsumexp-conjugate" => no_arg(Self::LogSumExpConjugate { dim }),
            "expsum-conjugate" => no_arg(Self::ExpSumConjugate { dim }),
            "softplus-conjugate" => no_arg(Self::SoftplusConjugate { dim }),
            other => Err(LabError::UnknownCatalogEntry(other.to_string())),
        }
    }

    pub fn pnorm_squared(dim: usize, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(LabError::InvalidArgument(format!(
                "pnorm-squared needs 1 < p < inf for a gradient, got {p}"
            )));
        }
        Ok(Self::PNormSquared { dim, p })
    }

    pub fn quadratic(q: QuadraticForm) -> Self {
        Self::Quadratic(q)
    }

    pub fn affine(slope: Vector, offset: f64) -> Self {
        Self::Affine { slope, offset }
    }

    /// Canonical name; `parse(name(), dim())` reproduces the function.
    /// Affine functions have no catalog name.
    pub fn name(&self) -> Option<String> {
        Some(match self {
            Self::Quadratic(q) => {
                let rows = crate::serde_util::matrix_to_rows(q.matrix());
                format!("quadratic:{}", serde_json::to_string(&rows).expect("finite matrix"))
            }
            Self::Affine { .. } => return None,
            Self::PNormSquared { p, .. } => format!("pnorm-squared:{p}"),
            Self::LogSumExp { .. } => "logsumexp".into(),
            Self::ExpSum { .. } => "expsum".into(),
            Self::Softplus { .. } => "softplus".into(),
            Self::LogSumExpConjugate { .. } => "logsumexp-conjugate".into(),
            Self::ExpSumConjugate { .. } => "expsum-conjugate".into(),
            Self::SoftplusConjugate { .. } => "softplus-conjugate".into(),
        })
    }

    /// Closed-form convex conjugate, when the catalog knows it.
    /// Quadratics need a positive-definite matrix.
    pub fn conjugate(&self) -> Option<Self> {
        Some(match self {
            Self::Quadratic(q) => Self::Quadratic(q.inverse().ok().filter(|_| q.is_positive_definite())?),
            Self::Affine { .. } => return None,
            &Self::PNormSquared { dim, p } => Self::PNormSquared { dim, p: holder_conjugate(p) },
            &Self::LogSumExp { dim } => Self::LogSumExpConjugate { dim },
            &Self::ExpSum { dim } => Self::ExpSumConjugate { dim },
            &Self::Softplus { dim } => Self::SoftplusConjugate { dim },
            &Self::LogSumExpConjugate { dim } => Self::LogSumExp { dim },
            &Self::ExpSumConjugate { dim } => Self::ExpSum { dim },
            &Self::SoftplusConjugate { dim } => Self::Softplus { dim },
        })
    }
}

impl SmoothFunction for CatalogFunction {
    fn dim(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.dim(),
            Self::Affine { slope, .. } => slope.len(),
            Self::PNormSquared { dim, .. }
            | Self::LogSumExp { dim }
            | Self::ExpSum { dim }
            | Self::Softplus { dim }
            | Self::LogSumExpConjugate { dim }
            | Self::ExpSumConjugate { dim }
            | Self::SoftplusConjugate { dim } => *dim,
        }
    }

    fn value(&self, x: &Vector) -> f64 {
        match self {
            Self::Quadratic(q) => 0.5 * q.quad(x.as_slice()),
            Self::Affine { slope, offset } => slope.dot(x) + offset,
            Self::PNormSquared { p, .. } => {
                let n = NormedSpace::lp(x.len(), *p).expect("validated exponent").norm_of(x.as_slice());
                0.5 * n * n
            }
            Self::LogSumExp { .. } => {
                let m = x.max();
                m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            }
            Self::ExpSum { .. } => x.iter().map(|v| v.exp()).sum(),
            Self::Softplus { .. } => x.iter().map(|&v| softplus(v)).sum(),
            Self::LogSumExpConjugate { .. } => {
                if x.iter().any(|&s| s < 0.0) || (x.sum() - 1.0).abs() > SIMPLEX_TOLERANCE {
                    f64::INFINITY
                } else {
                    x.iter().map(|&s| xlogx(s)).sum()
                }
            }
            Self::ExpSumConjugate { .. } => {
                if x.iter().any(|&s| s < 0.0) {
                    f64::INFINITY
                } else {
                    x.iter().map(|&s| xlogx(s) - s).sum()
                }
            }
            Self::SoftplusConjugate { .. } => {
                if x.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
                    f64::INFINITY
                } else {
                    x.iter().map(|&s| xlogx(s) + xlogx(1.0 - s)).sum()
                }
            }
        }
    }

    fn gradient(&self, x: &Vector) -> Vector {
        match self {
            Self::Quadratic(q) => q.matrix() * x,
            Self::Affine { slope, .. } => slope.clone(),
            Self::PNormSquared { p, .. } => {
                let n = NormedSpace::lp(x.len(), *p).expect("validated exponent").norm_of(x.as_slice());
                if n == 0.0 {
                    return Vector::zeros(x.len());
                }
                x.map(|v| n * v.signum() * (v.abs() / n).powf(p - 1.0))
            }
            Self::LogSumExp { .. } => softmax(x),
            Self::ExpSum { .. } => x.map(f64::exp),
            Self::Softplus { .. } => x.map(logistic),
            Self::LogSumExpConjugate { .. } => x.map(|s| s.ln() + 1.0),
            Self::ExpSumConjugate { .. } => x.map(f64::ln),
            Self::SoftplusConjugate { .. } => x.map(|s| (s / (1.0 - s)).ln()),
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn hessian(&self, x: &Vector) -> Option<DMatrix<f64>> {
        let n = x.len();
        Some(match self {
            Self::Quadratic(q) => q.matrix().clone(),
            Self::Affine { .. } => DMatrix::zeros(n, n),
            Self::PNormSquared { p, .. } if *p == 2.0 => DMatrix::identity(n, n),
            Self::PNormSquared { .. } => return None,
            Self::LogSumExp { .. } => {
                let s = softmax(x);
                DMatrix::from_diagonal(&s) - &s * s.transpose()
            }
            Self::ExpSum { .. } => DMatrix::from_diagonal(&x.map(f64::exp)),
            Self::Softplus { .. } => DMatrix::from_diagonal(&x.map(|v| {
                let s = logistic(v);
                s * (1.0 - s)
            })),
            // the simplex constraint makes this one singular; values off the simplex are +∞
            Self::LogSumExpConjugate { .. } => return None,
            Self::ExpSumConjugate { .. } => DMatrix::from_diagonal(&x.map(|s| 1.0 / s)),
            Self::SoftplusConjugate { .. } => DMatrix::from_diagonal(&x.map(|s| 1.0 / (s * (1.0 - s)))),
        })
    }
}

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type HessianFn = dyn Fn(&Vector) -> DMatrix<f64> + Send + Sync;

/// A [`SmoothFunction`] assembled from closures.
pub struct FnFunction {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Option<Box<GradientFn>>,
    hessian: Option<Box<HessianFn>>,
}

impl FnFunction {
    pub fn new(dim: usize, value: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        Self { dim, value: Box::new(value), gradient: None, hessian: None }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    pub fn with_hessian(mut self, hessian: impl Fn(&Vector) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(hessian));
        self
    }
}

impl fmt::Debug for FnFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFunction")
            .field("dim", &self.dim)
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .finish()
    }
}

impl SmoothFunction for FnFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(self, x),
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    fn hessian(&self, x: &Vector) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }
}
