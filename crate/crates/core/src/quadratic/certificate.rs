use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certify::{fd_hessian, jacobian, MonotoneOperator, SmoothFunction};
use crate::error::{check_dim, LabError, Result};
use crate::rng::SeedStream;
use crate::serde_util;
use crate::spaces::{NormedSpace, Vector};

use super::{form_extremes, symmetrize, QuadraticForm};

/// Relative slack allowed by the sandwich `μ‖h‖² ≤ A[h,h] ≤ L‖h‖²`.
pub const SANDWICH_TOLERANCE: f64 = 1e-9;

/// Where a quadratic form is extracted from.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    /// Second derivative of a function, by differencing its gradient.
    Function(&'a dyn SmoothFunction),
    /// Derivative of an operator, symmetrized.
    Operator(&'a dyn MonotoneOperator),
}

impl Source<'_> {
    fn dim(&self) -> usize {
        match self {
            Source::Function(f) => f.dim(),
            Source::Operator(t) => t.dim(),
        }
    }

    fn kind(&self) -> SourceKind {
        match self {
            Source::Function(_) => SourceKind::Function,
            Source::Operator(_) => SourceKind::Operator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Function,
    Operator,
}

/// An inner product `⟨x, y⟩_A = A[x, y]` with constants
/// `μ‖h‖² ≤ A[h, h] ≤ L‖h‖²` relative to a norm.
///
/// `cholesky` is upper triangular with `RᵀR = A`; `h ↦ Rh` embeds the space
/// isometrically into Euclidean coordinates for the norm `‖h‖_A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerProductCertificate {
    pub form: QuadraticForm,
    pub mu: f64,
    pub l: f64,
    #[serde(with = "serde_util::matrix")]
    pub cholesky: DMatrix<f64>,
    #[serde(with = "serde_util::vector")]
    pub base_point: Vector,
    pub source: SourceKind,
    #[serde(with = "serde_util::vector")]
    pub argmin: Vector,
    #[serde(with = "serde_util::vector")]
    pub argmax: Vector,
    pub exact: bool,
}

impl InnerProductCertificate {
    /// `‖h‖_A = √A[h, h]`.
    pub fn norm(&self, h: &Vector) -> Result<f64> {
        Ok(self.form.value(h)?.sqrt())
    }

    /// Euclidean coordinates `Rh`.
    pub fn embed(&self, h: &Vector) -> Result<Vector> {
        check_dim(self.form.dim(), h.len())?;
        Ok(&self.cholesky * h)
    }
}

/// Extracts the symmetrized derivative at `point` as an inner product and
/// measures it against the norm of `space`.
///
/// Fails with `NotPositiveDefinite` (carrying a witness direction) when the
/// symmetrized derivative is not positive definite.
pub fn extract_inner_product(
    source: Source<'_>,
    space: &NormedSpace,
    point: &Vector,
    probe_budget: usize,
    seed: u64,
) -> Result<InnerProductCertificate> {
    check_dim(space.dim(), source.dim())?;
    check_dim(space.dim(), point.len())?;
    if probe_budget < 1 {
        return Err(LabError::InvalidArgument("probe budget must be at least 1".into()));
    }
    let raw = match source {
        Source::Function(f) => fd_hessian(f, point),
        Source::Operator(t) => jacobian(t, point)?,
    };
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(LabError::DifferentiabilityFailure(format!(
            "non-finite derivative at {:?}",
            point.as_slice()
        )));
    }
    let form = symmetrize(&raw)?;
    let cholesky = form.factorize()?;
    let e = form_extremes(&form, space, probe_budget, seed)?;
    if e.min <= 0.0 {
        return Err(LabError::NotPositiveDefinite { witness: e.argmin.as_slice().to_vec(), value: e.min });
    }
    Ok(InnerProductCertificate {
        form,
        mu: e.min,
        l: e.max,
        cholesky,
        base_point: point.clone(),
        source: source.kind(),
        argmin: e.argmin,
        argmax: e.argmax,
        exact: e.exact,
    })
}

/// Result of testing `μ‖h‖² ≤ A[h, h] ≤ L‖h‖²` on unit probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub probes: usize,
    /// Probes violating either side by more than `1e-9·max(1, L)`.
    pub violations: usize,
    /// Largest violation, `0` when both sides hold.
    pub worst: f64,
    #[serde(with = "serde_util::vector")]
    pub worst_probe: Vector,
}

/// Checks the certificate's sandwich on `probes` fresh seeded unit vectors of `space`.
pub fn check_sandwich(
    cert: &InnerProductCertificate,
    space: &NormedSpace,
    probes: usize,
    seed: u64,
) -> Result<SandwichCheck> {
    check_dim(space.dim(), cert.form.dim())?;
    let mut rng = SeedStream::new(seed).derive("quadratic/sandwich-probes").rng();
    let tol = SANDWICH_TOLERANCE * cert.l.max(1.0);
    let mut check =
        SandwichCheck { probes, violations: 0, worst: 0.0, worst_probe: Vector::zeros(space.dim()) };
    for h in space.sphere_samples_with(probes, &mut rng) {
        let n2 = space.norm_of(h.as_slice()).powi(2);
        let a = cert.form.quad(h.as_slice());
        let violation = (cert.mu * n2 - a).max(a - cert.l * n2);
        if violation > tol {
            check.violations += 1;
        }
        if violation > check.worst {
            check.worst = violation;
            check.worst_probe = h;
        }
    }
    Ok(check)
}

/// `(√μ, √L)`, the constants of `√μ‖x‖ ≤ ‖x‖_A ≤ √L‖x‖`, after re-validating the
/// sandwich on `probes` fresh directions.
pub fn equivalence_constants(
    cert: &InnerProductCertificate,
    space: &NormedSpace,
    probes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let check = check_sandwich(cert, space, probes, seed)?;
    if check.violations > 0 {
        return Err(LabError::CertificateStale {
            violation: check.worst,
            probe: check.worst_probe.as_slice().to_vec(),
        });
    }
    Ok((cert.mu.sqrt(), cert.l.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{CatalogFunction, LinearOperator};
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use rand::Rng;

    fn quadratic(m: DMatrix<f64>) -> CatalogFunction {
        CatalogFunction::Quadratic(QuadraticForm::new(m).unwrap())
    }

    #[test]
    fn extraction_examples() {
        let e2 = NormedSpace::euclidean(2).unwrap();
        let f = CatalogFunction::PNormSquared { dim: 2, p: 2.0 };
        let c = extract_inner_product(Source::Function(&f), &e2, &dvector![3.0, -7.0], 100, 1).unwrap();
        assert!((c.form.matrix() - DMatrix::identity(2, 2)).amax() < 1e-9);
        assert_abs_diff_eq!(c.mu, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.l, 1.0, epsilon = 1e-9);
        assert_eq!(c.source, SourceKind::Function);

        let t = LinearOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0])).unwrap();
        let c = extract_inner_product(Source::Operator(&t), &e2, &dvector![0.0, 0.0], 100, 1).unwrap();
        assert_eq!(c.form.matrix(), &DMatrix::identity(2, 2));
        assert_eq!((c.mu, c.l), (1.0, 1.0));
        assert_eq!(c.source, SourceKind::Operator);

        // on ℓ1, min of h1² + 4h2² over |h1| + |h2| = 1 is 4/5 at (4/5, 1/5)
        let l1 = NormedSpace::lp(2, 1.0).unwrap();
        let f = quadratic(DMatrix::from_diagonal(&dvector![1.0, 4.0]));
        let c = extract_inner_product(Source::Function(&f), &l1, &dvector![1.0, 1.0], 100, 1).unwrap();
        assert!((c.form.matrix() - DMatrix::from_diagonal(&dvector![1.0, 4.0])).amax() < 1e-5);
        let sweep_min = (0..=100_000)
            .map(|i| {
                let t = i as f64 / 100_000.0;
                t * t + 4.0 * (1.0 - t) * (1.0 - t)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((c.mu - sweep_min).abs() < 1e-8 && (c.mu - 0.8).abs() < 1e-8);
        assert_abs_diff_eq!(c.l, 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.argmin[0].abs(), 0.8, epsilon = 1e-6);
    }

    #[test]
    fn extraction_recovers_random_quadratics() {
        let mut rng = SeedStream::new(2).rng();
        for case in 0..20 {
            let n = rng.random_range(1..=5);
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &b.transpose() * &b + DMatrix::identity(n, n) * 0.5;
            let f = quadratic(q.clone());
            let point = Vector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let space = NormedSpace::lp(n, [1.0, 1.5, 2.0, f64::INFINITY][case % 4]).unwrap();
            let c = extract_inner_product(Source::Function(&f), &space, &point, 500, case as u64).unwrap();
            assert!((c.form.matrix() - &q).amax() <= 1e-5);
            let r = &c.cholesky;
            assert!((r.transpose() * r - c.form.matrix()).amax() <= 1e-10 * c.form.matrix().amax());
            let check = check_sandwich(&c, &space, 1000, 100 + case as u64).unwrap();
            assert_eq!(check.violations, 0, "{check:?}");
            assert!(c.mu > 0.0 && c.l >= c.mu);
        }
    }

    #[test]
    fn indefinite_derivatives_are_rejected_with_a_witness() {
        let e2 = NormedSpace::euclidean(2).unwrap();
        let f = quadratic(DMatrix::from_diagonal(&dvector![1.0, -2.0]));
        match extract_inner_product(Source::Function(&f), &e2, &dvector![0.0, 0.0], 10, 1) {
            Err(LabError::NotPositiveDefinite { witness, value }) => {
                let w = Vector::from_vec(witness);
                assert!(w[0] * w[0] - 2.0 * w[1] * w[1] <= 0.0);
                assert!(value <= 0.0);
            }
            other => panic!("{other:?}"),
        }
        let skew = LinearOperator::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        assert!(matches!(
            extract_inner_product(Source::Operator(&skew), &e2, &dvector![0.0, 0.0], 10, 1),
            Err(LabError::NotPositiveDefinite { .. })
        ));
    }

    fn certificate(m: DMatrix<f64>, space: &NormedSpace) -> InnerProductCertificate {
        let f = quadratic(m);
        let n = space.dim();
        extract_inner_product(Source::Function(&f), space, &Vector::zeros(n), 200, 1).unwrap()
    }

    #[test]
    fn equivalence_examples() {
        let e2 = NormedSpace::euclidean(2).unwrap();
        let (a, b) = equivalence_constants(&certificate(DMatrix::identity(2, 2), &e2), &e2, 1000, 3).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-9);
        let (a, b) =
            equivalence_constants(&certificate(DMatrix::from_diagonal(&dvector![1.0, 4.0]), &e2), &e2, 1000, 3).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-9);
        let l1 = NormedSpace::lp(2, 1.0).unwrap();
        let (a, b) = equivalence_constants(&certificate(DMatrix::identity(2, 2), &l1), &l1, 1000, 3).unwrap();
        assert_abs_diff_eq!(a, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn stale_certificates_are_reported() {
        let e2 = NormedSpace::euclidean(2).unwrap();
        let mut c = certificate(DMatrix::from_diagonal(&dvector![1.0, 4.0]), &e2);
        c.l = 3.0;
        assert!(matches!(equivalence_constants(&c, &e2, 1000, 4), Err(LabError::CertificateStale { .. })));
        let check = check_sandwich(&c, &e2, 1000, 4).unwrap();
        assert!(check.violations > 0 && check.worst > 0.0);
    }

    #[test]
    fn embedding_is_an_isometry_for_the_form_norm() {
        let e3 = NormedSpace::euclidean(3).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let c = certificate(m, &e3);
        let h = dvector![0.3, -1.2, 2.0];
        assert_abs_diff_eq!(c.embed(&h).unwrap().norm(), c.norm(&h).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn certificate_json_round_trip() {
        let e2 = NormedSpace::euclidean(2).unwrap();
        let c = certificate(DMatrix::from_diagonal(&dvector![1.0, 4.0]), &e2);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"cholesky\":[["));
        assert_eq!(serde_json::from_str::<InnerProductCertificate>(&json).unwrap(), c);
    }
}
