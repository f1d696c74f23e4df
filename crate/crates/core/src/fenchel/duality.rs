use serde::{Deserialize, Serialize};

use crate::certify::{fd_hessian, Ball, SmoothFunction, Witness};
use crate::error::{check_dim, LabError, Result};
use crate::quadratic::symmetrize;
use crate::rng::SeedStream;
use crate::serde_util;
use crate::spaces::{NormedSpace, Vector};

/// Violations below this margin are reported by [`strong_convexity_from_conjugate`].
pub const MARGIN_TOLERANCE: f64 = 1e-7;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `f(x) + f*(x*) − ⟨x*, x⟩`. Nonnegative for any convex pair, zero exactly
/// when `x* = f′(x)`.
pub fn fenchel_young_gap<F, G>(f: &F, fstar: &G, x: &Vector, x_star: &Vector) -> Result<f64>
where
    F: SmoothFunction + ?Sized,
    G: SmoothFunction + ?Sized,
{
    check_dim(f.dim(), x.len())?;
    check_dim(fstar.dim(), x_star.len())?;
    Ok(f.value(x) + fstar.value(x_star) - x_star.dot(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    /// `f*(y*) − f*(x*) − ⟨(f*)′(x*), y* − x*⟩ − (L/2)‖y* − x*‖²`, nonpositive when
    /// `L` bounds the Lipschitz constant of `(f*)′` on the segment.
    pub residual: f64,
    #[serde(with = "serde_util::vector")]
    pub x_star: Vector,
    #[serde(with = "serde_util::vector")]
    pub y_star: Vector,
    pub l_used: f64,
}

/// Residual of the descent inequality for `f*` between two dual points, with the
/// distance measured by the norm of `dual_space`.
pub fn descent_residual<G: SmoothFunction + ?Sized>(
    fstar: &G,
    dual_space: &NormedSpace,
    x_star: &Vector,
    y_star: &Vector,
    l: f64,
) -> Result<DescentReport> {
    check_positive("L", l)?;
    check_dim(fstar.dim(), x_star.len())?;
    check_dim(fstar.dim(), y_star.len())?;
    check_dim(dual_space.dim(), x_star.len())?;
    let d = y_star - x_star;
    let dist = dual_space.norm_of(d.as_slice());
    let residual =
        fstar.value(y_star) - fstar.value(x_star) - fstar.gradient(x_star).dot(&d) - 0.5 * l * dist * dist;
    Ok(DescentReport { residual, x_star: x_star.clone(), y_star: y_star.clone(), l_used: l })
}

/// A subgradient of `(1/2L)‖·‖²` at `v`: a dual vector `y*` with
/// `‖y*‖_* = ‖v‖/L` and `⟨y*, v⟩ = ‖v‖²/L`.
///
/// The subdifferential is a single point except for `p ∈ {1, ∞}`. For `p = 1`
/// every nonzero coordinate gets the same weighted magnitude `‖v‖/L` and zero
/// coordinates get 0. For `p = ∞` all mass goes to the lowest-index coordinate
/// attaining the maximum.
pub fn dual_scaling_subgradient(space: &NormedSpace, v: &Vector, l: f64) -> Result<Vector> {
    check_positive("L", l)?;
    check_dim(space.dim(), v.len())?;
    let norm = space.norm_of(v.as_slice());
    if norm == 0.0 {
        return Ok(Vector::zeros(v.len()));
    }
    let Some((p, c)) = space.diagonal_scaling() else {
        let gram = space.gram_matrix().expect("quadratic norms have a Gram matrix");
        return Ok(gram * v / l);
    };
    let u: Vec<f64> = v.iter().zip(&c).map(|(x, c)| c * x).collect();
    let scale = norm / l;
    let y = if p == 1.0 {
        Vector::from_iterator(v.len(), u.iter().zip(&c).map(|(ui, ci)| if *ui == 0.0 { 0.0 } else { scale * ci * ui.signum() }))
    } else if p.is_infinite() {
        let k = (0..u.len()).find(|&i| u[i].abs() == norm).expect("the maximum is attained");
        let mut y = Vector::zeros(v.len());
        y[k] = scale * c[k] * u[k].signum();
        y
    } else {
        Vector::from_iterator(
            v.len(),
            u.iter().zip(&c).map(|(ui, ci)| scale * ci * ui.signum() * (ui.abs() / norm).powf(p - 1.0)),
        )
    };
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    /// The modulus being checked, `1/L` of the conjugate.
    pub mu: f64,
    pub samples: usize,
    /// Triples whose margin falls below `−1e−7`.
    pub violations: usize,
    pub worst_margin: f64,
    /// The triple attaining the worst margin.
    pub witness: Witness,
}

/// Samples triples `(x, y, λ)` in the ball and checks
/// `λf(x) + (1−λ)f(y) − f(λx + (1−λ)y) ≥ (μ/2)λ(1−λ)‖x − y‖²` with `μ = 1/L*`.
pub fn strong_convexity_from_conjugate<F: SmoothFunction + ?Sized>(
    f: &F,
    ball: &Ball,
    l_of_conjugate: f64,
    samples: usize,
    seed: u64,
) -> Result<ConvexityCheck> {
    check_positive("L of the conjugate", l_of_conjugate)?;
    check_dim(ball.dim(), f.dim())?;
    if samples == 0 {
        return Err(LabError::InvalidArgument("need at least one sample".into()));
    }
    let mu = 1.0 / l_of_conjugate;
    let mut rng = SeedStream::new(seed).derive("fenchel/strong-convexity").rng();
    let mut violations = 0;
    let mut worst: Option<(f64, Witness)> = None;
    for _ in 0..samples {
        let x = ball.sample(&mut rng);
        let y = ball.sample(&mut rng);
        let lambda = rand::Rng::random_range(&mut rng, 0.05..=0.95);
        let z = &x * lambda + &y * (1.0 - lambda);
        let dist = ball.space().norm_of((&x - &y).as_slice());
        let gap = lambda * f.value(&x) + (1.0 - lambda) * f.value(&y) - f.value(&z);
        let margin = gap - 0.5 * mu * lambda * (1.0 - lambda) * dist * dist;
        if margin.is_nan() {
            return Err(LabError::DifferentiabilityFailure(format!("non-finite secant margin at {x:?}, {y:?}")));
        }
        if margin < -MARGIN_TOLERANCE {
            violations += 1;
        }
        if worst.as_ref().is_none_or(|(w, _)| margin < *w) {
            worst = Some((margin, Witness::Triple { x, y, lambda }));
        }
    }
    let (worst_margin, witness) = worst.expect("at least one sample");
    Ok(ConvexityCheck { mu, samples, violations, worst_margin, witness })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRecipe {
    pub epsilon: f64,
    pub l: f64,
    /// Largest radius found with `‖f′(x) − f′(x̄)‖_* ≤ ε/2` on the sampled ball.
    pub delta: f64,
    /// `min(δ, εL/4)`.
    pub radius: f64,
}

const RECIPE_BISECTIONS: usize = 60;
const RECIPE_MAX_DOUBLINGS: usize = 20;

/// Concrete radius for the strong-convexity conclusion around `center`: `δ` is
/// found by bisection on the sampled gradient displacement, using the same unit
/// ball samples at every trial radius, and capped at `2^20·ε`.
pub fn radius_recipe<F: SmoothFunction + ?Sized>(
    f: &F,
    space: &NormedSpace,
    center: &Vector,
    epsilon: f64,
    l: f64,
    samples: usize,
    seed: u64,
) -> Result<RadiusRecipe> {
    check_positive("epsilon", epsilon)?;
    check_positive("L", l)?;
    check_dim(space.dim(), center.len())?;
    check_dim(f.dim(), center.len())?;
    let unit = Ball::unit(space.clone());
    let mut rng = SeedStream::new(seed).derive("fenchel/radius-recipe").rng();
    let offsets: Vec<Vector> = (0..samples.max(1)).map(|_| unit.sample(&mut rng)).collect();
    let g0 = f.gradient(center);
    let fits = |delta: f64| {
        offsets.iter().all(|u| {
            let g = f.gradient(&(center + u * delta));
            space.dual_norm_of((&g - &g0).as_slice()) <= epsilon / 2.0
        })
    };
    let (mut lo, mut hi) = (0.0, epsilon);
    let mut doublings = 0;
    while fits(hi) && doublings < RECIPE_MAX_DOUBLINGS {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
    }
    let delta = if fits(hi) {
        hi
    } else {
        for _ in 0..RECIPE_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(RadiusRecipe { epsilon, l, delta, radius: delta.min(epsilon * l / 4.0) })
}

/// `max |B·A − I|` where `A` is the finite-difference Hessian of `f` at `x` and
/// `B` that of `f*` at `f′(x)`. Small for a genuine conjugate pair.
pub fn conjugate_pair_residual<F, G>(f: &F, fstar: &G, x: &Vector) -> Result<f64>
where
    F: SmoothFunction + ?Sized,
    G: SmoothFunction + ?Sized,
{
    check_dim(f.dim(), x.len())?;
    check_dim(fstar.dim(), x.len())?;
    let a = symmetrize(&fd_hessian(f, x))?.into_matrix();
    let b = symmetrize(&fd_hessian(fstar, &f.gradient(x)))?.into_matrix();
    let r = b * a - nalgebra::DMatrix::identity(x.len(), x.len());
    if r.iter().any(|v| !v.is_finite()) {
        return Err(LabError::DifferentiabilityFailure("non-finite Hessian product".into()));
    }
    Ok(r.amax())
}

/// `‖(f*)′(f′(x)) − x‖_∞`.
pub fn gradient_duality_residual<F, G>(f: &F, fstar: &G, x: &Vector) -> Result<f64>
where
    F: SmoothFunction + ?Sized,
    G: SmoothFunction + ?Sized,
{
    check_dim(f.dim(), x.len())?;
    check_dim(fstar.dim(), x.len())?;
    Ok((fstar.gradient(&f.gradient(x)) - x).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify, lipschitz_constant, CatalogFunction, CertifyConfig};
    use crate::quadratic::QuadraticForm;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng;

    fn v(xs: &[f64]) -> Vector {
        DVector::from_column_slice(xs)
    }

    fn half_square(dim: usize) -> CatalogFunction {
        CatalogFunction::quadratic(QuadraticForm::identity(dim))
    }

    fn diag(d: &[f64]) -> CatalogFunction {
        CatalogFunction::quadratic(QuadraticForm::from_diagonal(d))
    }

    #[test]
    fn fenchel_young_examples() {
        let f = half_square(1);
        assert_eq!(fenchel_young_gap(&f, &f, &v(&[3.0]), &v(&[3.0])).unwrap(), 0.0);
        assert_eq!(fenchel_young_gap(&f, &f, &v(&[3.0]), &v(&[0.0])).unwrap(), 4.5);
        assert!(fenchel_young_gap(&f, &f, &v(&[3.0, 1.0]), &v(&[0.0])).is_err());
    }

    fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn fenchel_young_equality_for_quadratics() {
        let mut rng = SeedStream::new(4).rng();
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let q = QuadraticForm::new(random_spd(&mut rng, n)).unwrap();
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let f = CatalogFunction::quadratic(q.clone());
            let fstar = f.conjugate().unwrap();
            let gap = fenchel_young_gap(&f, &fstar, &x, &(q.matrix() * &x)).unwrap();
            assert!(gap.abs() <= 1e-9, "{gap}");
        }
    }

    #[test]
    fn fenchel_young_nonnegative_across_the_catalog() {
        let mut rng = SeedStream::new(5).rng();
        for name in ["logsumexp", "expsum", "softplus", "pnorm-squared:3"] {
            let f = CatalogFunction::parse(name, 3).unwrap();
            let Some(fstar) = f.conjugate() else { continue };
            for _ in 0..10_000 {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
                let z = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
                let gap = fenchel_young_gap(&f, &fstar, &x, &f.gradient(&z)).unwrap();
                assert!(gap >= -1e-9, "{name}: {gap}");
            }
        }
    }

    #[test]
    fn descent_examples() {
        let f = half_square(1);
        let line = NormedSpace::euclidean(1).unwrap();
        let r = descent_residual(&f, &line, &v(&[0.5]), &v(&[2.0]), 1.0).unwrap();
        assert_eq!(r.residual, 0.0);
        let r = descent_residual(&f, &line, &v(&[0.5]), &v(&[2.0]), 2.0).unwrap();
        // slack of (L/2 − 1/2)·d² with doubled L
        assert_eq!(r.residual, -0.5 * 1.5 * 1.5);
        assert!(descent_residual(&f, &line, &v(&[0.5]), &v(&[2.0]), 0.0).is_err());
    }

    #[test]
    fn softplus_descent_with_quarter_constant() {
        let f = CatalogFunction::parse("softplus", 1).unwrap();
        let line = NormedSpace::euclidean(1).unwrap();
        let mut rng = SeedStream::new(6).rng();
        // oracle: sup of σ(1−σ) on a dense grid is 1/4
        let sup = (0..=100_000)
            .map(|i| {
                let s = -5.0 + 1e-4 * i as f64;
                let sig = 1.0 / (1.0 + (-s).exp());
                sig * (1.0 - sig)
            })
            .fold(0.0, f64::max);
        assert!(sup <= 0.25);
        for _ in 0..1000 {
            let (a, b) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let r = descent_residual(&f, &line, &v(&[a]), &v(&[b]), sup).unwrap();
            assert!(r.residual <= 1e-12, "{a} {b}: {}", r.residual);
        }
    }

    #[test]
    fn subgradient_examples() {
        let e2 = NormedSpace::euclidean(2).unwrap();
        assert_eq!(dual_scaling_subgradient(&e2, &v(&[3.0, 4.0]), 2.0).unwrap(), v(&[1.5, 2.0]));
        let l1 = NormedSpace::lp(2, 1.0).unwrap();
        assert_eq!(dual_scaling_subgradient(&l1, &v(&[2.0, 0.0]), 1.0).unwrap(), v(&[2.0, 0.0]));
        let line = NormedSpace::lp(1, 3.0).unwrap();
        let y = dual_scaling_subgradient(&line, &v(&[-1.2]), 4.0).unwrap();
        assert!((y[0] + 0.3).abs() < 1e-15);
        let linf = NormedSpace::lp(3, f64::INFINITY).unwrap();
        assert_eq!(dual_scaling_subgradient(&linf, &v(&[1.0, -2.0, 2.0]), 1.0).unwrap(), v(&[0.0, -2.0, 0.0]));
        assert_eq!(dual_scaling_subgradient(&l1, &v(&[0.0, 0.0]), 1.0).unwrap(), v(&[0.0, 0.0]));
        assert!(dual_scaling_subgradient(&l1, &v(&[1.0, 0.0]), -1.0).is_err());
    }

    fn spaces() -> Vec<NormedSpace> {
        let mut out = vec![];
        for p in [1.0, 1.3, 2.0, 3.0, 7.5, f64::INFINITY] {
            out.push(NormedSpace::lp(3, p).unwrap());
            out.push(NormedSpace::weighted(p, vec![0.5, 2.0, 1.5]).unwrap());
        }
        out.push(NormedSpace::quadratic(DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.7])).unwrap());
        out
    }

    proptest! {
        #[test]
        fn subgradient_norm_and_pairing_identities(
            xs in prop::collection::vec(-5.0f64..5.0, 3),
            zero in prop::collection::vec(any::<bool>(), 3),
            l in 0.1f64..10.0,
        ) {
            let x = DVector::from_iterator(3, xs.iter().zip(&zero).map(|(x, z)| if *z { 0.0 } else { *x }));
            for space in spaces() {
                let y = dual_scaling_subgradient(&space, &x, l).unwrap();
                let n = space.norm(&x).unwrap();
                let tol = 1e-10 * (1.0 + n * n / l);
                prop_assert!((space.dual_norm(&y).unwrap() - n / l).abs() <= tol, "{:?}", space);
                prop_assert!((y.dot(&x) - n * n / l).abs() <= tol, "{:?}", space);
            }
        }
    }

    #[test]
    fn strong_convexity_examples() {
        let f = diag(&[1.0, 4.0]);
        let ball = Ball::unit(NormedSpace::euclidean(2).unwrap());
        let ok = strong_convexity_from_conjugate(&f, &ball, 1.0, 10_000, 1).unwrap();
        assert_eq!(ok.violations, 0);
        let bad = strong_convexity_from_conjugate(&f, &ball, 0.5, 10_000, 1).unwrap();
        assert!(bad.violations > 0);
        assert!(bad.worst_margin < -MARGIN_TOLERANCE);
        let Witness::Triple { x, y, .. } = &bad.witness else { panic!("{:?}", bad.witness) };
        let d = x - y;
        assert!(d[0].abs() > d[1].abs() * 2f64.sqrt());

        let sq = half_square(2);
        let eq = strong_convexity_from_conjugate(&sq, &ball, 1.0, 10_000, 2).unwrap();
        assert_eq!(eq.violations, 0);
        assert!(eq.worst_margin.abs() <= 1e-9);
    }

    #[test]
    fn strong_convexity_is_seeded() {
        let f = diag(&[1.0, 4.0]);
        let ball = Ball::unit(NormedSpace::lp(2, 3.0).unwrap());
        let a = strong_convexity_from_conjugate(&f, &ball, 0.7, 500, 9).unwrap();
        let b = strong_convexity_from_conjugate(&f, &ball, 0.7, 500, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn radius_recipe_on_a_quadratic() {
        // ‖f′(x)‖ = ‖x‖ for ½‖x‖², so δ = ε/2
        let f = half_square(2);
        let e2 = NormedSpace::euclidean(2).unwrap();
        let r = radius_recipe(&f, &e2, &v(&[0.0, 0.0]), 1.0, 1.0, 2000, 3).unwrap();
        assert!(r.delta >= 0.5 && r.delta <= 0.5 / 0.99, "{r:?}");
        assert_eq!(r.radius, 0.25);
        let r = radius_recipe(&f, &e2, &v(&[0.0, 0.0]), 1.0, 4.0, 2000, 3).unwrap();
        assert_eq!(r.radius, r.delta);
    }

    #[test]
    fn quadratic_pairs_invert_each_other() {
        let mut rng = SeedStream::new(7).rng();
        for _ in 0..30 {
            let n = rng.random_range(1..5);
            let f = CatalogFunction::quadratic(QuadraticForm::new(random_spd(&mut rng, n)).unwrap());
            let fstar = f.conjugate().unwrap();
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            assert!(conjugate_pair_residual(&f, &fstar, &x).unwrap() <= 1e-6);
            assert!(gradient_duality_residual(&f, &fstar, &x).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn smooth_pairs_invert_each_other() {
        // logsumexp is shift invariant, so its gradients invert only up to constants
        for name in ["expsum", "softplus"] {
            let f = CatalogFunction::parse(name, 2).unwrap();
            let fstar = f.conjugate().unwrap();
            let x = v(&[0.3, -0.4]);
            assert!(gradient_duality_residual(&f, &fstar, &x).unwrap() <= 1e-8, "{name}");
            assert!(conjugate_pair_residual(&f, &fstar, &x).unwrap() <= 1e-5, "{name}");
        }
    }

    #[test]
    fn certified_modulus_matches_the_conjugate_lipschitz_constant() {
        let mut rng = SeedStream::new(8).rng();
        for _ in 0..5 {
            let q = QuadraticForm::new(random_spd(&mut rng, 2)).unwrap();
            let f = CatalogFunction::quadratic(q);
            let fstar = f.conjugate().unwrap();
            let space = NormedSpace::lp(2, 1.5).unwrap();
            let mu = certify(&f, &Ball::unit(space.clone()), &CertifyConfig::new(4000, 1)).unwrap().mu_hat;
            let l_star = lipschitz_constant(&fstar, &Ball::unit(space.dual_space()), 4000, 2).unwrap().value;
            assert!(mu >= 1.0 / l_star - 0.05 * mu, "{mu} vs 1/{l_star}");
        }
    }
}
