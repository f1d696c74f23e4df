//! Sampled estimates of the strong-convexity modulus `μ` and the gradient
//! Lipschitz constant `L` on a ball.
//!
//! Every sampled pair or triple is a witness: the infimum of a secant or
//! monotonicity quotient over samples is an upper bound on `μ`, and the supremum
//! of the Lipschitz quotient is a lower bound on `L`. The reported witnesses
//! reproduce the headline numbers without re-running the search.
//!
//! Samples are drawn in batches of 1024; batch `b` uses its own generator derived
//! from the master seed and a named stream, and batches are reduced in order, so
//! results do not depend on the number of worker threads.

mod ball;
mod function;
mod operator;

pub use ball::{Ball, SAMPLING_SHRINK};
pub use function::{fd_gradient, fd_hessian, fd_step, hessian_form, CatalogFunction, FnFunction, SmoothFunction};
pub use operator::{jacobian, FnOperator, GradientOperator, LinearOperator, MonotoneOperator};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::quadratic::{form_extremes, QuadraticForm};
use crate::rng::SeedStream;
use crate::serde_util;
use crate::spaces::{NormedSpace, Vector};

const BATCH: usize = 1024;
const MAX_RESAMPLES: usize = 100;
const MIN_SEPARATION: f64 = 1e-10;
const LAMBDA_RANGE: std::ops::RangeInclusive<f64> = 0.05..=0.95;

/// Largest sphere budget handed to the Hessian method by [`certify`].
const HESSIAN_BUDGET_CAP: usize = 4096;

/// Points at which a sampled extreme was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    Pair {
        #[serde(with = "serde_util::vector")]
        x: Vector,
        #[serde(with = "serde_util::vector")]
        y: Vector,
    },
    Triple {
        #[serde(with = "serde_util::vector")]
        x: Vector,
        #[serde(with = "serde_util::vector")]
        y: Vector,
        lambda: f64,
    },
    Direction {
        #[serde(with = "serde_util::vector")]
        point: Vector,
        #[serde(with = "serde_util::vector")]
        direction: Vector,
    },
}

/// An extreme quotient over the samples with the sample attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledBound {
    pub value: f64,
    pub witness: Witness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Secant,
    GradientMonotonicity,
    Hessian,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub samples: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl CertifyConfig {
    /// Secant, gradient-monotonicity and Hessian methods together.
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, methods: vec![Method::Secant, Method::GradientMonotonicity, Method::Hessian] }
    }

    pub fn with_methods(mut self, methods: &[Method]) -> Self {
        self.methods = methods.to_vec();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedConstants {
    pub mu_hat: f64,
    pub l_hat: f64,
    pub samples: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Method whose estimate gave `mu_hat`.
    pub mu_method: Method,
    pub l_method: Method,
    pub mu_witness: Witness,
    pub l_witness: Witness,
}

impl CertifiedConstants {
    /// `L̂ / μ̂`.
    pub fn ratio(&self) -> f64 {
        self.l_hat / self.mu_hat
    }

    pub fn sqrt_ratio(&self) -> f64 {
        self.ratio().sqrt()
    }
}

struct Draw {
    x: Vector,
    y: Vector,
    lambda: f64,
    separation: f64,
}

impl Draw {
    fn pair(&self) -> Witness {
        Witness::Pair { x: self.x.clone(), y: self.y.clone() }
    }

    fn triple(&self) -> Witness {
        Witness::Triple { x: self.x.clone(), y: self.y.clone(), lambda: self.lambda }
    }
}

fn draw<R: Rng>(ball: &Ball, rng: &mut R, with_lambda: bool) -> Result<Draw> {
    for _ in 0..MAX_RESAMPLES {
        let x = ball.sample(rng);
        let y = ball.sample(rng);
        let separation = ball.space().norm_of((&x - &y).as_slice());
        if separation >= MIN_SEPARATION {
            let lambda = if with_lambda { rng.random_range(LAMBDA_RANGE) } else { 0.5 };
            return Ok(Draw { x, y, lambda, separation });
        }
    }
    Err(LabError::DegenerateSamples { attempts: MAX_RESAMPLES })
}

#[derive(Clone, Copy, PartialEq)]
enum Extreme {
    Min,
    Max,
}

fn improves(goal: Extreme, value: f64, current: &Option<(f64, Draw)>) -> bool {
    match (current, goal) {
        (None, _) => true,
        (Some((b, _)), Extreme::Min) => value < *b,
        (Some((b, _)), Extreme::Max) => value > *b,
    }
}

/// Evaluates `K` quotients per sample and keeps the first sample attaining each extreme.
fn scan<const K: usize>(
    ball: &Ball,
    samples: usize,
    stream: SeedStream,
    with_lambda: bool,
    goals: [Extreme; K],
    eval: impl Fn(&Draw) -> [f64; K] + Sync,
) -> Result<[(f64, Draw); K]> {
    if samples < 1 {
        return Err(LabError::InvalidArgument("samples must be at least 1".into()));
    }
    let batches = samples.div_ceil(BATCH);
    let keep = |best: &mut [Option<(f64, Draw)>; K], values: [f64; K], d: &Draw| {
        for k in 0..K {
            if improves(goals[k], values[k], &best[k]) {
                best[k] = Some((values[k], Draw { x: d.x.clone(), y: d.y.clone(), ..*d }));
            }
        }
    };
    let parts: Vec<Result<[Option<(f64, Draw)>; K]>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.index(b as u64).rng();
            let count = BATCH.min(samples - b * BATCH);
            let mut best: [Option<(f64, Draw)>; K] = std::array::from_fn(|_| None);
            for _ in 0..count {
                let d = draw(ball, &mut rng, with_lambda)?;
                let values = eval(&d);
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(LabError::DifferentiabilityFailure(format!(
                        "quotient {v} at x = {:?}, y = {:?}",
                        d.x.as_slice(),
                        d.y.as_slice()
                    )));
                }
                keep(&mut best, values, &d);
            }
            Ok(best)
        })
        .collect();
    let mut best: [Option<(f64, Draw)>; K] = std::array::from_fn(|_| None);
    for part in parts {
        for (k, entry) in part?.into_iter().enumerate() {
            if let Some((v, d)) = entry {
                if improves(goals[k], v, &best[k]) {
                    best[k] = Some((v, d));
                }
            }
        }
    }
    Ok(best.map(|b| b.expect("samples >= 1")))
}

fn check_ball(dim: usize, ball: &Ball) -> Result<()> {
    check_dim(dim, ball.dim())
}

/// Infimum over sampled triples of
/// `2[λf(x) + (1−λ)f(y) − f(λx + (1−λ)y)] / (λ(1−λ)‖x − y‖²)`, with `λ ∈ [0.05, 0.95]`.
/// An upper bound on the strong-convexity modulus.
pub fn secant_modulus<F: SmoothFunction + ?Sized>(
    f: &F,
    ball: &Ball,
    samples: usize,
    seed: u64,
) -> Result<SampledBound> {
    check_ball(f.dim(), ball)?;
    let stream = SeedStream::new(seed).derive("certify/secant");
    let [(value, d)] = scan(ball, samples, stream, true, [Extreme::Min], |d| {
        let l = d.lambda;
        let z = &d.x * l + &d.y * (1.0 - l);
        let gap = l * f.value(&d.x) + (1.0 - l) * f.value(&d.y) - f.value(&z);
        [2.0 * gap / (l * (1.0 - l) * d.separation * d.separation)]
    })?;
    Ok(SampledBound { value, witness: d.triple() })
}

/// Infimum and supremum over sampled pairs of the monotonicity quotient
/// `⟨T(x) − T(y), x − y⟩ / ‖x − y‖²` and the Lipschitz quotient `‖T(x) − T(y)‖_* / ‖x − y‖`.
fn pair_bounds(
    ball: &Ball,
    samples: usize,
    seed: u64,
    map: impl Fn(&Vector) -> Vector + Sync,
) -> Result<(SampledBound, SampledBound)> {
    let stream = SeedStream::new(seed).derive("certify/pairs");
    let space = ball.space();
    let [(mono, dm), (lip, dl)] = scan(ball, samples, stream, false, [Extreme::Min, Extreme::Max], |d| {
        let step = &d.x - &d.y;
        let change = map(&d.x) - map(&d.y);
        let s = d.separation;
        [change.dot(&step) / (s * s), space.dual_norm_of(change.as_slice()) / s]
    })?;
    Ok((SampledBound { value: mono, witness: dm.pair() }, SampledBound { value: lip, witness: dl.pair() }))
}

/// Infimum over sampled pairs of `⟨f′(x) − f′(y), x − y⟩ / ‖x − y‖²`.
/// An upper bound on the strong-convexity modulus.
pub fn gradient_monotonicity_modulus<F: SmoothFunction + ?Sized>(
    f: &F,
    ball: &Ball,
    samples: usize,
    seed: u64,
) -> Result<SampledBound> {
    check_ball(f.dim(), ball)?;
    Ok(pair_bounds(ball, samples, seed, |x| f.gradient(x))?.0)
}

/// Supremum over sampled pairs of `‖f′(x) − f′(y)‖_* / ‖x − y‖`.
/// A lower bound on the Lipschitz constant of the gradient.
pub fn lipschitz_constant<F: SmoothFunction + ?Sized>(
    f: &F,
    ball: &Ball,
    samples: usize,
    seed: u64,
) -> Result<SampledBound> {
    check_ball(f.dim(), ball)?;
    Ok(pair_bounds(ball, samples, seed, |x| f.gradient(x))?.1)
}

/// Extremes of the second derivative at a point over the unit sphere of `space`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianBounds {
    pub mu: f64,
    pub l: f64,
    pub form: QuadraticForm,
    #[serde(with = "serde_util::vector")]
    pub point: Vector,
    #[serde(with = "serde_util::vector")]
    pub argmin: Vector,
    #[serde(with = "serde_util::vector")]
    pub argmax: Vector,
    /// Whether the extremes came from a closed form rather than polished sampling.
    pub exact: bool,
}

/// `min` and `max` of `A[h, h]` over `‖h‖ = 1`, where `A` is the symmetrized
/// second derivative of `f` at `point`.
///
/// Closed forms are used for Hilbertian and (weighted) `ℓ_1` / `ℓ_∞` norms; other
/// norms use `sphere_budget` seeded directions, each candidate refined by a local
/// pattern search.
pub fn hessian_bounds<F: SmoothFunction + ?Sized>(
    f: &F,
    space: &NormedSpace,
    point: &Vector,
    sphere_budget: usize,
    seed: u64,
) -> Result<HessianBounds> {
    check_dim(space.dim(), f.dim())?;
    if sphere_budget < 1 {
        return Err(LabError::InvalidArgument("sphere budget must be at least 1".into()));
    }
    let form = hessian_form(f, point)?;
    let e = form_extremes(&form, space, sphere_budget, seed)?;
    Ok(HessianBounds {
        mu: e.min,
        l: e.max,
        form,
        point: point.clone(),
        argmin: e.argmin,
        argmax: e.argmax,
        exact: e.exact,
    })
}

fn canonical_methods(methods: &[Method]) -> Vec<Method> {
    let mut m = methods.to_vec();
    m.sort();
    m.dedup();
    m
}

fn check_consistent(mu_hat: f64, l_hat: f64) -> Result<()> {
    if mu_hat > 0.0 && l_hat > 0.0 && mu_hat > l_hat + 1e-9 * l_hat.max(1.0) {
        Err(LabError::InconsistentEstimates { mu_hat, l_hat })
    } else {
        Ok(())
    }
}

/// Estimates `(μ, L)` for `f` on `ball`.
///
/// `mu_hat` is the smallest of the requested modulus estimates and `l_hat` the
/// largest Lipschitz estimate. The Hessian method evaluates the second derivative
/// at the ball center; its extremes are also witnesses (`μ ≤ min A[h,h]` and
/// `L ≥ max A[h,h]` over the unit sphere).
pub fn certify<F: SmoothFunction + ?Sized>(f: &F, ball: &Ball, config: &CertifyConfig) -> Result<CertifiedConstants> {
    check_ball(f.dim(), ball)?;
    let methods = canonical_methods(&config.methods);
    if methods.is_empty() {
        return Err(LabError::InvalidArgument("at least one method is required".into()));
    }
    if methods.contains(&Method::Operator) {
        return Err(LabError::InvalidArgument("the operator method applies to operators; use operator_certify".into()));
    }
    let (samples, seed) = (config.samples, config.seed);
    let (mono, lip) = pair_bounds(ball, samples, seed, |x| f.gradient(x))?;

    let mut mu: Option<(f64, Method, Witness)> = None;
    let mut consider = |value: f64, method: Method, witness: Witness| {
        if mu.as_ref().is_none_or(|(b, _, _)| value < *b) {
            mu = Some((value, method, witness));
        }
    };
    let mut l = (lip.value, Method::GradientMonotonicity, lip.witness);
    for &method in &methods {
        match method {
            Method::Secant => {
                let s = secant_modulus(f, ball, samples, seed)?;
                consider(s.value, method, s.witness);
            }
            Method::GradientMonotonicity => consider(mono.value, method, mono.witness.clone()),
            Method::Hessian => {
                let budget = samples.clamp(1, HESSIAN_BUDGET_CAP);
                let h = hessian_bounds(f, ball.space(), ball.center(), budget, seed)?;
                let point = ball.center().clone();
                consider(h.mu, method, Witness::Direction { point: point.clone(), direction: h.argmin });
                if h.l > l.0 {
                    l = (h.l, method, Witness::Direction { point, direction: h.argmax });
                }
            }
            Method::Operator => unreachable!("rejected above"),
        }
    }
    let (mu_hat, mu_method, mu_witness) = mu.expect("at least one method");
    check_consistent(mu_hat, l.0)?;
    Ok(CertifiedConstants {
        mu_hat,
        l_hat: l.0,
        samples,
        seed,
        methods,
        mu_method,
        l_method: l.1,
        mu_witness,
        l_witness: l.2,
    })
}

/// Estimates the strong-monotonicity modulus and Lipschitz constant of an operator
/// from the quotients `⟨T(x) − T(y), x − y⟩ / ‖x − y‖²` and `‖T(x) − T(y)‖_* / ‖x − y‖`.
///
/// Uses the same sample pairs as the gradient-based estimates of [`certify`], so
/// the gradient field of `f` reproduces them exactly.
pub fn operator_certify<T: MonotoneOperator + ?Sized>(
    t: &T,
    ball: &Ball,
    config: &CertifyConfig,
) -> Result<CertifiedConstants> {
    check_ball(t.dim(), ball)?;
    let (mono, lip) = pair_bounds(ball, config.samples, config.seed, |x| t.apply(x))?;
    check_consistent(mono.value, lip.value)?;
    Ok(CertifiedConstants {
        mu_hat: mono.value,
        l_hat: lip.value,
        samples: config.samples,
        seed: config.seed,
        methods: vec![Method::Operator],
        mu_method: Method::Operator,
        l_method: Method::Operator,
        mu_witness: mono.witness,
        l_witness: lip.witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dvector, DMatrix, SymmetricEigen};

    fn diag14() -> CatalogFunction {
        CatalogFunction::Quadratic(QuadraticForm::from_diagonal(&[1.0, 4.0]))
    }

    fn euclid_ball(center: Vector, r: f64) -> Ball {
        let n = center.len();
        Ball::new(center, r, NormedSpace::euclidean(n).unwrap()).unwrap()
    }

    fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
        let e = SymmetricEigen::new(m.clone()).eigenvalues;
        (e.min(), e.max())
    }

    fn half_square(n: usize) -> CatalogFunction {
        CatalogFunction::PNormSquared { dim: n, p: 2.0 }
    }

    #[test]
    fn quadratic_examples() {
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        let (lo, hi) = eigen_range(&DMatrix::from_diagonal(&dvector![1.0, 4.0]));
        let f = diag14();
        let s = secant_modulus(&f, &ball, 20_000, 1).unwrap();
        let g = gradient_monotonicity_modulus(&f, &ball, 20_000, 1).unwrap();
        let l = lipschitz_constant(&f, &ball, 20_000, 1).unwrap();
        assert!(s.value >= lo - 1e-12 && s.value - lo <= 1e-6, "{}", s.value);
        assert!(g.value >= lo - 1e-12 && g.value - lo <= 1e-6, "{}", g.value);
        assert!(l.value <= hi + 1e-12 && hi - l.value <= 1e-4, "{}", l.value);

        let h = half_square(3);
        let ball3 = euclid_ball(dvector![0.3, -0.2, 5.0], 2.0);
        assert_abs_diff_eq!(secant_modulus(&h, &ball3, 1000, 2).unwrap().value, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gradient_monotonicity_modulus(&h, &ball3, 1000, 2).unwrap().value, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lipschitz_constant(&h, &ball3, 1000, 2).unwrap().value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn affine_functions_have_zero_constants() {
        let f = CatalogFunction::affine(dvector![2.0, -1.0], 0.5);
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        assert!(secant_modulus(&f, &ball, 5000, 3).unwrap().value.abs() <= 1e-9);
        assert!(gradient_monotonicity_modulus(&f, &ball, 5000, 3).unwrap().value.abs() <= 1e-9);
        assert_eq!(lipschitz_constant(&f, &ball, 5000, 3).unwrap().value, 0.0);
    }

    #[test]
    fn witnesses_reproduce_values() {
        let f = diag14();
        let ball = Ball::new(dvector![0.5, 0.5], 1.0, NormedSpace::lp(2, 1.0).unwrap()).unwrap();
        let s = secant_modulus(&f, &ball, 3000, 4).unwrap();
        let Witness::Triple { x, y, lambda } = &s.witness else { panic!() };
        let z = x * *lambda + y * (1.0 - lambda);
        let d = ball.space().norm(&(x - y)).unwrap();
        let q = 2.0 * (lambda * f.value(x) + (1.0 - lambda) * f.value(y) - f.value(&z)) / (lambda * (1.0 - lambda) * d * d);
        assert_eq!(q, s.value);
        assert!(ball.contains(x) && ball.contains(y));

        let l = lipschitz_constant(&f, &ball, 3000, 4).unwrap();
        let Witness::Pair { x, y } = &l.witness else { panic!() };
        let q = ball.space().dual_norm(&(f.gradient(x) - f.gradient(y))).unwrap() / ball.space().norm(&(x - y)).unwrap();
        assert_eq!(q, l.value);
    }

    #[test]
    fn certify_quadratic_and_exp_sum() {
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        let c = certify(&diag14(), &ball, &CertifyConfig::new(100_000, 7)).unwrap();
        assert!((1.0 - 1e-4..=1.0).contains(&c.mu_hat), "{}", c.mu_hat);
        assert!((4.0 - 1e-4..=4.0).contains(&c.l_hat), "{}", c.l_hat);
        assert_abs_diff_eq!(c.sqrt_ratio(), 2.0, epsilon = 1e-3);

        // Hessian diag(e^{x1}, e^{x2}) ranges over [e^{-1}, e] on the unit disc
        let e = CatalogFunction::ExpSum { dim: 2 };
        let c = certify(&e, &ball, &CertifyConfig::new(20_000, 8)).unwrap();
        let (lo, hi) = dense_grid_curvature(1.0);
        assert!(c.mu_hat >= lo - 1e-3 && c.l_hat <= hi + 1e-3, "{c:?}");
        assert!(c.mu_hat <= c.l_hat);
        assert!(lo >= (-1f64).exp() - 1e-9 && hi <= 1f64.exp() + 1e-9);
    }

    /// Smallest and largest Hessian eigenvalue of Σ exp(x_i) over a dense polar
    /// grid of the closed disc of radius `r`.
    fn dense_grid_curvature(r: f64) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..=200 {
            let rho = r * i as f64 / 200.0;
            for k in 0..720 {
                let t = std::f64::consts::TAU * k as f64 / 720.0;
                let (a, b) = ((rho * t.cos()).exp(), (rho * t.sin()).exp());
                lo = lo.min(a.min(b));
                hi = hi.max(a.max(b));
            }
        }
        (lo, hi)
    }

    #[test]
    fn half_square_on_lp_balls() {
        for p in [1.0, 1.5, 3.0, f64::INFINITY] {
            let ball = Ball::new(dvector![0.7, -1.3], 0.5, NormedSpace::lp(2, p).unwrap()).unwrap();
            let c = certify(&half_square(2), &ball, &CertifyConfig::new(5000, 9)).unwrap();
            assert!(c.mu_hat > 0.0 && c.mu_hat <= c.l_hat, "p={p}: {c:?}");
            assert!(c.ratio() >= 1.0);
        }
    }

    #[test]
    fn sampled_modulus_stays_above_the_hessian_grid_minimum() {
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        let e = CatalogFunction::ExpSum { dim: 2 };
        let (grid_min, grid_max) = dense_grid_curvature(SAMPLING_SHRINK);
        for seed in 0..5 {
            let s = secant_modulus(&e, &ball, 5000, seed).unwrap().value;
            let g = gradient_monotonicity_modulus(&e, &ball, 5000, seed).unwrap().value;
            let l = lipschitz_constant(&e, &ball, 5000, seed).unwrap().value;
            assert!(s >= grid_min - 1e-6 && g >= grid_min - 1e-6);
            // the true Lipschitz constant on the sampled ball is e^{0.999}
            assert!(l <= grid_max + 1e-12);
        }
    }

    #[test]
    fn secant_and_gradient_agree_on_quadratics() {
        let mut rng = SeedStream::new(10).rng();
        for case in 0..10 {
            let b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let q = QuadraticForm::new(&b.transpose() * &b + DMatrix::identity(3, 3)).unwrap();
            let f = CatalogFunction::Quadratic(q);
            let ball = euclid_ball(dvector![0.1, 0.2, 0.3], 1.0);
            let c = certify(&f, &ball, &CertifyConfig::new(20_000, case).with_methods(&[Method::Secant])).unwrap();
            let g = gradient_monotonicity_modulus(&f, &ball, 20_000, case).unwrap().value;
            assert!((c.mu_hat - g).abs() <= 0.05 * c.l_hat);
        }
    }

    #[test]
    fn scaling_covariance() {
        let base = CatalogFunction::ExpSum { dim: 2 };
        let ball = Ball::new(dvector![0.2, -0.1], 0.8, NormedSpace::lp(2, 3.0).unwrap()).unwrap();
        let config = CertifyConfig::new(4000, 11);
        let c1 = certify(&base, &ball, &config).unwrap();
        for c in [0.5, 3.0, 100.0] {
            let scaled = FnFunction::new(2, move |x| c * x.iter().map(|v| v.exp()).sum::<f64>())
                .with_gradient(move |x| x.map(|v| c * v.exp()))
                .with_hessian(move |x| DMatrix::from_diagonal(&x.map(|v| c * v.exp())));
            let cc = certify(&scaled, &ball, &config).unwrap();
            assert!((cc.mu_hat - c * c1.mu_hat).abs() <= 1e-9 * c * c1.mu_hat);
            assert!((cc.l_hat - c * c1.l_hat).abs() <= 1e-9 * c * c1.l_hat);
        }
    }

    #[test]
    fn translation_invariance() {
        let q = QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let f = CatalogFunction::Quadratic(q.clone());
        let ball = Ball::new(dvector![0.0, 0.0], 1.0, NormedSpace::lp(2, 1.5).unwrap()).unwrap();
        let a = dvector![0.25, -0.5];
        let shifted = ball.translated(&a).unwrap();
        let a2 = a.clone();
        let q2 = q.clone();
        let g = FnFunction::new(2, move |x| 0.5 * q2.value(&(x - &a2)).unwrap())
            .with_gradient({
                let (q, a) = (q.clone(), a.clone());
                move |x| q.matrix() * (x - &a)
            })
            .with_hessian(move |_| q.matrix().clone());
        let config = CertifyConfig::new(5000, 12);
        let c1 = certify(&f, &ball, &config).unwrap();
        let c2 = certify(&g, &shifted, &config).unwrap();
        assert!((c1.mu_hat - c2.mu_hat).abs() <= 1e-12 * c1.mu_hat, "{} {}", c1.mu_hat, c2.mu_hat);
        assert!((c1.l_hat - c2.l_hat).abs() <= 1e-12 * c1.l_hat);
    }

    #[test]
    fn operator_examples() {
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        let config = CertifyConfig::new(20_000, 13);
        let t = LinearOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0])).unwrap();
        let c = operator_certify(&t, &ball, &config).unwrap();
        assert_abs_diff_eq!(c.mu_hat, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c.l_hat, std::f64::consts::SQRT_2, epsilon = 1e-6);
        assert_eq!(c.methods, vec![Method::Operator]);

        let c = operator_certify(&LinearOperator::new(DMatrix::from_diagonal(&dvector![1.0, 4.0])).unwrap(), &ball, &config)
            .unwrap();
        assert!((c.mu_hat - 1.0).abs() <= 1e-4 && (c.l_hat - 4.0).abs() <= 1e-4);

        let c = operator_certify(&LinearOperator::identity(2), &ball, &config).unwrap();
        assert_abs_diff_eq!(c.mu_hat, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.l_hat, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_field_matches_function_certificate() {
        for f in [diag14(), CatalogFunction::ExpSum { dim: 2 }, CatalogFunction::LogSumExp { dim: 2 }] {
            let ball = Ball::new(dvector![0.3, 0.1], 0.7, NormedSpace::lp(2, 1.0).unwrap()).unwrap();
            let config = CertifyConfig::new(3000, 14);
            let c = certify(&f, &ball, &config.clone().with_methods(&[Method::GradientMonotonicity])).unwrap();
            let o = operator_certify(&GradientOperator(&f), &ball, &config).unwrap();
            assert!((c.mu_hat - o.mu_hat).abs() <= 1e-9 * c.mu_hat.abs().max(1.0));
            assert!((c.l_hat - o.l_hat).abs() <= 1e-9 * c.l_hat);
        }
    }

    #[test]
    fn hessian_bounds_examples() {
        let e2 = NormedSpace::euclidean(2).unwrap();
        let h = hessian_bounds(&diag14(), &e2, &dvector![0.3, 0.4], 100, 1).unwrap();
        assert_abs_diff_eq!(h.mu, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(h.l, 4.0, epsilon = 1e-8);

        let l1 = NormedSpace::lp(2, 1.0).unwrap();
        let h = hessian_bounds(&half_square(2), &l1, &dvector![0.0, 0.0], 100, 1).unwrap();
        assert_abs_diff_eq!(h.mu, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.l, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.argmin[0].abs(), 0.5, epsilon = 1e-12);

        let q = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let qs = NormedSpace::quadratic(q.clone()).unwrap();
        let f = CatalogFunction::Quadratic(QuadraticForm::new(q).unwrap());
        let h = hessian_bounds(&f, &qs, &dvector![1.0, 1.0], 100, 1).unwrap();
        assert_abs_diff_eq!(h.mu, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(h.l, 1.0, epsilon = 1e-8);

        let bad = FnFunction::new(1, |x| if x[0] == 0.0 { f64::NAN } else { x[0] * x[0] });
        assert!(matches!(
            hessian_bounds(&bad, &NormedSpace::euclidean(1).unwrap(), &dvector![0.0], 10, 1),
            Err(LabError::DifferentiabilityFailure(_))
        ));
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let f = diag14();
        let ball = euclid_ball(dvector![0.0, 0.0], 1e-12);
        assert_eq!(secant_modulus(&f, &ball, 10, 1), Err(LabError::DegenerateSamples { attempts: 100 }));
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        assert!(secant_modulus(&f, &ball, 0, 1).is_err());
        assert!(certify(&f, &ball, &CertifyConfig::new(10, 1).with_methods(&[])).is_err());
        assert!(certify(&f, &ball, &CertifyConfig::new(10, 1).with_methods(&[Method::Operator])).is_err());
        assert!(certify(&f, &euclid_ball(dvector![0.0], 1.0), &CertifyConfig::new(10, 1)).is_err());
    }

    #[test]
    fn results_are_deterministic() {
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        let config = CertifyConfig::new(5000, 15);
        let a = certify(&CatalogFunction::Softplus { dim: 2 }, &ball, &config).unwrap();
        let b = certify(&CatalogFunction::Softplus { dim: 2 }, &ball, &config).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| certify(&CatalogFunction::Softplus { dim: 2 }, &ball, &config).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn constants_serialize_with_witnesses() {
        let ball = euclid_ball(dvector![0.0, 0.0], 1.0);
        let c = certify(&diag14(), &ball, &CertifyConfig::new(100, 1)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert!(v["mu_witness"]["kind"].is_string());
        assert_eq!(v["methods"], serde_json::json!(["secant", "gradient-monotonicity", "hessian"]));
        let back: CertifiedConstants = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }
}
