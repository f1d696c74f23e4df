//! Extremes of `A[h, h]` over the unit sphere `{h : ‖h‖ = 1}` of a normed space.
//!
//! Closed forms are used when they exist:
//!
//! * Hilbertian norms: generalized eigenvalues of `A` against the Gram matrix.
//! * (weighted) `ℓ_1` and `ℓ_∞` with positive-definite `A`: the maximum of a convex
//!   quadratic over a polytope sits at a vertex, and the minimum follows from the
//!   dual-norm identity `min_{‖h‖=1} ‖R h‖₂ = 1 / max_{‖u‖₂=1} ‖R⁻¹ u‖`.
//!
//! Every other case falls back to sphere sampling with coordinate polish. The
//! returned values are then witnessed: `min` is an upper bound on the true minimum
//! and `max` a lower bound on the true maximum.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::quadratic::QuadraticForm;
use crate::rng::SeedStream;
use crate::serde_util;
use crate::spaces::{NormedSpace, Vector};

/// Largest dimension for which sign vectors are enumerated.
const MAX_SIGN_ENUMERATION: usize = 20;
const POLISH_CANDIDATES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormExtremes {
    pub min: f64,
    #[serde(with = "serde_util::vector")]
    pub argmin: Vector,
    pub max: f64,
    #[serde(with = "serde_util::vector")]
    pub argmax: Vector,
    /// Whether both values are closed-form rather than sampled.
    pub exact: bool,
}

impl FormExtremes {
    pub fn ratio(&self) -> f64 {
        self.max / self.min
    }
}

pub fn form_extremes(
    form: &QuadraticForm,
    space: &NormedSpace,
    budget: usize,
    seed: u64,
) -> Result<FormExtremes> {
    check_dim(space.dim(), form.dim())?;
    if let Some(e) = exact_extremes(form, space) {
        return Ok(e);
    }
    let mut rng = SeedStream::new(seed).derive("quadratic/sphere-extremes").rng();
    Ok(sampled_extremes(form, space, budget, &mut rng))
}

pub(crate) fn exact_extremes(form: &QuadraticForm, space: &NormedSpace) -> Option<FormExtremes> {
    if let Some(gram) = space.gram_matrix() {
        return hilbertian_extremes(form, space, &gram);
    }
    let (p, c) = space.diagonal_scaling()?;
    let n = form.dim();
    if !(p == 1.0 || p.is_infinite()) || n > MAX_SIGN_ENUMERATION {
        return None;
    }
    // h = D⁻¹ g with ‖g‖_p = ‖h‖
    let scaled = DMatrix::from_fn(n, n, |i, j| form.matrix()[(i, j)] / (c[i] * c[j]));
    let scaled = QuadraticForm::new(scaled).ok()?;
    let inv = scaled.inverse().ok()?;
    let unscale = |g: &Vector| {
        let h = Vector::from_fn(n, |i, _| g[i] / c[i]);
        let nh = space.norm_of(h.as_slice());
        h / nh
    };
    let (min, gmin, max, gmax) = if p == 1.0 {
        let (imax, max) = (0..n)
            .map(|i| (i, scaled.matrix()[(i, i)]))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        let (s, best) = max_over_signs(n, |s| inv.quad(s));
        let g = inv.matrix() * Vector::from_vec(s);
        (1.0 / best, g, max, basis(n, imax))
    } else {
        let (s, max) = max_over_signs(n, |s| scaled.quad(s));
        let (imin, best) = (0..n)
            .map(|i| (i, inv.matrix()[(i, i)]))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        let g = inv.matrix().column(imin).into_owned();
        (1.0 / best, g, max, Vector::from_vec(s))
    };
    Some(FormExtremes { min, argmin: unscale(&gmin), max, argmax: unscale(&gmax), exact: true })
}

fn hilbertian_extremes(
    form: &QuadraticForm,
    space: &NormedSpace,
    gram: &DMatrix<f64>,
) -> Option<FormExtremes> {
    let l = gram.clone().cholesky()?.l();
    let linv = l.try_inverse()?;
    let c = &linv * form.matrix() * linv.transpose();
    let eig = SymmetricEigen::new((&c + c.transpose()) * 0.5);
    let (imin, &min) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let (imax, &max) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let lift = |i: usize| {
        let h = linv.transpose() * eig.eigenvectors.column(i);
        let nh = space.norm_of(h.as_slice());
        h / nh
    };
    Some(FormExtremes { min, argmin: lift(imin), max, argmax: lift(imax), exact: true })
}

fn basis(n: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = 1.0;
    e
}

/// Maximizes `f` over sign vectors with the first entry fixed to `+1`.
fn max_over_signs(n: usize, f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut s = vec![1.0; n];
    let mut best = (s.clone(), f(&s));
    for mask in 1u64..(1u64 << (n - 1)) {
        for (k, sk) in s.iter_mut().enumerate().skip(1) {
            *sk = if mask >> (k - 1) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let v = f(&s);
        if v > best.1 {
            best = (s.clone(), v);
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Goal {
    Min,
    Max,
}

impl Goal {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Goal::Min => a < b,
            Goal::Max => a > b,
        }
    }
}

fn quotient(form: &QuadraticForm, space: &NormedSpace, h: &[f64]) -> f64 {
    let n = space.norm_of(h);
    form.quad(h) / (n * n)
}

pub(crate) fn sampled_extremes<R: Rng>(
    form: &QuadraticForm,
    space: &NormedSpace,
    budget: usize,
    rng: &mut R,
) -> FormExtremes {
    let n = space.dim();
    let mut candidates: Vec<Vector> = (0..n).map(|i| basis(n, i)).collect();
    if n <= 10 && n > 1 {
        let mut s = vec![1.0; n];
        for mask in 0u64..(1u64 << (n - 1)) {
            for (k, sk) in s.iter_mut().enumerate().skip(1) {
                *sk = if mask >> (k - 1) & 1 == 1 { -1.0 } else { 1.0 };
            }
            candidates.push(Vector::from_row_slice(&s));
        }
    }
    let eig = SymmetricEigen::new(form.matrix().clone());
    candidates.extend(eig.eigenvectors.column_iter().map(|c| c.into_owned()));
    candidates.extend(space.sphere_samples_with(budget, rng));

    let scored: Vec<(f64, Vector)> = candidates
        .into_iter()
        .filter_map(|h| {
            let nh = space.norm_of(h.as_slice());
            (nh > 0.0).then(|| {
                let h = h / nh;
                (quotient(form, space, h.as_slice()), h)
            })
        })
        .collect();

    let (min, argmin) = polish_best(form, space, &scored, Goal::Min);
    let (max, argmax) = polish_best(form, space, &scored, Goal::Max);
    FormExtremes { min, argmin, max, argmax, exact: false }
}

fn polish_best(
    form: &QuadraticForm,
    space: &NormedSpace,
    scored: &[(f64, Vector)],
    goal: Goal,
) -> (f64, Vector) {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        let c = scored[a].0.total_cmp(&scored[b].0);
        if goal == Goal::Max {
            c.reverse()
        } else {
            c
        }
    });
    let mut best: Option<(f64, Vector)> = None;
    for &i in order.iter().take(POLISH_CANDIDATES) {
        let (v, h) = polish(form, space, scored[i].1.clone(), goal);
        if best.as_ref().is_none_or(|b| goal.better(v, b.0)) {
            best = Some((v, h));
        }
    }
    best.expect("at least one candidate")
}

/// Coordinate pattern search on the scale-invariant quotient `A[h,h] / ‖h‖²`.
pub(crate) fn polish(
    form: &QuadraticForm,
    space: &NormedSpace,
    start: Vector,
    goal: Goal,
) -> (f64, Vector) {
    let n = start.len();
    let mut h = start;
    let mut value = quotient(form, space, h.as_slice());
    let mut step = 0.25 * h.amax();
    let floor = 1e-12 * h.amax();
    let mut sweeps = 0;
    while step > floor && sweeps < 4000 {
        sweeps += 1;
        let mut improved = false;
        for i in 0..n {
            for dir in [1.0, -1.0] {
                let mut trial = h.clone();
                trial[i] += dir * step;
                let nt = space.norm_of(trial.as_slice());
                if nt == 0.0 {
                    continue;
                }
                trial /= nt;
                let v = quotient(form, space, trial.as_slice());
                if goal.better(v, value) {
                    h = trial;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (value, h)
}
