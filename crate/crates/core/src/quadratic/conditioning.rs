use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::optim::nelder_mead;
use crate::rng::SeedStream;
use crate::serde_util;
use crate::spaces::{NormKind, NormedSpace, Vector};

use super::extremes::exact_extremes;
use super::{FormExtremes, QuadraticForm};

/// Smallest and largest number of fixed directions used by the sampled inner objective.
const INNER_DIRECTIONS: (usize, usize) = (64, 2048);

/// Directions used to re-evaluate each restart's best form.
const FINAL_BUDGET: usize = 20_000;

/// Best quadratic sandwich found for a norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub form: QuadraticForm,
    /// `L(A) / μ(A)`; its square root bounds the Banach–Mazur distance to Euclidean space.
    pub ratio: f64,
    pub mu: f64,
    pub l: f64,
    #[serde(with = "serde_util::vector")]
    pub argmin: Vector,
    #[serde(with = "serde_util::vector")]
    pub argmax: Vector,
    pub exact: bool,
    pub restarts: usize,
    pub evaluations: usize,
}

impl Conditioning {
    pub fn sqrt_ratio(&self) -> f64 {
        self.ratio.sqrt()
    }
}

/// `L(A) / μ(A)` for a fixed form, where `μ(A)` and `L(A)` are the extremes of
/// `A[h, h]` over the unit sphere of `space`.
pub fn form_ratio(form: &QuadraticForm, space: &NormedSpace, budget: usize, seed: u64) -> Result<FormExtremes> {
    super::form_extremes(form, space, budget, seed)
}

/// Searches positive-definite forms `A = RᵀR` (`R` upper triangular with
/// `det R = 1`) for the smallest ratio `L(A) / μ(A)`.
///
/// Each restart runs a Nelder–Mead search over the off-diagonal entries and the
/// log-diagonal of `R` with at most `budget` objective evaluations. Restart 0
/// starts from the natural form of the norm (the identity for plain `ℓ_p`, the
/// squared scaling for weighted norms, the norm's own matrix for quadratic
/// norms); later restarts start at seeded random factors. Restarts run in
/// parallel; the smallest ratio wins, ties broken by lexicographic comparison of
/// the matrices.
pub fn min_conditioning(space: &NormedSpace, budget: usize, restarts: usize, seed: u64) -> Result<Conditioning> {
    if budget < 1 || restarts < 1 {
        return Err(LabError::InvalidArgument(format!(
            "budget and restarts must be at least 1, got {budget} and {restarts}"
        )));
    }
    let n = space.dim();
    let stream = SeedStream::new(seed).derive("quadratic/min-conditioning");
    let directions = inner_directions(space, budget, stream.derive("directions"));
    let objective = |params: &[f64]| -> f64 {
        let a = form_from_params(n, params);
        match exact_extremes(&a, space) {
            Some(e) => e.ratio(),
            None => sampled_ratio(&a, &directions),
        }
    };
    let natural = natural_start(space);

    let results: Vec<Result<(Conditioning, usize)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = match (r, &natural) {
                (0, Some(p)) => p.clone(),
                (0, None) => vec![0.0; param_count(n)],
                _ => random_start(n, stream.index(r as u64).rng()),
            };
            let m = nelder_mead(objective, &start, 0.3, budget, 1e-13, 1e-9);
            let form = form_from_params(n, &m.x);
            let e = form_ratio(&form, space, FINAL_BUDGET, seed)?;
            Ok((finish(form, e, restarts, 0), m.evaluations))
        })
        .collect();

    let mut best: Option<Conditioning> = None;
    let mut evaluations = 0;
    for r in results {
        let (c, evals) = r?;
        evaluations += evals;
        if best.as_ref().is_none_or(|b| better(&c, b)) {
            best = Some(c);
        }
    }
    let mut best = best.expect("restarts >= 1");
    best.evaluations = evaluations;
    Ok(best)
}

/// Ratio of the identity form, without search.
pub fn identity_conditioning(space: &NormedSpace, budget: usize, seed: u64) -> Result<Conditioning> {
    let form = QuadraticForm::identity(space.dim());
    let e = form_ratio(&form, space, budget.max(1), seed)?;
    Ok(finish(form, e, 0, 0))
}

fn finish(form: QuadraticForm, e: FormExtremes, restarts: usize, evaluations: usize) -> Conditioning {
    Conditioning {
        ratio: e.ratio().max(1.0),
        mu: e.min,
        l: e.max,
        argmin: e.argmin,
        argmax: e.argmax,
        exact: e.exact,
        form,
        restarts,
        evaluations,
    }
}

fn better(a: &Conditioning, b: &Conditioning) -> bool {
    match a.ratio.total_cmp(&b.ratio) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => {
            let (ma, mb) = (a.form.matrix(), b.form.matrix());
            let order = (0..ma.nrows())
                .flat_map(|i| (0..ma.ncols()).map(move |j| (i, j)))
                .map(|ij| ma[ij].total_cmp(&mb[ij]))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal);
            order == Ordering::Less
        }
    }
}

fn param_count(n: usize) -> usize {
    n * (n - 1) / 2 + n.saturating_sub(1)
}

/// Parameters: `n − 1` free log-diagonal entries (the last one makes the sum zero),
/// then the strict upper triangle row by row.
fn form_from_params(n: usize, params: &[f64]) -> QuadraticForm {
    let mut r = DMatrix::zeros(n, n);
    let free = n.saturating_sub(1);
    let mut sum = 0.0;
    for i in 0..free {
        r[(i, i)] = params[i].exp();
        sum += params[i];
    }
    if n > 0 {
        r[(n - 1, n - 1)] = (-sum).exp();
    }
    let mut k = free;
    for i in 0..n {
        for j in i + 1..n {
            r[(i, j)] = params[k];
            k += 1;
        }
    }
    let a = r.transpose() * &r;
    let sym = (&a + a.transpose()) * 0.5;
    QuadraticForm::new(sym).expect("RᵀR is symmetric and finite")
}

/// Parameters of the upper Cholesky factor of `a`, scaled to determinant one.
fn params_of(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = a.nrows();
    let r = a.clone().cholesky()?.l().transpose();
    let logs: Vec<f64> = (0..n).map(|i| r[(i, i)].ln()).collect();
    let shift = logs.iter().sum::<f64>() / n as f64;
    let scale = (-shift).exp();
    let mut p: Vec<f64> = logs[..n - 1].iter().map(|l| l - shift).collect();
    for i in 0..n {
        for j in i + 1..n {
            p.push(r[(i, j)] * scale);
        }
    }
    Some(p)
}

fn natural_start(space: &NormedSpace) -> Option<Vec<f64>> {
    match space.kind() {
        NormKind::P(_) => None,
        NormKind::WeightedP { .. } => {
            let (_, c) = space.diagonal_scaling()?;
            params_of(&DMatrix::from_diagonal(&Vector::from_iterator(c.len(), c.iter().map(|v| v * v))))
        }
        NormKind::Quadratic(q) => params_of(q.matrix()),
    }
}

fn random_start(n: usize, mut rng: impl Rng) -> Vec<f64> {
    let free = n.saturating_sub(1);
    (0..param_count(n))
        .map(|k| {
            let z: f64 = rng.sample(StandardNormal);
            if k < free {
                0.5 * z
            } else {
                0.3 * z
            }
        })
        .collect()
}

/// Unit directions for the sampled objective: coordinate axes, sign vectors in
/// low dimension, and seeded sphere samples. Fixed across evaluations so the
/// objective is deterministic.
fn inner_directions(space: &NormedSpace, budget: usize, stream: SeedStream) -> Vec<Vector> {
    let n = space.dim();
    let mut dirs: Vec<Vector> = (0..n)
        .map(|i| {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    if (2..=10).contains(&n) {
        for mask in 0u64..(1 << (n - 1)) {
            dirs.push(Vector::from_fn(n, |i, _| if i > 0 && mask >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 }));
        }
    }
    let count = (budget / 10).clamp(INNER_DIRECTIONS.0, INNER_DIRECTIONS.1);
    dirs.extend(space.sphere_samples_with(count, &mut stream.rng()));
    dirs.into_iter()
        .map(|h| {
            let nh = space.norm_of(h.as_slice());
            h / nh
        })
        .collect()
}

fn sampled_ratio(a: &QuadraticForm, directions: &[Vector]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for h in directions {
        let v = a.quad(h.as_slice());
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi / lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic::extremes::sampled_extremes;
    use approx::assert_abs_diff_eq;

    fn sampled_form_ratio(form: &QuadraticForm, space: &NormedSpace, budget: usize, seed: u64) -> f64 {
        sampled_extremes(form, space, budget, &mut SeedStream::new(seed).rng()).ratio()
    }

    #[test]
    fn euclidean_is_already_optimal() {
        for n in 1..=4 {
            let c = min_conditioning(&NormedSpace::euclidean(n).unwrap(), 50, 2, 1).unwrap();
            assert_abs_diff_eq!(c.ratio, 1.0, epsilon = 1e-9);
        }
        let q = NormedSpace::quadratic(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0])).unwrap();
        let c = min_conditioning(&q, 200, 2, 1).unwrap();
        assert_abs_diff_eq!(c.ratio, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn l1_plane_has_ratio_two() {
        let l1 = NormedSpace::lp(2, 1.0).unwrap();
        let c = min_conditioning(&l1, 10_000, 4, 2).unwrap();
        assert_abs_diff_eq!(c.ratio, 2.0, epsilon = 1e-2);
        assert!(c.ratio >= 2.0 - 1e-9);
        assert!(c.exact);
    }

    #[test]
    fn identity_form_on_l1_gives_dimension() {
        for n in 1..=8 {
            let c = identity_conditioning(&NormedSpace::lp(n, 1.0).unwrap(), 10, 1).unwrap();
            assert_eq!(c.ratio, n as f64, "n={n}");
        }
    }

    #[test]
    fn ratio_never_below_one() {
        for p in [1.0, 1.5, 3.0, f64::INFINITY] {
            let c = min_conditioning(&NormedSpace::lp(3, p).unwrap(), 300, 3, 3).unwrap();
            assert!(c.ratio >= 1.0);
            assert!(c.ratio <= 3.0 + 1e-6, "p={p}: {}", c.ratio);
        }
    }

    #[test]
    fn equal_weights_do_not_change_the_ratio() {
        for p in [1.0, 3.0, f64::INFINITY] {
            let plain = min_conditioning(&NormedSpace::lp(2, p).unwrap(), 2000, 3, 4).unwrap();
            let weighted = min_conditioning(&NormedSpace::weighted(p, vec![2.5, 2.5]).unwrap(), 2000, 3, 4).unwrap();
            assert!((plain.ratio - weighted.ratio).abs() <= 1e-6, "p={p}: {} vs {}", plain.ratio, weighted.ratio);
        }
    }

    #[test]
    fn weighted_start_reaches_the_unweighted_optimum() {
        let c = min_conditioning(&NormedSpace::weighted(1.0, vec![1.0, 9.0]).unwrap(), 50, 2, 5).unwrap();
        assert_abs_diff_eq!(c.ratio, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn parameterization_round_trips() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let p = params_of(&a).unwrap();
        let back = form_from_params(3, &p);
        let scale = back.matrix()[(0, 0)] / a[(0, 0)];
        assert!((back.matrix() - &a * scale).amax() < 1e-12);
        assert!((back.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments() {
        let s = NormedSpace::euclidean(2).unwrap();
        assert!(min_conditioning(&s, 0, 1, 1).is_err());
        assert!(min_conditioning(&s, 1, 0, 1).is_err());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let s = NormedSpace::lp(2, 3.0).unwrap();
        let a = min_conditioning(&s, 500, 3, 6).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| min_conditioning(&s, 500, 3, 6).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_and_exact_ratios_agree() {
        let a = form_from_params(3, &[0.2, -0.1, 0.3, 0.0, -0.2]);
        for p in [1.0, f64::INFINITY] {
            let s = NormedSpace::lp(3, p).unwrap();
            let exact = form_ratio(&a, &s, 10, 1).unwrap();
            assert!(exact.exact);
            let sampled = sampled_form_ratio(&a, &s, 5000, 1);
            assert!((exact.ratio() - sampled).abs() <= 1e-9 * exact.ratio());
        }
    }
}
