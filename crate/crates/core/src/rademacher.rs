//! Rademacher averages and empirical type-2 / cotype-2 constants.
//!
//! For a family `x_1, …, x_m` the average
//!
//! ```text
//! avg_q = 2^{-m} Σ_{ε ∈ {-1,1}^m} ‖Σ_k ε_k x_k‖^q
//! ```
//!
//! is enumerated exactly in Gray-code order for `m ≤ 22`: consecutive sign
//! patterns differ in one coordinate, so the running sum is updated by `±2 x_k`.
//! Because `‖-s‖ = ‖s‖`, only the half with `ε_1 = +1` is visited.
//!
//! Any family is a witness: `type_ratio` and `cotype_ratio` are lower bounds for
//! the type-2 and cotype-2 constants of the space.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::quadratic::QuadraticForm;
use crate::rng::SeedStream;
use crate::serde_util;
use crate::spaces::{NormedSpace, Vector};

/// Largest family size enumerated exactly.
pub const ENUMERATION_LIMIT: usize = 22;

/// Patterns per enumeration chunk; the running sum is rebuilt at each chunk start.
const CHUNK: u64 = 1 << 12;

/// Vectors `x_1, …, x_m` in a common space. Serializes as an array of coordinate arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorFamily {
    #[serde(with = "serde_util::vectors")]
    vectors: Vec<Vector>,
}

impl VectorFamily {
    pub fn new(vectors: Vec<Vector>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| LabError::InvalidArgument("family must contain at least one vector".into()))?;
        let dim = first.len();
        for v in &vectors {
            check_dim(dim, v.len())?;
        }
        Ok(Self { vectors })
    }

    /// Coordinate basis `e_1, …, e_m` of `R^dim`.
    pub fn basis(dim: usize, m: usize) -> Result<Self> {
        if m > dim {
            return Err(LabError::InvalidArgument(format!("cannot take {m} basis vectors in dimension {dim}")));
        }
        Self::new((0..m).map(|i| {
            let mut e = Vector::zeros(dim);
            e[i] = 1.0;
            e
        }).collect())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    fn check_space(&self, space: &NormedSpace) -> Result<()> {
        check_dim(space.dim(), self.dim())
    }
}

/// Sign patterns of `{-1, 1}^m` in Gray-code order.
///
/// Bit `k` of the mask set means `ε_k = -1`. Each step after the first reports
/// the single coordinate that flipped.
#[derive(Debug, Clone)]
pub struct GrayCode {
    m: usize,
    next: u64,
}

impl GrayCode {
    pub fn new(m: usize) -> Self {
        assert!(m < 64, "at most 63 signs");
        Self { m, next: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignStep {
    pub mask: u64,
    pub flipped: Option<usize>,
}

impl SignStep {
    pub fn sign(&self, k: usize) -> f64 {
        if self.mask >> k & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

impl Iterator for GrayCode {
    type Item = SignStep;

    fn next(&mut self) -> Option<SignStep> {
        let i = self.next;
        if i >> self.m != 0 {
            return None;
        }
        self.next += 1;
        let flipped = (i > 0).then(|| i.trailing_zeros() as usize);
        Some(SignStep { mask: i ^ (i >> 1), flipped })
    }
}

fn powq(n: f64, q: f64) -> f64 {
    if q == 2.0 {
        n * n
    } else if q == 1.0 {
        n
    } else {
        n.powf(q)
    }
}

/// Sum of `g(Σ_k ε_k x_k)` over the patterns with `ε_1 = +1`, in fixed-size chunks
/// reduced in order so the result does not depend on the worker count.
fn half_pattern_sum(vectors: &[Vector], g: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let m = vectors.len();
    let dim = vectors[0].len();
    let rest = &vectors[1..];
    let total: u64 = 1 << (m - 1);
    let chunks = total.div_ceil(CHUNK);
    let chunk_sum = |c: u64| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(total);
        let gray = start ^ (start >> 1);
        let mut signs: Vec<f64> = (0..rest.len())
            .map(|k| if gray >> k & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        let mut s = vectors[0].clone();
        for (x, e) in rest.iter().zip(&signs) {
            s.axpy(*e, x, 1.0);
        }
        let mut acc = 0.0;
        for i in start..end {
            if i > start {
                let k = i.trailing_zeros() as usize;
                s.axpy(-2.0 * signs[k], &rest[k], 1.0);
                signs[k] = -signs[k];
            }
            acc += g(s.as_slice());
        }
        debug_assert_eq!(s.len(), dim);
        acc
    };
    let parts: Vec<f64> = if chunks > 1 {
        (0..chunks).into_par_iter().map(chunk_sum).collect()
    } else {
        vec![chunk_sum(0)]
    };
    parts.iter().sum::<f64>() / total as f64
}

fn exact_average(space: &NormedSpace, family: &VectorFamily, q: f64) -> Result<f64> {
    if family.len() > ENUMERATION_LIMIT {
        return Err(LabError::EnumerationTooLarge { m: family.len(), max: ENUMERATION_LIMIT });
    }
    Ok(half_pattern_sum(family.vectors(), |s| powq(space.norm_of(s), q)))
}

fn check_q(q: f64) -> Result<()> {
    if q >= 1.0 && q.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!("exponent q must be finite and at least 1, got {q}")))
    }
}

/// `2^{-m} Σ_ε ‖Σ_k ε_k x_k‖^q`.
///
/// Exact for `m ≤ 22`. Larger families need `mc_budget` and are estimated from
/// that many seeded sign draws.
pub fn rademacher_average(
    space: &NormedSpace,
    family: &VectorFamily,
    q: f64,
    mc_budget: Option<usize>,
    seed: u64,
) -> Result<f64> {
    check_q(q)?;
    family.check_space(space)?;
    match mc_budget {
        _ if family.len() <= ENUMERATION_LIMIT => exact_average(space, family, q),
        Some(draws) => Ok(monte_carlo_average(space, family, q, draws, seed)?.mean),
        None => Err(LabError::EnumerationTooLarge { m: family.len(), max: ENUMERATION_LIMIT }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Monte-Carlo estimate of the Rademacher average from `draws` uniform sign vectors.
pub fn monte_carlo_average(
    space: &NormedSpace,
    family: &VectorFamily,
    q: f64,
    draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_q(q)?;
    family.check_space(space)?;
    if draws < 2 {
        return Err(LabError::InvalidArgument("Monte-Carlo estimates need at least 2 draws".into()));
    }
    let stream = SeedStream::new(seed).derive("rademacher/monte-carlo");
    const BATCH: usize = 4096;
    let batches = draws.div_ceil(BATCH);
    let parts: Vec<(f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.index(b as u64).rng();
            let count = BATCH.min(draws - b * BATCH);
            let mut s = Vector::zeros(family.dim());
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..count {
                s.fill(0.0);
                for x in family.vectors() {
                    let e = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    s.axpy(e, x, 1.0);
                }
                let v = powq(space.norm_of(s.as_slice()), q);
                sum += v;
                sq += v * v;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = draws as f64;
    let mean = sum / n;
    let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, std_error: (var / n).sqrt(), draws })
}

fn sum_sq_norms(space: &NormedSpace, family: &VectorFamily) -> f64 {
    family.vectors().iter().map(|x| powq(space.norm_of(x.as_slice()), 2.0)).sum()
}

/// `(avg_2 / Σ_k ‖x_k‖²)^{1/2}`, a lower bound for the type-2 constant.
pub fn type_ratio(space: &NormedSpace, family: &VectorFamily) -> Result<f64> {
    family.check_space(space)?;
    let denom = sum_sq_norms(space, family);
    if denom == 0.0 {
        return Err(LabError::DegenerateFamily);
    }
    Ok((exact_average(space, family, 2.0)? / denom).sqrt())
}

/// `(Σ_k ‖x_k‖² / avg_2)^{1/2}`, a lower bound for the cotype-2 constant.
pub fn cotype_ratio(space: &NormedSpace, family: &VectorFamily) -> Result<f64> {
    family.check_space(space)?;
    let avg = exact_average(space, family, 2.0)?;
    if avg == 0.0 {
        return Err(LabError::DegenerateFamily);
    }
    Ok((sum_sq_norms(space, family) / avg).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Type2,
    Cotype2,
}

impl Mode {
    fn ratio(self, space: &NormedSpace, family: &VectorFamily) -> Result<f64> {
        match self {
            Mode::Type2 => type_ratio(space, family),
            Mode::Cotype2 => cotype_ratio(space, family),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherReport {
    pub best_family: VectorFamily,
    pub ratio: f64,
    pub mode: Mode,
    pub evaluations: usize,
    pub exact: bool,
    pub seed: u64,
}

/// Searches for a family maximizing the type or cotype ratio.
///
/// Starts with the coordinate basis (when `family_size ≤ dim`), then seeded random
/// families drawn from the unit sphere with random scales. Each start is hill-climbed
/// by coordinate moves with a halving step. The search sequence does not depend on
/// `budget`, so a larger budget with the same seed extends a smaller one and never
/// reports a smaller ratio.
pub fn estimate_constant(
    space: &NormedSpace,
    mode: Mode,
    family_size: usize,
    budget: usize,
    seed: u64,
) -> Result<RademacherReport> {
    if budget < 1 {
        return Err(LabError::InvalidArgument("budget must be at least 1".into()));
    }
    if family_size < 1 || family_size > ENUMERATION_LIMIT {
        return Err(LabError::InvalidArgument(format!(
            "family size must lie in [1, {ENUMERATION_LIMIT}], got {family_size}"
        )));
    }
    let dim = space.dim();
    let stream = SeedStream::new(seed).derive("rademacher/estimate");
    let mut search = Search { space, mode, budget, evaluations: 0, best: None };

    let mut restart = 0u64;
    while search.evaluations < budget {
        let start = if restart == 0 && family_size <= dim {
            VectorFamily::basis(dim, family_size)?.vectors
        } else {
            let mut rng = stream.index(restart).rng();
            (0..family_size)
                .map(|_| space.sphere_sample(&mut rng) * rng.random_range(0.1..1.0))
                .collect()
        };
        search.climb(start)?;
        restart += 1;
    }
    let (ratio, best_family) = search.best.expect("budget >= 1 evaluates at least once");
    Ok(RademacherReport { best_family, ratio, mode, evaluations: search.evaluations, exact: true, seed })
}

struct Search<'a> {
    space: &'a NormedSpace,
    mode: Mode,
    budget: usize,
    evaluations: usize,
    best: Option<(f64, VectorFamily)>,
}

impl Search<'_> {
    /// Ratio of a family, recording it as a witness; `None` once the budget is spent.
    fn evaluate(&mut self, vectors: &[Vector]) -> Result<Option<f64>> {
        if self.evaluations >= self.budget {
            return Ok(None);
        }
        self.evaluations += 1;
        let family = VectorFamily { vectors: vectors.to_vec() };
        let ratio = match self.mode.ratio(self.space, &family) {
            Ok(r) => r,
            Err(LabError::DegenerateFamily) => 0.0,
            Err(e) => return Err(e),
        };
        if self.best.as_ref().is_none_or(|(b, _)| ratio > *b) {
            self.best = Some((ratio, family));
        }
        Ok(Some(ratio))
    }

    fn normalize(&self, vectors: &mut [Vector]) {
        let total: f64 = vectors.iter().map(|x| powq(self.space.norm_of(x.as_slice()), 2.0)).sum();
        if total > 0.0 {
            let s = total.sqrt().recip();
            vectors.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn climb(&mut self, mut family: Vec<Vector>) -> Result<()> {
        self.normalize(&mut family);
        let Some(mut current) = self.evaluate(&family)? else { return Ok(()) };
        let dim = family[0].len();
        let mut step = 0.5;
        while step > 1e-10 {
            let mut improved = false;
            for k in 0..family.len() {
                for i in 0..dim {
                    for dir in [1.0, -1.0] {
                        let mut trial = family.clone();
                        trial[k][i] += dir * step;
                        let Some(r) = self.evaluate(&trial)? else { return Ok(()) };
                        if r > current * (1.0 + 1e-14) {
                            self.normalize(&mut trial);
                            family = trial;
                            current = r;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        Ok(())
    }
}

/// Both sides of the cross-term cancellation for a symmetric form:
/// `lhs = 2^{-m} Σ_ε A[Σ ε_k x_k, Σ ε_k x_k]` by enumeration and `rhs = Σ_k A[x_k, x_k]`.
pub fn cross_term_expansion(form: &QuadraticForm, family: &VectorFamily) -> Result<(f64, f64)> {
    check_dim(form.dim(), family.dim())?;
    if family.len() > ENUMERATION_LIMIT {
        return Err(LabError::EnumerationTooLarge { m: family.len(), max: ENUMERATION_LIMIT });
    }
    let lhs = half_pattern_sum(family.vectors(), |s| form.quad(s));
    let rhs = family.vectors().iter().map(|x| form.quad(x.as_slice())).sum();
    Ok((lhs, rhs))
}
