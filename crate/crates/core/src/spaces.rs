//! Finite-dimensional normed spaces with exact dual norms.
//!
//! A [`NormedSpace`] is `R^n` equipped with one of three norm families:
//!
//! * `‖v‖_p`, including the endpoints `p = 1` and `p = ∞`;
//! * weighted `‖v‖ = (Σ w_i |v_i|^p)^{1/p}` (and `max_i w_i |v_i|` for `p = ∞`);
//! * quadratic `‖v‖ = sqrt(vᵀ A v)` for a symmetric positive-definite `A`.
//!
//! Dual vectors live in the same coordinates; the pairing is the standard
//! dot product. Every kind has a closed-form dual norm, so Lipschitz
//! quotients `‖g(x) - g(y)‖_* / ‖x - y‖` are evaluated exactly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::rng::SeedStream;
use crate::serde_util;

pub type Vector = DVector<f64>;

/// Smallest admissible eigenvalue for a quadratic norm matrix.
pub const QUADRATIC_EIGEN_FLOOR: f64 = 1e-10;

/// Hölder conjugate exponent, with `1 ↔ ∞`.
pub fn holder_conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Positive-definite matrix with its inverse cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticNorm {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl QuadraticNorm {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(LabError::InvalidArgument(format!(
                "quadratic norm needs a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(LabError::InvalidArgument("quadratic norm matrix is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let (imin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if !(lmin > QUADRATIC_EIGEN_FLOOR) {
            return Err(LabError::NotPositiveDefinite {
                witness: eig.eigenvectors.column(imin).iter().copied().collect(),
                value: lmin,
            });
        }
        let inverse = matrix.clone().cholesky().ok_or(LabError::Singular)?.inverse();
        let inverse = (&inverse + inverse.transpose()) * 0.5;
        Ok(Self { matrix, inverse })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    fn dual(&self) -> Self {
        Self { matrix: self.inverse.clone(), inverse: self.matrix.clone() }
    }
}

fn quad_value(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += m[(i, j)] * v[i];
        }
        acc += col * v[j];
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    P(f64),
    WeightedP { p: f64, weights: Vec<f64> },
    Quadratic(QuadraticNorm),
}

/// `R^dim` with a norm. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceDescriptor", into = "SpaceDescriptor")]
pub struct NormedSpace {
    dim: usize,
    kind: NormKind,
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!("norm exponent must lie in [1, inf], got {p}")))
    }
}

impl NormedSpace {
    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::InvalidArgument("dimension must be at least 1".into()));
        }
        check_p(p)?;
        Ok(Self { dim, kind: NormKind::P(p) })
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::lp(dim, 2.0)
    }

    pub fn weighted(p: f64, weights: Vec<f64>) -> Result<Self> {
        check_p(p)?;
        if weights.is_empty() {
            return Err(LabError::InvalidArgument("dimension must be at least 1".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(LabError::InvalidArgument(format!("weights must be positive, got {w}")));
        }
        Ok(Self { dim: weights.len(), kind: NormKind::WeightedP { p, weights } })
    }

    pub fn quadratic(matrix: DMatrix<f64>) -> Result<Self> {
        let q = QuadraticNorm::new(matrix)?;
        Ok(Self { dim: q.matrix.nrows(), kind: NormKind::Quadratic(q) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    /// Whether the norm comes from an inner product.
    pub fn is_hilbertian(&self) -> bool {
        match &self.kind {
            NormKind::P(p) | NormKind::WeightedP { p, .. } => *p == 2.0 || self.dim == 1,
            NormKind::Quadratic(_) => true,
        }
    }

    /// `‖v‖ = ‖diag(c) v‖_p` representation of (weighted) p-norms.
    pub fn diagonal_scaling(&self) -> Option<(f64, Vec<f64>)> {
        match &self.kind {
            NormKind::P(p) => Some((*p, vec![1.0; self.dim])),
            NormKind::WeightedP { p, weights } => {
                let c = if p.is_infinite() {
                    weights.clone()
                } else {
                    weights.iter().map(|w| w.powf(1.0 / p)).collect()
                };
                Some((*p, c))
            }
            NormKind::Quadratic(_) => None,
        }
    }

    /// Gram matrix of the norm when it is Hilbertian.
    pub fn gram_matrix(&self) -> Option<DMatrix<f64>> {
        if !self.is_hilbertian() {
            return None;
        }
        match &self.kind {
            NormKind::Quadratic(q) => Some(q.matrix.clone()),
            _ => {
                let (_, c) = self.diagonal_scaling()?;
                Some(DMatrix::from_diagonal(&DVector::from_iterator(
                    self.dim,
                    c.iter().map(|c| c * c),
                )))
            }
        }
    }

    pub fn norm(&self, v: &Vector) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        Ok(self.norm_of(v.as_slice()))
    }

    pub fn dual_norm(&self, w: &Vector) -> Result<f64> {
        check_dim(self.dim, w.len())?;
        Ok(self.dual_norm_of(w.as_slice()))
    }

    /// Unchecked norm evaluation for inner loops.
    pub fn norm_of(&self, v: &[f64]) -> f64 {
        match &self.kind {
            NormKind::P(p) => pnorm(v.iter().map(|x| x.abs()), *p),
            NormKind::WeightedP { p, weights } => {
                if p.is_infinite() {
                    v.iter().zip(weights).fold(0.0, |m, (x, w)| m.max(w * x.abs()))
                } else {
                    let c = 1.0 / p;
                    pnorm(v.iter().zip(weights).map(|(x, w)| w.powf(c) * x.abs()), *p)
                }
            }
            NormKind::Quadratic(q) => quad_value(&q.matrix, v).max(0.0).sqrt(),
        }
    }

    /// Unchecked dual-norm evaluation for inner loops.
    pub fn dual_norm_of(&self, w: &[f64]) -> f64 {
        match &self.kind {
            NormKind::P(p) => pnorm(w.iter().map(|x| x.abs()), holder_conjugate(*p)),
            NormKind::Quadratic(q) => quad_value(&q.inverse, w).max(0.0).sqrt(),
            NormKind::WeightedP { p, weights } => {
                if *p == 1.0 {
                    w.iter().zip(weights).fold(0.0, |m, (x, c)| m.max(x.abs() / c))
                } else if p.is_infinite() {
                    w.iter().zip(weights).map(|(x, c)| x.abs() / c).sum()
                } else {
                    // dual weights c^{1-q}, scaled into the p-norm form c^{(1-q)/q} |s|
                    let q = holder_conjugate(*p);
                    let e = (1.0 - q) / q;
                    pnorm(w.iter().zip(weights).map(|(x, c)| c.powf(e) * x.abs()), q)
                }
            }
        }
    }

    /// The dual space, identified with `R^dim` through the dot product.
    pub fn dual_space(&self) -> NormedSpace {
        let kind = match &self.kind {
            NormKind::P(p) => NormKind::P(holder_conjugate(*p)),
            NormKind::WeightedP { p, weights } => {
                let q = holder_conjugate(*p);
                let weights = if *p == 1.0 || p.is_infinite() {
                    weights.iter().map(|w| 1.0 / w).collect()
                } else {
                    weights.iter().map(|w| w.powf(1.0 - q)).collect()
                };
                NormKind::WeightedP { p: q, weights }
            }
            NormKind::Quadratic(q) => NormKind::Quadratic(q.dual()),
        };
        NormedSpace { dim: self.dim, kind }
    }

    /// Gaussian directions normalized to unit norm. Deterministic in `seed`.
    pub fn unit_sphere_samples(&self, count: usize, seed: u64) -> Vec<Vector> {
        let mut rng = SeedStream::new(seed).derive("spaces/unit-sphere").rng();
        self.sphere_samples_with(count, &mut rng)
    }

    pub(crate) fn sphere_samples_with<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<Vector> {
        (0..count).map(|_| self.sphere_sample(rng)).collect()
    }

    pub(crate) fn sphere_sample<R: Rng>(&self, rng: &mut R) -> Vector {
        loop {
            let g = Vector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = self.norm_of(g.as_slice());
            if n > 1e-300 && n.is_finite() {
                return g / n;
            }
        }
    }
}

/// `(Σ a_i^p)^{1/p}` for nonnegative `a_i`, scaled by the maximum to avoid overflow.
fn pnorm<I: Iterator<Item = f64> + Clone>(abs: I, p: f64) -> f64 {
    let m = abs.clone().fold(0.0, f64::max);
    if p.is_infinite() || m == 0.0 {
        return m;
    }
    if p == 1.0 {
        return abs.sum();
    }
    if p == 2.0 {
        return m * abs.map(|a| (a / m) * (a / m)).sum::<f64>().sqrt();
    }
    m * abs.map(|a| (a / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Reference spaces of dimension `dim`: `ℓ_p` for `p ∈ {1, 1.5, 2, 3, ∞}`,
/// weighted `ℓ_1`, `ℓ_3`, `ℓ_∞` with weights `1, 1.5, 2, …`, and a tridiagonal
/// quadratic norm.
pub fn space_catalog(dim: usize) -> Result<Vec<NormedSpace>> {
    let mut out = Vec::new();
    for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
        out.push(NormedSpace::lp(dim, p)?);
    }
    let weights: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * i as f64).collect();
    for p in [1.0, 3.0, f64::INFINITY] {
        out.push(NormedSpace::weighted(p, weights.clone())?);
    }
    let tridiagonal = DMatrix::from_fn(dim, dim, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -0.5,
        _ => 0.0,
    });
    out.push(NormedSpace::quadratic(tridiagonal)?);
    Ok(out)
}

/// Norm exponent in descriptors: a number, or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    Named(NamedExponent),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NamedExponent {
    #[serde(rename = "inf", alias = "infinity", alias = "Infinity")]
    Inf,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Named(NamedExponent::Inf) => f64::INFINITY,
        }
    }

    pub fn from_value(p: f64) -> Self {
        if p.is_infinite() {
            Exponent::Named(NamedExponent::Inf)
        } else {
            Exponent::Finite(p)
        }
    }
}

/// JSON form of a space, e.g. `{"dim": 3, "kind": "p", "p": 1.5}` or
/// `{"kind": "quadratic", "matrix": [[2, 0], [0, 1]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceDescriptor {
    P {
        dim: usize,
        p: Exponent,
    },
    Weighted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        p: Exponent,
        weights: Vec<f64>,
    },
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(with = "serde_util::matrix")]
        matrix: DMatrix<f64>,
    },
}

impl TryFrom<SpaceDescriptor> for NormedSpace {
    type Error = LabError;

    fn try_from(d: SpaceDescriptor) -> Result<Self> {
        let (space, dim) = match d {
            SpaceDescriptor::P { dim, p } => (NormedSpace::lp(dim, p.value())?, Some(dim)),
            SpaceDescriptor::Weighted { dim, p, weights } => {
                (NormedSpace::weighted(p.value(), weights)?, dim)
            }
            SpaceDescriptor::Quadratic { dim, matrix } => (NormedSpace::quadratic(matrix)?, dim),
        };
        if let Some(dim) = dim {
            check_dim(dim, space.dim)?;
        }
        Ok(space)
    }
}

impl From<NormedSpace> for SpaceDescriptor {
    fn from(s: NormedSpace) -> Self {
        match s.kind {
            NormKind::P(p) => SpaceDescriptor::P { dim: s.dim, p: Exponent::from_value(p) },
            NormKind::WeightedP { p, weights } => SpaceDescriptor::Weighted {
                dim: Some(s.dim),
                p: Exponent::from_value(p),
                weights,
            },
            NormKind::Quadratic(q) => {
                SpaceDescriptor::Quadratic { dim: Some(s.dim), matrix: q.matrix }
            }
        }
    }
}
