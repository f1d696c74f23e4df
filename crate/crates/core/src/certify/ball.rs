use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::serde_util;
use crate::spaces::{NormKind, NormedSpace, Vector};

/// Fraction of the radius actually sampled, keeping samples inside the open ball.
pub const SAMPLING_SHRINK: f64 = 0.999;

/// A ball `{x : ‖x − center‖ < radius}` in a normed space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BallRepr", into = "BallRepr")]
pub struct Ball {
    center: Vector,
    radius: f64,
    space: NormedSpace,
    /// Maps the Euclidean unit ball onto the unit ball of a quadratic norm.
    ellipsoid: Option<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallRepr {
    #[serde(with = "serde_util::vector")]
    center: Vector,
    radius: f64,
    space: NormedSpace,
}

impl TryFrom<BallRepr> for Ball {
    type Error = LabError;
    fn try_from(r: BallRepr) -> Result<Self> {
        Ball::new(r.center, r.radius, r.space)
    }
}

impl From<Ball> for BallRepr {
    fn from(b: Ball) -> Self {
        BallRepr { center: b.center, radius: b.radius, space: b.space }
    }
}

impl Ball {
    pub fn new(center: Vector, radius: f64, space: NormedSpace) -> Result<Self> {
        check_dim(space.dim(), center.len())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LabError::InvalidArgument(format!("ball radius must be positive and finite, got {radius}")));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidArgument("ball center has non-finite coordinates".into()));
        }
        let ellipsoid = match space.kind() {
            NormKind::Quadratic(q) => {
                let l = q.matrix().clone().cholesky().ok_or(LabError::Singular)?.l();
                Some(l.transpose().try_inverse().ok_or(LabError::Singular)?)
            }
            _ => None,
        };
        Ok(Self { center, radius, space, ellipsoid })
    }

    /// Unit ball of `space` centered at the origin.
    pub fn unit(space: NormedSpace) -> Self {
        let n = space.dim();
        Self::new(Vector::zeros(n), 1.0, space).expect("unit ball is valid")
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn space(&self) -> &NormedSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// The same ball shifted by `offset`.
    pub fn translated(&self, offset: &Vector) -> Result<Self> {
        check_dim(self.dim(), offset.len())?;
        Self::new(&self.center + offset, self.radius, self.space.clone())
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.space.norm_of((x - &self.center).as_slice()) < self.radius
    }

    /// A uniform point of the closed ball of radius `0.999·radius`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let u = self.unit_sample(rng);
        &self.center + u * (SAMPLING_SHRINK * self.radius)
    }

    /// Uniform point of the unit ball of the space norm.
    ///
    /// For `ℓ_p` with finite `p` this draws `g_i` with density `∝ exp(−|t|^p)`
    /// and `z ~ Exp(1)` and returns `g / (Σ|g_i|^p + z)^{1/p}`, which is exactly
    /// uniform in the `ℓ_p` ball.
    fn unit_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let n = self.dim();
        match self.space.kind() {
            NormKind::Quadratic(_) => {
                let w = lp_ball_sample(n, 2.0, rng);
                self.ellipsoid.as_ref().expect("built in new") * w
            }
            _ => {
                let (p, scale) = self.space.diagonal_scaling().expect("diagonal norms have a scaling");
                let u = lp_ball_sample(n, p, rng);
                Vector::from_fn(n, |i, _| u[i] / scale[i])
            }
        }
    }
}

fn lp_ball_sample<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vector {
    if p.is_infinite() {
        return Vector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    }
    let g: Vector = if p == 2.0 {
        // density ∝ exp(−t²) is N(0, ½)
        Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2)
    } else {
        let gamma = Gamma::new(1.0 / p, 1.0).expect("positive shape");
        Vector::from_fn(n, |_, _| {
            let magnitude = gamma.sample(rng).powf(1.0 / p);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
    };
    let z: f64 = Exp1.sample(rng);
    let total: f64 = g.iter().map(|v| v.abs().powf(p)).sum::<f64>() + z;
    g / total.powf(1.0 / p)
}
