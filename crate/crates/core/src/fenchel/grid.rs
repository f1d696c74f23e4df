use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Samples of a function of one variable at `N ≥ 2` uniform nodes
/// `lo + i·(hi − lo)/(N − 1)`. Values are finite or `+∞`.
///
/// Serializes as `{"lo": …, "hi": …, "values": […]}` with `+∞` written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridFunction {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    lo: f64,
    hi: f64,
    values: Vec<Option<f64>>,
}

impl TryFrom<GridRepr> for GridFunction {
    type Error = LabError;
    fn try_from(r: GridRepr) -> Result<Self> {
        GridFunction::new(r.lo, r.hi, r.values.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect())
    }
}

impl From<GridFunction> for GridRepr {
    fn from(g: GridFunction) -> Self {
        GridRepr {
            lo: g.lo,
            hi: g.hi,
            values: g.values.into_iter().map(|v| v.is_finite().then_some(v)).collect(),
        }
    }
}

fn uniform_node(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

impl GridFunction {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(LabError::InvalidArgument(format!("grid needs finite lo < hi, got [{lo}, {hi}]")));
        }
        if values.len() < 2 {
            return Err(LabError::InvalidArgument(format!("grid needs at least 2 values, got {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
            return Err(LabError::InvalidArgument(format!("grid values must be finite or +inf, got {v}")));
        }
        Ok(Self { lo, hi, values })
    }

    /// Samples `f` at `n` uniform nodes of `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidArgument(format!("grid needs at least 2 nodes, got {n}")));
        }
        Self::new(lo, hi, (0..n).map(|i| f(uniform_node(lo, hi, n, i))).collect())
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize) -> f64 {
        uniform_node(self.lo, self.hi, self.len(), i)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// `node,value` rows with a header, `.` decimals and LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,value\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.node(i), v).expect("writing to a String");
        }
        out
    }

    /// Slopes of the first and last edge of the lower convex hull of the finite
    /// samples: the range of dual slopes that the grid can resolve.
    /// `None` when fewer than two samples are finite.
    pub fn hull_slopes(&self) -> Option<(f64, f64)> {
        let hull = lower_hull(&self.finite_points());
        if hull.len() < 2 {
            return None;
        }
        let slope = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
        Some((slope(hull[0], hull[1]), slope(hull[hull.len() - 2], hull[hull.len() - 1])))
    }

    fn finite_points(&self) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| (self.node(i), v))
            .collect()
    }

    /// Whether the samples are finite and strictly convex with second differences
    /// large enough that the transform maximizer moves monotonically even in
    /// floating point, for dual nodes of magnitude at most `smax`.
    fn walkable(&self, smax: f64) -> bool {
        if self.values.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let xmax = self.lo.abs().max(self.hi.abs());
        let gmax = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let margin = 16.0 * f64::EPSILON * (smax * xmax + gmax);
        self.values.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] > margin)
    }
}

/// Lower convex hull of points sorted by `x` (monotone chain).
pub(crate) fn lower_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformMethod {
    /// `O(N·M)` scan of every node for every dual node.
    Scan,
    /// `O(N + M)` walk of a monotone maximizer.
    LinearTime,
}

/// A discrete conjugate with per-node reliability flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conjugate {
    pub grid: GridFunction,
    /// `true` at dual nodes outside the hull slope range, where the supremum is
    /// attained at a grid endpoint and only reflects the grid's extent.
    pub extrapolated: Vec<bool>,
    pub method: TransformMethod,
}

/// Discrete Legendre–Fenchel transform `g*(s) = max_i s·x_i − g(x_i)` at `m`
/// uniform dual nodes of `[dual_lo, dual_hi]`.
///
/// When the samples are strictly convex (with a margin above rounding) the
/// maximizer is found by a monotone walk in `O(N + M)`; otherwise every node is
/// scanned. Both paths select the first maximizing node and compute the value as
/// `s·x_i − g_i`, so they agree bit for bit.
pub fn lf_transform(g: &GridFunction, dual_lo: f64, dual_hi: f64, m: usize) -> Result<Conjugate> {
    if m < 2 {
        return Err(LabError::InvalidArgument(format!("dual grid needs at least 2 nodes, got {m}")));
    }
    if !(dual_lo.is_finite() && dual_hi.is_finite() && dual_lo < dual_hi) {
        return Err(LabError::InvalidArgument(format!(
            "dual grid needs finite lo < hi, got [{dual_lo}, {dual_hi}]"
        )));
    }
    if g.values.iter().all(|v| v.is_infinite()) {
        return Err(LabError::EmptyDomain);
    }
    let x = g.nodes();
    let smax = dual_lo.abs().max(dual_hi.abs());
    let (values, method) = if g.walkable(smax) {
        (walk(&x, &g.values, dual_lo, dual_hi, m), TransformMethod::LinearTime)
    } else {
        (scan(&x, &g.values, dual_lo, dual_hi, m), TransformMethod::Scan)
    };
    let slopes = g.hull_slopes();
    let grid = GridFunction::new(dual_lo, dual_hi, values)?;
    let extrapolated = (0..m)
        .map(|j| {
            let s = grid.node(j);
            slopes.is_none_or(|(lo, hi)| s < lo || s > hi)
        })
        .collect();
    Ok(Conjugate { grid, extrapolated, method })
}

fn scan(x: &[f64], g: &[f64], lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..m)
        .into_par_iter()
        .map(|j| {
            let s = uniform_node(lo, hi, m, j);
            let mut best = f64::NEG_INFINITY;
            for (xi, gi) in x.iter().zip(g) {
                let v = s * xi - gi;
                if v > best {
                    best = v;
                }
            }
            best
        })
        .collect()
}

fn walk(x: &[f64], g: &[f64], lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let n = x.len();
    let mut k = 0;
    (0..m)
        .map(|j| {
            let s = uniform_node(lo, hi, m, j);
            let v = |i: usize| s * x[i] - g[i];
            while k > 0 && v(k - 1) >= v(k) {
                k -= 1;
            }
            while k + 1 < n && v(k + 1) > v(k) {
                k += 1;
            }
            v(k)
        })
        .collect()
}

/// `g**` on the nodes of `g`, through a dual grid of `m` nodes spanning the hull
/// slopes of `g`. Never exceeds `g` beyond rounding; equals `g` up to the dual
/// grid resolution when `g` is convex on its nodes.
pub fn biconjugate(g: &GridFunction, m: usize) -> Result<GridFunction> {
    let (s_lo, s_hi) = match g.hull_slopes() {
        Some((a, b)) if b > a => (a, b),
        Some((a, _)) => (a, a + 1.0),
        None => {
            if g.values.iter().all(|v| v.is_infinite()) {
                return Err(LabError::EmptyDomain);
            }
            (-1.0, 1.0)
        }
    };
    let conj = lf_transform(g, s_lo, s_hi, m)?;
    Ok(lf_transform(&conj.grid, g.lo, g.hi, g.len())?.grid)
}

/// One-dimensional functions with closed-form conjugates, for grid experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarFunction {
    HalfSquare,
    Abs,
    Affine { slope: f64, offset: f64 },
    Exp,
    Softplus,
    Quartic,
    DoubleWell,
}

impl ScalarFunction {
    /// Names: `half-square`, `abs`, `affine:<a>,<b>`, `exp`, `softplus`, `quartic`, `double-well`.
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        if let Some(args) = name.strip_prefix("affine:") {
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| LabError::InvalidArgument(format!("affine coefficient `{s}`")))
            };
            return match parts.as_slice() {
                [a, b] => Ok(Self::Affine { slope: parse(a)?, offset: parse(b)? }),
                _ => Err(LabError::InvalidArgument("affine needs `affine:<slope>,<offset>`".into())),
            };
        }
        Ok(match name {
            "half-square" => Self::HalfSquare,
            "abs" => Self::Abs,
            "exp" => Self::Exp,
            "softplus" => Self::Softplus,
            "quartic" => Self::Quartic,
            "double-well" => Self::DoubleWell,
            other => return Err(LabError::UnknownCatalogEntry(other.to_string())),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Self::HalfSquare => "half-square".into(),
            Self::Abs => "abs".into(),
            Self::Affine { slope, offset } => format!("affine:{slope},{offset}"),
            Self::Exp => "exp".into(),
            Self::Softplus => "softplus".into(),
            Self::Quartic => "quartic".into(),
            Self::DoubleWell => "double-well".into(),
        }
    }

    pub fn all_convex() -> Vec<Self> {
        vec![
            Self::HalfSquare,
            Self::Abs,
            Self::Affine { slope: 0.5, offset: -1.0 },
            Self::Exp,
            Self::Softplus,
            Self::Quartic,
        ]
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Self::DoubleWell)
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::HalfSquare => 0.5 * x * x,
            Self::Abs => x.abs(),
            Self::Affine { slope, offset } => slope * x + offset,
            Self::Exp => x.exp(),
            Self::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Self::Quartic => x.powi(4),
            Self::DoubleWell => x.powi(4) - x * x,
        }
    }

    /// Conjugate over the whole real line, `+∞` outside its domain.
    /// `None` when no closed form is known.
    pub fn conjugate(&self, s: f64) -> Option<f64> {
        let xlogx = |t: f64| if t == 0.0 { 0.0 } else { t * t.ln() };
        Some(match *self {
            Self::HalfSquare => 0.5 * s * s,
            Self::Abs => {
                if s.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::Affine { slope, offset } => {
                if s == slope {
                    -offset
                } else {
                    f64::INFINITY
                }
            }
            Self::Exp => {
                if s < 0.0 {
                    f64::INFINITY
                } else {
                    xlogx(s) - s
                }
            }
            Self::Softplus => {
                if !(0.0..=1.0).contains(&s) {
                    f64::INFINITY
                } else {
                    xlogx(s) + xlogx(1.0 - s)
                }
            }
            Self::Quartic => 3.0 * s.abs().powf(4.0 / 3.0) / 4f64.powf(4.0 / 3.0),
            Self::DoubleWell => return None,
        })
    }

    /// The point where the supremum defining the conjugate at `s` is attained.
    pub fn conjugate_argmax(&self, s: f64) -> Option<f64> {
        match *self {
            Self::HalfSquare => Some(s),
            Self::Exp if s > 0.0 => Some(s.ln()),
            Self::Softplus if s > 0.0 && s < 1.0 => Some((s / (1.0 - s)).ln()),
            Self::Quartic => Some((s / 4.0).cbrt()),
            _ => None,
        }
    }

    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Result<GridFunction> {
        GridFunction::from_fn(lo, hi, n, |x| self.value(x))
    }
}

/// Largest deviation of a grid conjugate from the closed form over the dual nodes
/// whose maximizer lies inside `[lo, hi]` of the primal grid (other nodes cannot
/// be represented). `None` when no node qualifies or no closed form exists.
pub fn conjugate_error(f: ScalarFunction, primal: &GridFunction, conj: &Conjugate) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for j in 0..conj.grid.len() {
        let s = conj.grid.node(j);
        let Some(x) = f.conjugate_argmax(s) else { continue };
        if x < primal.lo() || x > primal.hi() || conj.extrapolated[j] {
            continue;
        }
        let exact = f.conjugate(s)?;
        let err = (conj.grid.values()[j] - exact).abs();
        worst = Some(worst.map_or(err, |w: f64| w.max(err)));
    }
    worst
}
