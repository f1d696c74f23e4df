use hilbert_lab::certify::{certify, operator_certify, Ball, CatalogFunction, CertifyConfig, LinearOperator};
use hilbert_lab::fenchel::{
    biconjugate, conjugate_error, conjugate_pair_residual, descent_residual, lf_transform,
    strong_convexity_from_conjugate, ScalarFunction,
};
use hilbert_lab::quadratic::{
    check_sandwich, conjugate_quadratic, extract_inner_product, identity_conditioning, inverse_pair_residual,
    min_conditioning, QuadraticForm, Source,
};
use hilbert_lab::rademacher::{estimate_constant, Mode};
use hilbert_lab::rng::SeedStream;
use hilbert_lab::{NormedSpace, Vector};
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};
use crate::CliError;

/// Largest dimension for which `growth` runs the quadratic search.
pub const GROWTH_SEARCH_LIMIT: usize = 6;

/// Residuals above this count as descent violations.
pub const DESCENT_TOLERANCE: f64 = 1e-9;

const DEFAULT_SEARCH: usize = 2000;
const DEFAULT_GROWTH_SEARCH: usize = 10_000;
const DEFAULT_RESTARTS: usize = 4;
const DEFAULT_SAMPLES: usize = 10_000;
const DEFAULT_PROBES: usize = 1000;
const DEFAULT_PAIRS: usize = 1000;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(CliError::Config(format!("field `{field}` must be a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_row_iterator(n, rows[0].len(), rows.iter().flatten().copied()))
}

/// Seed for a named sub-operation: streams are keyed by command and sub-op so new
/// sub-ops never shift existing ones.
fn stream(config: &RunConfig, sub: &str) -> SeedStream {
    let command = config.command.map_or("", |c| c.name());
    SeedStream::new(config.seed).derive(&format!("{command}/{sub}"))
}

fn ball(config: &RunConfig, space: &NormedSpace) -> Result<Ball, CliError> {
    let (center, radius) = match &config.ball {
        Some(b) => (b.center.clone().unwrap_or_else(|| vec![0.0; space.dim()]), b.radius),
        None => (vec![0.0; space.dim()], 1.0),
    };
    Ok(Ball::new(Vector::from_vec(center), radius, space.clone())?)
}

/// Runs a validated config and returns the command's results payload.
pub fn run(config: &RunConfig) -> Result<Value, CliError> {
    config.validate()?;
    match config.command()? {
        Command::TypeCotype => type_cotype(config),
        Command::Certify => cmd_certify(config),
        Command::ExtractIp => extract_ip(config),
        Command::Conjugate => conjugate(config),
        Command::Growth => growth(config),
        Command::BmBound => bm_bound(config),
    }
}

fn rademacher_bounds(config: &RunConfig, space: &NormedSpace) -> Result<Value, CliError> {
    let size = config.budget("family_size", space.dim());
    let search = config.budget("search", DEFAULT_SEARCH);
    let t = estimate_constant(space, Mode::Type2, size, search, stream(config, "type2").key())?;
    let c = estimate_constant(space, Mode::Cotype2, size, search, stream(config, "cotype2").key())?;
    Ok(json!({
        "type2": to_value(&t),
        "cotype2": to_value(&c),
        "product": t.ratio * c.ratio,
        "lower_bound": t.ratio.max(c.ratio),
    }))
}

fn type_cotype(config: &RunConfig) -> Result<Value, CliError> {
    rademacher_bounds(config, config.space()?)
}

fn cmd_certify(config: &RunConfig) -> Result<Value, CliError> {
    let space = config.space()?;
    let ball = ball(config, space)?;
    let mut settings = CertifyConfig::new(config.budget("samples", DEFAULT_SAMPLES), stream(config, "sampling").key());
    if let Some(methods) = &config.methods {
        settings = settings.with_methods(methods);
    }
    let constants = match (config.catalog_function()?, &config.operator) {
        (Some(f), _) => certify(&f, &ball, &settings)?,
        (None, Some(rows)) => operator_certify(&LinearOperator::new(matrix(rows, "operator")?)?, &ball, &settings)?,
        (None, None) => unreachable!("validated"),
    };
    Ok(json!({
        "constants": to_value(&constants),
        "ratio": constants.ratio(),
        "sqrt_ratio": constants.sqrt_ratio(),
    }))
}

fn extract_ip(config: &RunConfig) -> Result<Value, CliError> {
    let space = config.space()?;
    let point = ball(config, space)?.center().clone();
    let search = config.budget("search", DEFAULT_SEARCH);
    let seed = stream(config, "extract").key();
    let cert = match (config.catalog_function()?, &config.operator) {
        (Some(f), _) => extract_inner_product(Source::Function(&f), space, &point, search, seed)?,
        (None, Some(rows)) => {
            let op = LinearOperator::new(matrix(rows, "operator")?)?;
            extract_inner_product(Source::Operator(&op), space, &point, search, seed)?
        }
        (None, None) => unreachable!("validated"),
    };
    let probes = config.budget("probes", DEFAULT_PROBES);
    let sandwich = check_sandwich(&cert, space, probes, stream(config, "probes").key())?;
    Ok(json!({
        "certificate": to_value(&cert),
        "sandwich": to_value(&sandwich),
        "equivalence": [cert.mu.sqrt(), cert.l.sqrt()],
    }))
}

fn conjugate(config: &RunConfig) -> Result<Value, CliError> {
    let mut out = serde_json::Map::new();
    if let Some(rows) = &config.quadratic {
        let a = QuadraticForm::new(matrix(rows, "quadratic")?)?;
        let b = conjugate_quadratic(&a)?;
        let f = CatalogFunction::quadratic(a.clone());
        let fstar = CatalogFunction::quadratic(b.clone());
        let point = match &config.ball {
            Some(spec) => spec.center.clone().map_or_else(|| Vector::zeros(a.dim()), Vector::from_vec),
            None => Vector::zeros(a.dim()),
        };
        out.insert(
            "quadratic".into(),
            json!({
                "form": to_value(&a),
                "conjugate": to_value(&b),
                "inverse_pair_residual": inverse_pair_residual(&a, &b)?,
                "finite_difference_residual": conjugate_pair_residual(&f, &fstar, &point)?,
                "point": point.as_slice(),
            }),
        );
    }
    if let Some(spec) = &config.grid {
        let f = ScalarFunction::parse(&spec.function)?;
        let g = f.sample(spec.lo, spec.hi, spec.nodes)?;
        let conj = lf_transform(&g, spec.dual_lo, spec.dual_hi, spec.dual_nodes)?;
        let gg = biconjugate(&g, spec.biconjugate_nodes.unwrap_or(spec.dual_nodes))?;
        let biconjugate_error = gg
            .values()
            .iter()
            .zip(g.values())
            .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
            .fold(0.0, f64::max);
        out.insert(
            "grid".into(),
            json!({
                "function": f.name(),
                "method": to_value(&conj.method),
                "max_error": conjugate_error(f, &g, &conj),
                "reliable_nodes": conj.extrapolated.iter().filter(|e| !**e).count(),
                "biconjugate_error": biconjugate_error,
                "convex": f.is_convex(),
                "conjugate": to_value(&conj),
            }),
        );
    }
    if let Some(spec) = &config.descent {
        let space = match &config.space {
            Some(s) => s.clone(),
            None => NormedSpace::euclidean(1)?,
        };
        let fstar = CatalogFunction::parse(&spec.function, space.dim())?;
        let pairs = config.budget("pairs", DEFAULT_PAIRS);
        let mut rng = stream(config, "descent").rng();
        let mut violations = 0;
        let mut worst = None;
        for _ in 0..pairs {
            let mut draw = || Vector::from_fn(space.dim(), |_, _| rng.random_range(spec.lo..=spec.hi));
            let (x, y) = (draw(), draw());
            let report = descent_residual(&fstar, &space, &x, &y, spec.l)?;
            if report.residual > DESCENT_TOLERANCE {
                violations += 1;
            }
            if worst.as_ref().is_none_or(|w: &hilbert_lab::fenchel::DescentReport| report.residual > w.residual) {
                worst = Some(report);
            }
        }
        let mut descent = json!({
            "function": spec.function,
            "l": spec.l,
            "pairs": pairs,
            "violations": violations,
            "worst": to_value(&worst),
        });
        if config.ball.is_some() {
            let f = fstar.conjugate().expect("validated");
            let primal = space.dual_space();
            let ball = ball(config, &primal)?;
            let samples = config.budget("samples", DEFAULT_SAMPLES);
            let check = strong_convexity_from_conjugate(&f, &ball, spec.l, samples, stream(config, "strong-convexity").key())?;
            descent["strong_convexity"] = to_value(&check);
        }
        out.insert("descent".into(), descent);
    }
    Ok(Value::Object(out))
}

/// One row of the growth table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub identity_ratio: f64,
    pub searched_ratio: Option<f64>,
    pub sqrt_ratio: f64,
}

fn growth(config: &RunConfig) -> Result<Value, CliError> {
    let p = config.p.expect("validated").value();
    let search = config.budget("search", DEFAULT_GROWTH_SEARCH);
    let restarts = config.budget("restarts", DEFAULT_RESTARTS);
    let mut rows = Vec::new();
    let mut witnesses = Vec::new();
    for &n in config.dims.as_ref().expect("validated") {
        let space = NormedSpace::lp(n, p)?;
        let identity = identity_conditioning(&space, search, stream(config, "identity").index(n as u64).key())?;
        let searched = if n <= GROWTH_SEARCH_LIMIT {
            Some(min_conditioning(&space, search, restarts, stream(config, "search").index(n as u64).key())?)
        } else {
            None
        };
        let best = searched.as_ref().map_or(identity.ratio, |s| s.ratio.min(identity.ratio));
        rows.push(GrowthRow {
            n,
            identity_ratio: identity.ratio,
            searched_ratio: searched.as_ref().map(|s| s.ratio),
            sqrt_ratio: best.sqrt(),
        });
        witnesses.push(json!({ "n": n, "identity": to_value(&identity), "searched": to_value(&searched) }));
    }
    Ok(json!({ "p": to_value(&config.p), "rows": to_value(&rows), "witnesses": witnesses }))
}

fn bm_bound(config: &RunConfig) -> Result<Value, CliError> {
    let space = config.space()?;
    let rademacher = rademacher_bounds(config, space)?;
    let search = config.budget("search", DEFAULT_SEARCH);
    let restarts = config.budget("restarts", DEFAULT_RESTARTS);
    let identity = identity_conditioning(space, search, stream(config, "identity").key())?;
    let searched = min_conditioning(space, search, restarts, stream(config, "search").key())?;
    let lower = rademacher["lower_bound"].as_f64().expect("numeric bound");
    let upper = searched.ratio.min(identity.ratio).sqrt();
    Ok(json!({
        "rademacher": rademacher,
        "identity": to_value(&identity),
        "searched": to_value(&searched),
        "lower_bound": lower,
        "upper_bound": upper,
        "consistent": lower <= upper + 1e-6,
    }))
}
