use std::collections::BTreeMap;
use std::fmt;

use hilbert_lab::certify::{CatalogFunction, Method};
use hilbert_lab::fenchel::ScalarFunction;
use hilbert_lab::spaces::Exponent;
use hilbert_lab::NormedSpace;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    TypeCotype,
    Certify,
    ExtractIp,
    Conjugate,
    Growth,
    BmBound,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TypeCotype => "type-cotype",
            Command::Certify => "certify",
            Command::ExtractIp => "extract-ip",
            Command::Conjugate => "conjugate",
            Command::Growth => "growth",
            Command::BmBound => "bm-bound",
        }
    }

    /// Budget keys the command reads.
    pub fn budget_keys(self) -> &'static [&'static str] {
        match self {
            Command::TypeCotype => &["family_size", "search"],
            Command::Certify => &["samples"],
            Command::ExtractIp => &["probes", "search"],
            Command::Conjugate => &["pairs", "samples"],
            Command::Growth => &["search", "restarts"],
            Command::BmBound => &["family_size", "search", "restarts"],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Ball in the configured space. The center defaults to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    pub radius: f64,
}

/// A sampled 1-D function and the dual grid for its transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub function: String,
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub dual_lo: f64,
    pub dual_hi: f64,
    pub dual_nodes: usize,
    /// Dual nodes for the biconjugate; defaults to `dual_nodes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biconjugate_nodes: Option<usize>,
}

/// Descent-inequality sweep for a conjugate `f*` over pairs drawn uniformly from
/// the box `[lo, hi]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentSpec {
    pub function: String,
    pub l: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Filled from the subcommand when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<NormedSpace>,
    /// Catalog name, e.g. `quadratic:[[1,0],[0,4]]` or `logsumexp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    /// Rows of a linear operator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<BallSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub budgets: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Exponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    /// Rows of a quadratic form whose conjugate is checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descent: Option<DescentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parses JSON text; syntax and type errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| config_error(format!("invalid config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// Binds the config to `command`, failing when it names a different one.
    pub fn bind(mut self, command: Command) -> Result<Self, CliError> {
        match self.command {
            Some(c) if c != command => {
                return Err(config_error(format!("config is for `{c}` but the subcommand is `{command}`")))
            }
            _ => self.command = Some(command),
        }
        Ok(self)
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| config_error("config names no command"))
    }

    pub fn budget(&self, key: &str, default: usize) -> usize {
        self.budgets.get(key).copied().unwrap_or(default)
    }

    pub fn space(&self) -> Result<&NormedSpace, CliError> {
        self.space.as_ref().ok_or_else(|| config_error("missing field `space`"))
    }

    pub fn catalog_function(&self) -> Result<Option<CatalogFunction>, CliError> {
        let Some(name) = &self.function else { return Ok(None) };
        let dim = self.space()?.dim();
        CatalogFunction::parse(name, dim)
            .map(Some)
            .map_err(|e| config_error(format!("field `function`: {e}")))
    }

    /// Checks required fields, budget keys and catalog names for the bound command.
    pub fn validate(&self) -> Result<(), CliError> {
        let command = self.command()?;
        for key in self.budgets.keys() {
            if !command.budget_keys().contains(&key.as_str()) {
                return Err(config_error(format!(
                    "unknown budget `{key}` for `{command}`; expected one of {:?}",
                    command.budget_keys()
                )));
            }
        }
        for (key, value) in &self.budgets {
            if *value == 0 {
                return Err(config_error(format!("budget `{key}` must be positive")));
            }
        }
        if let Some(ball) = &self.ball {
            if !(ball.radius > 0.0 && ball.radius.is_finite()) {
                return Err(config_error(format!("ball radius must be positive, got {}", ball.radius)));
            }
            if let (Some(center), Some(space)) = (&ball.center, &self.space) {
                if center.len() != space.dim() {
                    return Err(config_error(format!(
                        "ball center has {} coordinates but the space has dimension {}",
                        center.len(),
                        space.dim()
                    )));
                }
            }
        }
        match command {
            Command::TypeCotype | Command::BmBound => {
                self.space()?;
            }
            Command::Certify | Command::ExtractIp => {
                let space = self.space()?;
                match (&self.function, &self.operator) {
                    (Some(_), Some(_)) => return Err(config_error("give either `function` or `operator`, not both")),
                    (None, None) => return Err(config_error("missing field `function` or `operator`")),
                    (Some(_), None) => {
                        self.catalog_function()?;
                    }
                    (None, Some(rows)) => {
                        if rows.len() != space.dim() || rows.iter().any(|r| r.len() != space.dim()) {
                            return Err(config_error(format!(
                                "field `operator` must be a {0}x{0} matrix",
                                space.dim()
                            )));
                        }
                    }
                }
            }
            Command::Conjugate => {
                if self.quadratic.is_none() && self.grid.is_none() && self.descent.is_none() {
                    return Err(config_error("conjugate needs at least one of `quadratic`, `grid`, `descent`"));
                }
                if let Some(grid) = &self.grid {
                    ScalarFunction::parse(&grid.function).map_err(|e| config_error(format!("field `grid.function`: {e}")))?;
                }
                if let Some(descent) = &self.descent {
                    let dim = self.space.as_ref().map_or(1, NormedSpace::dim);
                    let f = CatalogFunction::parse(&descent.function, dim)
                        .map_err(|e| config_error(format!("field `descent.function`: {e}")))?;
                    if self.ball.is_some() && f.conjugate().is_none() {
                        return Err(config_error(format!(
                            "`descent.function` {} has no catalog conjugate for the strong-convexity check",
                            descent.function
                        )));
                    }
                    if !(descent.lo < descent.hi) {
                        return Err(config_error("`descent.lo` must be below `descent.hi`"));
                    }
                }
            }
            Command::Growth => {
                if self.p.is_none() {
                    return Err(config_error("missing field `p`"));
                }
                match &self.dims {
                    None => return Err(config_error("missing field `dims`")),
                    Some(d) if d.is_empty() || d.contains(&0) => {
                        return Err(config_error("`dims` must list positive dimensions"))
                    }
                    _ => {}
                }
            }
        }
        if self.format == Some(Format::Csv)
            && matches!(command, Command::Conjugate)
            && self.grid.is_none()
        {
            return Err(config_error("csv output of `conjugate` needs a `grid`"));
        }
        Ok(())
    }
}
