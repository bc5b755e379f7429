//! Run configuration: one JSON document with sections `problem`, `grid`,
//! `scheme`, `outputs` and the optional `simulate` and `verify` sections.

use std::path::PathBuf;

use jumpreach_core::hamiltonian::ShiftPolicy;
use jumpreach_core::{
    build_problem, AlphaControl, BetaPolicy, GridSpec, ModelError, ProblemDescription, ProblemSpec, SchemeParams,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    ParseError { line: usize, column: usize, message: String },
    #[error("unknown key `{key}` at `{path}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        path: String,
        key: String,
        suggestion: Option<String>,
    },
    #[error("invalid value at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemDescription,
    pub grid: GridSpec,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub safety: f64,
    pub delta: f64,
    /// Level-set tolerance; `None` picks `10⁻³ (1 + max terminal value)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub interpolate: bool,
    pub alpha: AlphaControl,
    pub beta: BetaPolicy,
    pub shift_policy: ShiftPolicy,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        let p = SchemeParams::default();
        Self {
            safety: p.safety,
            delta: p.delta,
            epsilon: None,
            interpolate: true,
            alpha: p.alpha,
            beta: p.beta,
            shift_policy: p.shift_policy,
        }
    }
}

impl SchemeConfig {
    pub fn params(&self) -> SchemeParams {
        SchemeParams {
            safety: self.safety,
            delta: self.delta,
            alpha: self.alpha,
            beta: self.beta,
            shift_policy: self.shift_policy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Gnuplot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
    /// Time levels between checkpoints of the `W` sweep.
    pub checkpoint_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Gnuplot],
            checkpoint_every: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPoint {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Monte Carlo estimates of `J̄` under a constant policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub points: Vec<StartPoint>,
    pub control: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_paths() -> usize {
    10_000
}

fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Lipschitz,
    StrictSubsolution,
    SignEquivalence,
    ShiftedIdentity,
    Dpp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Empty selects every check that applies to the grid.
    pub checks: Vec<Check>,
    pub nu: f64,
    pub sign_instances: usize,
    pub dpp_samples: usize,
    pub dpp_paths: usize,
    pub dpp_tolerance: f64,
    pub lipschitz_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            checks: Vec::new(),
            nu: 0.1,
            sign_instances: 1000,
            dpp_samples: 20,
            dpp_paths: 200,
            dpp_tolerance: 0.05,
            lipschitz_tolerance: 1e-6,
        }
    }
}

impl RunConfig {
    pub fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        build_problem(&self.problem).map_err(|e| match e {
            ModelError::MissingField(name) => ConfigError::SchemaViolation {
                path: format!("problem.{name}"),
                message: e.to_string(),
            },
            other => ConfigError::SchemaViolation {
                path: "problem".into(),
                message: other.to_string(),
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Semantic checks beyond the JSON schema.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let spec = self.problem_spec()?;
        let bad = |path: &str, message: String| ConfigError::SchemaViolation { path: path.into(), message };
        self.grid
            .validate(spec.dim_state())
            .map_err(|e| bad("grid", e.to_string()))?;
        let s = &self.scheme;
        if !(s.safety > 0.0 && s.safety <= 1.0) {
            return Err(bad("scheme.safety", format!("must lie in (0, 1], got {}", s.safety)));
        }
        if !(s.delta >= 0.0 && s.delta.is_finite()) {
            return Err(bad("scheme.delta", format!("must be nonnegative, got {}", s.delta)));
        }
        if let Some(eps) = s.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(bad("scheme.epsilon", format!("must be positive, got {eps}")));
            }
        }
        if let AlphaControl::Bounded { radius } = s.alpha {
            if !(radius >= 0.0 && radius.is_finite()) {
                return Err(bad("scheme.alpha.bounded.radius", format!("must be nonnegative, got {radius}")));
            }
        }
        if self.outputs.checkpoint_every == 0 {
            return Err(bad("outputs.checkpoint_every", "must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(bad("threads", "must be at least 1".into()));
        }
        if let Some(sim) = &self.simulate {
            if sim.n_paths < 2 {
                return Err(bad("simulate.n_paths", "need at least 2 paths".into()));
            }
            if !(sim.dt > 0.0) {
                return Err(bad("simulate.dt", format!("must be positive, got {}", sim.dt)));
            }
            if sim.control.len() != spec.controls()[0].len() {
                return Err(bad("simulate.control", "dimension differs from the control grid".into()));
            }
            for (i, p) in sim.points.iter().enumerate() {
                if p.a.len() != spec.dim_state() {
                    return Err(bad(&format!("simulate.points[{i}].a"), "wrong state dimension".into()));
                }
            }
        }
        if !(self.verify.nu >= 0.0) {
            return Err(bad("verify.nu", "must be nonnegative".into()));
        }
        Ok(())
    }
}

fn backticked(text: &str) -> Vec<String> {
    text.split('`').skip(1).step_by(2).map(str::to_string).collect()
}

fn closest(key: &str, candidates: &[String]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::damerau_levenshtein(key, c), c))
        .filter(|(d, c)| *d <= 2.max(c.len() / 3))
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c.clone())
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() || path == "." {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Parses and validates a configuration, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::ParseError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        if let Some(rest) = message.strip_prefix("unknown field ") {
            let names = backticked(rest);
            let key = names.first().cloned().unwrap_or_default();
            let parent = path
                .strip_suffix(key.as_str())
                .map(|p| p.trim_end_matches('.').to_string())
                .unwrap_or(path.clone());
            return ConfigError::UnknownKey {
                suggestion: closest(&key, &names[1..]),
                path: if parent.is_empty() { ".".into() } else { parent },
                key,
            };
        }
        if let Some(rest) = message.strip_prefix("missing field ") {
            let field = backticked(rest).into_iter().next().unwrap_or_default();
            return ConfigError::SchemaViolation {
                path: join(&path, &field),
                message,
            };
        }
        ConfigError::SchemaViolation { path, message }
    })?;
    config.validate()?;
    Ok(config)
}
