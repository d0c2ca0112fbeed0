//! Experiment configuration: JSON file, flag overrides, validation.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use widthlab::{ClassFamily, DecayFamily, Exponent};

use crate::CliError;

pub const DEFAULT_OUT: &str = "widthlab-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Runtime placement; not echoed, so outputs do not depend on it.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default = "yes")]
    pub plot: bool,
    pub experiment: Experiment,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Experiment {
    Approx(ApproxConfig),
    Widths(WidthsConfig),
    Pipeline(PipelineConfig),
    Catalog(CatalogConfig),
    Fit(FitConfig),
    Mz(MzConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Approx(_) => "approx",
            Experiment::Widths(_) => "widths",
            Experiment::Pipeline(_) => "pipeline",
            Experiment::Catalog(_) => "catalog",
            Experiment::Fit(_) => "fit",
            Experiment::Mz(_) => "mz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: DecayFamily,
    #[serde(default)]
    pub beta: f64,
    /// Overrides the default truncation.
    #[serde(default)]
    pub truncation: Option<usize>,
}

impl KernelConfig {
    pub fn build(&self) -> widthlab::Result<widthlab::MultiplierKernel> {
        let k = widthlab::MultiplierKernel::new(self.family.clone(), self.beta)?;
        match self.truncation {
            Some(t) => k.with_truncation(t),
            None => Ok(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    pub kernel: KernelConfig,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "two")]
    pub q: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn two() -> f64 {
    2.0
}

fn default_budget() -> usize {
    64
}

/// `ℓ_p` exponent written as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentArg(pub Exponent);

impl Serialize for ExponentArg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Exponent::Finite(p) => s.serialize_f64(p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExponentArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(ExponentArg(Exponent::Finite(p))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for ExponentArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inf" | "infinity" | "∞" => Ok(ExponentArg(Exponent::Infinity)),
            _ => s
                .parse::<f64>()
                .map(|p| ExponentArg(Exponent::Finite(p)))
                .map_err(|_| format!("exponent must be a number or \"inf\", got {s:?}")),
        }
    }
}

impl fmt::Display for ExponentArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthsConfig {
    pub m: usize,
    /// Subspace dimensions; all of `0..=m` when empty.
    #[serde(default)]
    pub n_list: Vec<usize>,
    pub p: ExponentArg,
    pub q: ExponentArg,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_inner_starts")]
    pub inner_starts: usize,
    /// Run the brute-force search when the exponents allow it.
    #[serde(default = "yes")]
    pub bruteforce: bool,
}

fn default_restarts() -> usize {
    16
}

fn default_inner_starts() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    /// Budget of the searched floor of `E_n`; zero disables the search.
    #[serde(default)]
    pub search_budget: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    /// A single class; the full standard grid when absent.
    #[serde(default)]
    pub class: Option<ClassFamily>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitConfig {
    Points { points: Vec<(f64, f64)> },
    Csv { path: PathBuf },
    ExactL2 { kernel: KernelConfig, n_list: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MzConfig {
    pub p_list: Vec<f64>,
    pub m_list: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    200
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_exponent(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 1.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} must satisfy 1 < {name} < ∞, got {v}")))
    }
}

fn check_n_list(list: &[usize]) -> Result<(), CliError> {
    if list.is_empty() {
        return Err(bad("n_list must not be empty"));
    }
    if list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("n_list must be strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.threads == Some(0) {
            return Err(bad("threads must be positive"));
        }
        match &self.experiment {
            Experiment::Approx(c) => {
                check_exponent("p", c.p)?;
                check_exponent("q", c.q)?;
                check_n_list(&c.n_list)?;
                if c.budget == 0 {
                    return Err(bad("budget must be positive"));
                }
                c.kernel.build().map_err(|e| bad(e.to_string()))?;
            }
            Experiment::Widths(c) => {
                if c.m == 0 {
                    return Err(bad("m must be positive"));
                }
                if !c.n_list.is_empty() {
                    check_n_list(&c.n_list)?;
                }
                if c.n_list.iter().any(|&n| n > c.m) {
                    return Err(bad("subspace dimensions must not exceed m"));
                }
                for (name, e) in [("p", c.p), ("q", c.q)] {
                    if let Exponent::Finite(v) = e.0 {
                        if !(v.is_finite() && v >= 1.0) {
                            return Err(bad(format!("{name} must be >= 1, got {v}")));
                        }
                    }
                }
                if c.bruteforce && c.restarts == 0 {
                    return Err(bad("restarts must be positive"));
                }
            }
            Experiment::Pipeline(c) => {
                check_exponent("p", c.p)?;
                check_exponent("q", c.q)?;
                check_n_list(&c.n_list)?;
                if !(c.gamma.is_finite() && c.gamma >= 0.0) {
                    return Err(bad(format!("gamma must be >= 0, got {}", c.gamma)));
                }
                if !(c.threshold.is_finite() && c.threshold >= 1.0) {
                    return Err(bad("threshold must be >= 1"));
                }
                if c.n_list[0] < 2 {
                    return Err(bad("pipeline needs n >= 2"));
                }
                if let Some(m) = c.m {
                    if m <= *c.n_list.last().unwrap() {
                        return Err(bad("m must exceed every n"));
                    }
                }
            }
            Experiment::Catalog(c) => {
                for (name, v) in [("p", c.p), ("q", c.q)] {
                    if let Some(v) = v {
                        check_exponent(name, v)?;
                    }
                }
            }
            Experiment::Fit(c) => match c {
                FitConfig::Points { points } if points.is_empty() => {
                    return Err(bad("points must not be empty"));
                }
                FitConfig::ExactL2 { kernel, n_list } => {
                    check_n_list(n_list)?;
                    kernel.build().map_err(|e| bad(e.to_string()))?;
                }
                _ => {}
            },
            Experiment::Mz(c) => {
                if c.p_list.is_empty() || c.m_list.is_empty() {
                    return Err(bad("p_list and m_list must not be empty"));
                }
                for &p in &c.p_list {
                    check_exponent("p", p)?;
                }
                if c.m_list.contains(&0) {
                    return Err(bad("degrees must be positive"));
                }
                if c.trials == 0 {
                    return Err(bad("trials must be positive"));
                }
            }
        }
        Ok(())
    }
}
