//! Command-line flags and their merge onto a loaded configuration.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use widthlab::{ClassFamily, DecayFamily};

use crate::config::{
    ApproxConfig, CatalogConfig, Experiment, ExperimentConfig, ExponentArg, FitConfig,
    KernelConfig, MzConfig, PipelineConfig, WidthsConfig,
};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "widthlab", version, about = "Width and trigonometric approximation experiments")]
pub struct Cli {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "WIDTHLAB_THREADS")]
    pub threads: Option<usize>,
    /// Skip plot.svg.
    #[arg(long, global = true)]
    pub no_plot: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Upper and searched values of E_n for a multiplier class.
    Approx(ApproxArgs),
    /// Widths of finite-dimensional balls.
    Widths(WidthsArgs),
    /// Lower-bound chain and optimality gap for the log-decay class.
    Pipeline(PipelineArgs),
    /// Rate and verdict lookup.
    Catalog(CatalogArgs),
    /// Fit a measured sequence to the rate families.
    Fit(FitArgs),
    /// Sampling-inequality ratio statistics.
    Mz(MzArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Approx(_) => "approx",
            Command::Widths(_) => "widths",
            Command::Pipeline(_) => "pipeline",
            Command::Catalog(_) => "catalog",
            Command::Fit(_) => "fit",
            Command::Mz(_) => "mz",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelKind {
    Polynomial,
    PolyLog,
    Exponential,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Phase of the multiplier.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub truncation: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated degrees.
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WidthsArgs {
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub p: Option<ExponentArg>,
    #[arg(long)]
    pub q: Option<ExponentArg>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub inner_starts: Option<usize>,
    #[arg(long)]
    pub no_bruteforce: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Fixed ambient dimension instead of ceil(n^{q/2}).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub search_budget: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassKind {
    Sobolev,
    Exponential,
    LogDecay,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    #[arg(long, value_enum)]
    pub family: Option<ClassKind>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV file with columns `n,value`.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MzArgs {
    #[arg(long = "p", value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    #[arg(long = "m", value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
}

fn missing(field: &str, command: &str) -> CliError {
    CliError::Config(format!("{command}: `{field}` is required (flag or config)"))
}

fn merge_kernel(args: &KernelArgs, base: Option<&KernelConfig>) -> Result<KernelConfig, CliError> {
    let need = |v: Option<f64>, old: Option<f64>, name: &str| {
        v.or(old).ok_or_else(|| missing(name, "approx"))
    };
    let family = match (args.kernel, base.map(|b| &b.family)) {
        (None, None) => return Err(missing("kernel", "approx")),
        (None, Some(f)) => match f {
            DecayFamily::Polynomial { r } => DecayFamily::Polynomial { r: args.r.unwrap_or(*r) },
            DecayFamily::PolyLog { rho, gamma } => DecayFamily::PolyLog {
                rho: args.rho.unwrap_or(*rho),
                gamma: args.gamma.unwrap_or(*gamma),
            },
            DecayFamily::Exponential { mu, r } => DecayFamily::Exponential {
                mu: args.mu.unwrap_or(*mu),
                r: args.r.unwrap_or(*r),
            },
            table => table.clone(),
        },
        (Some(kind), old) => {
            let old_r = match old {
                Some(DecayFamily::Polynomial { r }) | Some(DecayFamily::Exponential { r, .. }) => Some(*r),
                _ => None,
            };
            match kind {
                KernelKind::Polynomial => DecayFamily::Polynomial {
                    r: need(args.r, old_r, "r")?,
                },
                KernelKind::PolyLog => DecayFamily::PolyLog {
                    rho: args.rho.unwrap_or(0.0),
                    gamma: need(args.gamma, None, "gamma")?,
                },
                KernelKind::Exponential => DecayFamily::Exponential {
                    mu: need(args.mu, None, "mu")?,
                    r: need(args.r, old_r, "r")?,
                },
            }
        }
    };
    Ok(KernelConfig {
        family,
        beta: args.beta.or(base.map(|b| b.beta)).unwrap_or(0.0),
        truncation: args.truncation.or(base.and_then(|b| b.truncation)),
    })
}

fn merge_class(args: &CatalogArgs, base: Option<ClassFamily>) -> Result<Option<ClassFamily>, CliError> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| missing(name, "catalog"));
    Ok(match (args.family, base) {
        (None, None) => None,
        (None, Some(ClassFamily::Sobolev { r })) => Some(ClassFamily::Sobolev { r: args.r.unwrap_or(r) }),
        (None, Some(ClassFamily::Exponential { mu, r })) => Some(ClassFamily::Exponential {
            mu: args.mu.unwrap_or(mu),
            r: args.r.unwrap_or(r),
        }),
        (None, Some(ClassFamily::TheoremPolyLog { gamma })) => Some(ClassFamily::TheoremPolyLog {
            gamma: args.gamma.unwrap_or(gamma),
        }),
        (Some(ClassKind::Sobolev), _) => Some(ClassFamily::Sobolev { r: need(args.r, "r")? }),
        (Some(ClassKind::Exponential), _) => Some(ClassFamily::Exponential {
            mu: args.mu.unwrap_or(1.0),
            r: need(args.r, "r")?,
        }),
        (Some(ClassKind::LogDecay), _) => Some(ClassFamily::TheoremPolyLog {
            gamma: need(args.gamma, "gamma")?,
        }),
    })
}

/// Combines the optional config file with flags; flags win.
pub fn resolve(cli: &Cli, base: Option<ExperimentConfig>) -> Result<ExperimentConfig, CliError> {
    let base_exp = base.as_ref().map(|b| &b.experiment);
    if let (Some(cmd), Some(exp)) = (&cli.command, base_exp) {
        if cmd.name() != exp.name() {
            return Err(CliError::Config(format!(
                "subcommand `{}` does not match the config's `{}`",
                cmd.name(),
                exp.name()
            )));
        }
    }
    let experiment = match (&cli.command, base_exp) {
        (None, None) => {
            return Err(CliError::Config("no subcommand given and no --config".into()));
        }
        (None, Some(exp)) => exp.clone(),
        (Some(Command::Approx(a)), exp) => {
            let old = match exp {
                Some(Experiment::Approx(c)) => Some(c),
                _ => None,
            };
            Experiment::Approx(ApproxConfig {
                kernel: merge_kernel(&a.kernel, old.map(|c| &c.kernel))?,
                p: a.p.or(old.map(|c| c.p)).unwrap_or(2.0),
                q: a.q.or(old.map(|c| c.q)).unwrap_or(2.0),
                n_list: a
                    .n
                    .clone()
                    .or(old.map(|c| c.n_list.clone()))
                    .ok_or_else(|| missing("n", "approx"))?,
                budget: a.budget.or(old.map(|c| c.budget)).unwrap_or(64),
            })
        }
        (Some(Command::Widths(a)), exp) => {
            let old = match exp {
                Some(Experiment::Widths(c)) => Some(c),
                _ => None,
            };
            Experiment::Widths(WidthsConfig {
                m: a.m.or(old.map(|c| c.m)).ok_or_else(|| missing("m", "widths"))?,
                n_list: a.n.clone().or(old.map(|c| c.n_list.clone())).unwrap_or_default(),
                p: a.p.or(old.map(|c| c.p)).ok_or_else(|| missing("p", "widths"))?,
                q: a.q.or(old.map(|c| c.q)).ok_or_else(|| missing("q", "widths"))?,
                restarts: a.restarts.or(old.map(|c| c.restarts)).unwrap_or(16),
                inner_starts: a.inner_starts.or(old.map(|c| c.inner_starts)).unwrap_or(64),
                bruteforce: !a.no_bruteforce && old.is_none_or(|c| c.bruteforce),
            })
        }
        (Some(Command::Pipeline(a)), exp) => {
            let old = match exp {
                Some(Experiment::Pipeline(c)) => Some(c),
                _ => None,
            };
            Experiment::Pipeline(PipelineConfig {
                gamma: a.gamma.or(old.map(|c| c.gamma)).ok_or_else(|| missing("gamma", "pipeline"))?,
                p: a.p.or(old.map(|c| c.p)).ok_or_else(|| missing("p", "pipeline"))?,
                q: a.q.or(old.map(|c| c.q)).ok_or_else(|| missing("q", "pipeline"))?,
                n_list: a
                    .n
                    .clone()
                    .or(old.map(|c| c.n_list.clone()))
                    .ok_or_else(|| missing("n", "pipeline"))?,
                m: a.m.or(old.and_then(|c| c.m)),
                search_budget: a.search_budget.or(old.map(|c| c.search_budget)).unwrap_or(0),
                threshold: a.threshold.or(old.map(|c| c.threshold)).unwrap_or(4.0),
            })
        }
        (Some(Command::Catalog(a)), exp) => {
            let old = match exp {
                Some(Experiment::Catalog(c)) => Some(c),
                _ => None,
            };
            Experiment::Catalog(CatalogConfig {
                class: merge_class(a, old.and_then(|c| c.class))?,
                p: a.p.or(old.and_then(|c| c.p)),
                q: a.q.or(old.and_then(|c| c.q)),
            })
        }
        (Some(Command::Fit(a)), exp) => {
            let old = match exp {
                Some(Experiment::Fit(c)) => Some(c.clone()),
                _ => None,
            };
            Experiment::Fit(match (&a.input, old) {
                (Some(path), _) => FitConfig::Csv { path: path.clone() },
                (None, Some(c)) => c,
                (None, None) => return Err(missing("input", "fit")),
            })
        }
        (Some(Command::Mz(a)), exp) => {
            let old = match exp {
                Some(Experiment::Mz(c)) => Some(c),
                _ => None,
            };
            Experiment::Mz(MzConfig {
                p_list: a.p.clone().or(old.map(|c| c.p_list.clone())).ok_or_else(|| missing("p", "mz"))?,
                m_list: a.m.clone().or(old.map(|c| c.m_list.clone())).ok_or_else(|| missing("m", "mz"))?,
                trials: a.trials.or(old.map(|c| c.trials)).unwrap_or(200),
            })
        }
    };
    Ok(ExperimentConfig {
        seed: cli.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0),
        out: cli.out.clone().or(base.as_ref().and_then(|b| b.out.clone())),
        threads: cli.threads.or(base.as_ref().and_then(|b| b.threads)),
        plot: !cli.no_plot && base.as_ref().is_none_or(|b| b.plot),
        experiment,
    })
}
