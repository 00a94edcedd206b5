//! TOML run configuration for `invmap train`.
//!
//! ```toml
//! problem = "lingauss"     # ik | elliptic | lingauss | null
//! seed = 7
//!
//! [train]                  # any subset; the rest comes from the problem's recipe
//! n_iter = 2000
//!
//! [arch]                   # `hidden` for all heads, or per head: mu, diag, offdiag
//! hidden = [20, 10]
//!
//! [output]                 # relative to the config file's directory
//! model = "model.json"
//! trace = "trace.csv"
//!
//! [lingauss]               # only for problem = "lingauss"
//! a = [[1.0, 0.4], [-0.3, 0.9]]
//! gamma = 0.5
//! ```

use std::path::{Path, PathBuf};

use invmap::trainer::default_architecture;
use invmap::{Architecture, ProblemSpec, TrainConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Option<String>,
    seed: Option<u64>,
    train: Option<TrainSection>,
    arch: Option<ArchSection>,
    output: Option<OutputSection>,
    lingauss: Option<LinGaussSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    n_iter: Option<usize>,
    n_y: Option<usize>,
    n_z: Option<usize>,
    eta0: Option<f64>,
    alpha: Option<f64>,
    r: Option<usize>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchSection {
    hidden: Option<Vec<usize>>,
    mu: Option<Vec<usize>>,
    diag: Option<Vec<usize>>,
    offdiag: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    model: Option<PathBuf>,
    trace: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinGaussSection {
    a: Option<Vec<Vec<f64>>>,
    gamma: Option<f64>,
    prior_mean: Option<Vec<f64>>,
    prior_std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub train: TrainConfig,
    pub arch: Architecture,
    pub model_path: PathBuf,
    pub trace_path: PathBuf,
}

/// Training recipe a problem starts from before `[train]` overrides.
pub fn recipe(problem: &str, seed: u64) -> TrainConfig {
    match problem {
        "ik" => TrainConfig::ik_recipe(seed),
        "elliptic" => TrainConfig::elliptic_recipe(seed),
        _ => TrainConfig::lingauss_recipe(seed),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = io::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses a config; relative output paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| usage(format!("config: {}", e.message())))?;
        let name = raw.problem.ok_or_else(|| usage("config: missing field `problem`"))?;
        let mut problem = ProblemSpec::by_name(&name).map_err(|_| {
            usage(format!(
                "config: field `problem` = {name:?} is not one of {:?}",
                invmap::problems::REGISTERED
            ))
        })?;
        if let Some(lg) = raw.lingauss {
            let ProblemSpec::LinGauss {
                a,
                gamma,
                prior_mean,
                prior_std,
            } = &mut problem
            else {
                return Err(usage("config: section `lingauss` requires problem = \"lingauss\""));
            };
            if let Some(new_a) = lg.a {
                let d = new_a.first().map_or(0, Vec::len);
                *a = new_a;
                *prior_mean = vec![0.0; d];
                *prior_std = vec![1.0; d];
            }
            if let Some(g) = lg.gamma {
                *gamma = g;
            }
            if let Some(m) = lg.prior_mean {
                *prior_mean = m;
            }
            if let Some(s) = lg.prior_std {
                *prior_std = s;
            }
        }
        problem.build().map_err(|e| usage(format!("config: field `lingauss`: {e}")))?;

        let seed = raw.seed.unwrap_or(0);
        let mut train = recipe(&name, seed);
        let t = raw.train.unwrap_or_default();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = t.$f { train.$f = v; } )* };
        }
        set!(n_iter, n_y, n_z, eta0, alpha, r, adam_beta1, adam_beta2, adam_eps);
        train
            .validate()
            .map_err(|e| usage(format!("config: field `train.{}` is out of range", field_of(&e))))?;

        let mut arch = default_architecture(&name);
        let a = raw.arch.unwrap_or_default();
        if let Some(h) = a.hidden {
            arch = Architecture::uniform(&h);
        }
        if let Some(h) = a.mu {
            arch.mu = h;
        }
        if let Some(h) = a.diag {
            arch.diag = h;
        }
        if let Some(h) = a.offdiag {
            arch.offdiag = h;
        }
        for (field, sizes) in [("mu", &arch.mu), ("diag", &arch.diag), ("offdiag", &arch.offdiag)] {
            if sizes.contains(&0) {
                return Err(usage(format!("config: field `arch.{field}` has a zero hidden size")));
            }
        }

        let out = raw.output.unwrap_or_default();
        let resolve = |p: Option<PathBuf>, default: &str| {
            let p = p.unwrap_or_else(|| PathBuf::from(default));
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        Ok(Self {
            problem,
            train,
            arch,
            model_path: resolve(out.model, "model.json"),
            trace_path: resolve(out.trace, "trace.csv"),
        })
    }
}

/// Field name carried by a `TrainConfig::validate` error.
fn field_of(e: &invmap::Error) -> String {
    let msg = e.to_string();
    let rest = msg.trim_start_matches("invalid configuration: ");
    rest.split_whitespace().next().unwrap_or(rest).to_string()
}
