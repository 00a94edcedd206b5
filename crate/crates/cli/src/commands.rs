use std::path::{Path, PathBuf};

use invmap::mcmc::{chain_diagnostics, rwm_sample, samples_to_csv, McmcConfig};
use invmap::metrics::{evaluate_ks, guide_samples, resim_error, EvalSummary, KsSettings};
use invmap::rng::{self, Stream};
use invmap::{trainer, AmortNet, ProblemSpec, TrainTrace};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::write_atomic;
use crate::model::ModelFile;

/// Parses a comma-separated observation of length `m`.
pub fn parse_observation(text: &str, m: usize) -> CliResult<Vec<f64>> {
    let y = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("--y: {t:?} is not a finite number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if y.len() != m {
        return Err(CliError::Usage(format!("--y has {} values, the problem expects {m}", y.len())));
    }
    Ok(y)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub struct TrainOutcome {
    pub model: ModelFile,
    pub trace: TrainTrace,
}

pub fn train(config_path: &Path) -> CliResult<TrainOutcome> {
    let cfg = RunConfig::load(config_path)?;
    let p = cfg.problem.build()?;
    let net = AmortNet::init(p.param_dim(), p.data_dim(), &cfg.arch, cfg.train.seed)?;
    let every = (cfg.train.n_iter / 10).max(1);
    let (net, trace) = trainer::train_from(net, &p, &cfg.train, |rec| {
        if rec.iteration % every == 0 {
            eprintln!("iter {:>7}  v {:>12.5}  lr {:.1e}  |grad| {:.3e}", rec.iteration, rec.v_estimate, rec.lr, rec.grad_norm);
        }
    })?;
    let model = ModelFile::new(cfg.problem.clone(), &net, cfg.train.clone());
    model.save(&cfg.model_path)?;
    write_atomic(&cfg.trace_path, trace.to_csv().as_bytes())?;
    println!("model: {}", cfg.model_path.display());
    println!("trace: {}", cfg.trace_path.display());
    Ok(TrainOutcome { model, trace })
}

pub struct InferArgs {
    pub model: PathBuf,
    pub y: String,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub const INFER_SAMPLES_FILE: &str = "posterior_samples.csv";
pub const INFER_PARAMS_FILE: &str = "guide_params.json";

pub fn infer(args: &InferArgs) -> CliResult<()> {
    let model = ModelFile::load(&args.model)?;
    let net = model.network()?;
    let y = parse_observation(&args.y, model.m)?;
    let g = net.forward(&y)?;
    let params = to_json(&g);
    print!("{params}");
    write_atomic(&args.out_dir.join(INFER_PARAMS_FILE), params.as_bytes())?;
    if args.samples > 0 {
        let mut rng = rng::stream(args.seed, Stream::Guide);
        let samples = guide_samples(&net, &y, args.samples, &mut rng)?;
        write_atomic(&args.out_dir.join(INFER_SAMPLES_FILE), samples_to_csv(&samples, model.d).as_bytes())?;
    }
    Ok(())
}

pub struct McmcArgs {
    pub problem: String,
    pub y: String,
    pub total: usize,
    pub burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub const CHAIN_FILE: &str = "chain.csv";
pub const CHAIN_DIAGNOSTICS_FILE: &str = "chain_diagnostics.json";

#[derive(Serialize)]
struct ChainSummary {
    problem: String,
    y: Vec<f64>,
    config: McmcConfig,
    kept: usize,
    acceptance_rate: f64,
    final_proposal_scale: f64,
    diagnostics: invmap::mcmc::Diagnostics,
}

pub fn mcmc(args: &McmcArgs) -> CliResult<()> {
    let spec = ProblemSpec::by_name(&args.problem).map_err(|_| {
        CliError::Usage(format!(
            "--problem {:?} is not one of {:?}",
            args.problem,
            invmap::problems::REGISTERED
        ))
    })?;
    let p = spec.build()?;
    let y = parse_observation(&args.y, p.data_dim())?;
    let cfg = McmcConfig::new(args.total, args.burn, args.thin, args.seed);
    let chain = rwm_sample(&p, &y, &cfg)?;
    let diagnostics = chain_diagnostics(&chain.samples)?;
    write_atomic(&args.out_dir.join(CHAIN_FILE), chain.to_csv().as_bytes())?;
    let summary = ChainSummary {
        problem: args.problem.clone(),
        y,
        kept: chain.samples.len(),
        acceptance_rate: chain.acceptance_rate,
        final_proposal_scale: chain.proposal_scale_history.last().copied().unwrap_or(f64::NAN),
        config: cfg,
        diagnostics,
    };
    let json = to_json(&summary);
    write_atomic(&args.out_dir.join(CHAIN_DIAGNOSTICS_FILE), json.as_bytes())?;
    println!(
        "kept {} samples, acceptance rate {:.3}",
        summary.kept, summary.acceptance_rate
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub model: PathBuf,
    pub ny: usize,
    pub npost: usize,
    pub total: usize,
    pub burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub const KS_CSV_FILE: &str = "ks_report.csv";
pub const KS_JSON_FILE: &str = "ks_report.json";
pub const RESIM_CSV_FILE: &str = "resim_report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize)]
struct KsJson<'a> {
    median_ks: Vec<f64>,
    histogram_bins: usize,
    histogram: Vec<Vec<usize>>,
    report: &'a invmap::metrics::KsReport,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<EvalSummary> {
    let model = ModelFile::load(&args.model)?;
    let net = model.network()?;
    let p = model.problem.build()?;
    let mcmc = McmcConfig::new(args.total, args.burn, args.thin, 0);
    let ks = evaluate_ks(&net, &p, &KsSettings::new(args.ny, args.npost, mcmc, args.seed))?;
    let resim = resim_error(&net, &p, args.ny, args.npost, args.seed)?;
    let summary = EvalSummary::new(&ks, &resim);
    let ks_json = KsJson {
        median_ks: ks.median_ks(),
        histogram_bins: invmap::metrics::KsReport::HISTOGRAM_BINS,
        histogram: ks.histogram(),
        report: &ks,
    };
    write_atomic(&args.out_dir.join(KS_CSV_FILE), ks.to_csv().as_bytes())?;
    write_atomic(&args.out_dir.join(KS_JSON_FILE), to_json(&ks_json).as_bytes())?;
    write_atomic(&args.out_dir.join(RESIM_CSV_FILE), resim.to_csv().as_bytes())?;
    write_atomic(&args.out_dir.join(SUMMARY_FILE), to_json(&summary).as_bytes())?;
    for o in ks.observations.iter().filter(|o| o.error.is_some()) {
        eprintln!("observation {}: reference chain failed: {}", o.index, o.error.as_deref().unwrap_or(""));
    }
    print!("{}", to_json(&summary));
    Ok(summary)
}
