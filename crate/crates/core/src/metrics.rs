//! Quality metrics for a trained inverse map.
//!
//! - Per-marginal two-sample Kolmogorov-Smirnov statistics against reference
//!   MCMC chains.
//! - Re-simulation error: the mean distance between `f(ξ)` for posterior
//!   draws and `f(ξ_gt)` for the ground truth that generated the observation.
//!   It needs no reference sampler.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::guide::AmortNet;
use crate::mcmc::{rwm_sample, McmcConfig};
use crate::problems::{DataDraw, Problem};
use crate::rng::{self, Stream};

/// Two-sample KS statistic `sup_x |F_a(x) − F_b(x)|` with right-continuous ECDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Evaluation observations plus one independent seed per observation.
fn eval_draws(p: &Problem, n_y: usize, seed: u64) -> Result<Vec<(DataDraw, u64)>> {
    let mut rng = rng::stream(seed, Stream::Eval);
    (0..n_y)
        .map(|_| {
            let draw = p.sample_data(&mut rng)?;
            let obs_seed = rng.next_u64();
            Ok((draw, obs_seed))
        })
        .collect()
}

/// `n` reparameterized draws from the guide for observation `y`.
pub fn guide_samples<R: Rng + ?Sized>(net: &AmortNet, y: &[f64], n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let g = net.forward(y)?;
    let d = g.dim();
    Ok((0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            g.sample_unchecked(&z)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationKs {
    pub index: usize,
    pub y: Vec<f64>,
    /// Per-dimension KS values; `None` if the reference chain failed.
    pub ks: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsReport {
    pub problem: String,
    pub d: usize,
    pub n_post: usize,
    pub observations: Vec<ObservationKs>,
}

impl KsReport {
    pub const HISTOGRAM_BINS: usize = 10;

    pub fn n_failed(&self) -> usize {
        self.observations.iter().filter(|o| o.ks.is_none()).count()
    }

    /// Median KS per dimension over successful observations.
    pub fn median_ks(&self) -> Vec<f64> {
        (0..self.d)
            .map(|k| {
                let mut v: Vec<f64> = self.observations.iter().filter_map(|o| o.ks.as_ref().map(|ks| ks[k])).collect();
                median(&mut v)
            })
            .collect()
    }

    /// Counts per dimension over equal-width bins on `[0, 1]`.
    pub fn histogram(&self) -> Vec<Vec<usize>> {
        let bins = Self::HISTOGRAM_BINS;
        (0..self.d)
            .map(|k| {
                let mut counts = vec![0; bins];
                for ks in self.observations.iter().filter_map(|o| o.ks.as_ref()) {
                    let b = ((ks[k] * bins as f64) as usize).min(bins - 1);
                    counts[b] += 1;
                }
                counts
            })
            .collect()
    }

    /// Header `obs,ks_xi_1,…,ks_xi_d,error`; failed rows leave KS cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("obs");
        for k in 1..=self.d {
            out.push_str(&format!(",ks_xi_{k}"));
        }
        out.push_str(",error\n");
        for o in &self.observations {
            out.push_str(&o.index.to_string());
            match &o.ks {
                Some(ks) => ks.iter().for_each(|v| out.push_str(&format!(",{v}"))),
                None => (0..self.d).for_each(|_| out.push(',')),
            }
            out.push(',');
            if let Some(e) = &o.error {
                out.push_str(&e.replace([',', '\n'], ";"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsSettings {
    pub n_y: usize,
    pub n_post: usize,
    /// Reference chain budget; its seed is replaced per observation.
    pub mcmc: McmcConfig,
    pub seed: u64,
}

impl KsSettings {
    pub fn new(n_y: usize, n_post: usize, mcmc: McmcConfig, seed: u64) -> Self {
        Self { n_y, n_post, mcmc, seed }
    }
}

/// KS comparison of an arbitrary posterior sampler against reference chains.
///
/// `sampler(index, y, seed)` must return `n_post` draws for observation `y`.
pub fn evaluate_ks_with<S>(p: &Problem, settings: &KsSettings, sampler: S) -> Result<KsReport>
where
    S: Fn(usize, &[f64], u64) -> Result<Vec<Vec<f64>>> + Sync,
{
    settings.mcmc.validate()?;
    if settings.mcmc.kept_count() < settings.n_post {
        return Err(Error::Config(format!(
            "reference chain keeps {} samples, fewer than n_post = {}",
            settings.mcmc.kept_count(),
            settings.n_post
        )));
    }
    if settings.n_post == 0 || settings.n_y == 0 {
        return Err(Error::Config("n_y and n_post must be positive".into()));
    }
    let d = p.param_dim();
    let draws = eval_draws(p, settings.n_y, settings.seed)?;
    let observations = draws
        .par_iter()
        .enumerate()
        .map(|(index, (draw, obs_seed))| {
            let mut cfg = settings.mcmc.clone();
            cfg.seed = *obs_seed;
            let outcome = rwm_sample(p, &draw.y, &cfg).and_then(|chain| {
                let approx = sampler(index, &draw.y, *obs_seed)?;
                check_len("posterior sample count", settings.n_post, approx.len())?;
                (0..d)
                    .map(|k| {
                        let a: Vec<f64> = approx.iter().map(|s| s[k]).collect();
                        ks_statistic(&a, &chain.marginal(k))
                    })
                    .collect::<Result<Vec<f64>>>()
            });
            match outcome {
                Ok(ks) => ObservationKs {
                    index,
                    y: draw.y.clone(),
                    ks: Some(ks),
                    error: None,
                },
                Err(e) => ObservationKs {
                    index,
                    y: draw.y.clone(),
                    ks: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(KsReport {
        problem: p.name().to_string(),
        d,
        n_post: settings.n_post,
        observations,
    })
}

/// KS statistics of the trained guide against reference chains.
pub fn evaluate_ks(net: &AmortNet, p: &Problem, settings: &KsSettings) -> Result<KsReport> {
    check_dims(net, p)?;
    evaluate_ks_with(p, settings, |_, y, seed| {
        let mut rng = rng::stream(seed, Stream::Guide);
        guide_samples(net, y, settings.n_post, &mut rng)
    })
}

fn check_dims(net: &AmortNet, p: &Problem) -> Result<()> {
    check_len("network parameter dim", p.param_dim(), net.param_dim())?;
    check_len("network data dim", p.data_dim(), net.data_dim())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResimReport {
    pub problem: String,
    pub estimate: f64,
    pub n_y: usize,
    pub n_samples: usize,
    /// Mean re-simulation distance for each observation.
    pub per_observation: Vec<f64>,
}

impl ResimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("obs,resim\n");
        for (i, v) in self.per_observation.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Re-simulation error of an arbitrary posterior sampler.
///
/// `sampler(index, draw, seed)` returns `n_samples` draws for `draw.y`.
pub fn resim_error_with<S>(p: &Problem, n_y: usize, n_samples: usize, seed: u64, sampler: S) -> Result<ResimReport>
where
    S: Fn(usize, &DataDraw, u64) -> Result<Vec<Vec<f64>>> + Sync,
{
    if n_y == 0 || n_samples == 0 {
        return Err(Error::Config("n_y and n_samples must be positive".into()));
    }
    let draws = eval_draws(p, n_y, seed)?;
    let per_observation = draws
        .par_iter()
        .enumerate()
        .map(|(index, (draw, obs_seed))| {
            let f_gt = p.forward(&draw.xi_gt)?;
            let samples = sampler(index, draw, *obs_seed)?;
            check_len("posterior sample count", n_samples, samples.len())?;
            let mut total = 0.0;
            for xi in &samples {
                let f = p.forward(xi)?;
                total += f.iter().zip(&f_gt).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            }
            Ok(total / n_samples as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let estimate = per_observation.iter().sum::<f64>() / n_y as f64;
    Ok(ResimReport {
        problem: p.name().to_string(),
        estimate,
        n_y,
        n_samples,
        per_observation,
    })
}

pub fn resim_error(net: &AmortNet, p: &Problem, n_y: usize, n_samples: usize, seed: u64) -> Result<ResimReport> {
    check_dims(net, p)?;
    resim_error_with(p, n_y, n_samples, seed, |_, draw, obs_seed| {
        let mut rng = rng::stream(obs_seed, Stream::Guide);
        guide_samples(net, &draw.y, n_samples, &mut rng)
    })
}

/// Compact summary written next to the full reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub problem: String,
    pub n_y: usize,
    pub n_samples: usize,
    pub median_ks: Vec<f64>,
    pub resim_error: f64,
    pub failed_observations: usize,
}

impl EvalSummary {
    pub fn new(ks: &KsReport, resim: &ResimReport) -> Self {
        Self {
            problem: resim.problem.clone(),
            n_y: resim.n_y,
            n_samples: resim.n_samples,
            median_ks: ks.median_ks(),
            resim_error: resim.estimate,
            failed_observations: ks.n_failed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guide::Architecture;
    use crate::problems::ProblemSpec;
    use proptest::prelude::*;

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[0.3, -1.0, 2.0], &[2.0, 0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0], &[10.0]).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.5, 2.5]).unwrap(), 0.5);
        assert!(matches!(ks_statistic(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn ks_with_ties() {
        // F_a jumps to 1 at 1; F_b is 1/2 at 1.
        assert_eq!(ks_statistic(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), 0.5);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter().chain(b).map(|&x| (ecdf(a, x) - ecdf(b, x)).abs()).fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_exact(
            a in proptest::collection::vec(-3i32..3, 1..20),
            b in proptest::collection::vec(-3.0f64..3.0, 1..20),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let ab = ks_statistic(&a, &b).unwrap();
            prop_assert_eq!(ab, ks_statistic(&b, &a).unwrap());
            prop_assert_eq!(ab, brute_force_ks(&a, &b));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn ks_invariant_under_exp(a in proptest::collection::vec(-5.0f64..5.0, 1..30), b in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
            let ea: Vec<f64> = a.iter().map(|v| v.exp()).collect();
            let eb: Vec<f64> = b.iter().map(|v| v.exp()).collect();
            prop_assert_eq!(ks_statistic(&a, &b).unwrap(), ks_statistic(&ea, &eb).unwrap());
        }
    }

    #[test]
    fn oracle_sampler_has_zero_resim() {
        let p = ProblemSpec::Ik.build().unwrap();
        let r = resim_error_with(&p, 20, 50, 3, |_, draw, _| Ok(vec![draw.xi_gt.clone(); 50])).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.per_observation.len(), 20);
    }

    #[test]
    fn resim_ignores_sample_order() {
        let p = ProblemSpec::Ik.build().unwrap();
        let net = AmortNet::init(4, 2, &Architecture::uniform(&[8]), 1).unwrap();
        let forward = |rev: bool| {
            resim_error_with(&p, 10, 40, 9, |_, draw, seed| {
                let mut rng = rng::stream(seed, Stream::Guide);
                let mut s = guide_samples(&net, &draw.y, 40, &mut rng)?;
                if rev {
                    s.reverse();
                }
                Ok(s)
            })
            .unwrap()
        };
        let (a, b) = (forward(false), forward(true));
        for (x, y) in a.per_observation.iter().zip(&b.per_observation) {
            assert!((x - y).abs() < 1e-12);
        }
        // Reordering observations only permutes the per-observation terms.
        let mut pa = a.per_observation.clone();
        pa.reverse();
        let est: f64 = pa.iter().sum::<f64>() / pa.len() as f64;
        assert!((est - a.estimate).abs() < 1e-12);
    }

    #[test]
    fn self_comparison_of_chain_halves_is_small() {
        let p = ProblemSpec::by_name("lingauss").unwrap().build().unwrap();
        let n_post = 1000;
        let settings = KsSettings::new(10, n_post, McmcConfig::default_budget(0), 4);
        let report = evaluate_ks_with(&p, &settings, |_, y, seed| {
            // A second, independent chain with twice the budget: its second
            // half is disjoint from anything the reference chain saw.
            let mut cfg = McmcConfig::new(63_000, 3_000, 30, seed ^ 0xA5A5);
            cfg.init = crate::mcmc::McmcInit::PriorMean;
            let chain = rwm_sample(&p, y, &cfg)?;
            Ok(chain.samples[n_post..].to_vec())
        })
        .unwrap();
        for m in report.median_ks() {
            assert!(m < 0.1, "median ks {m}");
        }
    }

    #[test]
    fn untrained_guide_is_far_from_reference() {
        let p = ProblemSpec::by_name("lingauss").unwrap().build().unwrap();
        let net = AmortNet::init(2, 2, &Architecture::uniform(&[20, 10]), 0).unwrap();
        let report = evaluate_ks(&net, &p, &KsSettings::new(10, 1000, McmcConfig::default_budget(0), 1)).unwrap();
        assert_eq!(report.n_failed(), 0);
        let med = report.median_ks();
        assert!(med.iter().all(|&m| m > 0.3), "{med:?}");
        assert_eq!(report.histogram()[0].iter().sum::<usize>(), 10);
        assert!(report.to_csv().starts_with("obs,ks_xi_1,ks_xi_2,error\n"));
    }

    #[test]
    fn reference_failures_are_recorded() {
        let p = ProblemSpec::Ik.build().unwrap();
        let mut mcmc = McmcConfig::new(1_100, 100, 1, 0);
        mcmc.init = crate::mcmc::McmcInit::Point(vec![f64::NAN; 4]);
        let report = evaluate_ks_with(&p, &KsSettings::new(3, 1000, mcmc, 2), |_, _, _| Ok(vec![vec![0.0; 4]; 1000])).unwrap();
        assert_eq!(report.n_failed(), 3);
        assert!(report.median_ks()[0].is_nan());
        let too_short = KsSettings::new(3, 2000, McmcConfig::default_budget(0), 2);
        assert!(evaluate_ks_with(&p, &too_short, |_, _, _| Ok(vec![])).is_err());
    }
}
