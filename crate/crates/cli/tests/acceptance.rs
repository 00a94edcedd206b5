//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each, and exits non-zero if any criterion fails.

use std::time::Instant;

use invmap::fd::finite_diff;
use invmap::guide::{AmortNet, Architecture, GuideParams};
use invmap::mcmc::{chain_diagnostics, rwm_sample, McmcConfig};
use invmap::metrics::{evaluate_ks, ks_statistic, resim_error, KsSettings};
use invmap::problems::{default_sensors, elliptic_conductivity, elliptic_solve, linear_gaussian_posterior, Problem, ProblemSpec};
use invmap::rng::{self, Stream};
use invmap::trainer::{self, default_architecture, Batch, TrainConfig};
use invmap_cli::ModelFile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// 1. Gradient fidelity

fn gradient_fidelity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for name in ["lingauss", "ik", "elliptic"] {
        let p = ProblemSpec::by_name(name).unwrap().build().unwrap();
        let mut problem_worst: f64 = 0.0;
        for point in 0..20u64 {
            let mut data = rng::stream(1_000 + point, Stream::Data);
            let mut latent = rng::stream(1_000 + point, Stream::Latent);
            let b = Batch::draw(&p, 3, 2, &mut data, &mut latent).unwrap();
            // Zero initial biases put some ReLU pre-activations exactly on the kink,
            // where the derivative is a one-sided choice; jitter every parameter.
            let mut net = AmortNet::init(p.param_dim(), p.data_dim(), &Architecture::uniform(&[6, 4]), 2_000 + point).unwrap();
            let mut jitter = ChaCha8Rng::seed_from_u64(3_000 + point);
            let phi: Vec<f64> = net.flatten().iter().map(|v| v + 0.1 * normal(&mut jitter)).collect();
            net.set_flat(&phi).unwrap();
            let (_, g) = trainer::value_and_grad_v(&net, &p, &b.ys, &b.zs).unwrap();
            let mut probe = net.clone();
            let fd = finite_diff(
                |phi| {
                    probe.set_flat(phi).unwrap();
                    trainer::estimate_v(&probe, &p, &b.ys, &b.zs).unwrap()
                },
                &net.flatten(),
                1e-6,
            );
            let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            problem_worst = problem_worst.max(diff / norm);
        }
        notes.push(format!("{name} {problem_worst:.1e}"));
        worst = worst.max(problem_worst);
    }
    outcome(worst < 1e-4, format!("max relative error over 20 points: {} (< 1e-4)", notes.join(", ")))
}

// 2. Analytic-posterior recovery

struct LinGaussCase {
    a: Vec<f64>,
    spec: ProblemSpec,
    problem: Problem,
    cfg: TrainConfig,
}

/// Random 2 × 2 matrix with condition number at most 3 and singular values ≥ 0.5.
fn well_conditioned_matrix(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let a: Vec<f64> = (0..4).map(|_| normal(rng)).collect();
        let (p, q, r, s) = (a[0], a[1], a[2], a[3]);
        let fro2 = p * p + q * q + r * r + s * s;
        let det = (p * s - q * r).abs();
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
        let smax = ((fro2 + disc) / 2.0).sqrt();
        let smin = ((fro2 - disc) / 2.0).max(0.0).sqrt();
        if smin >= 0.5 && smax / smin <= 3.0 {
            return a;
        }
    }
}

fn lingauss_case() -> LinGaussCase {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let a = well_conditioned_matrix(&mut rng);
    let spec = ProblemSpec::LinGauss {
        a: vec![a[..2].to_vec(), a[2..].to_vec()],
        gamma: 0.5,
        prior_mean: vec![0.0; 2],
        prior_std: vec![1.0; 2],
    };
    let problem = spec.build().unwrap();
    LinGaussCase {
        a,
        spec,
        problem,
        cfg: TrainConfig::lingauss_recipe(21),
    }
}

fn train_model(spec: &ProblemSpec, p: &Problem, cfg: &TrainConfig) -> (AmortNet, ModelFile) {
    let (net, _) = trainer::train(p, &default_architecture(spec.name()), cfg).unwrap();
    let model = ModelFile::new(spec.clone(), &net, cfg.clone());
    (net, model)
}

fn posterior_recovery(case: &LinGaussCase, net: &AmortNet) -> Outcome {
    let p = &case.problem;
    let mut rng = rng::stream(31, Stream::Eval);
    let (mut mu_worst, mut cov_worst): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let y = p.sample_data(&mut rng).unwrap().y;
        let post = linear_gaussian_posterior(&case.a, 2, 2, 0.5, &[0.0; 2], &[1.0; 2], &y).unwrap();
        let g = net.forward(&y).unwrap();
        let mu_err = g.mu.iter().zip(&post.mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let cov_err = g.covariance().iter().zip(&post.cov).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        mu_worst = mu_worst.max(mu_err);
        cov_worst = cov_worst.max(cov_err);
    }
    outcome(
        mu_worst < 0.05 && cov_worst < 0.05,
        format!("A = {:.3?}; over 20 y: max |mu - mu*|_inf = {mu_worst:.4} (< 0.05), max |LL^T - S*|_F = {cov_worst:.4} (< 0.05)", case.a),
    )
}

// 3. ELBO bounded by the evidence

fn elbo_bound(case: &LinGaussCase, net: &AmortNet) -> Outcome {
    let p = &case.problem;
    let mut rng = rng::stream(32, Stream::Eval);
    let n = 10_000;
    let mut violations = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..50 {
        let y = p.sample_data(&mut rng).unwrap().y;
        let post = linear_gaussian_posterior(&case.a, 2, 2, 0.5, &[0.0; 2], &[1.0; 2], &y).unwrap();
        let g = net.forward(&y).unwrap();
        let terms: Vec<f64> = (0..n)
            .map(|_| {
                let z = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                p.log_joint(&g.sample(&z).unwrap(), &y).unwrap()
            })
            .collect();
        let mean = terms.iter().sum::<f64>() / n as f64;
        let se = (terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
        let margin = (mean + g.entropy() - post.log_evidence) / se;
        worst_margin = worst_margin.max(margin);
        if margin > 3.0 {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations}/50 y with ELBO > log evidence + 3 SE; largest (ELBO - evidence)/SE = {worst_margin:.2}"),
    )
}

// 4. Entropy identity

fn entropy_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = 1 + case % 3;
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut chol = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..r {
                chol[r * d + c] = rng.random_range(-1.0..1.0);
            }
            chol[r * d + r] = rng.random_range(0.1..2.0);
        }
        let g = GuideParams::new(mu, chol).unwrap();
        let mut acc = 0.0;
        for _ in 0..n {
            let z: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            acc -= g.log_density(&g.sample(&z).unwrap()).unwrap();
        }
        worst = worst.max((acc / n as f64 - g.entropy()).abs());
    }
    outcome(worst < 0.01, format!("max |MC entropy - closed form| over 100 guides = {worst:.2e} (< 0.01)"))
}

// 5. MCMC correctness

fn mcmc_correctness() -> Outcome {
    let p = ProblemSpec::by_name("lingauss").unwrap().build().unwrap();
    let ProblemSpec::LinGauss { a, .. } = ProblemSpec::by_name("lingauss").unwrap() else {
        unreachable!()
    };
    let a: Vec<f64> = a.into_iter().flatten().collect();
    let y = [0.8, -0.5];
    let post = linear_gaussian_posterior(&a, 2, 2, 0.5, &[0.0; 2], &[1.0; 2], &y).unwrap();
    let chain = rwm_sample(&p, &y, &McmcConfig::new(303_000, 3_000, 30, 55)).unwrap();
    let diag = chain_diagnostics(&chain.samples).unwrap();
    let n = chain.samples.len() as f64;
    let ess = diag.ess.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut z_scores = Vec::new();
    for k in 0..2 {
        z_scores.push((diag.mean[k] - post.mean[k]).abs() / (diag.std[k] / diag.ess[k].sqrt()));
    }
    for (r, c) in [(0, 0), (1, 1), (0, 1)] {
        let cov = chain.samples.iter().map(|s| (s[r] - diag.mean[r]) * (s[c] - diag.mean[c])).sum::<f64>() / (n - 1.0);
        let (srr, scc, src) = (post.cov[r * 2 + r], post.cov[c * 2 + c], post.cov[r * 2 + c]);
        let se = ((srr * scc + src * src) / ess).sqrt();
        z_scores.push((cov - src).abs() / se);
    }
    let lingauss_ok = z_scores.iter().all(|&z| z < 3.0);

    let null = ProblemSpec::by_name("null").unwrap().build().unwrap();
    let chain = rwm_sample(&null, &[0.4], &McmcConfig::new(303_000, 3_000, 30, 56)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    let direct: Vec<f64> = (0..10_000).map(|_| normal(&mut rng)).collect();
    let ks = ks_statistic(&chain.marginal(0), &direct).unwrap();
    outcome(
        lingauss_ok && ks < 0.03 && chain.samples.len() == 10_000,
        format!(
            "lingauss |moment error|/SE = {:.2?} (< 3); f=0 KS vs prior draws = {ks:.4} (< 0.03, n = {})",
            z_scores,
            chain.samples.len()
        ),
    )
}

// 6. IK reproduction

fn ik_reproduction(net: &AmortNet, p: &Problem) -> Outcome {
    let resim = resim_error(net, p, 100, 1000, 61).unwrap();
    let ks = evaluate_ks(net, p, &KsSettings::new(100, 1000, McmcConfig::default_budget(0), 62)).unwrap();
    let produced = ks.observations.len() == 100 && !ks.to_csv().is_empty();
    outcome(
        resim.estimate <= 5e-2 && produced,
        format!(
            "resim = {:.3e} (<= 5e-2, published 2.32e-2); KS report over {} y produced, median KS per dim {:.3?} (informational)",
            resim.estimate,
            ks.observations.len(),
            ks.median_ks()
        ),
    )
}

// 7. Elliptic reproduction

fn elliptic_reproduction() -> Outcome {
    let spec = ProblemSpec::Elliptic;
    let p = spec.build().unwrap();
    let cfg = TrainConfig::elliptic_recipe(1);
    let (net, _) = trainer::train(&p, &default_architecture("elliptic"), &cfg).unwrap();
    let resim = resim_error(&net, &p, 100, 1000, 71).unwrap();
    let ks = evaluate_ks(&net, &p, &KsSettings::new(20, 1000, McmcConfig::default_budget(0), 72)).unwrap();
    let med = ks.median_ks();
    outcome(
        resim.estimate <= 8e-2 && med.iter().all(|&m| m < 0.2) && ks.n_failed() == 0,
        format!(
            "{} iterations; resim = {:.3e} (<= 8e-2, published 4.05e-2); median KS per dim over 20 y = {med:.3?} (< 0.2); failed chains {}",
            cfg.n_iter,
            resim.estimate,
            ks.n_failed()
        ),
    )
}

// 8. KS oracle equivalence

fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (ecdf(a, x) - ecdf(b, x)).abs()).fold(0.0, f64::max)
}

fn ks_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut mismatches = 0;
    for pair in 0..1000 {
        let (n, m) = (rng.random_range(1..=50), rng.random_range(1..=50));
        // Every other pair draws from a coarse grid so that ties are common.
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| if pair % 2 == 0 { normal(&mut rng) } else { rng.random_range(0..8) as f64 })
                .collect()
        };
        let (a, b) = (draw(n), draw(m));
        if ks_statistic(&a, &b).unwrap() != brute_force_ks(&a, &b) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/1000 pairs differ from the exhaustive evaluation"))
}

// 9. Elliptic forward-model oracle

/// Conservative finite differences for `−(a u′)′ = 0` with midpoint conductivities (Thomas algorithm).
fn fd_rod(xi: &[f64], n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    let a: Vec<f64> = (0..n - 1).map(|i| elliptic_conductivity((i as f64 + 0.5) * h, xi)).collect();
    let k = n - 2;
    let (mut cp, mut dp) = (vec![0.0; k], vec![0.0; k]);
    for j in 0..k {
        let (lower, diag, upper) = (-a[j], a[j] + a[j + 1], -a[j + 1]);
        let rhs = if j == 0 { a[0] } else { 0.0 };
        let denom = if j == 0 { diag } else { diag - lower * cp[j - 1] };
        cp[j] = upper / denom;
        dp[j] = if j == 0 { rhs / denom } else { (rhs - lower * dp[j - 1]) / denom };
    }
    let mut u = vec![0.0; n];
    u[0] = 1.0;
    for j in (0..k).rev() {
        u[j + 1] = dp[j] - cp[j] * u[j + 2];
    }
    u
}

fn elliptic_oracle() -> Outcome {
    let n = 4001;
    let sensors = default_sensors();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let xi: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..=3.0)).collect();
        let u = fd_rod(&xi, n);
        for (x, q) in sensors.iter().zip(elliptic_solve(&xi, &sensors)) {
            let node = (x * (n - 1) as f64).round() as usize;
            worst = worst.max((u[node] - q).abs());
        }
    }
    outcome(worst < 1e-5, format!("max |quadrature - 4001-node FD| over 100 xi = {worst:.2e} (< 1e-5)"))
}

// 10. Determinism

fn determinism(first: &[(&str, String)], again: &[(&str, String)]) -> Outcome {
    let same: Vec<String> = first
        .iter()
        .zip(again)
        .map(|((name, a), (_, b))| format!("{name}: {}", if a == b { "identical" } else { "DIFFERENT" }))
        .collect();
    let pass = first.iter().zip(again).all(|((_, a), (_, b))| a == b);
    outcome(pass, format!("repeated training, model files {}", same.join(", ")))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!("{} [{id:>2}] {name} ({secs:.1}s): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o, secs));
    };

    run(1, "gradient fidelity", &mut gradient_fidelity);

    let case = lingauss_case();
    let (lg_net, lg_model) = train_model(&case.spec, &case.problem, &case.cfg);
    run(2, "analytic-posterior recovery", &mut || posterior_recovery(&case, &lg_net));
    run(3, "ELBO <= evidence", &mut || elbo_bound(&case, &lg_net));
    run(4, "entropy identity", &mut entropy_identity);
    run(5, "MCMC correctness", &mut mcmc_correctness);

    let ik_spec = ProblemSpec::Ik;
    let ik = ik_spec.build().unwrap();
    let ik_cfg = TrainConfig::ik_recipe(1);
    let (ik_net, ik_model) = train_model(&ik_spec, &ik, &ik_cfg);
    run(6, "IK reproduction", &mut || ik_reproduction(&ik_net, &ik));
    run(7, "elliptic reproduction", &mut elliptic_reproduction);
    run(8, "KS oracle equivalence", &mut ks_oracle);
    run(9, "elliptic forward-model oracle", &mut elliptic_oracle);

    run(10, "determinism", &mut || {
        let (_, lg_again) = train_model(&case.spec, &case.problem, &case.cfg);
        let (_, ik_again) = train_model(&ik_spec, &ik, &ik_cfg);
        determinism(
            &[("lingauss", lg_model.to_json()), ("ik", ik_model.to_json())],
            &[("lingauss", lg_again.to_json()), ("ik", ik_again.to_json())],
        )
    });

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
