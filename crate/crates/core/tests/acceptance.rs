//! Acceptance criteria. Each test prints one `criterion N [PASS|FAIL]` line
//! straight to stdout, so the verdicts show up even when output is captured.

use std::io::Write;
use std::time::Instant;

use dpminimax::attack::{
    completeness_experiment, in_sample_attack_sum, sample_mean_estimator, soundness_experiment, AttackData,
    AttackModel, SteinDensity,
};
use dpminimax::btl::{default_btl_hyperparams, fit_dp_btl, SolverOptions};
use dpminimax::dp_glm::{default_dp_glm_config, estimate_curvature};
use dpminimax::harness::{
    fit_loglog_slope, privacy_audit, run_experiment, summarize_cells, AuditConfig, CountMechanism, DeltaSpec,
    ExperimentConfig, ModelKind, RateAxis,
};
use dpminimax::nonparam::{
    fourier_eval, mise, sample_knorm_stream, series_eval, truncated_empirical_coeffs, fit_dp_nonparam, KnormConfig,
    KnormMethod, NonparamConfig, OrbitopeGrid, SobolevSpec,
};
use dpminimax::sparse::{default_sparse_glm_config, exact_top_s, fit_dp_sparse_glm, noisy_hard_threshold};
use dpminimax::stats::{ks_p_value, ks_statistic, laplace_cdf};
use dpminimax::{fit_dp_glm, DesignSpec, GlmFamily, NoiseSource, PrivacyBudget, Result, SeededRng, ZeroNoise};

fn report(id: u32, name: &str, pass: bool, detail: String, start: Instant, limit_s: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    let ok = pass && elapsed < limit_s;
    let line = format!(
        "criterion {id:>2} [{}] {name}: {detail} ({elapsed:.1}s of {limit_s:.0}s)\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{}", line.trim_end());
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn subsets(d: usize, s: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << d))
        .filter(|m| m.count_ones() as usize == s)
        .map(|m| (0..d).filter(|j| m >> j & 1 == 1).collect())
        .collect()
}

#[test]
fn criterion_01_noisy_ht_zero_noise() {
    let start = Instant::now();
    let mut rng = SeededRng::new(101, 0);
    let mut mismatches = 0;
    for _ in 0..500 {
        let d = 1 + (rng.uniform_open() * 12.0) as usize;
        let s = 1 + (rng.uniform_open() * d.min(6) as f64) as usize;
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let best = subsets(d, s)
            .into_iter()
            .min_by(|a, b| {
                let ea = sq_dist(&exact_top_s_on(&v, a), &v);
                let eb = sq_dist(&exact_top_s_on(&v, b), &v);
                ea.total_cmp(&eb)
            })
            .unwrap();
        let out = noisy_hard_threshold(&v, s, 1.0, 1e-3, 1.0, &mut ZeroNoise, false).unwrap();
        let mut sel = out.selected.clone();
        sel.sort_unstable();
        if sel != best || out.iterate.values != exact_top_s_on(&v, &best) || out.iterate != exact_top_s(&v, s).unwrap()
        {
            mismatches += 1;
        }
    }
    report(1, "NoisyHT zero-noise equivalence", mismatches == 0, format!("{mismatches} mismatches in 500"), start, 10.0);
}

fn exact_top_s_on(v: &[f64], support: &[usize]) -> Vec<f64> {
    (0..v.len()).map(|j| if support.contains(&j) { v[j] } else { 0.0 }).collect()
}

#[test]
fn criterion_02_peeling_accuracy_bound() {
    let start = Instant::now();
    let mut rng = SeededRng::new(102, 0);
    let c = 1.0;
    let mut violations = 0;
    for _ in 0..1000 {
        let d = 2 + (rng.uniform_open() * 40.0) as usize;
        let s = 1 + (rng.uniform_open() * (d - 1) as f64) as usize;
        let s_hat = 1 + (rng.uniform_open() * s as f64) as usize;
        let v: Vec<f64> = (0..d).map(|_| 2.0 * rng.standard_normal()).collect();
        let mut v_hat = vec![0.0; d];
        for _ in 0..s_hat {
            let k = (rng.uniform_open() * d as f64) as usize;
            v_hat[k] = rng.standard_normal();
        }
        let lambda = rng.uniform_range(0.0, 0.1) + 1e-9;
        let out = noisy_hard_threshold(&v, s, 1.0, 0.05, lambda, &mut rng, true).unwrap();
        let lhs = sq_dist(&out.projection_of(&v).values, &v);
        let ratio = (d - s) as f64 / (d - s_hat) as f64;
        let rhs = (1.0 + 1.0 / c) * ratio * sq_dist(&v_hat, &v) + 4.0 * (1.0 + c) * out.noise.unwrap().peeling_energy();
        violations += (lhs > rhs * (1.0 + 1e-12)) as usize;
    }
    report(2, "peeling accuracy bound (c = 1)", violations == 0, format!("{violations} violations in 1000"), start, 30.0);
}

#[test]
fn criterion_03_score_soundness() {
    let start = Instant::now();
    let reps = 10_000;
    let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, s: dpminimax::attack::SoundnessSummary| {
        let ok = s.mean_out.abs() <= 4.0 * s.se_out;
        pass &= ok;
        lines.push(format!("{name} {:.3}±{:.3}", s.mean_out, s.se_out));
    };

    let glm = AttackModel::Glm {
        family: GlmFamily::logistic(),
        design: DesignSpec::l2(1.0),
    };
    let glm_est = |data: &AttackData, rng: &mut SeededRng| -> Result<Vec<f64>> {
        let AttackData::Glm(d) = data else { unreachable!() };
        let fam = GlmFamily::logistic();
        let (g, a) = estimate_curvature(d, &fam);
        let cfg = default_dp_glm_config(d.n(), d.d(), &fam, budget, g, a, 1.0)?;
        Ok(fit_dp_glm(d, &fam, &cfg, rng)?.beta)
    };
    check("glm", soundness_experiment(&glm, &glm_est, &[0.3, -0.2, 0.1], 200, reps, 31).unwrap());

    let sparse = AttackModel::SparseGlm {
        family: GlmFamily::logistic(),
        design: DesignSpec::linf(1.0),
    };
    let mut theta = vec![0.0; 20];
    theta[3] = 0.5;
    theta[11] = -0.5;
    let sparse_est = |data: &AttackData, rng: &mut SeededRng| -> Result<Vec<f64>> {
        let AttackData::Glm(d) = data else { unreachable!() };
        let fam = GlmFamily::logistic();
        let mut cfg = default_sparse_glm_config(d.n(), d.d(), 2, &fam, budget, 1.0 / 12.0, 1.0 / 24.0, 0.5, 1.0)?;
        cfg.iht.sparsity = 4;
        cfg.iht.iterations = 5;
        cfg.iht.step_size = 6.0;
        Ok(fit_dp_sparse_glm(d, &fam, &cfg, rng)?.beta)
    };
    check("sparse_glm", soundness_experiment(&sparse, &sparse_est, &theta, 200, reps, 32).unwrap());

    let btl = AttackModel::Btl { edge_probability: 0.5 };
    let btl_theta: Vec<f64> = (0..20).map(|i| 0.8 * (2.0 * i as f64 / 19.0 - 1.0)).collect();
    let btl_est = |data: &AttackData, rng: &mut SeededRng| -> Result<Vec<f64>> {
        let AttackData::Comparisons(c) = data else { unreachable!() };
        let h = default_btl_hyperparams(c.n_items, 0.5, budget, 1.0)?;
        Ok(fit_dp_btl(c, h, rng, SolverOptions::default())?.theta)
    };
    check("btl", soundness_experiment(&btl, &btl_est, &btl_theta, 20, reps, 33).unwrap());

    let np = AttackModel::Nonparam { sigma: 0.5 };
    let spec = SobolevSpec::new(2, 1.0).unwrap();
    let np_est = |data: &AttackData, rng: &mut SeededRng| -> Result<Vec<f64>> {
        let AttackData::Regression { x, y } = data else { unreachable!() };
        let mut cfg = NonparamConfig::defaults(y, &spec, 1.0, Some(0.5));
        cfg.k = 2;
        cfg.sampler.method = KnormMethod::Rejection;
        Ok(fit_dp_nonparam(x, y, &spec, budget, &cfg, rng)?.coeffs.theta)
    };
    check("nonparam", soundness_experiment(&np, &np_est, &[0.3, 0.02], 50, reps, 34).unwrap());

    report(3, "score soundness, 4 models", pass, lines.join(", "), start, 300.0);
}

#[test]
fn criterion_04_completeness_gaussian_mean() {
    let start = Instant::now();
    let model = AttackModel::GaussianLocation { sigma: 1.0 };
    let mut pass = true;
    let mut lines = Vec::new();
    for d in [1usize, 3, 10] {
        let theta: Vec<f64> = (0..d).map(|j| 0.1 * j as f64).collect();
        let c = completeness_experiment(&model, &sample_mean_estimator, &theta, 20, 10_000, 0.01, 40 + d as u64, false)
            .unwrap();
        let fd_ok = (c.divergence_fd - d as f64).abs() <= 1e-9 * d as f64;
        let mc_ok = (c.sum_in_attack - d as f64).abs() <= 4.0 * c.se_in;
        pass &= fd_ok && mc_ok;
        lines.push(format!("d={d}: fd {:.12}, attack {:.3}±{:.3}", c.divergence_fd, c.sum_in_attack, c.se_in));
    }
    report(4, "completeness identity", pass, lines.join("; "), start, 120.0);
}

#[test]
fn criterion_05_stein_identities() {
    let start = Instant::now();
    type F = fn(f64) -> f64;
    let funcs: [(&str, F, F); 5] = [
        ("z", |z| z, |_| 1.0),
        ("z^2", |z| z * z, |z| 2.0 * z),
        ("z^3", |z| z * z * z, |z| 3.0 * z * z),
        ("sin", f64::sin, f64::cos),
        ("tanh", f64::tanh, |z| 1.0 - z.tanh().powi(2)),
    ];
    let mut failures = Vec::new();
    for (di, density) in [SteinDensity::StandardNormal, SteinDensity::Quartic].into_iter().enumerate() {
        for (fi, (name, h, dh)) in funcs.iter().enumerate() {
            let mut rng = SeededRng::new(50, (di * 10 + fi) as u64);
            let c = dpminimax::attack::stein_identity_check(density, h, dh, 1_000_000, &mut rng);
            if !c.pass {
                failures.push(format!("{density:?}/{name} gap {:.2e} se {:.2e}", c.gap, c.se));
            }
        }
    }
    let detail = if failures.is_empty() {
        "10 of 10 within 4 SE".to_string()
    } else {
        failures.join(", ")
    };
    report(5, "Stein identities", failures.is_empty(), detail, start, 60.0);
}

fn glm_rate_config(eps: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ModelKind::Glm);
    cfg.n = (10..=14).map(|k| 1usize << k).collect();
    cfg.d = vec![5];
    cfg.epsilon = vec![eps];
    cfg.delta = vec![DeltaSpec::PowerOfN(-1.1)];
    cfg.replicates = 200;
    cfg.seed = 6;
    cfg.record_timing = false;
    cfg
}

#[test]
fn criterion_06_dp_glm_statistical_regime() {
    let start = Instant::now();
    let out = run_experiment(&glm_rate_config(5.0)).unwrap();
    let fit = fit_loglog_slope(&out.rows, RateAxis::N).unwrap();
    let pass = (-1.25..=-0.75).contains(&fit.slope);
    report(6, "DP-GLM rate at eps = 5", pass, format!("slope {:.3}, target [-1.25, -0.75]", fit.slope), start, 1200.0);
}

#[test]
fn criterion_07_dp_glm_privacy_regime() {
    let start = Instant::now();
    let out = run_experiment(&glm_rate_config(0.1)).unwrap();
    let fit = fit_loglog_slope(&out.rows, RateAxis::N).unwrap();
    let pass = (-2.4..=-1.5).contains(&fit.slope);
    report(7, "DP-GLM rate at eps = 0.1", pass, format!("slope {:.3}, target [-2.4, -1.5]", fit.slope), start, 1200.0);
}

#[test]
fn criterion_08_sparse_dimension_insensitivity() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(ModelKind::SparseGlm);
    cfg.n = vec![10_000];
    cfg.d = vec![50, 200, 800];
    cfg.s_star = vec![3];
    cfg.epsilon = vec![5.0];
    cfg.delta = vec![DeltaSpec::PowerOfN(-1.1)];
    cfg.replicates = 100;
    cfg.seed = 8;
    cfg.record_timing = false;
    cfg.sparsity = Some(6);
    cfg.iterations = Some(5);
    cfg.step_size = Some(6.0);
    cfg.curvature_gamma = Some(1.0 / 12.0);
    cfg.curvature_alpha = Some(1.0 / 24.0);
    let out = run_experiment(&cfg).unwrap();
    let cells = summarize_cells(&out.rows);
    let (lo, hi) = (&cells[0], &cells[2]);
    let bound = 2.5 * (800f64.ln() / 50f64.ln());
    let ratio = hi.mean_risk / lo.mean_risk;
    let pass = hi.mean_risk - hi.se <= bound * (lo.mean_risk + lo.se);
    let mses: Vec<String> = cells.iter().map(|c| format!("{:.4}±{:.4}", c.mean_risk, c.se)).collect();
    report(
        8,
        "sparse GLM dimension insensitivity",
        pass,
        format!("MSE {} ; ratio {ratio:.2} vs bound {bound:.2}", mses.join(", ")),
        start,
        1800.0,
    );
}

#[test]
fn criterion_09_btl_monotonicity() {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (axis, ps, eps) in [("p", vec![0.2, 0.4, 0.8], vec![1.0]), ("eps", vec![0.5], vec![0.3, 1.0, 3.0])] {
        let mut cfg = ExperimentConfig::new(ModelKind::Btl);
        cfg.n = vec![200];
        cfg.p = ps;
        cfg.epsilon = eps;
        cfg.truth_scale = 0.8;
        cfg.replicates = 200;
        cfg.seed = 9;
        cfg.record_timing = false;
        let cells = summarize_cells(&run_experiment(&cfg).unwrap().rows);
        for w in cells.windows(2) {
            let slack = (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
            pass &= w[1].mean_risk <= w[0].mean_risk + slack;
        }
        let mses: Vec<String> = cells.iter().map(|c| format!("{:.4}", c.mean_risk)).collect();
        parts.push(format!("over {axis}: {}", mses.join(" > ")));
    }
    report(9, "BTL risk monotonicity", pass, parts.join("; "), start, 900.0);
}

#[test]
fn criterion_10_nonparam_bias_term() {
    let start = Instant::now();
    let theta = [0.4, 0.3, -0.25, 0.2, 0.1, -0.15];
    let f = |x: f64| series_eval(&theta, x);
    // Mean of each empirical coefficient, E[Y phi_j(X)] = int f phi_j.
    let mean_coeff = |j: usize| {
        let m = 20_000;
        let h = 1.0 / m as f64;
        let g = |x: f64| f(x) * fourier_eval(j, x).unwrap();
        let mut acc = g(0.0) + g(1.0);
        for i in 1..m {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        acc * h / 3.0
    };
    let mut worst = 0.0f64;
    for k in 1..=10usize {
        let mean: Vec<f64> = (1..=k).map(mean_coeff).collect();
        let tail = mise(|x| series_eval(&mean, x), f);
        let parseval: f64 = theta.iter().skip(k).map(|t| t * t).sum();
        worst = worst.max((tail - parseval).abs());
    }
    // A noiseless sample reproduces the truth at K >= 6 as n grows.
    let mut rng = SeededRng::new(10, 0);
    let x: Vec<f64> = (0..200_000).map(|_| rng.uniform_open()).collect();
    let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
    let est = truncated_empirical_coeffs(&x, &y, 8, f64::INFINITY).unwrap();
    let sample_tail = sq_dist(&est.theta[..6], &theta) + est.theta[6..].iter().map(|t| t * t).sum::<f64>();
    let pass = worst <= 1e-8 && sample_tail < 1e-3;
    report(
        10,
        "nonparametric bias term",
        pass,
        format!("max |tail - Parseval| {worst:.2e}, empirical K=8 deviation {sample_tail:.1e}"),
        start,
        60.0,
    );
}

#[test]
fn criterion_11_knorm_one_dimension() {
    let start = Instant::now();
    let grid = OrbitopeGrid::with_default_size(1).unwrap();
    let scale = 0.8;
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, method) in [("hit-and-run", KnormMethod::HitAndRun), ("rejection", KnormMethod::Rejection)] {
        let cfg = KnormConfig {
            method,
            ..KnormConfig::default()
        };
        let mut rng = SeededRng::new(11, 0);
        let xs: Vec<f64> = sample_knorm_stream(scale, &grid, &mut rng, &cfg, 10_000)
            .unwrap()
            .into_iter()
            .map(|v| v[0])
            .collect();
        let p = ks_p_value(ks_statistic(&xs, |x| laplace_cdf(x, scale)), xs.len());
        pass &= p > 0.01;
        detail.push(format!("{name} p = {p:.3}"));
    }
    report(11, "K-norm 1-D reduction to Laplace", pass, detail.join(", "), start, 60.0);
}

#[test]
fn criterion_12_privacy_audit() {
    let start = Instant::now();
    let delta = 1e-5;
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.5, 1.0, 2.0] {
        let cfg = AuditConfig {
            trials: 1_000_000,
            bins: 50,
            delta,
            ..AuditConfig::default()
        };
        for (name, mech, budget) in [
            ("laplace", CountMechanism::Laplace, PrivacyBudget::pure(eps).unwrap()),
            ("gaussian", CountMechanism::Gaussian, PrivacyBudget::new(eps, delta).unwrap()),
            ("broken", CountMechanism::BrokenLaplace, PrivacyBudget::pure(eps).unwrap()),
        ] {
            let m = mech.handle(budget).unwrap();
            let r = privacy_audit(&m, &0.0, &1.0, &cfg, 12).unwrap();
            pass &= if mech == CountMechanism::BrokenLaplace {
                r.epsilon_hat > eps
            } else {
                r.epsilon_hat <= eps + 0.1
            };
            parts.push(format!("{name}@{eps}: {:.3}", r.epsilon_hat));
        }
    }
    report(12, "empirical privacy audit", pass, parts.join(", "), start, 300.0);
}

#[test]
fn criterion_13_privacy_suppresses_attack() {
    let start = Instant::now();
    let d = 20;
    let n = 16_000;
    let theta = vec![0.05; d];
    let model = AttackModel::Glm {
        family: GlmFamily::logistic(),
        design: DesignSpec::l2(1.0),
    };
    let summary = |eps: f64| {
        let budget = PrivacyBudget::new(eps, (n as f64).powf(-1.1)).unwrap();
        let est = move |data: &AttackData, rng: &mut SeededRng| -> Result<Vec<f64>> {
            let AttackData::Glm(x) = data else { unreachable!() };
            let fam = GlmFamily::logistic();
            let (g, a) = estimate_curvature(x, &fam);
            let cfg = default_dp_glm_config(x.n(), x.d(), &fam, budget, g, a, 1.0)?;
            let beta = fit_dp_glm(x, &fam, &cfg, rng)?.beta;
            Ok(beta.into_iter().map(|b| b.clamp(-1.0, 1.0)).collect())
        };
        in_sample_attack_sum(&model, &est, &theta, n, 1000, 13, false).unwrap()
    };
    let (lo, hi) = (summary(0.2), summary(5.0));
    let combined = (lo.se_in.powi(2) + hi.se_in.powi(2)).sqrt();
    let pass = lo.sum_in_attack <= hi.sum_in_attack - combined;
    report(
        13,
        "privacy suppresses the attack",
        pass,
        format!(
            "eps 0.2: {:.2}±{:.2}, eps 5: {:.2}±{:.2}",
            lo.sum_in_attack, lo.se_in, hi.sum_in_attack, hi.se_in
        ),
        start,
        600.0,
    );
}
