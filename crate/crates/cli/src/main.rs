use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dpminimax::attack::write_records_csv;
use dpminimax::btl::{btl_privacy_certified, default_btl_hyperparams, fit_dp_btl, ComparisonData, SolverOptions};
use dpminimax::dp_glm::{default_dp_glm_config, estimate_curvature};
use dpminimax::harness::{
    fit_loglog_slope, privacy_audit, read_rows_csv, run_attack, run_experiment, summarize_cells, write_rows_csv,
    AttackKind, AuditConfig, CountMechanism, ExperimentConfig, RateAxis,
};
use dpminimax::nonparam::{fit_dp_nonparam, read_regression_csv, KnormMethod, NonparamConfig, SobolevSpec};
use dpminimax::sparse::{default_sparse_glm_config, fit_dp_sparse_glm};
use dpminimax::{fit_dp_glm, DesignSpec, Error, GlmDataset, GlmFamily, PrivacyBudget, Result, SeededRng};

#[derive(Parser)]
#[command(name = "dpminimax", version, about = "Differentially private estimation and score-attack experiments")]
struct Cli {
    /// RNG seed; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicated experiments.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Private GLM fit by noisy gradient descent.
    FitGlm(FitGlmArgs),
    /// Private sparse GLM fit by noisy iterative hard thresholding.
    FitSparseGlm(FitSparseArgs),
    /// Private Bradley-Terry-Luce ranking by objective perturbation.
    FitBtl(FitBtlArgs),
    /// Private Fourier-series regression.
    FitNonparam(FitNonparamArgs),
    /// Score-attack soundness or completeness experiment.
    Attack(AttackArgs),
    /// Empirical privacy audit of a reference mechanism.
    Audit(AuditArgs),
    /// Replicated risk simulation over a config grid.
    Bench(BenchArgs),
    /// Log-log slope of mean risk from a bench CSV.
    RateFit(RateFitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Logistic,
    Gaussian,
}

#[derive(Args)]
struct GlmCommon {
    /// CSV with header y,x_1,...,x_d.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "logistic")]
    family: Family,
    /// Noise sd of the Gaussian family.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_x: f64,
    /// Curvature upper bound; estimated from the design when absent.
    #[arg(long)]
    gamma: Option<f64>,
    /// Curvature lower bound; estimated from the design when absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
}

impl GlmCommon {
    fn family(&self) -> Result<GlmFamily> {
        match self.family {
            Family::Logistic => Ok(GlmFamily::logistic()),
            Family::Gaussian => GlmFamily::gaussian(self.sigma),
        }
    }

    fn curvature(&self, data: &GlmDataset, family: &GlmFamily) -> (f64, f64) {
        let (g, a) = estimate_curvature(data, family);
        (self.gamma.unwrap_or(g), self.alpha.unwrap_or(a))
    }
}

#[derive(Args)]
struct FitGlmArgs {
    #[command(flatten)]
    glm: GlmCommon,
    /// Bound the rows in L2 (`||x|| <= sigma_x sqrt(d)`) or sup norm.
    #[arg(long, value_enum, default_value = "l2")]
    design: Design,
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Design {
    L2,
    Linf,
}

#[derive(Args)]
struct FitSparseArgs {
    #[command(flatten)]
    glm: GlmCommon,
    #[arg(long)]
    s_star: usize,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
}

#[derive(Args)]
struct FitBtlArgs {
    /// CSV with header i,j,y.
    #[arg(long)]
    data: PathBuf,
    /// Number of items; one more than the largest index when absent.
    #[arg(long)]
    items: Option<usize>,
    /// Edge probability; the observed edge density when absent.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Auto,
    HitAndRun,
    Rejection,
}

#[derive(Args)]
struct FitNonparamArgs {
    /// CSV with header x,y.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Sobolev smoothness.
    #[arg(long, default_value_t = 2)]
    alpha: u32,
    /// Sobolev radius.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    k: Option<usize>,
    /// Response noise sd; median absolute deviation when absent.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    sampler: Sampler,
    /// Also write the fitted curve as CSV x,f.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    points: usize,
}

#[derive(Args)]
struct AttackArgs {
    /// Experiment config describing a single cell.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "soundness")]
    kind: String,
    #[arg(long, default_value_t = 0.01)]
    fd_step: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mechanism {
    Laplace,
    Gaussian,
    BrokenLaplace,
    Identity,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, value_enum)]
    mechanism: Mechanism,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// One minus the Clopper-Pearson confidence level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RateFitArgs {
    /// Rows written by `bench`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "n")]
    axis: String,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

/// CSV goes to `out`, the JSON summary next to it (or to stderr).
fn emit_with_summary(out: Option<&Path>, csv: &[u8], summary: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)? + "\n";
    emit(out, csv)?;
    match out {
        Some(p) => std::fs::write(p.with_extension("json"), text)?,
        None => io::stderr().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = Some(o.to_path_buf());
    }
    Ok(cfg)
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {t} threads: {e}")))?;
    }
    let out = cli.out.as_deref();
    let mut rng = SeededRng::new(cli.seed.unwrap_or(0), 0);
    match cli.command {
        Command::FitGlm(a) => {
            let family = a.glm.family()?;
            let design = match a.design {
                Design::L2 => DesignSpec::l2(a.glm.sigma_x),
                Design::Linf => DesignSpec::linf(a.glm.sigma_x),
            };
            let data = GlmDataset::load(&a.glm.data, design)?;
            let budget = PrivacyBudget::new(a.glm.epsilon, a.glm.delta)?;
            let (g, al) = a.glm.curvature(&data, &family);
            let mut cfg = default_dp_glm_config(data.n(), data.d(), &family, budget, g, al, a.glm.sigma_x)?;
            if let Some(t) = a.glm.iterations {
                cfg.iterations = t;
            }
            if let Some(eta) = a.glm.step_size {
                cfg.step_size = eta;
            }
            if let Some(r) = a.truncation {
                cfg.truncation = r;
            }
            if let Some(b) = a.noise_scale {
                cfg.noise_scale = b;
            }
            if !dpminimax::dp_glm::sample_size_adequate(data.n(), data.d(), budget) {
                warn("n is below the scaling threshold 10 d sqrt(log(1/delta)) log^2(n) / eps");
            }
            let fit = fit_dp_glm(&data, &family, &cfg, &mut rng)?;
            if let Some(w) = &fit.privacy_warning {
                warn(w);
            }
            emit(out, (fit.to_json()? + "\n").as_bytes())
        }
        Command::FitSparseGlm(a) => {
            let family = a.glm.family()?;
            let data = GlmDataset::load(&a.glm.data, DesignSpec::linf(a.glm.sigma_x))?;
            let budget = PrivacyBudget::new(a.glm.epsilon, a.glm.delta)?;
            let (g, al) = a.glm.curvature(&data, &family);
            let mut cfg = default_sparse_glm_config(
                data.n(),
                data.d(),
                a.s_star,
                &family,
                budget,
                g,
                al,
                a.rho,
                a.glm.sigma_x,
            )?;
            if let Some(s) = a.sparsity {
                cfg.iht.sparsity = s;
            }
            if let Some(t) = a.glm.iterations {
                cfg.iht.iterations = t;
            }
            if let Some(eta) = a.glm.step_size {
                cfg.iht.step_size = eta;
            }
            let fit = fit_dp_sparse_glm(&data, &family, &cfg, &mut rng)?;
            if let Some(w) = &fit.privacy_warning {
                warn(w);
            }
            emit(out, (fit.to_json()? + "\n").as_bytes())
        }
        Command::FitBtl(a) => {
            let file = BufReader::new(File::open(&a.data)?);
            let probe = ComparisonData::read_csv(file, a.items, a.p.unwrap_or(1.0))?;
            let n = probe.n_items;
            let p = a.p.unwrap_or_else(|| {
                let pairs = (n * n.saturating_sub(1) / 2).max(1);
                (probe.m() as f64 / pairs as f64).clamp(f64::MIN_POSITIVE, 1.0)
            });
            let data = ComparisonData { edge_probability: p, ..probe };
            let budget = PrivacyBudget::new(a.epsilon, a.delta)?;
            let mut h = default_btl_hyperparams(n, p, budget, a.c0)?;
            if let Some(g) = a.ridge {
                h.gamma = g;
            }
            if let Some(s) = a.noise_sd {
                h.sigma_noise = s;
            }
            if !btl_privacy_certified(n, h, budget) {
                warn("ridge or perturbation sd is below the level certified for this budget");
            }
            let opts = SolverOptions {
                max_iterations: a.max_iterations,
                tolerance: a.tolerance,
            };
            let fit = fit_dp_btl(&data, h, &mut rng, opts)?;
            emit(out, (fit.to_json()? + "\n").as_bytes())
        }
        Command::FitNonparam(a) => {
            let (x, y) = read_regression_csv(BufReader::new(File::open(&a.data)?))?;
            let spec = SobolevSpec::new(a.alpha, a.c)?;
            let budget = PrivacyBudget::pure(a.epsilon)?;
            let mut cfg = NonparamConfig::defaults(&y, &spec, a.epsilon, a.sigma);
            if let Some(k) = a.k {
                cfg.k = k;
                cfg.grid_size = dpminimax::nonparam::default_grid_size(k);
            }
            cfg.sampler.method = match a.sampler {
                Sampler::Auto => KnormMethod::Auto,
                Sampler::HitAndRun => KnormMethod::HitAndRun,
                Sampler::Rejection => KnormMethod::Rejection,
            };
            let est = fit_dp_nonparam(&x, &y, &spec, budget, &cfg, &mut rng)?;
            if let Some(t) = &a.table {
                est.coeffs.write_table(File::create(t)?, a.points)?;
            }
            emit(out, (est.to_json()? + "\n").as_bytes())
        }
        Command::Attack(a) => {
            let cfg = load_config(&a.config, cli.seed, out)?;
            let kind: AttackKind = a.kind.parse()?;
            let outcome = run_attack(&cfg, kind, a.fd_step)?;
            let mut csv = Vec::new();
            write_records_csv(outcome.records(), &mut csv)?;
            emit_with_summary(cfg.out.as_deref(), &csv, &serde_json::to_value(&outcome)?)
        }
        Command::Audit(a) => {
            let (mech, budget, delta) = match a.mechanism {
                Mechanism::Laplace => (CountMechanism::Laplace, PrivacyBudget::pure(a.epsilon)?, 0.0),
                Mechanism::BrokenLaplace => (CountMechanism::BrokenLaplace, PrivacyBudget::pure(a.epsilon)?, 0.0),
                Mechanism::Identity => (CountMechanism::Identity, PrivacyBudget::pure(a.epsilon)?, 0.0),
                Mechanism::Gaussian => (CountMechanism::Gaussian, PrivacyBudget::new(a.epsilon, a.delta)?, a.delta),
            };
            let cfg = AuditConfig {
                trials: a.trials,
                bins: a.bins,
                delta,
                alpha: a.alpha,
                projection: 0,
            };
            let handle = mech.handle(budget)?;
            let report = privacy_audit(&handle, &0.0, &1.0, &cfg, cli.seed.unwrap_or(0))?;
            let v = json!({
                "mechanism": mech,
                "epsilon": a.epsilon,
                "epsilon_hat": if report.unbounded() { json!("inf") } else { json!(report.epsilon_hat) },
                "unbounded": report.unbounded(),
                "trials": report.trials,
                "bins_used": report.bins_used,
                "note": report.note,
            });
            emit(out, (serde_json::to_string_pretty(&v)? + "\n").as_bytes())
        }
        Command::Bench(a) => {
            let cfg = load_config(&a.config, cli.seed, out)?;
            let result = run_experiment(&cfg)?;
            for w in &result.warnings {
                warn(w);
            }
            let mut csv = Vec::new();
            write_rows_csv(&result.rows, &mut csv)?;
            let summary = json!({
                "cells": summarize_cells(&result.rows),
                "warnings": result.warnings,
            });
            emit_with_summary(cfg.out.as_deref(), &csv, &summary)
        }
        Command::RateFit(a) => {
            let axis: RateAxis = a.axis.parse()?;
            let rows = read_rows_csv(BufReader::new(File::open(&a.input)?))?;
            let fit = fit_loglog_slope(&rows, axis)?;
            emit(out, (serde_json::to_string_pretty(&fit)? + "\n").as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
