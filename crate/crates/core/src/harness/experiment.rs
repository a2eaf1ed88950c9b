use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cell, ExperimentConfig, FamilyChoice, ModelKind};
use crate::attack::{AttackData, AttackModel};
use crate::btl::{default_btl_hyperparams, fit_dp_btl, SolverOptions};
use crate::dp_glm::{default_dp_glm_config, estimate_curvature, fit_dp_glm, sample_size_adequate};
use crate::error::{Error, Result};
use crate::glm::{DesignSpec, GlmDataset, GlmFamily};
use crate::mechanisms::PrivacyBudget;
use crate::nonparam::{
    default_grid_size, default_k, fit_dp_nonparam, mise, series_eval, NonparamConfig, SobolevSpec,
};
use crate::rng::SeededRng;
use crate::sparse::{default_sparse_glm_config, fit_dp_sparse_glm};
use crate::stats::{simple_ols, RunningStats};

const TRUTH_TERMS: usize = 10;

/// One `(cell, replicate)` outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: usize,
    pub replicate: usize,
    pub n: usize,
    pub d: usize,
    pub s_star: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: u32,
    pub c: f64,
    /// `||theta_hat - theta||^2`, or the integrated squared error for regression.
    pub squared_error: f64,
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// Cells where the sample-size scaling check fails.
    pub warnings: Vec<String>,
}

pub(crate) fn family_of(cfg: &ExperimentConfig) -> Result<GlmFamily> {
    match cfg.family {
        FamilyChoice::Logistic => Ok(GlmFamily::logistic()),
        FamilyChoice::Gaussian => GlmFamily::gaussian(cfg.sigma),
    }
}

/// The known truth of a cell.
///
/// GLM: every coefficient equals `truth_scale`. Sparse GLM: the first `s*`
/// coefficients equal `truth_scale`. BTL: `truth_scale` times an evenly
/// spaced grid on `[-1, 1]`. Regression: `theta_1 = truth_scale` and
/// `theta_j ∝ j^{-(alpha+1)}` for `2 <= j <= 10`, scaled to half the Sobolev radius.
pub fn truth_for(cfg: &ExperimentConfig, cell: &Cell) -> Result<Vec<f64>> {
    let s = cfg.truth_scale;
    match cfg.model {
        ModelKind::Glm => Ok(vec![s; cell.d]),
        ModelKind::SparseGlm => {
            if cell.s_star == 0 || cell.s_star > cell.d {
                return Err(Error::Config(format!("need 1 <= s* <= d, got s* = {}, d = {}", cell.s_star, cell.d)));
            }
            Ok((0..cell.d).map(|j| if j < cell.s_star { s } else { 0.0 }).collect())
        }
        ModelKind::Btl => {
            if s > 1.0 {
                return Err(Error::Config("BTL truth_scale must be at most 1".into()));
            }
            let m = (cell.n - 1) as f64;
            Ok((0..cell.n).map(|i| s * (2.0 * i as f64 / m - 1.0)).collect())
        }
        ModelKind::Nonparam => {
            let spec = SobolevSpec::new(cell.alpha, cell.c)?;
            let base: Vec<f64> = (2..=TRUTH_TERMS).map(|j| (j as f64).powi(-(cell.alpha as i32 + 1))).collect();
            let w: f64 = base
                .iter()
                .enumerate()
                .map(|(i, b)| (spec.weight(i + 2) * b).powi(2))
                .sum();
            let f = spec.radius_sq().sqrt() / (2.0 * w.sqrt());
            let mut theta = vec![s];
            theta.extend(base.iter().map(|b| f * b));
            Ok(theta)
        }
    }
}

fn curvature(cfg: &ExperimentConfig, data: &GlmDataset, family: &GlmFamily) -> (f64, f64) {
    match (cfg.curvature_gamma, cfg.curvature_alpha) {
        (Some(g), Some(a)) => (g, a),
        (g, a) => {
            let (g_hat, a_hat) = estimate_curvature(data, family);
            (g.unwrap_or(g_hat), a.unwrap_or(a_hat))
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// The data-generating model of a cell.
pub fn attack_model(cfg: &ExperimentConfig, cell: &Cell) -> Result<AttackModel> {
    Ok(match cfg.model {
        ModelKind::Glm => AttackModel::Glm {
            family: family_of(cfg)?,
            design: DesignSpec::l2(cfg.sigma_x),
        },
        ModelKind::SparseGlm => AttackModel::SparseGlm {
            family: family_of(cfg)?,
            design: DesignSpec::linf(cfg.sigma_x),
        },
        ModelKind::Btl => AttackModel::Btl { edge_probability: cell.p },
        ModelKind::Nonparam => AttackModel::Nonparam { sigma: cfg.sigma },
    })
}

/// Number of Fourier coefficients the regression estimator releases.
pub fn series_length(cfg: &ExperimentConfig, cell: &Cell) -> usize {
    cfg.k.unwrap_or_else(|| default_k(cell.n, cell.alpha, cell.epsilon, 1.0))
}

/// The private estimator of a cell, with recipe defaults and config overrides.
pub fn fit_estimate(cfg: &ExperimentConfig, cell: &Cell, data: &AttackData, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let budget = PrivacyBudget::new(cell.epsilon, cell.delta)?;
    match (cfg.model, data) {
        (ModelKind::Glm, AttackData::Glm(data)) => {
            let family = family_of(cfg)?;
            let (g, a) = curvature(cfg, data, &family);
            let mut c = default_dp_glm_config(data.n(), data.d(), &family, budget, g, a, cfg.sigma_x)?;
            if let Some(t) = cfg.iterations {
                c.iterations = t;
            }
            if let Some(eta) = cfg.step_size {
                c.step_size = eta;
            }
            Ok(fit_dp_glm(data, &family, &c, rng)?.beta)
        }
        (ModelKind::SparseGlm, AttackData::Glm(data)) => {
            let family = family_of(cfg)?;
            let (g, a) = curvature(cfg, data, &family);
            let mut c =
                default_sparse_glm_config(data.n(), data.d(), cell.s_star, &family, budget, g, a, cfg.rho, cfg.sigma_x)?;
            if let Some(s) = cfg.sparsity {
                c.iht.sparsity = s;
            }
            if let Some(t) = cfg.iterations {
                c.iht.iterations = t;
            }
            if let Some(eta) = cfg.step_size {
                c.iht.step_size = eta;
            }
            Ok(fit_dp_sparse_glm(data, &family, &c, rng)?.beta)
        }
        (ModelKind::Btl, AttackData::Comparisons(data)) => {
            let mut h = default_btl_hyperparams(data.n_items, cell.p, budget, cfg.c0)?;
            if let Some(g) = cfg.ridge {
                h.gamma = g;
            }
            if let Some(s) = cfg.noise_sd {
                h.sigma_noise = s;
            }
            Ok(fit_dp_btl(data, h, rng, SolverOptions::default())?.theta)
        }
        (ModelKind::Nonparam, AttackData::Regression { x, y }) => {
            let spec = SobolevSpec::new(cell.alpha, cell.c)?;
            let mut nc = NonparamConfig::defaults(y, &spec, cell.epsilon, Some(cfg.sigma));
            nc.k = series_length(cfg, cell);
            nc.grid_size = default_grid_size(nc.k);
            nc.sampler.method = cfg.sampler;
            Ok(fit_dp_nonparam(x, y, &spec, budget, &nc, rng)?.coeffs.theta)
        }
        _ => Err(Error::invalid("data set does not match the configured model")),
    }
}

/// Draw one data set for `cell` and return the estimator's risk.
pub fn run_replicate(cfg: &ExperimentConfig, cell: &Cell, truth: &[f64], rng: &mut SeededRng) -> Result<f64> {
    let data = attack_model(cfg, cell)?.sample_data(truth, cell.n, rng)?;
    let est = fit_estimate(cfg, cell, &data, rng)?;
    Ok(match cfg.model {
        ModelKind::Nonparam => mise(|x| series_eval(&est, x), |x| series_eval(truth, x)),
        _ => sq_dist(&est, truth),
    })
}

/// Run every `(cell, replicate)` task in parallel. Replicate `r` of cell `c`
/// draws from stream `(c << 32) | r` of `seed`, so the rows do not depend on
/// the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cells = cfg.cells();
    let truths: Vec<Vec<f64>> = cells.iter().map(|c| truth_for(cfg, c)).collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    if cfg.model == ModelKind::Glm {
        for c in &cells {
            if !sample_size_adequate(c.n, c.d, PrivacyBudget::new(c.epsilon, c.delta)?) {
                warnings.push(format!(
                    "cell {}: n = {} is below the scaling threshold 10 d sqrt(log(1/delta)) log^2(n) / eps",
                    c.index, c.n
                ));
            }
        }
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicates).map(move |r| (c, r)))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(ci, r)| {
            let cell = &cells[ci];
            let mut rng = SeededRng::new(cfg.seed, ((ci as u64) << 32) | r as u64);
            let start = Instant::now();
            let risk = run_replicate(cfg, cell, &truths[ci], &mut rng)?;
            let elapsed = start.elapsed().as_secs_f64();
            if !(risk.is_finite() && risk >= 0.0) {
                return Err(Error::Infeasible(format!("cell {ci} replicate {r}: risk {risk} is not finite")));
            }
            Ok(ResultRow {
                cell: ci,
                replicate: r,
                n: cell.n,
                d: cell.d,
                s_star: cell.s_star,
                p: cell.p,
                epsilon: cell.epsilon,
                delta: cell.delta,
                alpha: cell.alpha,
                c: cell.c,
                squared_error: risk,
                wall_time_s: cfg.record_timing.then_some(elapsed),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput { rows, warnings })
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub d: usize,
    pub s_star: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: u32,
    pub c: f64,
    pub replicates: usize,
    pub mean_risk: f64,
    pub se: f64,
}

/// Mean risk and its standard error per cell, ordered by cell index.
pub fn summarize_cells(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.cell, r.replicate));
    let mut out: Vec<(CellSummary, RunningStats)> = Vec::new();
    for r in sorted {
        if out.last().map(|(c, _)| c.cell) != Some(r.cell) {
            out.push((
                CellSummary {
                    cell: r.cell,
                    n: r.n,
                    d: r.d,
                    s_star: r.s_star,
                    p: r.p,
                    epsilon: r.epsilon,
                    delta: r.delta,
                    alpha: r.alpha,
                    c: r.c,
                    replicates: 0,
                    mean_risk: 0.0,
                    se: 0.0,
                },
                RunningStats::new(),
            ));
        }
        out.last_mut().unwrap().1.push(r.squared_error);
    }
    out.into_iter()
        .map(|(mut c, s)| {
            c.replicates = s.count() as usize;
            c.mean_risk = s.mean();
            c.se = if s.count() >= 2 { s.std_error() } else { f64::NAN };
            c
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAxis {
    N,
    Eps,
    D,
}

impl FromStr for RateAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(RateAxis::N),
            "eps" | "epsilon" => Ok(RateAxis::Eps),
            "d" => Ok(RateAxis::D),
            o => Err(Error::Config(format!("unknown rate axis '{o}' (expected n, eps or d)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub x: f64,
    pub mean_risk: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub cells: Vec<RateCell>,
}

/// OLS of `log(mean risk)` on `log(x)` over cells with at least two replicates.
///
/// All other grid coordinates must be constant across those cells, except
/// `delta`, which may track `n`.
pub fn fit_loglog_slope(rows: &[ResultRow], axis: RateAxis) -> Result<RateFit> {
    let cells: Vec<CellSummary> = summarize_cells(rows).into_iter().filter(|c| c.replicates >= 2).collect();
    let key = |c: &CellSummary| {
        (
            if axis == RateAxis::N { 0 } else { c.n },
            if axis == RateAxis::D { 0 } else { c.d },
            c.s_star,
            c.p.to_bits(),
            if axis == RateAxis::Eps { 0 } else { c.epsilon.to_bits() },
            c.alpha,
            c.c.to_bits(),
        )
    };
    if let Some(first) = cells.first() {
        if cells.iter().any(|c| key(c) != key(first)) {
            return Err(Error::invalid("rows vary in more than the fitted axis"));
        }
    }
    let xval = |c: &CellSummary| match axis {
        RateAxis::N => c.n as f64,
        RateAxis::Eps => c.epsilon,
        RateAxis::D => c.d as f64,
    };
    let mut xs: Vec<f64> = cells.iter().map(xval).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::invalid(format!(
            "a rate fit needs at least 3 distinct x values with >= 2 replicates, got {}",
            xs.len()
        )));
    }
    if xs.len() != cells.len() {
        return Err(Error::invalid("several cells share the same x value"));
    }
    if cells.iter().any(|c| !(c.mean_risk > 0.0)) {
        return Err(Error::invalid("log-log fit needs positive mean risk in every cell"));
    }
    let lx: Vec<f64> = cells.iter().map(|c| xval(c).ln()).collect();
    let ly: Vec<f64> = cells.iter().map(|c| c.mean_risk.ln()).collect();
    let (slope, intercept, r_squared) = simple_ols(&lx, &ly);
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        cells: cells
            .iter()
            .map(|c| RateCell {
                x: xval(c),
                mean_risk: c.mean_risk,
                se: c.se,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(ns: &[usize], risk: impl Fn(f64) -> f64) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for (ci, &n) in ns.iter().enumerate() {
            for r in 0..3 {
                rows.push(ResultRow {
                    cell: ci,
                    replicate: r,
                    n,
                    d: 5,
                    s_star: 1,
                    p: 0.5,
                    epsilon: 1.0,
                    delta: (n as f64).powf(-1.1),
                    alpha: 2,
                    c: 1.0,
                    squared_error: risk(n as f64) * (1.0 + 0.01 * (r as f64 - 1.0)),
                    wall_time_s: None,
                });
            }
        }
        rows
    }

    #[test]
    fn exact_power_laws() {
        let ns = [100, 200, 400, 800, 1600];
        let f = fit_loglog_slope(&synthetic(&ns, |n| 4.0 / n), RateAxis::N).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_loglog_slope(&synthetic(&ns, |n| 1.0 / (n * n)), RateAxis::N).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_rate_lies_between() {
        let ns = [100, 400, 1600, 6400];
        let f = fit_loglog_slope(&synthetic(&ns, |n| 1.0 / n + 1e3 / (n * n)), RateAxis::N).unwrap();
        assert!(f.slope > -2.0 && f.slope < -1.0, "{}", f.slope);
    }

    #[test]
    fn needs_three_cells() {
        assert!(fit_loglog_slope(&synthetic(&[100, 200], |n| 1.0 / n), RateAxis::N).is_err());
        let mut rows = synthetic(&[100, 200, 400], |n| 1.0 / n);
        rows.retain(|r| r.cell != 2 || r.replicate == 0);
        assert!(fit_loglog_slope(&rows, RateAxis::N).is_err());
    }

    #[test]
    fn rejects_varying_nuisance() {
        let mut rows = synthetic(&[100, 200, 400], |n| 1.0 / n);
        rows[0].d = 6;
        assert!(fit_loglog_slope(&rows, RateAxis::N).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = synthetic(&[100, 200], |n| 1.0 / n);
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let back = read_rows_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn truths_are_admissible() {
        let mut cfg = ExperimentConfig::new(ModelKind::Nonparam);
        cfg.alpha = vec![1, 2, 3];
        for cell in cfg.cells() {
            let theta = truth_for(&cfg, &cell).unwrap();
            assert!(SobolevSpec::new(cell.alpha, cell.c).unwrap().contains(&theta));
        }
        let mut cfg = ExperimentConfig::new(ModelKind::Btl);
        cfg.n = vec![7];
        let theta = truth_for(&cfg, &cfg.cells()[0]).unwrap();
        assert!(theta.iter().sum::<f64>().abs() < 1e-12);
        assert!(theta.iter().all(|t| t.abs() <= 1.0));
    }
}
