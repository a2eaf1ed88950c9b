//! Periodic Sobolev regression with a private truncated Fourier-series
//! estimator.

pub mod knorm;
pub mod orbitope;

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mechanisms::PrivacyBudget;
use crate::rng::{NoiseSource, SeededRng};

pub use knorm::{sample_knorm_noise, sample_knorm_stream, KnormChain, KnormConfig, KnormMethod, McmcConfig};
pub use orbitope::{default_grid_size, orbitope_gauge, orbitope_norm, OrbitopeGrid};

/// `phi_1 = 1`, `phi_{2k} = sqrt2 cos(2 pi k x)`, `phi_{2k+1} = sqrt2 sin(2 pi k x)`.
pub fn fourier_eval(j: usize, x: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::invalid("basis functions are indexed from 1"));
    }
    Ok(basis(j, x))
}

fn basis(j: usize, x: f64) -> f64 {
    if j == 1 {
        return 1.0;
    }
    let k = (j / 2) as f64;
    let arg = 2.0 * PI * k * x;
    if j.is_multiple_of(2) {
        SQRT_2 * arg.cos()
    } else {
        SQRT_2 * arg.sin()
    }
}

/// `(phi_1(x), ..., phi_K(x))`.
pub fn fourier_features(x: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|j| basis(j, x)).collect()
}

/// `sum_j theta_j phi_j(x)`.
pub fn series_eval(theta: &[f64], x: f64) -> f64 {
    theta.iter().enumerate().map(|(j, t)| t * basis(j + 1, x)).sum()
}

/// Periodic Sobolev ellipsoid `sum tau_j^2 theta_j^2 < C^2 / pi^{2 alpha}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevSpec {
    pub alpha: u32,
    pub c: f64,
}

impl SobolevSpec {
    pub fn new(alpha: u32, c: f64) -> Result<Self> {
        if alpha == 0 || !(c > 0.0) {
            return Err(Error::invalid("Sobolev class needs alpha >= 1 and C > 0"));
        }
        Ok(Self { alpha, c })
    }

    /// `tau_j = j^alpha` for even `j`, `(j - 1)^alpha` for odd `j`.
    pub fn weight(&self, j: usize) -> f64 {
        let base = if j.is_multiple_of(2) { j } else { j - 1 };
        (base as f64).powi(self.alpha as i32)
    }

    pub fn radius_sq(&self) -> f64 {
        self.c * self.c / PI.powi(2 * self.alpha as i32)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        let s: f64 = theta
            .iter()
            .enumerate()
            .map(|(j, t)| (self.weight(j + 1) * t).powi(2))
            .sum();
        s < self.radius_sq()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierCoeffs {
    pub theta: Vec<f64>,
}

impl FourierCoeffs {
    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        series_eval(&self.theta, x)
    }

    /// CSV `x,f` on the points `i / (points - 1)`.
    pub fn write_table<W: Write>(&self, w: W, points: usize) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "f"])?;
        let denom = (points.max(2) - 1) as f64;
        for i in 0..points {
            let x = i as f64 / denom;
            wtr.write_record([x.to_string(), self.eval(x).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `(1/n) sum_i Y_i 1(|Y_i| <= T) phi(X_i)`.
pub fn truncated_empirical_coeffs(x: &[f64], y: &[f64], k: usize, truncation: f64) -> Result<FourierCoeffs> {
    check_dim(x.len(), y.len())?;
    if k == 0 || !(truncation > 0.0) {
        return Err(Error::invalid("need K >= 1 and T > 0"));
    }
    if x.is_empty() {
        return Err(Error::invalid("need at least one observation"));
    }
    let mut theta = vec![0.0; k];
    for (&xi, &yi) in x.iter().zip(y) {
        if yi.abs() <= truncation {
            for (j, t) in theta.iter_mut().enumerate() {
                *t += yi * basis(j + 1, xi);
            }
        }
    }
    let n = x.len() as f64;
    theta.iter_mut().for_each(|t| *t /= n);
    Ok(FourierCoeffs { theta })
}

/// `round(c1 min(n^{1/(2 alpha + 1)}, (n eps)^{1/(alpha + 1)}))`, at least 1.
pub fn default_k(n: usize, alpha: u32, eps: f64, c1: f64) -> usize {
    let a = alpha as f64;
    let nf = n as f64;
    let k = c1 * nf.powf(1.0 / (2.0 * a + 1.0)).min((nf * eps).powf(1.0 / (a + 1.0)));
    (k.round() as usize).max(1)
}

/// `T = 4 sigma sqrt(log n)`.
pub fn default_truncation(sigma: f64, n: usize) -> f64 {
    4.0 * sigma * (n as f64).ln().sqrt()
}

/// Normal-consistent median absolute deviation of `y`.
pub fn mad_sigma(y: &[f64]) -> f64 {
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.total_cmp(b));
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    };
    let mut ys = y.to_vec();
    let med = median(&mut ys);
    let mut dev: Vec<f64> = y.iter().map(|v| (v - med).abs()).collect();
    1.482_602_218_505_602 * median(&mut dev)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonparamConfig {
    pub k: usize,
    pub truncation: f64,
    pub grid_size: usize,
    pub sampler: KnormConfig,
}

impl NonparamConfig {
    /// `K` from [`default_k`] with `c1 = 1`, `T` from [`default_truncation`]
    /// (`sigma` from [`mad_sigma`] when not given), default grid and sampler.
    pub fn defaults(y: &[f64], spec: &SobolevSpec, eps: f64, sigma: Option<f64>) -> Self {
        let n = y.len();
        let k = default_k(n, spec.alpha, eps, 1.0);
        let sigma = sigma.unwrap_or_else(|| mad_sigma(y));
        Self {
            k,
            truncation: default_truncation(sigma, n.max(2)),
            grid_size: orbitope::default_grid_size(k),
            sampler: KnormConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonparamEstimate {
    pub coeffs: FourierCoeffs,
    /// K-norm scale `T / (2 n eps)`.
    pub noise_scale: f64,
    pub config: NonparamConfig,
}

impl NonparamEstimate {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.eval(x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Truncated empirical Fourier coefficients plus K-norm noise at scale
/// `T / (2 n eps)`. Pure privacy: the budget's `delta` is ignored. The class
/// only enters through `cfg.k`; `spec` is validated.
pub fn fit_dp_nonparam(
    x: &[f64],
    y: &[f64],
    spec: &SobolevSpec,
    budget: PrivacyBudget,
    cfg: &NonparamConfig,
    rng: &mut SeededRng,
) -> Result<NonparamEstimate> {
    SobolevSpec::new(spec.alpha, spec.c)?;
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("covariates must lie in [0, 1]"));
    }
    let mut coeffs = truncated_empirical_coeffs(x, y, cfg.k, cfg.truncation)?;
    let scale = cfg.truncation / (2.0 * x.len() as f64 * budget.epsilon());
    let grid = OrbitopeGrid::new(cfg.k, cfg.grid_size)?;
    let w = sample_knorm_noise(scale, &grid, rng, &cfg.sampler)?;
    coeffs.theta.iter_mut().zip(w).for_each(|(t, n)| *t += n);
    Ok(NonparamEstimate {
        coeffs,
        noise_scale: scale,
        config: cfg.clone(),
    })
}

/// `int_0^1 (f_hat - f)^2` by composite Simpson on 10^4 intervals.
pub fn mise(estimate: impl Fn(f64) -> f64, truth: impl Fn(f64) -> f64) -> f64 {
    simpson(|x| (estimate(x) - truth(x)).powi(2), 10_000)
}

fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

/// `n` observations `Y = f(X) + sigma Z` with `X` uniform on `[0, 1]`.
pub fn sample_regression(
    f: impl Fn(f64) -> f64,
    n: usize,
    sigma: f64,
    rng: &mut SeededRng,
) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n).map(|_| rng.uniform_open()).collect();
    let y = x.iter().map(|&xi| f(xi) + sigma * rng.standard_normal()).collect();
    (x, y)
}

/// Write observations as CSV with header `x,y`.
pub fn write_regression_csv<W: Write>(x: &[f64], y: &[f64], w: W) -> Result<()> {
    check_dim(x.len(), y.len())?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "y"])?;
    for (a, b) in x.iter().zip(y) {
        wtr.write_record([a.to_string(), b.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read observations from CSV with header `x,y`.
pub fn read_regression_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let (a, b): (f64, f64) = row?;
        x.push(a);
        y.push(b);
    }
    if x.is_empty() {
        return Err(Error::invalid("regression file has no rows"));
    }
    Ok((x, y))
}
