//! Private GLM regression by noisy truncated gradient descent.
//!
//! Each of the `T` iterations takes a full gradient step on the truncated
//! likelihood and adds spherical Gaussian noise calibrated to the per-step
//! budget `(eps / T, delta / T)`. The iteration count is fixed in advance so
//! the privacy accounting is static.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::glm::{glm_gradient, neg_log_likelihood, GlmDataset, GlmFamily};
use crate::mechanisms::{gaussian_variance, split_budget, PrivacyBudget};
use crate::rng::NoiseSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpGlmConfig {
    /// `eta0`.
    pub step_size: f64,
    /// `T`.
    pub iterations: usize,
    /// `R`; `f64::INFINITY` disables truncation.
    pub truncation: f64,
    /// `B`.
    pub noise_scale: f64,
    pub budget: PrivacyBudget,
    pub beta0: Vec<f64>,
}

impl DpGlmConfig {
    fn validate(&self, d: usize) -> Result<()> {
        check_dim(d, self.beta0.len())?;
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step size must be positive and finite"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("need at least one iteration"));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::invalid("truncation level must be positive"));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid("noise scale B must be positive and finite"));
        }
        if self.budget.is_pure() {
            return Err(Error::Unsupported(
                "noisy gradient descent uses the Gaussian mechanism and needs delta > 0".into(),
            ));
        }
        Ok(())
    }

    /// Per-coordinate variance of the noise added at every iteration.
    pub fn noise_variance(&self, n: usize, d: usize) -> Result<f64> {
        let per_step = split_budget(self.budget, self.iterations)?;
        let sens = self.step_size * self.noise_scale * (d as f64).sqrt() / n as f64;
        gaussian_variance(sens, per_step)
    }
}

/// Diagnostics recorded along a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GlmTrace {
    /// `||grad L_n(beta^t)||_2` of the truncated gradient, `t = 0..T-1`.
    pub grad_norms: Vec<f64>,
    /// `||beta^t||_2`, `t = 0..T`.
    pub beta_norms: Vec<f64>,
    /// `beta^{T-1}` and `beta^T`.
    pub last_iterates: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpGlmResult {
    pub beta: Vec<f64>,
    pub trace: GlmTrace,
    pub config: DpGlmConfig,
    pub privacy_certified: bool,
    /// Set when `B` is below the level that bounds the gradient sensitivity.
    pub privacy_warning: Option<String>,
}

impl DpGlmResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The noise scale `4 (R + c1) sigma_x` that certifies privacy.
pub fn certified_noise_scale(family: &GlmFamily, truncation: f64, sigma_x: f64) -> f64 {
    4.0 * (truncation + family.psi_prime_bound) * sigma_x
}

fn certification(data: &GlmDataset, family: &GlmFamily, cfg: &DpGlmConfig) -> Option<String> {
    let need = certified_noise_scale(family, cfg.truncation, data.design().sigma_x);
    if !need.is_finite() {
        Some(format!(
            "{} family with truncation {} has unbounded gradient sensitivity; output is not private",
            family.name(),
            cfg.truncation
        ))
    } else if cfg.noise_scale < need * (1.0 - 1e-12) {
        Some(format!(
            "noise scale B = {} is below 4(R + c1) sigma_x = {need}; output is not certified private",
            cfg.noise_scale
        ))
    } else {
        None
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Run `T` iterations of noisy truncated gradient descent.
///
/// With [`ZeroNoise`](crate::rng::ZeroNoise) and `R = inf` this is plain
/// gradient descent on the negative log-likelihood.
pub fn fit_dp_glm<N: NoiseSource + ?Sized>(
    data: &GlmDataset,
    family: &GlmFamily,
    cfg: &DpGlmConfig,
    noise: &mut N,
) -> Result<DpGlmResult> {
    let d = data.d();
    cfg.validate(d)?;
    let sd = cfg.noise_variance(data.n(), d)?.sqrt();
    let warning = certification(data, family, cfg);

    let mut beta = cfg.beta0.clone();
    let mut trace = GlmTrace {
        grad_norms: Vec::with_capacity(cfg.iterations),
        beta_norms: vec![norm(&beta)],
        last_iterates: Vec::new(),
    };
    let mut prev = beta.clone();
    for _ in 0..cfg.iterations {
        let g = glm_gradient(data, family, &beta, cfg.truncation)?;
        trace.grad_norms.push(norm(&g));
        prev.clone_from(&beta);
        for (b, gj) in beta.iter_mut().zip(&g) {
            *b = *b - cfg.step_size * gj + noise.gaussian(sd);
        }
        trace.beta_norms.push(norm(&beta));
    }
    trace.last_iterates = vec![prev, beta.clone()];

    Ok(DpGlmResult {
        beta,
        trace,
        config: cfg.clone(),
        privacy_certified: warning.is_none(),
        privacy_warning: warning,
    })
}

/// Curvature estimates `(gamma_hat, alpha_hat)` from the empirical second
/// moment of the design: `c2 lambda_max` and `max(1e-3, c2 lambda_min e^{-1/2})`.
pub fn estimate_curvature(data: &GlmDataset, family: &GlmFamily) -> (f64, f64) {
    let (lo, hi) = data.second_moment_extremes();
    let c2 = family.psi_double_prime_bound;
    (c2 * hi, (c2 * lo * (-0.5f64).exp()).max(1e-3))
}

/// Default hyperparameters: `eta0 = 3 / (4 gamma)`, `T = (2 gamma / alpha) log(9n)`,
/// `R = min(ess sup |y|, c1 + sqrt(2 c2 c(sigma) log n))`, `B = 4 (R + c1) sigma_x`,
/// `beta0 = 0`.
pub fn default_dp_glm_config(
    n: usize,
    d: usize,
    family: &GlmFamily,
    budget: PrivacyBudget,
    gamma_hat: f64,
    alpha_hat: f64,
    sigma_x: f64,
) -> Result<DpGlmConfig> {
    if !(alpha_hat > 0.0 && gamma_hat >= alpha_hat && gamma_hat.is_finite()) {
        return Err(Error::invalid(format!(
            "curvature estimates need gamma >= alpha > 0 (got gamma {gamma_hat}, alpha {alpha_hat})"
        )));
    }
    if n < 2 || d == 0 {
        return Err(Error::invalid("need n >= 2 and d >= 1"));
    }
    if !(sigma_x > 0.0) {
        return Err(Error::invalid("sigma_x must be positive"));
    }
    let c1 = family.psi_prime_bound;
    let tail = c1 + (2.0 * family.psi_double_prime_bound * family.dispersion * (n as f64).ln()).sqrt();
    let truncation = family.response_bound().map_or(tail, |r| r.min(tail));
    let noise_scale = certified_noise_scale(family, truncation, sigma_x);
    if !noise_scale.is_finite() {
        return Err(Error::Unsupported(format!(
            "the {} family has unbounded psi', so no finite noise scale is certified",
            family.name()
        )));
    }
    let t_real = 2.0 * gamma_hat / alpha_hat * (9.0 * n as f64).ln();
    let iterations = ((t_real - 1e-9).ceil() as usize).max(1);
    Ok(DpGlmConfig {
        step_size: 0.75 / gamma_hat,
        iterations,
        truncation,
        noise_scale,
        budget,
        beta0: vec![0.0; d],
    })
}

/// Whether `n >= 10 d sqrt(log(1/delta)) log^2(n) / eps`, the sample size
/// from which the rate guarantee is expected to apply.
pub fn sample_size_adequate(n: usize, d: usize, budget: PrivacyBudget) -> bool {
    if budget.is_pure() {
        return false;
    }
    let nf = n as f64;
    nf >= 10.0 * d as f64 * (1.0 / budget.delta()).ln().sqrt() * nf.ln().powi(2) / budget.epsilon()
}

/// Non-private maximum-likelihood fit by damped Newton iterations.
pub fn reference_minimizer(data: &GlmDataset, family: &GlmFamily, tol: f64) -> Result<Vec<f64>> {
    let d = data.d();
    let n = data.n() as f64;
    let mut beta = vec![0.0; d];
    let mut obj = neg_log_likelihood(data, family, &beta)?;
    for it in 0..200 {
        let g = DVector::from_vec(glm_gradient(data, family, &beta, f64::INFINITY)?);
        if g.norm() < tol {
            return Ok(beta);
        }
        let eta = data.x() * DVector::from_column_slice(&beta);
        let mut h = DMatrix::<f64>::zeros(d, d);
        for i in 0..data.n() {
            let w = family.psi_double_prime(eta[i]) / n;
            let xi = data.x().row(i).transpose();
            h.syger(w, &xi, &xi, 1.0);
        }
        h.fill_upper_triangle_with_lower_triangle();
        let chol = h.cholesky().ok_or_else(|| {
            Error::NonConvergence {
                iterations: it,
                residual: g.norm(),
            }
        })?;
        let step = chol.solve(&g);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - t * s).collect();
            let c = neg_log_likelihood(data, family, &cand)?;
            if c <= obj + 1e-14 * obj.abs().max(1.0) || t < 1e-10 {
                beta = cand;
                obj = c;
                break;
            }
            t *= 0.5;
        }
    }
    let g = glm_gradient(data, family, &beta, f64::INFINITY)?;
    Err(Error::NonConvergence {
        iterations: 200,
        residual: norm(&g),
    })
}
