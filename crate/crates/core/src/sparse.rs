//! Hard thresholding, private peeling, noisy iterative hard thresholding and
//! private sparse GLM regression.

use serde::{Deserialize, Serialize};

use crate::dp_glm::certified_noise_scale;
use crate::error::{check_dim, Error, Result};
use crate::glm::{glm_gradient, DesignBoundKind, GlmDataset, GlmFamily};
use crate::mechanisms::{split_budget, PrivacyBudget};
use crate::rng::NoiseSource;

/// A vector together with the index set it is supported on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseIterate {
    pub values: Vec<f64>,
    /// Sorted ascending.
    pub support: Vec<usize>,
}

impl SparseIterate {
    /// Restriction of `v` to `support`.
    pub fn restrict(v: &[f64], support: &[usize]) -> Self {
        let mut values = vec![0.0; v.len()];
        let mut support = support.to_vec();
        support.sort_unstable();
        for &j in &support {
            values[j] = v[j];
        }
        Self { values, support }
    }

    /// Wrap a dense vector, taking its non-zeros as the support.
    pub fn from_dense(values: Vec<f64>) -> Self {
        let support = (0..values.len()).filter(|&j| values[j] != 0.0).collect();
        Self { values, support }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            values: vec![0.0; d],
            support: Vec::new(),
        }
    }
}

/// `P_s(v)`: keep the `s` largest magnitudes, ties to the lowest index.
pub fn exact_top_s(v: &[f64], s: usize) -> Result<SparseIterate> {
    if s > v.len() {
        return Err(Error::invalid(format!("sparsity {s} exceeds dimension {}", v.len())));
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    idx.truncate(s);
    Ok(SparseIterate::restrict(v, &idx))
}

/// Laplace scale of every peeling draw: `lambda 2 sqrt(3 s log(1/delta)) / eps`.
pub fn peeling_noise_scale(s: usize, eps: f64, delta: f64, lambda: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Unsupported(
            "private peeling needs 0 < delta < 1".into(),
        ));
    }
    if !(eps > 0.0) || !(lambda > 0.0) {
        return Err(Error::invalid("private peeling needs eps > 0 and lambda > 0"));
    }
    Ok(lambda * 2.0 * (3.0 * s as f64 * (1.0 / delta).ln()).sqrt() / eps)
}

/// Noise drawn by one call of [`noisy_hard_threshold`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyHtNoise {
    /// `w_1, ..., w_s`.
    pub per_round_vectors: Vec<Vec<f64>>,
    /// `w~`, of which only the selected coordinates are used.
    pub final_vector: Vec<f64>,
}

impl NoisyHtNoise {
    /// `sum_i ||w_i||_inf^2`.
    pub fn peeling_energy(&self) -> f64 {
        self.per_round_vectors
            .iter()
            .map(|w| w.iter().fold(0.0f64, |m, x| m.max(x.abs())).powi(2))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyHtOutput {
    /// `P~_s(v) + w~_S`.
    pub iterate: SparseIterate,
    /// Indices in the order they were peeled.
    pub selected: Vec<usize>,
    pub noise: Option<NoisyHtNoise>,
}

impl NoisyHtOutput {
    /// `P~_s(v) = v_S`, before the final noise.
    pub fn projection_of(&self, v: &[f64]) -> SparseIterate {
        SparseIterate::restrict(v, &self.selected)
    }
}

/// Private top-`s` selection by peeling.
///
/// Each of the `s` rounds draws a fresh Laplace vector `w_i` and selects the
/// unselected `j` maximising `|v_j| + w_ij` (lowest index on ties). The
/// selected coordinates of `v` are then released with fresh Laplace noise.
pub fn noisy_hard_threshold<N: NoiseSource + ?Sized>(
    v: &[f64],
    s: usize,
    eps: f64,
    delta: f64,
    lambda: f64,
    noise: &mut N,
    record_noise: bool,
) -> Result<NoisyHtOutput> {
    let d = v.len();
    if s > d {
        return Err(Error::invalid(format!("sparsity {s} exceeds dimension {d}")));
    }
    let scale = peeling_noise_scale(s, eps, delta, lambda)?;
    let mut taken = vec![false; d];
    let mut selected = Vec::with_capacity(s);
    let mut rounds = Vec::new();
    let mut w = vec![0.0; d];
    for _ in 0..s {
        for wj in w.iter_mut() {
            *wj = noise.laplace(scale);
        }
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..d {
            if taken[j] {
                continue;
            }
            let score = v[j].abs() + w[j];
            if best == usize::MAX || score > best_score {
                best = j;
                best_score = score;
            }
        }
        taken[best] = true;
        selected.push(best);
        if record_noise {
            rounds.push(w.clone());
        }
    }
    let final_vector: Vec<f64> = (0..d).map(|_| noise.laplace(scale)).collect();
    let mut iterate = SparseIterate::restrict(v, &selected);
    for &j in &iterate.support {
        iterate.values[j] += final_vector[j];
    }
    Ok(NoisyHtOutput {
        iterate,
        selected,
        noise: record_noise.then_some(NoisyHtNoise {
            per_round_vectors: rounds,
            final_vector,
        }),
    })
}

/// Iterates and per-round diagnostics of a noisy IHT run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IhtTrace {
    /// `theta^0, ..., theta^T`.
    pub iterates: Vec<SparseIterate>,
    /// Peeling order of each round.
    pub selections: Vec<Vec<usize>>,
    /// Present when noise recording was requested.
    pub noise: Option<Vec<NoisyHtNoise>>,
}

impl IhtTrace {
    pub fn last(&self) -> &SparseIterate {
        self.iterates.last().expect("trace holds the initial iterate")
    }
}

/// Settings shared by [`noisy_iht`] and [`fit_dp_sparse_glm`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IhtConfig {
    /// Working sparsity `s`.
    pub sparsity: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub budget: PrivacyBudget,
    /// `B`, the per-datum gradient sensitivity in sup norm.
    pub noise_scale: f64,
    #[serde(default)]
    pub record_noise: bool,
}

/// Noisy IHT: `theta^{t+1} = NoisyHT(theta^t - eta grad, s, eps/T, delta/T, eta B / n)`.
pub fn noisy_iht<G, N>(
    mut gradient: G,
    n: usize,
    cfg: &IhtConfig,
    init: SparseIterate,
    noise: &mut N,
) -> Result<IhtTrace>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    N: NoiseSource + ?Sized,
{
    let d = init.values.len();
    if init.values.iter().filter(|v| **v != 0.0).count() > cfg.sparsity {
        return Err(Error::invalid("initial iterate is not s-sparse"));
    }
    if cfg.sparsity > d {
        return Err(Error::invalid(format!(
            "sparsity {} exceeds dimension {d}",
            cfg.sparsity
        )));
    }
    if !(cfg.step_size > 0.0) || n == 0 {
        return Err(Error::invalid("noisy IHT needs a positive step size and n >= 1"));
    }
    let mut trace = IhtTrace {
        iterates: vec![init],
        selections: Vec::with_capacity(cfg.iterations),
        noise: cfg.record_noise.then(Vec::new),
    };
    if cfg.iterations == 0 {
        return Ok(trace);
    }
    let round = split_budget(cfg.budget, cfg.iterations)?;
    let lambda = cfg.step_size * cfg.noise_scale / n as f64;
    for _ in 0..cfg.iterations {
        let theta = &trace.last().values;
        let g = gradient(theta)?;
        check_dim(d, g.len())?;
        let v: Vec<f64> = theta.iter().zip(&g).map(|(t, gj)| t - cfg.step_size * gj).collect();
        let out = noisy_hard_threshold(
            &v,
            cfg.sparsity,
            round.epsilon(),
            round.delta(),
            lambda,
            noise,
            cfg.record_noise,
        )?;
        trace.selections.push(out.selected);
        if let (Some(all), Some(w)) = (trace.noise.as_mut(), out.noise) {
            all.push(w);
        }
        trace.iterates.push(out.iterate);
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseGlmConfig {
    pub iht: IhtConfig,
    /// `R`; `f64::INFINITY` disables truncation.
    pub truncation: f64,
    pub beta0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseGlmResult {
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
    pub trace: IhtTrace,
    pub config: SparseGlmConfig,
    pub privacy_certified: bool,
    pub privacy_warning: Option<String>,
}

impl SparseGlmResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Private sparse GLM regression: truncated gradient step then private peeling.
///
/// Requires a sup-norm bounded design; privacy is certified when
/// `B >= 4 (R + c1) sigma_x`.
pub fn fit_dp_sparse_glm<N: NoiseSource + ?Sized>(
    data: &GlmDataset,
    family: &GlmFamily,
    cfg: &SparseGlmConfig,
    noise: &mut N,
) -> Result<SparseGlmResult> {
    if data.design().kind != DesignBoundKind::Linf {
        return Err(Error::invalid(
            "sparse GLM regression requires a sup-norm bounded design",
        ));
    }
    check_dim(data.d(), cfg.beta0.len())?;
    if !(cfg.truncation > 0.0) {
        return Err(Error::invalid("truncation level must be positive"));
    }
    let need = certified_noise_scale(family, cfg.truncation, data.design().sigma_x);
    let warning = if !need.is_finite() {
        Some(format!(
            "{} family with truncation {} has unbounded gradient sensitivity",
            family.name(),
            cfg.truncation
        ))
    } else if cfg.iht.noise_scale < need * (1.0 - 1e-12) {
        Some(format!(
            "noise scale B = {} is below 4(R + c1) sigma_x = {need}",
            cfg.iht.noise_scale
        ))
    } else {
        None
    };
    let trace = noisy_iht(
        |beta| glm_gradient(data, family, beta, cfg.truncation),
        data.n(),
        &cfg.iht,
        SparseIterate::from_dense(cfg.beta0.clone()),
        noise,
    )?;
    let last = trace.last().clone();
    Ok(SparseGlmResult {
        beta: last.values,
        support: last.support,
        trace,
        config: cfg.clone(),
        privacy_certified: warning.is_none(),
        privacy_warning: warning,
    })
}

/// Default tuning: `s = min(d, ceil(4 c0 (gamma/alpha)^2 s*))` with `c0 = 72`,
/// `eta = 1 / (2 gamma)`, `T = ceil((2 gamma / (rho alpha)) log(6 gamma n))`,
/// `R` and `B` as in the dense case, `beta0 = 0`.
#[allow(clippy::too_many_arguments)]
pub fn default_sparse_glm_config(
    n: usize,
    d: usize,
    s_star: usize,
    family: &GlmFamily,
    budget: PrivacyBudget,
    gamma_hat: f64,
    alpha_hat: f64,
    rho: f64,
    sigma_x: f64,
) -> Result<SparseGlmConfig> {
    if !(alpha_hat > 0.0 && gamma_hat >= alpha_hat && gamma_hat.is_finite()) {
        return Err(Error::invalid("curvature estimates need gamma >= alpha > 0"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho must lie in (0, 1)"));
    }
    if s_star == 0 || s_star > d {
        return Err(Error::invalid("need 1 <= s* <= d"));
    }
    let dense = crate::dp_glm::default_dp_glm_config(n, d, family, budget, gamma_hat, alpha_hat, sigma_x)?;
    let ratio = gamma_hat / alpha_hat;
    let s = ((4.0 * 72.0 * ratio * ratio * s_star as f64).ceil() as usize).min(d);
    let t = (2.0 * gamma_hat / (rho * alpha_hat) * (6.0 * gamma_hat * n as f64).ln()).ceil();
    Ok(SparseGlmConfig {
        iht: IhtConfig {
            sparsity: s,
            step_size: 0.5 / gamma_hat,
            iterations: (t as usize).max(1),
            budget,
            noise_scale: dense.noise_scale,
            record_noise: false,
        },
        truncation: dense.truncation,
        beta0: vec![0.0; d],
    })
}

/// Approximate `argmin_{||b||_0 <= s} L_n(b)` by non-private IHT run for
/// `iterations` steps from zero.
pub fn sparse_reference_minimizer(
    data: &GlmDataset,
    family: &GlmFamily,
    s: usize,
    step_size: f64,
    iterations: usize,
) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; data.d()];
    for _ in 0..iterations {
        let g = glm_gradient(data, family, &beta, f64::INFINITY)?;
        let v: Vec<f64> = beta.iter().zip(&g).map(|(b, gj)| b - step_size * gj).collect();
        beta = exact_top_s(&v, s)?.values;
    }
    Ok(beta)
}
