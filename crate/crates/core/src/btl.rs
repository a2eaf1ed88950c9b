//! Bradley-Terry-Luce comparisons on an Erdos-Renyi graph and the
//! objective-perturbed ridge MLE over `{||theta||_inf <= 1, sum theta = 0}`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mechanisms::PrivacyBudget;
use crate::rng::{NoiseSource, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonData {
    pub n_items: usize,
    /// Pairs `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// `true` iff `i` beat `j`.
    pub outcomes: Vec<bool>,
    pub edge_probability: f64,
}

impl ComparisonData {
    pub fn new(
        n_items: usize,
        edges: Vec<(usize, usize)>,
        outcomes: Vec<bool>,
        edge_probability: f64,
    ) -> Result<Self> {
        check_dim(edges.len(), outcomes.len())?;
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(i, j) in &edges {
            if i >= j || j >= n_items {
                return Err(Error::invalid(format!(
                    "edge ({i}, {j}) must satisfy i < j < n_items = {n_items}"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::invalid(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self {
            n_items,
            edges,
            outcomes,
            edge_probability,
        })
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_items];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// CSV with header `i,j,y`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["i", "j", "y"])?;
        for (&(i, j), &y) in self.edges.iter().zip(&self.outcomes) {
            wtr.write_record([i.to_string(), j.to_string(), (y as u8).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read `i,j,y` rows; `n_items` defaults to one past the largest index.
    pub fn read_csv<R: Read>(r: R, n_items: Option<usize>, edge_probability: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            i: usize,
            j: usize,
            y: u8,
        }
        let mut rdr = csv::Reader::from_reader(r);
        let mut edges = Vec::new();
        let mut outcomes = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            if row.y > 1 {
                return Err(Error::Config(format!("outcome must be 0 or 1, got {}", row.y)));
            }
            let (i, j, y) = if row.i < row.j {
                (row.i, row.j, row.y == 1)
            } else {
                (row.j, row.i, row.y == 0)
            };
            edges.push((i, j));
            outcomes.push(y);
        }
        let n = n_items.unwrap_or_else(|| edges.iter().map(|e| e.1 + 1).max().unwrap_or(0));
        Self::new(n, edges, outcomes, edge_probability)
    }
}

/// Merit vector in `{||theta||_inf <= 1, sum theta = 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BtlParams {
    pub theta: Vec<f64>,
}

impl BtlParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !(t.abs() <= 1.0 + 1e-9)) {
            return Err(Error::invalid("merits must satisfy |theta_i| <= 1"));
        }
        if theta.iter().sum::<f64>().abs() > 1e-9 * theta.len().max(1) as f64 {
            return Err(Error::invalid("merits must sum to zero"));
        }
        Ok(Self { theta })
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `P(i beats j) = e^{theta_i} / (e^{theta_i} + e^{theta_j})`.
pub fn win_probability(theta_i: f64, theta_j: f64) -> f64 {
    sigmoid(theta_i - theta_j)
}

/// Include each pair independently with probability `p`, then draw outcomes.
pub fn sample_comparisons(n: usize, p: f64, theta: &[f64], rng: &mut SeededRng) -> Result<ComparisonData> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("edge probability must lie in (0, 1], got {p}")));
    }
    check_dim(n, theta.len())?;
    if theta.iter().any(|t| !(t.abs() <= 1.0)) {
        return Err(Error::invalid("true merits must satisfy |theta_i| <= 1"));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if p >= 1.0 || rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    let outcomes = edges
        .iter()
        .map(|&(i, j)| rng.bernoulli(win_probability(theta[i], theta[j])))
        .collect();
    Ok(ComparisonData {
        n_items: n,
        edges,
        outcomes,
        edge_probability: p,
    })
}

/// Redraw every outcome involving item `k` on the same graph.
pub fn resample_item(data: &ComparisonData, k: usize, theta: &[f64], rng: &mut SeededRng) -> ComparisonData {
    let mut out = data.clone();
    for (e, &(i, j)) in data.edges.iter().enumerate() {
        if i == k || j == k {
            out.outcomes[e] = rng.bernoulli(win_probability(theta[i], theta[j]));
        }
    }
    out
}

/// `sum_{(i,j)} -y_ij (theta_i - theta_j) + log(1 + exp(theta_i - theta_j))`.
pub fn btl_neg_log_likelihood(data: &ComparisonData, theta: &[f64]) -> Result<f64> {
    check_dim(data.n_items, theta.len())?;
    Ok(data
        .edges
        .iter()
        .zip(&data.outcomes)
        .map(|(&(i, j), &y)| {
            let t = theta[i] - theta[j];
            softplus(t) - if y { t } else { 0.0 }
        })
        .sum())
}

pub fn btl_gradient(data: &ComparisonData, theta: &[f64]) -> Result<Vec<f64>> {
    check_dim(data.n_items, theta.len())?;
    let mut g = vec![0.0; theta.len()];
    for (&(i, j), &y) in data.edges.iter().zip(&data.outcomes) {
        let r = sigmoid(theta[i] - theta[j]) - y as u8 as f64;
        g[i] += r;
        g[j] -= r;
    }
    Ok(g)
}

/// Exact Euclidean projection onto `{||x||_inf <= 1, sum x = 0}`:
/// `clip(z - tau)` with `tau` found by bisection.
pub fn project_theta_exact(z: &[f64]) -> Vec<f64> {
    let sum_at = |tau: f64| z.iter().map(|v| (v - tau).clamp(-1.0, 1.0)).sum::<f64>();
    let lo0 = z.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi0 = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    z.iter().map(|v| (v - tau).clamp(-1.0, 1.0)).collect()
}

/// Projection onto `{||x||_inf <= 1, sum x = 0}` by Dykstra's alternating
/// projections between the box and the hyperplane.
pub fn project_theta(z: &[f64]) -> Vec<f64> {
    let n = z.len() as f64;
    let mut x = z.to_vec();
    let mut p = vec![0.0; z.len()];
    let mut q = vec![0.0; z.len()];
    let mut y = vec![0.0; z.len()];
    for _ in 0..100_000 {
        for k in 0..z.len() {
            y[k] = (x[k] + p[k]).clamp(-1.0, 1.0);
            p[k] += x[k] - y[k];
        }
        let mean = y.iter().zip(&q).map(|(a, b)| a + b).sum::<f64>() / n;
        let mut change = 0.0f64;
        for k in 0..z.len() {
            let next = y[k] + q[k] - mean;
            q[k] += y[k] - next;
            change = change.max((next - x[k]).abs());
            x[k] = next;
        }
        let gap = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if change <= 1e-15 && gap <= 1e-12 {
            break;
        }
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BtlHyperparams {
    /// Ridge weight `gamma`.
    pub gamma: f64,
    /// Standard deviation of the linear perturbation `w`.
    pub sigma_noise: f64,
}

/// `gamma = max(c0 sqrt(n p), 1 / eps)`, `sigma = 16 sqrt(n) log(1/delta) / eps`.
pub fn default_btl_hyperparams(n: usize, p: f64, budget: PrivacyBudget, c0: f64) -> Result<BtlHyperparams> {
    if budget.is_pure() {
        return Err(Error::Unsupported("objective perturbation here needs delta > 0".into()));
    }
    let eps = budget.epsilon();
    Ok(BtlHyperparams {
        gamma: (c0 * (n as f64 * p).sqrt()).max(1.0 / eps),
        sigma_noise: 16.0 * (n as f64).sqrt() * (1.0 / budget.delta()).ln() / eps,
    })
}

/// Whether `(gamma, sigma)` meet the sufficient conditions for `(eps, delta)`
/// privacy: `gamma >= 1 / eps` and
/// `sigma >= sqrt(n) sqrt(8 log(2/delta) + max(4 eps, 4)) / eps`.
pub fn btl_privacy_certified(n: usize, h: BtlHyperparams, budget: PrivacyBudget) -> bool {
    if budget.is_pure() {
        return false;
    }
    let eps = budget.epsilon();
    let need = (n as f64).sqrt() * (8.0 * (2.0 / budget.delta()).ln() + (4.0 * eps).max(4.0)).sqrt() / eps;
    h.gamma >= 1.0 / eps && h.sigma_noise >= need
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Bound on the gradient-mapping norm.
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BtlFit {
    pub theta: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub hyperparams: BtlHyperparams,
    /// The drawn perturbation `w`.
    #[serde(skip)]
    pub perturbation: Vec<f64>,
}

impl BtlFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `argmin_{theta in Theta} L(theta) + gamma/2 ||theta||^2 + w'theta`, `w ~ N(0, sigma^2 I)`,
/// by projected gradient descent with step `1 / (gamma + d_max / 2)`.
pub fn fit_dp_btl<N: NoiseSource + ?Sized>(
    data: &ComparisonData,
    h: BtlHyperparams,
    noise: &mut N,
    opts: SolverOptions,
) -> Result<BtlFit> {
    if !(h.gamma > 0.0) {
        return Err(Error::invalid("ridge weight gamma must be positive"));
    }
    if !(h.sigma_noise >= 0.0) {
        return Err(Error::invalid("perturbation sd must be non-negative"));
    }
    let n = data.n_items;
    if n == 0 {
        return Err(Error::invalid("need at least one item"));
    }
    let w: Vec<f64> = (0..n).map(|_| noise.gaussian(h.sigma_noise)).collect();
    let (theta, residual, iterations) = minimize_perturbed(data, h.gamma, &w, opts)?;
    Ok(BtlFit {
        theta,
        residual,
        iterations,
        hyperparams: h,
        perturbation: w,
    })
}

/// Projected gradient on the perturbed objective with a fixed perturbation.
pub fn minimize_perturbed(
    data: &ComparisonData,
    gamma: f64,
    w: &[f64],
    opts: SolverOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = data.n_items;
    check_dim(n, w.len())?;
    let d_max = data.degrees().into_iter().max().unwrap_or(0) as f64;
    let step = 1.0 / (gamma + d_max / 2.0);
    let mut theta = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iterations {
        let mut g = btl_gradient(data, &theta)?;
        for k in 0..n {
            g[k] += gamma * theta[k] + w[k];
        }
        let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, gk)| t - step * gk).collect();
        let next = project_theta(&trial);
        residual = theta
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            / step;
        theta = next;
        if residual <= opts.tolerance {
            return Ok((theta, residual, it + 1));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}
