//! Score attacks `A = <M(X) - theta, S_theta(z)>`, the priors used to average
//! them, and Monte-Carlo checks of their soundness and completeness.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btl::{resample_item, sample_comparisons, win_probability, ComparisonData};
use crate::error::{check_dim, Error, Result};
use crate::glm::{generate_glm, glm_score, sample_observation, DesignSpec, GlmDataset, GlmFamily};
use crate::nonparam::{fourier_features, series_eval, SobolevSpec};
use crate::rng::{NoiseSource, SeededRng};
use crate::stats::RunningStats;

/// Statistical model under attack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackModel {
    /// `z ~ N(theta, sigma^2 I)`.
    GaussianLocation { sigma: f64 },
    Glm { family: GlmFamily, design: DesignSpec },
    /// As `Glm`, with the attack restricted to `supp(theta)`.
    SparseGlm { family: GlmFamily, design: DesignSpec },
    /// Comparisons among `theta.len()` items.
    Btl { edge_probability: f64 },
    /// `Y = sum_j theta_j phi_j(X) + sigma Z`, `X ~ U[0, 1]`.
    Nonparam { sigma: f64 },
}

/// A data set drawn from one of the models.
#[derive(Clone, Debug)]
pub enum AttackData {
    Vectors(Vec<Vec<f64>>),
    Glm(GlmDataset),
    Comparisons(ComparisonData),
    Regression { x: Vec<f64>, y: Vec<f64> },
}

/// One individual's data.
#[derive(Clone, Debug, PartialEq)]
pub enum Candidate {
    Vector(Vec<f64>),
    Observation { x: Vec<f64>, y: f64 },
    /// Item `index` and its games as `(opponent, won)`.
    Item { index: usize, games: Vec<(usize, bool)> },
    Point { x: f64, y: f64 },
}

fn games_of(data: &ComparisonData, k: usize) -> Vec<(usize, bool)> {
    data.edges
        .iter()
        .zip(&data.outcomes)
        .filter_map(|(&(i, j), &y)| {
            if i == k {
                Some((j, y))
            } else if j == k {
                Some((i, !y))
            } else {
                None
            }
        })
        .collect()
}

impl AttackModel {
    /// Draw a data set of size `n` at `theta`; for BTL `n` must equal `theta.len()`.
    pub fn sample_data(&self, theta: &[f64], n: usize, rng: &mut SeededRng) -> Result<AttackData> {
        match *self {
            AttackModel::GaussianLocation { sigma } => Ok(AttackData::Vectors(
                (0..n)
                    .map(|_| theta.iter().map(|t| t + sigma * rng.standard_normal()).collect())
                    .collect(),
            )),
            AttackModel::Glm { family, design } | AttackModel::SparseGlm { family, design } => {
                Ok(AttackData::Glm(generate_glm(n, theta, &family, design, rng)?))
            }
            AttackModel::Btl { edge_probability } => {
                check_dim(theta.len(), n)?;
                Ok(AttackData::Comparisons(sample_comparisons(n, edge_probability, theta, rng)?))
            }
            AttackModel::Nonparam { sigma } => {
                let x: Vec<f64> = (0..n).map(|_| rng.uniform_open()).collect();
                let y = x
                    .iter()
                    .map(|&xi| series_eval(theta, xi) + sigma * rng.standard_normal())
                    .collect();
                Ok(AttackData::Regression { x, y })
            }
        }
    }

    pub fn in_sample_candidates(&self, data: &AttackData) -> Vec<Candidate> {
        match data {
            AttackData::Vectors(rows) => rows.iter().cloned().map(Candidate::Vector).collect(),
            AttackData::Glm(d) => (0..d.n())
                .map(|i| Candidate::Observation {
                    x: d.row(i),
                    y: d.y()[i],
                })
                .collect(),
            AttackData::Comparisons(c) => (0..c.n_items)
                .map(|k| Candidate::Item {
                    index: k,
                    games: games_of(c, k),
                })
                .collect(),
            AttackData::Regression { x, y } => x
                .iter()
                .zip(y)
                .map(|(&x, &y)| Candidate::Point { x, y })
                .collect(),
        }
    }

    /// An out-of-sample candidate independent of `data`. For BTL, item
    /// `index`'s outcomes are redrawn on the same comparison graph.
    pub fn fresh_candidate(
        &self,
        data: &AttackData,
        theta: &[f64],
        index: usize,
        rng: &mut SeededRng,
    ) -> Result<Candidate> {
        match (*self, data) {
            (AttackModel::GaussianLocation { sigma }, _) => Ok(Candidate::Vector(
                theta.iter().map(|t| t + sigma * rng.standard_normal()).collect(),
            )),
            (AttackModel::Glm { family, design }, _) | (AttackModel::SparseGlm { family, design }, _) => {
                let (x, y) = sample_observation(theta, &family, design, rng);
                Ok(Candidate::Observation { x, y })
            }
            (AttackModel::Btl { .. }, AttackData::Comparisons(c)) => {
                let k = index % c.n_items;
                let fresh = resample_item(c, k, theta, rng);
                Ok(Candidate::Item {
                    index: k,
                    games: games_of(&fresh, k),
                })
            }
            (AttackModel::Nonparam { sigma }, _) => {
                let x = rng.uniform_open();
                let y = series_eval(theta, x) + sigma * rng.standard_normal();
                Ok(Candidate::Point { x, y })
            }
            _ => Err(Error::invalid("data set does not match the attack model")),
        }
    }

    /// Coordinates entering the divergence: `supp(theta)` for the sparse model.
    pub fn attacked_coordinates(&self, theta: &[f64]) -> Vec<usize> {
        match self {
            AttackModel::SparseGlm { .. } => (0..theta.len()).filter(|&j| theta[j] != 0.0).collect(),
            _ => (0..theta.len()).collect(),
        }
    }
}

/// The score `S_theta(z)` of one candidate.
pub fn score_vector(model: &AttackModel, candidate: &Candidate, theta: &[f64]) -> Result<Vec<f64>> {
    match (model, candidate) {
        (AttackModel::GaussianLocation { sigma }, Candidate::Vector(z)) => {
            check_dim(theta.len(), z.len())?;
            let s2 = sigma * sigma;
            Ok(z.iter().zip(theta).map(|(a, t)| (a - t) / s2).collect())
        }
        (AttackModel::Glm { family, .. }, Candidate::Observation { x, y }) => {
            check_dim(theta.len(), x.len())?;
            Ok(glm_score(family, x, *y, theta))
        }
        (AttackModel::SparseGlm { family, .. }, Candidate::Observation { x, y }) => {
            check_dim(theta.len(), x.len())?;
            let mut s = glm_score(family, x, *y, theta);
            for (j, v) in s.iter_mut().enumerate() {
                if theta[j] == 0.0 {
                    *v = 0.0;
                }
            }
            Ok(s)
        }
        (AttackModel::Btl { .. }, Candidate::Item { index, games }) => {
            let mut s = vec![0.0; theta.len()];
            for &(j, won) in games {
                if *index >= theta.len() || j >= theta.len() {
                    return Err(Error::DimensionMismatch {
                        expected: theta.len(),
                        got: (*index).max(j) + 1,
                    });
                }
                let r = won as u8 as f64 - win_probability(theta[*index], theta[j]);
                s[*index] += r;
                s[j] -= r;
            }
            Ok(s)
        }
        (AttackModel::Nonparam { sigma }, Candidate::Point { x, y }) => {
            let phi = fourier_features(*x, theta.len());
            let resid = (y - series_eval(theta, *x)) / (sigma * sigma);
            Ok(phi.into_iter().map(|p| resid * p).collect())
        }
        _ => Err(Error::invalid("candidate does not match the attack model")),
    }
}

/// `<M - theta, S_theta(z)>`.
pub fn score_attack(model: &AttackModel, candidate: &Candidate, estimate: &[f64], theta: &[f64]) -> Result<f64> {
    check_dim(theta.len(), estimate.len())?;
    let s = score_vector(model, candidate, theta)?;
    Ok(estimate.iter().zip(theta).zip(&s).map(|((m, t), s)| (m - t) * s).sum())
}

/// Any map from data to an estimate; randomness comes from the supplied handle.
pub type Estimator<'a> = dyn Fn(&AttackData, &mut SeededRng) -> Result<Vec<f64>> + Sync + 'a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub replicate: usize,
    pub candidate: usize,
    pub membership: bool,
    pub value: f64,
}

pub fn write_records_csv<W: Write>(records: &[AttackRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundnessSummary {
    pub replicates: usize,
    pub mean_out: f64,
    pub se_out: f64,
    pub mean_abs_out: f64,
    /// `sqrt(E ||M - theta||^2)`.
    pub rmse: f64,
    /// Largest eigenvalue of the empirical score second moment.
    pub lambda_max: f64,
    /// `mean_abs_out / (rmse sqrt(lambda_max))`, at most 1 up to Monte-Carlo error.
    pub cs_ratio: f64,
    #[serde(skip)]
    pub records: Vec<AttackRecord>,
}

/// Attack fresh out-of-sample candidates, one per replicate.
pub fn soundness_experiment(
    model: &AttackModel,
    estimator: &Estimator,
    theta: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<SoundnessSummary> {
    let rows: Vec<(f64, f64, Vec<f64>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = SeededRng::new(seed, r as u64);
            let data = model.sample_data(theta, n, &mut rng)?;
            let m = estimator(&data, &mut rng)?;
            check_dim(theta.len(), m.len())?;
            let cand = model.fresh_candidate(&data, theta, r, &mut rng)?;
            let s = score_vector(model, &cand, theta)?;
            let a = m.iter().zip(theta).zip(&s).map(|((m, t), s)| (m - t) * s).sum();
            let err2 = m.iter().zip(theta).map(|(m, t)| (m - t).powi(2)).sum();
            Ok((a, err2, s))
        })
        .collect::<Result<_>>()?;
    let d = theta.len();
    let mut stats = RunningStats::new();
    let mut abs = RunningStats::new();
    let mut err = RunningStats::new();
    let mut info = DMatrix::<f64>::zeros(d, d);
    let mut records = Vec::with_capacity(replicates);
    for (r, (a, e, s)) in rows.into_iter().enumerate() {
        stats.push(a);
        abs.push(a.abs());
        err.push(e);
        for i in 0..d {
            if s[i] != 0.0 {
                for j in 0..d {
                    info[(i, j)] += s[i] * s[j];
                }
            }
        }
        records.push(AttackRecord {
            replicate: r,
            candidate: r,
            membership: false,
            value: a,
        });
    }
    info /= replicates.max(1) as f64;
    let lambda_max = SymmetricEigen::new(info)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let rmse = err.mean().sqrt();
    let denom = rmse * lambda_max.sqrt();
    Ok(SoundnessSummary {
        replicates,
        mean_out: stats.mean(),
        se_out: stats.std_error(),
        mean_abs_out: abs.mean(),
        rmse,
        lambda_max,
        cs_ratio: if denom > 0.0 { abs.mean() / denom } else { 0.0 },
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSumSummary {
    pub replicates: usize,
    /// Mean over replicates of `sum_i A(z_i, M(X))`.
    pub sum_in_attack: f64,
    pub se_in: f64,
    #[serde(skip)]
    pub records: Vec<AttackRecord>,
}

/// Sum of attacks over all in-sample candidates, averaged over replicates.
pub fn in_sample_attack_sum(
    model: &AttackModel,
    estimator: &Estimator,
    theta: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
    keep_records: bool,
) -> Result<AttackSumSummary> {
    let rows: Vec<(f64, Vec<f64>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = SeededRng::new(seed, r as u64);
            let data = model.sample_data(theta, n, &mut rng)?;
            let m = estimator(&data, &mut rng)?;
            let values = model
                .in_sample_candidates(&data)
                .iter()
                .map(|c| score_attack(model, c, &m, theta))
                .collect::<Result<Vec<f64>>>()?;
            Ok((values.iter().sum(), if keep_records { values } else { Vec::new() }))
        })
        .collect::<Result<_>>()?;
    let mut stats = RunningStats::new();
    let mut records = Vec::new();
    for (r, (sum, values)) in rows.into_iter().enumerate() {
        stats.push(sum);
        records.extend(values.into_iter().enumerate().map(|(i, value)| AttackRecord {
            replicate: r,
            candidate: i,
            membership: true,
            value,
        }));
    }
    Ok(AttackSumSummary {
        replicates,
        sum_in_attack: stats.mean(),
        se_in: stats.std_error(),
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessSummary {
    pub replicates: usize,
    pub sum_in_attack: f64,
    pub se_in: f64,
    /// `sum_j d/d theta_j E M_j` by central differences with common random numbers.
    pub divergence_fd: f64,
    pub se_fd: f64,
    pub gap: f64,
    pub combined_se: f64,
    /// In-sample attack values, when requested.
    #[serde(skip)]
    pub records: Vec<AttackRecord>,
}

/// Compare the in-sample attack sum with the divergence of the estimator's mean.
#[allow(clippy::too_many_arguments)]
pub fn completeness_experiment(
    model: &AttackModel,
    estimator: &Estimator,
    theta: &[f64],
    n: usize,
    replicates: usize,
    fd_step: f64,
    seed: u64,
    keep_records: bool,
) -> Result<CompletenessSummary> {
    if !(fd_step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let attack = in_sample_attack_sum(model, estimator, theta, n, replicates, seed, keep_records)?;
    let coords = model.attacked_coordinates(theta);
    let fd_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let divs: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut total = 0.0;
            for &j in &coords {
                let side = |sign: f64| -> Result<f64> {
                    let mut th = theta.to_vec();
                    th[j] += sign * fd_step;
                    let mut rng = SeededRng::new(fd_seed, r as u64);
                    let data = model.sample_data(&th, n, &mut rng)?;
                    Ok(estimator(&data, &mut rng)?[j])
                };
                total += (side(1.0)? - side(-1.0)?) / (2.0 * fd_step);
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    let fd: RunningStats = divs.into_iter().collect();
    let combined = (attack.se_in.powi(2) + fd.std_error().powi(2)).sqrt();
    Ok(CompletenessSummary {
        replicates,
        sum_in_attack: attack.sum_in_attack,
        se_in: attack.se_in,
        divergence_fd: fd.mean(),
        se_fd: fd.std_error(),
        gap: attack.sum_in_attack - fd.mean(),
        combined_se: combined,
        records: attack.records,
    })
}

/// Priors over the parameter space used to average attacks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PriorKind {
    /// i.i.d. Beta(3, 3).
    Beta33,
    /// i.i.d. with density `(15/16)(1 - t^2)^2` on `(-1, 1)`.
    QuarticSymmetric,
    /// Top-`s*` magnitudes of `d` draws of `N(0, gamma^2)` truncated to `(-1, 1)`;
    /// `gamma^2 = 1 / (4 log(d / 4 s*))` when not given.
    SparseTruncNormal { s_star: usize, gamma: Option<f64> },
    /// i.i.d. Uniform(-b, b).
    UniformPm { b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub dim: usize,
}

pub fn default_sparse_prior_gamma(d: usize, s_star: usize) -> Result<f64> {
    if s_star == 0 || 4 * s_star >= d {
        return Err(Error::invalid(format!(
            "sparse prior needs 1 <= s* and 4 s* < d (got s* = {s_star}, d = {d})"
        )));
    }
    Ok((1.0 / (4.0 * (d as f64 / (4.0 * s_star as f64)).ln())).sqrt())
}

/// Half-width `B` of the uniform prior inside the `k`-dimensional Sobolev
/// restriction: `B^2 = C^2 / (2 pi^{2 alpha}) / int_1^{k+1} t^{2 alpha} dt`.
pub fn sobolev_prior_bound(spec: &SobolevSpec, k: usize) -> f64 {
    let e = 2.0 * spec.alpha as f64 + 1.0;
    let integral = (((k + 1) as f64).powf(e) - 1.0) / e;
    (spec.c * spec.c / (2.0 * std::f64::consts::PI.powi(2 * spec.alpha as i32)) / integral).sqrt()
}

pub fn sample_prior(spec: &PriorSpec, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let d = spec.dim;
    if d == 0 {
        return Err(Error::invalid("prior dimension must be positive"));
    }
    let beta = Beta::new(3.0, 3.0).expect("valid Beta parameters");
    match spec.kind {
        PriorKind::Beta33 => Ok((0..d).map(|_| beta.sample(rng)).collect()),
        PriorKind::QuarticSymmetric => Ok((0..d).map(|_| 2.0 * beta.sample(rng) - 1.0).collect()),
        PriorKind::SparseTruncNormal { s_star, gamma } => {
            let gamma = match gamma {
                Some(g) if g > 0.0 => g,
                Some(g) => return Err(Error::invalid(format!("gamma must be positive, got {g}"))),
                None => default_sparse_prior_gamma(d, s_star)?,
            };
            if s_star == 0 || s_star > d {
                return Err(Error::invalid("need 1 <= s* <= d"));
            }
            let draws: Vec<f64> = (0..d)
                .map(|_| loop {
                    let z = gamma * rng.standard_normal();
                    if z.abs() < 1.0 {
                        break z;
                    }
                })
                .collect();
            let mut idx: Vec<usize> = (0..d).collect();
            idx.sort_by(|&a, &b| draws[b].abs().total_cmp(&draws[a].abs()).then(a.cmp(&b)));
            let mut out = vec![0.0; d];
            for &j in idx.iter().take(s_star) {
                out[j] = draws[j];
            }
            Ok(out)
        }
        PriorKind::UniformPm { b } => {
            if !(b > 0.0) {
                return Err(Error::invalid("uniform prior half-width must be positive"));
            }
            Ok((0..d).map(|_| rng.uniform_range(-b, b)).collect())
        }
    }
}

/// Densities for the Stein identity `E h'(Z) = E[h(Z) (-p'/p)(Z)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteinDensity {
    StandardNormal,
    /// `(15/16)(1 - t^2)^2` on `(-1, 1)`; boundary terms vanish.
    Quartic,
}

impl SteinDensity {
    pub fn sample(&self, rng: &mut SeededRng) -> f64 {
        match self {
            SteinDensity::StandardNormal => rng.standard_normal(),
            SteinDensity::Quartic => 2.0 * Beta::new(3.0, 3.0).expect("valid Beta parameters").sample(rng) - 1.0,
        }
    }

    /// `-p'(z) / p(z)`.
    pub fn neg_log_derivative(&self, z: f64) -> f64 {
        match self {
            SteinDensity::StandardNormal => z,
            SteinDensity::Quartic => 4.0 * z / (1.0 - z * z),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteinCheck {
    /// `E h'(Z)`.
    pub lhs: f64,
    /// `E h(Z) (-p'/p)(Z)`.
    pub rhs: f64,
    pub gap: f64,
    /// Standard error of the paired difference.
    pub se: f64,
    pub pass: bool,
}

pub fn stein_identity_check(
    density: SteinDensity,
    h: impl Fn(f64) -> f64,
    dh: impl Fn(f64) -> f64,
    samples: usize,
    rng: &mut SeededRng,
) -> SteinCheck {
    let mut lhs = RunningStats::new();
    let mut rhs = RunningStats::new();
    let mut diff = RunningStats::new();
    for _ in 0..samples {
        let z = density.sample(rng);
        let a = dh(z);
        let b = h(z) * density.neg_log_derivative(z);
        lhs.push(a);
        rhs.push(b);
        diff.push(a - b);
    }
    let gap = diff.mean();
    let se = diff.std_error();
    SteinCheck {
        lhs: lhs.mean(),
        rhs: rhs.mean(),
        gap,
        se,
        pass: gap.abs() <= 4.0 * se || gap.abs() < 1e-12,
    }
}

/// Sample mean of the observation vectors.
pub fn sample_mean_estimator(data: &AttackData, _rng: &mut SeededRng) -> Result<Vec<f64>> {
    match data {
        AttackData::Vectors(rows) if !rows.is_empty() => {
            let d = rows[0].len();
            let mut m = vec![0.0; d];
            for r in rows {
                for (a, b) in m.iter_mut().zip(r) {
                    *a += b;
                }
            }
            let n = rows.len() as f64;
            Ok(m.into_iter().map(|v| v / n).collect())
        }
        _ => Err(Error::invalid("sample mean needs a non-empty vector data set")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btl::{fit_dp_btl, BtlHyperparams, SolverOptions};
    use crate::nonparam::truncated_empirical_coeffs;
    use crate::rng::ZeroNoise;

    fn logistic() -> AttackModel {
        AttackModel::Glm {
            family: GlmFamily::logistic(),
            design: DesignSpec::l2(1.0),
        }
    }

    #[test]
    fn exact_estimate_gives_zero_attack() {
        let theta = [0.3, -0.2];
        let c = Candidate::Observation {
            x: vec![1.0, 0.5],
            y: 1.0,
        };
        assert_eq!(score_attack(&logistic(), &c, &theta, &theta).unwrap(), 0.0);
        let btl = AttackModel::Btl { edge_probability: 1.0 };
        let item = Candidate::Item {
            index: 0,
            games: vec![(1, true)],
        };
        assert_eq!(score_attack(&btl, &item, &[0.1, -0.1], &[0.1, -0.1]).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_location_attack_is_tracing_statistic() {
        let m = AttackModel::GaussianLocation { sigma: 1.0 };
        let mu = [0.5, -1.0, 2.0];
        let est = [0.7, -0.9, 1.5];
        let z = [1.0, 0.0, 2.5];
        let a = score_attack(&m, &Candidate::Vector(z.to_vec()), &est, &mu).unwrap();
        let direct: f64 = (0..3).map(|j| (est[j] - mu[j]) * (z[j] - mu[j])).sum();
        assert!((a - direct).abs() < 1e-15);
        // The linear family with unit-vector covariates reduces to the same statistic.
        let lin = AttackModel::Glm {
            family: GlmFamily::gaussian(1.0).unwrap(),
            design: DesignSpec::l2(1.0),
        };
        let mut total = 0.0;
        for j in 0..3 {
            let mut x = vec![0.0; 3];
            x[j] = 1.0;
            total += score_attack(&lin, &Candidate::Observation { x, y: z[j] }, &est, &mu).unwrap();
        }
        assert!((total - direct).abs() < 1e-15);
    }

    #[test]
    fn sparse_attack_with_full_support_is_dense_attack() {
        let theta = [0.3, -0.2, 0.5];
        let est = [0.1, 0.2, 0.3];
        let c = Candidate::Observation {
            x: vec![0.5, -0.5, 1.0],
            y: 0.0,
        };
        let sparse = AttackModel::SparseGlm {
            family: GlmFamily::logistic(),
            design: DesignSpec::linf(1.0),
        };
        assert_eq!(
            score_attack(&sparse, &c, &est, &theta).unwrap(),
            score_attack(&logistic(), &c, &est, &theta).unwrap()
        );
        let partial = [0.3, 0.0, 0.5];
        let a = score_attack(&sparse, &c, &est, &partial).unwrap();
        let s = glm_score(&GlmFamily::logistic(), &[0.5, -0.5, 1.0], 0.0, &partial);
        assert!((a - ((0.1 - 0.3) * s[0] + (0.3 - 0.5) * s[2])).abs() < 1e-15);
    }

    #[test]
    fn btl_score_matches_likelihood_gradient() {
        let mut rng = SeededRng::new(1, 0);
        let theta: Vec<f64> = crate::btl::project_theta_exact(&(0..8).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>());
        let data = sample_comparisons(8, 0.7, &theta, &mut rng).unwrap();
        let model = AttackModel::Btl { edge_probability: 0.7 };
        let cands = model.in_sample_candidates(&AttackData::Comparisons(data.clone()));
        let mut total = [0.0; 8];
        for c in &cands {
            for (t, s) in total.iter_mut().zip(score_vector(&model, c, &theta).unwrap()) {
                *t += s;
            }
        }
        // Each edge is counted once per endpoint: twice the negative gradient.
        let g = crate::btl::btl_gradient(&data, &theta).unwrap();
        for (t, gj) in total.iter().zip(&g) {
            assert!((t + 2.0 * gj).abs() < 1e-12);
        }
    }

    #[test]
    fn nonparam_score_is_likelihood_gradient() {
        let theta = [0.4, 0.3, -0.2];
        let m = AttackModel::Nonparam { sigma: 0.5 };
        let (x, y) = (0.3, 1.1);
        let s = score_vector(&m, &Candidate::Point { x, y }, &theta).unwrap();
        let ll = |th: &[f64]| -(y - series_eval(th, x)).powi(2) / (2.0 * 0.25);
        for j in 0..3 {
            let mut a = theta.to_vec();
            let mut b = theta.to_vec();
            a[j] += 1e-6;
            b[j] -= 1e-6;
            assert!(((ll(&a) - ll(&b)) / 2e-6 - s[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatched_candidate_is_rejected() {
        let c = Candidate::Vector(vec![1.0]);
        assert!(score_attack(&logistic(), &c, &[0.0], &[0.0]).is_err());
        assert!(score_attack(&logistic(), &c, &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn soundness_for_constant_and_sample_mean() {
        let m = AttackModel::GaussianLocation { sigma: 1.0 };
        let theta = [0.2, -0.4, 0.1];
        let constant = |_: &AttackData, _: &mut SeededRng| Ok(vec![1.0, 1.0, 1.0]);
        let s = soundness_experiment(&m, &constant, &theta, 20, 10_000, 1).unwrap();
        assert!(s.mean_out.abs() <= 4.0 * s.se_out);
        let s = soundness_experiment(&m, &sample_mean_estimator, &theta, 20, 10_000, 2).unwrap();
        assert!(s.mean_out.abs() <= 4.0 * s.se_out);
        assert!(s.cs_ratio <= 1.1, "{}", s.cs_ratio);
    }

    #[test]
    fn cauchy_schwarz_ratio_over_configurations() {
        for cfg in 0..20u64 {
            let d = 1 + (cfg as usize % 5);
            let n = 5 + 3 * cfg as usize;
            let theta: Vec<f64> = (0..d).map(|j| 0.1 * j as f64).collect();
            let m = AttackModel::GaussianLocation { sigma: 0.5 + 0.1 * cfg as f64 };
            let shrink = move |data: &AttackData, rng: &mut SeededRng| -> Result<Vec<f64>> {
                let mean = sample_mean_estimator(data, rng)?;
                Ok(mean.into_iter().map(|v| 0.8 * v + 0.05 * rng.standard_normal()).collect())
            };
            let s = soundness_experiment(&m, &shrink, &theta, n, 2000, 100 + cfg).unwrap();
            assert!(s.cs_ratio <= 1.1, "config {cfg}: {}", s.cs_ratio);
        }
    }

    #[test]
    fn completeness_for_sample_mean_is_dimension() {
        for d in [1usize, 3] {
            let m = AttackModel::GaussianLocation { sigma: 1.0 };
            let theta = vec![0.3; d];
            let c = completeness_experiment(&m, &sample_mean_estimator, &theta, 30, 4000, 0.01, 3, false).unwrap();
            assert!((c.divergence_fd - d as f64).abs() < 1e-9, "{}", c.divergence_fd);
            assert!((c.sum_in_attack - d as f64).abs() <= 4.0 * c.se_in);
        }
    }

    #[test]
    fn completeness_for_constant_is_zero() {
        let m = AttackModel::GaussianLocation { sigma: 1.0 };
        let constant = |_: &AttackData, _: &mut SeededRng| Ok(vec![0.3, 0.3]);
        let c = completeness_experiment(&m, &constant, &[0.3, 0.3], 10, 200, 0.01, 4, false).unwrap();
        assert_eq!(c.divergence_fd, 0.0);
        assert!(c.sum_in_attack.abs() < 1e-12);
    }

    #[test]
    fn soundness_for_btl_and_nonparam() {
        let theta = [0.5, -0.5, 0.2, -0.2, 0.0, 0.0];
        let btl = AttackModel::Btl { edge_probability: 0.8 };
        let est = |data: &AttackData, _: &mut SeededRng| -> Result<Vec<f64>> {
            match data {
                AttackData::Comparisons(c) => {
                    let h = BtlHyperparams {
                        gamma: 1.0,
                        sigma_noise: 0.0,
                    };
                    Ok(fit_dp_btl(c, h, &mut ZeroNoise, SolverOptions::default())?.theta)
                }
                _ => unreachable!(),
            }
        };
        let s = soundness_experiment(&btl, &est, &theta, 6, 3000, 5).unwrap();
        assert!(s.mean_out.abs() <= 4.0 * s.se_out, "{} {}", s.mean_out, s.se_out);

        let np = AttackModel::Nonparam { sigma: 0.5 };
        let coeffs = [0.2, 0.1, -0.1];
        let est = |data: &AttackData, _: &mut SeededRng| -> Result<Vec<f64>> {
            match data {
                AttackData::Regression { x, y } => Ok(truncated_empirical_coeffs(x, y, 3, 10.0)?.theta),
                _ => unreachable!(),
            }
        };
        let s = soundness_experiment(&np, &est, &coeffs, 50, 3000, 6).unwrap();
        assert!(s.mean_out.abs() <= 4.0 * s.se_out);
    }

    #[test]
    fn glm_mle_completeness_agrees() {
        let theta = [0.5, -0.3, 0.2];
        let model = logistic();
        let est = |data: &AttackData, _: &mut SeededRng| -> Result<Vec<f64>> {
            match data {
                AttackData::Glm(d) => crate::dp_glm::reference_minimizer(d, &GlmFamily::logistic(), 1e-10),
                _ => unreachable!(),
            }
        };
        let c = completeness_experiment(&model, &est, &theta, 400, 400, 0.01, 7, false).unwrap();
        assert!(c.gap.abs() <= 5.0 * c.combined_se, "{c:?}");
    }

    #[test]
    fn prior_moments() {
        let mut rng = SeededRng::new(8, 0);
        let q = sample_prior(
            &PriorSpec {
                kind: PriorKind::QuarticSymmetric,
                dim: 100_000,
            },
            &mut rng,
        )
        .unwrap();
        let s: RunningStats = q.iter().copied().collect();
        assert!((s.variance() - 1.0 / 7.0).abs() < 0.02 / 7.0);
        assert!(q.iter().all(|v| v.abs() < 1.0));
        let b = sample_prior(
            &PriorSpec {
                kind: PriorKind::Beta33,
                dim: 100_000,
            },
            &mut rng,
        )
        .unwrap();
        let s: RunningStats = b.iter().copied().collect();
        assert!((s.mean() - 0.5).abs() < 0.01);
        assert!((s.variance() - 1.0 / 28.0).abs() < 0.02 / 28.0);
    }

    #[test]
    fn sparse_prior_support() {
        let mut rng = SeededRng::new(9, 0);
        let spec = PriorSpec {
            kind: PriorKind::SparseTruncNormal {
                s_star: 3,
                gamma: None,
            },
            dim: 100,
        };
        for _ in 0..100 {
            let v = sample_prior(&spec, &mut rng).unwrap();
            assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 3);
            assert!(v.iter().all(|x| x.abs() < 1.0));
        }
        let bad = PriorSpec {
            kind: PriorKind::SparseTruncNormal {
                s_star: 5,
                gamma: None,
            },
            dim: 20,
        };
        assert!(sample_prior(&bad, &mut rng).is_err());
    }

    #[test]
    fn uniform_prior_stays_in_sobolev_restriction() {
        let mut rng = SeededRng::new(10, 0);
        let spec = SobolevSpec::new(2, 3.0).unwrap();
        for k in [1usize, 4, 9, 20] {
            let b = sobolev_prior_bound(&spec, k);
            let prior = PriorSpec {
                kind: PriorKind::UniformPm { b },
                dim: k,
            };
            for _ in 0..200 {
                assert!(spec.contains(&sample_prior(&prior, &mut rng).unwrap()));
            }
        }
    }

    #[test]
    fn stein_examples() {
        let mut rng = SeededRng::new(11, 0);
        let c = stein_identity_check(SteinDensity::StandardNormal, |z| z, |_| 1.0, 100_000, &mut rng);
        assert!(c.pass && (c.lhs - 1.0).abs() < 1e-12 && (c.rhs - 1.0).abs() < 0.02);
        let c = stein_identity_check(SteinDensity::StandardNormal, |z| z * z, |z| 2.0 * z, 100_000, &mut rng);
        assert!(c.pass);
        let c = stein_identity_check(SteinDensity::Quartic, |z| z, |_| 1.0, 100_000, &mut rng);
        assert!(c.pass, "{c:?}");
        let wrong = stein_identity_check(SteinDensity::StandardNormal, |z| z, |_| 2.0, 100_000, &mut rng);
        assert!(!wrong.pass);
    }

    #[test]
    fn records_csv_has_header() {
        let recs = vec![AttackRecord {
            replicate: 0,
            candidate: 3,
            membership: true,
            value: 0.5,
        }];
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "replicate,candidate,membership,value\n0,3,true,0.5\n");
    }
}
