//! Empirical lower bound on the privacy loss of a mechanism from samples on
//! one pair of adjacent inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{gaussian_variance, laplace_scale, PrivacyBudget};
use crate::rng::{NoiseSource, SeededRng};
use crate::stats::clopper_pearson;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub trials: usize,
    pub bins: usize,
    pub delta: f64,
    /// Each Clopper-Pearson interval has level `1 - alpha`.
    pub alpha: f64,
    /// Output coordinate that is binned.
    pub projection: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            trials: 100_000,
            bins: 50,
            delta: 0.0,
            alpha: 0.05,
            projection: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `+inf` when some bin is reached from one input and never from the other.
    pub epsilon_hat: f64,
    pub trials: usize,
    pub bins_used: usize,
    pub note: String,
}

impl AuditReport {
    pub fn unbounded(&self) -> bool {
        self.epsilon_hat.is_infinite()
    }
}

/// `eps_hat = max over bins B and both orders of
/// log((P_lo(B | X) - delta) / P_hi(B | X'))`, clamped at 0, where the bins are
/// equal-mass bins of the pooled outputs and `P_lo`, `P_hi` are
/// Clopper-Pearson bounds. Trial `t` on `X` uses stream `2t`, on `X'` stream `2t + 1`.
pub fn privacy_audit<D, M>(mechanism: &M, x: &D, x_adj: &D, cfg: &AuditConfig, seed: u64) -> Result<AuditReport>
where
    D: Sync + ?Sized,
    M: Fn(&D, &mut SeededRng) -> Result<Vec<f64>> + Sync + ?Sized,
{
    if cfg.trials == 0 || cfg.bins < 2 {
        return Err(Error::invalid("audit needs at least one trial and two bins"));
    }
    if !(cfg.delta >= 0.0 && cfg.delta < 1.0 && cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::invalid("audit needs delta in [0, 1) and alpha in (0, 1)"));
    }
    let run = |data: &D, offset: u64| -> Result<Vec<f64>> {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = SeededRng::new(seed, 2 * t + offset);
                let out = mechanism(data, &mut rng)?;
                out.get(cfg.projection).copied().ok_or(Error::DimensionMismatch {
                    expected: cfg.projection + 1,
                    got: out.len(),
                })
            })
            .collect()
    };
    let a = run(x, 0)?;
    let b = run(x_adj, 1)?;
    if a.iter().chain(&b).any(|v| v.is_nan()) {
        return Err(Error::invalid("mechanism produced NaN output"));
    }
    let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..cfg.bins).map(|i| pooled[i * pooled.len() / cfg.bins]).collect();
    edges.dedup();
    let count = |v: &[f64]| {
        let mut c = vec![0u64; edges.len() + 1];
        for x in v {
            c[edges.partition_point(|e| e <= x)] += 1;
        }
        c
    };
    let (ca, cb) = (count(&a), count(&b));
    let n = cfg.trials as u64;
    let mut eps_hat = 0.0f64;
    let mut used = 0;
    for (&ka, &kb) in ca.iter().zip(&cb) {
        if ka == 0 && kb == 0 {
            continue;
        }
        used += 1;
        for (kp, kq) in [(ka, kb), (kb, ka)] {
            let lo = clopper_pearson(kp, n, cfg.alpha).0 - cfg.delta;
            if lo <= 0.0 {
                continue;
            }
            if kq == 0 {
                eps_hat = f64::INFINITY;
                continue;
            }
            let hi = clopper_pearson(kq, n, cfg.alpha).1;
            eps_hat = eps_hat.max((lo / hi).ln());
        }
    }
    if used == 0 {
        return Err(Error::invalid("every bin is empty"));
    }
    Ok(AuditReport {
        epsilon_hat: eps_hat,
        trials: cfg.trials,
        bins_used: used,
        note: format!(
            "lower bound at {:.0}% Clopper-Pearson confidence per bin, {} trials per input",
            100.0 * (1.0 - cfg.alpha),
            cfg.trials
        ),
    })
}

/// Reference mechanisms releasing a scalar count with sensitivity 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMechanism {
    Laplace,
    Gaussian,
    /// Laplace noise at half the required scale.
    BrokenLaplace,
    /// Releases the count unchanged.
    Identity,
}

impl CountMechanism {
    /// Mechanism handle for `privacy_audit` on `f64` counts.
    pub fn handle(self, budget: PrivacyBudget) -> Result<impl Fn(&f64, &mut SeededRng) -> Result<Vec<f64>> + Sync> {
        let sd = match self {
            CountMechanism::Laplace => laplace_scale(1.0, budget.epsilon())?,
            CountMechanism::BrokenLaplace => 0.5 * laplace_scale(1.0, budget.epsilon())?,
            CountMechanism::Gaussian => gaussian_variance(1.0, budget)?.sqrt(),
            CountMechanism::Identity => 0.0,
        };
        Ok(move |x: &f64, rng: &mut SeededRng| {
            let noise = match self {
                CountMechanism::Laplace | CountMechanism::BrokenLaplace => rng.laplace(sd),
                CountMechanism::Gaussian => rng.gaussian(sd),
                CountMechanism::Identity => 0.0,
            };
            Ok(vec![x + noise])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_small_estimate() {
        let m = CountMechanism::Laplace.handle(PrivacyBudget::pure(1.0).unwrap()).unwrap();
        let r = privacy_audit(&m, &0.0, &0.0, &AuditConfig::default(), 1).unwrap();
        assert!(r.epsilon_hat <= 0.05, "{}", r.epsilon_hat);
    }

    #[test]
    fn identity_is_unbounded() {
        let m = CountMechanism::Identity.handle(PrivacyBudget::pure(1.0).unwrap()).unwrap();
        let cfg = AuditConfig {
            trials: 1000,
            ..AuditConfig::default()
        };
        let r = privacy_audit(&m, &0.0, &1.0, &cfg, 2).unwrap();
        assert!(r.unbounded() && r.epsilon_hat > 100.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = CountMechanism::Gaussian
            .handle(PrivacyBudget::new(1.0, 1e-5).unwrap())
            .unwrap();
        let cfg = AuditConfig {
            trials: 5000,
            delta: 1e-5,
            ..AuditConfig::default()
        };
        let a = privacy_audit(&m, &0.0, &1.0, &cfg, 3).unwrap();
        let b = privacy_audit(&m, &0.0, &1.0, &cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_projection_is_an_error() {
        let m = CountMechanism::Laplace.handle(PrivacyBudget::pure(1.0).unwrap()).unwrap();
        let cfg = AuditConfig {
            trials: 10,
            projection: 1,
            ..AuditConfig::default()
        };
        assert!(privacy_audit(&m, &0.0, &1.0, &cfg, 4).is_err());
    }
}
