//! Laplace and Gaussian noise-addition mechanisms and simple composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NoiseSource;

/// An `(epsilon, delta)` privacy budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    /// Pure `(epsilon, 0)` budget.
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Sum of budgets under simple composition.
    pub fn compose(budgets: &[PrivacyBudget]) -> Result<PrivacyBudget> {
        let eps = budgets.iter().map(|b| b.epsilon).sum();
        let delta = budgets.iter().map(|b| b.delta).sum();
        PrivacyBudget::new(eps, delta)
    }
}

/// Per-step budget `(epsilon / t, delta / t)` for a `t`-fold composition.
pub fn split_budget(budget: PrivacyBudget, t: usize) -> Result<PrivacyBudget> {
    if t == 0 {
        return Err(Error::invalid("cannot split a budget over zero steps"));
    }
    if t == 1 {
        return Ok(budget);
    }
    Ok(PrivacyBudget {
        epsilon: budget.epsilon / t as f64,
        delta: budget.delta / t as f64,
    })
}

/// Laplace scale `l1_sensitivity / eps`.
pub fn laplace_scale(l1_sensitivity: f64, eps: f64) -> Result<f64> {
    if !(l1_sensitivity > 0.0) || !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "Laplace mechanism needs positive sensitivity and epsilon (got {l1_sensitivity}, {eps})"
        )));
    }
    Ok(l1_sensitivity / eps)
}

/// Per-coordinate Gaussian variance `2 B^2 log(2 / delta) / eps^2`.
pub fn gaussian_variance(l2_sensitivity: f64, budget: PrivacyBudget) -> Result<f64> {
    if budget.is_pure() {
        return Err(Error::Unsupported(
            "the Gaussian mechanism requires delta > 0".into(),
        ));
    }
    if !(l2_sensitivity > 0.0) {
        return Err(Error::invalid(format!(
            "Gaussian mechanism needs positive sensitivity, got {l2_sensitivity}"
        )));
    }
    let eps = budget.epsilon;
    Ok(2.0 * l2_sensitivity * l2_sensitivity * (2.0 / budget.delta).ln() / (eps * eps))
}

/// `v + w` with `w` i.i.d. Laplace(`l1_sensitivity / eps`).
pub fn laplace_perturb<N: NoiseSource + ?Sized>(
    v: &[f64],
    l1_sensitivity: f64,
    eps: f64,
    noise: &mut N,
) -> Result<Vec<f64>> {
    let scale = laplace_scale(l1_sensitivity, eps)?;
    Ok(v.iter().map(|x| x + noise.laplace(scale)).collect())
}

/// `v + w` with `w` spherical normal of variance [`gaussian_variance`].
pub fn gaussian_perturb<N: NoiseSource + ?Sized>(
    v: &[f64],
    l2_sensitivity: f64,
    budget: PrivacyBudget,
    noise: &mut N,
) -> Result<Vec<f64>> {
    let sd = gaussian_variance(l2_sensitivity, budget)?.sqrt();
    Ok(v.iter().map(|x| x + noise.gaussian(sd)).collect())
}
