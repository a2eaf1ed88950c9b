//! Samplers for the K-norm density `g(t) ∝ exp(-||t||_S / scale)`.

use serde::{Deserialize, Serialize};

use super::orbitope::{orbitope_norm, OrbitopeGrid};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnormMethod {
    /// Exact rejection sampling for `K <= 2`, hit-and-run otherwise.
    Auto,
    HitAndRun,
    /// Gamma radius times a uniform point of `S`; `K <= 2` only.
    Rejection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thinning: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnormConfig {
    pub method: KnormMethod,
    pub mcmc: McmcConfig,
}

impl Default for KnormConfig {
    fn default() -> Self {
        Self {
            method: KnormMethod::Auto,
            mcmc: McmcConfig::default(),
        }
    }
}

impl KnormConfig {
    fn resolved(&self, k: usize) -> Result<KnormMethod> {
        if self.mcmc.thinning == 0 {
            return Err(Error::invalid("MCMC thinning must be at least 1"));
        }
        match self.method {
            KnormMethod::Auto if k <= 2 => Ok(KnormMethod::Rejection),
            KnormMethod::Auto => Ok(KnormMethod::HitAndRun),
            KnormMethod::Rejection if k > 2 => Err(Error::Unsupported(
                "the rejection sampler is only offered for K <= 2".into(),
            )),
            m => Ok(m),
        }
    }
}

/// A hit-and-run chain targeting `exp(-||t||_S / scale)`, started at 0.
///
/// Each step draws a uniform direction and moves by slice sampling along the
/// line (stepping out, then shrinkage). The first call to [`KnormChain::next`]
/// discards `burn_in` steps; every call then advances `thinning` steps.
pub struct KnormChain<'a> {
    grid: &'a OrbitopeGrid,
    scale: f64,
    mcmc: McmcConfig,
    state: Vec<f64>,
    state_norm: f64,
    burned: bool,
}

impl<'a> KnormChain<'a> {
    pub fn new(grid: &'a OrbitopeGrid, scale: f64, mcmc: McmcConfig) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("K-norm scale must be positive, got {scale}")));
        }
        if mcmc.thinning == 0 {
            return Err(Error::invalid("MCMC thinning must be at least 1"));
        }
        Ok(Self {
            grid,
            scale,
            mcmc,
            state: vec![0.0; grid.dim()],
            state_norm: 0.0,
            burned: false,
        })
    }

    fn norm_at(&self, u: &[f64], s: f64) -> Result<f64> {
        let p: Vec<f64> = self.state.iter().zip(u).map(|(a, b)| a + s * b).collect();
        orbitope_norm(&p, self.grid)
    }

    fn step(&mut self, rng: &mut SeededRng) -> Result<()> {
        let u = rng.unit_vector(self.grid.dim());
        // Slice at height log f(x) - Exp(1), with log f = -||.|| / scale.
        let level = self.state_norm + self.scale * rng.standard_exponential();
        let width = self.scale / orbitope_norm(&u, self.grid)?;
        let mut lo = -width * rng.uniform_open();
        let mut hi = lo + width;
        while self.norm_at(&u, lo)? < level {
            lo -= width;
        }
        while self.norm_at(&u, hi)? < level {
            hi += width;
        }
        for _ in 0..200 {
            let s = rng.uniform_range(lo, hi);
            let nrm = self.norm_at(&u, s)?;
            if nrm < level {
                for (x, d) in self.state.iter_mut().zip(&u) {
                    *x += s * d;
                }
                self.state_norm = nrm;
                return Ok(());
            }
            if s < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
        }
        Err(Error::NonConvergence {
            iterations: 200,
            residual: hi - lo,
        })
    }

    pub fn next(&mut self, rng: &mut SeededRng) -> Result<Vec<f64>> {
        if !self.burned {
            for _ in 0..self.mcmc.burn_in {
                self.step(rng)?;
            }
            self.burned = true;
        }
        for _ in 0..self.mcmc.thinning {
            self.step(rng)?;
        }
        Ok(self.state.clone())
    }
}

/// Exact draw: radius `Gamma(K + 1, scale)` times a uniform point of `S`
/// found by rejection from its bounding box.
pub fn sample_knorm_rejection(scale: f64, grid: &OrbitopeGrid, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let k = grid.dim();
    if k > 2 {
        return Err(Error::Unsupported(
            "the rejection sampler is only offered for K <= 2".into(),
        ));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("K-norm scale must be positive, got {scale}")));
    }
    let radius: f64 = scale * (0..=k).map(|_| rng.standard_exponential()).sum::<f64>();
    let half = |j: usize| if j == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
    for _ in 0..100_000 {
        let z: Vec<f64> = (0..k).map(|j| rng.uniform_range(-half(j), half(j))).collect();
        if orbitope_norm(&z, grid)? <= 1.0 {
            return Ok(z.into_iter().map(|v| radius * v).collect());
        }
    }
    Err(Error::NonConvergence {
        iterations: 100_000,
        residual: f64::NAN,
    })
}

/// One draw from the K-norm density.
pub fn sample_knorm_noise(
    scale: f64,
    grid: &OrbitopeGrid,
    rng: &mut SeededRng,
    cfg: &KnormConfig,
) -> Result<Vec<f64>> {
    match cfg.resolved(grid.dim())? {
        KnormMethod::Rejection => sample_knorm_rejection(scale, grid, rng),
        _ => KnormChain::new(grid, scale, cfg.mcmc)?.next(rng),
    }
}

/// `count` draws; hit-and-run draws come from one chain.
pub fn sample_knorm_stream(
    scale: f64,
    grid: &OrbitopeGrid,
    rng: &mut SeededRng,
    cfg: &KnormConfig,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    match cfg.resolved(grid.dim())? {
        KnormMethod::Rejection => (0..count).map(|_| sample_knorm_rejection(scale, grid, rng)).collect(),
        _ => {
            let mut chain = KnormChain::new(grid, scale, cfg.mcmc)?;
            (0..count).map(|_| chain.next(rng)).collect()
        }
    }
}
