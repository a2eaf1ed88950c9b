//! Declarative experiment configuration: one `key = value` per line, grid
//! keys take comma-separated lists, `#` starts a comment.
//!
//! ```text
//! model = glm
//! n = 1024, 2048, 4096
//! d = 5
//! epsilon = 0.1
//! delta = n^-1.1
//! replicates = 200
//! seed = 7
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonparam::KnormMethod;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Glm,
    SparseGlm,
    Btl,
    Nonparam,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glm" => Ok(ModelKind::Glm),
            "sparse_glm" => Ok(ModelKind::SparseGlm),
            "btl" => Ok(ModelKind::Btl),
            "nonparam" => Ok(ModelKind::Nonparam),
            other => Err(Error::Config(format!(
                "unknown model kind '{other}' (expected glm, sparse_glm, btl or nonparam)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyChoice {
    Logistic,
    Gaussian,
}

/// A literal `delta` or `n^a` evaluated per cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeltaSpec {
    Literal(f64),
    PowerOfN(f64),
}

impl DeltaSpec {
    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            DeltaSpec::Literal(d) => d,
            DeltaSpec::PowerOfN(a) => (n as f64).powf(a),
        }
    }
}

impl FromStr for DeltaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace() && *c != '{' && *c != '}').collect();
        let spec = if let Some(exp) = t.strip_prefix("n^") {
            DeltaSpec::PowerOfN(parse_num(exp, "delta exponent")?)
        } else {
            DeltaSpec::Literal(parse_num(&t, "delta")?)
        };
        match spec {
            DeltaSpec::Literal(d) if !(d > 0.0 && d < 1.0) => {
                Err(Error::Config(format!("delta must lie in (0, 1), got {d}")))
            }
            DeltaSpec::PowerOfN(a) if !(a < 0.0) => {
                Err(Error::Config(format!("delta exponent must be negative, got {a}")))
            }
            s => Ok(s),
        }
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSpec::Literal(d) => write!(f, "{d}"),
            DeltaSpec::PowerOfN(a) => write!(f, "n^{a}"),
        }
    }
}

fn parse_num<T: FromStr>(s: &str, key: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{}' for {key}", s.trim())))
}

fn parse_list<T: FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_num(p, key))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(Error::Config(format!("grid '{key}' is empty")));
    }
    Ok(v)
}

fn parse_bool(s: &str, key: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("cannot parse '{other}' for {key}"))),
    }
}

/// Grid and model settings for [`run_experiment`](super::run_experiment).
///
/// Keys not used by the chosen model are ignored; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub family: FamilyChoice,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub s_star: Vec<usize>,
    /// BTL edge probability.
    pub p: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub delta: Vec<DeltaSpec>,
    /// Sobolev smoothness.
    pub alpha: Vec<u32>,
    /// Sobolev radius.
    pub c: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Fill the wall-time column; disable for byte-identical reruns.
    pub record_timing: bool,
    /// Size of the true parameter (see [`truth_for`](super::truth_for)).
    pub truth_scale: f64,
    /// Response noise sd for the Gaussian family and the regression model.
    pub sigma: f64,
    pub sigma_x: f64,
    pub iterations: Option<usize>,
    pub step_size: Option<f64>,
    pub sparsity: Option<usize>,
    pub curvature_gamma: Option<f64>,
    pub curvature_alpha: Option<f64>,
    pub rho: f64,
    pub c0: f64,
    pub ridge: Option<f64>,
    pub noise_sd: Option<f64>,
    pub k: Option<usize>,
    pub sampler: KnormMethod,
}

impl ExperimentConfig {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            family: FamilyChoice::Logistic,
            n: vec![1000],
            d: vec![5],
            s_star: vec![1],
            p: vec![0.5],
            epsilon: vec![1.0],
            delta: vec![DeltaSpec::PowerOfN(-1.1)],
            alpha: vec![2],
            c: vec![1.0],
            replicates: 10,
            seed: 0,
            out: None,
            record_timing: true,
            truth_scale: 0.5,
            sigma: 0.5,
            sigma_x: 1.0,
            iterations: None,
            step_size: None,
            sparsity: None,
            curvature_gamma: None,
            curvature_alpha: None,
            rho: 0.5,
            c0: 1.0,
            ridge: None,
            noise_sd: None,
            k: None,
            sampler: KnormMethod::Auto,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let model = pairs
            .iter()
            .find(|(k, _)| k == "model")
            .ok_or_else(|| Error::Config("missing 'model'".into()))?
            .1
            .parse()?;
        let mut cfg = Self::new(model);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "model" => self.model = v.parse()?,
            "family" => {
                self.family = match v {
                    "logistic" => FamilyChoice::Logistic,
                    "gaussian" => FamilyChoice::Gaussian,
                    o => return Err(Error::Config(format!("unknown family '{o}'"))),
                }
            }
            "n" => self.n = parse_list(v, key)?,
            "d" => self.d = parse_list(v, key)?,
            "s_star" => self.s_star = parse_list(v, key)?,
            "p" => self.p = parse_list(v, key)?,
            "epsilon" | "eps" => self.epsilon = parse_list(v, key)?,
            "delta" => self.delta = parse_list(v, key)?,
            "alpha" => self.alpha = parse_list(v, key)?,
            "c" => self.c = parse_list(v, key)?,
            "replicates" => self.replicates = parse_num(v, key)?,
            "seed" => self.seed = parse_num(v, key)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "record_timing" => self.record_timing = parse_bool(v, key)?,
            "truth_scale" => self.truth_scale = parse_num(v, key)?,
            "sigma" => self.sigma = parse_num(v, key)?,
            "sigma_x" => self.sigma_x = parse_num(v, key)?,
            "iterations" => self.iterations = Some(parse_num(v, key)?),
            "step_size" => self.step_size = Some(parse_num(v, key)?),
            "sparsity" => self.sparsity = Some(parse_num(v, key)?),
            "curvature_gamma" => self.curvature_gamma = Some(parse_num(v, key)?),
            "curvature_alpha" => self.curvature_alpha = Some(parse_num(v, key)?),
            "rho" => self.rho = parse_num(v, key)?,
            "c0" => self.c0 = parse_num(v, key)?,
            "ridge" => self.ridge = Some(parse_num(v, key)?),
            "noise_sd" => self.noise_sd = Some(parse_num(v, key)?),
            "k" => self.k = Some(parse_num(v, key)?),
            "sampler" => {
                self.sampler = match v {
                    "auto" => KnormMethod::Auto,
                    "hit_and_run" => KnormMethod::HitAndRun,
                    "rejection" => KnormMethod::Rejection,
                    o => return Err(Error::Config(format!("unknown sampler '{o}'"))),
                }
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        let empty = [
            ("n", self.n.is_empty()),
            ("d", self.d.is_empty()),
            ("s_star", self.s_star.is_empty()),
            ("p", self.p.is_empty()),
            ("epsilon", self.epsilon.is_empty()),
            ("delta", self.delta.is_empty()),
            ("alpha", self.alpha.is_empty()),
            ("c", self.c.is_empty()),
        ];
        if let Some((k, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("grid '{k}' is empty")));
        }
        if self.epsilon.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("epsilon values must be positive and finite".into()));
        }
        if self.p.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::Config("p values must lie in (0, 1]".into()));
        }
        if self.n.iter().any(|&n| n < 2) || self.d.contains(&0) {
            return Err(Error::Config("need n >= 2 and d >= 1".into()));
        }
        if !(self.truth_scale >= 0.0 && self.sigma > 0.0 && self.sigma_x > 0.0) {
            return Err(Error::Config("truth_scale, sigma and sigma_x must be non-negative/positive".into()));
        }
        Ok(())
    }

    /// Cartesian product of the grids, in the order n, d, s*, p, eps, delta, alpha, C.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &d in &self.d {
                for &s_star in &self.s_star {
                    for &p in &self.p {
                        for &epsilon in &self.epsilon {
                            for &delta in &self.delta {
                                for &alpha in &self.alpha {
                                    for &c in &self.c {
                                        out.push(Cell {
                                            index: out.len(),
                                            n,
                                            d,
                                            s_star,
                                            p,
                                            epsilon,
                                            delta: delta.resolve(n),
                                            alpha,
                                            c,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub d: usize,
    pub s_star: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: u32,
    pub c: f64,
}
