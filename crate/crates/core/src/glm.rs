//! Canonical exponential-family GLMs: families, synthetic data, likelihood,
//! truncated gradient and per-datum score.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{NoiseSource, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `psi(t) = log(1 + e^t)`, Bernoulli responses.
    Logistic,
    /// `psi(t) = t^2 / 2`, Gaussian responses with dispersion `sigma^2`.
    ///
    /// `psi'` is unbounded, so the bounded-derivative assumption fails and
    /// privacy certificates built on it are never issued for this family.
    Gaussian,
}

/// A GLM family `f(y | x) = h(y) exp((y x'b - psi(x'b)) / c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmFamily {
    pub kind: FamilyKind,
    /// The dispersion factor `c(sigma)`.
    pub dispersion: f64,
    /// `c1` with `sup |psi'| < c1` (infinite when unbounded).
    pub psi_prime_bound: f64,
    /// `c2` with `sup |psi''| <= c2`.
    pub psi_double_prime_bound: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl GlmFamily {
    pub fn logistic() -> Self {
        Self {
            kind: FamilyKind::Logistic,
            dispersion: 1.0,
            psi_prime_bound: 1.0,
            psi_double_prime_bound: 0.25,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("noise sd must be positive, got {sigma}")));
        }
        Ok(Self {
            kind: FamilyKind::Gaussian,
            dispersion: sigma * sigma,
            psi_prime_bound: f64::INFINITY,
            psi_double_prime_bound: 1.0,
        })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Logistic => "logistic",
            FamilyKind::Gaussian => "gaussian",
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        match self.kind {
            FamilyKind::Logistic => {
                if t > 30.0 {
                    t + (-t).exp()
                } else if t < -30.0 {
                    t.exp()
                } else {
                    t.max(0.0) + (-t.abs()).exp().ln_1p()
                }
            }
            FamilyKind::Gaussian => 0.5 * t * t,
        }
    }

    pub fn psi_prime(&self, t: f64) -> f64 {
        match self.kind {
            FamilyKind::Logistic => sigmoid(t),
            FamilyKind::Gaussian => t,
        }
    }

    pub fn psi_double_prime(&self, t: f64) -> f64 {
        match self.kind {
            FamilyKind::Logistic => {
                let s = sigmoid(t);
                s * (1.0 - s)
            }
            FamilyKind::Gaussian => 1.0,
        }
    }

    /// `ess sup |y|` when responses are bounded.
    pub fn response_bound(&self) -> Option<f64> {
        match self.kind {
            FamilyKind::Logistic => Some(1.0),
            FamilyKind::Gaussian => None,
        }
    }

    /// Draw a response at linear predictor `t`.
    pub fn sample_response(&self, t: f64, rng: &mut SeededRng) -> f64 {
        match self.kind {
            FamilyKind::Logistic => {
                if rng.bernoulli(sigmoid(t)) {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::Gaussian => t + self.dispersion.sqrt() * rng.standard_normal(),
        }
    }
}

/// Almost-sure bound imposed on the covariate vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignBoundKind {
    /// `||x||_2 <= sigma_x sqrt(d)`.
    L2Scaled,
    /// `||x||_inf <= sigma_x`.
    Linf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignBoundKind,
    pub sigma_x: f64,
}

impl DesignSpec {
    pub fn l2(sigma_x: f64) -> Self {
        Self {
            kind: DesignBoundKind::L2Scaled,
            sigma_x,
        }
    }

    pub fn linf(sigma_x: f64) -> Self {
        Self {
            kind: DesignBoundKind::Linf,
            sigma_x,
        }
    }

    fn admits(&self, row: &[f64]) -> bool {
        let slack = 1e-9 * self.sigma_x.max(1.0);
        match self.kind {
            DesignBoundKind::L2Scaled => {
                let bound = self.sigma_x * (row.len() as f64).sqrt();
                row.iter().map(|v| v * v).sum::<f64>().sqrt() <= bound + slack
            }
            DesignBoundKind::Linf => row.iter().all(|v| v.abs() <= self.sigma_x + slack),
        }
    }
}

/// Regression data: an `n x d` design and `n` responses.
#[derive(Clone, Debug)]
pub struct GlmDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    design: DesignSpec,
}

impl GlmDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, design: DesignSpec) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("dataset needs n >= 1 and d >= 1"));
        }
        check_dim(x.nrows(), y.len())?;
        if !(design.sigma_x > 0.0) {
            return Err(Error::invalid("sigma_x must be positive"));
        }
        for (i, row) in x.row_iter().enumerate() {
            let row: Vec<f64> = row.iter().copied().collect();
            if !design.admits(&row) {
                return Err(Error::invalid(format!(
                    "row {i} violates the declared {:?} design bound",
                    design.kind
                )));
            }
        }
        Ok(Self { x, y, design })
    }

    /// Build from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, design: DesignSpec) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dim(d, r.len())?;
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(x, DVector::from_vec(y), design)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn design(&self) -> DesignSpec {
        self.design
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Copy with observation `i` replaced by `(x, y)`.
    pub fn with_replaced(&self, i: usize, x: &[f64], y: f64) -> Result<Self> {
        check_dim(self.d(), x.len())?;
        let mut out = self.clone();
        for (j, v) in x.iter().enumerate() {
            out.x[(i, j)] = *v;
        }
        out.y[i] = y;
        if !self.design.admits(x) {
            return Err(Error::invalid("replacement row violates the design bound"));
        }
        Ok(out)
    }

    /// Extreme eigenvalues `(min, max)` of the empirical second moment `X'X / n`.
    pub fn second_moment_extremes(&self) -> (f64, f64) {
        let gram = self.x.transpose() * &self.x / self.n() as f64;
        let eig = SymmetricEigen::new(gram);
        let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo.max(0.0), hi)
    }

    /// Write as CSV with header `y,x_1,...,x_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.d()).map(|j| format!("x_{j}")));
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.y[i].to_string()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, design: DesignSpec) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("y") || headers.len() < 2 {
            return Err(Error::Config("dataset CSV must have columns y,x_1..x_d".into()));
        }
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad number in dataset CSV: {e}")))?;
            ys.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        Self::from_rows(&rows, ys, design)
    }

    pub fn load(path: &Path, design: DesignSpec) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, design)
    }
}

/// Coefficient vector of a GLM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub beta: Vec<f64>,
}

impl GlmParams {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(Self { beta })
    }

    pub fn zeros(d: usize) -> Self {
        Self { beta: vec![0.0; d] }
    }
}

/// Projection onto `[-r, r]`; `r = inf` is the identity.
#[inline]
pub fn clip_response(y: f64, r: f64) -> f64 {
    y.clamp(-r, r)
}

/// `(1/n) sum_i (psi(x_i'b) - y_i x_i'b)`.
pub fn neg_log_likelihood(data: &GlmDataset, family: &GlmFamily, beta: &[f64]) -> Result<f64> {
    check_dim(data.d(), beta.len())?;
    let eta = data.x() * DVector::from_column_slice(beta);
    let total: f64 = eta
        .iter()
        .zip(data.y().iter())
        .map(|(t, y)| family.psi(*t) - y * t)
        .sum();
    Ok(total / data.n() as f64)
}

/// `(1/n) sum_i (psi'(x_i'b) - clip(y_i, R)) x_i`; pass `f64::INFINITY` for no truncation.
pub fn glm_gradient(
    data: &GlmDataset,
    family: &GlmFamily,
    beta: &[f64],
    truncation: f64,
) -> Result<Vec<f64>> {
    check_dim(data.d(), beta.len())?;
    if !(truncation > 0.0) {
        return Err(Error::invalid("truncation level must be positive"));
    }
    let mut resid = data.x() * DVector::from_column_slice(beta);
    for (r, y) in resid.iter_mut().zip(data.y().iter()) {
        *r = family.psi_prime(*r) - clip_response(*y, truncation);
    }
    let g = data.x().tr_mul(&resid) / data.n() as f64;
    Ok(g.as_slice().to_vec())
}

/// Per-datum score `[y - psi'(x'b)] x / c(sigma)`.
pub fn glm_score(family: &GlmFamily, x: &[f64], y: f64, beta: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), beta.len());
    let t: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    let w = (y - family.psi_prime(t)) / family.dispersion;
    x.iter().map(|v| w * v).collect()
}

/// Draw one covariate vector from the design distribution.
///
/// `L2Scaled` draws uniformly on the sphere of radius `sigma_x sqrt(d)`;
/// `Linf` draws i.i.d. uniform coordinates on `[-sigma_x, sigma_x]`.
/// Both have `E x x' = sigma_x^2 I` (resp. `sigma_x^2 / 3 I`).
pub fn sample_covariate(d: usize, design: DesignSpec, rng: &mut SeededRng) -> Vec<f64> {
    match design.kind {
        DesignBoundKind::L2Scaled => {
            let r = design.sigma_x * (d as f64).sqrt();
            rng.unit_vector(d).into_iter().map(|v| v * r).collect()
        }
        DesignBoundKind::Linf => (0..d)
            .map(|_| rng.uniform_range(-design.sigma_x, design.sigma_x))
            .collect(),
    }
}

/// Draw one `(x, y)` pair from the model at `beta`.
pub fn sample_observation(
    beta: &[f64],
    family: &GlmFamily,
    design: DesignSpec,
    rng: &mut SeededRng,
) -> (Vec<f64>, f64) {
    let x = sample_covariate(beta.len(), design, rng);
    let t: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    let y = family.sample_response(t, rng);
    (x, y)
}

/// Synthetic i.i.d. sample of size `n` from the GLM at `beta_true`.
pub fn generate_glm(
    n: usize,
    beta_true: &[f64],
    family: &GlmFamily,
    design: DesignSpec,
    rng: &mut SeededRng,
) -> Result<GlmDataset> {
    let d = beta_true.len();
    if n == 0 || d == 0 {
        return Err(Error::invalid("need n >= 1 and d >= 1"));
    }
    if !(design.sigma_x > 0.0) {
        return Err(Error::invalid("sigma_x must be positive"));
    }
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let (xi, yi) = sample_observation(beta_true, family, design, rng);
        for (j, v) in xi.into_iter().enumerate() {
            x[(i, j)] = v;
        }
        y[i] = yi;
    }
    Ok(GlmDataset { x, y, design })
}
