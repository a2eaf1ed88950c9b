//! The norm induced by the discretized Caratheodory orbitope
//! `S = conv{ +-phi(x_g) }`, computed as the gauge linear program
//!
//! ```text
//! minimize  sum(l+ + l-)  subject to  sum_g (l+_g - l-_g) phi(x_g) = t,  l >= 0
//! ```
//!
//! by a dense revised simplex method.

use nalgebra::{DMatrix, DVector};

use super::fourier_features;
use crate::error::{check_dim, Error, Result};

const PRICE_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const REFACTOR_EVERY: usize = 32;

/// Uniform grid `x_g = g / G` on `[0, 1)` and the feature vectors `phi(x_g)`.
#[derive(Clone, Debug)]
pub struct OrbitopeGrid {
    k: usize,
    points: Vec<f64>,
    /// `K x G`, column `g` is `phi(x_g)`.
    features: DMatrix<f64>,
    /// `K` grid columns spanning `R^K`, when they exist.
    start_basis: Option<Vec<usize>>,
}

impl OrbitopeGrid {
    pub fn new(k: usize, grid_size: usize) -> Result<Self> {
        if k == 0 || grid_size == 0 {
            return Err(Error::invalid("orbitope grid needs K >= 1 and G >= 1"));
        }
        let points: Vec<f64> = (0..grid_size).map(|g| g as f64 / grid_size as f64).collect();
        let mut features = DMatrix::zeros(k, grid_size);
        for (g, &x) in points.iter().enumerate() {
            for (j, v) in fourier_features(x, k).into_iter().enumerate() {
                features[(j, g)] = v;
            }
        }
        let start_basis = spanning_columns(&features);
        Ok(Self {
            k,
            points,
            features,
            start_basis,
        })
    }

    /// `G = max(64, 16 K)`.
    pub fn with_default_size(k: usize) -> Result<Self> {
        Self::new(k, default_grid_size(k))
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn feature(&self, g: usize) -> Vec<f64> {
        self.features.column(g).iter().copied().collect()
    }

    /// Signed vertex `j` of `S`: `phi(x_j)` for `j < G`, `-phi(x_{j-G})` otherwise.
    fn vertex(&self, j: usize) -> DVector<f64> {
        let g = self.size();
        if j < g {
            self.features.column(j).into_owned()
        } else {
            -self.features.column(j - g).into_owned()
        }
    }
}

pub fn default_grid_size(k: usize) -> usize {
    64.max(16 * k)
}

/// Greedy Gram-Schmidt column selection; `None` when rank < rows.
fn spanning_columns(a: &DMatrix<f64>) -> Option<Vec<usize>> {
    let (k, g) = a.shape();
    let mut resid = a.clone();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let (best, norm) = (0..g)
            .filter(|c| !chosen.contains(c))
            .map(|c| (c, resid.column(c).norm()))
            .fold((usize::MAX, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best == usize::MAX || norm < 1e-8 {
            return None;
        }
        let q = resid.column(best) / norm;
        for c in 0..g {
            let proj = q.dot(&resid.column(c));
            let mut col = resid.column_mut(c);
            col.axpy(-proj, &q, 1.0);
        }
        chosen.push(best);
    }
    Some(chosen)
}

/// Optimal value and dual certificate of the gauge program.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeSolution {
    /// `||t||_S`.
    pub value: f64,
    /// `y` with `max_g |y' phi(x_g)| <= 1` and `y't = value`; a subgradient of the norm at `t`.
    pub dual: Vec<f64>,
    pub pivots: usize,
}

/// `||t||_S` over the grid vertices.
pub fn orbitope_norm(t: &[f64], grid: &OrbitopeGrid) -> Result<f64> {
    Ok(orbitope_gauge(t, grid)?.value)
}

/// Solve the gauge program, returning the value and a dual certificate.
pub fn orbitope_gauge(t: &[f64], grid: &OrbitopeGrid) -> Result<GaugeSolution> {
    let k = grid.dim();
    check_dim(k, t.len())?;
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("orbitope norm of a non-finite vector"));
    }
    let start = grid.start_basis.as_ref().ok_or_else(|| {
        Error::Infeasible(format!(
            "grid of {} points does not span R^{k}; increase the grid size",
            grid.size()
        ))
    })?;
    if t.iter().all(|v| *v == 0.0) {
        return Ok(GaugeSolution {
            value: 0.0,
            dual: vec![0.0; k],
            pivots: 0,
        });
    }
    let gsize = grid.size();
    let tv = DVector::from_column_slice(t);

    let mut basis = start.clone();
    let mut binv = basis_inverse(grid, &basis)?;
    let mut x = &binv * &tv;
    for i in 0..k {
        if x[i] < 0.0 {
            basis[i] += gsize;
            x[i] = -x[i];
            binv.row_mut(i).neg_mut();
        }
    }

    let bland_after = 50 * k + 100;
    let max_pivots = 20_000 + 200 * k;
    let mut since_refactor = 0;
    for pivots in 0..max_pivots {
        let y = binv.row_sum_tr();
        let scores = grid.features.tr_mul(&y);
        let entering = if pivots < bland_after {
            let (g, s) = scores
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (g, s)| if s.abs() > acc.1.abs() { (g, *s) } else { acc });
            (s.abs() > 1.0 + PRICE_TOL).then(|| if s > 0.0 { g } else { g + gsize })
        } else {
            (0..2 * gsize).find(|&j| {
                let s = if j < gsize { scores[j] } else { -scores[j - gsize] };
                s > 1.0 + PRICE_TOL && !basis.contains(&j)
            })
        };
        let Some(enter) = entering else {
            let value = x.sum();
            return Ok(GaugeSolution {
                value,
                dual: y.iter().copied().collect(),
                pivots,
            });
        };
        let dir = &binv * grid.vertex(enter);
        let bland = pivots >= bland_after;
        let min_ratio = (0..k)
            .filter(|&i| dir[i] > PIVOT_TOL)
            .map(|i| x[i] / dir[i])
            .fold(f64::INFINITY, f64::min);
        let mut leave: Option<usize> = None;
        for i in 0..k {
            if dir[i] > PIVOT_TOL && x[i] / dir[i] <= min_ratio + RATIO_TIE {
                let better = match leave {
                    None => true,
                    Some(l) if bland => basis[i] < basis[l],
                    Some(l) => dir[i] > dir[l],
                };
                if better {
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else {
            return Err(Error::Infeasible("gauge program is unbounded".into()));
        };
        let piv = dir[r];
        let row_r = binv.row(r) / piv;
        for i in 0..k {
            if i != r && dir[i] != 0.0 {
                let f = dir[i];
                for c in 0..k {
                    binv[(i, c)] -= f * row_r[c];
                }
            }
        }
        binv.set_row(r, &row_r);
        let step = x[r] / piv;
        for i in 0..k {
            x[i] -= step * dir[i];
        }
        x[r] = step;
        basis[r] = enter;

        since_refactor += 1;
        if since_refactor >= REFACTOR_EVERY {
            since_refactor = 0;
            binv = basis_inverse(grid, &basis)?;
            x = &binv * &tv;
            for v in x.iter_mut() {
                if *v < 0.0 && *v > -1e-9 {
                    *v = 0.0;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: max_pivots,
        residual: f64::NAN,
    })
}

fn basis_inverse(grid: &OrbitopeGrid, basis: &[usize]) -> Result<DMatrix<f64>> {
    let k = grid.dim();
    let mut b = DMatrix::zeros(k, k);
    for (i, &j) in basis.iter().enumerate() {
        b.set_column(i, &grid.vertex(j));
    }
    b.try_inverse()
        .ok_or_else(|| Error::Infeasible("simplex basis became singular".into()))
}

/// Relative change of `||t||_S` when the grid is doubled.
pub fn grid_refinement_change(t: &[f64], grid: &OrbitopeGrid) -> Result<f64> {
    let coarse = orbitope_norm(t, grid)?;
    let fine = orbitope_norm(t, &OrbitopeGrid::new(grid.dim(), 2 * grid.size())?)?;
    if coarse == 0.0 {
        return Ok(0.0);
    }
    Ok((coarse - fine).abs() / coarse)
}
