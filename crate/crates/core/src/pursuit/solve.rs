//! Local least-squares update over the neighborhood of a new selection.

use super::correlation::dot;

/// A shifted atom restricted to the window.
#[derive(Debug, Clone, Copy)]
pub struct Column<'a> {
    pub offset: usize,
    pub waveform: &'a [f64],
}

impl Column<'_> {
    pub fn end(&self) -> usize {
        self.offset + self.waveform.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub chi: Vec<f64>,
    /// The Gram matrix was numerically singular and a ridge term was added.
    pub ridge: bool,
}

/// Relative pivot below which the Gram matrix counts as rank deficient.
const PIVOT_TOL: f64 = 1e-12;
/// Ridge term as a fraction of the mean Gram diagonal.
pub const RIDGE: f64 = 1e-10;

fn overlap_dot(a: &Column, b: &Column) -> f64 {
    let lo = a.offset.max(b.offset);
    let hi = a.end().min(b.end());
    if lo >= hi {
        return 0.0;
    }
    dot(&a.waveform[lo - a.offset..hi - a.offset], &b.waveform[lo - b.offset..hi - b.offset])
}

/// Row-major `n × n` Gram matrix of the columns.
pub fn gram(columns: &[Column]) -> Vec<f64> {
    let n = columns.len();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = overlap_dot(&columns[i], &columns[j]);
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
    g
}

/// In-place Cholesky; `None` when a pivot is not safely positive.
fn cholesky(mut g: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| g[i * n + i]).fold(0.0f64, f64::max);
    for j in 0..n {
        let mut d = g[j * n + j];
        for k in 0..j {
            d -= g[j * n + k] * g[j * n + k];
        }
        if !(d > PIVOT_TOL * max_diag) {
            return None;
        }
        let d = d.sqrt();
        g[j * n + j] = d;
        for i in j + 1..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = s / d;
        }
    }
    Some(g)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// Least-squares increments `χ = (ΨᵀΨ)⁻¹ Ψᵀ r`.
///
/// A singular Gram matrix is regularised with `RIDGE · trace / n` on the
/// diagonal and reported through [`Solution::ridge`].
pub fn solve_neighborhood(columns: &[Column], residual: &[f64]) -> Solution {
    let n = columns.len();
    if n == 0 {
        return Solution {
            chi: Vec::new(),
            ridge: false,
        };
    }
    let rhs: Vec<f64> = columns.iter().map(|c| dot(&residual[c.offset..c.end()], c.waveform)).collect();
    let g = gram(columns);
    if let Some(l) = cholesky(g.clone(), n) {
        return Solution {
            chi: cholesky_solve(&l, n, &rhs),
            ridge: false,
        };
    }
    let trace: f64 = (0..n).map(|i| g[i * n + i]).sum();
    let mut lambda = RIDGE * trace / n as f64;
    loop {
        let mut reg = g.clone();
        for i in 0..n {
            reg[i * n + i] += lambda;
        }
        if let Some(l) = cholesky(reg, n) {
            return Solution {
                chi: cholesky_solve(&l, n, &rhs),
                ridge: true,
            };
        }
        lambda *= 10.0;
    }
}

/// `r ← r − Σ χ_k ψ_k`; returns the touched sample range `lo..hi`.
pub fn update_residual(residual: &mut [f64], columns: &[Column], chi: &[f64]) -> (usize, usize) {
    let mut lo = usize::MAX;
    let mut hi = 0;
    for (c, &x) in columns.iter().zip(chi) {
        lo = lo.min(c.offset);
        hi = hi.max(c.end());
        if x == 0.0 {
            continue;
        }
        for (r, w) in residual[c.offset..c.end()].iter_mut().zip(c.waveform) {
            *r -= x * w;
        }
    }
    if lo > hi {
        (0, 0)
    } else {
        (lo, hi)
    }
}
