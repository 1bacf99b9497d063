//! Finite-difference assembly of `L`, `L_λ = e^{λx} L e^{−λx}` and `L_λ + A`.
//!
//! Grid vectors are species-major: entry `(i, j)` (species `i`, node `j`)
//! lives at `i * n + j`. Every species block is tridiagonal (plus wrap
//! entries for periodic grids) and species are coupled only pointwise
//! through `A(x_j)`.
//!
//! The conjugated face flux `σ (φ_x − λ φ)` is discretized as
//! `σ_{j+1/2} (α φ_{j+1} − β φ_j)` with `α = 1/h − λ/2`, `β = 1/h + λ/2`, and
//! differenced with the same pair of weights. This gives
//! `upper = σ_{j+1/2} α²`, `lower = σ_{j−1/2} β²` in divergence form, so the
//! off-diagonal weights are nonnegative for every `λ`, constant-coefficient
//! symbols are reproduced exactly, and `B(−λ) = B(λ)ᵀ` when `q ≡ 0` and `A`
//! is symmetric. At `λ = 0` the stencils are the usual flux difference and
//! centered second difference.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
#[allow(unused_imports)]
use num_traits::Float;

use crate::coeffs::{Form, SystemSpec};
use crate::error::{Error, Result};

/// Smallest number of grid points accepted for operator assembly.
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Bc {
    Periodic,
    Dirichlet,
}

/// Uniform grid `x_j = x0 + j h`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub h: f64,
    pub x0: f64,
}

impl Grid {
    /// One period `[0, L)` with `n` nodes.
    pub fn periodic(period: f64, n: usize) -> Self {
        Self { n, h: period / n as f64, x0: 0.0 }
    }

    /// Interior nodes of `(−R, R)` with spacing at most `period / n_per_period`.
    pub fn dirichlet(radius: f64, period: f64, n_per_period: usize) -> Self {
        let h0 = period / n_per_period as f64;
        let m = ((2.0 * radius / h0) - 1e-9).ceil().max(2.0) as usize;
        let h = 2.0 * radius / m as f64;
        Self { n: m - 1, h, x0: -radius + h }
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.h
    }
}

/// Assembled `L_λ (+ A)` on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub d: usize,
    pub grid: Grid,
    pub bc: Bc,
    pub lambda: f64,
    pub form: Form,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// `a_ik(x_j)` at `(j * d + i) * d + k`; zero when `A` is not included.
    coupling: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Assembles `L_λ`, plus `A` when `include_a` is set.
pub fn assemble(spec: &SystemSpec, lambda: f64, grid: Grid, bc: Bc, include_a: bool) -> Result<DiscreteOperator> {
    let d = spec.dim();
    let n = grid.n;
    if n < MIN_POINTS && bc == Bc::Periodic {
        return Err(Error::InvalidInput(format!("at least {MIN_POINTS} grid points are required, got {n}")));
    }
    if n < 1 {
        return Err(Error::InvalidInput(String::from("empty grid")));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be finite, got {lambda}")));
    }
    let h = grid.h;
    let alpha = 1.0 / h - 0.5 * lambda;
    let beta = 1.0 / h + 0.5 * lambda;
    let mut lower = vec![0.0; d * n];
    let mut diag = vec![0.0; d * n];
    let mut upper = vec![0.0; d * n];
    for i in 0..d {
        let sig = &spec.sigma[i];
        sig.require_positive()?;
        let q = &spec.q[i];
        // Node values, with one ghost node on each side for Dirichlet faces.
        let s_at = |j: isize| -> f64 {
            match bc {
                Bc::Periodic => sig.eval(grid.node(j.rem_euclid(n as isize) as usize)),
                Bc::Dirichlet => sig.eval(grid.x0 + j as f64 * h),
            }
        };
        for j in 0..n {
            let k = i * n + j;
            let sj = s_at(j as isize);
            let qj = q.eval(grid.node(j));
            let (lo, di, up) = match spec.form {
                Form::Divergence => {
                    let sp = harmonic(sj, s_at(j as isize + 1));
                    let sm = harmonic(s_at(j as isize - 1), sj);
                    (sm * beta * beta, -alpha * beta * (sp + sm), sp * alpha * alpha)
                }
                Form::NonDivergence => (sj * beta * beta, -2.0 * alpha * beta * sj, sj * alpha * alpha),
            };
            lower[k] = lo - 0.5 * qj * beta;
            diag[k] = di - 0.5 * qj * lambda;
            upper[k] = up + 0.5 * qj * alpha;
        }
    }
    let mut coupling = vec![0.0; n * d * d];
    if include_a {
        for j in 0..n {
            let x = grid.node(j);
            for i in 0..d {
                for k in 0..d {
                    coupling[(j * d + i) * d + k] = spec.a.get(i, k).eval(x);
                }
            }
        }
    }
    Ok(DiscreteOperator { d, grid, bc, lambda, form: spec.form, lower, diag, upper, coupling })
}

/// Discrete `L` (without `A`) on `n` nodes; `domain` is the period for
/// periodic grids and the half-width `R` of `(−R, R)` for Dirichlet grids.
pub fn assemble_l(spec: &SystemSpec, n: usize, bc: Bc, domain: f64) -> Result<DiscreteOperator> {
    let grid = match bc {
        Bc::Periodic => Grid::periodic(domain, n),
        Bc::Dirichlet => Grid::dirichlet(domain, spec.period(), n),
    };
    assemble(spec, 0.0, grid, bc, false)
}

/// Discrete `L_λ + A` over one period with `n` nodes (periodic), or on
/// `(−R, R)` with `n` nodes per period (Dirichlet, `R = domain`).
pub fn assemble_l_lambda(spec: &SystemSpec, lambda: f64, n: usize, bc: Bc, domain: f64) -> Result<DiscreteOperator> {
    let grid = match bc {
        Bc::Periodic => Grid::periodic(spec.period(), n),
        Bc::Dirichlet => Grid::dirichlet(domain, spec.period(), n),
    };
    assemble(spec, lambda, grid, bc, true)
}

impl DiscreteOperator {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Matrix size `d n`.
    pub fn size(&self) -> usize {
        self.d * self.grid.n
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn coupling(&self, j: usize, i: usize, k: usize) -> f64 {
        self.coupling[(j * self.d + i) * self.d + k]
    }

    /// Diagonal entry of row `(i, j)`.
    pub fn diagonal(&self, i: usize, j: usize) -> f64 {
        self.diag[i * self.grid.n + j] + self.coupling(j, i, i)
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let (d, n) = (self.d, self.grid.n);
        if v.len() != d * n {
            return Err(Error::LengthMismatch { expected: d * n, got: v.len() });
        }
        if out.len() != d * n {
            return Err(Error::LengthMismatch { expected: d * n, got: out.len() });
        }
        let periodic = self.bc == Bc::Periodic;
        for i in 0..d {
            let vi = &v[i * n..(i + 1) * n];
            for j in 0..n {
                let k = i * n + j;
                let left = if j > 0 {
                    vi[j - 1]
                } else if periodic {
                    vi[n - 1]
                } else {
                    0.0
                };
                let right = if j + 1 < n {
                    vi[j + 1]
                } else if periodic {
                    vi[0]
                } else {
                    0.0
                };
                let mut s = self.lower[k] * left + self.diag[k] * vi[j] + self.upper[k] * right;
                let c = &self.coupling[(j * d + i) * d..(j * d + i + 1) * d];
                for (m, a) in c.iter().enumerate() {
                    s += a * v[m * n + j];
                }
                out[k] = s;
            }
        }
        Ok(())
    }

    /// Nonzero entries as `(row, col, value)`, duplicates merged.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let (d, n) = (self.d, self.grid.n);
        let mut t = Vec::new();
        for i in 0..d {
            for j in 0..n {
                let row = i * n + j;
                let mut entries: Vec<(usize, f64)> = Vec::with_capacity(d + 2);
                if j > 0 {
                    entries.push((row - 1, self.lower[row]));
                } else if self.bc == Bc::Periodic {
                    entries.push((i * n + n - 1, self.lower[row]));
                }
                if j + 1 < n {
                    entries.push((row + 1, self.upper[row]));
                } else if self.bc == Bc::Periodic {
                    entries.push((i * n, self.upper[row]));
                }
                entries.push((row, self.diag[row]));
                for m in 0..d {
                    entries.push((m * n + j, self.coupling(j, i, m)));
                }
                entries.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
                for (c, v) in entries {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += v,
                        _ => merged.push((c, v)),
                    }
                }
                t.extend(merged.into_iter().filter(|e| e.1 != 0.0).map(|(c, v)| (row, c, v)));
            }
        }
        t
    }

    /// Dense row-major copy (tests and small diagnostics only).
    pub fn to_dense(&self) -> Vec<f64> {
        let m = self.size();
        let mut a = vec![0.0; m * m];
        for (r, c, v) in self.triplets() {
            a[r * m + c] += v;
        }
        a
    }

    /// Plain-text triplet dump, one `row col value` line per entry.
    pub fn dump_triplets(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{r} {c} {v:.16e}");
        }
        s
    }

    /// Smallest off-diagonal entry; nonnegative for cooperative operators.
    pub fn min_offdiag(&self) -> f64 {
        self.triplets().into_iter().filter(|(r, c, _)| r != c).map(|t| t.2).fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let (d, n) = (self.d, self.grid.n);
        let mut best: f64 = 0.0;
        for i in 0..d {
            for j in 0..n {
                let k = i * n + j;
                let mut s = self.lower[k].abs() + self.upper[k].abs() + (self.diag[k] + self.coupling(j, i, i)).abs();
                for m in (0..d).filter(|&m| m != i) {
                    s += self.coupling(j, i, m).abs();
                }
                best = best.max(s);
            }
        }
        best
    }

    /// Entry of row `(i, j)` toward `(i, j ± 1)` or `(m, j)`, used to build
    /// banded factorizations.
    pub(crate) fn parts(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.lower, &self.diag, &self.upper, &self.coupling)
    }
}
