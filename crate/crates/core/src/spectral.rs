//! Principal eigenpairs of cooperative operators and the dispersion curve `k(λ)`.
//!
//! For `B = L_λ + A` the principal eigenvalue `k` satisfies `−Bφ = kφ` with
//! `φ > 0`, i.e. `k = −μ`, where `μ` is the Perron root (spectral abscissa)
//! of the essentially nonnegative matrix `B`.
//!
//! The default solver is shift-invert power iteration. For any shift `s`
//! below the Collatz–Wielandt lower bound `min_i (−Bφ)_i / φ_i ≤ k`, the
//! matrix `−B − sI` is a nonsingular M-matrix, so its inverse is
//! nonnegative and shares the Perron vector. Iterating with it converges at
//! rate `(k − s)/(k₂ − s)`, and the shift is tightened as the bracket
//! `[min, max]` of that quotient shrinks. The textbook shifted power
//! iteration on `B + sI` is kept as [`EigenMethod::ShiftedPower`].

use alloc::vec;
use alloc::vec::Vec;

use crate::banded::{BandMatrix, BandedLu, Corner};
use crate::coeffs::SystemSpec;
use crate::error::{Error, Result};
use crate::operators::{assemble_l_lambda, Bc, DiscreteOperator};
use crate::optimize::golden_min;

/// Default number of grid points per period.
pub const DEFAULT_N: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EigenMethod {
    ShiftInvert,
    ShiftedPower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Relative change of the eigenvalue estimate regarded as stationary.
    pub tol: f64,
    /// Residual tolerance; raised to the round-off floor `64 ε ‖B‖_∞` if larger.
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Consecutive stationary iterations required.
    pub stable_iters: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { method: EigenMethod::ShiftInvert, tol: 1e-12, tol_residual: 1e-10, max_iter: 50_000, stable_iters: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Positive, `‖·‖_∞ = 1`, species-major.
    pub vector: Vec<f64>,
    /// `‖−Bφ − kφ‖_∞`.
    pub residual: f64,
    pub iterations: usize,
}

/// `min` and `max` over positive entries of `(−Bφ)_i / φ_i`.
fn cw_bounds(y: &[f64], phi: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (yi, pi) in y.iter().zip(phi) {
        if *pi > 0.0 {
            let r = -yi / pi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

fn rayleigh(y: &[f64], phi: &[f64]) -> f64 {
    let num: f64 = y.iter().zip(phi).map(|(a, b)| -a * b).sum();
    let den: f64 = phi.iter().map(|b| b * b).sum();
    num / den
}

fn residual(y: &[f64], phi: &[f64], k: f64) -> f64 {
    y.iter().zip(phi).map(|(a, b)| (-a - k * b).abs()).fold(0.0, f64::max)
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::NonPositiveIterate { index: 0, value: m });
    }
    for x in v.iter_mut() {
        *x /= m;
    }
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(Error::NonPositiveIterate { index, value });
    }
    Ok(())
}

/// Factorization of `−B − sI` in interleaved ordering `j d + i`.
fn factor_shifted(op: &DiscreteOperator, s: f64) -> Result<BandedLu> {
    let (d, n) = (op.d, op.n());
    let (lower, diag, upper, coupling) = op.parts();
    let mut band = BandMatrix::zeros(d * n, d);
    let mut corners = Vec::new();
    for j in 0..n {
        for i in 0..d {
            let row = j * d + i;
            let k = i * n + j;
            band.add(row, row, -diag[k] - s);
            for m in 0..d {
                band.add(row, j * d + m, -coupling[(j * d + i) * d + m]);
            }
            if j > 0 {
                band.add(row, row - d, -lower[k]);
            } else if op.bc == Bc::Periodic {
                corners.push(Corner { row, col: (n - 1) * d + i, value: -lower[k] });
            }
            if j + 1 < n {
                band.add(row, row + d, -upper[k]);
            } else if op.bc == Bc::Periodic {
                corners.push(Corner { row, col: i, value: -upper[k] });
            }
        }
    }
    BandedLu::factor(band, &corners)
}

pub fn principal_eigen(op: &DiscreteOperator) -> Result<Eigenpair> {
    principal_eigen_with(op, &EigenOptions::default())
}

pub fn principal_eigen_with(op: &DiscreteOperator, opts: &EigenOptions) -> Result<Eigenpair> {
    match opts.method {
        EigenMethod::ShiftInvert => shift_invert(op, opts),
        EigenMethod::ShiftedPower => shifted_power(op, opts),
    }
}

fn residual_floor(op: &DiscreteOperator, opts: &EigenOptions) -> f64 {
    opts.tol_residual.max(64.0 * f64::EPSILON * op.norm_inf())
}

fn shift_invert(op: &DiscreteOperator, opts: &EigenOptions) -> Result<Eigenpair> {
    let (d, n) = (op.d, op.n());
    let size = d * n;
    let norm = op.norm_inf();
    let res_tol = residual_floor(op, opts);
    let change_floor = 64.0 * f64::EPSILON * norm;
    let mut phi = vec![1.0; size];
    let mut y = op.apply(&phi)?;
    let (mut lo, mut hi) = cw_bounds(&y, &phi);
    let mut k = rayleigh(&y, &phi);
    if hi - lo <= change_floor {
        let r = residual(&y, &phi, k);
        return Ok(Eigenpair { value: k, vector: phi, residual: r, iterations: 0 });
    }
    let min_margin = (1e-10 * norm).max(1e-12);
    let mut margin = (hi - lo).max(min_margin);
    let mut lu = factor_shifted(op, lo - margin)?;
    let mut refactors = 0;
    let mut stable = 0;
    let mut last_change = f64::INFINITY;
    let mut work = vec![0.0; size];
    for it in 1..=opts.max_iter {
        for j in 0..n {
            for i in 0..d {
                work[j * d + i] = phi[i * n + j];
            }
        }
        lu.solve(&mut work);
        for j in 0..n {
            for i in 0..d {
                phi[i * n + j] = work[j * d + i];
            }
        }
        normalize(&mut phi)?;
        op.apply_into(&phi, &mut y)?;
        (lo, hi) = cw_bounds(&y, &phi);
        let k_new = rayleigh(&y, &phi);
        last_change = (k_new - k).abs();
        k = k_new;
        if last_change <= (opts.tol * k.abs().max(1.0)).max(change_floor) {
            stable += 1;
        } else {
            stable = 0;
        }
        let r = residual(&y, &phi, k);
        if r <= res_tol && (stable >= opts.stable_iters || hi - lo <= change_floor) {
            return Ok(Eigenpair { value: k, vector: phi, residual: r, iterations: it });
        }
        if refactors < 8 && hi - lo < 0.1 * margin && margin > min_margin {
            margin = (hi - lo).max(min_margin);
            lu = factor_shifted(op, lo - margin)?;
            refactors += 1;
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, last_change, residual: residual(&y, &phi, k) })
}

fn shifted_power(op: &DiscreteOperator, opts: &EigenOptions) -> Result<Eigenpair> {
    let (d, n) = (op.d, op.n());
    let s = 1.0 + (0..d).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| op.diagonal(i, j).abs()).fold(0.0, f64::max);
    let res_tol = residual_floor(op, opts);
    let change_floor = 64.0 * f64::EPSILON * op.norm_inf();
    let mut phi = vec![1.0; d * n];
    let mut y = op.apply(&phi)?;
    let mut k = rayleigh(&y, &phi);
    let mut stable = 0;
    let mut last_change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        for (p, yi) in phi.iter_mut().zip(&y) {
            *p = yi + s * *p;
        }
        normalize(&mut phi)?;
        op.apply_into(&phi, &mut y)?;
        let k_new = rayleigh(&y, &phi);
        last_change = (k_new - k).abs();
        k = k_new;
        if last_change <= (opts.tol * k.abs().max(1.0)).max(change_floor) {
            stable += 1;
        } else {
            stable = 0;
        }
        if stable >= opts.stable_iters {
            let r = residual(&y, &phi, k);
            if r <= res_tol {
                return Ok(Eigenpair { value: k, vector: phi, residual: r, iterations: it });
            }
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, last_change, residual: residual(&y, &phi, k) })
}

/// `k(λ)` on one period with `n` nodes.
pub fn k_of_lambda(spec: &SystemSpec, lambda: f64, n: usize) -> Result<Eigenpair> {
    principal_eigen(&assemble_l_lambda(spec, lambda, n, Bc::Periodic, 0.0)?)
}

/// `k(λ)` on the coarsest grid `n0·2^m ≤ n_max` whose value agrees with the
/// doubled grid to `gap_tol`. Returns the finer eigenpair and its grid size.
pub fn k_of_lambda_refined(spec: &SystemSpec, lambda: f64, n0: usize, n_max: usize, gap_tol: f64) -> Result<(Eigenpair, usize)> {
    let mut n = n0;
    let mut coarse = k_of_lambda(spec, lambda, n)?;
    while 2 * n <= n_max {
        let fine = k_of_lambda(spec, lambda, 2 * n)?;
        let gap = (fine.value - coarse.value).abs();
        n *= 2;
        coarse = fine;
        if gap <= gap_tol {
            break;
        }
    }
    Ok((coarse, n))
}

/// `λ₁^per = k(0)`.
pub fn lambda1_per(spec: &SystemSpec, n: usize) -> Result<Eigenpair> {
    k_of_lambda(spec, 0.0, n)
}

/// Principal Dirichlet eigenvalue on `(−R, R)` with `n` nodes per period.
pub fn lambda1_dirichlet(spec: &SystemSpec, radius: f64, n: usize) -> Result<Eigenpair> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("R must be positive, got {radius}")));
    }
    principal_eigen(&assemble_l_lambda(spec, 0.0, n, Bc::Dirichlet, radius)?)
}

/// Sampled dispersion curve.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct KCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Quadratic cap `α − βλ²` dominating a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct QuadraticCap {
    pub alpha: f64,
    pub beta: f64,
}

impl QuadraticCap {
    pub fn eval(&self, lambda: f64) -> f64 {
        self.alpha - self.beta * lambda * lambda
    }
}

impl KCurve {
    /// Midpoint-concavity defects `(k_{i−1} + k_{i+1})/2 − k_i` that exceed `tol`
    /// on consecutive equally spaced triples, as `(index, defect)`.
    pub fn concavity_violations(&self, tol: f64) -> Vec<(usize, f64)> {
        (1..self.values.len().saturating_sub(1))
            .filter_map(|i| {
                let defect = 0.5 * (self.values[i - 1] + self.values[i + 1]) - self.values[i];
                (defect > tol).then_some((i, defect))
            })
            .collect()
    }

    /// Least-squares quadratic fit `c0 + c1 λ + c2 λ²`; the cap uses half of
    /// the fitted curvature and the smallest `α > 0` that dominates every sample.
    pub fn fit_cap(&self) -> Option<QuadraticCap> {
        let c = quadratic_fit(&self.lambdas, &self.values)?;
        if !(c[2] < 0.0) {
            return None;
        }
        let beta = -0.5 * c[2];
        let alpha = self
            .lambdas
            .iter()
            .zip(&self.values)
            .map(|(l, k)| k + beta * l * l)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(f64::EPSILON);
        Some(QuadraticCap { alpha, beta })
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let m = self.values.len();
        (0..m).map(|i| (self.values[i] - self.values[m - 1 - i]).abs()).fold(0.0, f64::max)
    }
}

fn quadratic_fit(x: &[f64], y: &[f64]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let p = [1.0, xi, xi * xi];
        for r in 0..3 {
            b[r] += p[r] * yi;
            for c in 0..3 {
                m[r][c] += p[r] * p[c];
            }
        }
    }
    let flat = vec![m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]];
    let lu = crate::banded::DenseLu::factor(3, flat).ok()?;
    lu.solve(&mut b);
    Some(b)
}

/// `M ≥ 2` equally spaced samples of `k` on `[λ_min, λ_max]`.
pub fn k_curve(spec: &SystemSpec, lambda_min: f64, lambda_max: f64, m: usize, n: usize) -> Result<KCurve> {
    if m < 2 || !(lambda_max > lambda_min) {
        return Err(Error::InvalidInput(alloc::format!("need M ≥ 2 samples on a nonempty range, got {m} on [{lambda_min}, {lambda_max}]")));
    }
    let mut curve = KCurve { lambdas: Vec::with_capacity(m), values: Vec::with_capacity(m), residuals: Vec::with_capacity(m) };
    for i in 0..m {
        let l = lambda_min + (lambda_max - lambda_min) * i as f64 / (m - 1) as f64;
        let e = k_of_lambda(spec, l, n)?;
        curve.lambdas.push(l);
        curve.values.push(e.value);
        curve.residuals.push(e.residual);
    }
    Ok(curve)
}

/// Largest `|λ|` kept inside the range where the discrete weights stay positive.
fn lambda_cap(spec: &SystemSpec, n: usize) -> f64 {
    0.5 * n as f64 / spec.period()
}

/// `max_λ k(λ)` and its argmax by bracket doubling and golden section.
pub fn maximize_k(spec: &SystemSpec, n: usize, tol: f64) -> Result<(f64, f64)> {
    let k = |l: f64| k_of_lambda(spec, l, n).map(|e| e.value);
    let k0 = k(0.0)?;
    let cap = lambda_cap(spec, n);
    let mut big = 1.0f64.min(cap);
    loop {
        if k(big)? < k0 && k(-big)? < k0 {
            break;
        }
        if big >= cap {
            return Err(Error::Bracket(alloc::format!("k(λ) does not decrease within |λ| ≤ {cap}")));
        }
        big = (2.0 * big).min(cap);
    }
    let (arg, neg) = golden_min(|l| k(l).map(|v| -v), -big, big, tol)?;
    // The golden-section interior points never include 0 exactly.
    if k0 >= -neg {
        Ok((k0, 0.0))
    } else {
        Ok((-neg, arg))
    }
}

/// Generalized principal eigenvalue `λ₁^∞ = max_λ k(λ)` with a Dirichlet tail.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Lambda1Infinity {
    pub value: f64,
    pub argmax: f64,
    /// `(R, λ₁^R)` for `R ∈ {2, 4, 8, 16}·L`.
    pub dirichlet_tail: Vec<(f64, f64)>,
}

pub fn lambda1_infinity(spec: &SystemSpec, n: usize) -> Result<Lambda1Infinity> {
    let (value, argmax) = maximize_k(spec, n, 1e-8)?;
    let l = spec.period();
    let dirichlet_tail = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&m| lambda1_dirichlet(spec, m * l, n).map(|e| (m * l, e.value)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Lambda1Infinity { value, argmax, dirichlet_tail })
}

/// `min` over grid points and species of `(−(L_λ + A)φ)_i / φ_i`, a lower bound for `k(λ)`.
pub fn minimax_lower_bound(spec: &SystemSpec, lambda: f64, phi_test: &[f64], n: usize) -> Result<f64> {
    let op = assemble_l_lambda(spec, lambda, n, Bc::Periodic, 0.0)?;
    if let Some((index, &value)) = phi_test.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveIterate { index, value });
    }
    let y = op.apply(phi_test)?;
    Ok(cw_bounds(&y, phi_test).0)
}
