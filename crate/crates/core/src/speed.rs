//! Spreading speeds from the dispersion curve.
//!
//! `c*_right = inf_{λ>0} −k(λ)/λ` and `c*_left = inf_{λ>0} −k(−λ)/λ`. The
//! quotient is unimodal on `(0, ∞)`, so a safeguarded three-point bracket
//! followed by golden section finds the minimizer; a 501-point scan is the
//! fallback when bracketing fails.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::coeffs::{strongly_connected, Form, MatrixField, MutationFields, Nonlinearity, PeriodicField, SystemSpec};
use crate::error::{Error, Result};
use crate::optimize::{bisect, golden_min};
use crate::spectral::{k_of_lambda, maximize_k};

/// Golden-section tolerance on `λ`.
pub const LAMBDA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Right => 1.0,
            Direction::Left => -1.0,
        }
    }
}

/// Minimizes `λ ↦ φ(λ)` over `(0, cap]` starting near `guess`.
fn minimize_on_half_line(mut phi: impl FnMut(f64) -> Result<f64>, guess: f64, cap: f64) -> Result<(f64, f64)> {
    let floor = 1e-9;
    let mut b = guess.clamp(1e-3, 0.25 * cap);
    let mut a = 0.5 * b;
    let mut c = (2.0 * b).min(cap);
    let (mut fa, mut fb, mut fc) = (phi(a)?, phi(b)?, phi(c)?);
    let mut bracketed = false;
    for _ in 0..80 {
        if fa < fb {
            if a <= floor {
                break;
            }
            (c, fc, b, fb) = (b, fb, a, fa);
            a *= 0.5;
            fa = phi(a)?;
        } else if fc < fb {
            if c >= cap {
                break;
            }
            (a, fa, b, fb) = (b, fb, c, fc);
            c = (2.0 * c).min(cap);
            fc = phi(c)?;
        } else {
            bracketed = true;
            break;
        }
    }
    if !bracketed {
        let hi = cap.min(64.0 * guess.max(1e-3));
        let m = 501;
        let mut best = (f64::INFINITY, 0usize);
        let pts: Vec<f64> = (1..=m).map(|i| hi * i as f64 / m as f64).collect();
        for (i, &l) in pts.iter().enumerate() {
            let v = phi(l)?;
            if v < best.0 {
                best = (v, i);
            }
        }
        let i = best.1;
        if i + 1 == m {
            return Err(Error::Bracket(format!("speed quotient still decreasing at λ = {hi}")));
        }
        a = if i == 0 { 0.5 * pts[0] } else { pts[i - 1] };
        c = pts[i + 1];
    }
    golden_min(phi, a, c, LAMBDA_TOL)
}

fn lambda_cap(spec: &SystemSpec, n: usize) -> f64 {
    0.25 * n as f64 / spec.period()
}

/// Initial guess `√(−k(0)/σ̄)` from the constant-coefficient formula.
fn lambda_guess(spec: &SystemSpec, k0: f64) -> f64 {
    let s = spec.sigma.iter().map(PeriodicField::mean_arithmetic).fold(0.0, f64::max);
    (-k0 / s).sqrt()
}

/// `(c*, λ*)` in the given direction.
pub fn min_speed(spec: &SystemSpec, dir: Direction, n: usize) -> Result<(f64, f64)> {
    let k0 = k_of_lambda(spec, 0.0, n)?.value;
    if !(k0 < 0.0) {
        return Err(Error::NoSpeedRegime(k0));
    }
    let s = dir.sign();
    let phi = |l: f64| k_of_lambda(spec, s * l, n).map(|e| -e.value / l);
    let (lambda, c) = minimize_on_half_line(phi, lambda_guess(spec, k0), lambda_cap(spec, n))?;
    Ok(polish_tangency(spec, s, n, lambda, c))
}

/// Refines `λ*` as the root of `k(λ) − λ k′(λ)`, which is well conditioned
/// where the speed quotient is flat. Keeps the golden-section result when the
/// root is not bracketed nearby.
fn polish_tangency(spec: &SystemSpec, s: f64, n: usize, lambda: f64, c: f64) -> (f64, f64) {
    let g = |l: f64| -> Option<f64> {
        let h = 1e-4 * l.max(1e-2);
        let k = k_of_lambda(spec, s * l, n).ok()?.value;
        let kp = (k_of_lambda(spec, s * (l + h), n).ok()?.value - k_of_lambda(spec, s * (l - h), n).ok()?.value) / (2.0 * h);
        Some(k - l * kp)
    };
    let d = 1e-4 * lambda;
    let (mut a, mut b) = (lambda - d, lambda + d);
    let (Some(mut ga), Some(gb)) = (g(a), g(b)) else { return (c, lambda) };
    if !(a > 0.0) || ga * gb > 0.0 {
        return (c, lambda);
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let Some(gm) = g(m) else { return (c, lambda) };
        if gm * ga <= 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
        if b - a < 1e-13 * lambda {
            break;
        }
    }
    let l = 0.5 * (a + b);
    match k_of_lambda(spec, s * l, n) {
        Ok(e) if -e.value / l <= c + 1e-10 * c.abs().max(1.0) => (-e.value / l, l),
        _ => (c, lambda),
    }
}

pub fn min_speed_right(spec: &SystemSpec, n: usize) -> Result<(f64, f64)> {
    min_speed(spec, Direction::Right, n)
}

pub fn min_speed_left(spec: &SystemSpec, n: usize) -> Result<(f64, f64)> {
    min_speed(spec, Direction::Left, n)
}

/// `k′(λ)` by central differences with step `1e-4`.
pub fn k_derivative(spec: &SystemSpec, lambda: f64, n: usize) -> Result<f64> {
    let h = 1e-4;
    Ok((k_of_lambda(spec, lambda + h, n)?.value - k_of_lambda(spec, lambda - h, n)?.value) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CrossingKind {
    Below,
    Tangent,
    TwoRoots,
}

/// Positive solutions of `λ c = −k(λ)` (rightward direction).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Crossing {
    pub kind: CrossingKind,
    pub roots: Vec<f64>,
    pub c_star: f64,
    pub lambda_star: f64,
}

pub fn crossing_structure(spec: &SystemSpec, c: f64, n: usize) -> Result<Crossing> {
    let (c_star, lambda_star) = min_speed_right(spec, n)?;
    let tol = 1e-9 * c_star.abs().max(1.0);
    if (c - c_star).abs() <= tol {
        return Ok(Crossing { kind: CrossingKind::Tangent, roots: vec![lambda_star], c_star, lambda_star });
    }
    if c < c_star {
        return Ok(Crossing { kind: CrossingKind::Below, roots: Vec::new(), c_star, lambda_star });
    }
    let g = |l: f64| k_of_lambda(spec, l, n).map(|e| l * c + e.value);
    let r1 = bisect(g, 0.0, lambda_star, 1e-12)?;
    let cap = 0.5 * n as f64 / spec.period();
    let mut hi = 2.0 * lambda_star;
    while g(hi)? >= 0.0 {
        if hi >= cap {
            return Err(Error::Bracket(format!("λc + k(λ) stays positive up to λ = {cap}")));
        }
        hi = (2.0 * hi).min(cap);
    }
    let r2 = bisect(g, lambda_star, hi, 1e-12)?;
    Ok(Crossing { kind: CrossingKind::TwoRoots, roots: vec![r1, r2], c_star, lambda_star })
}

/// Perron–Frobenius eigenpair of a constant cooperative irreducible matrix
/// (row-major); the eigenvector is positive with `‖·‖_∞ = 1`.
pub fn pf_constant(m: &[f64], d: usize) -> Result<(f64, Vec<f64>)> {
    if m.len() != d * d || d == 0 {
        return Err(Error::LengthMismatch { expected: d * d, got: m.len() });
    }
    let mut adj = vec![false; d * d];
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let v = m[i * d + j];
                if v < 0.0 {
                    return Err(Error::NotCooperative { row: i, col: j, value: v });
                }
                adj[i * d + j] = v > 0.0;
            }
        }
    }
    if d > 1 && !strongly_connected(d, &adj) {
        return Err(Error::Reducible);
    }
    let normalize = |mut v: Vec<f64>| {
        let mx = v.iter().copied().fold(0.0, f64::max);
        v.iter_mut().for_each(|x| *x /= mx);
        v
    };
    match d {
        1 => Ok((m[0], vec![1.0])),
        2 => {
            let (a, b, c, dd) = (m[0], m[1], m[2], m[3]);
            let root = ((a - dd) * (a - dd) + 4.0 * b * c).sqrt();
            let lam = 0.5 * (a + dd + root);
            // Two algebraically equal forms; pick the one free of cancellation.
            let v = if a >= dd { vec![a - dd + root, 2.0 * c] } else { vec![2.0 * b, dd - a + root] };
            Ok((lam, normalize(v)))
        }
        _ => {
            let s = 1.0 + (0..d).map(|i| m[i * d + i].abs()).fold(0.0, f64::max);
            let mut v = vec![1.0; d];
            let mut lam = 0.0;
            for _ in 0..100_000 {
                let mut w: Vec<f64> = (0..d).map(|i| s * v[i] + (0..d).map(|j| m[i * d + j] * v[j]).sum::<f64>()).collect();
                let mx = w.iter().copied().fold(0.0, f64::max);
                w.iter_mut().for_each(|x| *x /= mx);
                let new = mx - s;
                let done = (new - lam).abs() <= 1e-15 * new.abs().max(1.0)
                    && w.iter().zip(&v).all(|(x, y)| (x - y).abs() <= 1e-14);
                lam = new;
                v = w;
                if done {
                    break;
                }
            }
            Ok((lam, v))
        }
    }
}

/// Homogenized coefficients and the resulting speed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HomogenizedSpeed {
    pub c: f64,
    pub lambda_star: f64,
    pub sigma_h: Vec<f64>,
    pub q_h: Vec<f64>,
    /// Entrywise arithmetic mean of `A`, row-major.
    pub a_mean: Vec<f64>,
}

/// `inf_{λ>0} λ_PF(λ² σ̄^H − λ q̄^H + Ā)/λ`.
pub fn homogenized_speed(spec: &SystemSpec) -> Result<HomogenizedSpeed> {
    let d = spec.dim();
    let sigma_h = spec.sigma.iter().map(PeriodicField::mean_harmonic).collect::<Result<Vec<_>>>()?;
    let q_h = (0..d)
        .map(|i| Ok(sigma_h[i] * spec.q[i].zip_with(&spec.sigma[i], |q, s| q / s)?.mean_arithmetic()))
        .collect::<Result<Vec<_>>>()?;
    let a_mean = spec.a.mean();
    let pf = |l: f64| {
        let mut m = a_mean.clone();
        for i in 0..d {
            m[i * d + i] += l * l * sigma_h[i] - l * q_h[i];
        }
        pf_constant(&m, d).map(|p| p.0)
    };
    let p0 = pf(0.0)?;
    if !(p0 > 0.0) {
        return Err(Error::NoSpeedRegime(-p0));
    }
    let guess = (p0 / sigma_h.iter().copied().fold(0.0, f64::max)).sqrt();
    let (lambda_star, c) = minimize_on_half_line(|l| pf(l).map(|v| v / l), guess, 1e6)?;
    Ok(HomogenizedSpeed { c, lambda_star, sigma_h, q_h, a_mean })
}

/// Two-species strong-coupling model: species `u` switches to `v` at rate
/// `p/ε` and back at rate `(1−p)/ε`, both in divergence form.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongCouplingModel {
    pub sigma_u: PeriodicField,
    pub sigma_v: PeriodicField,
    pub r_u: PeriodicField,
    pub r_v: PeriodicField,
    pub kappa_u: PeriodicField,
    pub kappa_v: PeriodicField,
    pub p: PeriodicField,
}

impl StrongCouplingModel {
    pub fn validate(&self) -> Result<()> {
        if let Some(j) = self.p.samples().iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::InvalidInput(format!(
                "proportion p must lie in (0, 1); p({}) = {}",
                self.p.node(j),
                self.p.samples()[j]
            )));
        }
        Ok(())
    }

    /// The coupled system at mutation scale `1/ε`.
    pub fn coupled_spec(&self, eps: f64) -> Result<SystemSpec> {
        self.validate()?;
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        let fields = MutationFields {
            r_u: self.r_u.clone(),
            r_v: self.r_v.clone(),
            kappa_u: self.kappa_u.clone(),
            kappa_v: self.kappa_v.clone(),
            mu_u: self.p.map(|p| p / eps)?.with_label("mu_u"),
            mu_v: self.p.map(|p| (1.0 - p) / eps)?.with_label("mu_v"),
        };
        SystemSpec::mutation_competition(self.sigma_u.clone(), self.sigma_v.clone(), fields, Form::Divergence)
    }
}

/// Scalar limit `S_t = (σ S_x)_x + q S_x + (r + q_x) S − κ S²` with
/// `σ = (1−p)σ_u + pσ_v`, `q = (σ_v − σ_u) p_x`, and `r`, `κ` weighted likewise.
pub fn strong_coupling_reduce(model: &StrongCouplingModel) -> Result<SystemSpec> {
    model.validate()?;
    let p = &model.p;
    let mix = |u: &PeriodicField, v: &PeriodicField| -> Result<PeriodicField> {
        let pu = p.zip_with(u, |p, u| (1.0 - p) * u)?;
        pu.zip_with(&p.zip_with(v, |p, v| p * v)?, |a, b| a + b)
    };
    let sigma = mix(&model.sigma_u, &model.sigma_v)?.with_label("sigma");
    let r = mix(&model.r_u, &model.r_v)?;
    let kappa = mix(&model.kappa_u, &model.kappa_v)?.with_label("kappa");
    let dsig = model.sigma_v.zip_with(&model.sigma_u, |v, u| v - u)?;
    let q = p.derivative().zip_with(&dsig, |px, ds| ds * px)?.with_label("q");
    let zeroth = r.zip_with(&q.derivative(), |r, qx| r + qx)?.with_label("r + q_x");
    SystemSpec::new(
        vec![sigma],
        vec![q],
        MatrixField::new(1, vec![zeroth])?,
        Form::Divergence,
        Nonlinearity::Logistic { kappa: vec![kappa] },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DriftOrdering {
    RightFaster,
    LeftFaster,
    Equal,
}

/// `∫ q/(2σ)` over one period (normalized to unit period).
pub fn drift_integral(spec: &SystemSpec) -> Result<f64> {
    if spec.dim() != 1 {
        return Err(Error::InvalidInput(format!("drift ordering needs a scalar spec, got d = {}", spec.dim())));
    }
    Ok(spec.q[0].zip_with(&spec.sigma[0], |q, s| q / (2.0 * s))?.mean_arithmetic())
}

/// Predicted ordering of the two speeds from the sign of `∫ q/(2σ)`.
pub fn drift_speed_ordering(spec: &SystemSpec, tol: f64) -> Result<DriftOrdering> {
    let i = drift_integral(spec)?;
    Ok(if i < -tol {
        DriftOrdering::RightFaster
    } else if i > tol {
        DriftOrdering::LeftFaster
    } else {
        DriftOrdering::Equal
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SpeedReport {
    pub c_right: f64,
    pub c_left: f64,
    pub lambda_star_right: f64,
    pub lambda_star_left: f64,
    pub lambda1_per: f64,
    pub lambda1_inf: f64,
    pub lambda1_inf_argmax: f64,
    pub converged: bool,
    /// False when `λ₁^per ≥ 0`; the speeds are then NaN.
    pub valid: bool,
    pub n: usize,
}

pub fn speed_report(spec: &SystemSpec, n: usize) -> Result<SpeedReport> {
    let lambda1_per = k_of_lambda(spec, 0.0, n)?.value;
    let (lambda1_inf, lambda1_inf_argmax) = maximize_k(spec, n, LAMBDA_TOL)?;
    if !(lambda1_per < 0.0) {
        return Ok(SpeedReport {
            c_right: f64::NAN,
            c_left: f64::NAN,
            lambda_star_right: f64::NAN,
            lambda_star_left: f64::NAN,
            lambda1_per,
            lambda1_inf,
            lambda1_inf_argmax,
            converged: true,
            valid: false,
            n,
        });
    }
    let (c_right, lambda_star_right) = min_speed_right(spec, n)?;
    let (c_left, lambda_star_left) = min_speed_left(spec, n)?;
    Ok(SpeedReport {
        c_right,
        c_left,
        lambda_star_right,
        lambda_star_left,
        lambda1_per,
        lambda1_inf,
        lambda1_inf_argmax,
        converged: true,
        valid: true,
        n,
    })
}
