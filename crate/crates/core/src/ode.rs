//! The spatially homogeneous two-species mutation-competition ODE
//!
//! ```text
//! u' = (r_u − κ_u (u+v)) u + μ_v v − μ_u u
//! v' = (r_v − κ_v (u+v)) v + μ_u u − μ_v v
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OdeParams {
    pub r_u: f64,
    pub r_v: f64,
    pub kappa_u: f64,
    pub kappa_v: f64,
    pub mu_u: f64,
    pub mu_v: f64,
}

impl OdeParams {
    pub fn new(r_u: f64, r_v: f64, kappa_u: f64, kappa_v: f64, mu_u: f64, mu_v: f64) -> Result<Self> {
        let p = Self { r_u, r_v, kappa_u, kappa_v, mu_u, mu_v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (label, v) in [("r_u", self.r_u), ("r_v", self.r_v)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{label} must be finite, got {v}")));
            }
        }
        for (label, v) in [("kappa_u", self.kappa_u), ("kappa_v", self.kappa_v), ("mu_u", self.mu_u), ("mu_v", self.mu_v)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{label} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn rhs(&self, u: f64, v: f64) -> (f64, f64) {
        let s = u + v;
        (
            (self.r_u - self.kappa_u * s) * u + self.mu_v * v - self.mu_u * u,
            (self.r_v - self.kappa_v * s) * v + self.mu_u * u - self.mu_v * v,
        )
    }

    /// Linearization at the origin, row-major.
    pub fn matrix_a(&self) -> [f64; 4] {
        [self.r_u - self.mu_u, self.mu_v, self.mu_u, self.r_v - self.mu_v]
    }
}

/// Eigenvalues `λ₁ ≥ λ₂` of the linearization at 0 and the positive
/// eigenvector for `λ₁` (unnormalized: `(a − d + √Δ, 2μ_u)`).
pub fn lambda_a(p: &OdeParams) -> (f64, f64, [f64; 2]) {
    let a = p.r_u - p.mu_u;
    let d = p.r_v - p.mu_v;
    let root = ((a - d) * (a - d) + 4.0 * p.mu_u * p.mu_v).sqrt();
    let phi = if a >= d {
        [a - d + root, 2.0 * p.mu_u]
    } else {
        // Same vector rescaled; avoids cancellation in a − d + √Δ.
        let s = 2.0 * p.mu_u / (d - a + root);
        [2.0 * p.mu_v * s, 2.0 * p.mu_u]
    };
    (0.5 * (a + d + root), 0.5 * (a + d - root), phi)
}

/// `λ₁` with both mutation rates scaled by `α`.
pub fn lambda1_scaled(p: &OdeParams, alpha: f64) -> f64 {
    let q = OdeParams { mu_u: alpha * p.mu_u, mu_v: alpha * p.mu_v, ..*p };
    let a = q.r_u - q.mu_u;
    let d = q.r_v - q.mu_v;
    0.5 * (a + d + ((a - d) * (a - d) + 4.0 * q.mu_u * q.mu_v).sqrt())
}

/// Jacobian entries `(a, b, c, d)` of the right-hand side at `(u, v)`.
pub fn jacobian(p: &OdeParams, u: f64, v: f64) -> [f64; 4] {
    [
        p.r_u - p.mu_u - p.kappa_u * (2.0 * u + v),
        p.mu_v - p.kappa_u * u,
        p.mu_u - p.kappa_v * v,
        p.r_v - p.mu_v - p.kappa_v * (u + 2.0 * v),
    ]
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Equilibrium {
    pub u: f64,
    pub v: f64,
    pub q: f64,
    pub s: f64,
    pub jac: [f64; 4],
    pub lambda_a: f64,
    pub phi_a: [f64; 2],
    pub residual: f64,
}

/// The unique positive equilibrium, from the closed-form ratio `Q = u/v`.
pub fn equilibrium(p: &OdeParams) -> Result<Equilibrium> {
    p.validate()?;
    let (l1, _, phi) = lambda_a(p);
    if !(l1 > 0.0) {
        return Err(Error::NoPositiveEquilibrium(l1));
    }
    let ratio = p.kappa_u / p.kappa_v;
    let b = p.r_u - p.mu_u - ratio * (p.r_v - p.mu_v);
    let root = (b * b + 4.0 * ratio * p.mu_u * p.mu_v).sqrt();
    let q = if b >= 0.0 { (b + root) / (2.0 * p.mu_u * ratio) } else { 2.0 * p.mu_v / (root - b) };
    let s = (p.r_v + p.mu_u * q - p.mu_v) / p.kappa_v;
    let u = q * s / (1.0 + q);
    let v = s / (1.0 + q);
    if !(u > 0.0 && v > 0.0) {
        return Err(Error::NoPositiveEquilibrium(l1));
    }
    check_bounds(u, p.r_u - p.mu_u, p.mu_v, p.kappa_u, "u*")?;
    check_bounds(v, p.r_v - p.mu_v, p.mu_u, p.kappa_v, "v*")?;
    let (fu, fv) = p.rhs(u, v);
    let scale = [phi[0], phi[1]].iter().copied().fold(0.0, f64::max);
    Ok(Equilibrium {
        u,
        v,
        q,
        s,
        jac: jacobian(p, u, v),
        lambda_a: l1,
        phi_a: [phi[0] / scale, phi[1] / scale],
        residual: fu.abs().max(fv.abs()),
    })
}

/// Bound window for one component: between `μ/κ` and `growth/κ` when the
/// net growth is positive, below `μ/κ` otherwise.
fn check_bounds(x: f64, growth: f64, mu: f64, kappa: f64, label: &str) -> Result<()> {
    let slack = 1e-12 * (1.0 + x.abs());
    let ok = if growth > 0.0 {
        let (lo, hi) = (mu.min(growth) / kappa, mu.max(growth) / kappa);
        x >= lo - slack && x <= hi + slack
    } else {
        x > 0.0 && x < mu / kappa + slack
    };
    if ok {
        Ok(())
    } else {
        Err(Error::HypothesisViolated(format!("{label} = {x} lies outside its bound window")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StabilityCertificate {
    pub trace: f64,
    pub det: f64,
    pub stable: bool,
}

pub fn stability_certificate(jac: &[f64; 4]) -> StabilityCertificate {
    let trace = jac[0] + jac[3];
    let det = jac[0] * jac[3] - jac[1] * jac[2];
    StabilityCertificate { trace, det, stable: trace < 0.0 && det > 0.0 }
}

/// Coefficients `(A, B, C, D)` of the quadratic form bounding `−dF/dt`.
pub fn lyapunov_coefficients(p: &OdeParams, eq: &Equilibrium) -> [f64; 4] {
    [p.kappa_u, p.kappa_u - p.mu_v / eq.u, p.kappa_v - p.mu_u / eq.v, p.kappa_v]
}

/// `P(K) = C²K² − (4AD − 2BC)K + B²`; the functional decreases when `P(K) < 0`.
pub fn lyapunov_poly(coef: &[f64; 4], k: f64) -> f64 {
    let [a, b, c, d] = *coef;
    c * c * k * k - (4.0 * a * d - 2.0 * b * c) * k + b * b
}

/// Weight `K` making `F_u + K F_v` a Lyapunov functional: the midpoint of
/// the two positive roots of `P`.
pub fn lyapunov_k(p: &OdeParams, eq: &Equilibrium) -> Result<f64> {
    if !((p.r_u - p.mu_u).max(p.r_v - p.mu_v) > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "Lyapunov weight needs max(r_u − μ_u, r_v − μ_v) > 0, got {}",
            (p.r_u - p.mu_u).max(p.r_v - p.mu_v)
        )));
    }
    let coef = lyapunov_coefficients(p, eq);
    let [a, b, c, d] = coef;
    if b * c >= a * d {
        return Err(Error::HypothesisViolated(format!(
            "no K > 0 with P(K) < 0: BC = {} ≥ AD = {}",
            b * c,
            a * d
        )));
    }
    let tiny = 1e-14 * (a * d).sqrt();
    Ok(if b.abs() <= tiny && c.abs() <= tiny {
        1.0
    } else if c.abs() <= tiny {
        2.0 * b * b / (4.0 * a * d)
    } else {
        (4.0 * a * d - 2.0 * b * c) / (2.0 * c * c)
    })
}

/// `F_u(u) + K F_v(v)` with `F_w(w) = w − w* − w* ln(w/w*)`.
pub fn lyapunov_value(k: f64, eq: &Equilibrium, u: f64, v: f64) -> Result<f64> {
    if !(u > 0.0 && v > 0.0) {
        return Err(Error::InvalidInput(format!("Lyapunov functional needs u, v > 0, got ({u}, {v})")));
    }
    let f = |w: f64, ws: f64| w - ws - ws * (w / ws).ln();
    Ok(f(u, eq.u) + k * f(v, eq.v))
}

/// Decay rate `min(−(a+d)/2, −(a/σ_u + d/σ_v)/(1/σ_u + 1/σ_v))`.
pub fn decay_rate_omega(eq: &Equilibrium, sigma_u: f64, sigma_v: f64) -> Result<f64> {
    if !(sigma_u > 0.0 && sigma_v > 0.0) {
        return Err(Error::InvalidInput(format!("diffusivities must be positive, got ({sigma_u}, {sigma_v})")));
    }
    let (a, d) = (eq.jac[0], eq.jac[3]);
    let w = (-(a + d) / 2.0).min(-(a / sigma_u + d / sigma_v) / (1.0 / sigma_u + 1.0 / sigma_v));
    if !(w > 0.0) {
        return Err(Error::HypothesisViolated(format!("decay rate ω = {w} is not positive")));
    }
    Ok(w)
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, f64, f64) {
        let n = self.t.len() - 1;
        (self.t[n], self.u[n], self.v[n])
    }
}

/// Classical RK4 up to `t_end`, with the step capped by `0.1/‖J‖_∞` at
/// the current state. Every step is recorded.
pub fn integrate(p: &OdeParams, u0: f64, v0: f64, t_end: f64, dt: f64) -> Result<Trajectory> {
    p.validate()?;
    if !(u0 >= 0.0 && v0 >= 0.0) {
        return Err(Error::InvalidInput(format!("initial data must be nonnegative, got ({u0}, {v0})")));
    }
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::InvalidInput(format!("need dt > 0 and T ≥ 0, got dt = {dt}, T = {t_end}")));
    }
    let mut tr = Trajectory { t: vec![0.0], u: vec![u0], v: vec![v0] };
    let (mut t, mut u, mut v) = (0.0, u0, v0);
    while t < t_end {
        let j = jacobian(p, u, v);
        let norm = (j[0].abs() + j[1].abs()).max(j[2].abs() + j[3].abs());
        let mut h = if norm > 0.0 { dt.min(0.1 / norm) } else { dt };
        if t + h >= t_end || t_end - (t + h) < 1e-12 * t_end {
            h = t_end - t;
        }
        let (k1u, k1v) = p.rhs(u, v);
        let (k2u, k2v) = p.rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v);
        let (k3u, k3v) = p.rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v);
        let (k4u, k4v) = p.rhs(u + h * k3u, v + h * k3v);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        t = if h == t_end - t { t_end } else { t + h };
        if !(u.is_finite() && v.is_finite()) || u.abs().max(v.abs()) > 1e100 {
            return Err(Error::BlowUp(t));
        }
        tr.t.push(t);
        tr.u.push(u);
        tr.v.push(v);
    }
    Ok(tr)
}
