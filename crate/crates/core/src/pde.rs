//! Method-of-lines simulation on a truncated line.
//!
//! Diffusion is advanced by backward Euler (one tridiagonal solve per
//! species), advection by explicit upwinding and the reaction explicitly.
//! Nodes are cell centres `x_j = x_min + (j + ½) h`, so homogeneous Neumann
//! conditions are zero fluxes through the outer faces.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::banded::{BandMatrix, BandedLu, Corner};
use crate::coeffs::{Form, Nonlinearity, SystemSpec};
use crate::error::{Error, Result};
use crate::ode::{self, OdeParams};
use crate::spectral::{k_of_lambda, maximize_k};
use crate::speed::{crossing_structure, CrossingKind};

/// Values below this are clamped to zero and counted.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Advective CFL number.
pub const CFL: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Truncation {
    Neumann,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    pub bc: Truncation,
    /// Time between front samples.
    pub output_every: f64,
    pub front_delta: f64,
    pub side: Side,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 400.0,
            nx: 2048,
            dt: 0.01,
            t_end: 80.0,
            bc: Truncation::Neumann,
            output_every: 0.5,
            front_delta: 0.01,
            side: Side::Right,
        }
    }
}

impl SimConfig {
    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|j| self.node(j)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 128 {
            return Err(Error::InvalidInput(format!("nx must be at least 128, got {}", self.nx)));
        }
        if !(self.x_max > self.x_min) {
            return Err(Error::InvalidInput(format!("empty domain [{}, {}]", self.x_min, self.x_max)));
        }
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.output_every > 0.0) {
            return Err(Error::InvalidInput(format!(
                "need dt > 0, T ≥ 0 and output interval > 0, got dt = {}, T = {}, every = {}",
                self.dt, self.t_end, self.output_every
            )));
        }
        if !(self.front_delta > 0.0) {
            return Err(Error::InvalidInput(format!("front threshold must be positive, got {}", self.front_delta)));
        }
        Ok(())
    }
}

/// Solution snapshot; `u` is species-major (`u[i * nx + j]`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimState {
    pub t: f64,
    pub d: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl SimState {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn species(&self, i: usize) -> &[f64] {
        let n = self.nx();
        &self.u[i * n..(i + 1) * n]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FrontTrace {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// Least-squares slope over the final half of the time window; positive
    /// means motion in the tracked direction.
    pub fitted_speed: f64,
    /// Root-mean-square residual of that fit.
    pub fit_residual: f64,
}

impl FrontTrace {
    fn fit(&mut self, t_end: f64, side: Side) {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.positions)
            .filter(|(t, p)| **t >= 0.5 * t_end && p.is_finite())
            .map(|(t, p)| (*t, *p))
            .collect();
        if pts.len() < 2 {
            self.fitted_speed = f64::NAN;
            self.fit_residual = f64::NAN;
            return;
        }
        let (slope, icpt) = least_squares(&pts);
        let rss: f64 = pts.iter().map(|(t, p)| (p - slope * t - icpt).powi(2)).sum();
        self.fitted_speed = match side {
            Side::Right => slope,
            Side::Left => -slope,
        };
        self.fit_residual = (rss / pts.len() as f64).sqrt();
    }
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Largest (right) or smallest (left) node where every species is at least
/// `delta`; `−∞` (right) or `+∞` (left) if there is none.
pub fn front_position(state: &SimState, delta: f64, side: Side) -> f64 {
    let n = state.nx();
    let above = |j: usize| (0..state.d).all(|i| state.u[i * n + j] >= delta);
    match side {
        Side::Right => (0..n).rev().find(|&j| above(j)).map_or(f64::NEG_INFINITY, |j| state.x[j]),
        Side::Left => (0..n).find(|&j| above(j)).map_or(f64::INFINITY, |j| state.x[j]),
    }
}

/// One IMEX time stepper with prefactored diffusion solves.
#[derive(Debug, Clone)]
pub struct Stepper {
    d: usize,
    nx: usize,
    h: f64,
    dt: f64,
    bc: Truncation,
    lus: Vec<BandedLu>,
    /// `a[(i * d + k) * nx + j]`.
    a: Vec<f64>,
    kappa: Option<Vec<f64>>,
    beta: f64,
    q: Vec<f64>,
    work: Vec<f64>,
    pub clamp_count: usize,
}

impl Stepper {
    /// Stepper on nodes `x_min + (j + ½) h`, `j < nx`.
    pub fn new(spec: &SystemSpec, x_min: f64, h: f64, nx: usize, dt: f64, bc: Truncation) -> Result<Self> {
        let d = spec.dim();
        let x: Vec<f64> = (0..nx).map(|j| x_min + (j as f64 + 0.5) * h).collect();
        let mut lus = Vec::with_capacity(d);
        let mut q = vec![0.0; d * nx];
        let mut qmax: f64 = 0.0;
        for i in 0..d {
            let s: Vec<f64> = x.iter().map(|&x| spec.sigma[i].eval(x)).collect();
            if let Some(j) = s.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::NonPositive { label: spec.sigma[i].label().into(), x: x[j], value: s[j] });
            }
            let mut band = BandMatrix::zeros(nx, 1);
            let mut corners = Vec::new();
            let r = dt / (h * h);
            let face = |j: usize, k: usize| 2.0 * s[j] * s[k] / (s[j] + s[k]);
            for j in 0..nx {
                band.add(j, j, 1.0);
                let right = if j + 1 < nx { Some(j + 1) } else if bc == Truncation::Periodic { Some(0) } else { None };
                let left = if j > 0 { Some(j - 1) } else if bc == Truncation::Periodic { Some(nx - 1) } else { None };
                for nb in [left, right] {
                    let Some(k) = nb else {
                        continue;
                    };
                    let w = match spec.form {
                        Form::Divergence => face(j, k),
                        Form::NonDivergence => s[j],
                    };
                    band.add(j, j, r * w);
                    if band.in_band(j, k) {
                        band.add(j, k, -r * w);
                    } else {
                        corners.push(Corner { row: j, col: k, value: -r * w });
                    }
                }
            }
            lus.push(BandedLu::factor(band, &corners)?);
            for j in 0..nx {
                q[i * nx + j] = spec.q[i].eval(x[j]);
                qmax = qmax.max(q[i * nx + j].abs());
            }
        }
        if qmax > 0.0 && dt > CFL * h / qmax {
            return Err(Error::Cfl { dt, limit: CFL * h / qmax });
        }
        let mut a = vec![0.0; d * d * nx];
        for i in 0..d {
            for k in 0..d {
                for j in 0..nx {
                    a[(i * d + k) * nx + j] = spec.a.get(i, k).eval(x[j]);
                }
            }
        }
        let kappa = spec.nonlinearity.kappa().map(|ks| {
            let mut out = vec![0.0; d * nx];
            for (i, k) in ks.iter().enumerate() {
                for j in 0..nx {
                    out[i * nx + j] = k.eval(x[j]);
                }
            }
            out
        });
        Ok(Self { d, nx, h, dt, bc, lus, a, kappa, beta: spec.nonlinearity.beta(), q, work: vec![0.0; d * nx], clamp_count: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Reaction `f(x_j, u)` for species `i` at node `j`.
    fn reaction(&self, u: &[f64], i: usize, j: usize) -> f64 {
        let (d, n) = (self.d, self.nx);
        let mut f = 0.0;
        let mut total = 0.0;
        for k in 0..d {
            let uk = u[k * n + j];
            f += self.a[(i * d + k) * n + j] * uk;
            total += uk;
        }
        let ui = u[i * n + j];
        if let Some(kappa) = &self.kappa {
            f -= kappa[i * n + j] * ui * total;
        }
        f - self.beta * ui * ui
    }

    pub fn step(&mut self, u: &mut [f64]) -> Result<()> {
        let (d, n, h, dt) = (self.d, self.nx, self.h, self.dt);
        let mut w = core::mem::take(&mut self.work);
        for i in 0..d {
            for j in 0..n {
                let qij = self.q[i * n + j];
                let uj = u[i * n + j];
                let adv = if qij > 0.0 {
                    let next = if j + 1 < n {
                        u[i * n + j + 1]
                    } else if self.bc == Truncation::Periodic {
                        u[i * n]
                    } else {
                        uj
                    };
                    qij * (next - uj) / h
                } else if qij < 0.0 {
                    let prev = if j > 0 {
                        u[i * n + j - 1]
                    } else if self.bc == Truncation::Periodic {
                        u[i * n + n - 1]
                    } else {
                        uj
                    };
                    qij * (uj - prev) / h
                } else {
                    0.0
                };
                w[i * n + j] = uj + dt * (adv + self.reaction(u, i, j));
            }
        }
        for i in 0..d {
            self.lus[i].solve(&mut w[i * n..(i + 1) * n]);
        }
        for (ui, wi) in u.iter_mut().zip(&w) {
            if !wi.is_finite() {
                let bad = *wi;
                self.work = w;
                return Err(Error::BlowUp(bad));
            }
            *ui = if *wi < 0.0 {
                if *wi < -NEGATIVE_TOL {
                    self.clamp_count += 1;
                }
                0.0
            } else {
                *wi
            };
        }
        self.work = w;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SimResult {
    pub state: SimState,
    pub trace: FrontTrace,
    pub clamp_count: usize,
    pub steps: usize,
}

/// Steps needed to reach `t_end` with a step no larger than `dt`, and the
/// resulting uniform step.
fn step_plan(t_end: f64, dt: f64) -> (usize, f64) {
    let n = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    if n == 0 {
        (0, dt)
    } else {
        (n, t_end / n as f64)
    }
}

pub fn simulate(spec: &SystemSpec, u0: &[f64], cfg: &SimConfig) -> Result<SimResult> {
    simulate_with(spec, u0, cfg, |_| Ok(()))
}

/// As [`simulate`], calling `observe` on every output sample (including
/// `t = 0` and `t = T`).
pub fn simulate_with(
    spec: &SystemSpec,
    u0: &[f64],
    cfg: &SimConfig,
    mut observe: impl FnMut(&SimState) -> Result<()>,
) -> Result<SimResult> {
    cfg.validate()?;
    let d = spec.dim();
    if u0.len() != d * cfg.nx {
        return Err(Error::LengthMismatch { expected: d * cfg.nx, got: u0.len() });
    }
    if let Some(k) = u0.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput(format!("initial data must be finite and nonnegative; entry {k} is {}", u0[k])));
    }
    let (n_steps, dt) = step_plan(cfg.t_end, cfg.dt);
    let mut stepper = Stepper::new(spec, cfg.x_min, cfg.h(), cfg.nx, dt, cfg.bc)?;
    let every = ((cfg.output_every / dt).round() as usize).max(1);
    let mut state = SimState { t: 0.0, d, x: cfg.nodes(), u: u0.to_vec() };
    let mut trace = FrontTrace::default();
    let mut record = |state: &SimState, trace: &mut FrontTrace| -> Result<()> {
        trace.times.push(state.t);
        trace.positions.push(front_position(state, cfg.front_delta, cfg.side));
        observe(state)
    };
    record(&state, &mut trace)?;
    for s in 1..=n_steps {
        stepper.step(&mut state.u)?;
        state.t = if s == n_steps { cfg.t_end } else { s as f64 * dt };
        if s % every == 0 || s == n_steps {
            record(&state, &mut trace)?;
        }
    }
    trace.fit(cfg.t_end, cfg.side);
    Ok(SimResult { state, trace, clamp_count: stepper.clamp_count, steps: n_steps })
}

/// Positive constant state of the spatially averaged reaction, if one is
/// available in closed form (scalar logistic or mutation-competition).
pub fn reference_level(spec: &SystemSpec) -> Option<Vec<f64>> {
    if spec.nonlinearity.beta() != 0.0 {
        return None;
    }
    match &spec.nonlinearity {
        Nonlinearity::MutationCompetition(m) => {
            let p = OdeParams {
                r_u: m.r_u.mean_arithmetic(),
                r_v: m.r_v.mean_arithmetic(),
                kappa_u: m.kappa_u.mean_arithmetic(),
                kappa_v: m.kappa_v.mean_arithmetic(),
                mu_u: m.mu_u.mean_arithmetic(),
                mu_v: m.mu_v.mean_arithmetic(),
            };
            ode::equilibrium(&p).ok().map(|e| vec![e.u, e.v])
        }
        Nonlinearity::Logistic { kappa } if spec.dim() == 1 => {
            let r = spec.a.get(0, 0).mean_arithmetic();
            (r > 0.0).then(|| vec![r / kappa[0].mean_arithmetic()])
        }
        _ => None,
    }
}

/// Species-major initial data equal to `level` for `x < x_step` and 0 beyond.
pub fn step_initial(cfg: &SimConfig, level: &[f64], x_step: f64) -> Vec<f64> {
    let mut u = vec![0.0; level.len() * cfg.nx];
    for (i, &l) in level.iter().enumerate() {
        for j in 0..cfg.nx {
            if cfg.node(j) < x_step {
                u[i * cfg.nx + j] = l;
            }
        }
    }
    u
}

/// Compactly supported bump `amplitude · max(0, 1 − ((x − centre)/width)²)`
/// in every species.
pub fn bump_initial(cfg: &SimConfig, d: usize, centre: f64, width: f64, amplitude: f64) -> Vec<f64> {
    let mut u = vec![0.0; d * cfg.nx];
    for j in 0..cfg.nx {
        let z = (cfg.node(j) - centre) / width;
        let b = amplitude * (1.0 - z * z).max(0.0);
        for i in 0..d {
            u[i * cfg.nx + j] = b;
        }
    }
    u
}

/// Largest `η` such that the reaction is cooperative while every species
/// stays below `η`: `min_{i≠k} inf_x a_ik / κ_i`. Infinite when there is
/// no competition term or only one species.
pub fn cooperative_radius(spec: &SystemSpec) -> f64 {
    let d = spec.dim();
    let Some(kappa) = spec.nonlinearity.kappa() else {
        return f64::INFINITY;
    };
    let mut eta = f64::INFINITY;
    for i in 0..d {
        for k in 0..d {
            if i == k {
                continue;
            }
            let a = spec.a.get(i, k);
            for (j, &aij) in a.samples().iter().enumerate() {
                let kap = kappa[i].eval(a.node(j));
                if kap > 0.0 {
                    eta = eta.min(aij / kap);
                }
            }
        }
    }
    eta
}

/// `β* = sup_x max_i Σ_k a_ik(x) / η`, the damping making `η·1` a
/// supersolution.
pub fn beta_star(spec: &SystemSpec, eta: f64) -> f64 {
    let d = spec.dim();
    let n = spec.a.get(0, 0).len();
    let mut s = f64::NEG_INFINITY;
    for i in 0..d {
        for j in 0..n {
            let x = spec.a.get(0, 0).node(j);
            s = s.max((0..d).map(|k| spec.a.get(i, k).eval(x)).sum::<f64>());
        }
    }
    s / eta
}

/// The damped system with reaction `f − β u²`, `β = max(1.1 β*, 0)`.
pub fn lower_barrier_spec(spec: &SystemSpec, eta: f64) -> Result<SystemSpec> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("η must be positive and finite, got {eta}")));
    }
    lower_barrier_spec_with_beta(spec, (1.1 * beta_star(spec, eta)).max(0.0))
}

pub fn lower_barrier_spec_with_beta(spec: &SystemSpec, beta: f64) -> Result<SystemSpec> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput(format!("β must be nonnegative, got {beta}")));
    }
    let mut out = spec.clone();
    out.nonlinearity = Nonlinearity::LowerBarrierBeta { base: Box::new(spec.nonlinearity.clone()), beta };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ComparisonReport {
    pub eta: f64,
    pub beta: f64,
    /// `max_{t, x, i} (v_i − u_i)` with `v` the barrier solution.
    pub max_violation: f64,
    /// `max_{t, x, i} v_i`.
    pub barrier_sup: f64,
    /// True if the barrier solution reached `η` and the run was stopped.
    pub aborted: bool,
    pub t_reached: f64,
}

/// Runs the full system from `u0` and the damped barrier system from
/// `min(u0, 0.99 η)` side by side.
pub fn comparison_experiment(spec: &SystemSpec, eta: f64, u0: &[f64], cfg: &SimConfig) -> Result<ComparisonReport> {
    let barrier = lower_barrier_spec(spec, eta)?;
    comparison_with_barrier(spec, &barrier, eta, u0, cfg)
}

pub fn comparison_with_barrier(
    spec: &SystemSpec,
    barrier: &SystemSpec,
    eta: f64,
    u0: &[f64],
    cfg: &SimConfig,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    let d = spec.dim();
    if u0.len() != d * cfg.nx {
        return Err(Error::LengthMismatch { expected: d * cfg.nx, got: u0.len() });
    }
    let (n_steps, dt) = step_plan(cfg.t_end, cfg.dt);
    let mut full = Stepper::new(spec, cfg.x_min, cfg.h(), cfg.nx, dt, cfg.bc)?;
    let mut low = Stepper::new(barrier, cfg.x_min, cfg.h(), cfg.nx, dt, cfg.bc)?;
    let mut u = u0.to_vec();
    let mut v: Vec<f64> = u0.iter().map(|&x| x.min(0.99 * eta)).collect();
    let measure = |u: &[f64], v: &[f64]| {
        let viol = u.iter().zip(v).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
        let sup = v.iter().copied().fold(0.0, f64::max);
        (viol, sup)
    };
    let (mut max_violation, mut barrier_sup) = measure(&u, &v);
    let mut t = 0.0;
    for s in 1..=n_steps {
        full.step(&mut u)?;
        low.step(&mut v)?;
        t = s as f64 * dt;
        let (viol, sup) = measure(&u, &v);
        max_violation = max_violation.max(viol);
        barrier_sup = barrier_sup.max(sup);
        if sup >= eta {
            return Ok(ComparisonReport { eta, beta: barrier.nonlinearity.beta(), max_violation, barrier_sup, aborted: true, t_reached: t });
        }
    }
    Ok(ComparisonReport { eta, beta: barrier.nonlinearity.beta(), max_violation, barrier_sup, aborted: false, t_reached: t })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HairTriggerReport {
    pub lambda1_inf: f64,
    /// Minimum over species and nodes in `[−5, 5]` at the final time.
    pub min_window: f64,
    pub t: f64,
    pub clamp_count: usize,
}

/// Evolves a small bump and reports the minimum on `[−5, 5]` at `T`.
pub fn hair_trigger_experiment(
    spec: &SystemSpec,
    centre: f64,
    width: f64,
    amplitude: f64,
    cfg: &SimConfig,
    n_spectral: usize,
) -> Result<HairTriggerReport> {
    let (lambda1_inf, _) = maximize_k(spec, n_spectral, 1e-8)?;
    if !(lambda1_inf < 0.0) {
        return Err(Error::Inapplicable(format!("hair-trigger needs λ₁^∞ < 0, got {lambda1_inf}")));
    }
    let u0 = bump_initial(cfg, spec.dim(), centre, width, amplitude);
    let res = simulate(spec, &u0, cfg)?;
    let st = &res.state;
    let n = st.nx();
    let mut m = f64::INFINITY;
    for j in (0..n).filter(|&j| st.x[j].abs() <= 5.0) {
        for i in 0..st.d {
            m = m.min(st.u[i * n + j]);
        }
    }
    Ok(HairTriggerReport { lambda1_inf, min_window: m, t: st.t, clamp_count: res.clamp_count })
}

/// Exponential solution `e^{−λ(x−ct)} φ_λ(x)` of the linearized system,
/// an upper barrier whenever `λc + k(λ) ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSolution {
    pub lambda: f64,
    pub c: f64,
    pub k: f64,
    pub period: f64,
    /// Periodic eigenvector on `n` nodes per period, species-major, `‖·‖_∞ = 1`.
    pub phi: Vec<f64>,
    pub n: usize,
}

impl ExpSolution {
    fn new(spec: &SystemSpec, lambda: f64, c: f64, n: usize) -> Result<Self> {
        let e = k_of_lambda(spec, lambda, n)?;
        Ok(Self { lambda, c, k: e.value, period: spec.period(), phi: e.vector, n })
    }

    /// `φ_i(x)` by periodic linear interpolation.
    pub fn phi_at(&self, i: usize, x: f64) -> f64 {
        let y = x / self.period;
        let s = (y - y.floor()) * self.n as f64;
        let j0 = (s.floor() as usize).min(self.n - 1);
        let w = s - j0 as f64;
        let j1 = (j0 + 1) % self.n;
        (1.0 - w) * self.phi[i * self.n + j0] + w * self.phi[i * self.n + j1]
    }

    pub fn phi_min(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, i: usize, t: f64, x: f64) -> f64 {
        (-self.lambda * (x - self.c * t)).exp() * self.phi_at(i, x)
    }
}

pub fn upper_barrier(spec: &SystemSpec, c: f64, lambda: f64, n: usize) -> Result<ExpSolution> {
    let e = ExpSolution::new(spec, lambda, c, n)?;
    let tol = 1e-9 * e.k.abs().max(1.0);
    if lambda * c + e.k < -tol {
        return Err(Error::HypothesisViolated(format!(
            "λc + k(λ) = {} < 0 at λ = {lambda}, c = {c}",
            lambda * c + e.k
        )));
    }
    Ok(e)
}

/// `ξ(t, x) = e^{−λ(x−ct)} φ_λ(x) − ω e^{−μ(x−ct)} φ_μ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBarrier {
    pub lead: ExpSolution,
    pub corr: ExpSolution,
    pub omega: f64,
    pub omega_star: f64,
    pub omega_eta: f64,
    pub eta: f64,
    /// Constant `M` with `‖f⁻(u) − A u‖ ≤ M ‖u‖²` on `‖u‖ ≤ η`.
    pub m_const: f64,
}

impl LowerBarrier {
    pub fn eval(&self, i: usize, t: f64, x: f64) -> f64 {
        self.lead.eval(i, t, x) - self.omega * self.corr.eval(i, t, x)
    }

    /// `max_{n ≥ 0} ξ(t, x + nL)`, with `n` up to `n_max`.
    pub fn periodic_max(&self, i: usize, t: f64, x: f64, n_max: usize) -> f64 {
        let l = self.lead.period;
        (0..=n_max).map(|n| self.eval(i, t, x + n as f64 * l)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn lambda(&self) -> f64 {
        self.lead.lambda
    }

    pub fn mu(&self) -> f64 {
        self.corr.lambda
    }

    /// Point right of which `ξ_i > 0` in every species at `t = 0`
    /// (conservative, from the extreme values of the eigenvectors).
    pub fn positivity_point(&self) -> f64 {
        let ratio = self.omega / self.lead.phi_min();
        ratio.ln() / (self.mu() - self.lambda())
    }
}

/// Builds `ξ` for `c > c*`. `β̂ = 1` since the reaction is quadratic.
pub fn lower_barrier_xi(spec: &SystemSpec, c: f64, omega_scale: f64, eta: f64, n: usize) -> Result<LowerBarrier> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("η must be positive and finite, got {eta}")));
    }
    let cross = crossing_structure(spec, c, n)?;
    if cross.kind != CrossingKind::TwoRoots {
        return Err(Error::SpeedTooSmall { c, c_star: cross.c_star, threshold: cross.c_star });
    }
    let (lambda, lambda2) = (cross.roots[0], cross.roots[1]);
    let beta_hat = 1.0;
    let mu = lambda + 0.5 * ((1.0 + beta_hat) * lambda).min(lambda2) - 0.5 * lambda;
    let lead = ExpSolution::new(spec, lambda, c, n)?;
    let corr = ExpSolution::new(spec, mu, c, n)?;
    let gap = corr.k + mu * c;
    if !(gap > 0.0) {
        return Err(Error::HypothesisViolated(format!("k(μ) + μc = {gap} must be positive")));
    }
    let d = spec.dim();
    let kmax = spec
        .nonlinearity
        .kappa()
        .map(|ks| ks.iter().map(|k| k.max()).fold(0.0, f64::max))
        .unwrap_or(0.0);
    let m_const = d as f64 * kmax + spec.nonlinearity.beta() + 1e-300;
    let sup_l = 1.0;
    let inf_m = corr.phi_min();
    let ln_star = (mu - lambda) / (beta_hat * lambda) * (m_const * sup_l.powf(1.0 + beta_hat) / (gap * inf_m)).ln()
        - ((1.0 + beta_hat) * lambda - mu) / (beta_hat * lambda) * (sup_l / inf_m).ln();
    let omega_star = ln_star.exp();
    let omega_eta = (sup_l / eta).powf((mu - lambda) / lambda) * lambda * sup_l / (mu * inf_m);
    let omega = omega_scale * omega_star.max(omega_eta);
    Ok(LowerBarrier { lead, corr, omega, omega_star, omega_eta, eta, m_const })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WaveConfig {
    pub n_per_period: usize,
    /// Left end `−M` of the working interval, in periods.
    pub left_periods: usize,
    /// Right end `X_max` in periods; `None` picks it from the tail decay.
    pub right_periods: Option<usize>,
    /// Buffer width on each side, in periods.
    pub buffer_periods: usize,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub omega_scale: f64,
    /// Cap for the lower barrier; `None` uses the cooperative radius.
    pub eta: Option<f64>,
    /// Start the iteration from `ū` instead of `max(ξ, 0)`.
    pub start_from_upper: bool,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            n_per_period: 32,
            left_periods: 20,
            right_periods: None,
            buffer_periods: 6,
            dt: 0.005,
            tol: 1e-6,
            max_iter: 500,
            omega_scale: 2.0,
            eta: None,
            start_from_upper: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WaveProfile {
    pub c: f64,
    pub c_star: f64,
    pub lambda: f64,
    pub mu: f64,
    pub omega: f64,
    pub x: Vec<f64>,
    /// `u(0, ·)` on `x`, species-major.
    pub profile: Vec<f64>,
    /// `max(ξ-based lower barrier, 0)` and `ū` at `t = 0`.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub iterations: usize,
    pub sup_diff: f64,
    pub converged: bool,
    /// `max |u(L/c, x + L) − u(0, x)|` over the working interval, unclamped.
    pub wave_residual: f64,
    /// `−d ln u_1/dx` fitted over whole periods on the right tail.
    pub tail_slope: f64,
}

impl WaveProfile {
    /// Largest violation of `lower ≤ profile ≤ upper`.
    pub fn sandwich_violation(&self) -> f64 {
        self.profile
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((p, l), u)| (l - p).max(p - u).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Pulsating wave of speed `c > c*` by fixed-point iteration of the
/// period map `v ↦ clamp(ṽ(L/c, · + L), [u̲, ū])`.
pub fn construct_wave(spec: &SystemSpec, c: f64, cfg: &WaveConfig) -> Result<WaveProfile> {
    let n = cfg.n_per_period;
    let l = spec.period();
    let h = l / n as f64;
    let cross = crossing_structure(spec, c, n)?;
    if !(c >= 1.05 * cross.c_star) {
        return Err(Error::SpeedTooSmall { c, c_star: cross.c_star, threshold: 1.05 * cross.c_star });
    }
    if !(k_of_lambda(spec, 0.0, n)?.value < 0.0) {
        return Err(Error::NoSpeedRegime(k_of_lambda(spec, 0.0, n)?.value));
    }
    let eta = match cfg.eta {
        Some(e) => e,
        None => {
            let r = cooperative_radius(spec);
            if r.is_finite() {
                r
            } else {
                reference_level(spec).map(|v| v.iter().copied().fold(0.0, f64::max)).unwrap_or(1.0)
            }
        }
    };
    let xi = lower_barrier_xi(spec, c, cfg.omega_scale, eta, n)?;
    let lambda = xi.lambda();
    let upper = &xi.lead;
    let d = spec.dim();

    let right_periods = cfg.right_periods.unwrap_or_else(|| {
        let tail = 25.0 / lambda;
        let settle = xi.positivity_point().max(0.0) + ((xi.omega * 1e3).ln() / (xi.mu() - lambda)).max(0.0);
        ((tail.max(settle) / l).ceil() as usize + 4).max(8)
    });
    let (lp, rp, bp) = (cfg.left_periods, right_periods, cfg.buffer_periods);
    // Working interval [−lp L, rp L) plus buffers; the right side also holds
    // the extra period read by the shift.
    let n_core = (lp + rp) * n;
    let n_left = bp * n;
    let n_total = n_left + n_core + (bp + 1) * n;
    let j0 = -((lp + bp) as i64) * n as i64;
    let x_of = |j: usize| (j0 + j as i64) as f64 * h;
    let x_min = x_of(0) - 0.5 * h;
    let (n_steps, dt) = step_plan(l / c, cfg.dt);
    let mut stepper = Stepper::new(spec, x_min, h, n_total, dt, Truncation::Neumann)?;

    let n_shift_max = n_total / n + 2;
    let mut low_full = vec![0.0; d * n_total];
    let mut up_full = vec![0.0; d * n_total];
    for i in 0..d {
        for j in 0..n_total {
            let x = x_of(j);
            low_full[i * n_total + j] = xi.periodic_max(i, 0.0, x, n_shift_max).max(0.0);
            up_full[i * n_total + j] = upper.eval(i, 0.0, x);
        }
    }
    let core = |full: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d * n_core];
        for i in 0..d {
            out[i * n_core..(i + 1) * n_core].copy_from_slice(&full[i * n_total + n_left..i * n_total + n_left + n_core]);
        }
        out
    };
    let lower = core(&low_full);
    let upper_core = core(&up_full);
    let mut v = if cfg.start_from_upper {
        upper_core.iter().zip(&lower).map(|(u, l)| u.min(1e3).max(*l)).collect()
    } else {
        lower.clone()
    };

    let mut full = vec![0.0; d * n_total];
    let mut apply = |v: &[f64], stepper: &mut Stepper| -> Result<Vec<f64>> {
        for i in 0..d {
            let edge = v[i * n_core];
            for j in 0..n_total {
                let k = i * n_total + j;
                full[k] = if j < n_left {
                    edge.min(up_full[k]).max(low_full[k])
                } else if j < n_left + n_core {
                    v[i * n_core + j - n_left]
                } else {
                    up_full[k]
                };
            }
        }
        for _ in 0..n_steps {
            stepper.step(&mut full)?;
        }
        let mut out = vec![0.0; d * n_core];
        for i in 0..d {
            for j in 0..n_core {
                out[i * n_core + j] = full[i * n_total + n_left + j + n];
            }
        }
        Ok(out)
    };

    let mut sup_diff = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let mut next = apply(&v, &mut stepper)?;
        for ((x, lo), up) in next.iter_mut().zip(&lower).zip(&upper_core) {
            *x = x.min(*up).max(*lo);
        }
        sup_diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        iterations += 1;
        if sup_diff < cfg.tol {
            converged = true;
            break;
        }
    }
    let image = apply(&v, &mut stepper)?;
    let wave_residual = image.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let x: Vec<f64> = (0..n_core).map(|j| x_of(n_left + j)).collect();
    // Tail fit over the last three whole periods before the final one.
    let hi = n_core - n;
    let lo = hi.saturating_sub(3 * n);
    let pts: Vec<(f64, f64)> = (lo..hi).filter(|&j| v[j] > 0.0).map(|j| (x[j], v[j].ln())).collect();
    let tail_slope = if pts.len() >= 2 { -least_squares(&pts).0 } else { f64::NAN };

    Ok(WaveProfile {
        c,
        c_star: cross.c_star,
        lambda,
        mu: xi.mu(),
        omega: xi.omega,
        x,
        profile: v,
        lower,
        upper: upper_core,
        iterations,
        sup_diff,
        converged,
        wave_residual,
        tail_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{MutationFields, PeriodicField};
    use crate::speed::min_speed_right;

    fn kpp() -> SystemSpec {
        SystemSpec::constant_scalar(1.0, 0.0, 1.0, Some(1.0), 32).unwrap()
    }

    fn mutation() -> SystemSpec {
        let f = MutationFields::constant(2.0, 1.0, 1.0, 1.0, 0.5, 0.5, 32, 1.0).unwrap();
        SystemSpec::mutation_competition(
            PeriodicField::constant(1.0, 32, 1.0).unwrap(),
            PeriodicField::constant(1.0, 32, 1.0).unwrap(),
            f,
            Form::Divergence,
        )
        .unwrap()
    }

    fn small_cfg() -> SimConfig {
        SimConfig { x_min: -20.0, x_max: 20.0, nx: 256, dt: 0.01, t_end: 1.0, ..SimConfig::default() }
    }

    #[test]
    fn zero_stays_zero() {
        let cfg = small_cfg();
        let r = simulate(&mutation(), &vec![0.0; 2 * cfg.nx], &cfg).unwrap();
        assert!(r.state.u.iter().all(|&u| u == 0.0));
        assert!(r.trace.positions.iter().all(|p| *p == f64::NEG_INFINITY));
    }

    #[test]
    fn heat_equation_conserves_mass() {
        let heat = SystemSpec::new(
            vec![PeriodicField::from_fn(64, 1.0, |x| 1.0 + 0.5 * (2.0 * core::f64::consts::PI * x).sin()).unwrap()],
            vec![PeriodicField::constant(0.0, 64, 1.0).unwrap()],
            crate::coeffs::MatrixField::constant(1, &[0.0], 64, 1.0).unwrap(),
            Form::Divergence,
            Nonlinearity::Linear,
        )
        .unwrap();
        let cfg = SimConfig { bc: Truncation::Periodic, t_end: 5.0, ..small_cfg() };
        let u0: Vec<f64> = cfg.nodes().iter().map(|x| (-x * x).exp()).collect();
        let m0: f64 = u0.iter().sum();
        let r = simulate(&heat, &u0, &cfg).unwrap();
        let m1: f64 = r.state.u.iter().sum();
        assert!(((m1 - m0) * cfg.h()).abs() < 1e-8);
    }

    #[test]
    fn uniform_logistic_growth() {
        let cfg = SimConfig { dt: 1e-3, ..small_cfg() };
        let r = simulate(&kpp(), &vec![0.5; cfg.nx], &cfg).unwrap();
        let e = core::f64::consts::E;
        let exact = 0.5 * e / (1.0 - 0.5 + 0.5 * e);
        assert!(r.state.u.iter().all(|&u| (u - exact).abs() < 1e-4), "{} vs {exact}", r.state.u[0]);
    }

    #[test]
    fn equilibrium_is_stationary() {
        let spec = mutation();
        let level = reference_level(&spec).unwrap();
        let cfg = SimConfig { t_end: 10.0, ..small_cfg() };
        let u0 = step_initial(&cfg, &level, f64::INFINITY);
        let r = simulate(&spec, &u0, &cfg).unwrap();
        for i in 0..2 {
            assert!(r.state.species(i).iter().all(|&u| (u - level[i]).abs() < 1e-8));
        }
    }

    #[test]
    fn front_position_examples() {
        let x: Vec<f64> = (0..10).map(|j| j as f64).collect();
        let mut st = SimState { t: 0.0, d: 1, x: x.clone(), u: vec![0.0; 10] };
        assert_eq!(front_position(&st, 0.1, Side::Right), f64::NEG_INFINITY);
        assert_eq!(front_position(&st, 0.1, Side::Left), f64::INFINITY);
        st.u = x.iter().map(|&x| if x <= 4.0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(front_position(&st, 0.1, Side::Right), 4.0);
        st.x.iter_mut().for_each(|x| *x += 2.5);
        assert_eq!(front_position(&st, 0.1, Side::Right), 6.5);
        assert_eq!(front_position(&st, 0.1, Side::Left), 2.5);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let spec = SystemSpec::constant_scalar(1.0, 5.0, 1.0, Some(1.0), 32).unwrap();
        let cfg = SimConfig { dt: 0.1, ..small_cfg() };
        assert!(matches!(simulate(&spec, &vec![0.0; cfg.nx], &cfg), Err(Error::Cfl { .. })));
    }

    #[test]
    fn scalar_front_speed() {
        let spec = kpp();
        let cfg = SimConfig::default();
        let u0 = step_initial(&cfg, &[1.0], 20.0);
        let r = simulate(&spec, &u0, &cfg).unwrap();
        assert!((r.trace.fitted_speed - 2.0).abs() < 0.06, "speed {}", r.trace.fitted_speed);
        assert_eq!(r.clamp_count, 0);
    }

    #[test]
    fn barrier_spec_properties() {
        let spec = mutation();
        let eta = cooperative_radius(&spec);
        assert!((eta - 0.5).abs() < 1e-15);
        let low = lower_barrier_spec(&spec, eta).unwrap();
        assert_eq!(low.a, spec.a);
        let beta = low.nonlinearity.beta();
        // Row sums of A are r_u and r_v.
        assert!((beta - 1.1 * 2.0 / 0.5).abs() < 1e-12);
        let st = Stepper::new(&low, 0.0, 0.1, 4, 0.01, Truncation::Periodic).unwrap();
        let u = vec![eta; 8];
        for i in 0..2 {
            assert!(st.reaction(&u, i, 0) <= 0.0);
        }
    }

    #[test]
    fn comparison_ordering_holds() {
        let spec = mutation();
        let eta = cooperative_radius(&spec);
        let cfg = SimConfig { t_end: 10.0, ..small_cfg() };
        let u0 = bump_initial(&cfg, 2, 0.0, 3.0, 0.3);
        let r = comparison_experiment(&spec, eta, &u0, &cfg).unwrap();
        assert!(!r.aborted && r.max_violation < 1e-10, "{r:?}");
        let big = bump_initial(&cfg, 2, 0.0, 3.0, 2.0);
        let r = comparison_with_barrier(&spec, &lower_barrier_spec(&spec, eta).unwrap(), eta, &big, &cfg).unwrap();
        assert!(r.max_violation < 1e-10);
        let r = comparison_with_barrier(&spec, &spec, eta, &u0.iter().map(|x| x.min(0.2)).collect::<Vec<_>>(), &cfg).unwrap();
        assert!(r.max_violation < 1e-10);
    }

    #[test]
    fn hair_trigger_and_inapplicable() {
        let cfg = SimConfig { x_min: -60.0, x_max: 60.0, nx: 512, t_end: 100.0, dt: 0.02, ..SimConfig::default() };
        let r = hair_trigger_experiment(&kpp(), 0.0, 1.0, 0.01, &cfg, 32).unwrap();
        assert!(r.min_window > 0.5, "{r:?}");
        let dead = SystemSpec::constant_scalar(1.0, 0.0, -0.5, Some(1.0), 32).unwrap();
        assert!(matches!(hair_trigger_experiment(&dead, 0.0, 1.0, 0.01, &cfg, 32), Err(Error::Inapplicable(_))));
        let u0 = vec![0.0; cfg.nx];
        assert!(simulate(&kpp(), &u0, &SimConfig { t_end: 5.0, ..cfg }).unwrap().state.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn upper_barrier_admissibility() {
        let spec = kpp();
        assert!(upper_barrier(&spec, 2.0, 1.0, 32).is_ok());
        assert!(upper_barrier(&spec, 1.5, 1.0, 32).is_err());
        let b = upper_barrier(&spec, 2.5, 0.5, 32).unwrap();
        assert!((b.eval(0, 0.0, 1.0) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn solution_stays_below_upper_barrier() {
        let spec = mutation();
        let (c, l) = min_speed_right(&spec, 32).unwrap();
        let bar = upper_barrier(&spec, c, l, 32).unwrap();
        let cfg = SimConfig { x_min: -20.0, x_max: 60.0, nx: 1024, t_end: 20.0, dt: 0.005, ..SimConfig::default() };
        let level = reference_level(&spec).unwrap();
        let mut u0 = vec![0.0; 2 * cfg.nx];
        for i in 0..2 {
            for j in 0..cfg.nx {
                u0[i * cfg.nx + j] = bar.eval(i, 0.0, cfg.node(j)).min(level[i]);
            }
        }
        let r = simulate(&spec, &u0, &cfg).unwrap();
        let mut excess: f64 = 0.0;
        for i in 0..2 {
            for j in 0..cfg.nx {
                let x = cfg.node(j);
                if x < 40.0 {
                    excess = excess.max(r.state.u[i * cfg.nx + j] - bar.eval(i, cfg.t_end, x));
                }
            }
        }
        assert!(excess < 1e-6, "excess {excess}");
    }

    #[test]
    fn xi_shape() {
        let spec = mutation();
        let (cs, _) = min_speed_right(&spec, 32).unwrap();
        let eta = cooperative_radius(&spec);
        let xi = lower_barrier_xi(&spec, 1.2 * cs, 2.0, eta, 32).unwrap();
        assert!(xi.lambda() < xi.mu() && xi.mu() < 2.0 * xi.lambda());
        let x0 = xi.positivity_point();
        for i in 0..2 {
            assert!(xi.eval(i, 0.0, x0 + 1.0) > 0.0);
            assert!(xi.eval(i, 0.0, x0 - 20.0) < 0.0);
        }
        let sup = (0..20000).map(|k| -20.0 + k as f64 * 0.01).map(|x| xi.eval(0, 0.0, x).max(xi.eval(1, 0.0, x))).fold(f64::NEG_INFINITY, f64::max);
        assert!(sup <= eta, "sup ξ = {sup} > η = {eta}");
        assert!(matches!(lower_barrier_xi(&spec, 0.9 * cs, 2.0, eta, 32), Err(Error::SpeedTooSmall { .. })));
    }

    #[test]
    fn wave_below_critical_speed_rejected() {
        let spec = mutation();
        let (cs, _) = min_speed_right(&spec, 32).unwrap();
        assert!(matches!(construct_wave(&spec, 0.9 * cs, &WaveConfig::default()), Err(Error::SpeedTooSmall { .. })));
        assert!(matches!(construct_wave(&spec, 1.02 * cs, &WaveConfig::default()), Err(Error::SpeedTooSmall { .. })));
    }

    #[test]
    fn wave_converges_between_barriers() {
        let spec = mutation();
        let (cs, _) = min_speed_right(&spec, 32).unwrap();
        let w = construct_wave(&spec, 1.2 * cs, &WaveConfig::default()).unwrap();
        assert!(w.converged && w.iterations <= 500 && w.sup_diff < 1e-6);
        assert!(w.wave_residual < 1e-4, "{}", w.wave_residual);
        assert_eq!(w.sandwich_violation(), 0.0);
        assert!((w.tail_slope / w.lambda - 1.0).abs() < 0.05);
        let from_top = construct_wave(&spec, 1.2 * cs, &WaveConfig { start_from_upper: true, ..WaveConfig::default() }).unwrap();
        assert!(from_top.converged);
        let gap = w.profile.iter().zip(&from_top.profile).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-3, "starting points disagree by {gap}");
    }

    #[test]
    fn solution_stays_above_xi() {
        let spec = mutation();
        let (cs, _) = min_speed_right(&spec, 32).unwrap();
        let c = 1.2 * cs;
        let xi = lower_barrier_xi(&spec, c, 2.0, cooperative_radius(&spec), 32).unwrap();
        let cfg = SimConfig { x_min: -20.0, x_max: 80.0, nx: 2048, t_end: 20.0, dt: 0.005, ..SimConfig::default() };
        let mut u0 = vec![0.0; 2 * cfg.nx];
        for i in 0..2 {
            for j in 0..cfg.nx {
                u0[i * cfg.nx + j] = xi.periodic_max(i, 0.0, cfg.node(j), 200).max(0.0);
            }
        }
        let r = simulate(&spec, &u0, &cfg).unwrap();
        let mut deficit: f64 = 0.0;
        for i in 0..2 {
            for j in 0..cfg.nx {
                let x = cfg.node(j);
                let b = xi.eval(i, cfg.t_end, x);
                if b > 0.0 && x < 70.0 {
                    deficit = deficit.max(b - r.state.u[i * cfg.nx + j]);
                }
            }
        }
        assert!(deficit < 1e-6, "deficit {deficit}");
    }
}
