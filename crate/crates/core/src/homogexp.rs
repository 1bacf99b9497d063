//! Sweeps toward the two singular limits: rapidly oscillating coefficients
//! and strong mutation coupling, plus long-time checks for the rapid system.
//!
//! Every sweep row is an independent computation exposed as its own
//! function, so callers may evaluate rows in parallel and assemble the
//! table with [`SweepTable::from_rows`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::coeffs::{Nonlinearity, SystemSpec};
use crate::error::{Error, Result};
use crate::ode::{self, OdeParams};
use crate::pde::{bump_initial, simulate, SimConfig, SimState, Truncation};
use crate::spectral::k_of_lambda;
use crate::speed::{
    drift_integral, drift_speed_ordering, homogenized_speed, min_speed_left, min_speed_right, strong_coupling_reduce,
    DriftOrdering, StrongCouplingModel,
};

/// Grid points per period used for every ε-problem.
pub const N_PER_PERIOD: usize = 128;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SweepRow {
    pub param: f64,
    pub value: f64,
    pub error: f64,
    /// Solver failure for this row, if any; `value` and `error` are NaN then.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SweepTable {
    pub param_name: String,
    pub quantity: String,
    pub reference: f64,
    pub rows: Vec<SweepRow>,
    /// Errors strictly decrease along the rows (all rows succeeded).
    pub monotone_decline: bool,
    pub n_per_period: usize,
}

impl SweepTable {
    pub fn from_rows(param_name: &str, quantity: &str, reference: f64, rows: Vec<SweepRow>, n: usize) -> Self {
        let ok = rows.iter().all(|r| r.failure.is_none() && r.error.is_finite());
        let monotone_decline = ok && rows.windows(2).all(|w| w[1].error < w[0].error);
        Self { param_name: param_name.into(), quantity: quantity.into(), reference, rows, monotone_decline, n_per_period: n }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.error)
    }
}

fn row(param: f64, r: Result<(f64, f64)>) -> SweepRow {
    match r {
        Ok((value, error)) => SweepRow { param, value, error, failure: None },
        Err(e) => SweepRow { param, value: f64::NAN, error: f64::NAN, failure: Some(e.to_string()) },
    }
}

fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::InvalidInput("empty ε list".into()));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::InvalidInput(format!("every ε must lie in (0, 1], got {e}")));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("ε list must be strictly decreasing".into()));
    }
    Ok(())
}

/// Rightward speed of the ε-rapid system with `n` points per period `εL`.
pub fn epsilon_speed(spec: &SystemSpec, eps: f64, n: usize) -> Result<f64> {
    min_speed_right(&spec.make_rapid(eps)?, n).map(|s| s.0)
}

/// Relative error of `c*_ε` against the homogenized speed for each ε.
pub fn epsilon_speed_sweep(spec: &SystemSpec, eps: &[f64], n: usize) -> Result<SweepTable> {
    check_eps_list(eps)?;
    let reference = homogenized_speed(spec)?.c;
    let rows = eps
        .iter()
        .map(|&e| row(e, epsilon_speed(spec, e, n).map(|c| (c, (c - reference).abs() / reference))))
        .collect();
    Ok(SweepTable::from_rows("eps", "c_star_eps", reference, rows, n))
}

/// Evenly spaced `m` points on `[−λ_max, λ_max]`.
pub fn lambda_grid(lambda_max: f64, m: usize) -> Vec<f64> {
    if m < 2 {
        return vec![0.0];
    }
    (0..m).map(|i| -lambda_max + 2.0 * lambda_max * i as f64 / (m - 1) as f64).collect()
}

/// `sup_{λ ∈ grid} |k^ε(λ) − k⁰(λ)|` for one ε.
pub fn strong_coupling_error(model: &StrongCouplingModel, eps: f64, grid: &[f64], n: usize) -> Result<f64> {
    let coupled = model.coupled_spec(eps)?;
    let reduced = strong_coupling_reduce(model)?;
    let mut sup: f64 = 0.0;
    for &l in grid {
        let ke = k_of_lambda(&coupled, l, n)?.value;
        let k0 = k_of_lambda(&reduced, l, n)?.value;
        sup = sup.max((ke - k0).abs());
    }
    Ok(sup)
}

/// Sup-norm distance between `k^ε` and the reduced `k⁰` over `grid`, per ε.
pub fn strong_coupling_sweep(model: &StrongCouplingModel, eps: &[f64], grid: &[f64], n: usize) -> Result<SweepTable> {
    model.validate()?;
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidInput(format!("every ε must be positive, got {e}")));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("ε list must be strictly decreasing".into()));
    }
    let rows = eps.iter().map(|&e| row(e, strong_coupling_error(model, e, grid, n).map(|s| (s, s)))).collect();
    Ok(SweepTable::from_rows("eps", "sup_abs_k_diff", 0.0, rows, n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SpeedPair {
    pub c_right: f64,
    pub c_left: f64,
}

/// Both speeds of the ε-coupled system.
pub fn strong_coupling_speeds(model: &StrongCouplingModel, eps: f64, n: usize) -> Result<SpeedPair> {
    let spec = model.coupled_spec(eps)?;
    Ok(SpeedPair { c_right: min_speed_right(&spec, n)?.0, c_left: min_speed_left(&spec, n)?.0 })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AnisotropyReport {
    pub c_right: f64,
    pub c_left: f64,
    pub integral_q_over_2sigma: f64,
    pub predicted: DriftOrdering,
    pub observed: DriftOrdering,
    pub consistent: bool,
}

/// Compares the speed ordering with the sign of `∫ q/(2σ)` for a scalar
/// spec. Speeds closer than `speed_tol` (relative) count as equal.
pub fn anisotropy_report(spec: &SystemSpec, n: usize, speed_tol: f64) -> Result<AnisotropyReport> {
    let integral = drift_integral(spec)?;
    let predicted = drift_speed_ordering(spec, 1e-6)?;
    let c_right = min_speed_right(spec, n)?.0;
    let c_left = min_speed_left(spec, n)?.0;
    let gap = speed_tol * c_right.abs().max(c_left.abs());
    let observed = if c_right > c_left + gap {
        DriftOrdering::RightFaster
    } else if c_left > c_right + gap {
        DriftOrdering::LeftFaster
    } else {
        DriftOrdering::Equal
    };
    Ok(AnisotropyReport { c_right, c_left, integral_q_over_2sigma: integral, predicted, observed, consistent: predicted == observed })
}

/// Constant state of the averaged reaction: the positive equilibrium of the
/// mean mutation system (zero when the means give `λ_A ≤ 0`), or `r̄/κ̄` for
/// a scalar logistic equation.
pub fn homogenized_equilibrium(spec: &SystemSpec) -> Result<Vec<f64>> {
    match &spec.nonlinearity {
        Nonlinearity::MutationCompetition(m) => {
            let p = OdeParams::new(
                m.r_u.mean_arithmetic(),
                m.r_v.mean_arithmetic(),
                m.kappa_u.mean_arithmetic(),
                m.kappa_v.mean_arithmetic(),
                m.mu_u.mean_arithmetic(),
                m.mu_v.mean_arithmetic(),
            )?;
            match ode::equilibrium(&p) {
                Ok(e) => Ok(vec![e.u, e.v]),
                Err(Error::NoPositiveEquilibrium(_)) => Ok(vec![0.0, 0.0]),
                Err(e) => Err(e),
            }
        }
        Nonlinearity::Logistic { kappa } if spec.dim() == 1 => {
            let r = spec.a.get(0, 0).mean_arithmetic();
            Ok(vec![if r > 0.0 { r / kappa[0].mean_arithmetic() } else { 0.0 }])
        }
        other => Err(Error::Inapplicable(format!("no averaged equilibrium for nonlinearity {}", other.name()))),
    }
}

/// Periodic-truncation setup for long-time runs of the ε-rapid system:
/// `[−10, 10]` with 16 nodes per rapid period (at least 1024 nodes).
pub fn longtime_config(eps: f64, t_end: f64) -> SimConfig {
    let nx = ((20.0 / eps) * 16.0).ceil().max(1024.0) as usize;
    SimConfig {
        x_min: -10.0,
        x_max: 10.0,
        nx,
        dt: 0.01,
        t_end,
        bc: Truncation::Periodic,
        output_every: t_end.max(1.0),
        ..SimConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LongtimeReport {
    pub eps: f64,
    pub reference: Vec<f64>,
    /// `sup |u(T) − u*_hom|` over the middle half of the domain.
    pub sup_deviation: f64,
    /// Same deviation relative to `‖u*_hom‖_∞` (absolute when that is zero).
    pub rel_deviation: f64,
    pub final_sup: f64,
    pub clamp_count: usize,
}

fn window_sup(state: &SimState, cfg: &SimConfig, f: impl Fn(usize, usize) -> f64) -> f64 {
    let (a, b) = (cfg.x_min, cfg.x_max);
    let (lo, hi) = (a + 0.25 * (b - a), b - 0.25 * (b - a));
    let n = state.nx();
    let mut s: f64 = 0.0;
    for j in (0..n).filter(|&j| state.x[j] >= lo && state.x[j] <= hi) {
        for i in 0..state.d {
            s = s.max(f(i, j));
        }
    }
    s
}

fn run_bump(rapid: &SystemSpec, cfg: &SimConfig, centre: f64, width: f64, amplitude: f64) -> Result<crate::pde::SimResult> {
    let u0 = bump_initial(cfg, rapid.dim(), centre, width, amplitude);
    simulate(rapid, &u0, cfg)
}

/// Evolves a bump under the ε-rapid system and measures its distance from
/// the homogenized equilibrium at `cfg.t_end`.
pub fn rapidosc_longtime(spec: &SystemSpec, eps: f64, cfg: &SimConfig) -> Result<LongtimeReport> {
    let rapid = spec.make_rapid(eps)?;
    let reference = homogenized_equilibrium(spec)?;
    let res = run_bump(&rapid, cfg, 0.0, 2.0, 0.1)?;
    let n = res.state.nx();
    let st = &res.state;
    let sup_deviation = window_sup(st, cfg, |i, j| (st.u[i * n + j] - reference[i]).abs());
    let scale = reference.iter().copied().fold(0.0, f64::max);
    let rel_deviation = if scale > 0.0 { sup_deviation / scale } else { sup_deviation };
    let final_sup = st.u.iter().copied().fold(0.0, f64::max);
    Ok(LongtimeReport { eps, reference, sup_deviation, rel_deviation, final_sup, clamp_count: res.clamp_count })
}

/// Runs two different bumps to `cfg.t_end` and returns the sup distance
/// between the final states over the middle half of the domain.
pub fn rapidosc_uniqueness(spec: &SystemSpec, eps: f64, cfg: &SimConfig) -> Result<f64> {
    let rapid = spec.make_rapid(eps)?;
    let a = run_bump(&rapid, cfg, -3.0, 1.0, 0.05)?;
    let b = run_bump(&rapid, cfg, 2.0, 3.0, 0.5)?;
    let n = a.state.nx();
    Ok(window_sup(&a.state, cfg, |i, j| (a.state.u[i * n + j] - b.state.u[i * n + j]).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{Form, MatrixField, MutationFields, PeriodicField};
    use core::f64::consts::PI;

    fn piecewise() -> SystemSpec {
        let sigma = PeriodicField::from_fn(64, 1.0, |x| if x < 0.5 { 1.0 } else { 4.0 }).unwrap();
        SystemSpec::new(
            vec![sigma],
            vec![PeriodicField::constant(0.0, 64, 1.0).unwrap()],
            MatrixField::constant(1, &[1.0], 64, 1.0).unwrap(),
            Form::Divergence,
            Nonlinearity::Logistic { kappa: vec![PeriodicField::constant(1.0, 64, 1.0).unwrap()] },
        )
        .unwrap()
    }

    fn mutation(r_u: PeriodicField, r_v: PeriodicField) -> SystemSpec {
        let n = r_u.len();
        let c = |v: f64| PeriodicField::constant(v, n, 1.0).unwrap();
        let fields = MutationFields { r_u, r_v, kappa_u: c(1.0), kappa_v: c(1.0), mu_u: c(0.5), mu_v: c(0.5) };
        SystemSpec::mutation_competition(c(1.0), c(1.0), fields, Form::Divergence).unwrap()
    }

    fn anisotropic(n: usize) -> StrongCouplingModel {
        let f = |g: fn(f64) -> f64| PeriodicField::from_fn(n, 1.0, g).unwrap();
        StrongCouplingModel {
            sigma_u: f(|_| 1.0),
            sigma_v: f(|x| 1.0 + 0.5 * (2.0 * PI * x).cos()),
            r_u: f(|_| 1.0),
            r_v: f(|_| 1.0),
            kappa_u: f(|_| 1.0),
            kappa_v: f(|_| 1.0),
            p: f(|x| 0.5 + 0.3 * (2.0 * PI * x).sin()),
        }
    }

    const EPS: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];

    #[test]
    fn constant_coefficients_have_zero_error() {
        let spec = SystemSpec::constant_scalar(1.5, 0.0, 0.8, Some(1.0), 16).unwrap();
        let t = epsilon_speed_sweep(&spec, &EPS, 64).unwrap();
        assert!(t.errors().iter().all(|e| *e < 1e-8), "{:?}", t.errors());
    }

    #[test]
    fn piecewise_diffusion_sweep() {
        let t = epsilon_speed_sweep(&piecewise(), &EPS, N_PER_PERIOD).unwrap();
        assert!((t.reference - 2.0 * 1.6f64.sqrt()).abs() < 1e-8);
        assert!(t.monotone_decline, "{:?}", t.errors());
        assert!(t.final_error() < 0.02);
    }

    #[test]
    fn sweep_is_grid_converged() {
        let spec = piecewise();
        for &e in &EPS[..2] {
            let a = epsilon_speed(&spec, e, N_PER_PERIOD).unwrap();
            let b = epsilon_speed(&spec, e, 2 * N_PER_PERIOD).unwrap();
            assert!((a - b).abs() / a < 2e-3, "ε = {e}: {a} vs {b}");
        }
    }

    #[test]
    fn rapid_period_matches_tiled_unit_cell() {
        let spec = mutation(
            PeriodicField::from_fn(32, 1.0, |x| 1.5 + 0.5 * (2.0 * PI * x).sin()).unwrap(),
            PeriodicField::constant(0.5, 32, 1.0).unwrap(),
        );
        let eps = 0.25;
        let rapid = spec.make_rapid(eps).unwrap();
        let tile = |f: &PeriodicField| {
            let s: Vec<f64> = (0..4).flat_map(|_| f.samples().iter().copied()).collect();
            PeriodicField::new(s, 1.0).unwrap()
        };
        let m = spec.nonlinearity.mutation().unwrap();
        let fields = MutationFields {
            r_u: tile(&m.r_u),
            r_v: tile(&m.r_v),
            kappa_u: tile(&m.kappa_u),
            kappa_v: tile(&m.kappa_v),
            mu_u: tile(&m.mu_u),
            mu_v: tile(&m.mu_v),
        };
        let tiled = SystemSpec::mutation_competition(tile(&spec.sigma[0]), tile(&spec.sigma[1]), fields, Form::Divergence).unwrap();
        for l in [0.0, 0.7, -1.3] {
            let a = k_of_lambda(&rapid, l, 32).unwrap().value;
            let b = k_of_lambda(&tiled, l, 128).unwrap().value;
            assert!((a - b).abs() < 1e-8, "λ = {l}: {a} vs {b}");
        }
    }

    #[test]
    fn two_species_periodic_growth_sweep() {
        let spec = mutation(
            PeriodicField::from_fn(64, 1.0, |x| 2.0 + 1.5 * (2.0 * PI * x).sin()).unwrap(),
            PeriodicField::from_fn(64, 1.0, |x| 1.0 + 0.8 * (2.0 * PI * x).cos()).unwrap(),
        );
        let t = epsilon_speed_sweep(&spec, &EPS, N_PER_PERIOD).unwrap();
        assert!(t.monotone_decline, "{:?}", t.errors());
        assert!(t.final_error() < 0.03);
    }

    #[test]
    fn bad_eps_lists_rejected() {
        let spec = piecewise();
        assert!(epsilon_speed_sweep(&spec, &[], 16).is_err());
        assert!(epsilon_speed_sweep(&spec, &[0.1, 0.2], 16).is_err());
        assert!(epsilon_speed_sweep(&spec, &[1.5], 16).is_err());
    }

    #[test]
    fn symmetric_strong_coupling_is_exact() {
        let c = |v: f64| PeriodicField::constant(v, 32, 1.0).unwrap();
        let model = StrongCouplingModel {
            sigma_u: c(1.0),
            sigma_v: c(1.0),
            r_u: c(1.0),
            r_v: c(1.0),
            kappa_u: c(1.0),
            kappa_v: c(1.0),
            p: c(0.5),
        };
        let e = strong_coupling_error(&model, 1.0, &lambda_grid(2.0, 9), 32).unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn anisotropic_strong_coupling() {
        let model = anisotropic(128);
        let t = strong_coupling_sweep(&model, &[0.2, 0.1, 0.05], &lambda_grid(2.0, 21), 128).unwrap();
        assert!(t.monotone_decline, "{:?}", t.errors());
        let s = strong_coupling_speeds(&model, 0.05, 128).unwrap();
        assert!(s.c_left > s.c_right + 1e-5, "{s:?}");
        let rep = anisotropy_report(&strong_coupling_reduce(&model).unwrap(), 128, 1e-6).unwrap();
        assert_eq!(rep.predicted, DriftOrdering::LeftFaster);
        assert!(rep.consistent);
    }

    #[test]
    fn anisotropy_constant_drift() {
        let zero = SystemSpec::constant_scalar(1.0, 0.0, 1.0, Some(1.0), 16).unwrap();
        let r = anisotropy_report(&zero, 16, 1e-6).unwrap();
        assert!(r.consistent && r.observed == DriftOrdering::Equal);
        let neg = SystemSpec::constant_scalar(1.0, -0.4, 1.0, Some(1.0), 16).unwrap();
        let r = anisotropy_report(&neg, 16, 1e-6).unwrap();
        assert!(r.consistent && r.observed == DriftOrdering::RightFaster, "{r:?}");
        assert!(anisotropy_report(&mutation(PeriodicField::constant(1.0, 8, 1.0).unwrap(), PeriodicField::constant(1.0, 8, 1.0).unwrap()), 16, 1e-6).is_err());
    }

    #[test]
    fn longtime_constant_coefficients() {
        let c = PeriodicField::constant(2.0, 16, 1.0).unwrap();
        let spec = mutation(c.clone(), c.map(|_| 1.0).unwrap());
        let r = rapidosc_longtime(&spec, 1.0, &longtime_config(1.0, 200.0)).unwrap();
        assert!(r.sup_deviation < 1e-4, "{r:?}");
    }

    #[test]
    fn longtime_rapid_oscillation() {
        let spec = mutation(
            PeriodicField::from_fn(64, 1.0, |x| 2.0 + 0.5 * (2.0 * PI * x).sin()).unwrap(),
            PeriodicField::from_fn(64, 1.0, |x| 1.0 + 0.3 * (2.0 * PI * x).cos()).unwrap(),
        );
        let eps = 1.0 / 16.0;
        let cfg = longtime_config(eps, 60.0);
        let r = rapidosc_longtime(&spec, eps, &cfg).unwrap();
        assert!(r.rel_deviation < 0.05, "{r:?}");
        assert!(rapidosc_uniqueness(&spec, eps, &cfg).unwrap() < 1e-6);
    }

    #[test]
    fn longtime_extinction() {
        let spec = mutation(PeriodicField::constant(-1.0, 16, 1.0).unwrap(), PeriodicField::constant(-0.5, 16, 1.0).unwrap());
        let r = rapidosc_longtime(&spec, 0.5, &longtime_config(0.5, 40.0)).unwrap();
        assert_eq!(r.reference, vec![0.0, 0.0]);
        assert!(r.final_sup < 1e-6, "{r:?}");
    }
}
