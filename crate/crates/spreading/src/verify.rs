//! Property suite run by `spreading verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use spreading_core::homogexp::anisotropy_report;
use spreading_core::ode::{self, OdeParams};
use spreading_core::spectral::{k_curve, lambda1_dirichlet, maximize_k};
use spreading_core::speed::{crossing_structure, min_speed_left, min_speed_right, speed_report, strong_coupling_reduce, CrossingKind};

use crate::config::SpecDocument;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

impl Check {
    fn new(name: &str, passed: bool, detail: Value) -> Self {
        Self { name: name.into(), passed, detail }
    }

    fn failed(name: &str, err: impl ToString) -> Self {
        Self::new(name, false, json!({ "error": err.to_string() }))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryReport {
    pub name: String,
    pub spec_hash: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Midpoint concavity of `k` and a dominating quadratic cap.
pub fn check_concavity(doc: &SpecDocument) -> Check {
    let nm = &doc.numerics;
    match k_curve(&doc.spec, -nm.lambda_max, nm.lambda_max, nm.k_points, nm.n) {
        Ok(curve) => {
            let viol = curve.concavity_violations(1e-10);
            let cap = curve.fit_cap();
            let dominated = cap.is_some_and(|c| curve.lambdas.iter().zip(&curve.values).all(|(l, k)| *k <= c.eval(*l)));
            let passed = viol.is_empty() && cap.is_some_and(|c| c.beta > 0.0) && dominated;
            Check::new("k_concavity", passed, json!({ "violations": viol.len(), "cap": cap, "points": curve.lambdas.len() }))
        }
        Err(e) => Check::failed("k_concavity", e),
    }
}

/// `λ₁^per ≤ λ₁^∞ ≤ λ₁^R`, with `λ₁^R` strictly decreasing in `R` and
/// within 0.05 of `λ₁^∞` at the largest radius.
pub fn check_eigen_ordering(doc: &SpecDocument) -> Check {
    let nm = &doc.numerics;
    let run = || -> spreading_core::Result<Value> {
        let per = spreading_core::spectral::lambda1_per(&doc.spec, nm.n)?.value;
        let (inf, arg) = maximize_k(&doc.spec, nm.n, 1e-8)?;
        let l = doc.spec.period();
        let tail = nm
            .dirichlet_radii
            .iter()
            .map(|r| lambda1_dirichlet(&doc.spec, r * l, nm.n).map(|e| (r * l, e.value)))
            .collect::<spreading_core::Result<Vec<_>>>()?;
        let slack = 1e-9 * inf.abs().max(1.0);
        let decreasing = tail.windows(2).all(|w| w[1].1 < w[0].1);
        let above = tail.iter().all(|(_, v)| *v >= inf - slack);
        let gap = tail.last().map_or(f64::NAN, |t| t.1 - inf);
        let passed = per <= inf + slack && decreasing && above && gap < 0.05;
        Ok(json!({ "passed": passed, "lambda1_per": per, "lambda1_inf": inf, "argmax": arg, "dirichlet": tail, "gap": gap }))
    };
    match run() {
        Ok(v) => Check::new("eigen_ordering", v["passed"].as_bool().unwrap_or(false), v),
        Err(e) => Check::failed("eigen_ordering", e),
    }
}

/// Speed report consistency; for isotropic specs also the left/right symmetry.
pub fn check_speeds(doc: &SpecDocument) -> Check {
    let nm = &doc.numerics;
    let rep = match speed_report(&doc.spec, nm.n) {
        Ok(r) => r,
        Err(e) => return Check::failed("speeds", e),
    };
    let isotropic = doc.spec.is_even(1e-12) || doc.spec.is_divergence_symmetric(1e-12);
    let mut passed = rep.valid == (rep.lambda1_per < 0.0);
    let mut detail = json!({ "report": rep, "isotropic": isotropic });
    if rep.valid {
        passed &= rep.c_right > 0.0 && rep.c_left > 0.0;
        match crossing_structure(&doc.spec, rep.c_right, nm.n) {
            Ok(c) => {
                passed &= c.kind == CrossingKind::Tangent;
                detail["crossing_at_c_star"] = json!(c);
            }
            Err(e) => return Check::failed("speeds", e),
        }
        if isotropic {
            passed &= (rep.c_right - rep.c_left).abs() < 1e-6;
        }
    }
    Check::new("speeds", passed, detail)
}

/// Sign of `∫ q/(2σ)` against the observed speed ordering (scalar specs and
/// the reduction of strong-coupling specs).
pub fn check_anisotropy(doc: &SpecDocument) -> Option<Check> {
    let nm = &doc.numerics;
    let scalar = match (&doc.model, doc.spec.dim()) {
        (Some(m), _) => match strong_coupling_reduce(m) {
            Ok(s) => s,
            Err(e) => return Some(Check::failed("anisotropy", e)),
        },
        (None, 1) => doc.spec.clone(),
        _ => return None,
    };
    if !(spreading_core::spectral::lambda1_per(&scalar, nm.n).ok()?.value < 0.0) {
        return None;
    }
    Some(match anisotropy_report(&scalar, nm.n, 1e-6) {
        Ok(r) => {
            let mut passed = r.integral_q_over_2sigma.abs() <= 1e-6 || r.consistent;
            let mut detail = json!({ "reduced": r });
            if doc.model.is_some() {
                match (min_speed_right(&doc.spec, nm.n), min_speed_left(&doc.spec, nm.n)) {
                    (Ok(cr), Ok(cl)) => {
                        let same = (cl.0 > cr.0) == (r.c_left > r.c_right);
                        passed &= same;
                        detail["coupled"] = json!({ "c_right": cr.0, "c_left": cl.0, "same_ordering": same });
                    }
                    (Err(e), _) | (_, Err(e)) => return Some(Check::failed("anisotropy", e)),
                }
            }
            Check::new("anisotropy", passed, detail)
        }
        Err(e) => Check::failed("anisotropy", e),
    })
}

pub fn verify_entry(doc: &SpecDocument) -> EntryReport {
    let mut checks = vec![check_concavity(doc), check_eigen_ordering(doc), check_speeds(doc)];
    checks.extend(check_anisotropy(doc));
    EntryReport { name: doc.name.clone(), spec_hash: doc.hash.clone(), passed: checks.iter().all(|c| c.passed), checks }
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeCase {
    pub params: OdeParams,
    pub lambda_a: f64,
    pub residual: f64,
    pub endpoint_error: f64,
    pub trace: f64,
    pub det: f64,
    /// `None` when no admissible Lyapunov weight exists for the set.
    pub lyapunov_k: Option<f64>,
    pub max_lyapunov_increase: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeBattery {
    pub seed: u64,
    pub cases: Vec<OdeCase>,
    pub without_lyapunov_weight: usize,
    pub passed: bool,
}

/// Draws parameter sets with `λ_A ≥ 0.05` from a seeded stream.
pub fn random_ode_params(rng: &mut ChaCha8Rng) -> OdeParams {
    loop {
        let p = OdeParams {
            r_u: rng.gen_range(-1.0..3.0),
            r_v: rng.gen_range(-1.0..3.0),
            kappa_u: rng.gen_range(0.2..2.0),
            kappa_v: rng.gen_range(0.2..2.0),
            mu_u: rng.gen_range(0.1..2.0),
            mu_v: rng.gen_range(0.1..2.0),
        };
        if ode::lambda_a(&p).0 >= 0.05 {
            return p;
        }
    }
}

pub fn ode_case(p: &OdeParams, u0: f64, v0: f64, t_end: f64, dt: f64) -> spreading_core::Result<OdeCase> {
    let eq = ode::equilibrium(p)?;
    let cert = ode::stability_certificate(&eq.jac);
    let traj = ode::integrate(p, u0, v0, t_end, dt)?;
    let (_, ue, ve) = traj.last();
    let endpoint_error = (ue - eq.u).abs().max((ve - eq.v).abs());
    let k = ode::lyapunov_k(p, &eq).ok();
    let max_increase = match k {
        Some(k) => {
            let mut worst = f64::NEG_INFINITY;
            let mut prev = ode::lyapunov_value(k, &eq, traj.u[0], traj.v[0])?;
            for i in 1..traj.t.len() {
                let f = ode::lyapunov_value(k, &eq, traj.u[i], traj.v[i])?;
                worst = worst.max(f - prev);
                prev = f;
            }
            Some(worst)
        }
        None => None,
    };
    let passed = eq.residual < 1e-12
        && endpoint_error < 1e-6
        && cert.trace < 0.0
        && cert.det > 0.0
        && max_increase.map_or(true, |m| m <= 1e-12);
    Ok(OdeCase {
        params: *p,
        lambda_a: eq.lambda_a,
        residual: eq.residual,
        endpoint_error,
        trace: cert.trace,
        det: cert.det,
        lyapunov_k: k,
        max_lyapunov_increase: max_increase,
        passed,
    })
}

pub fn ode_battery(seed: u64, count: usize) -> OdeBattery {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<OdeCase> = (0..count)
        .map(|_| {
            let p = random_ode_params(&mut rng);
            ode_case(&p, 0.1, 0.1, 200.0, 0.01).unwrap_or_else(|_| OdeCase {
                params: p,
                lambda_a: ode::lambda_a(&p).0,
                residual: f64::NAN,
                endpoint_error: f64::NAN,
                trace: f64::NAN,
                det: f64::NAN,
                lyapunov_k: None,
                max_lyapunov_increase: None,
                passed: false,
            })
        })
        .collect();
    let without = cases.iter().filter(|c| c.lyapunov_k.is_none()).count();
    let passed = cases.iter().all(|c| c.passed);
    OdeBattery { seed, cases, without_lyapunov_weight: without, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;
    use crate::corpus;

    #[test]
    fn battery_is_deterministic() {
        let a = crate::output::to_json(&ode_battery(7, 3));
        let b = crate::output::to_json(&ode_battery(7, 3));
        assert_eq!(a, b);
        assert_ne!(a, crate::output::to_json(&ode_battery(8, 3)));
    }

    #[test]
    fn kpp_entry_passes() {
        let doc = corpus::load("kpp_scalar.toml", &Overrides { n: Some(32), tol: None }).unwrap().unwrap();
        let r = verify_entry(&doc);
        assert!(r.passed, "{}", crate::output::to_json(&r));
        assert_eq!(r.checks.len(), 4);
    }
}
