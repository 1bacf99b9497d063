//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Closed-form values are recomputed here rather than
//! taken from the library.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use spreading::config::{parse_spec, Overrides, SpecDocument};
use spreading::corpus;
use spreading::verify::random_ode_params;
use spreading_core::coeffs::{Nonlinearity, SystemSpec};
use spreading_core::homogexp::{anisotropy_report, lambda_grid, strong_coupling_error, strong_coupling_speeds};
use spreading_core::ode::{self, OdeParams};
use spreading_core::pde::{
    self, bump_initial, comparison_experiment, construct_wave, cooperative_radius, hair_trigger_experiment, reference_level,
    step_initial, SimConfig, Truncation, WaveConfig,
};
use spreading_core::spectral::{k_curve, k_of_lambda, lambda1_dirichlet, lambda1_per, maximize_k};
use spreading_core::speed::{homogenized_speed, min_speed_left, min_speed_right, strong_coupling_reduce};

const N: usize = 128;
const SOLVER_TOL: f64 = 1e-8;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn doc(file: &str) -> SpecDocument {
    corpus::load(file, &Overrides::default()).expect("corpus entry").expect("corpus entry parses")
}

fn corpus_docs() -> Vec<SpecDocument> {
    corpus::load_all(&Overrides::default()).expect("corpus parses")
}

fn cli(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_spreading")).args(args).env_remove("SPREADING_GRID_N").env_remove("SPREADING_TOL").output().unwrap();
    (out.status.code().unwrap_or(-1), serde_json::from_slice(&out.stdout).unwrap_or(Value::Null))
}

/// Largest eigenvalue of a real 2×2 matrix with real spectrum.
fn top_eig2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    0.5 * (a + d + ((a - d) * (a - d) + 4.0 * b * c).sqrt())
}

/// `k(λ)` of a constant-coefficient two-species system: minus the top
/// eigenvalue of `diag(σ) λ² + A`.
fn k_const2(sigma: [f64; 2], a: [f64; 4], lambda: f64) -> f64 {
    -top_eig2(sigma[0] * lambda * lambda + a[0], a[1], a[2], sigma[1] * lambda * lambda + a[3])
}

/// Golden-section minimum of `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn mutation_matrix(p: &OdeParams) -> [f64; 4] {
    [p.r_u - p.mu_u, p.mu_v, p.mu_u, p.r_v - p.mu_v]
}

fn c1_kpp() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for (sigma, r) in [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)] {
        let path = dir.path().join("kpp.toml");
        std::fs::write(
            &path,
            format!("[system]\nkind = \"scalar\"\n[coefficients]\nsigma = {sigma:?}\nr = {r:?}\n[nonlinearity]\nkind = \"logistic\"\nkappa = 1.0\n"),
        )
        .unwrap();
        let t = Instant::now();
        let (code, v) = cli(&["speed", "--spec", path.to_str().unwrap()]);
        let elapsed = t.elapsed();
        let rep = &v["result"]["report"];
        let c = rep["c_right"].as_f64().unwrap_or(f64::NAN);
        let l = rep["lambda_star_right"].as_f64().unwrap_or(f64::NAN);
        let (c_exact, l_exact) = (2.0 * (sigma * r as f64).sqrt(), (r / sigma as f64).sqrt());
        let (ec, el) = ((c - c_exact).abs() / c_exact, (l - l_exact).abs() / l_exact);
        ok &= code == 0 && ec < 1e-6 && el < 1e-6 && elapsed < Duration::from_secs(1);
        details.push(format!("(σ={sigma},r={r}) c rel {ec:.1e} λ* rel {el:.1e} {:.2}s", elapsed.as_secs_f64()));
    }
    outcome(ok, details.join("; "))
}

fn asymmetry(spec: &SystemSpec) -> (f64, f64) {
    let curve = k_curve(spec, -2.0, 2.0, 41, N).unwrap();
    let mut sup: f64 = 0.0;
    for (i, &l) in curve.lambdas.iter().enumerate() {
        let j = curve.lambdas.iter().position(|&m| (m + l).abs() < 1e-12).unwrap();
        sup = sup.max((curve.values[i] - curve.values[j]).abs());
    }
    let dc = (min_speed_right(spec, N).unwrap().0 - min_speed_left(spec, N).unwrap().0).abs();
    (sup, dc)
}

fn c2_isotropy() -> Outcome {
    let even = doc("mutation_isotropic.toml");
    // Divergence form, symmetric A, σ not even.
    let sym = parse_spec(
        "[system]\nkind = \"system\"\nd = 2\nform = \"divergence\"\n[coefficients]\n\
         sigma = [\"1 + 0.4*sin(2*pi*x) + 0.2*cos(4*pi*x)\", \"1.5 + 0.5*sin(2*pi*x + 1)\"]\n\
         a = [[\"1 + 0.5*sin(2*pi*x)\", \"0.3 + 0.2*cos(2*pi*x)\"], [\"0.3 + 0.2*cos(2*pi*x)\", \"0.5\"]]\n",
        Path::new("."),
        "symmetric",
    )
    .unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    for d in [&even, &sym] {
        let (sup, dc) = asymmetry(&d.spec);
        ok &= sup < 1e-8 && dc < 1e-6;
        details.push(format!("{}: sup|k(λ)-k(-λ)| {sup:.1e}, |c_r-c_l| {dc:.1e}", d.name));
    }
    outcome(ok, details.join("; "))
}

fn c3_concavity() -> Outcome {
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut min_beta = f64::INFINITY;
    let mut failures = Vec::new();
    for d in corpus_docs() {
        let curve = k_curve(&d.spec, -3.0, 3.0, 41, N).unwrap();
        let k = &curve.values;
        // Uniform grid: midpoint of λ_{i-1}, λ_{i+1} is λ_i; also the wider stencil i±2.
        let mut entry_ok = true;
        for s in [1usize, 2, 5] {
            for i in s..k.len() - s {
                let defect = 0.5 * (k[i - s] + k[i + s]) - k[i];
                worst = worst.max(defect);
                entry_ok &= defect <= 1e-10;
            }
        }
        match curve.fit_cap() {
            Some(cap) => {
                min_beta = min_beta.min(cap.beta);
                entry_ok &= cap.beta > 0.0;
                entry_ok &= curve.lambdas.iter().zip(k).all(|(l, v)| *v <= cap.alpha - cap.beta * l * l);
            }
            None => entry_ok = false,
        }
        if !entry_ok {
            failures.push(d.name.clone());
        }
        ok &= entry_ok;
    }
    outcome(ok, format!("max midpoint defect {worst:.1e}, min cap β {min_beta:.3}, failing {failures:?}"))
}

fn c4_ordering() -> Outcome {
    let mut ok = true;
    let mut max_gap: f64 = 0.0;
    let mut failures = Vec::new();
    for d in corpus_docs() {
        let per = lambda1_per(&d.spec, N).unwrap().value;
        let k0 = k_of_lambda(&d.spec, 0.0, N).unwrap().value;
        let (inf, _) = maximize_k(&d.spec, N, 1e-10).unwrap();
        let l = d.spec.period();
        let tail: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|r| lambda1_dirichlet(&d.spec, r * l, N).unwrap().value).collect();
        let slack = 1e-9 * inf.abs().max(1.0);
        let gap = (tail[3] - inf).abs();
        max_gap = max_gap.max(gap);
        let good = (per - k0).abs() < 1e-12 * per.abs().max(1.0)
            && per <= inf + slack
            && tail.iter().all(|t| *t >= inf - slack)
            && tail.windows(2).all(|w| w[1] < w[0])
            && gap < 0.05;
        if !good {
            failures.push(format!("{} per={per:.6} inf={inf:.6} R={tail:?}", d.name));
        }
        ok &= good;
    }
    outcome(ok, format!("max |λ1^16L - λ1^∞| {max_gap:.2e}, failing {failures:?}"))
}

fn c5_homogenization() -> Outcome {
    let d = doc("piecewise_homogenization.toml");
    // Equal-weight harmonic mean of {1, 4}.
    let sigma_h: f64 = 2.0 / (1.0 + 1.0 / 4.0);
    let c_exact = 2.0 * sigma_h.sqrt();
    let h = homogenized_speed(&d.spec).unwrap();
    let errs: Vec<f64> = [0.25, 0.125, 0.0625, 0.03125]
        .iter()
        .map(|&e| (spreading_core::homogexp::epsilon_speed(&d.spec, e, N).unwrap() - c_exact).abs() / c_exact)
        .collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = *errs.last().unwrap();
    outcome(
        decreasing && last < 0.02 && (h.c - c_exact).abs() < 1e-12,
        format!("c_hom {:.12} vs 2√1.6 {c_exact:.12}; relative errors {}", h.c, sci(&errs)),
    )
}

/// Per-step maximum increase of `F^K` along `traj`.
fn lyapunov_increase(k: f64, eq: &ode::Equilibrium, traj: &ode::Trajectory) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let mut prev = ode::lyapunov_value(k, eq, traj.u[0], traj.v[0]).unwrap();
    for i in 1..traj.t.len() {
        let f = ode::lyapunov_value(k, eq, traj.u[i], traj.v[i]).unwrap();
        worst = worst.max(f - prev);
        prev = f;
    }
    worst
}

fn c6_ode_battery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ok = true;
    let mut worst_res: f64 = 0.0;
    let mut worst_end: f64 = 0.0;
    let (mut lyap_checked, mut by_search, mut no_weight) = (0, 0, 0);
    for _ in 0..10 {
        let p = random_ode_params(&mut rng);
        let eq = ode::equilibrium(&p).unwrap();
        // Independent residual and Jacobian.
        let s = eq.u + eq.v;
        let fu = (p.r_u - p.kappa_u * s) * eq.u + p.mu_v * eq.v - p.mu_u * eq.u;
        let fv = (p.r_v - p.kappa_v * s) * eq.v + p.mu_u * eq.u - p.mu_v * eq.v;
        let res = fu.abs().max(fv.abs());
        let a = p.r_u - p.mu_u - p.kappa_u * (2.0 * eq.u + eq.v);
        let b = p.mu_v - p.kappa_u * eq.u;
        let c = p.mu_u - p.kappa_v * eq.v;
        let dd = p.r_v - p.mu_v - p.kappa_v * (eq.u + 2.0 * eq.v);
        let traj = ode::integrate(&p, 0.1, 0.1, 200.0, 0.01).unwrap();
        let (_, ue, ve) = traj.last();
        let end = (ue - eq.u).abs().max((ve - eq.v).abs());
        worst_res = worst_res.max(res);
        worst_end = worst_end.max(end);
        ok &= res < 1e-12 && end < 1e-6 && a + dd < 0.0 && a * dd - b * c > 0.0;
        if (p.r_u - p.mu_u).max(p.r_v - p.mu_v) > 0.0 {
            lyap_checked += 1;
            let certified = ode::lyapunov_k(&p, &eq).ok().filter(|&k| lyapunov_increase(k, &eq, &traj) <= 1e-12);
            if certified.is_none() {
                // No closed-form weight; look for any K that is monotone on this run.
                let found = (-30..=30).map(|i| 10f64.powf(i as f64 / 10.0)).any(|k| lyapunov_increase(k, &eq, &traj) <= 1e-12);
                if found {
                    by_search += 1;
                } else {
                    no_weight += 1;
                    ok = false;
                }
            }
        }
    }
    outcome(
        ok,
        format!(
            "max residual {worst_res:.1e}, max endpoint error {worst_end:.1e}; Lyapunov checked on {lyap_checked} sets ({by_search} via K search, {no_weight} with no monotone K)"
        ),
    )
}

fn front_run(d: &SpecDocument) -> (f64, f64) {
    let s = &d.numerics.simulate;
    let level = reference_level(&d.spec).unwrap();
    let cfg = SimConfig {
        x_min: 0.0,
        x_max: 400.0,
        nx: 2048,
        dt: s.dt,
        t_end: 80.0,
        front_delta: 0.01 * level.iter().copied().fold(0.0, f64::max),
        ..SimConfig::default()
    };
    let u0 = step_initial(&cfg, &level, 20.0);
    let res = pde::simulate(&d.spec, &u0, &cfg).unwrap();
    (res.trace.fitted_speed, res.clamp_count as f64)
}

fn c7_linear_determinacy() -> Outcome {
    let constant = doc("mutation_constant.toml");
    let p = OdeParams::new(2.0, 1.0, 1.0, 1.0, 0.5, 0.5).unwrap();
    let a = mutation_matrix(&p);
    let (_, c_exact) = golden_min(|l| -k_const2([1.0, 1.0], a, l) / l, 0.05, 10.0);
    let (c_sim, clamps) = front_run(&constant);
    let e1 = (c_sim - c_exact).abs() / c_exact;
    let periodic = doc("mutation_periodic.toml");
    let c_spec = min_speed_right(&periodic.spec, N).unwrap().0;
    let (c_sim2, clamps2) = front_run(&periodic);
    let e2 = (c_sim2 - c_spec).abs() / c_spec;
    outcome(
        e1 < 0.03 && e2 < 0.05,
        format!(
            "constant: measured {c_sim:.4} vs c* {c_exact:.4} (rel {e1:.2e}, clamps {clamps}); periodic: measured {c_sim2:.4} vs c* {c_spec:.4} (rel {e2:.2e}, clamps {clamps2})"
        ),
    )
}

fn c8_anisotropy() -> Outcome {
    let d = doc("strong_coupling_anisotropic.toml");
    let model = d.model.as_ref().unwrap();
    let sp = strong_coupling_speeds(model, 0.05, N).unwrap();
    let gap = sp.c_left - sp.c_right;
    let reduced = strong_coupling_reduce(model).unwrap();
    // Trapezoid on the periodic grid for ∫ q / (2σ).
    let (q, s) = (reduced.q[0].samples(), reduced.sigma[0].samples());
    let h = reduced.period() / q.len() as f64;
    let integral: f64 = q.iter().zip(s).map(|(q, s)| q / (2.0 * s)).sum::<f64>() * h;
    let rep = anisotropy_report(&reduced, N, 1e-6).unwrap();
    let ordering_matches = (rep.c_left > rep.c_right) == (integral > 0.0) && integral.abs() > 1e-6;
    outcome(
        gap > 10.0 * SOLVER_TOL && ordering_matches,
        format!(
            "ε=0.05: c_left {:.6} c_right {:.6} gap {gap:.2e}; reduced c_left {:.6} c_right {:.6}, ∫q/(2σ) = {integral:.4e}",
            sp.c_left, sp.c_right, rep.c_left, rep.c_right
        ),
    )
}

fn c9_strong_coupling_convergence() -> Outcome {
    let d = doc("strong_coupling_anisotropic.toml");
    let model = d.model.as_ref().unwrap();
    let grid = lambda_grid(2.0, 41);
    let errs: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&e| strong_coupling_error(model, e, &grid, N).unwrap()).collect();
    outcome(errs.windows(2).all(|w| w[1] < w[0]), format!("sup|k^ε - k^0| over ε = 0.2, 0.1, 0.05: {}", sci(&errs)))
}

fn c10_wave() -> Outcome {
    let d = doc("mutation_constant.toml");
    let p = OdeParams::new(2.0, 1.0, 1.0, 1.0, 0.5, 0.5).unwrap();
    let a = mutation_matrix(&p);
    let (_, c_star) = golden_min(|l| -k_const2([1.0, 1.0], a, l) / l, 0.05, 10.0);
    let c = 1.2 * c_star;
    // Decay rate at speed c: smallest positive root of k(λ) + cλ = 0 with k(λ) = −(λ² + λ_A).
    let lambda_a = top_eig2(a[0], a[1], a[2], a[3]);
    let lambda_exact = 0.5 * (c - (c * c - 4.0 * lambda_a).sqrt());
    let w = match construct_wave(&d.spec, c, &WaveConfig::default()) {
        Ok(w) => w,
        Err(e) => return outcome(false, format!("construction failed: {e}")),
    };
    let slope_err = (w.tail_slope - lambda_exact).abs() / lambda_exact;
    let sandwich = w.sandwich_violation();
    outcome(
        w.converged && w.sup_diff < 1e-6 && w.iterations <= 500 && w.wave_residual < 1e-4 && sandwich <= 1e-12 && slope_err < 0.05,
        format!(
            "c = {c:.4}: {} iterations, sup_diff {:.1e}, residual {:.1e}, sandwich violation {sandwich:.1e}, tail slope {:.5} vs λ {lambda_exact:.5} (rel {slope_err:.1e})",
            w.iterations, w.sup_diff, w.wave_residual, w.tail_slope
        ),
    )
}

fn c11_hair_trigger_extinction() -> Outcome {
    let d = doc("mutation_periodic.toml");
    let cfg = SimConfig { x_min: -60.0, x_max: 60.0, nx: 512, dt: 0.02, t_end: 100.0, output_every: 100.0, ..SimConfig::default() };
    let hair = hair_trigger_experiment(&d.spec, 0.0, 1.0, 0.01, &cfg, N).unwrap();

    let ext = doc("extinction_mutation.toml");
    let m = ext.spec.nonlinearity.mutation().unwrap();
    let p = OdeParams::new(
        m.r_u.mean_arithmetic(),
        m.r_v.mean_arithmetic(),
        m.kappa_u.mean_arithmetic(),
        m.kappa_v.mean_arithmetic(),
        m.mu_u.mean_arithmetic(),
        m.mu_v.mean_arithmetic(),
    )
    .unwrap();
    let la = top_eig2(p.r_u - p.mu_u, p.mu_v, p.mu_u, p.r_v - p.mu_v);
    let cfg = SimConfig { x_min: -20.0, x_max: 20.0, nx: 256, dt: 0.02, t_end: 60.0, output_every: 60.0, bc: Truncation::Periodic, ..SimConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for trial in 0..3 {
        let u0: Vec<f64> = (0..2 * cfg.nx).map(|_| if trial == 0 { 5.0 } else { rng.gen_range(0.0..5.0) }).collect();
        let res = pde::simulate(&ext.spec, &u0, &cfg).unwrap();
        worst = worst.max(res.state.u.iter().copied().fold(0.0, f64::max));
    }
    outcome(
        hair.lambda1_inf < 0.0 && hair.min_window > 0.0 && la < 0.0 && worst < 1e-6,
        format!(
            "hair trigger: λ1^∞ {:.4}, min on [-5,5] at T=100 {:.4}; extinction: λ_A {la:.4}, max sup at T=60 over 3 bounded data {worst:.2e}",
            hair.lambda1_inf, hair.min_window
        ),
    )
}

fn c12_comparison() -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut ran = Vec::new();
    let mut skipped = Vec::new();
    for d in corpus_docs() {
        if matches!(d.spec.nonlinearity, Nonlinearity::Linear) {
            skipped.push(d.name.clone());
            continue;
        }
        let Some(level) = reference_level(&d.spec) else {
            skipped.push(d.name.clone());
            continue;
        };
        let eta = cooperative_radius(&d.spec);
        let eta = if eta.is_finite() { eta } else { 2.0 * level.iter().copied().fold(0.0, f64::max) };
        let cfg = SimConfig { x_min: -20.0, x_max: 20.0, nx: 256, dt: 0.01, t_end: 10.0, output_every: 10.0, ..SimConfig::default() };
        let u0 = bump_initial(&cfg, d.spec.dim(), 0.0, 3.0, 0.3);
        match comparison_experiment(&d.spec, eta, &u0, &cfg) {
            Ok(r) => {
                worst = worst.max(r.max_violation);
                ok &= r.max_violation < 1e-10 && !r.aborted;
                ran.push(d.name.clone());
            }
            Err(e) => {
                ok = false;
                ran.push(format!("{} (error: {e})", d.name));
            }
        }
    }
    outcome(ok, format!("max ordering violation {worst:.1e} over {} specs; skipped (linear or extinct) {skipped:?}", ran.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 12] = [
        ("classical KPP speed", c1_kpp, 3),
        ("evenness and isotropy", c2_isotropy, 10),
        ("concavity and quadratic cap", c3_concavity, 30),
        ("eigenvalue ordering", c4_ordering, 60),
        ("homogenization", c5_homogenization, 120),
        ("ODE battery", c6_ode_battery, 10),
        ("linear determinacy, simulated", c7_linear_determinacy, 180),
        ("anisotropy", c8_anisotropy, 120),
        ("strong-coupling spectral convergence", c9_strong_coupling_convergence, 120),
        ("traveling wave", c10_wave, 120),
        ("hair trigger and extinction", c11_hair_trigger_extinction, 120),
        ("comparison principle", c12_comparison, 60),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        let in_budget = secs < *budget as f64;
        let passed = r.passed && in_budget;
        if !passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{secs:.2}s / {budget}s{}]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            r.detail,
            if in_budget { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
