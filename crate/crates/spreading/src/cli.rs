//! The `spreading` command.
//!
//! Every run prints one JSON document to stdout (and writes it as
//! `summary.json` under `--out` together with any CSV tables). Exit codes:
//! 0 success, 1 numerical failure or failed verification, 2 requested wave
//! speed below the admissible range, 3 invalid spec or options.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use spreading_core::coeffs::{Nonlinearity, PeriodicField};
use spreading_core::homogexp::{
    anisotropy_report, epsilon_speed, lambda_grid, longtime_config, rapidosc_longtime, rapidosc_uniqueness,
    strong_coupling_error, strong_coupling_speeds, SweepRow, SweepTable,
};
use spreading_core::ode::{self, OdeParams};
use spreading_core::pde::{
    self, bump_initial, comparison_experiment, construct_wave, cooperative_radius, hair_trigger_experiment, reference_level,
    SimConfig, Side, Truncation, WaveConfig,
};
use spreading_core::spectral::{k_curve, lambda1_dirichlet, lambda1_per, maximize_k};
use spreading_core::speed::{
    crossing_structure, drift_integral, homogenized_speed, min_speed, speed_report, strong_coupling_reduce, Direction,
};
use spreading_core::Error as CoreError;

use crate::config::{load_spec_with, ConfigError, Overrides, SpecDocument};
use crate::output::{to_json, CsvTable};
use crate::verify;
use crate::{corpus, output};

#[derive(Debug, Parser)]
#[command(name = "spreading", version, about = "Spreading speeds, principal eigenvalues and traveling waves for periodic reaction-diffusion systems")]
pub struct Cli {
    /// Spec file (TOML).
    #[arg(long, global = true, env = "SPREADING_SPEC")]
    pub spec: Option<PathBuf>,
    /// Directory for summary.json and CSV tables.
    #[arg(long, global = true, env = "SPREADING_OUT")]
    pub out: Option<PathBuf>,
    /// Grid points (and coefficient samples) per period.
    #[arg(long, global = true, env = "SPREADING_GRID_N")]
    pub grid_n: Option<usize>,
    /// Solver tolerance.
    #[arg(long, global = true, env = "SPREADING_TOL")]
    pub tol: Option<f64>,
    /// Worker threads for independent sweep rows and corpus entries.
    #[arg(long, global = true, env = "SPREADING_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Seed for randomized property suites.
    #[arg(long, global = true, env = "SPREADING_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Front,
    HairTrigger,
    Comparison,
    Longtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Right,
    Left,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dispersion curve k(λ), periodic and generalized principal eigenvalues, Dirichlet tail.
    Eig,
    /// Rightward and leftward spreading speeds with crossing diagnostics.
    Speed {
        /// Also report the crossing structure at this speed.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Homogenized coefficients and speed, and the ε-sweep toward it.
    Homogenize {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        /// Also run the long-time check at this ε.
        #[arg(long)]
        longtime_eps: Option<f64>,
    },
    /// Equilibrium, stability, Lyapunov weight and a trajectory of the averaged ODE.
    Ode {
        #[arg(long)]
        u0: Option<f64>,
        #[arg(long)]
        v0: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Parabolic simulation: front tracking, hair trigger, comparison or long-time runs.
    Simulate {
        #[arg(long, value_enum, default_value = "front")]
        mode: SimMode,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        x_min: Option<f64>,
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long, value_enum)]
        side: Option<SideArg>,
    },
    /// Pulsating traveling wave by fixed-point iteration of the period map.
    Wave {
        /// Wave speed; defaults to c_factor · c*.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        c_factor: Option<f64>,
        /// Start the iteration from the upper barrier.
        #[arg(long)]
        start_from_upper: bool,
    },
    /// Strong-coupling reduction to a scalar equation, with anisotropy and convergence reports.
    Reduce {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Run the property suite over the built-in corpus (or over --spec).
    Verify {
        /// Number of random ODE parameter sets.
        #[arg(long, default_value_t = 10)]
        ode_cases: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Speed { .. } => "speed",
            Command::Homogenize { .. } => "homogenize",
            Command::Ode { .. } => "ode",
            Command::Simulate { .. } => "simulate",
            Command::Wave { .. } => "wave",
            Command::Reduce { .. } => "reduce",
            Command::Verify { .. } => "verify",
        }
    }
}

/// A failed run.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub exit_code: i32,
    pub reason: String,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self { exit_code: 3, reason: "invalid input".into(), message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        let (exit_code, reason) = match &e {
            CoreError::SpeedTooSmall { c, c_star, .. } if c < c_star => (2, "c < c*"),
            CoreError::SpeedTooSmall { .. } => (2, "c < 1.05 c*"),
            CoreError::InvalidInput(_) => (3, "invalid input"),
            CoreError::NonPositive { .. } | CoreError::NotCooperative { .. } | CoreError::Reducible => (3, "assumption violated"),
            CoreError::NoConvergence { .. } => (1, "no convergence"),
            CoreError::NoSpeedRegime(_) => (1, "no speed regime"),
            CoreError::NoPositiveEquilibrium(_) => (1, "no positive equilibrium"),
            CoreError::HypothesisViolated(_) => (1, "hypothesis violated"),
            CoreError::Inapplicable(_) => (1, "inapplicable"),
            CoreError::Cfl { .. } => (3, "CFL violation"),
            CoreError::BlowUp(_) => (1, "blow-up"),
            _ => (1, "numerical failure"),
        };
        Self { exit_code, reason: reason.into(), message }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { exit_code: 1, reason: "io".into(), message: e.to_string() }
    }
}

type Run<T> = Result<T, Failure>;

/// Result of a subcommand before it is wrapped in the summary envelope.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub tables: Vec<(String, CsvTable)>,
    /// False makes the command exit with 1 (verification failures).
    pub passed: bool,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Self { result, tables: Vec::new(), passed: true }
    }

    fn table(mut self, name: &str, t: CsvTable) -> Self {
        self.tables.push((name.into(), t));
        self
    }
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn check_overrides(cli: &Cli) -> Run<()> {
    if cli.grid_n.is_some_and(|n| n < 8) {
        return Err(Failure::invalid("--grid-n must be at least 8"));
    }
    if cli.tol.is_some_and(|t| !(t > 0.0)) {
        return Err(Failure::invalid("--tol must be positive"));
    }
    if cli.workers == 0 {
        return Err(Failure::invalid("--workers must be at least 1"));
    }
    let pos = |name: &str, v: Option<f64>| match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Failure::invalid(format!("--{name} must be positive"))),
        _ => Ok(()),
    };
    match &cli.command {
        Command::Speed { c } => pos("c", *c)?,
        Command::Homogenize { eps, longtime_eps } => {
            if let Some(e) = eps {
                if e.is_empty() || e.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) || e.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(Failure::invalid("--eps must be a strictly decreasing list in (0, 1]"));
                }
            }
            if longtime_eps.is_some_and(|e| !(e > 0.0 && e <= 1.0)) {
                return Err(Failure::invalid("--longtime-eps must lie in (0, 1]"));
            }
        }
        Command::Ode { u0, v0, t_end, dt } => {
            pos("dt", *dt)?;
            if [u0, v0, t_end].iter().any(|v| v.is_some_and(|x| !(x >= 0.0 && x.is_finite()))) {
                return Err(Failure::invalid("--u0, --v0 and --t-end must be nonnegative"));
            }
        }
        Command::Simulate { nx, dt, t_end, x_min, x_max, .. } => {
            pos("dt", *dt)?;
            if nx.is_some_and(|n| n < 128) {
                return Err(Failure::invalid("--nx must be at least 128"));
            }
            if t_end.is_some_and(|t| !(t >= 0.0)) {
                return Err(Failure::invalid("--t-end must be nonnegative"));
            }
            if let (Some(a), Some(b)) = (x_min, x_max) {
                if !(b > a) {
                    return Err(Failure::invalid("--x-max must exceed --x-min"));
                }
            }
        }
        Command::Wave { c, c_factor, .. } => {
            pos("c", *c)?;
            pos("c-factor", *c_factor)?;
        }
        Command::Reduce { eps } => {
            if let Some(e) = eps {
                if e.is_empty() || e.iter().any(|x| !(*x > 0.0)) || e.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(Failure::invalid("--eps must be a strictly decreasing list of positive values"));
                }
            }
        }
        Command::Eig | Command::Verify { .. } => {}
    }
    Ok(())
}

fn load(cli: &Cli) -> Run<SpecDocument> {
    let path = cli.spec.as_ref().ok_or_else(|| Failure::invalid("--spec is required for this subcommand"))?;
    let doc = load_spec_with(path, &Overrides { n: cli.grid_n, tol: cli.tol })?;
    Ok(apply_command_overrides(doc, &cli.command)?)
}

fn apply_command_overrides(mut doc: SpecDocument, cmd: &Command) -> Result<SpecDocument, ConfigError> {
    let nm = &mut doc.numerics;
    match cmd {
        Command::Homogenize { eps, longtime_eps } => {
            if let Some(e) = eps {
                nm.homogenize.eps = e.clone();
            }
            if let Some(e) = longtime_eps {
                nm.homogenize.longtime_eps = *e;
            }
        }
        Command::Ode { u0, v0, t_end, dt } => {
            let o = &mut nm.ode;
            o.u0 = u0.unwrap_or(o.u0);
            o.v0 = v0.unwrap_or(o.v0);
            o.t_end = t_end.unwrap_or(o.t_end);
            o.dt = dt.unwrap_or(o.dt);
        }
        Command::Simulate { nx, dt, t_end, x_min, x_max, side, .. } => {
            let s = &mut nm.simulate;
            s.nx = nx.unwrap_or(s.nx);
            s.dt = dt.unwrap_or(s.dt);
            s.t_end = t_end.unwrap_or(s.t_end);
            s.x_min = x_min.unwrap_or(s.x_min);
            s.x_max = x_max.unwrap_or(s.x_max);
            if let Some(sd) = side {
                s.side = match sd {
                    SideArg::Right => Side::Right,
                    SideArg::Left => Side::Left,
                };
            }
        }
        Command::Wave { c_factor: Some(f), .. } => nm.wave.c_factor = *f,
        Command::Reduce { eps: Some(e) } => nm.strong_coupling.eps_list = e.clone(),
        _ => {}
    }
    nm.validate()?;
    Ok(doc)
}

fn pool(workers: usize) -> Run<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure { exit_code: 1, reason: "thread pool".into(), message: e.to_string() })
}

fn cmd_eig(doc: &SpecDocument) -> Run<Outcome> {
    let nm = &doc.numerics;
    let spec = &doc.spec;
    let curve = k_curve(spec, -nm.lambda_max, nm.lambda_max, nm.k_points, nm.n)?;
    let per = lambda1_per(spec, nm.n)?;
    let (inf, argmax) = maximize_k(spec, nm.n, nm.tol)?;
    let l = spec.period();
    let tail = nm
        .dirichlet_radii
        .iter()
        .map(|r| lambda1_dirichlet(spec, r * l, nm.n).map(|e| json!({ "radius": r * l, "lambda1": e.value, "residual": e.residual })))
        .collect::<Result<Vec<_>, _>>()?;
    let cap = curve.fit_cap();
    let violations = curve.concavity_violations(1e-10);
    let mut t = CsvTable::new(&["lambda", "k", "residual", "cap"]).meta("spec_hash", &doc.hash).meta("n", nm.n);
    for i in 0..curve.lambdas.len() {
        let l = curve.lambdas[i];
        t.push(vec![l, curve.values[i], curve.residuals[i], cap.map_or(f64::NAN, |c| c.eval(l))]);
    }
    Ok(Outcome::ok(json!({
        "lambda1_per": per.value,
        "lambda1_per_residual": per.residual,
        "lambda1_inf": inf,
        "lambda1_inf_argmax": argmax,
        "dirichlet_tail": tail,
        "k_curve": curve,
        "quadratic_cap": cap,
        "concavity_violations": violations,
        "max_abs_asymmetry": curve.max_abs_asymmetry(),
    }))
    .table("k_curve.csv", t))
}

fn cmd_speed(doc: &SpecDocument, c: Option<f64>) -> Run<Outcome> {
    let nm = &doc.numerics;
    let rep = speed_report(&doc.spec, nm.n)?;
    let mut result = json!({ "report": rep });
    if rep.valid {
        result["crossing_at_c_star"] = value(&crossing_structure(&doc.spec, rep.c_right, nm.n)?);
        if let Some(c) = c {
            result["crossing_at_c"] = value(&crossing_structure(&doc.spec, c, nm.n)?);
        }
    }
    if doc.spec.dim() == 1 {
        result["integral_q_over_2sigma"] = json!(drift_integral(&doc.spec)?);
    }
    Ok(Outcome::ok(result))
}

fn field_means(f: &PeriodicField) -> Value {
    json!({ "arithmetic": f.mean_arithmetic(), "harmonic": f.mean_harmonic().ok() })
}

fn sweep_parallel(pool: &rayon::ThreadPool, eps: &[f64], row: impl Fn(f64) -> spreading_core::Result<(f64, f64)> + Sync) -> Vec<SweepRow> {
    pool.install(|| {
        eps.par_iter()
            .map(|&e| match row(e) {
                Ok((value, error)) => SweepRow { param: e, value, error, failure: None },
                Err(err) => SweepRow { param: e, value: f64::NAN, error: f64::NAN, failure: Some(err.to_string()) },
            })
            .collect()
    })
}

fn sweep_csv(doc: &SpecDocument, t: &SweepTable, extra: &[(&str, String)]) -> CsvTable {
    let mut csv = CsvTable::new(&[&t.param_name, &t.quantity, "error"])
        .meta("spec_hash", &doc.hash)
        .meta("n_per_period", t.n_per_period)
        .meta("tol", doc.numerics.tol)
        .meta("reference", output::fmt17(t.reference))
        .meta("monotone_decline", t.monotone_decline);
    for (k, v) in extra {
        csv = csv.meta(k, v);
    }
    for r in &t.rows {
        csv.push(vec![r.param, r.value, r.error]);
    }
    csv
}

fn cmd_homogenize(doc: &SpecDocument, pool: &rayon::ThreadPool) -> Run<Outcome> {
    let nm = &doc.numerics;
    let spec = &doc.spec;
    let d = spec.dim();
    let means = json!({
        "sigma": spec.sigma.iter().map(field_means).collect::<Vec<_>>(),
        "q": spec.q.iter().map(|f| f.mean_arithmetic()).collect::<Vec<_>>(),
        "a": spec.a.mean(),
        "d": d,
    });
    let mut out = Outcome::ok(json!({ "means": means }));
    match homogenized_speed(spec) {
        Ok(h) => {
            let rows = sweep_parallel(pool, &nm.homogenize.eps, |e| epsilon_speed(spec, e, nm.n).map(|c| (c, (c - h.c).abs() / h.c)));
            let table = SweepTable::from_rows("eps", "c_star_eps", h.c, rows, nm.n);
            out.tables.push(("epsilon_sweep.csv".into(), sweep_csv(doc, &table, &[])));
            out.result["homogenized"] = value(&h);
            out.result["sweep"] = value(&table);
        }
        Err(CoreError::NoSpeedRegime(k)) => {
            out.result["homogenized"] = json!({ "no_speed_regime": true, "k0": k });
        }
        Err(e) => return Err(e.into()),
    }
    let eps = nm.homogenize.longtime_eps;
    if eps > 0.0 {
        let cfg = longtime_config(eps, nm.homogenize.longtime_t_end);
        let rep = rapidosc_longtime(spec, eps, &cfg)?;
        let uniq = rapidosc_uniqueness(spec, eps, &cfg)?;
        out.result["longtime"] = json!({ "report": rep, "two_bump_difference": uniq, "config": cfg });
    }
    Ok(out)
}

fn averaged_params(doc: &SpecDocument) -> Run<(OdeParams, bool, [f64; 2])> {
    let m = doc
        .spec
        .nonlinearity
        .mutation()
        .ok_or_else(|| Failure::from(CoreError::Inapplicable("`ode` needs a mutation-competition spec".into())))?;
    let fields = [&m.r_u, &m.r_v, &m.kappa_u, &m.kappa_v, &m.mu_u, &m.mu_v];
    let averaged = fields.iter().chain(doc.spec.sigma.iter().collect::<Vec<_>>().iter()).any(|f| !f.is_constant(1e-14));
    let p = OdeParams::new(
        m.r_u.mean_arithmetic(),
        m.r_v.mean_arithmetic(),
        m.kappa_u.mean_arithmetic(),
        m.kappa_v.mean_arithmetic(),
        m.mu_u.mean_arithmetic(),
        m.mu_v.mean_arithmetic(),
    )?;
    let sig = [doc.spec.sigma[0].mean_arithmetic(), doc.spec.sigma[1].mean_arithmetic()];
    Ok((p, averaged, sig))
}

fn cmd_ode(doc: &SpecDocument) -> Run<Outcome> {
    let o = &doc.numerics.ode;
    let (p, averaged, sig) = averaged_params(doc)?;
    let (l1, l2, phi) = ode::lambda_a(&p);
    let mut result = json!({
        "params": p,
        "averaged_from_periodic_fields": averaged,
        "lambda_a": l1,
        "lambda_2": l2,
        "phi_a": phi,
    });
    let eq = ode::equilibrium(&p);
    let mut k_weight = None;
    match &eq {
        Ok(eq) => {
            result["equilibrium"] = value(eq);
            result["stability"] = value(&ode::stability_certificate(&eq.jac));
            result["lyapunov"] = match ode::lyapunov_k(&p, eq) {
                Ok(k) => {
                    k_weight = Some(k);
                    json!({ "k": k, "coefficients": ode::lyapunov_coefficients(&p, eq) })
                }
                Err(e) => json!({ "k": null, "reason": e.to_string() }),
            };
            result["omega"] = match ode::decay_rate_omega(eq, sig[0], sig[1]) {
                Ok(w) => json!(w),
                Err(e) => json!({ "error": e.to_string() }),
            };
        }
        Err(e) => result["equilibrium"] = json!({ "none": e.to_string() }),
    }
    let traj = ode::integrate(&p, o.u0, o.v0, o.t_end, o.dt)?;
    let (t, u, v) = traj.last();
    result["trajectory_end"] = json!({ "t": t, "u": u, "v": v, "steps": traj.t.len() - 1 });
    let mut csv = CsvTable::new(&["t", "u", "v", "lyapunov"]).meta("spec_hash", &doc.hash);
    let stride = (traj.t.len() / 2000).max(1);
    for i in (0..traj.t.len()).filter(|i| i % stride == 0 || *i == traj.t.len() - 1) {
        let f = match (&eq, k_weight) {
            (Ok(eq), Some(k)) => ode::lyapunov_value(k, eq, traj.u[i], traj.v[i]).unwrap_or(f64::NAN),
            _ => f64::NAN,
        };
        csv.push(vec![traj.t[i], traj.u[i], traj.v[i], f]);
    }
    Ok(Outcome::ok(result).table("trajectory.csv", csv))
}

fn front_level(doc: &SpecDocument) -> Vec<f64> {
    reference_level(&doc.spec).unwrap_or_else(|| vec![1.0; doc.spec.dim()])
}

fn snapshot_csv(doc: &SpecDocument, st: &pde::SimState) -> CsvTable {
    let names: Vec<String> = std::iter::once("x".to_string()).chain((1..=st.d).map(|i| format!("u_{i}"))).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs).meta("spec_hash", &doc.hash).meta("t", output::fmt17(st.t));
    for j in 0..st.nx() {
        let mut row = vec![st.x[j]];
        row.extend((0..st.d).map(|i| st.species(i)[j]));
        t.push(row);
    }
    t
}

fn cmd_simulate(doc: &SpecDocument, mode: SimMode) -> Run<Outcome> {
    let nm = &doc.numerics;
    let spec = &doc.spec;
    let d = spec.dim();
    match mode {
        SimMode::Front => {
            let s = &nm.simulate;
            let level = front_level(doc);
            let delta = s.front_delta.unwrap_or(0.01 * level.iter().copied().fold(0.0, f64::max));
            let cfg = SimConfig {
                x_min: s.x_min,
                x_max: s.x_max,
                nx: s.nx,
                dt: s.dt,
                t_end: s.t_end,
                bc: s.bc,
                output_every: s.output_every,
                front_delta: delta,
                side: s.side,
            };
            let w = s.x_max - s.x_min;
            let mut u0 = vec![0.0; d * s.nx];
            let (dir, cut) = match s.side {
                Side::Right => (Direction::Right, s.step_at.unwrap_or(s.x_min + 0.05 * w)),
                Side::Left => (Direction::Left, s.step_at.unwrap_or(s.x_max - 0.05 * w)),
            };
            for j in 0..s.nx {
                let x = cfg.node(j);
                let inside = match s.side {
                    Side::Right => x < cut,
                    Side::Left => x > cut,
                };
                if inside {
                    for i in 0..d {
                        u0[i * s.nx + j] = level[i];
                    }
                }
            }
            let res = pde::simulate(spec, &u0, &cfg)?;
            let spectral = min_speed(spec, dir, nm.n).ok().map(|(c, _)| c);
            let rel = spectral.map(|c| (res.trace.fitted_speed - c).abs() / c);
            let mut trace = CsvTable::new(&["t", "front"]).meta("spec_hash", &doc.hash).meta("delta", output::fmt17(delta));
            for (t, p) in res.trace.times.iter().zip(&res.trace.positions) {
                trace.push(vec![*t, *p]);
            }
            Ok(Outcome::ok(json!({
                "mode": "front",
                "fitted_speed": res.trace.fitted_speed,
                "fit_residual": res.trace.fit_residual,
                "spectral_speed": spectral,
                "relative_error": rel,
                "front_delta": delta,
                "clamp_count": res.clamp_count,
                "steps": res.steps,
                "config": cfg,
            }))
            .table("front_trace.csv", trace)
            .table("final_state.csv", snapshot_csv(doc, &res.state)))
        }
        SimMode::HairTrigger => {
            let h = &nm.hair_trigger;
            let cfg = SimConfig {
                x_min: -h.half_width,
                x_max: h.half_width,
                nx: h.nx,
                dt: h.dt,
                t_end: h.t_end,
                output_every: h.t_end.max(1.0),
                ..SimConfig::default()
            };
            let rep = hair_trigger_experiment(spec, 0.0, h.bump_width, h.bump_amplitude, &cfg, nm.n)?;
            Ok(Outcome::ok(json!({ "mode": "hair_trigger", "report": rep, "persists": rep.min_window > 0.0, "config": cfg })))
        }
        SimMode::Comparison => {
            let c = &nm.comparison;
            let eta = cooperative_radius(spec);
            let eta = if eta.is_finite() { eta } else { 2.0 * front_level(doc).iter().copied().fold(0.0, f64::max) };
            let cfg = SimConfig {
                x_min: -c.half_width,
                x_max: c.half_width,
                nx: c.nx,
                dt: c.dt,
                t_end: c.t_end,
                output_every: c.t_end.max(1.0),
                ..SimConfig::default()
            };
            let u0 = bump_initial(&cfg, d, 0.0, c.bump_width, c.bump_amplitude);
            let rep = comparison_experiment(spec, eta, &u0, &cfg)?;
            Ok(Outcome::ok(json!({ "mode": "comparison", "report": rep, "ordered": rep.max_violation < 1e-10, "config": cfg })))
        }
        SimMode::Longtime => {
            let eps = if nm.homogenize.longtime_eps > 0.0 { nm.homogenize.longtime_eps } else { 1.0 };
            let cfg = SimConfig { bc: Truncation::Periodic, ..longtime_config(eps, nm.homogenize.longtime_t_end) };
            let rep = rapidosc_longtime(spec, eps, &cfg)?;
            Ok(Outcome::ok(json!({ "mode": "longtime", "report": rep, "config": cfg })))
        }
    }
}

fn cmd_wave(doc: &SpecDocument, c: Option<f64>, start_from_upper: bool) -> Run<Outcome> {
    let nm = &doc.numerics;
    let w = &nm.wave;
    let cfg = WaveConfig {
        n_per_period: w.n_per_period,
        dt: w.dt,
        tol: w.tol,
        max_iter: w.max_iter,
        omega_scale: w.omega_scale,
        start_from_upper,
        ..WaveConfig::default()
    };
    let c = match c {
        Some(c) => c,
        None => w.c_factor * min_speed(&doc.spec, Direction::Right, w.n_per_period)?.0,
    };
    let wave = construct_wave(&doc.spec, c, &cfg)?;
    let d = doc.spec.dim();
    let n = wave.x.len();
    let mut header = vec!["x".to_string()];
    for prefix in ["u", "lower", "upper"] {
        header.extend((1..=d).map(|i| format!("{prefix}_{i}")));
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvTable::new(&refs).meta("spec_hash", &doc.hash).meta("c", output::fmt17(c));
    for j in 0..n {
        let mut row = vec![wave.x[j]];
        for arr in [&wave.profile, &wave.lower, &wave.upper] {
            row.extend((0..d).map(|i| arr[i * n + j]));
        }
        csv.push(row);
    }
    let passed = wave.converged;
    let mut out = Outcome::ok(json!({
        "c": wave.c,
        "c_star": wave.c_star,
        "lambda": wave.lambda,
        "mu": wave.mu,
        "omega": wave.omega,
        "iterations": wave.iterations,
        "sup_diff": wave.sup_diff,
        "converged": wave.converged,
        "wave_residual": wave.wave_residual,
        "tail_slope": wave.tail_slope,
        "tail_slope_relative_error": (wave.tail_slope - wave.lambda).abs() / wave.lambda,
        "sandwich_violation": wave.sandwich_violation(),
        "config": cfg,
    }))
    .table("wave_profile.csv", csv);
    out.passed = passed;
    Ok(out)
}

fn cmd_reduce(doc: &SpecDocument, pool: &rayon::ThreadPool) -> Run<Outcome> {
    let nm = &doc.numerics;
    let model = doc
        .model
        .as_ref()
        .ok_or_else(|| Failure::from(CoreError::Inapplicable("`reduce` needs a strong_coupling spec".into())))?;
    let reduced = strong_coupling_reduce(model)?;
    let aniso = anisotropy_report(&reduced, nm.n, 1e-6)?;
    let sc = &nm.strong_coupling;
    let grid = lambda_grid(sc.lambda_max, sc.lambda_points);
    let rows = sweep_parallel(pool, &sc.eps_list, |e| strong_coupling_error(model, e, &grid, nm.n).map(|s| (s, s)));
    let table = SweepTable::from_rows("eps", "sup_abs_k_diff", 0.0, rows, nm.n);
    let speeds = strong_coupling_speeds(model, sc.eps, nm.n)?;
    let mut coeffs = CsvTable::new(&["x", "sigma", "q", "zeroth_order", "kappa"]).meta("spec_hash", &doc.hash);
    let kappa = match &reduced.nonlinearity {
        Nonlinearity::Logistic { kappa } => kappa[0].clone(),
        _ => unreachable!("the reduction is logistic"),
    };
    for j in 0..reduced.sigma[0].len() {
        coeffs.push(vec![
            reduced.sigma[0].node(j),
            reduced.sigma[0].samples()[j],
            reduced.q[0].samples()[j],
            reduced.a.get(0, 0).samples()[j],
            kappa.samples()[j],
        ]);
    }
    let extra = [("lambda_max", output::fmt17(sc.lambda_max)), ("lambda_points", sc.lambda_points.to_string())];
    Ok(Outcome::ok(json!({
        "anisotropy": aniso,
        "coupled_speeds": { "eps": sc.eps, "c_right": speeds.c_right, "c_left": speeds.c_left },
        "coupled_ordering_matches": (speeds.c_left > speeds.c_right) == (aniso.c_left > aniso.c_right),
        "strong_coupling_sweep": table,
    }))
    .table("reduced_coefficients.csv", coeffs)
    .table("strong_coupling_sweep.csv", sweep_csv(doc, &table, &extra)))
}

fn cmd_verify(cli: &Cli, ode_cases: usize, pool: &rayon::ThreadPool) -> Run<Outcome> {
    let ov = Overrides { n: cli.grid_n, tol: cli.tol };
    let docs = match &cli.spec {
        Some(p) => vec![load_spec_with(p, &ov)?],
        None => corpus::load_all(&ov)?,
    };
    let entries: Vec<verify::EntryReport> = pool.install(|| docs.par_iter().map(verify::verify_entry).collect());
    let battery = verify::ode_battery(cli.seed, ode_cases);
    let passed = entries.iter().all(|e| e.passed) && battery.passed;
    let failed: Vec<String> =
        entries.iter().flat_map(|e| e.checks.iter().filter(|c| !c.passed).map(move |c| format!("{}: {}", e.name, c.name))).collect();
    let mut out = Outcome::ok(json!({
        "entries": entries,
        "ode_battery": battery,
        "failed_checks": failed,
        "all_passed": passed,
    }));
    out.passed = passed;
    Ok(out)
}

fn execute(cli: &Cli) -> Run<(Option<SpecDocument>, Outcome)> {
    check_overrides(cli)?;
    let pool = pool(cli.workers)?;
    if let Command::Verify { ode_cases } = &cli.command {
        return Ok((None, cmd_verify(cli, *ode_cases, &pool)?));
    }
    let doc = load(cli)?;
    let out = match &cli.command {
        Command::Eig => cmd_eig(&doc)?,
        Command::Speed { c } => cmd_speed(&doc, *c)?,
        Command::Homogenize { .. } => cmd_homogenize(&doc, &pool)?,
        Command::Ode { .. } => cmd_ode(&doc)?,
        Command::Simulate { mode, .. } => cmd_simulate(&doc, *mode)?,
        Command::Wave { c, start_from_upper, .. } => cmd_wave(&doc, *c, *start_from_upper)?,
        Command::Reduce { .. } => cmd_reduce(&doc, &pool)?,
        Command::Verify { .. } => unreachable!(),
    };
    Ok((Some(doc), out))
}

/// Runs a parsed command line, writing the JSON summary to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> i32 {
    let command = cli.command.name();
    let mut envelope = json!({
        "tool": "spreading",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cli.seed,
    });
    let mut tables = Vec::new();
    let code = match execute(cli) {
        Ok((doc, out)) => {
            if let Some(doc) = doc {
                envelope["spec"] = json!({ "name": doc.name, "kind": doc.kind, "hash": doc.hash, "dim": doc.spec.dim(), "period": doc.spec.period() });
                envelope["tolerances"] = json!({ "tol": doc.numerics.tol, "n": doc.numerics.n });
                envelope["numerics"] = value(&doc.numerics);
            }
            envelope["status"] = json!(if out.passed { "ok" } else { "failed" });
            envelope["files"] = json!(out.tables.iter().map(|t| t.0.clone()).collect::<Vec<_>>());
            envelope["result"] = out.result;
            tables = out.tables;
            if out.passed {
                0
            } else {
                1
            }
        }
        Err(f) => {
            envelope["status"] = json!("error");
            envelope["failure"] = value(&f);
            f.exit_code
        }
    };
    let text = to_json(&envelope);
    let mut code = code;
    if let Some(dir) = &cli.out {
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("summary.json"), format!("{text}\n"))?;
            for (name, t) in &tables {
                t.write_file(&dir.join(name))?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            let _ = writeln!(std::io::stderr(), "spreading: cannot write to {}: {e}", dir.display());
            code = code.max(1);
        }
    }
    let _ = writeln!(stdout, "{text}");
    code
}

/// Entry point for the binary: parses `args` and runs.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, &mut std::io::stdout().lock()),
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
