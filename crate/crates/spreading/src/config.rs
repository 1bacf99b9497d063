//! Spec files.
//!
//! A spec is a TOML document with four sections:
//!
//! ```toml
//! [system]
//! name = "kpp"
//! kind = "scalar"          # scalar | system | mutation | strong_coupling
//! period = 1.0
//! form = "divergence"      # divergence | nondivergence
//!
//! [coefficients]
//! sigma = "1 + 0.5*sin(2*pi*x/L)"
//! r = 1.0
//!
//! [nonlinearity]
//! kind = "logistic"        # linear | logistic | mutation_competition
//! kappa = 1.0
//!
//! [numerics]
//! n = 128
//! ```
//!
//! A coefficient is a number, an expression string (see [`crate::expr`]) or
//! a table `{ csv = "file.csv", column = 0 }` of samples over one period,
//! read relative to the spec file. Per-species lists and matrices (kind
//! `system`) are arrays of these.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spreading_core::coeffs::{Form, MatrixField, MutationFields, Nonlinearity, PeriodicField, SystemSpec};
use spreading_core::pde::{Side, Truncation};
use spreading_core::speed::StrongCouplingModel;
use toml::Spanned;

use crate::expr::{Expr, ExprError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("line {line}: coefficient `{key}`: {source}")]
    Expr { key: String, line: usize, source: ExprError },
    #[error("line {line}: coefficient `{key}`: {message}")]
    Coefficient { key: String, line: usize, message: String },
    #[error("missing coefficient `{0}`")]
    Missing(String),
    #[error("unknown coefficient `{key}` for kind `{kind}` (line {line})")]
    Unknown { key: String, kind: String, line: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("assumption violated: {0}")]
    Core(#[from] spreading_core::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Scalar,
    System,
    Mutation,
    StrongCoupling,
}

impl SystemKind {
    fn name(self) -> &'static str {
        match self {
            SystemKind::Scalar => "scalar",
            SystemKind::System => "system",
            SystemKind::Mutation => "mutation",
            SystemKind::StrongCoupling => "strong_coupling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FormName {
    Divergence,
    Nondivergence,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: String,
    kind: SystemKind,
    #[serde(default = "one")]
    period: f64,
    #[serde(default)]
    form: Option<FormName>,
    #[serde(default)]
    d: Option<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NonlinearitySection {
    kind: String,
    #[serde(default)]
    kappa: Option<Spanned<toml::Value>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateNumerics {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    pub bc: Truncation,
    pub side: Side,
    pub output_every: f64,
    /// Front threshold; defaults to 1% of the averaged equilibrium.
    pub front_delta: Option<f64>,
    /// Step initial data occupies `x < step_at` (default: 5% into the domain).
    pub step_at: Option<f64>,
}

impl Default for SimulateNumerics {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 400.0,
            nx: 2048,
            dt: 0.01,
            t_end: 80.0,
            bc: Truncation::Neumann,
            side: Side::Right,
            output_every: 0.5,
            front_delta: None,
            step_at: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HairTriggerNumerics {
    pub half_width: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    pub bump_width: f64,
    pub bump_amplitude: f64,
}

impl Default for HairTriggerNumerics {
    fn default() -> Self {
        Self { half_width: 60.0, nx: 512, dt: 0.02, t_end: 100.0, bump_width: 1.0, bump_amplitude: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonNumerics {
    pub half_width: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    pub bump_width: f64,
    pub bump_amplitude: f64,
}

impl Default for ComparisonNumerics {
    fn default() -> Self {
        Self { half_width: 20.0, nx: 256, dt: 0.01, t_end: 10.0, bump_width: 3.0, bump_amplitude: 0.3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WaveNumerics {
    /// Wave speed as a multiple of `c*`, used when no explicit speed is given.
    pub c_factor: f64,
    pub n_per_period: usize,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub omega_scale: f64,
}

impl Default for WaveNumerics {
    fn default() -> Self {
        Self { c_factor: 1.2, n_per_period: 32, dt: 0.005, tol: 1e-6, max_iter: 500, omega_scale: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OdeNumerics {
    pub u0: f64,
    pub v0: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for OdeNumerics {
    fn default() -> Self {
        Self { u0: 0.1, v0: 0.1, t_end: 200.0, dt: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HomogenizeNumerics {
    pub eps: Vec<f64>,
    /// ε for the long-time check (0 disables it).
    pub longtime_eps: f64,
    pub longtime_t_end: f64,
}

impl Default for HomogenizeNumerics {
    fn default() -> Self {
        Self { eps: vec![0.25, 0.125, 0.0625, 0.03125], longtime_eps: 0.0, longtime_t_end: 60.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StrongCouplingNumerics {
    /// ε of the coupled system represented by the spec.
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub lambda_max: f64,
    pub lambda_points: usize,
}

impl Default for StrongCouplingNumerics {
    fn default() -> Self {
        Self { eps: 0.05, eps_list: vec![0.2, 0.1, 0.05], lambda_max: 2.0, lambda_points: 21 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Samples and grid points per period.
    pub n: usize,
    pub tol: f64,
    pub lambda_max: f64,
    pub k_points: usize,
    /// Dirichlet half-widths in periods.
    pub dirichlet_radii: Vec<f64>,
    pub simulate: SimulateNumerics,
    pub hair_trigger: HairTriggerNumerics,
    pub comparison: ComparisonNumerics,
    pub wave: WaveNumerics,
    pub ode: OdeNumerics,
    pub homogenize: HomogenizeNumerics,
    pub strong_coupling: StrongCouplingNumerics,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n: 128,
            tol: 1e-8,
            lambda_max: 3.0,
            k_points: 41,
            dirichlet_radii: vec![2.0, 4.0, 8.0, 16.0],
            simulate: SimulateNumerics::default(),
            hair_trigger: HairTriggerNumerics::default(),
            comparison: ComparisonNumerics::default(),
            wave: WaveNumerics::default(),
            ode: OdeNumerics::default(),
            homogenize: HomogenizeNumerics::default(),
            strong_coupling: StrongCouplingNumerics::default(),
        }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n < 8 {
            return bad(format!("numerics.n must be at least 8, got {}", self.n));
        }
        if !(self.tol > 0.0) {
            return bad(format!("numerics.tol must be positive, got {}", self.tol));
        }
        if !(self.lambda_max > 0.0) || self.k_points < 3 {
            return bad("numerics.lambda_max must be positive and k_points at least 3".into());
        }
        if self.dirichlet_radii.iter().any(|r| !(*r > 0.0)) {
            return bad("Dirichlet radii must be positive".into());
        }
        let s = &self.simulate;
        if !(s.x_max > s.x_min && s.dt > 0.0 && s.t_end >= 0.0 && s.output_every > 0.0) || s.nx < 128 {
            return bad("simulate: need x_max > x_min, nx ≥ 128, dt > 0, t_end ≥ 0, output_every > 0".into());
        }
        if s.front_delta.is_some_and(|d| !(d > 0.0)) {
            return bad("simulate.front_delta must be positive".into());
        }
        for (name, hw, nx, dt, t) in [
            ("hair_trigger", self.hair_trigger.half_width, self.hair_trigger.nx, self.hair_trigger.dt, self.hair_trigger.t_end),
            ("comparison", self.comparison.half_width, self.comparison.nx, self.comparison.dt, self.comparison.t_end),
        ] {
            if !(hw > 0.0 && dt > 0.0 && t >= 0.0) || nx < 128 {
                return bad(format!("{name}: need half_width > 0, nx ≥ 128, dt > 0, t_end ≥ 0"));
            }
        }
        let w = &self.wave;
        if !(w.c_factor > 0.0 && w.dt > 0.0 && w.tol > 0.0 && w.omega_scale >= 1.0) || w.n_per_period < 4 || w.max_iter == 0 {
            return bad("wave: need c_factor > 0, dt > 0, tol > 0, omega_scale ≥ 1, n_per_period ≥ 4, max_iter ≥ 1".into());
        }
        let o = &self.ode;
        if !(o.u0 >= 0.0 && o.v0 >= 0.0 && o.t_end >= 0.0 && o.dt > 0.0) {
            return bad("ode: need u0, v0 ≥ 0, t_end ≥ 0, dt > 0".into());
        }
        if self.homogenize.eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("homogenize.eps entries must lie in (0, 1]".into());
        }
        let sc = &self.strong_coupling;
        if !(sc.eps > 0.0 && sc.lambda_max > 0.0) || sc.lambda_points < 2 || sc.eps_list.iter().any(|e| !(*e > 0.0)) {
            return bad("strong_coupling: need eps > 0, positive eps_list, lambda_max > 0, lambda_points ≥ 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    system: SystemSection,
    coefficients: BTreeMap<String, Spanned<toml::Value>>,
    #[serde(default)]
    nonlinearity: Option<NonlinearitySection>,
    #[serde(default)]
    numerics: Numerics,
}

/// A parsed spec file.
#[derive(Debug, Clone)]
pub struct SpecDocument {
    pub name: String,
    pub description: String,
    pub kind: SystemKind,
    pub spec: SystemSpec,
    /// The underlying two-species model for kind `strong_coupling`.
    pub model: Option<StrongCouplingModel>,
    pub numerics: Numerics,
    /// SHA-256 of the spec text, hex.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads and parses a spec file; CSV references resolve against its directory.
pub fn load_spec(path: &Path) -> Result<SpecDocument> {
    load_spec_with(path, &Overrides::default())
}

pub fn load_spec_with(path: &Path, ov: &Overrides) -> Result<SpecDocument> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let default_name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_spec_with(&text, &base, &default_name, ov)
}

/// Command-line overrides applied before any coefficient is sampled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub tol: Option<f64>,
}

/// Parses spec text; `base` is the directory for CSV references.
pub fn parse_spec(text: &str, base: &Path, default_name: &str) -> Result<SpecDocument> {
    parse_spec_with(text, base, default_name, &Overrides::default())
}

pub fn parse_spec_with(text: &str, base: &Path, default_name: &str, ov: &Overrides) -> Result<SpecDocument> {
    let mut raw: RawSpec = toml::from_str(text)?;
    if let Some(n) = ov.n {
        raw.numerics.n = n;
    }
    if let Some(tol) = ov.tol {
        raw.numerics.tol = tol;
    }
    raw.numerics.validate()?;
    let sys = &raw.system;
    if !(sys.period > 0.0 && sys.period.is_finite()) {
        return Err(ConfigError::Invalid(format!("system.period must be positive, got {}", sys.period)));
    }
    let ctx = Ctx { text, base, n: raw.numerics.n, period: sys.period };
    let form = match sys.form {
        Some(FormName::Nondivergence) => Form::NonDivergence,
        _ => Form::Divergence,
    };
    let coeffs = &raw.coefficients;
    let allowed: &[&str] = match sys.kind {
        SystemKind::Scalar => &["sigma", "q", "r"],
        SystemKind::System => &["sigma", "q", "a"],
        SystemKind::Mutation => &["sigma_u", "sigma_v", "r_u", "r_v", "kappa_u", "kappa_v", "mu_u", "mu_v"],
        SystemKind::StrongCoupling => &["sigma_u", "sigma_v", "r_u", "r_v", "kappa_u", "kappa_v", "p"],
    };
    for (k, v) in coeffs {
        if !allowed.contains(&k.as_str()) {
            return Err(ConfigError::Unknown { key: k.clone(), kind: sys.kind.name().into(), line: ctx.line(v.span().start) });
        }
    }
    let get = |k: &str| coeffs.get(k).ok_or_else(|| ConfigError::Missing(k.into()));
    let field = |k: &str| ctx.field(k, get(k)?);
    let field_or = |k: &str, dflt: f64| match coeffs.get(k) {
        Some(v) => ctx.field(k, v),
        None => Ok(PeriodicField::constant(dflt, ctx.n, ctx.period)?.with_label(k)),
    };
    let mut model = None;
    let spec = match sys.kind {
        SystemKind::Scalar => {
            if sys.d.is_some_and(|d| d != 1) {
                return Err(ConfigError::Invalid("kind `scalar` has d = 1".into()));
            }
            let nl = ctx.scalar_nonlinearity(raw.nonlinearity.as_ref(), 1, "logistic")?;
            let a = MatrixField::new(1, vec![field("r")?])?;
            SystemSpec::new(vec![field("sigma")?], vec![field_or("q", 0.0)?], a, form, nl)?
        }
        SystemKind::System => {
            let d = sys.d.ok_or_else(|| ConfigError::Invalid("kind `system` needs system.d".into()))?;
            if d == 0 {
                return Err(ConfigError::Invalid("system.d must be positive".into()));
            }
            let sigma = ctx.list("sigma", get("sigma")?, d)?;
            let q = match coeffs.get("q") {
                Some(v) => ctx.list("q", v, d)?,
                None => (0..d)
                    .map(|i| Ok(PeriodicField::constant(0.0, ctx.n, ctx.period)?.with_label(format!("q_{}", i + 1))))
                    .collect::<Result<_>>()?,
            };
            let a = ctx.matrix("a", get("a")?, d)?;
            check_cooperative(&a)?;
            let nl = ctx.scalar_nonlinearity(raw.nonlinearity.as_ref(), d, "linear")?;
            SystemSpec::new(sigma, q, a, form, nl)?
        }
        SystemKind::Mutation => {
            check_mutation_nonlinearity(raw.nonlinearity.as_ref())?;
            let fields = MutationFields {
                r_u: field("r_u")?,
                r_v: field("r_v")?,
                kappa_u: field("kappa_u")?,
                kappa_v: field("kappa_v")?,
                mu_u: field("mu_u")?,
                mu_v: field("mu_v")?,
            };
            fields.validate()?;
            SystemSpec::mutation_competition(field("sigma_u")?, field("sigma_v")?, fields, form)?
        }
        SystemKind::StrongCoupling => {
            check_mutation_nonlinearity(raw.nonlinearity.as_ref())?;
            if form != Form::Divergence {
                return Err(ConfigError::Invalid("kind `strong_coupling` uses divergence form".into()));
            }
            let m = StrongCouplingModel {
                sigma_u: field("sigma_u")?,
                sigma_v: field("sigma_v")?,
                r_u: field("r_u")?,
                r_v: field("r_v")?,
                kappa_u: field("kappa_u")?,
                kappa_v: field("kappa_v")?,
                p: field("p")?,
            };
            let spec = m.coupled_spec(raw.numerics.strong_coupling.eps)?;
            model = Some(m);
            spec
        }
    };
    Ok(SpecDocument {
        name: sys.name.clone().unwrap_or_else(|| default_name.to_string()),
        description: sys.description.clone(),
        kind: sys.kind,
        spec,
        model,
        numerics: raw.numerics,
        hash: sha256_hex(text.as_bytes()),
    })
}

fn check_mutation_nonlinearity(nl: Option<&NonlinearitySection>) -> Result<()> {
    match nl {
        None => Ok(()),
        Some(s) if s.kind == "mutation_competition" && s.kappa.is_none() => Ok(()),
        Some(_) => Err(ConfigError::Invalid(
            "mutation models take kind = \"mutation_competition\" and their competition rates from [coefficients]".into(),
        )),
    }
}

struct Ctx<'a> {
    text: &'a str,
    base: &'a Path,
    n: usize,
    period: f64,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn coefficient_error(&self, key: &str, v: &Spanned<toml::Value>, message: String) -> ConfigError {
        ConfigError::Coefficient { key: key.into(), line: self.line(v.span().start), message }
    }

    fn field(&self, key: &str, v: &Spanned<toml::Value>) -> Result<PeriodicField> {
        self.field_value(key, v.get_ref(), v)
    }

    fn field_value(&self, key: &str, value: &toml::Value, span: &Spanned<toml::Value>) -> Result<PeriodicField> {
        let f = match value {
            toml::Value::Float(x) => PeriodicField::constant(*x, self.n, self.period)?,
            toml::Value::Integer(i) => PeriodicField::constant(*i as f64, self.n, self.period)?,
            toml::Value::String(s) => {
                let e = Expr::parse(s, self.period).map_err(|source| ConfigError::Expr {
                    key: key.into(),
                    line: self.line(span.span().start),
                    source,
                })?;
                PeriodicField::from_fn(self.n, self.period, |x| e.eval(x))
                    .map_err(|err| self.coefficient_error(key, span, err.to_string()))?
            }
            toml::Value::Table(t) => {
                let file = t.get("csv").and_then(toml::Value::as_str).ok_or_else(|| {
                    self.coefficient_error(key, span, "a table coefficient needs `csv = \"file\"`".into())
                })?;
                if let Some(k) = t.keys().find(|k| *k != "csv" && *k != "column") {
                    return Err(self.coefficient_error(key, span, format!("unknown key `{k}` in CSV reference")));
                }
                let column = match t.get("column") {
                    None => 0,
                    Some(toml::Value::Integer(c)) if *c >= 0 => *c as usize,
                    Some(_) => return Err(self.coefficient_error(key, span, "`column` must be a nonnegative integer".into())),
                };
                let samples = read_csv_column(&self.base.join(file), column).map_err(|m| self.coefficient_error(key, span, m))?;
                PeriodicField::new(resample_periodic(&samples, self.n), self.period)
                    .map_err(|e| self.coefficient_error(key, span, e.to_string()))?
            }
            other => {
                return Err(self.coefficient_error(key, span, format!("expected a number, expression or CSV table, got {}", other.type_str())))
            }
        };
        Ok(f.with_label(key))
    }

    fn list(&self, key: &str, v: &Spanned<toml::Value>, d: usize) -> Result<Vec<PeriodicField>> {
        let arr = v.get_ref().as_array().ok_or_else(|| self.coefficient_error(key, v, format!("expected a list of {d} entries")))?;
        if arr.len() != d {
            return Err(self.coefficient_error(key, v, format!("expected {d} entries, got {}", arr.len())));
        }
        arr.iter()
            .enumerate()
            .map(|(i, x)| Ok(self.field_value(&format!("{key}_{}", i + 1), x, v)?))
            .collect()
    }

    fn matrix(&self, key: &str, v: &Spanned<toml::Value>, d: usize) -> Result<MatrixField> {
        let rows = v.get_ref().as_array().ok_or_else(|| self.coefficient_error(key, v, format!("expected a {d}×{d} matrix")))?;
        if rows.len() != d {
            return Err(self.coefficient_error(key, v, format!("expected {d} rows, got {}", rows.len())));
        }
        let mut entries = Vec::with_capacity(d * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_array().filter(|r| r.len() == d).ok_or_else(|| self.coefficient_error(key, v, format!("row {} must have {d} entries", i + 1)))?;
            for (j, x) in row.iter().enumerate() {
                entries.push(self.field_value(&format!("{key}_{}{}", i + 1, j + 1), x, v)?);
            }
        }
        Ok(MatrixField::new(d, entries)?)
    }

    fn scalar_nonlinearity(&self, nl: Option<&NonlinearitySection>, d: usize, default: &str) -> Result<Nonlinearity> {
        let kind = nl.map_or(default, |s| s.kind.as_str());
        match kind {
            "linear" => {
                if nl.is_some_and(|s| s.kappa.is_some()) {
                    return Err(ConfigError::Invalid("a linear nonlinearity takes no kappa".into()));
                }
                Ok(Nonlinearity::Linear)
            }
            "logistic" => {
                let kappa = match nl.and_then(|s| s.kappa.as_ref()) {
                    None => (0..d)
                        .map(|i| Ok(PeriodicField::constant(1.0, self.n, self.period)?.with_label(format!("kappa_{}", i + 1))))
                        .collect::<Result<Vec<_>>>()?,
                    Some(v) if d == 1 && !v.get_ref().is_array() => vec![self.field("kappa", v)?],
                    Some(v) => self.list("kappa", v, d)?,
                };
                for k in &kappa {
                    k.require_positive()?;
                }
                Ok(Nonlinearity::Logistic { kappa })
            }
            other => Err(ConfigError::Invalid(format!(
                "nonlinearity kind `{other}` is not available here (linear or logistic)"
            ))),
        }
    }
}

/// One column of numbers from a CSV file. A first row that does not parse
/// is taken as a header; lines starting with `#` are skipped.
/// Off-diagonal entries must be nonnegative and the coupling graph irreducible.
fn check_cooperative(a: &MatrixField) -> Result<()> {
    let d = a.dim();
    for i in 0..d {
        for k in (0..d).filter(|&k| k != i) {
            let m = a.get(i, k).min();
            if m < 0.0 {
                return Err(spreading_core::Error::NotCooperative { row: i + 1, col: k + 1, value: m }.into());
            }
        }
    }
    if !a.check_structure(1e-8, 2).fully_coupled {
        return Err(spreading_core::Error::Reducible.into());
    }
    Ok(())
}

/// Periodic linear interpolation of `samples` (taken at `j/m`) onto `n` nodes.
fn resample_periodic(samples: &[f64], n: usize) -> Vec<f64> {
    let m = samples.len();
    if m == 0 || m == n {
        return samples.to_vec();
    }
    (0..n)
        .map(|j| {
            let s = j as f64 * m as f64 / n as f64;
            let i = s.floor() as usize;
            let t = s - i as f64;
            samples[i % m] + t * (samples[(i + 1) % m] - samples[i % m])
        })
        .collect()
}

fn read_csv_column(path: &Path, column: usize) -> std::result::Result<Vec<f64>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let cell = rec.get(column).ok_or_else(|| format!("{}: row {} has no column {column}", path.display(), i + 1))?;
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(format!("{}: row {}: `{cell}` is not a number", path.display(), i + 1)),
        }
    }
    if out.is_empty() {
        return Err(format!("{}: no samples", path.display()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn parse(s: &str) -> Result<SpecDocument> {
        parse_spec(s, Path::new("."), "test")
    }

    #[test]
    fn minimal_scalar() {
        let doc = parse("[system]\nkind = \"scalar\"\n[coefficients]\nsigma = 1\nr = 1.0\n").unwrap();
        assert_eq!(doc.spec.dim(), 1);
        assert_eq!(doc.name, "test");
        assert!(doc.spec.sigma[0].samples().iter().all(|&s| s == 1.0));
        assert!(doc.spec.a.get(0, 0).samples().iter().all(|&s| s == 1.0));
        assert!(doc.spec.q[0].samples().iter().all(|&s| s == 0.0));
        assert!(matches!(doc.spec.nonlinearity, Nonlinearity::Logistic { .. }));
        assert_eq!(doc.numerics, Numerics::default());
        assert_eq!(doc.hash.len(), 64);
    }

    #[test]
    fn mutation_model_fields() {
        let src = r#"
[system]
kind = "mutation"
period = 2.0
[coefficients]
sigma_u = 1
sigma_v = "1 + 0.5*cos(2*pi*x/L)"
r_u = 2
r_v = 1
kappa_u = 1
kappa_v = 1.5
mu_u = 0.5
mu_v = 0.25
[numerics]
n = 64
"#;
        let doc = parse(src).unwrap();
        let s = &doc.spec;
        assert_eq!((s.dim(), s.period()), (2, 2.0));
        assert_eq!(s.sigma[1].len(), 64);
        assert!((s.sigma[1].eval(1.0) - 0.5).abs() < 1e-12);
        let m = s.nonlinearity.mutation().unwrap();
        assert_eq!(m.kappa_v.samples()[0], 1.5);
        assert_eq!(s.a.get(0, 0).samples()[0], 1.5);
        assert_eq!(s.a.get(0, 1).samples()[0], 0.25);
        assert_eq!(s.a.get(1, 0).samples()[0], 0.5);
        assert_eq!(s.a.get(1, 1).samples()[0], 0.75);
    }

    #[test]
    fn linear_system_with_matrix() {
        let src = "[system]\nkind = \"system\"\nd = 2\nform = \"nondivergence\"\n[coefficients]\nsigma = [1, \"2\"]\na = [[-1, 0.5], [\"0.5*(1+sin(2*pi*x))\", -1]]\n";
        let doc = parse(src).unwrap();
        assert_eq!(doc.spec.form, Form::NonDivergence);
        assert!((doc.spec.a.get(1, 0).eval(0.25) - 1.0).abs() < 1e-12);
        assert_eq!(doc.spec.a.get(1, 0).label(), "a_21");
        assert!(matches!(doc.spec.nonlinearity, Nonlinearity::Linear));
    }

    #[test]
    fn strong_coupling_kind() {
        let src = "[system]\nkind = \"strong_coupling\"\n[coefficients]\nsigma_u = 1\nsigma_v = \"1 + 0.5*cos(2*pi*x)\"\nr_u = 1\nr_v = 1\nkappa_u = 1\nkappa_v = 1\np = \"0.5 + 0.3*sin(2*pi*x)\"\n[numerics.strong_coupling]\neps = 0.1\n";
        let doc = parse(src).unwrap();
        let m = doc.spec.nonlinearity.mutation().unwrap();
        let x = m.mu_u.node(3);
        assert!((m.mu_u.samples()[3] - (0.5 + 0.3 * (2.0 * PI * x).sin()) / 0.1).abs() < 1e-9);
        assert!(doc.model.is_some());
    }

    #[test]
    fn csv_coefficient() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sig.csv"), "x,sigma\n0,1\n0.25,2\n0.5,3\n0.75,2\n").unwrap();
        let src = "[system]\nkind = \"scalar\"\n[coefficients]\nsigma = { csv = \"sig.csv\", column = 1 }\nr = 1\n[numerics]\nn = 8\n";
        let doc = parse_spec(src, dir.path(), "t").unwrap();
        assert_eq!(doc.spec.sigma[0].samples(), &[1.0, 1.5, 2.0, 2.5, 3.0, 2.5, 2.0, 1.5]);
        let missing = "[system]\nkind = \"scalar\"\n[coefficients]\nsigma = { csv = \"nope.csv\" }\nr = 1\n";
        assert!(matches!(parse_spec(missing, dir.path(), "t"), Err(ConfigError::Coefficient { line: 4, .. })));
    }

    #[test]
    fn malformed_expression_names_token_and_line() {
        let err = parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = \"1 + sinn(x)\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Expr { line: 5, .. }), "{msg}");
        assert!(msg.contains("sinn") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn nonpositive_sigma_reports_point() {
        let err = parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = \"sin(2*pi*x)\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Core(spreading_core::Error::NonPositive { .. })), "{msg}");
        assert!(msg.contains("x = 0"), "{msg}");
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\n"), Err(ConfigError::Missing(k)) if k == "sigma"));
        assert!(matches!(
            parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = 1\nmu = 2\n"),
            Err(ConfigError::Unknown { line: 6, .. })
        ));
        let e = parse("[system]\nkind = \"scalr\"\n[coefficients]\n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        assert!(parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = 1\n[numerics]\nn = 2\n").is_err());
        assert!(parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = 1\n[numerics]\nbogus = 2\n").is_err());
        assert!(parse("[system]\nkind = \"system\"\nd = 2\n[coefficients]\nsigma = [1]\na = [[0,1],[1,0]]\n").is_err());
        assert!(parse("[system]\nkind = \"system\"\nd = 2\n[coefficients]\nsigma = [1, 1]\na = [[0,-1],[1,0]]\n").is_err());
    }

    #[test]
    fn hash_is_content_based() {
        let a = parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = 1\n").unwrap();
        let b = parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = 1\n").unwrap();
        let c = parse("[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = 2\n").unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
