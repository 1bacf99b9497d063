//! Periodic coefficient fields, matrix fields and system descriptions.
//!
//! Every coefficient is stored as `N` uniform samples over one period
//! `x_j = j L / N`; evaluation elsewhere uses the periodic extension with
//! linear interpolation. Means use the equal-weight periodic trapezoid rule.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Smallest number of samples accepted for a field.
pub const MIN_SAMPLES: usize = 8;

/// One period of a scalar coefficient, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    period: f64,
    samples: Vec<f64>,
    label: String,
}

impl PeriodicField {
    pub fn new(samples: Vec<f64>, period: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        if samples.len() < MIN_SAMPLES {
            return Err(Error::InvalidInput(format!(
                "a field needs at least {MIN_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { label: String::new(), index });
        }
        Ok(Self { period, samples, label: String::new() })
    }

    pub fn constant(value: f64, n: usize, period: f64) -> Result<Self> {
        Self::new(vec![value; n], period)
    }

    /// Samples `f` at the nodes `j L / n`.
    pub fn from_fn(n: usize, period: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = period / n as f64;
        Self::new((0..n).map(|j| f(j as f64 * h)).collect(), period)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.samples.len() as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    /// Periodic linear interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.samples.len();
        let s = (x / self.period).rem_euclid_f() * n as f64;
        let mut j = s.floor() as usize;
        let mut t = s - j as f64;
        if j >= n {
            j -= n;
            t = 0.0;
        }
        let a = self.samples[j];
        if t == 0.0 {
            return a;
        }
        let b = self.samples[(j + 1) % n];
        a + t * (b - a)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        self.max() - self.min() <= tol
    }

    /// Fails with the first offending sample if the field is not strictly positive.
    pub fn require_positive(&self) -> Result<()> {
        match self.samples.iter().position(|&v| !(v > 0.0)) {
            None => Ok(()),
            Some(j) => Err(Error::NonPositive {
                label: self.label.clone(),
                x: self.node(j),
                value: self.samples[j],
            }),
        }
    }

    pub fn mean_arithmetic(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn mean_harmonic(&self) -> Result<f64> {
        self.require_positive()?;
        let inv: f64 = self.samples.iter().map(|v| 1.0 / v).sum();
        Ok(self.samples.len() as f64 / inv)
    }

    /// The field `x ↦ f(x/ε)`, of period `ε L`, with the same samples per period.
    pub fn make_rapid(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidInput(format!("eps must lie in (0, 1], got {eps}")));
        }
        Ok(Self { period: self.period * eps, samples: self.samples.clone(), label: self.label.clone() })
    }

    /// Centered-difference derivative on the sample grid.
    pub fn derivative(&self) -> Self {
        let n = self.samples.len();
        let h = self.spacing();
        let samples = (0..n)
            .map(|j| (self.samples[(j + 1) % n] - self.samples[(j + n - 1) % n]) / (2.0 * h))
            .collect();
        Self { period: self.period, samples, label: format!("d({})/dx", self.label) }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = Self::new(self.samples.iter().map(|&v| f(v)).collect(), self.period)?;
        out.label = self.label.clone();
        Ok(out)
    }

    /// Pointwise combination on this field's grid; `other` is interpolated
    /// when its sample count differs.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_period(self, other)?;
        let samples = if other.len() == self.len() {
            self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect()
        } else {
            (0..self.len()).map(|j| f(self.samples[j], other.eval(self.node(j)))).collect()
        };
        Self::new(samples, self.period)
    }

    /// Values at `n` uniformly spaced nodes over one period.
    pub fn resample(&self, n: usize) -> Vec<f64> {
        if n == self.len() {
            return self.samples.clone();
        }
        let h = self.period / n as f64;
        (0..n).map(|j| self.eval(j as f64 * h)).collect()
    }
}

trait RemEuclidF {
    fn rem_euclid_f(self) -> f64;
}

impl RemEuclidF for f64 {
    /// Fractional part in [0, 1).
    fn rem_euclid_f(self) -> f64 {
        let r = self - self.floor();
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    }
}

fn check_period(a: &PeriodicField, b: &PeriodicField) -> Result<()> {
    let tol = 1e-12 * a.period.max(b.period);
    if (a.period - b.period).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "fields `{}` and `{}` have different periods ({} vs {})",
            a.label, b.label, a.period, b.period
        )));
    }
    Ok(())
}

pub fn sample_field(values: &[f64], period: f64) -> Result<PeriodicField> {
    PeriodicField::new(values.to_vec(), period)
}

pub fn mean_arithmetic(f: &PeriodicField) -> f64 {
    f.mean_arithmetic()
}

pub fn mean_harmonic(f: &PeriodicField) -> Result<f64> {
    f.mean_harmonic()
}

pub fn make_rapid(f: &PeriodicField, eps: f64) -> Result<PeriodicField> {
    f.make_rapid(eps)
}

/// Structural flags of a coupling matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StructureFlags {
    pub cooperative: bool,
    pub fully_coupled: bool,
}

/// A `d × d` matrix of periodic fields sharing one period, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    d: usize,
    entries: Vec<PeriodicField>,
}

impl MatrixField {
    pub fn new(d: usize, entries: Vec<PeriodicField>) -> Result<Self> {
        if d == 0 || entries.len() != d * d {
            return Err(Error::LengthMismatch { expected: d * d, got: entries.len() });
        }
        for e in &entries[1..] {
            check_period(&entries[0], e)?;
        }
        Ok(Self { d, entries })
    }

    /// Constant matrix given row-major.
    pub fn constant(d: usize, values: &[f64], n: usize, period: f64) -> Result<Self> {
        if values.len() != d * d {
            return Err(Error::LengthMismatch { expected: d * d, got: values.len() });
        }
        let entries = values
            .iter()
            .enumerate()
            .map(|(k, &v)| Ok(PeriodicField::constant(v, n, period)?.with_label(format!("a_{}{}", k / d + 1, k % d + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, entries)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn period(&self) -> f64 {
        self.entries[0].period()
    }

    pub fn get(&self, i: usize, j: usize) -> &PeriodicField {
        &self.entries[i * self.d + j]
    }

    pub fn entries(&self) -> &[PeriodicField] {
        &self.entries
    }

    /// Entrywise arithmetic means, row-major.
    pub fn mean(&self) -> Vec<f64> {
        self.entries.iter().map(PeriodicField::mean_arithmetic).collect()
    }

    /// Row-major matrix evaluated at `x`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.entries.iter().map(|e| e.eval(x)).collect()
    }

    pub fn map_entries(&self, f: impl Fn(&PeriodicField) -> Result<PeriodicField>) -> Result<Self> {
        Self::new(self.d, self.entries.iter().map(f).collect::<Result<Vec<_>>>()?)
    }

    /// Relabels species: entry `(i, j)` of the result is entry `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let d = self.d;
        if perm.len() != d {
            return Err(Error::LengthMismatch { expected: d, got: perm.len() });
        }
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(self.get(perm[i], perm[j]).clone());
            }
        }
        Self::new(d, entries)
    }

    /// Cooperativity and full coupling.
    ///
    /// Edge `i → j` exists when `a_ij` has a run of at least `w` consecutive
    /// samples (periodic wrap) that are all `≥ ν`. Full coupling is strong
    /// connectivity of that graph.
    pub fn check_structure(&self, nu: f64, w: usize) -> StructureFlags {
        let d = self.d;
        let mut cooperative = true;
        let mut adj = vec![false; d * d];
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let a = self.get(i, j);
                if a.samples().iter().any(|&v| v < 0.0) {
                    cooperative = false;
                }
                adj[i * d + j] = has_window(a.samples(), nu, w.max(1));
            }
        }
        StructureFlags { cooperative, fully_coupled: strongly_connected(d, &adj) }
    }
}

pub fn check_structure(a: &MatrixField, nu: f64, w: usize) -> StructureFlags {
    a.check_structure(nu, w)
}

fn has_window(s: &[f64], nu: f64, w: usize) -> bool {
    let n = s.len();
    if w > n {
        return false;
    }
    if s.iter().all(|&v| v >= nu) {
        return true;
    }
    // Start counting right after a failing sample so wrap-around runs are seen whole.
    let start = s.iter().position(|&v| v < nu).unwrap_or(0);
    let mut run = 0;
    for k in 1..=n {
        if s[(start + k) % n] >= nu {
            run += 1;
            if run >= w {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Strong connectivity of a directed graph given as a dense adjacency matrix.
pub fn strongly_connected(d: usize, adj: &[bool]) -> bool {
    let reach = |forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                let e = if forward { adj[i * d + j] } else { adj[j * d + i] };
                if e && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Operator form of the spatial part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Form {
    /// `(σ u_x)_x + q u_x`
    Divergence,
    /// `σ u_xx + q u_x`
    NonDivergence,
}

/// Coefficients of the two-species mutation-competition model
/// `u_t = σ_u u_xx + (r_u − κ_u(u+v))u + μ_v v − μ_u u` and its mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationFields {
    pub r_u: PeriodicField,
    pub r_v: PeriodicField,
    pub kappa_u: PeriodicField,
    pub kappa_v: PeriodicField,
    pub mu_u: PeriodicField,
    pub mu_v: PeriodicField,
}

impl MutationFields {
    pub fn constant(r_u: f64, r_v: f64, kappa_u: f64, kappa_v: f64, mu_u: f64, mu_v: f64, n: usize, period: f64) -> Result<Self> {
        let c = |v: f64, l: &str| Ok::<_, Error>(PeriodicField::constant(v, n, period)?.with_label(l));
        Ok(Self {
            r_u: c(r_u, "r_u")?,
            r_v: c(r_v, "r_v")?,
            kappa_u: c(kappa_u, "kappa_u")?,
            kappa_v: c(kappa_v, "kappa_v")?,
            mu_u: c(mu_u, "mu_u")?,
            mu_v: c(mu_v, "mu_v")?,
        })
    }

    fn all(&self) -> [&PeriodicField; 6] {
        [&self.r_u, &self.r_v, &self.kappa_u, &self.kappa_v, &self.mu_u, &self.mu_v]
    }

    pub fn validate(&self) -> Result<()> {
        for f in self.all() {
            check_period(&self.r_u, f)?;
        }
        self.kappa_u.require_positive()?;
        self.kappa_v.require_positive()?;
        self.mu_u.require_positive()?;
        self.mu_v.require_positive()
    }

    /// `Df(x, 0) = [[r_u − μ_u, μ_v], [μ_u, r_v − μ_v]]`.
    pub fn linearization(&self) -> Result<MatrixField> {
        let a11 = self.r_u.zip_with(&self.mu_u, |r, m| r - m)?.with_label("a_11");
        let a22 = self.r_v.zip_with(&self.mu_v, |r, m| r - m)?.with_label("a_22");
        MatrixField::new(2, vec![a11, self.mu_v.clone().with_label("a_12"), self.mu_u.clone().with_label("a_21"), a22])
    }

    pub fn make_rapid(&self, eps: f64) -> Result<Self> {
        Ok(Self {
            r_u: self.r_u.make_rapid(eps)?,
            r_v: self.r_v.make_rapid(eps)?,
            kappa_u: self.kappa_u.make_rapid(eps)?,
            kappa_v: self.kappa_v.make_rapid(eps)?,
            mu_u: self.mu_u.make_rapid(eps)?,
            mu_v: self.mu_v.make_rapid(eps)?,
        })
    }
}

/// Reaction term descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// `f(x, u) = A(x) u`.
    Linear,
    /// `f_i = (A u)_i − κ_i u_i Σ_j u_j`.
    Logistic { kappa: Vec<PeriodicField> },
    /// The two-species mutation-competition model; `A` must be its linearization.
    MutationCompetition(MutationFields),
    /// `f⁻_β = f_base − β u²` componentwise.
    LowerBarrierBeta { base: Box<Nonlinearity>, beta: f64 },
}

impl Nonlinearity {
    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::Linear => "linear",
            Nonlinearity::Logistic { .. } => "logistic",
            Nonlinearity::MutationCompetition(_) => "mutation_competition",
            Nonlinearity::LowerBarrierBeta { .. } => "lower_barrier_beta",
        }
    }

    /// Competition coefficients `κ_i`, if any.
    pub fn kappa(&self) -> Option<Vec<&PeriodicField>> {
        match self {
            Nonlinearity::Linear => None,
            Nonlinearity::Logistic { kappa } => Some(kappa.iter().collect()),
            Nonlinearity::MutationCompetition(m) => Some(vec![&m.kappa_u, &m.kappa_v]),
            Nonlinearity::LowerBarrierBeta { base, .. } => base.kappa(),
        }
    }

    /// Total quadratic self-damping added on top of the base reaction.
    pub fn beta(&self) -> f64 {
        match self {
            Nonlinearity::LowerBarrierBeta { base, beta } => beta + base.beta(),
            _ => 0.0,
        }
    }

    pub fn mutation(&self) -> Option<&MutationFields> {
        match self {
            Nonlinearity::MutationCompetition(m) => Some(m),
            Nonlinearity::LowerBarrierBeta { base, .. } => base.mutation(),
            _ => None,
        }
    }

    fn make_rapid(&self, eps: f64) -> Result<Self> {
        Ok(match self {
            Nonlinearity::Linear => Nonlinearity::Linear,
            Nonlinearity::Logistic { kappa } => Nonlinearity::Logistic {
                kappa: kappa.iter().map(|k| k.make_rapid(eps)).collect::<Result<_>>()?,
            },
            Nonlinearity::MutationCompetition(m) => Nonlinearity::MutationCompetition(m.make_rapid(eps)?),
            Nonlinearity::LowerBarrierBeta { base, beta } => {
                Nonlinearity::LowerBarrierBeta { base: Box::new(base.make_rapid(eps)?), beta: *beta }
            }
        })
    }
}

/// A complete periodic system `u_t = L u + f(x, u)` on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub sigma: Vec<PeriodicField>,
    pub q: Vec<PeriodicField>,
    pub a: MatrixField,
    pub form: Form,
    pub nonlinearity: Nonlinearity,
}

impl SystemSpec {
    pub fn new(sigma: Vec<PeriodicField>, q: Vec<PeriodicField>, a: MatrixField, form: Form, nonlinearity: Nonlinearity) -> Result<Self> {
        let spec = Self { sigma, q, a, form, nonlinearity };
        spec.validate()?;
        Ok(spec)
    }

    /// Scalar equation with constant coefficients `σ u_xx + q u_x + r u (− κ u²)`.
    pub fn constant_scalar(sigma: f64, q: f64, r: f64, kappa: Option<f64>, n: usize) -> Result<Self> {
        let nl = match kappa {
            Some(k) => Nonlinearity::Logistic { kappa: vec![PeriodicField::constant(k, n, 1.0)?.with_label("kappa_1")] },
            None => Nonlinearity::Linear,
        };
        Self::new(
            vec![PeriodicField::constant(sigma, n, 1.0)?.with_label("sigma_1")],
            vec![PeriodicField::constant(q, n, 1.0)?.with_label("q_1")],
            MatrixField::constant(1, &[r], n, 1.0)?,
            Form::NonDivergence,
            nl,
        )
    }

    /// Linear system with constant diffusivities, no drift and constant `A`.
    pub fn constant_linear(sigma: &[f64], a: &[f64], n: usize) -> Result<Self> {
        let d = sigma.len();
        Self::new(
            sigma.iter().map(|&s| PeriodicField::constant(s, n, 1.0)).collect::<Result<_>>()?,
            (0..d).map(|_| PeriodicField::constant(0.0, n, 1.0)).collect::<Result<_>>()?,
            MatrixField::constant(d, a, n, 1.0)?,
            Form::NonDivergence,
            Nonlinearity::Linear,
        )
    }

    /// The mutation-competition model with `A` derived from the fields.
    pub fn mutation_competition(sigma_u: PeriodicField, sigma_v: PeriodicField, fields: MutationFields, form: Form) -> Result<Self> {
        let n = sigma_u.len();
        let period = sigma_u.period();
        let a = fields.linearization()?;
        Self::new(
            vec![sigma_u, sigma_v],
            vec![PeriodicField::constant(0.0, n, period)?.with_label("q_1"), PeriodicField::constant(0.0, n, period)?.with_label("q_2")],
            a,
            form,
            Nonlinearity::MutationCompetition(fields),
        )
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn period(&self) -> f64 {
        self.sigma[0].period()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.sigma.len();
        if d == 0 {
            return Err(Error::InvalidInput("a system needs at least one species".to_string()));
        }
        if self.q.len() != d {
            return Err(Error::LengthMismatch { expected: d, got: self.q.len() });
        }
        if self.a.dim() != d {
            return Err(Error::LengthMismatch { expected: d, got: self.a.dim() });
        }
        let base = &self.sigma[0];
        for f in self.sigma.iter().chain(&self.q).chain(self.a.entries()) {
            check_period(base, f)?;
        }
        for s in &self.sigma {
            s.require_positive()?;
        }
        self.validate_nonlinearity(&self.nonlinearity)
    }

    fn validate_nonlinearity(&self, nl: &Nonlinearity) -> Result<()> {
        let d = self.dim();
        match nl {
            Nonlinearity::Linear => Ok(()),
            Nonlinearity::Logistic { kappa } => {
                if kappa.len() != d {
                    return Err(Error::LengthMismatch { expected: d, got: kappa.len() });
                }
                for k in kappa {
                    check_period(&self.sigma[0], k)?;
                    if k.min() < 0.0 {
                        return Err(Error::InvalidInput(format!("competition coefficient `{}` is negative", k.label())));
                    }
                }
                Ok(())
            }
            Nonlinearity::MutationCompetition(m) => {
                if d != 2 {
                    return Err(Error::InvalidInput(format!("mutation_competition needs d = 2, got {d}")));
                }
                m.validate()?;
                check_period(&self.sigma[0], &m.r_u)?;
                let lin = m.linearization()?;
                for (k, (x, y)) in lin.entries().iter().zip(self.a.entries()).enumerate() {
                    let scale = 1.0 + x.max().abs().max(x.min().abs());
                    let dev = x.samples().iter().enumerate().map(|(j, &v)| (v - y.eval(x.node(j))).abs()).fold(0.0, f64::max);
                    if dev > 1e-12 * scale {
                        return Err(Error::InvalidInput(format!(
                            "entry ({}, {}) of A does not match the mutation-competition linearization",
                            k / 2 + 1,
                            k % 2 + 1
                        )));
                    }
                }
                Ok(())
            }
            Nonlinearity::LowerBarrierBeta { base, beta } => {
                if !(*beta >= 0.0) {
                    return Err(Error::InvalidInput(format!("beta must be nonnegative, got {beta}")));
                }
                self.validate_nonlinearity(base)
            }
        }
    }

    /// The same system with every coefficient oscillating `1/ε` times faster.
    pub fn make_rapid(&self, eps: f64) -> Result<Self> {
        Ok(Self {
            sigma: self.sigma.iter().map(|f| f.make_rapid(eps)).collect::<Result<_>>()?,
            q: self.q.iter().map(|f| f.make_rapid(eps)).collect::<Result<_>>()?,
            a: self.a.map_entries(|f| f.make_rapid(eps))?,
            form: self.form,
            nonlinearity: self.nonlinearity.make_rapid(eps)?,
        })
    }

    /// Structural flags of `A` with the default window (`ν = 1e-8`, `w = 2`).
    pub fn structure(&self) -> StructureFlags {
        self.a.check_structure(1e-8, 2)
    }

    /// True when `q ≡ 0` and all of `σ`, `A` are even about 0 (to `tol`).
    pub fn is_even(&self, tol: f64) -> bool {
        let even = |f: &PeriodicField| {
            let n = f.len();
            (0..n).all(|j| (f.samples()[j] - f.samples()[(n - j) % n]).abs() <= tol)
        };
        self.q.iter().all(|q| q.max().abs() <= tol && q.min().abs() <= tol)
            && self.sigma.iter().all(even)
            && self.a.entries().iter().all(even)
    }

    /// True when `q ≡ 0`, the form is divergence and `A` is symmetric (to `tol`).
    pub fn is_divergence_symmetric(&self, tol: f64) -> bool {
        let d = self.dim();
        self.form == Form::Divergence
            && self.q.iter().all(|q| q.max().abs() <= tol && q.min().abs() <= tol)
            && (0..d).all(|i| {
                (0..d).all(|j| {
                    let (x, y) = (self.a.get(i, j), self.a.get(j, i));
                    x.samples().iter().zip(y.samples()).all(|(a, b)| (a - b).abs() <= tol)
                })
            })
    }
}
