//! Coefficients of the quadratic invariant
//!
//! ```text
//! I(t) = ½[α p² + γ x + δ {x, p} + ε x²]
//! ```
//!
//! for H = p²/(2m) + ½mω²x² + xE. They are produced two ways: by integrating
//! the linear conditions
//!
//! ```text
//! α̇ = −2δ/m,  δ̇ = αmω² − ε/m,  ε̇ = 2δmω²,  γ̇ = 2δE
//! ```
//!
//! directly, and by substituting a solution σ of the modified EP equation
//! into α = σ², δ = −mσ̇σ, ε = m²σ̇² + τm²/σ², γ = 2mαE. The field follows
//! from E = (1/m)·exp(∫Q dt) with Q = 3δ/(αm), the integral taken from t0.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::csv::{write_columns, CsvError};
use crate::ep_solver::{SigmaTrajectory, TrajectoryMeta};
use crate::error::{invalid, Error, Result};
use crate::ode::{self, State};
use crate::profiles::{MassProfile, ScenarioConfig, SolverKind, TauFunction, TimeGrid};
use crate::stencil;

/// Values (or time derivatives) of the four invariant coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub alpha: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

/// Initial values for [`integrate_coefficient_system`].
pub type CoefficientInit = Coefficients;

impl Coefficients {
    /// σ-consistent values at `t`: α = σ², δ = −mσ̇σ, ε = m²σ̇² + τm²/σ², γ = 2mαE.
    pub fn from_sigma(
        mass: &MassProfile,
        tau: &TauFunction,
        t: f64,
        sigma: f64,
        sigma_dot: f64,
        efield: f64,
    ) -> Result<Self> {
        let m = mass.mass_at(t)?;
        let tau_v = tau.tau_at(sigma)?;
        let alpha = sigma * sigma;
        Ok(Self {
            alpha,
            delta: -m * sigma_dot * sigma,
            epsilon: m * m * sigma_dot * sigma_dot + tau_v * m * m / alpha,
            gamma: 2.0 * m * alpha * efield,
        })
    }

    /// Right-hand side of the linear coefficient conditions.
    pub fn rates(&self, m: f64, omega_sq: f64, efield: f64) -> Self {
        Self {
            alpha: -2.0 * self.delta / m,
            delta: self.alpha * m * omega_sq - self.epsilon / m,
            epsilon: 2.0 * self.delta * m * omega_sq,
            gamma: 2.0 * self.delta * efield,
        }
    }

    /// αε − δ², conserved along solutions of the α, δ, ε conditions.
    pub fn determinant(&self) -> f64 {
        self.alpha * self.epsilon - self.delta * self.delta
    }
}

/// Invariant coefficients and the electric field sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientTrajectory {
    pub t: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub gamma: Vec<f64>,
    pub efield: Vec<f64>,
}

/// Column-wise relative disagreement between two coefficient trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteGap {
    pub alpha: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub efield: f64,
}

impl RouteGap {
    pub fn max(&self) -> f64 {
        [
            self.alpha,
            self.delta,
            self.epsilon,
            self.gamma,
            self.efield,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// max_j |a_j − b_j| / |b_j|, with |b_j| floored at 1e−12 of the column's
/// largest magnitude so identically-zero columns compare absolutely.
pub fn max_relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = (1e-12 * scale).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Gap in δ measured against max(|δ|, √|αε|) of the reference, since δ can
/// vanish identically while α and ε do not.
fn delta_gap(delta: &[f64], reference: &CoefficientTrajectory) -> f64 {
    (0..delta.len())
        .map(|j| {
            let d = reference.delta[j];
            let scale = d
                .abs()
                .max((reference.alpha[j] * reference.epsilon[j]).abs().sqrt());
            (delta[j] - d).abs() / scale.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

impl CoefficientTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn at(&self, j: usize) -> Coefficients {
        Coefficients {
            alpha: self.alpha[j],
            delta: self.delta[j],
            epsilon: self.epsilon[j],
            gamma: self.gamma[j],
        }
    }

    /// Index of the sample at time `t` (to within 1e−9 of the spacing scale).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let j = self.t.partition_point(|&s| s < t);
        let scale = 1e-9 * self.t.last().map_or(1.0, |v| v.abs().max(1.0));
        [j.wrapping_sub(1), j]
            .into_iter()
            .filter(|&k| k < self.t.len())
            .find(|&k| (self.t[k] - t).abs() <= scale)
            .ok_or_else(|| Error::InsufficientData(format!("no coefficient sample at t = {t}")))
    }

    /// Time derivatives of the coefficients at sample `j` by 5-point
    /// differences along the (uniform) trajectory.
    pub fn rates_at(&self, j: usize) -> Result<Coefficients> {
        if self.len() < 5 {
            return Err(Error::InsufficientData(
                "coefficient rates need at least 5 samples".into(),
            ));
        }
        let h = stencil::uniform_spacing(&self.t)?;
        Ok(Coefficients {
            alpha: stencil::first_derivative(&self.alpha, j, h),
            delta: stencil::first_derivative(&self.delta, j, h),
            epsilon: stencil::first_derivative(&self.epsilon, j, h),
            gamma: stencil::first_derivative(&self.gamma, j, h),
        })
    }

    /// max_j |γ − 2mαE|.
    pub fn closure_gap(&self, mass: &MassProfile) -> Result<f64> {
        let mut gap = 0.0_f64;
        for j in 0..self.len() {
            let m = mass.mass_at(self.t[j])?;
            gap = gap.max((self.gamma[j] - 2.0 * m * self.alpha[j] * self.efield[j]).abs());
        }
        Ok(gap)
    }

    pub fn route_gap(&self, reference: &Self) -> Result<RouteGap> {
        if self.len() != reference.len() {
            return Err(Error::LengthMismatch(format!(
                "{} vs {} samples",
                self.len(),
                reference.len()
            )));
        }
        Ok(RouteGap {
            alpha: max_relative_gap(&self.alpha, &reference.alpha),
            delta: delta_gap(&self.delta, reference),
            epsilon: max_relative_gap(&self.epsilon, &reference.epsilon),
            gamma: max_relative_gap(&self.gamma, &reference.gamma),
            efield: max_relative_gap(&self.efield, &reference.efield),
        })
    }

    /// CSV with header `t,alpha,delta,epsilon,gamma,E`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CsvError> {
        write_columns(
            w,
            &["t", "alpha", "delta", "epsilon", "gamma", "E"],
            &[
                &self.t,
                &self.alpha,
                &self.delta,
                &self.epsilon,
                &self.gamma,
                &self.efield,
            ],
        )
    }
}

/// Where the electric field E(t) comes from.
#[derive(Clone, Copy)]
pub enum Field<'a> {
    /// E = (1/m)·exp(∫Q dt) from the invariant's own α and δ, zero exponent at t0.
    Derived,
    /// Samples aligned with the trajectory (σ route only).
    Samples(&'a [f64]),
    /// An explicit function of time.
    Function(&'a dyn Fn(f64) -> f64),
}

/// Substitutes a σ trajectory into α = σ², δ = −mσ̇σ, ε = m²σ̇² + τm²/σ²,
/// γ = 2σ²mE.
pub fn coefficients_from_sigma(
    traj: &SigmaTrajectory,
    mass: &MassProfile,
    tau: &TauFunction,
    field: Field<'_>,
) -> Result<CoefficientTrajectory> {
    let n = traj.len();
    let (t, sigma, sigma_dot) = (traj.t(), traj.sigma(), traj.sigma_dot());
    let mut out = CoefficientTrajectory {
        t: t.to_vec(),
        ..Default::default()
    };
    let mut masses = Vec::with_capacity(n);
    for j in 0..n {
        if !(sigma[j] > 0.0) {
            return Err(Error::NonPositive {
                what: "sigma",
                value: sigma[j],
                t: t[j],
            });
        }
        let m = mass.mass_at(t[j])?;
        masses.push(m);
        let s2 = sigma[j] * sigma[j];
        out.alpha.push(s2);
        out.delta.push(-m * sigma_dot[j] * sigma[j]);
        out.epsilon
            .push(m * m * sigma_dot[j] * sigma_dot[j] + tau.tau_at(sigma[j])? * m * m / s2);
    }
    out.efield = match field {
        Field::Derived => electric_field(mass, t, &out.alpha, &out.delta)?,
        Field::Samples(e) => {
            if e.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "{} field samples for {n} trajectory samples",
                    e.len()
                )));
            }
            e.to_vec()
        }
        Field::Function(f) => t.iter().map(|&s| f(s)).collect(),
    };
    out.gamma = (0..n)
        .map(|j| 2.0 * out.alpha[j] * masses[j] * out.efield[j])
        .collect();
    Ok(out)
}

/// Integrates the four linear coefficient conditions from `init`.
///
/// With [`Field::Derived`] the exponent ∫Q dt is carried as a fifth state so
/// E(t) = e^S/m(t) stays consistent with the integrated α and δ.
pub fn integrate_coefficient_system(
    mass: &MassProfile,
    omega: f64,
    field: Field<'_>,
    init: Coefficients,
    grid: &TimeGrid,
    solver: SolverKind,
) -> Result<(CoefficientTrajectory, TrajectoryMeta)> {
    if !(omega > 0.0) {
        return Err(invalid("omega", "must be > 0"));
    }
    if matches!(field, Field::Samples(_)) {
        return Err(invalid(
            "field",
            "sampled fields cannot be evaluated between samples; use Field::Function",
        ));
    }
    mass.check_interval(grid.t0, grid.t1)?;
    let omega_sq = omega * omega;
    let field_at = |t: f64, s: f64| -> Result<f64> {
        match field {
            Field::Function(f) => Ok(f(t)),
            _ => Ok(s.exp() / mass.mass_at(t)?),
        }
    };
    let derived = matches!(field, Field::Derived);
    let rhs = |t: f64, y: &State<5>| {
        let m = mass.mass_at(t)?;
        let c = Coefficients {
            alpha: y[0],
            delta: y[1],
            epsilon: y[2],
            gamma: y[3],
        };
        let r = c.rates(m, omega_sq, field_at(t, y[4])?);
        let q = if derived {
            if c.alpha == 0.0 {
                return Err(Error::Degenerate("α vanished; ∫Q dt is singular".into()));
            }
            3.0 * c.delta / (c.alpha * m)
        } else {
            0.0
        };
        Ok([r.alpha, r.delta, r.epsilon, r.gamma, q])
    };
    let guard = |_t: f64, _y: &State<5>, t_new: f64, y_new: &State<5>| {
        if y_new.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Degenerate(format!(
                "non-finite coefficient at t = {t_new}"
            )))
        }
    };
    let y0 = [init.alpha, init.delta, init.epsilon, init.gamma, 0.0];
    let (sol, meta) = ode::integrate_on_grid(rhs, guard, y0, grid, solver)?;
    let mut out = CoefficientTrajectory {
        t: sol.t.clone(),
        ..Default::default()
    };
    for (t, y) in sol.t.iter().zip(&sol.y) {
        out.alpha.push(y[0]);
        out.delta.push(y[1]);
        out.epsilon.push(y[2]);
        out.gamma.push(y[3]);
        out.efield.push(field_at(*t, y[4])?);
    }
    Ok((out, meta))
}

/// Quadrature rule for the cumulative ∫Q dt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Trapezoid,
    /// Composite Simpson over sample pairs; odd samples use the partial
    /// integral of the same parabola.
    Simpson,
}

/// Cumulative integral of samples `f` over `t`, starting at zero.
pub fn cumulative_integral(t: &[f64], f: &[f64], rule: Quadrature) -> Result<Vec<f64>> {
    if t.len() != f.len() {
        return Err(Error::LengthMismatch(format!(
            "{} abscissae vs {} values",
            t.len(),
            f.len()
        )));
    }
    if let Some(index) = t.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotoneGrid { index: index + 1 });
    }
    let n = t.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return Ok(out);
    }
    match rule {
        Quadrature::Trapezoid => {
            for j in 1..n {
                out[j] = out[j - 1] + 0.5 * (t[j] - t[j - 1]) * (f[j] + f[j - 1]);
            }
        }
        Quadrature::Simpson => {
            if n == 2 {
                out[1] = 0.5 * (t[1] - t[0]) * (f[0] + f[1]);
                return Ok(out);
            }
            let mut j = 0;
            while j + 2 < n {
                let (first, whole) = parabola_integrals(&t[j..j + 3], &f[j..j + 3]);
                out[j + 1] = out[j] + first;
                out[j + 2] = out[j] + whole;
                j += 2;
            }
            if j + 1 < n {
                // One trailing interval: integrate the parabola through the last three samples.
                let k = n - 3;
                let (first, whole) = parabola_integrals(&t[k..], &f[k..]);
                out[n - 1] = out[n - 2] + (whole - first);
            }
        }
    }
    Ok(out)
}

/// Integrals of the parabola through three points over [t0, t1] and [t0, t2].
fn parabola_integrals(t: &[f64], f: &[f64]) -> (f64, f64) {
    let h0 = t[1] - t[0];
    let h1 = t[2] - t[1];
    // Newton form p(s) = f0 + d1·s + d2·s·(s − h0), s = t − t0.
    let d1 = (f[1] - f[0]) / h0;
    let d2 = ((f[2] - f[1]) / h1 - d1) / (h0 + h1);
    let integral = |s: f64| f[0] * s + d1 * s * s / 2.0 + d2 * (s * s * s / 3.0 - h0 * s * s / 2.0);
    (integral(h0), integral(h0 + h1))
}

/// E(t) = (1/m)·exp(∫_{t0}^{t} 3δ/(αm) dt) with composite Simpson quadrature.
pub fn electric_field(
    mass: &MassProfile,
    t: &[f64],
    alpha: &[f64],
    delta: &[f64],
) -> Result<Vec<f64>> {
    electric_field_with(mass, t, alpha, delta, Quadrature::Simpson)
}

pub fn electric_field_with(
    mass: &MassProfile,
    t: &[f64],
    alpha: &[f64],
    delta: &[f64],
    rule: Quadrature,
) -> Result<Vec<f64>> {
    if alpha.len() != t.len() || delta.len() != t.len() {
        return Err(Error::LengthMismatch("α, δ and t must align".into()));
    }
    let mut masses = Vec::with_capacity(t.len());
    let mut q = Vec::with_capacity(t.len());
    for j in 0..t.len() {
        let m = mass.mass_at(t[j])?;
        if !(alpha[j] > 0.0) {
            return Err(Error::NonPositive {
                what: "alpha",
                value: alpha[j],
                t: t[j],
            });
        }
        masses.push(m);
        q.push(3.0 * delta[j] / (alpha[j] * m));
    }
    let exponent = cumulative_integral(t, &q, rule)?;
    Ok(exponent
        .iter()
        .zip(&masses)
        .map(|(s, m)| s.exp() / m)
        .collect())
}

/// Outcome of checking τ′ + 2(ṁ/(mσ̇))τ = 0 along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauResidual {
    pub max_residual: f64,
    /// Largest residual divided by |τ′| + |2ṁτ/(mσ̇)| at the same sample.
    pub max_relative: f64,
    pub evaluated: usize,
    /// Samples with |σ̇| < [`MIN_SIGMA_DOT`], where the equation is singular.
    pub skipped: usize,
}

pub const MIN_SIGMA_DOT: f64 = 1e-8;

pub fn tau_ode_residual(
    tau: &TauFunction,
    traj: &SigmaTrajectory,
    mass: &MassProfile,
) -> Result<TauResidual> {
    let mut out = TauResidual {
        max_residual: 0.0,
        max_relative: 0.0,
        evaluated: 0,
        skipped: 0,
    };
    for j in 0..traj.len() {
        let (t, s, sd) = (traj.t()[j], traj.sigma()[j], traj.sigma_dot()[j]);
        if sd.abs() < MIN_SIGMA_DOT {
            out.skipped += 1;
            continue;
        }
        let (lhs, rhs) = (
            tau.tau_prime_at(s)?,
            2.0 * mass.log_rate_at(t)? / sd * tau.tau_at(s)?,
        );
        let r = (lhs + rhs).abs();
        let scale = lhs.abs() + rhs.abs();
        out.max_residual = out.max_residual.max(r);
        out.max_relative = out
            .max_relative
            .max(if scale > 0.0 { r / scale } else { r });
        out.evaluated += 1;
    }
    if out.evaluated == 0 {
        return Err(Error::Degenerate(format!(
            "all {} samples have |σ̇| < {MIN_SIGMA_DOT:e}",
            out.skipped
        )));
    }
    Ok(out)
}

/// Decay rate q = 2·sqrt(ω² − τ0) making σ = e^(qt/2) solve the modified EP
/// equation with m = m0·e^(−qt) and τ = τ0σ⁴.
///
/// Differences ω² − τ0 within a few ulps of zero are treated as exactly zero,
/// so e.g. ω = 0.1, τ0 = 0.01 yields q = 0.
pub fn decay_rate(omega: f64, tau0: f64) -> Result<f64> {
    if !(omega > 0.0) || !tau0.is_finite() {
        return Err(invalid("omega", "need ω > 0 and finite τ0"));
    }
    let omega_sq = omega * omega;
    let diff = omega_sq - tau0;
    if diff.abs() <= 4.0 * f64::EPSILON * omega_sq.max(tau0.abs()) {
        return Ok(0.0);
    }
    if diff < 0.0 {
        return Err(Error::Constraint(format!(
            "τ0 = ω² − q²/4 needs ω² ≥ τ0, but ω² = {omega_sq} < τ0 = {tau0}"
        )));
    }
    Ok(2.0 * diff.sqrt())
}

/// τ0 = ω² − q²/4. Depends on q only through q².
pub fn tau0_from_decay(omega: f64, q: f64) -> f64 {
    omega * omega - q * q / 4.0
}

/// Closed-form exponential-mass solution: m = m0·e^(−qt), σ = e^(qt/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialScenario {
    pub m0: f64,
    pub omega: f64,
    pub tau0: f64,
    pub q: f64,
}

pub fn exponential_scenario(m0: f64, omega: f64, tau0: f64) -> Result<ExponentialScenario> {
    if !(m0 > 0.0 && m0.is_finite()) {
        return Err(invalid("m0", format!("must be > 0, got {m0}")));
    }
    Ok(ExponentialScenario {
        m0,
        omega,
        tau0,
        q: decay_rate(omega, tau0)?,
    })
}

impl ExponentialScenario {
    pub fn mass_profile(&self) -> MassProfile {
        MassProfile::Exponential {
            m0: self.m0,
            q: self.q,
        }
    }

    pub fn tau_function(&self) -> TauFunction {
        TauFunction::Monomial { tau0: self.tau0 }
    }

    /// Scenario config with σ(t0) = e^(q·t0/2), σ̇(t0) = (q/2)·σ(t0).
    pub fn config(&self, grid: TimeGrid, solver: SolverKind) -> Result<ScenarioConfig> {
        ScenarioConfig::new(
            self.mass_profile(),
            self.omega,
            self.tau_function(),
            self.sigma(grid.t0),
            self.sigma_dot(grid.t0),
            grid,
            solver,
        )
    }

    pub fn mass(&self, t: f64) -> f64 {
        self.m0 * (-self.q * t).exp()
    }

    pub fn sigma(&self, t: f64) -> f64 {
        (0.5 * self.q * t).exp()
    }

    pub fn sigma_dot(&self, t: f64) -> f64 {
        0.5 * self.q * self.sigma(t)
    }

    /// E(t) = (1/m0)·e^(−qt/2).
    pub fn efield(&self, t: f64) -> f64 {
        (-0.5 * self.q * t).exp() / self.m0
    }

    pub fn coefficients(&self, t: f64) -> Coefficients {
        Coefficients {
            alpha: (self.q * t).exp(),
            delta: -0.5 * self.m0 * self.q,
            epsilon: self.m0 * self.m0 * self.omega * self.omega * (-self.q * t).exp(),
            gamma: 2.0 * (-0.5 * self.q * t).exp(),
        }
    }

    /// Analytic time derivatives of [`Self::coefficients`].
    pub fn coefficient_rates(&self, t: f64) -> Coefficients {
        let c = self.coefficients(t);
        Coefficients {
            alpha: self.q * c.alpha,
            delta: 0.0,
            epsilon: -self.q * c.epsilon,
            gamma: -0.5 * self.q * c.gamma,
        }
    }

    /// Samples the closed forms at the given times.
    pub fn trajectory(&self, times: &[f64]) -> CoefficientTrajectory {
        let mut out = CoefficientTrajectory {
            t: times.to_vec(),
            ..Default::default()
        };
        for &t in times {
            let c = self.coefficients(t);
            out.alpha.push(c.alpha);
            out.delta.push(c.delta);
            out.epsilon.push(c.epsilon);
            out.gamma.push(c.gamma);
            out.efield.push(self.efield(t));
        }
        out
    }
}
