//! Mass profiles, τ(σ) functions, time grids and scenario configuration.
//!
//! Everything here is immutable after construction and uses natural units
//! (ℏ = c = 1), so masses, rates and frequencies are dimensionless scales.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interp::CubicSpline;
use crate::invariant::CoefficientInit;
use crate::tdse::EvolutionSettings;

/// Time-dependent mass m(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MassSpec", into = "MassSpec")]
pub enum MassProfile {
    Constant {
        m0: f64,
    },
    /// m(t) = m0·e^(−qt). Either sign of `q` is accepted.
    Exponential {
        m0: f64,
        q: f64,
    },
    /// Natural cubic spline through `(t, m)` samples; no extrapolation.
    Tabulated(CubicSpline),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum MassSpec {
    Constant { m0: f64 },
    Exponential { m0: f64, q: f64 },
    Tabulated { table: Vec<[f64; 2]> },
}

impl TryFrom<MassSpec> for MassProfile {
    type Error = Error;

    fn try_from(spec: MassSpec) -> Result<Self> {
        match spec {
            MassSpec::Constant { m0 } => Self::constant(m0),
            MassSpec::Exponential { m0, q } => Self::exponential(m0, q),
            MassSpec::Tabulated { table } => {
                Self::tabulated(table.into_iter().map(|[t, m]| (t, m)).collect())
            }
        }
    }
}

impl From<MassProfile> for MassSpec {
    fn from(profile: MassProfile) -> Self {
        match profile {
            MassProfile::Constant { m0 } => MassSpec::Constant { m0 },
            MassProfile::Exponential { m0, q } => MassSpec::Exponential { m0, q },
            MassProfile::Tabulated(spline) => MassSpec::Tabulated {
                table: spline
                    .knots()
                    .iter()
                    .zip(spline.values())
                    .map(|(&t, &m)| [t, m])
                    .collect(),
            },
        }
    }
}

fn positive_finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

impl MassProfile {
    pub fn constant(m0: f64) -> Result<Self> {
        Ok(Self::Constant {
            m0: positive_finite("m0", m0)?,
        })
    }

    pub fn exponential(m0: f64, q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(invalid("q", format!("must be finite, got {q}")));
        }
        Ok(Self::Exponential {
            m0: positive_finite("m0", m0)?,
            q,
        })
    }

    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(t, m)) = samples.iter().find(|(_, m)| !(*m > 0.0)) {
            return Err(Error::NonPositive {
                what: "tabulated mass",
                value: m,
                t,
            });
        }
        let (knots, values) = samples.into_iter().unzip();
        Ok(Self::Tabulated(CubicSpline::new(knots, values)?))
    }

    /// Closed interval on which the profile is defined; `None` means all of ℝ.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Self::Tabulated(s) => Some(s.domain()),
            _ => None,
        }
    }

    /// Fails unless `[t0, t1]` lies inside the profile's domain.
    pub fn check_interval(&self, t0: f64, t1: f64) -> Result<()> {
        if let Some((lo, hi)) = self.domain() {
            for t in [t0, t1] {
                if !(lo..=hi).contains(&t) {
                    return Err(Error::OutOfDomain { t, lo, hi });
                }
            }
        }
        Ok(())
    }

    pub fn mass_at(&self, t: f64) -> Result<f64> {
        let m = match self {
            Self::Constant { m0 } => *m0,
            Self::Exponential { m0, q } => m0 * (-q * t).exp(),
            Self::Tabulated(s) => s.value(t)?,
        };
        if m > 0.0 && m.is_finite() {
            Ok(m)
        } else {
            Err(Error::NonPositive {
                what: "mass",
                value: m,
                t,
            })
        }
    }

    pub fn mass_rate_at(&self, t: f64) -> Result<f64> {
        match self {
            Self::Constant { .. } => Ok(0.0),
            Self::Exponential { q, .. } => Ok(-q * self.mass_at(t)?),
            Self::Tabulated(s) => {
                self.mass_at(t)?;
                s.derivative(t)
            }
        }
    }

    /// Logarithmic rate ṁ/m, the damping coefficient of the modified EP equation.
    pub fn log_rate_at(&self, t: f64) -> Result<f64> {
        match self {
            Self::Constant { .. } => Ok(0.0),
            Self::Exponential { q, .. } => Ok(-q),
            Self::Tabulated(_) => Ok(self.mass_rate_at(t)? / self.mass_at(t)?),
        }
    }
}

/// The function τ(σ) closing the σ-parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TauSpec", into = "TauSpec")]
pub enum TauFunction {
    /// τ(σ) = λ², λ > 0.
    Constant { lambda_sq: f64 },
    /// τ(σ) = τ0·σ⁴.
    Monomial { tau0: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TauSpec {
    kind: TauKind,
    value: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TauKind {
    Constant,
    Monomial,
}

impl TryFrom<TauSpec> for TauFunction {
    type Error = Error;

    fn try_from(spec: TauSpec) -> Result<Self> {
        match spec.kind {
            TauKind::Constant => Self::constant(spec.value),
            TauKind::Monomial => Self::monomial(spec.value),
        }
    }
}

impl From<TauFunction> for TauSpec {
    fn from(tau: TauFunction) -> Self {
        match tau {
            TauFunction::Constant { lambda_sq } => TauSpec {
                kind: TauKind::Constant,
                value: lambda_sq,
            },
            TauFunction::Monomial { tau0 } => TauSpec {
                kind: TauKind::Monomial,
                value: tau0,
            },
        }
    }
}

impl TauFunction {
    pub fn constant(lambda_sq: f64) -> Result<Self> {
        Ok(Self::Constant {
            lambda_sq: positive_finite("tau.value", lambda_sq)?,
        })
    }

    pub fn monomial(tau0: f64) -> Result<Self> {
        if !tau0.is_finite() {
            return Err(invalid("tau.value", format!("must be finite, got {tau0}")));
        }
        Ok(Self::Monomial { tau0 })
    }

    pub fn tau_at(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        Ok(self.eval(sigma))
    }

    /// dτ/dσ.
    pub fn tau_prime_at(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        Ok(match *self {
            Self::Constant { .. } => 0.0,
            Self::Monomial { tau0 } => 4.0 * tau0 * sigma.powi(3),
        })
    }

    /// τ(σ)/σ³, the inverse-cube force term. For the monomial kind this is
    /// evaluated as τ0·σ so that it stays smooth through small σ.
    pub(crate) fn force(&self, sigma: f64) -> f64 {
        match *self {
            Self::Constant { lambda_sq } => lambda_sq / (sigma * sigma * sigma),
            Self::Monomial { tau0 } => tau0 * sigma,
        }
    }

    pub(crate) fn eval(&self, sigma: f64) -> f64 {
        match *self {
            Self::Constant { lambda_sq } => lambda_sq,
            Self::Monomial { tau0 } => tau0 * sigma.powi(4),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(invalid("sigma", format!("must be > 0, got {sigma}")))
    }
}

/// Integration window plus either a fixed step or adaptive tolerances.
///
/// `dt` doubles as the output spacing for the adaptive solver; without it the
/// adaptive solver reports its own accepted steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

impl TimeGrid {
    pub fn fixed(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        let g = Self {
            t0,
            t1,
            dt: Some(dt),
            abs_tol: None,
            rel_tol: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn adaptive(t0: f64, t1: f64, abs_tol: f64, rel_tol: f64) -> Result<Self> {
        let g = Self {
            t0,
            t1,
            dt: None,
            abs_tol: Some(abs_tol),
            rel_tol: Some(rel_tol),
        };
        g.validate()?;
        Ok(g)
    }

    /// Adds a uniform output spacing to the grid.
    pub fn with_output_step(mut self, dt: f64) -> Result<Self> {
        self.dt = Some(dt);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite()) {
            return Err(invalid("grid", "t0 and t1 must be finite"));
        }
        if self.t1 <= self.t0 {
            return Err(invalid("grid.t1", format!("must exceed t0 = {}", self.t0)));
        }
        for (name, v) in [
            ("grid.dt", self.dt),
            ("grid.abs_tol", self.abs_tol),
            ("grid.rel_tol", self.rel_tol),
        ] {
            if let Some(v) = v {
                positive_finite(name, v)?;
            }
        }
        if self.dt.is_none() && (self.abs_tol.is_none() || self.rel_tol.is_none()) {
            return Err(invalid(
                "grid",
                "needs `dt` or both `abs_tol` and `rel_tol`",
            ));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Uniform sample times `t0 + k·dt`, with the final sample pinned to `t1`.
    pub fn uniform_times(&self) -> Option<Vec<f64>> {
        let dt = self.dt?;
        let ratio = self.span() / dt;
        let mut steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            steps = ratio.ceil();
        }
        let steps = (steps as usize).max(1);
        let mut times: Vec<f64> = (0..steps).map(|k| self.t0 + k as f64 * dt).collect();
        times.push(self.t1);
        Some(times)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Rk4Fixed,
    Rk45Adaptive,
}

/// Complete description of one modified Ermakov–Pinney run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mass: MassProfile,
    pub omega: f64,
    pub tau: TauFunction,
    pub sigma0: f64,
    pub sigma_dot0: f64,
    pub grid: TimeGrid,
    pub solver: SolverKind,
    /// Explicit invariant-coefficient initial values; σ-consistent when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff_init: Option<CoefficientInit>,
    /// Spatial grid and evolution block consumed by the quantum verification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tdse: Option<EvolutionSettings>,
}

impl ScenarioConfig {
    pub fn new(
        mass: MassProfile,
        omega: f64,
        tau: TauFunction,
        sigma0: f64,
        sigma_dot0: f64,
        grid: TimeGrid,
        solver: SolverKind,
    ) -> Result<Self> {
        let cfg = Self {
            mass,
            omega,
            tau,
            sigma0,
            sigma_dot0,
            grid,
            solver,
            coeff_init: None,
            tdse: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        positive_finite("omega", self.omega)?;
        positive_finite("sigma0", self.sigma0)?;
        if !self.sigma_dot0.is_finite() {
            return Err(invalid("sigma_dot0", "must be finite"));
        }
        self.grid.validate()?;
        match self.solver {
            SolverKind::Rk4Fixed if self.grid.dt.is_none() => {
                return Err(invalid("grid.dt", "required by rk4_fixed"));
            }
            SolverKind::Rk45Adaptive
                if self.grid.abs_tol.is_none() || self.grid.rel_tol.is_none() =>
            {
                return Err(invalid("grid", "rk45_adaptive needs abs_tol and rel_tol"));
            }
            _ => {}
        }
        self.mass.check_interval(self.grid.t0, self.grid.t1)?;
        self.mass.mass_at(self.grid.t0)?;
        self.mass.mass_at(self.grid.t1)?;
        if let Some(tdse) = &self.tdse {
            tdse.validate()?;
        }
        Ok(())
    }

    pub fn omega_sq(&self) -> f64 {
        self.omega * self.omega
    }
}
