//! Ermakov–Pinney type equations.
//!
//! The central equation is the damped EP equation for a time-dependent mass,
//!
//! ```text
//! σ̈ + ω²σ + (ṁ/m)σ̇ = τ(σ)/σ³
//! ```
//!
//! which reduces to the classic EP equation `ẍ + ω²x = λ²/x³` when m is
//! constant and τ = λ². Alongside it live the Fring–Tenney variant, the
//! modulus/phase split of complex solutions and the Pinney closed form used
//! as an analytic oracle.

use std::io::Write;

use num_complex::Complex64;

use crate::csv::{write_columns, CsvError};
use crate::error::{invalid, Error, Result};
pub use crate::ode::TrajectoryMeta;
use crate::ode::{self, State};
use crate::profiles::{MassProfile, ScenarioConfig, SolverKind, TauFunction, TimeGrid};
use crate::stencil;

/// σ (or ξ) values below this abort the integration.
pub const POSITIVITY_FLOOR: f64 = 1e-10;

/// Fewest samples the 5-point defect stencil accepts.
pub const MIN_STENCIL_SAMPLES: usize = 5;

/// Sampled solution (t, σ, σ̇) of an EP-type equation.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTrajectory {
    t: Vec<f64>,
    sigma: Vec<f64>,
    sigma_dot: Vec<f64>,
    meta: TrajectoryMeta,
}

impl SigmaTrajectory {
    /// Builds a trajectory from raw samples, checking ordering and positivity.
    pub fn from_samples(
        t: Vec<f64>,
        sigma: Vec<f64>,
        sigma_dot: Vec<f64>,
        meta: TrajectoryMeta,
    ) -> Result<Self> {
        if t.len() != sigma.len() || t.len() != sigma_dot.len() {
            return Err(Error::LengthMismatch(format!(
                "t: {}, sigma: {}, sigma_dot: {}",
                t.len(),
                sigma.len(),
                sigma_dot.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::InsufficientData(
                "trajectory needs at least 2 samples".into(),
            ));
        }
        if let Some(index) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneGrid { index: index + 1 });
        }
        if let Some(j) = sigma.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::NonPositive {
                what: "sigma",
                value: sigma[j],
                t: t[j],
            });
        }
        Ok(Self {
            t,
            sigma,
            sigma_dot,
            meta,
        })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
    pub fn sigma_dot(&self) -> &[f64] {
        &self.sigma_dot
    }
    pub fn meta(&self) -> &TrajectoryMeta {
        &self.meta
    }
    pub fn len(&self) -> usize {
        self.t.len()
    }
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with header `t,sigma,sigma_dot`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CsvError> {
        write_columns(
            w,
            &["t", "sigma", "sigma_dot"],
            &[&self.t, &self.sigma, &self.sigma_dot],
        )
    }
}

/// Modulus/phase decomposition σ = ξ·e^(iη) of a complex solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSplitTrajectory {
    pub t: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_dot: Vec<f64>,
    pub eta: Vec<f64>,
    pub eta_dot: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl ComplexSplitTrajectory {
    /// Reconstructs σ = ξ·e^(iη) at every sample.
    pub fn sigma(&self) -> Vec<Complex64> {
        self.xi
            .iter()
            .zip(&self.eta)
            .map(|(&xi, &eta)| Complex64::from_polar(xi, eta))
            .collect()
    }

    /// σ̇ = (ξ̇ + iξη̇)·e^(iη).
    pub fn sigma_dot(&self) -> Vec<Complex64> {
        (0..self.t.len())
            .map(|j| {
                Complex64::new(self.xi_dot[j], self.xi[j] * self.eta_dot[j])
                    * Complex64::from_polar(1.0, self.eta[j])
            })
            .collect()
    }

    /// CSV with header `t,xi,xi_dot,eta,eta_dot`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CsvError> {
        write_columns(
            w,
            &["t", "xi", "xi_dot", "eta", "eta_dot"],
            &[&self.t, &self.xi, &self.xi_dot, &self.eta, &self.eta_dot],
        )
    }
}

/// Runs the configured integrator and tracks the first component against
/// the positivity floor.
fn integrate<const N: usize, F>(
    rhs: F,
    y0: State<N>,
    grid: &TimeGrid,
    solver: SolverKind,
) -> Result<(ode::Solution<N>, TrajectoryMeta)>
where
    F: FnMut(f64, &State<N>) -> Result<State<N>>,
{
    if !(y0[0] >= POSITIVITY_FLOOR) {
        return Err(invalid(
            "initial value",
            format!("must be >= {POSITIVITY_FLOOR:e}"),
        ));
    }
    let guard = |t: f64, y: &State<N>, t_new: f64, y_new: &State<N>| {
        if y_new[0] < POSITIVITY_FLOOR || !y_new[0].is_finite() {
            let frac = if y_new[0].is_finite() && y[0] != y_new[0] {
                ((y[0] - POSITIVITY_FLOOR) / (y[0] - y_new[0])).clamp(0.0, 1.0)
            } else {
                1.0
            };
            return Err(Error::Singularity {
                t: t + frac * (t_new - t),
                floor: POSITIVITY_FLOOR,
            });
        }
        Ok(())
    };
    ode::integrate_on_grid(rhs, guard, y0, grid, solver)
}

fn to_sigma_trajectory(sol: ode::Solution<2>, meta: TrajectoryMeta) -> Result<SigmaTrajectory> {
    let (sigma, sigma_dot) = sol.y.iter().map(|y| (y[0], y[1])).unzip();
    SigmaTrajectory::from_samples(sol.t, sigma, sigma_dot, meta)
}

fn floor_check(t: f64, value: f64) -> Result<()> {
    if value < POSITIVITY_FLOOR || !value.is_finite() {
        Err(Error::Singularity {
            t,
            floor: POSITIVITY_FLOOR,
        })
    } else {
        Ok(())
    }
}

/// σ̈ from the modified EP equation.
pub fn modified_ep_acceleration(
    mass: &MassProfile,
    omega_sq: f64,
    tau: &TauFunction,
    t: f64,
    sigma: f64,
    sigma_dot: f64,
) -> Result<f64> {
    Ok(tau.force(sigma) - omega_sq * sigma - mass.log_rate_at(t)? * sigma_dot)
}

/// Integrates σ̈ + ω²σ + (ṁ/m)σ̇ = τ(σ)/σ³ from `(sigma0, sigma_dot0)` over the
/// configured grid.
pub fn integrate_modified_ep(cfg: &ScenarioConfig) -> Result<SigmaTrajectory> {
    cfg.validate()?;
    let omega_sq = cfg.omega_sq();
    let rhs = |t: f64, y: &State<2>| {
        floor_check(t, y[0])?;
        Ok([
            y[1],
            modified_ep_acceleration(&cfg.mass, omega_sq, &cfg.tau, t, y[0], y[1])?,
        ])
    };
    let (sol, meta) = integrate(rhs, [cfg.sigma0, cfg.sigma_dot0], &cfg.grid, cfg.solver)?;
    to_sigma_trajectory(sol, meta)
}

/// Integrates the Fring–Tenney dissipative EP equation
/// χ̈ + f²χ − (ḟ/f)χ̇ = f²/χ³ with a positive parametrising function f.
pub fn integrate_ft_variant(
    f: &MassProfile,
    chi0: f64,
    chi_dot0: f64,
    grid: &TimeGrid,
    solver: SolverKind,
) -> Result<SigmaTrajectory> {
    if !(chi0 > 0.0) {
        return Err(invalid("chi0", format!("must be > 0, got {chi0}")));
    }
    f.check_interval(grid.t0, grid.t1)?;
    let rhs = |t: f64, y: &State<2>| {
        floor_check(t, y[0])?;
        let fv = f.mass_at(t)?;
        let f_sq = fv * fv;
        let chi = y[0];
        Ok([
            y[1],
            f_sq / (chi * chi * chi) - f_sq * chi + f.log_rate_at(t)? * y[1],
        ])
    };
    let (sol, meta) = integrate(rhs, [chi0, chi_dot0], grid, solver)?;
    to_sigma_trajectory(sol, meta)
}

/// Integrates the coupled modulus/phase equations of a complex solution
/// σ = ξ·e^(iη) of the linearised equation σ̈ + (ṁ/m)σ̇ + Ω²σ = 0, Ω² = ω² − τ0:
///
/// ```text
/// ξ̈ + (ṁ/m)ξ̇ + (Ω² − η̇²)ξ = 0
/// 2ξ̇η̇ + ξ(η̈ + (ṁ/m)η̇) = 0
/// ```
pub fn integrate_complex_split(
    cfg: &ScenarioConfig,
    xi0: f64,
    xi_dot0: f64,
    eta0: f64,
    eta_dot0: f64,
) -> Result<ComplexSplitTrajectory> {
    cfg.validate()?;
    let tau0 = match cfg.tau {
        TauFunction::Monomial { tau0 } => tau0,
        TauFunction::Constant { .. } => {
            return Err(invalid(
                "tau",
                "complex split requires the monomial τ = τ0·σ⁴",
            ))
        }
    };
    if !(xi0 > 0.0) {
        return Err(invalid("xi0", format!("must be > 0, got {xi0}")));
    }
    let big_omega_sq = cfg.omega_sq() - tau0;
    let rhs = |t: f64, y: &State<4>| {
        floor_check(t, y[0])?;
        let g = cfg.mass.log_rate_at(t)?;
        let (xi, xi_dot, eta_dot) = (y[0], y[1], y[3]);
        Ok([
            xi_dot,
            -g * xi_dot - (big_omega_sq - eta_dot * eta_dot) * xi,
            eta_dot,
            -g * eta_dot - 2.0 * xi_dot * eta_dot / xi,
        ])
    };
    let (sol, meta) = integrate(rhs, [xi0, xi_dot0, eta0, eta_dot0], &cfg.grid, cfg.solver)?;
    let mut out = ComplexSplitTrajectory {
        t: sol.t,
        xi: Vec::with_capacity(sol.y.len()),
        xi_dot: Vec::with_capacity(sol.y.len()),
        eta: Vec::with_capacity(sol.y.len()),
        eta_dot: Vec::with_capacity(sol.y.len()),
        meta,
    };
    for y in sol.y {
        out.xi.push(y[0]);
        out.xi_dot.push(y[1]);
        out.eta.push(y[2]);
        out.eta_dot.push(y[3]);
    }
    Ok(out)
}

/// Pinney's representation x(t) = (A·r² + 2B·r·s + C·s²)^(1/2) of solutions of
/// ẍ + ω²x = λ²/x³, built on r = cos(ωt), s = W·sin(ωt)/ω whose Wronskian
/// r·ṡ − ṙ·s equals `wronskian`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinneySolution {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub omega: f64,
    pub wronskian: f64,
}

impl PinneySolution {
    /// Unit-Wronskian basis r = cos(ωt), s = sin(ωt)/ω.
    pub fn new(a: f64, b: f64, c: f64, omega: f64) -> Result<Self> {
        Self::with_wronskian(a, b, c, omega, 1.0)
    }

    pub fn with_wronskian(a: f64, b: f64, c: f64, omega: f64, wronskian: f64) -> Result<Self> {
        if !(omega > 0.0) || wronskian == 0.0 || !wronskian.is_finite() {
            return Err(invalid(
                "omega",
                "need ω > 0 and a finite non-zero Wronskian",
            ));
        }
        if !(a > 0.0) || !(a * c - b * b > 0.0) {
            return Err(invalid("c", "need A > 0 and AC − B² > 0"));
        }
        Ok(Self {
            a,
            b,
            c,
            omega,
            wronskian,
        })
    }

    /// Coefficients reproducing x(0) = x0, ẋ(0) = v0 for the EP equation with λ².
    pub fn from_initial_conditions(x0: f64, v0: f64, lambda_sq: f64, omega: f64) -> Result<Self> {
        if !(x0 > 0.0) || !(lambda_sq > 0.0) {
            return Err(invalid("x0", "need x0 > 0 and λ² > 0"));
        }
        let a = x0 * x0;
        let b = x0 * v0;
        let c = (lambda_sq + b * b) / a;
        Self::new(a, b, c, omega)
    }

    fn basis(&self, t: f64) -> (f64, f64) {
        let (s, c) = (self.omega * t).sin_cos();
        (c, self.wronskian * s / self.omega)
    }

    fn quadratic(&self, t: f64) -> f64 {
        let (r, s) = self.basis(t);
        self.a * r * r + 2.0 * self.b * r * s + self.c * s * s
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let q = self.quadratic(t);
        if q > 0.0 {
            Ok(q.sqrt())
        } else {
            Err(Error::NonPositive {
                what: "Pinney quadratic form",
                value: q,
                t,
            })
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        let x = self.value(t)?;
        let (sn, cs) = (self.omega * t).sin_cos();
        let (r, s) = (cs, self.wronskian * sn / self.omega);
        let (r_dot, s_dot) = (-self.omega * sn, self.wronskian * cs);
        let q_dot = 2.0 * self.a * r * r_dot
            + 2.0 * self.b * (r_dot * s + r * s_dot)
            + 2.0 * self.c * s * s_dot;
        Ok(q_dot / (2.0 * x))
    }

    /// λ² = (AC − B²)·W².
    pub fn lambda_sq(&self) -> f64 {
        (self.a * self.c - self.b * self.b) * self.wronskian * self.wronskian
    }
}

/// Evaluates the Pinney closed form with the unit-Wronskian basis.
pub fn pinney_closed_form(a: f64, b: f64, c: f64, omega: f64, t: f64) -> Result<f64> {
    PinneySolution::new(a, b, c, omega)?.value(t)
}

/// Per-sample defect of the modified EP equation with σ̈ from a 5-point stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpDefect {
    pub t: f64,
    /// |σ̈ + ω²σ + (ṁ/m)σ̇ − τ/σ³|.
    pub defect: f64,
    /// Sum of the magnitudes of the four terms; normalises `defect`.
    pub scale: f64,
}

pub fn ep_defects(traj: &SigmaTrajectory, cfg: &ScenarioConfig) -> Result<Vec<EpDefect>> {
    if traj.len() < MIN_STENCIL_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "EP residual needs at least {MIN_STENCIL_SAMPLES} samples, got {}",
            traj.len()
        )));
    }
    let h = stencil::uniform_spacing(traj.t())?;
    let omega_sq = cfg.omega_sq();
    let (t, s, sd) = (traj.t(), traj.sigma(), traj.sigma_dot());
    (2..traj.len() - 2)
        .map(|j| {
            let acc = stencil::second_derivative(s, j, h);
            let damping = cfg.mass.log_rate_at(t[j])? * sd[j];
            let force = cfg.tau.force(s[j]);
            let spring = omega_sq * s[j];
            Ok(EpDefect {
                t: t[j],
                defect: (acc + spring + damping - force).abs(),
                scale: acc.abs() + spring.abs() + damping.abs() + force.abs(),
            })
        })
        .collect()
}

/// Maximum absolute modified-EP defect over interior samples.
pub fn ep_residual(traj: &SigmaTrajectory, cfg: &ScenarioConfig) -> Result<f64> {
    Ok(ep_defects(traj, cfg)?
        .iter()
        .map(|d| d.defect)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_cfg(lambda_sq: f64, sigma0: f64, solver: SolverKind) -> ScenarioConfig {
        let grid = match solver {
            SolverKind::Rk4Fixed => TimeGrid::fixed(0.0, 10.0, 0.01).unwrap(),
            SolverKind::Rk45Adaptive => TimeGrid::adaptive(0.0, 10.0, 1e-12, 1e-12)
                .unwrap()
                .with_output_step(0.01)
                .unwrap(),
        };
        ScenarioConfig::new(
            MassProfile::constant(1.0).unwrap(),
            1.0,
            TauFunction::constant(lambda_sq).unwrap(),
            sigma0,
            0.0,
            grid,
            solver,
        )
        .unwrap()
    }

    #[test]
    fn classic_fixed_point_stays_put() {
        for solver in [SolverKind::Rk4Fixed, SolverKind::Rk45Adaptive] {
            let traj = integrate_modified_ep(&constant_cfg(1.0, 1.0, solver)).unwrap();
            assert!(traj.sigma().iter().all(|s| *s == 1.0));
            assert!(traj.sigma_dot().iter().all(|s| *s == 0.0));
            assert_eq!(*traj.t().last().unwrap(), 10.0);
            assert!(ep_residual(&traj, &constant_cfg(1.0, 1.0, solver)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn equilibrium_sqrt_two() {
        let cfg = constant_cfg(4.0, 2f64.sqrt(), SolverKind::Rk45Adaptive);
        let traj = integrate_modified_ep(&cfg).unwrap();
        for s in traj.sigma() {
            assert!((s - 2f64.sqrt()).abs() < 1e-10, "{s}");
        }
        assert!(ep_residual(&traj, &cfg).unwrap() < 1e-8);
    }

    #[test]
    fn exponential_mass_closed_form() {
        let grid = TimeGrid::adaptive(0.0, 1.0, 1e-13, 1e-13)
            .unwrap()
            .with_output_step(0.01)
            .unwrap();
        let cfg = ScenarioConfig::new(
            MassProfile::exponential(1.0, 0.4).unwrap(),
            0.05f64.sqrt(),
            TauFunction::monomial(0.01).unwrap(),
            1.0,
            0.2,
            grid,
            SolverKind::Rk45Adaptive,
        )
        .unwrap();
        let traj = integrate_modified_ep(&cfg).unwrap();
        let last = *traj.sigma().last().unwrap();
        assert!((last - 0.2f64.exp()).abs() < 1e-11);
        assert!((last - 1.221403).abs() < 1e-6);
    }

    #[test]
    fn collapse_reports_singularity() {
        // τ = 0 monomial with a large inward velocity drives σ through zero.
        let grid = TimeGrid::fixed(0.0, 5.0, 0.001).unwrap();
        let cfg = ScenarioConfig::new(
            MassProfile::constant(1.0).unwrap(),
            1.0,
            TauFunction::monomial(0.0).unwrap(),
            1.0,
            0.0,
            grid,
            SolverKind::Rk4Fixed,
        )
        .unwrap();
        match integrate_modified_ep(&cfg) {
            // σ = cos t crosses zero at π/2.
            Err(Error::Singularity { t, .. }) => {
                assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-3)
            }
            other => panic!("expected singularity, got {other:?}"),
        }
        let mut adaptive = cfg.clone();
        adaptive.grid = TimeGrid::adaptive(0.0, 5.0, 1e-10, 1e-10).unwrap();
        adaptive.solver = SolverKind::Rk45Adaptive;
        assert!(matches!(
            integrate_modified_ep(&adaptive),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn pinney_identity_and_lambda() {
        for t in [0.0, 0.3, 1.7, 10.0] {
            assert!((pinney_closed_form(1.0, 0.0, 1.0, 1.0, t).unwrap() - 1.0).abs() < 1e-15);
        }
        let p = PinneySolution::new(4.0, 0.0, 1.0, 1.0).unwrap();
        assert!((p.value(0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((p.value(std::f64::consts::FRAC_PI_2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(p.lambda_sq(), 4.0);
        assert_eq!(
            PinneySolution::new(2.0, 0.5, 1.0, 1.0).unwrap().lambda_sq(),
            1.75
        );
        assert!(pinney_closed_form(1.0, 2.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pinney_from_initial_conditions_round_trips() {
        let p = PinneySolution::from_initial_conditions(1.5, -0.3, 2.0, 0.7).unwrap();
        assert!((p.value(0.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((p.derivative(0.0).unwrap() + 0.3).abs() < 1e-15);
        assert!((p.lambda_sq() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn residual_needs_five_samples() {
        let meta = TrajectoryMeta {
            solver: SolverKind::Rk4Fixed,
            dt: Some(0.1),
            abs_tol: None,
            rel_tol: None,
            accepted_steps: 3,
            rejected_steps: 0,
        };
        let traj = SigmaTrajectory::from_samples(
            vec![0.0, 0.1, 0.2, 0.3],
            vec![1.0; 4],
            vec![0.0; 4],
            meta,
        )
        .unwrap();
        let cfg = constant_cfg(1.0, 1.0, SolverKind::Rk4Fixed);
        assert!(matches!(
            ep_residual(&traj, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn trajectory_rejects_nonpositive_sigma() {
        let meta = TrajectoryMeta {
            solver: SolverKind::Rk4Fixed,
            dt: None,
            abs_tol: None,
            rel_tol: None,
            accepted_steps: 0,
            rejected_steps: 0,
        };
        assert!(SigmaTrajectory::from_samples(
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0; 2],
            meta.clone()
        )
        .is_err());
        assert!(
            SigmaTrajectory::from_samples(vec![0.0, 0.0], vec![1.0; 2], vec![0.0; 2], meta)
                .is_err()
        );
    }
}
