//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ermakov::invariant::{
    exponential_scenario, max_relative_gap, tau_ode_residual, ExponentialScenario,
};
use ermakov::{
    coefficients_from_sigma, integrate_coefficient_system, integrate_complex_split,
    integrate_modified_ep, CoefficientTrajectory, Field, MassProfile, PinneySolution,
    ScenarioConfig, SolverKind, TauFunction, TimeGrid,
};
use serde_json::Value;

const TAU0: f64 = 0.01;
const OMEGAS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
const T_END: f64 = 20.0;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Check = Result<Outcome, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn fixed(t1: f64, dt: f64) -> TimeGrid {
    TimeGrid::fixed(0.0, t1, dt).unwrap()
}

fn adaptive(t1: f64, dt: f64, tol: f64) -> TimeGrid {
    TimeGrid::adaptive(0.0, t1, tol, tol)
        .unwrap()
        .with_output_step(dt)
        .unwrap()
}

/// The reference exponential scenario: m0 = 1, ω² = 0.05, τ0 = 0.01, q = 0.4.
fn reference() -> Result<ExponentialScenario, String> {
    scenario(0.05_f64.sqrt())
}

fn scenario(omega: f64) -> Result<ExponentialScenario, String> {
    exponential_scenario(1.0, omega, TAU0).map_err(|e| e.to_string())
}

fn scenario_config(s: &ExponentialScenario) -> Result<ScenarioConfig, String> {
    s.config(fixed(T_END, 1e-3), SolverKind::Rk4Fixed)
        .map_err(|e| e.to_string())
}

fn criterion_1() -> Check {
    let (mut worst, mut slowest) = (0.0_f64, 0.0_f64);
    for omega in OMEGAS {
        let s = scenario(omega)?;
        let cfg = scenario_config(&s)?;
        let start = Instant::now();
        let traj = integrate_modified_ep(&cfg).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let exact: Vec<f64> = traj.t().iter().map(|&t| s.sigma(t)).collect();
        worst = worst.max(max_relative_gap(traj.sigma(), &exact));
    }
    Ok(Outcome::new(
        worst < 1e-6 && slowest < 1.0,
        format!("max relative error {worst:.3e}, slowest case {slowest:.3} s"),
    ))
}

/// Max |ẍ + ω²x − λ²/x³| of x = √(A r² + 2B r s + C s²), r = cos ωt,
/// s = W sin(ωt)/ω, with ẍ from the analytic derivatives of the quadratic.
fn pinney_defect(p: &PinneySolution, lambda_sq: f64, t_max: f64) -> f64 {
    let w2 = p.omega * p.omega;
    (0..=(t_max / 0.01) as usize)
        .map(|k| {
            let t = k as f64 * 0.01;
            let (sn, cs) = (p.omega * t).sin_cos();
            let (r, rd) = (cs, -p.omega * sn);
            let (s, sd) = (p.wronskian * sn / p.omega, p.wronskian * cs);
            let quad = p.a * r * r + 2.0 * p.b * r * s + p.c * s * s;
            let quad_d = 2.0 * (p.a * r * rd + p.b * (rd * s + r * sd) + p.c * s * sd);
            let quad_dd = 2.0
                * (p.a * (rd * rd - w2 * r * r)
                    + p.b * (2.0 * rd * sd - 2.0 * w2 * r * s)
                    + p.c * (sd * sd - w2 * s * s));
            let x = quad.sqrt();
            let xd = quad_d / (2.0 * x);
            let xdd = (0.5 * quad_dd - xd * xd) / x;
            (xdd + w2 * x - lambda_sq / (x * x * x)).abs()
        })
        .fold(0.0, f64::max)
}

fn criterion_2() -> Check {
    let triples = [(1.0, 0.0, 1.0), (2.0, 0.5, 1.0), (0.5, -0.3, 3.0)];
    let (mut gap, mut defect, mut rival) = (0.0_f64, 0.0_f64, f64::INFINITY);
    for (a, b, c) in triples {
        let omega = 1.3;
        // A Wronskian other than 1 separates (AC − B²)W² from (AC − B²)/W.
        let p = PinneySolution::with_wronskian(a, b, c, omega, 2.0).map_err(|e| e.to_string())?;
        let lambda_sq = (a * c - b * b) * 4.0;
        if (p.lambda_sq() - lambda_sq).abs() > 1e-12 * lambda_sq {
            return Ok(Outcome::new(
                false,
                format!("λ² = {} for ({a}, {b}, {c})", p.lambda_sq()),
            ));
        }
        defect = defect.max(pinney_defect(&p, lambda_sq, T_END));
        rival = rival.min(pinney_defect(&p, (a * c - b * b) / 2.0, T_END));
        let cfg = ScenarioConfig::new(
            MassProfile::constant(1.0).unwrap(),
            omega,
            TauFunction::constant(lambda_sq).unwrap(),
            p.value(0.0).unwrap(),
            p.derivative(0.0).unwrap(),
            adaptive(T_END, 0.01, 1e-12),
            SolverKind::Rk45Adaptive,
        )
        .map_err(|e| e.to_string())?;
        let traj = integrate_modified_ep(&cfg).map_err(|e| e.to_string())?;
        let exact: Vec<f64> = traj.t().iter().map(|&t| p.value(t).unwrap()).collect();
        gap = gap.max(max_relative_gap(traj.sigma(), &exact));
    }
    Ok(Outcome::new(
        gap < 1e-6 && defect < 1e-8 && rival > 1e-2,
        format!(
            "solver vs closed form {gap:.3e}, EP residual with (AC−B²)W² {defect:.3e}, with (AC−B²)/W {rival:.3e}"
        ),
    ))
}

/// Both coefficient routes on the reference scenario: (integrated, σ-substituted).
fn both_routes(
    s: &ExponentialScenario,
) -> Result<(ScenarioConfig, CoefficientTrajectory, CoefficientTrajectory), String> {
    let cfg = scenario_config(s)?;
    let traj = integrate_modified_ep(&cfg).map_err(|e| e.to_string())?;
    let via_sigma = coefficients_from_sigma(&traj, &cfg.mass, &cfg.tau, Field::Derived)
        .map_err(|e| e.to_string())?;
    let (direct, _) = integrate_coefficient_system(
        &cfg.mass,
        cfg.omega,
        Field::Derived,
        via_sigma.at(0),
        &cfg.grid,
        cfg.solver,
    )
    .map_err(|e| e.to_string())?;
    Ok((cfg, direct, via_sigma))
}

fn criterion_3() -> Check {
    let s = reference()?;
    let (_, direct, via_sigma) = both_routes(&s)?;
    let gap = direct
        .route_gap(&via_sigma)
        .map_err(|e| e.to_string())?
        .max();
    let want = -0.5 * s.m0 * s.q;
    let spread = direct
        .delta
        .iter()
        .fold(0.0_f64, |m, d| m.max((d - want).abs()));
    Ok(Outcome::new(
        gap < 1e-7 && spread < 1e-8,
        format!("route gap {gap:.3e}, δ spread {spread:.3e}"),
    ))
}

fn criterion_4() -> Check {
    let s = reference()?;
    let (cfg, direct, via_sigma) = both_routes(&s)?;
    let (mut field, mut closure) = (0.0_f64, 0.0_f64);
    for route in [&direct, &via_sigma] {
        let exact: Vec<f64> = route.t.iter().map(|&t| s.efield(t)).collect();
        field = field.max(max_relative_gap(&route.efield, &exact));
        closure = closure.max(route.closure_gap(&cfg.mass).map_err(|e| e.to_string())?);
    }
    Ok(Outcome::new(
        field < 1e-7 && closure < 1e-8,
        format!("field relative error {field:.3e}, closure gap {closure:.3e}"),
    ))
}

fn criterion_5() -> Check {
    let s = reference()?;
    let cfg = scenario_config(&s)?;
    let traj = integrate_modified_ep(&cfg).map_err(|e| e.to_string())?;
    let compatible = tau_ode_residual(&cfg.tau, &traj, &cfg.mass)
        .map_err(|e| e.to_string())?
        .max_relative;
    let cfg = ScenarioConfig::new(
        s.mass_profile(),
        s.omega,
        TauFunction::constant(0.01).unwrap(),
        1.0,
        0.5 * s.q,
        fixed(5.0, 1e-3),
        SolverKind::Rk4Fixed,
    )
    .map_err(|e| e.to_string())?;
    let traj = integrate_modified_ep(&cfg).map_err(|e| e.to_string())?;
    let incompatible = tau_ode_residual(&cfg.tau, &traj, &cfg.mass).map_err(|e| e.to_string())?;
    Ok(Outcome::new(
        compatible < 1e-9 && incompatible.max_residual > 0.0,
        format!(
            "monomial/exponential relative residual {compatible:.3e}, constant-τ residual {:.3e}",
            incompatible.max_residual
        ),
    ))
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_ermakov")
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn criterion_6(out: &Path) -> Check {
    let start = Instant::now();
    let status = Command::new(binary())
        .arg("verify")
        .arg("--config")
        .arg(workspace_file("configs/verify.json"))
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = read_json(&out.join("verify.json"))?;
    let levels = report["levels"].as_array().ok_or("no levels")?;
    let finest = levels.last().ok_or("no levels")?;
    let n = finest["n"].as_u64().unwrap_or(0);
    let drift = finest["max_drift"].as_f64().unwrap_or(f64::INFINITY);
    let orders: Vec<f64> = report["drift_orders"]
        .as_array()
        .ok_or("no orders")?
        .iter()
        .filter_map(Value::as_f64)
        .collect();
    let orders_ok = orders.len() == 2 && orders.iter().all(|p| (p - 2.0).abs() <= 0.3);
    Ok(Outcome::new(
        status.status.code() == Some(0)
            && levels.len() == 3
            && n == 1023
            && drift < 1e-3
            && orders_ok
            && elapsed < 60.0,
        format!("n = {n}, drift {drift:.3e}, orders {orders:.3?}, runtime {elapsed:.2} s"),
    ))
}

fn criterion_7(out: &Path) -> Check {
    let status = Command::new(binary())
        .arg("figure1")
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let manifest = read_json(&out.join("manifest.json"))?;
    let expected = [
        (0.1, 0.0),
        (0.3, 0.565685),
        (0.5, 0.979796),
        (0.7, 1.385641),
        (0.9, 1.788854),
    ];
    let q_ok = expected.iter().all(|(omega, q)| {
        manifest["residuals"][format!("q_omega_{omega}")]
            .as_f64()
            .is_some_and(|v| (v - q).abs() <= 1e-6)
    });

    let mut reader = csv::Reader::from_path(out.join("figure1.csv")).map_err(|e| e.to_string())?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| {
            r.map_err(|e| e.to_string())?
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| e.to_string()))
                .collect()
        })
        .collect::<Result<_, String>>()?;
    let curves = header.len() - 1;
    let flat = rows.iter().all(|r| r[1] == 1.0);
    let ordered = rows
        .iter()
        .filter(|r| r[0] > 0.0)
        .all(|r| r[1..].windows(2).all(|w| w[1] < w[0]));
    let at_one = rows
        .iter()
        .find(|r| (r[0] - 1.0).abs() < 1e-12)
        .map(|r| r[2]);
    let at_one_ok = at_one.is_some_and(|v| (v - (-0.565685_f64).exp()).abs() < 1e-6);
    Ok(Outcome::new(
        status.status.code() == Some(0) && curves == 5 && q_ok && flat && ordered && at_one_ok,
        format!("{curves} curves, q within 1e-6: {q_ok}, ω=0.1 flat: {flat}, strictly ordered: {ordered}, m(ω=0.3, t=1) = {at_one:?}"),
    ))
}

fn criterion_8() -> Check {
    let mut real_gap = 0.0_f64;
    for (mass, omega_sq, tau0, xi_dot0) in [
        (MassProfile::exponential(1.0, 0.4).unwrap(), 0.13, 0.1, 0.15),
        (MassProfile::constant(1.0).unwrap(), 0.005, 0.01, 0.05),
    ] {
        let cfg = ScenarioConfig::new(
            mass,
            f64::sqrt(omega_sq),
            TauFunction::monomial(tau0).unwrap(),
            1.0,
            xi_dot0,
            adaptive(10.0, 0.01, 1e-12),
            SolverKind::Rk45Adaptive,
        )
        .map_err(|e| e.to_string())?;
        let split =
            integrate_complex_split(&cfg, 1.0, xi_dot0, 0.0, 0.0).map_err(|e| e.to_string())?;
        let real = integrate_modified_ep(&cfg).map_err(|e| e.to_string())?;
        real_gap = split
            .xi
            .iter()
            .zip(real.sigma())
            .fold(real_gap, |m, (a, b)| m.max((a - b).abs()));
    }

    let cfg = ScenarioConfig::new(
        MassProfile::constant(1.0).unwrap(),
        f64::sqrt(1.01),
        TauFunction::monomial(0.01).unwrap(),
        1.0,
        0.0,
        adaptive(10.0, 0.01, 1e-12),
        SolverKind::Rk45Adaptive,
    )
    .map_err(|e| e.to_string())?;
    let split = integrate_complex_split(&cfg, 1.0, 0.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let analytic = (0..split.t.len())
        .map(|j| {
            (split.xi[j] - 1.0)
                .abs()
                .max((split.eta[j] - split.t[j]).abs())
        })
        .fold(0.0, f64::max);
    Ok(Outcome::new(
        real_gap < 1e-10 && analytic < 1e-8,
        format!("η̇0 = 0 vs real solver {real_gap:.3e}, (ξ = 1, η = t) error {analytic:.3e}"),
    ))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<Criterion> = vec![
        ("exponential closed form", Box::new(criterion_1)),
        ("constant-mass reduction", Box::new(criterion_2)),
        ("two-route coefficients", Box::new(criterion_3)),
        ("field closed form and closure", Box::new(criterion_4)),
        ("tau compatibility", Box::new(criterion_5)),
        (
            "quantum invariance",
            Box::new(|| criterion_6(&scratch.path().join("verify"))),
        ),
        (
            "figure 1",
            Box::new(|| criterion_7(&scratch.path().join("figure1"))),
        ),
        ("complex split", Box::new(criterion_8)),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let label = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {}: {label} {name}: {}", k + 1, outcome.detail);
        failures += usize::from(!outcome.passed);
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
