use std::fs;
use std::path::Path;

use ermakov::csv::write_columns;
use ermakov::ep_solver::ep_defects;
use ermakov::invariant::{
    decay_rate, exponential_scenario, max_relative_gap, tau_ode_residual, ExponentialScenario,
};
use ermakov::tdse::{verify_invariance, InvarianceReport, SampledProtocol};
use ermakov::{
    coefficients_from_sigma, integrate_coefficient_system, integrate_modified_ep,
    CoefficientTrajectory, Coefficients, Error, Field, MassProfile, ScenarioConfig,
    SigmaTrajectory, SolverKind, TauFunction, TimeGrid,
};
use serde::Serialize;

use crate::args::{Figure1Args, ScenarioArg, ScenarioArgs, VerifyArgs};
use crate::config::load_config;
use crate::error::{CliError, NumericalContext};
use crate::manifest::{CheckStatus, RunManifest};

/// Largest accepted EP defect relative to the size of the equation's terms.
pub const EP_RELATIVE_TOL: f64 = 1e-6;
/// Largest accepted relative gap between numeric and closed-form σ.
pub const CLOSED_FORM_TOL: f64 = 1e-6;
/// Largest accepted relative gap between the two coefficient routes.
pub const ROUTE_GAP_TOL: f64 = 1e-7;
/// Largest accepted |γ − 2mαE| relative to max(1, max|γ|).
pub const CLOSURE_TOL: f64 = 1e-8;
/// Largest accepted τ-compatibility residual relative to the size of its terms.
pub const TAU_RESIDUAL_TOL: f64 = 1e-9;
/// Largest accepted spread of δ around −m0·q/2.
pub const DELTA_CONSTANT_TOL: f64 = 1e-8;
/// Largest accepted relative ⟨I⟩ drift on the finest grid.
pub const DRIFT_TOL: f64 = 1e-3;
/// Accepted window for the drift convergence order.
pub const ORDER_TARGET: f64 = 2.0;
pub const ORDER_WINDOW: f64 = 0.3;

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

fn csv_bytes(
    path: &str,
    write: impl FnOnce(&mut Vec<u8>) -> Result<(), ermakov::csv::CsvError>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::Output {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    text.into_bytes()
}

/// Loads the config and applies the solver and scenario overrides.
fn prepare_scenario(
    args: &ScenarioArgs,
) -> Result<(ScenarioConfig, Vec<u8>, Option<ExponentialScenario>), CliError> {
    let (mut cfg, bytes) = load_config(&args.config)?;
    if let Some(solver) = args.solver {
        cfg.solver = solver.into();
    }
    let exponential = match args.scenario {
        Some(ScenarioArg::Exponential) => Some(apply_exponential(&mut cfg)?),
        None => None,
    };
    cfg.validate().invalid()?;
    Ok((cfg, bytes, exponential))
}

fn apply_exponential(cfg: &mut ScenarioConfig) -> Result<ExponentialScenario, CliError> {
    let tau0 = match cfg.tau {
        TauFunction::Monomial { tau0 } => tau0,
        TauFunction::Constant { .. } => {
            return Err(CliError::Usage(
                "--scenario exponential needs a monomial tau (\"kind\": \"monomial\")".into(),
            ))
        }
    };
    let m0 = match cfg.mass {
        MassProfile::Constant { m0 } | MassProfile::Exponential { m0, .. } => m0,
        MassProfile::Tabulated(_) => {
            return Err(CliError::Usage(
                "--scenario exponential needs a constant or exponential mass to read m0 from"
                    .into(),
            ))
        }
    };
    let scenario = exponential_scenario(m0, cfg.omega, tau0).invalid()?;
    cfg.mass = scenario.mass_profile();
    cfg.sigma0 = scenario.sigma(cfg.grid.t0);
    cfg.sigma_dot0 = scenario.sigma_dot(cfg.grid.t0);
    Ok(scenario)
}

/// Records EP-defect figures; returns the trajectory's relative defect.
fn record_ep_residual(
    manifest: &mut RunManifest,
    traj: &SigmaTrajectory,
    cfg: &ScenarioConfig,
) -> Result<(), CliError> {
    match ep_defects(traj, cfg) {
        Ok(defects) => {
            let abs = defects.iter().map(|d| d.defect).fold(0.0, f64::max);
            let rel = defects
                .iter()
                .map(|d| {
                    if d.scale > 0.0 {
                        d.defect / d.scale
                    } else {
                        d.defect
                    }
                })
                .fold(0.0, f64::max);
            manifest.residual("max_ep_residual", abs);
            manifest.residual("max_ep_relative_residual", rel);
            manifest.check("ep_residual", CheckStatus::from_bool(rel < EP_RELATIVE_TOL));
        }
        Err(Error::InsufficientData(_)) => manifest.check("ep_residual", CheckStatus::Skipped),
        Err(e) => return Err(CliError::Numerical(e)),
    }
    Ok(())
}

pub fn solve_ep(args: &ScenarioArgs) -> Result<RunManifest, CliError> {
    let (cfg, bytes, exponential) = prepare_scenario(args)?;
    let mut manifest = RunManifest::new("solve-ep", Some(&args.config), &bytes);
    let traj = integrate_modified_ep(&cfg).numerical()?;
    prepare_out(&args.out)?;
    let csv = csv_bytes("sigma.csv", |b| traj.write_csv(b))?;
    manifest.write_output(&args.out, "sigma.csv", &csv)?;

    record_ep_residual(&mut manifest, &traj, &cfg)?;
    manifest.residual("accepted_steps", traj.meta().accepted_steps as f64);
    manifest.residual("rejected_steps", traj.meta().rejected_steps as f64);
    if let Some(s) = exponential {
        let exact: Vec<f64> = traj.t().iter().map(|&t| s.sigma(t)).collect();
        let gap = max_relative_gap(traj.sigma(), &exact);
        manifest.residual("q", s.q);
        manifest.residual("max_closed_form_relative_error", gap);
        manifest.check("closed_form", CheckStatus::from_bool(gap < CLOSED_FORM_TOL));
    }
    Ok(manifest)
}

#[derive(Debug, Serialize)]
struct CoeffsReport {
    max_ep_residual: Option<f64>,
    max_tau_residual: Option<f64>,
    max_tau_relative_residual: Option<f64>,
    max_closure_gap: f64,
    skipped_samples: usize,
    route_gap: ermakov::invariant::RouteGap,
}

pub fn coeffs(args: &ScenarioArgs) -> Result<RunManifest, CliError> {
    let (cfg, bytes, exponential) = prepare_scenario(args)?;
    let mut manifest = RunManifest::new("coeffs", Some(&args.config), &bytes);
    let traj = integrate_modified_ep(&cfg).numerical()?;
    let via_sigma =
        coefficients_from_sigma(&traj, &cfg.mass, &cfg.tau, Field::Derived).numerical()?;
    let init = cfg.coeff_init.unwrap_or_else(|| via_sigma.at(0));
    let (direct, _) = integrate_coefficient_system(
        &cfg.mass,
        cfg.omega,
        Field::Derived,
        init,
        &cfg.grid,
        cfg.solver,
    )
    .numerical()?;

    prepare_out(&args.out)?;
    let csv = csv_bytes("coeffs.csv", |b| direct.write_csv(b))?;
    manifest.write_output(&args.out, "coeffs.csv", &csv)?;
    let csv = csv_bytes("coeffs_sigma.csv", |b| via_sigma.write_csv(b))?;
    manifest.write_output(&args.out, "coeffs_sigma.csv", &csv)?;

    record_ep_residual(&mut manifest, &traj, &cfg)?;

    let (tau_residual, skipped) = match tau_ode_residual(&cfg.tau, &traj, &cfg.mass) {
        Ok(r) => {
            manifest.residual("max_tau_residual", r.max_residual);
            manifest.residual("max_tau_relative_residual", r.max_relative);
            manifest.check(
                "tau_ode",
                CheckStatus::from_bool(r.max_relative < TAU_RESIDUAL_TOL),
            );
            (Some((r.max_residual, r.max_relative)), r.skipped)
        }
        Err(Error::Degenerate(_)) => {
            manifest.check("tau_ode", CheckStatus::Skipped);
            (None, traj.len())
        }
        Err(e) => return Err(CliError::Numerical(e)),
    };
    manifest.residual("skipped_samples", skipped as f64);

    let closure = direct.closure_gap(&cfg.mass).numerical()?;
    let gamma_scale = direct.gamma.iter().fold(1.0_f64, |m, g| m.max(g.abs()));
    manifest.residual("max_closure_gap", closure);
    manifest.check(
        "closure",
        CheckStatus::from_bool(closure <= CLOSURE_TOL * gamma_scale),
    );

    let gap = direct.route_gap(&via_sigma).numerical()?;
    manifest.residual("route_gap", gap.max());
    manifest.check(
        "route_agreement",
        CheckStatus::from_bool(gap.max() < ROUTE_GAP_TOL),
    );

    if let Some(s) = exponential {
        let want = -0.5 * s.m0 * s.q;
        let spread = direct
            .delta
            .iter()
            .map(|d| (d - want).abs())
            .fold(0.0, f64::max);
        manifest.residual("delta_spread", spread);
        manifest.check(
            "delta_constant",
            CheckStatus::from_bool(spread < DELTA_CONSTANT_TOL),
        );
    }

    let report = CoeffsReport {
        max_ep_residual: manifest.residuals.get("max_ep_residual").copied(),
        max_tau_residual: tau_residual.map(|r| r.0),
        max_tau_relative_residual: tau_residual.map(|r| r.1),
        max_closure_gap: closure,
        skipped_samples: skipped,
        route_gap: gap,
    };
    manifest.write_output(&args.out, "coeffs_report.json", &json_bytes(&report))?;
    Ok(manifest)
}

/// Coefficients from the linear conditions on a grid with half the TDSE
/// step, so Crank–Nicolson midpoints are sample times.
fn verification_coefficients(
    cfg: &ScenarioConfig,
    dt: f64,
    t_max: f64,
) -> Result<CoefficientTrajectory, CliError> {
    let (t0, half) = (cfg.grid.t0, 0.5 * dt);
    let t1 = t0 + t_max;
    let grid = match cfg.solver {
        SolverKind::Rk4Fixed => TimeGrid::fixed(t0, t1, half),
        SolverKind::Rk45Adaptive => TimeGrid::adaptive(
            t0,
            t1,
            cfg.grid.abs_tol.unwrap_or(1e-12),
            cfg.grid.rel_tol.unwrap_or(1e-12),
        )
        .and_then(|g| g.with_output_step(half)),
    }
    .invalid()?;
    cfg.mass.check_interval(t0, t1).invalid()?;
    let init = match cfg.coeff_init {
        Some(c) => c,
        None => {
            let e0 = 1.0 / cfg.mass.mass_at(t0).invalid()?;
            Coefficients::from_sigma(&cfg.mass, &cfg.tau, t0, cfg.sigma0, cfg.sigma_dot0, e0)
                .invalid()?
        }
    };
    let (traj, _) = integrate_coefficient_system(
        &cfg.mass,
        cfg.omega,
        Field::Derived,
        init,
        &grid,
        cfg.solver,
    )
    .numerical()?;
    Ok(traj)
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    perturb_delta: f64,
    drift_tolerance: f64,
    order_target: f64,
    order_window: f64,
    #[serde(flatten)]
    report: &'a InvarianceReport,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct SnapshotFile<'a> {
    x: Vec<f64>,
    snapshots: &'a [ermakov::tdse::Snapshot],
}

pub fn verify(args: &VerifyArgs) -> Result<RunManifest, CliError> {
    let (cfg, bytes, _) = prepare_scenario(&args.scenario)?;
    let mut settings = cfg
        .tdse
        .clone()
        .ok_or_else(|| CliError::Usage("verify needs a `tdse` block in the config".into()))?;
    if let Some(times) = &args.snapshots {
        settings.snapshots = times.clone();
    }
    settings.validate().invalid()?;
    if !(1.0 + args.perturb_delta).is_finite() {
        return Err(CliError::Usage("--perturb-delta must be finite".into()));
    }
    let mut manifest = RunManifest::new("verify", Some(&args.scenario.config), &bytes);

    let coeffs = verification_coefficients(&cfg, settings.dt, settings.t_max)?;
    let protocol = SampledProtocol {
        mass: cfg.mass.clone(),
        omega: cfg.omega,
        coeffs,
        delta_scale: 1.0 + args.perturb_delta,
    };
    let report = verify_invariance(&protocol, &settings).numerical()?;
    let finest = report.finest();

    let valid = report.levels.iter().all(|l| l.valid);
    manifest.check("boundary", CheckStatus::from_bool(valid));
    manifest.check(
        "drift",
        CheckStatus::from_bool(valid && finest.max_drift < DRIFT_TOL),
    );
    let orders_ok = report
        .drift_orders
        .iter()
        .all(|p| (p - ORDER_TARGET).abs() <= ORDER_WINDOW);
    manifest.check(
        "drift_order",
        if report.drift_orders.is_empty() {
            CheckStatus::Skipped
        } else {
            CheckStatus::from_bool(orders_ok)
        },
    );
    manifest.residual("max_drift", finest.max_drift);
    manifest.residual("max_norm_error", finest.max_norm_error);
    manifest.residual("max_boundary_amplitude", finest.max_boundary_amplitude);
    manifest.residual("residual_t0", finest.residual0);
    for (k, p) in report.drift_orders.iter().enumerate() {
        manifest.residual(&format!("drift_order_{k}"), *p);
    }

    prepare_out(&args.scenario.out)?;
    let body = VerifyReport {
        perturb_delta: args.perturb_delta,
        drift_tolerance: DRIFT_TOL,
        order_target: ORDER_TARGET,
        order_window: ORDER_WINDOW,
        report: &report,
        passed: manifest.passed(),
    };
    manifest.write_output(&args.scenario.out, "verify.json", &json_bytes(&body))?;
    let s = &finest.series;
    let csv = csv_bytes("verify_series.csv", |b| {
        write_columns(
            b,
            &["t", "expectation_I", "norm", "residual"],
            &[&s.t, &s.expectation, &s.norm, &s.residual],
        )
    })?;
    manifest.write_output(&args.scenario.out, "verify_series.csv", &csv)?;
    if !finest.snapshots.is_empty() {
        let grid = ermakov::SpatialGrid::new(settings.xmin, settings.xmax, finest.n).invalid()?;
        let file = SnapshotFile {
            x: grid.points(),
            snapshots: &finest.snapshots,
        };
        manifest.write_output(&args.scenario.out, "snapshots.json", &json_bytes(&file))?;
    }
    Ok(manifest)
}

#[derive(Debug, Serialize)]
struct Figure1Params<'a> {
    tau0: f64,
    omegas: &'a [f64],
    m0: f64,
    t_max: f64,
    samples: usize,
}

pub fn figure1(args: &Figure1Args) -> Result<RunManifest, CliError> {
    if args.omegas.is_empty() {
        return Err(CliError::Usage("--omegas needs at least one value".into()));
    }
    if args.samples < 2 {
        return Err(CliError::Usage("--samples must be at least 2".into()));
    }
    if !(args.t_max > 0.0 && args.t_max.is_finite()) {
        return Err(CliError::Usage("--t-max must be positive".into()));
    }
    if !(args.m0 > 0.0 && args.m0.is_finite()) {
        return Err(CliError::Usage("--m0 must be positive".into()));
    }
    let params = Figure1Params {
        tau0: args.tau0,
        omegas: &args.omegas,
        m0: args.m0,
        t_max: args.t_max,
        samples: args.samples,
    };
    let mut manifest = RunManifest::new(
        "figure1",
        None,
        &serde_json::to_vec(&params).expect("params serialise"),
    );

    let mut rates = Vec::with_capacity(args.omegas.len());
    for &omega in &args.omegas {
        let q = decay_rate(omega, args.tau0)
            .map_err(|e| CliError::Usage(format!("omega = {omega}: {e}")))?;
        rates.push(q);
    }
    let last = (args.samples - 1) as f64;
    let t: Vec<f64> = (0..args.samples)
        .map(|k| args.t_max * k as f64 / last)
        .collect();
    let curves: Vec<Vec<f64>> = rates
        .iter()
        .map(|&q| t.iter().map(|&s| args.m0 * (-q * s).exp()).collect())
        .collect();

    let names: Vec<String> = std::iter::once("t".to_owned())
        .chain(args.omegas.iter().map(|w| format!("m_omega_{w}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut columns: Vec<&[f64]> = vec![&t];
    columns.extend(curves.iter().map(Vec::as_slice));
    prepare_out(&args.out)?;
    let csv = csv_bytes("figure1.csv", |b| write_columns(b, &header, &columns))?;
    manifest.write_output(&args.out, "figure1.csv", &csv)?;

    for (omega, q) in args.omegas.iter().zip(&rates) {
        manifest.residual(&format!("q_omega_{omega}"), *q);
    }
    let flat: Vec<usize> = (0..rates.len()).filter(|&k| rates[k] == 0.0).collect();
    manifest.check(
        "flat_curve",
        if flat.is_empty() {
            CheckStatus::Skipped
        } else {
            CheckStatus::from_bool(
                flat.iter()
                    .all(|&k| curves[k].iter().all(|&m| m == args.m0)),
            )
        },
    );
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| args.omegas[a].total_cmp(&args.omegas[b]));
    let monotone =
        (1..t.len()).all(|j| order.windows(2).all(|w| curves[w[1]][j] < curves[w[0]][j]));
    manifest.check(
        "ordering",
        if order.len() < 2 {
            CheckStatus::Skipped
        } else {
            CheckStatus::from_bool(monotone)
        },
    );
    Ok(manifest)
}
