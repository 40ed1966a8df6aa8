use approx::assert_relative_eq;
use ermakov::{Error, MassProfile, ScenarioConfig, SolverKind, TauFunction};

const EXPONENTIAL: &str = r#"{
  "mass": {"kind": "exponential", "m0": 1.0, "q": 0.4},
  "omega": 0.22360679774997896,
  "tau": {"kind": "monomial", "value": 0.01},
  "sigma0": 1.0,
  "sigma_dot0": 0.2,
  "grid": {"t0": 0.0, "t1": 5.0, "dt": 0.001},
  "solver": "rk4_fixed"
}"#;

#[test]
fn parses_scenario_json() {
    let cfg: ScenarioConfig = serde_json::from_str(EXPONENTIAL).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.mass, MassProfile::exponential(1.0, 0.4).unwrap());
    assert_eq!(cfg.tau, TauFunction::monomial(0.01).unwrap());
    assert_eq!(cfg.solver, SolverKind::Rk4Fixed);
    assert_eq!(cfg.grid.dt, Some(0.001));
    let round: ScenarioConfig =
        serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(round, cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    let extra = EXPONENTIAL.replace("\"sigma0\"", "\"colour\": 1, \"sigma0\"");
    assert!(serde_json::from_str::<ScenarioConfig>(&extra).is_err());
    let nested = EXPONENTIAL.replace("\"q\": 0.4", "\"q\": 0.4, \"phase\": 1");
    assert!(serde_json::from_str::<ScenarioConfig>(&nested).is_err());
    let tau = EXPONENTIAL.replace("\"value\": 0.01", "\"value\": 0.01, \"power\": 4");
    assert!(serde_json::from_str::<ScenarioConfig>(&tau).is_err());
}

#[test]
fn invalid_values_fail_at_parse_time() {
    let negative = EXPONENTIAL.replace("\"m0\": 1.0", "\"m0\": -1.0");
    assert!(serde_json::from_str::<ScenarioConfig>(&negative).is_err());
    let lambda = r#"{"kind": "constant", "value": 0.0}"#;
    assert!(serde_json::from_str::<TauFunction>(lambda).is_err());
}

#[test]
fn tabulated_json_and_domain() {
    let table: Vec<[f64; 2]> = (0..=20)
        .map(|k| [k as f64 * 0.1, (-0.04 * k as f64).exp()])
        .collect();
    let json = serde_json::json!({"kind": "tabulated", "table": table});
    let profile: MassProfile = serde_json::from_value(json).unwrap();
    assert_eq!(profile.domain(), Some((0.0, 2.0)));
    assert!(matches!(
        profile.mass_at(2.5),
        Err(Error::OutOfDomain { .. })
    ));
    assert_relative_eq!(
        profile.mass_at(1.0).unwrap(),
        (-0.4f64).exp(),
        epsilon = 1e-12
    );
    // Central differences of the interpolant agree with its derivative to O(Δt²).
    for h in [1e-2, 5e-3] {
        let t = 0.73;
        let fd = (profile.mass_at(t + h).unwrap() - profile.mass_at(t - h).unwrap()) / (2.0 * h);
        assert!((fd - profile.mass_rate_at(t).unwrap()).abs() < 5.0 * h * h);
    }
}

#[test]
fn grid_outside_tabulated_domain_is_rejected() {
    let table: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64 * 0.1, 1.0)).collect();
    let cfg: ScenarioConfig = serde_json::from_str(EXPONENTIAL).unwrap();
    let mut bad = cfg.clone();
    bad.mass = MassProfile::tabulated(table).unwrap();
    assert!(bad.validate().is_err());
}

#[test]
fn mass_examples() {
    assert_eq!(
        MassProfile::constant(2.0).unwrap().mass_at(17.3).unwrap(),
        2.0
    );
    assert_eq!(
        MassProfile::constant(5.0)
            .unwrap()
            .mass_rate_at(3.0)
            .unwrap(),
        0.0
    );
    let e = MassProfile::exponential(1.0, 0.4).unwrap();
    assert_eq!(e.mass_at(0.0).unwrap(), 1.0);
    assert_relative_eq!(e.mass_at(1.0).unwrap(), 0.670320, epsilon = 1e-6);
    assert_eq!(e.mass_rate_at(0.0).unwrap(), -0.4);
}

#[test]
fn tau_examples() {
    let c = TauFunction::constant(1.0).unwrap();
    assert_eq!(c.tau_at(3.7).unwrap(), 1.0);
    assert_eq!(c.tau_prime_at(3.7).unwrap(), 0.0);
    let m = TauFunction::monomial(0.01).unwrap();
    assert_eq!(m.tau_at(1.0).unwrap(), 0.01);
    assert_relative_eq!(m.tau_at(0.2f64.exp()).unwrap(), 0.022255, epsilon = 1e-6);
    assert!(matches!(
        m.tau_at(0.0),
        Err(Error::InvalidParameter { .. })
            | Err(Error::OutOfDomain { .. })
            | Err(Error::NonPositive { .. })
    ));
}
