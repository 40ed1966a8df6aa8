use std::fs;
use std::path::Path;

use ermakov::ScenarioConfig;

use crate::error::{CliError, NumericalContext};

/// Reads and validates a scenario config, returning it with its raw bytes.
///
/// Parse failures report the line, column and field path of the problem.
pub fn load_config(path: &Path) -> Result<(ScenarioConfig, Vec<u8>), CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::ReadConfig {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = parse_config(path, &bytes)?;
    cfg.validate().invalid()?;
    Ok((cfg, bytes))
}

pub fn parse_config(path: &Path, bytes: &[u8]) -> Result<ScenarioConfig, CliError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let parsed: Result<ScenarioConfig, _> = serde_path_to_error::deserialize(&mut de);
    let config_error = |field: String, e: serde_json::Error| CliError::Config {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        field,
        message: e.to_string(),
    };
    let cfg = parsed.map_err(|e| {
        let field = e.path().to_string();
        config_error(field, e.into_inner())
    })?;
    de.end().map_err(|e| config_error(".".into(), e))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_nested_field_path() {
        let text = br#"{
  "mass": {"kind": "constant", "m0": 1.0},
  "omega": 1.0,
  "tau": {"kind": "constant", "value": 1.0},
  "sigma0": 1.0,
  "sigma_dot0": 0.0,
  "grid": {"t0": 0.0, "t1": "soon", "dt": 0.1},
  "solver": "rk4_fixed"
}"#;
        match parse_config(Path::new("c.json"), text) {
            Err(CliError::Config { line, field, .. }) => {
                assert_eq!(line, 7);
                assert_eq!(field, "grid.t1");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_trailing_content() {
        assert!(matches!(
            parse_config(Path::new("c.json"), b"{} {}"),
            Err(CliError::Config { .. })
        ));
    }
}
