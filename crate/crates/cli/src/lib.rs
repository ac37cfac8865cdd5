//! Scenario configuration, ensemble runs and artifact writers behind the `collapse`
//! command.

pub mod config;
pub mod matrix;
pub mod output;
pub mod presets;
pub mod run;

use std::path::Path;

pub use config::{ConfigError, Scenario, ScenarioConfig};
pub use matrix::{parse_matrix, parse_quantity_set};

/// Parses and validates a scenario configuration.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    ScenarioConfig::from_json(text)?.resolve()
}

/// Reads a config file, or a shipped preset when `arg` names one and no such file exists.
pub fn load_config(arg: &str) -> Result<ScenarioConfig, ConfigError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(text) = presets::preset(arg) {
            return ScenarioConfig::from_json(text);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::parse(format!("cannot read {arg}: {e}")))?;
    ScenarioConfig::from_json(&text)
}
