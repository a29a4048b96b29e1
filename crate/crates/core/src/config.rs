//! TOML session configuration. Every key is optional and falls back to the
//! defaults; unknown keys are rejected so typos do not pass silently.

use std::path::Path;

use crate::error::{OwmError, Result};
use crate::gating::SessionConfig;

pub const CONFIG_KEYS: [&str; 16] = [
    "num_categories",
    "grid_size",
    "dt",
    "dx",
    "k_p",
    "k_v",
    "f_min",
    "f_max",
    "window_seconds",
    "stride_seconds",
    "persistence",
    "cooldown",
    "threshold_window",
    "trend_alpha",
    "boundary",
    "update_scheme",
];

pub fn parse_config(text: &str) -> Result<SessionConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| OwmError::Config(e.to_string()))?;
    if let Some(key) = table.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(OwmError::Config(format!("unknown configuration key '{key}'")));
    }
    let cfg: SessionConfig = toml::from_str(text).map_err(|e| OwmError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SessionConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| OwmError::io_at(path, e))?;
    parse_config(&text)
}

pub fn to_toml(cfg: &SessionConfig) -> String {
    toml::to_string(cfg).expect("session config is always representable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), SessionConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let cfg = parse_config("grid_size = 32\npersistence = 4\nboundary = \"zero_flux\"\n").unwrap();
        assert_eq!(cfg.map.grid_size, 32);
        assert_eq!(cfg.detector.persistence, 4);
        assert_eq!(cfg.boundary, Boundary::ZeroFlux);
        assert_eq!(cfg.window_seconds, 4.0);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(parse_config("gridsize = 3").is_err());
        assert!(parse_config("f_min = 40.0").is_err());
        assert!(parse_config("dt = \"fast\"").is_err());
    }

    #[test]
    fn round_trips() {
        let cfg = SessionConfig::default();
        assert_eq!(parse_config(&to_toml(&cfg)).unwrap(), cfg);
    }
}
