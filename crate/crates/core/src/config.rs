//! Pipeline configuration, read from TOML.
//!
//! ```toml
//! mode = "full"          # baseline | select | full
//! seed = 7
//!
//! [provider]
//! kind = "oracle"        # constant | oracle | file
//! floor = 1e-3
//! noise_sigma = 0.0
//!
//! [tracker]
//! levels = 4
//!
//! [selector]
//! budget = 300
//!
//! [keyframe]
//! flow_px = 12.0
//! ```
//!
//! Every field is optional; missing ones take their defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::OracleConfig;
use crate::selector::SelectorConfig;
use crate::tracker::TrackingConfig;

/// Which parts of the quality prior are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No prior: plain gradient selection, unit weights.
    Baseline,
    /// Quality-modulated selection, unit weights.
    Select,
    /// Quality-modulated selection and decoupled weights.
    #[default]
    Full,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Select, Mode::Full];

    pub fn uses_prior(self) -> bool {
        self != Mode::Baseline
    }

    pub fn weights_tracking(self) -> bool {
        self == Mode::Full
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Select => "select",
            Mode::Full => "full",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "select" => Ok(Mode::Select),
            "full" => Ok(Mode::Full),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (baseline, select, full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Constant,
    Oracle {
        #[serde(default = "default_floor")]
        floor: f64,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    File {
        dir: PathBuf,
    },
}

fn default_floor() -> f64 {
    OracleConfig::default().floor
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Oracle {
            floor: default_floor(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl ProviderConfig {
    pub fn oracle_config(&self) -> Option<OracleConfig> {
        match *self {
            ProviderConfig::Oracle {
                floor,
                noise_sigma,
                seed,
            } => Some(OracleConfig {
                floor,
                noise_sigma,
                seed,
            }),
            _ => None,
        }
    }
}

/// Parses `constant`, `oracle` or `file:<dir>`.
impl FromStr for ProviderConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ProviderConfig::Constant),
            "oracle" => Ok(ProviderConfig::default()),
            _ => match s.strip_prefix("file:") {
                Some(dir) if !dir.is_empty() => Ok(ProviderConfig::File { dir: dir.into() }),
                _ => Err(Error::Config(format!(
                    "unknown provider '{s}' (constant, oracle, file:<dir>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyframeConfig {
    /// Mean support-pixel displacement (pixels) that triggers a keyframe.
    pub flow_px: f64,
    /// Relative translation (meters).
    pub translation: f64,
    /// Relative rotation (degrees).
    pub rotation_deg: f64,
    /// Finest-level valid fraction below which a keyframe is created.
    pub min_valid_fraction: f64,
    /// Keyframes kept in the window.
    pub window: usize,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            flow_px: 12.0,
            translation: 0.1,
            rotation_deg: 5.0,
            min_valid_fraction: 0.5,
            window: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub seed: u64,
    pub provider: ProviderConfig,
    pub tracker: TrackingConfig,
    pub selector: SelectorConfig,
    pub keyframe: KeyframeConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.selector.validate()?;
        let k = &self.keyframe;
        if k.window == 0 || !(k.flow_px > 0.0 && k.translation > 0.0 && k.rotation_deg > 0.0) {
            return Err(Error::Config(
                "keyframe thresholds must be positive and window >= 1".into(),
            ));
        }
        if let Some(o) = self.provider.oracle_config() {
            if !(o.floor > 0.0 && o.noise_sigma >= 0.0) {
                return Err(Error::Config("oracle floor must be > 0 and noise_sigma >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.mode, Mode::Full);
        assert_eq!(c.keyframe.window, 7);
        assert_eq!(c.selector.budget, 800);
        assert_eq!(c.tracker.huber, 9.0 / 255.0);
    }

    #[test]
    fn overrides_and_round_trip() {
        let text = r#"
            mode = "select"
            seed = 42
            [provider]
            kind = "file"
            dir = "maps/seq0"
            [tracker]
            levels = 3
            [keyframe]
            rotation_deg = 2.5
        "#;
        let c = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(c.mode, Mode::Select);
        assert_eq!(c.seed, 42);
        assert_eq!(
            c.provider,
            ProviderConfig::File {
                dir: "maps/seq0".into()
            }
        );
        assert_eq!(c.tracker.levels, 3);
        assert_eq!(c.tracker.max_iterations, 20);
        assert_eq!(c.keyframe.rotation_deg, 2.5);
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::from_toml("mdoe = \"full\"").is_err());
        assert!(PipelineConfig::from_toml("mode = \"fast\"").is_err());
        assert!(PipelineConfig::from_toml("[tracker]\nlevels = 0").is_err());
        assert!(PipelineConfig::from_toml("[provider]\nkind = \"oracle\"\nfloor = 0.0").is_err());
    }

    #[test]
    fn provider_flag_syntax() {
        assert_eq!("constant".parse::<ProviderConfig>().unwrap(), ProviderConfig::Constant);
        assert_eq!(
            "file:/tmp/x".parse::<ProviderConfig>().unwrap(),
            ProviderConfig::File { dir: "/tmp/x".into() }
        );
        assert!("file:".parse::<ProviderConfig>().is_err());
        assert!(matches!(
            "oracle".parse::<ProviderConfig>().unwrap(),
            ProviderConfig::Oracle { .. }
        ));
    }
}
