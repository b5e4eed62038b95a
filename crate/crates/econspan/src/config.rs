//! Run configuration: a flat `key = value` text file covering material
//! overrides, environment geometry and training hyperparameters.
//!
//! Lines are `key = value`, `#` starts a comment, blank lines are
//! ignored. Unknown keys are rejected and every value is validated
//! before any command does work, so an invalid file never produces
//! partial output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cost_model::MaterialCostParams;
use crate::dqn_agent::TrainConfig;
use crate::environment::EnvConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: invalid value `{value}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("material `{0}` is not built in and not fully defined (needs a, b, m, c, r)")]
    UnknownMaterial(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a CLI command needs: environment, training setup, output
/// directory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            out_dir: PathBuf::from("./out"),
        }
    }
}

const MATERIAL_FIELDS: [&str; 5] = ["a", "b", "m", "c", "r"];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| {
                ConfigError::Malformed {
                    line,
                    text: stripped.to_string(),
                }
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed {
                    line,
                    text: stripped.to_string(),
                });
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey { line, key });
            }
        }
        Self::from_entries(entries)
    }

    fn from_entries(entries: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();

        // Collect material overrides first; the `materials` row list may
        // reference names that only exist through overrides.
        let mut overrides: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut material_order: Option<Vec<String>> = None;

        for (key, value) in &entries {
            match key.as_str() {
                "min_span" => cfg.env.min_span = parse_num(key, value)?,
                "max_span" => cfg.env.max_span = parse_num(key, value)?,
                "step_length" => cfg.env.step_length = parse_num(key, value)?,
                "max_steps" => cfg.env.max_steps = parse_num(key, value)?,
                "cell_pixels" => cfg.env.cell_pixels = parse_num(key, value)?,
                "gamma" => cfg.train.gamma = parse_num(key, value)?,
                "epsilon_start" => cfg.train.epsilon_start = parse_num(key, value)?,
                "epsilon_end" => cfg.train.epsilon_end = parse_num(key, value)?,
                "epsilon_decay_steps" => cfg.train.epsilon_decay_steps = parse_num(key, value)?,
                "replay_capacity" => cfg.train.replay_capacity = parse_num(key, value)?,
                "warmup" => cfg.train.warmup = parse_num(key, value)?,
                "batch_size" => cfg.train.batch_size = parse_num(key, value)?,
                "learning_rate" => cfg.train.learning_rate = parse_num(key, value)?,
                "reward_scale" => cfg.train.reward_scale = parse_num(key, value)?,
                "target_sync_interval" => cfg.train.target_sync_interval = parse_num(key, value)?,
                "episodes" => cfg.train.episodes = parse_num(key, value)?,
                "seed" => cfg.train.seed = parse_num(key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "materials" => {
                    material_order = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    );
                }
                _ => {
                    if let Some(rest) = key.strip_prefix("material.") {
                        let (name, field) =
                            rest.rsplit_once('.').ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
                        if name.is_empty() || !MATERIAL_FIELDS.contains(&field) {
                            return Err(ConfigError::UnknownKey(key.clone()));
                        }
                        overrides
                            .entry(name.to_string())
                            .or_default()
                            .insert(field.to_string(), parse_num(key, value)?);
                    } else {
                        return Err(ConfigError::UnknownKey(key.clone()));
                    }
                }
            }
        }

        let order = material_order
            .unwrap_or_else(|| vec!["concrete".into(), "composite".into(), "steel".into()]);
        if order.is_empty() {
            return Err(ConfigError::Invalid("materials list is empty".into()));
        }
        let mut materials = Vec::with_capacity(order.len());
        for name in &order {
            let fields = overrides.remove(name).unwrap_or_default();
            let base = MaterialCostParams::builtin(name);
            let get = |f: &str, dflt: Option<f64>| -> Result<f64, ConfigError> {
                fields
                    .get(f)
                    .copied()
                    .or(dflt)
                    .ok_or_else(|| ConfigError::UnknownMaterial(name.clone()))
            };
            let m = match base {
                Some(b) => MaterialCostParams::new(
                    name.clone(),
                    get("a", Some(b.a))?,
                    get("b", Some(b.b))?,
                    get("m", Some(b.m))?,
                    get("c", Some(b.c))?,
                    get("r", Some(b.r))?,
                ),
                None => MaterialCostParams::new(
                    name.clone(),
                    get("a", None)?,
                    get("b", None)?,
                    get("m", None)?,
                    get("c", None)?,
                    get("r", None)?,
                ),
            }
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            materials.push(m);
        }
        if let Some(name) = overrides.keys().next() {
            return Err(ConfigError::Invalid(format!(
                "material.{name}.* set but `{name}` is not in the materials list"
            )));
        }
        cfg.env.materials = materials;

        cfg.env
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_a_file() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.env.num_states(), 240);
        assert_eq!(cfg.train.gamma, 0.95);
        cfg.env.validate().unwrap();
        cfg.train.validate().unwrap();
    }

    #[test]
    fn parses_a_full_file_with_comments() {
        let text = "\
# geometry
min_span = 10
max_span = 400   # shorter grid
cell_pixels = 4

# training
episodes = 50
seed = 7
learning_rate = 1e-3
out_dir = ./runs
";
        let cfg = RunConfig::from_str_contents(text).unwrap();
        assert_eq!(cfg.env.max_span, 400);
        assert_eq!(cfg.env.num_columns(), 40);
        assert_eq!(cfg.env.cell_pixels, 4);
        assert_eq!(cfg.train.episodes, 50);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.out_dir, PathBuf::from("./runs"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_str_contents("episodez = 5\n"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::from_str_contents("material.steel.q = 5\n"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(matches!(
            RunConfig::from_str_contents("episodes\n"),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::from_str_contents("episodes =\n"),
            Err(ConfigError::Malformed { .. })
        ));
        assert!(matches!(
            RunConfig::from_str_contents("episodes = 5\nepisodes = 6\n"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
    }

    #[test]
    fn bad_values_fail_fast() {
        assert!(matches!(
            RunConfig::from_str_contents("episodes = five\n"),
            Err(ConfigError::BadValue { .. })
        ));
        // Passes parsing, fails validation.
        assert!(matches!(
            RunConfig::from_str_contents("gamma = 1.5\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::from_str_contents("max_span = 805\n"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn material_subset_and_overrides() {
        let cfg = RunConfig::from_str_contents("materials = steel\n").unwrap();
        assert_eq!(cfg.env.materials.len(), 1);
        assert_eq!(cfg.env.materials[0].name, "steel");
        assert_eq!(cfg.env.num_states(), 80);

        let cfg =
            RunConfig::from_str_contents("material.concrete.b = 45\n").unwrap();
        assert_eq!(cfg.env.materials[0].b, 45.0);
        assert_eq!(cfg.env.materials[0].a, 250.0);
    }

    #[test]
    fn custom_material_requires_all_fields() {
        let full = "\
materials = granite
material.granite.a = 100
material.granite.b = 30
material.granite.m = 1.1
material.granite.c = 60000
material.granite.r = 0.5
";
        let cfg = RunConfig::from_str_contents(full).unwrap();
        assert_eq!(cfg.env.materials[0].name, "granite");

        let partial = "materials = granite\nmaterial.granite.a = 100\n";
        assert!(matches!(
            RunConfig::from_str_contents(partial),
            Err(ConfigError::UnknownMaterial(_))
        ));
    }

    #[test]
    fn orphan_override_is_rejected() {
        let text = "materials = steel\nmaterial.concrete.a = 99\n";
        assert!(matches!(
            RunConfig::from_str_contents(text),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn invalid_material_params_are_rejected() {
        let text = "material.steel.b = -1\n";
        assert!(matches!(
            RunConfig::from_str_contents(text),
            Err(ConfigError::Invalid(_))
        ));
    }
}
