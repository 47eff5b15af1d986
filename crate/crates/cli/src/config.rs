use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Names the config file when `--config` is not given.
pub const CONFIG_ENV: &str = "OMNILINGO_CONFIG";
pub const DEFAULT_DATA_DIR: &str = "omnilingo-data";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
}

/// Contents of the TOML config file.
#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub gateway: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub gateway: Option<String>,
}

impl FileConfig {
    /// A relative `data_dir` is taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        if let (Some(dir), Some(base)) = (&config.data_dir, path.parent()) {
            if dir.is_relative() {
                config.data_dir = Some(base.join(dir));
            }
        }
        Ok(config)
    }
}

/// Flags win over the config file, which wins over defaults. The file comes
/// from `config_flag`, else from `env_value` (the [`CONFIG_ENV`] variable).
pub fn resolve(
    config_flag: Option<&Path>,
    env_value: Option<OsString>,
    data_dir_flag: Option<&Path>,
    gateway_flag: Option<&str>,
) -> Result<Settings, ConfigError> {
    let path = config_flag
        .map(Path::to_owned)
        .or_else(|| env_value.filter(|v| !v.is_empty()).map(PathBuf::from));
    let file = match path {
        Some(path) => FileConfig::load(&path)?,
        None => FileConfig::default(),
    };
    Ok(Settings {
        data_dir: data_dir_flag
            .map(Path::to_owned)
            .or(file.data_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
        gateway: gateway_flag.map(str::to_owned).or(file.gateway),
    })
}
