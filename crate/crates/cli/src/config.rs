//! Run configuration file: `[data]`, `[train]` and `[output]` tables.
//! Precedence is flags over file values over built-in defaults.

use std::path::{Path, PathBuf};

use milkd::data::GenSpec;
use milkd::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const EFFECTIVE_CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub data: GenSpec,
    pub train: TrainConfig,
    pub output: OutputPaths,
}

impl RunConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Writes the effective configuration next to a command's outputs. The
    /// output location itself is left out so that outputs do not depend on
    /// where they were written.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let echoed = Self {
            output: OutputPaths::default(),
            ..self.clone()
        };
        std::fs::write(dir.join(EFFECTIVE_CONFIG_FILE), echoed.to_toml())?;
        Ok(())
    }

    /// `--out` if given, else `[output] dir` from the file.
    pub fn resolve_out(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .ok_or_else(|| CliError::Usage("--out is required (or set [output] dir in the config file)".into()))
    }
}
