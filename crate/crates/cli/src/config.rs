//! Experiment configuration files (TOML).
//!
//! ```toml
//! schema_version = 1
//!
//! [task]
//! seed = 7
//! [task.problem]
//! kind = "completion"
//! rate = 0.2
//! [task.denoiser]
//! kind = "smoothing"
//!
//! [io]
//! truth = "card.png"
//! observation = "obs.pnpf"
//! mask = "mask.png"
//! output_dir = "out"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pnp_core::apps::TaskConfig;
use pnp_core::denoise::DenoiserChoice;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that may name the external adapter command.
pub const ADAPTER_ENV: &str = "PNP_ADAPTER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: TaskConfig,
    #[serde(default)]
    pub io: IoConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    /// Ground truth read by `degrade`; also the PSNR reference for `restore`
    /// when `reference` is unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<PathBuf>,
    /// Known-pixel mask (PNG or PNPF, entries 0 or 1). Unused for Poisson data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// Receives `restored.png`, `restored.pnpf` and `trace.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(task: TaskConfig) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            task,
            io: IoConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Reads and validates a file, making relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if let Some(dir) = path.parent() {
            config.io.rebase(dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        self.task.resolve()?;
        Ok(())
    }
}

impl IoConfig {
    fn rebase(&mut self, dir: &Path) {
        for path in [
            &mut self.truth,
            &mut self.observation,
            &mut self.mask,
            &mut self.reference,
            &mut self.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }
}

/// Picks the external adapter command. A `--adapter` flag wins, then a
/// command written in the config, then `PNP_ADAPTER`. Passing a flag turns a
/// built-in denoiser choice into an external one.
pub fn resolve_adapter(
    choice: &DenoiserChoice,
    flag: Option<&str>,
    env: Option<&str>,
) -> Result<DenoiserChoice> {
    let nonempty = |s: Option<&str>| {
        s.map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
    };
    Ok(match (choice, nonempty(flag)) {
        (DenoiserChoice::External { timeout_secs, .. }, Some(cmd)) => DenoiserChoice::External {
            command: cmd,
            timeout_secs: *timeout_secs,
        },
        (_, Some(cmd)) => DenoiserChoice::External {
            command: cmd,
            timeout_secs: 60.0,
        },
        (
            DenoiserChoice::External {
                command,
                timeout_secs,
            },
            None,
        ) => {
            let command = nonempty(Some(command)).or_else(|| nonempty(env)).with_context(|| {
                format!("external denoiser needs a command: set it in the config, pass --adapter or set {ADAPTER_ENV}")
            })?;
            DenoiserChoice::External {
                command,
                timeout_secs: *timeout_secs,
            }
        }
        (other, None) => other.clone(),
    })
}
