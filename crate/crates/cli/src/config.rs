//! The single JSON configuration document.

use std::path::{Path, PathBuf};

use curriculum_core::forge::{ForgeOptions, UnassignedPolicy};
use curriculum_core::harness::HarnessConfig;
use curriculum_core::registry::StrategySpec;
use curriculum_core::scheduler::SchedulerHyperparams;
use serde::{Deserialize, Serialize};

use crate::remote::backend_registry;
use crate::CliError;

/// Overrides `--config` when set.
pub const CONFIG_ENV: &str = "MEDCLM_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeSection {
    /// QA backend: `{"name": "template"}` or
    /// `{"name": "remote", "endpoint": ..., "timeout_ms": ..., ...}`.
    pub backend: StrategySpec,
    /// Lesions whose best IoU does not exceed this stay unassigned.
    pub min_iou: f64,
    pub unassigned: UnassignedPolicy,
    /// Upper bound on concurrent backend requests.
    pub concurrency: usize,
}

impl Default for ForgeSection {
    fn default() -> Self {
        let defaults = ForgeOptions::default();
        Self {
            backend: StrategySpec::named("template"),
            min_iou: defaults.min_iou,
            unassigned: defaults.unassigned,
            concurrency: defaults.concurrency,
        }
    }
}

impl ForgeSection {
    pub fn options(&self, skip_failed: bool) -> ForgeOptions {
        ForgeOptions {
            min_iou: self.min_iou,
            unassigned: self.unassigned,
            skip_failed,
            concurrency: self.concurrency,
        }
    }
}

/// Default file locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub dataset: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Per-epoch CSV export next to the trace, for plotting.
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub forge: ForgeSection,
    pub scheduler: SchedulerHyperparams,
    pub harness: HarnessConfig,
    pub io: IoSection,
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let f = &self.forge;
        if !(f.min_iou.is_finite() && (0.0..1.0).contains(&f.min_iou)) {
            return Err(CliError::Config(format!(
                "forge.min_iou {} must lie in [0, 1)",
                f.min_iou
            )));
        }
        if f.concurrency == 0 {
            return Err(CliError::Config("forge.concurrency must be >= 1".into()));
        }
        backend_registry()
            .build(&f.backend)
            .map_err(|e| CliError::Config(format!("forge.backend: {e}")))?;
        self.scheduler
            .validate()
            .map_err(|e| CliError::Config(format!("scheduler: {e}")))?;
        self.harness
            .validate()
            .map_err(|e| CliError::Config(format!("harness: {e}")))?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: AppConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads the configuration named by `$MEDCLM_CONFIG`, else `flag`, else
    /// returns defaults.
    pub fn load(flag: Option<&Path>) -> Result<Self, CliError> {
        let from_env = std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        let Some(path) = from_env.or_else(|| flag.map(Path::to_path_buf)) else {
            let config = AppConfig::default();
            config.validate()?;
            return Ok(config);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// An input path from the flag or the config, which must name an existing
/// file.
pub fn input_path(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let path = flag
        .or_else(|| configured.clone())
        .ok_or_else(|| CliError::Config(format!("no {what} path given (flag or io.{what})")))?;
    if !path.is_file() {
        return Err(CliError::Config(format!("{what} file {} not found", path.display())));
    }
    Ok(path)
}

pub fn output_path(flag: Option<PathBuf>, configured: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Config("no output path given (--out or io.out)".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = AppConfig::from_json("{}").unwrap();
        assert_eq!(c, AppConfig::default());
        assert_eq!(c.forge.backend.name, "template");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(
            AppConfig::from_json(r#"{"forgee": {}}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            AppConfig::from_json(r#"{"scheduler": {"rho": 0.0}}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            AppConfig::from_json(r#"{"forge": {"backend": {"name": "oracle"}}}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            AppConfig::from_json(r#"{"forge": {"backend": {"name": "remote"}}}"#),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn remote_backend_parameters_are_checked() {
        let c = AppConfig::from_json(
            r#"{"forge": {"backend": {"name": "remote", "endpoint": "http://127.0.0.1:9/qa", "timeout_ms": 50}}}"#,
        )
        .unwrap();
        assert_eq!(c.forge.backend.name, "remote");
    }
}
