//! Settings resolution. Every value comes from, in order of preference, a
//! command-line flag, an environment variable (judge endpoint and key
//! only), or the TOML config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use sif_core::datagen::HttpCompleterConfig;
use sif_core::rewards::{HttpJudge, HttpJudgeConfig, Judge, MockJudge};
use sif_core::scoring::ScoringConfig;

use crate::CliError;

pub const ENV_JUDGE_ENDPOINT: &str = "SIF_JUDGE_ENDPOINT";
pub const ENV_JUDGE_API_KEY: &str = "SIF_JUDGE_API_KEY";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub max_attempts: Option<u32>,
    pub timeout_secs: Option<u64>,
    /// Maximum judge calls in flight across all requests.
    pub concurrency: Option<usize>,
    /// Path to a judge prompt template replacing the built-in one.
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompleterSection {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub listen: Option<String>,
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub judge: JudgeSection,
    pub completer: CompleterSection,
    pub scoring: ScoringConfig,
    pub service: ServiceSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("config {}: {e}", path.display())))
    }
}

/// Judge-related flags as parsed from the command line.
#[derive(Debug, Clone, Default)]
pub struct JudgeFlags {
    pub mock: bool,
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn read_template(path: &Option<PathBuf>) -> Result<Option<String>, CliError> {
    path.as_ref()
        .map(|p| {
            std::fs::read_to_string(p)
                .map_err(|e| CliError::Runtime(format!("template {}: {e}", p.display())))
        })
        .transpose()
}

pub fn build_judge(flags: &JudgeFlags, file: &JudgeSection) -> Result<Arc<dyn Judge>, CliError> {
    if flags.mock {
        if flags.endpoint.is_some() {
            return Err(CliError::Invalid(
                "--mock-judge conflicts with --judge-endpoint".into(),
            ));
        }
        return Ok(Arc::new(MockJudge));
    }
    let endpoint = flags
        .endpoint
        .clone()
        .or_else(|| env(ENV_JUDGE_ENDPOINT))
        .or_else(|| file.endpoint.clone())
        .ok_or_else(|| {
            CliError::Invalid(format!(
                "no judge configured: pass --mock-judge, --judge-endpoint, set {ENV_JUDGE_ENDPOINT}, or add [judge] endpoint to the config file"
            ))
        })?;
    let mut cfg = HttpJudgeConfig::new(endpoint);
    cfg.api_key = flags
        .api_key
        .clone()
        .or_else(|| env(ENV_JUDGE_API_KEY))
        .or_else(|| file.api_key.clone());
    if let Some(model) = flags.model.clone().or_else(|| file.model.clone()) {
        cfg.model = model;
    }
    if let Some(n) = file.max_attempts {
        cfg.max_attempts = n.max(1);
    }
    if let Some(secs) = file.timeout_secs {
        cfg.timeout = Duration::from_secs(secs);
    }
    if let Some(t) = read_template(&file.template)? {
        cfg.template = t;
    }
    Ok(Arc::new(HttpJudge::new(cfg)))
}

pub fn completer_config(
    endpoint: Option<String>,
    model: Option<String>,
    file: &CompleterSection,
) -> Result<Option<HttpCompleterConfig>, CliError> {
    let Some(endpoint) = endpoint.or_else(|| file.endpoint.clone()) else {
        return Ok(None);
    };
    Ok(Some(HttpCompleterConfig {
        endpoint,
        api_key: file.api_key.clone(),
        model: model
            .or_else(|| file.model.clone())
            .unwrap_or_else(|| "vision-chat".into()),
        timeout: Duration::from_secs(file.timeout_secs.unwrap_or(120)),
    }))
}

pub fn completer_template(file: &CompleterSection) -> Result<Option<String>, CliError> {
    read_template(&file.template)
}
