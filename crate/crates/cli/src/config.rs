//! Run configuration: a TOML file holding provider endpoints (by role),
//! pipeline knobs, output paths, and the prompt-pack selection. Credentials
//! are never stored here — a provider entry names the environment variable
//! that carries the secret.

use anyhow::{bail, Context, Result};
use credence_core::pipeline::PipelineConfig;
use credence_core::providers::{ProviderConfig, RetryPolicy};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub prompt_pack_version: Option<String>,
    /// Directory of template files overriding the built-in pack.
    pub prompt_pack_dir: Option<PathBuf>,
    /// Directory-form fixture corpus for offline runs; the embedded corpus
    /// is used when unset.
    pub offline_corpus_dir: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub output: OutputPaths,
    pub providers: ProviderTable,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&raw)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn pack_version(&self) -> &str {
        self.prompt_pack_version.as_deref().unwrap_or("v1")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub plan: PathBuf,
    pub answer: PathBuf,
    pub report: PathBuf,
    pub metrics: PathBuf,
    pub trace: PathBuf,
    /// Per-record dump for reliability plotting; written only when set or
    /// requested with `--records`.
    pub records: Option<PathBuf>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            plan: PathBuf::from("plan.json"),
            answer: PathBuf::from("answer.json"),
            report: PathBuf::from("report.md"),
            metrics: PathBuf::from("metrics.json"),
            trace: PathBuf::from("trace.jsonl"),
            records: None,
        }
    }
}

/// Completion roles plus the search and fetch backends. A missing role
/// falls back to `default`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderTable {
    pub default: Option<ProviderToml>,
    pub planner: Option<ProviderToml>,
    pub researcher: Option<ProviderToml>,
    pub writer: Option<ProviderToml>,
    pub reflector: Option<ProviderToml>,
    pub search: Option<ProviderToml>,
    pub fetch: Option<ProviderToml>,
}

impl ProviderTable {
    pub fn role(&self, role: &str) -> Result<ProviderConfig> {
        let entry = match role {
            "planner" => self.planner.as_ref(),
            "researcher" => self.researcher.as_ref(),
            "writer" => self.writer.as_ref(),
            "reflector" => self.reflector.as_ref(),
            "search" => self.search.as_ref(),
            "fetch" => self.fetch.as_ref(),
            other => bail!("unknown provider role '{other}'"),
        };
        match entry.or(self.default.as_ref()) {
            Some(p) => Ok(p.to_core()),
            None => bail!(
                "no provider configured for role '{role}' and no [providers.default]; \
                 pass --offline or add provider entries to the config"
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderToml {
    pub endpoint: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_credential_var")]
    pub credential_env_var: String,
    #[serde(default)]
    pub retry: RetryToml,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_credential_var() -> String {
    "LLM_API_KEY".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryToml {
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
}

impl Default for RetryToml {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

impl ProviderToml {
    pub fn to_core(&self) -> ProviderConfig {
        ProviderConfig {
            endpoint: self.endpoint.clone(),
            model_name: self.model_name.clone(),
            timeout: Duration::from_secs(self.timeout_secs),
            retry: RetryPolicy {
                max_attempts: self.retry.max_attempts,
                backoff_base: Duration::from_millis(self.retry.backoff_base_ms),
            },
            credential_env_var: self.credential_env_var.clone(),
        }
    }
}
