//! Run configuration: a TOML document selecting providers, backends,
//! thresholds, and env-var names for secrets. Every field has a default so
//! an empty file (or none at all) is a valid configuration.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MinerConfig;
use crate::exploit::ProbeOptions;
use crate::sandbox::{Backend, ContainerConfig, SandboxOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mine: MineSection,
    pub sandbox: SandboxSection,
    pub exploit: ExploitSection,
    pub patch: PatchSection,
    pub report: ReportSection,
    pub pipeline: PipelineSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Config, ConfigError> {
        match path {
            Some(p) => Config::load(p),
            None => Ok(Config::default()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineSection {
    /// "mock" (corpus directory) or "github".
    pub provider: String,
    /// Directory holding the synthetic corpus for the mock provider.
    pub corpus_dir: Option<PathBuf>,
    /// Env var carrying the code-search token for the real provider.
    pub token_env: String,
    pub max_depth: u32,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub max_queries: u32,
}

impl Default for MineSection {
    fn default() -> Self {
        MineSection {
            provider: "mock".into(),
            corpus_dir: None,
            token_env: "PATROL_SEARCH_TOKEN".into(),
            max_depth: 6,
            max_retries: 5,
            retry_base_ms: 1000,
            max_queries: 2000,
        }
    }
}

impl MineSection {
    pub fn miner_config(&self) -> MinerConfig {
        MinerConfig {
            max_depth: self.max_depth,
            max_retries: self.max_retries,
            retry_base: Duration::from_millis(self.retry_base_ms),
            max_queries: self.max_queries,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxSection {
    /// "subprocess" or "container".
    pub backend: String,
    pub grace_ms: u64,
    pub poll_ms: u64,
    pub install_timeout_s: u64,
    pub node_cmd: String,
    pub npm_cmd: String,
    pub container_image: String,
    pub docker_cmd: String,
}

impl Default for SandboxSection {
    fn default() -> Self {
        SandboxSection {
            backend: "subprocess".into(),
            grace_ms: 10_000,
            poll_ms: 250,
            install_timeout_s: 120,
            node_cmd: "node".into(),
            npm_cmd: "npm".into(),
            container_image: "node:20".into(),
            docker_cmd: "docker".into(),
        }
    }
}

impl SandboxSection {
    pub fn sandbox_options(&self) -> SandboxOptions {
        SandboxOptions {
            backend: match self.backend.as_str() {
                "container" => Backend::Container,
                _ => Backend::Subprocess,
            },
            dos_mode: false,
            grace: Duration::from_millis(self.grace_ms),
            poll_interval: Duration::from_millis(self.poll_ms),
            install_timeout: Duration::from_secs(self.install_timeout_s),
            node_cmd: self.node_cmd.clone(),
            npm_cmd: self.npm_cmd.clone(),
            container: ContainerConfig {
                image: self.container_image.clone(),
                docker_cmd: self.docker_cmd.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploitSection {
    pub request_timeout_ms: u64,
    pub budget_ms: u64,
}

impl Default for ExploitSection {
    fn default() -> Self {
        ExploitSection {
            request_timeout_ms: 5_000,
            budget_ms: 60_000,
        }
    }
}

impl ExploitSection {
    pub fn probe_options(&self) -> ProbeOptions {
        ProbeOptions {
            request_timeout: Duration::from_millis(self.request_timeout_ms),
            budget: Duration::from_millis(self.budget_ms),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSection {
    /// "mock" (canned guard model) or "http".
    pub provider: String,
    pub base_url: String,
    pub model: String,
    pub key_env: String,
    pub max_retries: u32,
}

impl Default for PatchSection {
    fn default() -> Self {
        PatchSection {
            provider: "mock".into(),
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            key_env: "PATROL_LLM_KEY".into(),
            max_retries: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// "mock" or "github".
    pub forge: String,
    pub token_env: String,
    pub survey_url: Option<String>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            forge: "mock".into(),
            token_env: "PATROL_FORGE_TOKEN".into(),
            survey_url: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub parallel: usize,
    /// Clone cache for real repositories.
    pub project_cache: PathBuf,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            parallel: 4,
            project_cache: PathBuf::from(".patrol-cache"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg: Config = toml::from_str("").unwrap();
        assert_eq!(cfg.mine.provider, "mock");
        assert_eq!(cfg.patch.max_retries, 20);
        assert_eq!(cfg.sandbox.grace_ms, 10_000);
        assert_eq!(cfg.pipeline.parallel, 4);
    }

    #[test]
    fn partial_config_overrides() {
        let cfg: Config = toml::from_str(
            r#"
[sandbox]
backend = "container"
grace_ms = 3000

[patch]
provider = "http"
"#,
        )
        .unwrap();
        assert!(matches!(
            cfg.sandbox.sandbox_options().backend,
            Backend::Container
        ));
        assert_eq!(cfg.sandbox.sandbox_options().grace.as_millis(), 3000);
        assert_eq!(cfg.patch.provider, "http");
        // untouched sections keep defaults
        assert_eq!(cfg.exploit.request_timeout_ms, 5000);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("[mine]\nbogus = 1\n").is_err());
    }
}
