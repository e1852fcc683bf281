//! `gagnegen.toml` loading with environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use gagne_core::gateway::{ProviderConfig, SecretString};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_CONFIG: &str = "gagnegen.toml";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub service: ServiceSection,
    #[serde(default)]
    pub logging: LoggingSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub base_url: Option<String>,
    pub api_key: Option<String>,
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub prompt_template: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub parallelism: Option<usize>,
    pub max_rounds: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: Option<SocketAddr>,
    pub token: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggingSection {
    pub level: Option<String>,
}

impl CliConfig {
    /// Read `explicit` (which must exist) or `./gagnegen.toml` when present,
    /// then apply environment overrides.
    pub fn load(explicit: Option<&Path>) -> Result<CliConfig, CliError> {
        let mut config = match explicit {
            Some(path) => Self::from_file(path)?,
            None if Path::new(DEFAULT_CONFIG).is_file() => Self::from_file(Path::new(DEFAULT_CONFIG))?,
            None => CliConfig::default(),
        };
        config.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<CliConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let code = if e.kind() == std::io::ErrorKind::NotFound { "file_not_found" } else { "io_error" };
            CliError::new(code, format!("{}: {e}", path.display()))
        })?;
        Self::parse(&text).map_err(|e| CliError::new("invalid_config", format!("{}: {}", path.display(), e.detail)))
    }

    pub fn parse(text: &str) -> Result<CliConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::new("invalid_config", e.to_string().trim().to_string()))
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(v) = var("LLM_API_KEY") {
            self.provider.api_key = Some(v);
        }
        if let Some(v) = var("LLM_BASE_URL") {
            self.provider.base_url = Some(v);
        }
        if let Some(v) = var("LLM_MODEL") {
            self.provider.model_name = Some(v);
        }
        if let Some(v) = var("GAGNEGEN_TOKEN") {
            self.service.token = Some(v);
        }
    }

    pub fn provider_config(&self) -> ProviderConfig {
        let p = &self.provider;
        let d = ProviderConfig::default();
        ProviderConfig {
            base_url: p.base_url.clone().unwrap_or(d.base_url),
            api_key: p.api_key.clone().map(SecretString::new).unwrap_or(d.api_key),
            model_name: p.model_name.clone().unwrap_or(d.model_name),
            temperature: p.temperature.unwrap_or(d.temperature),
            max_tokens: p.max_tokens.unwrap_or(d.max_tokens),
            timeout: p.timeout_secs.map(Duration::from_secs).unwrap_or(d.timeout),
            max_retries: p.max_retries.unwrap_or(d.max_retries),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c = CliConfig::parse(
            r#"
            [provider]
            base_url = "http://localhost:8000/v1"
            model_name = "local"
            temperature = 0.2
            timeout_secs = 5

            [generation]
            parallelism = 2

            [service]
            bind = "127.0.0.1:9000"
            "#,
        )
        .unwrap();
        let p = c.provider_config();
        assert_eq!(p.base_url, "http://localhost:8000/v1");
        assert_eq!(p.temperature, 0.2);
        assert_eq!(p.timeout, Duration::from_secs(5));
        assert_eq!(p.max_retries, 3);
        assert_eq!(c.generation.parallelism, Some(2));
        assert_eq!(c.service.bind, Some("127.0.0.1:9000".parse().unwrap()));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = CliConfig::parse("[provider]\nmodel = \"x\"\n").unwrap_err();
        assert_eq!(err.code, "invalid_config");
        assert!(CliConfig::parse("[extras]\n").is_err());
    }

    #[test]
    fn env_overrides_file() {
        let mut c = CliConfig::parse("[provider]\napi_key = \"from-file\"\nbase_url = \"http://a\"\n").unwrap();
        c.apply_env(|k| match k {
            "LLM_API_KEY" => Some("from-env".into()),
            _ => None,
        });
        let p = c.provider_config();
        assert_eq!(p.api_key.expose(), "from-env");
        assert_eq!(p.base_url, "http://a");
    }
}
