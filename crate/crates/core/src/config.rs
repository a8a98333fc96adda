//! Layered runtime configuration: command-line flags override environment
//! variables, which override the config file.
//!
//! The config file is a flat `key = value` text format with `#` comments.
//! The API key is environment-only (`TSADKIT_API_KEY`); a key found in a
//! config file is ignored with a warning so credentials do not end up in
//! checked-in files.

use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::backend::{Backend, BackendError, HttpProvider, MockProvider};

pub const API_KEY_ENV: &str = "TSADKIT_API_KEY";
const ENV_PREFIX: &str = "TSADKIT_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone)]
pub struct GlobalConfig {
    /// OpenAI-compatible endpoint base URL.
    pub endpoint: Option<String>,
    /// Path to a mock script; takes precedence over the endpoint.
    pub mock_script: Option<PathBuf>,
    pub consultant_model: String,
    pub client_model: String,
    pub intern_model: String,
    pub judge_model: String,
    pub timeout_s: u64,
    pub max_in_flight: usize,
    pub workers: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            mock_script: None,
            consultant_model: "consultant".into(),
            client_model: "client".into(),
            intern_model: "intern".into(),
            judge_model: "judge".into(),
            timeout_s: 120,
            max_in_flight: 4,
            workers: 4,
        }
    }
}

impl GlobalConfig {
    /// Defaults, then file values, then environment overrides.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        if let Some(path) = file {
            config.apply_file(path)?;
        }
        config.apply_env()?;
        Ok(config)
    }

    fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let parse_num = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| ConfigError::Parse(format!("{key}: expected a number, got {v:?}")))
        };
        match key {
            "endpoint" => self.endpoint = Some(value.to_string()),
            "mock_script" => self.mock_script = Some(PathBuf::from(value)),
            "consultant_model" => self.consultant_model = value.to_string(),
            "client_model" => self.client_model = value.to_string(),
            "intern_model" => self.intern_model = value.to_string(),
            "judge_model" => self.judge_model = value.to_string(),
            "timeout_s" => self.timeout_s = parse_num(value)?,
            "max_in_flight" => self.max_in_flight = parse_num(value)? as usize,
            "workers" => self.workers = parse_num(value)? as usize,
            "api_key" => {
                eprintln!("warning: ignoring api_key from config file; set {API_KEY_ENV} instead");
            }
            other => {
                eprintln!("warning: unknown config key {other:?} ignored");
            }
        }
        Ok(())
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse(format!(
                    "{} line {}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn apply_env(&mut self) -> Result<(), ConfigError> {
        for key in [
            "endpoint",
            "mock_script",
            "consultant_model",
            "client_model",
            "intern_model",
            "judge_model",
            "timeout_s",
            "max_in_flight",
            "workers",
        ] {
            let var = format!("{ENV_PREFIX}{}", key.to_uppercase());
            if let Ok(value) = std::env::var(&var) {
                if !value.is_empty() {
                    self.apply_kv(key, &value)?;
                }
            }
        }
        Ok(())
    }

    /// Whether any chat backend can be constructed.
    pub fn has_backend(&self) -> bool {
        self.mock_script.is_some() || self.endpoint.is_some()
    }

    /// Build the configured backend: the mock script when present, else the
    /// HTTP endpoint with the API key from the environment.
    pub fn build_backend(&self) -> Result<Backend, ConfigError> {
        if let Some(script) = &self.mock_script {
            let provider = MockProvider::from_script_path(script)?;
            return Ok(Backend::new(Box::new(provider), self.max_in_flight)
                .with_base_backoff(Duration::from_millis(10)));
        }
        if let Some(endpoint) = &self.endpoint {
            let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
            let provider =
                HttpProvider::new(endpoint, api_key, Duration::from_secs(self.timeout_s))?;
            return Ok(Backend::new(Box::new(provider), self.max_in_flight));
        }
        Err(ConfigError::Backend(BackendError::Config(
            "no backend configured: set mock_script or endpoint (flag, environment, or config file)"
                .into(),
        )))
    }
}
