use std::path::{Path, PathBuf};

use crs_core::gateway::HttpProviderConfig;
use crs_core::Money;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    pub catalog: PathBuf,
    pub provider: ProviderKind,
    /// Script for the mock provider.
    pub mock_script: Option<PathBuf>,
    pub http: HttpProviderConfig,
    /// USD per 1000 tokens.
    #[serde(with = "rust_decimal::serde::str")]
    pub cost_rate: Money,
    pub operator_token: String,
    /// Session journals and metric files. No persistence when unset.
    pub data_dir: Option<PathBuf>,
    /// Overrides the bundled prompt set.
    pub prompts: Option<PathBuf>,
    pub default_language: String,
    /// Fetch event websites for dossiers.
    pub fetch_websites: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: "127.0.0.1:8080".into(),
            catalog: PathBuf::from("catalog.jsonl"),
            provider: ProviderKind::Mock,
            mock_script: None,
            http: HttpProviderConfig::default(),
            cost_rate: Money::new(2, 3),
            operator_token: String::new(),
            data_dir: None,
            prompts: None,
            default_language: "en".into(),
            fetch_websites: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{var}: {message}")]
    Env { var: &'static str, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Environment variables read by [`ServerConfig::apply_env`].
pub const ENV_VARS: [&str; 9] = [
    "CRS_BIND",
    "CRS_CATALOG",
    "CRS_PROVIDER",
    "CRS_MOCK_SCRIPT",
    "CRS_COST_RATE",
    "CRS_OPERATOR_TOKEN",
    "CRS_DATA_DIR",
    "CRS_PROMPTS",
    "CRS_FETCH_WEBSITES",
];

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Read the file, then apply `CRS_*` environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.http = cfg.http.with_env_overrides();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("CRS_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("CRS_CATALOG") {
            self.catalog = v.into();
        }
        if let Some(v) = get("CRS_PROVIDER") {
            self.provider = match v.to_ascii_lowercase().as_str() {
                "mock" => ProviderKind::Mock,
                "http" => ProviderKind::Http,
                _ => return Err(ConfigError::Env { var: "CRS_PROVIDER", message: format!("unknown provider `{v}`") }),
            };
        }
        if let Some(v) = get("CRS_MOCK_SCRIPT") {
            self.mock_script = Some(v.into());
        }
        if let Some(v) = get("CRS_COST_RATE") {
            self.cost_rate = v
                .parse()
                .map_err(|e| ConfigError::Env { var: "CRS_COST_RATE", message: format!("{e}") })?;
        }
        if let Some(v) = get("CRS_OPERATOR_TOKEN") {
            self.operator_token = v;
        }
        if let Some(v) = get("CRS_DATA_DIR") {
            self.data_dir = Some(v.into());
        }
        if let Some(v) = get("CRS_PROMPTS") {
            self.prompts = Some(v.into());
        }
        if let Some(v) = get("CRS_FETCH_WEBSITES") {
            self.fetch_websites = matches!(v.as_str(), "1" | "true" | "yes");
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cost_rate <= Money::ZERO {
            return Err(ConfigError::Invalid("cost_rate must be positive".into()));
        }
        if self.operator_token.trim().is_empty() {
            return Err(ConfigError::Invalid("operator_token must be set".into()));
        }
        if self.provider == ProviderKind::Mock && self.mock_script.is_none() {
            return Err(ConfigError::Invalid("the mock provider needs mock_script".into()));
        }
        Ok(())
    }

    /// Relative paths in a config file are taken relative to the file.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.catalog);
        for p in [&mut self.mock_script, &mut self.data_dir, &mut self.prompts].into_iter().flatten() {
            fix(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
bind = "0.0.0.0:9000"
catalog = "events.jsonl"
provider = "mock"
mock_script = "script.jsonl"
cost_rate = "0.002"
operator_token = "secret"

[http]
model = "gpt-4"
"#;

    #[test]
    fn file_then_env() {
        let mut cfg = ServerConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9000");
        assert_eq!(cfg.http.model, "gpt-4");
        assert_eq!(cfg.cost_rate, Money::new(2, 3));
        cfg.apply_env(|k| match k {
            "CRS_COST_RATE" => Some("0.0015".into()),
            "CRS_PROVIDER" => Some("HTTP".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.cost_rate, Money::new(15, 4));
        assert_eq!(cfg.provider, ProviderKind::Http);
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_env_value() {
        let mut cfg = ServerConfig::from_toml(SAMPLE).unwrap();
        let err = cfg.apply_env(|k| (k == "CRS_PROVIDER").then(|| "carrier-pigeon".into())).unwrap_err();
        assert!(matches!(err, ConfigError::Env { var: "CRS_PROVIDER", .. }));
    }

    #[test]
    fn operator_token_required() {
        let mut cfg = ServerConfig::from_toml(SAMPLE).unwrap();
        cfg.operator_token.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut cfg = ServerConfig::from_toml(SAMPLE).unwrap();
        cfg.resolve_paths(Path::new("/etc/crs"));
        assert_eq!(cfg.catalog, PathBuf::from("/etc/crs/events.jsonl"));
        assert_eq!(cfg.mock_script, Some(PathBuf::from("/etc/crs/script.jsonl")));
    }
}
