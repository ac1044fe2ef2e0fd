use std::collections::HashMap;
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("transport: {0}")]
    Transport(String),
    #[error("not found in static fetcher")]
    Missing,
}

/// Retrieves an event's web page.
pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, FetchError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchConfig {
    pub timeout: Duration,
    pub user_agent: String,
    pub max_body_bytes: u64,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            timeout: Duration::from_secs(10),
            user_agent: "crs-event-assistant/0.1".into(),
            max_body_bytes: 1024 * 1024,
        }
    }
}

/// Blocking HTTP GET fetcher.
pub struct HttpFetcher {
    agent: ureq::Agent,
    config: FetchConfig,
}

impl HttpFetcher {
    pub fn new(config: FetchConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .user_agent(config.user_agent.as_str())
            .build()
            .into();
        HttpFetcher { agent, config }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        let mut resp = self.agent.get(url).call().map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 400 {
            return Err(FetchError::Status(status));
        }
        let mut buf = Vec::new();
        resp.body_mut()
            .as_reader()
            .take(self.config.max_body_bytes)
            .read_to_end(&mut buf)
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }
}

/// Serves pages from memory; unknown URLs fail with [`FetchError::Missing`].
#[derive(Debug, Default)]
pub struct StaticFetcher {
    pages: HashMap<String, Result<String, FetchError>>,
    calls: AtomicUsize,
}

impl StaticFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_page(mut self, url: &str, body: &str) -> Self {
        self.pages.insert(url.into(), Ok(body.into()));
        self
    }

    pub fn with_status(mut self, url: &str, status: u16) -> Self {
        self.pages.insert(url.into(), Err(FetchError::Status(status)));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Fetcher for StaticFetcher {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.pages.get(url).cloned().unwrap_or(Err(FetchError::Missing))
    }
}
