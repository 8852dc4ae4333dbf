//! Service configuration file (TOML) plus `LLM_*` environment overrides.
//!
//! ```toml
//! [server]
//! bind = "127.0.0.1:8787"
//! data_dir = "data"
//!
//! [session]
//! condition = "chatlearn"
//! similarity_threshold = 0.15
//!
//! [provider]
//! kind = "mock"
//! mock_script = "fixtures/demo.mock.jsonl"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context as _};
use chatlearn_core::llm::http::{HttpProvider, HttpSettings, DEFAULT_TIMEOUT};
use chatlearn_core::llm::mock::MockProvider;
use chatlearn_core::llm::{DecodingParams, Gateway, GatewayOptions};
use chatlearn_core::SessionConfig;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    pub data_dir: PathBuf,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8787".into(),
            data_dir: PathBuf::from("chatlearn-data"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    pub mock_script: Option<PathBuf>,
    pub base_url: Option<String>,
    pub chat_model: Option<String>,
    pub embed_model: Option<String>,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub decoding: DecodingParams,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Http,
            mock_script: None,
            base_url: None,
            chat_model: None,
            embed_model: None,
            api_key: None,
            timeout_secs: DEFAULT_TIMEOUT.as_secs(),
            max_in_flight: GatewayOptions::default().max_in_flight,
            decoding: DecodingParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub server: ServerSection,
    pub session: SessionConfig,
    pub provider: ProviderSection,
}

impl ServiceConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text).context("bad config")?;
        config.session.validate().context("bad [session] section")?;
        Ok(config)
    }

    /// Reads the file, resolves relative paths against its directory and
    /// applies environment overrides.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.server.data_dir = base.join(&config.server.data_dir);
        if let Some(script) = &config.provider.mock_script {
            config.provider.mock_script = Some(base.join(script));
        }
        config.provider.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }
}

impl ProviderSection {
    /// `LLM_PROVIDER` (`mock` or `http`), `LLM_MOCK_SCRIPT`, `LLM_BASE_URL`,
    /// `LLM_CHAT_MODEL`, `LLM_EMBED_MODEL` and `LLM_API_KEY` win over the file.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        let var = |k: &str| var(k).filter(|v| !v.is_empty());
        match var("LLM_PROVIDER").as_deref() {
            Some("mock") => self.kind = ProviderKind::Mock,
            Some("http") => self.kind = ProviderKind::Http,
            Some(other) => tracing::warn!(provider = other, "ignoring unknown LLM_PROVIDER"),
            None => {}
        }
        if let Some(p) = var("LLM_MOCK_SCRIPT") {
            self.mock_script = Some(PathBuf::from(p));
        }
        for (key, slot) in [
            ("LLM_BASE_URL", &mut self.base_url),
            ("LLM_CHAT_MODEL", &mut self.chat_model),
            ("LLM_EMBED_MODEL", &mut self.embed_model),
            ("LLM_API_KEY", &mut self.api_key),
        ] {
            if let Some(v) = var(key) {
                *slot = Some(v);
            }
        }
    }

    pub fn gateway(&self) -> anyhow::Result<Gateway> {
        let options = GatewayOptions {
            params: self.decoding.clone(),
            max_in_flight: self.max_in_flight,
        };
        match self.kind {
            ProviderKind::Mock => {
                let Some(path) = &self.mock_script else {
                    bail!("mock provider needs a script (provider.mock_script or LLM_MOCK_SCRIPT)");
                };
                let mock = MockProvider::from_file(path).with_context(|| format!("mock script {}", path.display()))?;
                Ok(Gateway::single(Arc::new(mock), options))
            }
            ProviderKind::Http => {
                let need = |v: &Option<String>, name: &str| {
                    v.clone().with_context(|| format!("provider.{name} (or its LLM_* variable) is not set"))
                };
                let settings = HttpSettings {
                    base_url: need(&self.base_url, "base_url")?,
                    chat_model: need(&self.chat_model, "chat_model")?,
                    embed_model: need(&self.embed_model, "embed_model")?,
                    api_key: self.api_key.clone(),
                    timeout: Duration::from_secs(self.timeout_secs),
                };
                let provider = HttpProvider::new(settings).map_err(|e| anyhow::anyhow!("http client: {e}"))?;
                Ok(Gateway::single(Arc::new(provider), options))
            }
        }
    }
}
