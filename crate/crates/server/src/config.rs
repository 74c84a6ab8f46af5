//! Service configuration: a TOML file plus `REFLECT_*` environment overrides.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use reflect_core::inference::BackendConfig;
use reflect_core::llm::{LlmClientConfig, PromptTemplate};
use reflect_core::voice::HttpSpeechConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    #[default]
    Ollama,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSection {
    pub kind: LlmKind,
    #[serde(flatten)]
    pub client: LlmClientConfig,
    /// Stub only: the fixed reply. Absent means the stub runtime is down.
    pub stub_reply: Option<String>,
    pub stub_delay_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    #[default]
    None,
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VoiceSection {
    pub stt: AdapterKind,
    pub tts: AdapterKind,
    pub stt_http: Option<HttpSpeechConfig>,
    pub tts_http: Option<HttpSpeechConfig>,
    /// Stub STT: transcript for clips not in `stub_transcripts`.
    pub stub_transcript: Option<String>,
    /// Stub STT: PCM fingerprint to transcript.
    pub stub_transcripts: HashMap<String, String>,
    /// Stub TTS: always fail.
    pub tts_fail: bool,
    pub capture_delay_ms: u64,
    pub stt_delay_ms: u64,
    pub tts_delay_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/records`.
    pub records_dir: Option<PathBuf>,
    /// Defaults to `<data_dir>/tmp`.
    pub temp_dir: Option<PathBuf>,
    pub media_ttl_secs: u64,
    pub sweep_interval_secs: u64,
    pub recent_context_records: usize,
    /// Extra allowed CORS origins besides localhost.
    pub cors_origins: Vec<String>,
    pub model: Option<BackendConfig>,
    pub llm: LlmSection,
    pub voice: VoiceSection,
    pub prompt: Option<PromptTemplate>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8000,
            data_dir: PathBuf::from("reflect-data"),
            records_dir: None,
            temp_dir: None,
            media_ttl_secs: 600,
            sweep_interval_secs: 60,
            recent_context_records: reflect_core::reports::RECENT_CONTEXT_RECORDS,
            cors_origins: Vec::new(),
            model: None,
            llm: LlmSection::default(),
            voice: VoiceSection::default(),
            prompt: None,
        }
    }
}

impl ServerConfig {
    /// Parses TOML; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: ServerConfig = toml::from_str(text)?;
        config.resolve_paths(base_dir);
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(p) = self.records_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.temp_dir.as_mut() {
            fix(p);
        }
        if let Some(model) = self.model.as_mut() {
            model.resolve_paths(base);
        }
    }

    /// Applies `REFLECT_HOST`, `REFLECT_PORT`, `REFLECT_DATA_DIR`,
    /// `REFLECT_RECORDS_DIR`, `REFLECT_TEMP_DIR`, `REFLECT_LLM_URL` and
    /// `REFLECT_LLM_MODEL`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("REFLECT_HOST") {
            self.host = v;
        }
        if let Some(v) = lookup("REFLECT_PORT") {
            self.port = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("REFLECT_PORT `{v}` is not a port")))?;
        }
        if let Some(v) = lookup("REFLECT_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = lookup("REFLECT_RECORDS_DIR") {
            self.records_dir = Some(v.into());
        }
        if let Some(v) = lookup("REFLECT_TEMP_DIR") {
            self.temp_dir = Some(v.into());
        }
        if let Some(v) = lookup("REFLECT_LLM_URL") {
            self.llm.client.endpoint_url = v;
        }
        if let Some(v) = lookup("REFLECT_LLM_MODEL") {
            self.llm.client.model_name = v;
        }
        Ok(())
    }

    pub fn records_dir(&self) -> PathBuf {
        self.records_dir.clone().unwrap_or_else(|| self.data_dir.join("records"))
    }

    pub fn temp_dir(&self) -> PathBuf {
        self.temp_dir.clone().unwrap_or_else(|| self.data_dir.join("tmp"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(model) = &self.model {
            model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.llm.kind == LlmKind::Ollama {
            self.llm.client.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.voice.stt == AdapterKind::Http && self.voice.stt_http.is_none() {
            return Err(ConfigError::Invalid("voice.stt = \"http\" needs [voice.stt_http]".into()));
        }
        if self.voice.tts == AdapterKind::Http && self.voice.tts_http.is_none() {
            return Err(ConfigError::Invalid("voice.tts = \"http\" needs [voice.tts_http]".into()));
        }
        if self.sweep_interval_secs == 0 {
            return Err(ConfigError::Invalid("sweep_interval_secs must be positive".into()));
        }
        let records = self.records_dir();
        let temp = self.temp_dir();
        if records.starts_with(&temp) || temp.starts_with(&records) {
            return Err(ConfigError::Invalid("records and temp directories must not overlap".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_local_and_valid() {
        let config = ServerConfig::default();
        assert_eq!(config.host, "127.0.0.1");
        assert_eq!(config.records_dir(), PathBuf::from("reflect-data/records"));
        assert_eq!(config.temp_dir(), PathBuf::from("reflect-data/tmp"));
        assert!(config.validate().is_ok());
        assert_eq!(config.voice.stt, AdapterKind::None);
    }

    #[test]
    fn example_file_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../reflect.example.toml");
        let config = ServerConfig::from_file(&path).unwrap();
        assert!(config.validate().is_ok());
        let model = config.model.expect("model table");
        assert_eq!(model.model_id, "vit-fer-finetuned");
        assert_eq!(config.llm.kind, LlmKind::Ollama);
        assert!(config.data_dir.ends_with("reflect-data"));
    }

    #[test]
    fn parses_full_file() {
        let text = r#"
            port = 9100
            data_dir = "data"

            [model]
            model_id = "stub-fer"
            kind = "stub"
            [model.default]
            angry = 0.1
            disgust = 0.1
            fear = 0.1
            happy = 0.4
            neutral = 0.1
            sad = 0.1
            surprise = 0.1

            [llm]
            kind = "stub"
            stub_reply = "hello"
            stub_delay_ms = 820
            model_name = "other"

            [voice]
            stt = "stub"
            tts = "stub"
            stub_transcript = "我很累"
            capture_delay_ms = 15
        "#;
        let config = ServerConfig::from_toml_str(text, Path::new("/srv")).unwrap();
        assert_eq!(config.port, 9100);
        assert_eq!(config.data_dir, PathBuf::from("/srv/data"));
        assert_eq!(config.llm.kind, LlmKind::Stub);
        assert_eq!(config.llm.client.model_name, "other");
        assert_eq!(config.llm.stub_delay_ms, 820);
        assert_eq!(config.voice.capture_delay_ms, 15);
        assert!(config.model.is_some());
        config.validate().unwrap();
    }

    #[test]
    fn env_overrides() {
        let mut config = ServerConfig::default();
        let env: HashMap<&str, &str> = [("REFLECT_PORT", "0"), ("REFLECT_LLM_URL", "http://127.0.0.1:1")].into();
        config.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(config.port, 0);
        assert_eq!(config.llm.client.endpoint_url, "http://127.0.0.1:1");
        assert!(config.apply_env(|k| (k == "REFLECT_PORT").then(|| "x".into())).is_err());
    }

    #[test]
    fn overlapping_dirs_are_rejected() {
        let config = ServerConfig { temp_dir: Some("reflect-data/records/tmp".into()), ..ServerConfig::default() };
        assert!(config.validate().is_err());
    }

    #[test]
    fn http_adapters_need_settings() {
        let mut config = ServerConfig::default();
        config.voice.stt = AdapterKind::Http;
        assert!(config.validate().is_err());
    }
}
