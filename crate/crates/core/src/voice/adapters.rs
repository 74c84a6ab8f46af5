//! Speech-to-text and text-to-speech adapters.

use std::collections::HashMap;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::audio::{decode_audio, Pcm, TARGET_RATE};
use super::VoiceError;

#[async_trait]
pub trait SpeechToText: Send + Sync {
    /// True when audio leaves the machine.
    fn is_external(&self) -> bool {
        false
    }

    async fn transcribe(&self, pcm: &Pcm) -> Result<String, VoiceError>;
}

#[async_trait]
pub trait TextToSpeech: Send + Sync {
    fn is_external(&self) -> bool {
        false
    }

    /// Returns mono 16 kHz WAV bytes.
    async fn synthesize(&self, text: &str) -> Result<Vec<u8>, VoiceError>;
}

/// Transcripts looked up by PCM fingerprint, with an optional default.
#[derive(Debug, Clone, Default)]
pub struct StubStt {
    pub table: HashMap<String, String>,
    pub default: Option<String>,
}

impl StubStt {
    pub fn fixed(transcript: impl Into<String>) -> Self {
        Self { table: HashMap::new(), default: Some(transcript.into()) }
    }

    pub fn with_entry(mut self, fingerprint: impl Into<String>, transcript: impl Into<String>) -> Self {
        self.table.insert(fingerprint.into(), transcript.into());
        self
    }
}

#[async_trait]
impl SpeechToText for StubStt {
    async fn transcribe(&self, pcm: &Pcm) -> Result<String, VoiceError> {
        self.table
            .get(&pcm.fingerprint())
            .or(self.default.as_ref())
            .cloned()
            .ok_or_else(|| VoiceError::SttUnavailable("no stub transcript for this clip".into()))
    }
}

/// Deterministic tone whose pitch and length derive from the text.
#[derive(Debug, Clone, Default)]
pub struct StubTts {
    pub fail: bool,
}

impl StubTts {
    pub fn failing() -> Self {
        Self { fail: true }
    }
}

/// 200 ms plus 20 ms per character, capped at 3 s.
pub fn tone_for(text: &str) -> Pcm {
    let digest = Sha256::digest(text.as_bytes());
    let freq = 220.0 + f64::from(u16::from_le_bytes([digest[0], digest[1]]) % 440);
    let ms = (200 + 20 * text.chars().count()).min(3000);
    let n = TARGET_RATE as usize * ms / 1000;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / TARGET_RATE as f64;
            (8000.0 * (2.0 * std::f64::consts::PI * freq * t).sin()).round() as i16
        })
        .collect();
    Pcm { samples }
}

#[async_trait]
impl TextToSpeech for StubTts {
    async fn synthesize(&self, text: &str) -> Result<Vec<u8>, VoiceError> {
        if self.fail {
            return Err(VoiceError::TtsUnavailable("stub synthesizer configured to fail".into()));
        }
        Ok(tone_for(text).to_wav())
    }
}

/// Adds a fixed latency in front of another adapter.
#[derive(Debug, Clone)]
pub struct Delayed<T> {
    pub inner: T,
    pub delay: Duration,
}

impl<T> Delayed<T> {
    pub fn new(inner: T, delay: Duration) -> Self {
        Self { inner, delay }
    }

    async fn wait(&self) {
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
    }
}

#[async_trait]
impl<T: SpeechToText> SpeechToText for Delayed<T> {
    fn is_external(&self) -> bool {
        self.inner.is_external()
    }

    async fn transcribe(&self, pcm: &Pcm) -> Result<String, VoiceError> {
        self.wait().await;
        self.inner.transcribe(pcm).await
    }
}

#[async_trait]
impl<T: TextToSpeech> TextToSpeech for Delayed<T> {
    fn is_external(&self) -> bool {
        self.inner.is_external()
    }

    async fn synthesize(&self, text: &str) -> Result<Vec<u8>, VoiceError> {
        self.wait().await;
        self.inner.synthesize(text).await
    }
}

/// Connection settings for an external speech service. The bearer token
/// is read from the environment variable named by `token_env`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpSpeechConfig {
    pub url: String,
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_speech_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_speech_timeout_ms() -> u64 {
    30_000
}

struct HttpSpeech {
    url: String,
    token: Option<String>,
    http: reqwest::Client,
}

impl HttpSpeech {
    fn new(config: &HttpSpeechConfig) -> Result<Self, String> {
        reqwest::Url::parse(&config.url).map_err(|e| format!("bad speech service url: {e}"))?;
        let token = config.token_env.as_deref().and_then(|name| std::env::var(name).ok());
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { url: config.url.clone(), token, http })
    }

    fn post(&self) -> reqwest::RequestBuilder {
        let request = self.http.post(&self.url);
        match &self.token {
            Some(token) => request.bearer_auth(token),
            None => request,
        }
    }
}

/// Posts WAV bytes and expects `{"text": "..."}` back.
pub struct HttpStt(HttpSpeech);

impl HttpStt {
    pub fn new(config: &HttpSpeechConfig) -> Result<Self, String> {
        HttpSpeech::new(config).map(Self)
    }
}

#[derive(Deserialize)]
struct Transcript {
    text: String,
}

#[async_trait]
impl SpeechToText for HttpStt {
    fn is_external(&self) -> bool {
        true
    }

    async fn transcribe(&self, pcm: &Pcm) -> Result<String, VoiceError> {
        let fail = |e: String| VoiceError::SttUnavailable(e);
        let response = self
            .0
            .post()
            .header(reqwest::header::CONTENT_TYPE, "audio/wav")
            .body(pcm.to_wav())
            .send()
            .await
            .map_err(|e| fail(e.to_string()))?;
        if !response.status().is_success() {
            return Err(fail(format!("speech service answered HTTP {}", response.status())));
        }
        let body: Transcript = response.json().await.map_err(|e| fail(e.to_string()))?;
        Ok(body.text)
    }
}

/// Posts `{"text": "..."}` and expects audio bytes back.
pub struct HttpTts(HttpSpeech);

impl HttpTts {
    pub fn new(config: &HttpSpeechConfig) -> Result<Self, String> {
        HttpSpeech::new(config).map(Self)
    }
}

#[async_trait]
impl TextToSpeech for HttpTts {
    fn is_external(&self) -> bool {
        true
    }

    async fn synthesize(&self, text: &str) -> Result<Vec<u8>, VoiceError> {
        let fail = |e: String| VoiceError::TtsUnavailable(e);
        let response = self
            .0
            .post()
            .json(&serde_json::json!({ "text": text }))
            .send()
            .await
            .map_err(|e| fail(e.to_string()))?;
        if !response.status().is_success() {
            return Err(fail(format!("speech service answered HTTP {}", response.status())));
        }
        let bytes = response.bytes().await.map_err(|e| fail(e.to_string()))?;
        let pcm = decode_audio(&bytes).map_err(|e| fail(e.to_string()))?;
        Ok(pcm.to_wav())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn stub_stt_table_then_default() {
        let pcm = Pcm { samples: vec![1, 2, 3] };
        let other = Pcm { samples: vec![4] };
        let stt = StubStt::default().with_entry(pcm.fingerprint(), "我很累");
        assert_eq!(stt.transcribe(&pcm).await.unwrap(), "我很累");
        assert!(matches!(stt.transcribe(&other).await, Err(VoiceError::SttUnavailable(_))));
        let stt = StubStt::fixed("hello");
        assert_eq!(stt.transcribe(&other).await.unwrap(), "hello");
    }

    #[tokio::test]
    async fn stub_tts_is_deterministic() {
        let tts = StubTts::default();
        let a = tts.synthesize("reply").await.unwrap();
        assert_eq!(a, tts.synthesize("reply").await.unwrap());
        assert_ne!(a, tts.synthesize("other reply").await.unwrap());
        let pcm = decode_audio(&a).unwrap();
        assert_eq!(pcm.samples.len(), 16 * 300);
        assert!(StubTts::failing().synthesize("x").await.is_err());
    }

    #[test]
    fn http_adapters_reject_bad_urls() {
        let config = HttpSpeechConfig { url: "nope".into(), token_env: None, timeout_ms: 10 };
        assert!(HttpStt::new(&config).is_err());
        assert!(HttpTts::new(&config).is_err());
    }
}
