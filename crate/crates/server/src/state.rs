use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use reflect_core::inference::{load_backend, ClassifierBackend, Normalization, UnavailableBackend};
use reflect_core::llm::{LlmResponder, OllamaClient, PromptTemplate, StubResponder};
use reflect_core::store::{SessionStore, StoreError};
use reflect_core::voice::{
    Delayed, HttpStt, HttpTts, MediaStore, SpeechToText, StubStt, StubTts, TextToSpeech, VoiceAdapters,
};

use crate::config::{AdapterKind, LlmKind, ServerConfig, VoiceSection};
use crate::error::ApiError;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("cannot open session store: {0}")]
    Store(#[from] StoreError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Adapter(String),
}

pub struct AppState {
    pub store: RwLock<SessionStore>,
    /// Exclusive use; inference calls are serialised through this lock.
    pub classifier: Mutex<Box<dyn ClassifierBackend>>,
    pub normalization: Normalization,
    pub llm: Arc<dyn LlmResponder>,
    pub template: PromptTemplate,
    pub voice: Option<VoiceAdapters>,
    pub media: MediaStore,
    pub scratch_dir: PathBuf,
    pub context_records: usize,
}

pub type SharedState = Arc<AppState>;

fn ms(v: u64) -> Duration {
    Duration::from_millis(v)
}

fn build_voice(section: &VoiceSection) -> Result<Option<VoiceAdapters>, StartupError> {
    let stt: Arc<dyn SpeechToText> = match section.stt {
        AdapterKind::None => return Ok(None),
        AdapterKind::Stub => {
            let stub = StubStt { table: section.stub_transcripts.clone(), default: section.stub_transcript.clone() };
            Arc::new(Delayed::new(stub, ms(section.stt_delay_ms)))
        }
        AdapterKind::Http => {
            let http = section.stt_http.as_ref().ok_or_else(|| StartupError::Adapter("missing stt_http".into()))?;
            Arc::new(Delayed::new(HttpStt::new(http).map_err(StartupError::Adapter)?, ms(section.stt_delay_ms)))
        }
    };
    let tts: Option<Arc<dyn TextToSpeech>> = match section.tts {
        AdapterKind::None => None,
        AdapterKind::Stub => Some(Arc::new(Delayed::new(StubTts { fail: section.tts_fail }, ms(section.tts_delay_ms)))),
        AdapterKind::Http => {
            let http = section.tts_http.as_ref().ok_or_else(|| StartupError::Adapter("missing tts_http".into()))?;
            Some(Arc::new(Delayed::new(HttpTts::new(http).map_err(StartupError::Adapter)?, ms(section.tts_delay_ms))))
        }
    };
    Ok(Some(VoiceAdapters { capture_delay: ms(section.capture_delay_ms), stt, tts }))
}

impl AppState {
    pub fn from_config(config: &ServerConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let store = SessionStore::open(config.records_dir())?;
        let temp = config.temp_dir();
        let scratch_dir = temp.join("scratch");
        std::fs::create_dir_all(&scratch_dir)?;
        let media = MediaStore::new(temp.join("media"), Duration::from_secs(config.media_ttl_secs))?;

        let (classifier, normalization): (Box<dyn ClassifierBackend>, Normalization) = match &config.model {
            Some(model) => (load_backend(model), model.normalization),
            None => (
                Box::new(UnavailableBackend { model_id: "none".into(), reason: "no model configured".into() }),
                Normalization::default(),
            ),
        };
        if !classifier.is_ready() {
            tracing::warn!("emotion model not loaded; analysis requests will return 503");
        }

        let llm: Arc<dyn LlmResponder> = match config.llm.kind {
            LlmKind::Ollama => Arc::new(
                OllamaClient::new(config.llm.client.clone()).map_err(|e| StartupError::Adapter(e.to_string()))?,
            ),
            LlmKind::Stub => Arc::new(StubResponder {
                reply: config.llm.stub_reply.clone(),
                delay: ms(config.llm.stub_delay_ms),
            }),
        };

        Ok(Self {
            store: RwLock::new(store),
            classifier: Mutex::new(classifier),
            normalization,
            llm,
            template: config.prompt.clone().unwrap_or_default(),
            voice: build_voice(&config.voice)?,
            media,
            scratch_dir,
            context_records: config.recent_context_records,
        })
    }
}

/// Runs `f` against the store on the blocking pool under a read lock.
pub async fn read_store<T: Send + 'static>(
    state: &SharedState,
    f: impl FnOnce(&SessionStore) -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let store = state.store.read().unwrap_or_else(|p| p.into_inner());
        f(&store).map_err(ApiError::from)
    })
    .await
    .map_err(ApiError::internal)?
}

/// Runs `f` against the store on the blocking pool as the single writer.
pub async fn write_store<T: Send + 'static>(
    state: &SharedState,
    f: impl FnOnce(&mut SessionStore) -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut store = state.store.write().unwrap_or_else(|p| p.into_inner());
        f(&mut store).map_err(ApiError::from)
    })
    .await
    .map_err(ApiError::internal)?
}
