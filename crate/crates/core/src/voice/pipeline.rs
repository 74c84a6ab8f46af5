use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::adapters::{SpeechToText, TextToSpeech};
use super::audio::decode_audio;
use super::media::{MediaId, MediaStore};
use super::VoiceError;
use crate::llm::{LlmResponder, PromptTemplate, FALLBACK_MESSAGE};

/// Per-stage wall time in milliseconds. `total_ms` is the sum of the four
/// stages, which are measured over contiguous spans.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyTrace {
    pub capture_ms: f64,
    pub asr_ms: f64,
    pub llm_ms: f64,
    pub tts_ms: f64,
    pub total_ms: f64,
}

impl LatencyTrace {
    pub fn from_stages(capture_ms: f64, asr_ms: f64, llm_ms: f64, tts_ms: f64) -> Self {
        Self {
            capture_ms,
            asr_ms,
            llm_ms,
            tts_ms,
            total_ms: capture_ms + asr_ms + llm_ms + tts_ms,
        }
    }

    pub fn is_additive(&self) -> bool {
        self.total_ms == self.capture_ms + self.asr_ms + self.llm_ms + self.tts_ms
    }
}

#[derive(Clone)]
pub struct VoiceAdapters {
    /// Extra latency injected into the capture stage (decode and normalise).
    pub capture_delay: Duration,
    pub stt: Arc<dyn SpeechToText>,
    /// `None` gives text-only replies.
    pub tts: Option<Arc<dyn TextToSpeech>>,
}

impl VoiceAdapters {
    pub fn uses_external_service(&self) -> bool {
        self.stt.is_external() || self.tts.as_ref().is_some_and(|t| t.is_external())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceReply {
    pub transcript: String,
    pub reply_text: String,
    pub reply_audio_id: Option<MediaId>,
    /// True when the language model was unreachable and a canned reply was used.
    pub fallback: bool,
    pub trace: LatencyTrace,
}

fn ms(from: Instant, to: Instant) -> f64 {
    to.duration_since(from).as_secs_f64() * 1000.0
}

/// Runs one voice turn: decode, transcribe, reply, synthesise.
///
/// Transcription failures are returned to the caller. A language model
/// failure yields the fallback text, and a synthesis failure yields a
/// text-only reply with `tts_ms = 0`.
pub async fn voice_chat(
    audio: &[u8],
    adapters: &VoiceAdapters,
    llm: &dyn LlmResponder,
    template: &PromptTemplate,
    media: &MediaStore,
) -> Result<VoiceReply, VoiceError> {
    let t0 = Instant::now();
    let pcm = decode_audio(audio)?;
    if !adapters.capture_delay.is_zero() {
        tokio::time::sleep(adapters.capture_delay).await;
    }
    let t1 = Instant::now();

    let transcript = adapters.stt.transcribe(&pcm).await?;
    if transcript.trim().is_empty() {
        return Err(VoiceError::EmptyTranscript);
    }
    let t2 = Instant::now();

    let prompt = template.build_voice(&transcript);
    let (reply_text, fallback) = match llm.complete(&prompt).await {
        Ok(text) => (text, false),
        Err(err) => {
            tracing::warn!("voice reply falls back: {err}");
            (FALLBACK_MESSAGE.to_string(), true)
        }
    };
    let t3 = Instant::now();

    let mut reply_audio_id = None;
    let mut tts_ms = 0.0;
    if let Some(tts) = &adapters.tts {
        let stored = match tts.synthesize(&reply_text).await {
            Ok(wav) => media
                .put(&wav)
                .map_err(|e| VoiceError::TtsUnavailable(format!("cannot store reply audio: {e}"))),
            Err(err) => Err(err),
        };
        match stored {
            Ok(id) => {
                reply_audio_id = Some(id);
                tts_ms = ms(t3, Instant::now());
            }
            Err(err) => tracing::warn!("text-only voice reply: {err}"),
        }
    }

    Ok(VoiceReply {
        transcript,
        reply_text,
        reply_audio_id,
        fallback,
        trace: LatencyTrace::from_stages(ms(t0, t1), ms(t1, t2), ms(t2, t3), tts_ms),
    })
}
