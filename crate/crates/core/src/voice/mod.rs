//! Optional voice path: audio in, transcript, reply text, reply audio out.

mod adapters;
mod audio;
mod media;
mod pipeline;

pub use adapters::{
    tone_for, Delayed, HttpSpeechConfig, HttpStt, HttpTts, SpeechToText, StubStt, StubTts, TextToSpeech,
};
pub use audio::{convert_audio, decode_audio, resample_linear, AudioError, Pcm, TARGET_RATE};
pub use media::{MediaError, MediaId, MediaStore, DEFAULT_MEDIA_TTL};
pub use pipeline::{voice_chat, LatencyTrace, VoiceAdapters, VoiceReply};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VoiceError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("speech-to-text unavailable: {0}")]
    SttUnavailable(String),
    #[error("text-to-speech unavailable: {0}")]
    TtsUnavailable(String),
    #[error("no speech recognised in the clip")]
    EmptyTranscript,
}
