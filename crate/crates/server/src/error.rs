//! JSON error contract: every failure is `{code, message}` with a code from
//! a closed set and a status derived from the code.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use reflect_core::inference::InferenceError;
use reflect_core::store::StoreError;
use reflect_core::voice::{AudioError, MediaError, VoiceError};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ValidationFailed,
    MalformedBase64,
    UnsupportedFormat,
    DegenerateImage,
    BackendUnavailable,
    InferenceFailure,
    UnsupportedCodec,
    CorruptContainer,
    SttUnavailable,
    EmptyTranscript,
    VoiceDisabled,
    NotFound,
    DuplicateId,
    InvalidRange,
    InvalidDate,
    InvalidWeek,
    StorageFull,
    StorageFailure,
    PayloadTooLarge,
    UnsupportedMediaType,
    MethodNotAllowed,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 22] = [
        ErrorCode::ValidationFailed,
        ErrorCode::MalformedBase64,
        ErrorCode::UnsupportedFormat,
        ErrorCode::DegenerateImage,
        ErrorCode::BackendUnavailable,
        ErrorCode::InferenceFailure,
        ErrorCode::UnsupportedCodec,
        ErrorCode::CorruptContainer,
        ErrorCode::SttUnavailable,
        ErrorCode::EmptyTranscript,
        ErrorCode::VoiceDisabled,
        ErrorCode::NotFound,
        ErrorCode::DuplicateId,
        ErrorCode::InvalidRange,
        ErrorCode::InvalidDate,
        ErrorCode::InvalidWeek,
        ErrorCode::StorageFull,
        ErrorCode::StorageFailure,
        ErrorCode::PayloadTooLarge,
        ErrorCode::UnsupportedMediaType,
        ErrorCode::MethodNotAllowed,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            ValidationFailed | MalformedBase64 | UnsupportedFormat | DegenerateImage | CorruptContainer
            | InvalidRange | InvalidDate | InvalidWeek => StatusCode::BAD_REQUEST,
            UnsupportedCodec | UnsupportedMediaType => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            EmptyTranscript => StatusCode::UNPROCESSABLE_ENTITY,
            NotFound => StatusCode::NOT_FOUND,
            DuplicateId => StatusCode::CONFLICT,
            PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            BackendUnavailable | SttUnavailable | VoiceDisabled => StatusCode::SERVICE_UNAVAILABLE,
            StorageFull => StatusCode::INSUFFICIENT_STORAGE,
            InferenceFailure | StorageFailure | Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::ValidationFailed, message)
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(ErrorCode::NotFound, format!("{what} not found"))
    }

    pub fn internal(detail: impl std::fmt::Display) -> Self {
        tracing::error!("internal error: {detail}");
        Self::new(ErrorCode::Internal, "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<InferenceError> for ApiError {
    fn from(err: InferenceError) -> Self {
        let code = match &err {
            InferenceError::EmptyPayload | InferenceError::MalformedBase64(_) => ErrorCode::MalformedBase64,
            InferenceError::UnsupportedFormat(_) => ErrorCode::UnsupportedFormat,
            InferenceError::DegenerateImage => ErrorCode::DegenerateImage,
            InferenceError::BackendUnavailable(detail) => {
                tracing::warn!("classifier unavailable: {detail}");
                return Self::new(ErrorCode::BackendUnavailable, "emotion model is not loaded");
            }
            InferenceError::InferenceFailure(detail) => {
                tracing::error!("inference failed: {detail}");
                return Self::new(ErrorCode::InferenceFailure, "emotion inference failed");
            }
        };
        Self::new(code, err.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::Invalid(_) => Self::validation(err.to_string()),
            StoreError::DuplicateId(_) => Self::new(ErrorCode::DuplicateId, err.to_string()),
            StoreError::NotFound(_) => Self::not_found("record"),
            StoreError::InvalidRange => Self::new(ErrorCode::InvalidRange, err.to_string()),
            StoreError::StorageFull => Self::new(ErrorCode::StorageFull, "local storage is full"),
            StoreError::Io(_) | StoreError::Corrupt { .. } => {
                // Details may name files; keep them in the log only.
                tracing::error!("storage failure: {err}");
                Self::new(ErrorCode::StorageFailure, "local storage failure")
            }
        }
    }
}

impl From<AudioError> for ApiError {
    fn from(err: AudioError) -> Self {
        let code = match err {
            AudioError::UnsupportedCodec(_) => ErrorCode::UnsupportedCodec,
            AudioError::CorruptContainer(_) => ErrorCode::CorruptContainer,
        };
        Self::new(code, err.to_string())
    }
}

impl From<VoiceError> for ApiError {
    fn from(err: VoiceError) -> Self {
        match err {
            VoiceError::Audio(audio) => audio.into(),
            VoiceError::SttUnavailable(detail) => {
                tracing::warn!("speech-to-text failed: {detail}");
                Self::new(ErrorCode::SttUnavailable, "speech recognition is unavailable")
            }
            VoiceError::TtsUnavailable(detail) => Self::internal(detail),
            VoiceError::EmptyTranscript => Self::new(ErrorCode::EmptyTranscript, err.to_string()),
        }
    }
}

impl From<MediaError> for ApiError {
    fn from(err: MediaError) -> Self {
        match err {
            MediaError::InvalidId => Self::not_found("media"),
            MediaError::Io(e) => {
                tracing::error!("media failure: {e}");
                Self::new(ErrorCode::StorageFailure, "local storage failure")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn codes_are_unique_and_statuses_are_errors() {
        let names: HashSet<String> = ErrorCode::ALL
            .iter()
            .map(|c| serde_json::to_value(c).unwrap().as_str().unwrap().to_string())
            .collect();
        assert_eq!(names.len(), ErrorCode::ALL.len());
        for code in ErrorCode::ALL {
            assert!(code.status().is_client_error() || code.status().is_server_error());
        }
    }

    #[test]
    fn every_module_error_maps_to_one_code() {
        use reflect_core::domain::RecordId;
        let cases: Vec<(ApiError, ErrorCode)> = vec![
            (InferenceError::EmptyPayload.into(), ErrorCode::MalformedBase64),
            (InferenceError::MalformedBase64("x".into()).into(), ErrorCode::MalformedBase64),
            (InferenceError::UnsupportedFormat("x".into()).into(), ErrorCode::UnsupportedFormat),
            (InferenceError::DegenerateImage.into(), ErrorCode::DegenerateImage),
            (InferenceError::BackendUnavailable("/secret/model.onnx".into()).into(), ErrorCode::BackendUnavailable),
            (InferenceError::InferenceFailure("x".into()).into(), ErrorCode::InferenceFailure),
            (StoreError::Invalid(vec![]).into(), ErrorCode::ValidationFailed),
            (StoreError::DuplicateId(RecordId::from("a")).into(), ErrorCode::DuplicateId),
            (StoreError::NotFound(RecordId::from("a")).into(), ErrorCode::NotFound),
            (StoreError::InvalidRange.into(), ErrorCode::InvalidRange),
            (StoreError::StorageFull.into(), ErrorCode::StorageFull),
            (StoreError::Io(std::io::Error::other("/home/u/records")).into(), ErrorCode::StorageFailure),
            (
                StoreError::Corrupt { file: "2025-01-01.jsonl".into(), line: 1, message: "x".into() }.into(),
                ErrorCode::StorageFailure,
            ),
            (AudioError::UnsupportedCodec("A_FLAC".into()).into(), ErrorCode::UnsupportedCodec),
            (AudioError::CorruptContainer("x".into()).into(), ErrorCode::CorruptContainer),
            (VoiceError::SttUnavailable("x".into()).into(), ErrorCode::SttUnavailable),
            (VoiceError::EmptyTranscript.into(), ErrorCode::EmptyTranscript),
            (MediaError::InvalidId.into(), ErrorCode::NotFound),
        ];
        for (err, code) in cases {
            assert_eq!(err.code, code, "{err:?}");
            assert!(!err.message.contains('/'), "path leaked: {}", err.message);
        }
    }
}
