use std::collections::HashMap;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use reflect_core::domain::{
    now_seconds, validate_record, EmotionLabel, EmotionPrediction, PromptFields, RecordId, ReflectionEntry,
    SessionRecord, ThreeStepSuggestion,
};
use reflect_core::inference::{classify, decode_image, preprocess};
use reflect_core::llm::{parse_three_steps, FALLBACK_MESSAGE, SAFETY_STATEMENT};
use reflect_core::reports::{build_daily_report, build_weekly_report, recent_context, Week};
use reflect_core::store::{cleanup_temp, Deletion, SessionStore};
use reflect_core::voice::voice_chat;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::{ApiError, ErrorCode};
use crate::state::{read_store, write_store, SharedState};

pub const IMAGE_BODY_LIMIT: usize = 10 * 1024 * 1024;
pub const AUDIO_BODY_LIMIT: usize = 20 * 1024 * 1024;
const PROBE_TIMEOUT: Duration = Duration::from_secs(1);

pub const ROUTES: [&str; 11] = [
    "GET /api/health",
    "POST /api/emotion/analyze",
    "POST /api/chat",
    "POST /api/sessions",
    "GET /api/sessions",
    "GET /api/sessions/{id}",
    "DELETE /api/sessions/{id}",
    "GET /api/reports/daily",
    "GET /api/reports/weekly",
    "GET /api/media/{id}",
    "POST /api/temp/cleanup",
];

pub fn router(state: SharedState, extra_origins: &[String]) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route(
            "/api/emotion/analyze",
            post(analyze).layer(DefaultBodyLimit::max(IMAGE_BODY_LIMIT)),
        )
        .route("/api/chat", post(chat).layer(DefaultBodyLimit::max(AUDIO_BODY_LIMIT)))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session).delete(delete_session))
        .route("/api/reports/daily", get(daily_report))
        .route("/api/reports/weekly", get(weekly_report))
        .route("/api/media/{id}", get(fetch_media))
        .route("/api/temp/cleanup", post(temp_cleanup))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed on this route")
        })
        .layer(cors(extra_origins))
        .with_state(state)
}

fn is_local_origin(origin: &str) -> bool {
    let Some(rest) = origin.strip_prefix("http://").or_else(|| origin.strip_prefix("https://")) else {
        return false;
    };
    let host = match rest.strip_prefix('[') {
        Some(v6) => v6.split(']').next().map(|h| format!("[{h}]")).unwrap_or_default(),
        None => rest.split(':').next().unwrap_or_default().to_string(),
    };
    matches!(host.as_str(), "localhost" | "127.0.0.1" | "[::1]")
}

fn cors(extra: &[String]) -> CorsLayer {
    let extra = extra.to_vec();
    CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(move |origin: &HeaderValue, _| {
            origin
                .to_str()
                .is_ok_and(|o| is_local_origin(o) || extra.iter().any(|e| e == o))
        }))
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE])
}

fn body_error(status: StatusCode, detail: impl std::fmt::Display) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(ErrorCode::PayloadTooLarge, "request body is too large")
    } else {
        ApiError::validation(format!("cannot read request body: {detail}"))
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|e| body_error(e.status(), e.body_text()))?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::validation(format!("invalid JSON body: {e}")))
}

fn query(q: Result<Query<HashMap<String, String>>, QueryRejection>) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(q)| q).map_err(|e| ApiError::validation(e.body_text()))
}

async fn health(State(state): State<SharedState>) -> Json<Value> {
    let model_state = state.clone();
    let model_probe = tokio::task::spawn_blocking(move || {
        model_state.classifier.lock().map(|b| b.is_ready()).unwrap_or(false)
    });
    let model_loaded = matches!(tokio::time::timeout(PROBE_TIMEOUT, model_probe).await, Ok(Ok(true)));
    let llm_reachable = tokio::time::timeout(PROBE_TIMEOUT, state.llm.is_reachable(PROBE_TIMEOUT))
        .await
        .unwrap_or(false);
    Json(json!({
        "status": "ok",
        "model_loaded": model_loaded,
        "llm_reachable": llm_reachable,
        "voice_enabled": state.voice.is_some(),
        "external_speech_service": state.voice.as_ref().is_some_and(|v| v.uses_external_service()),
        "routes": ROUTES,
    }))
}

#[derive(Deserialize)]
struct AnalyzeRequest {
    image: String,
}

async fn analyze(State(state): State<SharedState>, body: Result<Bytes, BytesRejection>) -> Result<Json<Value>, ApiError> {
    let request: AnalyzeRequest = parse_json(body)?;
    let prediction = tokio::task::spawn_blocking(move || {
        let image = decode_image(&request.image)?;
        let tensor = preprocess(&image, &state.normalization)?;
        drop(image);
        let mut backend = state.classifier.lock().unwrap_or_else(|p| p.into_inner());
        classify(&tensor, backend.as_mut())
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(Json(json!({ "prediction": prediction })))
}

async fn chat(State(state): State<SharedState>, request: Request) -> Result<Response, ApiError> {
    let content_type = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_ascii_lowercase();
    if content_type.starts_with("multipart/form-data") {
        let multipart = Multipart::from_request(request, &state)
            .await
            .map_err(|e| body_error(e.status(), e.body_text()))?;
        voice_turn(state, multipart).await
    } else if content_type.starts_with("application/json") {
        let body = Bytes::from_request(request, &state).await;
        reflect_turn(state, parse_json(body)?).await
    } else {
        Err(ApiError::new(
            ErrorCode::UnsupportedMediaType,
            "send application/json for reflection or multipart/form-data for voice",
        ))
    }
}

#[derive(Deserialize)]
struct ReflectRequest {
    #[serde(default)]
    mode: Option<String>,
    confirmed_state: EmotionLabel,
    #[serde(default)]
    detected_emotion: Option<EmotionPrediction>,
    reflection: ReflectionEntry,
}

#[derive(Serialize)]
struct ReflectResponse {
    record_id: RecordId,
    fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    suggestion: Option<ThreeStepSuggestion>,
    parse_failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_reply: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    safety_statement: &'static str,
}

async fn reflect_turn(state: SharedState, request: ReflectRequest) -> Result<Response, ApiError> {
    if let Some(mode) = request.mode.as_deref().filter(|m| *m != "reflect") {
        return Err(ApiError::validation(format!("JSON chat requests use mode \"reflect\", got \"{mode}\"")));
    }
    let now = now_seconds();
    let mut record = SessionRecord::new(now, request.detected_emotion, request.confirmed_state)
        .with_reflection(request.reflection);
    let violations = validate_record(&record);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(ApiError::validation(text.join("; ")));
    }

    let k = state.context_records;
    let context = read_store(&state, move |s| recent_context(s, now, k)).await?;
    let reflection = record.reflection.clone().expect("set above");
    let fields = PromptFields::from_parts(record.detected_emotion.as_ref(), record.confirmed_state, &reflection, context);
    let prompt = state.template.build(&fields);

    let mut response = ReflectResponse {
        record_id: record.id.clone(),
        fallback: false,
        suggestion: None,
        parse_failed: false,
        raw_reply: None,
        message: None,
        safety_statement: SAFETY_STATEMENT,
    };
    match state.llm.complete(&prompt).await {
        Ok(reply) => match parse_three_steps(&reply) {
            Ok(suggestion) => {
                record = record.with_suggestion(suggestion.clone());
                response.suggestion = Some(suggestion);
            }
            Err(mismatch) => {
                tracing::info!("model reply kept unparsed: {mismatch}");
                record.unparsed_reply = Some(reply.clone());
                response.parse_failed = true;
                response.raw_reply = Some(reply);
            }
        },
        Err(err) => {
            tracing::warn!("suggestion falls back: {err}");
            response.fallback = true;
            response.message = Some(FALLBACK_MESSAGE.to_string());
        }
    }

    write_store(&state, move |s| s.save(&record)).await?;
    Ok(Json(response).into_response())
}

async fn voice_turn(state: SharedState, mut multipart: Multipart) -> Result<Response, ApiError> {
    let mut audio = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| body_error(e.status(), e.body_text()))?
    {
        match field.name() {
            Some("mode") => {
                let mode = field.text().await.map_err(|e| body_error(e.status(), e.body_text()))?;
                if mode.trim() != "voice" {
                    return Err(ApiError::validation(format!("multipart chat requests use mode \"voice\", got \"{mode}\"")));
                }
            }
            Some("audio") => {
                audio = Some(field.bytes().await.map_err(|e| body_error(e.status(), e.body_text()))?);
            }
            _ => {}
        }
    }
    let audio = audio.ok_or_else(|| ApiError::validation("missing `audio` part"))?;
    let adapters = state
        .voice
        .as_ref()
        .ok_or_else(|| ApiError::new(ErrorCode::VoiceDisabled, "voice interaction is not configured"))?;
    let reply = voice_chat(&audio, adapters, state.llm.as_ref(), &state.template, &state.media).await?;
    drop(audio);
    let audio_url = reply.reply_audio_id.as_ref().map(|id| format!("/api/media/{id}"));
    let mut body = serde_json::to_value(&reply).map_err(ApiError::internal)?;
    body["audio_url"] = json!(audio_url);
    Ok(Json(body).into_response())
}

#[derive(Deserialize)]
struct SessionDraft {
    #[serde(default)]
    timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    detected_emotion: Option<EmotionPrediction>,
    confirmed_state: EmotionLabel,
    #[serde(default)]
    reflection: Option<ReflectionEntry>,
    #[serde(default)]
    suggestion: Option<ThreeStepSuggestion>,
    #[serde(default)]
    unparsed_reply: Option<String>,
}

async fn create_session(
    State(state): State<SharedState>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let draft: SessionDraft = parse_json(body)?;
    let mut record = SessionRecord::new(draft.timestamp.unwrap_or_else(now_seconds), draft.detected_emotion, draft.confirmed_state);
    record.reflection = draft.reflection;
    record.suggestion = draft.suggestion;
    record.unparsed_reply = draft.unparsed_reply;
    let id = write_store(&state, move |s| s.save(&record)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

fn parse_instant(name: &str, text: &str) -> Result<DateTime<Utc>, ApiError> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| ApiError::new(ErrorCode::InvalidDate, format!("`{name}` must be an RFC 3339 timestamp")))
}

fn parse_date(text: &str) -> Result<NaiveDate, ApiError> {
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .map_err(|_| ApiError::new(ErrorCode::InvalidDate, "`date` must look like 2025-01-15"))
}

async fn list_sessions(
    State(state): State<SharedState>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    let (day_start, day_end) = SessionStore::day_range(Utc::now().date_naive());
    let start = q.get("from").map(|v| parse_instant("from", v)).transpose()?.unwrap_or(day_start);
    let end = q.get("to").map(|v| parse_instant("to", v)).transpose()?.unwrap_or(day_end);
    let records = read_store(&state, move |s| s.list(start, end)).await?;
    Ok(Json(json!({ "records": records })))
}

async fn get_session(State(state): State<SharedState>, Path(id): Path<String>) -> Result<Json<SessionRecord>, ApiError> {
    let id = RecordId::from(id);
    Ok(Json(read_store(&state, move |s| s.get(&id)).await?))
}

async fn delete_session(State(state): State<SharedState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let id = RecordId::from(id);
    match write_store(&state, move |s| s.delete(&id)).await? {
        Deletion::Deleted => Ok(StatusCode::NO_CONTENT),
        Deletion::NotFound => Err(ApiError::not_found("record")),
    }
}

async fn daily_report(
    State(state): State<SharedState>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    let date = match q.get("date") {
        Some(text) => parse_date(text)?,
        None => Utc::now().date_naive(),
    };
    let report = read_store(&state, move |s| build_daily_report(s, date)).await?;
    Ok(Json(serde_json::to_value(report).map_err(ApiError::internal)?))
}

async fn weekly_report(
    State(state): State<SharedState>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    let week = match q.get("week") {
        Some(text) => text
            .parse::<Week>()
            .map_err(|e| ApiError::new(ErrorCode::InvalidWeek, e.to_string()))?,
        None => Week::containing(Utc::now().date_naive()),
    };
    let report = read_store(&state, move |s| build_weekly_report(s, week)).await?;
    Ok(Json(serde_json::to_value(report).map_err(ApiError::internal)?))
}

async fn fetch_media(State(state): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let media = state.media.clone();
    let bytes = tokio::task::spawn_blocking(move || media.take(&id))
        .await
        .map_err(ApiError::internal)??
        .ok_or_else(|| ApiError::not_found("media"))?;
    Ok((
        [(header::CONTENT_TYPE, "audio/wav"), (header::CACHE_CONTROL, "no-store")],
        bytes,
    )
        .into_response())
}

async fn temp_cleanup(
    State(state): State<SharedState>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let q = query(q)?;
    let max_age = match q.get("max_age_secs") {
        Some(v) => Duration::from_secs(
            v.parse()
                .map_err(|_| ApiError::validation("`max_age_secs` must be a non-negative integer"))?,
        ),
        None => Duration::ZERO,
    };
    let (scratch, media) = tokio::task::spawn_blocking(move || {
        (cleanup_temp(&state.scratch_dir, max_age), state.media.sweep())
    })
    .await
    .map_err(ApiError::internal)?;
    for failure in scratch.failures.iter().chain(&media.failures) {
        tracing::warn!("temp cleanup: {failure}");
    }
    Ok(Json(json!({
        "removed": scratch.removed + media.removed,
        "failures": scratch.failures.len() + media.failures.len(),
    })))
}
