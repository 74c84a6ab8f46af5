//! Endpoint reliability and latency trials against a running service.
//!
//! Trials for one endpoint run strictly one after another; latency is the
//! client-side wall clock from sending the request to reading the full body.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use reflect_core::voice::LatencyTrace;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Health,
    EmotionAnalysis,
    VoiceChat,
    SessionSave,
    TempCleanup,
}

impl Endpoint {
    pub const ALL: [Endpoint; 5] =
        [Endpoint::Health, Endpoint::EmotionAnalysis, Endpoint::VoiceChat, Endpoint::SessionSave, Endpoint::TempCleanup];

    pub fn title(self) -> &'static str {
        match self {
            Endpoint::Health => "Health check",
            Endpoint::EmotionAnalysis => "Emotion analysis",
            Endpoint::VoiceChat => "Voice chat",
            Endpoint::SessionSave => "Session saving",
            Endpoint::TempCleanup => "Temporary cleanup",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeStep {
    pub endpoint: Endpoint,
    pub trials: u32,
}

/// Request payloads the trials send.
#[derive(Debug, Clone, Default)]
pub struct Fixtures {
    /// Base64 image (optionally a data URL) for emotion analysis.
    pub image: Option<String>,
    /// Audio clips for voice chat, used round-robin.
    pub voice_clips: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Default)]
pub struct ProbePlan {
    pub steps: Vec<ProbeStep>,
    pub fixtures: Fixtures,
    pub request_timeout: Option<Duration>,
}

impl ProbePlan {
    pub fn trials(&self, endpoint: Endpoint) -> u32 {
        self.steps.iter().filter(|s| s.endpoint == endpoint).map(|s| s.trials).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("invalid base URL `{0}`")]
    BaseUrl(String),
    #[error("{0} trials need a fixture: {1}")]
    MissingFixture(&'static str, &'static str),
    #[error("cannot build HTTP client: {0}")]
    Client(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointRow {
    pub endpoint: Endpoint,
    pub title: String,
    pub trials: u32,
    pub successes: u32,
    pub failures: u32,
    /// `None` when no trials ran.
    pub success_percent: Option<f64>,
    /// Latency over successful trials, in milliseconds.
    pub mean_ms: Option<f64>,
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
    /// First few failure descriptions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl StageStats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let n = values.clone().count();
        if n == 0 {
            return None;
        }
        Some(Self {
            mean_ms: values.clone().sum::<f64>() / n as f64,
            min_ms: values.clone().fold(f64::INFINITY, f64::min),
            max_ms: values.fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Per-stage summary of voice traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiceBreakdown {
    pub capture: StageStats,
    pub asr: StageStats,
    pub llm: StageStats,
    pub tts: StageStats,
    pub total: StageStats,
}

impl VoiceBreakdown {
    pub fn from_traces(traces: &[LatencyTrace]) -> Option<Self> {
        let it = traces.iter();
        Some(Self {
            capture: StageStats::of(it.clone().map(|t| t.capture_ms))?,
            asr: StageStats::of(it.clone().map(|t| t.asr_ms))?,
            llm: StageStats::of(it.clone().map(|t| t.llm_ms))?,
            tts: StageStats::of(it.clone().map(|t| t.tts_ms))?,
            total: StageStats::of(it.map(|t| t.total_ms))?,
        })
    }

    pub fn rows(&self) -> [(&'static str, StageStats); 5] {
        [
            ("Audio capture", self.capture),
            ("ASR recognition", self.asr),
            ("LLM response", self.llm),
            ("TTS synthesis", self.tts),
            ("End-to-end total", self.total),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub base_url: String,
    pub rows: Vec<EndpointRow>,
    pub voice_traces: Vec<LatencyTrace>,
    pub voice_breakdown: Option<VoiceBreakdown>,
    pub wall_time_ms: f64,
}

impl ReliabilityReport {
    pub fn row(&self, endpoint: Endpoint) -> Option<&EndpointRow> {
        self.rows.iter().find(|r| r.endpoint == endpoint)
    }

    pub fn render_tables(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20}{:>8}{:>10}{:>12}{:>10}", "Component", "Trials", "Success", "Latency", "Failures");
        for row in &self.rows {
            let success = row.success_percent.map_or("n/a".to_string(), |p| format!("{p:.0}%"));
            let latency = row.mean_ms.map_or("n/a".to_string(), fmt_ms);
            let _ = writeln!(
                out,
                "{:<20}{:>8}{:>10}{:>12}{:>10}",
                row.title, row.trials, success, latency, row.failures
            );
        }
        if let Some(b) = &self.voice_breakdown {
            let _ = writeln!(out, "\n{:<20}{:>12}{:>12}{:>12}", "Metric", "Mean", "Min", "Max");
            for (name, s) in b.rows() {
                let _ = writeln!(out, "{name:<20}{:>12}{:>12}{:>12}", fmt_ms(s.mean_ms), fmt_ms(s.min_ms), fmt_ms(s.max_ms));
            }
        }
        let _ = writeln!(out, "\nWall time: {}", fmt_ms(self.wall_time_ms));
        out
    }
}

fn fmt_ms(ms: f64) -> String {
    if ms < 1.0 {
        "<1 ms".to_string()
    } else {
        format!("{ms:.0} ms")
    }
}

const MAX_RECORDED_ERRORS: usize = 5;

struct Prober {
    client: reqwest::Client,
    base: String,
    fixtures: Fixtures,
    traces: Vec<LatencyTrace>,
    voice_turns: usize,
}

impl Prober {
    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn trial(&mut self, endpoint: Endpoint) -> Result<f64, String> {
        let request = match endpoint {
            Endpoint::Health => self.client.get(self.url("/api/health")),
            Endpoint::EmotionAnalysis => {
                let image = self.fixtures.image.clone().unwrap_or_default();
                self.client.post(self.url("/api/emotion/analyze")).json(&json!({ "image": image }))
            }
            Endpoint::VoiceChat => {
                let clips = &self.fixtures.voice_clips;
                let clip = clips[self.voice_turns % clips.len()].clone();
                self.voice_turns += 1;
                let part = reqwest::multipart::Part::bytes(clip)
                    .file_name("clip.webm")
                    .mime_str("audio/webm")
                    .map_err(|e| e.to_string())?;
                let form = reqwest::multipart::Form::new().text("mode", "voice").part("audio", part);
                self.client.post(self.url("/api/chat")).multipart(form)
            }
            Endpoint::SessionSave => self.client.post(self.url("/api/sessions")).json(&json!({
                "confirmed_state": "neutral",
                "reflection": {
                    "blockage": "reliability probe",
                    "tried": "nothing yet",
                    "goal": "finish the probe run"
                }
            })),
            Endpoint::TempCleanup => self.client.post(self.url("/api/temp/cleanup")),
        };

        let started = Instant::now();
        let response = request.send().await.map_err(|e| format!("request failed: {e}"))?;
        let status = response.status();
        let body = response.bytes().await.map_err(|e| format!("reading body failed: {e}"))?;
        let elapsed = started.elapsed().as_secs_f64() * 1000.0;

        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", String::from_utf8_lossy(&body)));
        }
        let body: Value = serde_json::from_slice(&body).map_err(|e| format!("response is not JSON: {e}"))?;
        self.check(endpoint, &body).await?;
        Ok(elapsed)
    }

    async fn check(&mut self, endpoint: Endpoint, body: &Value) -> Result<(), String> {
        let ok = match endpoint {
            Endpoint::Health => body["status"] == "ok",
            Endpoint::EmotionAnalysis => body["prediction"]["label"].is_string(),
            Endpoint::SessionSave => body["id"].is_string(),
            Endpoint::TempCleanup => body["removed"].is_u64(),
            Endpoint::VoiceChat => {
                let trace: LatencyTrace = serde_json::from_value(body["trace"].clone())
                    .map_err(|e| format!("voice reply has no latency trace: {e}"))?;
                self.traces.push(trace);
                // Reply audio is fetch-once; claiming it keeps the service's
                // temp area clean.
                if let Some(url) = body["audio_url"].as_str() {
                    let fetched = self.client.get(self.url(url)).send().await.map_err(|e| e.to_string())?;
                    if !fetched.status().is_success() {
                        return Err(format!("reply audio fetch returned {}", fetched.status()));
                    }
                    fetched.bytes().await.map_err(|e| e.to_string())?;
                }
                body["reply_text"].is_string()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("unexpected response body: {body}"))
        }
    }
}

/// Runs every planned step against `base_url` and summarises the results.
pub async fn run_reliability_suite(base_url: &str, plan: &ProbePlan) -> Result<ReliabilityReport, ProbeError> {
    let base = base_url.trim_end_matches('/').to_string();
    if !(base.starts_with("http://") || base.starts_with("https://")) {
        return Err(ProbeError::BaseUrl(base_url.to_string()));
    }
    if plan.trials(Endpoint::EmotionAnalysis) > 0 && plan.fixtures.image.is_none() {
        return Err(ProbeError::MissingFixture("emotion analysis", "an image"));
    }
    if plan.trials(Endpoint::VoiceChat) > 0 && plan.fixtures.voice_clips.is_empty() {
        return Err(ProbeError::MissingFixture("voice chat", "at least one audio clip"));
    }
    let client = reqwest::Client::builder()
        .timeout(plan.request_timeout.unwrap_or(Duration::from_secs(30)))
        .build()
        .map_err(|e| ProbeError::Client(e.to_string()))?;
    let mut prober = Prober { client, base: base.clone(), fixtures: plan.fixtures.clone(), traces: Vec::new(), voice_turns: 0 };

    let started = Instant::now();
    let mut rows = Vec::new();
    for step in &plan.steps {
        let mut latencies = Vec::new();
        let mut errors = Vec::new();
        for _ in 0..step.trials {
            match prober.trial(step.endpoint).await {
                Ok(ms) => latencies.push(ms),
                Err(e) => {
                    if errors.len() < MAX_RECORDED_ERRORS {
                        errors.push(e);
                    }
                }
            }
        }
        let successes = latencies.len() as u32;
        let stats = StageStats::of(latencies.iter().copied());
        rows.push(EndpointRow {
            endpoint: step.endpoint,
            title: step.endpoint.title().to_string(),
            trials: step.trials,
            successes,
            failures: step.trials - successes,
            success_percent: (step.trials > 0).then(|| 100.0 * successes as f64 / step.trials as f64),
            mean_ms: stats.map(|s| s.mean_ms),
            min_ms: stats.map(|s| s.min_ms),
            max_ms: stats.map(|s| s.max_ms),
            errors,
        });
    }
    let wall_time_ms = started.elapsed().as_secs_f64() * 1000.0;
    let voice_breakdown = VoiceBreakdown::from_traces(&prober.traces);
    Ok(ReliabilityReport { base_url: base, rows, voice_traces: prober.traces, voice_breakdown, wall_time_ms })
}
