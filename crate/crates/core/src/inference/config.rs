use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{EmotionLabel, Scores};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read backend config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid backend config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid backend config: {0}")]
    Invalid(String),
}

/// Per-channel pixel normalization applied after scaling to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self { mean: [0.5; 3], std: [0.5; 3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputLayout {
    #[default]
    Nchw,
    Nhwc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnnxConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub layout: InputLayout,
    /// Apply softmax to the raw outputs; disable when the graph already ends
    /// in one.
    #[serde(default = "yes")]
    pub apply_softmax: bool,
    /// Output index → label. Checkpoint-specific, so it is never inferred.
    pub classes: Vec<EmotionLabel>,
}

fn yes() -> bool {
    true
}

impl Default for OnnxConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            layout: InputLayout::Nchw,
            apply_softmax: true,
            classes: EmotionLabel::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubFault {
    /// Behave like a missing model.
    Unavailable,
    /// Fail every inference call.
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubEntry {
    pub fingerprint: String,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StubConfig {
    /// Scores for tensors without a table entry; uniform when absent.
    #[serde(default)]
    pub default: Option<Scores>,
    #[serde(default)]
    pub entries: Vec<StubEntry>,
    #[serde(default)]
    pub fault: Option<StubFault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    Onnx(OnnxConfig),
    Stub(StubConfig),
}

/// Classifier backend selection plus its preprocessing contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub model_id: String,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(flatten)]
    pub backend: BackendKind,
}

impl BackendConfig {
    pub fn onnx(model_id: impl Into<String>, onnx: OnnxConfig) -> Self {
        Self {
            model_id: model_id.into(),
            normalization: Normalization::default(),
            backend: BackendKind::Onnx(onnx),
        }
    }

    pub fn stub(model_id: impl Into<String>, stub: StubConfig) -> Self {
        Self {
            model_id: model_id.into(),
            normalization: Normalization::default(),
            backend: BackendKind::Stub(stub),
        }
    }

    /// Parses a standalone backend config. A relative model path is taken
    /// relative to `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: BackendConfig = toml::from_str(text)?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve_paths(&mut self, base_dir: &Path) {
        if let BackendKind::Onnx(onnx) = &mut self.backend {
            if onnx.path.is_relative() {
                onnx.path = base_dir.join(&onnx.path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.normalization.std.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(ConfigError::Invalid("normalization std must be finite and non-zero".into()));
        }
        match &self.backend {
            BackendKind::Onnx(onnx) => {
                let mut seen = [false; EmotionLabel::COUNT];
                for label in &onnx.classes {
                    if std::mem::replace(&mut seen[label.index()], true) {
                        return Err(ConfigError::Invalid(format!("class `{label}` mapped twice")));
                    }
                }
                if onnx.classes.len() != EmotionLabel::COUNT {
                    return Err(ConfigError::Invalid(format!(
                        "class mapping must list all {} labels, got {}",
                        EmotionLabel::COUNT,
                        onnx.classes.len()
                    )));
                }
            }
            BackendKind::Stub(stub) => {
                let tables = stub.default.iter().chain(stub.entries.iter().map(|e| &e.scores));
                for scores in tables {
                    if !scores.is_distribution() {
                        return Err(ConfigError::Invalid(
                            "stub scores must be a probability distribution".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
