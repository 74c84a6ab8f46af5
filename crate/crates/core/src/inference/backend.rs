use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use tract_onnx::prelude::*;

use super::config::{BackendConfig, BackendKind, InputLayout, OnnxConfig, StubConfig, StubFault};
use super::{ImageTensor, InferenceError, CHANNELS, MODEL_SIDE};
use crate::domain::{EmotionLabel, Scores};

/// A classifier producing a score vector for a preprocessed frame.
///
/// Instances are exclusive-use (`&mut self`); callers that share one across
/// tasks serialize access.
pub trait ClassifierBackend: Send {
    fn model_id(&self) -> &str;

    /// Whether a model is loaded and inference can be attempted.
    fn is_ready(&self) -> bool {
        true
    }

    fn scores(&mut self, tensor: &ImageTensor) -> Result<Scores, InferenceError>;
}

/// Hex SHA-256 over the tensor's little-endian f32 bytes.
pub fn fingerprint(tensor: &ImageTensor) -> String {
    let mut hasher = Sha256::new();
    for v in tensor.as_hwc() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Builds the configured backend. A backend that fails to load is replaced
/// by an [`UnavailableBackend`] carrying the reason.
pub fn load_backend(config: &BackendConfig) -> Box<dyn ClassifierBackend> {
    match &config.backend {
        BackendKind::Stub(stub) => Box::new(StubBackend::from_config(&config.model_id, stub)),
        BackendKind::Onnx(onnx) => match OnnxBackend::load(&config.model_id, onnx) {
            Ok(backend) => Box::new(backend),
            Err(err) => {
                tracing::warn!(model_id = %config.model_id, "classifier not loaded: {err}");
                Box::new(UnavailableBackend {
                    model_id: config.model_id.clone(),
                    reason: err.to_string(),
                })
            }
        },
    }
}

/// Deterministic table-driven classifier for tests and offline demos.
#[derive(Debug, Clone)]
pub struct StubBackend {
    model_id: String,
    table: HashMap<String, Scores>,
    default: Scores,
    fault: Option<StubFault>,
}

impl StubBackend {
    pub fn constant(model_id: impl Into<String>, scores: Scores) -> Self {
        Self {
            model_id: model_id.into(),
            table: HashMap::new(),
            default: scores,
            fault: None,
        }
    }

    pub fn from_config(model_id: &str, config: &StubConfig) -> Self {
        Self {
            model_id: model_id.to_string(),
            table: config
                .entries
                .iter()
                .map(|e| (e.fingerprint.clone(), e.scores))
                .collect(),
            default: config.default.unwrap_or_else(Scores::uniform),
            fault: config.fault,
        }
    }

    pub fn with_entry(mut self, fingerprint: impl Into<String>, scores: Scores) -> Self {
        self.table.insert(fingerprint.into(), scores);
        self
    }

    pub fn with_fault(mut self, fault: Option<StubFault>) -> Self {
        self.fault = fault;
        self
    }
}

impl ClassifierBackend for StubBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_ready(&self) -> bool {
        self.fault != Some(StubFault::Unavailable)
    }

    fn scores(&mut self, tensor: &ImageTensor) -> Result<Scores, InferenceError> {
        match self.fault {
            Some(StubFault::Unavailable) => {
                return Err(InferenceError::BackendUnavailable("stub configured as unavailable".into()))
            }
            Some(StubFault::Failure) => {
                return Err(InferenceError::InferenceFailure("stub configured to fail".into()))
            }
            None => {}
        }
        Ok(self
            .table
            .get(&fingerprint(tensor))
            .copied()
            .unwrap_or(self.default))
    }
}

/// Stand-in for a backend whose model could not be loaded.
#[derive(Debug, Clone)]
pub struct UnavailableBackend {
    pub model_id: String,
    pub reason: String,
}

impl ClassifierBackend for UnavailableBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_ready(&self) -> bool {
        false
    }

    fn scores(&mut self, _tensor: &ImageTensor) -> Result<Scores, InferenceError> {
        Err(InferenceError::BackendUnavailable(self.reason.clone()))
    }
}

/// ONNX model executed with tract.
pub struct OnnxBackend {
    model_id: String,
    plan: Arc<TypedRunnableModel>,
    layout: InputLayout,
    apply_softmax: bool,
    classes: Vec<EmotionLabel>,
}

impl OnnxBackend {
    pub fn load(model_id: &str, config: &OnnxConfig) -> Result<Self, InferenceError> {
        if !Path::new(&config.path).is_file() {
            return Err(InferenceError::BackendUnavailable(format!(
                "model file `{}` not found",
                config.path.display()
            )));
        }
        let side = MODEL_SIDE as usize;
        let shape: [usize; 4] = match config.layout {
            InputLayout::Nchw => [1, CHANNELS, side, side],
            InputLayout::Nhwc => [1, side, side, CHANNELS],
        };
        let unavailable = |e: TractError| InferenceError::BackendUnavailable(format!("{e:#}"));
        let plan = tract_onnx::onnx()
            .model_for_path(&config.path)
            .map_err(unavailable)?
            .with_input_fact(0, f32::fact(shape).into())
            .map_err(unavailable)?
            .into_optimized()
            .map_err(unavailable)?
            .into_runnable()
            .map_err(unavailable)?;
        Ok(Self {
            model_id: model_id.to_string(),
            plan,
            layout: config.layout,
            apply_softmax: config.apply_softmax,
            classes: config.classes.clone(),
        })
    }

    fn run(&self, tensor: &ImageTensor) -> TractResult<Vec<f32>> {
        let side = MODEL_SIDE as usize;
        let input: Tensor = match self.layout {
            InputLayout::Nchw => {
                tract_ndarray::Array4::from_shape_vec((1, CHANNELS, side, side), tensor.to_chw())?
                    .into()
            }
            InputLayout::Nhwc => tract_ndarray::Array4::from_shape_vec(
                (1, side, side, CHANNELS),
                tensor.as_hwc().to_vec(),
            )?
            .into(),
        };
        let outputs = self.plan.run(tvec!(input.into()))?;
        let view = outputs[0].to_plain_array_view::<f32>()?;
        Ok(view.iter().copied().collect())
    }
}

impl ClassifierBackend for OnnxBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn scores(&mut self, tensor: &ImageTensor) -> Result<Scores, InferenceError> {
        let raw = self
            .run(tensor)
            .map_err(|e| InferenceError::InferenceFailure(format!("{e:#}")))?;
        if raw.len() != self.classes.len() {
            return Err(InferenceError::InferenceFailure(format!(
                "model produced {} outputs for {} classes",
                raw.len(),
                self.classes.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(InferenceError::InferenceFailure("model produced non-finite output".into()));
        }
        let probs = if self.apply_softmax {
            softmax(&raw)
        } else {
            let total: f64 = raw.iter().map(|&v| v as f64).sum();
            raw.iter().map(|&v| v as f64 / total).collect()
        };
        let mut values = [0.0; EmotionLabel::COUNT];
        for (label, p) in self.classes.iter().zip(probs) {
            values[label.index()] = p;
        }
        Ok(Scores::new(values))
    }
}

fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[1.0, 2.0, 3.0, -1.0, 0.0, 0.5, 9.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[6] > p[2]);
    }

    #[test]
    fn stub_looks_up_fingerprints() {
        let zeros = ImageTensor::from_hwc(vec![0.0; ImageTensor::LEN]).unwrap();
        let ones = ImageTensor::from_hwc(vec![1.0; ImageTensor::LEN]).unwrap();
        let sad = Scores::peaked(EmotionLabel::Sad, 0.7);
        let mut stub = StubBackend::constant("stub", Scores::uniform()).with_entry(fingerprint(&ones), sad);
        assert_eq!(stub.scores(&ones).unwrap(), sad);
        assert_eq!(stub.scores(&zeros).unwrap(), Scores::uniform());
        assert_ne!(fingerprint(&zeros), fingerprint(&ones));
    }

    #[test]
    fn stub_faults() {
        let t = ImageTensor::from_hwc(vec![0.0; ImageTensor::LEN]).unwrap();
        let mut down = StubBackend::constant("s", Scores::uniform()).with_fault(Some(StubFault::Unavailable));
        assert!(!down.is_ready());
        assert!(matches!(down.scores(&t), Err(InferenceError::BackendUnavailable(_))));
        let mut failing = StubBackend::constant("s", Scores::uniform()).with_fault(Some(StubFault::Failure));
        assert!(matches!(failing.scores(&t), Err(InferenceError::InferenceFailure(_))));
    }
}
