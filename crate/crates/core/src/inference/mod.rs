//! Camera-frame emotion inference: base64 decoding, resize/normalize to the
//! model resolution, and classification through a pluggable backend.
//!
//! Frames are processed entirely in memory. Nothing from this module is
//! written to disk.

mod backend;
mod config;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::imageops::{self, FilterType};
use image::{ImageBuffer, Rgb, RgbImage};

use crate::domain::{EmotionPrediction, Scores, SCORE_SUM_TOLERANCE};

pub use backend::{
    fingerprint, load_backend, ClassifierBackend, OnnxBackend, StubBackend, UnavailableBackend,
};
pub use config::{
    BackendConfig, BackendKind, ConfigError, InputLayout, Normalization, OnnxConfig, StubConfig,
    StubEntry, StubFault,
};

/// Side length of the square model input.
pub const MODEL_SIDE: u32 = 224;
pub const CHANNELS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("image payload is empty")]
    EmptyPayload,
    #[error("image payload is not valid base64: {0}")]
    MalformedBase64(String),
    #[error("payload is not a supported image: {0}")]
    UnsupportedFormat(String),
    #[error("image has zero area")]
    DegenerateImage,
    #[error("classifier backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("inference failed: {0}")]
    InferenceFailure(String),
}

/// A 224×224×3 float tensor in row-major HWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Vec<f32>,
}

impl ImageTensor {
    pub const LEN: usize = (MODEL_SIDE as usize) * (MODEL_SIDE as usize) * CHANNELS;

    pub fn from_hwc(data: Vec<f32>) -> Result<Self, InferenceError> {
        if data.len() != Self::LEN {
            return Err(InferenceError::InferenceFailure(format!(
                "tensor has {} values, expected {}",
                data.len(),
                Self::LEN
            )));
        }
        Ok(Self { data })
    }

    pub fn shape(&self) -> [usize; 3] {
        [MODEL_SIDE as usize, MODEL_SIDE as usize, CHANNELS]
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * MODEL_SIDE as usize + x) * CHANNELS + c]
    }

    pub fn as_hwc(&self) -> &[f32] {
        &self.data
    }

    pub fn to_chw(&self) -> Vec<f32> {
        let side = MODEL_SIDE as usize;
        let mut out = vec![0.0; Self::LEN];
        for y in 0..side {
            for x in 0..side {
                for c in 0..CHANNELS {
                    out[c * side * side + y * side + x] = self.get(y, x, c);
                }
            }
        }
        out
    }
}

/// Decodes a base64 frame (optionally a `data:` URL) into RGB pixels.
pub fn decode_image(payload: &str) -> Result<RgbImage, InferenceError> {
    let mut body = payload.trim();
    if body.starts_with("data:") {
        body = body.split_once(',').map(|(_, rest)| rest).unwrap_or("");
    }
    if body.is_empty() {
        return Err(InferenceError::EmptyPayload);
    }
    let compact: String = body.chars().filter(|c| !c.is_ascii_whitespace()).collect();
    let bytes = STANDARD
        .decode(compact.as_bytes())
        .map_err(|e| InferenceError::MalformedBase64(e.to_string()))?;
    decode_image_bytes(&bytes)
}

/// Decodes encoded image bytes (PNG, JPEG, BMP, WebP) into RGB pixels.
pub fn decode_image_bytes(bytes: &[u8]) -> Result<RgbImage, InferenceError> {
    if bytes.is_empty() {
        return Err(InferenceError::EmptyPayload);
    }
    let format = image::guess_format(bytes)
        .map_err(|_| InferenceError::UnsupportedFormat("unrecognized image encoding".into()))?;
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| InferenceError::UnsupportedFormat(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(InferenceError::DegenerateImage);
    }
    Ok(rgb)
}

/// Bilinear resize to 224×224 followed by `(v / 255 - mean) / std` per channel.
pub fn preprocess(image: &RgbImage, norm: &Normalization) -> Result<ImageTensor, InferenceError> {
    if image.width() == 0 || image.height() == 0 {
        return Err(InferenceError::DegenerateImage);
    }
    let unit: ImageBuffer<Rgb<f32>, Vec<f32>> =
        ImageBuffer::from_fn(image.width(), image.height(), |x, y| {
            let p = image.get_pixel(x, y).0;
            Rgb([p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
        });
    let resized = if unit.dimensions() == (MODEL_SIDE, MODEL_SIDE) {
        unit
    } else {
        imageops::resize(&unit, MODEL_SIDE, MODEL_SIDE, FilterType::Triangle)
    };
    let mut data = resized.into_raw();
    for px in data.chunks_exact_mut(CHANNELS) {
        for (c, v) in px.iter_mut().enumerate() {
            *v = (*v - norm.mean[c]) / norm.std[c];
        }
    }
    ImageTensor::from_hwc(data)
}

/// Runs the backend and turns its scores into a prediction.
pub fn classify(
    tensor: &ImageTensor,
    backend: &mut dyn ClassifierBackend,
) -> Result<EmotionPrediction, InferenceError> {
    let scores = backend.scores(tensor)?;
    check_distribution(&scores)?;
    Ok(EmotionPrediction::from_scores(scores, backend.model_id()))
}

fn check_distribution(scores: &Scores) -> Result<(), InferenceError> {
    if scores.is_distribution() {
        return Ok(());
    }
    Err(InferenceError::InferenceFailure(format!(
        "backend scores are not a probability distribution (sum {}, tolerance {SCORE_SUM_TOLERANCE})",
        scores.sum()
    )))
}

/// Decode, preprocess and classify one base64 frame.
pub fn analyze_base64(
    payload: &str,
    backend: &mut dyn ClassifierBackend,
    norm: &Normalization,
) -> Result<EmotionPrediction, InferenceError> {
    let image = decode_image(payload)?;
    let tensor = preprocess(&image, norm)?;
    drop(image);
    classify(&tensor, backend)
}
