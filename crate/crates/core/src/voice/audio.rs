//! Browser audio to mono 16 kHz 16-bit PCM WAV.

use std::io::Cursor;
use std::ptr::NonNull;

use matroska_demuxer::{Frame, MatroskaFile, TrackType};
use sha2::{Digest, Sha256};

pub const TARGET_RATE: u32 = 16_000;

const EBML_MAGIC: [u8; 4] = [0x1A, 0x45, 0xDF, 0xA3];
/// Longest Opus packet (120 ms) at the target rate, per channel.
const MAX_OPUS_FRAME: usize = (TARGET_RATE as usize) * 120 / 1000;
/// Opus pre-skip is expressed at 48 kHz.
const OPUS_RATE_DIVISOR: usize = 48_000 / TARGET_RATE as usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AudioError {
    #[error("unsupported audio codec: {0}")]
    UnsupportedCodec(String),
    #[error("corrupt or unrecognised audio container: {0}")]
    CorruptContainer(String),
}

fn corrupt(msg: impl Into<String>) -> AudioError {
    AudioError::CorruptContainer(msg.into())
}

/// Mono 16 kHz signed 16-bit samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pcm {
    pub samples: Vec<i16>,
}

impl Pcm {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / TARGET_RATE as f64
    }

    /// SHA-256 of the little-endian sample bytes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.samples {
            hasher.update(s.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn to_wav(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: TARGET_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut out = Cursor::new(Vec::with_capacity(44 + self.samples.len() * 2));
        {
            let mut writer = hound::WavWriter::new(&mut out, spec).expect("in-memory wav header");
            for &s in &self.samples {
                writer.write_sample(s).expect("in-memory wav write");
            }
            writer.finalize().expect("in-memory wav finalize");
        }
        out.into_inner()
    }
}

/// Accepts WebM/Opus or WAV and returns a mono 16 kHz PCM WAV.
pub fn convert_audio(bytes: &[u8]) -> Result<Vec<u8>, AudioError> {
    Ok(decode_audio(bytes)?.to_wav())
}

/// Decodes WebM/Opus or WAV input to mono 16 kHz samples.
pub fn decode_audio(bytes: &[u8]) -> Result<Pcm, AudioError> {
    if bytes.is_empty() {
        return Err(corrupt("empty input"));
    }
    if bytes.starts_with(&EBML_MAGIC) {
        decode_webm(bytes)
    } else if bytes.len() >= 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WAVE" {
        decode_wav(bytes)
    } else {
        Err(corrupt("neither WebM nor WAV"))
    }
}

struct OpusHead {
    channels: usize,
    pre_skip: usize,
}

fn parse_opus_head(private: Option<&[u8]>, fallback_channels: usize) -> Result<OpusHead, AudioError> {
    match private {
        Some(p) if p.len() >= 19 && p.starts_with(b"OpusHead") => Ok(OpusHead {
            channels: p[9] as usize,
            pre_skip: u16::from_le_bytes([p[10], p[11]]) as usize,
        }),
        Some(_) => Err(corrupt("malformed OpusHead")),
        None => Ok(OpusHead { channels: fallback_channels, pre_skip: 0 }),
    }
}

struct Decoder(NonNull<opusic_sys::OpusDecoder>);

impl Decoder {
    fn new(channels: usize) -> Result<Self, AudioError> {
        let mut err = 0;
        // SAFETY: plain constructor; the error out-pointer is valid.
        let raw = unsafe { opusic_sys::opus_decoder_create(TARGET_RATE as i32, channels as i32, &mut err) };
        match NonNull::new(raw) {
            Some(ptr) if err == opusic_sys::OPUS_OK => Ok(Self(ptr)),
            _ => Err(corrupt(format!("cannot create opus decoder ({err})"))),
        }
    }

    /// Decodes one packet into `out`, returning samples per channel.
    fn decode(&mut self, packet: &[u8], out: &mut [i16], channels: usize) -> Result<usize, AudioError> {
        // SAFETY: `out` holds MAX_OPUS_FRAME * channels samples, matching the frame size passed in.
        let n = unsafe {
            opusic_sys::opus_decode(
                self.0.as_ptr(),
                packet.as_ptr(),
                packet.len() as i32,
                out.as_mut_ptr(),
                (out.len() / channels) as i32,
                0,
            )
        };
        usize::try_from(n).map_err(|_| corrupt(format!("opus packet failed to decode ({n})")))
    }
}

impl Drop for Decoder {
    fn drop(&mut self) {
        // SAFETY: created by opus_decoder_create and dropped once.
        unsafe { opusic_sys::opus_decoder_destroy(self.0.as_ptr()) }
    }
}

fn decode_webm(bytes: &[u8]) -> Result<Pcm, AudioError> {
    let mut mkv = MatroskaFile::open(Cursor::new(bytes)).map_err(|e| corrupt(e.to_string()))?;
    let track = mkv
        .tracks()
        .iter()
        .find(|t| t.track_type() == TrackType::Audio)
        .ok_or_else(|| corrupt("no audio track"))?;
    if track.codec_id() != "A_OPUS" {
        return Err(AudioError::UnsupportedCodec(track.codec_id().to_string()));
    }
    let track_number = track.track_number().get();
    let container_channels = track.audio().map(|a| a.channels().get() as usize).unwrap_or(1);
    let head = parse_opus_head(track.codec_private(), container_channels)?;
    if !(1..=2).contains(&head.channels) {
        return Err(AudioError::UnsupportedCodec(format!("opus with {} channels", head.channels)));
    }

    let channels = head.channels;
    let mut decoder = Decoder::new(channels)?;
    let mut buf = vec![0i16; MAX_OPUS_FRAME * channels];
    let mut samples = Vec::new();
    let mut frame = Frame::default();
    while mkv.next_frame(&mut frame).map_err(|e| corrupt(e.to_string()))? {
        if frame.track != track_number {
            continue;
        }
        let n = decoder.decode(&frame.data, &mut buf, channels)?;
        for chunk in buf[..n * channels].chunks_exact(channels) {
            let sum: i32 = chunk.iter().map(|&s| s as i32).sum();
            samples.push((sum / channels as i32) as i16);
        }
    }
    let skip = (head.pre_skip / OPUS_RATE_DIVISOR).min(samples.len());
    samples.drain(..skip);
    if samples.is_empty() {
        return Err(corrupt("no audio frames"));
    }
    Ok(Pcm { samples })
}

fn decode_wav(bytes: &[u8]) -> Result<Pcm, AudioError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| corrupt(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.sample_rate == 0 {
        return Err(corrupt("wav header has zero channels or rate"));
    }
    let frames: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            let raw: Result<Vec<i32>, _> = reader.into_samples::<i32>().collect();
            downmix(raw.map_err(|e| corrupt(e.to_string()))?.into_iter().map(|s| s as f64 / scale), spec.channels)
        }
        hound::SampleFormat::Float => {
            let raw: Result<Vec<f32>, _> = reader.into_samples::<f32>().collect();
            downmix(raw.map_err(|e| corrupt(e.to_string()))?.into_iter().map(f64::from), spec.channels)
        }
    };
    let resampled = resample_linear(&frames, spec.sample_rate, TARGET_RATE);
    let samples = resampled
        .into_iter()
        .map(|v| (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
        .collect();
    Ok(Pcm { samples })
}

fn downmix(interleaved: impl Iterator<Item = f64>, channels: u16) -> Vec<f64> {
    let values: Vec<f64> = interleaved.collect();
    values
        .chunks_exact(channels as usize)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect()
}

/// Linear interpolation resampler; identity when rates match.
pub fn resample_linear(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let out_len = ((input.len() as u64 * to as u64 + from as u64 / 2) / from as u64) as usize;
    let step = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let base = pos.floor() as usize;
            let frac = pos - base as f64;
            let a = input[base.min(input.len() - 1)];
            let b = input[(base + 1).min(input.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}
