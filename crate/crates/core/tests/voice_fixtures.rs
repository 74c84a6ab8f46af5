use std::io::Cursor;
use std::path::PathBuf;

use reflect_core::voice::{convert_audio, decode_audio, AudioError, TARGET_RATE};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/voice")
}

struct Clip {
    bytes: Vec<u8>,
    expected_samples: f64,
}

fn clips() -> Vec<Clip> {
    let manifest: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(dir().join("manifest.json")).unwrap()).unwrap();
    manifest
        .iter()
        .map(|entry| {
            let source_rate = entry["source_rate"].as_f64().unwrap();
            let source_samples = entry["source_samples"].as_f64().unwrap();
            Clip {
                bytes: std::fs::read(dir().join(entry["file"].as_str().unwrap())).unwrap(),
                expected_samples: source_samples * TARGET_RATE as f64 / source_rate,
            }
        })
        .collect()
}

/// One 20 ms Opus frame at the target rate.
const FRAME_TOLERANCE: f64 = TARGET_RATE as f64 * 0.020;

#[test]
fn ten_clips_between_1_2_and_2_3_seconds() {
    let clips = clips();
    assert_eq!(clips.len(), 10);
    for clip in &clips {
        let secs = clip.expected_samples / TARGET_RATE as f64;
        assert!((1.2..=2.3).contains(&secs), "{secs}");
    }
}

#[test]
fn decoded_duration_matches_source_within_one_frame() {
    for clip in clips() {
        let pcm = decode_audio(&clip.bytes).unwrap();
        let diff = (pcm.samples.len() as f64 - clip.expected_samples).abs();
        assert!(diff <= FRAME_TOLERANCE, "decoded {} samples, expected {}", pcm.samples.len(), clip.expected_samples);
        assert!(pcm.samples.iter().any(|&s| s.unsigned_abs() > 1000), "clip decoded to silence");
    }
}

#[test]
fn conversion_yields_mono_16k_wav() {
    let clip = &clips()[2];
    let wav = convert_audio(&clip.bytes).unwrap();
    let reader = hound::WavReader::new(Cursor::new(&wav)).unwrap();
    let spec = reader.spec();
    assert_eq!((spec.channels, spec.sample_rate, spec.bits_per_sample), (1, 16_000, 16));
    let secs = reader.duration() as f64 / 16_000.0;
    assert!((secs - 1.5).abs() <= 0.020, "{secs}");
    assert_eq!(convert_audio(&wav).unwrap(), wav);
}

#[test]
fn decoding_is_deterministic() {
    let clip = &clips()[0];
    assert_eq!(decode_audio(&clip.bytes).unwrap(), decode_audio(&clip.bytes).unwrap());
}

#[test]
fn non_opus_codec_is_unsupported() {
    let mut bytes = clips()[0].bytes.clone();
    let at = bytes.windows(6).position(|w| w == b"A_OPUS").unwrap();
    bytes[at..at + 6].copy_from_slice(b"A_FLAC");
    assert_eq!(decode_audio(&bytes), Err(AudioError::UnsupportedCodec("A_FLAC".into())));
}

#[test]
fn truncated_header_is_corrupt() {
    let bytes = &clips()[0].bytes[..40];
    assert!(matches!(decode_audio(bytes), Err(AudioError::CorruptContainer(_))));
    assert!(matches!(decode_audio(&[]), Err(AudioError::CorruptContainer(_))));
}
