//! Writes the WebM/Opus voice fixtures used by the tests.
//!
//! Each clip is a deterministic syllable-like tone pattern encoded at
//! 48 kHz mono in 20 ms Opus frames, muxed the way browsers do it (unknown
//! size segment and clusters). `manifest.json` records the exact number of
//! source samples so tests can check decoded durations independently.
//!
//! Usage: cargo run -p reflect-core --example make_voice_fixtures -- <out-dir>

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

const RATE: usize = 48_000;
const FRAME: usize = 960;

const CLIPS: [(&str, f64, &str); 10] = [
    ("clip-01.webm", 1.20, "我很累"),
    ("clip-02.webm", 1.35, "今天的任务太多了"),
    ("clip-03.webm", 1.50, "我有点焦虑"),
    ("clip-04.webm", 1.60, "代码一直报错"),
    ("clip-05.webm", 1.70, "我想休息一下"),
    ("clip-06.webm", 1.80, "会议让我很紧张"),
    ("clip-07.webm", 1.90, "我不知道从哪里开始"),
    ("clip-08.webm", 2.00, "进度落后了"),
    ("clip-09.webm", 2.15, "我需要一些建议"),
    ("clip-10.webm", 2.30, "今天状态还不错"),
];

fn source(seed: usize, samples: usize) -> Vec<i16> {
    let base = 140.0 + 15.0 * seed as f64;
    (0..samples)
        .map(|i| {
            let t = i as f64 / RATE as f64;
            let syllable = (t * 4.0 * PI).sin().abs();
            let v = 0.55 * (2.0 * PI * base * t).sin() + 0.25 * (2.0 * PI * base * 2.5 * t).sin();
            (v * syllable * 12_000.0).round() as i16
        })
        .collect()
}

struct Encoder(*mut opusic_sys::OpusEncoder);

impl Encoder {
    fn new() -> Self {
        let mut err = 0;
        let enc = unsafe { opusic_sys::opus_encoder_create(RATE as i32, 1, opusic_sys::OPUS_APPLICATION_VOIP, &mut err) };
        assert!(err == opusic_sys::OPUS_OK && !enc.is_null(), "opus encoder: {err}");
        unsafe { opusic_sys::opus_encoder_ctl(enc, opusic_sys::OPUS_SET_BITRATE_REQUEST, 24_000i32) };
        Self(enc)
    }

    fn lookahead(&self) -> usize {
        let mut value: i32 = 0;
        unsafe { opusic_sys::opus_encoder_ctl(self.0, opusic_sys::OPUS_GET_LOOKAHEAD_REQUEST, &mut value as *mut i32) };
        value as usize
    }

    fn encode(&mut self, frame: &[i16]) -> Vec<u8> {
        let mut out = vec![0u8; 1500];
        let n = unsafe { opusic_sys::opus_encode(self.0, frame.as_ptr(), FRAME as i32, out.as_mut_ptr(), out.len() as i32) };
        assert!(n > 0, "opus_encode failed: {n}");
        out.truncate(n as usize);
        out
    }
}

impl Drop for Encoder {
    fn drop(&mut self) {
        unsafe { opusic_sys::opus_encoder_destroy(self.0) }
    }
}

fn vint_size(len: usize) -> Vec<u8> {
    for width in 1..=8usize {
        if (len as u64) < (1u64 << (7 * width)) - 1 {
            let marked = (len as u64) | (1u64 << (7 * width));
            return marked.to_be_bytes()[8 - width..].to_vec();
        }
    }
    panic!("element too large");
}

fn element(id: u32, payload: &[u8]) -> Vec<u8> {
    let id_bytes = id.to_be_bytes();
    let skip = id_bytes.iter().take_while(|&&b| b == 0).count();
    let mut out = id_bytes[skip..].to_vec();
    out.extend(vint_size(payload.len()));
    out.extend_from_slice(payload);
    out
}

fn unknown_size(id: u32) -> Vec<u8> {
    let mut out = id.to_be_bytes().to_vec();
    out.extend([0x01, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF]);
    out
}

fn uint(id: u32, v: u64) -> Vec<u8> {
    let bytes = v.to_be_bytes();
    let skip = bytes.iter().take_while(|&&b| b == 0).count().min(7);
    element(id, &bytes[skip..])
}

fn concat(parts: &[Vec<u8>]) -> Vec<u8> {
    parts.concat()
}

fn mux(packets: &[Vec<u8>], pre_skip: u16) -> Vec<u8> {
    let header = element(
        0x1A45DFA3,
        &concat(&[
            uint(0x4286, 1),
            uint(0x42F7, 1),
            uint(0x42F2, 4),
            uint(0x42F3, 8),
            element(0x4282, b"webm"),
            uint(0x4287, 4),
            uint(0x4285, 2),
        ]),
    );
    let info = element(
        0x1549A966,
        &concat(&[uint(0x2AD7B1, 1_000_000), element(0x4D80, b"fixture-muxer"), element(0x5741, b"fixture-muxer")]),
    );
    let mut opus_head = b"OpusHead".to_vec();
    opus_head.push(1);
    opus_head.push(1);
    opus_head.extend(pre_skip.to_le_bytes());
    opus_head.extend((RATE as u32).to_le_bytes());
    opus_head.extend(0i16.to_le_bytes());
    opus_head.push(0);
    let audio = element(0xE1, &concat(&[element(0xB5, &(RATE as f64).to_be_bytes()), uint(0x9F, 1)]));
    let track = element(
        0xAE,
        &concat(&[
            uint(0xD7, 1),
            uint(0x73C5, 1),
            uint(0x83, 2),
            element(0x86, b"A_OPUS"),
            element(0x63A2, &opus_head),
            audio,
        ]),
    );
    let tracks = element(0x1654AE6B, &track);

    let mut out = header;
    out.extend(unknown_size(0x18538067));
    out.extend(info);
    out.extend(tracks);
    for (chunk_index, chunk) in packets.chunks(50).enumerate() {
        let cluster_ms = chunk_index as u64 * 50 * 20;
        out.extend(unknown_size(0x1F43B675));
        out.extend(uint(0xE7, cluster_ms));
        for (i, packet) in chunk.iter().enumerate() {
            let mut block = vec![0x81];
            block.extend(((i * 20) as i16).to_be_bytes());
            block.push(0x80);
            block.extend_from_slice(packet);
            out.extend(element(0xA3, &block));
        }
    }
    out
}

fn main() {
    let out_dir = PathBuf::from(std::env::args().nth(1).expect("usage: make_voice_fixtures <out-dir>"));
    fs::create_dir_all(&out_dir).unwrap();
    let mut manifest = Vec::new();
    for (seed, (name, secs, transcript)) in CLIPS.iter().enumerate() {
        let samples = (secs * RATE as f64).round() as usize;
        let mut pcm = source(seed, samples);
        let mut encoder = Encoder::new();
        let pre_skip = encoder.lookahead();
        // Zero tail flushes the encoder delay; the rest pads the final frame.
        pcm.resize(samples + pre_skip, 0);
        let frames = pcm.len().div_ceil(FRAME);
        pcm.resize(frames * FRAME, 0);
        let packets: Vec<Vec<u8>> = pcm.chunks(FRAME).map(|f| encoder.encode(f)).collect();
        fs::write(out_dir.join(name), mux(&packets, pre_skip as u16)).unwrap();
        manifest.push(serde_json::json!({
            "file": name,
            "source_rate": RATE,
            "source_samples": samples,
            "transcript": transcript,
        }));
    }
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap() + "\n",
    )
    .unwrap();
}
