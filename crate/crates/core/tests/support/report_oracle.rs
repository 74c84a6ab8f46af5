//! Brute-force report recomputation and random record sets.
//!
//! Deliberately naive: every bucket rescans every record, labels are
//! counted one at a time, and recency comes from a full ascending sort that
//! is then read backwards.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::rngs::StdRng;
use rand::Rng;
use reflect_core::domain::{
    EmotionLabel, EmotionPrediction, ReflectionEntry, RecordId, Scores, SessionRecord, StepKind, SuggestionStep,
    ThreeStepSuggestion,
};
use reflect_core::reports::{Period, ReviewReport, TrendBucket};

pub fn oracle_report(period: Period, records: &[SessionRecord]) -> ReviewReport {
    let (start, end, width, buckets) = match period {
        Period::Daily { date } => {
            let s = date.and_hms_opt(0, 0, 0).unwrap().and_utc();
            (s, s + Duration::hours(24), Duration::hours(1), 24)
        }
        Period::Weekly { week } => {
            let s = week.monday().and_hms_opt(0, 0, 0).unwrap().and_utc();
            (s, s + Duration::days(7), Duration::days(1), 7)
        }
    };
    let in_span = |r: &&SessionRecord, a: DateTime<Utc>, b: DateTime<Utc>| r.timestamp >= a && r.timestamp < b;

    let mut state_distribution = BTreeMap::new();
    for label in EmotionLabel::ALL {
        let n = records
            .iter()
            .filter(|r| in_span(r, start, end) && r.confirmed_state == label)
            .count();
        state_distribution.insert(label, n as u64);
    }

    let mut trend = Vec::new();
    for i in 0..buckets {
        let a = start + width * i;
        let b = a + width;
        let members: Vec<&SessionRecord> = records.iter().filter(|r| in_span(r, a, b)).collect();
        let mut dominant = None;
        let mut best = 0;
        for label in EmotionLabel::ALL {
            let c = members.iter().filter(|r| r.confirmed_state == label).count();
            if c > best {
                best = c;
                dominant = Some(label);
            }
        }
        trend.push(TrendBucket { start: a, dominant, count: members.len() as u64 });
    }

    let mut ascending: Vec<&SessionRecord> = records.iter().filter(|r| in_span(r, start, end)).collect();
    ascending.sort_by(|a, b| (a.timestamp, a.id.as_str()).cmp(&(b.timestamp, b.id.as_str())));
    let newest_first: Vec<&SessionRecord> = ascending.iter().rev().copied().collect();

    let mut blockage_summaries = Vec::new();
    let mut next_steps = Vec::new();
    let mut suggestion_summaries = Vec::new();
    for r in &newest_first {
        if let Some(f) = &r.reflection {
            let b = f.blockage.trim();
            if !b.is_empty() && blockage_summaries.len() < 5 {
                blockage_summaries.push(b.chars().take(200).collect::<String>());
            }
            let g = f.goal.trim();
            if !g.is_empty() && next_steps.len() < 3 {
                next_steps.push(g.to_string());
            }
        }
        if let Some(s) = &r.suggestion {
            if suggestion_summaries.len() < 5 {
                suggestion_summaries.push(s.steps[0].action.clone());
            }
        }
    }

    ReviewReport {
        period,
        state_distribution,
        trend,
        blockage_summaries,
        suggestion_summaries,
        next_steps,
        total_checks: ascending.len() as u64,
    }
}

fn text(rng: &mut StdRng, prefix: &str) -> String {
    let len = match rng.random_range(0..10) {
        0 => rng.random_range(190..260),
        _ => rng.random_range(1..30),
    };
    let alphabet: Vec<char> = "abcdefgh 情绪代码进度 .,".chars().collect();
    let body: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
    format!("{prefix}{body}")
}

fn scores(rng: &mut StdRng) -> Scores {
    let raw: [f64; 7] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
    let total: f64 = raw.iter().sum();
    Scores::new(raw.map(|v| v / total))
}

/// A random valid record somewhere in `[start - spill, start + span + spill)`.
/// Timestamps are snapped to a coarse grid so collisions happen.
pub fn random_record(rng: &mut StdRng, start: DateTime<Utc>, span: Duration, index: usize) -> SessionRecord {
    let spill = Duration::hours(3);
    let slots = (span + spill * 2).num_seconds() / 600;
    let ts = start - spill + Duration::seconds(rng.random_range(0..slots) * 600 + rng.random_range(0..2) * 599);
    let detected = rng
        .random_bool(0.7)
        .then(|| EmotionPrediction::from_scores(scores(rng), "stub"));
    let confirmed = EmotionLabel::ALL[rng.random_range(0..7)];
    let mut record = SessionRecord::new(ts, detected, confirmed);
    record.id = RecordId::from(format!("{index:04}-{:08x}", rng.random::<u32>()));
    if rng.random_bool(0.6) {
        let tried = if rng.random_bool(0.5) { text(rng, "t") } else { String::new() };
        record = record.with_reflection(ReflectionEntry::new(text(rng, "b"), tried, text(rng, "g")));
        if rng.random_bool(0.5) {
            let step = |kind, rng: &mut StdRng| SuggestionStep { kind, action: text(rng, "a"), explanation: text(rng, "e") };
            let steps = [
                step(StepKind::Immediate, rng),
                step(StepKind::ShortTerm, rng),
                step(StepKind::LongerTerm, rng),
            ];
            record = record.with_suggestion(ThreeStepSuggestion { raw_text: String::new(), steps });
        }
    }
    record
}

pub fn random_records(rng: &mut StdRng, start: DateTime<Utc>, span: Duration, max: usize) -> Vec<SessionRecord> {
    let n = rng.random_range(0..=max);
    (0..n).map(|i| random_record(rng, start, span, i)).collect()
}
