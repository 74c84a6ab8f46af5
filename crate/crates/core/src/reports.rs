//! Daily and weekly review reports built from stored session records.
//!
//! Report building is a pure function of the record set: input order never
//! changes the output. "Most recent" means latest timestamp, then largest id.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, IsoWeek, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Serialize, Serializer};

use crate::domain::{EmotionLabel, SessionRecord, StepKind};
use crate::store::{SessionStore, StoreError};

pub const MAX_BLOCKAGE_SUMMARIES: usize = 5;
pub const MAX_SUGGESTION_SUMMARIES: usize = 5;
pub const MAX_NEXT_STEPS: usize = 3;
pub const SNIPPET_CHARS: usize = 200;
pub const RECENT_CONTEXT_RECORDS: usize = 3;

/// ISO-8601 week (`2025-W03`), Monday start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Week {
    monday: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ISO week `{0}`, expected YYYY-Www")]
pub struct InvalidWeek(pub String);

impl Week {
    pub fn new(year: i32, week: u32) -> Option<Self> {
        NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).map(|monday| Self { monday })
    }

    pub fn containing(date: NaiveDate) -> Self {
        let iso = date.iso_week();
        Self::new(iso.year(), iso.week()).expect("iso week of a valid date")
    }

    pub fn monday(self) -> NaiveDate {
        self.monday
    }

    pub fn iso(self) -> IsoWeek {
        self.monday.iso_week()
    }
}

impl fmt::Display for Week {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let iso = self.iso();
        write!(f, "{:04}-W{:02}", iso.year(), iso.week())
    }
}

impl FromStr for Week {
    type Err = InvalidWeek;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InvalidWeek(s.to_string());
        let (year, week) = s.trim().split_once("-W").ok_or_else(bad)?;
        if week.len() != 2 {
            return Err(bad());
        }
        let year: i32 = year.parse().map_err(|_| bad())?;
        let week: u32 = week.parse().map_err(|_| bad())?;
        Week::new(year, week).ok_or_else(bad)
    }
}

impl Serialize for Week {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Week {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Period {
    Daily { date: NaiveDate },
    Weekly { week: Week },
}

impl Period {
    /// Half-open UTC span `[start, end)`.
    pub fn range(self) -> (DateTime<Utc>, DateTime<Utc>) {
        let (first, days) = match self {
            Period::Daily { date } => (date, 1),
            Period::Weekly { week } => (week.monday(), 7),
        };
        let start = first.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        (start, start + Duration::days(days))
    }

    fn bucket_width(self) -> Duration {
        match self {
            Period::Daily { .. } => Duration::hours(1),
            Period::Weekly { .. } => Duration::days(1),
        }
    }

    pub fn bucket_count(self) -> usize {
        match self {
            Period::Daily { .. } => 24,
            Period::Weekly { .. } => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendBucket {
    #[serde(with = "crate::domain::utc_seconds")]
    pub start: DateTime<Utc>,
    /// Modal confirmed state; `None` for an empty bucket.
    pub dominant: Option<EmotionLabel>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub period: Period,
    /// Every label is present, zero counts included.
    pub state_distribution: BTreeMap<EmotionLabel, u64>,
    pub trend: Vec<TrendBucket>,
    pub blockage_summaries: Vec<String>,
    pub suggestion_summaries: Vec<String>,
    pub next_steps: Vec<String>,
    pub total_checks: u64,
}

/// Counts confirmed states; detections are ignored.
pub fn state_distribution(records: &[SessionRecord]) -> BTreeMap<EmotionLabel, u64> {
    let mut counts = [0u64; EmotionLabel::COUNT];
    for r in records {
        counts[r.confirmed_state.index()] += 1;
    }
    EmotionLabel::ALL.iter().map(|&l| (l, counts[l.index()])).collect()
}

fn modal(counts: &[u64; EmotionLabel::COUNT]) -> Option<EmotionLabel> {
    let mut best: Option<(EmotionLabel, u64)> = None;
    for label in EmotionLabel::ALL {
        let c = counts[label.index()];
        if c > 0 && best.is_none_or(|(_, b)| c > b) {
            best = Some((label, c));
        }
    }
    best.map(|(label, _)| label)
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text.to_string(),
    }
}

/// Builds the report for `period` from any superset of its records.
pub fn build_report(period: Period, records: &[SessionRecord]) -> ReviewReport {
    let (start, end) = period.range();
    let mut inside: Vec<&SessionRecord> = records
        .iter()
        .filter(|r| r.timestamp >= start && r.timestamp < end)
        .collect();
    // Newest first.
    inside.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then_with(|| b.id.cmp(&a.id)));

    let width = period.bucket_width();
    let mut bucket_counts = vec![[0u64; EmotionLabel::COUNT]; period.bucket_count()];
    let mut distribution = [0u64; EmotionLabel::COUNT];
    for r in &inside {
        let slot = ((r.timestamp - start).num_seconds() / width.num_seconds()) as usize;
        bucket_counts[slot][r.confirmed_state.index()] += 1;
        distribution[r.confirmed_state.index()] += 1;
    }
    let trend = bucket_counts
        .iter()
        .enumerate()
        .map(|(i, counts)| TrendBucket {
            start: start + width * i as i32,
            dominant: modal(counts),
            count: counts.iter().sum(),
        })
        .collect();

    let blockage_summaries = inside
        .iter()
        .filter_map(|r| r.reflection.as_ref())
        .map(|f| f.blockage.trim())
        .filter(|b| !b.is_empty())
        .take(MAX_BLOCKAGE_SUMMARIES)
        .map(|b| truncate_chars(b, SNIPPET_CHARS))
        .collect();
    let suggestion_summaries = inside
        .iter()
        .filter_map(|r| r.suggestion.as_ref())
        .map(|s| s.step(StepKind::Immediate).action.clone())
        .take(MAX_SUGGESTION_SUMMARIES)
        .collect();
    let next_steps = inside
        .iter()
        .filter_map(|r| r.reflection.as_ref())
        .map(|f| f.goal.trim())
        .filter(|g| !g.is_empty())
        .take(MAX_NEXT_STEPS)
        .map(str::to_string)
        .collect();

    ReviewReport {
        period,
        state_distribution: EmotionLabel::ALL
            .iter()
            .map(|&l| (l, distribution[l.index()]))
            .collect(),
        trend,
        blockage_summaries,
        suggestion_summaries,
        next_steps,
        total_checks: inside.len() as u64,
    }
}

pub fn build_daily_report(store: &SessionStore, date: NaiveDate) -> Result<ReviewReport, StoreError> {
    let period = Period::Daily { date };
    let (start, end) = period.range();
    Ok(build_report(period, &store.list(start, end)?))
}

pub fn build_weekly_report(store: &SessionStore, week: Week) -> Result<ReviewReport, StoreError> {
    let period = Period::Weekly { week };
    let (start, end) = period.range();
    Ok(build_report(period, &store.list(start, end)?))
}

/// One line per record, oldest first: `timestamp | state | goal`.
pub fn render_context(records: &[SessionRecord]) -> String {
    records
        .iter()
        .map(|r| {
            let goal = r
                .reflection
                .as_ref()
                .map(|f| f.goal.trim())
                .filter(|g| !g.is_empty())
                .unwrap_or("-");
            format!(
                "{} | {} | {}",
                r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                r.confirmed_state,
                goal
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Context for the prompt: the last `k` records at or before `now`.
pub fn recent_context(store: &SessionStore, now: DateTime<Utc>, k: usize) -> Result<String, StoreError> {
    Ok(render_context(&store.latest(now, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ReflectionEntry;
    use chrono::TimeZone;

    fn at(y: i32, m: u32, d: u32, h: u32, min: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, h, min, 0).unwrap()
    }

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 1, 15).unwrap()
    }

    #[test]
    fn week_parse_and_display() {
        let w: Week = "2025-W03".parse().unwrap();
        assert_eq!(w.monday(), NaiveDate::from_ymd_opt(2025, 1, 13).unwrap());
        assert_eq!(w.to_string(), "2025-W03");
        assert_eq!(Week::containing(NaiveDate::from_ymd_opt(2024, 12, 30).unwrap()).to_string(), "2025-W01");
        for bad in ["2025-03", "2025-W3", "2025-W54", "x-W01", ""] {
            assert!(bad.parse::<Week>().is_err(), "{bad}");
        }
        assert!("2020-W53".parse::<Week>().is_ok());
    }

    #[test]
    fn empty_day() {
        let r = build_report(Period::Daily { date: day() }, &[]);
        assert_eq!(r.total_checks, 0);
        assert_eq!(r.trend.len(), 24);
        assert!(r.trend.iter().all(|b| b.count == 0 && b.dominant.is_none()));
        assert_eq!(r.state_distribution.len(), 7);
        assert!(r.state_distribution.values().all(|&c| c == 0));
    }

    #[test]
    fn distribution_counts_confirmed_state() {
        let records = [
            SessionRecord::new(at(2025, 1, 15, 9, 0), None, EmotionLabel::Happy),
            SessionRecord::new(at(2025, 1, 15, 9, 5), None, EmotionLabel::Happy),
            SessionRecord::new(at(2025, 1, 15, 9, 9), None, EmotionLabel::Sad),
        ];
        let d = state_distribution(&records);
        assert_eq!(d[&EmotionLabel::Happy], 2);
        assert_eq!(d[&EmotionLabel::Sad], 1);
        assert_eq!(d.values().sum::<u64>(), 3);
    }

    #[test]
    fn bucket_mode_and_ties() {
        let records = [
            SessionRecord::new(at(2025, 1, 15, 9, 0), None, EmotionLabel::Sad),
            SessionRecord::new(at(2025, 1, 15, 9, 10), None, EmotionLabel::Happy),
            SessionRecord::new(at(2025, 1, 15, 9, 59), None, EmotionLabel::Sad),
            SessionRecord::new(at(2025, 1, 15, 14, 0), None, EmotionLabel::Surprise),
            SessionRecord::new(at(2025, 1, 15, 14, 1), None, EmotionLabel::Fear),
        ];
        let r = build_report(Period::Daily { date: day() }, &records);
        assert_eq!(r.trend[9].dominant, Some(EmotionLabel::Sad));
        assert_eq!(r.trend[9].count, 3);
        assert_eq!(r.trend[9].start, at(2025, 1, 15, 9, 0));
        assert_eq!(r.trend[14].dominant, Some(EmotionLabel::Fear));
        assert_eq!(r.total_checks, 5);
    }

    #[test]
    fn week_across_month_boundary() {
        let week: Week = "2025-W05".parse().unwrap();
        let records = [
            SessionRecord::new(at(2025, 1, 31, 23, 59), None, EmotionLabel::Angry),
            SessionRecord::new(at(2025, 2, 1, 0, 0), None, EmotionLabel::Neutral),
            SessionRecord::new(at(2025, 2, 3, 0, 0), None, EmotionLabel::Neutral),
        ];
        let r = build_report(Period::Weekly { week }, &records);
        assert_eq!(r.trend.len(), 7);
        assert_eq!(r.trend[0].start, at(2025, 1, 27, 0, 0));
        assert_eq!(r.trend[4].count, 1);
        assert_eq!(r.trend[5].count, 1);
        assert_eq!(r.total_checks, 2);
    }

    #[test]
    fn summaries_are_most_recent_first_and_truncated() {
        let long = "x".repeat(250);
        let records: Vec<_> = (0..7)
            .map(|i| {
                let blockage = if i == 6 { long.clone() } else { format!("b{i}") };
                SessionRecord::new(at(2025, 1, 15, i, 0), None, EmotionLabel::Sad)
                    .with_reflection(ReflectionEntry::new(blockage, "", format!("g{i}")))
            })
            .collect();
        let r = build_report(Period::Daily { date: day() }, &records);
        assert_eq!(r.blockage_summaries.len(), 5);
        assert_eq!(r.blockage_summaries[0].chars().count(), 200);
        assert_eq!(r.blockage_summaries[1], "b5");
        assert_eq!(r.next_steps, vec!["g6", "g5", "g4"]);
        assert!(r.suggestion_summaries.is_empty());
    }

    #[test]
    fn truncation_counts_characters() {
        let text = "情".repeat(300);
        assert_eq!(truncate_chars(&text, 200).chars().count(), 200);
        assert_eq!(truncate_chars("short", 200), "short");
    }

    #[test]
    fn report_json_shape() {
        let r = build_report(Period::Weekly { week: "2025-W03".parse().unwrap() }, &[]);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["period"], serde_json::json!({"kind": "weekly", "week": "2025-W03"}));
        assert_eq!(v["state_distribution"]["surprise"], 0);
        assert_eq!(v["trend"][0]["start"], "2025-01-13T00:00:00Z");
        assert!(v["trend"][0]["dominant"].is_null());
        let back: ReviewReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn recent_context_windows() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let now = at(2025, 1, 20, 0, 0);
        assert_eq!(recent_context(&store, now, 3).unwrap(), "");
        for d in 10..12 {
            store
                .save(&SessionRecord::new(at(2025, 1, d, 8, 0), None, EmotionLabel::Sad)
                    .with_reflection(ReflectionEntry::new("b", "", format!("goal {d}"))))
                .unwrap();
        }
        assert_eq!(
            recent_context(&store, now, 3).unwrap(),
            "2025-01-10T08:00:00Z | sad | goal 10\n2025-01-11T08:00:00Z | sad | goal 11"
        );
        for d in 12..15 {
            store.save(&SessionRecord::new(at(2025, 1, d, 8, 0), None, EmotionLabel::Happy)).unwrap();
        }
        let text = recent_context(&store, now, 3).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("2025-01-12"));
        assert_eq!(lines[2], "2025-01-14T08:00:00Z | happy | -");
    }
}
