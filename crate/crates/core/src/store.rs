//! Local-first persistence of session records.
//!
//! Records live in one JSON-lines file per UTC day (`YYYY-MM-DD.jsonl`).
//! Every mutation rewrites the affected day file through a temp file and an
//! atomic rename, so a failed write leaves the previous content intact.
//!
//! The store is single-writer: mutations take `&mut self`. Readers see
//! whole day files, never a partial rewrite.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use chrono::{DateTime, Days, NaiveDate, Utc};
use tempfile::NamedTempFile;

use crate::domain::{validate_record, RecordId, SessionRecord, Violation};

const DAY_FILE_EXT: &str = "jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("record failed validation: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("record id `{0}` already exists")]
    DuplicateId(RecordId),
    #[error("record `{0}` not found")]
    NotFound(RecordId),
    #[error("invalid range: start is after end")]
    InvalidRange,
    #[error("storage is full")]
    StorageFull,
    #[error("storage i/o failure: {0}")]
    Io(io::Error),
    #[error("corrupt day file {file}, line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl From<io::Error> for StoreError {
    fn from(err: io::Error) -> Self {
        if err.kind() == io::ErrorKind::StorageFull {
            StoreError::StorageFull
        } else {
            StoreError::Io(err)
        }
    }
}

/// Outcome of [`SessionStore::delete`]; deleting twice is not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deletion {
    Deleted,
    NotFound,
}

fn day_of(ts: &DateTime<Utc>) -> NaiveDate {
    ts.date_naive()
}

fn day_start(day: NaiveDate) -> DateTime<Utc> {
    day.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
}

/// Orders records by timestamp, then id.
pub fn sort_records(records: &mut [SessionRecord]) {
    records.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    index: HashMap<RecordId, NaiveDate>,
}

impl SessionStore {
    /// Opens (creating if needed) a store rooted at `dir` and indexes every
    /// day file in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut store = Self { dir, index: HashMap::new() };
        for day in store.days()? {
            for record in store.read_day(day)? {
                store.index.insert(record.id.clone(), day);
            }
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn day_path(&self, day: NaiveDate) -> PathBuf {
        self.dir.join(format!("{}.{DAY_FILE_EXT}", day.format("%Y-%m-%d")))
    }

    /// Dates that have a day file, ascending.
    pub fn days(&self) -> Result<Vec<NaiveDate>, StoreError> {
        let mut days = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(DAY_FILE_EXT) {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if let Ok(day) = NaiveDate::parse_from_str(stem, "%Y-%m-%d") {
                days.push(day);
            }
        }
        days.sort();
        Ok(days)
    }

    fn read_lines(&self, day: NaiveDate) -> Result<Vec<String>, StoreError> {
        match fs::read_to_string(self.day_path(day)) {
            Ok(text) => Ok(text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    fn parse_line(&self, day: NaiveDate, line_no: usize, line: &str) -> Result<SessionRecord, StoreError> {
        serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
            file: format!("{}.{DAY_FILE_EXT}", day.format("%Y-%m-%d")),
            line: line_no + 1,
            message: e.to_string(),
        })
    }

    /// Records of one UTC day in file (append) order.
    pub fn read_day(&self, day: NaiveDate) -> Result<Vec<SessionRecord>, StoreError> {
        self.read_lines(day)?
            .iter()
            .enumerate()
            .map(|(i, line)| self.parse_line(day, i, line))
            .collect()
    }

    fn write_day(&self, day: NaiveDate, lines: &[String]) -> Result<(), StoreError> {
        let path = self.day_path(day);
        if lines.is_empty() {
            return match fs::remove_file(&path) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e.into()),
                _ => Ok(()),
            };
        }
        let mut tmp = NamedTempFile::with_prefix_in(".day-", &self.dir)?;
        for line in lines {
            tmp.write_all(line.as_bytes())?;
            tmp.write_all(b"\n")?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| StoreError::from(e.error))?;
        Ok(())
    }

    /// Validates and appends `record` to its day file.
    pub fn save(&mut self, record: &SessionRecord) -> Result<RecordId, StoreError> {
        let violations = validate_record(record);
        if !violations.is_empty() {
            return Err(StoreError::Invalid(violations));
        }
        if self.index.contains_key(&record.id) {
            return Err(StoreError::DuplicateId(record.id.clone()));
        }
        let day = day_of(&record.timestamp);
        let line = serde_json::to_string(record)
            .map_err(|e| StoreError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))?;
        let mut lines = self.read_lines(day)?;
        lines.push(line);
        self.write_day(day, &lines)?;
        self.index.insert(record.id.clone(), day);
        Ok(record.id.clone())
    }

    /// Saves a batch, rewriting each affected day file once. Nothing is
    /// written unless every record is valid and every id is new.
    pub fn save_all(&mut self, records: &[SessionRecord]) -> Result<(), StoreError> {
        let mut seen = std::collections::HashSet::new();
        let mut by_day: std::collections::BTreeMap<NaiveDate, Vec<String>> = Default::default();
        for record in records {
            let violations = validate_record(record);
            if !violations.is_empty() {
                return Err(StoreError::Invalid(violations));
            }
            if self.index.contains_key(&record.id) || !seen.insert(&record.id) {
                return Err(StoreError::DuplicateId(record.id.clone()));
            }
            let line = serde_json::to_string(record)
                .map_err(|e| StoreError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))?;
            by_day.entry(day_of(&record.timestamp)).or_default().push(line);
        }
        for (day, new_lines) in by_day {
            let mut lines = self.read_lines(day)?;
            lines.extend(new_lines);
            self.write_day(day, &lines)?;
            for record in records.iter().filter(|r| day_of(&r.timestamp) == day) {
                self.index.insert(record.id.clone(), day);
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &RecordId) -> Result<SessionRecord, StoreError> {
        let day = *self.index.get(id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
        self.read_day(day)?
            .into_iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| StoreError::NotFound(id.clone()))
    }

    /// Records with `start <= timestamp < end`, ascending by timestamp then id.
    pub fn list(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Vec<SessionRecord>, StoreError> {
        if start > end {
            return Err(StoreError::InvalidRange);
        }
        let mut out = Vec::new();
        if start == end {
            return Ok(out);
        }
        let first = day_of(&start);
        let last = day_of(&(end - chrono::Duration::nanoseconds(1)));
        let mut day = first;
        while day <= last {
            out.extend(
                self.read_day(day)?
                    .into_iter()
                    .filter(|r| r.timestamp >= start && r.timestamp < end),
            );
            day = match day.checked_add_days(Days::new(1)) {
                Some(next) => next,
                None => break,
            };
        }
        sort_records(&mut out);
        Ok(out)
    }

    /// Every record in the store, sorted.
    pub fn all(&self) -> Result<Vec<SessionRecord>, StoreError> {
        let mut out = Vec::new();
        for day in self.days()? {
            out.extend(self.read_day(day)?);
        }
        sort_records(&mut out);
        Ok(out)
    }

    /// Up to `k` most recent records with `timestamp <= now`, oldest first.
    pub fn latest(&self, now: DateTime<Utc>, k: usize) -> Result<Vec<SessionRecord>, StoreError> {
        let mut picked: Vec<SessionRecord> = Vec::new();
        if k == 0 {
            return Ok(picked);
        }
        let today = day_of(&now);
        for day in self.days()?.into_iter().rev().filter(|d| *d <= today) {
            let mut records: Vec<SessionRecord> = self
                .read_day(day)?
                .into_iter()
                .filter(|r| r.timestamp <= now)
                .collect();
            sort_records(&mut records);
            picked.extend(records.into_iter().rev());
            if picked.len() >= k {
                break;
            }
        }
        picked.truncate(k);
        picked.reverse();
        Ok(picked)
    }

    /// Removes a record permanently.
    pub fn delete(&mut self, id: &RecordId) -> Result<Deletion, StoreError> {
        let Some(&day) = self.index.get(id) else {
            return Ok(Deletion::NotFound);
        };
        let lines = self.read_lines(day)?;
        let mut kept = Vec::with_capacity(lines.len());
        let mut removed = false;
        for (i, line) in lines.into_iter().enumerate() {
            if self.parse_line(day, i, &line)?.id == *id {
                removed = true;
            } else {
                kept.push(line);
            }
        }
        if removed {
            self.write_day(day, &kept)?;
        }
        self.index.remove(id);
        Ok(if removed { Deletion::Deleted } else { Deletion::NotFound })
    }

    /// Half-open span covering one UTC day.
    pub fn day_range(day: NaiveDate) -> (DateTime<Utc>, DateTime<Utc>) {
        let start = day_start(day);
        (start, start + chrono::Duration::days(1))
    }
}

/// Per-file failures from [`cleanup_temp`].
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CleanupReport {
    pub removed: usize,
    pub failures: Vec<String>,
}

/// Deletes regular files under `dir` (recursively) whose age is at least
/// `max_age`. Individual failures are collected and the sweep continues.
pub fn cleanup_temp(dir: &Path, max_age: Duration) -> CleanupReport {
    let mut report = CleanupReport::default();
    let now = SystemTime::now();
    sweep(dir, max_age, now, &mut report);
    report
}

fn sweep(dir: &Path, max_age: Duration, now: SystemTime, report: &mut CleanupReport) {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return,
        Err(e) => {
            report.failures.push(format!("cannot list temp directory: {e}"));
            return;
        }
    };
    for entry in entries {
        let entry = match entry {
            Ok(entry) => entry,
            Err(e) => {
                report.failures.push(e.to_string());
                continue;
            }
        };
        let path = entry.path();
        let meta = match entry.metadata() {
            Ok(meta) => meta,
            Err(e) => {
                report.failures.push(e.to_string());
                continue;
            }
        };
        if meta.is_dir() {
            sweep(&path, max_age, now, report);
            continue;
        }
        let age = meta
            .modified()
            .ok()
            .and_then(|m| now.duration_since(m).ok())
            .unwrap_or(Duration::ZERO);
        if age < max_age {
            continue;
        }
        match fs::remove_file(&path) {
            Ok(()) => report.removed += 1,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => report.failures.push(e.to_string()),
        }
    }
}

/// Number of regular files under `dir`, recursively.
pub fn count_files(dir: &Path) -> usize {
    let Ok(entries) = fs::read_dir(dir) else {
        return 0;
    };
    entries
        .filter_map(Result::ok)
        .map(|e| match e.file_type() {
            Ok(t) if t.is_dir() => count_files(&e.path()),
            Ok(_) => 1,
            Err(_) => 0,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EmotionLabel, ReflectionEntry};
    use chrono::TimeZone;

    fn at(d: u32, h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 1, d, h, 0, 0).unwrap()
    }

    fn record(ts: DateTime<Utc>, state: EmotionLabel) -> SessionRecord {
        SessionRecord::new(ts, None, state)
    }

    #[test]
    fn buckets_by_utc_date() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        store.save(&record(at(15, 10), EmotionLabel::Happy)).unwrap();
        assert!(dir.path().join("2025-01-15.jsonl").is_file());
        let text = fs::read_to_string(dir.path().join("2025-01-15.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn invalid_record_is_rejected_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let bad = record(at(15, 10), EmotionLabel::Sad).with_reflection(ReflectionEntry::new("stuck", "", ""));
        assert!(matches!(store.save(&bad), Err(StoreError::Invalid(_))));
        assert_eq!(count_files(dir.path()), 0);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let r = record(at(15, 10), EmotionLabel::Sad);
        store.save(&r).unwrap();
        let mut again = r.clone();
        again.timestamp = at(16, 10);
        assert!(matches!(store.save(&again), Err(StoreError::DuplicateId(_))));
    }

    #[test]
    fn batch_save_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let a = record(at(15, 1), EmotionLabel::Sad);
        let b = record(at(16, 1), EmotionLabel::Happy);
        assert!(matches!(store.save_all(&[a.clone(), a.clone()]), Err(StoreError::DuplicateId(_))));
        assert_eq!(count_files(dir.path()), 0);
        store.save_all(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(store.all().unwrap(), vec![a.clone(), b]);
        assert!(matches!(store.save_all(&[a]), Err(StoreError::DuplicateId(_))));
    }

    #[test]
    fn get_and_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let r = record(at(15, 10), EmotionLabel::Fear);
        let id = store.save(&r).unwrap();
        assert_eq!(store.get(&id).unwrap(), r);
        assert!(matches!(store.get(&RecordId::from("nope")), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn delete_is_idempotent_and_local() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let rs: Vec<_> = (0..3).map(|h| record(at(15, h), EmotionLabel::Neutral)).collect();
        for r in &rs {
            store.save(r).unwrap();
        }
        assert_eq!(store.delete(&rs[1].id).unwrap(), Deletion::Deleted);
        assert_eq!(store.delete(&rs[1].id).unwrap(), Deletion::NotFound);
        assert!(matches!(store.get(&rs[1].id), Err(StoreError::NotFound(_))));
        assert_eq!(store.get(&rs[0].id).unwrap(), rs[0]);
        assert_eq!(store.get(&rs[2].id).unwrap(), rs[2]);
    }

    #[test]
    fn deleting_the_last_record_removes_the_day_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let r = record(at(15, 1), EmotionLabel::Neutral);
        store.save(&r).unwrap();
        store.delete(&r.id).unwrap();
        assert_eq!(count_files(dir.path()), 0);
    }

    #[test]
    fn list_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let (s, e) = SessionStore::day_range(NaiveDate::from_ymd_opt(2025, 1, 15).unwrap());
        assert!(store.list(s, e).unwrap().is_empty());
        let a = record(at(15, 9), EmotionLabel::Sad);
        let b = record(at(15, 23), EmotionLabel::Sad);
        let c = record(at(16, 0), EmotionLabel::Happy);
        for r in [&c, &b, &a] {
            store.save(r).unwrap();
        }
        assert_eq!(store.list(s, e).unwrap(), vec![a.clone(), b.clone()]);
        assert_eq!(store.list(at(1, 0), at(31, 0)).unwrap(), vec![a, b, c]);
        assert!(matches!(store.list(e, s), Err(StoreError::InvalidRange)));
    }

    #[test]
    fn reopening_sees_saved_records() {
        let dir = tempfile::tempdir().unwrap();
        let r = record(at(15, 10), EmotionLabel::Surprise)
            .with_reflection(ReflectionEntry::new("tests flake", "", "green build"));
        {
            let mut store = SessionStore::open(dir.path()).unwrap();
            store.save(&r).unwrap();
        }
        let store = SessionStore::open(dir.path()).unwrap();
        assert_eq!(store.get(&r.id).unwrap(), r);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn thirty_sequential_saves_keep_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let base = at(15, 8);
        let saved: Vec<_> = (0..30)
            .map(|i| {
                let r = record(base + chrono::Duration::seconds(i), EmotionLabel::Neutral);
                store.save(&r).unwrap();
                r
            })
            .collect();
        let (s, e) = SessionStore::day_range(base.date_naive());
        assert_eq!(store.list(s, e).unwrap(), saved);
    }

    #[test]
    fn latest_returns_newest_last() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let rs: Vec<_> = (10..15).map(|d| record(at(d, 12), EmotionLabel::Sad)).collect();
        for r in &rs {
            store.save(r).unwrap();
        }
        assert_eq!(store.latest(at(31, 0), 3).unwrap(), rs[2..].to_vec());
        assert_eq!(store.latest(at(11, 12), 3).unwrap(), rs[..2].to_vec());
        assert!(store.latest(at(1, 0), 3).unwrap().is_empty());
    }

    #[test]
    fn unknown_fields_survive_a_delete_rewrite() {
        let dir = tempfile::tempdir().unwrap();
        let future = r#"{"id":"f1","timestamp":"2025-01-15T10:00:00Z","confirmed_state":"sad","was_corrected":false,"schema_version":3,"energy":7}"#;
        let doomed = r#"{"id":"f2","timestamp":"2025-01-15T11:00:00Z","confirmed_state":"sad","was_corrected":false,"schema_version":1}"#;
        fs::write(dir.path().join("2025-01-15.jsonl"), format!("{future}\n{doomed}\n")).unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        store.delete(&RecordId::from("f2")).unwrap();
        let text = fs::read_to_string(dir.path().join("2025-01-15.jsonl")).unwrap();
        assert_eq!(text, format!("{future}\n"));
    }

    #[test]
    fn corrupt_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("2025-01-15.jsonl"), "{not json}\n").unwrap();
        assert!(matches!(SessionStore::open(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn cleanup_removes_stale_files_only() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            fs::write(dir.path().join(format!("frame-{i}.bin")), b"x").unwrap();
        }
        let report = cleanup_temp(dir.path(), Duration::ZERO);
        assert_eq!(report, CleanupReport { removed: 3, failures: vec![] });
        assert_eq!(count_files(dir.path()), 0);

        fs::write(dir.path().join("fresh.bin"), b"x").unwrap();
        let report = cleanup_temp(dir.path(), Duration::from_secs(3600));
        assert_eq!(report.removed, 0);
        assert_eq!(count_files(dir.path()), 1);
    }

    #[test]
    fn cleanup_on_empty_or_missing_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(cleanup_temp(dir.path(), Duration::ZERO).removed, 0);
        let missing = dir.path().join("missing");
        assert_eq!(cleanup_temp(&missing, Duration::ZERO), CleanupReport::default());
        for _ in 0..30 {
            assert!(cleanup_temp(dir.path(), Duration::ZERO).failures.is_empty());
        }
    }
}
