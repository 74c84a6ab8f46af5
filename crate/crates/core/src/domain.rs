//! Shared vocabulary: emotion labels, predictions, reflection entries,
//! parsed suggestions and the persisted session record.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SubsecRound, Utc};
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

/// Current on-disk record schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance on the sum of a score vector.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

/// Facial-expression classes in canonical order.
///
/// The declaration order is the canonical order: it fixes matrix axes and
/// breaks argmax ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Angry,
    Disgust,
    Fear,
    Happy,
    Neutral,
    Sad,
    Surprise,
}

impl EmotionLabel {
    pub const COUNT: usize = 7;

    pub const ALL: [EmotionLabel; Self::COUNT] = [
        EmotionLabel::Angry,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happy,
        EmotionLabel::Neutral,
        EmotionLabel::Sad,
        EmotionLabel::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "angry",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprise => "surprise",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown emotion label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for EmotionLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let needle = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|label| label.as_str().eq_ignore_ascii_case(needle))
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// Per-class probabilities, indexed by [`EmotionLabel::index`].
///
/// Serialized as a JSON object keyed by label, in canonical order. Every
/// label must be present when deserializing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores([f64; EmotionLabel::COUNT]);

impl Scores {
    pub fn new(values: [f64; EmotionLabel::COUNT]) -> Self {
        Self(values)
    }

    pub fn uniform() -> Self {
        Self([1.0 / EmotionLabel::COUNT as f64; EmotionLabel::COUNT])
    }

    /// `primary` gets `weight`; the rest is split evenly across the other six.
    pub fn peaked(primary: EmotionLabel, weight: f64) -> Self {
        let rest = (1.0 - weight) / (EmotionLabel::COUNT - 1) as f64;
        let mut values = [rest; EmotionLabel::COUNT];
        values[primary.index()] = weight;
        Self(values)
    }

    pub fn get(&self, label: EmotionLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn values(&self) -> &[f64; EmotionLabel::COUNT] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (EmotionLabel, f64)> + '_ {
        EmotionLabel::ALL.iter().map(move |&l| (l, self.0[l.index()]))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Highest-scoring label; ties go to the earliest label in canonical order.
    pub fn argmax(&self) -> EmotionLabel {
        let mut best = 0;
        for i in 1..EmotionLabel::COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        EmotionLabel::ALL[best]
    }

    /// True when every entry is finite and in [0, 1] and the sum is within
    /// [`SCORE_SUM_TOLERANCE`] of one.
    pub fn is_distribution(&self) -> bool {
        self.0.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
            && (self.sum() - 1.0).abs() <= SCORE_SUM_TOLERANCE
    }
}

impl Serialize for Scores {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(EmotionLabel::COUNT))?;
        for (label, value) in self.iter() {
            map.serialize_entry(label.as_str(), &value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Scores {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ScoresVisitor;

        impl<'de> Visitor<'de> for ScoresVisitor {
            type Value = Scores;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object with a score for each of the seven emotion labels")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Scores, A::Error> {
                let mut values = [None; EmotionLabel::COUNT];
                while let Some(key) = access.next_key::<String>()? {
                    let label: EmotionLabel = key.parse().map_err(de::Error::custom)?;
                    if values[label.index()].replace(access.next_value::<f64>()?).is_some() {
                        return Err(de::Error::custom(format!("duplicate score for `{label}`")));
                    }
                }
                let mut out = [0.0; EmotionLabel::COUNT];
                for (i, slot) in values.iter().enumerate() {
                    out[i] = slot.ok_or_else(|| {
                        de::Error::custom(format!("missing score for `{}`", EmotionLabel::ALL[i]))
                    })?;
                }
                Ok(Scores(out))
            }
        }

        deserializer.deserialize_map(ScoresVisitor)
    }
}

/// A model-side facial-expression cue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPrediction {
    pub label: EmotionLabel,
    pub scores: Scores,
    pub model_id: String,
}

impl EmotionPrediction {
    /// Builds a prediction whose label is the argmax of `scores`.
    pub fn from_scores(scores: Scores, model_id: impl Into<String>) -> Self {
        Self {
            label: scores.argmax(),
            scores,
            model_id: model_id.into(),
        }
    }
}

/// Answers to the three reflection questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionEntry {
    /// Where am I stuck?
    pub blockage: String,
    /// What have I tried?
    #[serde(default)]
    pub tried: String,
    /// What do I want to achieve next?
    pub goal: String,
}

impl ReflectionEntry {
    pub fn new(
        blockage: impl Into<String>,
        tried: impl Into<String>,
        goal: impl Into<String>,
    ) -> Self {
        Self {
            blockage: blockage.into(),
            tried: tried.into(),
            goal: goal.into(),
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.blockage.trim().is_empty() {
            out.push(Violation::EmptyBlockage);
        }
        if self.goal.trim().is_empty() {
            out.push(Violation::EmptyGoal);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Immediate,
    ShortTerm,
    LongerTerm,
}

impl StepKind {
    pub const ORDER: [StepKind; 3] = [StepKind::Immediate, StepKind::ShortTerm, StepKind::LongerTerm];

    /// Heading title used in the three-step output format.
    pub fn title(self) -> &'static str {
        match self {
            StepKind::Immediate => "Immediate action",
            StepKind::ShortTerm => "Short-term strategy",
            StepKind::LongerTerm => "Longer-term reminder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionStep {
    pub kind: StepKind,
    pub action: String,
    pub explanation: String,
}

/// A bounded three-step suggestion parsed from a model reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeStepSuggestion {
    pub steps: [SuggestionStep; 3],
    pub raw_text: String,
}

impl ThreeStepSuggestion {
    pub fn step(&self, kind: StepKind) -> &SuggestionStep {
        &self.steps[StepKind::ORDER.iter().position(|k| *k == kind).unwrap_or(0)]
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (position, (step, expected)) in self.steps.iter().zip(StepKind::ORDER).enumerate() {
            if step.kind != expected {
                out.push(Violation::StepOutOfOrder { position: position + 1 });
            }
            if step.action.trim().is_empty() || step.explanation.trim().is_empty() {
                out.push(Violation::EmptyStepField { position: position + 1 });
            }
        }
        out
    }
}

/// Opaque record identifier: 128 random bits rendered as lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(String);

impl RecordId {
    pub fn random() -> Self {
        Self(format!("{:032x}", rand::random::<u128>()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for RecordId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for RecordId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Serde adapter for second-precision UTC instants (`YYYY-MM-DDTHH:MM:SSZ`).
pub mod utc_seconds {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::AutoSi, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// Current time truncated to whole seconds.
pub fn now_seconds() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(0)
}

/// One reflection episode as persisted on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: RecordId,
    #[serde(with = "utc_seconds")]
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_emotion: Option<EmotionPrediction>,
    pub confirmed_state: EmotionLabel,
    pub was_corrected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<ThreeStepSuggestion>,
    /// Model reply kept verbatim when it could not be parsed into three steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unparsed_reply: Option<String>,
    pub schema_version: u32,
    /// Fields written by newer versions; carried through rewrites untouched.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl SessionRecord {
    /// A record with a fresh id; `was_corrected` is derived from the inputs.
    pub fn new(
        timestamp: DateTime<Utc>,
        detected_emotion: Option<EmotionPrediction>,
        confirmed_state: EmotionLabel,
    ) -> Self {
        let was_corrected = detected_emotion
            .as_ref()
            .is_some_and(|d| d.label != confirmed_state);
        Self {
            id: RecordId::random(),
            timestamp,
            detected_emotion,
            confirmed_state,
            was_corrected,
            reflection: None,
            suggestion: None,
            unparsed_reply: None,
            schema_version: SCHEMA_VERSION,
            extra: Map::new(),
        }
    }

    pub fn with_reflection(mut self, reflection: ReflectionEntry) -> Self {
        self.reflection = Some(reflection);
        self
    }

    pub fn with_suggestion(mut self, suggestion: ThreeStepSuggestion) -> Self {
        self.suggestion = Some(suggestion);
        self
    }
}

/// A broken [`SessionRecord`] invariant.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("id is empty")]
    EmptyId,
    #[error("schema_version must be at least 1")]
    SchemaVersion,
    #[error("timestamp is not whole seconds")]
    SubsecondTimestamp,
    #[error("was_corrected inconsistent")]
    WasCorrectedInconsistent,
    #[error("suggestion without reflection")]
    SuggestionWithoutReflection,
    #[error("unparsed reply without reflection")]
    UnparsedReplyWithoutReflection,
    #[error("both suggestion and unparsed reply present")]
    SuggestionAndUnparsedReply,
    #[error("reflection blockage is empty")]
    EmptyBlockage,
    #[error("reflection goal is empty")]
    EmptyGoal,
    #[error("suggestion step {position} has the wrong kind")]
    StepOutOfOrder { position: usize },
    #[error("suggestion step {position} has an empty action or explanation")]
    EmptyStepField { position: usize },
    #[error("detected score for `{label}` is outside [0, 1]")]
    ScoreOutOfRange { label: EmotionLabel },
    #[error("detected scores sum to {sum}, not 1")]
    ScoreSum { sum: f64 },
    #[error("detected label is not the argmax of its scores")]
    LabelNotArgmax,
}

/// Checks every [`SessionRecord`] invariant. An empty list means the record
/// is valid.
pub fn validate_record(record: &SessionRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.as_str().trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    if record.schema_version < 1 {
        out.push(Violation::SchemaVersion);
    }
    if record.timestamp.trunc_subsecs(0) != record.timestamp {
        out.push(Violation::SubsecondTimestamp);
    }

    let expected_correction = record
        .detected_emotion
        .as_ref()
        .is_some_and(|d| d.label != record.confirmed_state);
    if record.was_corrected != expected_correction {
        out.push(Violation::WasCorrectedInconsistent);
    }

    if let Some(pred) = &record.detected_emotion {
        for (label, value) in pred.scores.iter() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                out.push(Violation::ScoreOutOfRange { label });
            }
        }
        let sum = pred.scores.sum();
        if !sum.is_finite() || (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
            out.push(Violation::ScoreSum { sum });
        }
        if pred.scores.argmax() != pred.label {
            out.push(Violation::LabelNotArgmax);
        }
    }

    if let Some(reflection) = &record.reflection {
        out.extend(reflection.violations());
    }
    if let Some(suggestion) = &record.suggestion {
        if record.reflection.is_none() {
            out.push(Violation::SuggestionWithoutReflection);
        }
        out.extend(suggestion.violations());
    }
    if record.unparsed_reply.is_some() {
        if record.reflection.is_none() {
            out.push(Violation::UnparsedReplyWithoutReflection);
        }
        if record.suggestion.is_some() {
            out.push(Violation::SuggestionAndUnparsedReply);
        }
    }
    out
}

/// The six prompt slots.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptFields {
    pub detected_emotion: String,
    pub user_confirmed_state: String,
    pub reflection_blockage: String,
    pub reflection_tried: String,
    pub reflection_goal: String,
    #[serde(default)]
    pub session_context: String,
}

impl PromptFields {
    /// Fills the slots from a state check and a reflection. A missing
    /// detection renders as `(none)`.
    pub fn from_parts(
        detected: Option<&EmotionPrediction>,
        confirmed: EmotionLabel,
        reflection: &ReflectionEntry,
        session_context: impl Into<String>,
    ) -> Self {
        Self {
            detected_emotion: detected
                .map(|d| d.label.to_string())
                .unwrap_or_else(|| "(none)".to_string()),
            user_confirmed_state: confirmed.to_string(),
            reflection_blockage: reflection.blockage.clone(),
            reflection_tried: reflection.tried.clone(),
            reflection_goal: reflection.goal.clone(),
            session_context: session_context.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 1, 15, 10, 0, 0).unwrap()
    }

    fn suggestion() -> ThreeStepSuggestion {
        let step = |kind| SuggestionStep {
            kind,
            action: "take a walk".into(),
            explanation: "reset attention".into(),
        };
        ThreeStepSuggestion {
            steps: [
                step(StepKind::Immediate),
                step(StepKind::ShortTerm),
                step(StepKind::LongerTerm),
            ],
            raw_text: "raw".into(),
        }
    }

    #[test]
    fn labels_serialize_lowercase_in_canonical_order() {
        let names: Vec<String> = EmotionLabel::ALL
            .iter()
            .map(|l| serde_json::to_string(l).unwrap())
            .collect();
        assert_eq!(
            names,
            ["\"angry\"", "\"disgust\"", "\"fear\"", "\"happy\"", "\"neutral\"", "\"sad\"", "\"surprise\""]
        );
        assert_eq!("Happy".parse::<EmotionLabel>().unwrap(), EmotionLabel::Happy);
        assert!("tired".parse::<EmotionLabel>().is_err());
    }

    #[test]
    fn minimal_manual_record_is_valid() {
        let record = SessionRecord::new(ts(), None, EmotionLabel::Happy);
        assert!(validate_record(&record).is_empty());
        assert!(!record.was_corrected);
    }

    #[test]
    fn contradictory_correction_flag_is_reported() {
        let pred = EmotionPrediction::from_scores(Scores::peaked(EmotionLabel::Happy, 0.9), "stub");
        let mut record = SessionRecord::new(ts(), Some(pred), EmotionLabel::Happy);
        record.was_corrected = true;
        let violations = validate_record(&record);
        assert_eq!(violations, vec![Violation::WasCorrectedInconsistent]);
        assert_eq!(violations[0].to_string(), "was_corrected inconsistent");
    }

    #[test]
    fn suggestion_requires_reflection() {
        let record = SessionRecord::new(ts(), None, EmotionLabel::Sad).with_suggestion(suggestion());
        let violations = validate_record(&record);
        assert_eq!(violations, vec![Violation::SuggestionWithoutReflection]);
        assert_eq!(violations[0].to_string(), "suggestion without reflection");
    }

    #[test]
    fn blank_goal_is_rejected() {
        let record = SessionRecord::new(ts(), None, EmotionLabel::Sad)
            .with_reflection(ReflectionEntry::new("stuck", "", "   "));
        assert_eq!(validate_record(&record), vec![Violation::EmptyGoal]);
    }

    #[test]
    fn detected_scores_are_checked() {
        let mut pred = EmotionPrediction::from_scores(Scores::peaked(EmotionLabel::Fear, 0.5), "m");
        pred.label = EmotionLabel::Sad;
        let record = SessionRecord::new(ts(), Some(pred.clone()), EmotionLabel::Sad);
        assert!(validate_record(&record).contains(&Violation::LabelNotArgmax));

        pred.scores = Scores::new([0.5; 7]);
        pred.label = EmotionLabel::Angry;
        let record = SessionRecord::new(ts(), Some(pred), EmotionLabel::Angry);
        assert!(matches!(validate_record(&record)[0], Violation::ScoreSum { .. }));
    }

    #[test]
    fn absent_optionals_are_omitted() {
        let record = SessionRecord::new(ts(), None, EmotionLabel::Neutral);
        let json = serde_json::to_value(&record).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["confirmed_state", "id", "schema_version", "timestamp", "was_corrected"]
        );
        assert_eq!(json["timestamp"], "2025-01-15T10:00:00Z");
    }

    #[test]
    fn unknown_fields_survive_a_rewrite() {
        let line = r#"{"id":"ab","timestamp":"2025-01-15T10:00:00Z","confirmed_state":"sad","was_corrected":false,"schema_version":2,"mood_note":{"x":1}}"#;
        let record: SessionRecord = serde_json::from_str(line).unwrap();
        assert_eq!(record.extra["mood_note"]["x"], 1);
        let again: SessionRecord =
            serde_json::from_str(&serde_json::to_string(&record).unwrap()).unwrap();
        assert_eq!(again, record);
    }

    #[test]
    fn scores_require_all_labels() {
        let err = serde_json::from_str::<Scores>(r#"{"angry":1.0}"#).unwrap_err();
        assert!(err.to_string().contains("missing score"));
    }

    #[test]
    fn uniform_scores_pick_angry() {
        assert_eq!(Scores::uniform().argmax(), EmotionLabel::Angry);
    }

    fn arb_label() -> impl Strategy<Value = EmotionLabel> {
        (0..EmotionLabel::COUNT).prop_map(|i| EmotionLabel::ALL[i])
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 ,.!?\u{4e00}-\u{4e10}]{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    fn arb_record() -> impl Strategy<Value = SessionRecord> {
        (
            0i64..2_000_000_000,
            proptest::option::of((arb_label(), proptest::array::uniform7(0.01f64..1.0))),
            arb_label(),
            proptest::option::of((arb_text(), arb_text(), arb_text())),
            any::<bool>(),
        )
            .prop_map(|(secs, detected, confirmed, reflection, with_suggestion)| {
                let detected = detected.map(|(_, raw)| {
                    let total: f64 = raw.iter().sum();
                    EmotionPrediction::from_scores(Scores::new(raw.map(|v| v / total)), "stub")
                });
                let mut record =
                    SessionRecord::new(Utc.timestamp_opt(secs, 0).unwrap(), detected, confirmed);
                if let Some((b, t, g)) = reflection {
                    record = record.with_reflection(ReflectionEntry::new(b, t, g));
                    if with_suggestion {
                        record = record.with_suggestion(suggestion());
                    }
                }
                record
            })
    }

    proptest! {
        #[test]
        fn valid_records_round_trip(record in arb_record()) {
            prop_assert!(validate_record(&record).is_empty());
            let json = serde_json::to_string(&record).unwrap();
            let back: SessionRecord = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, record);
        }

        #[test]
        fn ties_break_to_the_earliest_label(
            base in proptest::array::uniform7(0.0f64..0.5),
            tied in proptest::collection::btree_set(0usize..7, 1..=7),
        ) {
            let mut values = base;
            for &i in &tied {
                values[i] = 0.75;
            }
            let expected = EmotionLabel::ALL[*tied.iter().next().unwrap()];
            prop_assert_eq!(Scores::new(values).argmax(), expected);
        }
    }
}
