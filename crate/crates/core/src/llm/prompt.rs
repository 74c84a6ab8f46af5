use serde::{Deserialize, Serialize};

use crate::domain::PromptFields;

/// Rendered in place of an empty `session_context`.
pub const EMPTY_CONTEXT: &str = "(none)";

/// Prompt template text. Shipped in English; every part can be replaced
/// from configuration for localized deployments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system_instruction: String,
    pub rules: Vec<String>,
    pub output_format: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system_instruction: "You are a friendly and professional digital companion for work-related state reflection.\n\
                Your task is to help the user understand the current blockage and generate a structured three-step suggestion."
                .to_string(),
            rules: DEFAULT_RULES.iter().map(|r| r.to_string()).collect(),
            output_format: DEFAULT_OUTPUT_FORMAT.to_string(),
        }
    }
}

pub const DEFAULT_RULES: [&str; 6] = [
    "Base the response on the user's confirmed state and reflection content.",
    "Provide specific and actionable suggestions.",
    "Use warm and supportive language.",
    "Do not diagnose mental disorders.",
    "Do not provide medical or therapeutic treatment.",
    "If the user expresses severe or persistent distress, recommend professional help.",
];

const DEFAULT_OUTPUT_FORMAT: &str = "Step 1: Immediate action
- Action: <one concrete action>
- Explanation: <short explanation>

Step 2: Short-term strategy
- Action: <one short-term work strategy>
- Explanation: <short explanation>

Step 3: Longer-term reminder
- Action: <one reflection or planning habit>
- Explanation: <short explanation>";

/// The prompt split into the system part and the filled user part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptText {
    pub system_instruction: String,
    pub filled_template: String,
    /// `system_instruction`, a blank line, then `filled_template`.
    pub assembled: String,
}

impl PromptText {
    fn new(system_instruction: String, filled_template: String) -> Self {
        let assembled = format!("{system_instruction}\n\n{filled_template}");
        Self {
            system_instruction,
            filled_template,
            assembled,
        }
    }
}

impl PromptTemplate {
    fn rules_block(&self) -> String {
        let mut out = String::from("Rules:\n");
        for (i, rule) in self.rules.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, rule));
        }
        out
    }

    /// Fills the reflection template. Field values are inserted verbatim.
    pub fn build(&self, fields: &PromptFields) -> PromptText {
        let context = if fields.session_context.trim().is_empty() {
            EMPTY_CONTEXT
        } else {
            fields.session_context.as_str()
        };
        let slots = [
            ("detected_emotion", fields.detected_emotion.as_str()),
            ("user_confirmed_state", fields.user_confirmed_state.as_str()),
            ("reflection_blockage", fields.reflection_blockage.as_str()),
            ("reflection_tried", fields.reflection_tried.as_str()),
            ("reflection_goal", fields.reflection_goal.as_str()),
            ("session_context", context),
        ];
        let mut filled = String::from("Input fields:\n");
        for (name, value) in slots {
            filled.push_str("- ");
            filled.push_str(name);
            filled.push_str(": ");
            filled.push_str(value);
            filled.push('\n');
        }
        filled.push('\n');
        filled.push_str(&self.rules_block());
        filled.push_str("\nOutput format:\n");
        filled.push_str(&self.output_format);
        filled.push('\n');
        PromptText::new(self.system_instruction.clone(), filled)
    }

    /// Free-form voice turn: the transcript is the user content, and the
    /// safety rules travel with the system instruction.
    pub fn build_voice(&self, transcript: &str) -> PromptText {
        let system = format!(
            "{}\n\n{}Reply briefly in plain sentences suitable for speech.",
            self.system_instruction,
            self.rules_block()
        );
        PromptText::new(system, transcript.to_string())
    }
}

/// Builds the reflection prompt with the default template.
pub fn build_prompt(fields: &PromptFields) -> PromptText {
    PromptTemplate::default().build(fields)
}
