use crate::domain::{StepKind, SuggestionStep, ThreeStepSuggestion};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("reply does not follow the three-step format: {0}")]
pub struct StructureMismatch(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Action,
    Explanation,
}

#[derive(Debug, Default)]
struct RawStep {
    number: u32,
    action: Option<String>,
    explanation: Option<String>,
}

impl RawStep {
    fn slot(&mut self, field: Field) -> &mut Option<String> {
        match field {
            Field::Action => &mut self.action,
            Field::Explanation => &mut self.explanation,
        }
    }
}

enum Line<'a> {
    Heading(u32),
    Field(Field, &'a str),
    Blank,
    Text(&'a str),
}

fn strip_decoration(line: &str) -> &str {
    let mut s = line.trim();
    loop {
        let next = s
            .trim_start_matches(['#', '*', '_', '>'])
            .trim_start();
        let next = next
            .strip_prefix("- ")
            .or_else(|| next.strip_prefix("• "))
            .unwrap_or(next)
            .trim_start();
        if next.len() == s.len() {
            return s;
        }
        s = next;
    }
}

fn strip_ci_prefix<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

fn classify(line: &str) -> Line<'_> {
    let clean = strip_decoration(line);
    if clean.is_empty() {
        return Line::Blank;
    }
    if let Some(rest) = strip_ci_prefix(clean, "step") {
        let rest = rest.trim_start();
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if let Ok(number) = digits.parse::<u32>() {
            let after = rest[digits.len()..].trim_start();
            if after.is_empty() || after.starts_with([':', '.', ')', '-', '：', '*']) {
                return Line::Heading(number);
            }
        }
    }
    for (name, field) in [("action", Field::Action), ("explanation", Field::Explanation)] {
        if let Some(rest) = strip_ci_prefix(clean, name) {
            let rest = rest.trim_start_matches(['*', '_']).trim_start();
            let value = rest
                .strip_prefix(':')
                .or_else(|| rest.strip_prefix('：'));
            if let Some(value) = value {
                let value = value.trim_start_matches(['*', '_']).trim();
                let value = value.strip_suffix("**").unwrap_or(value).trim_end();
                return Line::Field(field, value);
            }
        }
    }
    Line::Text(line.trim())
}

/// Extracts the three `Step N` blocks, each with one `Action:` and one
/// `Explanation:` line. Headings are matched case-insensitively; prose
/// before the first heading and after a blank line ends a field is
/// ignored. The whole reply is kept in `raw_text`.
pub fn parse_three_steps(reply: &str) -> Result<ThreeStepSuggestion, StructureMismatch> {
    let mut steps: Vec<RawStep> = Vec::new();
    let mut open_field: Option<Field> = None;

    for line in reply.lines() {
        match classify(line) {
            Line::Heading(number) => {
                steps.push(RawStep { number, ..RawStep::default() });
                open_field = None;
            }
            Line::Field(field, value) => {
                let Some(step) = steps.last_mut() else {
                    continue;
                };
                let slot = step.slot(field);
                if slot.is_some() {
                    return Err(StructureMismatch(format!(
                        "step {} has more than one {:?} line",
                        step.number, field
                    )));
                }
                *slot = Some(value.to_string());
                open_field = Some(field);
            }
            Line::Blank => open_field = None,
            Line::Text(text) => {
                if let (Some(field), Some(step)) = (open_field, steps.last_mut()) {
                    if let Some(value) = step.slot(field) {
                        if !value.is_empty() {
                            value.push('\n');
                        }
                        value.push_str(text);
                    }
                }
            }
        }
    }

    if steps.len() != 3 {
        return Err(StructureMismatch(format!("expected 3 steps, found {}", steps.len())));
    }
    let mut parsed = Vec::with_capacity(3);
    for (i, (raw, kind)) in steps.into_iter().zip(StepKind::ORDER).enumerate() {
        let position = i as u32 + 1;
        if raw.number != position {
            return Err(StructureMismatch(format!(
                "step {position} is labelled `Step {}`",
                raw.number
            )));
        }
        let action = raw.action.filter(|a| !a.trim().is_empty());
        let explanation = raw.explanation.filter(|e| !e.trim().is_empty());
        match (action, explanation) {
            (Some(action), Some(explanation)) => parsed.push(SuggestionStep { kind, action, explanation }),
            (None, _) => return Err(StructureMismatch(format!("step {position} has no action"))),
            (_, None) => return Err(StructureMismatch(format!("step {position} has no explanation"))),
        }
    }
    let steps: [SuggestionStep; 3] = parsed
        .try_into()
        .map_err(|_| StructureMismatch("expected 3 steps".into()))?;
    Ok(ThreeStepSuggestion {
        steps,
        raw_text: reply.to_string(),
    })
}

/// Renders steps in the output format requested by the prompt.
pub fn render_three_steps(steps: &[SuggestionStep; 3]) -> String {
    let mut out = String::new();
    for (i, step) in steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!(
            "Step {}: {}\n- Action: {}\n- Explanation: {}\n",
            i + 1,
            step.kind.title(),
            step.action,
            step.explanation
        ));
    }
    out
}
