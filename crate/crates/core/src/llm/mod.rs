//! Prompt assembly, the local language-model client, and parsing of the
//! three-step reply.

mod client;
mod parse;
mod prompt;

pub use client::{
    generate_suggestion, ChatApi, LlmClientConfig, LlmError, LlmResponder, OllamaClient,
    StubResponder,
};
pub use parse::{parse_three_steps, render_three_steps, StructureMismatch};
pub use prompt::{build_prompt, PromptTemplate, PromptText, DEFAULT_RULES, EMPTY_CONTEXT};

/// Shown with every suggestion and inside the offline fallback.
pub const SAFETY_STATEMENT: &str = "This system provides general emotional support and \
productivity-oriented suggestions, but it cannot replace professional psychological counseling \
or medical services. If you experience persistent or severe distress, please seek professional help.";

/// Returned instead of a suggestion when the model runtime is unreachable.
pub const FALLBACK_MESSAGE: &str = "The suggestion model is not available right now. \
Your check-in has been saved. Take a slow breath, write down the single next thing you can do \
in five minutes, and try again when you are ready. \
This system provides general emotional support and productivity-oriented suggestions, but it \
cannot replace professional psychological counseling or medical services. If you experience \
persistent or severe distress, please seek professional help.";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_carries_the_safety_statement() {
        assert!(FALLBACK_MESSAGE.ends_with(SAFETY_STATEMENT));
        assert!(FALLBACK_MESSAGE.contains("cannot replace professional psychological counseling"));
    }
}
