//! Core of the state-reflection service: domain vocabulary, emotion
//! inference, prompt orchestration, local session storage, review reports
//! and the optional voice pipeline.

pub mod domain;
pub mod inference;
pub mod llm;
pub mod store;
pub mod reports;
pub mod voice;
