//! Choice and expert oracles.
//!
//! An oracle turns a [`Prompt`] into response text. Three implementations
//! exist: [`HttpOracle`] (chat-completions endpoint), [`SyntheticOracle`]
//! (deterministic utility-maximising stand-in) and [`CachedOracle`], a
//! persistent cache around either.

mod cache;
mod http;
mod parse;
pub mod pool;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use cache::CachedOracle;
pub use http::{HttpOracle, OracleConfig, DEFAULT_API_KEY_ENV};
pub use parse::parse_choice_response;
pub use synthetic::{SyntheticOracle, SyntheticOracleParams};

use crate::data::{Alternative, ChoiceContext, RecordKey, RespondentId, RespondentPanel, SocioDemographics};
use crate::digest;
use crate::error::{Error, Result};
use crate::persona::Ratings;

/// Identifies what a prompt is about, for logs and prediction references.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub record: Option<RecordKey>,
    pub persona: Option<RespondentId>,
    pub template: String,
}

/// Structured form of what the prompt text renders. Text-only oracles ignore
/// it; the synthetic oracle reads it instead of parsing prose.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Simulation {
        demographics: SocioDemographics,
        context: ChoiceContext,
        persona: Option<Ratings>,
    },
    Inference(RespondentPanel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    /// Static, context-insensitive backbone.
    pub system: String,
    /// Context-varied inputs.
    pub user: String,
    pub meta: PromptMeta,
    pub payload: Option<Payload>,
}

impl Prompt {
    /// Digest of the two texts; keys caches and prediction references.
    pub fn text_digest(&self) -> String {
        digest::fields_hex(&[self.system.as_bytes(), self.user.as_bytes()])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStats {
    /// Responses produced by the underlying model (network requests or synthetic evaluations).
    pub calls: u64,
    pub cache_hits: u64,
}

pub trait Oracle: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String>;

    /// Like `complete` but never served from a cache; used for retries after
    /// an unparseable answer.
    fn complete_fresh(&self, prompt: &Prompt) -> Result<String> {
        self.complete(prompt)
    }

    fn model_name(&self) -> &str;

    fn temperature(&self) -> f64;

    /// True when identical prompts always yield identical responses.
    fn is_deterministic(&self) -> bool;

    /// True when a repeated prompt is guaranteed the same response, either
    /// because the model is deterministic or because answers are replayed
    /// from a cache.
    fn is_replayable(&self) -> bool {
        self.is_deterministic()
    }

    /// Extra attempts granted to a request whose answer cannot be parsed.
    fn max_retries(&self) -> u32 {
        0
    }

    /// Worker count callers should use when fanning out requests.
    fn max_parallel(&self) -> usize {
        1
    }

    fn stats(&self) -> OracleStats {
        OracleStats::default()
    }

    fn identity(&self) -> String {
        format!("{} (temperature {})", self.model_name(), self.temperature())
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        (**self).complete(prompt)
    }
    fn complete_fresh(&self, prompt: &Prompt) -> Result<String> {
        (**self).complete_fresh(prompt)
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn temperature(&self) -> f64 {
        (**self).temperature()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn is_replayable(&self) -> bool {
        (**self).is_replayable()
    }
    fn max_retries(&self) -> u32 {
        (**self).max_retries()
    }
    fn max_parallel(&self) -> usize {
        (**self).max_parallel()
    }
    fn stats(&self) -> OracleStats {
        (**self).stats()
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

fn check_prompt(prompt: &Prompt) -> Result<()> {
    if prompt.system.trim().is_empty() || prompt.user.trim().is_empty() {
        return Err(Error::Input("prompt texts must be non-empty".into()));
    }
    Ok(())
}

/// Completes `prompt` and parses the answer with `parse`, retrying with a
/// fresh response up to the oracle's retry budget.
pub fn complete_parsed<T>(
    oracle: &dyn Oracle,
    prompt: &Prompt,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<(T, String)> {
    check_prompt(prompt)?;
    let mut text = oracle.complete(prompt)?;
    let mut attempt = 0;
    loop {
        match parse(&text) {
            Ok(v) => return Ok((v, text)),
            Err(e) if attempt >= oracle.max_retries() => {
                log::warn!("unparseable response for {:?}: {e}", prompt.meta);
                return Err(e);
            }
            Err(_) => {
                attempt += 1;
                text = oracle.complete_fresh(prompt)?;
            }
        }
    }
}

/// Asks the oracle for a choice and extracts the chosen mode.
pub fn simulate_choice(oracle: &dyn Oracle, prompt: &Prompt) -> Result<Alternative> {
    simulate_choice_with_text(oracle, prompt).map(|(alt, _)| alt)
}

pub fn simulate_choice_with_text(oracle: &dyn Oracle, prompt: &Prompt) -> Result<(Alternative, String)> {
    complete_parsed(oracle, prompt, parse_choice_response).inspect_err(|e| {
        if matches!(e, Error::Transport { .. }) {
            log::warn!("transport failure for {:?}: {e}", prompt.meta);
        }
    })
}

/// Raw persona text from an expert oracle; parsing happens downstream.
pub fn infer_persona_text(expert: &dyn Oracle, prompt: &Prompt) -> Result<String> {
    check_prompt(prompt)?;
    expert.complete(prompt)
}

#[cfg(test)]
pub(crate) mod testing {
    use std::collections::VecDeque;
    use std::sync::Mutex;

    use super::*;

    /// Replays scripted responses in order; `Err` entries become transport errors.
    pub struct Scripted {
        pub responses: Mutex<VecDeque<std::result::Result<String, String>>>,
        pub retries: u32,
    }

    impl Scripted {
        pub fn new(items: &[std::result::Result<&str, &str>], retries: u32) -> Self {
            Scripted {
                responses: Mutex::new(
                    items
                        .iter()
                        .map(|r| r.map(str::to_string).map_err(str::to_string))
                        .collect(),
                ),
                retries,
            }
        }
    }

    impl Oracle for Scripted {
        fn complete(&self, _prompt: &Prompt) -> Result<String> {
            match self.responses.lock().unwrap().pop_front() {
                Some(Ok(s)) => Ok(s),
                Some(Err(m)) => Err(Error::Transport {
                    attempts: 1,
                    message: m,
                }),
                None => Err(Error::Transport {
                    attempts: 1,
                    message: "script exhausted".into(),
                }),
            }
        }
        fn model_name(&self) -> &str {
            "scripted"
        }
        fn temperature(&self) -> f64 {
            0.0
        }
        fn is_deterministic(&self) -> bool {
            false
        }
        fn max_retries(&self) -> u32 {
            self.retries
        }
    }

    pub fn prompt(user: &str) -> Prompt {
        Prompt {
            system: "backbone".into(),
            user: user.into(),
            meta: PromptMeta::default(),
            payload: None,
        }
    }
}
