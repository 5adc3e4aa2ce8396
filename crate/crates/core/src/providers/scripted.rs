//! Scripted completion provider for offline runs and tests.
//!
//! A script is an ordered list of rules. A call is served by the first
//! rule whose `contains` substrings all appear in the prompt; samples are
//! drawn from the rule's replies, cycling. Rules with a single reply are
//! pure functions of the prompt, which keeps concurrent runs deterministic;
//! multi-reply rules sequence repeated calls against the same prompt.

use super::{CompletionProvider, CompletionRequest, ProviderError};
use serde::{Deserialize, Serialize};
use std::sync::Mutex;

/// What a matched rule does with a call.
#[derive(Debug, Clone, PartialEq)]
pub enum CallScript {
    Reply(Vec<String>),
    Fail(ProviderError),
}

/// One matching rule of a script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// All of these substrings must appear in the prompt. Empty matches any.
    #[serde(default)]
    pub contains: Vec<String>,
    /// Sample texts, cycled per sample drawn.
    #[serde(default)]
    pub replies: Vec<String>,
    /// When set, a matched call fails with this message instead of replying.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<String>,
}

impl ScriptRule {
    pub fn new(contains: Vec<&str>, reply: &str) -> Self {
        Self {
            contains: contains.into_iter().map(str::to_string).collect(),
            replies: vec![reply.to_string()],
            fail: None,
        }
    }

    pub fn failing(contains: Vec<&str>, message: &str) -> Self {
        Self {
            contains: contains.into_iter().map(str::to_string).collect(),
            replies: Vec::new(),
            fail: Some(message.to_string()),
        }
    }

    fn matches(&self, prompt: &str) -> bool {
        self.contains.iter().all(|needle| prompt.contains(needle))
    }
}

/// Serializable script file: rules plus an optional catch-all fallback.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptSpec {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    /// Replies used when no rule matches, cycled. Empty means a miss is an
    /// error.
    #[serde(default)]
    pub fallback: Vec<String>,
}

impl ScriptSpec {
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn into_llm(self) -> ScriptedLlm {
        ScriptedLlm::from_spec(self)
    }
}

struct RuleState {
    rule: ScriptRule,
    cursor: usize,
}

/// Deterministic scripted [`CompletionProvider`]. The per-rule cursors are
/// serialized behind a mutex so concurrent use remains well-defined.
pub struct ScriptedLlm {
    state: Mutex<ScriptedState>,
}

struct ScriptedState {
    rules: Vec<RuleState>,
    fallback: Vec<String>,
    fallback_cursor: usize,
    calls: usize,
}

impl ScriptedLlm {
    pub fn from_spec(spec: ScriptSpec) -> Self {
        Self {
            state: Mutex::new(ScriptedState {
                rules: spec
                    .rules
                    .into_iter()
                    .map(|rule| RuleState { rule, cursor: 0 })
                    .collect(),
                fallback: spec.fallback,
                fallback_cursor: 0,
                calls: 0,
            }),
        }
    }

    /// A script with no rules that serves every sample from one cycling
    /// list of fixture texts.
    pub fn cycling(texts: Vec<&str>) -> Self {
        Self::from_spec(ScriptSpec {
            rules: Vec::new(),
            fallback: texts.into_iter().map(str::to_string).collect(),
        })
    }

    /// A script that returns the same text for every sample of every call.
    pub fn constant(text: &str) -> Self {
        Self::cycling(vec![text])
    }

    pub fn with_rules(rules: Vec<ScriptRule>) -> Self {
        Self::from_spec(ScriptSpec {
            rules,
            fallback: Vec::new(),
        })
    }

    /// Total completion calls served or failed so far.
    pub fn call_count(&self) -> usize {
        self.state.lock().unwrap().calls
    }
}

impl CompletionProvider for ScriptedLlm {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        req.validate()?;
        let mut state = self.state.lock().unwrap();
        state.calls += 1;

        for entry in &mut state.rules {
            if !entry.rule.matches(&req.prompt) {
                continue;
            }
            if let Some(message) = &entry.rule.fail {
                return Err(ProviderError::TransportExhausted {
                    attempts: 1,
                    last_error: message.clone(),
                });
            }
            if entry.rule.replies.is_empty() {
                return Err(ProviderError::ScriptExhausted(
                    "matched rule has no replies".to_string(),
                ));
            }
            let mut samples = Vec::with_capacity(req.sample_count);
            for i in 0..req.sample_count {
                let idx = (entry.cursor + i) % entry.rule.replies.len();
                samples.push(entry.rule.replies[idx].clone());
            }
            entry.cursor = (entry.cursor + req.sample_count) % entry.rule.replies.len();
            return Ok(samples);
        }

        if state.fallback.is_empty() {
            let head: String = req.prompt.chars().take(120).collect();
            return Err(ProviderError::ScriptExhausted(format!(
                "no rule matches prompt starting: {head:?}"
            )));
        }
        let len = state.fallback.len();
        let mut samples = Vec::with_capacity(req.sample_count);
        for i in 0..req.sample_count {
            samples.push(state.fallback[(state.fallback_cursor + i) % len].clone());
        }
        state.fallback_cursor = (state.fallback_cursor + req.sample_count) % len;
        Ok(samples)
    }
}
