//! The deliberative search loop: THINK, SEARCH, and READ steps with
//! per-step confidence elicitation and a three-way termination policy.
//!
//! A run alternates internal reasoning with on-demand retrieval, seeking
//! information only while the reasoning state is judged insufficient. Every
//! produced trace matches the grammar `THINK (SEARCH READ THINK)*`.

use crate::domain::{
    ActionPayload, ActionRecord, Confidence, DeliberationState, EvidenceNote, SourceRef,
};
use crate::events::{EventKind, EventSink, TraceEvent};
use crate::prompts::{render, PromptPack};
use crate::providers::{
    CompletionProvider, CompletionRequest, FetchProvider, ProviderError, ProviderSet,
    SearchProvider,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fallback raw score substituted when a completion omits the confidence
/// marker; the parse failure is logged as a warning event.
pub const FALLBACK_CONFIDENCE_SCORE: f64 = 5.0;

/// Temperature used for answer sampling; high enough that consistency
/// sampling sees genuine variation on a real provider.
const THINK_TEMPERATURE: f64 = 0.7;
/// Temperature for structured extraction calls.
const EXTRACT_TEMPERATURE: f64 = 0.2;

/// Tunable knobs of a deliberation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeliberationPolicy {
    /// Maximum number of THINK steps.
    pub max_rounds: usize,
    /// Stop once fused confidence reaches this normalized threshold.
    pub confidence_stop: f64,
    /// Results requested per SEARCH.
    pub search_k: usize,
    /// Samples drawn per THINK completion for consistency scoring.
    pub consistency_samples: usize,
    /// Convex weight of the verbalized score in confidence fusion.
    pub fusion_weight_w: f64,
}

impl Default for DeliberationPolicy {
    fn default() -> Self {
        Self {
            max_rounds: 8,
            confidence_stop: 0.8,
            search_k: 5,
            consistency_samples: 3,
            fusion_weight_w: 0.5,
        }
    }
}

impl DeliberationPolicy {
    pub fn validate(&self) -> Result<(), DeliberationError> {
        if self.max_rounds < 1 {
            return Err(DeliberationError::InvalidPolicy("max_rounds must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.confidence_stop) {
            return Err(DeliberationError::InvalidPolicy(
                "confidence_stop must be in [0,1]",
            ));
        }
        if self.consistency_samples < 1 {
            return Err(DeliberationError::InvalidPolicy(
                "consistency_samples must be >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.fusion_weight_w) {
            return Err(DeliberationError::InvalidPolicy(
                "fusion_weight_w must be in [0,1]",
            ));
        }
        Ok(())
    }
}

/// Product of one THINK step.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinkOutcome {
    pub tentative_answer: String,
    pub is_final: bool,
    /// Present whenever `is_final` is false.
    pub next_query: Option<String>,
    pub confidence: Confidence,
}

/// Product of one READ step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    /// Notes produced by this step; their sources are a subset of `ingested`.
    pub notes: Vec<EvidenceNote>,
    pub ingested: Vec<SourceRef>,
    pub confidence: Confidence,
}

/// Why a deliberation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ConfidenceStop,
    FinalFlag,
    RoundCap,
}

/// A completed deliberation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationResult {
    pub answer: String,
    pub confidence: Confidence,
    pub state: DeliberationState,
    pub terminated_by: TerminationReason,
}

#[derive(Debug, Error)]
pub enum DeliberationError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("confidence marker missing from completion")]
    MarkerMissing,
    #[error("answer set is empty")]
    EmptyAnswerSet,
    #[error("{0} out of range")]
    OutOfRange(&'static str),
    #[error("invalid policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("step out of order: {0}")]
    OutOfOrder(&'static str),
    #[error("provider failure: {source}")]
    Provider {
        source: ProviderError,
        /// The trace accumulated before the failure, for diagnostics.
        partial: Option<Box<DeliberationState>>,
    },
}

impl DeliberationError {
    fn provider(source: ProviderError) -> Self {
        Self::Provider {
            source,
            partial: None,
        }
    }

    fn attach_partial(self, state: &DeliberationState) -> Self {
        match self {
            Self::Provider { source, .. } => Self::Provider {
                source,
                partial: Some(Box::new(state.clone())),
            },
            other => other,
        }
    }
}

/// Creates the empty starting state for a question.
pub fn init_state(question: &str) -> Result<DeliberationState, DeliberationError> {
    if question.trim().is_empty() {
        return Err(DeliberationError::EmptyQuestion);
    }
    Ok(DeliberationState {
        question: question.to_string(),
        trace: Vec::new(),
        notes: Vec::new(),
        tentative_answer: None,
        confidence: Confidence::zero(),
        rounds_used: 0,
    })
}

/// Returns the text following `KEY:` up to the end of its segment, where
/// segments are delimited by newlines or `|`.
fn find_marker<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let needle = format!("{key}:");
    let start = text.find(&needle)? + needle.len();
    let rest = &text[start..];
    let end = rest
        .find(['\n', '|'])
        .unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// Extracts the raw score from the mandated `CONFIDENCE: <number>` marker,
/// clamped to [0,10].
pub fn parse_verbalized_confidence(text: &str) -> Result<f64, DeliberationError> {
    let value = find_marker(text, "CONFIDENCE").ok_or(DeliberationError::MarkerMissing)?;
    let token: String = value
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.' || *c == '-' || *c == '+')
        .collect();
    let score: f64 = token.parse().map_err(|_| DeliberationError::MarkerMissing)?;
    Ok(score.clamp(0.0, 10.0))
}

/// Agreement fraction of the modal answer under the canonical equivalence
/// rule (case-fold, trim, collapse internal whitespace).
pub fn consistency_confidence(answers: &[String]) -> Result<f64, DeliberationError> {
    if answers.is_empty() {
        return Err(DeliberationError::EmptyAnswerSet);
    }
    let mut classes: Vec<(String, usize)> = Vec::new();
    for answer in answers {
        let key = crate::util::normalize_answer(answer);
        match classes.iter_mut().find(|(k, _)| *k == key) {
            Some((_, count)) => *count += 1,
            None => classes.push((key, 1)),
        }
    }
    let modal = classes.iter().map(|(_, c)| *c).max().unwrap_or(0);
    Ok(modal as f64 / answers.len() as f64)
}

/// Convex fusion of the verbalized and consistency signals:
/// `norm = w * verbal_norm + (1 - w) * consistency`.
pub fn fuse_confidence(
    verbal_norm: f64,
    consistency: f64,
    w: f64,
) -> Result<Confidence, DeliberationError> {
    if !(0.0..=1.0).contains(&verbal_norm) || verbal_norm.is_nan() {
        return Err(DeliberationError::OutOfRange("verbal_norm"));
    }
    if !(0.0..=1.0).contains(&consistency) || consistency.is_nan() {
        return Err(DeliberationError::OutOfRange("consistency"));
    }
    if !(0.0..=1.0).contains(&w) || w.is_nan() {
        return Err(DeliberationError::OutOfRange("fusion weight"));
    }
    Ok(Confidence::fused(w * verbal_norm + (1.0 - w) * consistency))
}

fn render_notes(notes: &[EvidenceNote]) -> String {
    if notes.is_empty() {
        return "(none yet)".to_string();
    }
    notes
        .iter()
        .map(|n| {
            let urls: Vec<&str> = n.sources.iter().map(|s| s.url.as_str()).collect();
            format!("- {} (sources: {})", n.text, urls.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn emit_record(sink: &dyn EventSink, record: &ActionRecord, confidence: Option<Confidence>) {
    let kind = match record.kind() {
        crate::domain::ActionKind::Think => EventKind::Think,
        crate::domain::ActionKind::Search => EventKind::Search,
        crate::domain::ActionKind::Read => EventKind::Read,
    };
    sink.emit(TraceEvent {
        section_index: None,
        round: record.round,
        kind,
        payload: serde_json::to_value(record).unwrap_or(serde_json::Value::Null),
        confidence,
    });
}

/// One THINK step: draws `consistency_samples` completions for the current
/// state, takes the verbal score from the first sample, scores consistency
/// across all of them, fuses the two, and appends a THINK record.
pub fn think_step(
    state: &mut DeliberationState,
    policy: &DeliberationPolicy,
    llm: &dyn CompletionProvider,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<ThinkOutcome, DeliberationError> {
    if let Some(last) = state.trace.last() {
        if last.kind() != crate::domain::ActionKind::Read {
            return Err(DeliberationError::OutOfOrder(
                "THINK requires an empty trace or a preceding READ",
            ));
        }
    }

    let round = state.rounds_used + 1;
    let prompt = render(
        &pack.think,
        &[
            ("round", &round.to_string()),
            ("question", &state.question),
            ("notes", &render_notes(&state.notes)),
        ],
    );
    let req = CompletionRequest::new(prompt, pack.system.clone())
        .with_samples(policy.consistency_samples)
        .with_temperature(THINK_TEMPERATURE);
    let samples = llm.complete(&req).map_err(DeliberationError::provider)?;
    let first = &samples[0];

    let tentative_answer = match find_marker(first, "ANSWER") {
        Some(a) if !a.is_empty() => a.to_string(),
        _ => {
            sink.emit(TraceEvent::warning(
                round,
                "THINK reply missing ANSWER marker; using full text",
            ));
            first.trim().to_string()
        }
    };

    let verbal_raw = match parse_verbalized_confidence(first) {
        Ok(v) => v,
        Err(_) => {
            sink.emit(TraceEvent::warning(
                round,
                format!("confidence marker missing; using fallback {FALLBACK_CONFIDENCE_SCORE}"),
            ));
            FALLBACK_CONFIDENCE_SCORE
        }
    };

    let sample_answers: Vec<String> = samples
        .iter()
        .map(|s| {
            find_marker(s, "ANSWER")
                .map(str::to_string)
                .unwrap_or_else(|| s.trim().to_string())
        })
        .collect();
    let consistency = consistency_confidence(&sample_answers)?;
    let confidence = fuse_confidence(verbal_raw / 10.0, consistency, policy.fusion_weight_w)?;

    let mut is_final = match find_marker(first, "FINAL") {
        Some(v) => v.eq_ignore_ascii_case("yes"),
        None => false,
    };
    let next_query = find_marker(first, "NEXT_QUERY")
        .map(str::to_string)
        .filter(|q| !q.is_empty());
    if !is_final && next_query.is_none() {
        sink.emit(TraceEvent::warning(
            round,
            "non-final THINK without a next query; treating the answer as final",
        ));
        is_final = true;
    }

    let record = ActionRecord {
        round,
        timestamp: state.trace.len() as u64 + 1,
        payload: ActionPayload::Think {
            tentative_answer: tentative_answer.clone(),
            next_query: next_query.clone(),
            confidence,
        },
    };
    emit_record(sink, &record, Some(confidence));
    state.trace.push(record);
    state.tentative_answer = Some(tentative_answer.clone());
    state.confidence = confidence;
    state.rounds_used = round;

    Ok(ThinkOutcome {
        tentative_answer,
        is_final,
        next_query,
        confidence,
    })
}

/// One SEARCH step. Provider failures degrade to an empty result set with a
/// warning so the loop can continue; results are deduplicated against urls
/// already read in this deliberation.
pub fn search_step(
    state: &mut DeliberationState,
    query: &str,
    policy: &DeliberationPolicy,
    searcher: &dyn SearchProvider,
    sink: &dyn EventSink,
) -> Result<Vec<SourceRef>, DeliberationError> {
    match state.trace.last() {
        Some(last) if last.kind() == crate::domain::ActionKind::Think => {}
        _ => {
            return Err(DeliberationError::OutOfOrder(
                "SEARCH requires a preceding THINK",
            ))
        }
    }

    let round = state.rounds_used;
    let (mut results, warning) = match searcher.search(query, policy.search_k) {
        Ok(refs) => (refs, None),
        Err(e) => {
            let message = format!("search failed, continuing with no results: {e}");
            sink.emit(TraceEvent::warning(round, message.clone()));
            (Vec::new(), Some(message))
        }
    };
    let already_read = state.read_urls();
    results.retain(|r| !already_read.contains(&r.url));

    let record = ActionRecord {
        round,
        timestamp: state.trace.len() as u64 + 1,
        payload: ActionPayload::Search {
            query: query.to_string(),
            results: results.clone(),
            warning,
        },
    };
    emit_record(sink, &record, None);
    state.trace.push(record);
    Ok(results)
}

/// One READ step: fetches each result (skipping failures), runs one
/// note-extraction completion over the fetched bodies, and appends a READ
/// record — also when there was nothing to read, preserving the trace
/// grammar.
pub fn read_step(
    state: &mut DeliberationState,
    refs: &[SourceRef],
    policy: &DeliberationPolicy,
    fetcher: &dyn FetchProvider,
    llm: &dyn CompletionProvider,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<ReadOutcome, DeliberationError> {
    let _ = policy;
    match state.trace.last() {
        Some(last) if last.kind() == crate::domain::ActionKind::Search => {}
        _ => {
            return Err(DeliberationError::OutOfOrder(
                "READ requires a preceding SEARCH",
            ))
        }
    }

    let round = state.rounds_used;
    let timestamp = state.trace.len() as u64 + 1;
    let mut docs = Vec::new();
    let mut ingested = Vec::new();
    let mut skipped = Vec::new();
    for r in refs {
        match fetcher.fetch(r) {
            Ok(mut doc) => {
                doc.fetched_at = timestamp;
                ingested.push(r.clone());
                docs.push(doc);
            }
            Err(e) => {
                sink.emit(TraceEvent::warning(
                    round,
                    format!("fetch failed, skipping document: {e}"),
                ));
                skipped.push(r.url.clone());
            }
        }
    }

    let (notes, confidence) = if docs.is_empty() {
        (Vec::new(), state.confidence)
    } else {
        let rendered_docs = docs
            .iter()
            .map(|d| {
                let marker = if d.truncated { " (truncated)" } else { "" };
                format!(
                    "URL: {}\nTITLE: {}{}\nBODY:\n{}\n---",
                    d.source.url, d.source.title, marker, d.body
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(
            &pack.read_extract,
            &[("question", state.question.as_str()), ("documents", rendered_docs.as_str())],
        );
        let req = CompletionRequest::new(prompt, pack.system.clone())
            .with_temperature(EXTRACT_TEMPERATURE);
        let reply = llm
            .complete(&req)
            .map_err(DeliberationError::provider)?
            .remove(0);

        let confidence = match parse_verbalized_confidence(&reply) {
            Ok(raw) => Confidence::verbalized(raw),
            Err(_) => {
                sink.emit(TraceEvent::warning(
                    round,
                    format!(
                        "extraction reply missing confidence marker; using fallback {FALLBACK_CONFIDENCE_SCORE}"
                    ),
                ));
                Confidence::verbalized(FALLBACK_CONFIDENCE_SCORE)
            }
        };
        (parse_notes(&reply, &ingested, round, sink), confidence)
    };

    state.notes.extend(notes.clone());
    let record = ActionRecord {
        round,
        timestamp,
        payload: ActionPayload::Read {
            ingested: ingested.clone(),
            skipped,
            notes_added: notes.len(),
            confidence,
        },
    };
    emit_record(sink, &record, Some(confidence));
    state.trace.push(record);

    Ok(ReadOutcome {
        notes,
        ingested,
        confidence,
    })
}

/// Parses `NOTE: <fact> | SOURCES: <urls>` lines, keeping only citations of
/// actually ingested documents. Notes left without any valid citation are
/// dropped: every kept note is attributable.
fn parse_notes(
    reply: &str,
    ingested: &[SourceRef],
    round: usize,
    sink: &dyn EventSink,
) -> Vec<EvidenceNote> {
    let mut notes = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        if !line.starts_with("NOTE:") {
            continue;
        }
        let Some(text) = find_marker(line, "NOTE").filter(|t| !t.is_empty()) else {
            continue;
        };
        let cited: Vec<String> = find_marker(line, "SOURCES")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|u| !u.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        let sources: Vec<SourceRef> = cited
            .iter()
            .filter_map(|url| ingested.iter().find(|r| &r.url == url).cloned())
            .collect();
        if sources.len() < cited.len() {
            sink.emit(TraceEvent::warning(
                round,
                format!("note cites un-ingested urls, citations dropped: {text}"),
            ));
        }
        if sources.is_empty() {
            sink.emit(TraceEvent::warning(
                round,
                format!("note has no valid source attribution, dropped: {text}"),
            ));
            continue;
        }
        notes.push(EvidenceNote {
            text: text.to_string(),
            sources,
            section_title: String::new(),
        });
    }
    notes
}

/// Termination check, evaluated immediately after a THINK, in exactly this
/// precedence order: final flag, then confidence threshold, then round cap.
/// `None` means continue deliberating.
pub fn should_terminate(
    state: &DeliberationState,
    last_think: &ThinkOutcome,
    policy: &DeliberationPolicy,
) -> Option<TerminationReason> {
    if last_think.is_final {
        return Some(TerminationReason::FinalFlag);
    }
    if last_think.confidence.norm >= policy.confidence_stop {
        return Some(TerminationReason::ConfidenceStop);
    }
    if state.rounds_used >= policy.max_rounds {
        return Some(TerminationReason::RoundCap);
    }
    None
}

/// Runs the full deliberation loop for one question. Halts within
/// `policy.max_rounds` THINK steps for every possible provider behavior;
/// hard provider failures abort with the partial trace attached.
pub fn run_deliberation(
    question: &str,
    providers: &ProviderSet,
    policy: &DeliberationPolicy,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<DeliberationResult, DeliberationError> {
    policy.validate()?;
    let mut state = init_state(question)?;

    loop {
        let outcome = think_step(&mut state, policy, providers.llm.as_ref(), pack, sink)
            .map_err(|e| e.attach_partial(&state))?;

        if let Some(reason) = should_terminate(&state, &outcome, policy) {
            let answer = state.tentative_answer.clone().unwrap_or_default();
            let confidence = state.confidence;
            return Ok(DeliberationResult {
                answer,
                confidence,
                state,
                terminated_by: reason,
            });
        }

        let Some(query) = outcome.next_query else {
            // Unreachable in practice: a non-final THINK always carries a
            // query by the parse rules.
            let answer = state.tentative_answer.clone().unwrap_or_default();
            let confidence = state.confidence;
            return Ok(DeliberationResult {
                answer,
                confidence,
                state,
                terminated_by: TerminationReason::FinalFlag,
            });
        };

        let refs = search_step(&mut state, &query, policy, providers.search.as_ref(), sink)
            .map_err(|e| e.attach_partial(&state))?;
        read_step(
            &mut state,
            &refs,
            policy,
            providers.fetch.as_ref(),
            providers.llm.as_ref(),
            pack,
            sink,
        )
        .map_err(|e| e.attach_partial(&state))?;
    }
}
