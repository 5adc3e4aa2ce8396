//! Three-stage report workflow: the planner decomposes the topic into
//! sections, researchers gather evidence per section through deliberative
//! search with a reflection loop, and the writer composes claim-annotated
//! drafts plus the framing introduction and conclusion.
//!
//! Sections are independent work units: they may run on concurrent workers,
//! and their results (and trace events) are merged in plan order so a run
//! is deterministic regardless of parallelism.

use crate::deliberation::{run_deliberation, DeliberationError, DeliberationPolicy, DeliberationResult};
use crate::domain::{
    validate_plan, Claim, Confidence, EvidenceNote, Report, ReportPlan, SectionDraft, SectionKind,
    SectionSpec, SourceRef, TopicRequest,
};
use crate::events::{BufferSink, EventKind, EventSink, SectionTaggedSink, TraceEvent};
use crate::prompts::{render, PromptPack};
use crate::providers::{CompletionProvider, CompletionRequest, FetchProvider, ProviderError, ProviderSet, SearchProvider};
use crate::util::{normalize_answer, parallel_map};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

const STRUCTURED_TEMPERATURE: f64 = 0.2;

/// Verdict of one reflection pass over a section's accumulated notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionVerdict {
    pub sufficient: bool,
    pub gaps: Vec<String>,
    /// Non-empty exactly when `sufficient` is false.
    pub new_queries: Vec<String>,
}

/// Everything the researcher gathered for one section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionNotes {
    pub section: SectionSpec,
    pub notes: Vec<EvidenceNote>,
    pub deliberations: Vec<DeliberationResult>,
    pub reflection_rounds: usize,
}

impl SectionNotes {
    /// The section's evidence ceiling: the maximum final confidence over
    /// its deliberations, zero when there are none.
    pub fn evidence_confidence(&self) -> Confidence {
        self.deliberations
            .iter()
            .map(|d| d.confidence)
            .max_by(|a, b| a.norm.total_cmp(&b.norm))
            .unwrap_or_else(Confidence::zero)
    }
}

/// Pipeline-level knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub queries_per_section: usize,
    pub reflection_cap: usize,
    pub deliberation: DeliberationPolicy,
    pub section_parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            queries_per_section: 2,
            reflection_cap: 3,
            deliberation: DeliberationPolicy::default(),
            section_parallelism: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.queries_per_section < 1 {
            return Err(PipelineError::InvalidConfig(
                "queries_per_section must be >= 1",
            ));
        }
        if self.section_parallelism < 1 {
            return Err(PipelineError::InvalidConfig(
                "section_parallelism must be >= 1",
            ));
        }
        self.deliberation
            .validate()
            .map_err(|_| PipelineError::InvalidConfig("invalid deliberation policy"))?;
        Ok(())
    }
}

/// Per-role providers for a pipeline run. All roles may share one provider.
#[derive(Clone)]
pub struct PipelineProviders {
    pub planner: Arc<dyn CompletionProvider>,
    pub researcher: Arc<dyn CompletionProvider>,
    pub writer: Arc<dyn CompletionProvider>,
    pub reflector: Arc<dyn CompletionProvider>,
    pub search: Arc<dyn SearchProvider>,
    pub fetch: Arc<dyn FetchProvider>,
}

impl PipelineProviders {
    /// All completion roles backed by the same provider.
    pub fn shared(
        llm: Arc<dyn CompletionProvider>,
        search: Arc<dyn SearchProvider>,
        fetch: Arc<dyn FetchProvider>,
    ) -> Self {
        Self {
            planner: llm.clone(),
            researcher: llm.clone(),
            writer: llm.clone(),
            reflector: llm,
            search,
            fetch,
        }
    }

    fn researcher_set(&self) -> ProviderSet {
        ProviderSet {
            llm: self.researcher.clone(),
            search: self.search.clone(),
            fetch: self.fetch.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(&'static str),
    #[error("plan parse failed after retry: {0}")]
    PlanParseFailed(String),
    #[error("query generation parse failed for section '{section}'")]
    QueryParseFailed { section: String },
    #[error("draft parse failed for section '{section}': {reason}")]
    DraftParseFailed { section: String, reason: String },
    #[error("missing draft for section '{section}'")]
    MissingDraft { section: String },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("section '{section}': {source}")]
    Section {
        section: String,
        source: DeliberationError,
    },
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
}

/// Asks the planner to decompose the topic into body sections and wraps
/// them with the standard introduction and conclusion specs. Retries a
/// malformed completion once before failing.
pub fn plan_topic(
    request: &TopicRequest,
    llm: &dyn CompletionProvider,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<ReportPlan, PipelineError> {
    if !request.is_valid() {
        return Err(PipelineError::InvalidPlan("topic is empty".to_string()));
    }
    let prompt = render(
        &pack.plan,
        &[
            ("topic", request.topic.as_str()),
            ("language", request.language.as_str()),
            ("constraints", request.constraints.as_deref().unwrap_or("(none)")),
        ],
    );
    let req = CompletionRequest::new(prompt, pack.system.clone())
        .with_temperature(STRUCTURED_TEMPERATURE);

    let mut last_error = String::new();
    for attempt in 1..=2 {
        let reply = llm.complete(&req)?.remove(0);
        match parse_plan_reply(&reply, request) {
            Ok(plan) => {
                let verdict = validate_plan(&plan);
                if verdict.is_ok() {
                    sink.emit(TraceEvent {
                        section_index: None,
                        round: 0,
                        kind: EventKind::Plan,
                        payload: serde_json::to_value(&plan).unwrap_or(serde_json::Value::Null),
                        confidence: None,
                    });
                    return Ok(plan);
                }
                last_error = verdict
                    .violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ");
            }
            Err(e) => last_error = e,
        }
        if attempt == 1 {
            sink.emit(TraceEvent::warning(
                0,
                format!("plan reply malformed, retrying once: {last_error}"),
            ));
        }
    }
    Err(PipelineError::PlanParseFailed(last_error))
}

fn parse_plan_reply(reply: &str, request: &TopicRequest) -> Result<ReportPlan, String> {
    let mut bodies = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        if !line.starts_with("SECTION:") {
            continue;
        }
        let title = marker_value(line, "SECTION").unwrap_or_default();
        let description = marker_value(line, "DESCRIPTION").unwrap_or_default();
        if title.is_empty() || description.is_empty() {
            return Err(format!("section line missing title or description: {line}"));
        }
        bodies.push((title, description));
    }
    if bodies.is_empty() {
        return Err("no SECTION lines in plan reply".to_string());
    }
    let mut sections = vec![SectionSpec::introduction()];
    for (i, (title, description)) in bodies.into_iter().enumerate() {
        sections.push(SectionSpec::body(i + 1, title, description));
    }
    sections.push(SectionSpec::conclusion());
    Ok(ReportPlan {
        request: request.clone(),
        sections,
    })
}

fn marker_value(line: &str, key: &str) -> Option<String> {
    let needle = format!("{key}:");
    let start = line.find(&needle)? + needle.len();
    let rest = &line[start..];
    let end = rest.find(['|', '\n']).unwrap_or(rest.len());
    let value = rest[..end].trim();
    if value.is_empty() {
        None
    } else {
        Some(value.to_string())
    }
}

/// Generates `n` mutually distinct search queries for a section. Scripted
/// duplicates are deduplicated; a shortfall triggers exactly one re-ask,
/// after which the distinct set is returned with a warning.
pub fn generate_queries(
    section: &SectionSpec,
    prior_context: &str,
    n: usize,
    llm: &dyn CompletionProvider,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<Vec<String>, PipelineError> {
    if n < 1 {
        return Err(PipelineError::InvalidConfig("query count must be >= 1"));
    }
    let prompt = render(
        &pack.queries,
        &[
            ("section_title", section.title.as_str()),
            ("section_description", section.description.as_str()),
            ("prior_context", prior_context),
            ("n", &n.to_string()),
        ],
    );
    let req = CompletionRequest::new(prompt, pack.system.clone())
        .with_temperature(STRUCTURED_TEMPERATURE);

    let mut queries: Vec<String> = Vec::new();
    for attempt in 1..=2 {
        let reply = llm.complete(&req)?.remove(0);
        for line in reply.lines() {
            let line = line.trim();
            if let Some(q) = line.strip_prefix("QUERY:").map(str::trim) {
                if !q.is_empty() && !queries.iter().any(|have| normalize_answer(have) == normalize_answer(q)) {
                    queries.push(q.to_string());
                }
            }
            if queries.len() == n {
                break;
            }
        }
        if queries.len() >= n {
            break;
        }
        if attempt == 1 {
            sink.emit(TraceEvent::warning(
                0,
                format!(
                    "query generation returned {} of {n} distinct queries for '{}', re-asking once",
                    queries.len(),
                    section.title
                ),
            ));
        }
    }
    if queries.is_empty() {
        return Err(PipelineError::QueryParseFailed {
            section: section.title.clone(),
        });
    }
    if queries.len() < n {
        sink.emit(TraceEvent::warning(
            0,
            format!(
                "proceeding with {} distinct queries for '{}' after re-ask",
                queries.len(),
                section.title
            ),
        ));
    }
    sink.emit(TraceEvent {
        section_index: None,
        round: 0,
        kind: EventKind::Queries,
        payload: serde_json::json!({ "section": section.title, "queries": queries }),
        confidence: None,
    });
    Ok(queries)
}

/// One reflection pass: asks whether the accumulated notes suffice and
/// parses proposed follow-up queries, deduplicated against everything
/// already issued. Parse failures fail open as sufficient, with a warning.
pub fn reflect(
    section: &SectionSpec,
    notes: &SectionNotes,
    round: usize,
    issued_queries: &[String],
    llm: &dyn CompletionProvider,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<ReflectionVerdict, PipelineError> {
    let issued_rendered = if issued_queries.is_empty() {
        "(none)".to_string()
    } else {
        issued_queries
            .iter()
            .map(|q| format!("- {q}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let notes_rendered = render_notes_list(&notes.notes);
    let prompt = render(
        &pack.reflect,
        &[
            ("section_title", section.title.as_str()),
            ("section_description", section.description.as_str()),
            ("round", &round.to_string()),
            ("issued", issued_rendered.as_str()),
            ("notes", notes_rendered.as_str()),
        ],
    );
    let req = CompletionRequest::new(prompt, pack.system.clone())
        .with_temperature(STRUCTURED_TEMPERATURE);
    let reply = llm.complete(&req)?.remove(0);

    let sufficient_marker = reply
        .lines()
        .find_map(|line| marker_value(line.trim(), "SUFFICIENT"));
    let Some(sufficient_value) = sufficient_marker else {
        sink.emit(TraceEvent::warning(
            round,
            format!(
                "reflection reply missing SUFFICIENT marker for '{}'; failing open as sufficient",
                section.title
            ),
        ));
        return Ok(ReflectionVerdict {
            sufficient: true,
            gaps: Vec::new(),
            new_queries: Vec::new(),
        });
    };
    let mut sufficient = sufficient_value.eq_ignore_ascii_case("yes");

    let mut gaps = Vec::new();
    let mut new_queries: Vec<String> = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        if let Some(gap) = line.strip_prefix("GAP:").map(str::trim) {
            if !gap.is_empty() {
                gaps.push(gap.to_string());
            }
        }
        if let Some(q) = line.strip_prefix("QUERY:").map(str::trim) {
            let is_new = !q.is_empty()
                && !issued_queries
                    .iter()
                    .any(|have| normalize_answer(have) == normalize_answer(q))
                && !new_queries
                    .iter()
                    .any(|have| normalize_answer(have) == normalize_answer(q));
            if is_new {
                new_queries.push(q.to_string());
            }
        }
    }

    if !sufficient && new_queries.is_empty() {
        sink.emit(TraceEvent::warning(
            round,
            format!(
                "reflection for '{}' proposed no new queries after dedup; treating as sufficient",
                section.title
            ),
        ));
        sufficient = true;
    }
    if sufficient {
        new_queries.clear();
    }

    let verdict = ReflectionVerdict {
        sufficient,
        gaps,
        new_queries,
    };
    sink.emit(TraceEvent {
        section_index: None,
        round,
        kind: EventKind::Reflect,
        payload: serde_json::to_value(&verdict).unwrap_or(serde_json::Value::Null),
        confidence: None,
    });
    Ok(verdict)
}

fn render_notes_list(notes: &[EvidenceNote]) -> String {
    if notes.is_empty() {
        return "(none)".to_string();
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

/// Researches one section: initial focused queries, one deliberation per
/// query, then the reflection loop up to `reflection_cap` passes. Notes
/// coming out of the deliberations are stamped with the owning section
/// title.
pub fn research_section(
    section: &SectionSpec,
    prior_context: &str,
    cfg: &PipelineConfig,
    providers: &PipelineProviders,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<SectionNotes, PipelineError> {
    let researcher_set = providers.researcher_set();
    let mut result = SectionNotes {
        section: section.clone(),
        notes: Vec::new(),
        deliberations: Vec::new(),
        reflection_rounds: 0,
    };

    let run_queries = |queries: &[String],
                       result: &mut SectionNotes|
     -> Result<(), PipelineError> {
        for query in queries {
            let deliberation =
                run_deliberation(query, &researcher_set, &cfg.deliberation, pack, sink).map_err(
                    |source| PipelineError::Section {
                        section: section.title.clone(),
                        source,
                    },
                )?;
            for note in &deliberation.state.notes {
                let mut stamped = note.clone();
                stamped.section_title = section.title.clone();
                result.notes.push(stamped);
            }
            result.deliberations.push(deliberation);
        }
        Ok(())
    };

    let mut issued = generate_queries(
        section,
        prior_context,
        cfg.queries_per_section,
        providers.researcher.as_ref(),
        pack,
        sink,
    )?;
    run_queries(&issued.clone(), &mut result)?;

    for round in 1..=cfg.reflection_cap {
        let verdict = reflect(
            section,
            &result,
            round,
            &issued,
            providers.reflector.as_ref(),
            pack,
            sink,
        )?;
        result.reflection_rounds = round;
        if verdict.sufficient {
            break;
        }
        issued.extend(verdict.new_queries.iter().cloned());
        run_queries(&verdict.new_queries, &mut result)?;
    }

    Ok(result)
}

/// Drafts a section from its notes: parses writer claims, strips citations
/// of urls that do not appear in the notes, and assembles the prose.
pub fn draft_section(
    section: &SectionSpec,
    notes: &SectionNotes,
    llm: &dyn CompletionProvider,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<SectionDraft, PipelineError> {
    let notes_rendered = render_notes_list(&notes.notes);
    let prompt = render(
        &pack.draft,
        &[
            ("section_title", section.title.as_str()),
            ("section_description", section.description.as_str()),
            ("notes", notes_rendered.as_str()),
        ],
    );
    let req = CompletionRequest::new(prompt, pack.system.clone())
        .with_temperature(STRUCTURED_TEMPERATURE);
    let reply = llm.complete(&req)?.remove(0);

    let allowed: Vec<&SourceRef> = notes
        .notes
        .iter()
        .flat_map(|n| n.sources.iter())
        .collect();
    let claims = parse_claim_lines(&reply, &allowed, &section.title, sink);
    if claims.is_empty() {
        return Err(PipelineError::DraftParseFailed {
            section: section.title.clone(),
            reason: "no CLAIM lines in draft reply".to_string(),
        });
    }
    let draft = SectionDraft {
        spec: section.clone(),
        prose: claims.iter().map(|c| c.text.clone()).collect::<Vec<_>>().join(" "),
        claims,
    };
    sink.emit(TraceEvent {
        section_index: None,
        round: 0,
        kind: EventKind::Draft,
        payload: serde_json::json!({
            "section": section.title,
            "claims": draft.claims.len(),
        }),
        confidence: None,
    });
    Ok(draft)
}

fn parse_claim_lines(
    reply: &str,
    allowed: &[&SourceRef],
    section_title: &str,
    sink: &dyn EventSink,
) -> Vec<Claim> {
    let mut claims = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        if !line.starts_with("CLAIM:") {
            continue;
        }
        let Some(text) = marker_value(line, "CLAIM") else {
            continue;
        };
        let score = match marker_value(line, "SCORE").and_then(|v| v.parse::<f64>().ok()) {
            Some(s) => s.clamp(0.0, 10.0).round() as u8,
            None => {
                sink.emit(TraceEvent::warning(
                    0,
                    format!("claim in '{section_title}' missing score, defaulting to 5: {text}"),
                ));
                5
            }
        };
        let cited: Vec<String> = marker_value(line, "SOURCES")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|u| !u.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        let mut sources = Vec::new();
        for url in &cited {
            match allowed.iter().find(|r| &r.url == url) {
                Some(r) => sources.push((*r).clone()),
                None => sink.emit(TraceEvent::warning(
                    0,
                    format!("claim in '{section_title}' cites url absent from notes, citation stripped: {url}"),
                )),
            }
        }
        claims.push(Claim::new(text, score, sources));
    }
    claims
}

/// Caps each claim's score at the section's evidence confidence and
/// re-labels: a claim cannot outrank its evidence. Idempotent.
pub fn annotate_claims(mut draft: SectionDraft, section_evidence: Confidence) -> SectionDraft {
    let cap = (10.0 * section_evidence.norm).round() as u8;
    draft.claims = draft
        .claims
        .into_iter()
        .map(|c| Claim::new(c.text, c.score.min(cap), c.sources))
        .collect();
    draft
}

/// Composes the introduction and conclusion from the finished body drafts.
/// Frame claims default to score 5 (medium) when the writer leaves them
/// unscored.
pub fn write_frame(
    plan: &ReportPlan,
    body_drafts: &[SectionDraft],
    llm: &dyn CompletionProvider,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<(SectionDraft, SectionDraft), PipelineError> {
    let section_list = plan
        .body_sections()
        .map(|s| format!("{}. {}", s.index, s.title))
        .collect::<Vec<_>>()
        .join("\n");
    let drafts_rendered = body_drafts
        .iter()
        .map(|d| format!("### {}\n{}", d.spec.title, d.prose))
        .collect::<Vec<_>>()
        .join("\n\n");
    let prompt = render(
        &pack.frame,
        &[
            ("topic", plan.request.topic.as_str()),
            ("section_list", section_list.as_str()),
            ("drafts", drafts_rendered.as_str()),
        ],
    );
    let req = CompletionRequest::new(prompt, pack.system.clone())
        .with_temperature(STRUCTURED_TEMPERATURE);
    let reply = llm.complete(&req)?.remove(0);

    let intro_at = reply.find("INTRODUCTION:");
    let conclusion_at = reply.find("CONCLUSION:");
    let (Some(intro_at), Some(conclusion_at)) = (intro_at, conclusion_at) else {
        return Err(PipelineError::DraftParseFailed {
            section: "frame".to_string(),
            reason: "reply must contain INTRODUCTION and CONCLUSION blocks".to_string(),
        });
    };
    if conclusion_at < intro_at {
        return Err(PipelineError::DraftParseFailed {
            section: "frame".to_string(),
            reason: "INTRODUCTION block must come first".to_string(),
        });
    }

    let allowed: Vec<&SourceRef> = body_drafts
        .iter()
        .flat_map(|d| d.claims.iter())
        .flat_map(|c| c.sources.iter())
        .collect();
    let intro_claims = parse_claim_lines(
        &reply[intro_at..conclusion_at],
        &allowed,
        "Introduction",
        sink,
    );
    let conclusion_claims =
        parse_claim_lines(&reply[conclusion_at..], &allowed, "Conclusion", sink);
    if intro_claims.is_empty() || conclusion_claims.is_empty() {
        return Err(PipelineError::DraftParseFailed {
            section: "frame".to_string(),
            reason: "both framing blocks need at least one claim".to_string(),
        });
    }

    let intro_spec = plan
        .sections
        .iter()
        .find(|s| s.kind == SectionKind::Introduction)
        .cloned()
        .unwrap_or_else(SectionSpec::introduction);
    let conclusion_spec = plan
        .sections
        .iter()
        .find(|s| s.kind == SectionKind::Conclusion)
        .cloned()
        .unwrap_or_else(SectionSpec::conclusion);

    let make = |spec: SectionSpec, claims: Vec<Claim>| SectionDraft {
        prose: claims.iter().map(|c| c.text.clone()).collect::<Vec<_>>().join(" "),
        spec,
        claims,
    };
    let frame = (
        make(intro_spec, intro_claims),
        make(conclusion_spec, conclusion_claims),
    );
    sink.emit(TraceEvent {
        section_index: None,
        round: 0,
        kind: EventKind::Frame,
        payload: serde_json::json!({
            "intro_claims": frame.0.claims.len(),
            "conclusion_claims": frame.1.claims.len(),
        }),
        confidence: None,
    });
    Ok(frame)
}

/// Assembles the final report: intro, body drafts in plan order,
/// conclusion, plus a bibliography of claim sources deduplicated by url in
/// order of first appearance.
pub fn assemble_report(
    plan: &ReportPlan,
    frame: (SectionDraft, SectionDraft),
    body_drafts: Vec<SectionDraft>,
) -> Result<Report, PipelineError> {
    let mut ordered = Vec::with_capacity(body_drafts.len() + 2);
    ordered.push(frame.0);
    for spec in plan.body_sections() {
        let draft = body_drafts
            .iter()
            .find(|d| d.spec.title == spec.title)
            .cloned()
            .ok_or_else(|| PipelineError::MissingDraft {
                section: spec.title.clone(),
            })?;
        ordered.push(draft);
    }
    ordered.push(frame.1);

    let mut bibliography: Vec<SourceRef> = Vec::new();
    for draft in &ordered {
        for claim in &draft.claims {
            for source in &claim.sources {
                if !bibliography.iter().any(|have| have.url == source.url) {
                    bibliography.push(source.clone());
                }
            }
        }
    }

    Ok(Report {
        plan: plan.clone(),
        drafts: ordered,
        bibliography,
    })
}

/// Runs the whole workflow for a topic: plan, research every body section
/// (concurrently up to `section_parallelism`), draft and annotate each
/// section, write the frame, and assemble the report.
///
/// Research events are buffered per section and flushed to `sink` in plan
/// order at the join, so trace output is identical for any parallelism.
pub fn run_report(
    request: &TopicRequest,
    cfg: &PipelineConfig,
    providers: &PipelineProviders,
    pack: &PromptPack,
    sink: &dyn EventSink,
) -> Result<Report, PipelineError> {
    cfg.validate()?;
    let plan = plan_topic(request, providers.planner.as_ref(), pack, sink)?;
    let prior_context = format!(
        "Report topic: {}\nPlanned sections:\n{}",
        request.topic,
        plan.body_sections()
            .map(|s| format!("{}. {} — {}", s.index, s.title, s.description))
            .collect::<Vec<_>>()
            .join("\n")
    );

    let body_specs: Vec<SectionSpec> = plan.body_sections().cloned().collect();
    let researched: Vec<(Result<SectionNotes, PipelineError>, Vec<TraceEvent>)> = parallel_map(
        cfg.section_parallelism,
        body_specs,
        |index, section| {
            let buffer = BufferSink::new();
            let tagged = SectionTaggedSink::new(&buffer, index + 1);
            let outcome =
                research_section(&section, &prior_context, cfg, providers, pack, &tagged);
            (outcome, buffer.drain())
        },
    );

    let mut sections = Vec::with_capacity(researched.len());
    for (outcome, events) in researched {
        for event in events {
            sink.emit(event);
        }
        sections.push(outcome?);
    }

    let mut body_drafts = Vec::with_capacity(sections.len());
    for notes in &sections {
        let draft = draft_section(&notes.section, notes, providers.writer.as_ref(), pack, sink)?;
        body_drafts.push(annotate_claims(draft, notes.evidence_confidence()));
    }

    let frame = write_frame(&plan, &body_drafts, providers.writer.as_ref(), pack, sink)?;
    assemble_report(&plan, frame, body_drafts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ClaimLabel;
    use crate::events::NullSink;
    use crate::providers::{FixtureCorpus, FixtureDoc, ScriptRule, ScriptedLlm};

    fn pack() -> PromptPack {
        PromptPack::builtin_v1()
    }

    fn section() -> SectionSpec {
        SectionSpec::body(
            1,
            "Duan Yongping's Investment Philosophy",
            "Strategic focus, key principles, and notable investments.",
        )
    }

    fn corpus() -> Arc<FixtureCorpus> {
        let body = "Fixture body text.";
        Arc::new(FixtureCorpus::from_entries(
            vec![
                ("query one", vec!["u://1", "u://2"]),
                ("query two", vec!["u://3"]),
                ("extra query", vec!["u://4"]),
                ("second extra", vec!["u://5"]),
                ("third extra", vec!["u://1"]),
            ],
            vec![
                ("u://1", FixtureDoc { title: "one".into(), body: Some(body.into()), ..Default::default() }),
                ("u://2", FixtureDoc { title: "two".into(), body: Some(body.into()), ..Default::default() }),
                ("u://3", FixtureDoc { title: "three".into(), body: Some(body.into()), ..Default::default() }),
                ("u://4", FixtureDoc { title: "four".into(), body: Some(body.into()), ..Default::default() }),
                ("u://5", FixtureDoc { title: "five".into(), body: Some(body.into()), ..Default::default() }),
            ],
        ))
    }

    fn providers_with(llm: ScriptedLlm) -> PipelineProviders {
        let corpus = corpus();
        PipelineProviders::shared(Arc::new(llm), corpus.clone(), corpus)
    }

    fn research_rules() -> Vec<ScriptRule> {
        vec![
            ScriptRule::new(
                vec!["[QUERIES]", "Duan Yongping's Investment Philosophy"],
                "QUERY: query one\nQUERY: query two",
            ),
            ScriptRule::new(
                vec!["[THINK]", "QUESTION: query one", "ROUND: 1"],
                "ANSWER: partial | FINAL: no | NEXT_QUERY: query one | CONFIDENCE: 3",
            ),
            ScriptRule::new(
                vec!["[READ-NOTES]", "QUESTION: query one"],
                "NOTE: fact a | SOURCES: u://1\nNOTE: fact b | SOURCES: u://2\nCONFIDENCE: 7",
            ),
            ScriptRule::new(
                vec!["[THINK]", "QUESTION: query one", "ROUND: 2"],
                "ANSWER: settled | FINAL: yes | CONFIDENCE: 8",
            ),
            ScriptRule::new(
                vec!["[THINK]", "QUESTION: query two"],
                "ANSWER: quick | FINAL: yes | CONFIDENCE: 7",
            ),
        ]
    }

    #[test]
    fn plan_topic_parses_appendix_style_sections() {
        let reply = "SECTION: Duan Yongping's Investment Philosophy | DESCRIPTION: Strategy and principles.\n\
                     SECTION: Warren Buffett's Investment Philosophy | DESCRIPTION: Value investing approach.\n\
                     SECTION: Charlie Munger's Investment Philosophy | DESCRIPTION: Mental models and risk.\n\
                     SECTION: Comparative Analysis of Philosophies | DESCRIPTION: Common elements and differences.";
        let llm = ScriptedLlm::constant(reply);
        let request = TopicRequest::new(
            "investment philosophies of Duan Yongping, Warren Buffett, and Charlie Munger",
            "en",
        );
        let plan = plan_topic(&request, &llm, &pack(), &NullSink).unwrap();
        assert!(validate_plan(&plan).is_ok());
        let titles: Vec<&str> = plan.body_sections().map(|s| s.title.as_str()).collect();
        assert_eq!(
            titles,
            vec![
                "Duan Yongping's Investment Philosophy",
                "Warren Buffett's Investment Philosophy",
                "Charlie Munger's Investment Philosophy",
                "Comparative Analysis of Philosophies",
            ]
        );
        assert_eq!(plan.sections.len(), 6);
    }

    #[test]
    fn plan_topic_fails_after_two_malformed_replies() {
        let llm = ScriptedLlm::with_rules(vec![ScriptRule {
            contains: vec!["[PLAN]".to_string()],
            replies: vec!["no sections here".to_string(), "still nothing".to_string()],
            fail: None,
        }]);
        let request = TopicRequest::new("topic", "en");
        let err = plan_topic(&request, &llm, &pack(), &NullSink).unwrap_err();
        assert!(matches!(err, PipelineError::PlanParseFailed(_)));
        assert_eq!(llm.call_count(), 2);
    }

    #[test]
    fn plan_topic_retry_can_recover() {
        let llm = ScriptedLlm::with_rules(vec![ScriptRule {
            contains: vec!["[PLAN]".to_string()],
            replies: vec![
                "garbage".to_string(),
                "SECTION: Only One | DESCRIPTION: The single body section.".to_string(),
            ],
            fail: None,
        }]);
        let request = TopicRequest::new("topic", "en");
        let plan = plan_topic(&request, &llm, &pack(), &NullSink).unwrap();
        assert_eq!(plan.body_sections().count(), 1);
    }

    #[test]
    fn generate_queries_returns_n_distinct() {
        let llm = ScriptedLlm::constant(
            "QUERY: Duan Yongping investment strategy principles\nQUERY: Notable investments by Duan Yongping and their outcomes",
        );
        let queries = generate_queries(&section(), "ctx", 2, &llm, &pack(), &NullSink).unwrap();
        assert_eq!(
            queries,
            vec![
                "Duan Yongping investment strategy principles",
                "Notable investments by Duan Yongping and their outcomes",
            ]
        );
    }

    #[test]
    fn generate_queries_single_query() {
        let llm = ScriptedLlm::constant("QUERY: just one");
        let queries = generate_queries(&section(), "ctx", 1, &llm, &pack(), &NullSink).unwrap();
        assert_eq!(queries, vec!["just one"]);
        assert_eq!(llm.call_count(), 1);
    }

    #[test]
    fn generate_queries_dedups_and_reasks_once() {
        let llm = ScriptedLlm::with_rules(vec![ScriptRule {
            contains: vec!["[QUERIES]".to_string()],
            replies: vec![
                "QUERY: same\nQUERY: same".to_string(),
                "QUERY: same\nQUERY: different".to_string(),
            ],
            fail: None,
        }]);
        let queries = generate_queries(&section(), "ctx", 2, &llm, &pack(), &NullSink).unwrap();
        assert_eq!(queries, vec!["same", "different"]);
        assert_eq!(llm.call_count(), 2);
    }

    #[test]
    fn generate_queries_accepts_shortfall_after_reask() {
        let llm = ScriptedLlm::constant("QUERY: only one");
        let sink = crate::events::BufferSink::new();
        let queries = generate_queries(&section(), "ctx", 3, &llm, &pack(), &sink).unwrap();
        assert_eq!(queries, vec!["only one"]);
        assert!(sink
            .drain()
            .iter()
            .any(|e| e.kind == EventKind::Warning));
    }

    fn empty_notes() -> SectionNotes {
        SectionNotes {
            section: section(),
            notes: Vec::new(),
            deliberations: Vec::new(),
            reflection_rounds: 0,
        }
    }

    #[test]
    fn reflect_parses_gaps_and_new_queries() {
        let llm = ScriptedLlm::constant(
            "SUFFICIENT: no\nGAP: missing outcomes\nQUERY: NetEase investment outcome",
        );
        let verdict = reflect(
            &section(),
            &empty_notes(),
            1,
            &["query one".to_string()],
            &llm,
            &pack(),
            &NullSink,
        )
        .unwrap();
        assert!(!verdict.sufficient);
        assert_eq!(verdict.gaps, vec!["missing outcomes"]);
        assert_eq!(verdict.new_queries, vec!["NetEase investment outcome"]);
    }

    #[test]
    fn reflect_sufficient_clears_queries() {
        let llm = ScriptedLlm::constant("SUFFICIENT: yes\nQUERY: should be ignored");
        let verdict = reflect(&section(), &empty_notes(), 1, &[], &llm, &pack(), &NullSink).unwrap();
        assert!(verdict.sufficient);
        assert!(verdict.new_queries.is_empty());
    }

    #[test]
    fn reflect_with_only_duplicate_queries_becomes_sufficient() {
        let llm = ScriptedLlm::constant("SUFFICIENT: no\nQUERY: query one");
        let verdict = reflect(
            &section(),
            &empty_notes(),
            1,
            &["query one".to_string()],
            &llm,
            &pack(),
            &NullSink,
        )
        .unwrap();
        assert!(verdict.sufficient);
        assert!(verdict.new_queries.is_empty());
    }

    #[test]
    fn reflect_parse_failure_fails_open() {
        let llm = ScriptedLlm::constant("completely unstructured");
        let sink = crate::events::BufferSink::new();
        let verdict =
            reflect(&section(), &empty_notes(), 1, &[], &llm, &pack(), &sink).unwrap();
        assert!(verdict.sufficient);
        assert!(sink.drain().iter().any(|e| e.kind == EventKind::Warning));
    }

    #[test]
    fn research_section_counts_deliberations_and_reflections() {
        let mut rules = research_rules();
        rules.push(ScriptRule::new(vec!["[REFLECT]"], "SUFFICIENT: yes"));
        let providers = providers_with(ScriptedLlm::with_rules(rules));
        let cfg = PipelineConfig::default();
        let notes = research_section(&section(), "ctx", &cfg, &providers, &pack(), &NullSink).unwrap();
        assert_eq!(notes.deliberations.len(), 2);
        assert_eq!(notes.reflection_rounds, 1);
        assert_eq!(notes.notes.len(), 2);
        assert!(notes.notes.iter().all(|n| n.section_title == section().title));
    }

    #[test]
    fn research_section_reflection_loop_adds_deliberations() {
        let mut rules = research_rules();
        rules.push(ScriptRule::new(
            vec!["[REFLECT]", "REFLECTION ROUND: 1"],
            "SUFFICIENT: no\nGAP: more\nQUERY: extra query",
        ));
        rules.push(ScriptRule::new(
            vec!["[REFLECT]", "REFLECTION ROUND: 2"],
            "SUFFICIENT: no\nQUERY: second extra",
        ));
        rules.push(ScriptRule::new(
            vec!["[REFLECT]", "REFLECTION ROUND: 3"],
            "SUFFICIENT: yes",
        ));
        rules.push(ScriptRule::new(
            vec!["[THINK]", "QUESTION: extra query"],
            "ANSWER: more | FINAL: yes | CONFIDENCE: 6",
        ));
        rules.push(ScriptRule::new(
            vec!["[THINK]", "QUESTION: second extra"],
            "ANSWER: more | FINAL: yes | CONFIDENCE: 6",
        ));
        let providers = providers_with(ScriptedLlm::with_rules(rules));
        let cfg = PipelineConfig::default();
        let notes = research_section(&section(), "ctx", &cfg, &providers, &pack(), &NullSink).unwrap();
        assert_eq!(notes.reflection_rounds, 3);
        // 2 initial queries + 1 per insufficient verdict
        assert_eq!(notes.deliberations.len(), 4);
    }

    #[test]
    fn research_section_cap_zero_skips_reflection() {
        let providers = providers_with(ScriptedLlm::with_rules(research_rules()));
        let cfg = PipelineConfig {
            reflection_cap: 0,
            ..Default::default()
        };
        let notes = research_section(&section(), "ctx", &cfg, &providers, &pack(), &NullSink).unwrap();
        assert_eq!(notes.reflection_rounds, 0);
        assert_eq!(notes.deliberations.len(), 2);
    }

    #[test]
    fn research_section_never_sufficient_respects_cap() {
        let mut rules = research_rules();
        rules.push(ScriptRule::new(
            vec!["[REFLECT]", "REFLECTION ROUND: 1"],
            "SUFFICIENT: no\nQUERY: extra query",
        ));
        rules.push(ScriptRule::new(
            vec!["[REFLECT]", "REFLECTION ROUND: 2"],
            "SUFFICIENT: no\nQUERY: second extra",
        ));
        rules.push(ScriptRule::new(
            vec!["[REFLECT]", "REFLECTION ROUND: 3"],
            "SUFFICIENT: no\nQUERY: third extra",
        ));
        rules.push(ScriptRule::new(
            vec!["[THINK]", "QUESTION: extra query"],
            "ANSWER: a | FINAL: yes | CONFIDENCE: 6",
        ));
        rules.push(ScriptRule::new(
            vec!["[THINK]", "QUESTION: second extra"],
            "ANSWER: b | FINAL: yes | CONFIDENCE: 6",
        ));
        rules.push(ScriptRule::new(
            vec!["[THINK]", "QUESTION: third extra"],
            "ANSWER: c | FINAL: yes | CONFIDENCE: 6",
        ));
        let providers = providers_with(ScriptedLlm::with_rules(rules));
        let cfg = PipelineConfig::default();
        let notes = research_section(&section(), "ctx", &cfg, &providers, &pack(), &NullSink).unwrap();
        assert_eq!(notes.reflection_rounds, cfg.reflection_cap);
        let total_new: usize = 3;
        assert_eq!(notes.deliberations.len(), cfg.queries_per_section + total_new);
    }

    fn notes_with_sources() -> SectionNotes {
        let source = |url: &str| SourceRef {
            url: url.to_string(),
            title: format!("title {url}"),
            snippet: String::new(),
            rank: 1,
        };
        SectionNotes {
            section: section(),
            notes: vec![
                EvidenceNote {
                    text: "fact a".to_string(),
                    sources: vec![source("u://1")],
                    section_title: section().title,
                },
                EvidenceNote {
                    text: "fact b".to_string(),
                    sources: vec![source("u://2")],
                    section_title: section().title,
                },
            ],
            deliberations: Vec::new(),
            reflection_rounds: 0,
        }
    }

    #[test]
    fn draft_section_parses_scored_claims() {
        let llm = ScriptedLlm::constant(
            "CLAIM: strong fact. | SCORE: 8 | SOURCES: u://1\n\
             CLAIM: weak guess. | SCORE: 3 | SOURCES:\n\
             CLAIM: middling point. | SCORE: 5 | SOURCES: u://2",
        );
        let draft =
            draft_section(&section(), &notes_with_sources(), &llm, &pack(), &NullSink).unwrap();
        assert_eq!(draft.claims.len(), 3);
        assert_eq!(
            draft.claims.iter().map(|c| c.score).collect::<Vec<_>>(),
            vec![8, 3, 5]
        );
        assert_eq!(draft.claims[0].label, ClaimLabel::High);
        assert_eq!(draft.claims[1].label, ClaimLabel::Low);
        assert_eq!(draft.claims[2].label, ClaimLabel::Medium);
    }

    #[test]
    fn draft_section_strips_uncited_sources() {
        let llm = ScriptedLlm::constant(
            "CLAIM: fabricated citation. | SCORE: 9 | SOURCES: u://nowhere",
        );
        let sink = crate::events::BufferSink::new();
        let draft =
            draft_section(&section(), &notes_with_sources(), &llm, &pack(), &sink).unwrap();
        assert!(draft.claims[0].sources.is_empty());
        assert!(sink.drain().iter().any(|e| e.kind == EventKind::Warning));
    }

    #[test]
    fn draft_section_with_empty_notes_keeps_claims_sourceless() {
        let llm = ScriptedLlm::constant("CLAIM: confident prose without evidence. | SCORE: 9 | SOURCES:");
        let draft = draft_section(&section(), &empty_notes(), &llm, &pack(), &NullSink).unwrap();
        assert_eq!(draft.claims.len(), 1);
        assert!(draft.claims[0].sources.is_empty());
        // The evidence cap then pulls the score down: no deliberations
        // means evidence confidence zero.
        let annotated = annotate_claims(draft, empty_notes().evidence_confidence());
        assert_eq!(annotated.claims[0].score, 0);
        assert_eq!(annotated.claims[0].label, ClaimLabel::Low);
    }

    #[test]
    fn annotate_claims_caps_scores_by_evidence() {
        let draft = SectionDraft {
            spec: section(),
            claims: vec![
                Claim::new("high with strong evidence", 7, vec![]),
                Claim::new("low stays low", 3, vec![]),
                Claim::new("capped by evidence", 9, vec![]),
            ],
            prose: String::new(),
        };
        let annotated = annotate_claims(draft, Confidence::fused(0.5));
        assert_eq!(
            annotated.claims.iter().map(|c| c.score).collect::<Vec<_>>(),
            vec![5, 3, 5]
        );
        assert_eq!(annotated.claims[2].label, ClaimLabel::Medium);

        let strong = annotate_claims(
            SectionDraft {
                spec: section(),
                claims: vec![Claim::new("kept", 7, vec![])],
                prose: String::new(),
            },
            Confidence::fused(0.9),
        );
        assert_eq!(strong.claims[0].score, 7);
        assert_eq!(strong.claims[0].label, ClaimLabel::High);
    }

    #[test]
    fn annotate_claims_is_idempotent() {
        let draft = SectionDraft {
            spec: section(),
            claims: vec![
                Claim::new("a", 9, vec![]),
                Claim::new("b", 5, vec![]),
                Claim::new("c", 1, vec![]),
            ],
            prose: String::new(),
        };
        let evidence = Confidence::fused(0.62);
        let once = annotate_claims(draft, evidence);
        let twice = annotate_claims(once.clone(), evidence);
        assert_eq!(once, twice);
    }

    fn body_draft(title: &str, score: u8, url: Option<&str>) -> SectionDraft {
        let sources = url
            .map(|u| {
                vec![SourceRef {
                    url: u.to_string(),
                    title: format!("title {u}"),
                    snippet: String::new(),
                    rank: 1,
                }]
            })
            .unwrap_or_default();
        SectionDraft {
            spec: SectionSpec::body(1, title, "desc"),
            claims: vec![Claim::new(format!("{title} claim."), score, sources)],
            prose: format!("{title} claim."),
        }
    }

    #[test]
    fn write_frame_produces_intro_and_conclusion() {
        let llm = ScriptedLlm::constant(
            "INTRODUCTION:\nCLAIM: This report surveys the topic. | SCORE: 6 | SOURCES:\nCONCLUSION:\nCLAIM: The findings converge. | SOURCES:",
        );
        let plan = ReportPlan {
            request: TopicRequest::new("t", "en"),
            sections: vec![
                SectionSpec::introduction(),
                SectionSpec::body(1, "Only", "desc"),
                SectionSpec::conclusion(),
            ],
        };
        let drafts = vec![body_draft("Only", 7, Some("u://1"))];
        let (intro, conclusion) = write_frame(&plan, &drafts, &llm, &pack(), &NullSink).unwrap();
        assert_eq!(intro.spec.kind, SectionKind::Introduction);
        assert_eq!(conclusion.spec.kind, SectionKind::Conclusion);
        // Unscored frame claims default to medium.
        assert_eq!(conclusion.claims[0].score, 5);
        assert_eq!(conclusion.claims[0].label, ClaimLabel::Medium);
    }

    #[test]
    fn write_frame_missing_conclusion_fails() {
        let llm = ScriptedLlm::constant("INTRODUCTION:\nCLAIM: only intro. | SCORE: 5 | SOURCES:");
        let plan = ReportPlan {
            request: TopicRequest::new("t", "en"),
            sections: vec![
                SectionSpec::introduction(),
                SectionSpec::body(1, "Only", "desc"),
                SectionSpec::conclusion(),
            ],
        };
        let drafts = vec![body_draft("Only", 7, None)];
        let err = write_frame(&plan, &drafts, &llm, &pack(), &NullSink).unwrap_err();
        assert!(matches!(err, PipelineError::DraftParseFailed { .. }));
    }

    #[test]
    fn assemble_report_orders_and_dedups_bibliography() {
        let plan = ReportPlan {
            request: TopicRequest::new("t", "en"),
            sections: vec![
                SectionSpec::introduction(),
                SectionSpec::body(1, "First", "desc"),
                SectionSpec::body(2, "Second", "desc"),
                SectionSpec::conclusion(),
            ],
        };
        let intro = body_draft("Introduction", 5, None);
        let conclusion = body_draft("Conclusion", 5, None);
        let bodies = vec![
            body_draft("First", 7, Some("u://shared")),
            body_draft("Second", 6, Some("u://shared")),
        ];
        let report = assemble_report(&plan, (intro, conclusion), bodies).unwrap();
        assert_eq!(report.drafts.len(), 4);
        assert_eq!(report.bibliography.len(), 1);
        assert_eq!(report.bibliography[0].url, "u://shared");
    }

    #[test]
    fn assemble_report_names_missing_section() {
        let plan = ReportPlan {
            request: TopicRequest::new("t", "en"),
            sections: vec![
                SectionSpec::introduction(),
                SectionSpec::body(1, "First", "desc"),
                SectionSpec::body(2, "Second", "desc"),
                SectionSpec::conclusion(),
            ],
        };
        let intro = body_draft("Introduction", 5, None);
        let conclusion = body_draft("Conclusion", 5, None);
        let bodies = vec![body_draft("First", 7, None)];
        let err = assemble_report(&plan, (intro, conclusion), bodies).unwrap_err();
        match err {
            PipelineError::MissingDraft { section } => assert_eq!(section, "Second"),
            other => panic!("expected missing draft, got {other}"),
        }
    }

    fn full_pipeline_rules() -> Vec<ScriptRule> {
        // Match keys are line-anchored ("SECTION: Alpha\n", "QUESTION: query
        // one\n") so a section title appearing in another call's prior
        // context, or a query that prefixes another, cannot mis-route.
        let mut rules = vec![ScriptRule::new(
            vec!["[PLAN]"],
            "SECTION: Alpha | DESCRIPTION: First area.\nSECTION: Beta | DESCRIPTION: Second area.",
        )];
        for (name, query, url) in [
            ("Alpha", "query one", "u://1"),
            ("Beta", "query two", "u://3"),
        ] {
            let section_key = format!("SECTION: {name}\n");
            let question_key = format!("QUESTION: {query}\n");
            let details_key = format!("QUESTION: {query} details\n");
            rules.push(ScriptRule::new(
                vec!["[QUERIES]", &section_key],
                &format!("QUERY: {query}\nQUERY: {query} details"),
            ));
            rules.push(ScriptRule::new(
                vec!["[THINK]", &question_key, "ROUND: 1"],
                &format!("ANSWER: partial | FINAL: no | NEXT_QUERY: {query} | CONFIDENCE: 3"),
            ));
            rules.push(ScriptRule::new(
                vec!["[READ-NOTES]", &question_key],
                &format!("NOTE: {name} fact | SOURCES: {url}\nCONFIDENCE: 7"),
            ));
            rules.push(ScriptRule::new(
                vec!["[THINK]", &question_key, "ROUND: 2"],
                "ANSWER: settled | FINAL: yes | CONFIDENCE: 8",
            ));
            rules.push(ScriptRule::new(
                vec!["[THINK]", &details_key],
                "ANSWER: quick | FINAL: yes | CONFIDENCE: 7",
            ));
            rules.push(ScriptRule::new(
                vec!["[REFLECT]", &section_key],
                "SUFFICIENT: yes",
            ));
            rules.push(ScriptRule::new(
                vec!["[DRAFT]", &section_key],
                &format!(
                    "CLAIM: {name} strong finding. | SCORE: 8 | SOURCES: {url}\nCLAIM: {name} tentative reading. | SCORE: 3 | SOURCES:"
                ),
            ));
        }
        rules.push(ScriptRule::new(
            vec!["[FRAME]"],
            "INTRODUCTION:\nCLAIM: Context for the topic. | SCORE: 5 | SOURCES:\nCONCLUSION:\nCLAIM: Findings summarized. | SCORE: 5 | SOURCES:",
        ));
        rules
    }

    #[test]
    fn run_report_assembles_full_report() {
        let providers = providers_with(ScriptedLlm::with_rules(full_pipeline_rules()));
        let request = TopicRequest::new("two part topic", "en");
        let report = run_report(
            &request,
            &PipelineConfig::default(),
            &providers,
            &pack(),
            &NullSink,
        )
        .unwrap();
        assert_eq!(report.drafts.len(), 4); // intro + 2 bodies + conclusion
        assert_eq!(report.bibliography.len(), 2);
        // every cited url appears in the bibliography and vice versa
        let cited: Vec<&str> = report
            .drafts
            .iter()
            .flat_map(|d| d.claims.iter())
            .flat_map(|c| c.sources.iter())
            .map(|s| s.url.as_str())
            .collect();
        for url in &cited {
            assert!(report.bibliography.iter().any(|b| b.url == *url));
        }
        for b in &report.bibliography {
            assert!(cited.contains(&b.url.as_str()));
        }
    }

    #[test]
    fn run_report_is_deterministic_across_parallelism() {
        let render = |parallelism: usize| {
            let providers = providers_with(ScriptedLlm::with_rules(full_pipeline_rules()));
            let request = TopicRequest::new("two part topic", "en");
            let cfg = PipelineConfig {
                section_parallelism: parallelism,
                ..Default::default()
            };
            let sink = crate::events::BufferSink::new();
            let report = run_report(&request, &cfg, &providers, &pack(), &sink).unwrap();
            (
                serde_json::to_string(&report).unwrap(),
                serde_json::to_string(&sink.drain()).unwrap(),
            )
        };
        let (report_seq, events_seq) = render(1);
        let (report_par, events_par) = render(4);
        assert_eq!(report_seq, report_par);
        assert_eq!(events_seq, events_par);
    }
}
