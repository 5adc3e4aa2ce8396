//! Shared domain types and their structural validation.
//!
//! Everything here is an immutable value object: construct it, validate it,
//! share it freely between threads. Validation verdicts are values, not
//! errors — callers decide what a violation means for them.

use serde::{Deserialize, Serialize};

/// A user-supplied report topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRequest {
    pub topic: String,
    /// Language tag, e.g. "en" or "zh".
    pub language: String,
    /// Optional free-text instructions constraining the report.
    pub constraints: Option<String>,
}

impl TopicRequest {
    pub fn new(topic: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            topic: topic.into(),
            language: language.into(),
            constraints: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.topic.trim().is_empty()
    }
}

/// Role a section plays in the report skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Body,
    Introduction,
    Conclusion,
}

/// One planned section. `index` orders sections within their kind: body
/// sections run 1..N contiguously, the single introduction and conclusion
/// each carry index 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub index: usize,
    pub title: String,
    pub description: String,
    pub kind: SectionKind,
}

impl SectionSpec {
    pub fn body(index: usize, title: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            index,
            title: title.into(),
            description: description.into(),
            kind: SectionKind::Body,
        }
    }

    pub fn introduction() -> Self {
        Self {
            index: 1,
            title: "Introduction".to_string(),
            description: "Frames the topic and previews the report sections.".to_string(),
            kind: SectionKind::Introduction,
        }
    }

    pub fn conclusion() -> Self {
        Self {
            index: 1,
            title: "Conclusion".to_string(),
            description: "Summarizes the findings across all sections.".to_string(),
            kind: SectionKind::Conclusion,
        }
    }
}

/// The planner's decomposition of a topic into ordered sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPlan {
    pub request: TopicRequest,
    pub sections: Vec<SectionSpec>,
}

impl ReportPlan {
    pub fn body_sections(&self) -> impl Iterator<Item = &SectionSpec> {
        self.sections
            .iter()
            .filter(|s| s.kind == SectionKind::Body)
    }
}

/// Where a confidence value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Verbalized,
    Consistency,
    Fused,
}

/// A confidence estimate: a raw 0–10 score plus its normalized [0,1] value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub raw: f64,
    pub norm: f64,
    pub provenance: Provenance,
}

impl Confidence {
    /// A verbalized score on the 0–10 scale; `norm` is `raw / 10`.
    pub fn verbalized(raw: f64) -> Self {
        let raw = raw.clamp(0.0, 10.0);
        Self {
            raw,
            norm: raw / 10.0,
            provenance: Provenance::Verbalized,
        }
    }

    /// An agreement fraction in [0,1] from self-consistency sampling.
    pub fn consistency(fraction: f64) -> Self {
        let norm = fraction.clamp(0.0, 1.0);
        Self {
            raw: 10.0 * norm,
            norm,
            provenance: Provenance::Consistency,
        }
    }

    /// A fused normalized value in [0,1].
    pub fn fused(norm: f64) -> Self {
        let norm = norm.clamp(0.0, 1.0);
        Self {
            raw: 10.0 * norm,
            norm,
            provenance: Provenance::Fused,
        }
    }

    /// The zero-confidence starting point for a fresh deliberation.
    pub fn zero() -> Self {
        Self::verbalized(0.0)
    }
}

/// Kind of one deliberation action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Think,
    Search,
    Read,
}

impl ActionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Think => "THINK",
            ActionKind::Search => "SEARCH",
            ActionKind::Read => "READ",
        }
    }
}

/// Kind-specific payload of an [`ActionRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionPayload {
    Think {
        tentative_answer: String,
        next_query: Option<String>,
        confidence: Confidence,
    },
    Search {
        query: String,
        results: Vec<SourceRef>,
        /// Set when the provider failed and the loop degraded to zero results.
        warning: Option<String>,
    },
    Read {
        ingested: Vec<SourceRef>,
        /// Urls that could not be fetched and were skipped.
        skipped: Vec<String>,
        notes_added: usize,
        confidence: Confidence,
    },
}

impl ActionPayload {
    pub fn kind(&self) -> ActionKind {
        match self {
            ActionPayload::Think { .. } => ActionKind::Think,
            ActionPayload::Search { .. } => ActionKind::Search,
            ActionPayload::Read { .. } => ActionKind::Read,
        }
    }
}

/// One step of a deliberation trace. `timestamp` is a monotone event
/// ordinal within the owning deliberation, not wall clock, so traces are
/// reproducible under scripted providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub round: usize,
    pub timestamp: u64,
    pub payload: ActionPayload,
}

impl ActionRecord {
    pub fn kind(&self) -> ActionKind {
        self.payload.kind()
    }
}

/// A ranked search hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub rank: usize,
}

/// A fetched document. `fetched_at` is the event ordinal assigned by the
/// deliberation loop when it ingested the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDoc {
    pub source: SourceRef,
    pub body: String,
    pub fetched_at: u64,
    /// True when the body was cut at the provider's character cap.
    pub truncated: bool,
}

/// A fact distilled from retrieved documents, always attributable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceNote {
    pub text: String,
    /// Non-empty: every note must cite at least one source.
    pub sources: Vec<SourceRef>,
    /// Owning section title; empty for standalone question answering.
    pub section_title: String,
}

/// The evolving per-question reasoning context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationState {
    pub question: String,
    pub trace: Vec<ActionRecord>,
    pub notes: Vec<EvidenceNote>,
    pub tentative_answer: Option<String>,
    /// Confidence of the most recent THINK record.
    pub confidence: Confidence,
    /// Number of THINK steps taken so far.
    pub rounds_used: usize,
}

impl DeliberationState {
    /// Urls already ingested by READ steps in this deliberation.
    pub fn read_urls(&self) -> Vec<String> {
        let mut urls = Vec::new();
        for record in &self.trace {
            if let ActionPayload::Read { ingested, .. } = &record.payload {
                for r in ingested {
                    if !urls.contains(&r.url) {
                        urls.push(r.url.clone());
                    }
                }
            }
        }
        urls
    }
}

/// Confidence label attached to a report claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimLabel {
    High,
    Medium,
    Low,
}

impl ClaimLabel {
    /// Threshold labeling on the 0–10 scale: above 6 is high, below 4 is
    /// low, scores 4–6 inclusive are medium.
    pub fn from_score(score: u8) -> Self {
        if score > 6 {
            ClaimLabel::High
        } else if score < 4 {
            ClaimLabel::Low
        } else {
            ClaimLabel::Medium
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ClaimLabel::High => "high",
            ClaimLabel::Medium => "medium",
            ClaimLabel::Low => "low",
        }
    }
}

/// One claim sentence with its 0–10 confidence score and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    pub score: u8,
    pub label: ClaimLabel,
    /// May be empty for framing prose.
    pub sources: Vec<SourceRef>,
}

impl Claim {
    pub fn new(text: impl Into<String>, score: u8, sources: Vec<SourceRef>) -> Self {
        let score = score.min(10);
        Self {
            text: text.into(),
            score,
            label: ClaimLabel::from_score(score),
            sources,
        }
    }
}

/// A drafted section: ordered claims plus the rendered prose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDraft {
    pub spec: SectionSpec,
    pub claims: Vec<Claim>,
    pub prose: String,
}

/// The assembled report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub plan: ReportPlan,
    /// Intro, body sections in plan order, conclusion.
    pub drafts: Vec<SectionDraft>,
    /// Claim sources deduplicated by url, in order of first appearance.
    pub bibliography: Vec<SourceRef>,
}

/// One benchmark item's prediction — the unit of calibration math.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub item_id: String,
    pub answer: String,
    pub confidence: Confidence,
    pub correct: bool,
    /// Set when the item failed hard and was recorded as incorrect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A structural violation found by a validator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyTopic,
    NoBodySections,
    MissingIntroduction,
    MultipleIntroductions,
    MissingConclusion,
    MultipleConclusions,
    DuplicateTitle(String),
    NonContiguousBodyIndices,
    EmptySectionTitle(usize),
    EmptySectionDescription(String),
    TraceMustBeginWithThink,
    UnexpectedAction {
        position: usize,
        expected: &'static str,
        found: &'static str,
    },
    TraceMustEndOnThink,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyTopic => write!(f, "topic is empty"),
            Violation::NoBodySections => write!(f, "no body sections"),
            Violation::MissingIntroduction => write!(f, "missing introduction section"),
            Violation::MultipleIntroductions => write!(f, "multiple introduction sections"),
            Violation::MissingConclusion => write!(f, "missing conclusion section"),
            Violation::MultipleConclusions => write!(f, "multiple conclusion sections"),
            Violation::DuplicateTitle(t) => write!(f, "duplicate title: {t}"),
            Violation::NonContiguousBodyIndices => {
                write!(f, "body indices are not contiguous from 1")
            }
            Violation::EmptySectionTitle(i) => write!(f, "section {i} has an empty title"),
            Violation::EmptySectionDescription(t) => {
                write!(f, "section '{t}' has an empty description")
            }
            Violation::TraceMustBeginWithThink => write!(f, "trace must begin with THINK"),
            Violation::UnexpectedAction {
                position,
                expected,
                found,
            } => write!(
                f,
                "unexpected {found} at position {position}, expected {expected}"
            ),
            Violation::TraceMustEndOnThink => write!(f, "trace must end on THINK"),
        }
    }
}

/// Outcome of a structural validation: ok, or every violation found.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn ok() -> Self {
        Self::default()
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

/// Checks every [`ReportPlan`] invariant and returns all violations found.
pub fn validate_plan(plan: &ReportPlan) -> Verdict {
    let mut verdict = Verdict::ok();

    if !plan.request.is_valid() {
        verdict.push(Violation::EmptyTopic);
    }

    let intros = plan
        .sections
        .iter()
        .filter(|s| s.kind == SectionKind::Introduction)
        .count();
    let conclusions = plan
        .sections
        .iter()
        .filter(|s| s.kind == SectionKind::Conclusion)
        .count();
    match intros {
        0 => verdict.push(Violation::MissingIntroduction),
        1 => {}
        _ => verdict.push(Violation::MultipleIntroductions),
    }
    match conclusions {
        0 => verdict.push(Violation::MissingConclusion),
        1 => {}
        _ => verdict.push(Violation::MultipleConclusions),
    }

    let body_indices: Vec<usize> = plan.body_sections().map(|s| s.index).collect();
    if body_indices.is_empty() {
        verdict.push(Violation::NoBodySections);
    } else if body_indices != (1..=body_indices.len()).collect::<Vec<_>>() {
        verdict.push(Violation::NonContiguousBodyIndices);
    }

    let mut seen_titles: Vec<&str> = Vec::new();
    let mut reported: Vec<&str> = Vec::new();
    for section in &plan.sections {
        let title = section.title.trim();
        if title.is_empty() {
            verdict.push(Violation::EmptySectionTitle(section.index));
            continue;
        }
        if seen_titles.contains(&title) {
            if !reported.contains(&title) {
                verdict.push(Violation::DuplicateTitle(title.to_string()));
                reported.push(title);
            }
        } else {
            seen_titles.push(title);
        }
        if section.description.trim().is_empty() {
            verdict.push(Violation::EmptySectionDescription(title.to_string()));
        }
    }

    verdict
}

/// Checks a trace against the action grammar `THINK (SEARCH READ THINK)*`:
/// it begins with THINK, every SEARCH is immediately followed by exactly one
/// READ, every READ by a THINK, and the trace ends on a THINK.
pub fn validate_trace(trace: &[ActionRecord]) -> Verdict {
    validate_kinds(&trace.iter().map(|r| r.kind()).collect::<Vec<_>>())
}

/// Grammar check on bare action kinds; [`validate_trace`] delegates here.
pub fn validate_kinds(kinds: &[ActionKind]) -> Verdict {
    let mut verdict = Verdict::ok();

    let Some(first) = kinds.first() else {
        verdict.push(Violation::TraceMustBeginWithThink);
        return verdict;
    };
    if *first != ActionKind::Think {
        verdict.push(Violation::TraceMustBeginWithThink);
        return verdict;
    }

    // After a THINK we expect either the end or a SEARCH; after a SEARCH a
    // READ; after a READ a THINK.
    let mut expected_after_think = true;
    let mut i = 1;
    while i < kinds.len() {
        let found = kinds[i];
        if expected_after_think {
            match found {
                ActionKind::Search => {
                    expected_after_think = false;
                }
                other => {
                    verdict.push(Violation::UnexpectedAction {
                        position: i,
                        expected: "SEARCH",
                        found: other.as_str(),
                    });
                    return verdict;
                }
            }
            i += 1;
        } else {
            // A SEARCH must be followed by READ then THINK.
            match found {
                ActionKind::Read => {}
                other => {
                    verdict.push(Violation::UnexpectedAction {
                        position: i,
                        expected: "READ",
                        found: other.as_str(),
                    });
                    return verdict;
                }
            }
            match kinds.get(i + 1) {
                Some(ActionKind::Think) => {}
                Some(other) => {
                    verdict.push(Violation::UnexpectedAction {
                        position: i + 1,
                        expected: "THINK",
                        found: other.as_str(),
                    });
                    return verdict;
                }
                None => {
                    verdict.push(Violation::TraceMustEndOnThink);
                    return verdict;
                }
            }
            expected_after_think = true;
            i += 2;
        }
    }

    if !expected_after_think {
        verdict.push(Violation::TraceMustEndOnThink);
    }
    verdict
}
