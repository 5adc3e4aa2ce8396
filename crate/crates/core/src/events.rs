//! Structured run events emitted by the deliberation loop and the pipeline.
//!
//! The engine emits one event per action record plus warnings; sinks decide
//! what to do with them. The on-disk format is owned by the CLI.

use crate::domain::Confidence;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;

/// What a trace event describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Think,
    Search,
    Read,
    Warning,
    Plan,
    Queries,
    Reflect,
    Draft,
    Frame,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Think => "THINK",
            EventKind::Search => "SEARCH",
            EventKind::Read => "READ",
            EventKind::Warning => "WARNING",
            EventKind::Plan => "PLAN",
            EventKind::Queries => "QUERIES",
            EventKind::Reflect => "REFLECT",
            EventKind::Draft => "DRAFT",
            EventKind::Frame => "FRAME",
        }
    }
}

/// One structured run event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Plan-order index of the owning section; absent outside section work.
    pub section_index: Option<usize>,
    /// Deliberation round the event belongs to; 0 for stage-level events.
    pub round: usize,
    pub kind: EventKind,
    pub payload: serde_json::Value,
    pub confidence: Option<Confidence>,
}

impl TraceEvent {
    pub fn warning(round: usize, message: impl Into<String>) -> Self {
        Self {
            section_index: None,
            round,
            kind: EventKind::Warning,
            payload: serde_json::json!({ "message": message.into() }),
            confidence: None,
        }
    }
}

/// Receives engine events. Implementations must be safe to share across
/// worker threads.
pub trait EventSink: Send + Sync {
    fn emit(&self, event: TraceEvent);
}

/// Discards everything.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _event: TraceEvent) {}
}

/// Collects events in memory. Used to buffer per-section event streams so
/// concurrent workers can be flushed in plan order, and by tests.
#[derive(Default)]
pub struct BufferSink {
    events: Mutex<Vec<TraceEvent>>,
}

impl BufferSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn drain(&self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.events.lock().unwrap())
    }

    pub fn snapshot(&self) -> Vec<TraceEvent> {
        self.events.lock().unwrap().clone()
    }
}

impl EventSink for BufferSink {
    fn emit(&self, event: TraceEvent) {
        self.events.lock().unwrap().push(event);
    }
}

/// Stamps a fixed section index onto every event before forwarding.
pub struct SectionTaggedSink<'a> {
    inner: &'a dyn EventSink,
    section_index: usize,
}

impl<'a> SectionTaggedSink<'a> {
    pub fn new(inner: &'a dyn EventSink, section_index: usize) -> Self {
        Self {
            inner,
            section_index,
        }
    }
}

impl EventSink for SectionTaggedSink<'_> {
    fn emit(&self, mut event: TraceEvent) {
        event.section_index = Some(self.section_index);
        self.inner.emit(event);
    }
}
