//! JSONL trace sink: one line per engine event with a payload digest.
//!
//! Line fields: run id, section index, round, kind, payload digest,
//! confidence raw + norm. Ordering is the emit order, which the engine
//! keeps deterministic under concurrency by flushing buffered section
//! streams in plan order.

use credence_core::events::{EventSink, TraceEvent};
use sha2::{Digest, Sha256};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

pub struct TraceWriter {
    run_id: String,
    out: Mutex<WriterState>,
}

struct WriterState {
    writer: BufWriter<std::fs::File>,
    error: Option<io::Error>,
}

impl TraceWriter {
    pub fn create(path: &Path, run_id: impl Into<String>) -> io::Result<Self> {
        let file = std::fs::File::create(path)?;
        Ok(Self {
            run_id: run_id.into(),
            out: Mutex::new(WriterState {
                writer: BufWriter::new(file),
                error: None,
            }),
        })
    }

    /// Flushes and surfaces the first write error, if any.
    pub fn finish(self) -> io::Result<()> {
        let mut state = self.out.into_inner().unwrap();
        if let Some(e) = state.error.take() {
            return Err(e);
        }
        state.writer.flush()
    }
}

impl EventSink for TraceWriter {
    fn emit(&self, event: TraceEvent) {
        let line = trace_line(&self.run_id, &event);
        let mut state = self.out.lock().unwrap();
        if state.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(state.writer, "{line}") {
            state.error = Some(e);
        }
    }
}

/// One trace line as canonical JSON.
pub fn trace_line(run_id: &str, event: &TraceEvent) -> String {
    let digest = payload_digest(&event.payload);
    let value = serde_json::json!({
        "run": run_id,
        "section": event.section_index,
        "round": event.round,
        "kind": event.kind.as_str(),
        "digest": digest,
        "confidence_raw": event.confidence.map(|c| c.raw),
        "confidence_norm": event.confidence.map(|c| c.norm),
    });
    value.to_string()
}

/// Writes a complete event list as a trace file.
#[allow(dead_code)] // streaming via `TraceWriter` is the binary's path; tests replay lists
pub fn write_trace(path: &Path, run_id: &str, events: &[TraceEvent]) -> io::Result<()> {
    let writer = TraceWriter::create(path, run_id)?;
    for event in events {
        writer.emit(event.clone());
    }
    writer.finish()
}

fn payload_digest(payload: &serde_json::Value) -> String {
    let canonical = payload.to_string();
    let hash = Sha256::digest(canonical.as_bytes());
    hex::encode(&hash[..8])
}
