//! Fixture corpus: an offline search + fetch backend.
//!
//! On-disk form: a directory holding `index.json` plus document files. The
//! index maps normalized query strings to ranked url lists and urls to
//! document metadata. Bodies may be inlined in the index (`body`) or stored
//! in a referenced file (`file`), so a corpus can also live in one JSON
//! string for embedding.

use super::{finalize_results, FetchProvider, ProviderError, SearchProvider, DEFAULT_FETCH_CHAR_CAP};
use crate::domain::{SourceDoc, SourceRef};
use crate::util::normalize_answer;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// One document in the corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixtureDoc {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    /// Inline body text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    /// Body file relative to the corpus directory; used when `body` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Dead urls fail to fetch, exercising the degraded READ path.
    #[serde(default)]
    pub dead: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct CorpusIndex {
    /// Query string -> ranked url list.
    queries: BTreeMap<String, Vec<String>>,
    /// Url -> document.
    docs: BTreeMap<String, FixtureDoc>,
}

/// Offline [`SearchProvider`] + [`FetchProvider`] over canned documents.
pub struct FixtureCorpus {
    queries: BTreeMap<String, Vec<String>>,
    docs: BTreeMap<String, FixtureDoc>,
    char_cap: usize,
}

impl FixtureCorpus {
    /// Loads `index.json` from `dir`, resolving `file` references eagerly.
    pub fn load_dir(dir: &Path) -> Result<Self, ProviderError> {
        let index_path = dir.join("index.json");
        let raw = std::fs::read_to_string(&index_path).map_err(|e| {
            ProviderError::MalformedResponse(format!("cannot read {}: {e}", index_path.display()))
        })?;
        let mut index: CorpusIndex = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::MalformedResponse(format!("bad corpus index: {e}")))?;
        for (url, doc) in index.docs.iter_mut() {
            if doc.body.is_none() {
                if let Some(file) = &doc.file {
                    let body = std::fs::read_to_string(dir.join(file)).map_err(|e| {
                        ProviderError::MalformedResponse(format!(
                            "cannot read corpus file {file} for {url}: {e}"
                        ))
                    })?;
                    doc.body = Some(body);
                }
            }
        }
        Ok(Self::from_index(index))
    }

    /// Parses a single-file corpus with inline bodies.
    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let index: CorpusIndex = serde_json::from_str(json)
            .map_err(|e| ProviderError::MalformedResponse(format!("bad corpus json: {e}")))?;
        Ok(Self::from_index(index))
    }

    /// Builds a corpus in memory: `(query, urls)` pairs plus `(url, doc)` pairs.
    pub fn from_entries(
        queries: Vec<(&str, Vec<&str>)>,
        docs: Vec<(&str, FixtureDoc)>,
    ) -> Self {
        let index = CorpusIndex {
            queries: queries
                .into_iter()
                .map(|(q, urls)| {
                    (
                        normalize_answer(q),
                        urls.into_iter().map(str::to_string).collect(),
                    )
                })
                .collect(),
            docs: docs
                .into_iter()
                .map(|(url, doc)| (url.to_string(), doc))
                .collect(),
        };
        Self::from_index(index)
    }

    fn from_index(index: CorpusIndex) -> Self {
        let queries = index
            .queries
            .into_iter()
            .map(|(q, urls)| (normalize_answer(&q), urls))
            .collect();
        Self {
            queries,
            docs: index.docs,
            char_cap: DEFAULT_FETCH_CHAR_CAP,
        }
    }

    pub fn with_char_cap(mut self, cap: usize) -> Self {
        self.char_cap = cap;
        self
    }

    fn make_ref(&self, url: &str) -> SourceRef {
        let doc = self.docs.get(url);
        SourceRef {
            url: url.to_string(),
            title: doc.map(|d| d.title.clone()).unwrap_or_default(),
            snippet: doc.map(|d| d.snippet.clone()).unwrap_or_default(),
            rank: 0,
        }
    }
}

impl SearchProvider for FixtureCorpus {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SourceRef>, ProviderError> {
        let urls = self
            .queries
            .get(&normalize_answer(query))
            .cloned()
            .unwrap_or_default();
        let refs = urls.iter().map(|u| self.make_ref(u)).collect();
        Ok(finalize_results(refs, k))
    }
}

impl FetchProvider for FixtureCorpus {
    fn fetch(&self, source: &SourceRef) -> Result<SourceDoc, ProviderError> {
        if source.url.is_empty() {
            return Err(ProviderError::MalformedRequest("empty url".to_string()));
        }
        let doc = self.docs.get(&source.url).ok_or(ProviderError::FetchFailed {
            url: source.url.clone(),
            reason: "not in corpus".to_string(),
        })?;
        if doc.dead {
            return Err(ProviderError::FetchFailed {
                url: source.url.clone(),
                reason: "dead fixture url".to_string(),
            });
        }
        let full = doc.body.clone().unwrap_or_default();
        let truncated = full.chars().count() > self.char_cap;
        let body = if truncated {
            full.chars().take(self.char_cap).collect()
        } else {
            full
        };
        Ok(SourceDoc {
            source: source.clone(),
            body,
            fetched_at: 0,
            truncated,
        })
    }
}
