//! Offline fixture providers: embedded completion scripts and a canned
//! search corpus, so every subcommand runs with zero network operations.
//!
//! The `--seed` flag selects a built-in script. Every script also carries
//! the synthetic-benchmark rules, so `eval --offline` works against the
//! bundled dataset under any seed.

use anyhow::{bail, Context, Result};
use credence_core::pipeline::PipelineProviders;
use credence_core::providers::{FixtureCorpus, ProviderSet, ScriptSpec, ScriptedLlm};
use std::path::Path;
use std::sync::Arc;

const REPORT_STANDARD: &str = include_str!("../../../fixtures/offline/report_standard.json");
const REPORT_FAST: &str = include_str!("../../../fixtures/offline/report_fast.json");
const SYNTH_RULES: &str = include_str!("../../../fixtures/offline/synth20_rules.json");
const CORPUS: &str = include_str!("../../../fixtures/offline/corpus.json");

/// Script seeds shipped with the binary.
pub const SEEDS: &[(u64, &str)] = &[
    (0, "standard: multi-round deliberations over the fixture corpus"),
    (1, "fast: every deliberation finalizes in one round, no retrieval"),
];

pub fn script_for_seed(seed: u64) -> Result<ScriptSpec> {
    let base = match seed {
        0 => REPORT_STANDARD,
        1 => REPORT_FAST,
        other => {
            let known: Vec<String> = SEEDS.iter().map(|(s, d)| format!("{s} ({d})")).collect();
            bail!("unknown mock-script seed {other}; available: {}", known.join(", "));
        }
    };
    let mut spec = ScriptSpec::from_json(base).context("embedded report script is invalid")?;
    let synth = ScriptSpec::from_json(SYNTH_RULES).context("embedded synth rules are invalid")?;
    spec.rules.extend(synth.rules);
    Ok(spec)
}

pub fn corpus(dir: Option<&Path>) -> Result<FixtureCorpus> {
    match dir {
        Some(dir) => FixtureCorpus::load_dir(dir)
            .with_context(|| format!("cannot load fixture corpus from {}", dir.display())),
        None => FixtureCorpus::from_json(CORPUS).context("embedded corpus is invalid"),
    }
}

pub fn provider_label(seed: u64) -> String {
    format!("offline-fixture:seed{seed}")
}

/// The full provider bundle for offline pipeline runs. All completion
/// roles share the one scripted provider, mirroring a single-backbone
/// online setup.
pub fn pipeline_providers(seed: u64, corpus_dir: Option<&Path>) -> Result<PipelineProviders> {
    let llm: Arc<ScriptedLlm> = Arc::new(script_for_seed(seed)?.into_llm());
    let corpus = Arc::new(corpus(corpus_dir)?);
    Ok(PipelineProviders::shared(llm, corpus.clone(), corpus))
}

/// The single-question provider bundle for offline answer and eval runs.
pub fn provider_set(seed: u64, corpus_dir: Option<&Path>) -> Result<ProviderSet> {
    let corpus = Arc::new(corpus(corpus_dir)?);
    Ok(ProviderSet {
        llm: Arc::new(script_for_seed(seed)?.into_llm()),
        search: corpus.clone(),
        fetch: corpus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use credence_core::providers::{CompletionProvider, CompletionRequest, SearchProvider};

    #[test]
    fn both_seeds_parse_and_unknown_seeds_fail() {
        assert!(script_for_seed(0).is_ok());
        assert!(script_for_seed(1).is_ok());
        assert!(script_for_seed(99).is_err());
    }

    #[test]
    fn embedded_corpus_answers_the_flagship_query() {
        let corpus = corpus(None).unwrap();
        let hits = corpus
            .search("Duan Yongping investment strategy principles", 5)
            .unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].url, "https://example.org/profiles/duan-yongping");
    }

    #[test]
    fn scripted_moon_question_is_answered() {
        let llm = script_for_seed(0).unwrap().into_llm();
        let req = CompletionRequest::new(
            "[THINK]\nROUND: 1\nQUESTION: Who was the first person to walk on the Moon?\nNOTES SO FAR:\n(none yet)",
            "",
        );
        let reply = llm.complete(&req).unwrap();
        assert!(reply[0].contains("Neil Armstrong"));
    }

    #[test]
    fn fallback_covers_unscripted_prompts() {
        let llm = script_for_seed(0).unwrap().into_llm();
        let req = CompletionRequest::new("[THINK]\nROUND: 1\nQUESTION: something else\n", "");
        let reply = llm.complete(&req).unwrap();
        assert!(reply[0].contains("FINAL: yes"));
    }
}
