//! Report rendering: a deterministic Markdown document with inline
//! confidence tags on every claim and a numbered source list.

use credence_core::domain::Report;

/// Renders a report. Pure: the output is a function of the report value
/// alone, so repeated renders are byte-identical.
pub fn render_report(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n", report.plan.request.topic));

    let bib_index = |url: &str| -> Option<usize> {
        report
            .bibliography
            .iter()
            .position(|s| s.url == url)
            .map(|i| i + 1)
    };

    for draft in &report.drafts {
        out.push_str(&format!("\n## {}\n\n", draft.spec.title));
        let mut sentences = Vec::with_capacity(draft.claims.len());
        for claim in &draft.claims {
            let cites: String = claim
                .sources
                .iter()
                .filter_map(|s| bib_index(&s.url))
                .map(|i| format!("[{i}]"))
                .collect();
            sentences.push(format!(
                "{}{} [confidence: {} ({}/10)]",
                claim.text,
                cites,
                claim.label.as_str(),
                claim.score
            ));
        }
        out.push_str(&sentences.join(" "));
        out.push('\n');
    }

    out.push('\n');
    if report.bibliography.is_empty() {
        out.push_str("Sources: none\n");
    } else {
        out.push_str("## Sources\n\n");
        for (i, source) in report.bibliography.iter().enumerate() {
            if source.title.is_empty() {
                out.push_str(&format!("{}. {}\n", i + 1, source.url));
            } else {
                out.push_str(&format!("{}. {} — {}\n", i + 1, source.title, source.url));
            }
        }
    }
    out
}
