//! Prompt pack: the versioned plain-text templates that drive every
//! completion. Prompts are data, not code — the engine fills named slots
//! of the form `{slot}` and never builds prompt text any other way.

use std::io;
use std::path::Path;

/// The template set for one prompt-pack version.
#[derive(Debug, Clone)]
pub struct PromptPack {
    pub version: String,
    pub system: String,
    pub think: String,
    pub read_extract: String,
    pub plan: String,
    pub queries: String,
    pub reflect: String,
    pub draft: String,
    pub frame: String,
}

impl PromptPack {
    /// The built-in v1 pack shipped with the crate.
    pub fn builtin_v1() -> Self {
        Self {
            version: "v1".to_string(),
            system: include_str!("prompts/v1/system.txt").to_string(),
            think: include_str!("prompts/v1/think.txt").to_string(),
            read_extract: include_str!("prompts/v1/read_extract.txt").to_string(),
            plan: include_str!("prompts/v1/plan.txt").to_string(),
            queries: include_str!("prompts/v1/queries.txt").to_string(),
            reflect: include_str!("prompts/v1/reflect.txt").to_string(),
            draft: include_str!("prompts/v1/draft.txt").to_string(),
            frame: include_str!("prompts/v1/frame.txt").to_string(),
        }
    }

    /// Loads a pack from a directory of template files named like the
    /// built-in ones (`think.txt`, `plan.txt`, ...).
    pub fn load_dir(dir: &Path, version: impl Into<String>) -> io::Result<Self> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Ok(Self {
            version: version.into(),
            system: read("system.txt")?,
            think: read("think.txt")?,
            read_extract: read("read_extract.txt")?,
            plan: read("plan.txt")?,
            queries: read("queries.txt")?,
            reflect: read("reflect.txt")?,
            draft: read("draft.txt")?,
            frame: read("frame.txt")?,
        })
    }
}

/// Fills `{slot}` placeholders in a template. Unknown placeholders are left
/// verbatim so a template typo is visible in the rendered prompt.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
