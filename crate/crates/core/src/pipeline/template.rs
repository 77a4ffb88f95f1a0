use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template slot {{{0}}} has no binding")]
    MissingBinding(String),
    #[error("template {name}: {source}")]
    Io {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

/// Replaces every `{slot}` (ASCII identifier) with its binding. `{{` and
/// `}}` produce literal braces; any other brace is copied through. Unused
/// bindings are fine; an unbound slot is an error.
pub fn render_prompt(template: &str, bindings: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
        } else if let Some(name) = slot_name(tail) {
            let value = bindings
                .get(name)
                .ok_or_else(|| TemplateError::MissingBinding(name.to_owned()))?;
            out.push_str(value);
            rest = &tail[name.len() + 2..];
        } else {
            out.push_str(&tail[..1]);
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// `tail` starts with `{`; returns the identifier if it is `{ident}`.
fn slot_name(tail: &str) -> Option<&str> {
    let body = tail.strip_prefix('{')?;
    let end = body.find('}')?;
    let name = &body[..end];
    let mut chars = name.chars();
    let first = chars.next()?;
    ((first.is_ascii_alphabetic() || first == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_'))
        .then_some(name)
}

/// Slots referenced by a template, in order of first use.
pub fn template_slots(template: &str) -> Vec<String> {
    let mut slots: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            rest = &tail[2..];
        } else if let Some(name) = slot_name(tail) {
            if !slots.iter().any(|s| s == name) {
                slots.push(name.to_owned());
            }
            rest = &tail[name.len() + 2..];
        } else {
            rest = &tail[1..];
        }
    }
    slots
}

pub const ANSWER_FILE: &str = "answer.txt";
pub const CRITIQUE_FILE: &str = "critique.txt";
pub const NO_STATUTES_FILE: &str = "no_statutes.txt";

const DEFAULT_ANSWER: &str = "\
You are a careful legal assistant. Answer the user's question using the statutes below.
Cite statute ids in square brackets. If the statutes do not settle the question, say so.

Question: {query}
Keywords: {keywords}

Statutes:
{statutes}

Answer:";

const DEFAULT_CRITIQUE: &str = "\
Review the draft answer against the statutes. Correct any claim the statutes do not support,
remove anything invented, and return only the revised answer.

Question: {query}

Statutes:
{statutes}

Draft answer:
{draft}

Revised answer:";

const DEFAULT_NO_STATUTES: &str = "No relevant statute found.";

/// Prompt templates for the draft and self-suggestion calls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    /// Slots: `{query}`, `{keywords}`, `{statutes}`.
    pub answer: String,
    /// Slots: `{query}`, `{keywords}`, `{statutes}`, `{draft}`.
    pub critique: String,
    /// Rendered in place of `{statutes}` when nothing was retrieved.
    pub no_statutes: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            answer: DEFAULT_ANSWER.to_owned(),
            critique: DEFAULT_CRITIQUE.to_owned(),
            no_statutes: DEFAULT_NO_STATUTES.to_owned(),
        }
    }
}

impl PromptTemplates {
    /// Reads `answer.txt`, `critique.txt` and optionally `no_statutes.txt`
    /// from `dir`. Missing files fall back to the built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let defaults = Self::default();
        let read = |name: &str, fallback: String| -> Result<String, TemplateError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(s.trim_end_matches('\n').to_owned()),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(fallback),
                Err(source) => Err(TemplateError::Io { name: path.display().to_string(), source }),
            }
        };
        if !dir.is_dir() {
            return Err(TemplateError::Io {
                name: dir.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "template directory not found"),
            });
        }
        let templates = Self {
            answer: read(ANSWER_FILE, defaults.answer)?,
            critique: read(CRITIQUE_FILE, defaults.critique)?,
            no_statutes: read(NO_STATUTES_FILE, defaults.no_statutes)?.trim().to_owned(),
        };
        templates.validate()?;
        Ok(templates)
    }

    /// Checks each template only uses the slots the pipeline binds for it.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let check = |t: &str, allowed: &[&str]| {
            template_slots(t)
                .into_iter()
                .find(|s| !allowed.contains(&s.as_str()))
                .map_or(Ok(()), |s| Err(TemplateError::MissingBinding(s)))
        };
        check(&self.answer, &["query", "keywords", "statutes"])?;
        check(&self.critique, &["query", "keywords", "statutes", "draft"])
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(ANSWER_FILE), format!("{}\n", self.answer))?;
        std::fs::write(dir.join(CRITIQUE_FILE), format!("{}\n", self.critique))?;
        std::fs::write(dir.join(NO_STATUTES_FILE), format!("{}\n", self.no_statutes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_bound_slots() {
        let out = render_prompt("{q}|{laws}", &b(&[("q", "debt"), ("laws", "L1,L2")])).unwrap();
        assert_eq!(out, "debt|L1,L2");
    }

    #[test]
    fn missing_binding_names_slot() {
        let err = render_prompt("{q}|{laws}", &b(&[("q", "x")])).unwrap_err();
        assert!(matches!(&err, TemplateError::MissingBinding(s) if s == "laws"));
    }

    #[test]
    fn unused_bindings_and_literal_braces() {
        let out = render_prompt("{{\"k\": {v}}} { not a slot } {}", &b(&[("v", "1"), ("extra", "z")])).unwrap();
        assert_eq!(out, "{\"k\": 1} { not a slot } {}");
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let out = render_prompt("{a}", &b(&[("a", "{b}")])).unwrap();
        assert_eq!(out, "{b}");
    }

    #[test]
    fn slot_listing_and_validation() {
        assert_eq!(template_slots("{a} {{b}} {c} {a}"), ["a", "c"]);
        assert!(PromptTemplates::default().validate().is_ok());
        let bad = PromptTemplates { answer: "{query} {draft}".into(), ..Default::default() };
        assert!(matches!(bad.validate(), Err(TemplateError::MissingBinding(s)) if s == "draft"));
    }

    #[test]
    fn directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = PromptTemplates {
            answer: "A {query} {statutes}".into(),
            critique: "C {draft}".into(),
            no_statutes: "nothing".into(),
        };
        t.write_dir(dir.path()).unwrap();
        assert_eq!(PromptTemplates::load_dir(dir.path()).unwrap(), t);
        assert!(PromptTemplates::load_dir(&dir.path().join("absent")).is_err());
    }
}
