//! Versioned prompt templates with `{{placeholder}}` substitution.
//!
//! A template file holds the user prompt. If it contains a line consisting of
//! exactly `---`, the text above that line is the system prompt.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unresolved placeholder {{{{{0}}}}}")]
    UnresolvedPlaceholder(String),
    #[error("template file {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub version: u32,
    pub text: String,
}

/// A rendered prompt pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn digest(&self) -> String {
        crate::digest::prompt_digest(&self.system, &self.user)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            break;
        };
        let name = after[..close].trim();
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            out.push(Piece::Text(&rest[..open + 2]));
            rest = after;
            continue;
        }
        out.push(Piece::Text(&rest[..open]));
        out.push(Piece::Slot(name));
        rest = &after[close + 2..];
    }
    out.push(Piece::Text(rest));
    out
}

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, version: u32, text: impl Into<String>) -> Self {
        PromptTemplate {
            template_id: template_id.into(),
            version,
            text: text.into(),
        }
    }

    /// Load `<id>.v<version>.txt`; id and version come from the file name.
    pub fn load(path: &Path) -> Result<PromptTemplate, TemplateError> {
        let err = |message: String| TemplateError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let stem = path
            .file_name()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_suffix(".txt"))
            .ok_or_else(|| err("expected a .txt file".into()))?;
        let (id, version) = stem
            .rsplit_once(".v")
            .ok_or_else(|| err("file name must look like <id>.v<version>.txt".into()))?;
        let version = version
            .parse()
            .map_err(|_| err(format!("bad version `{version}`")))?;
        Ok(PromptTemplate::new(id, version, text))
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for piece in pieces(&self.text) {
            if let Piece::Slot(name) = piece {
                if !seen.contains(&name) {
                    seen.push(name);
                }
            }
        }
        seen
    }

    pub fn has_placeholder(&self, name: &str) -> bool {
        self.placeholders().contains(&name)
    }

    /// Substitute every placeholder. Fails on the first placeholder without a
    /// value, and on any `required` name the template does not contain.
    pub fn render(
        &self,
        required: &[&str],
        vars: &BTreeMap<&str, String>,
    ) -> Result<RenderedPrompt, TemplateError> {
        if let Some(missing) = required.iter().find(|r| !self.has_placeholder(r)) {
            return Err(TemplateError::UnresolvedPlaceholder(missing.to_string()));
        }
        let mut rendered = String::with_capacity(self.text.len());
        for piece in pieces(&self.text) {
            match piece {
                Piece::Text(t) => rendered.push_str(t),
                Piece::Slot(name) => {
                    let value = vars
                        .get(name)
                        .ok_or_else(|| TemplateError::UnresolvedPlaceholder(name.to_string()))?;
                    rendered.push_str(value);
                }
            }
        }
        Ok(split_system(&rendered))
    }
}

fn split_system(rendered: &str) -> RenderedPrompt {
    let mut offset = 0;
    for line in rendered.split_inclusive('\n') {
        if line.trim_end_matches(['\n', '\r']) == "---" {
            return RenderedPrompt {
                system: rendered[..offset].trim().to_string(),
                user: rendered[offset + line.len()..].trim().to_string(),
            };
        }
        offset += line.len();
    }
    RenderedPrompt {
        system: String::new(),
        user: rendered.trim().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_and_splits() {
        let tpl = PromptTemplate::new("t", 1, "You are {{ role }}.\n---\nHello {{name}}, {{name}}!");
        let out = tpl
            .render(&["name"], &vars(&[("role", "kind"), ("name", "Ann")]))
            .unwrap();
        assert_eq!(out.system, "You are kind.");
        assert_eq!(out.user, "Hello Ann, Ann!");
        assert_eq!(tpl.placeholders(), vec!["role", "name"]);
    }

    #[test]
    fn unresolved() {
        let tpl = PromptTemplate::new("t", 1, "Hi {{name}}");
        assert_eq!(
            tpl.render(&[], &BTreeMap::new()).unwrap_err(),
            TemplateError::UnresolvedPlaceholder("name".into())
        );
        assert_eq!(
            tpl.render(&["skeleton_fields"], &vars(&[("name", "x")])).unwrap_err(),
            TemplateError::UnresolvedPlaceholder("skeleton_fields".into())
        );
    }

    #[test]
    fn values_are_not_rescanned() {
        let tpl = PromptTemplate::new("t", 1, "{{a}}");
        let out = tpl.render(&[], &vars(&[("a", "{{b}}")])).unwrap();
        assert_eq!(out.user, "{{b}}");
    }

    #[test]
    fn stray_braces_are_text() {
        let tpl = PromptTemplate::new("t", 1, "json {{ not a slot }} and {{open");
        let out = tpl.render(&[], &BTreeMap::new()).unwrap();
        assert_eq!(out.user, "json {{ not a slot }} and {{open");
    }
}
