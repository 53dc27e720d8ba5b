//! `{{name}}` prompt templates.
//!
//! Substitution is a single literal pass: a bound value is inserted as-is and
//! never scanned for placeholders again. A `{{` that does not open a valid
//! placeholder is rejected when the template is built, so a fully rendered
//! template never contains `{{` coming from the template text itself.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::Message;

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("missing binding for placeholder {{{{{0}}}}}")]
    MissingBinding(String),
    #[error("malformed placeholder at byte {offset} of the {part} text")]
    Malformed { part: &'static str, offset: usize },
    #[error("template renders to an empty user message")]
    EmptyUser,
    #[error("cannot read prompt file {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

fn parse(text: &str, part: &'static str) -> Result<Vec<Segment>, TemplateError> {
    let mut segments = Vec::new();
    let mut rest = text;
    let mut consumed = 0;
    while let Some(open) = rest.find("{{") {
        if open > 0 {
            segments.push(Segment::Literal(rest[..open].to_owned()));
        }
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or(TemplateError::Malformed {
            part,
            offset: consumed + open,
        })?;
        let name = &after[..close];
        let valid = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_');
        if !valid {
            return Err(TemplateError::Malformed {
                part,
                offset: consumed + open,
            });
        }
        segments.push(Segment::Placeholder(name.to_owned()));
        let advance = open + 2 + close + 2;
        consumed += advance;
        rest = &rest[advance..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Literal(rest.to_owned()));
    }
    Ok(segments)
}

fn render_segments(segments: &[Segment], bindings: &Bindings) -> Result<String, TemplateError> {
    let mut out = String::new();
    for segment in segments {
        match segment {
            Segment::Literal(text) => out.push_str(text),
            Segment::Placeholder(name) => out.push_str(
                bindings
                    .get(name)
                    .ok_or_else(|| TemplateError::MissingBinding(name.clone()))?,
            ),
        }
    }
    Ok(out)
}

/// System and user prompt pair with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateSource", into = "TemplateSource")]
pub struct PromptTemplate {
    system_text: String,
    user_text: String,
    system: Vec<Segment>,
    user: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct TemplateSource {
    #[serde(default)]
    system: String,
    user: String,
}

impl TryFrom<TemplateSource> for PromptTemplate {
    type Error = TemplateError;

    fn try_from(source: TemplateSource) -> Result<Self, Self::Error> {
        PromptTemplate::new(source.system, source.user)
    }
}

impl From<PromptTemplate> for TemplateSource {
    fn from(t: PromptTemplate) -> Self {
        TemplateSource {
            system: t.system_text,
            user: t.user_text,
        }
    }
}

impl PromptTemplate {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Result<Self, TemplateError> {
        let system_text = system_text.into();
        let user_text = user_text.into();
        let system = parse(&system_text, "system")?;
        let user = parse(&user_text, "user")?;
        Ok(Self {
            system_text,
            user_text,
            system,
            user,
        })
    }

    /// Loads `<name>.system.txt` (optional) and `<name>.user.txt` from `dir`.
    pub fn load(dir: &Path, name: &str) -> Result<Self, TemplateError> {
        let read = |file: String, required: bool| -> Result<String, TemplateError> {
            let path = dir.join(&file);
            match std::fs::read_to_string(&path) {
                Ok(text) => Ok(text),
                Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
                Err(e) => Err(TemplateError::Io {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                }),
            }
        };
        let system = read(format!("{name}.system.txt"), false)?;
        let user = read(format!("{name}.user.txt"), true)?;
        Self::new(system, user)
    }

    pub fn system_text(&self) -> &str {
        &self.system_text
    }

    pub fn user_text(&self) -> &str {
        &self.user_text
    }

    /// Placeholder names a binding map must cover.
    pub fn required(&self) -> BTreeSet<&str> {
        self.system
            .iter()
            .chain(&self.user)
            .filter_map(|s| match s {
                Segment::Placeholder(name) => Some(name.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Renders to an optional system message followed by one user message.
    pub fn render(&self, bindings: &Bindings) -> Result<Vec<Message>, TemplateError> {
        let system = render_segments(&self.system, bindings)?;
        let user = render_segments(&self.user, bindings)?;
        if user.is_empty() {
            return Err(TemplateError::EmptyUser);
        }
        let mut messages = Vec::with_capacity(2);
        if !system.trim().is_empty() {
            messages.push(Message::system(system));
        }
        messages.push(Message::user(user));
        Ok(messages)
    }
}

/// Convenience for building binding maps in code.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}
