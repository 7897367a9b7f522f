//! Prompt templates for every LLM call the pipeline makes.
//!
//! Templates are plain-text files with a short header:
//!
//! ```text
//! template_id: quote_extraction
//! version: 1
//! required_vars: subreddit, topic, theme, theme_focus, concerns_scope
//! ===
//! <body with {$name} placeholders>
//! ```
//!
//! Rendering is a single left-to-right pass, so bound values that happen to
//! contain placeholder syntax are inserted literally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Theme;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\$([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

const HEADER_END: &str = "===";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template} requires variable {name:?}")]
    MissingVariable { template: TemplateId, name: String },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("malformed template file {file}: {message}")]
    Malformed { file: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SourceRecommendation,
    ThemeGeneration,
    QuoteExtraction,
    SubtopicAnalysis,
    QuoteMapping,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::SourceRecommendation,
        TemplateId::ThemeGeneration,
        TemplateId::QuoteExtraction,
        TemplateId::SubtopicAnalysis,
        TemplateId::QuoteMapping,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::SourceRecommendation => "source_recommendation",
            TemplateId::ThemeGeneration => "theme_generation",
            TemplateId::QuoteExtraction => "quote_extraction",
            TemplateId::SubtopicAnalysis => "subtopic_analysis",
            TemplateId::QuoteMapping => "quote_mapping",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub version: String,
    pub body: String,
    pub required_vars: BTreeSet<String>,
}

impl PromptTemplate {
    /// Parses a template file. The placeholder set found in the body must
    /// equal the declared `required_vars`.
    pub fn parse(file: &str, text: &str) -> Result<Self, PromptError> {
        let malformed = |message: String| PromptError::Malformed {
            file: file.to_string(),
            message,
        };
        let (header, body) = text
            .split_once(&format!("\n{HEADER_END}\n"))
            .ok_or_else(|| malformed(format!("missing {HEADER_END:?} header terminator")))?;
        let mut fields = BTreeMap::new();
        for line in header.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| malformed(format!("bad header line {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let id: TemplateId = fields
            .get("template_id")
            .ok_or_else(|| malformed("missing template_id".into()))?
            .parse()?;
        let version = fields
            .get("version")
            .filter(|v| !v.is_empty())
            .ok_or_else(|| malformed("missing version".into()))?
            .to_string();
        let required_vars: BTreeSet<String> = fields
            .get("required_vars")
            .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default();
        let body = body.strip_suffix('\n').unwrap_or(body).to_string();
        let found: BTreeSet<String> = PLACEHOLDER
            .captures_iter(&body)
            .map(|c| c[1].to_string())
            .collect();
        if found != required_vars {
            return Err(malformed(format!(
                "placeholders {found:?} differ from required_vars {required_vars:?}"
            )));
        }
        Ok(Self {
            id,
            version,
            body,
            required_vars,
        })
    }

    pub fn render(&self, binding: &TemplateBinding) -> Result<String, PromptError> {
        for name in &self.required_vars {
            if binding.get(name).is_none_or(str::is_empty) {
                return Err(PromptError::MissingVariable {
                    template: self.id,
                    name: name.clone(),
                });
            }
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut last = 0;
        for caps in PLACEHOLDER.captures_iter(&self.body) {
            let whole = caps.get(0).unwrap();
            out.push_str(&self.body[last..whole.start()]);
            out.push_str(binding.get(&caps[1]).unwrap_or_default());
            last = whole.end();
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

/// Values for template placeholders.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateBinding {
    pub values: BTreeMap<String, String>,
}

impl TemplateBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.values.insert(name.to_string(), value.into());
        self
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        self.values.insert(name.to_string(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

/// Binds a theme for quote extraction.
///
/// `theme` and `theme_focus` take the title; `concerns_scope` takes the
/// description, or the title when the description is blank. `subreddit` and
/// `topic` both default to the dataset's source label; callers with an explicit
/// research topic overwrite `topic` afterwards.
pub fn derive_binding_from_theme(theme: &Theme, source_label: &str) -> TemplateBinding {
    let title = theme.title.trim();
    let description = theme.description.trim();
    let scope = if description.is_empty() { title } else { description };
    TemplateBinding::new()
        .with("theme", title)
        .with("theme_focus", title)
        .with("concerns_scope", scope)
        .with("subreddit", source_label)
        .with("topic", source_label)
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

const BUILTIN: [(&str, &str); 5] = [
    ("source_recommendation.txt", include_str!("../../prompts/source_recommendation.txt")),
    ("theme_generation.txt", include_str!("../../prompts/theme_generation.txt")),
    ("quote_extraction.txt", include_str!("../../prompts/quote_extraction.txt")),
    ("subtopic_analysis.txt", include_str!("../../prompts/subtopic_analysis.txt")),
    ("quote_mapping.txt", include_str!("../../prompts/quote_mapping.txt")),
];

impl PromptLibrary {
    /// The templates compiled into the binary.
    pub fn builtin() -> Self {
        Self::from_sources(BUILTIN.iter().map(|(f, t)| (f.to_string(), t.to_string())))
            .expect("builtin prompt templates are valid")
    }

    /// Loads `<template_id>.txt` for every template from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut sources = Vec::new();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{id}.txt"));
            let text = std::fs::read_to_string(&path).map_err(|e| PromptError::Malformed {
                file: path.display().to_string(),
                message: e.to_string(),
            })?;
            sources.push((path.display().to_string(), text));
        }
        Self::from_sources(sources)
    }

    fn from_sources(sources: impl IntoIterator<Item = (String, String)>) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for (file, text) in sources {
            let t = PromptTemplate::parse(&file, &text)?;
            templates.insert(t.id, t);
        }
        for id in TemplateId::ALL {
            if !templates.contains_key(&id) {
                return Err(PromptError::UnknownTemplate(id.to_string()));
            }
        }
        Ok(Self { templates })
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, binding: &TemplateBinding) -> Result<String, PromptError> {
        self.template(id).render(binding)
    }

    pub fn render_named(&self, name: &str, binding: &TemplateBinding) -> Result<String, PromptError> {
        self.render(name.parse()?, binding)
    }

    /// Version tag covering the given templates, e.g.
    /// `quote_extraction@1+subtopic_analysis@1`.
    pub fn version_of(&self, ids: &[TemplateId]) -> String {
        ids.iter()
            .map(|id| format!("{id}@{}", self.template(*id).version))
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Version tag for the report stages (extraction, coding, mapping).
    pub fn report_version(&self) -> String {
        self.version_of(&[
            TemplateId::QuoteExtraction,
            TemplateId::SubtopicAnalysis,
            TemplateId::QuoteMapping,
        ])
    }
}
