//! Domain records passed between the pipeline stages and the report layer.

use serde::{Deserialize, Serialize};

/// Code assigned to quotes the mapping stage could not place.
pub const UNCATEGORIZED_CODE: u32 = 0;
pub const UNCATEGORIZED_NAME: &str = "Uncategorized";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThemeOrigin {
    Suggested,
    UserDefined,
}

/// A high-level research theme guiding quote extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub origin: ThemeOrigin,
}

impl Theme {
    pub fn suggested(title: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            description: description.into(),
            origin: ThemeOrigin::Suggested,
        }
    }

    pub fn user_defined(title: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            description: description.into(),
            origin: ThemeOrigin::UserDefined,
        }
    }

    /// Trimmed, case-folded title. Themes differing only in case or outer
    /// whitespace share cached results.
    pub fn normalized_title(&self) -> String {
        self.title.trim().to_lowercase()
    }
}

/// A verbatim quote pulled from one thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteEntry {
    pub quote: String,
    pub summary: String,
    pub source_id: String,
    pub traceable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtopic {
    pub code: u32,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorizedQuote {
    pub quote: String,
    pub source_id: String,
    pub code: u32,
    pub code_name: String,
}
