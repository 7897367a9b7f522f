//! Persisted per-stage outputs.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{CategorizedQuote, QuoteEntry, Subtopic, Theme};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Themes,
    Quotes,
    Subtopics,
    Mapping,
    /// A completed report, cached as a whole.
    Report,
}

impl Stage {
    pub const PIPELINE: [Stage; 4] = [Stage::Themes, Stage::Quotes, Stage::Subtopics, Stage::Mapping];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Themes => "themes",
            Stage::Quotes => "quotes",
            Stage::Subtopics => "subtopics",
            Stage::Mapping => "mapping",
            Stage::Report => "report",
        }
    }

    /// File name used under `reports/{report_id}/`.
    pub fn file_name(self) -> String {
        format!("{}.json", self.as_str())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Stage::Themes, Stage::Quotes, Stage::Subtopics, Stage::Mapping, Stage::Report]
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemesDoc {
    pub suggested: Vec<Theme>,
    #[serde(default)]
    pub selected: Option<Theme>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotesDoc {
    pub theme: Theme,
    pub quotes: Vec<QuoteEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtopicsDoc {
    pub code_count: u32,
    pub subtopics: Vec<Subtopic>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingDoc {
    pub categorized: Vec<CategorizedQuote>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageArtifact {
    pub stage: Stage,
    pub payload: Value,
    pub produced_at: DateTime<Utc>,
    pub prompt_version: String,
    pub model_id: String,
}

impl StageArtifact {
    pub fn new(
        stage: Stage,
        payload: &impl Serialize,
        produced_at: DateTime<Utc>,
        prompt_version: &str,
        model_id: &str,
    ) -> Self {
        Self {
            stage,
            payload: serde_json::to_value(payload).expect("stage payload serializes"),
            produced_at,
            prompt_version: prompt_version.to_string(),
            model_id: model_id.to_string(),
        }
    }

    /// Checks that the payload decodes as this stage's document type.
    pub fn validate(&self) -> Result<(), String> {
        match self.stage {
            Stage::Themes => self.decode::<ThemesDoc>().map(drop),
            Stage::Quotes => self.decode::<QuotesDoc>().map(drop),
            Stage::Subtopics => self.decode::<SubtopicsDoc>().map(drop),
            Stage::Mapping => self.decode::<MappingDoc>().map(drop),
            Stage::Report => self.decode::<Report>().map(drop),
        }
    }

    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, String> {
        serde_json::from_value(self.payload.clone()).map_err(|e| format!("{} payload: {e}", self.stage))
    }

    /// Pretty JSON with a trailing newline, as written to disk.
    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }
}
