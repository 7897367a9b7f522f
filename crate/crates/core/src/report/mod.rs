//! Final report assembly, traceability audit, and exports.

mod build;
mod export;
mod trace;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_report, ReportMeta, MAX_SUMMARY_WORDS};
pub use export::{export_jsonl, export_markdown, parse_jsonl, read_jsonl, to_jsonl, to_markdown, JSONL_SCHEMA_VERSION};
pub use trace::{is_traceable, verify_traceability, TraceAudit, TraceMismatch};

use crate::model::{Subtopic, Theme};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("quote source {0:?} is not a thread in the corpus")]
    MissingThread(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid report JSONL at line {line}: {message}")]
    InvalidJsonl { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionEntry {
    pub summary: String,
    pub quote: String,
    pub source_id: String,
    pub traceable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtopicSection {
    pub subtopic: Subtopic,
    pub quote_count: u64,
    pub entries: Vec<SectionEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub quotes: u64,
    pub traceable: u64,
    pub untraceable: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt_version: String,
    pub model_id: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub dataset_id: String,
    pub source_label: String,
    pub theme: Theme,
    pub code_count: u32,
    /// Codes `1..=code_count` in order, then an Uncategorized section when
    /// any quote went unmapped.
    pub sections: Vec<SubtopicSection>,
    pub totals: Totals,
    pub provenance: Provenance,
}

impl Report {
    pub fn subtopics(&self) -> impl Iterator<Item = &Subtopic> {
        self.sections.iter().map(|s| &s.subtopic)
    }

    pub fn section(&self, code: u32) -> Option<&SubtopicSection> {
        self.sections.iter().find(|s| s.subtopic.code == code)
    }

    fn recount(&mut self) {
        let mut totals = Totals::default();
        for s in &mut self.sections {
            s.quote_count = s.entries.len() as u64;
            for e in &s.entries {
                totals.quotes += 1;
                if e.traceable {
                    totals.traceable += 1;
                } else {
                    totals.untraceable += 1;
                }
            }
        }
        self.totals = totals;
    }
}
