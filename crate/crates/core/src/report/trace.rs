use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Report, ReportError};
use crate::corpus::Corpus;
use crate::text::normalize_whitespace;

/// A quote whose normalized text does not occur in its source thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMismatch {
    pub code: u32,
    pub source_id: String,
    pub quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceAudit {
    pub report: Report,
    pub mismatches: Vec<TraceMismatch>,
}

/// True when the whitespace-normalized quote is a non-empty contiguous
/// substring of the whitespace-normalized thread text.
pub fn is_traceable(quote: &str, thread_text: &str) -> bool {
    let q = normalize_whitespace(quote);
    !q.is_empty() && normalize_whitespace(thread_text).contains(&q)
}

/// Recomputes every entry's traceable flag against the corpus.
pub fn verify_traceability(report: &Report, corpus: &Corpus) -> Result<TraceAudit, ReportError> {
    let mut normalized: HashMap<&str, String> = HashMap::new();
    let mut out = report.clone();
    let mut mismatches = Vec::new();
    for section in &mut out.sections {
        for entry in &mut section.entries {
            if !normalized.contains_key(entry.source_id.as_str()) {
                let thread = corpus
                    .thread(&entry.source_id)
                    .ok_or_else(|| ReportError::MissingThread(entry.source_id.clone()))?;
                normalized.insert(thread.thread_id.as_str(), normalize_whitespace(&thread.text));
            }
            let haystack = &normalized[entry.source_id.as_str()];
            let q = normalize_whitespace(&entry.quote);
            entry.traceable = !q.is_empty() && haystack.contains(&q);
            if !entry.traceable {
                mismatches.push(TraceMismatch {
                    code: section.subtopic.code,
                    source_id: entry.source_id.clone(),
                    quote: entry.quote.clone(),
                });
            }
        }
    }
    out.recount();
    Ok(TraceAudit { report: out, mismatches })
}
