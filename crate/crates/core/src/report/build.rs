use std::collections::{HashMap, VecDeque};

use chrono::{DateTime, Utc};

use super::{Provenance, Report, ReportError, SectionEntry, SubtopicSection, Totals};
use crate::model::{CategorizedQuote, QuoteEntry, Subtopic, Theme, UNCATEGORIZED_CODE, UNCATEGORIZED_NAME};
use crate::text::word_count;

/// Summaries longer than this are kept but noted in the warning ledger.
pub const MAX_SUMMARY_WORDS: usize = 8;

#[derive(Debug, Clone)]
pub struct ReportMeta {
    pub report_id: String,
    pub dataset_id: String,
    pub source_label: String,
    pub theme: Theme,
    pub prompt_version: String,
    pub model_id: String,
    pub created_at: DateTime<Utc>,
    pub warnings: Vec<String>,
}

pub fn build_report(
    quotes: &[QuoteEntry],
    subtopics: &[Subtopic],
    categorized: &[CategorizedQuote],
    meta: ReportMeta,
) -> Result<Report, ReportError> {
    let code_count = subtopics.len() as u32;
    for (i, s) in subtopics.iter().enumerate() {
        if s.code != i as u32 + 1 {
            return Err(ReportError::InconsistentInputs(format!(
                "subtopic codes must run 1..={code_count} in order; position {i} has code {}",
                s.code
            )));
        }
    }

    // Multiset of available quotes keyed by (source, text).
    let mut pool: HashMap<(&str, &str), VecDeque<&QuoteEntry>> = HashMap::new();
    for q in quotes {
        pool.entry((q.source_id.as_str(), q.quote.as_str())).or_default().push_back(q);
    }

    let mut buckets: Vec<Vec<SectionEntry>> = vec![Vec::new(); code_count as usize + 1];
    for c in categorized {
        if c.code > code_count {
            return Err(ReportError::InconsistentInputs(format!(
                "quote from {} mapped to code {} but only {code_count} subtopics exist",
                c.source_id, c.code
            )));
        }
        let entry = pool
            .get_mut(&(c.source_id.as_str(), c.quote.as_str()))
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| {
                ReportError::InconsistentInputs(format!(
                    "categorized quote from {} is not among the extracted quotes",
                    c.source_id
                ))
            })?;
        buckets[c.code as usize].push(SectionEntry {
            summary: entry.summary.clone(),
            quote: entry.quote.clone(),
            source_id: entry.source_id.clone(),
            traceable: entry.traceable,
        });
    }

    let mut warnings = meta.warnings;
    let mut sections: Vec<SubtopicSection> = subtopics
        .iter()
        .map(|s| section(s.clone(), std::mem::take(&mut buckets[s.code as usize])))
        .collect();
    let unmapped = std::mem::take(&mut buckets[UNCATEGORIZED_CODE as usize]);
    if !unmapped.is_empty() {
        sections.push(section(
            Subtopic {
                code: UNCATEGORIZED_CODE,
                name: UNCATEGORIZED_NAME.to_string(),
                description: "Quotes that could not be assigned to any subtopic.".to_string(),
            },
            unmapped,
        ));
    }
    for s in &sections {
        for e in &s.entries {
            let words = word_count(&e.summary);
            if words > MAX_SUMMARY_WORDS {
                warnings.push(format!(
                    "summary of {words} words exceeds {MAX_SUMMARY_WORDS} (source {}, code {}): {:?}",
                    e.source_id, s.subtopic.code, e.summary
                ));
            }
        }
    }

    let mut report = Report {
        report_id: meta.report_id,
        dataset_id: meta.dataset_id,
        source_label: meta.source_label,
        theme: meta.theme,
        code_count,
        sections,
        totals: Totals::default(),
        provenance: Provenance {
            prompt_version: meta.prompt_version,
            model_id: meta.model_id,
            created_at: meta.created_at,
            warnings,
        },
    };
    report.recount();
    Ok(report)
}

fn section(subtopic: Subtopic, mut entries: Vec<SectionEntry>) -> SubtopicSection {
    entries.sort_by(|a, b| {
        a.source_id
            .cmp(&b.source_id)
            .then_with(|| a.quote.cmp(&b.quote))
            .then_with(|| a.summary.cmp(&b.summary))
    });
    SubtopicSection {
        subtopic,
        quote_count: entries.len() as u64,
        entries,
    }
}
