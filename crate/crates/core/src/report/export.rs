//! JSONL and Markdown renderings of a report.
//!
//! JSONL layout: one header record (`kind: "report"`) followed by one
//! `kind: "quote"` record per section entry, in section order.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Provenance, Report, ReportError, SectionEntry, SubtopicSection, Totals};
use crate::model::{Subtopic, Theme, UNCATEGORIZED_CODE, UNCATEGORIZED_NAME};

pub const JSONL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    kind: String,
    schema_version: u32,
    report_id: String,
    dataset_id: String,
    theme: Theme,
    source_label: String,
    code_count: u32,
    subtopics: Vec<Subtopic>,
    totals: Totals,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct QuoteRecord {
    kind: String,
    code: u32,
    code_name: String,
    summary: String,
    quote: String,
    source_id: String,
    traceable: bool,
}

pub fn to_jsonl(report: &Report) -> String {
    let header = HeaderRecord {
        kind: "report".into(),
        schema_version: JSONL_SCHEMA_VERSION,
        report_id: report.report_id.clone(),
        dataset_id: report.dataset_id.clone(),
        theme: report.theme.clone(),
        source_label: report.source_label.clone(),
        code_count: report.code_count,
        subtopics: report
            .sections
            .iter()
            .filter(|s| s.subtopic.code != UNCATEGORIZED_CODE)
            .map(|s| s.subtopic.clone())
            .collect(),
        totals: report.totals,
        provenance: report.provenance.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for s in &report.sections {
        for e in &s.entries {
            let rec = QuoteRecord {
                kind: "quote".into(),
                code: s.subtopic.code,
                code_name: s.subtopic.name.clone(),
                summary: e.summary.clone(),
                quote: e.quote.clone(),
                source_id: e.source_id.clone(),
                traceable: e.traceable,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Rebuilds a report from its JSONL export.
pub fn read_jsonl(input: impl Read) -> Result<Report, ReportError> {
    let invalid = |line: usize, message: String| ReportError::InvalidJsonl { line, message };
    let mut lines = BufReader::new(input).lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| invalid(1, "empty file".into()))?;
    let first = first.map_err(|e| invalid(1, e.to_string()))?;
    let header: HeaderRecord = serde_json::from_str(&first).map_err(|e| invalid(1, e.to_string()))?;
    if header.kind != "report" {
        return Err(invalid(1, format!("expected report header, found kind {:?}", header.kind)));
    }
    if header.schema_version != JSONL_SCHEMA_VERSION {
        return Err(invalid(1, format!("unsupported schema_version {}", header.schema_version)));
    }
    let mut sections: Vec<SubtopicSection> = header
        .subtopics
        .into_iter()
        .map(|subtopic| SubtopicSection {
            subtopic,
            quote_count: 0,
            entries: vec![],
        })
        .collect();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| invalid(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuoteRecord = serde_json::from_str(&line).map_err(|e| invalid(n, e.to_string()))?;
        if rec.kind != "quote" {
            return Err(invalid(n, format!("expected quote record, found kind {:?}", rec.kind)));
        }
        if rec.code == UNCATEGORIZED_CODE && !sections.iter().any(|s| s.subtopic.code == UNCATEGORIZED_CODE) {
            sections.push(SubtopicSection {
                subtopic: Subtopic {
                    code: UNCATEGORIZED_CODE,
                    name: UNCATEGORIZED_NAME.into(),
                    description: "Quotes that could not be assigned to any subtopic.".into(),
                },
                quote_count: 0,
                entries: vec![],
            });
        }
        let section = sections
            .iter_mut()
            .find(|s| s.subtopic.code == rec.code)
            .ok_or_else(|| invalid(n, format!("quote references unknown code {}", rec.code)))?;
        section.entries.push(SectionEntry {
            summary: rec.summary,
            quote: rec.quote,
            source_id: rec.source_id,
            traceable: rec.traceable,
        });
    }
    let mut report = Report {
        report_id: header.report_id,
        dataset_id: header.dataset_id,
        source_label: header.source_label,
        theme: header.theme,
        code_count: header.code_count,
        sections,
        totals: Totals::default(),
        provenance: header.provenance,
    };
    report.recount();
    if report.totals != header.totals {
        return Err(invalid(1, "header totals disagree with quote records".into()));
    }
    Ok(report)
}

pub fn parse_jsonl(text: &str) -> Result<Report, ReportError> {
    read_jsonl(text.as_bytes())
}

pub fn to_markdown(report: &Report) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# {}", report.theme.title);
    md.push('\n');
    if !report.theme.description.trim().is_empty() {
        let _ = writeln!(md, "{}\n", report.theme.description.trim());
    }
    let _ = writeln!(md, "- Source: {}", report.source_label);
    let _ = writeln!(md, "- Dataset: `{}`", report.dataset_id);
    let _ = writeln!(md, "- Report: `{}`", report.report_id);
    let _ = writeln!(
        md,
        "- Quotes: {} ({} traceable, {} untraceable)",
        report.totals.quotes, report.totals.traceable, report.totals.untraceable
    );
    let _ = writeln!(md, "- Model: {}", report.provenance.model_id);
    let _ = writeln!(md, "- Prompt version: {}", report.provenance.prompt_version);
    let _ = writeln!(md, "- Generated: {}", report.provenance.created_at.to_rfc3339());

    for s in &report.sections {
        let noun = if s.quote_count == 1 { "quote" } else { "quotes" };
        let _ = writeln!(md, "\n## {}. {} ({} {noun})\n", s.subtopic.code, s.subtopic.name, s.quote_count);
        if !s.subtopic.description.trim().is_empty() {
            let _ = writeln!(md, "{}\n", s.subtopic.description.trim());
        }
        for e in &s.entries {
            let marker = if e.traceable { "" } else { " (untraceable)" };
            let _ = writeln!(md, "- **{}** (source `{}`){marker}\n", e.summary.trim(), e.source_id);
            for line in e.quote.lines() {
                if line.trim().is_empty() {
                    md.push_str("  >\n");
                } else {
                    let _ = writeln!(md, "  > {}", line.trim_end());
                }
            }
            md.push('\n');
        }
    }

    if !report.provenance.warnings.is_empty() {
        md.push_str("\n## Warnings\n\n");
        for w in &report.provenance.warnings {
            let _ = writeln!(md, "- {w}");
        }
    }
    // Exactly one trailing newline.
    while md.ends_with("\n\n") {
        md.pop();
    }
    md
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn export_jsonl(report: &Report, path: &Path) -> Result<(), ReportError> {
    write_file(path, &to_jsonl(report))
}

pub fn export_markdown(report: &Report, path: &Path) -> Result<(), ReportError> {
    write_file(path, &to_markdown(report))
}
