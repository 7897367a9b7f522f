//! Quote extraction over token-budgeted batches of threads.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use super::batching::pack_batches;
use super::{render_row, row_costs, JobHandle, Pipeline, PipelineError};
use crate::artifact::{QuotesDoc, Stage};
use crate::corpus::{Corpus, DiscussionThread};
use crate::llm::{JsonReply, JsonSchema};
use crate::model::{QuoteEntry, Theme};
use crate::prompts::{derive_binding_from_theme, TemplateId};
use crate::report::is_traceable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotesOutcome {
    pub quotes: Vec<QuoteEntry>,
    pub warnings: Vec<String>,
}

impl Pipeline {
    /// Extracts theme-relevant quotes from every thread of `corpus`.
    ///
    /// Threads are packed into batches within the token budget (never split
    /// across batches). Each reply entry is attributed to the batch's single
    /// thread, or, for multi-thread batches, to the first thread containing
    /// the quote verbatim. Quotes found in no thread are kept and marked
    /// untraceable. Batches whose output stays malformed after retries are
    /// skipped with a warning.
    pub async fn extract_quotes(
        &self,
        corpus: &Corpus,
        theme: &Theme,
        job: Option<&JobHandle>,
    ) -> Result<QuotesOutcome, PipelineError> {
        let key = self.key(corpus, Stage::Quotes, Some(theme));
        if let Some(hit) = self.cached(&key) {
            if let Ok(doc) = hit.decode::<QuotesDoc>() {
                return Ok(QuotesOutcome {
                    quotes: doc.quotes,
                    warnings: doc.warnings,
                });
            }
        }

        let binding = derive_binding_from_theme(theme, &corpus.source_label);
        let system = self.prompts.render(TemplateId::QuoteExtraction, &binding)?;
        let rows: Vec<String> = corpus.threads.iter().enumerate().map(|(i, t)| render_row(i, t)).collect();
        let batches = pack_batches(&row_costs(&rows), self.config.batch_token_budget);
        if let Some(job) = job {
            job.add_total(batches.len() as u64);
        }

        let schema = JsonSchema::quote_entries();
        let requests = batches
            .iter()
            .enumerate()
            .map(|(i, range)| self.request(format!("quotes.{i:04}"), Some(system.clone()), rows[range.clone()].join("\n\n")))
            .collect();
        let results = self.run_batches(requests, &schema, job).await;

        let mut quotes = Vec::new();
        let mut warnings = Vec::new();
        for ((tag, result), range) in results.into_iter().zip(&batches) {
            let threads = &corpus.threads[range.clone()];
            let value = match result {
                Ok(JsonReply::Empty) => continue,
                Ok(JsonReply::Value(v)) => v,
                Err(e) if e.is_output_error() => {
                    warn!(%tag, error = %e, "skipping batch");
                    warnings.push(format!("{tag}: batch skipped after malformed output: {e}"));
                    continue;
                }
                Err(e) => return Err(PipelineError::Llm { stage: "quotes", source: e }),
            };
            collect_entries(&tag, &value, threads, &mut quotes, &mut warnings);
        }

        let doc = QuotesDoc {
            theme: theme.clone(),
            quotes,
            warnings,
        };
        self.cache.put(&key, &self.artifact(corpus, Stage::Quotes, &doc))?;
        Ok(QuotesOutcome {
            quotes: doc.quotes,
            warnings: doc.warnings,
        })
    }
}

fn collect_entries(
    tag: &str,
    value: &Value,
    threads: &[DiscussionThread],
    quotes: &mut Vec<QuoteEntry>,
    warnings: &mut Vec<String>,
) {
    let Some(entries) = value.get("entries").and_then(Value::as_array) else {
        return;
    };
    let mut cursor = 0;
    for entry in entries {
        let quote = entry.get("quote").and_then(Value::as_str).unwrap_or_default().trim();
        let summary = entry.get("summary").and_then(Value::as_str).unwrap_or_default().trim();
        if quote.is_empty() {
            warnings.push(format!("{tag}: dropped entry with empty quote"));
            continue;
        }
        let (source_id, traceable) = resolve_source(quote, threads, &mut cursor);
        if !traceable {
            warnings.push(format!(
                "{tag}: quote not found verbatim in its batch; attributed to {source_id}"
            ));
        }
        quotes.push(QuoteEntry {
            quote: quote.to_string(),
            summary: summary.to_string(),
            source_id,
            traceable,
        });
    }
}

/// Finds the thread a quote came from. Replies list rows in order, so the
/// search starts at the thread that matched the previous entry (`cursor`)
/// and wraps around; this keeps repeated sentences attributed to the row
/// being processed rather than to their first occurrence in the batch.
fn resolve_source(quote: &str, threads: &[DiscussionThread], cursor: &mut usize) -> (String, bool) {
    if let [only] = threads {
        return (only.thread_id.clone(), is_traceable(quote, &only.text));
    }
    let n = threads.len();
    let start = (*cursor).min(n.saturating_sub(1));
    match (0..n).map(|k| (start + k) % n).find(|&i| is_traceable(quote, &threads[i].text)) {
        Some(i) => {
            *cursor = i;
            (threads[i].thread_id.clone(), true)
        }
        None => (threads[start].thread_id.clone(), false),
    }
}
