//! Assignment of each extracted quote to exactly one subtopic code.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::batching::pack_batches;
use super::{JobHandle, Pipeline, PipelineError};
use crate::llm::{JsonReply, JsonSchema};
use crate::model::{CategorizedQuote, QuoteEntry, Subtopic, UNCATEGORIZED_CODE, UNCATEGORIZED_NAME};
use crate::prompts::{TemplateBinding, TemplateId};
use crate::text::{estimate_tokens, normalize_whitespace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingOutcome {
    /// One entry per input quote, in input order.
    pub categorized: Vec<CategorizedQuote>,
    pub warnings: Vec<String>,
}

impl Pipeline {
    /// Maps every quote to one of `subtopics`.
    ///
    /// Reply entries are matched back to input quotes by source id and
    /// whitespace-normalized text. Quotes left without a valid code (missing
    /// from the reply, out-of-range code, or a malformed batch) are retried
    /// once in half-size batches; whatever is still unassigned goes to the
    /// Uncategorized bucket (code 0) with a warning.
    pub async fn map_quotes(
        &self,
        quotes: &[QuoteEntry],
        subtopics: &[Subtopic],
        source_label: &str,
        job: Option<&JobHandle>,
    ) -> Result<MappingOutcome, PipelineError> {
        if subtopics.is_empty() {
            return Err(PipelineError::EmptyInput("no subtopics to map onto".into()));
        }
        let n = subtopics.len() as u32;
        let system = self.prompts.render(
            TemplateId::QuoteMapping,
            &TemplateBinding::new()
                .with("subreddit", source_label)
                .with("code_count", n.to_string()),
        )?;
        let codebook: Vec<String> = subtopics
            .iter()
            .map(|s| format!("{}. {}: {}", s.code, s.name, s.description))
            .collect();
        let codebook = codebook.join("\n");
        let items: Vec<Value> = quotes
            .iter()
            .map(|q| json!({ "quote": q.quote, "source_id": q.source_id }))
            .collect();
        let costs: Vec<usize> = items.iter().map(|v| estimate_tokens(&v.to_string()) + 1).collect();

        let mut assigned: Vec<Option<u32>> = vec![None; quotes.len()];
        let mut warnings = Vec::new();
        let all: Vec<usize> = (0..quotes.len()).collect();
        let budget = self.config.batch_token_budget;

        let pending = self
            .mapping_round(&all, budget, "mapping", &system, &codebook, &items, &costs, quotes, n, &mut assigned, &mut warnings, job)
            .await?;
        if !pending.is_empty() {
            let left = self
                .mapping_round(
                    &pending,
                    (budget / 2).max(1),
                    "mapping.retry",
                    &system,
                    &codebook,
                    &items,
                    &costs,
                    quotes,
                    n,
                    &mut assigned,
                    &mut warnings,
                    job,
                )
                .await?;
            for i in left {
                warnings.push(format!(
                    "quote from {} left uncategorized after retry",
                    quotes[i].source_id
                ));
            }
        }

        let categorized = quotes
            .iter()
            .zip(assigned)
            .map(|(q, code)| {
                let code = code.unwrap_or(UNCATEGORIZED_CODE);
                let code_name = if code == UNCATEGORIZED_CODE {
                    UNCATEGORIZED_NAME.to_string()
                } else {
                    subtopics[code as usize - 1].name.clone()
                };
                CategorizedQuote {
                    quote: q.quote.clone(),
                    source_id: q.source_id.clone(),
                    code,
                    code_name,
                }
            })
            .collect();
        Ok(MappingOutcome { categorized, warnings })
    }

    /// Runs one round of mapping requests over `indices`, returning the
    /// indices still unassigned afterwards.
    #[allow(clippy::too_many_arguments)]
    async fn mapping_round(
        &self,
        indices: &[usize],
        budget: usize,
        tag_prefix: &str,
        system: &str,
        codebook: &str,
        items: &[Value],
        costs: &[usize],
        quotes: &[QuoteEntry],
        n: u32,
        assigned: &mut [Option<u32>],
        warnings: &mut Vec<String>,
        job: Option<&JobHandle>,
    ) -> Result<Vec<usize>, PipelineError> {
        let round_costs: Vec<usize> = indices.iter().map(|&i| costs[i]).collect();
        let batches: Vec<Range<usize>> = pack_batches(&round_costs, budget);
        if let Some(job) = job {
            job.add_total(batches.len() as u64);
        }
        let schema = JsonSchema::categorized_quotes();
        let requests = batches
            .iter()
            .enumerate()
            .map(|(b, range)| {
                let batch_items: Vec<&Value> = indices[range.clone()].iter().map(|&i| &items[i]).collect();
                let user = format!(
                    "Codes:\n{codebook}\n\nQuotes:\n{}",
                    serde_json::to_string_pretty(&batch_items).expect("quotes serialize")
                );
                self.request(format!("{tag_prefix}.{b:04}"), Some(system.to_string()), user)
            })
            .collect();
        let results = self.run_batches(requests, &schema, job).await;

        for ((tag, result), range) in results.into_iter().zip(&batches) {
            let batch = &indices[range.clone()];
            let value = match result {
                Ok(JsonReply::Value(v)) => v,
                Ok(JsonReply::Empty) => {
                    warnings.push(format!("{tag}: empty reply"));
                    continue;
                }
                Err(e) if e.is_output_error() => {
                    warnings.push(format!("{tag}: batch unusable: {e}"));
                    continue;
                }
                Err(e) => return Err(PipelineError::Llm { stage: "mapping", source: e }),
            };
            let entries = value
                .get("categorized_quotes")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            for entry in entries {
                let text = normalize_whitespace(entry.get("quote").and_then(Value::as_str).unwrap_or_default());
                let source = entry.get("source_id").and_then(Value::as_str);
                let Some(&slot) = batch.iter().find(|&&i| {
                    assigned[i].is_none()
                        && normalize_whitespace(&quotes[i].quote) == text
                        && source.is_none_or(|s| s == quotes[i].source_id)
                }) else {
                    warnings.push(format!("{tag}: reply quote not found in batch"));
                    continue;
                };
                let code = entry
                    .get("codes")
                    .and_then(Value::as_array)
                    .and_then(|c| c.first())
                    .and_then(|c| c.get("code"))
                    .and_then(Value::as_i64);
                match code {
                    Some(c) if c >= 1 && c <= n as i64 => assigned[slot] = Some(c as u32),
                    Some(c) => warnings.push(format!(
                        "{tag}: quote from {} assigned out-of-range code {c}",
                        quotes[slot].source_id
                    )),
                    None => warnings.push(format!("{tag}: quote from {} has no code", quotes[slot].source_id)),
                }
            }
        }
        Ok(indices.iter().copied().filter(|&i| assigned[i].is_none()).collect())
    }
}
