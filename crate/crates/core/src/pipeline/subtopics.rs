//! Subtopic (code) identification over aggregated quote summaries.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::batching::pack_batches;
use super::{JobHandle, Pipeline, PipelineError};
use crate::llm::{JsonReply, JsonSchema, PromptRequest};
use crate::model::{QuoteEntry, Subtopic};
use crate::prompts::{TemplateBinding, TemplateId};
use crate::text::estimate_tokens;

/// Code count the coding template asks for on its own.
const TEMPLATE_CODE_COUNT: u32 = 9;

pub(crate) const CONSOLIDATE_PREAMBLE: &str =
    "Codes identified in separate groups of summaries. Merge them into a single list of the most prevalent codes:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtopicsOutcome {
    pub subtopics: Vec<Subtopic>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
struct RawCode {
    name: String,
    description: String,
}

impl Pipeline {
    /// Codes the quote summaries into exactly `code_count` subtopics.
    ///
    /// When all summaries fit in one batch a single request is made.
    /// Otherwise each group of summaries is coded separately and a final
    /// request consolidates the group codes. The final list must have
    /// `code_count` distinct, non-empty names; one corrective retry is made
    /// before giving up with `WrongCardinality`.
    pub async fn identify_subtopics(
        &self,
        quotes: &[QuoteEntry],
        source_label: &str,
        job: Option<&JobHandle>,
    ) -> Result<SubtopicsOutcome, PipelineError> {
        if quotes.is_empty() {
            return Err(PipelineError::EmptyInput("no quotes to code".into()));
        }
        let expected = self.config.code_count as usize;
        let mut system = self.prompts.render(
            TemplateId::SubtopicAnalysis,
            &TemplateBinding::new().with("subreddit", source_label),
        )?;
        if self.config.code_count != TEMPLATE_CODE_COUNT {
            system.push_str(&format!("\n\nIdentify exactly {expected} codes."));
        }

        let lines: Vec<String> = quotes
            .iter()
            .map(|q| {
                let s = if q.summary.trim().is_empty() { &q.quote } else { &q.summary };
                format!("- {}", s.trim())
            })
            .collect();
        let costs: Vec<usize> = lines.iter().map(|l| estimate_tokens(l) + 1).collect();
        let groups = pack_batches(&costs, self.config.batch_token_budget);
        let mut warnings = Vec::new();

        let final_user = if groups.len() <= 1 {
            if let Some(job) = job {
                job.add_total(1);
            }
            format!("Summaries:\n{}", lines.join("\n"))
        } else {
            if let Some(job) = job {
                job.add_total(groups.len() as u64 + 1);
            }
            let schema = JsonSchema::codes();
            let requests = groups
                .iter()
                .enumerate()
                .map(|(i, range)| {
                    self.request(
                        format!("subtopics.group.{i:04}"),
                        Some(system.clone()),
                        format!("Summaries:\n{}", lines[range.clone()].join("\n")),
                    )
                })
                .collect();
            let results = self.run_batches(requests, &schema, job).await;
            let mut merged = Vec::new();
            for (tag, r) in results {
                match r {
                    Ok(JsonReply::Value(v)) => merged.extend(codes_from_value(&v)),
                    Ok(JsonReply::Empty) => {}
                    Err(e) if e.is_output_error() => warnings.push(format!("{tag}: group skipped: {e}")),
                    Err(e) => return Err(PipelineError::Llm { stage: "subtopics", source: e }),
                }
            }
            if merged.is_empty() {
                return Err(PipelineError::WrongCardinality {
                    stage: "subtopics",
                    expected,
                    got: 0,
                    detail: "no group produced any codes".into(),
                });
            }
            let listed: Vec<String> = merged.iter().map(|c| format!("- {}: {}", c.name, c.description)).collect();
            format!("{CONSOLIDATE_PREAMBLE}\n{}", listed.join("\n"))
        };

        let tag = if groups.len() <= 1 { "subtopics.0000" } else { "subtopics.consolidate" };
        let first = self.request(tag.into(), Some(system.clone()), final_user.clone());
        let mut codes = self.ask_codes(&first).await?;
        if let Err(problem) = check_codes(&codes, expected) {
            warnings.push(format!("{tag}: {problem}; retrying"));
            let retry = self.request(
                format!("{tag}.retry"),
                Some(system),
                format!("{final_user}\n\nReturn exactly {expected} codes with distinct, non-empty names."),
            );
            codes = self.ask_codes(&retry).await?;
            if let Err(problem) = check_codes(&codes, expected) {
                return Err(PipelineError::WrongCardinality {
                    stage: "subtopics",
                    expected,
                    got: codes.len(),
                    detail: problem,
                });
            }
        }
        if let Some(job) = job {
            job.tick();
        }

        let subtopics = codes
            .into_iter()
            .enumerate()
            .map(|(i, c)| Subtopic {
                code: i as u32 + 1,
                name: c.name,
                description: c.description,
            })
            .collect();
        Ok(SubtopicsOutcome { subtopics, warnings })
    }

    async fn ask_codes(&self, req: &PromptRequest) -> Result<Vec<RawCode>, PipelineError> {
        match self
            .gateway
            .complete_json(req, &JsonSchema::codes())
            .await
            .map_err(PipelineError::llm("subtopics"))?
        {
            JsonReply::Empty => Ok(vec![]),
            JsonReply::Value(v) => Ok(codes_from_value(&v)),
        }
    }
}

fn codes_from_value(v: &Value) -> Vec<RawCode> {
    v.get("codes")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .map(|c| RawCode {
                    name: c.get("name").and_then(Value::as_str).unwrap_or_default().trim().to_string(),
                    description: c
                        .get("description")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .trim()
                        .to_string(),
                })
                .collect()
        })
        .unwrap_or_default()
}

fn check_codes(codes: &[RawCode], expected: usize) -> Result<(), String> {
    if codes.len() != expected {
        return Err(format!("expected {expected} codes, got {}", codes.len()));
    }
    if codes.iter().any(|c| c.name.is_empty()) {
        return Err("a code has an empty name".into());
    }
    let mut seen = HashSet::new();
    for c in codes {
        if !seen.insert(c.name.to_lowercase()) {
            return Err(format!("duplicate code name {:?}", c.name));
        }
    }
    Ok(())
}
