//! Data-source recommendation over a catalog of community labels.

use std::collections::{HashMap, HashSet};

use futures::stream::{self, StreamExt, TryStreamExt};

use super::{Pipeline, PipelineError};
use crate::prompts::{TemplateBinding, TemplateId};

impl Pipeline {
    /// Asks the model which catalog labels fit `topic`.
    ///
    /// The catalog is sent in chunks of `chunk_size`. Replies are
    /// comma-separated names; names not in the catalog (compared
    /// case-insensitively, ignoring an `r/` prefix) are dropped, duplicates
    /// removed, and first-mention order kept across chunks.
    pub async fn recommend_sources(&self, topic: &str, catalog: &[String]) -> Result<Vec<String>, PipelineError> {
        if catalog.is_empty() {
            return Err(PipelineError::EmptyCatalog);
        }
        let topic = topic.trim();
        if topic.is_empty() {
            return Err(PipelineError::EmptyInput("topic".into()));
        }
        let canonical: HashMap<String, &String> = catalog.iter().map(|l| (l.to_lowercase(), l)).collect();

        let chunk_size = self.config.chunk_size.max(1);
        let requests = catalog
            .chunks(chunk_size)
            .enumerate()
            .map(|(i, chunk)| {
                let binding = TemplateBinding::new()
                    .with("subreddits_chunk", chunk.join(", "))
                    .with("topic", topic);
                let prompt = self.prompts.render(TemplateId::SourceRecommendation, &binding)?;
                Ok(self.request(format!("sources.{i:04}"), None, prompt))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;

        let replies: Vec<String> = stream::iter(requests)
            .map(|req| async move { self.gateway.complete(&req).await.map(|r| r.text) })
            .buffered(self.concurrency())
            .try_collect()
            .await
            .map_err(PipelineError::llm("sources"))?;

        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for reply in replies {
            for name in parse_source_names(&reply) {
                if let Some(label) = canonical.get(&name.to_lowercase()) {
                    if seen.insert(label.to_lowercase()) {
                        out.push((*label).clone());
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Splits a reply into candidate names. A blank reply yields nothing.
pub(crate) fn parse_source_names(reply: &str) -> Vec<String> {
    reply
        .split([',', '\n'])
        .map(|raw| {
            let s = raw.trim().trim_start_matches(['-', '*', '•']).trim();
            let s = s.trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '*' || c == '.');
            let s = s.strip_prefix("r/").or_else(|| s.strip_prefix("/r/")).unwrap_or(s);
            s.trim().to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}
