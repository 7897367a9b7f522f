//! Suggested research themes for a dataset.

use serde_json::Value;

use super::{render_row, row_costs, Pipeline, PipelineError, THEME_COUNT};
use crate::artifact::{Stage, ThemesDoc};
use crate::corpus::Corpus;
use crate::llm::{JsonReply, JsonSchema};
use crate::model::Theme;
use crate::prompts::{TemplateBinding, TemplateId};

impl Pipeline {
    /// Proposes exactly nine themes for `corpus`, serving repeat requests
    /// from the cache.
    pub async fn generate_themes(&self, corpus: &Corpus) -> Result<Vec<Theme>, PipelineError> {
        let key = self.key(corpus, Stage::Themes, None);
        if let Some(hit) = self.cached(&key) {
            let doc: ThemesDoc = hit.decode().map_err(PipelineError::Artifact)?;
            if doc.suggested.len() == THEME_COUNT {
                return Ok(doc.suggested);
            }
        }
        if corpus.is_empty() {
            return Err(PipelineError::EmptyInput("dataset has no threads".into()));
        }

        let system = self.prompts.render(
            TemplateId::ThemeGeneration,
            &TemplateBinding::new().with("subreddit", &corpus.source_label),
        )?;
        let user = sample_rows(corpus, self.config.batch_token_budget);
        let schema = JsonSchema::themes();

        let first = self.request("themes.0000".into(), Some(system.clone()), user.clone());
        let mut themes = self.ask_themes(&first, &schema).await?;
        if themes.len() != THEME_COUNT {
            let corrective = format!(
                "{user}\n\nReturn exactly {THEME_COUNT} themes, each with a non-empty title and a brief description."
            );
            let retry = self.request("themes.retry".into(), Some(system), corrective);
            themes = self.ask_themes(&retry, &schema).await?;
        }
        if themes.len() != THEME_COUNT {
            return Err(PipelineError::WrongCardinality {
                stage: "themes",
                expected: THEME_COUNT,
                got: themes.len(),
                detail: "after one corrective retry".into(),
            });
        }

        let doc = ThemesDoc {
            suggested: themes.clone(),
            selected: None,
        };
        self.cache.put(&key, &self.artifact(corpus, Stage::Themes, &doc))?;
        Ok(themes)
    }

    async fn ask_themes(
        &self,
        req: &crate::llm::PromptRequest,
        schema: &JsonSchema,
    ) -> Result<Vec<Theme>, PipelineError> {
        match self
            .gateway
            .complete_json(req, schema)
            .await
            .map_err(PipelineError::llm("themes"))?
        {
            JsonReply::Empty => Ok(vec![]),
            JsonReply::Value(v) => Ok(themes_from_value(&v)),
        }
    }

    /// Previously generated suggestions for `corpus`, if cached.
    pub fn cached_themes(&self, corpus: &Corpus) -> Option<Vec<Theme>> {
        let hit = self.cached(&self.key(corpus, Stage::Themes, None))?;
        hit.decode::<ThemesDoc>().ok().map(|d| d.suggested)
    }
}

fn themes_from_value(v: &Value) -> Vec<Theme> {
    let items = match v {
        Value::Array(items) => items,
        Value::Object(map) => match map.get("themes") {
            Some(Value::Array(items)) => items,
            _ => return vec![],
        },
        _ => return vec![],
    };
    items
        .iter()
        .filter_map(|item| {
            let title = item.get("title")?.as_str()?.trim();
            if title.is_empty() {
                return None;
            }
            let description = item.get("description").and_then(Value::as_str).unwrap_or_default().trim();
            Some(Theme::suggested(title, description))
        })
        .collect()
}

/// Leading rows of the corpus that fit in `budget` (always at least one).
fn sample_rows(corpus: &Corpus, budget: usize) -> String {
    let rows: Vec<String> = corpus.threads.iter().enumerate().map(|(i, t)| render_row(i, t)).collect();
    let costs = row_costs(&rows);
    let mut used = 0;
    let mut take = 0;
    for c in &costs {
        if take > 0 && used + c > budget {
            break;
        }
        used += c;
        take += 1;
    }
    rows[..take].join("\n\n")
}

/// Picks the theme to analyze: a suggested theme whose title matches
/// (case- and whitespace-insensitively) unless a description is supplied,
/// otherwise a user-defined theme.
pub fn select_theme(suggested: &[Theme], title: &str, description: Option<&str>) -> Theme {
    let wanted = Theme::user_defined(title.trim(), description.unwrap_or_default().trim());
    if description.is_none() {
        if let Some(hit) = suggested.iter().find(|t| t.normalized_title() == wanted.normalized_title()) {
            return hit.clone();
        }
    }
    wanted
}
