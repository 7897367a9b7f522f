//! Deterministic in-process providers for tests and fixture recording.
//!
//! [`ScriptedProvider`] plays a keyword-driven stand-in for a chat model: it
//! reads the same prompts the real model would receive and answers each
//! pipeline stage with well-formed, verbatim-grounded JSON. [`FnProvider`]
//! wraps a closure for edge-case tests (wrong cardinality, bad codes, ...).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use serde_json::{json, Value};

use super::{ChatProvider, LlmResponse, PromptRequest, ProviderError};
use crate::text::estimate_tokens;

/// Scripted codebook: (name, description, keywords, summary of a quote).
pub const SCRIPTED_CODES: [(&str, &str, &[&str], &str); 9] = [
    (
        "Screen time limits",
        "Setting and enforcing daily limits on device use",
        &["screen time", "tablet", "ipad", "hours a day"],
        "Struggles setting screen time limits",
    ),
    (
        "Strangers and online grooming",
        "Unknown adults contacting children through apps and sites",
        &["stranger", "groom", "predator", "messaged my"],
        "Fear of strangers contacting kids online",
    ),
    (
        "Social media age and pressure",
        "When to allow social media and peer pressure to join",
        &["instagram", "tiktok", "snapchat", "social media"],
        "Pressure to allow early social media",
    ),
    (
        "Parental controls and monitoring",
        "Filters, monitoring apps and device supervision settings",
        &["parental control", "monitor", "filter", "family link"],
        "Using parental controls to monitor use",
    ),
    (
        "Cyberbullying and peer harassment",
        "Children targeted by hurtful messages or exclusion online",
        &["bully", "bullied", "harass", "mean comments"],
        "Child targeted by online bullying",
    ),
    (
        "In-app purchases and scams",
        "Unexpected spending and fraud aimed at children",
        &["purchase", "scam", "credit card", "robux", "spent"],
        "Unexpected in-app purchases and scams",
    ),
    (
        "Privacy and oversharing",
        "Personal data, photos and location shared online",
        &["privacy", "photos of", "oversharing", "personal information", "location"],
        "Worries about privacy and oversharing",
    ),
    (
        "Inappropriate content exposure",
        "Violent, explicit or disturbing material reaching children",
        &["inappropriate", "youtube", "violent", "explicit", "disturbing"],
        "Exposure to inappropriate content online",
    ),
    (
        "Gaming and online chat",
        "Risks in multiplayer games and their chat features",
        &["roblox", "minecraft", "fortnite", "gaming", "voice chat", "discord"],
        "Risks in online games and chat",
    ),
];

/// Scripted suggested themes for a parenting corpus.
pub const SCRIPTED_THEMES: [(&str, &str); 9] = [
    ("Screen time and device habits", "how much and when children use screens"),
    ("Internet safety for children", "risks kids face online"),
    ("Sleep routines", "bedtimes, naps and night waking"),
    ("Picky eating", "getting children to eat a varied diet"),
    ("School readiness", "preparing children for starting school"),
    ("Sibling conflict", "fighting and rivalry between siblings"),
    ("Discipline approaches", "consequences, rewards and boundaries"),
    ("Parental burnout", "exhaustion and stress among parents"),
    ("Childcare costs", "paying for daycare and babysitters"),
];

const SYNONYMS: [(&str, &[&str]); 4] = [
    ("climate", &["environment", "sustainability", "renewableenergy"]),
    ("parenting", &["mommit", "daddit", "beyondthebump"]),
    ("internet", &["privacy", "cybersecurity"]),
    ("health", &["fitness", "nutrition"]),
];

/// Index of the first scripted code whose keywords appear in `text`.
pub fn scripted_code_for(text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    SCRIPTED_CODES
        .iter()
        .position(|(_, _, keywords, _)| keywords.iter().any(|k| lower.contains(k)))
}

#[derive(Debug, Default)]
pub struct ScriptedProvider {
    latency: Duration,
    calls: AtomicU64,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a fixed delay to every reply.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// The scripted reply text for `req`.
    pub fn reply(req: &PromptRequest) -> String {
        let system = req.system_text.as_deref().unwrap_or_default();
        match req.stage() {
            "sources" => sources_reply(&req.user_text),
            "themes" => themes_reply(),
            "quotes" => quotes_reply(&req.user_text),
            "subtopics" => codes_reply(requested_codes(system, &req.user_text)),
            "mapping" => mapping_reply(&req.user_text),
            other => format!("unrecognized request stage {other:?}"),
        }
    }
}

#[async_trait]
impl ChatProvider for ScriptedProvider {
    async fn chat(&self, req: &PromptRequest) -> Result<LlmResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        Ok(respond(req, Self::reply(req), self.latency))
    }
}

type ReplyFn = dyn Fn(&PromptRequest) -> Result<String, ProviderError> + Send + Sync;

/// A provider driven by a closure over the request.
pub struct FnProvider {
    f: Box<ReplyFn>,
    calls: AtomicU64,
}

impl FnProvider {
    pub fn new(f: impl Fn(&PromptRequest) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ChatProvider for FnProvider {
    async fn chat(&self, req: &PromptRequest) -> Result<LlmResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(req).map(|text| respond(req, text, Duration::ZERO))
    }
}

fn respond(req: &PromptRequest, text: String, latency: Duration) -> LlmResponse {
    let prompt = req.system_text.as_deref().unwrap_or_default().len() + req.user_text.len();
    LlmResponse {
        prompt_tokens: prompt.div_ceil(4) as u64,
        completion_tokens: estimate_tokens(&text) as u64,
        provider_latency_ms: latency.as_millis() as u64,
        text,
        retry_count: 0,
    }
}

fn sources_reply(user: &str) -> String {
    let chunk = between(user, "Here is a list of subreddits: ", ". Based on the topic '").unwrap_or_default();
    let topic = between(user, "Based on the topic '", "', please").unwrap_or_default().to_lowercase();
    let mut needles: Vec<String> = topic
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() >= 4)
        .map(str::to_string)
        .collect();
    for (word, extra) in SYNONYMS {
        if topic.contains(word) {
            needles.extend(extra.iter().map(|s| s.to_string()));
        }
    }
    let picked: Vec<&str> = chunk
        .split(',')
        .map(str::trim)
        .filter(|label| {
            let l = label.to_lowercase();
            !l.is_empty() && needles.iter().any(|n| l.contains(n.as_str()))
        })
        .collect();
    if picked.is_empty() {
        "\n".into()
    } else {
        picked.join(", ")
    }
}

fn themes_reply() -> String {
    let themes: Vec<Value> = SCRIPTED_THEMES
        .iter()
        .map(|(t, d)| json!({ "title": t, "description": d }))
        .collect();
    json!({ "themes": themes }).to_string()
}

fn sentence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[^.!?\n]+[.!?]?").expect("sentence regex"))
}

fn quotes_reply(user: &str) -> String {
    let mut entries = Vec::new();
    for line in user.lines() {
        if line.starts_with("[row ") || line.trim() == "---" {
            continue;
        }
        for m in sentence_re().find_iter(line) {
            let sentence = m.as_str().trim();
            if sentence.split_whitespace().count() < 4 {
                continue;
            }
            if let Some(code) = scripted_code_for(sentence) {
                entries.push(json!({ "quote": sentence, "summary": SCRIPTED_CODES[code].3 }));
            }
        }
    }
    if entries.is_empty() {
        "null".into()
    } else {
        json!({ "entries": entries }).to_string()
    }
}

fn requested_codes(system: &str, user: &str) -> usize {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?:Identify|Return) exactly (\d+) codes").expect("codes regex"));
    re.captures_iter(user)
        .chain(re.captures_iter(system))
        .filter_map(|c| c[1].parse().ok())
        .next()
        .unwrap_or(SCRIPTED_CODES.len())
}

fn codes_reply(n: usize) -> String {
    let codes: Vec<Value> = (0..n)
        .map(|i| match SCRIPTED_CODES.get(i) {
            Some((name, desc, _, _)) => json!({ "name": name, "description": desc }),
            None => json!({ "name": format!("Other concern {}", i + 1), "description": "Less frequent concerns" }),
        })
        .collect();
    json!({ "codes": codes }).to_string()
}

fn mapping_reply(user: &str) -> String {
    let n = between(user, "Codes:\n", "\n\nQuotes:\n")
        .map(|c| c.lines().count())
        .unwrap_or(SCRIPTED_CODES.len())
        .max(1);
    let items: Vec<Value> = user
        .split_once("\n\nQuotes:\n")
        .and_then(|(_, q)| serde_json::from_str(q).ok())
        .unwrap_or_default();
    let out: Vec<Value> = items
        .iter()
        .map(|item| {
            let quote = item.get("quote").and_then(Value::as_str).unwrap_or_default();
            let code = scripted_code_for(quote).unwrap_or(0) % n + 1;
            let name = SCRIPTED_CODES.get(code - 1).map(|c| c.0).unwrap_or("Other concern");
            json!({
                "quote": quote,
                "source_id": item.get("source_id").cloned().unwrap_or(Value::Null),
                "codes": [{ "code": code, "code_name": name }],
            })
        })
        .collect();
    json!({ "categorized_quotes": out }).to_string()
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = s.find(start)? + start.len();
    let len = s[from..].find(end)?;
    Some(&s[from..from + len])
}
