//! Monetary estimates from recorded token usage.
//!
//! Amounts are kept as integer nano-dollars so per-stage rows sum to the
//! total exactly; conversion to dollars happens only for display.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fixtures::FixtureRecord;
use super::gateway::UsageReport;

const NANOS_PER_DOLLAR: f64 = 1e9;

/// Per-token prices in nano-dollars (one dollar per million tokens is 1,000
/// nano-dollars per token).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_nanos_per_token: u64,
    pub output_nanos_per_token: u64,
}

impl PriceTable {
    /// Launch list prices of the 8k-context GPT-4 model: $30 / $60 per 1M
    /// input / output tokens.
    pub const GPT4_8K: PriceTable = PriceTable::per_million_millis(30_000, 60_000);

    /// Prices given in thousandths of a dollar per million tokens.
    pub const fn per_million_millis(input: u64, output: u64) -> Self {
        Self {
            input_nanos_per_token: input,
            output_nanos_per_token: output,
        }
    }

    pub fn cost_nanos(&self, prompt_tokens: u64, completion_tokens: u64) -> u64 {
        prompt_tokens * self.input_nanos_per_token + completion_tokens * self.output_nanos_per_token
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCost {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_nanos: u64,
}

impl StageCost {
    pub fn usd(&self) -> f64 {
        self.cost_nanos as f64 / NANOS_PER_DOLLAR
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub stages: BTreeMap<String, StageCost>,
    pub total_nanos: u64,
}

impl CostEstimate {
    pub fn total_usd(&self) -> f64 {
        self.total_nanos as f64 / NANOS_PER_DOLLAR
    }
}

/// Per-stage and total cost; the total is the sum of the stage rows.
pub fn estimate_cost(usage: &UsageReport, prices: &PriceTable) -> CostEstimate {
    let stages: BTreeMap<String, StageCost> = usage
        .stages
        .iter()
        .map(|(name, u)| {
            (
                name.clone(),
                StageCost {
                    calls: u.calls,
                    prompt_tokens: u.prompt_tokens,
                    completion_tokens: u.completion_tokens,
                    cost_nanos: prices.cost_nanos(u.prompt_tokens, u.completion_tokens),
                },
            )
        })
        .collect();
    let total_nanos = stages.values().map(|s| s.cost_nanos).sum();
    CostEstimate { stages, total_nanos }
}

/// Token usage per stage as captured in recorded fixtures.
pub fn usage_from_records(records: &[FixtureRecord]) -> UsageReport {
    let mut usage = UsageReport::default();
    for r in records {
        usage.record(r.request.stage(), &r.response);
    }
    usage
}
