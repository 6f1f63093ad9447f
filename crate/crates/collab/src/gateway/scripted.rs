//! Deterministic scripted chat backends.
//!
//! Scripted strategies read the same prompts a live model would receive,
//! scrape the fenced PLANS block and the most recent round of market data
//! out of the prompt text, and reply with a template-conforming completion.
//! Given identical prompt text and seed the reply is identical, which makes
//! them usable as offline oracles for the whole run pipeline.

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};
use crate::equilibrium::{self, SolverConfig};
use crate::market::{round2, MarketParams};

const FENCE: &str = "+++++++++++++++++++++";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScriptedStrategy {
    /// Always answer with the same value.
    FixedPrice { price: f64 },
    /// Best-respond to the competitor's most recent price (or to the outside
    /// option alone when no competitor appears in the data).
    MyopicBestResponse {
        params: MarketParams,
        firm: usize,
        #[serde(default)]
        start_price: Option<f64>,
    },
    /// Match the competitor's last price, clamped into `[low, high]`.
    TitForTatBand { low: f64, high: f64, start: f64 },
    /// Repeat the previous own value, shifted by a directive found in the
    /// PLANS block: `RAISE+x`, `DROP-x`, or `SET=x`.
    PlanEcho { start_price: f64 },
}

/// Offline stand-in for a chat service. Stateless between calls: everything
/// it needs is re-derived from the prompt text, so one instance can serve
/// any number of concurrent runs.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    pub strategy: ScriptedStrategy,
    pub seed: u64,
}

impl ScriptedBackend {
    pub fn new(strategy: ScriptedStrategy, seed: u64) -> Self {
        Self { strategy, seed }
    }

    fn choose_value(&self, prompt: &str) -> f64 {
        let auction = prompt.contains("My chosen bid:");
        let own_label = if auction {
            "- My bid: "
        } else {
            "- My price: "
        };
        let data_marker = if auction {
            "Filename: AUCTION_DATA (read-only)"
        } else {
            "Filename: MARKET_DATA (read-only)"
        };
        let data = fenced_after(prompt, data_marker).unwrap_or("");
        let own_last = scrape_value(data, own_label);
        let opp_last = scrape_value(data, "- Competitor's price: ");
        match &self.strategy {
            ScriptedStrategy::FixedPrice { price } => *price,
            ScriptedStrategy::MyopicBestResponse {
                params,
                firm,
                start_price,
            } => {
                let cfg = SolverConfig::for_params(params);
                if params.n_firms() == 1 {
                    return equilibrium::single_monopoly_price(params, 0, &cfg)
                        .map_or(params.marginal_cost(0), |p| p);
                }
                match opp_last {
                    Some(opp) => {
                        let prices = vec![opp; params.n_firms()];
                        equilibrium::best_response(&prices, *firm, params, &cfg)
                            .map_or(opp, |r| r.price)
                    }
                    None => start_price.unwrap_or(params.marginal_cost(*firm) + 0.5 * params.alpha),
                }
            }
            ScriptedStrategy::TitForTatBand { low, high, start } => {
                opp_last.map_or(*start, |opp| opp.clamp(*low, *high))
            }
            ScriptedStrategy::PlanEcho { start_price } => {
                let prev = own_last.unwrap_or(*start_price);
                let plans = fenced_after(prompt, "Filename: PLANS.txt").unwrap_or("");
                if let Some(x) = directive(plans, "RAISE+") {
                    prev + x
                } else if let Some(x) = directive(plans, "DROP-") {
                    prev - x
                } else if let Some(x) = directive(plans, "SET=") {
                    x
                } else {
                    prev
                }
            }
        }
    }

    fn template_reply(&self, prompt: &str) -> String {
        let auction = prompt.contains("My chosen bid:");
        let value = round2(self.choose_value(prompt));
        let (obs, plans, insights) = match &self.strategy {
            ScriptedStrategy::FixedPrice { .. } => (
                "The configured value remains appropriate.",
                "Hold the current level.",
                "Stable play keeps the series comparable.",
            ),
            ScriptedStrategy::MyopicBestResponse { .. } => (
                "Responding to the most recent competing value.",
                "Best-respond to the latest observation.",
                "Single-period optimization against the last observation.",
            ),
            ScriptedStrategy::TitForTatBand { .. } => (
                "Matching the competitor within the configured band.",
                "Mirror the competitor, clamped to the band.",
                "Matching discourages unilateral moves.",
            ),
            ScriptedStrategy::PlanEcho { .. } => (
                "Following the written plan.",
                "HOLD",
                "The plan file drives the decision.",
            ),
        };
        let value_header = if auction {
            "My chosen bid:"
        } else {
            "My chosen price:"
        };
        format!(
            "My observations and thoughts:\n{obs}\n\nNew content for PLANS.txt:\n{plans}\n\n\
             New content for INSIGHTS.txt:\n{insights}\n\n{value_header}\n{value:.2}"
        )
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let prompt = match &request.system_text {
            Some(system) => format!("{system}\n\n{}", request.user_text),
            None => request.user_text.clone(),
        };
        // Summarization requests get a counting placeholder; other prompts
        // without the output template are one-shot probe questions.
        let text = if prompt.contains("fill in the following template") {
            self.template_reply(&prompt)
        } else if prompt.contains("Output a 4-word summary") {
            let n = request
                .user_text
                .lines()
                .filter(|l| l.starts_with("- "))
                .count();
            format!("[summary of {n} sentences]")
        } else {
            "Yes".to_string()
        };
        let usage = Usage {
            prompt_tokens: (prompt.len() / 4) as u64,
            completion_tokens: (text.len() / 4) as u64,
        };
        Ok(ChatResponse {
            text,
            usage,
            latency: std::time::Duration::ZERO,
        })
    }
}

/// Content of the fenced block following `marker`, trimmed.
fn fenced_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    let after = &prompt[prompt.find(marker)? + marker.len()..];
    let open = after.find(FENCE)? + FENCE.len();
    let body = &after[open..];
    let close = body.find(FENCE)?;
    Some(body[..close].trim())
}

/// First number following `label` (the data renders most recent round first).
fn scrape_value(section: &str, label: &str) -> Option<f64> {
    let after = &section[section.find(label)? + label.len()..];
    let line = after.lines().next()?;
    line.trim().parse().ok()
}

fn directive(plans: &str, prefix: &str) -> Option<f64> {
    let after = &plans[plans.find(prefix)? + prefix.len()..];
    let token: String = after
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    token.parse().ok()
}
