//! The per-period agent loop: assemble a prompt from market state and
//! memory, query the gateway, parse the templated response, and update the
//! agent's plans/insights for the next period.

mod parse;
mod prompt;

pub use parse::{
    parse_decision, OutputKind, ParsedDecision, HEADER_BID, HEADER_INSIGHTS, HEADER_OBSERVATIONS,
    HEADER_PLANS, HEADER_PRICE,
};
pub use prompt::{
    format_minimal, format_value, render_history, BuiltinPrefix, HistoryWindow, PromptPrefix,
    RoundView, FENCE, HISTORY_CAP,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatBackend, ChatRequest, GatewayError, ReasoningEffort};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("completion does not follow the template: {reason}")]
    Format { reason: String },
    #[error("run aborted: {attempts} consecutive format failures (last: {last})")]
    RunAbort { attempts: usize, last: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid agent state: {0}")]
    InvalidState(String),
}

/// What the agent prices: either a product (with the ceiling shown in the
/// prompt) or a common-value auction item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProductInfo {
    Pricing { unit_cost: f64, ceiling: f64 },
    Auction { item_value: f64 },
}

impl ProductInfo {
    pub fn output_kind(&self) -> OutputKind {
        match self {
            ProductInfo::Pricing { .. } => OutputKind::Pricing,
            ProductInfo::Auction { .. } => OutputKind::Auction,
        }
    }
}

/// Which memory files are erased between periods (never within a period).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryMode {
    #[default]
    Full,
    NoPlans,
    NoInsights,
    NoMemory,
}

/// Where the prompt prefix goes: concatenated into the user message (the
/// core pricing experiments) or as the system prompt (auction and
/// newer-model configurations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptPlacement {
    #[default]
    UserConcatenated,
    System,
}

/// Everything an agent carries between periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub prefix: PromptPrefix,
    pub plans: String,
    pub insights: String,
    pub product: ProductInfo,
    pub memory_mode: MemoryMode,
    pub placement: PromptPlacement,
}

impl AgentState {
    pub fn new(prefix: PromptPrefix, product: ProductInfo) -> Self {
        Self {
            prefix,
            plans: String::new(),
            insights: String::new(),
            product,
            memory_mode: MemoryMode::Full,
            placement: PromptPlacement::UserConcatenated,
        }
    }

    /// Apply the decision's new memory content, with the memory-mode
    /// erasures that happen between periods.
    pub fn apply_memory(&mut self, decision: &ParsedDecision) {
        let (keep_plans, keep_insights) = match self.memory_mode {
            MemoryMode::Full => (true, true),
            MemoryMode::NoPlans => (false, true),
            MemoryMode::NoInsights => (true, false),
            MemoryMode::NoMemory => (false, false),
        };
        self.plans = if keep_plans {
            decision.new_plans.clone()
        } else {
            String::new()
        };
        self.insights = if keep_insights {
            decision.new_insights.clone()
        } else {
            String::new()
        };
    }
}

/// Service parameters attached to every assembled request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_output: u32,
    pub reasoning_effort: Option<ReasoningEffort>,
}

impl Default for ChatSettings {
    fn default() -> Self {
        Self {
            model_id: "gpt-4-0613".into(),
            temperature: 1.0,
            max_output: 2048,
            reasoning_effort: None,
        }
    }
}

/// Fill the pricing or auction template for one period. Identical state and
/// window produce byte-identical prompt text.
pub fn assemble_prompt(
    state: &AgentState,
    window: &HistoryWindow,
    settings: &ChatSettings,
) -> ChatRequest {
    let template = prompt::output_template(state.product.output_kind().value_header());
    let body = format!("{}\n\n{template}", info_and_data(state, window));
    finish_request(state, body, settings)
}

fn info_and_data(state: &AgentState, window: &HistoryWindow) -> String {
    let data = render_history(window);
    match &state.product {
        ProductInfo::Pricing { unit_cost, ceiling } => prompt::pricing_body(
            &format_minimal(*unit_cost),
            &format_minimal(*ceiling),
            &state.plans,
            &state.insights,
            &data,
        ),
        ProductInfo::Auction { item_value } => prompt::auction_body(
            &format_value(*item_value),
            &state.plans,
            &state.insights,
            &data,
        ),
    }
}

fn finish_request(state: &AgentState, body: String, settings: &ChatSettings) -> ChatRequest {
    let (system_text, user_text) = match state.placement {
        PromptPlacement::UserConcatenated => (None, format!("{}\n\n{body}", state.prefix.text)),
        PromptPlacement::System => (Some(state.prefix.text.clone()), body),
    };
    ChatRequest {
        system_text,
        user_text,
        model_id: settings.model_id.clone(),
        temperature: settings.temperature,
        max_output: settings.max_output,
        reasoning_effort: settings.reasoning_effort,
    }
}

/// Outcome of one `decide` call: the parsed decision, how many format
/// retries it took, and the exact request that was sent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutcome {
    pub decision: ParsedDecision,
    pub retries: usize,
    pub request: ChatRequest,
}

pub const DEFAULT_RETRY_LIMIT: usize = 10;

/// Assemble, query, parse; re-query on malformed output up to `retry_limit`
/// attempts in total, then abort the run. On success the agent's memory is
/// overwritten according to its memory mode. Values are never clamped;
/// out-of-range decisions pass through for the caller to flag.
pub fn decide(
    state: &mut AgentState,
    window: &HistoryWindow,
    backend: &dyn ChatBackend,
    settings: &ChatSettings,
    retry_limit: usize,
) -> Result<DecisionOutcome, AgentError> {
    let request = assemble_prompt(state, window, settings);
    let kind = state.product.output_kind();
    let mut last_error = String::new();
    for attempt in 0..retry_limit.max(1) {
        let response = backend.chat(&request)?;
        match parse_decision(&response.text, kind) {
            Ok(decision) => {
                state.apply_memory(&decision);
                return Ok(DecisionOutcome {
                    decision,
                    retries: attempt,
                    request,
                });
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(AgentError::RunAbort {
        attempts: retry_limit.max(1),
        last: last_error,
    })
}

/// One-shot probe: the output-template instruction is replaced by a plain
/// question, asked `samples` times at the configured temperature against a
/// fresh agent (empty history, plans and insights).
pub fn ask_one_shot(
    state: &AgentState,
    question: &str,
    backend: &dyn ChatBackend,
    settings: &ChatSettings,
    samples: usize,
) -> Result<Vec<String>, AgentError> {
    if !state.plans.is_empty() || !state.insights.is_empty() {
        return Err(AgentError::InvalidState(
            "one-shot questions require a fresh agent (empty plans/insights)".into(),
        ));
    }
    let window = match state.product {
        ProductInfo::Auction { .. } => HistoryWindow::empty_auction(),
        ProductInfo::Pricing { .. } => HistoryWindow::empty_pricing(true),
    };
    let body = format!("{}\n\n{question}", info_and_data(state, &window));
    let request = finish_request(state, body, settings);
    (0..samples)
        .map(|_| Ok(backend.chat(&request)?.text))
        .collect()
}

/// Golden-fixture states: the exact agent states and history windows whose
/// assembled prompts are pinned by the files under `fixtures/prompts/`.
pub mod goldens {
    use super::*;

    pub struct GoldenCase {
        /// Path of the expected prompt text, relative to the fixtures root.
        pub user_file: &'static str,
        /// Expected system text file, when the prefix is placed as a system
        /// prompt.
        pub system_file: Option<&'static str>,
        pub state: AgentState,
        pub window: HistoryWindow,
    }

    /// Period-2 pricing prompt: one observed round, competitor-aware prefix.
    pub fn pricing_period2() -> GoldenCase {
        let mut state = AgentState::new(
            PromptPrefix::competitor_aware(),
            ProductInfo::Pricing {
                unit_cost: 1.0,
                ceiling: 4.51,
            },
        );
        state.plans = "Considering we have no data to begin with, it may be beneficial to start with a loss leader strategy, with a price slightly above production cost - say $1.5. This will allow us to potentially attract a lot of customers and gather data on how many units we sell at this price. Depending on product sold and consequently the profit margins, we could subsequently increase the price incrementally to assess how it affects sales.".into();
        state.insights = "At present, no data-derived insights on pricing are available. A proposed approach is to start by setting a price slightly above cost in a competitive context to gather sales data, then proceed with incremental price increases as the data dictates, always keeping in mind the upper limit that customers are willing to pay.".into();
        let rounds = vec![RoundView::pricing(1, 1.5, Some(2.76), 87.58, 43.79)];
        GoldenCase {
            user_file: "prompts/pricing_period2.txt",
            system_file: None,
            state,
            window: HistoryWindow::from_chronological(&rounds, true, false),
        }
    }

    /// Period-10 pricing prompt: nine observed rounds.
    pub fn pricing_period10() -> GoldenCase {
        let mut state = AgentState::new(
            PromptPrefix::competitor_aware(),
            ProductInfo::Pricing {
                unit_cost: 1.0,
                ceiling: 4.51,
            },
        );
        state.plans = "We shall continue to price our product slightly under the competitor, maintaining a balance that lies within $0.25-$0.5 from the competitor's price for an optimal blend of competitiveness and profitability. Coast for a few rounds to gather data on customer response.".into();
        state.insights = "Setting the price slightly below the competitor\u{2019}s yields the highest profits. However, we should not drop our prices extremely low, as it can decrease profitability. The ideal pricing seems to be around $0.25-$0.5 below the competitor's price.".into();
        let rounds = vec![
            RoundView::pricing(1, 1.5, Some(3.75), 88.07, 44.04),
            RoundView::pricing(2, 2.0, Some(1.75), 21.19, 21.19),
            RoundView::pricing(3, 2.5, Some(2.25), 9.0, 13.5),
            RoundView::pricing(4, 1.75, Some(2.5), 70.54, 52.9),
            RoundView::pricing(5, 1.65, Some(2.25), 74.78, 48.6),
            RoundView::pricing(6, 2.15, Some(2.0), 21.53, 24.76),
            RoundView::pricing(7, 1.95, Some(1.9), 32.89, 31.25),
            RoundView::pricing(8, 1.85, Some(1.85), 39.23, 33.35),
            RoundView::pricing(9, 1.8, Some(1.8), 40.83, 32.66),
        ];
        GoldenCase {
            user_file: "prompts/pricing_period10.txt",
            system_file: None,
            state,
            window: HistoryWindow::from_chronological(&rounds, true, false),
        }
    }

    /// Period-3 auction prompt: A1 prefix as system text, two observed rounds.
    pub fn auction_period3() -> GoldenCase {
        let mut state = AgentState::new(
            PromptPrefix::builtin(BuiltinPrefix::A1),
            ProductInfo::Auction { item_value: 1.0 },
        );
        state.placement = PromptPlacement::System;
        state.plans = "Given that the competition appears to be low, a bid significantly lower than the item's value will be tested for round 2. This is expected to increase potential profit. Additionally, keep an eye out for any significant increase in the competitive bid, indicated by the \"bid that would have sufficed to win\" value.".into();
        state.insights = "The competition in round 1 was low, with the winning bid being significantly less than what was actually bid. This suggests potential for generating profit by bidding significantly lower in future rounds, provided competition remains similarly low. This will be tested in round 2.".into();
        let rounds = vec![
            RoundView {
                period: 1,
                own_value: 0.9,
                competitor_value: None,
                quantity: None,
                profit: 0.1,
                won: Some(true),
                winning_bid: None,
                sufficient_bid: Some(0.3),
                payment: Some(0.9),
            },
            RoundView {
                period: 2,
                own_value: 0.4,
                competitor_value: None,
                quantity: None,
                profit: 0.0,
                won: Some(false),
                winning_bid: Some(0.5),
                sufficient_bid: None,
                payment: None,
            },
        ];
        GoldenCase {
            user_file: "prompts/auction_period3_user.txt",
            system_file: Some("prompts/auction_period3_system.txt"),
            state,
            window: HistoryWindow::from_chronological(&rounds, false, true),
        }
    }

    pub fn all() -> Vec<GoldenCase> {
        vec![pricing_period2(), pricing_period10(), auction_period3()]
    }
}
