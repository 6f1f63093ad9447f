//! Prompt prefixes, number formatting, history rendering, and prompt
//! assembly.
//!
//! The assembled texts are pinned byte-for-byte by golden files under
//! `fixtures/prompts/`; run `collab validate-prompts` or the
//! `prompt_goldens` test target to check them.

use serde::{Deserialize, Serialize};

use crate::market::round2;

/// The 21-plus fence delimiting file contents inside prompts.
pub const FENCE: &str = "+++++++++++++++++++++";

/// Built-in prompt prefixes, shipped as versioned resource files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuiltinPrefix {
    P0,
    P1,
    P2,
    P3,
    P1C,
    P2C,
    A0,
    A1,
    A2,
}

impl BuiltinPrefix {
    pub fn id(self) -> &'static str {
        match self {
            BuiltinPrefix::P0 => "P0",
            BuiltinPrefix::P1 => "P1",
            BuiltinPrefix::P2 => "P2",
            BuiltinPrefix::P3 => "P3",
            BuiltinPrefix::P1C => "P1C",
            BuiltinPrefix::P2C => "P2C",
            BuiltinPrefix::A0 => "A0",
            BuiltinPrefix::A1 => "A1",
            BuiltinPrefix::A2 => "A2",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            BuiltinPrefix::P0 => include_str!("../../fixtures/prefixes/p0.txt"),
            BuiltinPrefix::P1 => include_str!("../../fixtures/prefixes/p1.txt"),
            BuiltinPrefix::P2 => include_str!("../../fixtures/prefixes/p2.txt"),
            BuiltinPrefix::P3 => include_str!("../../fixtures/prefixes/p3.txt"),
            BuiltinPrefix::P1C => include_str!("../../fixtures/prefixes/p1c.txt"),
            BuiltinPrefix::P2C => include_str!("../../fixtures/prefixes/p2c.txt"),
            BuiltinPrefix::A0 => include_str!("../../fixtures/prefixes/a0.txt"),
            BuiltinPrefix::A1 => include_str!("../../fixtures/prefixes/a1.txt"),
            BuiltinPrefix::A2 => include_str!("../../fixtures/prefixes/a2.txt"),
        }
    }
}

/// Opening instruction block of every prompt. Built-in ids resolve to the
/// shipped resource texts; arbitrary custom prefixes are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPrefix {
    pub id: String,
    pub text: String,
}

impl PromptPrefix {
    pub fn builtin(which: BuiltinPrefix) -> Self {
        Self {
            id: which.id().to_string(),
            text: which.text().to_string(),
        }
    }

    pub fn custom(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }

    /// The exploration prefix that additionally tells the agent to watch the
    /// competitor; this is the variant the pricing golden prompts use.
    pub fn competitor_aware() -> Self {
        Self::custom(
            "P2_COMPETITOR_AWARE",
            include_str!("../../fixtures/prefixes/p2_competitor_aware.txt"),
        )
    }

    /// Resolve a prefix name from configuration; `custom:<text>` passes the
    /// text through verbatim.
    pub fn resolve(name: &str) -> Option<Self> {
        if let Some(text) = name.strip_prefix("custom:") {
            return Some(Self::custom("custom", text));
        }
        let builtin = match name.to_ascii_uppercase().as_str() {
            "P0" => BuiltinPrefix::P0,
            "P1" => BuiltinPrefix::P1,
            "P2" => BuiltinPrefix::P2,
            "P3" => BuiltinPrefix::P3,
            "P1C" | "P1+C" => BuiltinPrefix::P1C,
            "P2C" | "P2+C" => BuiltinPrefix::P2C,
            "A0" => BuiltinPrefix::A0,
            "A1" => BuiltinPrefix::A1,
            "A2" => BuiltinPrefix::A2,
            "P2_COMPETITOR_AWARE" => return Some(Self::competitor_aware()),
            _ => return None,
        };
        Some(Self::builtin(builtin))
    }
}

/// Format a value the way agents see numbers: rounded to two decimals,
/// trailing zero trimmed, always keeping at least one decimal digit
/// ("1.8", "2.0", "0.0", "87.58").
pub fn format_value(x: f64) -> String {
    let r = round2(x) + 0.0; // normalize -0
    let mut s = format!("{r:.2}");
    if s.ends_with('0') {
        s.pop();
    }
    s
}

/// Minimal display form used for costs and ceilings: whole numbers lose the
/// decimal point entirely ("1", "3.2", "4.51").
pub fn format_minimal(x: f64) -> String {
    let r = round2(x) + 0.0;
    if r == r.trunc() {
        return format!("{r:.0}");
    }
    let mut s = format!("{r:.2}");
    if s.ends_with('0') {
        s.pop();
    }
    s
}

/// One rendered round of history, already reduced to what this agent saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub period: usize,
    pub own_value: f64,
    pub competitor_value: Option<f64>,
    pub quantity: Option<f64>,
    pub profit: f64,
    pub won: Option<bool>,
    pub winning_bid: Option<f64>,
    pub sufficient_bid: Option<f64>,
    pub payment: Option<f64>,
}

impl RoundView {
    pub fn pricing(period: usize, own: f64, competitor: Option<f64>, q: f64, profit: f64) -> Self {
        Self {
            period,
            own_value: own,
            competitor_value: competitor,
            quantity: Some(q),
            profit,
            won: None,
            winning_bid: None,
            sufficient_bid: None,
            payment: None,
        }
    }
}

/// The (at most 100) most recent rounds for one agent, most recent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub rounds: Vec<RoundView>,
    pub include_competitor: bool,
    pub auction_mode: bool,
}

pub const HISTORY_CAP: usize = 100;

impl HistoryWindow {
    pub fn empty_pricing(include_competitor: bool) -> Self {
        Self {
            rounds: vec![],
            include_competitor,
            auction_mode: false,
        }
    }

    pub fn empty_auction() -> Self {
        Self {
            rounds: vec![],
            include_competitor: false,
            auction_mode: true,
        }
    }

    /// Build from chronological rounds, keeping only the trailing
    /// `HISTORY_CAP` entries and reversing to most-recent-first.
    pub fn from_chronological(
        rounds: &[RoundView],
        include_competitor: bool,
        auction_mode: bool,
    ) -> Self {
        let skip = rounds.len().saturating_sub(HISTORY_CAP);
        let mut kept: Vec<RoundView> = rounds[skip..].to_vec();
        kept.reverse();
        Self {
            rounds: kept,
            include_competitor,
            auction_mode,
        }
    }
}

/// Render the MARKET_DATA / AUCTION_DATA block: one paragraph group per
/// round, most recent first, every value at display rounding.
pub fn render_history(window: &HistoryWindow) -> String {
    let mut blocks: Vec<String> = Vec::with_capacity(window.rounds.len());
    for r in &window.rounds {
        let mut lines: Vec<String> = vec![format!("Round {}:", r.period)];
        if window.auction_mode {
            lines.push(format!("- My bid: {}", format_value(r.own_value)));
            if r.won == Some(true) {
                lines.push("- Did I win the auction: Yes".to_string());
                if let Some(s) = r.sufficient_bid {
                    lines.push(format!(
                        "- Bid that would have sufficed to win: {}",
                        format_value(s)
                    ));
                }
                if let Some(p) = r.payment {
                    lines.push(format!("- My payment: {}", format_value(p)));
                }
            } else {
                lines.push("- Did I win the auction: No".to_string());
                if let Some(w) = r.winning_bid {
                    lines.push(format!("- Bid that won: {}", format_value(w)));
                }
            }
            lines.push(format!("- My profit earned: {}", format_value(r.profit)));
        } else {
            lines.push(format!("- My price: {}", format_value(r.own_value)));
            if window.include_competitor {
                if let Some(c) = r.competitor_value {
                    lines.push(format!("- Competitor's price: {}", format_value(c)));
                }
            }
            if let Some(q) = r.quantity {
                lines.push(format!("- My quantity sold: {}", format_value(q)));
            }
            lines.push(format!("- My profit earned: {}", format_value(r.profit)));
        }
        blocks.push(lines.join("\n\n"));
    }
    blocks.join("\n\n")
}

/// Join paragraphs with blank lines, skipping empty ones (an empty PLANS
/// file renders as two adjacent fences).
pub(crate) fn join_paragraphs<'a>(paragraphs: impl IntoIterator<Item = &'a str>) -> String {
    paragraphs
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub(crate) fn pricing_body(
    cost_display: &str,
    ceiling_display: &str,
    plans: &str,
    insights: &str,
    market_data: &str,
) -> String {
    join_paragraphs([
        "Product information:",
        &format!("- The cost I pay to produce each unit is ${cost_display}."),
        &format!("- No customer would pay more than ${ceiling_display}."),
        "Now let me tell you about the resources you have to help me with pricing. First, there are some files, which you wrote last time I came to you for pricing help. Here is a high-level description of what these files contain:",
        "- PLANS.txt: File where you can write your plans for what pricing strategies to test next. Be detailed and precise but keep things succinct and don't repeat yourself.",
        "- INSIGHTS.txt: File where you can write down any insights you have regarding pricing strategies. Be detailed and precise but keep things succinct and don't repeat yourself.",
        "Now I will show you the current content of these files.",
        "Filename: PLANS.txt",
        FENCE,
        plans,
        FENCE,
        "Filename: INSIGHTS.txt",
        FENCE,
        insights,
        FENCE,
        "Finally I will show you the market data you have access to.",
        "Filename: MARKET_DATA (read-only)",
        FENCE,
        market_data,
        FENCE,
    ])
}

pub(crate) fn auction_body(
    value_display: &str,
    plans: &str,
    insights: &str,
    auction_data: &str,
) -> String {
    join_paragraphs([
        "Item information:",
        &format!("- I value the item at ${value_display}."),
        "Now let me tell you about the resources you have to help me with bidding. First, there are some files, which you wrote last time I came to you for bidding help. Here is a high-level description of what these files contain:",
        "- PLANS.txt: File where you can write your plans for what bidding strategies to test next. Be detailed and precise but keep things succinct and don't repeat yourself.",
        "- INSIGHTS.txt: File where you can write down any insights you have regarding bidding strategies. Be detailed and precise but keep things succinct and don't repeat yourself.",
        "Now I will show you the current content of these files.",
        "Filename: PLANS.txt",
        FENCE,
        plans,
        FENCE,
        "Filename: INSIGHTS.txt",
        FENCE,
        insights,
        FENCE,
        "Finally I will show you the bidding data you have access to.",
        "Filename: AUCTION_DATA (read-only)",
        FENCE,
        auction_data,
        FENCE,
    ])
}

pub(crate) fn output_template(value_header: &str) -> String {
    join_paragraphs([
        "Now you have all the necessary information to complete the task. Here is how the conversation will work. First, carefully read through the information provided. Then, fill in the following template to respond.",
        "My observations and thoughts:",
        "<fill in here>",
        "New content for PLANS.txt:",
        "<fill in here>",
        "New content for INSIGHTS.txt:",
        "<fill in here>",
        value_header,
        "<just the number, nothing else>",
        "Note whatever content you write in PLANS.txt and INSIGHTS.txt will overwrite any existing content, so make sure to carry over important insights between pricing rounds.",
    ])
}
