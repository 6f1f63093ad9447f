//! One-shot questioning of a fresh agent: the output template is replaced
//! by a plain question and the raw answers are collected.
//!
//! Run with: cargo run --example one_shot_probe

use collab::agent::{ask_one_shot, AgentState, ChatSettings, ProductInfo, PromptPrefix};
use collab::gateway::{ScriptedBackend, ScriptedStrategy};

fn main() {
    let question = "Will pricing lower than your competitor typically lead to more product sold?";
    for prefix in ["P1", "P2"] {
        let state = AgentState::new(
            PromptPrefix::resolve(prefix).expect("builtin prefix"),
            ProductInfo::Pricing {
                unit_cost: 1.0,
                ceiling: 4.51,
            },
        );
        let backend = ScriptedBackend::new(ScriptedStrategy::FixedPrice { price: 2.0 }, 0);
        let answers =
            ask_one_shot(&state, question, &backend, &ChatSettings::default(), 20).expect("ask");
        let yes = answers.iter().filter(|a| a.trim() == "Yes").count();
        println!("{prefix}: {yes}/{} answered Yes", answers.len());
    }
}
