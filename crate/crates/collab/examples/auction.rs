//! A repeated two-bidder first-price auction with scripted bidders, showing
//! the per-bidder feedback lines and the static Nash benchmark.
//!
//! Run with: cargo run --example auction

use collab::agent::{ChatSettings, MemoryMode, PromptPlacement};
use collab::equilibrium;
use collab::gateway::{ScriptedBackend, ScriptedStrategy};
use collab::market::AuctionParams;
use collab::orchestrator::{self, AgentSpec, EnvConfig, RunConfig};

fn main() {
    let params = AuctionParams {
        v: 1.0,
        n_bidders: 2,
    };
    let nash = equilibrium::auction_nash(&params).expect("nash");
    println!(
        "Nash bid: {:.2} (cent-grid equilibria {:.2}, {:.2})\n",
        nash.bid, nash.cent_grid_equilibria[0], nash.cent_grid_equilibria[1]
    );

    let config = RunConfig {
        run_id: "auction-demo".into(),
        env: EnvConfig::Auction { params },
        periods: 6,
        agents: vec![
            AgentSpec {
                prefix: "A1".into(),
                memory_mode: MemoryMode::Full,
            },
            AgentSpec {
                prefix: "A2".into(),
                memory_mode: MemoryMode::Full,
            },
        ],
        placement: PromptPlacement::System,
        chat: ChatSettings::default(),
        retry_limit: 10,
        seed: 9,
        record_timestamps: false,
        record_prompts: false,
    };
    // both bidders shade to 0.9; ties break uniformly at random
    let backend = ScriptedBackend::new(ScriptedStrategy::FixedPrice { price: 0.9 }, 0);
    let log = orchestrator::run(&config, &backend).expect("run");
    for record in &log.records {
        for (i, agent) in record.agents.iter().enumerate() {
            let role = if agent.won == Some(true) {
                "won "
            } else {
                "lost"
            };
            println!(
                "period {} bidder {i}: bid {:.2} {role} profit {:.2}",
                record.period, agent.value, agent.profit
            );
        }
    }
}
