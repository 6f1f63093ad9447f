//! A 50-period duopoly where both firms best-respond myopically to the last
//! observed competitor price; prices converge to the static Nash level.
//!
//! Run with: cargo run --example scripted_duopoly

use collab::agent::{ChatSettings, MemoryMode, PromptPlacement};
use collab::equilibrium::{self, SolverConfig, DEFAULT_CEILING_MULTIPLIER};
use collab::gateway::{ScriptedBackend, ScriptedStrategy};
use collab::market::{MarketParams, ShockConfig};
use collab::orchestrator::{self, AgentSpec, EnvConfig, RunConfig};

fn main() {
    let params = MarketParams::benchmark_duopoly(1.0);
    let cfg = SolverConfig::for_params(&params);
    let nash = equilibrium::nash_prices(&params, &cfg).expect("nash")[0];

    let config = RunConfig {
        run_id: "myopic-demo".into(),
        env: EnvConfig::Pricing {
            params: params.clone(),
            shock: ShockConfig::disabled(),
            ceiling_multiplier: DEFAULT_CEILING_MULTIPLIER,
            resample_ceiling: false,
        },
        periods: 50,
        agents: vec![
            AgentSpec {
                prefix: "P1".into(),
                memory_mode: MemoryMode::Full,
            },
            AgentSpec {
                prefix: "P1".into(),
                memory_mode: MemoryMode::Full,
            },
        ],
        placement: PromptPlacement::UserConcatenated,
        chat: ChatSettings::default(),
        retry_limit: 10,
        seed: 7,
        record_timestamps: false,
        record_prompts: false,
    };
    let backend = ScriptedBackend::new(
        ScriptedStrategy::MyopicBestResponse {
            params,
            firm: 0,
            start_price: None,
        },
        0,
    );
    let log = orchestrator::run(&config, &backend).expect("run");
    println!("static Nash price: {nash:.4}\n");
    for record in log.records.iter().step_by(7) {
        println!(
            "period {:>3}: prices {:.2} / {:.2}",
            record.period, record.agents[0].value, record.agents[1].value
        );
    }
    let last = log.records.last().unwrap();
    println!(
        "\nperiod {}: both within {:.2}% of Nash",
        last.period,
        100.0 * (last.agents[0].value - nash).abs() / nash
    );
}
