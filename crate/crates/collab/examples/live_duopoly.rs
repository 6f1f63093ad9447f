//! A short live duopoly run against a real chat service. Requires a
//! credential in COLLAB_LLM_API_KEY; exits gracefully without one.
//!
//! Run with: COLLAB_LLM_API_KEY=... cargo run --example live_duopoly

use std::sync::Arc;

use collab::agent::{ChatSettings, MemoryMode, PromptPlacement};
use collab::equilibrium::DEFAULT_CEILING_MULTIPLIER;
use collab::gateway::{ChatBackend, LiveBackend, LiveConfig, DEFAULT_API_KEY_ENV};
use collab::market::{MarketParams, ShockConfig};
use collab::orchestrator::{self, AgentSpec, EnvConfig, RunConfig, RunDir};

fn main() {
    if std::env::var(DEFAULT_API_KEY_ENV).is_err() {
        println!("no credential in {DEFAULT_API_KEY_ENV}; skipping the live run");
        return;
    }
    let config = RunConfig {
        run_id: "live-demo".into(),
        env: EnvConfig::Pricing {
            params: MarketParams::benchmark_duopoly(1.0),
            shock: ShockConfig::disabled(),
            ceiling_multiplier: DEFAULT_CEILING_MULTIPLIER,
            resample_ceiling: false,
        },
        periods: 10,
        agents: vec![
            AgentSpec {
                prefix: "P1".into(),
                memory_mode: MemoryMode::Full,
            },
            AgentSpec {
                prefix: "P2".into(),
                memory_mode: MemoryMode::Full,
            },
        ],
        placement: PromptPlacement::UserConcatenated,
        chat: ChatSettings::default(),
        retry_limit: 10,
        seed: 1,
        record_timestamps: true,
        record_prompts: true,
    };
    let backend: Arc<dyn ChatBackend> = Arc::new(LiveBackend::new(LiveConfig::default()));
    let log = orchestrator::run(&config, backend.as_ref()).expect("live run");
    for record in &log.records {
        println!(
            "period {:>2}: prices {:.2} / {:.2} profits {:.2} / {:.2}",
            record.period,
            record.agents[0].value,
            record.agents[1].value,
            record.agents[0].profit,
            record.agents[1].profit
        );
    }
    let out = std::env::temp_dir().join("collab-live-demo");
    orchestrator::write_run_log(&RunDir::new(&out), &log).expect("persist");
    println!("full transcripts written to {}", out.display());
}
