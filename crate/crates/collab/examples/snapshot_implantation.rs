//! Counterfactual plan implantation: run a scripted duopoly whose agents
//! echo their plans file, then restore each period with an implanted
//! directive sentence and measure the decision delta.
//!
//! Run with: cargo run --example snapshot_implantation

use collab::agent::{ChatSettings, MemoryMode, PromptPlacement};
use collab::analysis;
use collab::equilibrium::DEFAULT_CEILING_MULTIPLIER;
use collab::gateway::{ScriptedBackend, ScriptedStrategy};
use collab::market::{MarketParams, ShockConfig};
use collab::orchestrator::{self, AgentSpec, EnvConfig, RunConfig};

fn main() {
    let config = RunConfig {
        run_id: "implant-demo".into(),
        env: EnvConfig::Pricing {
            params: MarketParams::benchmark_duopoly(1.0),
            shock: ShockConfig::disabled(),
            ceiling_multiplier: DEFAULT_CEILING_MULTIPLIER,
            resample_ceiling: false,
        },
        periods: 13,
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
        seed: 42,
        record_timestamps: false,
        record_prompts: false,
    };
    let backend = ScriptedBackend::new(ScriptedStrategy::PlanEcho { start_price: 1.5 }, 0);
    let log = orchestrator::run(&config, &backend).expect("run");

    // restoring without overrides replays the original period exactly
    let snapshot = &log.snapshots[7];
    let replay = orchestrator::restore_and_step(snapshot, &[], &backend).expect("replay");
    assert!(replay.content_eq(&log.records[7]));
    println!("period 8 replay is identical to the original record");

    // implant a raise directive into periods 2-13 for both agents
    let periods: Vec<usize> = (2..=13).collect();
    let outcome = orchestrator::implant(
        &log,
        &periods,
        &[0, 1],
        &["RAISE+0.10".to_string()],
        &backend,
    );
    println!(
        "implanted {} counterfactuals ({} errors)",
        outcome.records.len(),
        outcome.errors.len()
    );
    let effect = analysis::implantation_effect(&outcome.records, |r| format!("agent{}", r.agent))
        .expect("effect");
    println!(
        "mean delta {:+.3} (p = {:.2e}, N = {})",
        effect.mean_delta, effect.p_value, effect.n
    );
    for (stratum, s) in &effect.strata {
        println!("  {stratum}: {:+.3} (N = {})", s.mean_delta, s.n);
    }
}
