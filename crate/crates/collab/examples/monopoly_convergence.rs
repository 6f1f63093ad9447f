//! A 300-period monopoly run under the myopic scripted agent, checked with
//! the percentile convergence criterion and the profit-capture metric.
//!
//! Run with: cargo run --example monopoly_convergence

use collab::agent::{ChatSettings, MemoryMode, PromptPlacement};
use collab::analysis;
use collab::equilibrium::{self, SolverConfig, DEFAULT_CEILING_MULTIPLIER};
use collab::gateway::{ScriptedBackend, ScriptedStrategy};
use collab::market::{self, MarketParams, ShockConfig};
use collab::orchestrator::{self, AgentSpec, EnvConfig, RunConfig};

fn main() {
    let params = MarketParams::benchmark_monopoly(1.0);
    let cfg = SolverConfig::for_params(&params);
    let p_m = equilibrium::single_monopoly_price(&params, 0, &cfg).expect("monopoly price");
    let q = market::logit_demand(&[p_m], &params, 0.0).expect("demand");
    let optimum = market::firm_profit(p_m, q[0], 1.0, 1.0);

    let config = RunConfig {
        run_id: "monopoly-demo".into(),
        env: EnvConfig::Pricing {
            params: params.clone(),
            shock: ShockConfig::disabled(),
            ceiling_multiplier: DEFAULT_CEILING_MULTIPLIER,
            resample_ceiling: false,
        },
        periods: 300,
        agents: vec![AgentSpec {
            prefix: "P0".into(),
            memory_mode: MemoryMode::Full,
        }],
        placement: PromptPlacement::UserConcatenated,
        chat: ChatSettings::default(),
        retry_limit: 10,
        seed: 3,
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
    let series: Vec<f64> = log.records.iter().map(|r| r.agents[0].value).collect();
    let converged = analysis::convergence_check(&series, p_m).expect("convergence");
    let (_, fraction) = analysis::profit_capture(&log, optimum).expect("capture");
    println!("monopoly price target: {p_m:.4} (optimal profit {optimum:.2})");
    println!("converged (10th/90th percentile of periods 201-300 within 5%): {converged}");
    println!("fraction of periods 101+ capturing >= 99% of optimal profit: {fraction:.2}");
}
