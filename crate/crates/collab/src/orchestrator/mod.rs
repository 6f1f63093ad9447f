//! Drives N-period runs and experiment grids, persists complete per-period
//! records, and supports snapshot/restore and counterfactual plan
//! implantation.
//!
//! Every period boundary is snapshotted (agent states, full history, and the
//! randomness-source state), so any period of a finished run can be restored
//! and re-executed under perturbed conditions. Implantation does exactly
//! that: restore, replace the agent's plans with a chosen sentence, erase
//! its insights, re-run one period, and record the decision delta.

mod persist;

pub use persist::{
    load_manifest, load_run_log, load_snapshot, write_manifest, write_run_log, RunDir,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    self, AgentError, AgentState, ChatSettings, HistoryWindow, MemoryMode, ProductInfo,
    PromptPlacement, PromptPrefix, RoundView,
};
use crate::equilibrium::{self, EquilibriumError, SolverConfig};
use crate::gateway::{fnv1a64, ChatBackend};
use crate::market::{self, AuctionParams, MarketError, MarketParams, ShockConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("snapshot integrity error: {0}")]
    Integrity(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Market environment of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "environment", rename_all = "lowercase")]
pub enum EnvConfig {
    Pricing {
        params: MarketParams,
        shock: ShockConfig,
        ceiling_multiplier: f64,
        /// Draw the ceiling multiplier from Unif[1.5, 2.5] at run start
        /// instead of using `ceiling_multiplier`.
        #[serde(default)]
        resample_ceiling: bool,
    },
    Auction {
        params: AuctionParams,
    },
}

impl EnvConfig {
    pub fn n_agents(&self) -> usize {
        match self {
            EnvConfig::Pricing { params, .. } => params.n_firms(),
            EnvConfig::Auction { params } => params.n_bidders,
        }
    }

    /// Currency scale of the environment (alpha, or the item value for
    /// auctions); deltas and summary statistics are normalized by this.
    pub fn scale(&self) -> f64 {
        match self {
            EnvConfig::Pricing { params, .. } => params.alpha,
            EnvConfig::Auction { params } => params.v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub prefix: String,
    #[serde(default)]
    pub memory_mode: MemoryMode,
}

/// Fully resolved configuration of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    #[serde(flatten)]
    pub env: EnvConfig,
    pub periods: usize,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub placement: PromptPlacement,
    pub chat: ChatSettings,
    pub retry_limit: usize,
    pub seed: u64,
    /// Record wall-clock timestamps in period records. Off for scripted
    /// runs so that replays are byte-identical.
    #[serde(default)]
    pub record_timestamps: bool,
    /// Also persist the full request text per decision, so live-run
    /// counterfactuals can audit the exact context that was replayed.
    #[serde(default)]
    pub record_prompts: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.periods == 0 {
            return Err(OrchestratorError::Config("periods must be >= 1".into()));
        }
        if self.agents.len() != self.env.n_agents() {
            return Err(OrchestratorError::Config(format!(
                "need one prefix per agent: {} agents configured, environment has {}",
                self.agents.len(),
                self.env.n_agents()
            )));
        }
        for spec in &self.agents {
            if PromptPrefix::resolve(&spec.prefix).is_none() {
                return Err(OrchestratorError::Config(format!(
                    "unknown prompt prefix {:?}",
                    spec.prefix
                )));
            }
        }
        match &self.env {
            EnvConfig::Pricing { params, shock, .. } => {
                params.validate()?;
                shock.validate()?;
            }
            EnvConfig::Auction { params } => params.validate()?,
        }
        Ok(())
    }
}

/// Per-agent slice of one period record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPeriod {
    /// Price or bid, rounded to two decimals before market entry.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub quantity: Option<f64>,
    pub profit: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub won: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub winning_bid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sufficient_bid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payment: Option<f64>,
    pub new_plans: String,
    pub new_insights: String,
    pub raw_completion: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_prompt: Option<String>,
    pub retry_count: usize,
    pub ceiling_exceeded: bool,
}

/// Everything recorded about one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub realized_a0: Option<f64>,
    pub agents: Vec<AgentPeriod>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamp_ms: Option<u64>,
}

impl PeriodRecord {
    /// Equality ignoring wall-clock timestamps; replay determinism is over
    /// content, not clocks.
    pub fn content_eq(&self, other: &PeriodRecord) -> bool {
        self.period == other.period
            && self.realized_a0 == other.realized_a0
            && self.agents == other.agents
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub run_id: String,
    pub config: RunConfig,
    /// Displayed price ceiling (pricing environments).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ceiling: Option<f64>,
    /// FNV-1a hashes of the prefix texts in use, for replication audits.
    pub fixture_hashes: std::collections::BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub started_at_ms: Option<u64>,
}

/// Resumable state at the start of a period: agent states as they stood
/// before deciding, the full prior history, and the randomness source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub run_id: String,
    /// Period about to be executed from this snapshot (1-based).
    pub period: usize,
    pub config: RunConfig,
    pub ceiling: Option<f64>,
    pub agent_states: Vec<AgentState>,
    pub history: Vec<PeriodRecord>,
    pub rng: ChaCha12Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub records: Vec<PeriodRecord>,
    #[serde(skip)]
    pub snapshots: Vec<RunSnapshot>,
    /// Set when the run stopped early (agent retry exhaustion); partial
    /// records are retained.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aborted: Option<String>,
}

/// Per-agent state override applied after restoring a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentOverride {
    pub agent: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plans: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub insights: Option<String>,
}

/// One implantation observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub run_id: String,
    pub period: usize,
    pub agent: usize,
    pub sentence: String,
    pub original_value: f64,
    pub counterfactual_value: f64,
    /// `(counterfactual - original) / scale` where scale is alpha (or the
    /// item value for auctions).
    pub delta: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ImplantOutcome {
    pub records: Vec<CounterfactualRecord>,
    /// One message per (sentence, period, agent) item that could not be
    /// evaluated; the batch continues past them.
    pub errors: Vec<String>,
}

/// Flatten a request into one auditable transcript string.
fn transcript(request: &crate::gateway::ChatRequest) -> String {
    match &request.system_text {
        Some(system) => format!("[system]\n{system}\n[user]\n{}", request.user_text),
        None => request.user_text.clone(),
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn build_agent_states(
    config: &RunConfig,
    ceiling: Option<f64>,
) -> Result<Vec<AgentState>, OrchestratorError> {
    config
        .agents
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let prefix = PromptPrefix::resolve(&spec.prefix).ok_or_else(|| {
                OrchestratorError::Config(format!("unknown prefix {:?}", spec.prefix))
            })?;
            let product = match &config.env {
                EnvConfig::Pricing { params, .. } => ProductInfo::Pricing {
                    unit_cost: params.marginal_cost(i),
                    ceiling: ceiling.expect("pricing env has a ceiling"),
                },
                EnvConfig::Auction { params } => ProductInfo::Auction {
                    item_value: params.v,
                },
            };
            let mut state = AgentState::new(prefix, product);
            state.memory_mode = spec.memory_mode;
            state.placement = config.placement;
            Ok(state)
        })
        .collect()
}

/// Compute the displayed ceiling for a pricing run (joint monopoly price
/// times the multiplier, possibly resampled).
fn run_ceiling(
    config: &RunConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Option<f64>, OrchestratorError> {
    match &config.env {
        EnvConfig::Pricing {
            params,
            ceiling_multiplier,
            resample_ceiling,
            ..
        } => {
            let multiplier = if *resample_ceiling {
                rng.random_range(1.5..2.5)
            } else {
                *ceiling_multiplier
            };
            let cfg = SolverConfig::for_params(params);
            let p_m = equilibrium::joint_monopoly_prices(params, &cfg)?;
            Ok(Some(equilibrium::price_ceiling(p_m[0], multiplier)))
        }
        EnvConfig::Auction { .. } => Ok(None),
    }
}

/// The history window agent `agent` sees before deciding in the next period.
fn window_for_agent(config: &RunConfig, history: &[PeriodRecord], agent: usize) -> HistoryWindow {
    match &config.env {
        EnvConfig::Pricing { params, .. } => {
            let duopoly = params.n_firms() == 2;
            let rounds: Vec<RoundView> = history
                .iter()
                .map(|rec| {
                    let me = &rec.agents[agent];
                    let competitor = if duopoly {
                        Some(rec.agents[1 - agent].value)
                    } else {
                        None
                    };
                    RoundView::pricing(
                        rec.period,
                        me.value,
                        competitor,
                        me.quantity.unwrap_or(0.0),
                        me.profit,
                    )
                })
                .collect();
            HistoryWindow::from_chronological(&rounds, duopoly, false)
        }
        EnvConfig::Auction { .. } => {
            let rounds: Vec<RoundView> = history
                .iter()
                .map(|rec| {
                    let me = &rec.agents[agent];
                    RoundView {
                        period: rec.period,
                        own_value: me.value,
                        competitor_value: None,
                        quantity: None,
                        profit: me.profit,
                        won: me.won,
                        winning_bid: me.winning_bid,
                        sufficient_bid: me.sufficient_bid,
                        payment: me.payment,
                    }
                })
                .collect();
            HistoryWindow::from_chronological(&rounds, false, true)
        }
    }
}

/// Execute one period from explicit state. Agents decide sequentially from
/// identical pre-period information (their decisions are simultaneous-move);
/// the market transition and record commit happen once all have decided.
fn execute_period(
    config: &RunConfig,
    ceiling: Option<f64>,
    states: &mut [AgentState],
    history: &[PeriodRecord],
    period: usize,
    backend: &dyn ChatBackend,
    rng: &mut ChaCha12Rng,
) -> Result<PeriodRecord, OrchestratorError> {
    let mut decisions = Vec::with_capacity(states.len());
    for (i, state) in states.iter_mut().enumerate() {
        let window = window_for_agent(config, history, i);
        let outcome = agent::decide(state, &window, backend, &config.chat, config.retry_limit)?;
        decisions.push(outcome);
    }
    let values: Vec<f64> = decisions.iter().map(|d| d.decision.value).collect();
    let timestamp_ms = config.record_timestamps.then(now_ms);
    match &config.env {
        EnvConfig::Pricing { params, shock, .. } => {
            let outcome = market::step_market(&values, params, shock, rng)?;
            let agents = decisions
                .iter()
                .enumerate()
                .map(|(i, d)| AgentPeriod {
                    value: values[i],
                    quantity: Some(outcome.quantities[i]),
                    profit: outcome.profits[i],
                    won: None,
                    winning_bid: None,
                    sufficient_bid: None,
                    payment: None,
                    new_plans: d.decision.new_plans.clone(),
                    new_insights: d.decision.new_insights.clone(),
                    raw_completion: d.decision.raw.clone(),
                    raw_prompt: config.record_prompts.then(|| transcript(&d.request)),
                    retry_count: d.retries,
                    ceiling_exceeded: ceiling.is_some_and(|c| values[i] > c),
                })
                .collect();
            Ok(PeriodRecord {
                period,
                realized_a0: Some(outcome.realized_a0),
                agents,
                timestamp_ms,
            })
        }
        EnvConfig::Auction { params } => {
            let outcome = market::auction_step(&values, params, rng)?;
            let agents = decisions
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let fb = &outcome.feedback[i];
                    AgentPeriod {
                        value: values[i],
                        quantity: None,
                        profit: fb.profit,
                        won: Some(fb.won),
                        winning_bid: fb.winning_bid,
                        sufficient_bid: fb.sufficient_bid,
                        payment: fb.payment,
                        new_plans: d.decision.new_plans.clone(),
                        new_insights: d.decision.new_insights.clone(),
                        raw_completion: d.decision.raw.clone(),
                        raw_prompt: config.record_prompts.then(|| transcript(&d.request)),
                        retry_count: d.retries,
                        ceiling_exceeded: false,
                    }
                })
                .collect();
            Ok(PeriodRecord {
                period,
                realized_a0: None,
                agents,
                timestamp_ms,
            })
        }
    }
}

/// Run a full experiment: every period all agents decide from identical
/// pre-period information, the market steps, the record is appended, and
/// agent memories update. A snapshot is taken at every period boundary.
pub fn run(config: &RunConfig, backend: &dyn ChatBackend) -> Result<RunLog, OrchestratorError> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let ceiling = run_ceiling(config, &mut rng)?;
    let mut states = build_agent_states(config, ceiling)?;
    let mut fixture_hashes = std::collections::BTreeMap::new();
    for state in &states {
        fixture_hashes.insert(
            state.prefix.id.clone(),
            format!("{:016x}", fnv1a64(state.prefix.text.as_bytes())),
        );
    }
    let header = RunHeader {
        schema_version: SCHEMA_VERSION,
        run_id: config.run_id.clone(),
        config: config.clone(),
        ceiling,
        fixture_hashes,
        started_at_ms: config.record_timestamps.then(now_ms),
    };
    let mut log = RunLog {
        header,
        records: vec![],
        snapshots: vec![],
        aborted: None,
    };
    for period in 1..=config.periods {
        log.snapshots.push(RunSnapshot {
            run_id: config.run_id.clone(),
            period,
            config: config.clone(),
            ceiling,
            agent_states: states.clone(),
            history: log.records.clone(),
            rng: rng.clone(),
        });
        match execute_period(
            config,
            ceiling,
            &mut states,
            &log.records,
            period,
            backend,
            &mut rng,
        ) {
            Ok(record) => log.records.push(record),
            Err(OrchestratorError::Agent(AgentError::RunAbort { attempts, last })) => {
                log.aborted = Some(format!(
                    "period {period}: {attempts} consecutive format failures ({last})"
                ));
                return Ok(log);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(log)
}

/// Restore a snapshot, apply overrides, and execute exactly one period.
pub fn restore_and_step(
    snapshot: &RunSnapshot,
    overrides: &[AgentOverride],
    backend: &dyn ChatBackend,
) -> Result<PeriodRecord, OrchestratorError> {
    if snapshot.history.len() != snapshot.period - 1 {
        return Err(OrchestratorError::Integrity(format!(
            "snapshot for period {} carries {} history records",
            snapshot.period,
            snapshot.history.len()
        )));
    }
    if snapshot.agent_states.len() != snapshot.config.env.n_agents() {
        return Err(OrchestratorError::Integrity(
            "agent state count mismatch".into(),
        ));
    }
    let mut states = snapshot.agent_states.clone();
    for o in overrides {
        let state = states.get_mut(o.agent).ok_or_else(|| {
            OrchestratorError::Integrity(format!("override for unknown agent {}", o.agent))
        })?;
        if let Some(plans) = &o.plans {
            state.plans = plans.clone();
        }
        if let Some(insights) = &o.insights {
            state.insights = insights.clone();
        }
    }
    let mut rng = snapshot.rng.clone();
    execute_period(
        &snapshot.config,
        snapshot.ceiling,
        &mut states,
        &snapshot.history,
        snapshot.period,
        backend,
        &mut rng,
    )
}

/// Counterfactual plan implantation over a finished run: for every
/// (sentence, period, agent) combination, restore the period snapshot,
/// replace that agent's plans with the sentence, erase its insights, re-run
/// the period, and record the decision delta against the original.
pub fn implant(
    log: &RunLog,
    periods: &[usize],
    agents: &[usize],
    sentences: &[String],
    backend: &dyn ChatBackend,
) -> ImplantOutcome {
    let mut outcome = ImplantOutcome::default();
    let scale = log.header.config.env.scale();
    for sentence in sentences {
        for &period in periods {
            for &agent_idx in agents {
                let item = format!(
                    "run {} period {period} agent {agent_idx}",
                    log.header.run_id
                );
                let Some(snapshot) = log.snapshots.iter().find(|s| s.period == period) else {
                    outcome.errors.push(format!("{item}: no snapshot"));
                    continue;
                };
                let Some(original) = log.records.iter().find(|r| r.period == period) else {
                    outcome.errors.push(format!("{item}: no original record"));
                    continue;
                };
                if agent_idx >= snapshot.agent_states.len() {
                    outcome.errors.push(format!("{item}: no such agent"));
                    continue;
                }
                let overrides = [AgentOverride {
                    agent: agent_idx,
                    plans: Some(sentence.clone()),
                    insights: Some(String::new()),
                }];
                match restore_and_step(snapshot, &overrides, backend) {
                    Ok(record) => {
                        let original_value = original.agents[agent_idx].value;
                        let counterfactual_value = record.agents[agent_idx].value;
                        outcome.records.push(CounterfactualRecord {
                            run_id: log.header.run_id.clone(),
                            period,
                            agent: agent_idx,
                            sentence: sentence.clone(),
                            original_value,
                            counterfactual_value,
                            delta: (counterfactual_value - original_value) / scale,
                        });
                    }
                    Err(e) => outcome.errors.push(format!("{item}: {e}")),
                }
            }
        }
    }
    outcome
}

/// One cell of an experiment grid before seed derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Currency scale: alpha for pricing cells, the item value for auctions.
    pub scale: f64,
    /// One prefix name per agent.
    pub prefixes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Reference environment at scale 1; each cell rescales it.
    #[serde(flatten)]
    pub env: EnvConfig,
    pub periods: usize,
    pub cells: Vec<GridCell>,
    pub runs_per_cell: usize,
    #[serde(default)]
    pub memory_modes: Option<Vec<MemoryMode>>,
    #[serde(default)]
    pub placement: PromptPlacement,
    pub chat: ChatSettings,
    pub retry_limit: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub record_timestamps: bool,
    #[serde(default)]
    pub record_prompts: bool,
    /// Maximum concurrently executing runs (1 = sequential).
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    1
}

impl GridConfig {
    /// Rescale the reference environment to one cell's currency scale.
    fn env_for_scale(&self, scale: f64) -> EnvConfig {
        match &self.env {
            EnvConfig::Pricing {
                params,
                shock,
                ceiling_multiplier,
                resample_ceiling,
            } => EnvConfig::Pricing {
                params: MarketParams {
                    alpha: scale,
                    ..params.clone()
                },
                shock: shock.clone(),
                ceiling_multiplier: *ceiling_multiplier,
                resample_ceiling: *resample_ceiling,
            },
            EnvConfig::Auction { params } => EnvConfig::Auction {
                params: AuctionParams {
                    v: scale,
                    n_bidders: params.n_bidders,
                },
            },
        }
    }

    /// Enumerate all run configurations with independent derived seeds.
    pub fn enumerate_runs(&self) -> Vec<RunConfig> {
        let mut runs = Vec::new();
        for (cell_idx, cell) in self.cells.iter().enumerate() {
            for rep in 0..self.runs_per_cell {
                let run_id = format!("run-c{cell_idx:02}-r{rep:02}");
                let seed_material = format!("{}:{cell_idx}:{rep}", self.master_seed);
                let seed = fnv1a64(seed_material.as_bytes());
                let agents = cell
                    .prefixes
                    .iter()
                    .enumerate()
                    .map(|(i, prefix)| AgentSpec {
                        prefix: prefix.clone(),
                        memory_mode: self
                            .memory_modes
                            .as_ref()
                            .and_then(|m| m.get(i).copied())
                            .unwrap_or_default(),
                    })
                    .collect();
                runs.push(RunConfig {
                    run_id,
                    env: self.env_for_scale(cell.scale),
                    periods: self.periods,
                    agents,
                    placement: self.placement,
                    chat: self.chat.clone(),
                    retry_limit: self.retry_limit,
                    seed,
                    record_timestamps: self.record_timestamps,
                    record_prompts: self.record_prompts,
                });
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub run_id: String,
    pub seed: u64,
    pub scale: f64,
    pub prefixes: Vec<String>,
    pub status: String,
    pub periods_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub runs: Vec<ManifestRun>,
}

/// Per-run backend factory: lets scripted strategies (myopic best response
/// in particular) target each cell's rescaled market.
pub type BackendFactory<'a> = &'a (dyn Fn(&RunConfig) -> std::sync::Arc<dyn ChatBackend> + Sync);

/// Execute every cell of the grid, optionally concurrently. Individual run
/// failures are recorded in the manifest; the batch completes regardless.
pub fn grid(config: &GridConfig, backend_for: BackendFactory) -> (Vec<RunLog>, GridManifest) {
    let run_configs = config.enumerate_runs();
    let parallelism = config.parallelism.max(1);
    let mut results: Vec<Option<Result<RunLog, OrchestratorError>>> =
        (0..run_configs.len()).map(|_| None).collect();
    for chunk in (0..run_configs.len())
        .collect::<Vec<_>>()
        .chunks(parallelism)
    {
        let mut slots: Vec<(usize, Result<RunLog, OrchestratorError>)> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&idx| {
                        let rc = &run_configs[idx];
                        let backend = backend_for(rc);
                        (idx, scope.spawn(move || run(rc, backend.as_ref())))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|(idx, handle)| (idx, handle.join().expect("run thread panicked")))
                    .collect()
            });
        for (idx, result) in slots.drain(..) {
            results[idx] = Some(result);
        }
    }
    let mut logs = Vec::new();
    let mut manifest_runs = Vec::new();
    for (rc, result) in run_configs.iter().zip(results) {
        let scale = rc.env.scale();
        let prefixes: Vec<String> = rc.agents.iter().map(|a| a.prefix.clone()).collect();
        match result.expect("every run executed") {
            Ok(log) => {
                manifest_runs.push(ManifestRun {
                    run_id: rc.run_id.clone(),
                    seed: rc.seed,
                    scale,
                    prefixes,
                    status: match &log.aborted {
                        Some(msg) => format!("aborted: {msg}"),
                        None => "ok".to_string(),
                    },
                    periods_completed: log.records.len(),
                });
                logs.push(log);
            }
            Err(e) => manifest_runs.push(ManifestRun {
                run_id: rc.run_id.clone(),
                seed: rc.seed,
                scale,
                prefixes,
                status: format!("failed: {e}"),
                periods_completed: 0,
            }),
        }
    }
    (
        logs,
        GridManifest {
            schema_version: SCHEMA_VERSION,
            master_seed: config.master_seed,
            runs: manifest_runs,
        },
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gateway::{ScriptedBackend, ScriptedStrategy};

    pub(crate) fn duopoly_config(run_id: &str, periods: usize, alpha: f64, seed: u64) -> RunConfig {
        RunConfig {
            run_id: run_id.into(),
            env: EnvConfig::Pricing {
                params: MarketParams::benchmark_duopoly(alpha),
                shock: ShockConfig::disabled(),
                ceiling_multiplier: equilibrium::DEFAULT_CEILING_MULTIPLIER,
                resample_ceiling: false,
            },
            periods,
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
            seed,
            record_timestamps: false,
            record_prompts: false,
        }
    }

    fn fixed_backend(price: f64) -> ScriptedBackend {
        ScriptedBackend::new(ScriptedStrategy::FixedPrice { price }, 0)
    }

    #[test]
    fn single_period_run_has_one_record() {
        let config = duopoly_config("t1", 1, 1.0, 7);
        let log = run(&config, &fixed_backend(2.0)).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.snapshots.len(), 1);
        assert!(log.aborted.is_none());
        let rec = &log.records[0];
        assert_eq!(rec.agents[0].value, 2.0);
        assert!(rec.agents[0].quantity.unwrap() > 0.0);
    }

    #[test]
    fn records_are_consistent_with_market_recomputation() {
        let config = duopoly_config("t2", 8, 3.2, 11);
        let log = run(&config, &fixed_backend(6.0)).unwrap();
        let params = MarketParams::benchmark_duopoly(3.2);
        for rec in &log.records {
            let prices: Vec<f64> = rec.agents.iter().map(|a| a.value).collect();
            let q = market::logit_demand(&prices, &params, rec.realized_a0.unwrap()).unwrap();
            for (i, a) in rec.agents.iter().enumerate() {
                assert!((a.quantity.unwrap() - q[i]).abs() < 1e-9);
                let pi = market::firm_profit(prices[i], q[i], 1.0, 3.2);
                assert!((a.profit - pi).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn replay_from_config_is_bit_exact() {
        let config = duopoly_config("t3", 6, 1.0, 99);
        let backend = ScriptedBackend::new(ScriptedStrategy::PlanEcho { start_price: 1.5 }, 0);
        let a = run(&config, &backend).unwrap();
        let b = run(&config, &backend).unwrap();
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
    }

    #[test]
    fn restore_without_overrides_reproduces_every_period() {
        let mut config = duopoly_config("t4", 10, 1.0, 123);
        config.env = EnvConfig::Pricing {
            params: MarketParams::benchmark_duopoly(1.0),
            shock: ShockConfig::default_shocks(),
            ceiling_multiplier: equilibrium::DEFAULT_CEILING_MULTIPLIER,
            resample_ceiling: false,
        };
        let backend = ScriptedBackend::new(
            ScriptedStrategy::MyopicBestResponse {
                params: MarketParams::benchmark_duopoly(1.0),
                firm: 0,
                start_price: None,
            },
            0,
        );
        let log = run(&config, &backend).unwrap();
        for snapshot in &log.snapshots {
            let replayed = restore_and_step(snapshot, &[], &backend).unwrap();
            let original = &log.records[snapshot.period - 1];
            assert!(replayed.content_eq(original), "period {}", snapshot.period);
        }
    }

    #[test]
    fn override_erasing_insights_only_keeps_plans() {
        let config = duopoly_config("t5", 3, 1.0, 5);
        let backend = ScriptedBackend::new(ScriptedStrategy::PlanEcho { start_price: 1.5 }, 0);
        let log = run(&config, &backend).unwrap();
        let snapshot = &log.snapshots[2];
        // the plan-echo scripted agent writes non-empty plans and insights
        assert!(!snapshot.agent_states[0].plans.is_empty());
        assert!(!snapshot.agent_states[0].insights.is_empty());
        let overrides = [AgentOverride {
            agent: 0,
            plans: None,
            insights: Some(String::new()),
        }];
        let replayed = restore_and_step(snapshot, &overrides, &backend).unwrap();
        // with unchanged plans the echo decision is unchanged
        assert_eq!(replayed.agents[0].value, log.records[2].agents[0].value);
    }

    #[test]
    fn plan_echo_implantation_shifts_by_directive() {
        let config = duopoly_config("t6", 10, 1.0, 77);
        let backend = ScriptedBackend::new(ScriptedStrategy::PlanEcho { start_price: 1.5 }, 0);
        let log = run(&config, &backend).unwrap();
        let periods: Vec<usize> = (2..=10).collect();
        let outcome = implant(
            &log,
            &periods,
            &[0, 1],
            &["RAISE+0.10".to_string()],
            &backend,
        );
        assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);
        assert_eq!(outcome.records.len(), 9 * 2);
        for r in &outcome.records {
            assert!((r.delta - 0.10).abs() < 1e-9, "delta {}", r.delta);
        }
    }

    #[test]
    fn implantation_counts_missing_snapshots_as_errors() {
        let config = duopoly_config("t7", 5, 1.0, 3);
        let backend = fixed_backend(2.0);
        let log = run(&config, &backend).unwrap();
        let outcome = implant(&log, &[2, 99], &[0], &["x".to_string()], &backend);
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.errors.len(), 1);
        assert!(outcome.errors[0].contains("no snapshot"));
    }

    #[test]
    fn aborting_backend_closes_log_with_marker() {
        struct Garbage;
        impl ChatBackend for Garbage {
            fn chat(
                &self,
                _req: &crate::gateway::ChatRequest,
            ) -> Result<crate::gateway::ChatResponse, crate::gateway::GatewayError> {
                Ok(crate::gateway::ChatResponse {
                    text: "???".into(),
                    usage: Default::default(),
                    latency: Default::default(),
                })
            }
        }
        let config = duopoly_config("t8", 5, 1.0, 3);
        let log = run(&config, &Garbage).unwrap();
        assert!(log.aborted.is_some());
        assert!(log.records.is_empty());
    }

    #[test]
    fn transcripts_are_recorded_on_request() {
        let mut config = duopoly_config("t9", 3, 1.0, 21);
        config.record_prompts = true;
        let backend = ScriptedBackend::new(ScriptedStrategy::PlanEcho { start_price: 1.5 }, 0);
        let log = run(&config, &backend).unwrap();
        for rec in &log.records {
            for agent in &rec.agents {
                let prompt = agent.raw_prompt.as_deref().expect("transcript recorded");
                assert!(prompt.contains("Filename: PLANS.txt"));
            }
        }
        // period 2 onward the previous plans appear verbatim in the prompt
        let p2 = log.records[1].agents[0].raw_prompt.as_deref().unwrap();
        assert!(p2.contains(&log.records[0].agents[0].new_plans));
        // and transcripts stay out of the records unless requested
        config.record_prompts = false;
        let log = run(&config, &backend).unwrap();
        assert!(log
            .records
            .iter()
            .all(|r| r.agents.iter().all(|a| a.raw_prompt.is_none())));
    }

    #[test]
    fn grid_enumerates_the_paper_shaped_cells() {
        let chat = ChatSettings::default();
        let cells: Vec<GridCell> = [1.0, 3.2, 10.0]
            .into_iter()
            .map(|scale| GridCell {
                scale,
                prefixes: vec!["P1".into(), "P1".into()],
            })
            .collect();
        let gc = GridConfig {
            env: EnvConfig::Pricing {
                params: MarketParams::benchmark_duopoly(1.0),
                shock: ShockConfig::disabled(),
                ceiling_multiplier: 2.34,
                resample_ceiling: false,
            },
            periods: 2,
            cells,
            runs_per_cell: 7,
            memory_modes: None,
            placement: PromptPlacement::UserConcatenated,
            chat,
            retry_limit: 10,
            master_seed: 1,
            record_timestamps: false,
            record_prompts: false,
            parallelism: 4,
        };
        let runs = gc.enumerate_runs();
        assert_eq!(runs.len(), 21);
        let seeds: std::collections::HashSet<u64> = runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 21, "independent derived seeds");
        let backend: std::sync::Arc<dyn ChatBackend> = std::sync::Arc::new(fixed_backend(2.0));
        let (logs, manifest) = grid(&gc, &|_rc| backend.clone());
        assert_eq!(logs.len(), 21);
        assert_eq!(manifest.runs.len(), 21);
        assert!(manifest.runs.iter().all(|r| r.status == "ok"));
        assert!((logs[20].header.config.env.scale() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_quality_grid_yields_twelve_runs() {
        let mut params = MarketParams::benchmark_duopoly(1.0);
        params.a = vec![2.0, 2.75];
        let gc = GridConfig {
            env: EnvConfig::Pricing {
                params,
                shock: ShockConfig::disabled(),
                ceiling_multiplier: 2.34,
                resample_ceiling: false,
            },
            periods: 1,
            cells: [1.0, 3.2, 10.0]
                .into_iter()
                .map(|scale| GridCell {
                    scale,
                    prefixes: vec!["P1".into(), "P1".into()],
                })
                .collect(),
            runs_per_cell: 4,
            memory_modes: None,
            placement: PromptPlacement::UserConcatenated,
            chat: ChatSettings::default(),
            retry_limit: 10,
            master_seed: 6,
            record_timestamps: false,
            record_prompts: false,
            parallelism: 4,
        };
        let backend: std::sync::Arc<dyn ChatBackend> = std::sync::Arc::new(fixed_backend(2.5));
        let (logs, manifest) = grid(&gc, &|_rc| backend.clone());
        assert_eq!(logs.len(), 12, "4 reps x 3 scales");
        assert!(manifest.runs.iter().all(|r| r.status == "ok"));
        // the rescaled cells keep the asymmetric qualities
        for log in &logs {
            if let EnvConfig::Pricing { params, .. } = &log.header.config.env {
                assert_eq!(params.a, vec![2.0, 2.75]);
            }
        }
    }

    #[test]
    fn empty_grid_yields_empty_manifest() {
        let gc = GridConfig {
            env: EnvConfig::Auction {
                params: AuctionParams {
                    v: 1.0,
                    n_bidders: 2,
                },
            },
            periods: 2,
            cells: vec![],
            runs_per_cell: 4,
            memory_modes: None,
            placement: PromptPlacement::System,
            chat: ChatSettings::default(),
            retry_limit: 10,
            master_seed: 0,
            record_timestamps: false,
            record_prompts: false,
            parallelism: 1,
        };
        let backend: std::sync::Arc<dyn ChatBackend> = std::sync::Arc::new(fixed_backend(0.5));
        let (logs, manifest) = grid(&gc, &|_rc| backend.clone());
        assert!(logs.is_empty());
        assert!(manifest.runs.is_empty());
    }

    #[test]
    fn auction_run_records_feedback() {
        let config = RunConfig {
            run_id: "a1".into(),
            env: EnvConfig::Auction {
                params: AuctionParams {
                    v: 1.0,
                    n_bidders: 2,
                },
            },
            periods: 4,
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
            seed: 5,
            record_timestamps: false,
            record_prompts: false,
        };
        let backend = fixed_backend(0.9);
        let log = run(&config, &backend).unwrap();
        assert_eq!(log.records.len(), 4);
        for rec in &log.records {
            let winner = rec.agents.iter().position(|a| a.won == Some(true)).unwrap();
            assert_eq!(rec.agents[winner].payment, Some(0.9));
            assert!((rec.agents[winner].profit - 0.1).abs() < 1e-12);
            let loser = 1 - winner;
            assert_eq!(rec.agents[loser].winning_bid, Some(0.9));
            assert_eq!(rec.agents[loser].profit, 0.0);
        }
    }
}
