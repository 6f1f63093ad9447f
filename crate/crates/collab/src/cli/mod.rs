//! The `collab` command line: wiring configuration to runs, counterfactual
//! implantation, analysis, the text pipeline, and prompt validation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 run abort, 4 fixture
//! mismatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::agent::{self, assemble_prompt, ChatSettings, MemoryMode, PromptPlacement};
use crate::analysis::{self, RegressionResult, RunSummary};
use crate::equilibrium::{self, SolverConfig};
use crate::gateway::{
    ChatBackend, EmbedBackend, FixtureEmbedder, LiveBackend, LiveConfig, ReasoningEffort,
    ScriptedBackend, ScriptedEmbedder, ScriptedStrategy, DEFAULT_API_KEY_ENV,
};
use crate::market::{AuctionParams, MarketParams, ShockConfig};
use crate::orchestrator::{
    self, load_run_log, load_snapshot, write_manifest, write_run_log, CounterfactualRecord,
    EnvConfig, GridCell, GridConfig, RunDir, RunLog,
};
use crate::textlab::{self, SentenceRecord};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_ABORT: u8 = 3;
pub const EXIT_FIXTURE_MISMATCH: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    RunAborted(String),
    FixtureMismatch(String),
    Other(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::RunAborted(m) => write!(f, "run aborted: {m}"),
            CliError::FixtureMismatch(m) => write!(f, "fixture mismatch: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::RunAborted(_) => EXIT_ABORT,
            CliError::FixtureMismatch(_) => EXIT_FIXTURE_MISMATCH,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<orchestrator::OrchestratorError> for CliError {
    fn from(e: orchestrator::OrchestratorError) -> Self {
        match e {
            orchestrator::OrchestratorError::Config(m) => CliError::Config(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<textlab::TextlabError> for CliError {
    fn from(e: textlab::TextlabError) -> Self {
        CliError::Other(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "collab",
    version,
    about = "Repeated-market experiments with LLM pricing and bidding agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Backend: live, scripted:<strategy>, or fixture. Strategies:
    /// fixed-price:<p>, myopic, tit-for-tat:<lo>:<hi>:<start>,
    /// plan-echo:<start>.
    #[arg(long, default_value = "scripted:plan-echo:1.5")]
    pub backend: String,
    /// Service model identifier for live chat queries.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the live credential.
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    pub api_key_env: String,
    /// Base URL of the OpenAI-compatible service.
    #[arg(long)]
    pub base_url: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the static benchmark table (Nash, joint monopoly, single-firm
    /// monopoly, ceiling) for each currency scale.
    Equilibria {
        /// Currency scales (alpha, or item values with --auction).
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 3.2, 10.0])]
        scales: Vec<f64>,
        /// Per-firm quality indices.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 2.0])]
        a: Vec<f64>,
        /// Per-firm cost coefficients.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1.0])]
        c: Vec<f64>,
        #[arg(long, default_value_t = 0.25)]
        mu: f64,
        #[arg(long, default_value_t = 0.0)]
        a0: f64,
        #[arg(long, default_value_t = 100.0)]
        beta: f64,
        #[arg(long, default_value_t = equilibrium::DEFAULT_CEILING_MULTIPLIER)]
        ceiling_multiplier: f64,
        /// First-price auction benchmarks instead of the pricing market.
        #[arg(long)]
        auction: bool,
    },
    /// Execute an experiment grid from a JSON config and write run logs,
    /// snapshots, and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallel: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Re-run periods of finished runs with implanted plans and erased
    /// insights; write counterfactual records and an effect report.
    Implant {
        /// Directory holding run logs and snapshots.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Built-in sentence set (price-war, undercut) or file:<path> with
        /// one sentence per line.
        #[arg(long, default_value = "price-war")]
        sentences: String,
        /// Periods to implant, as a-b or comma list.
        #[arg(long, default_value = "2-13")]
        periods: String,
        /// Agent indices, comma separated (default: all).
        #[arg(long)]
        agents: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Summaries, convergence flags and the responsiveness regression over
    /// a directory of run logs.
    Analyze {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sentence corpus, price-war classification, clustering and prevalence
    /// reports over a directory of run logs.
    Textlab {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        clusters: usize,
        #[arg(long, default_value_t = 0.5)]
        variance_target: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dimension of scripted synthetic embeddings.
        #[arg(long, default_value_t = 64)]
        embedding_dim: usize,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Assemble the golden prompts and byte-compare them against the
    /// shipped fixture files.
    ValidatePrompts {
        /// Fixtures root (defaults to the crate's fixtures directory).
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

/// JSON experiment configuration. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    /// duopoly | monopoly | auction
    pub environment: String,
    #[serde(default = "default_periods")]
    pub periods: usize,
    /// Currency scales: alpha grid, or item values for auctions.
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    /// Prefix assignments; each entry lists one prefix per agent and forms
    /// one grid cell per scale.
    pub prefixes: Vec<Vec<String>>,
    #[serde(default = "default_runs_per_cell")]
    pub runs_per_cell: usize,
    #[serde(default)]
    pub memory_modes: Option<Vec<MemoryMode>>,
    #[serde(default)]
    pub shock_enabled: bool,
    #[serde(default)]
    pub shock_offsets: Option<Vec<f64>>,
    #[serde(default = "default_ceiling_multiplier")]
    pub ceiling_multiplier: f64,
    #[serde(default)]
    pub resample_ceiling: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: usize,
    #[serde(default)]
    pub parallel: Option<usize>,
    #[serde(default)]
    pub placement: Option<PromptPlacement>,
    // market shape (reference scale 1)
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub a0: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_bidders")]
    pub n_bidders: usize,
    // chat settings
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output")]
    pub max_output: u32,
    #[serde(default)]
    pub reasoning_effort: Option<ReasoningEffort>,
}

fn default_periods() -> usize {
    300
}
fn default_scales() -> Vec<f64> {
    vec![1.0, 3.2, 10.0]
}
fn default_runs_per_cell() -> usize {
    7
}
fn default_ceiling_multiplier() -> f64 {
    equilibrium::DEFAULT_CEILING_MULTIPLIER
}
fn default_retry_limit() -> usize {
    10
}
fn default_mu() -> f64 {
    0.25
}
fn default_beta() -> f64 {
    100.0
}
fn default_bidders() -> usize {
    2
}
fn default_temperature() -> f64 {
    1.0
}
fn default_max_output() -> u32 {
    2048
}

#[derive(Clone)]
enum BackendChoice {
    Live(LiveConfig),
    Scripted(ScriptedStrategy),
    Fixture,
}

fn parse_backend(args: &BackendArgs) -> Result<BackendChoice, CliError> {
    let spec = args.backend.as_str();
    if spec == "live" {
        let mut cfg = LiveConfig {
            api_key_env: args.api_key_env.clone(),
            ..LiveConfig::default()
        };
        if let Some(url) = &args.base_url {
            cfg.base_url = url.clone();
        }
        if let Some(model) = &args.model {
            cfg.chat_model = model.clone();
        }
        return Ok(BackendChoice::Live(cfg));
    }
    if spec == "fixture" {
        return Ok(BackendChoice::Fixture);
    }
    let Some(strategy) = spec.strip_prefix("scripted:") else {
        return Err(CliError::Config(format!(
            "unknown backend {spec:?}; expected live, scripted:<strategy>, or fixture"
        )));
    };
    let parts: Vec<&str> = strategy.split(':').collect();
    let parse_f64 = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|_| CliError::Config(format!("bad number {s:?} in backend spec")))
    };
    let strategy = match parts.as_slice() {
        ["fixed-price", p] => ScriptedStrategy::FixedPrice {
            price: parse_f64(p)?,
        },
        ["myopic"] => ScriptedStrategy::MyopicBestResponse {
            // rescaled per run by the backend factory
            params: MarketParams::benchmark_duopoly(1.0),
            firm: 0,
            start_price: None,
        },
        ["tit-for-tat", lo, hi, start] => ScriptedStrategy::TitForTatBand {
            low: parse_f64(lo)?,
            high: parse_f64(hi)?,
            start: parse_f64(start)?,
        },
        ["plan-echo", start] => ScriptedStrategy::PlanEcho {
            start_price: parse_f64(start)?,
        },
        _ => {
            return Err(CliError::Config(format!(
                "unknown scripted strategy {strategy:?}"
            )))
        }
    };
    Ok(BackendChoice::Scripted(strategy))
}

/// Instantiate the chat backend for one run, rescaling scripted strategies
/// to the run's market.
fn backend_for_run(
    choice: &BackendChoice,
    run_config: &orchestrator::RunConfig,
    live: &Option<Arc<LiveBackend>>,
) -> Result<Arc<dyn ChatBackend>, CliError> {
    match choice {
        BackendChoice::Live(_) => Ok(live.as_ref().expect("live backend built upfront").clone()),
        BackendChoice::Scripted(strategy) => {
            let strategy = match (strategy, &run_config.env) {
                (
                    ScriptedStrategy::MyopicBestResponse {
                        firm, start_price, ..
                    },
                    EnvConfig::Pricing { params, .. },
                ) => ScriptedStrategy::MyopicBestResponse {
                    params: params.clone(),
                    firm: *firm,
                    start_price: *start_price,
                },
                (s, _) => s.clone(),
            };
            Ok(Arc::new(ScriptedBackend::new(strategy, run_config.seed)))
        }
        BackendChoice::Fixture => Err(CliError::Config(
            "the fixture backend only provides embeddings; chat queries need live or scripted"
                .into(),
        )),
    }
}

fn build_grid_config(
    file: &ConfigFile,
    seed_override: Option<u64>,
    parallel_override: Option<usize>,
    backend: &BackendChoice,
) -> Result<GridConfig, CliError> {
    if file.schema_version != orchestrator::SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {})",
            file.schema_version,
            orchestrator::SCHEMA_VERSION
        )));
    }
    if file.prefixes.is_empty() || file.scales.is_empty() {
        return Err(CliError::Config(
            "grid needs at least one scale and prefix set".into(),
        ));
    }
    let n_agents = match file.environment.as_str() {
        "duopoly" => 2,
        "monopoly" => 1,
        "auction" => file.n_bidders,
        other => {
            return Err(CliError::Config(format!(
                "unknown environment {other:?}; expected duopoly, monopoly, or auction"
            )))
        }
    };
    for assignment in &file.prefixes {
        if assignment.len() != n_agents {
            return Err(CliError::Config(format!(
                "prefix assignment {assignment:?} does not match {n_agents} agents"
            )));
        }
    }
    let env = match file.environment.as_str() {
        "auction" => EnvConfig::Auction {
            params: AuctionParams {
                v: 1.0,
                n_bidders: file.n_bidders,
            },
        },
        _ => {
            let a = file.a.clone().unwrap_or_else(|| vec![2.0; n_agents]);
            let c = file.c.clone().unwrap_or_else(|| vec![1.0; n_agents]);
            if a.len() != n_agents || c.len() != n_agents {
                return Err(CliError::Config(
                    "a and c must have one entry per firm".into(),
                ));
            }
            let shock = if file.shock_enabled {
                match &file.shock_offsets {
                    Some(offsets) => ShockConfig {
                        enabled: true,
                        offsets: offsets.clone(),
                    },
                    None => ShockConfig::default_shocks(),
                }
            } else {
                ShockConfig::disabled()
            };
            EnvConfig::Pricing {
                params: MarketParams {
                    alpha: 1.0,
                    beta: file.beta,
                    mu: file.mu,
                    a0: file.a0,
                    a,
                    c,
                },
                shock,
                ceiling_multiplier: file.ceiling_multiplier,
                resample_ceiling: file.resample_ceiling,
            }
        }
    };
    let placement = file.placement.unwrap_or(match file.environment.as_str() {
        "auction" => PromptPlacement::System,
        _ => PromptPlacement::UserConcatenated,
    });
    let (live, model_default) = match backend {
        BackendChoice::Live(cfg) => (true, cfg.chat_model.clone()),
        _ => (false, "scripted".to_string()),
    };
    let cells = file
        .scales
        .iter()
        .flat_map(|scale| {
            file.prefixes.iter().map(move |prefixes| GridCell {
                scale: *scale,
                prefixes: prefixes.clone(),
            })
        })
        .collect();
    Ok(GridConfig {
        env,
        periods: file.periods,
        cells,
        runs_per_cell: file.runs_per_cell,
        memory_modes: file.memory_modes.clone(),
        placement,
        chat: ChatSettings {
            model_id: file.model.clone().unwrap_or(model_default),
            temperature: file.temperature,
            max_output: file.max_output,
            reasoning_effort: file.reasoning_effort,
        },
        retry_limit: file.retry_limit,
        master_seed: seed_override.unwrap_or(file.seed),
        record_timestamps: live,
        record_prompts: live,
        parallelism: parallel_override.or(file.parallel).unwrap_or(1),
    })
}

fn default_fixtures_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Market shape for the benchmark table; `alpha` comes from the scale grid.
pub struct EquilibriaRequest {
    pub scales: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub mu: f64,
    pub a0: f64,
    pub beta: f64,
    pub ceiling_multiplier: f64,
    pub auction: bool,
}

pub fn cmd_equilibria(
    request: &EquilibriaRequest,
    out: &mut impl std::io::Write,
) -> Result<(), CliError> {
    let EquilibriaRequest {
        scales,
        a,
        c,
        mu,
        a0,
        beta,
        ceiling_multiplier,
        auction,
    } = request;
    let (mu, a0, beta, ceiling_multiplier) = (*mu, *a0, *beta, *ceiling_multiplier);
    if *auction {
        writeln!(
            out,
            "{:>8}  {:>10}  {:>22}",
            "v", "nash_bid", "cent_grid_equilibria"
        )?;
        for &v in scales {
            let nash = equilibrium::auction_nash(&AuctionParams { v, n_bidders: 2 })
                .map_err(|e| CliError::Config(e.to_string()))?;
            writeln!(
                out,
                "{v:>8.2}  {:>10.2}  {:>10.2} {:>10.2}",
                nash.bid, nash.cent_grid_equilibria[0], nash.cent_grid_equilibria[1]
            )?;
        }
        return Ok(());
    }
    writeln!(
        out,
        "{:>8}  {:>8}  {:>10}  {:>8}  {:>10}  {:>10}  {:>8}",
        "alpha", "p_nash", "pi_nash", "p_m", "pi_m", "p_single", "ceiling"
    )?;
    for &alpha in scales {
        let params = MarketParams {
            alpha,
            beta,
            mu,
            a0,
            a: a.to_vec(),
            c: c.to_vec(),
        };
        let cfg = SolverConfig::for_params(&params);
        let b = equilibrium::compute_benchmarks(&params, &cfg, ceiling_multiplier)
            .map_err(|e| CliError::Config(e.to_string()))?;
        for firm in 0..params.n_firms() {
            writeln!(
                out,
                "{alpha:>8.2}  {:>8.2}  {:>10.2}  {:>8.2}  {:>10.2}  {:>10.2}  {:>8.2}",
                b.nash_prices[firm],
                b.nash_profits[firm],
                b.monopoly_prices[firm],
                b.monopoly_profits[firm],
                b.single_monopoly_prices[firm],
                b.price_ceiling,
            )?;
        }
    }
    Ok(())
}

fn cmd_run(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    parallel: Option<usize>,
    backend_args: &BackendArgs,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let file: ConfigFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let choice = parse_backend(backend_args)?;
    let grid_config = build_grid_config(&file, seed, parallel, &choice)?;
    let live = match &choice {
        BackendChoice::Live(cfg) => Some(Arc::new(LiveBackend::new(cfg.clone()))),
        _ => None,
    };
    // fail fast on backend problems before touching the filesystem
    for rc in grid_config.enumerate_runs() {
        backend_for_run(&choice, &rc, &live)?;
        rc.validate()?;
    }
    let dir = RunDir::new(out);
    let factory = |rc: &orchestrator::RunConfig| -> Arc<dyn ChatBackend> {
        backend_for_run(&choice, rc, &live).expect("validated above")
    };
    let (logs, manifest) = orchestrator::grid(&grid_config, &factory);
    for log in &logs {
        write_run_log(&dir, log)?;
    }
    write_manifest(&dir, &manifest)?;
    let aborted: Vec<&str> = manifest
        .runs
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| r.run_id.as_str())
        .collect();
    println!(
        "wrote {} runs to {} (manifest: {})",
        logs.len(),
        dir.root.display(),
        dir.manifest_path().display()
    );
    if !aborted.is_empty() {
        return Err(CliError::RunAborted(format!(
            "{} run(s) did not complete: {}",
            aborted.len(),
            aborted.join(", ")
        )));
    }
    Ok(())
}

fn parse_periods(spec: &str) -> Result<Vec<usize>, CliError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(vec![]);
    }
    if let Some((lo, hi)) = spec.split_once('-') {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad period {lo:?}")))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad period {hi:?}")))?;
        if hi < lo {
            return Err(CliError::Config(format!("empty period range {spec:?}")));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad period {p:?}")))
        })
        .collect()
}

fn load_sentence_set(spec: &str, fixtures: &Path) -> Result<Vec<String>, CliError> {
    let text = match spec {
        "price-war" => std::fs::read_to_string(fixtures.join("sentences/price_war.txt"))?,
        "undercut" => std::fs::read_to_string(fixtures.join("sentences/undercut.txt"))?,
        other => match other.strip_prefix("file:") {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?,
            None => {
                return Err(CliError::Config(format!(
                    "unknown sentence set {other:?}; expected price-war, undercut, or file:<path>"
                )))
            }
        },
    };
    let sentences: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if sentences.is_empty() {
        return Err(CliError::Config("sentence set is empty".into()));
    }
    Ok(sentences)
}

fn load_all_logs(runs: &Path) -> Result<Vec<RunLog>, CliError> {
    let dir = RunDir::new(runs);
    let paths = dir
        .log_paths()
        .map_err(|e| CliError::Config(format!("cannot scan {}: {e}", runs.display())))?;
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no run logs (*.jsonl) in {}",
            runs.display()
        )));
    }
    paths
        .iter()
        .map(|p| load_run_log(p).map_err(CliError::from))
        .collect()
}

fn cmd_implant(
    runs: &Path,
    out_dir: &Path,
    sentences_spec: &str,
    periods_spec: &str,
    agents_spec: Option<&str>,
    backend_args: &BackendArgs,
) -> Result<(), CliError> {
    let fixtures = default_fixtures_root();
    let sentences = load_sentence_set(sentences_spec, &fixtures)?;
    let periods = parse_periods(periods_spec)?;
    let choice = parse_backend(backend_args)?;
    let live = match &choice {
        BackendChoice::Live(cfg) => Some(Arc::new(LiveBackend::new(cfg.clone()))),
        _ => None,
    };
    let dir = RunDir::new(runs);
    let mut logs = load_all_logs(runs)?;
    // attach the snapshots needed for the requested periods
    for log in &mut logs {
        for &p in &periods {
            if let Ok(snapshot) = load_snapshot(&dir, &log.header.run_id, p) {
                log.snapshots.push(snapshot);
            }
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut all_records: Vec<CounterfactualRecord> = Vec::new();
    let mut all_errors: Vec<String> = Vec::new();
    let mut prefix_of_run: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for log in &logs {
        let agents: Vec<usize> = match agents_spec {
            Some(spec) => spec
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad agent index {s:?}")))
                })
                .collect::<Result<_, _>>()?,
            None => (0..log.header.config.agents.len()).collect(),
        };
        prefix_of_run.insert(
            log.header.run_id.clone(),
            log.header
                .config
                .agents
                .iter()
                .map(|a| a.prefix.clone())
                .collect(),
        );
        let backend = backend_for_run(&choice, &log.header.config, &live)?;
        let outcome = orchestrator::implant(log, &periods, &agents, &sentences, backend.as_ref());
        all_records.extend(outcome.records);
        all_errors.extend(outcome.errors);
    }
    // counterfactual records as JSONL
    let records_path = out_dir.join("counterfactuals.jsonl");
    let mut body = String::new();
    for r in &all_records {
        body.push_str(&serde_json::to_string(r).map_err(|e| CliError::Other(e.to_string()))?);
        body.push('\n');
    }
    std::fs::write(&records_path, body)?;
    println!(
        "implanted {} records ({} errors) -> {}",
        all_records.len(),
        all_errors.len(),
        records_path.display()
    );
    if !all_errors.is_empty() {
        let errors_path = out_dir.join("implant_errors.txt");
        std::fs::write(&errors_path, all_errors.join("\n"))?;
    }
    if all_records.len() >= 2 {
        let effect = analysis::implantation_effect(&all_records, |r| {
            prefix_of_run
                .get(&r.run_id)
                .and_then(|prefixes| prefixes.get(r.agent))
                .cloned()
                .unwrap_or_else(|| "unknown".into())
        })?;
        std::fs::write(
            out_dir.join("effect_report.json"),
            serde_json::to_string_pretty(&effect).map_err(|e| CliError::Other(e.to_string()))?,
        )?;
        std::fs::write(out_dir.join("effect.csv"), analysis::effect_csv(&effect))?;
    }
    Ok(())
}

fn cmd_analyze(runs: &Path, out_dir: &Path) -> Result<(), CliError> {
    let logs = load_all_logs(runs)?;
    std::fs::create_dir_all(out_dir)?;
    let mut summaries: Vec<RunSummary> = Vec::new();
    for log in &logs {
        match analysis::summarize_run(log) {
            Ok(s) => summaries.push(s),
            Err(e) => eprintln!("skipping summary for {}: {e}", log.header.run_id),
        }
    }
    std::fs::write(
        out_dir.join("summary.csv"),
        analysis::summary_csv(&summaries),
    )?;

    // convergence flags against each run's static benchmark target
    let mut convergence = String::from("run_id,agent,target,converged\n");
    for log in &logs {
        if let EnvConfig::Pricing { params, .. } = &log.header.config.env {
            if log.records.len() < 300 {
                continue;
            }
            let cfg = SolverConfig::for_params(params);
            let targets: Vec<f64> = if params.n_firms() == 1 {
                vec![equilibrium::single_monopoly_price(params, 0, &cfg)
                    .map_err(|e| CliError::Other(e.to_string()))?]
            } else {
                equilibrium::nash_prices(params, &cfg)
                    .map_err(|e| CliError::Other(e.to_string()))?
            };
            for (agent_idx, target) in targets.iter().enumerate() {
                let series: Vec<f64> = log
                    .records
                    .iter()
                    .map(|r| r.agents[agent_idx].value)
                    .collect();
                let flag = analysis::convergence_check(&series, *target)?;
                convergence.push_str(&format!(
                    "{},{agent_idx},{target:.4},{flag}\n",
                    log.header.run_id
                ));
            }
        }
    }
    std::fs::write(out_dir.join("convergence.csv"), convergence)?;

    // regression per symmetric prefix cell with full-length runs
    let mut columns: Vec<(String, RegressionResult)> = Vec::new();
    let mut prefixes: Vec<String> = logs
        .iter()
        .filter(|l| l.records.len() >= 300 && l.header.config.agents.len() == 2)
        .filter(|l| {
            let a = &l.header.config.agents;
            a[0].prefix == a[1].prefix
        })
        .map(|l| l.header.config.agents[0].prefix.clone())
        .collect();
    prefixes.sort();
    prefixes.dedup();
    for prefix in prefixes {
        match analysis::responsiveness_regression(&logs, Some(&prefix)) {
            Ok(result) => columns.push((format!("{prefix} (vs. {prefix})"), result)),
            Err(e) => eprintln!("regression for {prefix} skipped: {e}"),
        }
    }
    if !columns.is_empty() {
        std::fs::write(
            out_dir.join("regression.csv"),
            analysis::regression_table(&columns),
        )?;
    }
    let report = serde_json::json!({
        "runs": logs.len(),
        "summaries": summaries,
        "regressions": columns.iter().map(|(l, r)| (l, r)).collect::<Vec<_>>(),
    });
    std::fs::write(
        out_dir.join("analysis_report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?,
    )?;
    println!("analysis reports written to {}", out_dir.display());
    Ok(())
}

fn cmd_textlab(
    runs: &Path,
    out_dir: &Path,
    clusters: usize,
    variance_target: f64,
    seed: u64,
    embedding_dim: usize,
    backend_args: &BackendArgs,
) -> Result<(), CliError> {
    let logs = load_all_logs(runs)?;
    std::fs::create_dir_all(out_dir)?;
    // sentence corpus from every agent's plans, with provenance
    let mut corpus: Vec<SentenceRecord> = Vec::new();
    for log in &logs {
        for record in &log.records {
            for (agent_idx, agent) in record.agents.iter().enumerate() {
                for text in textlab::split_sentences(&agent.new_plans) {
                    corpus.push(SentenceRecord {
                        text,
                        run_id: log.header.run_id.clone(),
                        prefix_id: log.header.config.agents[agent_idx].prefix.clone(),
                        period: record.period,
                        agent: agent_idx,
                    });
                }
            }
        }
    }
    let mut corpus_jsonl = String::new();
    for r in &corpus {
        corpus_jsonl
            .push_str(&serde_json::to_string(r).map_err(|e| CliError::Other(e.to_string()))?);
        corpus_jsonl.push('\n');
    }
    std::fs::write(out_dir.join("corpus.jsonl"), corpus_jsonl)?;

    let choice = parse_backend(backend_args)?;
    let (embedder, chat): (Box<dyn EmbedBackend>, Box<dyn ChatBackend>) = match &choice {
        BackendChoice::Live(cfg) => (
            Box::new(LiveBackend::new(cfg.clone())),
            Box::new(LiveBackend::new(cfg.clone())),
        ),
        BackendChoice::Scripted(_) => (
            Box::new(ScriptedEmbedder::new(embedding_dim, seed)),
            Box::new(ScriptedBackend::new(
                ScriptedStrategy::FixedPrice { price: 1.0 },
                seed,
            )),
        ),
        BackendChoice::Fixture => (
            Box::new(
                FixtureEmbedder::from_jsonl(
                    &default_fixtures_root().join("embeddings/price_war_reference.jsonl"),
                )
                .map_err(|e| CliError::Config(e.to_string()))?,
            ),
            Box::new(ScriptedBackend::new(
                ScriptedStrategy::FixedPrice { price: 1.0 },
                seed,
            )),
        ),
    };

    // price-war filter and classification
    let filtered = textlab::filter_phrase(&corpus, &textlab::PRICE_WAR_PHRASES);
    let mut classification = String::from("run_id,period,agent,prefix,label,score,text\n");
    if !filtered.is_empty() {
        let avoid = textlab::builtin_avoid_reference(embedder.as_ref())?;
        let start = textlab::builtin_start_reference(embedder.as_ref())?;
        let texts: Vec<String> = filtered.iter().map(|r| r.text.clone()).collect();
        match embedder.embed(&texts) {
            Ok(batch) => {
                for (r, v) in filtered.iter().zip(&batch.vectors) {
                    let (label, score) = textlab::classify_price_war(v, &avoid, &start)?;
                    classification.push_str(&format!(
                        "{},{},{},{},{:?},{score:.6},{}\n",
                        r.run_id,
                        r.period,
                        r.agent,
                        r.prefix_id,
                        label,
                        csv_quote(&r.text)
                    ));
                }
            }
            Err(e) => {
                classification.push_str(&format!("# classification unavailable: {e}\n"));
            }
        }
    }
    std::fs::write(out_dir.join("classification.csv"), classification)?;

    // clustering and prevalence
    let k = clusters.min(corpus.len());
    if k >= 2 && corpus.len() >= k {
        let options = textlab::ClusterOptions {
            k,
            variance_target,
            seed,
            ..textlab::ClusterOptions::default()
        };
        match textlab::cluster_corpus(&corpus, embedder.as_ref(), chat.as_ref(), &options) {
            Ok(model) => {
                let mut prevalence_csv = String::from("cluster,count,summary");
                let prefix_ids: Vec<String> = model
                    .prevalence
                    .first()
                    .map(|c| c.relative.keys().cloned().collect())
                    .unwrap_or_default();
                for p in &prefix_ids {
                    prevalence_csv.push_str(&format!(",{p}"));
                }
                prevalence_csv.push('\n');
                for c in &model.prevalence {
                    prevalence_csv.push_str(&format!(
                        "{},{},{}",
                        c.cluster,
                        c.count,
                        csv_quote(&model.summaries[c.cluster])
                    ));
                    for p in &prefix_ids {
                        prevalence_csv.push_str(&format!(",{:.4}", c.relative[p]));
                    }
                    prevalence_csv.push('\n');
                }
                std::fs::write(out_dir.join("prevalence.csv"), prevalence_csv)?;
                std::fs::write(
                    out_dir.join("cluster_report.json"),
                    serde_json::to_string_pretty(&model)
                        .map_err(|e| CliError::Other(e.to_string()))?,
                )?;
            }
            Err(e) => eprintln!("clustering skipped: {e}"),
        }
    } else {
        eprintln!(
            "clustering skipped: corpus of {} sentences is too small",
            corpus.len()
        );
    }
    println!(
        "textlab reports written to {} ({} sentences, {} price-war)",
        out_dir.display(),
        corpus.len(),
        filtered.len()
    );
    Ok(())
}

fn csv_quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

/// Compare the assembled golden prompts against the fixture files byte by
/// byte; any mismatch reports the first diverging offset.
pub fn cmd_validate_prompts(
    fixtures: &Path,
    out: &mut impl std::io::Write,
) -> Result<(), CliError> {
    let mut failures = Vec::new();
    for case in agent::goldens::all() {
        let request = assemble_prompt(&case.state, &case.window, &ChatSettings::default());
        let mut checks: Vec<(&str, String)> = vec![(case.user_file, request.user_text.clone())];
        if let Some(system_file) = case.system_file {
            match &request.system_text {
                Some(text) => checks.push((system_file, text.clone())),
                None => {
                    failures.push(format!(
                        "{system_file}: expected a system prompt (placement must be system)"
                    ));
                    continue;
                }
            }
        } else if request.system_text.is_some() {
            failures.push(format!("{}: unexpected system prompt", case.user_file));
        }
        for (file, actual) in checks {
            let path = fixtures.join(file);
            let expected = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            match first_divergence(expected.as_bytes(), actual.as_bytes()) {
                None => writeln!(out, "PASS {file}")?,
                Some(offset) => {
                    writeln!(out, "FAIL {file} (first diverging byte at offset {offset})")?;
                    failures.push(format!("{file} diverges at byte {offset}"));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::FixtureMismatch(failures.join("; ")))
    }
}

fn first_divergence(expected: &[u8], actual: &[u8]) -> Option<usize> {
    let shared = expected.len().min(actual.len());
    for i in 0..shared {
        if expected[i] != actual[i] {
            return Some(i);
        }
    }
    if expected.len() != actual.len() {
        return Some(shared);
    }
    None
}

/// Run one parsed command; errors carry their exit code.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Equilibria {
            scales,
            a,
            c,
            mu,
            a0,
            beta,
            ceiling_multiplier,
            auction,
        } => cmd_equilibria(
            &EquilibriaRequest {
                scales,
                a,
                c,
                mu,
                a0,
                beta,
                ceiling_multiplier,
                auction,
            },
            &mut std::io::stdout(),
        ),
        Command::Run {
            config,
            out,
            seed,
            parallel,
            backend,
        } => cmd_run(&config, &out, seed, parallel, &backend),
        Command::Implant {
            runs,
            out,
            sentences,
            periods,
            agents,
            backend,
        } => cmd_implant(
            &runs,
            &out,
            &sentences,
            &periods,
            agents.as_deref(),
            &backend,
        ),
        Command::Analyze { runs, out } => cmd_analyze(&runs, &out),
        Command::Textlab {
            runs,
            out,
            clusters,
            variance_target,
            seed,
            embedding_dim,
            backend,
        } => cmd_textlab(
            &runs,
            &out,
            clusters,
            variance_target,
            seed,
            embedding_dim,
            &backend,
        ),
        Command::ValidatePrompts { fixtures } => cmd_validate_prompts(
            &fixtures.unwrap_or_else(default_fixtures_root),
            &mut std::io::stdout(),
        ),
    }
}
