//! Experiment harness for LLM-based pricing and bidding agents in repeated
//! markets.
//!
//! The crate is organized around a pipeline:
//!
//! - [`market`] — pure evaluation of the logit-demand Bertrand market and the
//!   first-price common-value auction, including demand shocks.
//! - [`equilibrium`] — numerical benchmarks: static Bertrand–Nash prices,
//!   joint-monopoly prices, the single-firm monopoly price, the auction Nash
//!   bid, and the prompt price ceiling.
//! - [`gateway`] — a uniform client for chat-completion and embedding
//!   services, plus deterministic scripted backends for offline tests.
//! - [`agent`] — per-period prompt assembly from market state and memory,
//!   and parsing of templated completions into plans, insights and a number.
//! - [`orchestrator`] — N-period runs and experiment grids with per-period
//!   snapshots, restore, and counterfactual plan implantation.
//! - [`analysis`] — run summaries, convergence checks, the responsiveness /
//!   stickiness panel regression, implantation effect sizes, Welch t and
//!   Fisher exact tests.
//! - [`textlab`] — sentence extraction from plans, semantic classification
//!   against reference vectors, PCA + k-means clustering, and prevalence
//!   statistics.
//! - [`cli`] — the `collab` command-line entry point.
//!
//! Most capabilities have a runnable demo under `examples/`.

pub mod agent;
pub mod analysis;
pub mod cli;
pub mod equilibrium;
pub mod gateway;
pub mod market;
pub mod orchestrator;
pub mod textlab;
