//! Quantitative analysis of run logs: summary metrics, convergence checks,
//! the responsiveness/stickiness panel regression, implantation effect
//! sizes, and the underlying statistical tests.

mod regression;
pub mod stats;

pub use regression::{fit_fixed_effects, PanelObservation, RegressionError, RegressionResult};
pub use stats::{fisher_exact, one_sample_t, percentile, welch_t, StatsError, TTest, Tails};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{CounterfactualRecord, RunLog};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Last-50-period averages for one run, normalized by the run's currency
/// scale (alpha, or the item value for auctions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub scale: f64,
    /// Mean price (or bid) per agent over the final 50 periods, /scale.
    pub mean_price: Vec<f64>,
    /// Mean profit per agent over the final 50 periods, /scale.
    pub mean_profit: Vec<f64>,
    /// Mean total per-period profit over the final 50 periods, /scale.
    pub mean_total_profit: f64,
    /// Normalized per-period price series, one inner vector per agent.
    pub price_series: Vec<Vec<f64>>,
    /// Normalized per-period profit series, one inner vector per agent.
    pub profit_series: Vec<Vec<f64>>,
}

pub const SUMMARY_WINDOW: usize = 50;

/// Averages over the final 50 periods, all values divided by the run scale.
pub fn summarize_run(log: &RunLog) -> Result<RunSummary, AnalysisError> {
    let periods = log.records.len();
    if periods < SUMMARY_WINDOW {
        return Err(AnalysisError::InsufficientData(format!(
            "run {} has {periods} periods, need at least {SUMMARY_WINDOW}",
            log.header.run_id
        )));
    }
    let scale = log.header.config.env.scale();
    let n_agents = log.header.config.agents.len();
    let mut price_series = vec![Vec::with_capacity(periods); n_agents];
    let mut profit_series = vec![Vec::with_capacity(periods); n_agents];
    for record in &log.records {
        for (i, agent) in record.agents.iter().enumerate() {
            price_series[i].push(agent.value / scale);
            profit_series[i].push(agent.profit / scale);
        }
    }
    let window = periods - SUMMARY_WINDOW..periods;
    let mean_over = |series: &[f64]| -> f64 {
        series[window.clone()].iter().sum::<f64>() / SUMMARY_WINDOW as f64
    };
    let mean_price: Vec<f64> = price_series.iter().map(|s| mean_over(s)).collect();
    let mean_profit: Vec<f64> = profit_series.iter().map(|s| mean_over(s)).collect();
    Ok(RunSummary {
        run_id: log.header.run_id.clone(),
        scale,
        mean_total_profit: mean_profit.iter().sum(),
        mean_price,
        mean_profit,
        price_series,
        profit_series,
    })
}

/// Convergence to `target`: both the 10th and 90th percentile of the prices
/// in periods 201-300 lie within 5% of the target.
pub fn convergence_check(series: &[f64], target: f64) -> Result<bool, AnalysisError> {
    if series.len() < 300 {
        return Err(AnalysisError::InsufficientData(format!(
            "convergence window needs periods 201-300, series has {}",
            series.len()
        )));
    }
    let window = &series[200..300];
    let p10 = percentile(window, 10.0)?;
    let p90 = percentile(window, 90.0)?;
    let within = |p: f64| (p - target).abs() <= 0.05 * target.abs();
    Ok(within(p10) && within(p90))
}

/// Per-period share of the optimal profit for a monopoly run, and the
/// fraction of periods 101 onward capturing at least 99% of it.
pub fn profit_capture(log: &RunLog, optimum: f64) -> Result<(Vec<f64>, f64), AnalysisError> {
    if log.header.config.agents.len() != 1 {
        return Err(AnalysisError::InsufficientData(
            "profit capture is defined for monopoly logs".into(),
        ));
    }
    if optimum <= 0.0 {
        return Err(AnalysisError::InsufficientData(
            "optimum must be positive".into(),
        ));
    }
    let shares: Vec<f64> = log
        .records
        .iter()
        .map(|r| r.agents[0].profit / optimum)
        .collect();
    if shares.len() <= 100 {
        return Err(AnalysisError::InsufficientData(format!(
            "periods 101+ window is empty for a {}-period run",
            shares.len()
        )));
    }
    let tail = &shares[100..shares.len().min(300)];
    let fraction = tail.iter().filter(|s| **s >= 0.99).count() as f64 / tail.len() as f64;
    Ok((shares, fraction))
}

/// Build the panel for the responsiveness/stickiness regression from
/// duopoly logs: restrict to periods 101-300, form disjoint (t-1, t) pairs
/// for t in {102, 104, ..., 300}, and alternate which firm is "self"
/// between consecutive pairs. Each (run, self-firm) pair is one
/// fixed-effect group.
pub fn pair_observations(logs: &[RunLog]) -> Result<Vec<PanelObservation>, AnalysisError> {
    let mut obs = Vec::new();
    for (run_idx, log) in logs.iter().enumerate() {
        if log.records.len() < 300 {
            return Err(AnalysisError::InsufficientData(format!(
                "run {} has {} periods, the regression needs 300",
                log.header.run_id,
                log.records.len()
            )));
        }
        if log.header.config.agents.len() != 2 {
            return Err(AnalysisError::InsufficientData(format!(
                "run {} is not a duopoly",
                log.header.run_id
            )));
        }
        let price = |period: usize, firm: usize| log.records[period - 1].agents[firm].value;
        for (k, t) in (102..=300).step_by(2).enumerate() {
            let firm = k % 2;
            obs.push(PanelObservation {
                group: (run_idx * 2 + firm) as u64,
                y: price(t, firm),
                own_lag: price(t - 1, firm),
                competitor_lag: price(t - 1, 1 - firm),
            });
        }
    }
    Ok(obs)
}

/// The responsiveness/stickiness regression over a set of duopoly logs.
/// `prefix_filter` keeps only runs whose agents all use the given prefix.
pub fn responsiveness_regression(
    logs: &[RunLog],
    prefix_filter: Option<&str>,
) -> Result<RegressionResult, AnalysisError> {
    let filtered: Vec<RunLog> = logs
        .iter()
        .filter(|log| match prefix_filter {
            Some(p) => log.header.config.agents.iter().all(|a| a.prefix == p),
            None => true,
        })
        .cloned()
        .collect();
    if filtered.is_empty() {
        return Err(AnalysisError::InsufficientData(
            "no runs match the prefix filter".into(),
        ));
    }
    let obs = pair_observations(&filtered)?;
    Ok(fit_fixed_effects(&obs)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEffect {
    pub mean_delta: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Implantation effect sizes: overall and per-stratum mean deltas with
/// two-sided tests against zero, plus a Welch test between two strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub mean_delta: f64,
    pub p_value: f64,
    pub n: usize,
    pub strata: BTreeMap<String, StratumEffect>,
    /// Welch p-value for the difference between strata (exactly two).
    pub between_p: Option<f64>,
}

pub fn implantation_effect(
    records: &[CounterfactualRecord],
    stratifier: impl Fn(&CounterfactualRecord) -> String,
) -> Result<EffectEstimate, AnalysisError> {
    if records.len() < 2 {
        return Err(AnalysisError::InsufficientData(format!(
            "need at least 2 counterfactual records, got {}",
            records.len()
        )));
    }
    let deltas: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let overall = one_sample_t(&deltas, 0.0, Tails::Two)?;
    let mut by_stratum: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_stratum.entry(stratifier(r)).or_default().push(r.delta);
    }
    let mut strata = BTreeMap::new();
    for (label, ds) in &by_stratum {
        let test = one_sample_t(ds, 0.0, Tails::Two)?;
        strata.insert(
            label.clone(),
            StratumEffect {
                mean_delta: ds.iter().sum::<f64>() / ds.len() as f64,
                p_value: test.p,
                n: ds.len(),
            },
        );
    }
    let between_p = if by_stratum.len() == 2 {
        let groups: Vec<&Vec<f64>> = by_stratum.values().collect();
        Some(welch_t(groups[0], groups[1], Tails::Two)?.p)
    } else {
        None
    };
    Ok(EffectEstimate {
        mean_delta: deltas.iter().sum::<f64>() / deltas.len() as f64,
        p_value: overall.p,
        n: deltas.len(),
        strata,
        between_p,
    })
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Per-run summary table as CSV.
pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut out = String::from("run_id,scale,agent,mean_price,mean_profit,mean_total_profit\n");
    for s in summaries {
        for (i, (p, pi)) in s.mean_price.iter().zip(&s.mean_profit).enumerate() {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6}\n",
                csv_escape(&s.run_id),
                s.scale,
                i,
                p,
                pi,
                s.mean_total_profit
            ));
        }
    }
    out
}

/// Regression table: coefficient rows with standard errors beneath, then N
/// and R-squared, one column per treatment.
pub fn regression_table(columns: &[(String, RegressionResult)]) -> String {
    let mut out = String::new();
    let header: Vec<String> = std::iter::once(String::new())
        .chain(columns.iter().map(|(l, _)| l.clone()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    let row = |label: &str, f: &dyn Fn(&RegressionResult) -> String| -> String {
        std::iter::once(label.to_string())
            .chain(columns.iter().map(|(_, r)| f(r)))
            .collect::<Vec<_>>()
            .join(",")
    };
    out.push_str(&row("Self t-1", &|r| format!("{:.3}", r.gamma)));
    out.push('\n');
    out.push_str(&row("", &|r| format!("({:.3})", r.se_gamma)));
    out.push('\n');
    out.push_str(&row("Competitor t-1", &|r| format!("{:.3}", r.delta)));
    out.push('\n');
    out.push_str(&row("", &|r| format!("({:.3})", r.se_delta)));
    out.push('\n');
    out.push_str(&row("N", &|r| r.n.to_string()));
    out.push('\n');
    out.push_str(&row("R2", &|r| format!("{:.3}", r.r_squared)));
    out.push('\n');
    out
}

/// Implantation effect report as CSV (one row per stratum plus the overall).
pub fn effect_csv(effect: &EffectEstimate) -> String {
    let mut out = String::from("stratum,mean_delta,p_value,n\n");
    out.push_str(&format!(
        "overall,{:.6},{:.6e},{}\n",
        effect.mean_delta, effect.p_value, effect.n
    ));
    for (label, s) in &effect.strata {
        out.push_str(&format!(
            "{},{:.6},{:.6e},{}\n",
            csv_escape(label),
            s.mean_delta,
            s.p_value,
            s.n
        ));
    }
    if let Some(p) = effect.between_p {
        out.push_str(&format!("between,,{p:.6e},\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ChatSettings, MemoryMode, PromptPlacement};
    use crate::equilibrium;
    use crate::gateway::{ScriptedBackend, ScriptedStrategy};
    use crate::market::{MarketParams, ShockConfig};
    use crate::orchestrator::{self, AgentSpec, EnvConfig, RunConfig};

    fn scripted_run(price: f64, periods: usize, alpha: f64, n_firms: usize) -> RunLog {
        let params = if n_firms == 1 {
            MarketParams::benchmark_monopoly(alpha)
        } else {
            MarketParams::benchmark_duopoly(alpha)
        };
        let config = RunConfig {
            run_id: format!("scripted-{price}-{alpha}"),
            env: EnvConfig::Pricing {
                params,
                shock: ShockConfig::disabled(),
                ceiling_multiplier: equilibrium::DEFAULT_CEILING_MULTIPLIER,
                resample_ceiling: false,
            },
            periods,
            agents: (0..n_firms)
                .map(|_| AgentSpec {
                    prefix: "P1".into(),
                    memory_mode: MemoryMode::Full,
                })
                .collect(),
            placement: PromptPlacement::UserConcatenated,
            chat: ChatSettings::default(),
            retry_limit: 10,
            seed: 1,
            record_timestamps: false,
            record_prompts: false,
        };
        let backend = ScriptedBackend::new(ScriptedStrategy::FixedPrice { price }, 0);
        orchestrator::run(&config, &backend).unwrap()
    }

    #[test]
    fn constant_price_run_summarizes_to_the_constant() {
        // fixed price 1.68*alpha at alpha = 1 and alpha = 10
        let a1 = summarize_run(&scripted_run(1.68, 60, 1.0, 2)).unwrap();
        assert!((a1.mean_price[0] - 1.68).abs() < 1e-12);
        let a10 = summarize_run(&scripted_run(16.8, 60, 10.0, 2)).unwrap();
        assert!((a10.mean_price[0] - 1.68).abs() < 1e-12);
        // normalization makes the two runs agree to floating-point noise
        assert!((a1.mean_price[0] - a10.mean_price[0]).abs() < 1e-12);
        assert!((a1.mean_profit[0] - a10.mean_profit[0]).abs() < 1e-12);
    }

    #[test]
    fn summary_window_boundary() {
        let log = scripted_run(2.0, 50, 1.0, 2);
        let s = summarize_run(&log).unwrap();
        assert_eq!(s.price_series[0].len(), 50);
        assert!((s.mean_price[0] - 2.0).abs() < 1e-12);
        let short = scripted_run(2.0, 49, 1.0, 2);
        assert!(summarize_run(&short).is_err());
    }

    #[test]
    fn summary_matches_hand_computed_means() {
        // synthetic series with a known hand-computed mean over the window
        let mut log = scripted_run(1.0, 60, 1.0, 2);
        for (i, rec) in log.records.iter_mut().enumerate() {
            rec.agents[0].value = 1.0 + (i as f64) * 0.01;
        }
        // window = periods 11..60 (indices 10..59): values 1.10 .. 1.59
        let s = summarize_run(&log).unwrap();
        let expected = (0..50).map(|i| 1.10 + 0.01 * i as f64).sum::<f64>() / 50.0;
        assert!((s.mean_price[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn convergence_boundaries() {
        let constant = vec![2.0; 300];
        assert!(convergence_check(&constant, 2.0).unwrap());
        // 10th percentile at 0.94 * target fails
        let mut series = vec![2.0; 300];
        for x in series.iter_mut().take(250).skip(200) {
            *x = 0.94 * 2.0;
        }
        assert!(!convergence_check(&series, 2.0).unwrap());
        assert!(convergence_check(&[2.0; 299], 2.0).is_err());
    }

    #[test]
    fn profit_capture_counts_good_periods() {
        let params = MarketParams::benchmark_monopoly(1.0);
        let cfg = equilibrium::SolverConfig::for_params(&params);
        let p_m = equilibrium::single_monopoly_price(&params, 0, &cfg).unwrap();
        let q = crate::market::logit_demand(&[p_m], &params, 0.0).unwrap();
        let optimum = crate::market::firm_profit(p_m, q[0], 1.0, 1.0);

        let log = scripted_run(crate::market::round2(p_m), 150, 1.0, 1);
        let (shares, fraction) = profit_capture(&log, optimum).unwrap();
        assert_eq!(shares.len(), 150);
        assert_eq!(fraction, 1.0, "rounded optimal price still captures 99%");

        let low = scripted_run(crate::market::round2(0.9 * p_m), 150, 1.0, 1);
        let (_, fraction) = profit_capture(&low, optimum).unwrap();
        assert_eq!(fraction, 0.0);

        let short = scripted_run(2.0, 100, 1.0, 1);
        assert!(profit_capture(&short, optimum).is_err());
    }

    #[test]
    fn pairing_yields_one_hundred_pairs_per_run() {
        let logs = vec![scripted_run(2.0, 300, 1.0, 2); 3];
        let obs = pair_observations(&logs).unwrap();
        assert_eq!(obs.len(), 300);
        // alternating self firm: groups 0 and 1 each get 50 per run
        let g0 = obs.iter().filter(|o| o.group == 0).count();
        assert_eq!(g0, 50);
        let short = vec![scripted_run(2.0, 299, 1.0, 2)];
        assert!(pair_observations(&short).is_err());
    }

    #[test]
    fn all_zero_deltas_are_a_perfect_null() {
        let records: Vec<CounterfactualRecord> = (0..10)
            .map(|i| CounterfactualRecord {
                run_id: format!("r{}", i % 2),
                period: 2,
                agent: 0,
                sentence: "s".into(),
                original_value: 2.0,
                counterfactual_value: 2.0,
                delta: 0.0,
            })
            .collect();
        let effect = implantation_effect(&records, |r| r.run_id.clone()).unwrap();
        assert_eq!(effect.mean_delta, 0.0);
        assert_eq!(effect.p_value, 1.0);
        assert_eq!(effect.n, 10);
        assert_eq!(effect.strata.len(), 2);
    }

    #[test]
    fn constant_positive_deltas_reject_the_null() {
        let records: Vec<CounterfactualRecord> = (0..40)
            .map(|i| CounterfactualRecord {
                run_id: "r".into(),
                period: 2 + i % 12,
                agent: i % 2,
                sentence: "raise".into(),
                original_value: 2.0,
                counterfactual_value: 2.1 + 0.001 * (i % 5) as f64,
                delta: 0.1 + 0.001 * (i % 5) as f64,
            })
            .collect();
        let effect = implantation_effect(&records, |_| "all".into()).unwrap();
        assert!(effect.mean_delta > 0.1);
        assert!(effect.p_value < 1e-10);
        assert!(effect.between_p.is_none());
    }

    #[test]
    fn csv_reports_render() {
        let summaries = vec![RunSummary {
            run_id: "run-0".into(),
            scale: 1.0,
            mean_price: vec![1.8, 1.9],
            mean_profit: vec![30.0, 31.0],
            mean_total_profit: 61.0,
            price_series: vec![vec![], vec![]],
            profit_series: vec![vec![], vec![]],
        }];
        let csv = summary_csv(&summaries);
        assert!(csv.lines().count() == 3);
        assert!(csv.contains("run-0,1,0,1.800000"));
        let fit = RegressionResult {
            gamma: 0.484,
            delta: 0.103,
            se_gamma: 0.102,
            se_delta: 0.046,
            n: 2100,
            n_groups: 42,
            r_squared: 0.209,
            fixed_effects: Default::default(),
        };
        let table = regression_table(&[("P1 (vs. P1)".to_string(), fit)]);
        assert!(table.contains("Self t-1,0.484"));
        assert!(table.contains("(0.102)"));
        assert!(table.contains("N,2100"));
    }
}
