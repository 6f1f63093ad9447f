//! Numerical benchmark solvers for the logit market: static Bertrand–Nash
//! prices, joint-monopoly prices, the single-firm monopoly price, the
//! auction Nash bid, and the prompt price ceiling.
//!
//! Own-firm profit is unimodal in own price for logit demand over the
//! relevant range, so scalar maximization uses golden-section search; the
//! Nash solver iterates damped simultaneous best responses and the joint
//! monopoly solver uses coordinate ascent. Unit tests check all three
//! against brute-force grid oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{self, AuctionParams, MarketError, MarketParams};

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("solver did not converge within {iterations} iterations (last iterate {last:?})")]
    NonConvergence { iterations: usize, last: Vec<f64> },
}

/// Search interval and tolerances for the scalar and fixed-point solvers.
/// All quantities are in currency units, so defaults scale with `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub search_lo: f64,
    pub search_hi: f64,
    pub scalar_tol: f64,
    pub fixed_point_tol: f64,
    pub max_iterations: usize,
}

impl SolverConfig {
    /// Defaults for a given market: search over `[alpha*min(c), alpha*(max(c)+12)]`
    /// with scalar tolerance `1e-8*alpha` and fixed-point tolerance `1e-7*alpha`.
    pub fn for_params(params: &MarketParams) -> Self {
        let c_min = params.c.iter().copied().fold(f64::INFINITY, f64::min);
        let c_max = params.c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            search_lo: params.alpha * c_min,
            search_hi: params.alpha * (c_max + 12.0),
            scalar_tol: 1e-8 * params.alpha,
            fixed_point_tol: 1e-7 * params.alpha,
            max_iterations: 10_000,
        }
    }
}

/// A scalar-search result; `boundary` is set when the maximum sits at an
/// interval edge, i.e. the true optimum may lie outside the search range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub price: f64,
    pub boundary: bool,
}

/// Static benchmarks for one market instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmarks {
    pub nash_prices: Vec<f64>,
    pub nash_profits: Vec<f64>,
    pub monopoly_prices: Vec<f64>,
    pub monopoly_profits: Vec<f64>,
    pub monopoly_total_profit: f64,
    /// Per-firm price that maximizes own profit with all rivals absent.
    pub single_monopoly_prices: Vec<f64>,
    pub price_ceiling: f64,
}

fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn own_profit(prices: &[f64], firm: usize, params: &MarketParams) -> f64 {
    let q = market::logit_demand(prices, params, params.a0).expect("validated params");
    market::firm_profit(prices[firm], q[firm], params.c[firm], params.alpha)
}

fn joint_profit(prices: &[f64], params: &MarketParams) -> f64 {
    let q = market::logit_demand(prices, params, params.a0).expect("validated params");
    prices
        .iter()
        .zip(&q)
        .zip(&params.c)
        .map(|((p, qi), c)| market::firm_profit(*p, *qi, *c, params.alpha))
        .sum()
}

/// Own-price best response to fixed rival prices, by golden-section search
/// over `[cfg.search_lo, cfg.search_hi]`. The `firm` entry of `prices` is
/// ignored and overwritten during the search.
pub fn best_response(
    prices: &[f64],
    firm: usize,
    params: &MarketParams,
    cfg: &SolverConfig,
) -> Result<BestResponse, EquilibriumError> {
    params.validate()?;
    let mut trial = prices.to_vec();
    let (x, _) = golden_section_max(
        |p| {
            trial[firm] = p;
            own_profit(&trial, firm, params)
        },
        cfg.search_lo.max(params.marginal_cost(firm)),
        cfg.search_hi,
        cfg.scalar_tol,
    );
    let boundary =
        x - cfg.search_lo < 10.0 * cfg.scalar_tol || cfg.search_hi - x < 10.0 * cfg.scalar_tol;
    Ok(BestResponse { price: x, boundary })
}

/// Simultaneous best-response fixed point, iterated with 0.5 damping until
/// the largest per-firm change drops below the fixed-point tolerance.
pub fn nash_prices(
    params: &MarketParams,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, EquilibriumError> {
    params.validate()?;
    let n = params.n_firms();
    let mut prices: Vec<f64> = (0..n)
        .map(|i| params.marginal_cost(i) + 0.5 * params.alpha)
        .collect();
    for _ in 0..cfg.max_iterations {
        let responses: Vec<f64> = (0..n)
            .map(|i| best_response(&prices, i, params, cfg).map(|r| r.price))
            .collect::<Result<_, _>>()?;
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let next = 0.5 * prices[i] + 0.5 * responses[i];
            max_change = max_change.max((next - prices[i]).abs());
            prices[i] = next;
        }
        if max_change < cfg.fixed_point_tol {
            return Ok(prices);
        }
    }
    Err(EquilibriumError::NonConvergence {
        iterations: cfg.max_iterations,
        last: prices,
    })
}

/// Prices maximizing the sum of all firms' profits, by coordinate ascent
/// with golden-section line searches.
pub fn joint_monopoly_prices(
    params: &MarketParams,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, EquilibriumError> {
    params.validate()?;
    let n = params.n_firms();
    let mut prices: Vec<f64> = (0..n)
        .map(|i| params.marginal_cost(i) + params.alpha)
        .collect();
    for _ in 0..cfg.max_iterations {
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let mut trial = prices.clone();
            let (x, _) = golden_section_max(
                |p| {
                    trial[i] = p;
                    joint_profit(&trial, params)
                },
                cfg.search_lo.max(params.marginal_cost(i)),
                cfg.search_hi,
                cfg.scalar_tol,
            );
            max_change = max_change.max((x - prices[i]).abs());
            prices[i] = x;
        }
        if max_change < cfg.fixed_point_tol {
            return Ok(prices);
        }
    }
    Err(EquilibriumError::NonConvergence {
        iterations: cfg.max_iterations,
        last: prices,
    })
}

/// Price maximizing firm `firm`'s profit with only the outside option
/// competing (all other firms absent).
pub fn single_monopoly_price(
    params: &MarketParams,
    firm: usize,
    cfg: &SolverConfig,
) -> Result<f64, EquilibriumError> {
    let solo = MarketParams {
        a: vec![params.a[firm]],
        c: vec![params.c[firm]],
        ..params.clone()
    };
    best_response(&[0.0], 0, &solo, cfg).map(|r| r.price)
}

/// Prompt price ceiling: `multiplier * p_m_joint`, rounded to two decimals
/// for display. The default multiplier 2.34 is the realized draw used for
/// the golden prompts; runs may resample from Unif[1.5, 2.5] instead.
pub fn price_ceiling(p_m_joint: f64, multiplier: f64) -> f64 {
    market::round2(multiplier * p_m_joint)
}

pub const DEFAULT_CEILING_MULTIPLIER: f64 = 2.34;

/// Static Nash bid of the common-value first-price auction, plus the
/// cent-grid equilibria that arise when bids are rounded to cents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionNash {
    pub bid: f64,
    pub cent_grid_equilibria: [f64; 2],
}

pub fn auction_nash(params: &AuctionParams) -> Result<AuctionNash, EquilibriumError> {
    params.validate()?;
    Ok(AuctionNash {
        bid: params.v,
        cent_grid_equilibria: [params.v, market::round2(params.v - 0.01)],
    })
}

/// All pricing benchmarks for one market, with the ceiling computed from the
/// joint monopoly price.
pub fn compute_benchmarks(
    params: &MarketParams,
    cfg: &SolverConfig,
    ceiling_multiplier: f64,
) -> Result<Benchmarks, EquilibriumError> {
    let nash = nash_prices(params, cfg)?;
    let q_nash = market::logit_demand(&nash, params, params.a0)?;
    let nash_profits: Vec<f64> = nash
        .iter()
        .zip(&q_nash)
        .zip(&params.c)
        .map(|((p, q), c)| market::firm_profit(*p, *q, *c, params.alpha))
        .collect();
    let monopoly = joint_monopoly_prices(params, cfg)?;
    let q_m = market::logit_demand(&monopoly, params, params.a0)?;
    let monopoly_profits: Vec<f64> = monopoly
        .iter()
        .zip(&q_m)
        .zip(&params.c)
        .map(|((p, q), c)| market::firm_profit(*p, *q, *c, params.alpha))
        .collect();
    let single: Vec<f64> = (0..params.n_firms())
        .map(|i| single_monopoly_price(params, i, cfg))
        .collect::<Result<_, _>>()?;
    Ok(Benchmarks {
        price_ceiling: price_ceiling(monopoly[0], ceiling_multiplier),
        monopoly_total_profit: monopoly_profits.iter().sum(),
        nash_prices: nash,
        nash_profits,
        monopoly_prices: monopoly,
        monopoly_profits,
        single_monopoly_prices: single,
    })
}
