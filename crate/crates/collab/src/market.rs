//! Pure, stateless evaluation of the logit-demand Bertrand market and the
//! first-price common-value auction.
//!
//! All randomness (demand shocks, auction tie-breaks) flows through an
//! injected seedable source, so every operation here is replayable.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
    #[error("expected {expected} prices (one per firm), got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    #[error("auction requires at least one bid")]
    EmptyBids,
}

/// Demand and cost parameters for one market instance.
///
/// `alpha` scales the currency unit, `beta` scales quantities, `mu` controls
/// horizontal differentiation, `a0` is the outside-option index, and `a`/`c`
/// hold per-firm quality indices and unit-cost coefficients. The marginal
/// cost of firm `i` is `alpha * c[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub a0: f64,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl MarketParams {
    /// The symmetric duopoly used throughout: `a = [2, 2]`, `a0 = 0`,
    /// `mu = 0.25`, `c = [1, 1]`, `beta = 100`.
    pub fn benchmark_duopoly(alpha: f64) -> Self {
        Self {
            alpha,
            beta: 100.0,
            mu: 0.25,
            a0: 0.0,
            a: vec![2.0, 2.0],
            c: vec![1.0, 1.0],
        }
    }

    /// Single-firm variant of the benchmark market.
    pub fn benchmark_monopoly(alpha: f64) -> Self {
        Self {
            alpha,
            beta: 100.0,
            mu: 0.25,
            a0: 0.0,
            a: vec![2.0],
            c: vec![1.0],
        }
    }

    pub fn n_firms(&self) -> usize {
        self.a.len()
    }

    /// Marginal cost of firm `i` in currency units.
    pub fn marginal_cost(&self, firm: usize) -> f64 {
        self.alpha * self.c[firm]
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.mu.is_nan() || self.mu <= 0.0 {
            return Err(MarketError::InvalidParams(format!(
                "mu must be > 0, got {}",
                self.mu
            )));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(MarketError::InvalidParams(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(MarketError::InvalidParams(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.a.is_empty() || self.a.len() != self.c.len() {
            return Err(MarketError::InvalidParams(format!(
                "a and c must have equal nonzero length, got {} and {}",
                self.a.len(),
                self.c.len()
            )));
        }
        if !(self.a0.is_finite() && self.a.iter().chain(self.c.iter()).all(|x| x.is_finite())) {
            return Err(MarketError::InvalidParams(
                "non-finite index or cost".into(),
            ));
        }
        Ok(())
    }
}

/// One period's realized market state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub prices: Vec<f64>,
    pub quantities: Vec<f64>,
    pub profits: Vec<f64>,
    pub realized_a0: f64,
}

/// Additive shock to the outside-option index `a0`, sampled uniformly from
/// `offsets` each period when enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockConfig {
    pub enabled: bool,
    pub offsets: Vec<f64>,
}

impl ShockConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            offsets: vec![],
        }
    }

    /// The default shock set: offsets drawn uniformly from {-0.05, 0, 0.05}.
    pub fn default_shocks() -> Self {
        Self {
            enabled: true,
            offsets: vec![-0.05, 0.0, 0.05],
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.enabled && self.offsets.is_empty() {
            return Err(MarketError::InvalidParams(
                "shock offsets must be non-empty when enabled".into(),
            ));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        self.offsets[rng.random_range(0..self.offsets.len())]
    }
}

/// First-price auction setup: a common item value and the bidder count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionParams {
    pub v: f64,
    pub n_bidders: usize,
}

impl AuctionParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        if self.v.is_nan() || self.v <= 0.0 {
            return Err(MarketError::InvalidParams(format!(
                "v must be > 0, got {}",
                self.v
            )));
        }
        if self.n_bidders < 2 {
            return Err(MarketError::InvalidParams(format!(
                "need at least 2 bidders, got {}",
                self.n_bidders
            )));
        }
        Ok(())
    }
}

/// What one bidder learns after an auction period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderFeedback {
    pub won: bool,
    /// For losers: the bid that won. Absent for the winner.
    pub winning_bid: Option<f64>,
    /// For the winner: the highest competing bid, reported as the bid that
    /// would have sufficed to win. Absent for losers.
    pub sufficient_bid: Option<f64>,
    /// For the winner: the payment made (first price). Absent for losers.
    pub payment: Option<f64>,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub bids: Vec<f64>,
    pub winner: usize,
    pub payment: f64,
    pub feedback: Vec<BidderFeedback>,
}

/// Logit demand: `q_i = beta * exp((a_i - p_i/alpha)/mu) / (sum_j exp((a_j -
/// p_j/alpha)/mu) + exp(a0/mu))`.
///
/// Evaluated in log space (max-shifted exponents) so that small `mu` does not
/// overflow.
pub fn logit_demand(
    prices: &[f64],
    params: &MarketParams,
    a0_realized: f64,
) -> Result<Vec<f64>, MarketError> {
    params.validate()?;
    if prices.len() != params.n_firms() {
        return Err(MarketError::DimensionMismatch {
            expected: params.n_firms(),
            got: prices.len(),
        });
    }
    if prices.iter().any(|p| !p.is_finite()) {
        return Err(MarketError::NumericDomain("non-finite price".into()));
    }
    if !a0_realized.is_finite() {
        return Err(MarketError::NumericDomain("non-finite a0".into()));
    }
    let exponents: Vec<f64> = prices
        .iter()
        .zip(&params.a)
        .map(|(p, a)| (a - p / params.alpha) / params.mu)
        .collect();
    let z0 = a0_realized / params.mu;
    let m = exponents.iter().copied().fold(z0, f64::max);
    if !m.is_finite() {
        return Err(MarketError::NumericDomain("exponent overflow".into()));
    }
    let denom: f64 = exponents.iter().map(|z| (z - m).exp()).sum::<f64>() + (z0 - m).exp();
    Ok(exponents
        .iter()
        .map(|z| params.beta * (z - m).exp() / denom)
        .collect())
}

/// Per-period profit `(price - alpha * cost) * quantity`.
pub fn firm_profit(price: f64, quantity: f64, firm_cost: f64, alpha: f64) -> f64 {
    (price - alpha * firm_cost) * quantity
}

/// One market period: sample the `a0` shock, evaluate demand and profits.
pub fn step_market(
    prices: &[f64],
    params: &MarketParams,
    shock: &ShockConfig,
    rng: &mut impl Rng,
) -> Result<MarketOutcome, MarketError> {
    shock.validate()?;
    let realized_a0 = params.a0 + shock.sample(rng);
    let quantities = logit_demand(prices, params, realized_a0)?;
    let profits = prices
        .iter()
        .zip(&quantities)
        .zip(&params.c)
        .map(|((p, q), c)| firm_profit(*p, *q, *c, params.alpha))
        .collect();
    Ok(MarketOutcome {
        prices: prices.to_vec(),
        quantities,
        profits,
        realized_a0,
    })
}

/// One first-price auction period. The highest bid wins, ties broken
/// uniformly at random; the winner pays its own bid and learns the highest
/// competing bid, losers learn the winning bid.
pub fn auction_step(
    bids: &[f64],
    params: &AuctionParams,
    rng: &mut impl Rng,
) -> Result<AuctionOutcome, MarketError> {
    params.validate()?;
    if bids.is_empty() {
        return Err(MarketError::EmptyBids);
    }
    if bids.len() != params.n_bidders {
        return Err(MarketError::DimensionMismatch {
            expected: params.n_bidders,
            got: bids.len(),
        });
    }
    if bids.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(MarketError::NumericDomain(
            "bids must be finite and non-negative".into(),
        ));
    }
    let max_bid = bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..bids.len()).filter(|&i| bids[i] == max_bid).collect();
    let winner = tied[rng.random_range(0..tied.len())];
    let payment = bids[winner];
    let highest_competing = bids
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != winner)
        .map(|(_, b)| *b)
        .fold(f64::NEG_INFINITY, f64::max);
    let feedback = (0..bids.len())
        .map(|i| {
            if i == winner {
                BidderFeedback {
                    won: true,
                    winning_bid: None,
                    sufficient_bid: Some(highest_competing),
                    payment: Some(payment),
                    profit: params.v - payment,
                }
            } else {
                BidderFeedback {
                    won: false,
                    winning_bid: Some(payment),
                    sufficient_bid: None,
                    payment: None,
                    profit: 0.0,
                }
            }
        })
        .collect();
    Ok(AuctionOutcome {
        bids: bids.to_vec(),
        winner,
        payment,
        feedback,
    })
}

/// Round to two decimal places, the display precision used for everything an
/// agent sees and for decisions entering the market.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn bench() -> MarketParams {
        MarketParams::benchmark_duopoly(1.0)
    }

    #[test]
    fn demand_matches_period_two_example() {
        let q = logit_demand(&[1.5, 2.76], &bench(), 0.0).unwrap();
        assert_eq!(round2(q[0]), 87.58);
        assert_eq!(round2(firm_profit(1.5, q[0], 1.0, 1.0)), 43.79);
    }

    #[test]
    fn demand_matches_symmetric_example() {
        let q = logit_demand(&[1.8, 1.8], &bench(), 0.0).unwrap();
        assert_eq!(round2(q[0]), 40.83);
        assert_eq!(round2(q[1]), 40.83);
        assert_eq!(round2(firm_profit(1.8, q[0], 1.0, 1.0)), 32.66);
    }

    #[test]
    fn symmetric_prices_give_equal_quantities() {
        for p in [1.0, 1.5, 2.0, 3.3, 4.51] {
            let q = logit_demand(&[p, p], &bench(), 0.0).unwrap();
            assert_eq!(q[0], q[1]);
        }
    }

    #[test]
    fn zero_markup_gives_zero_profit() {
        for q in [0.0, 1.0, 87.58] {
            assert_eq!(firm_profit(3.2, q, 1.0, 3.2), 0.0);
        }
    }

    #[test]
    fn small_mu_does_not_overflow() {
        let params = MarketParams {
            mu: 1e-4,
            ..bench()
        };
        let q = logit_demand(&[1.5, 2.0], &params, 0.0).unwrap();
        // the losing firm's share may underflow to zero, but nothing blows up
        assert!(q.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(q[0] > 99.9);
    }

    #[test]
    fn non_finite_price_is_rejected() {
        assert!(matches!(
            logit_demand(&[f64::NAN, 1.0], &bench(), 0.0),
            Err(MarketError::NumericDomain(_))
        ));
        assert!(matches!(
            logit_demand(&[f64::INFINITY, 1.0], &bench(), 0.0),
            Err(MarketError::NumericDomain(_))
        ));
    }

    #[test]
    fn step_market_matches_demand_and_profit() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let out = step_market(&[1.5, 2.76], &bench(), &ShockConfig::disabled(), &mut rng).unwrap();
        assert_eq!(out.realized_a0, 0.0);
        assert_eq!(round2(out.quantities[0]), 87.58);
        assert_eq!(round2(out.profits[0]), 43.79);
    }

    #[test]
    fn degenerate_shock_equals_disabled() {
        let mut rng_a = ChaCha12Rng::seed_from_u64(1);
        let mut rng_b = ChaCha12Rng::seed_from_u64(1);
        let zero = ShockConfig {
            enabled: true,
            offsets: vec![0.0],
        };
        let a = step_market(&[1.5, 2.0], &bench(), &zero, &mut rng_a).unwrap();
        let b = step_market(&[1.5, 2.0], &bench(), &ShockConfig::disabled(), &mut rng_b).unwrap();
        assert_eq!(a.quantities, b.quantities);
        assert_eq!(a.profits, b.profits);
    }

    #[test]
    fn fixed_seed_replays_identically() {
        let shock = ShockConfig::default_shocks();
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| step_market(&[1.6, 1.9], &bench(), &shock, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn enabled_shock_requires_offsets() {
        let bad = ShockConfig {
            enabled: true,
            offsets: vec![],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(step_market(&[1.5, 1.5], &bench(), &bad, &mut rng).is_err());
    }

    #[test]
    fn auction_winner_feedback() {
        let params = AuctionParams {
            v: 1.0,
            n_bidders: 2,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let out = auction_step(&[0.9, 0.3], &params, &mut rng).unwrap();
        assert_eq!(out.winner, 0);
        assert_eq!(out.payment, 0.9);
        let fb = &out.feedback[0];
        assert!(fb.won);
        assert_eq!(fb.sufficient_bid, Some(0.3));
        assert_eq!(fb.payment, Some(0.9));
        assert!((fb.profit - 0.1).abs() < 1e-12);
    }

    #[test]
    fn auction_loser_feedback() {
        let params = AuctionParams {
            v: 1.0,
            n_bidders: 2,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let out = auction_step(&[0.4, 0.5], &params, &mut rng).unwrap();
        assert_eq!(out.winner, 1);
        let fb = &out.feedback[0];
        assert!(!fb.won);
        assert_eq!(fb.winning_bid, Some(0.5));
        assert_eq!(fb.payment, None);
        assert_eq!(fb.profit, 0.0);
    }

    #[test]
    fn tied_bids_split_evenly_over_seeds() {
        let params = AuctionParams {
            v: 1.0,
            n_bidders: 2,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let trials = 10_000;
        let mut wins0 = 0usize;
        for _ in 0..trials {
            let out = auction_step(&[0.7, 0.7], &params, &mut rng).unwrap();
            if out.winner == 0 {
                wins0 += 1;
            }
        }
        let freq = wins0 as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 0.02, "tie frequency {freq}");
    }

    #[test]
    fn empty_bids_rejected() {
        let params = AuctionParams {
            v: 1.0,
            n_bidders: 2,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            auction_step(&[], &params, &mut rng),
            Err(MarketError::EmptyBids)
        ));
    }

    proptest! {
        // Shares (including the outside good) always sum to beta.
        #[test]
        fn share_normalization(p1 in 1.0f64..10.0, p2 in 1.0f64..10.0) {
            let params = bench();
            let q = logit_demand(&[p1, p2], &params, 0.0).unwrap();
            let z0 = (params.a0 / params.mu).exp();
            let zs: f64 = [p1, p2]
                .iter()
                .zip(&params.a)
                .map(|(p, a)| ((a - p / params.alpha) / params.mu).exp())
                .sum();
            let outside = params.beta * z0 / (zs + z0);
            let total = q[0] + q[1] + outside;
            prop_assert!(((total - params.beta) / params.beta).abs() < 1e-9);
            prop_assert!(q[0] > 0.0 && q[1] > 0.0);
            prop_assert!(q[0] + q[1] < params.beta);
        }

        // Demand is invariant to the currency scale.
        #[test]
        fn currency_scaling(p1 in 1.0f64..5.0, p2 in 1.0f64..5.0) {
            let base = logit_demand(&[p1, p2], &bench(), 0.0).unwrap();
            for alpha in [1.0, 3.2, 10.0] {
                let scaled = logit_demand(
                    &[p1 * alpha, p2 * alpha],
                    &MarketParams::benchmark_duopoly(alpha),
                    0.0,
                )
                .unwrap();
                for (b, s) in base.iter().zip(&scaled) {
                    prop_assert!(((b - s) / b).abs() < 1e-12);
                }
            }
        }

        // Own-price decreases and cross-price increases demand.
        #[test]
        fn price_monotonicity(p2 in 1.0f64..5.0) {
            let params = bench();
            let grid: Vec<f64> = (0..40).map(|i| 1.0 + 0.1 * i as f64).collect();
            let mut prev_own: Option<f64> = None;
            let mut prev_cross: Option<f64> = None;
            for p1 in grid {
                let q = logit_demand(&[p1, p2], &params, 0.0).unwrap();
                if let Some(prev) = prev_own {
                    prop_assert!(q[0] < prev);
                }
                if let Some(prev) = prev_cross {
                    prop_assert!(q[1] > prev);
                }
                prev_own = Some(q[0]);
                prev_cross = Some(q[1]);
            }
        }

        // Winner accounting: profit + payment always equals the item value.
        #[test]
        fn winner_profit_plus_payment_is_value(
            b1 in 0.0f64..2.0,
            b2 in 0.0f64..2.0,
            seed in 0u64..1000,
        ) {
            let params = AuctionParams { v: 1.0, n_bidders: 2 };
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let out = auction_step(&[b1, b2], &params, &mut rng).unwrap();
            let w = &out.feedback[out.winner];
            prop_assert!((w.profit + out.payment - params.v).abs() < 1e-12);
            prop_assert_eq!(out.bids[out.winner], out.payment);
            prop_assert_eq!(
                out.payment,
                out.bids.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            );
        }
    }
}
