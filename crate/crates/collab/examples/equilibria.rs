//! Static benchmarks of the logit market: Bertrand-Nash prices, joint
//! monopoly prices, the single-firm monopoly price, and the prompt ceiling,
//! for each currency scale.
//!
//! Run with: cargo run --example equilibria

use collab::equilibrium::{self, SolverConfig, DEFAULT_CEILING_MULTIPLIER};
use collab::market::MarketParams;

fn main() {
    println!(
        "{:>6} {:>8} {:>9} {:>8} {:>9} {:>9} {:>8}",
        "alpha", "p_nash", "pi_nash", "p_m", "pi_m", "p_single", "ceiling"
    );
    for alpha in [1.0, 3.2, 10.0] {
        let params = MarketParams::benchmark_duopoly(alpha);
        let cfg = SolverConfig::for_params(&params);
        let b = equilibrium::compute_benchmarks(&params, &cfg, DEFAULT_CEILING_MULTIPLIER)
            .expect("benchmark solve");
        println!(
            "{alpha:>6.1} {:>8.4} {:>9.4} {:>8.4} {:>9.4} {:>9.4} {:>8.2}",
            b.nash_prices[0],
            b.nash_profits[0],
            b.monopoly_prices[0],
            b.monopoly_profits[0],
            b.single_monopoly_prices[0],
            b.price_ceiling
        );
    }

    // an asymmetric-quality market: the better firm prices higher
    let mut params = MarketParams::benchmark_duopoly(1.0);
    params.a = vec![2.0, 2.75];
    let cfg = SolverConfig::for_params(&params);
    let nash = equilibrium::nash_prices(&params, &cfg).expect("asymmetric solve");
    println!(
        "\nasymmetric qualities a = [2, 2.75]: nash prices {:.4} / {:.4}",
        nash[0], nash[1]
    );
}
