//! Responsiveness and stickiness: generate a synthetic panel from the lagged
//! price model with known coefficients and recover them with the
//! fixed-effects estimator and robust standard errors.
//!
//! Run with: cargo run --example panel_regression

use collab::analysis::{self, PanelObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn main() {
    let (gamma, delta) = (0.48, 0.10);
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let mut observations = Vec::new();
    for run in 0..21 {
        let fe = [1.0 + rng.random::<f64>(), 1.0 + rng.random::<f64>()];
        let mut prices = [2.0 + rng.random::<f64>(), 3.0 + rng.random::<f64>()];
        let mut series = vec![prices];
        for _ in 0..300 {
            let noise = |rng: &mut ChaCha12Rng| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random::<f64>();
                0.08 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            let next = [
                fe[0] + gamma * prices[0] + delta * prices[1] + noise(&mut rng),
                fe[1] + gamma * prices[1] + delta * prices[0] + noise(&mut rng),
            ];
            series.push(next);
            prices = next;
        }
        // disjoint pairs over periods 102..300, alternating the self firm
        for (k, t) in (102..=300).step_by(2).enumerate() {
            let firm = k % 2;
            observations.push(PanelObservation {
                group: (run * 2 + firm) as u64,
                y: series[t - 1][firm],
                own_lag: series[t - 2][firm],
                competitor_lag: series[t - 2][1 - firm],
            });
        }
    }
    let fit = analysis::fit_fixed_effects(&observations).expect("fit");
    println!("true gamma = {gamma}, delta = {delta}");
    println!(
        "estimated   gamma = {:.3} ({:.3})   delta = {:.3} ({:.3})",
        fit.gamma, fit.se_gamma, fit.delta, fit.se_delta
    );
    println!(
        "N = {}, groups = {}, within R2 = {:.3}",
        fit.n, fit.n_groups, fit.r_squared
    );
    let table = analysis::regression_table(&[("synthetic".to_string(), fit)]);
    println!("\n{table}");
}
