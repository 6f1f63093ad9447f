//! Statistical primitives: Welch's t-test (two-sample and one-sample),
//! Fisher's exact test, and interpolated percentiles.
//!
//! The t-distribution CDF goes through the regularized incomplete beta
//! function (Lentz continued fraction); tests compare it against a
//! quadrature oracle that never touches this code path.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tails {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    pub p: f64,
}

/// Lanczos log-gamma (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (std::f64::consts::TAU).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability of Student's t: `P(|T_dof| >= |t|)`.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    betai(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

fn tail_p(t: f64, dof: f64, tails: Tails) -> f64 {
    let two = t_two_sided_p(t, dof);
    match tails {
        Tails::Two => two,
        Tails::One => two / 2.0,
    }
}

fn mean_var(sample: &[f64]) -> Result<(f64, f64), StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::InvalidInput(format!(
            "sample must hold at least 2 observations, got {}",
            sample.len()
        )));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

/// Welch's unequal-variance t-test with the Welch–Satterthwaite degrees of
/// freedom.
pub fn welch_t(a: &[f64], b: &[f64], tails: Tails) -> Result<TTest, StatsError> {
    let (ma, va) = mean_var(a)?;
    let (mb, vb) = mean_var(b)?;
    if va <= 0.0 && vb <= 0.0 {
        // degenerate samples: equal constants are a perfect null, anything
        // else is a sure difference
        let p = if ma == mb { 1.0 } else { 0.0 };
        return Ok(TTest {
            t: 0.0,
            dof: (a.len() + b.len() - 2) as f64,
            p,
        });
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    Ok(TTest {
        t,
        dof,
        p: tail_p(t, dof, tails),
    })
}

/// One-sample t-test of `sample` against a fixed mean.
pub fn one_sample_t(sample: &[f64], mu0: f64, tails: Tails) -> Result<TTest, StatsError> {
    let (mean, var) = mean_var(sample)?;
    let n = sample.len() as f64;
    let dof = n - 1.0;
    if var <= 0.0 {
        let p = if mean == mu0 { 1.0 } else { 0.0 };
        return Ok(TTest { t: 0.0, dof, p });
    }
    let t = (mean - mu0) / (var / n).sqrt();
    Ok(TTest {
        t,
        dof,
        p: tail_p(t, dof, tails),
    })
}

/// Two-sided Fisher exact test on a 2x2 count table, by hypergeometric
/// enumeration: the p-value sums the probabilities of all tables with the
/// observed margins whose probability does not exceed the observed one
/// (relative slack 1e-9 absorbs log-space rounding on ties).
pub fn fisher_exact(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let r1 = a + b;
    let r2 = c + d;
    let c1 = a + c;
    let n = r1 + r2;
    if n == 0 || r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
        return 1.0;
    }
    let ln_choose = |n: u64, k: u64| -> f64 {
        ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
    };
    let ln_denom = ln_choose(n, c1);
    let ln_p = |k: u64| ln_choose(r1, k) + ln_choose(r2, c1 - k) - ln_denom;
    let k_min = c1.saturating_sub(r2);
    let k_max = r1.min(c1);
    let ln_obs = ln_p(a);
    let mut p = 0.0;
    for k in k_min..=k_max {
        let lp = ln_p(k);
        if lp <= ln_obs + 1e-9 {
            p += lp.exp();
        }
    }
    p.min(1.0)
}

/// Percentile with linear interpolation between order statistics
/// (`q` in [0, 100]).
pub fn percentile(values: &[f64], q: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InvalidInput("percentile of empty slice".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute-force references used only by tests: the t tail probability by
    //! adaptive Simpson quadrature of the beta integrand (independent of the
    //! continued fraction), and Fisher p by exact integer enumeration.

    fn simpson(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    /// `B(a, 1/2)` via quadrature only: split at 1/2 and substitute
    /// `x = u^2` and `1 - x = s^2` so both halves are smooth.
    fn beta_fn_quad(a: f64) -> f64 {
        let b = 0.5;
        let left = {
            // int_0^{1/2} x^(a-1)(1-x)^(b-1) dx with x = u^2
            let f = move |u: f64| 2.0 * u.powf(2.0 * a - 1.0) * (1.0 - u * u).powf(b - 1.0);
            simpson(&f, 0.0, (0.5f64).sqrt(), 40_000)
        };
        let right = {
            // int_{1/2}^1 with 1-x = s^2
            let f = move |s: f64| 2.0 * (1.0 - s * s).powf(a - 1.0) * s.powf(2.0 * b - 1.0);
            simpson(&f, 0.0, (0.5f64).sqrt(), 40_000)
        };
        left + right
    }

    /// Two-sided t tail `P(|T| >= |t|) = I_x(dof/2, 1/2)`, `x = dof/(dof+t^2)`,
    /// by quadrature.
    pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
        let a = dof / 2.0;
        let x = dof / (dof + t * t);
        // integral of y^(a-1)(1-y)^(-1/2) over [0, x]: substitute 1-y = s^2
        let f = move |s: f64| 2.0 * (1.0 - s * s).powf(a - 1.0);
        let integral = simpson(&f, (1.0 - x).sqrt(), 1.0, 400_000);
        integral / beta_fn_quad(a)
    }

    /// Exact-integer two-sided Fisher p.
    pub fn fisher_exact(table: [[u64; 2]; 2]) -> f64 {
        let [[a, b], [c, d]] = table;
        let r1 = a + b;
        let r2 = c + d;
        let c1 = a + c;
        let n = r1 + r2;
        if n == 0 || r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
            return 1.0;
        }
        fn choose(n: u64, k: u64) -> u128 {
            let mut acc: u128 = 1;
            for i in 0..k.min(n - k) {
                acc = acc * (n - i) as u128 / (i + 1) as u128;
            }
            acc
        }
        let k_min = c1.saturating_sub(r2);
        let k_max = r1.min(c1);
        let weights: Vec<u128> = (k_min..=k_max)
            .map(|k| choose(r1, k) * choose(r2, c1 - k))
            .collect();
        let total: u128 = weights.iter().sum();
        let observed = weights[(a - k_min) as usize];
        let included: u128 = weights.iter().filter(|w| **w <= observed).sum();
        included as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 2.0, 3.0];
        let r = welch_t(&a, &a, Tails::Two).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_example_matches_quadrature_oracle() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = welch_t(&a, &b, Tails::Two).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.dof - 8.0).abs() < 1e-12);
        // frozen from the quadrature oracle
        assert!((r.p - 0.346_593_507_087_355_5).abs() < 1e-9, "p = {}", r.p);
        let oracle_p = oracle::t_two_sided_p(r.t, r.dof);
        assert!(
            (r.p - oracle_p).abs() < 1e-9,
            "{} vs oracle {oracle_p}",
            r.p
        );
    }

    #[test]
    fn welch_p_matches_oracle_across_inputs() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 2.0, 3.0, 7.0], vec![2.0, 2.5, 2.5, 9.0, 3.5]),
            (vec![0.1, 0.2, 0.15, 0.22, 0.19], vec![0.3, 0.31, 0.29]),
            (
                vec![10.0, 12.0, 9.0, 11.0],
                vec![10.5, 10.6, 10.4, 10.55, 10.45],
            ),
        ];
        for (a, b) in cases {
            let r = welch_t(&a, &b, Tails::Two).unwrap();
            let oracle_p = oracle::t_two_sided_p(r.t, r.dof);
            assert!((r.p - oracle_p).abs() < 1e-9, "{} vs {oracle_p}", r.p);
        }
    }

    #[test]
    fn welch_is_symmetric_and_monotone() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.5, 3.5, 4.5, 5.5];
        let ab = welch_t(&a, &b, Tails::Two).unwrap();
        let ba = welch_t(&b, &a, Tails::Two).unwrap();
        assert!((ab.p - ba.p).abs() < 1e-15);
        assert!((ab.t + ba.t).abs() < 1e-15);
        // shifting b away decreases p, holding variances fixed
        let mut prev = ab.p;
        for shift in [1.0, 2.0, 3.0] {
            let shifted: Vec<f64> = b.iter().map(|x| x + shift).collect();
            let r = welch_t(&a, &shifted, Tails::Two).unwrap();
            assert!(r.p < prev);
            prev = r.p;
        }
    }

    #[test]
    fn one_sample_variant_matches_oracle() {
        let sample = [0.03, 0.05, 0.01, 0.08, 0.02, 0.04];
        let r = one_sample_t(&sample, 0.0, Tails::Two).unwrap();
        assert!((r.dof - 5.0).abs() < 1e-12);
        let oracle_p = oracle::t_two_sided_p(r.t, r.dof);
        assert!((r.p - oracle_p).abs() < 1e-9);
        // p = 1 when testing against the sample mean itself
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        let null = one_sample_t(&sample, mean, Tails::Two).unwrap();
        assert!((null.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn undersized_or_single_point_samples_are_rejected() {
        assert!(welch_t(&[1.0], &[1.0, 2.0], Tails::Two).is_err());
        assert!(one_sample_t(&[3.0], 0.0, Tails::Two).is_err());
    }

    #[test]
    fn fisher_diagonal_and_uniform_tables() {
        let p = fisher_exact([[0, 3], [3, 0]]);
        assert!((p - 0.1).abs() < 1e-12, "p = {p}");
        let p = fisher_exact([[5, 5], [5, 5]]);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_matches_exact_enumeration_for_all_margins_up_to_twelve() {
        let mut checked = 0usize;
        for r1 in 0..=12u64 {
            for r2 in 0..=12u64 {
                let n = r1 + r2;
                for c1 in 0..=n.min(12) {
                    if n - c1 > 12 {
                        continue; // second column margin over the cap
                    }
                    let k_min = c1.saturating_sub(r2);
                    let k_max = r1.min(c1);
                    for a in k_min..=k_max {
                        let table = [[a, r1 - a], [c1 - a, r2 - (c1 - a)]];
                        let got = fisher_exact(table);
                        let want = oracle::fisher_exact(table);
                        assert!(
                            (got - want).abs() < 1e-9,
                            "table {table:?}: {got} vs {want}"
                        );
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 5_000, "exhaustive scan covered {checked} tables");
    }

    #[test]
    fn percentiles_interpolate_linearly() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&xs, 100.0).unwrap(), 4.0);
        assert!((percentile(&xs, 50.0).unwrap() - 2.5).abs() < 1e-12);
        assert!((percentile(&xs, 90.0).unwrap() - 3.7).abs() < 1e-12);
        assert!(percentile(&[], 50.0).is_err());
    }
}
