//! Panel regression with group fixed effects (within transformation) and
//! heteroskedasticity-robust standard errors.
//!
//! The model is `y = alpha_g + gamma * x1 + delta * x2 + eps`: fixed effects
//! are absorbed by demeaning within each group, the two slopes come from
//! OLS on the demeaned data, and the covariance uses the HC1 sandwich with
//! an areg-style degrees-of-freedom correction (absorbed groups count as
//! estimated parameters).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("{0}")]
    InsufficientData(String),
    #[error("design matrix is singular after demeaning")]
    Singular,
}

/// One (group, y, x1, x2) observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelObservation {
    pub group: u64,
    pub y: f64,
    pub own_lag: f64,
    pub competitor_lag: f64,
}

/// Estimates for the own-lag (`gamma`) and competitor-lag (`delta`)
/// coefficients, with recovered per-group fixed effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub gamma: f64,
    pub delta: f64,
    pub se_gamma: f64,
    pub se_delta: f64,
    pub n: usize,
    pub n_groups: usize,
    /// Within R-squared (on group-demeaned data).
    pub r_squared: f64,
    pub fixed_effects: BTreeMap<u64, f64>,
}

pub fn fit_fixed_effects(
    observations: &[PanelObservation],
) -> Result<RegressionResult, RegressionError> {
    let n = observations.len();
    if n < 4 {
        return Err(RegressionError::InsufficientData(format!(
            "need at least 4 observations, got {n}"
        )));
    }
    // group means
    #[derive(Default)]
    struct GroupAcc {
        n: f64,
        y: f64,
        x1: f64,
        x2: f64,
    }
    let mut groups: BTreeMap<u64, GroupAcc> = BTreeMap::new();
    for obs in observations {
        let acc = groups.entry(obs.group).or_default();
        acc.n += 1.0;
        acc.y += obs.y;
        acc.x1 += obs.own_lag;
        acc.x2 += obs.competitor_lag;
    }
    for acc in groups.values_mut() {
        acc.y /= acc.n;
        acc.x1 /= acc.n;
        acc.x2 /= acc.n;
    }
    let n_groups = groups.len();

    // demeaned OLS: beta = (X'X)^-1 X'y on 2 regressors
    let mut sxx = [[0.0f64; 2]; 2];
    let mut sxy = [0.0f64; 2];
    let mut tss = 0.0;
    let demeaned: Vec<(f64, f64, f64)> = observations
        .iter()
        .map(|obs| {
            let g = &groups[&obs.group];
            (obs.y - g.y, obs.own_lag - g.x1, obs.competitor_lag - g.x2)
        })
        .collect();
    for &(y, x1, x2) in &demeaned {
        sxx[0][0] += x1 * x1;
        sxx[0][1] += x1 * x2;
        sxx[1][1] += x2 * x2;
        sxy[0] += x1 * y;
        sxy[1] += x2 * y;
        tss += y * y;
    }
    sxx[1][0] = sxx[0][1];
    let det = sxx[0][0] * sxx[1][1] - sxx[0][1] * sxx[1][0];
    if det.abs() < 1e-12 * (sxx[0][0] * sxx[1][1]).max(1e-300) {
        return Err(RegressionError::Singular);
    }
    let inv = [
        [sxx[1][1] / det, -sxx[0][1] / det],
        [-sxx[1][0] / det, sxx[0][0] / det],
    ];
    let gamma = inv[0][0] * sxy[0] + inv[0][1] * sxy[1];
    let delta = inv[1][0] * sxy[0] + inv[1][1] * sxy[1];

    // residuals on demeaned data and the HC1 sandwich
    let mut rss = 0.0;
    let mut meat = [[0.0f64; 2]; 2];
    for &(y, x1, x2) in &demeaned {
        let e = y - gamma * x1 - delta * x2;
        rss += e * e;
        let e2 = e * e;
        meat[0][0] += e2 * x1 * x1;
        meat[0][1] += e2 * x1 * x2;
        meat[1][1] += e2 * x2 * x2;
    }
    meat[1][0] = meat[0][1];
    let k_absorbed = 2.0 + n_groups as f64;
    let dof = n as f64 - k_absorbed;
    if dof <= 0.0 {
        return Err(RegressionError::InsufficientData(
            "not enough observations for the absorbed fixed effects".into(),
        ));
    }
    let hc1 = n as f64 / dof;
    // V = inv * meat * inv * hc1
    let mut v = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for p in 0..2 {
                for q in 0..2 {
                    acc += inv[i][p] * meat[p][q] * inv[q][j];
                }
            }
            v[i][j] = acc * hc1;
        }
    }

    let fixed_effects = groups
        .iter()
        .map(|(id, g)| (*id, g.y - gamma * g.x1 - delta * g.x2))
        .collect();

    Ok(RegressionResult {
        gamma,
        delta,
        se_gamma: v[0][0].max(0.0).sqrt(),
        se_delta: v[1][1].max(0.0).sqrt(),
        n,
        n_groups,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 0.0 },
        fixed_effects,
    })
}
