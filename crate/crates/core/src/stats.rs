//! Goodness-of-fit and binomial tests, plus compensated summation.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::special::{chi_square_sf, ln_choose};

/// Relative slack when comparing outcome probabilities in the two-sided
/// binomial test.
const BINOM_RTOL: f64 = 1e-7;

/// Neumaier (improved Kahan) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Pearson χ² goodness of fit of `observed` against category probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(CoreError::InvalidArgument("need at least two categories with matching probabilities".into()));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(CoreError::InvalidArgument("no observations".into()));
    }
    let psum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p <= 0.0) || (psum - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument("category probabilities must be positive and sum to 1".into()));
    }
    let n = total as f64;
    let statistic = neumaier_sum(observed.iter().zip(probs).map(|(&o, &p)| {
        let e = n * p;
        (o as f64 - e).powi(2) / e
    }));
    let df = (observed.len() - 1) as u32;
    Ok(ChiSquareResult { statistic, df, p_value: chi_square_sf(statistic, df as f64)? })
}

/// χ² against equiprobable categories.
pub fn chi_square_uniform(observed: &[u64]) -> Result<ChiSquareResult> {
    let p = 1.0 / observed.len().max(1) as f64;
    chi_square_gof(observed, &vec![p; observed.len()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// Success probability above `p`.
    Greater,
    /// Success probability below `p`.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialResult {
    pub k: u64,
    pub n: u64,
    pub p: f64,
    pub alternative: Alternative,
    pub p_value: f64,
}

fn ln_pmf(i: u64, n: u64, p: f64) -> f64 {
    let ln_p = if i == 0 { 0.0 } else { i as f64 * p.ln() };
    let ln_q = if i == n { 0.0 } else { (n - i) as f64 * (1.0 - p).ln() };
    ln_choose(n, i) + ln_p + ln_q
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + neumaier_sum(v.iter().map(|x| (x - m).exp())).ln()
}

/// Exact binomial test of `k` successes in `n` trials against rate `p`.
///
/// The two-sided p-value sums the probabilities of every outcome no more
/// likely than the observed one.
pub fn binomial_test(k: u64, n: u64, p: f64, alternative: Alternative) -> Result<BinomialResult> {
    if n == 0 {
        return Err(CoreError::InvalidArgument("binomial test needs at least one trial".into()));
    }
    if k > n {
        return Err(CoreError::InvalidArgument(format!("{k} successes out of {n} trials")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(CoreError::InvalidArgument(format!("success rate {p} outside (0, 1)")));
    }
    let terms: Vec<f64> = match alternative {
        Alternative::Greater => (k..=n).map(|i| ln_pmf(i, n, p)).collect(),
        Alternative::Less => (0..=k).map(|i| ln_pmf(i, n, p)).collect(),
        Alternative::TwoSided => {
            let cut = ln_pmf(k, n, p) + BINOM_RTOL.ln_1p();
            (0..=n).map(|i| ln_pmf(i, n, p)).filter(|&l| l <= cut).collect()
        }
    };
    let full = match alternative {
        Alternative::TwoSided => terms.len() as u64 == n + 1,
        Alternative::Greater => k == 0,
        Alternative::Less => k == n,
    };
    let p_value = if full { 1.0 } else { log_sum_exp(&terms).exp().min(1.0) };
    Ok(BinomialResult { k, n, p, alternative, p_value })
}
