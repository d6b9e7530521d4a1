//! Censored-Beta model of clarification quality.
//!
//! Each backend `l` draws clarification quality from Beta(α_l, β_l). At
//! attempt `k` an annotator accepts when quality exceeds a threshold τ_k;
//! accepted attempts reveal the quality, rejected ones only that it fell
//! below the threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::ClarificationEvent;
use crate::special::{beta_ln_pdf, ln_beta, reg_inc_beta};
use crate::stats::neumaier_sum;

pub const QUALITY_EPS: f64 = 1e-6;
const MAX_STEP_HALVINGS: usize = 50;
const LN_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityObservation {
    /// Attempt index, from 1.
    pub k: u32,
    /// Index into [`QualityDataset::backends`].
    pub backend: usize,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityDataset {
    pub backends: Vec<String>,
    pub observations: Vec<QualityObservation>,
}

impl QualityDataset {
    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.observations.iter().enumerate() {
            if o.k == 0 {
                return Err(CoreError::InvalidArgument(format!("observation {i}: attempt index must be >= 1")));
            }
            if o.backend >= self.backends.len() {
                return Err(CoreError::InvalidArgument(format!("observation {i}: unknown backend index {}", o.backend)));
            }
            match (o.accepted, o.e) {
                (true, None) => {
                    return Err(CoreError::InvalidArgument(format!("observation {i}: accepted without quality")))
                }
                (false, Some(_)) => {
                    return Err(CoreError::InvalidArgument(format!("observation {i}: rejected with a quality value")))
                }
                (true, Some(e)) if e.is_nan() => {
                    return Err(CoreError::InvalidArgument(format!("observation {i}: quality is NaN")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Builds a dataset from clarification events; backends are indexed in
    /// name order.
    pub fn from_events(events: &[ClarificationEvent]) -> Result<Self> {
        let names: Vec<String> = events
            .iter()
            .map(|e| e.backend.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let observations = events
            .iter()
            .map(|e| QualityObservation {
                k: e.attempt_index,
                backend: index[e.backend.as_str()],
                accepted: e.accepted,
                e: e.observed_quality,
            })
            .collect();
        let ds = QualityDataset { backends: names.clone(), observations };
        ds.validate()?;
        Ok(ds)
    }

    pub fn max_attempt(&self) -> usize {
        self.observations.iter().map(|o| o.k as usize).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(CoreError::InvalidArgument(format!("Beta parameters must be positive, got ({alpha}, {beta})")));
        }
        Ok(BetaParams { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        beta_mean(*self)
    }
}

pub fn beta_mean(p: BetaParams) -> f64 {
    p.alpha / (p.alpha + p.beta)
}

/// Acceptance thresholds by attempt; attempts past the end use the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub tau: Vec<f64>,
}

impl ThresholdVector {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(CoreError::InvalidArgument("at least one threshold is required".into()));
        }
        if let Some(t) = tau.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(CoreError::InvalidArgument(format!("threshold {t} outside (0, 1)")));
        }
        Ok(ThresholdVector { tau })
    }

    /// Position of attempt `k` (1-based) in the vector.
    pub fn slot(&self, k: u32) -> usize {
        (k.max(1) as usize - 1).min(self.tau.len() - 1)
    }

    pub fn get(&self, k: u32) -> f64 {
        self.tau[self.slot(k)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodForm {
    /// Accepted attempts contribute f(e) · P(e > τ_k).
    #[default]
    PaperProduct,
    /// Accepted attempts contribute f(e) only.
    StandardCensored,
}

impl std::str::FromStr for LikelihoodForm {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper_product" => Ok(LikelihoodForm::PaperProduct),
            "censored" | "standard_censored" => Ok(LikelihoodForm::StandardCensored),
            _ => Err(CoreError::Config(format!("unknown likelihood form {s:?} (paper|censored)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub fd_step: f64,
    pub accuracy: f64,
    pub seed: u64,
    /// Number of thresholds; defaults to the largest attempt index observed.
    pub n_thresholds: Option<usize>,
    /// Starting thresholds; 0.5 everywhere when absent.
    pub initial_tau: Option<Vec<f64>>,
    /// Keep thresholds at their starting values.
    pub fix_thresholds: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 2000,
            learning_rate: 0.01,
            tolerance: 1e-8,
            fd_step: 1e-5,
            accuracy: 1e-8,
            seed: 0,
            n_thresholds: None,
            initial_tau: None,
            fix_thresholds: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("tolerance", self.tolerance),
            ("fd_step", self.fd_step),
            ("accuracy", self.accuracy),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(CoreError::Config(format!("{name} must be positive")));
            }
        }
        if self.n_thresholds == Some(0) {
            return Err(CoreError::Config("n_thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Per-backend and per-(backend, attempt slot) sufficient statistics.
#[derive(Debug, Clone)]
struct SuffStats {
    n_slots: usize,
    backends: Vec<BackendStats>,
    clamped: usize,
    /// Smallest accepted quality per slot, over all backends.
    min_accepted: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct BackendStats {
    n_accepted: u64,
    sum_ln_e: f64,
    sum_ln_1me: f64,
    accepted: Vec<u64>,
    rejected: Vec<u64>,
}

fn clamp_quality(e: f64) -> (f64, bool) {
    let c = e.clamp(QUALITY_EPS, 1.0 - QUALITY_EPS);
    (c, c != e)
}

impl SuffStats {
    fn build(data: &QualityDataset, n_slots: usize) -> SuffStats {
        let slot = |k: u32| (k.max(1) as usize - 1).min(n_slots - 1);
        let mut ln_e: Vec<Vec<f64>> = vec![Vec::new(); data.backends.len()];
        let mut ln_1me: Vec<Vec<f64>> = vec![Vec::new(); data.backends.len()];
        let mut backends = vec![
            BackendStats { accepted: vec![0; n_slots], rejected: vec![0; n_slots], ..Default::default() };
            data.backends.len()
        ];
        let mut clamped = 0;
        let mut min_accepted = vec![1.0f64; n_slots];
        for o in &data.observations {
            let b = &mut backends[o.backend];
            let s = slot(o.k);
            if o.accepted {
                let (e, was_clamped) = clamp_quality(o.e.unwrap_or(f64::NAN));
                clamped += was_clamped as usize;
                b.n_accepted += 1;
                b.accepted[s] += 1;
                ln_e[o.backend].push(e.ln());
                ln_1me[o.backend].push((1.0 - e).ln());
                min_accepted[s] = min_accepted[s].min(e);
            } else {
                b.rejected[s] += 1;
            }
        }
        for (i, b) in backends.iter_mut().enumerate() {
            b.sum_ln_e = neumaier_sum(ln_e[i].iter().copied());
            b.sum_ln_1me = neumaier_sum(ln_1me[i].iter().copied());
        }
        SuffStats { n_slots, backends, clamped, min_accepted }
    }

    fn n_observations(&self) -> u64 {
        self.backends.iter().map(|b| b.accepted.iter().sum::<u64>() + b.rejected.iter().sum::<u64>()).sum()
    }

    fn backend_ll(&self, l: usize, p: BetaParams, tau: &[f64], form: LikelihoodForm) -> f64 {
        let b = &self.backends[l];
        let mut terms = Vec::with_capacity(2 + 2 * self.n_slots);
        if b.n_accepted > 0 {
            terms.push(-(b.n_accepted as f64) * ln_beta(p.alpha, p.beta));
            terms.push((p.alpha - 1.0) * b.sum_ln_e);
            terms.push((p.beta - 1.0) * b.sum_ln_1me);
        }
        for s in 0..self.n_slots {
            let (acc, rej) = (b.accepted[s], b.rejected[s]);
            if rej == 0 && (acc == 0 || form == LikelihoodForm::StandardCensored) {
                continue;
            }
            let cdf = reg_inc_beta(tau[s], p.alpha, p.beta).unwrap_or(f64::NAN);
            if rej > 0 {
                terms.push(rej as f64 * cdf.max(LN_FLOOR).ln());
            }
            if acc > 0 && form == LikelihoodForm::PaperProduct {
                terms.push(acc as f64 * (1.0 - cdf).max(LN_FLOOR).ln());
            }
        }
        neumaier_sum(terms)
    }

    fn total_ll(&self, params: &[Option<BetaParams>], tau: &[f64], form: LikelihoodForm) -> f64 {
        neumaier_sum(
            params
                .iter()
                .enumerate()
                .filter_map(|(l, p)| p.map(|p| self.backend_ll(l, p, tau, form))),
        )
    }
}

/// Log-likelihood with its clamp count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    /// Accepted qualities moved into [ε, 1 − ε].
    pub clamped: usize,
}

/// Total log-likelihood of `data` at fixed parameters.
pub fn log_likelihood(
    data: &QualityDataset,
    params: &[BetaParams],
    thresholds: &ThresholdVector,
    form: LikelihoodForm,
) -> Result<LogLikelihood> {
    data.validate()?;
    if params.len() != data.backends.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} parameter pairs for {} backends",
            params.len(),
            data.backends.len()
        )));
    }
    let stats = SuffStats::build(data, thresholds.tau.len());
    let params: Vec<Option<BetaParams>> = params.iter().map(|p| Some(*p)).collect();
    Ok(LogLikelihood { value: stats.total_ll(&params, &thresholds.tau, form), clamped: stats.clamped })
}

/// Direct per-observation log density `log f(e; α, β)`.
pub fn observation_ln_density(e: f64, p: BetaParams) -> f64 {
    beta_ln_pdf(clamp_quality(e).0, p.alpha, p.beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendFit {
    pub name: String,
    /// Absent when the backend has no accepted observation.
    pub params: Option<BetaParams>,
    pub mean: Option<f64>,
    pub identifiable: bool,
    pub accepted: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub form: LikelihoodForm,
    pub backends: Vec<BackendFit>,
    pub thresholds: ThresholdVector,
    pub log_likelihood: f64,
    /// Log-likelihood at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub clamped: usize,
    /// Observations of non-identifiable backends, left out of the fit.
    pub excluded_observations: u64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Layout<'a> {
    stats: &'a SuffStats,
    form: LikelihoodForm,
    fitted: Vec<usize>,
    /// Upper bound per threshold slot (1 in the product form).
    caps: Vec<f64>,
    fixed_tau: Option<Vec<f64>>,
}

impl Layout<'_> {
    fn unpack(&self, theta: &[f64]) -> (Vec<Option<BetaParams>>, Vec<f64>) {
        let mut params = vec![None; self.stats.backends.len()];
        for (i, &l) in self.fitted.iter().enumerate() {
            params[l] = Some(BetaParams { alpha: theta[2 * i].exp(), beta: theta[2 * i + 1].exp() });
        }
        let tau = match &self.fixed_tau {
            Some(t) => t.clone(),
            None => {
                let off = 2 * self.fitted.len();
                (0..self.stats.n_slots)
                    .map(|s| (self.caps[s] * logistic(theta[off + s])).clamp(QUALITY_EPS, 1.0 - QUALITY_EPS))
                    .collect()
            }
        };
        (params, tau)
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let (p, t) = self.unpack(theta);
        self.stats.total_ll(&p, &t, self.form)
    }
}

/// Maximum-likelihood fit by gradient ascent on (ln α, ln β, logit τ).
///
/// Gradients are central finite differences of the mean log-likelihood. A
/// step is kept only when it improves the objective; the step size grows
/// after a success and halves after a failure, so the trace never decreases.
pub fn fit_mle(data: &QualityDataset, cfg: &FitConfig, form: LikelihoodForm) -> Result<FitResult> {
    cfg.validate()?;
    data.validate()?;
    if data.backends.is_empty() {
        return Err(CoreError::InvalidArgument("no backends in dataset".into()));
    }
    let n_slots = cfg
        .n_thresholds
        .or_else(|| cfg.initial_tau.as_ref().map(|t| t.len()))
        .unwrap_or_else(|| data.max_attempt())
        .max(1);
    let initial_tau = match &cfg.initial_tau {
        Some(t) if t.len() == n_slots => ThresholdVector::new(t.clone())?.tau,
        Some(t) => {
            return Err(CoreError::Config(format!("{} initial thresholds for {n_slots} slots", t.len())));
        }
        None => vec![0.5; n_slots],
    };
    let stats = SuffStats::build(data, n_slots);
    let fitted: Vec<usize> = (0..data.backends.len()).filter(|&l| stats.backends[l].n_accepted > 0).collect();
    for (l, name) in data.backends.iter().enumerate() {
        if stats.backends[l].n_accepted == 0 {
            tracing::warn!(backend = %name, "no accepted observations; parameters not identifiable");
        }
    }
    let caps: Vec<f64> = match form {
        LikelihoodForm::PaperProduct => vec![1.0; n_slots],
        LikelihoodForm::StandardCensored => stats.min_accepted.clone(),
    };

    let layout = Layout {
        stats: &stats,
        form,
        fitted: fitted.clone(),
        caps: caps.clone(),
        fixed_tau: cfg.fix_thresholds.then(|| initial_tau.clone()),
    };
    let mut theta: Vec<f64> = fitted.iter().flat_map(|_| [0.0, 0.0]).collect();
    if !cfg.fix_thresholds {
        for s in 0..n_slots {
            let ratio = (initial_tau[s] / caps[s]).clamp(QUALITY_EPS, 1.0 - QUALITY_EPS);
            let ratio = if initial_tau[s] < caps[s] { ratio } else { 0.5 };
            theta.push(logit(ratio));
        }
    }

    let n_fit_obs: u64 = fitted
        .iter()
        .map(|&l| stats.backends[l].accepted.iter().sum::<u64>() + stats.backends[l].rejected.iter().sum::<u64>())
        .sum();
    let scale = 1.0 / (n_fit_obs.max(1) as f64);
    let mean_obj = |t: &[f64]| layout.objective(t) * scale;

    let mut current = mean_obj(&theta);
    let mut trace = vec![current / scale];
    let mut lr = cfg.learning_rate;
    let mut converged = false;
    let mut iterations = 0;
    let h = cfg.fd_step;
    while iterations < cfg.max_iters && !theta.is_empty() {
        iterations += 1;
        let grad: Vec<f64> = (0..theta.len())
            .map(|i| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[i] += h;
                down[i] -= h;
                (mean_obj(&up) - mean_obj(&down)) / (2.0 * h)
            })
            .collect();
        if grad.iter().all(|g| *g == 0.0 || !g.is_finite()) {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_STEP_HALVINGS {
            let cand: Vec<f64> =
                theta.iter().zip(&grad).map(|(t, g)| if g.is_finite() { t + lr * g } else { *t }).collect();
            let value = mean_obj(&cand);
            if value.is_finite() && value > current {
                accepted = Some((cand, value));
                lr *= 1.5;
                break;
            }
            lr *= 0.5;
        }
        let Some((cand, value)) = accepted else {
            converged = true;
            break;
        };
        let delta = value - current;
        theta = cand;
        current = value;
        trace.push(current / scale);
        if delta.abs() < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let (params, tau) = layout.unpack(&theta);
    let backends = data
        .backends
        .iter()
        .enumerate()
        .map(|(l, name)| {
            let b = &stats.backends[l];
            BackendFit {
                name: name.clone(),
                params: params[l],
                mean: params[l].map(beta_mean),
                identifiable: params[l].is_some(),
                accepted: b.n_accepted,
                rejected: b.rejected.iter().sum(),
            }
        })
        .collect();
    Ok(FitResult {
        form,
        backends,
        thresholds: ThresholdVector { tau },
        log_likelihood: current / scale,
        trace,
        iterations,
        converged,
        clamped: stats.clamped,
        excluded_observations: stats.n_observations() - n_fit_obs,
    })
}
