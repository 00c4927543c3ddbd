//! Bayesian change-point core: the two-rate Poisson likelihood, the three
//! prior models, the Metropolis-Hastings sampler, MAP extraction and the
//! rule-based baseline.
//!
//! The change points stay on the discrete slot grid in all three models,
//! which is what makes an exact enumeration oracle possible.

pub mod math;
mod sampler;

pub use sampler::{run_mh, MhConfig};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::preprocess::{DormInterval, SlotSeries};
use math::{exponential_logpdf, gamma_logpdf, ln_factorial, normal_logpdf};

/// Ensemble member identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LocationUniform,
    Normal,
    Hierarchical,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::LocationUniform,
        ModelKind::Normal,
        ModelKind::Hierarchical,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::LocationUniform => "location_uniform",
            Self::Normal => "normal",
            Self::Hierarchical => "hierarchical",
        }
    }
}

/// Hierarchical-model extras: a shared spread for both change points plus its
/// gamma hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierState {
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// One point in the chain's state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointState {
    pub t_sleep: usize,
    pub t_awake: usize,
    pub lambda_sleep: f64,
    pub lambda_awake: f64,
    /// Present exactly when the prior is hierarchical.
    pub hier: Option<HierState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub state: ChangePointState,
    pub log_joint: f64,
}

/// Prior configuration of one ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub model: ModelKind,
    /// Interval start: uniform support start (model 1) or the sleep-onset
    /// prior center (models 2-3), in slots.
    pub t_start: usize,
    /// Interval end: uniform support end (model 1, inclusive) or the wake
    /// prior center (models 2-3), in slots.
    pub t_end: usize,
    /// Center spread in slots for models 2-3 (12 slots = 3 hours).
    pub sigma_slots: f64,
    /// Minimum sleep length k in slots.
    pub min_sleep_slots: usize,
    pub a_awake: f64,
    pub b_awake: f64,
    pub a_sleep: f64,
    pub b_sleep: f64,
    /// Exponential rate of the model-3 hyperpriors on alpha and beta.
    pub hyper_rate: f64,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_start + self.min_sleep_slots > self.t_end {
            return Err(Error::Domain(format!(
                "prior interval [{}, {}] shorter than the minimum sleep length {}",
                self.t_start, self.t_end, self.min_sleep_slots
            )));
        }
        for (name, value) in [
            ("sigma_slots", self.sigma_slots),
            ("a_awake", self.a_awake),
            ("b_awake", self.b_awake),
            ("a_sleep", self.a_sleep),
            ("b_sleep", self.b_sleep),
            ("hyper_rate", self.hyper_rate),
        ] {
            if value <= 0.0 || !value.is_finite() {
                return Err(Error::Domain(format!("prior {name} must be positive, got {value}")));
            }
        }
        if self.min_sleep_slots == 0 {
            return Err(Error::Domain("min_sleep_slots must be at least 1".into()));
        }
        Ok(())
    }

    /// Inclusive support of t_sleep under model 1.
    pub fn sleep_support(&self) -> (usize, usize) {
        (self.t_start, self.t_end - self.min_sleep_slots)
    }

    /// Inclusive support of t_awake under model 1.
    pub fn awake_support(&self) -> (usize, usize) {
        (self.t_start + self.min_sleep_slots, self.t_end)
    }
}

/// Default gamma priors: awake rate 2.5 events/slot, sleep rate around 1.
pub const DEFAULT_A_AWAKE: f64 = 2.5;
pub const DEFAULT_B_AWAKE: f64 = 1.0;
pub const DEFAULT_A_SLEEP: f64 = 1.0;
pub const DEFAULT_B_SLEEP: f64 = 1.0;
pub const DEFAULT_SIGMA_SLOTS: f64 = 12.0;
pub const DEFAULT_MIN_SLEEP_SLOTS: usize = 12;
pub const DEFAULT_HYPER_RATE: f64 = 1.0;

/// Prior centers for models 2-3, as slot indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorCenters {
    pub bed_slot: usize,
    pub wake_slot: usize,
}

/// Assemble the prior for one ensemble member.
///
/// Model 1 needs a dorm interval at least k slots wide; without one it is
/// unavailable and the ensemble proceeds with models 2-3 only.
pub fn build_prior_spec(
    model: ModelKind,
    dorm: Option<&DormInterval>,
    centers: PriorCenters,
    min_sleep_slots: usize,
    sigma_slots: f64,
) -> Result<PriorSpec> {
    let (t_start, t_end) = match model {
        ModelKind::LocationUniform => {
            let dorm = dorm.ok_or_else(|| {
                Error::PriorUnavailable("location model needs a dorm interval".into())
            })?;
            if dorm.span() < min_sleep_slots {
                return Err(Error::PriorUnavailable(format!(
                    "dorm interval spans {} slots, below the minimum sleep length {}",
                    dorm.span(),
                    min_sleep_slots
                )));
            }
            (dorm.start_slot, dorm.end_slot)
        }
        ModelKind::Normal | ModelKind::Hierarchical => (centers.bed_slot, centers.wake_slot),
    };
    let spec = PriorSpec {
        model,
        t_start,
        t_end,
        sigma_slots,
        min_sleep_slots,
        a_awake: DEFAULT_A_AWAKE,
        b_awake: DEFAULT_B_AWAKE,
        a_sleep: DEFAULT_A_SLEEP,
        b_sleep: DEFAULT_B_SLEEP,
        hyper_rate: DEFAULT_HYPER_RATE,
    };
    spec.validate()?;
    Ok(spec)
}

/// Prefix sums over a slot series so any segment's Poisson log-likelihood
/// costs O(1).
#[derive(Debug, Clone)]
pub(crate) struct SeriesStats {
    prefix_count: Vec<u64>,
    prefix_lnfact: Vec<f64>,
}

impl SeriesStats {
    pub(crate) fn new(series: &SlotSeries) -> Self {
        let mut prefix_count = Vec::with_capacity(series.len() + 1);
        let mut prefix_lnfact = Vec::with_capacity(series.len() + 1);
        prefix_count.push(0);
        prefix_lnfact.push(0.0);
        for &w in &series.counts {
            prefix_count.push(prefix_count.last().unwrap() + u64::from(w));
            prefix_lnfact.push(prefix_lnfact.last().unwrap() + ln_factorial(w));
        }
        Self {
            prefix_count,
            prefix_lnfact,
        }
    }

    pub(crate) fn slots(&self) -> usize {
        self.prefix_count.len() - 1
    }

    /// (event total, slot count, summed ln factorials) over `[from, to)`.
    pub(crate) fn segment(&self, from: usize, to: usize) -> (u64, usize, f64) {
        (
            self.prefix_count[to] - self.prefix_count[from],
            to - from,
            self.prefix_lnfact[to] - self.prefix_lnfact[from],
        )
    }

    fn segment_loglik(&self, from: usize, to: usize, lambda: f64) -> f64 {
        let (events, slots, lnfact) = self.segment(from, to);
        events as f64 * lambda.ln() - slots as f64 * lambda - lnfact
    }
}

/// Unnormalized log posterior of a state: two-rate Poisson likelihood over
/// the three segments plus the model's priors. Returns `-inf` for states
/// violating `t_sleep + k <= t_awake` (or, for model 1, its uniform support).
pub fn log_joint(series: &SlotSeries, state: &ChangePointState, prior: &PriorSpec) -> Result<f64> {
    let stats = SeriesStats::new(series);
    log_joint_with_stats(&stats, state, prior)
}

pub(crate) fn log_joint_with_stats(
    stats: &SeriesStats,
    state: &ChangePointState,
    prior: &PriorSpec,
) -> Result<f64> {
    let slots = stats.slots();
    if state.lambda_sleep <= 0.0 || state.lambda_awake <= 0.0 {
        return Err(Error::Domain("rates must be positive".into()));
    }
    match (prior.model, &state.hier) {
        (ModelKind::Hierarchical, None) => {
            return Err(Error::Domain(
                "hierarchical prior needs tau/alpha/beta in the state".into(),
            ))
        }
        (ModelKind::LocationUniform | ModelKind::Normal, Some(_)) => {
            return Err(Error::Domain(
                "non-hierarchical prior with hierarchical state".into(),
            ))
        }
        _ => {}
    }

    if state.t_awake > slots || state.t_sleep + prior.min_sleep_slots > state.t_awake {
        return Ok(f64::NEG_INFINITY);
    }

    let t_prior = match prior.model {
        ModelKind::LocationUniform => {
            let (s_lo, s_hi) = prior.sleep_support();
            let (a_lo, a_hi) = prior.awake_support();
            if state.t_sleep < s_lo
                || state.t_sleep > s_hi
                || state.t_awake < a_lo
                || state.t_awake > a_hi
            {
                return Ok(f64::NEG_INFINITY);
            }
            -(((s_hi - s_lo + 1) as f64).ln()) - ((a_hi - a_lo + 1) as f64).ln()
        }
        ModelKind::Normal => {
            normal_logpdf(state.t_sleep as f64, prior.t_start as f64, prior.sigma_slots)?
                + normal_logpdf(state.t_awake as f64, prior.t_end as f64, prior.sigma_slots)?
        }
        ModelKind::Hierarchical => {
            let hier = state.hier.as_ref().expect("checked above");
            if hier.tau <= 0.0 || hier.alpha <= 0.0 || hier.beta <= 0.0 {
                return Err(Error::Domain("hierarchical parameters must be positive".into()));
            }
            normal_logpdf(state.t_sleep as f64, prior.t_start as f64, hier.tau)?
                + normal_logpdf(state.t_awake as f64, prior.t_end as f64, hier.tau)?
                + gamma_logpdf(hier.tau, hier.alpha, hier.beta)?
                + exponential_logpdf(hier.alpha, prior.hyper_rate)?
                + exponential_logpdf(hier.beta, prior.hyper_rate)?
        }
    };

    let likelihood = stats.segment_loglik(0, state.t_sleep, state.lambda_awake)
        + stats.segment_loglik(state.t_sleep, state.t_awake, state.lambda_sleep)
        + stats.segment_loglik(state.t_awake, slots, state.lambda_awake);

    let rate_priors = gamma_logpdf(state.lambda_sleep, prior.a_sleep, prior.b_sleep)?
        + gamma_logpdf(state.lambda_awake, prior.a_awake, prior.b_awake)?;

    Ok(likelihood + t_prior + rate_priors)
}

/// State of the sample with the largest log joint; ties go to the earliest.
pub fn extract_map(samples: &[PosteriorSample]) -> Result<ChangePointState> {
    let mut best: Option<&PosteriorSample> = None;
    for sample in samples {
        match best {
            None => best = Some(sample),
            Some(current) if sample.log_joint > current.log_joint => best = Some(sample),
            _ => {}
        }
    }
    best.map(|s| s.state.clone()).ok_or(Error::EmptySamples)
}

/// Rule-based baseline: within the dorm interval, a slot is active when its
/// count exceeds the threshold; the longest maximal inactive run is the
/// sleeping period. Ties go to the earliest run; `None` when every slot is
/// active.
pub fn rule_based_baseline(
    series: &SlotSeries,
    interval: &DormInterval,
    rate_threshold: u32,
) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut run_start: Option<usize> = None;
    for slot in interval.start_slot..interval.end_slot {
        let inactive = series.counts[slot] <= rate_threshold;
        match (run_start, inactive) {
            (None, true) => run_start = Some(slot),
            (Some(start), false) => {
                best = longer(best, (start, slot));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(start) = run_start {
        best = longer(best, (start, interval.end_slot));
    }
    best
}

fn longer(best: Option<(usize, usize)>, candidate: (usize, usize)) -> Option<(usize, usize)> {
    match best {
        None => Some(candidate),
        Some((s, e)) if candidate.1 - candidate.0 > e - s => Some(candidate),
        keep => keep,
    }
}
