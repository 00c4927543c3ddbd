//! Single-chain Metropolis-Hastings over the change-point state.
//!
//! One sweep updates each coordinate once in fixed order: t_sleep, t_awake,
//! lambda_sleep, lambda_awake, then (hierarchical model only) tau, alpha,
//! beta. Change points take symmetric integer random-walk steps; positive
//! parameters take multiplicative log-space Gaussian steps with the log-scale
//! Jacobian folded into the acceptance ratio. Proposals that violate the
//! state constraints are rejected outright. Fully deterministic given a seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::preprocess::SlotSeries;

use super::{
    log_joint_with_stats, ChangePointState, HierState, ModelKind, PosteriorSample, PriorSpec,
    SeriesStats,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    /// Sweeps discarded before retention starts.
    pub burn_in: usize,
    /// Samples kept.
    pub retained: usize,
    /// Sweeps between retained samples.
    pub thin: usize,
    /// Change-point steps are uniform in {-step_t..-1, 1..step_t}.
    pub step_t: usize,
    /// Log-space Gaussian step for the positive parameters.
    pub step_loglambda: f64,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            burn_in: 200,
            retained: 50,
            thin: 5,
            step_t: 4,
            step_loglambda: 0.25,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("mh.burn_in", self.burn_in),
            ("mh.retained", self.retained),
            ("mh.thin", self.thin),
            ("mh.step_t", self.step_t),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("{name}: must be positive")));
            }
        }
        if self.step_loglambda <= 0.0 || !self.step_loglambda.is_finite() {
            return Err(Error::Config("mh.step_loglambda: must be positive".into()));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.retained * self.thin
    }
}

struct Chain<'a> {
    stats: &'a SeriesStats,
    prior: &'a PriorSpec,
    config: &'a MhConfig,
    slots: usize,
    rng: ChaCha8Rng,
    state: ChangePointState,
    log_joint: f64,
}

/// Draw posterior samples for one series under one prior.
///
/// The chain starts at the prior center: t_sleep at the support midpoint
/// (model 1) or the configured onset center (models 2-3), t_awake at
/// `t_sleep + max(k, span/2)`, rates at their prior means, tau at the fixed
/// sigma default with unit hyperparameters.
pub fn run_mh(
    series: &SlotSeries,
    prior: &PriorSpec,
    config: &MhConfig,
    seed: u64,
) -> Result<Vec<PosteriorSample>> {
    config.validate()?;
    prior.validate()?;
    if series.total() == 0 {
        return Err(Error::AbsentSeries);
    }
    let stats = SeriesStats::new(series);
    let state = initial_state(prior, stats.slots())?;
    let log_joint = log_joint_with_stats(&stats, &state, prior)?;
    if !log_joint.is_finite() {
        return Err(Error::Domain(
            "initial state has zero posterior mass".into(),
        ));
    }

    let mut chain = Chain {
        stats: &stats,
        prior,
        config,
        slots: stats.slots(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        state,
        log_joint,
    };

    let mut samples = Vec::with_capacity(config.retained);
    for sweep in 0..config.total_sweeps() {
        chain.sweep()?;
        if sweep >= config.burn_in && (sweep - config.burn_in + 1) % config.thin == 0 {
            samples.push(PosteriorSample {
                state: chain.state.clone(),
                log_joint: chain.log_joint,
            });
        }
    }
    debug_assert_eq!(samples.len(), config.retained);
    Ok(samples)
}

fn initial_state(prior: &PriorSpec, slots: usize) -> Result<ChangePointState> {
    let span = prior.t_end - prior.t_start;
    let k = prior.min_sleep_slots;
    let t_sleep = match prior.model {
        ModelKind::LocationUniform => {
            let (lo, hi) = prior.sleep_support();
            (lo + hi) / 2
        }
        ModelKind::Normal | ModelKind::Hierarchical => prior.t_start,
    };
    let mut t_awake = t_sleep + k.max(span / 2);
    let limit = match prior.model {
        ModelKind::LocationUniform => prior.t_end.min(slots),
        _ => slots,
    };
    t_awake = t_awake.min(limit);
    if t_sleep + k > t_awake {
        return Err(Error::Domain(format!(
            "cannot place an initial state with k={k} inside [{}, {}]",
            prior.t_start, prior.t_end
        )));
    }
    let hier = match prior.model {
        ModelKind::Hierarchical => Some(HierState {
            tau: prior.sigma_slots,
            alpha: 1.0 / prior.hyper_rate,
            beta: 1.0 / prior.hyper_rate,
        }),
        _ => None,
    };
    Ok(ChangePointState {
        t_sleep,
        t_awake,
        lambda_sleep: prior.a_sleep / prior.b_sleep,
        lambda_awake: prior.a_awake / prior.b_awake,
        hier,
    })
}

impl Chain<'_> {
    fn sweep(&mut self) -> Result<()> {
        self.step_t_sleep()?;
        self.step_t_awake()?;
        self.step_positive(Coord::LambdaSleep)?;
        self.step_positive(Coord::LambdaAwake)?;
        if self.prior.model == ModelKind::Hierarchical {
            self.step_positive(Coord::Tau)?;
            self.step_positive(Coord::Alpha)?;
            self.step_positive(Coord::Beta)?;
        }
        Ok(())
    }

    fn integer_step(&mut self) -> i64 {
        let step_t = self.config.step_t as i64;
        let r = self.rng.random_range(0..2 * step_t);
        if r < step_t {
            -(r + 1)
        } else {
            r - step_t + 1
        }
    }

    fn step_t_sleep(&mut self) -> Result<()> {
        let delta = self.integer_step();
        let proposed = self.state.t_sleep as i64 + delta;
        if proposed < 0 {
            return Ok(());
        }
        let proposed = proposed as usize;
        if proposed + self.prior.min_sleep_slots > self.state.t_awake {
            return Ok(());
        }
        if self.prior.model == ModelKind::LocationUniform {
            let (lo, hi) = self.prior.sleep_support();
            if proposed < lo || proposed > hi {
                return Ok(());
            }
        }
        let candidate = ChangePointState {
            t_sleep: proposed,
            ..self.state.clone()
        };
        self.accept_symmetric(candidate)
    }

    fn step_t_awake(&mut self) -> Result<()> {
        let delta = self.integer_step();
        let proposed = self.state.t_awake as i64 + delta;
        if proposed < 0 || proposed as usize > self.slots {
            return Ok(());
        }
        let proposed = proposed as usize;
        if self.state.t_sleep + self.prior.min_sleep_slots > proposed {
            return Ok(());
        }
        if self.prior.model == ModelKind::LocationUniform {
            let (lo, hi) = self.prior.awake_support();
            if proposed < lo || proposed > hi {
                return Ok(());
            }
        }
        let candidate = ChangePointState {
            t_awake: proposed,
            ..self.state.clone()
        };
        self.accept_symmetric(candidate)
    }

    fn accept_symmetric(&mut self, candidate: ChangePointState) -> Result<()> {
        let candidate_lj = log_joint_with_stats(self.stats, &candidate, self.prior)?;
        let log_alpha = candidate_lj - self.log_joint;
        if self.accepts(log_alpha) {
            self.state = candidate;
            self.log_joint = candidate_lj;
        }
        Ok(())
    }

    /// Multiplicative log-space random walk on a positive coordinate. The
    /// proposal density carries a 1/x' factor, so the acceptance ratio gains
    /// ln(x') - ln(x).
    fn step_positive(&mut self, coord: Coord) -> Result<()> {
        let z: f64 = self.rng.sample(StandardNormal);
        let current = coord.get(&self.state);
        let proposed = current * (self.config.step_loglambda * z).exp();
        if proposed <= 0.0 || !proposed.is_finite() {
            return Ok(());
        }
        let mut candidate = self.state.clone();
        coord.set(&mut candidate, proposed);
        let candidate_lj = log_joint_with_stats(self.stats, &candidate, self.prior)?;
        let log_alpha = candidate_lj - self.log_joint + proposed.ln() - current.ln();
        if self.accepts(log_alpha) {
            self.state = candidate;
            self.log_joint = candidate_lj;
        }
        Ok(())
    }

    fn accepts(&mut self, log_alpha: f64) -> bool {
        if log_alpha == f64::NEG_INFINITY {
            return false;
        }
        log_alpha >= 0.0 || self.rng.random::<f64>() < log_alpha.exp()
    }
}

#[derive(Clone, Copy)]
enum Coord {
    LambdaSleep,
    LambdaAwake,
    Tau,
    Alpha,
    Beta,
}

impl Coord {
    fn get(self, state: &ChangePointState) -> f64 {
        match self {
            Self::LambdaSleep => state.lambda_sleep,
            Self::LambdaAwake => state.lambda_awake,
            Self::Tau => state.hier.expect("hierarchical state").tau,
            Self::Alpha => state.hier.expect("hierarchical state").alpha,
            Self::Beta => state.hier.expect("hierarchical state").beta,
        }
    }

    fn set(self, state: &mut ChangePointState, value: f64) {
        match self {
            Self::LambdaSleep => state.lambda_sleep = value,
            Self::LambdaAwake => state.lambda_awake = value,
            Self::Tau => state.hier.as_mut().expect("hierarchical state").tau = value,
            Self::Alpha => state.hier.as_mut().expect("hierarchical state").alpha = value,
            Self::Beta => state.hier.as_mut().expect("hierarchical state").beta = value,
        }
    }
}
