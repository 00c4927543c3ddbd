//! Exact posterior over the change points by exhaustive enumeration.
//!
//! Gamma-Poisson conjugacy integrates the rates out of each segment in
//! closed form, so the unnormalized posterior of every valid (t_sleep,
//! t_awake) pair is computable directly. The sampler draws the rates while
//! this module integrates them away; both target the same marginal over the
//! change points, which is what makes MAP comparisons between them valid.
//! The hierarchical model's hyper-integral has no closed form and is not
//! supported here.

use std::collections::BTreeMap;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::inference::math::{ln_factorial, normal_logpdf};
use crate::inference::{ModelKind, PriorSpec};
use crate::preprocess::SlotSeries;

#[derive(Debug, Clone)]
pub struct EnumerationResult {
    pub map_t_sleep: usize,
    pub map_t_awake: usize,
    /// Unnormalized log posterior of every pair with `t_sleep + k <= t_awake`
    /// inside the prior support.
    pub log_posterior: BTreeMap<(usize, usize), f64>,
}

impl EnumerationResult {
    /// Dump the table as CSV (`t_sleep,t_awake,log_posterior`) for debugging.
    pub fn to_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["t_sleep", "t_awake", "log_posterior"])?;
        for ((ts, ta), lp) in &self.log_posterior {
            csv.write_record([ts.to_string(), ta.to_string(), format!("{lp}")])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Log marginal likelihood of a union of segments sharing one gamma-prior
/// rate:
///
/// `ln Int prod_t Poisson(w_t | l) Gamma(l | a, b) dl
///    = ln G(a + W) - ln G(a) + a ln b - (a + W) ln(b + n) - sum_t ln(w_t!)`
///
/// with `W` the summed counts and `n` the total slot count. An empty union
/// contributes zero.
pub fn segment_log_marginal(segments: &[&[u32]], shape: f64, rate: f64) -> Result<f64> {
    if shape <= 0.0 || rate <= 0.0 {
        return Err(Error::Domain(format!(
            "gamma parameters must be positive, got shape={shape}, rate={rate}"
        )));
    }
    let mut events = 0u64;
    let mut slots = 0usize;
    let mut lnfact = 0.0;
    for segment in segments {
        for &w in *segment {
            events += u64::from(w);
            lnfact += ln_factorial(w);
        }
        slots += segment.len();
    }
    Ok(log_marginal_from_sums(events, slots, lnfact, shape, rate))
}

fn log_marginal_from_sums(events: u64, slots: usize, lnfact: f64, shape: f64, rate: f64) -> f64 {
    let w = events as f64;
    let n = slots as f64;
    ln_gamma(shape + w) - ln_gamma(shape) + shape * rate.ln() - (shape + w) * (rate + n).ln()
        - lnfact
}

/// Exhaustive MAP for the uniform and normal priors, O(S^2) via prefix sums.
/// Ties go to the lexicographically smallest pair.
pub fn exact_map(series: &SlotSeries, prior: &PriorSpec) -> Result<EnumerationResult> {
    prior.validate()?;
    if prior.model == ModelKind::Hierarchical {
        return Err(Error::UnsupportedModel(prior.model.name().into()));
    }
    let slots = series.len();
    let k = prior.min_sleep_slots;
    if k > slots {
        return Err(Error::Domain(format!(
            "minimum sleep length {k} exceeds the {slots}-slot day"
        )));
    }

    let mut prefix_count = vec![0u64; slots + 1];
    let mut prefix_lnfact = vec![0.0f64; slots + 1];
    for (i, &w) in series.counts.iter().enumerate() {
        prefix_count[i + 1] = prefix_count[i] + u64::from(w);
        prefix_lnfact[i + 1] = prefix_lnfact[i] + ln_factorial(w);
    }
    let seg = |from: usize, to: usize| -> (u64, usize, f64) {
        (
            prefix_count[to] - prefix_count[from],
            to - from,
            prefix_lnfact[to] - prefix_lnfact[from],
        )
    };

    let (sleep_range, awake_range) = match prior.model {
        ModelKind::LocationUniform => {
            let (s_lo, s_hi) = prior.sleep_support();
            let (a_lo, a_hi) = prior.awake_support();
            ((s_lo, s_hi.min(slots.saturating_sub(1))), (a_lo, a_hi.min(slots)))
        }
        _ => ((0, slots - k), (k, slots)),
    };

    let mut table = BTreeMap::new();
    let mut best: Option<((usize, usize), f64)> = None;
    for t_sleep in sleep_range.0..=sleep_range.1 {
        for t_awake in awake_range.0.max(t_sleep + k)..=awake_range.1 {
            let (sw, sn, sf) = seg(t_sleep, t_awake);
            let sleep_marginal =
                log_marginal_from_sums(sw, sn, sf, prior.a_sleep, prior.b_sleep);
            let (hw, hn, hf) = seg(0, t_sleep);
            let (tw, tn, tf) = seg(t_awake, slots);
            let awake_marginal = log_marginal_from_sums(
                hw + tw,
                hn + tn,
                hf + tf,
                prior.a_awake,
                prior.b_awake,
            );
            let t_prior = match prior.model {
                ModelKind::LocationUniform => {
                    let (s_lo, s_hi) = prior.sleep_support();
                    let (a_lo, a_hi) = prior.awake_support();
                    -(((s_hi - s_lo + 1) as f64).ln()) - ((a_hi - a_lo + 1) as f64).ln()
                }
                _ => {
                    normal_logpdf(t_sleep as f64, prior.t_start as f64, prior.sigma_slots)?
                        + normal_logpdf(t_awake as f64, prior.t_end as f64, prior.sigma_slots)?
                }
            };
            let lp = sleep_marginal + awake_marginal + t_prior;
            table.insert((t_sleep, t_awake), lp);
            // Strict comparison in (t_sleep, t_awake) ascending order keeps
            // the lexicographically smallest argmax on ties.
            if best.map_or(true, |(_, b)| lp > b) {
                best = Some(((t_sleep, t_awake), lp));
            }
        }
    }

    let ((map_t_sleep, map_t_awake), _) = best.ok_or_else(|| {
        Error::Domain("prior support admits no valid change-point pair".into())
    })?;
    Ok(EnumerationResult {
        map_t_sleep,
        map_t_awake,
        log_posterior: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{
        DEFAULT_A_AWAKE, DEFAULT_A_SLEEP, DEFAULT_B_AWAKE, DEFAULT_B_SLEEP, DEFAULT_HYPER_RATE,
        DEFAULT_SIGMA_SLOTS,
    };
    use crate::timegrid::TimeGrid;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    fn tiny_series(counts: Vec<u32>, slot_minutes: u32) -> SlotSeries {
        let grid = TimeGrid::new(
            slot_minutes,
            chrono::NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
            chrono_tz::UTC,
        )
        .unwrap();
        SlotSeries::new(
            "d1",
            NaiveDate::from_ymd_opt(2019, 10, 1).unwrap(),
            counts,
            &grid,
        )
        .unwrap()
    }

    fn uniform_prior(t_start: usize, t_end: usize, k: usize) -> PriorSpec {
        PriorSpec {
            model: ModelKind::LocationUniform,
            t_start,
            t_end,
            sigma_slots: DEFAULT_SIGMA_SLOTS,
            min_sleep_slots: k,
            a_awake: DEFAULT_A_AWAKE,
            b_awake: DEFAULT_B_AWAKE,
            a_sleep: DEFAULT_A_SLEEP,
            b_sleep: DEFAULT_B_SLEEP,
            hyper_rate: DEFAULT_HYPER_RATE,
        }
    }

    /// Adaptive Simpson quadrature of the integrand in linear space, with the
    /// peak factored out for stability.
    fn quadrature_log_marginal(counts: &[u32], shape: f64, rate: f64) -> f64 {
        let events: u64 = counts.iter().map(|&w| u64::from(w)).sum();
        let slots = counts.len() as f64;
        let lnfact: f64 = counts.iter().map(|&w| ln_factorial(w)).sum();
        // log integrand up to the -lnfact constant:
        // (shape - 1 + W) ln l - (rate + n) l + shape ln rate... constants kept outside.
        let a_eff = shape + events as f64;
        let b_eff = rate + slots;
        let log_f = |l: f64| -> f64 {
            if l <= 0.0 {
                return f64::NEG_INFINITY;
            }
            (a_eff - 1.0) * l.ln() - b_eff * l
        };
        let mode = ((a_eff - 1.0) / b_eff).max(1e-12);
        let peak = log_f(mode);
        let f = |l: f64| (log_f(l) - peak).exp();

        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                adapt(f, a, m, left, eps / 2.0, depth - 1)
                    + adapt(f, m, b, right, eps / 2.0, depth - 1)
            }
        }

        let sd = a_eff.sqrt() / b_eff;
        let upper = mode + 12.0 * sd + 5.0 / b_eff;
        let whole = simpson(&f, 1e-12, upper);
        let integral = adapt(&f, 1e-12, upper, whole, 1e-12, 40);
        peak + integral.ln() + shape * rate.ln() - ln_gamma(shape) - lnfact
    }

    #[test]
    fn single_zero_slot_marginal_is_half() {
        // Int e^-l * e^-l dl over l>=0 is 1/2.
        let v = segment_log_marginal(&[&[0u32]], 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, (0.5f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_one_slot_marginal_is_quarter() {
        // Int l e^-l * e^-l dl = 1/4, cross-checked by quadrature.
        let v = segment_log_marginal(&[&[1u32]], 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, (0.25f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, quadrature_log_marginal(&[1], 1.0, 1.0), epsilon = 1e-6);
    }

    #[test]
    fn marginal_matches_quadrature_on_fixtures() {
        let fixtures: [(&[u32], f64, f64); 4] = [
            (&[4, 3, 0, 1], 2.5, 1.0),
            (&[0, 0, 0, 0, 0, 0], 1.0, 1.0),
            (&[7, 2, 5], 0.7, 2.0),
            (&[1], 3.0, 0.5),
        ];
        for (counts, shape, rate) in fixtures {
            let closed = segment_log_marginal(&[counts], shape, rate).unwrap();
            let quad = quadrature_log_marginal(counts, shape, rate);
            let rel = ((closed - quad).abs()) / quad.abs().max(1.0);
            assert!(
                rel < 1e-6,
                "closed {closed} vs quadrature {quad} for {counts:?}"
            );
        }
    }

    #[test]
    fn union_of_segments_equals_concatenation() {
        let head: &[u32] = &[4, 3];
        let tail: &[u32] = &[4, 3];
        let joined: &[u32] = &[4, 3, 4, 3];
        assert_abs_diff_eq!(
            segment_log_marginal(&[head, tail], 2.5, 1.0).unwrap(),
            segment_log_marginal(&[joined], 2.5, 1.0).unwrap(),
            epsilon = 1e-12
        );
        // Empty union contributes exactly zero.
        assert_abs_diff_eq!(
            segment_log_marginal(&[], 2.5, 1.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(segment_log_marginal(&[&[1u32]], 0.0, 1.0).is_err());
        assert!(segment_log_marginal(&[&[1u32]], 1.0, -1.0).is_err());
    }

    #[test]
    fn zero_run_is_the_analytically_favored_sleep_segment() {
        let s = tiny_series(vec![4, 3, 0, 0, 0, 0, 4, 3], 180);
        let prior = uniform_prior(0, 8, 2);
        let result = exact_map(&s, &prior).unwrap();
        assert_eq!((result.map_t_sleep, result.map_t_awake), (2, 6));
    }

    #[test]
    fn all_zero_counts_favor_the_longest_sleep_segment() {
        // Under Gamma(1,1) sleep vs Gamma(2.5,1) awake rates, empty awake
        // segments cost nothing and each awake slot costs more than a sleep
        // slot, so the maximal-length pair wins; lexicographic tie rule makes
        // it the smallest such pair.
        let s = tiny_series(vec![0; 8], 180);
        let prior = uniform_prior(0, 8, 2);
        let result = exact_map(&s, &prior).unwrap();
        assert_eq!((result.map_t_sleep, result.map_t_awake), (0, 8));

        // Direct verification against the table.
        let full = result.log_posterior[&(0, 8)];
        for (&pair, &lp) in &result.log_posterior {
            if pair != (0, 8) {
                assert!(lp <= full, "{pair:?} beat the full-span pair");
            }
        }
    }

    #[test]
    fn hierarchical_model_is_unsupported() {
        let s = tiny_series(vec![1; 8], 180);
        let prior = PriorSpec {
            model: ModelKind::Hierarchical,
            ..uniform_prior(0, 8, 2)
        };
        assert!(matches!(
            exact_map(&s, &prior),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn table_covers_exactly_the_constrained_support() {
        let s = tiny_series(vec![1; 8], 180);
        let prior = uniform_prior(1, 7, 2);
        let result = exact_map(&s, &prior).unwrap();
        for t_sleep in 0..8 {
            for t_awake in 0..=8 {
                let inside = t_sleep >= 1
                    && t_sleep <= 5
                    && t_awake >= 3
                    && t_awake <= 7
                    && t_sleep + 2 <= t_awake;
                assert_eq!(
                    result.log_posterior.contains_key(&(t_sleep, t_awake)),
                    inside,
                    "wrong coverage at ({t_sleep},{t_awake})"
                );
            }
        }
    }

    #[test]
    fn invariant_to_reordering_within_segments() {
        let a = tiny_series(vec![4, 3, 0, 1, 0, 0, 4, 3], 180);
        let b = tiny_series(vec![3, 4, 0, 0, 1, 0, 4, 3], 180); // swapped inside both
        let prior = uniform_prior(0, 8, 4);
        let ra = exact_map(&a, &prior).unwrap();
        let rb = exact_map(&b, &prior).unwrap();
        assert_abs_diff_eq!(
            ra.log_posterior[&(2, 6)],
            rb.log_posterior[&(2, 6)],
            epsilon = 1e-12
        );
    }

    #[test]
    fn normal_prior_enumeration_matches_brute_force_on_small_series() {
        let s = tiny_series(vec![3, 2, 0, 0, 0, 1, 3, 2], 180);
        let prior = PriorSpec {
            model: ModelKind::Normal,
            ..uniform_prior(2, 6, 2)
        };
        let result = exact_map(&s, &prior).unwrap();

        // Brute force with per-pair quadrature marginals.
        let mut best = (0, 0);
        let mut best_lp = f64::NEG_INFINITY;
        for t_sleep in 0..=6usize {
            for t_awake in (t_sleep + 2)..=8usize {
                let sleep: Vec<u32> = s.counts[t_sleep..t_awake].to_vec();
                let awake: Vec<u32> = s.counts[..t_sleep]
                    .iter()
                    .chain(&s.counts[t_awake..])
                    .copied()
                    .collect();
                let lp = quadrature_log_marginal(&sleep, 1.0, 1.0)
                    + quadrature_log_marginal(&awake, 2.5, 1.0)
                    + normal_logpdf(t_sleep as f64, 2.0, 12.0).unwrap()
                    + normal_logpdf(t_awake as f64, 6.0, 12.0).unwrap();
                if lp > best_lp {
                    best_lp = lp;
                    best = (t_sleep, t_awake);
                }
            }
        }
        assert_eq!((result.map_t_sleep, result.map_t_awake), best);
        assert_abs_diff_eq!(result.log_posterior[&best], best_lp, epsilon = 1e-6);
    }
}
