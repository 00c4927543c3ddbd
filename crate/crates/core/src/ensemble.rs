//! Ensemble combination: WAIC scoring, model weights, Bayesian model
//! averaging and the per-user, per-day inference entry point.

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::math::poisson_logpmf;
use crate::inference::{
    build_prior_spec, extract_map, run_mh, ChangePointState, MhConfig, ModelKind, PosteriorSample,
    PriorCenters,
};
use crate::preprocess::{detect_absence, DormInterval, SlotSeries};
use crate::timegrid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Estimated,
    Absent,
    InsufficientPrior,
}

/// One ensemble member's contribution to a day's estimate.
#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub map: ChangePointState,
    pub waic: f64,
    pub weight: f64,
}

/// Per-user, per-day output of the detection engine.
#[derive(Debug, Clone)]
pub struct SleepEstimate {
    pub device: String,
    pub day: NaiveDate,
    pub status: EstimateStatus,
    pub t_sleep_slot: Option<usize>,
    pub t_awake_slot: Option<usize>,
    pub t_sleep_time: Option<String>,
    pub t_awake_time: Option<String>,
    pub duration_minutes: Option<u32>,
    pub models: Vec<ModelOutcome>,
}

/// WAIC from the pointwise Poisson likelihood under each sample's implied
/// per-slot rate:
///
/// `lppd = sum_t ln(mean_s p(w_t | s))`, `p_waic = sum_t var_s(ln p(w_t | s))`
/// (unbiased sample variance), returning `-2 (lppd - p_waic)`.
pub fn compute_waic(series: &SlotSeries, samples: &[PosteriorSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut log_liks = vec![0.0f64; samples.len()];
    for (slot, &w) in series.counts.iter().enumerate() {
        for (s, sample) in samples.iter().enumerate() {
            let state = &sample.state;
            let rate = if slot >= state.t_sleep && slot < state.t_awake {
                state.lambda_sleep
            } else {
                state.lambda_awake
            };
            log_liks[s] = poisson_logpmf(w, rate)?;
        }
        // ln(mean of p) via log-sum-exp.
        let max = log_liks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = log_liks.iter().map(|&l| (l - max).exp()).sum();
        lppd += max + (sum_exp / n).ln();

        let mean = log_liks.iter().sum::<f64>() / n;
        if samples.len() > 1 {
            p_waic += log_liks.iter().map(|&l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        }
    }
    Ok(-2.0 * (lppd - p_waic))
}

/// `w_m = exp(-(WAIC_m - min WAIC)/2)`, normalized to sum to one.
pub fn akaike_weights(waic_values: &[f64]) -> Result<Vec<f64>> {
    if waic_values.is_empty() {
        return Err(Error::Domain("no WAIC values to weight".into()));
    }
    if waic_values.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("WAIC values".into()));
    }
    let min = waic_values.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = waic_values.iter().map(|w| (-0.5 * (w - min)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Weighted-average change points, rounded to the slot grid. If rounding
/// leaves the pair shorter than the minimum sleep length, the wake slot is
/// raised to `t_sleep + k`.
pub fn bma_combine(
    maps: &[(usize, usize)],
    weights: &[f64],
    min_sleep_slots: usize,
) -> Result<(usize, usize)> {
    if maps.len() != weights.len() || maps.is_empty() {
        return Err(Error::LengthMismatch(format!(
            "{} MAP states vs {} weights",
            maps.len(),
            weights.len()
        )));
    }
    let sleep: f64 = maps
        .iter()
        .zip(weights)
        .map(|((t, _), w)| *t as f64 * w)
        .sum();
    let awake: f64 = maps
        .iter()
        .zip(weights)
        .map(|((_, t), w)| *t as f64 * w)
        .sum();
    let t_sleep = sleep.round() as usize;
    let t_awake = (awake.round() as usize).max(t_sleep + min_sleep_slots);
    Ok((t_sleep, t_awake))
}

/// Everything `infer_user_day` needs besides the series itself.
#[derive(Debug, Clone)]
pub struct InferParams {
    pub grid: TimeGrid,
    pub centers: PriorCenters,
    pub min_sleep_slots: usize,
    pub sigma_slots: f64,
    pub absence_min_events: u32,
    pub mh: MhConfig,
    /// Seed already specific to this (device, day).
    pub seed: u64,
}

const MODEL_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Run the full ensemble for one (device, day).
///
/// Absent days short-circuit with no change points. The location model is
/// skipped when its prior is unavailable and the weights renormalize over
/// the members that ran; each member keeps its own seed stream so skipping
/// one never perturbs another.
pub fn infer_user_day(
    series: &SlotSeries,
    residential: Option<&SlotSeries>,
    dorm: Option<&DormInterval>,
    params: &InferParams,
) -> Result<SleepEstimate> {
    if detect_absence(series, residential, params.absence_min_events) {
        return Ok(SleepEstimate {
            device: series.device.clone(),
            day: series.day,
            status: EstimateStatus::Absent,
            t_sleep_slot: None,
            t_awake_slot: None,
            t_sleep_time: None,
            t_awake_time: None,
            duration_minutes: None,
            models: Vec::new(),
        });
    }

    let mut outcomes: Vec<(ModelKind, ChangePointState, f64)> = Vec::new();
    for (index, kind) in ModelKind::ALL.iter().enumerate() {
        let prior = match build_prior_spec(
            *kind,
            dorm,
            params.centers,
            params.min_sleep_slots,
            params.sigma_slots,
        ) {
            Ok(prior) => prior,
            Err(Error::PriorUnavailable(reason)) => {
                log::debug!("{} {}: skipping {}: {reason}", series.device, series.day, kind.name());
                continue;
            }
            Err(other) => return Err(other),
        };
        let seed = params
            .seed
            .wrapping_add(MODEL_SEED_STRIDE.wrapping_mul(index as u64));
        let samples = run_mh(series, &prior, &params.mh, seed)?;
        let map = extract_map(&samples)?;
        let waic = compute_waic(series, &samples)?;
        outcomes.push((*kind, map, waic));
    }

    if outcomes.is_empty() {
        return Ok(SleepEstimate {
            device: series.device.clone(),
            day: series.day,
            status: EstimateStatus::InsufficientPrior,
            t_sleep_slot: None,
            t_awake_slot: None,
            t_sleep_time: None,
            t_awake_time: None,
            duration_minutes: None,
            models: Vec::new(),
        });
    }

    let waics: Vec<f64> = outcomes.iter().map(|(_, _, w)| *w).collect();
    let weights = akaike_weights(&waics)?;
    let maps: Vec<(usize, usize)> = outcomes
        .iter()
        .map(|(_, map, _)| (map.t_sleep, map.t_awake))
        .collect();
    let (t_sleep, t_awake) = bma_combine(&maps, &weights, params.min_sleep_slots)?;

    let models = outcomes
        .into_iter()
        .zip(weights)
        .map(|((kind, map, waic), weight)| ModelOutcome {
            kind,
            map,
            waic,
            weight,
        })
        .collect();

    let duration =
        (t_awake - t_sleep) as u32 * params.grid.slot_minutes();
    Ok(SleepEstimate {
        device: series.device.clone(),
        day: series.day,
        status: EstimateStatus::Estimated,
        t_sleep_slot: Some(t_sleep),
        t_awake_slot: Some(t_awake),
        t_sleep_time: Some(params.grid.slot_start_rfc3339(series.day, t_sleep)),
        t_awake_time: Some(params.grid.slot_start_rfc3339(series.day, t_awake)),
        duration_minutes: Some(duration),
        models,
    })
}

/// Wire form of one estimate line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub dev: String,
    pub day: NaiveDate,
    pub status: EstimateStatus,
    pub t_sleep: Option<String>,
    pub t_awake: Option<String>,
    pub duration_min: Option<u32>,
    pub models: Vec<ModelRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub name: String,
    pub t_sleep: usize,
    pub t_awake: usize,
    pub waic: f64,
    pub weight: f64,
}

impl From<&SleepEstimate> for EstimateRecord {
    fn from(est: &SleepEstimate) -> Self {
        Self {
            dev: est.device.clone(),
            day: est.day,
            status: est.status,
            t_sleep: est.t_sleep_time.clone(),
            t_awake: est.t_awake_time.clone(),
            duration_min: est.duration_minutes,
            models: est
                .models
                .iter()
                .map(|m| ModelRecord {
                    name: m.kind.name().to_string(),
                    t_sleep: m.map.t_sleep,
                    t_awake: m.map.t_awake,
                    waic: m.waic,
                    weight: m.weight,
                })
                .collect(),
        }
    }
}

/// Estimates as JSON Lines, one record per (device, day).
pub fn write_estimates_jsonl(mut writer: impl Write, estimates: &[SleepEstimate]) -> Result<()> {
    for est in estimates {
        serde_json::to_writer(&mut writer, &EstimateRecord::from(est))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_estimates_jsonl(reader: impl BufRead) -> Result<Vec<EstimateRecord>> {
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::HierState;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn series(counts: Vec<u32>) -> SlotSeries {
        SlotSeries::new(
            "d1",
            NaiveDate::from_ymd_opt(2019, 10, 1).unwrap(),
            counts,
            &TimeGrid::default_utc(),
        )
        .unwrap()
    }

    fn state(t_sleep: usize, t_awake: usize, ls: f64, la: f64) -> ChangePointState {
        ChangePointState {
            t_sleep,
            t_awake,
            lambda_sleep: ls,
            lambda_awake: la,
            hier: None,
        }
    }

    fn sample(st: ChangePointState) -> PosteriorSample {
        PosteriorSample {
            state: st,
            log_joint: -1.0,
        }
    }

    fn params(seed: u64) -> InferParams {
        InferParams {
            grid: TimeGrid::default_utc(),
            centers: PriorCenters {
                bed_slot: 24,
                wake_slot: 56,
            },
            min_sleep_slots: 12,
            sigma_slots: 12.0,
            absence_min_events: 4,
            mh: MhConfig::default(),
            seed,
        }
    }

    #[test]
    fn waic_zero_variance_case() {
        let s = series(vec![1; 96]);
        let st = state(24, 56, 0.5, 2.5);
        let samples = vec![sample(st.clone()), sample(st.clone())];
        let waic = compute_waic(&s, &samples).unwrap();

        let mut direct = 0.0;
        for (slot, &w) in s.counts.iter().enumerate() {
            let rate = if (24..56).contains(&slot) { 0.5 } else { 2.5 };
            direct += poisson_logpmf(w, rate).unwrap();
        }
        assert_abs_diff_eq!(waic, -2.0 * direct, epsilon = 1e-9);
    }

    #[test]
    fn waic_matches_two_pass_oracle_with_distinct_samples() {
        let mut counts = vec![2u32; 96];
        counts[30] = 0;
        let s = series(counts.clone());
        let samples = vec![
            sample(state(24, 56, 0.4, 2.2)),
            sample(state(26, 58, 0.6, 2.8)),
        ];
        let waic = compute_waic(&s, &samples).unwrap();

        // Independent two-pass recomputation.
        let mut lppd = 0.0;
        let mut p_waic = 0.0;
        for (slot, &w) in counts.iter().enumerate() {
            let lls: Vec<f64> = samples
                .iter()
                .map(|smp| {
                    let st = &smp.state;
                    let rate = if slot >= st.t_sleep && slot < st.t_awake {
                        st.lambda_sleep
                    } else {
                        st.lambda_awake
                    };
                    poisson_logpmf(w, rate).unwrap()
                })
                .collect();
            let mean_p = lls.iter().map(|l| l.exp()).sum::<f64>() / 2.0;
            lppd += mean_p.ln();
            let mean_l = (lls[0] + lls[1]) / 2.0;
            p_waic += (lls[0] - mean_l).powi(2) + (lls[1] - mean_l).powi(2); // n-1 = 1
        }
        assert_abs_diff_eq!(waic, -2.0 * (lppd - p_waic), epsilon = 1e-9);
    }

    #[test]
    fn waic_rejects_empty_samples() {
        let s = series(vec![1; 96]);
        assert!(matches!(compute_waic(&s, &[]), Err(Error::EmptySamples)));
    }

    #[test]
    fn weights_for_equal_scores_are_uniform() {
        let w = akaike_weights(&[10.0, 10.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-12);
        assert_eq!(akaike_weights(&[5.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn weights_match_hand_computation() {
        let w = akaike_weights(&[0.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.6652409557748218, epsilon = 1e-9);
        assert_abs_diff_eq!(w[1], 0.24472847105479764, epsilon = 1e-9);
        assert_abs_diff_eq!(w[2], 0.09003057317038046, epsilon = 1e-9);
        assert!(akaike_weights(&[f64::INFINITY, 1.0]).is_err());
        assert!(akaike_weights(&[]).is_err());
    }

    #[test]
    fn bma_combines_and_repairs() {
        assert_eq!(
            bma_combine(&[(24, 56), (30, 60), (20, 50)], &[1.0, 0.0, 0.0], 12).unwrap(),
            (24, 56)
        );
        assert_eq!(
            bma_combine(&[(24, 56), (30, 60)], &[0.5, 0.5], 12).unwrap(),
            (27, 58)
        );
        // Rounded pair shorter than k gets its wake slot raised.
        assert_eq!(
            bma_combine(&[(24, 36), (36, 48)], &[0.5, 0.5], 12).unwrap(),
            (30, 42)
        );
        assert!(bma_combine(&[(1, 2)], &[0.5, 0.5], 12).is_err());
    }

    fn dip_counts(seed: u64, t_sleep: usize, t_awake: usize) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..96)
            .map(|slot| {
                let rate = if slot >= t_sleep && slot < t_awake { 0.5 } else { 2.5 };
                rng.sample(rand_distr::Poisson::new(rate).unwrap()) as u32
            })
            .collect()
    }

    #[test]
    fn absent_day_short_circuits() {
        let est = infer_user_day(&series(vec![0; 96]), None, None, &params(1)).unwrap();
        assert_eq!(est.status, EstimateStatus::Absent);
        assert!(est.t_sleep_slot.is_none());
        assert!(est.models.is_empty());
    }

    #[test]
    fn no_dorm_interval_runs_two_models() {
        let est = infer_user_day(&series(dip_counts(11, 24, 56)), None, None, &params(2)).unwrap();
        assert_eq!(est.status, EstimateStatus::Estimated);
        assert_eq!(est.models.len(), 2);
        let total: f64 = est.models.iter().map(|m| m.weight).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        assert!(est.models.iter().all(|m| m.kind != ModelKind::LocationUniform));
    }

    #[test]
    fn full_ensemble_recovers_synthetic_truth() {
        let dorm = DormInterval {
            start_slot: 20,
            end_slot: 62,
            building: "DormA".into(),
        };
        let est = infer_user_day(
            &series(dip_counts(12, 24, 56)),
            None,
            Some(&dorm),
            &params(3),
        )
        .unwrap();
        assert_eq!(est.status, EstimateStatus::Estimated);
        assert_eq!(est.models.len(), 3);
        let t_sleep = est.t_sleep_slot.unwrap();
        let t_awake = est.t_awake_slot.unwrap();
        assert!(t_sleep.abs_diff(24) <= 2, "onset {t_sleep}");
        assert!(t_awake.abs_diff(56) <= 2, "wake {t_awake}");
        assert_eq!(
            est.duration_minutes.unwrap(),
            (t_awake - t_sleep) as u32 * 15
        );
        assert_eq!(est.t_sleep_time.as_deref().unwrap().len(), 25);
    }

    #[test]
    fn determinism_across_calls() {
        let s = series(dip_counts(13, 24, 56));
        let a = infer_user_day(&s, None, None, &params(9)).unwrap();
        let b = infer_user_day(&s, None, None, &params(9)).unwrap();
        assert_eq!(a.t_sleep_slot, b.t_sleep_slot);
        assert_eq!(a.t_awake_slot, b.t_awake_slot);
        for (ma, mb) in a.models.iter().zip(&b.models) {
            assert_eq!(ma.waic, mb.waic);
            assert_eq!(ma.weight, mb.weight);
        }
    }

    #[test]
    fn estimate_jsonl_round_trip() {
        let est = SleepEstimate {
            device: "d1".into(),
            day: NaiveDate::from_ymd_opt(2019, 10, 1).unwrap(),
            status: EstimateStatus::Estimated,
            t_sleep_slot: Some(24),
            t_awake_slot: Some(56),
            t_sleep_time: Some("2019-10-02T00:00:00+00:00".into()),
            t_awake_time: Some("2019-10-02T08:00:00+00:00".into()),
            duration_minutes: Some(480),
            models: vec![ModelOutcome {
                kind: ModelKind::Normal,
                map: state(24, 56, 0.5, 2.5),
                waic: 120.0,
                weight: 1.0,
            }],
        };
        let mut buf = Vec::new();
        write_estimates_jsonl(&mut buf, &[est]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"status\":\"estimated\""));
        assert!(text.contains("\"t_sleep\":\"2019-10-02T00:00:00+00:00\""));

        let back = read_estimates_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].dev, "d1");
        assert_eq!(back[0].duration_min, Some(480));
        assert_eq!(back[0].models[0].name, "normal");
    }

    #[test]
    fn hierarchical_map_state_serializes_without_tau_loss() {
        // The wire format carries slots only; tau lives in the in-memory MAP.
        let st = ChangePointState {
            hier: Some(HierState {
                tau: 9.0,
                alpha: 1.0,
                beta: 1.0,
            }),
            ..state(24, 56, 0.5, 2.5)
        };
        let outcome = ModelOutcome {
            kind: ModelKind::Hierarchical,
            map: st,
            waic: 100.0,
            weight: 1.0,
        };
        assert_eq!(outcome.map.hier.unwrap().tau, 9.0);
    }

    proptest! {
        /// Weights ignore any constant added to every WAIC value.
        #[test]
        fn weights_shift_invariant(
            base in proptest::collection::vec(50.0f64..400.0, 1..5),
            shift in -100.0f64..100.0,
        ) {
            let shifted: Vec<f64> = base.iter().map(|w| w + shift).collect();
            let a = akaike_weights(&base).unwrap();
            let b = akaike_weights(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        /// One-hot weights reproduce that model's MAP exactly.
        #[test]
        fn bma_one_hot_identity(
            idx in 0usize..3,
            maps in proptest::collection::vec((12usize..48, 0usize..40), 3),
        ) {
            let maps: Vec<(usize, usize)> =
                maps.into_iter().map(|(s, extra)| (s, s + 12 + extra)).collect();
            let mut weights = vec![0.0; 3];
            weights[idx] = 1.0;
            let combined = bma_combine(&maps, &weights, 12).unwrap();
            prop_assert_eq!(combined, maps[idx]);
        }
    }
}
