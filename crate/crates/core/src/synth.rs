//! Synthetic per-device event traces with known ground truth, plus
//! controlled noise injection.
//!
//! The generator reads the detection model forward: per-slot Poisson counts
//! at an awake rate outside the sleep interval and a low non-zero rate
//! inside it. Sleep-period events land on the home AP; the device also sits
//! on the home AP for a configurable lead-in before sleep and after waking,
//! and roams otherwise. The sleep-regime default of 0.5 events/slot models a
//! dozing phone that still re-associates every 15-30 minutes.

use chrono::{Duration, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::ingest::{EventKind, WifiEvent};
use crate::timegrid::TimeGrid;

#[derive(Debug, Clone)]
pub struct SynthProfile {
    pub device: String,
    pub t_sleep_true: usize,
    pub t_awake_true: usize,
    pub lambda_awake: f64,
    pub lambda_sleep: f64,
    /// Per-day uniform jitter bound on both true change points.
    pub jitter_slots: usize,
    pub home_ap: String,
    pub roam_aps: Vec<String>,
    /// Slots spent on the home AP immediately before sleep and after waking.
    pub home_lead_slots: usize,
    pub min_sleep_slots: usize,
    pub days: usize,
    pub start_day: NaiveDate,
}

impl SynthProfile {
    /// Regular sleeper: asleep 00:00-08:00 at 0.5 events/slot, awake at 2.5.
    pub fn regular(device: impl Into<String>, home_ap: impl Into<String>) -> Self {
        Self {
            device: device.into(),
            t_sleep_true: 24,
            t_awake_true: 56,
            lambda_awake: 2.5,
            lambda_sleep: 0.5,
            jitter_slots: 2,
            home_ap: home_ap.into(),
            roam_aps: Vec::new(),
            home_lead_slots: 4,
            min_sleep_slots: 12,
            days: 7,
            start_day: NaiveDate::from_ymd_opt(2019, 9, 30).unwrap(),
        }
    }

    fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let slots = grid.slots_per_day();
        if self.t_sleep_true + self.min_sleep_slots > self.t_awake_true
            || self.t_awake_true > slots
        {
            return Err(Error::Domain(format!(
                "profile truth [{}, {}] invalid for k={} over {slots} slots",
                self.t_sleep_true, self.t_awake_true, self.min_sleep_slots
            )));
        }
        if self.lambda_awake <= 0.0 || self.lambda_sleep <= 0.0 {
            return Err(Error::Domain("profile rates must be positive".into()));
        }
        if self.days == 0 {
            return Err(Error::Domain("profile needs at least one day".into()));
        }
        Ok(())
    }
}

/// Ground truth for one generated day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayTruth {
    pub device: String,
    pub day: NaiveDate,
    pub t_sleep: usize,
    pub t_awake: usize,
    /// The Poisson counts actually drawn, for generator/binner consistency
    /// checks.
    pub slot_counts: Vec<u32>,
}

/// Generate a trace. Deterministic per (profile, seed); events come out
/// sorted by timestamp.
pub fn generate_trace(
    profile: &SynthProfile,
    grid: &TimeGrid,
    seed: u64,
) -> Result<(Vec<WifiEvent>, Vec<DayTruth>)> {
    profile.validate(grid)?;
    let slots = grid.slots_per_day();
    let slot_seconds = i64::from(grid.slot_minutes()) * 60;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut truths = Vec::new();

    for day_index in 0..profile.days {
        let day = profile.start_day + Duration::days(day_index as i64);
        let (t_sleep, t_awake) = jittered_truth(profile, slots, &mut rng);

        let mut slot_counts = vec![0u32; slots];
        for (slot, count) in slot_counts.iter_mut().enumerate() {
            let asleep = slot >= t_sleep && slot < t_awake;
            let rate = if asleep {
                profile.lambda_sleep
            } else {
                profile.lambda_awake
            };
            let drawn = rng.sample(Poisson::new(rate).expect("positive rate")) as u32;
            *count = drawn;

            let at_home = asleep
                || (slot + profile.home_lead_slots >= t_sleep && slot < t_sleep)
                || (slot >= t_awake && slot < t_awake + profile.home_lead_slots);
            let slot_start = grid.slot_start_utc(day, slot);
            let mut offsets: Vec<i64> =
                (0..drawn).map(|_| rng.random_range(0..slot_seconds)).collect();
            offsets.sort_unstable();
            for offset in offsets {
                let ap = if at_home || profile.roam_aps.is_empty() {
                    profile.home_ap.clone()
                } else {
                    profile.roam_aps[rng.random_range(0..profile.roam_aps.len())].clone()
                };
                let kind = if rng.random::<f64>() < 0.3 {
                    EventKind::Reassoc
                } else {
                    EventKind::Assoc
                };
                events.push(WifiEvent {
                    ts: slot_start + Duration::seconds(offset),
                    dev: profile.device.clone(),
                    ap,
                    kind,
                });
            }
        }
        truths.push(DayTruth {
            device: profile.device.clone(),
            day,
            t_sleep,
            t_awake,
            slot_counts,
        });
    }
    events.sort_by_key(|e| e.ts);
    Ok((events, truths))
}

fn jittered_truth(profile: &SynthProfile, slots: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let jitter = |rng: &mut ChaCha8Rng| -> i64 {
        if profile.jitter_slots == 0 {
            0
        } else {
            let j = profile.jitter_slots as i64;
            rng.random_range(-j..=j)
        }
    };
    let t_sleep = (profile.t_sleep_true as i64 + jitter(rng)).clamp(0, slots as i64 - 1) as usize;
    let mut t_awake =
        (profile.t_awake_true as i64 + jitter(rng)).clamp(0, slots as i64) as usize;
    if t_awake < t_sleep + profile.min_sleep_slots {
        t_awake = (t_sleep + profile.min_sleep_slots).min(slots);
    }
    (t_sleep, t_awake)
}

/// Noise kinds reproducing the qualitative failure episodes the detector
/// must tolerate.
#[derive(Debug, Clone)]
pub enum NoiseSpec {
    /// Alternating A/B association run inside the sleep window, gaps under
    /// the ping-pong threshold.
    PingPong {
        day: NaiveDate,
        start_slot: usize,
        end_slot: usize,
        ap_a: String,
        ap_b: String,
        events: usize,
        gap_seconds: u32,
    },
    /// Short push-notification clusters plus one dense download burst.
    BackgroundBurst {
        day: NaiveDate,
        start_slot: usize,
        end_slot: usize,
        ap: String,
        cluster_sizes: Vec<usize>,
        burst_size: usize,
    },
    /// Delete every event in the window.
    Absence {
        day: NaiveDate,
        start_slot: usize,
        end_slot: usize,
    },
}

impl NoiseSpec {
    fn window(&self) -> (usize, usize) {
        match self {
            Self::PingPong {
                start_slot, end_slot, ..
            }
            | Self::BackgroundBurst {
                start_slot, end_slot, ..
            }
            | Self::Absence {
                start_slot, end_slot, ..
            } => (*start_slot, *end_slot),
        }
    }
}

pub const DEFAULT_BURST_CLUSTERS: [usize; 3] = [2, 2, 3];
pub const DEFAULT_BURST_SIZE: usize = 12;

/// Apply one noise spec to a trace. Deterministic per seed; output sorted.
pub fn inject_noise(
    events: &[WifiEvent],
    device: &str,
    spec: &NoiseSpec,
    grid: &TimeGrid,
    seed: u64,
) -> Result<Vec<WifiEvent>> {
    let slots = grid.slots_per_day();
    let (start, end) = spec.window();
    if start >= end || end > slots {
        return Err(Error::NoiseWindow(format!(
            "[{start}, {end}) does not fit {slots} slots"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<WifiEvent> = Vec::with_capacity(events.len());

    match spec {
        NoiseSpec::Absence {
            day,
            start_slot,
            end_slot,
        } => {
            for e in events {
                let (event_day, slot) = grid.locate(e.ts);
                if event_day == *day && slot >= *start_slot && slot < *end_slot {
                    continue;
                }
                out.push(e.clone());
            }
        }
        NoiseSpec::PingPong {
            day,
            start_slot,
            end_slot,
            ap_a,
            ap_b,
            events: count,
            gap_seconds,
        } => {
            let window_seconds =
                (*end_slot - *start_slot) as i64 * i64::from(grid.slot_minutes()) * 60;
            let needed = *count as i64 * i64::from(*gap_seconds);
            if needed > window_seconds {
                return Err(Error::NoiseWindow(format!(
                    "{count} events at {gap_seconds}s gaps overflow the window"
                )));
            }
            out.extend(events.iter().cloned());
            let base = grid.slot_start_utc(*day, *start_slot);
            for i in 0..*count {
                out.push(WifiEvent {
                    ts: base + Duration::seconds(i as i64 * i64::from(*gap_seconds)),
                    dev: device.to_string(),
                    ap: if i % 2 == 0 { ap_a.clone() } else { ap_b.clone() },
                    kind: EventKind::Assoc,
                });
            }
        }
        NoiseSpec::BackgroundBurst {
            day,
            start_slot,
            end_slot,
            ap,
            cluster_sizes,
            burst_size,
        } => {
            out.extend(events.iter().cloned());
            let window_start = grid.slot_start_utc(*day, *start_slot);
            let window_seconds =
                (*end_slot - *start_slot) as i64 * i64::from(grid.slot_minutes()) * 60;
            // Push-notification clusters: a few events seconds apart.
            for &size in cluster_sizes {
                let anchor = rng.random_range(0..(window_seconds - 60).max(1));
                for i in 0..size {
                    out.push(WifiEvent {
                        ts: window_start + Duration::seconds(anchor + i as i64 * 20),
                        dev: device.to_string(),
                        ap: ap.clone(),
                        kind: EventKind::Assoc,
                    });
                }
            }
            // One dense download burst over roughly two slots.
            let burst_span = (2 * i64::from(grid.slot_minutes()) * 60).min(window_seconds);
            let burst_anchor = rng.random_range(0..(window_seconds - burst_span).max(1));
            for i in 0..*burst_size {
                let offset = burst_anchor + i as i64 * burst_span / (*burst_size).max(1) as i64;
                out.push(WifiEvent {
                    ts: window_start + Duration::seconds(offset),
                    dev: device.to_string(),
                    ap: ap.clone(),
                    kind: EventKind::Assoc,
                });
            }
        }
    }
    out.sort_by_key(|e| e.ts);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::bin_events;

    fn grid() -> TimeGrid {
        TimeGrid::default_utc()
    }

    fn profile() -> SynthProfile {
        SynthProfile {
            roam_aps: vec!["library".into(), "cafe".into()],
            ..SynthProfile::regular("d1", "dorm-a")
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let g = grid();
        let (a_events, a_truth) = generate_trace(&profile(), &g, 42).unwrap();
        let (b_events, b_truth) = generate_trace(&profile(), &g, 42).unwrap();
        assert_eq!(a_events, b_events);
        assert_eq!(a_truth, b_truth);
    }

    #[test]
    fn zero_jitter_reproduces_profile_truth() {
        let g = grid();
        let p = SynthProfile {
            jitter_slots: 0,
            ..profile()
        };
        let (_, truths) = generate_trace(&p, &g, 1).unwrap();
        for t in truths {
            assert_eq!(t.t_sleep, 24);
            assert_eq!(t.t_awake, 56);
        }
    }

    #[test]
    fn rebinned_events_reproduce_drawn_counts() {
        let g = grid();
        let (events, truths) = generate_trace(&profile(), &g, 7).unwrap();
        for truth in &truths {
            let series = bin_events(
                events.iter().filter(|e| e.dev == truth.device),
                truth.device.clone(),
                truth.day,
                &g,
            );
            assert_eq!(series.counts, truth.slot_counts, "day {}", truth.day);
        }
    }

    #[test]
    fn awake_event_mean_matches_poisson_expectation() {
        // 64 awake slots at 2.5 events/slot: mean total 160 over 1000 days.
        let g = grid();
        let p = SynthProfile {
            jitter_slots: 0,
            days: 1000,
            ..profile()
        };
        let (_, truths) = generate_trace(&p, &g, 99).unwrap();
        let total_awake: u64 = truths
            .iter()
            .map(|t| {
                t.slot_counts
                    .iter()
                    .enumerate()
                    .filter(|(slot, _)| *slot < t.t_sleep || *slot >= t.t_awake)
                    .map(|(_, &c)| u64::from(c))
                    .sum::<u64>()
            })
            .sum();
        let mean = total_awake as f64 / 1000.0;
        assert!(
            (mean - 160.0).abs() <= 5.0,
            "mean awake events {mean} outside 160 +/- 5"
        );
    }

    #[test]
    fn slot_counts_are_poisson_dispersed() {
        let g = grid();
        let p = SynthProfile {
            jitter_slots: 0,
            days: 400,
            ..profile()
        };
        let (_, truths) = generate_trace(&p, &g, 123).unwrap();
        for (label, expected, pick) in [
            ("sleep", 0.5, (24usize, 56usize)),
            ("awake", 2.5, (0usize, 24usize)),
        ] {
            let counts: Vec<f64> = truths
                .iter()
                .flat_map(|t| t.slot_counts[pick.0..pick.1].iter().map(|&c| f64::from(c)))
                .collect();
            assert!(counts.len() >= 9600);
            let n = counts.len() as f64;
            let mean = counts.iter().sum::<f64>() / n;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(
                (var / mean - 1.0).abs() < 0.1,
                "{label}: variance/mean {} off Poisson (mean {mean}, expected {expected})",
                var / mean
            );
        }
    }

    #[test]
    fn ping_pong_injection_builds_the_alternation() {
        let g = grid();
        let (events, _) = generate_trace(&profile(), &g, 5).unwrap();
        let day = NaiveDate::from_ymd_opt(2019, 9, 30).unwrap();
        let spec = NoiseSpec::PingPong {
            day,
            start_slot: 36,
            end_slot: 40,
            ap_a: "dorm-a".into(),
            ap_b: "dorm-b".into(),
            events: 6,
            gap_seconds: 45,
        };
        let noisy = inject_noise(&events, "d1", &spec, &g, 1).unwrap();
        assert_eq!(noisy.len(), events.len() + 6);
        let added: Vec<&WifiEvent> = noisy
            .iter()
            .filter(|e| {
                let (d, s) = g.locate(e.ts);
                d == day && (36..40).contains(&s) && (e.ap == "dorm-a" || e.ap == "dorm-b")
            })
            .collect();
        assert!(added.len() >= 6);
        assert!(added.iter().any(|e| e.ap == "dorm-b"));
        assert!(noisy.windows(2).all(|w| w[0].ts <= w[1].ts));
    }

    #[test]
    fn absence_over_whole_day_empties_it() {
        let g = grid();
        let p = SynthProfile {
            days: 1,
            ..profile()
        };
        let (events, _) = generate_trace(&p, &g, 6).unwrap();
        assert!(!events.is_empty());
        let spec = NoiseSpec::Absence {
            day: NaiveDate::from_ymd_opt(2019, 9, 30).unwrap(),
            start_slot: 0,
            end_slot: 96,
        };
        let cleared = inject_noise(&events, "d1", &spec, &g, 0).unwrap();
        assert!(cleared.is_empty());
    }

    #[test]
    fn burst_adds_exactly_the_configured_events() {
        let g = grid();
        let (events, _) = generate_trace(&profile(), &g, 8).unwrap();
        let spec = NoiseSpec::BackgroundBurst {
            day: NaiveDate::from_ymd_opt(2019, 10, 1).unwrap(),
            start_slot: 36,
            end_slot: 44,
            ap: "dorm-a".into(),
            cluster_sizes: DEFAULT_BURST_CLUSTERS.to_vec(),
            burst_size: DEFAULT_BURST_SIZE,
        };
        let noisy = inject_noise(&events, "d1", &spec, &g, 2).unwrap();
        assert_eq!(
            noisy.len(),
            events.len() + DEFAULT_BURST_CLUSTERS.iter().sum::<usize>() + DEFAULT_BURST_SIZE
        );
    }

    #[test]
    fn window_outside_day_is_rejected() {
        let g = grid();
        let spec = NoiseSpec::Absence {
            day: NaiveDate::from_ymd_opt(2019, 10, 1).unwrap(),
            start_slot: 90,
            end_slot: 100,
        };
        assert!(matches!(
            inject_noise(&[], "d1", &spec, &g, 0),
            Err(Error::NoiseWindow(_))
        ));
    }
}
