//! Population-scale and longitudinal analytics over sleep estimates:
//! consistency scoring, the regular/irregular split, weekday/weekend
//! aggregates and trailing-average series. Absent days are excluded
//! everywhere rather than imputed as zero.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::SummaryStats;

/// Spread (in slots) at which the consistency score saturates to zero:
/// 24 slots = 6 hours of combined onset/wake standard deviation.
pub const SATURATION_SPREAD_SLOTS: f64 = 24.0;

pub const DEFAULT_REGULARITY_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    Regular,
    Irregular,
}

/// One user's week: per-day durations (absent days empty), the consistency
/// score when at least 3 days were estimated, and the resulting class.
#[derive(Debug, Clone, Serialize)]
pub struct WeeklyUserSummary {
    pub device: String,
    pub week_start: NaiveDate,
    pub durations_min: [Option<u32>; 7],
    pub score: Option<f64>,
    pub class: Option<Regularity>,
}

/// Week-over-week regularity in [0, 1]:
/// `max(0, 1 - (sd_onset + sd_wake) / (2 * 24))` with sample standard
/// deviations of the onset and wake slot indices. Translation-invariant by
/// construction.
pub fn consistency_score(days: &[(usize, usize)]) -> Result<f64> {
    if days.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "consistency score needs at least 3 estimated days, got {}",
            days.len()
        )));
    }
    let onsets: Vec<f64> = days.iter().map(|(s, _)| *s as f64).collect();
    let wakes: Vec<f64> = days.iter().map(|(_, a)| *a as f64).collect();
    let score =
        1.0 - (sample_sd(&onsets) + sample_sd(&wakes)) / (2.0 * SATURATION_SPREAD_SLOTS);
    Ok(score.clamp(0.0, 1.0))
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// The slice of an estimate the analytics layer consumes.
#[derive(Debug, Clone)]
pub struct EstimatedDay {
    pub device: String,
    pub day: NaiveDate,
    pub t_sleep_slot: usize,
    pub t_awake_slot: usize,
    pub duration_minutes: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeekdayMean {
    pub weekday: String,
    pub mean_duration_min: Option<f64>,
    pub days: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassQuartiles {
    pub class: Regularity,
    pub day_type: String,
    pub stats: Option<SummaryStats>,
    pub days: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrailingPoint {
    pub dev: String,
    pub day: NaiveDate,
    pub trailing_mean_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateReport {
    pub weekday_means: Vec<WeekdayMean>,
    pub regular_users: usize,
    pub irregular_users: usize,
    pub threshold: f64,
    pub class_quartiles: Vec<ClassQuartiles>,
    pub longitudinal: Vec<TrailingPoint>,
    pub weekly: Vec<WeeklyUserSummary>,
}

fn week_start(day: NaiveDate) -> NaiveDate {
    day - Duration::days(i64::from(day.weekday().num_days_from_monday()))
}

fn is_weekend(day: NaiveDate) -> bool {
    matches!(day.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Population report over estimated days only. Empty input yields an empty
/// report rather than an error.
pub fn aggregate_report(days: &[EstimatedDay], threshold: f64) -> AggregateReport {
    // (a) Mean duration per weekday, attributed to the day the night starts.
    let weekday_means = {
        let mut sums = [(0.0f64, 0usize); 7];
        for d in days {
            let idx = d.day.weekday().num_days_from_monday() as usize;
            sums[idx].0 += f64::from(d.duration_minutes);
            sums[idx].1 += 1;
        }
        [
            Weekday::Mon,
            Weekday::Tue,
            Weekday::Wed,
            Weekday::Thu,
            Weekday::Fri,
            Weekday::Sat,
            Weekday::Sun,
        ]
        .iter()
        .enumerate()
        .map(|(idx, weekday)| WeekdayMean {
            weekday: weekday.to_string(),
            mean_duration_min: (sums[idx].1 > 0).then(|| sums[idx].0 / sums[idx].1 as f64),
            days: sums[idx].1,
        })
        .collect()
    };

    // Weekly summaries and per-user classification.
    let mut by_user_week: BTreeMap<(String, NaiveDate), Vec<&EstimatedDay>> = BTreeMap::new();
    for d in days {
        by_user_week
            .entry((d.device.clone(), week_start(d.day)))
            .or_default()
            .push(d);
    }
    let mut weekly = Vec::new();
    let mut user_scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((device, week_start), entries) in &by_user_week {
        let mut durations: [Option<u32>; 7] = [None; 7];
        for d in entries {
            let idx = d.day.weekday().num_days_from_monday() as usize;
            durations[idx] = Some(d.duration_minutes);
        }
        let pairs: Vec<(usize, usize)> = entries
            .iter()
            .map(|d| (d.t_sleep_slot, d.t_awake_slot))
            .collect();
        let score = consistency_score(&pairs).ok();
        let class = score.map(|s| {
            if s > threshold {
                Regularity::Regular
            } else {
                Regularity::Irregular
            }
        });
        if let Some(s) = score {
            user_scores.entry(device.clone()).or_default().push(s);
        }
        weekly.push(WeeklyUserSummary {
            device: device.clone(),
            week_start: *week_start,
            durations_min: durations,
            score,
            class,
        });
    }

    // (b) Regular/irregular partition of scored users by their mean score.
    let mut user_class: BTreeMap<String, Regularity> = BTreeMap::new();
    let mut regular_users = 0;
    let mut irregular_users = 0;
    for (device, scores) in &user_scores {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let class = if mean > threshold {
            Regularity::Regular
        } else {
            Regularity::Irregular
        };
        match class {
            Regularity::Regular => regular_users += 1,
            Regularity::Irregular => irregular_users += 1,
        }
        user_class.insert(device.clone(), class);
    }

    // (c) Weekday vs weekend duration quartiles per class.
    let mut class_quartiles = Vec::new();
    for class in [Regularity::Regular, Regularity::Irregular] {
        for (day_type, weekend) in [("weekday", false), ("weekend", true)] {
            let values: Vec<f64> = days
                .iter()
                .filter(|d| user_class.get(&d.device) == Some(&class))
                .filter(|d| is_weekend(d.day) == weekend)
                .map(|d| f64::from(d.duration_minutes))
                .collect();
            class_quartiles.push(ClassQuartiles {
                class,
                day_type: day_type.to_string(),
                stats: SummaryStats::of(&values),
                days: values.len(),
            });
        }
    }

    // (d) Per-user duration averaged over the trailing 3 calendar days.
    let mut by_user: BTreeMap<&str, Vec<&EstimatedDay>> = BTreeMap::new();
    for d in days {
        by_user.entry(d.device.as_str()).or_default().push(d);
    }
    let mut longitudinal = Vec::new();
    for (device, mut entries) in by_user {
        entries.sort_by_key(|d| d.day);
        for d in &entries {
            let window_start = d.day - Duration::days(2);
            let in_window: Vec<f64> = entries
                .iter()
                .filter(|e| e.day >= window_start && e.day <= d.day)
                .map(|e| f64::from(e.duration_minutes))
                .collect();
            longitudinal.push(TrailingPoint {
                dev: device.to_string(),
                day: d.day,
                trailing_mean_min: in_window.iter().sum::<f64>() / in_window.len() as f64,
            });
        }
    }

    AggregateReport {
        weekday_means,
        regular_users,
        irregular_users,
        threshold,
        class_quartiles,
        longitudinal,
        weekly,
    }
}
