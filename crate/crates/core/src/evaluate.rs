//! Scoring predictions against ground truth: slot-level confusion metrics
//! (sleep is the positive class) and change-point time differences.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, Utc};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::timegrid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfusionStats {
    pub tp: u32,
    pub fp: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    pub tn: u32,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl ConfusionStats {
    pub fn from_counts(tp: u32, fp: u32, fn_: u32, tn: u32) -> Self {
        let total = f64::from(tp + fp + fn_ + tn);
        let ratio = |num: u32, den: u32| {
            if den == 0 {
                0.0
            } else {
                f64::from(num) / f64::from(den)
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_score = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            accuracy: if total == 0.0 { 0.0 } else { f64::from(tp + tn) / total },
            precision,
            recall,
            f_score,
        }
    }
}

/// Slot-level confusion of one day's predicted sleep interval against truth.
/// Slots in `[t_sleep, t_awake)` are labeled sleep.
pub fn slot_confusion(
    pred: (usize, usize),
    truth: (usize, usize),
    slots: usize,
) -> Result<ConfusionStats> {
    for (name, (t_sleep, t_awake)) in [("pred", pred), ("truth", truth)] {
        if t_sleep > t_awake || t_awake > slots {
            return Err(Error::Domain(format!(
                "{name} interval [{t_sleep}, {t_awake}) invalid for {slots} slots"
            )));
        }
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for slot in 0..slots {
        let predicted = slot >= pred.0 && slot < pred.1;
        let actual = slot >= truth.0 && slot < truth.1;
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ConfusionStats::from_counts(tp, fp, fn_, tn))
}

/// Absolute change-point differences, in minutes, for one (device, day).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayDiff {
    pub dev: String,
    pub day: NaiveDate,
    pub sleep_diff_min: u32,
    pub wake_diff_min: u32,
    pub duration_diff_min: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(Self {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: median(&sorted),
            q1: median(lower_half(&sorted)),
            q3: median(upper_half(&sorted)),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn lower_half(sorted: &[f64]) -> &[f64] {
    &sorted[..sorted.len() / 2]
}

fn upper_half(sorted: &[f64]) -> &[f64] {
    &sorted[sorted.len().div_ceil(2)..]
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeDiffStats {
    pub per_day: Vec<DayDiff>,
    pub sleep: SummaryStats,
    pub wake: SummaryStats,
    pub duration: SummaryStats,
}

pub type IntervalByKey = BTreeMap<(String, NaiveDate), (usize, usize)>;

/// Per-day absolute time differences plus summary statistics. Every
/// prediction key must have ground truth; missing keys are an error listing
/// them.
pub fn time_diff_stats(
    preds: &IntervalByKey,
    truths: &IntervalByKey,
    slot_minutes: u32,
) -> Result<TimeDiffStats> {
    let missing: Vec<String> = preds
        .keys()
        .filter(|key| !truths.contains_key(*key))
        .map(|(dev, day)| format!("{dev}/{day}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingTruth(missing.join(", ")));
    }
    if preds.is_empty() {
        return Err(Error::InsufficientData("no predictions to score".into()));
    }

    let mut per_day = Vec::with_capacity(preds.len());
    for ((dev, day), &(ps, pa)) in preds {
        let &(ts, ta) = truths.get(&(dev.clone(), *day)).expect("checked above");
        let to_min = |slots: usize| slots as u32 * slot_minutes;
        per_day.push(DayDiff {
            dev: dev.clone(),
            day: *day,
            sleep_diff_min: to_min(ps.abs_diff(ts)),
            wake_diff_min: to_min(pa.abs_diff(ta)),
            duration_diff_min: to_min((pa - ps).abs_diff(ta - ts)),
        });
    }
    let collect = |f: fn(&DayDiff) -> u32| -> Vec<f64> {
        per_day.iter().map(|d| f64::from(f(d))).collect()
    };
    let sleep = SummaryStats::of(&collect(|d| d.sleep_diff_min)).expect("non-empty");
    let wake = SummaryStats::of(&collect(|d| d.wake_diff_min)).expect("non-empty");
    let duration = SummaryStats::of(&collect(|d| d.duration_diff_min)).expect("non-empty");
    Ok(TimeDiffStats {
        per_day,
        sleep,
        wake,
        duration,
    })
}

/// Ground-truth CSV: `dev,day,t_sleep,t_awake` with ISO-8601 change points.
/// Clock times snap to the containing slot on read.
pub fn read_truth_csv(reader: impl Read, grid: &TimeGrid) -> Result<IntervalByKey> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for record in csv.records() {
        let record = record?;
        let dev = record.get(0).unwrap_or("").to_string();
        let day: NaiveDate = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Config(format!("truth csv: bad day: {e}")))?;
        let parse_ts = |raw: &str| -> Result<DateTime<Utc>> {
            DateTime::parse_from_rfc3339(raw)
                .map(|dt| dt.with_timezone(&Utc))
                .map_err(|e| Error::Config(format!("truth csv: bad timestamp `{raw}`: {e}")))
        };
        let sleep_ts = parse_ts(record.get(2).unwrap_or(""))?;
        let awake_ts = parse_ts(record.get(3).unwrap_or(""))?;
        let (_, sleep_slot) = grid.locate(sleep_ts);
        let (awake_day, awake_slot) = grid.locate(awake_ts);
        // A wake-up landing exactly on the next window start means slot S.
        let awake_slot = if awake_day > day { grid.slots_per_day() } else { awake_slot };
        out.insert((dev, day), (sleep_slot, awake_slot));
    }
    Ok(out)
}

pub fn write_truth_csv(
    writer: impl Write,
    truths: &[(String, NaiveDate, usize, usize)],
    grid: &TimeGrid,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["dev", "day", "t_sleep", "t_awake"])?;
    for (dev, day, t_sleep, t_awake) in truths {
        csv.write_record([
            dev.clone(),
            day.to_string(),
            grid.slot_start_rfc3339(*day, *t_sleep),
            grid.slot_start_rfc3339(*day, *t_awake),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
