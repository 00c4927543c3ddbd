//! Canonical events to per-device, per-day slot series: primary-device
//! selection, resident classification, ping-pong filtering, absence
//! detection, dorm-interval location and binning.
//!
//! Every operation here is pure per (device, day); the pipeline fans out
//! across devices and days freely.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, Utc};

use crate::error::{Error, Result};
use crate::ingest::{ApMap, WifiEvent};
use crate::timegrid::TimeGrid;

/// Per-device, per-day vector of event counts in fixed-width time slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSeries {
    pub device: String,
    pub day: NaiveDate,
    pub counts: Vec<u32>,
    pub slot_minutes: u32,
    pub window_start: NaiveTime,
}

impl SlotSeries {
    pub fn new(
        device: impl Into<String>,
        day: NaiveDate,
        counts: Vec<u32>,
        grid: &TimeGrid,
    ) -> Result<Self> {
        if counts.len() != grid.slots_per_day() {
            return Err(Error::LengthMismatch(format!(
                "slot series has {} slots, grid expects {}",
                counts.len(),
                grid.slots_per_day()
            )));
        }
        Ok(Self {
            device: device.into(),
            day,
            counts,
            slot_minutes: grid.slot_minutes(),
            window_start: grid.window_start(),
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// Longest interval of slots spent in one residential building.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DormInterval {
    /// First slot of the run (inclusive).
    pub start_slot: usize,
    /// One past the last slot of the run (exclusive, at most S).
    pub end_slot: usize,
    pub building: String,
}

impl DormInterval {
    pub fn span(&self) -> usize {
        self.end_slot - self.start_slot
    }
}

/// Pick a user's primary device: the one with the most association-kind
/// events over the trailing horizon. Ties break to the lexicographically
/// smallest device identifier.
pub fn select_primary_device<'a>(
    devices: impl IntoIterator<Item = (&'a str, &'a [WifiEvent])>,
    as_of: DateTime<Utc>,
    horizon_days: u32,
) -> Result<String> {
    let start = as_of - Duration::days(i64::from(horizon_days));
    let mut best: Option<(u64, &str)> = None;
    for (device, events) in devices {
        let count = events
            .iter()
            .filter(|e| e.kind.is_association() && e.ts >= start && e.ts <= as_of)
            .count() as u64;
        if count == 0 {
            continue;
        }
        best = match best {
            None => Some((count, device)),
            Some((c, d)) if count > c || (count == c && device < d) => Some((count, device)),
            keep => keep,
        };
    }
    best.map(|(_, d)| d.to_string()).ok_or(Error::NoPrimaryDevice)
}

/// Dorm-resident heuristic: on at least 4 of the trailing 7 days, at least
/// half of the device's 00:00-06:00 local events occur at residential APs.
/// A day with no nighttime events does not qualify.
pub fn classify_resident(
    events: &[WifiEvent],
    ap_map: &ApMap,
    as_of_day: NaiveDate,
    grid: &TimeGrid,
) -> bool {
    let six_am = NaiveTime::from_hms_opt(6, 0, 0).unwrap();
    let mut qualifying = 0u32;
    for offset in 0..7 {
        let day = as_of_day - Duration::days(offset);
        let mut night = 0u64;
        let mut residential = 0u64;
        for e in events {
            let local = e.ts.with_timezone(&grid.tz()).naive_local();
            if local.date() == day && local.time() < six_am {
                night += 1;
                if ap_map.is_residential(&e.ap) {
                    residential += 1;
                }
            }
        }
        if night > 0 && residential * 2 >= night {
            qualifying += 1;
        }
    }
    qualifying >= 4
}

/// Collapse ping-pong runs: maximal stretches of >=3 consecutive
/// association-kind events within one roaming group, every inter-event gap
/// under `gap_seconds`, alternating among >=2 APs with a revisit. Each such
/// run becomes a single assoc event at the run's first timestamp on the
/// run's modal AP (ties to first-seen). Everything else passes through,
/// including events at APs missing from the map.
///
/// Expects `events` sorted by timestamp. Idempotent.
pub fn filter_ping_pong(events: &[WifiEvent], ap_map: &ApMap, gap_seconds: u32) -> Vec<WifiEvent> {
    let mut out = Vec::with_capacity(events.len());
    let mut i = 0;
    while i < events.len() {
        let head = &events[i];
        let group = if head.kind.is_association() {
            ap_map.group_of(&head.ap)
        } else {
            None
        };
        let Some(group) = group else {
            if head.kind.is_association() && ap_map.get(&head.ap).is_none() {
                log::debug!("ping-pong filter: unknown AP `{}` passed through", head.ap);
            }
            out.push(head.clone());
            i += 1;
            continue;
        };

        // Extend the run while events stay association-kind, in-group and close.
        let mut j = i;
        while j + 1 < events.len() {
            let next = &events[j + 1];
            if !next.kind.is_association()
                || ap_map.group_of(&next.ap) != Some(group)
                || (next.ts - events[j].ts).num_seconds() >= i64::from(gap_seconds)
            {
                break;
            }
            j += 1;
        }

        let run = &events[i..=j];
        if run.len() >= 3 && has_revisit(run) {
            out.push(WifiEvent {
                ts: run[0].ts,
                dev: run[0].dev.clone(),
                ap: modal_ap(run).to_string(),
                kind: crate::ingest::EventKind::Assoc,
            });
        } else {
            out.extend(run.iter().cloned());
        }
        i = j + 1;
    }
    out
}

/// At least two distinct APs, and some AP appears twice non-adjacently.
fn has_revisit(run: &[WifiEvent]) -> bool {
    let distinct = {
        let mut aps: Vec<&str> = run.iter().map(|e| e.ap.as_str()).collect();
        aps.sort_unstable();
        aps.dedup();
        aps.len()
    };
    if distinct < 2 {
        return false;
    }
    let mut last_seen: HashMap<&str, usize> = HashMap::new();
    for (pos, e) in run.iter().enumerate() {
        if let Some(&prev) = last_seen.get(e.ap.as_str()) {
            if pos > prev + 1 {
                return true;
            }
        }
        last_seen.insert(&e.ap, pos);
    }
    false
}

fn modal_ap(run: &[WifiEvent]) -> &str {
    let mut counts: Vec<(&str, usize, usize)> = Vec::new(); // (ap, count, first index)
    for (pos, e) in run.iter().enumerate() {
        match counts.iter_mut().find(|(ap, _, _)| *ap == e.ap) {
            Some(entry) => entry.1 += 1,
            None => counts.push((&e.ap, 1, pos)),
        }
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(ap, _, _)| *ap)
        .expect("run is non-empty")
}

/// Count events into the day window anchored at `day`. Events outside the
/// window are excluded; slots are half-open.
pub fn bin_events<'a>(
    events: impl IntoIterator<Item = &'a WifiEvent>,
    device: impl Into<String>,
    day: NaiveDate,
    grid: &TimeGrid,
) -> SlotSeries {
    let mut counts = vec![0u32; grid.slots_per_day()];
    for e in events {
        let (event_day, slot) = grid.locate(e.ts);
        if event_day == day {
            counts[slot] += 1;
        }
    }
    SlotSeries {
        device: device.into(),
        day,
        counts,
        slot_minutes: grid.slot_minutes(),
        window_start: grid.window_start(),
    }
}

/// A day is absent (no sleep estimate should be emitted) when the device
/// produced fewer than `min_events` events in total, or when a residential
/// restriction is known and saw nothing at all. A sleeping-but-present phone
/// still pings every 15-30 minutes, so a genuinely present device clears the
/// default threshold easily.
pub fn detect_absence(
    series: &SlotSeries,
    residential: Option<&SlotSeries>,
    min_events: u32,
) -> bool {
    series.total() < u64::from(min_events) || residential.is_some_and(|r| r.total() == 0)
}

/// Longest run of slots attributed to a single residential building.
///
/// Each slot takes the building of the most recent event at or before it
/// (carry-forward); slots before the first located event stay unassigned.
/// Ties break to the earliest run.
pub fn locate_dorm_interval(
    events: &[WifiEvent],
    ap_map: &ApMap,
    day: NaiveDate,
    grid: &TimeGrid,
) -> Option<DormInterval> {
    let slots = grid.slots_per_day();
    // Latest event per slot wins within the slot; events in timestamp order.
    let mut slot_assign: Vec<Option<(&str, bool)>> = vec![None; slots];
    for e in events {
        let (event_day, slot) = grid.locate(e.ts);
        if event_day != day {
            continue;
        }
        if let Some(rec) = ap_map.get(&e.ap) {
            slot_assign[slot] = Some((rec.building.as_str(), rec.residential));
        }
    }

    let mut carried: Option<(&str, bool)> = None;
    let mut best: Option<DormInterval> = None;
    let mut run_start: Option<(usize, &str)> = None;

    let close_run = |start: usize, end: usize, building: &str, best: &mut Option<DormInterval>| {
        let candidate = DormInterval {
            start_slot: start,
            end_slot: end,
            building: building.to_string(),
        };
        let better = match best {
            None => true,
            Some(current) => candidate.span() > current.span(),
        };
        if better {
            *best = Some(candidate);
        }
    };

    for slot in 0..slots {
        if slot_assign[slot].is_some() {
            carried = slot_assign[slot];
        }
        let here = carried.filter(|(_, residential)| *residential).map(|(b, _)| b);
        match (run_start, here) {
            (None, Some(building)) => run_start = Some((slot, building)),
            (Some((start, building)), Some(current)) if building != current => {
                close_run(start, slot, building, &mut best);
                run_start = Some((slot, current));
            }
            (Some((start, building)), None) => {
                close_run(start, slot, building, &mut best);
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some((start, building)) = run_start {
        close_run(start, slots, building, &mut best);
    }
    best
}

/// Inclusive wall-day range spanned by a device's events, for emitting one
/// series per day.
pub fn day_range(events: &[WifiEvent], grid: &TimeGrid) -> Option<(NaiveDate, NaiveDate)> {
    let mut days = events.iter().map(|e| grid.locate(e.ts).0);
    let first = days.next()?;
    let (min, max) = days.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
    Some((min, max))
}

/// Write series as CSV with columns `dev,day,s0..s{S-1}`.
pub fn write_slot_csv(writer: impl Write, series: &[SlotSeries]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let slots = series.first().map_or(0, |s| s.len());
    let mut header = vec!["dev".to_string(), "day".to_string()];
    header.extend((0..slots).map(|i| format!("s{i}")));
    csv.write_record(&header)?;
    for s in series {
        if s.len() != slots {
            return Err(Error::LengthMismatch(
                "slot series of differing lengths in one file".into(),
            ));
        }
        let mut row = vec![s.device.clone(), s.day.to_string()];
        row.extend(s.counts.iter().map(|c| c.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_slot_csv(reader: impl Read, grid: &TimeGrid) -> Result<Vec<SlotSeries>> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.len() != grid.slots_per_day() + 2 {
        return Err(Error::LengthMismatch(format!(
            "slot csv has {} columns, grid expects {}",
            headers.len(),
            grid.slots_per_day() + 2
        )));
    }
    let mut out = Vec::new();
    for record in csv.records() {
        let record = record?;
        let device = record.get(0).unwrap_or("").to_string();
        let day: NaiveDate = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::Config(format!("slot csv: bad day: {e}")))?;
        let counts = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("slot csv: bad count: {e}")))?;
        out.push(SlotSeries::new(device, day, counts, grid)?);
    }
    Ok(out)
}
