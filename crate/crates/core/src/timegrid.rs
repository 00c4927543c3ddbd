//! Wall-clock slot grid shared by the binning, inference and synthesis stages.
//!
//! A day window starts at a fixed local clock time (18:00 by default) so that
//! a nightly sleep interval falls in the interior of the series. Binning is by
//! wall clock: on DST transition days the duplicated hour folds onto the same
//! slots and the missing hour simply stays empty.

use chrono::offset::LocalResult;
use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime, SecondsFormat, TimeZone, Timelike, Utc};
use chrono_tz::Tz;

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 24 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    slot_minutes: u32,
    window_start: NaiveTime,
    tz: Tz,
}

impl TimeGrid {
    pub fn new(slot_minutes: u32, window_start: NaiveTime, tz: Tz) -> Result<Self> {
        if slot_minutes == 0 || MINUTES_PER_DAY % slot_minutes != 0 {
            return Err(Error::Config(format!(
                "slot_minutes: {slot_minutes} does not divide {MINUTES_PER_DAY}"
            )));
        }
        if window_start.second() != 0 || window_start.nanosecond() != 0 {
            return Err(Error::Config(
                "window_start: must be a whole minute".to_string(),
            ));
        }
        Ok(Self {
            slot_minutes,
            window_start,
            tz,
        })
    }

    /// 15-minute slots anchored at 18:00 UTC.
    pub fn default_utc() -> Self {
        Self::new(15, NaiveTime::from_hms_opt(18, 0, 0).unwrap(), chrono_tz::UTC)
            .expect("default grid is valid")
    }

    pub fn slot_minutes(&self) -> u32 {
        self.slot_minutes
    }

    pub fn window_start(&self) -> NaiveTime {
        self.window_start
    }

    pub fn tz(&self) -> Tz {
        self.tz
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.slot_minutes) as usize
    }

    /// Window anchor day and slot index holding a UTC instant.
    ///
    /// Slots are half-open: an event exactly at a slot boundary belongs to the
    /// slot that starts there, and an event at the next window start belongs
    /// to the next day.
    pub fn locate(&self, ts: DateTime<Utc>) -> (NaiveDate, usize) {
        let local = ts.with_timezone(&self.tz).naive_local();
        let sec = i64::from(local.time().num_seconds_from_midnight());
        let ws = i64::from(self.window_start.num_seconds_from_midnight());
        let rel = (sec - ws).rem_euclid(86_400);
        let slot = (rel / (i64::from(self.slot_minutes) * 60)) as usize;
        let day = if sec >= ws {
            local.date()
        } else {
            local.date() - Duration::days(1)
        };
        (day, slot)
    }

    /// Slot index of a bare clock time, independent of the day.
    pub fn slot_of_clock(&self, t: NaiveTime) -> usize {
        let sec = i64::from(t.num_seconds_from_midnight());
        let ws = i64::from(self.window_start.num_seconds_from_midnight());
        let rel = (sec - ws).rem_euclid(86_400);
        (rel / (i64::from(self.slot_minutes) * 60)) as usize
    }

    /// Wall-clock start of a slot within the window anchored at `day`.
    pub fn slot_start_naive(&self, day: NaiveDate, slot: usize) -> NaiveDateTime {
        let offset = i64::from(self.window_start.num_seconds_from_midnight()) / 60
            + slot as i64 * i64::from(self.slot_minutes);
        day.and_time(NaiveTime::MIN) + Duration::minutes(offset)
    }

    /// Zoned start of a slot. A wall time duplicated by a DST fall-back maps
    /// to the earlier instant; a time skipped by spring-forward maps to the
    /// instant the same wall clock would have shown before the jump.
    pub fn slot_start_local(&self, day: NaiveDate, slot: usize) -> DateTime<Tz> {
        let naive = self.slot_start_naive(day, slot);
        match self.tz.from_local_datetime(&naive) {
            LocalResult::Single(dt) => dt,
            LocalResult::Ambiguous(earliest, _) => earliest,
            LocalResult::None => {
                let shifted = self
                    .tz
                    .from_local_datetime(&(naive + Duration::hours(1)))
                    .earliest()
                    .expect("one hour past a DST gap is a valid local time");
                shifted - Duration::hours(1)
            }
        }
    }

    /// ISO-8601 rendering (with zone offset) of a slot start.
    pub fn slot_start_rfc3339(&self, day: NaiveDate, slot: usize) -> String {
        self.slot_start_local(day, slot)
            .to_rfc3339_opts(SecondsFormat::Secs, false)
    }

    /// UTC instant of a slot start, for event synthesis.
    pub fn slot_start_utc(&self, day: NaiveDate, slot: usize) -> DateTime<Utc> {
        self.slot_start_local(day, slot).with_timezone(&Utc)
    }
}
