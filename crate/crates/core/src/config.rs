//! The single configuration surface: a flat key-value file with strict key
//! checking and per-key error messages.

use std::path::Path;
use std::str::FromStr;

use chrono::NaiveTime;
use chrono_tz::Tz;

use crate::error::{Error, Result};
use crate::inference::{MhConfig, PriorCenters};
use crate::timegrid::{TimeGrid, MINUTES_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Campus,
    Home,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub slot_minutes: u32,
    pub window_start: NaiveTime,
    pub timezone: Tz,
    pub min_sleep_slots: usize,
    pub mh: MhConfig,
    /// Sampler base seed; defaults to the global seed.
    pub mh_seed: Option<u64>,
    pub pingpong_gap_seconds: u32,
    pub absence_min_events: u32,
    pub regularity_threshold: f64,
    pub mode: Mode,
    pub home_bed_time: Option<NaiveTime>,
    pub home_wake_time: Option<NaiveTime>,
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            slot_minutes: 15,
            window_start: NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
            timezone: chrono_tz::UTC,
            min_sleep_slots: 12,
            mh: MhConfig::default(),
            mh_seed: None,
            pingpong_gap_seconds: 60,
            absence_min_events: 4,
            regularity_threshold: 0.6,
            mode: Mode::Campus,
            home_bed_time: None,
            home_wake_time: None,
            parallelism: 1,
            seed: 0,
        }
    }
}

/// Campus-mode prior centers: sleep around midnight, wake around 08:00.
const CAMPUS_BED_TIME: (u32, u32) = (0, 0);
const CAMPUS_WAKE_TIME: (u32, u32) = (8, 0);

impl RunConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.slot_minutes, self.window_start, self.timezone)
    }

    /// Model 2-3 centers as slots: configured bed/wake times in home mode,
    /// the campus defaults otherwise.
    pub fn prior_centers(&self, grid: &TimeGrid) -> PriorCenters {
        let (bed, wake) = match self.mode {
            Mode::Home => (
                self.home_bed_time.expect("validated in home mode"),
                self.home_wake_time.expect("validated in home mode"),
            ),
            Mode::Campus => (
                NaiveTime::from_hms_opt(CAMPUS_BED_TIME.0, CAMPUS_BED_TIME.1, 0).unwrap(),
                NaiveTime::from_hms_opt(CAMPUS_WAKE_TIME.0, CAMPUS_WAKE_TIME.1, 0).unwrap(),
            ),
        };
        PriorCenters {
            bed_slot: grid.slot_of_clock(bed),
            wake_slot: grid.slot_of_clock(wake),
        }
    }

    /// Center spread: 3 hours expressed in slots.
    pub fn sigma_slots(&self) -> f64 {
        180.0 / f64::from(self.slot_minutes)
    }

    pub fn base_seed(&self) -> u64 {
        self.mh_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot_minutes == 0 || MINUTES_PER_DAY % self.slot_minutes != 0 {
            return Err(Error::Config(format!(
                "slot_minutes: {} does not divide {MINUTES_PER_DAY}",
                self.slot_minutes
            )));
        }
        if self.min_sleep_slots == 0 {
            return Err(Error::Config("min_sleep_slots: must be at least 1".into()));
        }
        if self.min_sleep_slots >= (MINUTES_PER_DAY / self.slot_minutes) as usize {
            return Err(Error::Config(
                "min_sleep_slots: must leave room for an awake period".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism: must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.regularity_threshold) {
            return Err(Error::Config(
                "regularity.threshold: must lie in [0, 1]".into(),
            ));
        }
        self.mh.validate()?;
        if self.mode == Mode::Home
            && (self.home_bed_time.is_none() || self.home_wake_time.is_none())
        {
            return Err(Error::Config(
                "mode: home mode requires home.bed_time and home.wake_time".into(),
            ));
        }
        Ok(())
    }
}

/// Parse `key = value` lines; `#` starts a comment. Unknown keys are
/// rejected. An empty file yields all defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value", line_no + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut config, key, value)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn apply_key(config: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value
            .parse()
            .map_err(|e| Error::Config(format!("{key}: {e}")))
    }
    fn parse_time(key: &str, value: &str) -> Result<NaiveTime> {
        NaiveTime::parse_from_str(value, "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(value, "%H:%M:%S"))
            .map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    match key {
        "slot_minutes" => config.slot_minutes = parse(key, value)?,
        "window_start" => config.window_start = parse_time(key, value)?,
        "timezone" => {
            config.timezone = value
                .parse()
                .map_err(|e| Error::Config(format!("timezone: {e}")))?
        }
        "min_sleep_slots" => config.min_sleep_slots = parse(key, value)?,
        "mh.burn_in" => config.mh.burn_in = parse(key, value)?,
        "mh.retained" => config.mh.retained = parse(key, value)?,
        "mh.thin" => config.mh.thin = parse(key, value)?,
        "mh.step_t" => config.mh.step_t = parse(key, value)?,
        "mh.step_loglambda" => config.mh.step_loglambda = parse(key, value)?,
        "mh.seed" => config.mh_seed = Some(parse(key, value)?),
        "pingpong.gap_seconds" => config.pingpong_gap_seconds = parse(key, value)?,
        "absence.min_events" => config.absence_min_events = parse(key, value)?,
        "regularity.threshold" => config.regularity_threshold = parse(key, value)?,
        "mode" => {
            config.mode = match value {
                "campus" => Mode::Campus,
                "home" => Mode::Home,
                other => {
                    return Err(Error::Config(format!(
                        "mode: expected campus or home, got `{other}`"
                    )))
                }
            }
        }
        "home.bed_time" => config.home_bed_time = Some(parse_time(key, value)?),
        "home.wake_time" => config.home_wake_time = Some(parse_time(key, value)?),
        "parallelism" => config.parallelism = parse(key, value)?,
        "seed" => config.seed = parse(key, value)?,
        unknown => return Err(Error::Config(format!("unknown key `{unknown}`"))),
    }
    Ok(())
}
