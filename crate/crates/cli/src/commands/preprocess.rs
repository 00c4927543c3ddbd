use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context};
use chrono::Duration;
use clap::Args;
use drowse_core::config::{Mode, RunConfig};
use drowse_core::ingest::{read_events_jsonl, ApMap, WifiEvent};
use drowse_core::preprocess::{
    bin_events, classify_resident, day_range, filter_ping_pong, locate_dorm_interval,
    select_primary_device, write_slot_csv, SlotSeries,
};

use crate::summary::RunSummary;

#[derive(Args)]
pub struct PreprocessArgs {
    /// Canonical JSONL events.
    #[arg(long)]
    events: PathBuf,

    /// Output directory for slot series and manifests.
    #[arg(long = "out")]
    output: PathBuf,

    /// AP map CSV (required in campus mode).
    #[arg(long)]
    ap_map: Option<PathBuf>,

    /// Optional user-to-device map CSV (`user,dev`); without it every
    /// device is its own user.
    #[arg(long)]
    user_map: Option<PathBuf>,
}

pub fn run(args: &PreprocessArgs, config: &RunConfig) -> anyhow::Result<()> {
    let mut summary = RunSummary::start("preprocess");
    let grid = config.grid()?;

    let ap_map = match (&args.ap_map, config.mode) {
        (Some(path), _) => Some(
            ApMap::from_csv(BufReader::new(
                File::open(path).with_context(|| format!("opening {}", path.display()))?,
            ))
            .context("loading AP map")?,
        ),
        (None, Mode::Campus) => bail!("campus mode requires --ap-map"),
        (None, Mode::Home) => None,
    };

    let events = read_events_jsonl(BufReader::new(
        File::open(&args.events).with_context(|| format!("opening {}", args.events.display()))?,
    ))?;
    if events.is_empty() {
        bail!("no events in {}", args.events.display());
    }

    let mut by_device: BTreeMap<String, Vec<WifiEvent>> = BTreeMap::new();
    for event in events {
        by_device.entry(event.dev.clone()).or_default().push(event);
    }
    for device_events in by_device.values_mut() {
        device_events.sort_by_key(|e| e.ts);
    }
    let as_of = by_device
        .values()
        .flat_map(|evs| evs.last())
        .map(|e| e.ts)
        .max()
        .expect("non-empty events");
    let as_of_day = as_of.with_timezone(&grid.tz()).date_naive();

    // User grouping: explicit map, or one user per device.
    let user_devices: BTreeMap<String, Vec<String>> = match &args.user_map {
        Some(path) => read_user_map(path)?,
        None => by_device
            .keys()
            .map(|dev| (dev.clone(), vec![dev.clone()]))
            .collect(),
    };

    std::fs::create_dir_all(&args.output)?;
    let mut primary_rows: Vec<(String, String)> = Vec::new();
    let mut resident_rows: Vec<(String, bool)> = Vec::new();
    let mut all_series: Vec<SlotSeries> = Vec::new();
    let mut residential_series: Vec<SlotSeries> = Vec::new();
    let mut dorm_rows: Vec<(String, String, usize, usize, String)> = Vec::new();
    let mut users_skipped = 0u64;

    for (user, devices) in &user_devices {
        let candidates: Vec<(&str, &[WifiEvent])> = devices
            .iter()
            .filter_map(|dev| {
                by_device
                    .get(dev)
                    .map(|evs| (dev.as_str(), evs.as_slice()))
            })
            .collect();
        let primary = match select_primary_device(candidates.iter().copied(), as_of, 7) {
            Ok(primary) => primary,
            Err(_) => {
                users_skipped += 1;
                continue;
            }
        };
        primary_rows.push((user.clone(), primary.clone()));
        let device_events = &by_device[&primary];

        let filtered = match &ap_map {
            Some(map) => {
                resident_rows.push((
                    primary.clone(),
                    classify_resident(device_events, map, as_of_day, &grid),
                ));
                filter_ping_pong(device_events, map, config.pingpong_gap_seconds)
            }
            None => device_events.clone(),
        };

        let Some((first_day, last_day)) = day_range(&filtered, &grid) else {
            continue;
        };
        let mut day = first_day;
        while day <= last_day {
            all_series.push(bin_events(&filtered, primary.clone(), day, &grid));
            if let Some(map) = &ap_map {
                residential_series.push(bin_events(
                    filtered.iter().filter(|e| map.is_residential(&e.ap)),
                    primary.clone(),
                    day,
                    &grid,
                ));
                if let Some(dorm) = locate_dorm_interval(&filtered, map, day, &grid) {
                    dorm_rows.push((
                        primary.clone(),
                        day.to_string(),
                        dorm.start_slot,
                        dorm.end_slot,
                        dorm.building,
                    ));
                }
            }
            day += Duration::days(1);
        }
    }

    write_slot_csv(
        BufWriter::new(File::create(args.output.join("slots.csv"))?),
        &all_series,
    )?;
    if ap_map.is_some() {
        write_slot_csv(
            BufWriter::new(File::create(args.output.join("slots_residential.csv"))?),
            &residential_series,
        )?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
            args.output.join("dorm_intervals.csv"),
        )?));
        csv.write_record(["dev", "day", "start_slot", "end_slot", "building"])?;
        for (dev, day, start, end, building) in &dorm_rows {
            csv.write_record([
                dev.as_str(),
                day.as_str(),
                &start.to_string(),
                &end.to_string(),
                building.as_str(),
            ])?;
        }
        csv.flush()?;

        let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
            args.output.join("residents.csv"),
        )?));
        csv.write_record(["dev", "resident"])?;
        for (dev, resident) in &resident_rows {
            csv.write_record([dev.as_str(), if *resident { "true" } else { "false" }])?;
        }
        csv.flush()?;
    }
    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
        args.output.join("primary_devices.csv"),
    )?));
    csv.write_record(["user", "dev"])?;
    for (user, dev) in &primary_rows {
        csv.write_record([user.as_str(), dev.as_str()])?;
    }
    csv.flush()?;

    summary.set("devices", by_device.len() as u64);
    summary.set("users", user_devices.len() as u64);
    summary.set("users_skipped", users_skipped);
    summary.set(
        "residents",
        resident_rows.iter().filter(|(_, r)| *r).count() as u64,
    );
    summary.set("series_rows", all_series.len() as u64);
    summary.emit();
    Ok(())
}

fn read_user_map(path: &PathBuf) -> anyhow::Result<BTreeMap<String, Vec<String>>> {
    let mut csv = csv::Reader::from_reader(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ));
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for record in csv.records() {
        let record = record?;
        let user = record.get(0).unwrap_or("").to_string();
        let dev = record.get(1).unwrap_or("").to_string();
        if user.is_empty() || dev.is_empty() {
            bail!("user map rows need both user and dev");
        }
        if !seen.insert(dev.clone()) {
            bail!("device {dev} appears under two users");
        }
        map.entry(user).or_default().push(dev);
    }
    Ok(map)
}
