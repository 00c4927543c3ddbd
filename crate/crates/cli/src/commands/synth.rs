use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use chrono::NaiveDate;
use clap::Args;
use drowse_core::config::RunConfig;
use drowse_core::evaluate::write_truth_csv;
use drowse_core::ingest::{write_events_jsonl, ApMap, ApRecord, WifiEvent};
use drowse_core::synth::{generate_trace, SynthProfile};

use crate::summary::RunSummary;

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory (events.jsonl, truth.csv, ap_map.csv).
    #[arg(long = "out")]
    output: PathBuf,

    #[arg(long, default_value_t = 10)]
    users: usize,

    #[arg(long, default_value_t = 7)]
    days: usize,

    #[arg(long, default_value = "2019-09-30")]
    start_day: NaiveDate,

    /// True sleep-onset slot.
    #[arg(long, default_value_t = 24)]
    sleep_slot: usize,

    /// True wake-up slot.
    #[arg(long, default_value_t = 56)]
    wake_slot: usize,

    #[arg(long, default_value_t = 2.5)]
    lambda_awake: f64,

    #[arg(long, default_value_t = 0.5)]
    lambda_sleep: f64,

    /// Per-day jitter bound on the true change points, in slots.
    #[arg(long, default_value_t = 2)]
    jitter: usize,

    /// Slots on the home AP before sleep and after waking.
    #[arg(long, default_value_t = 4)]
    home_lead: usize,
}

/// Deterministic synthetic device ids shaped like real anonymized digests.
fn device_id(index: usize) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(format!("synthetic-device-{index}"));
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run(args: &SynthArgs, config: &RunConfig) -> anyhow::Result<()> {
    let mut summary = RunSummary::start("synth");
    let grid = config.grid()?;

    let mut ap_records = vec![
        ApRecord {
            ap: "library-ap1".into(),
            building: "Library".into(),
            group: "Library-1".into(),
            residential: false,
        },
        ApRecord {
            ap: "uc-ap1".into(),
            building: "UnionCafe".into(),
            group: "UnionCafe-1".into(),
            residential: false,
        },
    ];

    let mut events: Vec<WifiEvent> = Vec::new();
    let mut truths: Vec<(String, NaiveDate, usize, usize)> = Vec::new();
    for user in 0..args.users {
        let device = device_id(user);
        let building = format!("Dorm{}", (b'A' + (user % 4) as u8) as char);
        let group = format!("{building}-f{}", user % 3 + 1);
        let home_ap = format!("{group}-ap{user}");
        let neighbor_ap = format!("{group}-nb{user}");
        ap_records.push(ApRecord {
            ap: home_ap.clone(),
            building: building.clone(),
            group: group.clone(),
            residential: true,
        });
        ap_records.push(ApRecord {
            ap: neighbor_ap,
            building,
            group,
            residential: true,
        });

        let profile = SynthProfile {
            device: device.clone(),
            t_sleep_true: args.sleep_slot,
            t_awake_true: args.wake_slot,
            lambda_awake: args.lambda_awake,
            lambda_sleep: args.lambda_sleep,
            jitter_slots: args.jitter,
            home_ap,
            roam_aps: vec!["library-ap1".into(), "uc-ap1".into()],
            home_lead_slots: args.home_lead,
            min_sleep_slots: config.min_sleep_slots,
            days: args.days,
            start_day: args.start_day,
        };
        let seed = config.seed.wrapping_add(user as u64);
        let (user_events, user_truths) = generate_trace(&profile, &grid, seed)?;
        events.extend(user_events);
        truths.extend(
            user_truths
                .into_iter()
                .map(|t| (t.device, t.day, t.t_sleep, t.t_awake)),
        );
    }
    events.sort_by(|a, b| (a.ts, &a.dev).cmp(&(b.ts, &b.dev)));

    std::fs::create_dir_all(&args.output)?;
    write_events_jsonl(
        BufWriter::new(
            File::create(args.output.join("events.jsonl")).context("creating events.jsonl")?,
        ),
        &events,
    )?;
    write_truth_csv(
        BufWriter::new(File::create(args.output.join("truth.csv"))?),
        &truths,
        &grid,
    )?;
    ApMap::from_records(ap_records)?.to_csv(BufWriter::new(File::create(
        args.output.join("ap_map.csv"),
    )?))?;

    summary.set("users", args.users as u64);
    summary.set("days", args.days as u64);
    summary.set("events", events.len() as u64);
    summary.emit();
    Ok(())
}
