use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::Args;
use drowse_core::config::RunConfig;
use drowse_core::ensemble::{write_estimates_jsonl, EstimateStatus};
use drowse_core::preprocess::{read_slot_csv, DormInterval, SlotSeries};
use drowse_core::runner::{infer_batch, UserDayInput};

use crate::summary::RunSummary;

#[derive(Args)]
pub struct InferArgs {
    /// Preprocess output directory (slots.csv plus optional
    /// slots_residential.csv and dorm_intervals.csv).
    #[arg(long = "in")]
    input: PathBuf,

    /// Estimates JSONL output.
    #[arg(long = "out")]
    output: PathBuf,

    /// Optional residents.csv; when given, only devices marked resident are
    /// processed.
    #[arg(long)]
    residents: Option<PathBuf>,
}

pub fn run(args: &InferArgs, config: &RunConfig) -> anyhow::Result<()> {
    let mut summary = RunSummary::start("infer");
    let grid = config.grid()?;

    let slots_path = args.input.join("slots.csv");
    let series = read_slot_csv(
        BufReader::new(
            File::open(&slots_path)
                .with_context(|| format!("opening {}", slots_path.display()))?,
        ),
        &grid,
    )?;
    if series.is_empty() {
        bail!("no slot series in {}", slots_path.display());
    }

    let residential = read_optional_slots(&args.input.join("slots_residential.csv"), config)?;
    let dorms = read_dorm_intervals(&args.input.join("dorm_intervals.csv"))?;
    let residents = match &args.residents {
        Some(path) => Some(read_residents(path)?),
        None => None,
    };

    let inputs: Vec<UserDayInput> = series
        .into_iter()
        .filter(|s| {
            residents
                .as_ref()
                .is_none_or(|allowed| allowed.contains(&s.device))
        })
        .map(|s| {
            let key = (s.device.clone(), s.day);
            UserDayInput {
                residential: residential.as_ref().and_then(|m| m.get(&key).cloned()),
                dorm: dorms.get(&key).cloned(),
                series: s,
            }
        })
        .collect();

    let estimates = infer_batch(&inputs, config, config.parallelism)?;
    write_estimates_jsonl(
        BufWriter::new(
            File::create(&args.output)
                .with_context(|| format!("creating {}", args.output.display()))?,
        ),
        &estimates,
    )?;

    let users: BTreeSet<&str> = estimates.iter().map(|e| e.device.as_str()).collect();
    let count = |status: EstimateStatus| -> u64 {
        estimates.iter().filter(|e| e.status == status).count() as u64
    };
    summary.set("users", users.len() as u64);
    summary.set("user_days", estimates.len() as u64);
    summary.set("days_estimated", count(EstimateStatus::Estimated));
    summary.set("days_absent", count(EstimateStatus::Absent));
    summary.set("days_insufficient", count(EstimateStatus::InsufficientPrior));
    summary.set(
        "per_user_mean_seconds",
        summary.wall_seconds() / users.len().max(1) as f64,
    );
    summary.emit();
    Ok(())
}

fn read_optional_slots(
    path: &Path,
    config: &RunConfig,
) -> anyhow::Result<Option<BTreeMap<(String, NaiveDate), SlotSeries>>> {
    if !path.exists() {
        return Ok(None);
    }
    let grid = config.grid()?;
    let series = read_slot_csv(BufReader::new(File::open(path)?), &grid)?;
    Ok(Some(
        series
            .into_iter()
            .map(|s| ((s.device.clone(), s.day), s))
            .collect(),
    ))
}

fn read_dorm_intervals(
    path: &Path,
) -> anyhow::Result<BTreeMap<(String, NaiveDate), DormInterval>> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut csv = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    for record in csv.records() {
        let record = record?;
        let dev = record.get(0).unwrap_or("").to_string();
        let day: NaiveDate = record.get(1).unwrap_or("").parse()?;
        let start_slot: usize = record.get(2).unwrap_or("").parse()?;
        let end_slot: usize = record.get(3).unwrap_or("").parse()?;
        let building = record.get(4).unwrap_or("").to_string();
        out.insert(
            (dev, day),
            DormInterval {
                start_slot,
                end_slot,
                building,
            },
        );
    }
    Ok(out)
}

fn read_residents(path: &Path) -> anyhow::Result<BTreeSet<String>> {
    let mut csv = csv::Reader::from_reader(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ));
    let mut residents = BTreeSet::new();
    for record in csv.records() {
        let record = record?;
        if record.get(1).unwrap_or("") == "true" {
            residents.insert(record.get(0).unwrap_or("").to_string());
        }
    }
    Ok(residents)
}
