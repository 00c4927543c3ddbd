use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use drowse_core::config::RunConfig;
use drowse_core::ensemble::{read_estimates_jsonl, EstimateStatus};
use drowse_core::evaluate::{
    read_truth_csv, slot_confusion, time_diff_stats, ConfusionStats, IntervalByKey,
};

use crate::summary::RunSummary;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Estimates JSONL from `infer`.
    #[arg(long)]
    estimates: PathBuf,

    /// Ground-truth CSV (dev, day, t_sleep, t_awake).
    #[arg(long)]
    truth: PathBuf,

    /// Output directory (metrics.csv, metrics.json).
    #[arg(long = "out")]
    output: PathBuf,
}

pub fn run(args: &EvaluateArgs, config: &RunConfig) -> anyhow::Result<()> {
    let mut summary = RunSummary::start("evaluate");
    let grid = config.grid()?;
    let slots = grid.slots_per_day();

    let records = read_estimates_jsonl(BufReader::new(
        File::open(&args.estimates)
            .with_context(|| format!("opening {}", args.estimates.display()))?,
    ))?;
    let truths = read_truth_csv(
        BufReader::new(
            File::open(&args.truth).with_context(|| format!("opening {}", args.truth.display()))?,
        ),
        &grid,
    )?;

    // Absent days legitimately have no estimate; estimated days must all
    // have ground truth.
    let mut preds = IntervalByKey::new();
    for rec in &records {
        if rec.status != EstimateStatus::Estimated {
            continue;
        }
        let (Some(sleep_raw), Some(awake_raw)) = (&rec.t_sleep, &rec.t_awake) else {
            bail!("estimated record for {}/{} is missing change points", rec.dev, rec.day);
        };
        let parse = |raw: &str| -> anyhow::Result<chrono::DateTime<chrono::Utc>> {
            Ok(chrono::DateTime::parse_from_rfc3339(raw)?.with_timezone(&chrono::Utc))
        };
        let (_, sleep_slot) = grid.locate(parse(sleep_raw)?);
        let (awake_day, awake_slot) = grid.locate(parse(awake_raw)?);
        let awake_slot = if awake_day > rec.day { slots } else { awake_slot };
        preds.insert((rec.dev.clone(), rec.day), (sleep_slot, awake_slot));
    }
    if preds.is_empty() {
        bail!("no estimated days to evaluate");
    }

    let diffs = time_diff_stats(&preds, &truths, grid.slot_minutes())?;

    let mut per_day: Vec<(String, chrono::NaiveDate, ConfusionStats)> = Vec::new();
    let mut pooled = (0u32, 0u32, 0u32, 0u32);
    for ((dev, day), pred) in &preds {
        let truth = truths[&(dev.clone(), *day)];
        let stats = slot_confusion(*pred, truth, slots)?;
        pooled = (
            pooled.0 + stats.tp,
            pooled.1 + stats.fp,
            pooled.2 + stats.fn_,
            pooled.3 + stats.tn,
        );
        per_day.push((dev.clone(), *day, stats));
    }
    let pooled_stats = ConfusionStats::from_counts(pooled.0, pooled.1, pooled.2, pooled.3);

    std::fs::create_dir_all(&args.output)?;
    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
        args.output.join("metrics.csv"),
    )?));
    csv.write_record([
        "dev", "day", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f_score",
        "sleep_diff_min", "wake_diff_min", "duration_diff_min",
    ])?;
    for ((dev, day, stats), diff) in per_day.iter().zip(&diffs.per_day) {
        csv.write_record([
            dev.clone(),
            day.to_string(),
            stats.tp.to_string(),
            stats.fp.to_string(),
            stats.fn_.to_string(),
            stats.tn.to_string(),
            format!("{:.6}", stats.accuracy),
            format!("{:.6}", stats.precision),
            format!("{:.6}", stats.recall),
            format!("{:.6}", stats.f_score),
            diff.sleep_diff_min.to_string(),
            diff.wake_diff_min.to_string(),
            diff.duration_diff_min.to_string(),
        ])?;
    }
    csv.flush()?;

    let report = serde_json::json!({
        "days_scored": per_day.len(),
        "pooled": pooled_stats,
        "time_diff": {
            "sleep": diffs.sleep,
            "wake": diffs.wake,
            "duration": diffs.duration,
        },
    });
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(args.output.join("metrics.json"))?),
        &report,
    )?;

    summary.set("days_scored", per_day.len() as u64);
    summary.set("pooled_accuracy", pooled_stats.accuracy);
    summary.set("mean_sleep_diff_min", diffs.sleep.mean);
    summary.set("mean_wake_diff_min", diffs.wake.mean);
    summary.emit();
    Ok(())
}
