use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use drowse_core::analytics::{aggregate_report, EstimatedDay};
use drowse_core::config::RunConfig;
use drowse_core::ensemble::{read_estimates_jsonl, EstimateStatus};

use crate::summary::RunSummary;

#[derive(Args)]
pub struct ReportArgs {
    /// Estimates JSONL from `infer`.
    #[arg(long)]
    estimates: PathBuf,

    /// Output directory, one CSV per report section plus report.json.
    #[arg(long = "out")]
    output: PathBuf,
}

pub fn run(args: &ReportArgs, config: &RunConfig) -> anyhow::Result<()> {
    let mut summary = RunSummary::start("report");
    let grid = config.grid()?;
    let slots = grid.slots_per_day();

    let records = read_estimates_jsonl(BufReader::new(
        File::open(&args.estimates)
            .with_context(|| format!("opening {}", args.estimates.display()))?,
    ))?;

    let mut days = Vec::new();
    for rec in &records {
        if rec.status != EstimateStatus::Estimated {
            continue;
        }
        let (Some(sleep_raw), Some(awake_raw), Some(duration)) =
            (&rec.t_sleep, &rec.t_awake, rec.duration_min)
        else {
            bail!("estimated record for {}/{} is incomplete", rec.dev, rec.day);
        };
        let parse = |raw: &str| -> anyhow::Result<chrono::DateTime<chrono::Utc>> {
            Ok(chrono::DateTime::parse_from_rfc3339(raw)?.with_timezone(&chrono::Utc))
        };
        let (_, sleep_slot) = grid.locate(parse(sleep_raw)?);
        let (awake_day, awake_slot) = grid.locate(parse(awake_raw)?);
        let awake_slot = if awake_day > rec.day { slots } else { awake_slot };
        days.push(EstimatedDay {
            device: rec.dev.clone(),
            day: rec.day,
            t_sleep_slot: sleep_slot,
            t_awake_slot: awake_slot,
            duration_minutes: duration,
        });
    }

    let report = aggregate_report(&days, config.regularity_threshold);
    std::fs::create_dir_all(&args.output)?;

    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
        args.output.join("weekday_means.csv"),
    )?));
    csv.write_record(["weekday", "mean_duration_min", "days"])?;
    for wm in &report.weekday_means {
        csv.write_record([
            wm.weekday.clone(),
            wm.mean_duration_min
                .map(|m| format!("{m:.2}"))
                .unwrap_or_default(),
            wm.days.to_string(),
        ])?;
    }
    csv.flush()?;

    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
        args.output.join("regularity.csv"),
    )?));
    csv.write_record(["class", "users", "threshold"])?;
    csv.write_record([
        "regular".into(),
        report.regular_users.to_string(),
        report.threshold.to_string(),
    ])?;
    csv.write_record([
        "irregular".into(),
        report.irregular_users.to_string(),
        report.threshold.to_string(),
    ])?;
    csv.flush()?;

    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
        args.output.join("class_quartiles.csv"),
    )?));
    csv.write_record(["class", "day_type", "min", "q1", "median", "q3", "max", "days"])?;
    for cq in &report.class_quartiles {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_default();
        csv.write_record([
            format!("{:?}", cq.class).to_lowercase(),
            cq.day_type.clone(),
            fmt(cq.stats.map(|s| s.min)),
            fmt(cq.stats.map(|s| s.q1)),
            fmt(cq.stats.map(|s| s.median)),
            fmt(cq.stats.map(|s| s.q3)),
            fmt(cq.stats.map(|s| s.max)),
            cq.days.to_string(),
        ])?;
    }
    csv.flush()?;

    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
        args.output.join("longitudinal.csv"),
    )?));
    csv.write_record(["dev", "day", "trailing3_mean_min"])?;
    for p in &report.longitudinal {
        csv.write_record([
            p.dev.clone(),
            p.day.to_string(),
            format!("{:.2}", p.trailing_mean_min),
        ])?;
    }
    csv.flush()?;

    let mut csv = csv::Writer::from_writer(BufWriter::new(File::create(
        args.output.join("weekly_summaries.csv"),
    )?));
    let mut header = vec!["dev".to_string(), "week_start".to_string()];
    header.extend((0..7).map(|d| format!("d{d}_min")));
    header.push("score".into());
    header.push("class".into());
    csv.write_record(&header)?;
    for w in &report.weekly {
        let mut row = vec![w.device.clone(), w.week_start.to_string()];
        row.extend(
            w.durations_min
                .iter()
                .map(|d| d.map(|x| x.to_string()).unwrap_or_default()),
        );
        row.push(w.score.map(|s| format!("{s:.4}")).unwrap_or_default());
        row.push(
            w.class
                .map(|c| format!("{c:?}").to_lowercase())
                .unwrap_or_default(),
        );
        csv.write_record(&row)?;
    }
    csv.flush()?;

    serde_json::to_writer_pretty(
        BufWriter::new(File::create(args.output.join("report.json"))?),
        &report,
    )?;

    summary.set("estimated_days", days.len() as u64);
    summary.set("regular_users", report.regular_users as u64);
    summary.set("irregular_users", report.irregular_users as u64);
    summary.emit();
    Ok(())
}
