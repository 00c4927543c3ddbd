use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use drowse_core::config::RunConfig;
use drowse_core::ingest::{parse_log_line, HashKey, LineGrammar, ParsedLine};

use crate::summary::RunSummary;

#[derive(Args)]
pub struct IngestArgs {
    /// Raw AP log file.
    #[arg(long = "in")]
    input: PathBuf,

    /// Canonical JSONL event output.
    #[arg(long = "out")]
    output: PathBuf,

    /// Secret anonymization key.
    #[arg(long)]
    hash_key: String,

    /// Custom line grammar: a regex with named captures ts, ap, kind, mac.
    #[arg(long)]
    grammar: Option<String>,
}

pub fn run(args: &IngestArgs, _config: &RunConfig) -> anyhow::Result<()> {
    let mut summary = RunSummary::start("ingest");
    let key = HashKey::new(args.hash_key.as_bytes().to_vec())?;
    let grammar = match &args.grammar {
        Some(pattern) => LineGrammar::from_pattern(pattern)?,
        None => LineGrammar::default_grammar(),
    };

    let reader = BufReader::new(
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?,
    );
    let mut writer = BufWriter::new(
        File::create(&args.output)
            .with_context(|| format!("creating {}", args.output.display()))?,
    );

    // Dirty lines are counted and reported, never fatal.
    let (mut lines, mut events, mut skipped, mut malformed) = (0u64, 0u64, 0u64, 0u64);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines += 1;
        match parse_log_line(&line, idx + 1, &grammar, &key) {
            Ok(ParsedLine::Event(event)) => {
                serde_json::to_writer(&mut writer, &event)?;
                writer.write_all(b"\n")?;
                events += 1;
            }
            Ok(ParsedLine::Skip) => skipped += 1,
            Err(err) => {
                if malformed < 5 {
                    log::warn!("{err}");
                }
                malformed += 1;
            }
        }
    }
    writer.flush()?;

    summary.set("lines", lines);
    summary.set("events", events);
    summary.set("skipped", skipped);
    summary.set("malformed", malformed);
    summary.emit();
    Ok(())
}
