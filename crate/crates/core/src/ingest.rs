//! Raw AP log parsing, device anonymization and the AP-to-building map.
//!
//! Controller log formats vary, so the line grammar is a regex with named
//! captures (`ts`, `ap`, `kind`, `mac`) and a built-in default of
//! `<ISO-8601 ts> <ap-id> <keyword> <mac>`. Lines whose keyword is not one of
//! the four tracked kinds are skipped rather than rejected; downstream stages
//! consume only the canonical JSONL event stream.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDateTime, Utc};
use hmac::{Hmac, Mac};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::{Error, Result};

/// The four tracked AP event kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Assoc,
    Disassoc,
    Reassoc,
    Auth,
}

impl EventKind {
    pub fn from_keyword(word: &str) -> Option<Self> {
        match word.to_ascii_lowercase().as_str() {
            "assoc" => Some(Self::Assoc),
            "disassoc" => Some(Self::Disassoc),
            "reassoc" => Some(Self::Reassoc),
            "auth" => Some(Self::Auth),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Assoc => "assoc",
            Self::Disassoc => "disassoc",
            Self::Reassoc => "reassoc",
            Self::Auth => "auth",
        }
    }

    /// Association-kind events (new or roaming connection) are the activity
    /// signal used for primary-device selection and ping-pong runs.
    pub fn is_association(&self) -> bool {
        matches!(self, Self::Assoc | Self::Reassoc)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped AP event for one anonymized device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WifiEvent {
    #[serde(with = "ts_format")]
    pub ts: DateTime<Utc>,
    pub dev: String,
    pub ap: String,
    pub kind: EventKind,
}

/// Canonical second-resolution UTC timestamps: `2019-10-01T23:15:02Z`.
mod ts_format {
    use chrono::{DateTime, SecondsFormat, Timelike, Utc};
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(de)?;
        let dt = DateTime::parse_from_rfc3339(&raw).map_err(serde::de::Error::custom)?;
        Ok(dt.with_timezone(&Utc).with_nanosecond(0).unwrap())
    }
}

/// Secret key for device anonymization.
#[derive(Clone)]
pub struct HashKey(Vec<u8>);

impl HashKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(Error::Config("anonymization key must be non-empty".into()));
        }
        Ok(Self(bytes))
    }

    fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for HashKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HashKey(..)")
    }
}

/// Keyed digest of a MAC address, rendered as lowercase hex.
///
/// The MAC is normalized first (lowercase, colon-separated) so controller
/// case and separator conventions do not fragment one device into several.
pub fn anonymize_device(mac: &str, key: &HashKey) -> String {
    let normalized = normalize_mac(mac);
    let mut hmac =
        Hmac::<Sha256>::new_from_slice(key.bytes()).expect("hmac accepts any key length");
    hmac.update(normalized.as_bytes());
    hex::encode(hmac.finalize().into_bytes())
}

fn normalize_mac(mac: &str) -> String {
    let hex_digits: String = mac
        .chars()
        .filter(|c| c.is_ascii_hexdigit())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    if hex_digits.len() == 12 && mac.chars().all(|c| c.is_ascii_hexdigit() || ":-.".contains(c)) {
        hex_digits
            .as_bytes()
            .chunks(2)
            .map(|pair| std::str::from_utf8(pair).unwrap())
            .collect::<Vec<_>>()
            .join(":")
    } else {
        mac.trim().to_ascii_lowercase()
    }
}

/// Line grammar: a regex with named captures `ts`, `ap`, `kind`, `mac`.
#[derive(Debug, Clone)]
pub struct LineGrammar {
    regex: Regex,
}

impl LineGrammar {
    /// `<ISO-8601 ts> <ap-id> <keyword> <mac>`, whitespace-separated.
    pub fn default_grammar() -> Self {
        Self {
            regex: Regex::new(r"^\s*(?P<ts>\S+)\s+(?P<ap>\S+)\s+(?P<kind>\S+)\s+(?P<mac>\S+)\s*$")
                .expect("default grammar compiles"),
        }
    }

    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let regex = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("grammar: invalid regex: {e}")))?;
        for group in ["ts", "ap", "kind", "mac"] {
            if !regex.capture_names().flatten().any(|n| n == group) {
                return Err(Error::Config(format!(
                    "grammar: missing named capture `{group}`"
                )));
            }
        }
        Ok(Self { regex })
    }
}

impl Default for LineGrammar {
    fn default() -> Self {
        Self::default_grammar()
    }
}

/// Outcome of parsing one raw line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Event(WifiEvent),
    /// The line matched the grammar but its keyword is not a tracked kind.
    Skip,
}

/// Parse one raw log line into a canonical event, anonymizing the device.
///
/// `line_no` is carried into parse errors so a dirty multi-gigabyte ingest can
/// report exactly which lines were dropped.
pub fn parse_log_line(
    line: &str,
    line_no: usize,
    grammar: &LineGrammar,
    key: &HashKey,
) -> Result<ParsedLine> {
    let caps = grammar.regex.captures(line).ok_or_else(|| Error::Parse {
        line: line_no,
        reason: "no grammar captures matched".into(),
    })?;
    let field = |name: &str| -> Result<&str> {
        caps.name(name)
            .map(|m| m.as_str())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                reason: format!("missing capture group `{name}`"),
            })
    };

    let kind = match EventKind::from_keyword(field("kind")?) {
        Some(kind) => kind,
        None => return Ok(ParsedLine::Skip),
    };
    let ts = parse_timestamp(field("ts")?).ok_or_else(|| Error::Parse {
        line: line_no,
        reason: format!("malformed timestamp `{}`", field("ts").unwrap_or_default()),
    })?;
    let dev = anonymize_device(field("mac")?, key);

    Ok(ParsedLine::Event(WifiEvent {
        ts,
        dev,
        ap: field("ap")?.to_string(),
        kind,
    }))
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    // Naive timestamps are treated as UTC.
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|naive| naive.and_utc())
}

/// One AP's location metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApRecord {
    pub ap: String,
    pub building: String,
    /// Roaming-group label; defaults to the building when unspecified.
    pub group: String,
    pub residential: bool,
}

/// Immutable AP-to-building lookup, shareable across workers.
#[derive(Debug, Clone, Default)]
pub struct ApMap {
    records: HashMap<String, ApRecord>,
}

impl ApMap {
    pub fn from_records(rows: impl IntoIterator<Item = ApRecord>) -> Result<Self> {
        let mut records = HashMap::new();
        for mut rec in rows {
            if rec.group.is_empty() {
                rec.group = rec.building.clone();
            }
            if records.insert(rec.ap.clone(), rec.clone()).is_some() {
                return Err(Error::DuplicateAp(rec.ap));
            }
        }
        Ok(Self { records })
    }

    pub fn get(&self, ap: &str) -> Option<&ApRecord> {
        self.records.get(ap)
    }

    pub fn group_of(&self, ap: &str) -> Option<&str> {
        self.get(ap).map(|r| r.group.as_str())
    }

    pub fn is_residential(&self, ap: &str) -> bool {
        self.get(ap).is_some_and(|r| r.residential)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `ap,building,group,residential`. The residential
    /// column may be absent (defaults false) and group may be empty
    /// (defaults to the building).
    pub fn from_csv(reader: impl std::io::Read) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = csv.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let (ap_col, building_col) = match (col("ap"), col("building")) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Config(
                    "ap map: header must contain `ap` and `building`".into(),
                ))
            }
        };
        let group_col = col("group");
        let residential_col = col("residential");

        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record?;
            let get = |i: usize| record.get(i).unwrap_or("").trim().to_string();
            let residential = match residential_col.map(|i| get(i)) {
                None => false,
                Some(raw) if raw.is_empty() => false,
                Some(raw) => parse_bool(&raw).ok_or_else(|| {
                    Error::Config(format!("ap map: bad residential value `{raw}`"))
                })?,
            };
            rows.push(ApRecord {
                ap: get(ap_col),
                building: get(building_col),
                group: group_col.map(|i| get(i)).unwrap_or_default(),
                residential,
            });
        }
        Self::from_records(rows)
    }

    pub fn to_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["ap", "building", "group", "residential"])?;
        let mut records: Vec<_> = self.records.values().collect();
        records.sort_by(|a, b| a.ap.cmp(&b.ap));
        for rec in records {
            csv.write_record([
                rec.ap.as_str(),
                rec.building.as_str(),
                rec.group.as_str(),
                if rec.residential { "true" } else { "false" },
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Read canonical JSON Lines events. Events need not be sorted on disk.
pub fn read_events_jsonl(reader: impl BufRead) -> Result<Vec<WifiEvent>> {
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line)?);
    }
    Ok(events)
}

pub fn write_events_jsonl(mut writer: impl Write, events: &[WifiEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
