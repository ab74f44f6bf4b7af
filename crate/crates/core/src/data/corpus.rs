use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

/// One rated, reviewed interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub review_text: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub lines: usize,
    pub parsed: usize,
    pub skipped: usize,
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n))
}

fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn as_timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Parses one JSON object. Accepts both the canonical field names and the
/// Amazon aliases (`reviewerID`, `asin`, `overall`, `reviewText`,
/// `unixReviewTime`).
pub fn parse_line(line: &str) -> Option<Interaction> {
    let v: Value = serde_json::from_str(line).ok()?;
    let obj = v.as_object()?;
    let user_id = as_id(field(obj, &["user_id", "reviewerID"])?)?;
    let item_id = as_id(field(obj, &["item_id", "asin"])?)?;
    let rating = field(obj, &["rating", "overall"])?.as_f64()?;
    if !rating.is_finite() {
        return None;
    }
    let review_text = match field(obj, &["review_text", "reviewText"]) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(_) => return None,
    };
    let timestamp = as_timestamp(field(obj, &["timestamp", "unixReviewTime"])?)?;
    Some(Interaction {
        user_id,
        item_id,
        rating,
        review_text,
        timestamp,
    })
}

/// Reads a JSON-lines corpus. Blank lines are ignored; malformed lines are
/// skipped and counted, and more than 10% malformed lines is a format error.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<(Vec<Interaction>, ParseReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_reader(reader: impl BufRead) -> Result<(Vec<Interaction>, ParseReport)> {
    let mut out = Vec::new();
    let mut report = ParseReport::default();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match parse_line(&line) {
            Some(i) => out.push(i),
            None => report.skipped += 1,
        }
    }
    report.parsed = out.len();
    if report.skipped * 10 > report.lines {
        return Err(Error::Format(format!(
            "{} of {} lines malformed (limit 10%)",
            report.skipped, report.lines
        )));
    }
    Ok((out, report))
}

pub fn write_corpus(path: impl AsRef<Path>, interactions: &[Interaction]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for i in interactions {
        buf.push_str(&serde_json::to_string(i)?);
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
