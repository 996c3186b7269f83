//! Line-delimited log format for bandit feedback.
//!
//! The first line is a header object `{"header":{"schema":..,"config":..}}`;
//! every following line is one [`LogRecord`] with fields
//! `gen, t, ctx{amount,country,merchant,mcc,device,xnum}, eligible, chosen,
//! propensity, reward, greedy`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Fingerprint;
use crate::types::LogRecord;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid record: {message}")]
    Validation { line: usize, message: String },
    #[error("missing log header")]
    MissingHeader,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: Fingerprint,
    /// Hash of the generator configuration that produced the log.
    pub config: String,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: LogHeader,
}

pub fn encode_log(record: &LogRecord) -> String {
    serde_json::to_string(record).expect("log records always serialize")
}

/// Decode one record; `line` is the 1-based line number used in errors.
pub fn decode_log(text: &str, line: usize) -> Result<LogRecord, LogError> {
    let record: LogRecord = serde_json::from_str(text).map_err(|e| LogError::Parse {
        line,
        message: e.to_string(),
    })?;
    validate_record(&record).map_err(|message| LogError::Validation { line, message })?;
    Ok(record)
}

pub fn validate_record(r: &LogRecord) -> Result<(), String> {
    if !(r.propensity > 0.0 && r.propensity <= 1.0) {
        return Err(format!("propensity {} outside (0, 1]", r.propensity));
    }
    if r.reward > 1 {
        return Err(format!("reward {} not in {{0, 1}}", r.reward));
    }
    if !r.eligible.contains(&r.chosen) {
        return Err(format!("chosen action {} not eligible", r.chosen));
    }
    Ok(())
}

pub fn encode_header(header: &LogHeader) -> String {
    serde_json::to_string(&HeaderLine {
        header: header.clone(),
    })
    .expect("header serializes")
}

pub fn write_log<W: Write>(
    mut out: W,
    header: &LogHeader,
    records: &[LogRecord],
) -> Result<(), LogError> {
    writeln!(out, "{}", encode_header(header))?;
    for r in records {
        writeln!(out, "{}", encode_log(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log<R: BufRead>(input: R) -> Result<(LogHeader, Vec<LogRecord>), LogError> {
    let mut lines = input.lines();
    let first = lines.next().ok_or(LogError::MissingHeader)??;
    let header: HeaderLine = serde_json::from_str(&first).map_err(|e| LogError::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(decode_log(&line, i + 2)?);
    }
    Ok((header.header, records))
}
