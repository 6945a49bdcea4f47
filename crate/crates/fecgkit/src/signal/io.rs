use std::fs;
use std::path::Path;

use super::record::{BeatAnnotations, SignalRecord};
use crate::{Error, Result};

/// Formats a value with at most nine significant digits in shortest form.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Serialises a record: `# fs=<int>`, a label line, then one row per sample.
pub fn signal_to_csv(record: &SignalRecord) -> String {
    let mut out = String::with_capacity(record.len() * record.n_channels() * 12);
    out.push_str(&format!("# fs={}\n", record.fs()));
    out.push_str(&record.labels().join(","));
    out.push('\n');
    for i in 0..record.len() {
        for (c, ch) in record.channels().iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format_sig9(ch[i]));
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV layout written by [`signal_to_csv`].
pub fn parse_signal_csv(text: &str) -> Result<SignalRecord> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty signal file".into()))?;
    let fs: u32 = header
        .trim()
        .strip_prefix("# fs=")
        .ok_or_else(|| Error::Parse("first line must be '# fs=<int>'".into()))?
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad sampling rate: {e}")))?;
    let labels: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("missing label line".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut channels = vec![Vec::new(); labels.len()];
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != labels.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                row + 1,
                fields.len(),
                labels.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            channels[c].push(v);
        }
    }
    SignalRecord::new(channels, fs, labels).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<SignalRecord> {
    parse_signal_csv(&fs::read_to_string(path)?)
}

pub fn write_signal_csv(path: impl AsRef<Path>, record: &SignalRecord) -> Result<()> {
    fs::write(path, signal_to_csv(record))?;
    Ok(())
}

/// Parses one 0-based sample index per line.
pub fn parse_annotations(text: &str, fs: u32) -> Result<BeatAnnotations> {
    let mut idx = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        idx.push(
            t.parse::<usize>()
                .map_err(|e| Error::Parse(format!("annotation line {}: {e}", i + 1)))?,
        );
    }
    BeatAnnotations::new(idx, fs).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_annotations(path: impl AsRef<Path>, fs: u32) -> Result<BeatAnnotations> {
    parse_annotations(&fs::read_to_string(path)?, fs)
}

pub fn write_annotations(path: impl AsRef<Path>, anns: &BeatAnnotations) -> Result<()> {
    let mut out = String::new();
    for i in anns.indices() {
        out.push_str(&i.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
