//! Append-only JSON-lines run logs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use rei_core::optimizer::{LogRecord, RunLog};

use crate::CliError;

/// Writes one record per line and flushes after each, so a crash loses at
/// most the record being written.
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self { out: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}

pub fn read_log(path: &Path) -> Result<RunLog, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("{}:{}: bad log record: {e}", path.display(), i + 1)))?;
        records.push(record);
    }
    Ok(RunLog { records })
}

/// The log text with every `timing` field removed, for run-to-run
/// comparison.
pub fn without_timing(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: Value = serde_json::from_str(line).expect("log lines are JSON");
        strip(&mut v);
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

fn strip(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timing");
            map.values_mut().for_each(strip);
        }
        Value::Array(items) => items.iter_mut().for_each(strip),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_is_stripped_at_any_depth() {
        let a = "{\"record\":\"summary\",\"x\":1.5,\"timing\":{\"wall_ms\":3.0}}\n{\"y\":[{\"timing\":1}]}\n";
        let b = "{\"record\":\"summary\",\"x\":1.5,\"timing\":{\"wall_ms\":9.0}}\n{\"y\":[{\"timing\":2}]}\n";
        assert_eq!(without_timing(a), without_timing(b));
        assert!(!without_timing(a).contains("wall_ms"));
    }
}
