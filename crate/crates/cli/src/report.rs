//! Report assembly: a JSON object with metadata, deterministic rows and a
//! pass/fail summary, plus plain CSV table output. Timestamps and wall
//! times live only in the metadata so that rows are byte-stable for a
//! fixed configuration and seed.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use folner_core::folner::RatioValue;
use serde::Serialize;

#[derive(Serialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub timestamp_unix: u64,
    pub wall_ms: u128,
}

#[derive(Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Serialize)]
pub struct Summary {
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Serialize)]
pub struct Report {
    pub meta: Meta,
    pub rows: serde_json::Value,
    pub summary: Summary,
}

impl Report {
    pub fn new(
        command: &str,
        seed: u64,
        config: serde_json::Value,
        rows: serde_json::Value,
        checks: Vec<Check>,
        wall_ms: u128,
    ) -> Report {
        let pass = checks.iter().all(|c| c.pass);
        Report {
            meta: Meta {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config,
                timestamp_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                wall_ms,
            },
            rows,
            summary: Summary { pass, checks },
        }
    }

    pub fn emit(&self, out: Option<&Path>) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        match out {
            Some(path) => fs::write(path, text + "\n"),
            None => {
                let stdout = io::stdout();
                let mut handle = stdout.lock();
                writeln!(handle, "{text}")
            }
        }
    }
}

pub fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        pass,
        detail,
    }
}

/// Writes a CSV table; fields are plain digits, names and ratios, never
/// quoted.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> io::Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)
}

/// `(num, den, float)` fields of a ratio value; the exact fields are empty
/// in the float regime.
pub fn ratio_fields(v: &RatioValue) -> (String, String, f64) {
    match v {
        RatioValue::Exact(r) => (r.numer().to_string(), r.denom().to_string(), v.as_f64()),
        RatioValue::Approx(x) => (String::new(), String::new(), *x),
    }
}

/// `num/den` display string, or the float rendering in the float regime.
pub fn ratio_string(v: &RatioValue) -> String {
    match v {
        RatioValue::Exact(r) => format!("{}/{}", r.numer(), r.denom()),
        RatioValue::Approx(x) => format!("{x:.17e}"),
    }
}
