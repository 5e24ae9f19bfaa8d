//! Trial, force-sidecar and manifest files.
//!
//! Trials are comma-separated with header `t,e_<muscle>...,q`; force sidecars
//! use `t,F_<muscle>...`. Values are written in shortest round-trip form, so
//! save followed by load is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::{MotionProfile, Subject};
use super::TrialMatrix;
use crate::error::{Error, Result};

/// Provenance of a synthetic trial: seed, excitation pattern and the true
/// subject it was simulated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub global_phase: f64,
    pub profile: MotionProfile,
    pub subject: Subject,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| parse_error(path, &text, e))
    }
}

pub(crate) fn parse_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let (line, column) = e
        .span()
        .map(|s| {
            let before = &text[..s.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = s.start - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        })
        .unwrap_or((0, 0));
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: e.message().to_string(),
    }
}

fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to String");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Header plus numeric rows; every row must have as many fields as the header.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => err(1, 1, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(1, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(err(
                line,
                record.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.parse::<f64>()
                    .map_err(|_| err(line, i + 1, format!("column `{}`: cannot parse {f:?} as a number", header[i])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn missing(path: &Path, name: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        column: 1,
        message: format!("missing column `{name}` in header"),
    }
}

pub fn save_trial(trial: &TrialMatrix, path: &Path) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(trial.names.iter().map(|n| format!("e_{n}")));
    header.push("q".into());
    let rows = (0..trial.len()).map(|i| {
        let mut r = Vec::with_capacity(trial.n_muscles() + 2);
        r.push(trial.times[i]);
        r.extend_from_slice(&trial.envelopes[i]);
        r.push(trial.angles[i]);
        r
    });
    write_table(path, &header, rows)
}

/// Loads a trial (without forces) and validates it.
pub fn load_trial(path: &Path) -> Result<TrialMatrix> {
    let (header, rows) = read_table(path)?;
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| missing(path, name));
    let t = col("t")?;
    let q = col("q")?;
    let env: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("e_")).collect();
    if env.is_empty() {
        return Err(missing(path, "e_<muscle>"));
    }
    if let Some(extra) = (0..header.len()).find(|i| *i != t && *i != q && !env.contains(i)) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: extra + 1,
            message: format!("unexpected column `{}`", header[extra]),
        });
    }
    let trial = TrialMatrix {
        names: env.iter().map(|&i| header[i][2..].to_string()).collect(),
        times: rows.iter().map(|r| r[t]).collect(),
        envelopes: rows.iter().map(|r| env.iter().map(|&i| r[i]).collect()).collect(),
        angles: rows.iter().map(|r| r[q]).collect(),
        forces: None,
    };
    trial.validate().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    Ok(trial)
}

/// Writes the force sidecar of `trial`.
pub fn save_forces(trial: &TrialMatrix, path: &Path) -> Result<()> {
    let forces = trial
        .forces
        .as_ref()
        .ok_or_else(|| Error::Config("trial has no force channels".into()))?;
    let mut header = vec!["t".to_string()];
    header.extend(trial.names.iter().map(|n| format!("F_{n}")));
    let rows = trial.times.iter().zip(forces).map(|(t, f)| {
        let mut r = vec![*t];
        r.extend_from_slice(f);
        r
    });
    write_table(path, &header, rows)
}

/// Reads a force sidecar and attaches it to `trial`. Columns are matched by
/// muscle name and time stamps must agree row by row.
pub fn load_forces(trial: &mut TrialMatrix, path: &Path) -> Result<()> {
    let (header, rows) = read_table(path)?;
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| missing(path, name));
    let t = col("t")?;
    let cols = trial
        .names
        .iter()
        .map(|n| col(&format!("F_{n}")))
        .collect::<Result<Vec<_>>>()?;
    if rows.len() != trial.len() {
        return Err(Error::Length(format!(
            "{}: {} force rows for a trial of {} samples",
            path.display(),
            rows.len(),
            trial.len()
        )));
    }
    for (i, (r, ts)) in rows.iter().zip(&trial.times).enumerate() {
        if r[t] != *ts {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                column: t + 1,
                message: format!("time {} does not match trial time {ts}", r[t]),
            });
        }
    }
    trial.forces = Some(rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect());
    Ok(())
}
