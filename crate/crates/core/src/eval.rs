//! Metrics, comparison tables and plot-ready report files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::TrialMatrix;
use crate::error::{Error, Result};
use crate::neural::{Masks, Network};
use crate::train::EpochRecord;

/// Name of the joint-angle channel in tables.
pub const ANGLE: &str = "Angle";

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Length(format!("{} predictions for {} samples", yhat.len(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::Length("empty series".into()));
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// Coefficient of determination; `None` when the ground truth is constant.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<Option<f64>> {
    check_lengths(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(None);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(1.0 - ss_res / ss_tot))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub channel: String,
    pub rmse: f64,
    /// `None` is reported as N/A.
    pub r2: Option<f64>,
}

impl ChannelMetrics {
    pub fn new(channel: impl Into<String>, y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(ChannelMetrics {
            channel: channel.into(),
            rmse: rmse(y, yhat)?,
            r2: r_squared(y, yhat)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub metrics: Vec<ChannelMetrics>,
}

impl ComparisonRow {
    pub fn get(&self, channel: &str) -> Option<&ChannelMetrics> {
        self.metrics.iter().find(|m| m.channel == channel)
    }

    pub fn angle(&self) -> Option<&ChannelMetrics> {
        self.get(ANGLE)
    }
}

/// Per-method, per-channel metrics; every row covers the same channels in
/// the same order (muscle forces first, then the angle).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub channels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ComparisonRow) -> Result<()> {
        let channels: Vec<String> = row.metrics.iter().map(|m| m.channel.clone()).collect();
        if self.rows.is_empty() && self.channels.is_empty() {
            self.channels = channels;
        } else if channels != self.channels {
            return Err(Error::Config(format!(
                "method `{}` has channels {channels:?}, table has {:?}",
                row.method, self.channels
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Long format: `method,channel,rmse,r2` with `NA` for undefined R².
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        record(&mut w, path, ["method", "channel", "rmse", "r2"])?;
        for row in &self.rows {
            for m in &row.metrics {
                let r2 = m.r2.map_or("NA".to_string(), |v| v.to_string());
                record(&mut w, path, [row.method.as_str(), &m.channel, &m.rmse.to_string(), &r2])?;
            }
        }
        finish(w, path)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != ["method", "channel", "rmse", "r2"] {
            return Err(parse(path, 1, 1, format!("unexpected header {:?}", header)));
        }
        let mut table = ComparisonTable::new();
        let mut current: Option<ComparisonRow> = None;
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| parse(path, line, i + 1, format!("cannot parse {:?} as a number", &rec[i])))
            };
            let metrics = ChannelMetrics {
                channel: rec[1].to_string(),
                rmse: num(2)?,
                r2: if &rec[3] == "NA" { None } else { Some(num(3)?) },
            };
            match current.as_mut() {
                Some(row) if row.method == rec[0] => row.metrics.push(metrics),
                _ => {
                    if let Some(row) = current.take() {
                        table.push(row)?;
                    }
                    current = Some(ComparisonRow {
                        method: rec[0].to_string(),
                        metrics: vec![metrics],
                    });
                }
            }
        }
        if let Some(row) = current {
            table.push(row)?;
        }
        Ok(table)
    }

    /// Fixed-width text rendering with one line per method.
    pub fn render(&self) -> String {
        let mut out = format!("{:<12}", "method");
        for c in &self.channels {
            out += &format!(" {:>18}", format!("{c} RMSE/R2"));
        }
        out.push('\n');
        for row in &self.rows {
            out += &format!("{:<12}", row.method);
            for m in &row.metrics {
                let r2 = m.r2.map_or("N/A".to_string(), |v| format!("{v:.4}"));
                out += &format!(" {:>18}", format!("{:.4}/{r2}", m.rmse));
            }
            out.push('\n');
        }
        out
    }
}

/// Eval-mode network outputs over a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub times: Vec<f64>,
    pub angles: Vec<f64>,
    /// One row per sample.
    pub forces: Vec<Vec<f64>>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Header `t,q,F_<muscle>...`.
    pub fn save(&self, names: &[String], path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        let mut header = vec!["t".to_string(), "q".to_string()];
        header.extend(names.iter().map(|n| format!("F_{n}")));
        record(&mut w, path, &header)?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i].to_string(), self.angles[i].to_string()];
            row.extend(self.forces[i].iter().map(f64::to_string));
            record(&mut w, path, &row)?;
        }
        finish(w, path)
    }

    /// Reads predictions produced by another tool; force columns are matched
    /// to `names`.
    pub fn load(names: &[String], path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse(path, 1, 1, format!("missing column `{name}` in header")))
        };
        let t = col("t")?;
        let q = col("q")?;
        let f = names.iter().map(|n| col(&format!("F_{n}"))).collect::<Result<Vec<_>>>()?;
        let mut out = Predictions {
            times: Vec::new(),
            angles: Vec::new(),
            forces: Vec::new(),
        };
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| parse(path, line, i + 1, format!("cannot parse {:?} as a number", &rec[i])))
            };
            out.times.push(num(t)?);
            out.angles.push(num(q)?);
            out.forces.push(f.iter().map(|&i| num(i)).collect::<Result<_>>()?);
        }
        Ok(out)
    }
}

pub fn predict(net: &Network, trial: &TrialMatrix) -> Predictions {
    let masks = Masks::identity();
    let mut out = Predictions {
        times: trial.times.clone(),
        angles: Vec::with_capacity(trial.len()),
        forces: Vec::with_capacity(trial.len()),
    };
    for i in 0..trial.len() {
        let o = net.forward_pass(trial.times[i], &trial.envelopes[i], None, &masks, false).output;
        out.angles.push(o.q);
        out.forces.push(o.forces);
    }
    out
}

/// Metrics of `pred` against `trial`: one force channel per muscle when the
/// trial carries ground-truth forces, then the angle.
pub fn score(method: &str, trial: &TrialMatrix, pred: &Predictions) -> Result<ComparisonRow> {
    if pred.len() != trial.len() {
        return Err(Error::Length(format!(
            "{} predictions for a trial of {} samples",
            pred.len(),
            trial.len()
        )));
    }
    let mut metrics = Vec::with_capacity(trial.n_muscles() + 1);
    if let Some(forces) = &trial.forces {
        for (n, name) in trial.names.iter().enumerate() {
            let y: Vec<f64> = forces.iter().map(|r| r[n]).collect();
            let yhat: Vec<f64> = pred.forces.iter().map(|r| r[n]).collect();
            metrics.push(ChannelMetrics::new(name.clone(), &y, &yhat)?);
        }
    }
    metrics.push(ChannelMetrics::new(ANGLE, &trial.angles, &pred.angles)?);
    Ok(ComparisonRow {
        method: method.to_string(),
        metrics,
    })
}

pub fn evaluate(method: &str, net: &Network, trial: &TrialMatrix) -> Result<ComparisonRow> {
    score(method, trial, &predict(net, trial))
}

/// Scores a trained network on a trial recorded at a different movement
/// speed from its training data.
pub fn run_intrasession(method: &str, net: &Network, trial: &TrialMatrix) -> Result<ComparisonRow> {
    evaluate(method, net, trial)
}

/// Pass/fail floors and ceilings applied to every row of a table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub angle_r2: Option<f64>,
    pub force_r2: Option<f64>,
    pub angle_rmse: Option<f64>,
    pub force_rmse: Option<f64>,
}

impl Thresholds {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| crate::data::io::parse_error(path, &text, e))
    }

    /// Human-readable violations; empty when every check passes. An
    /// undefined R² fails any R² floor.
    pub fn violations(&self, table: &ComparisonTable) -> Vec<String> {
        let mut out = Vec::new();
        for row in &table.rows {
            for m in &row.metrics {
                let angle = m.channel == ANGLE;
                let (r2_min, rmse_max) = if angle {
                    (self.angle_r2, self.angle_rmse)
                } else {
                    (self.force_r2, self.force_rmse)
                };
                if let Some(min) = r2_min {
                    match m.r2 {
                        Some(r2) if r2 >= min => {}
                        Some(r2) => out.push(format!("{} {}: R2 {r2:.4} < {min}", row.method, m.channel)),
                        None => out.push(format!("{} {}: R2 N/A", row.method, m.channel)),
                    }
                }
                if let Some(max) = rmse_max {
                    if !(m.rmse <= max) {
                        out.push(format!("{} {}: RMSE {:.4} > {max}", row.method, m.channel, m.rmse));
                    }
                }
            }
        }
        out
    }
}

/// Per-epoch records of one training run.
#[derive(Debug, Clone, Copy)]
pub struct Trace<'a> {
    pub method: &'a str,
    pub labels: &'a [String],
    pub epochs: &'a [EpochRecord],
}

/// A trial with one method's predictions, for prediction-overlay plots.
#[derive(Debug, Clone, Copy)]
pub struct Overlay<'a> {
    pub method: &'a str,
    pub trial: &'a TrialMatrix,
    pub predictions: &'a Predictions,
}

/// Writes plot-ready files under `out_dir` and returns their paths:
///
/// - `comparison.csv`: `method,channel,rmse,r2`
/// - `rmse_bars.csv`: `channel,<method>...`, one RMSE column per method
/// - `param_traces.csv`: `method,epoch,parameter,value`
/// - `loss_traces.csv`: `method,epoch,l_q,l_r1,l_r2,l_total,val_l_q`
/// - `overlay_<method>.csv`: `t,q,q_hat,F_<m>,F_hat_<m>...`, one row per sample
pub fn emit_report(table: &ComparisonTable, traces: &[Trace], overlays: &[Overlay], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let path = out_dir.join("comparison.csv");
    table.save_csv(&path)?;
    written.push(path);

    let path = out_dir.join("rmse_bars.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["channel".to_string()];
    header.extend(table.rows.iter().map(|r| r.method.clone()));
    record(&mut w, &path, &header)?;
    for (c, channel) in table.channels.iter().enumerate() {
        let mut row = vec![channel.clone()];
        row.extend(table.rows.iter().map(|r| r.metrics[c].rmse.to_string()));
        record(&mut w, &path, &row)?;
    }
    finish(w, &path)?;
    written.push(path);

    let path = out_dir.join("param_traces.csv");
    let mut w = writer(&path)?;
    record(&mut w, &path, ["method", "epoch", "parameter", "value"])?;
    for tr in traces {
        for rec in tr.epochs {
            for (label, v) in tr.labels.iter().zip(&rec.params) {
                record(&mut w, &path, [tr.method, &rec.epoch.to_string(), label, &v.to_string()])?;
            }
        }
    }
    finish(w, &path)?;
    written.push(path);

    let path = out_dir.join("loss_traces.csv");
    let mut w = writer(&path)?;
    record(&mut w, &path, ["method", "epoch", "l_q", "l_r1", "l_r2", "l_total", "val_l_q"])?;
    for tr in traces {
        for r in tr.epochs {
            let vals = [r.l_q, r.l_r1, r.l_r2, r.l_total, r.val_l_q].map(|v| v.to_string());
            let mut row = vec![tr.method.to_string(), r.epoch.to_string()];
            row.extend(vals);
            record(&mut w, &path, &row)?;
        }
    }
    finish(w, &path)?;
    written.push(path);

    for ov in overlays {
        let path = out_dir.join(format!("overlay_{}.csv", ov.method));
        if ov.predictions.len() != ov.trial.len() {
            return Err(Error::Length(format!(
                "{}: {} predictions for a trial of {} samples",
                path.display(),
                ov.predictions.len(),
                ov.trial.len()
            )));
        }
        let mut w = writer(&path)?;
        let mut header = vec!["t".to_string(), "q".to_string(), "q_hat".to_string()];
        for n in &ov.trial.names {
            header.push(format!("F_{n}"));
            header.push(format!("F_hat_{n}"));
        }
        record(&mut w, &path, &header)?;
        for i in 0..ov.trial.len() {
            let mut row = vec![
                ov.trial.times[i].to_string(),
                ov.trial.angles[i].to_string(),
                ov.predictions.angles[i].to_string(),
            ];
            for n in 0..ov.trial.n_muscles() {
                let truth = ov.trial.forces.as_ref().map_or(f64::NAN, |f| f[i][n]);
                row.push(truth.to_string());
                row.push(ov.predictions.forces[i][n].to_string());
            }
            record(&mut w, &path, &row)?;
        }
        finish(w, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn record<I, T>(w: &mut csv::Writer<fs::File>, path: &Path, fields: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| csv_error(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse(path: &Path, line: usize, column: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse(path, line, 0, format!("{other:?}")),
    }
}
