//! CSV and JSON artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::Scenario;
use crate::run::{CliError, EnsembleRun, RunOutcome, SweepEntry};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// `engine, trajectory, time, event_flag, w_0..w_{d-1}, exp_0..exp_{K-1}`; the flag is 1 when
/// at least one hitting fell in the interval ending at that sample.
pub fn write_trajectories(path: &Path, scn: &Scenario, runs: &[EnsembleRun]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let d = scn.quantities.dim();
    let k = scn.quantities.len();
    let mut header = vec!["engine".to_string(), "trajectory".into(), "time".into(), "event_flag".into()];
    header.extend((0..d).map(|i| format!("w_{i}")));
    header.extend((0..k).map(|p| format!("exp_{p}")));
    w.write_record(&header).map_err(csv_err(path))?;
    let limit = scn.record.csv_trajectories.unwrap_or(usize::MAX);
    for run in runs {
        for (i, rec) in run.records.iter().take(limit).enumerate() {
            for j in 0..rec.sample_times.len() {
                let mut row = Vec::with_capacity(4 + d + k);
                row.push(run.engine.name().to_string());
                row.push(i.to_string());
                row.push(num(rec.sample_times[j]));
                row.push(if rec.event_counts[j] > 0 { "1".into() } else { "0".into() });
                row.extend(rec.born_weights[j].iter().map(|x| num(*x)));
                row.extend(rec.expectations[j].iter().map(|x| num(*x)));
                w.write_record(&row).map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// `trajectory, channel, time, a_0..a_{K-1}`; a channel that sharpens only some quantities
/// leaves the other cells empty.
pub fn write_events(path: &Path, scn: &Scenario, runs: &[EnsembleRun]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let k = scn.quantities.len();
    let mut header = vec!["trajectory".to_string(), "channel".into(), "time".into()];
    header.extend((0..k).map(|p| format!("a_{p}")));
    w.write_record(&header).map_err(csv_err(path))?;
    let channels = scn.hitting.as_ref().and_then(|h| h.channels.clone());
    for run in runs {
        for (i, rec) in run.records.iter().enumerate() {
            for e in &rec.events {
                let mut cells = vec![String::new(); k];
                let quantities: Vec<usize> = match &channels {
                    Some(ch) => ch[e.channel].quantities.clone(),
                    None => (0..k).collect(),
                };
                for (q, a) in quantities.iter().zip(&e.centre) {
                    cells[*q] = num(*a);
                }
                let mut row = vec![i.to_string(), e.channel.to_string(), num(e.time)];
                row.extend(cells);
                w.write_record(&row).map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Writes every artifact of a run into `dir`.
pub fn write_run(dir: &Path, scn: &Scenario, outcome: &RunOutcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_trajectories(&dir.join("trajectories.csv"), scn, &outcome.runs)?;
    write_events(&dir.join("events.csv"), scn, &outcome.runs)?;
    write_json(&dir.join("summary.json"), &outcome.summary)?;
    if let Some(c) = &outcome.comparison {
        write_json(&dir.join("compare.json"), c)?;
    }
    Ok(())
}

/// `input_order, mu, beta, deterministic_distance, monte_carlo_distance, monte_carlo_error`,
/// rows ascending in `mu`.
pub fn write_sweep(dir: &Path, rows: &[SweepEntry]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["input_order", "mu", "beta", "deterministic_distance", "monte_carlo_distance", "monte_carlo_error"])
        .map_err(csv_err(&path))?;
    for r in rows {
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        w.write_record([
            r.input_order.to_string(),
            num(r.mu),
            num(r.beta),
            num(r.deterministic_distance),
            opt(r.monte_carlo_distance),
            opt(r.monte_carlo_error),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}
