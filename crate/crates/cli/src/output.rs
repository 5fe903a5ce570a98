//! CSV and JSON writers. Every file is written atomically.

use crate::CliError;
use serde::Serialize;
use std::path::Path;
use workmin::dynamics::Trajectory;
use workmin::optimize::SurveyRow;
use workmin::protocol::Protocol;
use workmin::thermo::write_atomic;

/// Version of every CSV and JSON layout written here.
pub const SCHEMA_VERSION: u32 = 1;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    atomic(path, text.as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    atomic(path, text.as_bytes())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    atomic(path, &bytes)
}

#[derive(Serialize)]
struct StateRow {
    t: f64,
    lambda: f64,
    rho00: f64,
    rho11: f64,
    rho01_re: f64,
    rho01_im: f64,
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let rows = traj.times.iter().zip(&traj.lambdas).zip(&traj.states).map(|((&t, &lambda), rho)| StateRow {
        t,
        lambda,
        rho00: rho[(0, 0)].re,
        rho11: rho[(1, 1)].re,
        rho01_re: rho[(0, 1)].re,
        rho01_im: rho[(0, 1)].im,
    });
    write_rows(path, rows)
}

#[derive(Serialize)]
struct ControlRow {
    t: f64,
    lambda: f64,
}

/// Protocol sampled on the grid of step `dt`, endpoints included.
pub fn write_protocol(path: &Path, protocol: &Protocol, dt: f64) -> Result<(), CliError> {
    let values = protocol.sample_on_grid(dt)?;
    let n = values.len().saturating_sub(1).max(1);
    let tau = protocol.window.tau;
    write_rows(path, values.iter().enumerate().map(|(k, &lambda)| ControlRow { t: tau * k as f64 / n as f64, lambda }))
}

/// Protocol given directly as node values.
pub fn write_nodes(path: &Path, times: &[f64], lambda: &[f64]) -> Result<(), CliError> {
    write_rows(path, times.iter().zip(lambda).map(|(&t, &lambda)| ControlRow { t, lambda }))
}

#[derive(Serialize)]
struct SweepLine<'a> {
    schema_version: u32,
    beta: f64,
    gamma: f64,
    xi: f64,
    tau: f64,
    ansatz: &'a str,
    work: f64,
    delta_f: f64,
    excess: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    descriptor: &'a str,
    error: &'a str,
}

pub fn write_sweep(path: &Path, rows: &[SurveyRow]) -> Result<(), CliError> {
    write_rows(
        path,
        rows.iter().map(|r| SweepLine {
            schema_version: SCHEMA_VERSION,
            beta: r.beta,
            gamma: r.gamma,
            xi: r.xi,
            tau: r.tau,
            ansatz: &r.ansatz,
            work: r.work,
            delta_f: r.delta_f,
            excess: r.excess,
            iterations: r.iterations,
            evaluations: r.evaluations,
            converged: r.converged,
            descriptor: &r.descriptor,
            error: r.error.as_deref().unwrap_or(""),
        }),
    )
}

/// Generic table of named numeric columns.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    atomic(path, &bytes)
}
