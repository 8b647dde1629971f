//! Files written for a run: one CSV per trajectory plus JSON side files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use optrack_core::TrajectorySolution;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::experiment::ExperimentOutput;
use crate::sweep::SweepRow;

/// CSV with header `t,x1..xn[,lam1..lamn],u1..up`, one row per grid point.
pub fn trajectory_csv(traj: &TrajectorySolution) -> String {
    let n = traj.x.first().map_or(0, |x| x.len());
    let p = traj.u.first().map_or(0, |u| u.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    if traj.lambda.is_some() {
        header.extend((1..=n).map(|i| format!("lam{i}")));
    }
    header.extend((1..=p).map(|i| format!("u{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for (k, t) in traj.grid.iter().enumerate() {
        let _ = write!(out, "{t:.16e}");
        let lam = traj.lambda.as_ref().map(|l| l[k].iter()).into_iter().flatten();
        for v in traj.x[k].iter().chain(lam).chain(traj.u[k].iter()) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    write_file(path, &(text + "\n"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Write every artifact of `output` into `dir`; returns the paths written.
pub fn emit_outputs(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for a in &output.artifacts {
        let path = dir.join(format!("{}.csv", a.name));
        write_file(&path, &trajectory_csv(&a.trajectory))?;
        written.push(path);
        if !a.trajectory.kicks.is_empty() {
            let path = dir.join("kicks.json");
            write_json(&path, &a.trajectory.kicks)?;
            written.push(path);
        }
    }
    let path = dir.join("metrics.json");
    write_json(&path, &output.metrics)?;
    written.push(path);
    let path = dir.join("report.json");
    write_json(&path, &output.report)?;
    written.push(path);
    Ok(written)
}

/// `sweep.csv` with one row per `eps`; a missing layer width is left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("epsilon,layer_width,u_peak,interior_deviation,cost\n");
    for r in rows {
        let width = r.layer_width.map(|w| format!("{w:.16e}")).unwrap_or_default();
        let _ = writeln!(out, "{:.16e},{width},{:.16e},{:.16e},{:.16e}", r.epsilon, r.u_peak, r.interior_deviation, r.cost);
    }
    out
}

pub fn emit_sweep(rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let csv = dir.join("sweep.csv");
    write_file(&csv, &sweep_csv(rows))?;
    let json = dir.join("sweep.json");
    write_json(&json, rows)?;
    Ok(vec![csv, json])
}

pub fn emit_feedback(traj: &TrajectorySolution, sample_times: &[f64], dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let csv = dir.join("closed_loop.csv");
    write_file(&csv, &trajectory_csv(traj))?;
    let json = dir.join("samples.json");
    write_json(&json, sample_times)?;
    Ok(vec![csv, json])
}
