//! Trajectory CSV, metadata JSON, weight snapshots and the plot script.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::{DeviationReport, Trajectory};

use super::config::ResolvedExperiment;

pub const CSV_HEADER: [&str; 5] = [
    "iteration",
    "msd_rls_empirical_db",
    "msd_drls_empirical_db",
    "msd_drls_theory_db",
    "mean_err_norm_theory",
];

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_csv(traj: &Trajectory) -> String {
    let columns = [
        &traj.msd_rls_empirical_db,
        &traj.msd_drls_empirical_db,
        &traj.msd_drls_theory_db,
        &traj.mean_err_norm_theory,
    ];
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for i in 0..traj.iterations {
        write!(out, "{}", i + 1).unwrap();
        for col in columns {
            out.push(',');
            if let Some(v) = col.as_ref().and_then(|c| c.get(i)) {
                out.push_str(&fmt_value(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_csv(traj)).map_err(|e| Error::io(path, e))
}

/// Columns of a trajectory CSV; empty cells become `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvColumns {
    pub iteration: Vec<usize>,
    pub msd_rls_empirical_db: Vec<Option<f64>>,
    pub msd_drls_empirical_db: Vec<Option<f64>>,
    pub msd_drls_theory_db: Vec<Option<f64>>,
    pub mean_err_norm_theory: Vec<Option<f64>>,
}

pub fn parse_csv(text: &str) -> Result<CsvColumns> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty file".into()))?;
    if header.split(',').ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected header `{header}`")));
    }
    let mut cols = CsvColumns {
        iteration: Vec::new(),
        msd_rls_empirical_db: Vec::new(),
        msd_drls_empirical_db: Vec::new(),
        msd_drls_theory_db: Vec::new(),
        mean_err_norm_theory: Vec::new(),
    };
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != CSV_HEADER.len() {
            return Err(Error::Format(format!(
                "line {}: expected 5 cells",
                lineno + 2
            )));
        }
        let bad = |c: &str| Error::Format(format!("line {}: bad value `{c}`", lineno + 2));
        cols.iteration
            .push(cells[0].parse().map_err(|_| bad(cells[0]))?);
        let cell = |c: &str| -> Result<Option<f64>> {
            if c.is_empty() {
                Ok(None)
            } else {
                c.parse().map(Some).map_err(|_| bad(c))
            }
        };
        cols.msd_rls_empirical_db.push(cell(cells[1])?);
        cols.msd_drls_empirical_db.push(cell(cells[2])?);
        cols.msd_drls_theory_db.push(cell(cells[3])?);
        cols.mean_err_norm_theory.push(cell(cells[4])?);
    }
    Ok(cols)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvColumns> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn write_snapshots(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("iteration,node,tap,weight\n");
    for snap in &traj.snapshots {
        for (node, w) in snap.weights.iter().enumerate() {
            for (tap, v) in w.iter().enumerate() {
                writeln!(out, "{},{node},{tap},{}", snap.iteration, fmt_value(*v)).unwrap();
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn metadata_json(
    resolved: &ResolvedExperiment,
    traj: &Trajectory,
    report: Option<&DeviationReport>,
) -> serde_json::Value {
    let cfg = &resolved.config;
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "resolved_config": cfg,
        "replay_config": resolved.replay_config(),
        "seeds": {
            "master_seed": traj.master_seed,
            "topology_seed": cfg.network.topology_seed,
            "noise_seed": cfg.network.noise_seed,
            "ground_truth_seed": cfg.signal.ground_truth_seed,
        },
        "w_star": resolved.scenario.w_star.weights().as_slice(),
        "runs_requested": traj.runs_requested,
        "runs_used": traj.runs_used,
        "excluded_runs": traj.excluded_runs,
        "iterations": traj.iterations,
        "initial_msd_empirical_db": traj.initial_msd_empirical_db,
        "initial_msd_theory_db": traj.initial_msd_theory_db,
        "runtime_seconds": traj.wall_clock_seconds,
        "deviation_report": report,
    })
}

pub fn write_metadata(value: &serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).expect("metadata serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn plot_script(csv_name: &str, title: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Plot the MSD curves stored in {csv_name}."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
path = here / "{csv_name}"
cols = {{}}
with open(path) as fh:
    for row in csv.DictReader(fh):
        for key, value in row.items():
            cols.setdefault(key, []).append(float(value) if value else None)

n = cols["iteration"]
fig, ax = plt.subplots(figsize=(7, 4))
for key, label, style in [
    ("msd_rls_empirical_db", "RLS (empirical)", "-"),
    ("msd_drls_empirical_db", "DRLS (empirical)", "-"),
    ("msd_drls_theory_db", "DRLS (theory)", "--"),
]:
    values = cols.get(key, [])
    if values and all(v is not None for v in values):
        ax.plot(n, values, style, label=label, linewidth=1)
ax.set_xlabel("iteration")
ax.set_ylabel("network MSD (dB)")
ax.set_title("{title}")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
out = path.with_suffix(".png")
fig.savefig(out, dpi=150)
if "--show" in sys.argv:
    plt.show()
print(out)
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Trajectory {
        Trajectory {
            iterations: n,
            msd_rls_empirical_db: Some((0..n).map(|i| -(i as f64) / 3.0).collect()),
            msd_drls_empirical_db: Some((0..n).map(|i| (i as f64).sqrt() * -1.1).collect()),
            msd_drls_theory_db: Some(vec![f64::NEG_INFINITY; n]),
            mean_err_norm_theory: Some((0..n).map(|i| 0.995f64.powi(i as i32) / 7.0).collect()),
            ..Default::default()
        }
    }

    #[test]
    fn row_count_and_header() {
        let text = render_csv(&sample(2));
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn theory_only_leaves_empirical_empty() {
        let t = Trajectory {
            msd_rls_empirical_db: None,
            msd_drls_empirical_db: None,
            ..sample(3)
        };
        let cols = parse_csv(&render_csv(&t)).unwrap();
        assert!(cols.msd_rls_empirical_db.iter().all(Option::is_none));
        assert!(cols.msd_drls_empirical_db.iter().all(Option::is_none));
        assert!(cols.mean_err_norm_theory.iter().all(Option::is_some));
        assert!(render_csv(&t).lines().nth(1).unwrap().starts_with("1,,,"));
    }

    #[test]
    fn round_trip_full_precision() {
        let t = sample(50);
        let cols = parse_csv(&render_csv(&t)).unwrap();
        assert_eq!(cols.iteration, (1..=50).collect::<Vec<_>>());
        let back: Vec<f64> = cols
            .msd_drls_empirical_db
            .iter()
            .map(|v| v.unwrap())
            .collect();
        assert_eq!(&back, t.msd_drls_empirical_db.as_ref().unwrap());
        let back: Vec<f64> = cols
            .mean_err_norm_theory
            .iter()
            .map(|v| v.unwrap())
            .collect();
        assert_eq!(&back, t.mean_err_norm_theory.as_ref().unwrap());
        assert!(cols
            .msd_drls_theory_db
            .iter()
            .all(|v| *v == Some(f64::NEG_INFINITY)));
    }

    #[test]
    fn values_have_ten_significant_digits() {
        let row = render_csv(&sample(2)).lines().nth(2).unwrap().to_string();
        let cell = row.split(',').nth(1).unwrap();
        let mantissa = cell.split('e').next().unwrap().replace(['-', '.'], "");
        assert!(mantissa.len() >= 10, "{cell}");
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(parse_csv("a,b\n1,2\n").is_err());
    }
}
