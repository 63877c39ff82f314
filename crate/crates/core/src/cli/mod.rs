//! Configuration, experiment execution and result files.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::{
    compare_theory_empirical, detect_periodicity, run_ensemble, DeviationReport, Trajectory,
};

pub use config::{parse_config, parse_config_str, ExperimentConfig, ResolvedExperiment};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const NUMERIC: i32 = 2;
    pub const ACCEPTANCE: i32 = 3;
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        exit::NUMERIC
    } else {
        exit::VALIDATION
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Compare theory and simulation against the configured tolerances.
    pub check_acceptance: bool,
    pub output_dir: Option<PathBuf>,
    pub prefix: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub trajectory: Trajectory,
    pub deviation: Option<DeviationReport>,
    /// Set when `check_acceptance` was requested and a tolerance was exceeded.
    pub acceptance_breach: Option<String>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.acceptance_breach.is_some() {
            exit::ACCEPTANCE
        } else {
            exit::SUCCESS
        }
    }
}

/// Periodicity of the curves at the profile period over the second half of
/// the run, when that half spans at least three periods.
fn periodicity_summary(resolved: &ResolvedExperiment, traj: &Trajectory) -> serde_json::Value {
    let period = resolved.scenario.profiles[0].period();
    let score = |curve: &Option<Vec<f64>>| {
        curve.as_ref().and_then(|c| {
            let half = &c[c.len() / 2..];
            (period > 1 && half.iter().all(|v| v.is_finite()))
                .then(|| detect_periodicity(half, period).ok())
                .flatten()
        })
    };
    json!({
        "period": period,
        "drls_theory": score(&traj.msd_drls_theory_db),
        "drls_empirical": score(&traj.msd_drls_empirical_db),
        "rls_empirical": score(&traj.msd_rls_empirical_db),
    })
}

pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let resolved = config.resolve()?;
    let out_cfg = &resolved.config.output;
    let dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&out_cfg.directory));
    let prefix = opts
        .prefix
        .clone()
        .unwrap_or_else(|| out_cfg.prefix.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let traj = run_ensemble(&resolved.scenario, &resolved.spec)?;
    let deviation =
        compare_theory_empirical(&traj, resolved.transient_window, resolved.steady_window).ok();

    let acceptance_breach = if opts.check_acceptance {
        match &deviation {
            None => {
                Some("acceptance check needs both the DRLS simulation and the theory".to_string())
            }
            Some(d) => {
                let mut breaches = Vec::new();
                if d.steady_state.mean_abs_db > out_cfg.steady_tolerance_db {
                    breaches.push(format!(
                        "steady-state deviation {:.3} dB > {} dB",
                        d.steady_state.mean_abs_db, out_cfg.steady_tolerance_db
                    ));
                }
                if d.transient.mean_abs_db > out_cfg.transient_tolerance_db {
                    breaches.push(format!(
                        "transient deviation {:.3} dB > {} dB",
                        d.transient.mean_abs_db, out_cfg.transient_tolerance_db
                    ));
                }
                (!breaches.is_empty()).then(|| breaches.join("; "))
            }
        }
    } else {
        None
    };

    let csv_path = dir.join(format!("{prefix}.csv"));
    output::emit_csv(&traj, &csv_path)?;
    let mut files = vec![csv_path];

    let mut meta = output::metadata_json(&resolved, &traj, deviation.as_ref());
    meta["periodicity"] = periodicity_summary(&resolved, &traj);
    meta["acceptance_breach"] = json!(acceptance_breach);
    let meta_path = dir.join(format!("{prefix}.json"));
    output::write_metadata(&meta, &meta_path)?;
    files.push(meta_path);

    let replay_path = dir.join(format!("{prefix}_replay.toml"));
    std::fs::write(&replay_path, resolved.replay_config().to_toml())
        .map_err(|e| Error::io(&replay_path, e))?;
    files.push(replay_path);

    if out_cfg.plot_script {
        let path = dir.join(format!("{prefix}_plot.py"));
        let script = output::plot_script(&format!("{prefix}.csv"), &prefix);
        std::fs::write(&path, script).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    if !traj.snapshots.is_empty() {
        let path = dir.join(format!("{prefix}_snapshots.csv"));
        output::write_snapshots(&traj, &path)?;
        files.push(path);
    }

    Ok(RunReport {
        files,
        trajectory: traj,
        deviation,
        acceptance_breach,
    })
}

/// Runs one experiment per value of `key`; outputs are labeled
/// `<prefix>_<leaf>_<value>`.
pub fn sweep(
    text: &str,
    key: &str,
    values: &[String],
    opts: &RunOptions,
) -> Result<Vec<(String, RunReport)>> {
    if values.is_empty() {
        return Err(Error::config(key, "sweep needs at least one value"));
    }
    let base = parse_config_str(text)?;
    let leaf = key.rsplit('.').next().unwrap_or(key);
    let mut reports = Vec::with_capacity(values.len());
    for raw in values {
        let patched = config::override_key(text, key, config::parse_value(raw))?;
        let cfg = parse_config_str(&patched)?;
        let base_prefix = opts
            .prefix
            .clone()
            .unwrap_or_else(|| base.output.prefix.clone());
        let label = format!("{base_prefix}_{leaf}_{raw}");
        let run_opts = RunOptions {
            prefix: Some(label.clone()),
            ..opts.clone()
        };
        reports.push((label, run_experiment(&cfg, &run_opts)?));
    }
    Ok(reports)
}

/// Validates a config file and returns its resolved form.
pub fn check(path: &Path) -> Result<ResolvedExperiment> {
    parse_config(path)?.resolve()
}
