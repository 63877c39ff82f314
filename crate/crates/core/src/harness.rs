//! Monte Carlo ensembles, empirical MSD and theory-vs-simulation comparison.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{DrlsNetwork, RlsNetwork};
use crate::scenario::Scenario;
use crate::signals::{stream, NodeSource};
use crate::theory::{theoretical_trajectory, to_db, TheoryOptions};

const INPUT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
/// Runs simulated concurrently before their results are folded, in order,
/// into the running sums.
const BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rls,
    Drls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub runs: usize,
    pub iterations: usize,
    pub master_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub theory: bool,
    pub theory_options: TheoryOptions,
    /// Also accumulate the ensemble-mean DRLS weight error vector.
    pub track_mean_error: bool,
    /// Record DRLS weights of run 0 every this many iterations.
    pub snapshot_every: Option<usize>,
}

impl EnsembleSpec {
    pub fn new(runs: usize, iterations: usize, master_seed: u64) -> Self {
        EnsembleSpec {
            runs,
            iterations,
            master_seed,
            algorithms: vec![Algorithm::Rls, Algorithm::Drls],
            theory: true,
            theory_options: TheoryOptions::default(),
            track_mean_error: false,
            snapshot_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one run and one iteration".into(),
            ));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::InvalidArgument(
                "snapshot cadence must be positive".into(),
            ));
        }
        Ok(())
    }

    fn runs_drls(&self) -> bool {
        self.algorithms.contains(&Algorithm::Drls)
    }

    fn runs_rls(&self) -> bool {
        self.algorithms.contains(&Algorithm::Rls)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRun {
    pub run: usize,
    pub iteration: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub iteration: usize,
    /// One weight vector per node.
    pub weights: Vec<Vec<f64>>,
}

/// Per-iteration curves. Entry `i` of every array belongs to iteration `i + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub iterations: usize,
    pub msd_rls_empirical_db: Option<Vec<f64>>,
    pub msd_drls_empirical_db: Option<Vec<f64>>,
    pub msd_drls_theory_db: Option<Vec<f64>>,
    pub mean_err_norm_theory: Option<Vec<f64>>,
    /// `‖mean_r w̃_n^{(r)}‖` over the stacked network vector.
    pub mean_err_norm_empirical: Option<Vec<f64>>,
    /// Monte Carlo standard error of that norm, `sqrt(Σ_i var_i / R)`.
    pub mean_err_noise_floor: Option<Vec<f64>>,
    pub initial_msd_empirical_db: Option<f64>,
    pub initial_msd_theory_db: Option<f64>,
    pub master_seed: u64,
    pub runs_requested: usize,
    pub runs_used: usize,
    pub excluded_runs: Vec<ExcludedRun>,
    pub snapshots: Vec<WeightSnapshot>,
    pub wall_clock_seconds: f64,
}

struct RunOutput {
    sq_dev_rls: Vec<f64>,
    sq_dev_drls: Vec<f64>,
    /// Flattened `N × KL` DRLS weight errors when tracking the mean.
    errors: Vec<f64>,
    snapshots: Vec<WeightSnapshot>,
}

fn simulate_run(
    scenario: &Scenario,
    spec: &EnsembleSpec,
    run: usize,
) -> std::result::Result<RunOutput, ExcludedRun> {
    let k = scenario.node_count();
    let l = scenario.taps();
    let n_iter = spec.iterations;
    let w_star = scenario.w_star.weights();
    let fail = |iteration: usize, e: Error| ExcludedRun {
        run,
        iteration,
        reason: e.to_string(),
    };

    let mut sources: Vec<NodeSource> = (0..k)
        .map(|node| {
            let path = |tag| [tag, run as u64, node as u64];
            NodeSource::new(
                &scenario.profiles[node],
                &scenario.process,
                scenario.noise.variance(node),
                stream(spec.master_seed, &path(INPUT_STREAM)),
                stream(spec.master_seed, &path(NOISE_STREAM)),
            )
        })
        .collect();
    let mut drls = spec
        .runs_drls()
        .then(|| DrlsNetwork::new(scenario.combiner.clone(), l, scenario.rls))
        .transpose()
        .map_err(|e| fail(0, e))?;
    let mut rls = spec
        .runs_rls()
        .then(|| RlsNetwork::new(k, l, scenario.rls))
        .transpose()
        .map_err(|e| fail(0, e))?;

    let mut out = RunOutput {
        sq_dev_rls: Vec::with_capacity(if rls.is_some() { n_iter } else { 0 }),
        sq_dev_drls: Vec::with_capacity(if drls.is_some() { n_iter } else { 0 }),
        errors: Vec::new(),
        snapshots: Vec::new(),
    };
    let track = spec.track_mean_error && drls.is_some();
    if track {
        out.errors.reserve(n_iter * k * l);
    }

    let mut samples = Vec::with_capacity(k);
    for n in 1..=n_iter {
        samples.clear();
        for (node, src) in sources.iter_mut().enumerate() {
            let pair = src
                .next_pair(
                    &scenario.profiles[node],
                    &scenario.process,
                    &scenario.w_star,
                )
                .map_err(|e| fail(n, e))?;
            samples.push(pair);
        }
        if let Some(net) = drls.as_mut() {
            net.drls_iteration(&samples).map_err(|e| fail(n, e))?;
            out.sq_dev_drls.push(net.squared_deviation(w_star));
            if track {
                for node in net.nodes() {
                    out.errors
                        .extend(node.weights().iter().zip(w_star.iter()).map(|(w, s)| w - s));
                }
            }
            if run == 0 && spec.snapshot_every.is_some_and(|m| n % m == 0) {
                out.snapshots.push(WeightSnapshot {
                    iteration: n,
                    weights: net
                        .nodes()
                        .iter()
                        .map(|s| s.weights().as_slice().to_vec())
                        .collect(),
                });
            }
        }
        if let Some(net) = rls.as_mut() {
            net.iteration(&samples).map_err(|e| fail(n, e))?;
            out.sq_dev_rls.push(net.squared_deviation(w_star));
        }
        let bad = out
            .sq_dev_drls
            .last()
            .into_iter()
            .chain(out.sq_dev_rls.last());
        if let Some(v) = bad.into_iter().find(|v| !v.is_finite()) {
            return Err(fail(
                n,
                Error::NumericBlowup(format!("squared deviation {v}")),
            ));
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Accumulator {
    rls: Vec<f64>,
    drls: Vec<f64>,
    err_sum: Vec<f64>,
    err_sq_sum: Vec<f64>,
    used: usize,
}

impl Accumulator {
    fn add(&mut self, run: &RunOutput) {
        fn add_into(dst: &mut Vec<f64>, src: &[f64]) {
            if dst.is_empty() {
                dst.resize(src.len(), 0.0);
            }
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
        add_into(&mut self.rls, &run.sq_dev_rls);
        add_into(&mut self.drls, &run.sq_dev_drls);
        add_into(&mut self.err_sum, &run.errors);
        if self.err_sq_sum.is_empty() {
            self.err_sq_sum.resize(run.errors.len(), 0.0);
        }
        self.err_sq_sum
            .iter_mut()
            .zip(&run.errors)
            .for_each(|(d, s)| *d += s * s);
        self.used += 1;
    }
}

/// Simulates `spec.runs` independent realizations and averages them.
///
/// Run `r`, node `k` draws its regressors and its observation noise from two
/// streams derived from `(master_seed, r, k)`. Both algorithms see the same
/// data within a run. Runs that blow up are excluded and listed; more than 1%
/// excluded is an error.
pub fn run_ensemble(scenario: &Scenario, spec: &EnsembleSpec) -> Result<Trajectory> {
    spec.validate()?;
    let started = Instant::now();
    let k = scenario.node_count();
    let kl = k * scenario.taps();
    let n_iter = spec.iterations;

    let mut acc = Accumulator::default();
    let mut excluded = Vec::new();
    let mut snapshots = Vec::new();
    let simulate = spec.runs_drls() || spec.runs_rls();
    if simulate {
        let runs: Vec<usize> = (0..spec.runs).collect();
        for chunk in runs.chunks(BATCH) {
            let results: Vec<_> = chunk
                .par_iter()
                .map(|&r| simulate_run(scenario, spec, r))
                .collect();
            for result in results {
                match result {
                    Ok(mut out) => {
                        acc.add(&out);
                        if snapshots.is_empty() {
                            snapshots = std::mem::take(&mut out.snapshots);
                        }
                    }
                    Err(ex) => {
                        log::warn!(
                            "run {} excluded at iteration {}: {}",
                            ex.run,
                            ex.iteration,
                            ex.reason
                        );
                        excluded.push(ex);
                    }
                }
            }
        }
        if excluded.len() * 100 > spec.runs {
            return Err(Error::TooManyExcluded {
                excluded: excluded.len(),
                runs: spec.runs,
            });
        }
    }

    let mut traj = Trajectory {
        iterations: n_iter,
        master_seed: spec.master_seed,
        runs_requested: spec.runs,
        runs_used: acc.used,
        excluded_runs: excluded,
        snapshots,
        ..Default::default()
    };
    if simulate && acc.used > 0 {
        let norm = 1.0 / (acc.used * k) as f64;
        let curve = |sums: &[f64]| sums.iter().map(|s| to_db(s * norm)).collect::<Vec<_>>();
        if spec.runs_rls() {
            traj.msd_rls_empirical_db = Some(curve(&acc.rls));
        }
        if spec.runs_drls() {
            traj.msd_drls_empirical_db = Some(curve(&acc.drls));
        }
        // w_0 = 0, so ‖w̃_0‖² = K·‖w*‖² in every run
        traj.initial_msd_empirical_db = Some(to_db(scenario.w_star.weights().norm_squared()));
        if spec.track_mean_error && spec.runs_drls() {
            let r = acc.used as f64;
            let mut norms = Vec::with_capacity(n_iter);
            let mut floors = Vec::with_capacity(n_iter);
            for n in 0..n_iter {
                let sums = &acc.err_sum[n * kl..(n + 1) * kl];
                let sq = &acc.err_sq_sum[n * kl..(n + 1) * kl];
                let mean = DVector::from_iterator(kl, sums.iter().map(|s| s / r));
                let var_sum: f64 = sums
                    .iter()
                    .zip(sq)
                    .map(|(s, q)| {
                        let m = s / r;
                        ((q / r - m * m) * r / (r - 1.0).max(1.0)).max(0.0)
                    })
                    .sum();
                norms.push(mean.norm());
                floors.push((var_sum / r).sqrt());
            }
            traj.mean_err_norm_empirical = Some(norms);
            traj.mean_err_noise_floor = Some(floors);
        }
    }
    if spec.theory {
        let theory = theoretical_trajectory(scenario, n_iter, spec.theory_options)?;
        traj.initial_msd_theory_db = Some(theory.initial_msd_db);
        traj.msd_drls_theory_db = Some(theory.msd_db);
        traj.mean_err_norm_theory = Some(theory.mean_err_norm);
    }
    traj.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(traj)
}

/// Inclusive, 1-based range of iteration numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationWindow {
    pub first: usize,
    pub last: usize,
}

impl IterationWindow {
    pub fn new(first: usize, last: usize) -> Self {
        IterationWindow { first, last }
    }

    /// The final `len` iterations of an `iterations`-long curve.
    pub fn tail(iterations: usize, len: usize) -> Self {
        IterationWindow {
            first: iterations.saturating_sub(len) + 1,
            last: iterations,
        }
    }

    pub fn slice<'a>(&self, curve: &'a [f64]) -> Result<&'a [f64]> {
        if self.first == 0 || self.first > self.last || self.last > curve.len() {
            return Err(Error::InvalidArgument(format!(
                "window {}..={} does not fit a curve of {} iterations",
                self.first,
                self.last,
                curve.len()
            )));
        }
        Ok(&curve[self.first - 1..self.last])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowDeviation {
    pub window: IterationWindow,
    pub max_abs_db: f64,
    pub mean_abs_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub transient: WindowDeviation,
    pub steady_state: WindowDeviation,
}

pub fn window_deviation(a: &[f64], b: &[f64], window: IterationWindow) -> Result<WindowDeviation> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (a, b) = (window.slice(a)?, window.slice(b)?);
    let mut max_abs = 0.0f64;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        max_abs = max_abs.max(d);
        sum += d;
    }
    Ok(WindowDeviation {
        window,
        max_abs_db: max_abs,
        mean_abs_db: sum / a.len() as f64,
    })
}

/// Deviation between the theoretical and empirical DRLS curves.
pub fn compare_theory_empirical(
    traj: &Trajectory,
    transient: IterationWindow,
    steady_state: IterationWindow,
) -> Result<DeviationReport> {
    let (Some(theory), Some(empirical)) = (&traj.msd_drls_theory_db, &traj.msd_drls_empirical_db)
    else {
        return Err(Error::InvalidArgument(
            "trajectory lacks a theoretical or empirical DRLS curve".into(),
        ));
    };
    Ok(DeviationReport {
        transient: window_deviation(theory, empirical, transient)?,
        steady_state: window_deviation(theory, empirical, steady_state)?,
    })
}

/// Fraction of the fluctuation energy of `curve` that sits at frequency `1/T`
/// and its harmonics.
///
/// The last `⌊len/T⌋·T` samples are used so that every harmonic falls on an
/// exact DFT bin. Equivalently, this is the variance of the period-`T`
/// synchronous average divided by the total variance. A flat curve scores 0.
pub fn detect_periodicity(curve: &[f64], period: usize) -> Result<f64> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    if curve.len() < 3 * period {
        return Err(Error::WindowTooShort {
            required: 3 * period,
            available: curve.len(),
        });
    }
    let len = curve.len() / period * period;
    let window = &curve[curve.len() - len..];
    let mean = window.iter().sum::<f64>() / len as f64;
    let mut buf: Vec<Complex<f64>> = window
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let stride = len / period;
    let mut total = 0.0;
    let mut periodic = 0.0;
    for (bin, c) in buf.iter().enumerate().skip(1) {
        let e = c.norm_sqr();
        total += e;
        if bin % stride == 0 {
            periodic += e;
        }
    }
    if total.is_nan() || total <= 1e-300 * len as f64 {
        return Ok(0.0);
    }
    Ok(periodic / total)
}
