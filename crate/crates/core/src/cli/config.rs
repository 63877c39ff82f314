//! Experiment configuration file.
//!
//! The file is TOML with five or six sections (`network`, `signal`,
//! `algorithm`, `theory`, `ensemble`, `output`). Every key has a documented
//! default, unknown keys are rejected, and the fully resolved configuration
//! is echoed into every output.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{RlsParams, DEFAULT_BLOWUP_BOUND};
use crate::harness::{Algorithm, EnsembleSpec, IterationWindow};
use crate::network::{
    build_combination_matrix, build_topology, CombinationMatrix, CombinationRule, NoiseProfile,
    TopologyKind,
};
use crate::scenario::{PhiInit, Scenario};
use crate::signals::{make_ground_truth, ColoredProcessParams, CyclostationaryProfile};
use crate::theory::TheoryOptions;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub network: NetworkSection,
    pub signal: SignalSection,
    pub algorithm: AlgorithmSection,
    pub theory: TheorySection,
    pub ensemble: EnsembleSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    Ring,
    RandomGeometric,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationName {
    Uniform,
    Metropolis,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub nodes: usize,
    pub topology: TopologyName,
    /// Connectivity radius in the unit square (random_geometric).
    pub radius: f64,
    pub topology_seed: u64,
    /// Undirected edges (explicit).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    pub combination: CombinationName,
    /// Rows of `A` (explicit combination).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combination_rows: Option<Vec<Vec<f64>>>,
    /// Overrides `noise_seed`/`noise_range` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_variances: Option<Vec<f64>>,
    pub noise_seed: u64,
    pub noise_range: [f64; 2],
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            nodes: 20,
            topology: TopologyName::RandomGeometric,
            radius: 0.3,
            topology_seed: 8,
            edges: None,
            combination: CombinationName::Uniform,
            combination_rows: None,
            noise_variances: None,
            noise_seed: 11,
            noise_range: [0.01, 0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Constant,
    Pulsed,
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    pub kind: ProfileName,
    pub period: usize,
    pub duty_cycle: f64,
    pub low_amplitude: f64,
    pub high_amplitude: f64,
    pub phase_offset: usize,
    /// Level of the constant profile.
    pub level: f64,
    pub mean_level: f64,
    pub modulation_depth: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection {
            kind: ProfileName::Pulsed,
            period: 512,
            duty_cycle: 0.5,
            low_amplitude: 2e-3,
            high_amplitude: 2.0,
            phase_offset: 0,
            level: 1.0,
            mean_level: 1.0,
            modulation_depth: 0.5,
        }
    }
}

impl ProfileSection {
    fn build(&self, field: &str) -> Result<CyclostationaryProfile> {
        let built = match self.kind {
            ProfileName::Constant => CyclostationaryProfile::constant(self.level),
            ProfileName::Pulsed => CyclostationaryProfile::pulsed(
                self.period,
                self.duty_cycle,
                self.low_amplitude,
                self.high_amplitude,
            )
            .map(|p| p.with_phase(self.phase_offset)),
            ProfileName::Sinusoidal => CyclostationaryProfile::sinusoidal(
                self.period,
                self.mean_level,
                self.modulation_depth,
            ),
        };
        built.map_err(|e| Error::config(field, strip_prefix(e)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub profile: ProfileSection,
    /// Optional per-node profiles; must list one entry per node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_profiles: Option<Vec<ProfileSection>>,
    pub rho: f64,
    pub taps: usize,
    pub ground_truth_seed: u64,
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection {
            profile: ProfileSection::default(),
            node_profiles: None,
            rho: 0.8,
            taps: 32,
            ground_truth_seed: 2021,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub lambda: f64,
    pub delta: f64,
    pub algorithms: Vec<Algorithm>,
    pub blowup_bound: f64,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            lambda: 0.995,
            delta: 0.01,
            algorithms: vec![Algorithm::Rls, Algorithm::Drls],
            blowup_bound: DEFAULT_BLOWUP_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    pub enabled: bool,
    pub phi0_init: PhiInit,
    pub psd_check_every: usize,
}

impl Default for TheorySection {
    fn default() -> Self {
        TheorySection {
            enabled: true,
            phi0_init: PhiInit::Delta,
            psd_check_every: TheoryOptions::default().psd_check_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub runs: usize,
    pub iterations: usize,
    pub master_seed: u64,
    pub track_mean_error: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            runs: 200,
            iterations: 3000,
            master_seed: 1,
            track_mean_error: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub prefix: String,
    /// Export run-0 DRLS weights every this many iterations; 0 disables.
    pub snapshot_every: usize,
    pub plot_script: bool,
    /// First and last iteration of the transient comparison window.
    pub transient_window: [usize; 2],
    /// Length of the steady-state window at the end of the run.
    pub steady_window: usize,
    pub transient_tolerance_db: f64,
    pub steady_tolerance_db: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: "out".into(),
            prefix: "experiment".into(),
            snapshot_every: 0,
            plot_script: true,
            transient_window: [50, 500],
            steady_window: 500,
            transient_tolerance_db: 2.0,
            steady_tolerance_db: 1.0,
        }
    }
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    /// The input config with defaults expanded and noise variances drawn.
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub spec: EnsembleSpec,
    pub transient_window: IterationWindow,
    pub steady_window: IterationWindow,
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::InvalidArgument(m) | Error::InvalidCombination(m) => m,
        other => other.to_string(),
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de =
        toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().message().trim().to_string())
    })?;
    config.resolve()?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_config_str(&text)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Validates every field and builds the domain objects.
    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        let net = &self.network;
        let k = net.nodes;
        if k < 2 {
            return Err(Error::config(
                "network.nodes",
                format!("need at least 2 nodes, got {k}"),
            ));
        }
        let kind = match net.topology {
            TopologyName::Ring => TopologyKind::Ring,
            TopologyName::RandomGeometric => TopologyKind::RandomGeometric {
                radius: net.radius,
                seed: net.topology_seed,
            },
            TopologyName::Explicit => TopologyKind::Explicit {
                edges: net
                    .edges
                    .as_ref()
                    .ok_or_else(|| {
                        Error::config("network.edges", "required for an explicit topology")
                    })?
                    .iter()
                    .map(|e| (e[0], e[1]))
                    .collect(),
            },
        };
        let topology = build_topology(&kind, k).map_err(|e| {
            let field = match net.topology {
                TopologyName::Explicit => "network.edges",
                TopologyName::RandomGeometric => "network.radius",
                TopologyName::Ring => "network.topology",
            };
            Error::config(field, strip_prefix(e))
        })?;

        let combiner = match net.combination {
            CombinationName::Uniform => {
                build_combination_matrix(&topology, CombinationRule::Uniform)
            }
            CombinationName::Metropolis => {
                build_combination_matrix(&topology, CombinationRule::Metropolis)
            }
            CombinationName::Explicit => {
                let field = "network.combination_rows";
                let rows = net
                    .combination_rows
                    .as_ref()
                    .ok_or_else(|| Error::config(field, "required for an explicit combination"))?;
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::config(field, format!("expected a {k}x{k} matrix")));
                }
                let m = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
                CombinationMatrix::from_matrix(m, &topology)
                    .map_err(|e| Error::config(field, strip_prefix(e)))?
            }
        };

        let noise = match &net.noise_variances {
            Some(v) => {
                if v.len() != k {
                    return Err(Error::config(
                        "network.noise_variances",
                        format!("expected {k} entries, got {}", v.len()),
                    ));
                }
                NoiseProfile::new(v.clone())
                    .map_err(|e| Error::config("network.noise_variances", strip_prefix(e)))?
            }
            None => NoiseProfile::uniform_random(
                k,
                net.noise_range[0],
                net.noise_range[1],
                net.noise_seed,
            )
            .map_err(|e| Error::config("network.noise_range", strip_prefix(e)))?,
        };

        let sig = &self.signal;
        let profiles = match &sig.node_profiles {
            None => vec![sig.profile.build("signal.profile")?; k],
            Some(list) => {
                if list.len() != k {
                    return Err(Error::config(
                        "signal.node_profiles",
                        format!("expected {k} entries, got {}", list.len()),
                    ));
                }
                list.iter()
                    .enumerate()
                    .map(|(i, p)| p.build(&format!("signal.node_profiles[{i}]")))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let process = ColoredProcessParams::new(sig.rho, sig.taps).map_err(|e| {
            let field = if sig.taps == 0 {
                "signal.taps"
            } else {
                "signal.rho"
            };
            Error::config(field, strip_prefix(e))
        })?;
        let w_star = make_ground_truth(sig.taps, sig.ground_truth_seed)
            .map_err(|e| Error::config("signal.ground_truth_seed", strip_prefix(e)))?;

        let alg = &self.algorithm;
        if !(0.9..1.0).contains(&alg.lambda) {
            return Err(Error::config(
                "algorithm.lambda",
                format!("value {} out of range [0.9, 1)", alg.lambda),
            ));
        }
        if !(alg.delta.is_finite() && alg.delta > 0.0) {
            return Err(Error::config(
                "algorithm.delta",
                format!("must be positive, got {}", alg.delta),
            ));
        }
        if alg.blowup_bound.is_nan() || alg.blowup_bound <= 0.0 {
            return Err(Error::config("algorithm.blowup_bound", "must be positive"));
        }
        let rls = RlsParams::new(alg.lambda, alg.delta)
            .map_err(|e| Error::config("algorithm", strip_prefix(e)))?
            .with_blowup_bound(alg.blowup_bound);

        let scenario = Scenario::new(
            topology,
            combiner,
            noise.clone(),
            profiles,
            process,
            w_star,
            rls,
        )
        .map_err(|e| Error::config("<config>", strip_prefix(e)))?
        .with_phi_init(self.theory.phi0_init);

        let ens = &self.ensemble;
        if ens.runs == 0 {
            return Err(Error::config("ensemble.runs", "must be at least 1"));
        }
        if ens.iterations == 0 {
            return Err(Error::config("ensemble.iterations", "must be at least 1"));
        }
        let mut algorithms = alg.algorithms.clone();
        algorithms.dedup();
        let spec = EnsembleSpec {
            runs: ens.runs,
            iterations: ens.iterations,
            master_seed: ens.master_seed,
            algorithms,
            theory: self.theory.enabled,
            theory_options: TheoryOptions {
                psd_check_every: self.theory.psd_check_every,
            },
            track_mean_error: ens.track_mean_error,
            snapshot_every: (self.output.snapshot_every > 0).then_some(self.output.snapshot_every),
        };

        let out = &self.output;
        let [first, last] = out.transient_window;
        if first == 0 || first > last || last > ens.iterations {
            return Err(Error::config(
                "output.transient_window",
                format!(
                    "[{first}, {last}] must satisfy 1 <= first <= last <= iterations ({})",
                    ens.iterations
                ),
            ));
        }
        if out.steady_window == 0 || out.steady_window > ens.iterations {
            return Err(Error::config(
                "output.steady_window",
                format!("must lie in 1..={}", ens.iterations),
            ));
        }
        for (field, v) in [
            ("output.transient_tolerance_db", out.transient_tolerance_db),
            ("output.steady_tolerance_db", out.steady_tolerance_db),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if out.prefix.is_empty() {
            return Err(Error::config("output.prefix", "must not be empty"));
        }

        let mut config = self.clone();
        config.network.noise_variances = Some(noise.variances().to_vec());
        Ok(ResolvedExperiment {
            config,
            transient_window: IterationWindow::new(first, last),
            steady_window: IterationWindow::tail(ens.iterations, out.steady_window),
            scenario,
            spec,
        })
    }
}

impl ResolvedExperiment {
    /// Config that rebuilds the same scenario without any topology seed:
    /// explicit edges, explicit combination rows and explicit noise levels.
    pub fn replay_config(&self) -> ExperimentConfig {
        let mut c = self.config.clone();
        let s = &self.scenario;
        c.network.topology = TopologyName::Explicit;
        c.network.edges = Some(
            s.topology
                .edges()
                .into_iter()
                .map(|(a, b)| [a, b])
                .collect(),
        );
        c.network.combination = CombinationName::Explicit;
        c.network.combination_rows = Some(s.combiner.rows());
        c.network.noise_variances = Some(s.noise.variances().to_vec());
        c
    }
}

/// Sets a dotted key (e.g. `signal.profile.period`) in a TOML document.
pub fn override_key(text: &str, key: &str, value: toml::Value) -> Result<String> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts
        .split_last()
        .ok_or_else(|| Error::config(key, "empty key"))?;
    let mut table = &mut doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(toml::to_string(&doc).expect("table serializes"))
}

/// Interprets a command-line value as TOML (integer, float, bool), falling
/// back to a string.
pub fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    probe
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = include_str!("../../../../configs/full_t512.toml");

    #[test]
    fn full_scale_config_values() {
        let c = parse_config_str(FULL).unwrap();
        assert_eq!(c.network.nodes, 20);
        assert_eq!(c.signal.taps, 32);
        assert_eq!(c.algorithm.lambda, 0.995);
        assert_eq!(c.signal.rho, 0.8);
        let p = &c.signal.profile;
        assert_eq!(p.kind, ProfileName::Pulsed);
        assert_eq!(
            (p.duty_cycle, p.low_amplitude, p.high_amplitude, p.period),
            (0.5, 2e-3, 2.0, 512)
        );
    }

    #[test]
    fn empty_config_uses_defaults() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let resolved = c.resolve().unwrap();
        let echo = resolved.config.to_toml();
        for key in [
            "lambda",
            "delta",
            "runs",
            "master_seed",
            "duty_cycle",
            "noise_variances",
            "phi0_init",
        ] {
            assert!(echo.contains(key), "missing {key} in\n{echo}");
        }
        // the echo is itself a valid config reproducing the same scenario
        let again = parse_config_str(&echo).unwrap().resolve().unwrap();
        assert_eq!(again.scenario.noise, resolved.scenario.noise);
    }

    #[test]
    fn lambda_out_of_range() {
        let err = parse_config_str("[algorithm]\nlambda = 1.5\n").unwrap_err();
        match err {
            Error::Config { field, message } => {
                assert_eq!(field, "algorithm.lambda");
                assert!(message.contains("out of range"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        for (text, path) in [
            ("[algorithm]\nlamda = 0.99\n", "algorithm"),
            ("[bogus]\nx = 1\n", "bogus"),
            ("[signal.profile]\nperiodd = 4\n", "signal.profile"),
        ] {
            match parse_config_str(text).unwrap_err() {
                Error::Config { field, message } => {
                    assert!(message.contains("unknown field"), "{message}");
                    assert!(field.starts_with(path), "{field}");
                }
                other => panic!("{other}"),
            }
        }
    }

    #[test]
    fn wrong_type_reports_path() {
        match parse_config_str("[ensemble]\nruns = \"many\"\n").unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "ensemble.runs"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn explicit_topology_requires_edges() {
        let err = parse_config_str("[network]\nnodes = 3\ntopology = \"explicit\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "network.edges"));
        let err = parse_config_str(
            "[network]\nnodes = 4\ntopology = \"explicit\"\nedges = [[0, 1], [2, 3]]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("disconnected"), "{err}");
    }

    #[test]
    fn replay_config_rebuilds_scenario() {
        let c =
            parse_config_str("[network]\nnodes = 10\nradius = 0.5\ncombination = \"metropolis\"\n")
                .unwrap();
        let r = c.resolve().unwrap();
        let replay = r.replay_config();
        let text = replay.to_toml();
        let r2 = parse_config_str(&text).unwrap().resolve().unwrap();
        assert_eq!(r2.scenario.topology, r.scenario.topology);
        assert_eq!(r2.scenario.combiner.matrix(), r.scenario.combiner.matrix());
        assert_eq!(r2.scenario.noise, r.scenario.noise);
    }

    #[test]
    fn node_profiles_must_cover_every_node() {
        let text = "[network]\nnodes = 3\ntopology = \"ring\"\n[[signal.node_profiles]]\nkind = \"constant\"\n";
        let err = parse_config_str(text).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "signal.node_profiles"));
        let ok = format!("{text}[[signal.node_profiles]]\nkind = \"constant\"\n[[signal.node_profiles]]\nperiod = 4\n");
        let r = parse_config_str(&ok).unwrap().resolve().unwrap();
        assert_eq!(r.scenario.profiles[2].period(), 4);
    }

    #[test]
    fn override_dotted_key() {
        let text = override_key(FULL, "signal.profile.period", parse_value("32")).unwrap();
        assert_eq!(parse_config_str(&text).unwrap().signal.profile.period, 32);
        let text = override_key("", "algorithm.lambda", parse_value("0.99")).unwrap();
        assert_eq!(parse_config_str(&text).unwrap().algorithm.lambda, 0.99);
        assert_eq!(parse_value("drls"), toml::Value::String("drls".into()));
    }
}
