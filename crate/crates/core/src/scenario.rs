//! A fully resolved experiment: network, signals, ground truth and filter
//! parameters. Both the theory engine and the Monte Carlo harness read from
//! the same [`Scenario`], so they always describe the same system.

use crate::error::{Error, Result};
use crate::filters::RlsParams;
use crate::network::{CombinationMatrix, NoiseProfile, Topology};
use crate::signals::{ColoredProcessParams, CyclostationaryProfile, GroundTruth};

/// Initial condition of the expected time-averaged correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiInit {
    /// `E{Φ_0} = δ·I`, the same start as each filter's `Φ_{k,0}`.
    #[default]
    Delta,
    /// `E{Φ_0} = δ⁻¹·I`.
    InverseDelta,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub combiner: CombinationMatrix,
    pub noise: NoiseProfile,
    /// One profile per node.
    pub profiles: Vec<CyclostationaryProfile>,
    pub process: ColoredProcessParams,
    pub w_star: GroundTruth,
    pub rls: RlsParams,
    pub phi_init: PhiInit,
}

impl Scenario {
    pub fn new(
        topology: Topology,
        combiner: CombinationMatrix,
        noise: NoiseProfile,
        profiles: Vec<CyclostationaryProfile>,
        process: ColoredProcessParams,
        w_star: GroundTruth,
        rls: RlsParams,
    ) -> Result<Self> {
        let k = topology.node_count();
        for (what, len) in [
            ("combination matrix", combiner.node_count()),
            ("noise profile", noise.len()),
            ("signal profiles", profiles.len()),
        ] {
            if len != k {
                return Err(Error::InvalidArgument(format!(
                    "{what} covers {len} nodes but the topology has {k}"
                )));
            }
        }
        if w_star.len() != process.taps() {
            return Err(Error::DimensionMismatch {
                expected: process.taps(),
                actual: w_star.len(),
            });
        }
        rls.validate()?;
        Ok(Scenario {
            topology,
            combiner,
            noise,
            profiles,
            process,
            w_star,
            rls,
            phi_init: PhiInit::default(),
        })
    }

    pub fn with_phi_init(mut self, init: PhiInit) -> Self {
        self.phi_init = init;
        self
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn taps(&self) -> usize {
        self.process.taps()
    }

    /// Same scenario with the combination step disabled.
    pub fn non_cooperative(&self) -> Self {
        Scenario {
            combiner: CombinationMatrix::identity(self.node_count()),
            ..self.clone()
        }
    }
}
