//! Exponentially weighted RLS and its adapt-then-combine diffusion version.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::CombinationMatrix;

/// Default bound on `max |P_ij|` before an update is declared a blow-up.
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e12;

/// Forgetting factor, regularizer and blow-up guard shared by every node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsParams {
    pub forgetting: f64,
    pub regularization: f64,
    pub blowup_bound: f64,
}

impl RlsParams {
    pub fn new(forgetting: f64, regularization: f64) -> Result<Self> {
        let params = RlsParams {
            forgetting,
            regularization,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_blowup_bound(mut self, bound: f64) -> Self {
        self.blowup_bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.9..1.0).contains(&self.forgetting) {
            return Err(Error::InvalidArgument(format!(
                "forgetting factor must lie in [0.9, 1), got {}",
                self.forgetting
            )));
        }
        if !(self.regularization.is_finite() && self.regularization > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "regularizer delta must be positive, got {}",
                self.regularization
            )));
        }
        if self.blowup_bound.is_nan() || self.blowup_bound <= 0.0 {
            return Err(Error::InvalidArgument(
                "blow-up bound must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFilterState {
    w: DVector<f64>,
    p: DMatrix<f64>,
    psi: DVector<f64>,
    psi_fresh: bool,
}

/// `w = 0`, `P = δ⁻¹·I`.
pub fn init_state(taps: usize, delta: f64) -> Result<NodeFilterState> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularizer delta must be positive, got {delta}"
        )));
    }
    if taps == 0 {
        return Err(Error::InvalidArgument(
            "filter length must be positive".into(),
        ));
    }
    Ok(NodeFilterState {
        w: DVector::zeros(taps),
        p: DMatrix::identity(taps, taps) / delta,
        psi: DVector::zeros(taps),
        psi_fresh: false,
    })
}

impl NodeFilterState {
    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn inverse_correlation(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Intermediate estimate from the last [`adapt`].
    pub fn intermediate(&self) -> &DVector<f64> {
        &self.psi
    }

    pub fn taps(&self) -> usize {
        self.w.len()
    }
}

/// Rank-one update of `P = Φ⁻¹` for `Φ' = λΦ + xxᵀ` via the matrix inversion
/// lemma, followed by symmetrization.
pub fn update_inverse_correlation(p: &DMatrix<f64>, x: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let mut out = p.clone();
    update_inverse_correlation_in_place(&mut out, x, lambda);
    out
}

fn update_inverse_correlation_in_place(p: &mut DMatrix<f64>, x: &DVector<f64>, lambda: f64) {
    let px = &*p * x;
    // λ⁻¹(P − λ⁻¹PxxᵀP/(1 + λ⁻¹xᵀPx)) = (P − PxxᵀP/(λ + xᵀPx))/λ
    let denom = lambda + x.dot(&px);
    p.ger(-1.0 / denom, &px, &px, 1.0);
    *p /= lambda;
    symmetrize(p);
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn check_bound(p: &DMatrix<f64>, bound: f64) -> Result<()> {
    let peak = p.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !peak.is_finite() || peak > bound {
        return Err(Error::NumericBlowup(format!(
            "inverse correlation magnitude {peak:e} exceeds bound {bound:e}"
        )));
    }
    Ok(())
}

fn check_dims(state: &NodeFilterState, x: &DVector<f64>) -> Result<()> {
    if x.len() != state.taps() {
        return Err(Error::DimensionMismatch {
            expected: state.taps(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// Adaptation step: returns the a-priori error `e = d − xᵀw`, updates `P`
/// and stores `ψ = w + P·x·e`.
pub fn adapt(
    state: &mut NodeFilterState,
    x: &DVector<f64>,
    d: f64,
    lambda: f64,
    blowup_bound: f64,
) -> Result<f64> {
    check_dims(state, x)?;
    let e = d - x.dot(&state.w);
    update_inverse_correlation_in_place(&mut state.p, x, lambda);
    check_bound(&state.p, blowup_bound)?;
    state.psi.copy_from(&state.w);
    state.psi.gemv(e, &state.p, x, 1.0);
    state.psi_fresh = true;
    Ok(e)
}

/// Non-cooperative RLS step: `adapt` with `ψ` written straight into `w`.
pub fn rls_iteration(
    state: &mut NodeFilterState,
    x: &DVector<f64>,
    d: f64,
    lambda: f64,
    blowup_bound: f64,
) -> Result<f64> {
    let e = adapt(state, x, d, lambda, blowup_bound)?;
    std::mem::swap(&mut state.w, &mut state.psi);
    state.psi.copy_from(&state.w);
    state.psi_fresh = false;
    Ok(e)
}

fn check_samples(expected: usize, samples: &[(DVector<f64>, f64)]) -> Result<()> {
    if samples.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: samples.len(),
        });
    }
    Ok(())
}

/// Sum over nodes of `‖w_k − w*‖²`.
fn squared_deviation(nodes: &[NodeFilterState], w_star: &DVector<f64>) -> f64 {
    nodes.iter().map(|n| (&n.w - w_star).norm_squared()).sum()
}

/// DRLS network with adapt-then-combine ordering.
#[derive(Debug, Clone)]
pub struct DrlsNetwork {
    nodes: Vec<NodeFilterState>,
    combiner: CombinationMatrix,
    params: RlsParams,
    scratch: Vec<DVector<f64>>,
}

impl DrlsNetwork {
    pub fn new(combiner: CombinationMatrix, taps: usize, params: RlsParams) -> Result<Self> {
        params.validate()?;
        let nodes = (0..combiner.node_count())
            .map(|_| init_state(taps, params.regularization))
            .collect::<Result<Vec<_>>>()?;
        let scratch = vec![DVector::zeros(taps); nodes.len()];
        Ok(DrlsNetwork {
            nodes,
            combiner,
            params,
            scratch,
        })
    }

    pub fn nodes(&self) -> &[NodeFilterState] {
        &self.nodes
    }

    pub fn params(&self) -> &RlsParams {
        &self.params
    }

    /// Runs the adaptation step on node `k` only.
    pub fn adapt_node(&mut self, k: usize, x: &DVector<f64>, d: f64) -> Result<f64> {
        let RlsParams {
            forgetting,
            blowup_bound,
            ..
        } = self.params;
        adapt(&mut self.nodes[k], x, d, forgetting, blowup_bound)
    }

    /// `w_k = Σ_l a_lk ψ_l`. Every node must have adapted since the last
    /// combine.
    pub fn combine(&mut self) -> Result<()> {
        if let Some(node) = self.nodes.iter().position(|n| !n.psi_fresh) {
            return Err(Error::StaleEstimate { node });
        }
        for (k, out) in self.scratch.iter_mut().enumerate() {
            out.fill(0.0);
            for &l in self.combiner.contributors(k) {
                out.axpy(self.combiner.weight(l, k), &self.nodes[l].psi, 1.0);
            }
        }
        for (node, w) in self.nodes.iter_mut().zip(&mut self.scratch) {
            std::mem::swap(&mut node.w, w);
            node.psi_fresh = false;
        }
        Ok(())
    }

    /// Adapt every node on its own sample, then combine once. Returns the
    /// a-priori errors.
    pub fn drls_iteration(&mut self, samples: &[(DVector<f64>, f64)]) -> Result<Vec<f64>> {
        check_samples(self.nodes.len(), samples)?;
        let errors = samples
            .iter()
            .enumerate()
            .map(|(k, (x, d))| self.adapt_node(k, x, *d))
            .collect::<Result<Vec<_>>>()?;
        self.combine()?;
        Ok(errors)
    }

    pub fn squared_deviation(&self, w_star: &DVector<f64>) -> f64 {
        squared_deviation(&self.nodes, w_star)
    }
}

/// Independent RLS filters, one per node, with no exchange.
#[derive(Debug, Clone)]
pub struct RlsNetwork {
    nodes: Vec<NodeFilterState>,
    params: RlsParams,
}

impl RlsNetwork {
    pub fn new(node_count: usize, taps: usize, params: RlsParams) -> Result<Self> {
        params.validate()?;
        let nodes = (0..node_count)
            .map(|_| init_state(taps, params.regularization))
            .collect::<Result<Vec<_>>>()?;
        Ok(RlsNetwork { nodes, params })
    }

    pub fn nodes(&self) -> &[NodeFilterState] {
        &self.nodes
    }

    pub fn iteration(&mut self, samples: &[(DVector<f64>, f64)]) -> Result<Vec<f64>> {
        check_samples(self.nodes.len(), samples)?;
        let RlsParams {
            forgetting,
            blowup_bound,
            ..
        } = self.params;
        self.nodes
            .iter_mut()
            .zip(samples)
            .map(|(node, (x, d))| rls_iteration(node, x, *d, forgetting, blowup_bound))
            .collect()
    }

    pub fn squared_deviation(&self, w_star: &DVector<f64>) -> f64 {
        squared_deviation(&self.nodes, w_star)
    }
}
