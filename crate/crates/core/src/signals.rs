//! Cyclostationary colored regressors and their exact second-order statistics.
//!
//! Each node draws a unit-variance AR(1) sequence `u` and scales it by a
//! deterministic periodic amplitude `σ_x(n)`. The regressor at time `n` is the
//! tapped delay line `[x_n, …, x_{n-L+1}]` with `x_m = σ_x(m)·u_m`, so every tap
//! keeps the amplitude of its own generation time.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream generator used everywhere randomness is needed.
pub type SignalRng = ChaCha8Rng;

/// Mixes a master seed with a path of indices into an independent 64-bit seed
/// (SplitMix64 finalizer applied per component).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

pub fn stream(master: u64, path: &[u64]) -> SignalRng {
    SignalRng::seed_from_u64(derive_seed(master, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProfileKind {
    Constant {
        level: f64,
    },
    /// High amplitude for the first `ceil(duty_cycle·T)` samples of each
    /// period (shifted by `phase`), low amplitude for the rest.
    Pulsed {
        duty_cycle: f64,
        low: f64,
        high: f64,
        phase: usize,
    },
    /// `mean·(1 + depth·sin(2πn/T))`.
    Sinusoidal {
        mean: f64,
        depth: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclostationaryProfile {
    kind: ProfileKind,
    period: usize,
    high_len: usize,
}

impl CyclostationaryProfile {
    pub fn constant(level: f64) -> Result<Self> {
        if !(level.is_finite() && level > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "constant level must be positive, got {level}"
            )));
        }
        Ok(CyclostationaryProfile {
            kind: ProfileKind::Constant { level },
            period: 1,
            high_len: 1,
        })
    }

    pub fn pulsed(period: usize, duty_cycle: f64, low: f64, high: f64) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        if !(duty_cycle > 0.0 && duty_cycle < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "duty cycle must lie in (0, 1), got {duty_cycle}"
            )));
        }
        if !(low.is_finite() && low > 0.0 && high.is_finite() && high > low) {
            return Err(Error::InvalidArgument(format!(
                "pulsed amplitudes must satisfy 0 < low < high, got low={low}, high={high}"
            )));
        }
        let high_len = ((duty_cycle * period as f64).ceil() as usize).clamp(1, period);
        Ok(CyclostationaryProfile {
            kind: ProfileKind::Pulsed {
                duty_cycle,
                low,
                high,
                phase: 0,
            },
            period,
            high_len,
        })
    }

    pub fn sinusoidal(period: usize, mean: f64, depth: f64) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        if !(mean.is_finite() && mean > 0.0) || !(0.0..1.0).contains(&depth) {
            return Err(Error::InvalidArgument(format!(
                "sinusoidal profile needs mean > 0 and 0 <= depth < 1, got mean={mean}, depth={depth}"
            )));
        }
        Ok(CyclostationaryProfile {
            kind: ProfileKind::Sinusoidal { mean, depth },
            period,
            high_len: period,
        })
    }

    /// Shifts a pulsed waveform so its high segment starts at sample `phase`.
    /// No-op for the other kinds.
    pub fn with_phase(mut self, offset: usize) -> Self {
        if let ProfileKind::Pulsed { ref mut phase, .. } = self.kind {
            *phase = offset % self.period;
        }
        self
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Amplitude `σ_x(n)`. Negative `n` (pre-roll samples) use the periodic
    /// extension.
    pub fn sigma_at(&self, n: i64) -> f64 {
        let t = self.period as i64;
        match self.kind {
            ProfileKind::Constant { level } => level,
            ProfileKind::Pulsed {
                low, high, phase, ..
            } => {
                let idx = (n - phase as i64).rem_euclid(t) as usize;
                if idx < self.high_len {
                    high
                } else {
                    low
                }
            }
            ProfileKind::Sinusoidal { mean, depth } => {
                let idx = n.rem_euclid(t) as f64;
                mean * (1.0 + depth * (2.0 * PI * idx / t as f64).sin())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColoredProcessParams {
    rho: f64,
    taps: usize,
}

impl ColoredProcessParams {
    /// Innovation scale is fixed so that `u` has unit variance.
    pub const UNIT_VARIANCE: f64 = 1.0;

    pub fn new(rho: f64, taps: usize) -> Result<Self> {
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "correlation factor must satisfy |rho| < 1, got {rho}"
            )));
        }
        if taps == 0 {
            return Err(Error::InvalidArgument(
                "filter length must be positive".into(),
            ));
        }
        Ok(ColoredProcessParams { rho, taps })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn taps(&self) -> usize {
        self.taps
    }
}

/// Per-node generator state: AR(1) memory plus the last `L` colored samples
/// and their amplitudes, newest first.
#[derive(Debug, Clone)]
pub struct NodeSignalState {
    last_u: Option<f64>,
    colored: VecDeque<f64>,
    amplitudes: VecDeque<f64>,
    next_time: i64,
    taps: usize,
}

impl NodeSignalState {
    /// Cold state whose next sample is generated at `first_time`.
    pub fn new(taps: usize, first_time: i64) -> Self {
        NodeSignalState {
            last_u: None,
            colored: VecDeque::with_capacity(taps),
            amplitudes: VecDeque::with_capacity(taps),
            next_time: first_time,
            taps,
        }
    }

    /// State pre-rolled with samples at times `2-L..=0`, so the first call to
    /// [`advance`](Self::advance) produces time 1 and leaves the state warm.
    pub fn warmed(
        profile: &CyclostationaryProfile,
        params: &ColoredProcessParams,
        rng: &mut impl Rng,
    ) -> Self {
        let taps = params.taps();
        let mut state = Self::new(taps, 2 - taps as i64);
        for _ in 1..taps {
            state.advance(profile, params, rng);
        }
        state
    }

    /// Draws the next AR(1) sample. The first draw comes from the stationary
    /// distribution N(0, 1).
    pub fn step_colored(&mut self, params: &ColoredProcessParams, rng: &mut impl Rng) -> f64 {
        let w: f64 = rng.sample(StandardNormal);
        let sigma_u = ColoredProcessParams::UNIT_VARIANCE.sqrt();
        let u = match self.last_u {
            None => sigma_u * w,
            Some(prev) => params.rho * prev + sigma_u * (1.0 - params.rho * params.rho).sqrt() * w,
        };
        self.last_u = Some(u);
        u
    }

    /// Generates the sample for the current time index and shifts it into the
    /// delay line. Returns the time index just produced.
    pub fn advance(
        &mut self,
        profile: &CyclostationaryProfile,
        params: &ColoredProcessParams,
        rng: &mut impl Rng,
    ) -> i64 {
        let u = self.step_colored(params, rng);
        let time = self.next_time;
        if self.colored.len() == self.taps {
            self.colored.pop_back();
            self.amplitudes.pop_back();
        }
        self.colored.push_front(u);
        self.amplitudes.push_front(profile.sigma_at(time));
        self.next_time += 1;
        time
    }

    /// Time index of the most recent sample.
    pub fn current_time(&self) -> i64 {
        self.next_time - 1
    }

    pub fn is_warm(&self) -> bool {
        self.colored.len() == self.taps
    }

    /// Regressor `x_n` with entry `i` equal to `σ_x(n-i)·u_{n-i}`.
    pub fn emit_regressor(&self) -> Result<DVector<f64>> {
        if !self.is_warm() {
            return Err(Error::ColdState {
                available: self.colored.len(),
                required: self.taps,
            });
        }
        Ok(DVector::from_iterator(
            self.taps,
            self.colored
                .iter()
                .zip(&self.amplitudes)
                .map(|(u, s)| u * s),
        ))
    }

    /// Raw colored samples `[u_n, …, u_{n-L+1}]`.
    pub fn colored_samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.colored.iter().copied()
    }
}

/// Toeplitz autocorrelation `[R_u]_{ij} = σ_u² ρ^{|i-j|}`.
pub fn colored_autocorrelation(params: &ColoredProcessParams) -> DMatrix<f64> {
    let l = params.taps();
    DMatrix::from_fn(l, l, |i, j| {
        ColoredProcessParams::UNIT_VARIANCE * params.rho().powi(i.abs_diff(j) as i32)
    })
}

/// `Σ_x(n)·R_u·Σ_x(n)` with `Σ_x(n) = diag{σ_x(n), …, σ_x(n-L+1)}`.
pub fn input_covariance(
    profile: &CyclostationaryProfile,
    params: &ColoredProcessParams,
    n: i64,
) -> DMatrix<f64> {
    let amps = tap_amplitudes(profile, params.taps(), n);
    let mut r = colored_autocorrelation(params);
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            r[(i, j)] *= amps[i] * amps[j];
        }
    }
    r
}

/// Diagonal of `Σ_x(n)`.
pub fn tap_amplitudes(profile: &CyclostationaryProfile, taps: usize, n: i64) -> Vec<f64> {
    (0..taps).map(|i| profile.sigma_at(n - i as i64)).collect()
}

/// `d = xᵀw* + z` with `z ~ N(0, noise_std²)`.
pub fn emit_desired(
    x: &DVector<f64>,
    w_star: &GroundTruth,
    noise_std: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let w = w_star.weights();
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: x.len(),
        });
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(x.dot(w) + noise_std * z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    weights: DVector<f64>,
}

impl GroundTruth {
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Standard-normal entries, entry `i` scaled by `0.5^i`, then normalized to
/// unit squared norm.
pub fn make_ground_truth(taps: usize, seed: u64) -> Result<GroundTruth> {
    if taps == 0 {
        return Err(Error::InvalidArgument(
            "filter length must be positive".into(),
        ));
    }
    let mut rng = SignalRng::seed_from_u64(seed);
    let mut w = DVector::from_fn(taps, |i, _| {
        let g: f64 = rng.sample(StandardNormal);
        g * 0.5f64.powi(i as i32)
    });
    let norm = w.norm();
    if norm == 0.0 {
        return Err(Error::NumericBlowup(
            "ground truth draw has zero norm".into(),
        ));
    }
    w /= norm;
    Ok(GroundTruth { weights: w })
}

/// One node's complete data source: generator state plus independent input
/// and observation-noise streams.
#[derive(Debug, Clone)]
pub struct NodeSource {
    state: NodeSignalState,
    input_rng: SignalRng,
    noise_rng: SignalRng,
    noise_std: f64,
}

impl NodeSource {
    pub fn new(
        profile: &CyclostationaryProfile,
        params: &ColoredProcessParams,
        noise_variance: f64,
        mut input_rng: SignalRng,
        noise_rng: SignalRng,
    ) -> Self {
        let state = NodeSignalState::warmed(profile, params, &mut input_rng);
        NodeSource {
            state,
            input_rng,
            noise_rng,
            noise_std: noise_variance.sqrt(),
        }
    }

    /// Produces the next `(x_n, d_n)` pair.
    pub fn next_pair(
        &mut self,
        profile: &CyclostationaryProfile,
        params: &ColoredProcessParams,
        w_star: &GroundTruth,
    ) -> Result<(DVector<f64>, f64)> {
        self.state.advance(profile, params, &mut self.input_rng);
        let x = self.state.emit_regressor()?;
        let d = emit_desired(&x, w_star, self.noise_std, &mut self.noise_rng)?;
        Ok((x, d))
    }

    pub fn time(&self) -> i64 {
        self.state.current_time()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn standard_pulse(period: usize) -> CyclostationaryProfile {
        CyclostationaryProfile::pulsed(period, 0.5, 2e-3, 2.0).unwrap()
    }

    #[test]
    fn pulsed_levels() {
        let p = standard_pulse(4);
        assert_eq!(p.sigma_at(0), 2.0);
        assert_eq!(p.sigma_at(1), 2.0);
        assert_eq!(p.sigma_at(2), 0.002);
        assert_eq!(p.sigma_at(3), 0.002);
        assert_eq!(p.sigma_at(5), p.sigma_at(1));
        assert_eq!(p.sigma_at(-1), p.sigma_at(3));
        let shifted = standard_pulse(4).with_phase(1);
        assert_eq!(shifted.sigma_at(0), 0.002);
        assert_eq!(shifted.sigma_at(1), 2.0);
    }

    #[test]
    fn pulsed_high_segment_rounds_up() {
        let p = CyclostationaryProfile::pulsed(5, 0.5, 1.0, 3.0).unwrap();
        let highs = (0..5).filter(|&n| p.sigma_at(n) == 3.0).count();
        assert_eq!(highs, 3);
    }

    #[test]
    fn profile_validation() {
        assert!(CyclostationaryProfile::constant(0.0).is_err());
        assert!(CyclostationaryProfile::pulsed(4, 1.0, 0.1, 1.0).is_err());
        assert!(CyclostationaryProfile::pulsed(4, 0.5, 1.0, 0.5).is_err());
        assert!(CyclostationaryProfile::pulsed(0, 0.5, 0.1, 1.0).is_err());
        assert!(CyclostationaryProfile::sinusoidal(8, 1.0, 1.0).is_err());
        assert!(ColoredProcessParams::new(1.0, 4).is_err());
        assert!(ColoredProcessParams::new(0.5, 0).is_err());
    }

    #[test]
    fn constant_profile() {
        let p = CyclostationaryProfile::constant(1.0).unwrap();
        assert!((0..20).all(|n| p.sigma_at(n) == 1.0));
        let params = ColoredProcessParams::new(0.8, 3).unwrap();
        assert_eq!(
            input_covariance(&p, &params, 7),
            colored_autocorrelation(&params)
        );
    }

    #[test]
    fn autocorrelation_entries() {
        let white = ColoredProcessParams::new(0.0, 3).unwrap();
        assert_eq!(colored_autocorrelation(&white), DMatrix::identity(3, 3));
        let c = ColoredProcessParams::new(0.8, 2).unwrap();
        assert_eq!(
            colored_autocorrelation(&c),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0])
        );
    }

    #[test]
    fn covariance_in_high_segment_is_scaled() {
        let p = standard_pulse(512);
        let params = ColoredProcessParams::new(0.8, 8).unwrap();
        let r = input_covariance(&p, &params, 100);
        let expect = colored_autocorrelation(&params) * 4.0;
        assert!((r - expect).abs().max() < 1e-15);
    }

    #[test]
    fn regressor_matches_direct_construction() {
        let p = standard_pulse(4);
        let params = ColoredProcessParams::new(0.8, 6).unwrap();
        let mut rng = SignalRng::seed_from_u64(5);
        let mut state = NodeSignalState::warmed(&p, &params, &mut rng);
        for _ in 0..9 {
            let n = state.advance(&p, &params, &mut rng);
            let x = state.emit_regressor().unwrap();
            let u = DVector::from_iterator(6, state.colored_samples());
            let sigma = DMatrix::from_diagonal(&DVector::from_vec(tap_amplitudes(&p, 6, n)));
            assert_eq!(x, &sigma * u);
        }
    }

    #[test]
    fn cold_state_rejected() {
        let p = CyclostationaryProfile::constant(2.0).unwrap();
        let params = ColoredProcessParams::new(0.5, 3).unwrap();
        let mut rng = SignalRng::seed_from_u64(1);
        let mut state = NodeSignalState::new(3, 0);
        state.advance(&p, &params, &mut rng);
        assert!(matches!(
            state.emit_regressor(),
            Err(Error::ColdState {
                available: 1,
                required: 3
            })
        ));
        state.advance(&p, &params, &mut rng);
        state.advance(&p, &params, &mut rng);
        let x = state.emit_regressor().unwrap();
        let u: Vec<f64> = state.colored_samples().collect();
        assert_eq!(x.as_slice(), &[2.0 * u[0], 2.0 * u[1], 2.0 * u[2]]);
    }

    #[test]
    fn scalar_regressor() {
        let p = standard_pulse(4);
        let params = ColoredProcessParams::new(0.8, 1).unwrap();
        let mut rng = SignalRng::seed_from_u64(2);
        let mut state = NodeSignalState::warmed(&p, &params, &mut rng);
        assert!(!state.is_warm());
        let n = state.advance(&p, &params, &mut rng);
        assert_eq!(n, 1);
        let u = state.colored_samples().next().unwrap();
        assert_eq!(state.emit_regressor().unwrap()[0], p.sigma_at(1) * u);
    }

    #[test]
    fn white_process_is_iid_normal() {
        let params = ColoredProcessParams::new(0.0, 1).unwrap();
        let mut a = NodeSignalState::new(1, 0);
        let mut rng = SignalRng::seed_from_u64(9);
        let mut reference = SignalRng::seed_from_u64(9);
        for _ in 0..100 {
            let expect: f64 = reference.sample(StandardNormal);
            assert_eq!(a.step_colored(&params, &mut rng), expect);
        }
    }

    #[test]
    fn desired_response() {
        let w = make_ground_truth(3, 4).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let mut rng = SignalRng::seed_from_u64(0);
        assert_eq!(
            emit_desired(&x, &w, 0.0, &mut rng).unwrap(),
            x.dot(w.weights())
        );

        let e1 = GroundTruth {
            weights: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        };
        let mut a = SignalRng::seed_from_u64(3);
        let mut b = SignalRng::seed_from_u64(3);
        let z: f64 = b.sample(StandardNormal);
        assert_eq!(emit_desired(&x, &e1, 0.5, &mut a).unwrap(), 0.3 + 0.5 * z);

        assert!(emit_desired(&DVector::zeros(2), &w, 0.1, &mut rng).is_err());
    }

    #[test]
    fn desired_with_zero_input_has_noise_variance() {
        let w = make_ground_truth(4, 1).unwrap();
        let x = DVector::zeros(4);
        let mut rng = SignalRng::seed_from_u64(11);
        let n = 100_000;
        let var: f64 = 0.05;
        let s: f64 = (0..n)
            .map(|_| emit_desired(&x, &w, var.sqrt(), &mut rng).unwrap().powi(2))
            .sum();
        let est = s / n as f64;
        assert!((est - var).abs() < 0.02 * var, "{est}");
    }

    #[test]
    fn ground_truth_contract() {
        for seed in 0..20 {
            let w = make_ground_truth(32, seed).unwrap();
            assert!((w.weights().norm_squared() - 1.0).abs() < 1e-12);
        }
        let scalar = make_ground_truth(1, 3).unwrap();
        assert_eq!(scalar.weights()[0].abs(), 1.0);
        assert_eq!(
            make_ground_truth(8, 42).unwrap(),
            make_ground_truth(8, 42).unwrap()
        );
        assert!(make_ground_truth(0, 1).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 0]);
        let b = derive_seed(1, &[0, 1]);
        let c = derive_seed(1, &[1, 0]);
        assert!(a != b && b != c && a != c);
    }

    #[test]
    fn spatial_independence() {
        let n = 100_000usize;
        let p = CyclostationaryProfile::constant(1.0).unwrap();
        for (rho, stride) in [(0.0, 1usize), (0.8, 20)] {
            let params = ColoredProcessParams::new(rho, 2).unwrap();
            let mut r1 = stream(77, &[0, 0]);
            let mut r2 = stream(77, &[0, 1]);
            let mut s1 = NodeSignalState::warmed(&p, &params, &mut r1);
            let mut s2 = NodeSignalState::warmed(&p, &params, &mut r2);
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                for _ in 0..stride {
                    s1.advance(&p, &params, &mut r1);
                    s2.advance(&p, &params, &mut r2);
                }
                let a = s1.emit_regressor().unwrap()[0];
                let b = s2.emit_regressor().unwrap()[0];
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
            let corr = sxy / (sxx * syy).sqrt();
            assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "rho={rho}: {corr}");
        }
    }

    proptest! {
        #[test]
        fn covariance_is_periodic(period in 1usize..40, n in 0i64..2000, taps in 1usize..10, sinus in any::<bool>()) {
            let p = if sinus {
                CyclostationaryProfile::sinusoidal(period, 1.5, 0.6).unwrap()
            } else {
                CyclostationaryProfile::pulsed(period, 0.3, 0.01, 2.0).unwrap()
            };
            let params = ColoredProcessParams::new(0.7, taps).unwrap();
            let a = input_covariance(&p, &params, n);
            let b = input_covariance(&p, &params, n + period as i64);
            prop_assert_eq!(a, b);
            prop_assert!((0..period as i64).all(|m| p.sigma_at(m) > 0.0));
        }

        #[test]
        fn autocorrelation_is_positive_definite(rho in -0.99f64..=0.99, taps in 1usize..=64) {
            let params = ColoredProcessParams::new(rho, taps).unwrap();
            prop_assert!(colored_autocorrelation(&params).cholesky().is_some());
        }
    }
}
