//! Metropolis sampling of the Euclidean lattice measure `exp(−S_E/ħ)`.
//!
//! The lattice extent is the imaginary-time length, so the physical inverse
//! temperature is `extent/ħ`. The action uses the trapezoid potential rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{discrete_action_with, Boundary, Lattice, Path, Potential, PotentialKind, PotentialRule, Signature};
use crate::stats::{blocking, jackknife, Blocking, EstimatorResult};

/// Upper bound on stored measurement bins per chain.
pub const MAX_BINS: usize = 8192;
/// Stream index reserved for step tuning; chains use `0..n_chains`.
pub const TUNE_STREAM: u64 = u64::MAX;
pub const TUNE_BATCH: usize = 20;
pub const TUNE_BAND: (f64, f64) = (0.4, 0.6);
pub const ACCEPTANCE_WARN_BAND: (f64, f64) = (0.2, 0.8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub lattice: Lattice,
    pub potential: Potential,
    /// Total sweeps per chain, thermalization included.
    pub n_sweeps: usize,
    pub n_thermalization: usize,
    pub n_chains: usize,
    pub step_width: f64,
    pub seed: u64,
    pub boundary: Boundary,
    /// Whole-path shifts by `±shift_width + U(−shift_jitter, shift_jitter)`,
    /// proposed once per sweep when either is positive.
    pub shift_width: f64,
    pub shift_jitter: f64,
    pub auto_tune: bool,
    pub measure_every: usize,
    /// Largest correlator separation recorded, in slices.
    pub max_separation: Option<usize>,
    /// Restricts positions to multiples of this value.
    pub position_quantum: Option<f64>,
}

impl SamplerConfig {
    pub fn new(lattice: Lattice, potential: Potential) -> Self {
        let (shift_width, shift_jitter) = match potential.kind {
            PotentialKind::DoubleWell { a, .. } => (2.0 * a, 0.05 * a),
            _ => (0.0, 0.0),
        };
        let step_width = 2.0 * (potential.hbar * lattice.spacing() / potential.mass).sqrt();
        SamplerConfig {
            lattice,
            potential,
            n_sweeps: 20_000,
            n_thermalization: 2_000,
            n_chains: 4,
            step_width,
            seed: 1,
            boundary: Boundary::Periodic,
            shift_width,
            shift_jitter,
            auto_tune: true,
            measure_every: 1,
            max_separation: None,
            position_quantum: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lattice.signature() != Signature::Euclidean {
            return Err(Error::Unsupported("sampling needs a Euclidean lattice".into()));
        }
        self.potential.validated()?;
        if self.lattice.n_slices() < 2 {
            return Err(Error::Config("sampler needs at least 2 slices".into()));
        }
        if self.n_sweeps <= self.n_thermalization {
            return Err(Error::Config(format!(
                "n_sweeps ({}) must exceed n_thermalization ({})",
                self.n_sweeps, self.n_thermalization
            )));
        }
        if self.n_chains == 0 || self.measure_every == 0 {
            return Err(Error::Config("n_chains and measure_every must be positive".into()));
        }
        if !(self.step_width.is_finite() && self.step_width > 0.0) {
            return Err(Error::Config(format!("step_width must be > 0, got {}", self.step_width)));
        }
        for (name, v) in [("shift_width", self.shift_width), ("shift_jitter", self.shift_jitter)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(h) = self.position_quantum {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("position_quantum must be > 0, got {h}")));
            }
        }
        if let Some(k) = self.max_separation {
            if k > self.lattice.n_slices() / 2 {
                return Err(Error::Config(format!("max_separation {k} exceeds half the lattice")));
            }
        }
        Ok(())
    }

    fn measured_sweeps(&self) -> usize {
        (self.n_sweeps - self.n_thermalization) / self.measure_every
    }

    fn correlator_len(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.max_separation.unwrap_or(self.lattice.n_slices() / 2) + 1,
            Boundary::FixedEndpoints { .. } => 0,
        }
    }
}

/// One Markov chain with its own random stream.
#[derive(Debug, Clone)]
pub struct Chain {
    config: SamplerConfig,
    rng: ChaCha8Rng,
    positions: Vec<f64>,
    accepted: u64,
    proposed: u64,
    shift_accepted: u64,
    shift_proposed: u64,
}

impl Chain {
    pub fn new(config: &SamplerConfig, stream: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        let n = config.lattice.n_slices();
        let snap = |x: f64| match config.position_quantum {
            Some(h) => (x / h).round() * h,
            None => x,
        };
        let positions = match config.boundary {
            Boundary::Periodic => vec![0.0; n + 1],
            Boundary::FixedEndpoints { start, end } => (0..=n)
                .map(|j| match j {
                    0 => start,
                    j if j == n => end,
                    j => snap(start + (end - start) * j as f64 / n as f64),
                })
                .collect(),
        };
        Ok(Chain { config: config.clone(), rng, positions, accepted: 0, proposed: 0, shift_accepted: 0, shift_proposed: 0 })
    }

    /// `q_0 … q_N`; for periodic chains `q_N = q_0`.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 { 0.0 } else { self.accepted as f64 / self.proposed as f64 }
    }

    pub fn shift_acceptance_rate(&self) -> f64 {
        if self.shift_proposed == 0 { 0.0 } else { self.shift_accepted as f64 / self.shift_proposed as f64 }
    }

    fn reset_counters(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
        self.shift_accepted = 0;
        self.shift_proposed = 0;
    }

    /// Lattice action of the current path.
    pub fn action(&self) -> Result<f64> {
        let path = match self.config.boundary {
            Boundary::Periodic => Path::periodic(self.positions.clone())?,
            Boundary::FixedEndpoints { .. } => Path::fixed(self.positions.clone())?,
        };
        discrete_action_with(&path, &self.config.lattice, &self.config.potential, PotentialRule::Trapezoid)
    }

    fn propose(&mut self, x: f64) -> f64 {
        let w = self.config.step_width;
        match self.config.position_quantum {
            None => x + w * (2.0 * self.rng.random::<f64>() - 1.0),
            Some(h) => {
                let k_max = ((w / h).round() as i64).max(1);
                let mut k = self.rng.random_range(-k_max..k_max);
                if k >= 0 {
                    k += 1;
                }
                x + k as f64 * h
            }
        }
    }

    fn accept(&mut self, delta_s: f64) -> bool {
        delta_s <= 0.0 || self.rng.random::<f64>() < (-delta_s / self.config.potential.hbar).exp()
    }

    /// Action change from moving site `j` to `y`.
    fn site_delta(&self, j: usize, y: f64) -> f64 {
        let n = self.config.lattice.n_slices();
        let dt = self.config.lattice.spacing();
        let kin = 0.5 * self.config.potential.mass / dt;
        let prev = if j == 0 { self.positions[n - 1] } else { self.positions[j - 1] };
        let next = self.positions[j + 1];
        let x = self.positions[j];
        let v = &self.config.potential;
        kin * ((next - y).powi(2) + (y - prev).powi(2) - (next - x).powi(2) - (x - prev).powi(2))
            + dt * (v.value(y) - v.value(x))
    }

    /// One single-site Metropolis pass in lattice order, then a whole-path
    /// shift proposal if enabled.
    pub fn sweep(&mut self) {
        let n = self.config.lattice.n_slices();
        let dt = self.config.lattice.spacing();
        let periodic = matches!(self.config.boundary, Boundary::Periodic);
        let (lo, hi) = if periodic { (0, n) } else { (1, n) };
        for j in lo..hi {
            let y = self.propose(self.positions[j]);
            let delta_s = self.site_delta(j, y);
            self.proposed += 1;
            if self.accept(delta_s) {
                self.accepted += 1;
                self.positions[j] = y;
                if j == 0 {
                    self.positions[n] = y;
                }
            }
        }
        let shifts = self.config.shift_width > 0.0 || self.config.shift_jitter > 0.0;
        if periodic && shifts && self.config.position_quantum.is_none() {
            let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            let d = sign * self.config.shift_width + self.config.shift_jitter * (2.0 * self.rng.random::<f64>() - 1.0);
            let v = &self.config.potential;
            let delta_s: f64 = dt * self.positions[..n].iter().map(|&x| v.value(x + d) - v.value(x)).sum::<f64>();
            self.shift_proposed += 1;
            if self.accept(delta_s) {
                self.shift_accepted += 1;
                for x in &mut self.positions {
                    *x += d;
                }
            }
        }
    }
}

/// Adjusts the step width toward 50% acceptance using batches of
/// [`TUNE_BATCH`] sweeps on a dedicated stream; stops after two
/// consecutive batches inside [`TUNE_BAND`].
pub fn tune_step(config: &SamplerConfig) -> Result<SamplerConfig> {
    let mut chain = Chain::new(config, TUNE_STREAM)?;
    let mut in_band = 0;
    for _ in 0..200 {
        chain.reset_counters();
        for _ in 0..TUNE_BATCH {
            chain.sweep();
        }
        let acc = chain.acceptance_rate();
        if (TUNE_BAND.0..=TUNE_BAND.1).contains(&acc) {
            in_band += 1;
            if in_band == 2 {
                break;
            }
        } else {
            in_band = 0;
            chain.config.step_width *= (acc / 0.5).clamp(0.3, 3.0);
        }
    }
    let mut tuned = config.clone();
    tuned.step_width = chain.config.step_width;
    Ok(tuned)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Slice average of q.
    QMean,
    /// Slice average of q².
    Q2,
    /// q at the middle slice.
    QMid,
    /// `ħ/2δ − m Σ(Δq)²/(2Nδ²) + ⟨V⟩`, the lattice `−ħ ∂ ln Z/∂T`.
    EnergyPrimitive,
    /// `⟨V + q V′/2⟩`, periodic paths only.
    EnergyVirial,
}

impl Observable {
    pub const ALL: [Observable; 5] =
        [Observable::QMean, Observable::Q2, Observable::QMid, Observable::EnergyPrimitive, Observable::EnergyVirial];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::QMean => "q_mean",
            Observable::Q2 => "q2",
            Observable::QMid => "q_mid",
            Observable::EnergyPrimitive => "energy_primitive",
            Observable::EnergyVirial => "energy_virial",
        }
    }
}

/// Bin-averaged measurements of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: u64,
    pub acceptance_rate: f64,
    pub shift_acceptance_rate: f64,
    pub step_width: f64,
    pub bin_size: usize,
    pub series: Vec<Vec<f64>>,
    /// `correlator[k][bin]` for separations of `k` slices.
    pub correlator: Vec<Vec<f64>>,
}

impl ChainRecord {
    fn series(&self, obs: Observable) -> &[f64] {
        &self.series[obs as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: SamplerConfig,
    pub chains: Vec<ChainRecord>,
    pub acceptance_rate: f64,
    pub warnings: Vec<String>,
}

struct Accumulator {
    bin_size: usize,
    count: usize,
    sums: Vec<f64>,
    corr_sums: Vec<f64>,
    series: Vec<Vec<f64>>,
    correlator: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(bin_size: usize, n_corr: usize) -> Self {
        Accumulator {
            bin_size,
            count: 0,
            sums: vec![0.0; Observable::ALL.len()],
            corr_sums: vec![0.0; n_corr],
            series: vec![Vec::new(); Observable::ALL.len()],
            correlator: vec![Vec::new(); n_corr],
        }
    }

    fn add(&mut self, values: &[f64], corr: &[f64]) {
        for (s, v) in self.sums.iter_mut().zip(values) {
            *s += v;
        }
        for (s, v) in self.corr_sums.iter_mut().zip(corr) {
            *s += v;
        }
        self.count += 1;
        if self.count == self.bin_size {
            let b = self.bin_size as f64;
            for (out, s) in self.series.iter_mut().zip(self.sums.iter_mut()) {
                out.push(*s / b);
                *s = 0.0;
            }
            for (out, s) in self.correlator.iter_mut().zip(self.corr_sums.iter_mut()) {
                out.push(*s / b);
                *s = 0.0;
            }
            self.count = 0;
        }
    }
}

fn measure(config: &SamplerConfig, q: &[f64], corr: &mut [f64]) -> [f64; 5] {
    let n = config.lattice.n_slices();
    let dt = config.lattice.spacing();
    let v = &config.potential;
    let periodic = matches!(config.boundary, Boundary::Periodic);
    let sites = if periodic { &q[..n] } else { &q[1..n] };
    let ns = sites.len() as f64;
    let q_mean = sites.iter().sum::<f64>() / ns;
    let q2 = sites.iter().map(|x| x * x).sum::<f64>() / ns;
    let kinetic: f64 = q.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let pot = sites.iter().map(|&x| v.value(x)).sum::<f64>() / ns;
    let primitive = 0.5 * v.hbar / dt - v.mass * kinetic / (2.0 * n as f64 * dt * dt) + pot;
    let virial = sites
        .iter()
        .map(|&x| {
            let (val, d1, _) = v.derivatives(x).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            val + 0.5 * x * d1
        })
        .sum::<f64>()
        / ns;
    for (k, c) in corr.iter_mut().enumerate() {
        *c = (0..n).map(|j| q[j] * q[(j + k) % n]).sum::<f64>() / n as f64;
    }
    [q_mean, q2, q[n / 2], primitive, virial]
}

fn run_chain(config: &SamplerConfig, index: u64) -> Result<ChainRecord> {
    let mut chain = Chain::new(config, index)?;
    for _ in 0..config.n_thermalization {
        chain.sweep();
    }
    chain.reset_counters();
    let m = config.measured_sweeps();
    let bin_size = m.div_ceil(MAX_BINS).max(1);
    let n_corr = config.correlator_len();
    let mut acc = Accumulator::new(bin_size, n_corr);
    let mut corr = vec![0.0; n_corr];
    for s in 0..config.n_sweeps - config.n_thermalization {
        chain.sweep();
        if (s + 1) % config.measure_every == 0 {
            let values = measure(config, &chain.positions, &mut corr);
            acc.add(&values, &corr);
        }
    }
    Ok(ChainRecord {
        chain: index,
        acceptance_rate: chain.acceptance_rate(),
        shift_acceptance_rate: chain.shift_acceptance_rate(),
        step_width: config.step_width,
        bin_size,
        series: acc.series,
        correlator: acc.correlator,
    })
}

/// Runs `n_chains` independent chains (streams `0..n_chains` of the master
/// seed) concurrently. Results are identical for identical configs.
pub fn run_sampler(config: &SamplerConfig) -> Result<Ensemble> {
    config.validate()?;
    let config = if config.auto_tune { tune_step(config)? } else { config.clone() };
    let chains = (0..config.n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain(&config, c))
        .collect::<Result<Vec<_>>>()?;
    let acceptance_rate = chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / chains.len() as f64;
    let mut warnings = Vec::new();
    if !(ACCEPTANCE_WARN_BAND.0..=ACCEPTANCE_WARN_BAND.1).contains(&acceptance_rate) {
        warnings.push(format!("acceptance rate {acceptance_rate:.3} outside [0.2, 0.8]"));
    }
    if chains.iter().any(|c| c.series[0].len() < 64) {
        warnings.push("fewer than 64 measurement bins per chain".into());
    }
    Ok(Ensemble { config, chains, acceptance_rate, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapForm {
    /// `−ln[C(τ₂)/C(τ₁)]/(τ₂ − τ₁)`.
    Log,
    /// Solves `C(τ₂)/C(τ₁) = cosh(E(β/2 − τ₂))/cosh(E(β/2 − τ₁))`, removing
    /// the backward-propagating periodic image.
    Cosh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub tau: f64,
    pub gap: EstimatorResult,
}

impl Ensemble {
    pub fn blocking(&self, obs: Observable) -> Result<Blocking> {
        let chains: Vec<&[f64]> = self.chains.iter().map(|c| c.series(obs)).collect();
        blocking(&chains)
    }

    pub fn estimate(&self, obs: Observable) -> Result<EstimatorResult> {
        Ok(self.blocking(obs)?.estimate)
    }

    /// Per-chain means of an observable, in chain order.
    pub fn chain_means(&self, obs: Observable) -> Vec<f64> {
        self.chains.iter().map(|c| crate::stats::mean(c.series(obs))).collect()
    }

    fn correlator_chains(&self, k: usize) -> Vec<&[f64]> {
        self.chains.iter().map(|c| c.correlator[k].as_slice()).collect()
    }

    fn n_correlator(&self) -> usize {
        self.chains.first().map(|c| c.correlator.len()).unwrap_or(0)
    }

    fn slice_of(&self, tau: f64) -> Result<usize> {
        if !matches!(self.config.boundary, Boundary::Periodic) {
            return Err(Error::Precondition("correlators need a periodic ensemble".into()));
        }
        let lat = &self.config.lattice;
        if !(tau >= 0.0) || tau > 0.5 * lat.extent() * (1.0 + 1e-12) {
            return Err(Error::domain(format!("separation {tau} outside [0, beta/2 = {}]", 0.5 * lat.extent())));
        }
        let k = (tau / lat.spacing()).round() as usize;
        if (k as f64 * lat.spacing() - tau).abs() > 1e-9 * lat.spacing().max(tau) {
            return Err(Error::domain(format!("separation {tau} is not a multiple of the spacing {}", lat.spacing())));
        }
        if k >= self.n_correlator() {
            return Err(Error::Precondition(format!("separation {tau} beyond the recorded correlator range")));
        }
        Ok(k)
    }

    fn gap_slices(&self, k1: usize, k2: usize, form: GapForm) -> Result<EstimatorResult> {
        let c1 = self.correlator_chains(k1);
        let c2 = self.correlator_chains(k2);
        let block = blocking(&c1)?.block_size.max(blocking(&c2)?.block_size);
        let lat = &self.config.lattice;
        let (t1, t2) = (k1 as f64 * lat.spacing(), k2 as f64 * lat.spacing());
        let half = 0.5 * lat.extent();
        let hbar = self.config.potential.hbar;
        jackknife(&[c1, c2], block, |a| {
            let r = a[1] / a[0];
            let rate = match form {
                GapForm::Log => (r > 0.0).then(|| -r.ln() / (t2 - t1)),
                GapForm::Cosh => solve_cosh_ratio(r, half - t1, half - t2),
            }?;
            Some(hbar * rate)
        })
    }
}

/// `E ≥ 0` with `cosh(E·u₂)/cosh(E·u₁) = r`, `u₁ > u₂ ≥ 0`.
fn solve_cosh_ratio(r: f64, u1: f64, u2: f64) -> Option<f64> {
    if !(r > 0.0 && r < 1.0) {
        return None;
    }
    let ln_ratio = |e: f64| {
        // ln cosh(x) stable for large x
        let lc = |x: f64| x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2;
        lc(e * u2) - lc(e * u1)
    };
    let target = r.ln();
    let mut hi = 1.0;
    while ln_ratio(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_ratio(mid) > target { lo = mid } else { hi = mid }
    }
    Some(0.5 * (lo + hi))
}

/// `C(τ) = ⟨q(0)q(τ)⟩`, averaged over slices.
pub fn correlation_function(ensemble: &Ensemble, separations: &[f64]) -> Result<Vec<EstimatorResult>> {
    separations
        .iter()
        .map(|&t| {
            let k = ensemble.slice_of(t)?;
            Ok(blocking(&ensemble.correlator_chains(k))?.estimate)
        })
        .collect()
}

/// Gap between two separations, with a block-jackknife error.
pub fn gap_between(ensemble: &Ensemble, tau1: f64, tau2: f64, form: GapForm) -> Result<EstimatorResult> {
    let (k1, k2) = (ensemble.slice_of(tau1)?, ensemble.slice_of(tau2)?);
    if k2 <= k1 {
        return Err(Error::domain("gap needs tau2 > tau1"));
    }
    ensemble.gap_slices(k1, k2, form)
}

/// Effective gap `E(τ)` from neighbouring slices over the recorded range.
/// Points where the estimator is undefined (noise-dominated tail) end the
/// series.
pub fn effective_gap(ensemble: &Ensemble, form: GapForm) -> Result<Vec<GapPoint>> {
    ensemble.slice_of(0.0)?;
    let dt = ensemble.config.lattice.spacing();
    let mut out = Vec::new();
    for k in 0..ensemble.n_correlator().saturating_sub(1) {
        match ensemble.gap_slices(k, k + 1, form) {
            Ok(gap) => out.push(GapPoint { tau: k as f64 * dt, gap }),
            Err(Error::Domain(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ho_partition_function;

    fn ho_config(beta: f64, n: usize, sweeps: usize, seed: u64) -> SamplerConfig {
        let mut c = SamplerConfig::new(Lattice::euclidean(n, beta).unwrap(), Potential::harmonic(1.0));
        c.n_sweeps = sweeps;
        c.n_thermalization = sweeps / 10;
        c.seed = seed;
        c
    }

    #[test]
    fn real_time_rejected() {
        let lat = Lattice::new(10, 1.0, Signature::RealTime).unwrap();
        let c = SamplerConfig::new(lat, Potential::harmonic(1.0));
        assert!(matches!(run_sampler(&c), Err(Error::Unsupported(_))));
    }

    #[test]
    fn config_errors() {
        let mut c = ho_config(1.0, 10, 100, 1);
        c.n_thermalization = 100;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ho_config(1.0, 10, 100, 1);
        c.step_width = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn site_delta_matches_action_difference() {
        let mut c = SamplerConfig::new(Lattice::euclidean(12, 3.0).unwrap(), Potential::double_well(1.0, 2.0));
        c.seed = 9;
        let mut chain = Chain::new(&c, 0).unwrap();
        for _ in 0..20 {
            chain.sweep();
        }
        for j in [0, 5, 11] {
            let before = chain.action().unwrap();
            let y = chain.positions[j] + 0.37;
            let delta = chain.site_delta(j, y);
            chain.positions[j] = y;
            if j == 0 {
                chain.positions[12] = y;
            }
            assert!((chain.action().unwrap() - before - delta).abs() < 1e-10);
        }
        let mut c = c.clone();
        c.boundary = Boundary::FixedEndpoints { start: -1.0, end: 2.0 };
        let mut chain = Chain::new(&c, 0).unwrap();
        chain.sweep();
        let before = chain.action().unwrap();
        let delta = chain.site_delta(4, 0.9);
        chain.positions[4] = 0.9;
        assert!((chain.action().unwrap() - before - delta).abs() < 1e-10);
        assert_eq!(chain.positions()[0], -1.0);
        assert_eq!(chain.positions()[12], 2.0);
    }

    #[test]
    fn seed_determinism() {
        let c = ho_config(4.0, 20, 2_000, 42);
        let a = run_sampler(&c).unwrap();
        let b = run_sampler(&c).unwrap();
        assert_eq!(a, b);
        let mut d = c.clone();
        d.seed = 43;
        assert_ne!(run_sampler(&d).unwrap().chains[0].series, a.chains[0].series);
    }

    #[test]
    fn chains_use_distinct_streams() {
        let e = run_sampler(&ho_config(4.0, 20, 4_000, 5)).unwrap();
        let m = e.chain_means(Observable::Q2);
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                assert_ne!(m[i], m[j]);
            }
        }
    }

    #[test]
    fn chain_independence() {
        let mut c = ho_config(4.0, 20, 40_000, 11);
        c.n_chains = 6;
        let e = run_sampler(&c).unwrap();
        let series: Vec<&[f64]> = e.chains.iter().map(|r| r.series(Observable::Q2)).collect();
        let n = series[0].len();
        let std = |x: &[f64]| {
            let m = crate::stats::mean(x);
            (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        for w in series.windows(2) {
            let (ma, mb) = (crate::stats::mean(w[0]), crate::stats::mean(w[1]));
            let cov = w[0].iter().zip(w[1]).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
            let r = cov / (std(w[0]) * std(w[1]));
            // bins are autocorrelated; allow for a few integrated times
            assert!(r.abs() < 6.0 / (n as f64).sqrt(), "r = {r}");
        }
    }

    #[test]
    fn harmonic_q2_and_correlator() {
        let mut c = ho_config(10.0, 100, 60_000, 7);
        c.n_chains = 4;
        let e = run_sampler(&c).unwrap();
        assert!(e.warnings.is_empty(), "{:?}", e.warnings);
        let q2 = e.estimate(Observable::Q2).unwrap();
        let exact = 0.5 / (5.0f64).tanh();
        assert!((q2.mean - exact).abs() < 3.0 * q2.std_error + 1e-3, "{q2:?}");
        let c0 = correlation_function(&e, &[0.0]).unwrap()[0];
        assert!((c0.mean - q2.mean).abs() < 1e-12);
        let gap = gap_between(&e, 1.0, 2.0, GapForm::Log).unwrap();
        assert!((gap.mean - 1.0).abs() < 0.05, "{gap:?}");
        assert!(correlation_function(&e, &[5.5]).is_err());
        assert!(correlation_function(&e, &[0.123]).is_err());
    }

    #[test]
    fn symmetric_means_vanish() {
        let mut c = SamplerConfig::new(Lattice::euclidean(50, 5.0).unwrap(), Potential::double_well(1.0, 2.0));
        c.n_sweeps = 40_000;
        c.seed = 3;
        let e = run_sampler(&c).unwrap();
        let q = e.estimate(Observable::QMean).unwrap();
        assert!(q.mean.abs() < 3.0 * q.std_error, "{q:?}");

        let mut c = SamplerConfig::new(Lattice::euclidean(20, 2.0).unwrap(), Potential::free());
        c.boundary = Boundary::FixedEndpoints { start: 0.0, end: 0.0 };
        c.n_sweeps = 20_000;
        c.seed = 4;
        let e = run_sampler(&c).unwrap();
        let mid = e.estimate(Observable::QMid).unwrap();
        assert!(mid.mean.abs() < 3.0 * mid.std_error, "{mid:?}");
        assert!(correlation_function(&e, &[0.0]).is_err());
    }

    #[test]
    fn internal_energy_matches_log_derivative() {
        for (beta, n) in [(2.0, 20), (5.0, 50), (10.0, 100)] {
            let mut c = ho_config(beta, n, 100_000, 21);
            c.n_chains = 4;
            let e = run_sampler(&c).unwrap();
            let h = 1e-5;
            let exact = -((ho_partition_function(beta + h, 1.0, 1.0).unwrap().ln())
                - ho_partition_function(beta - h, 1.0, 1.0).unwrap().ln())
                / (2.0 * h);
            for obs in [Observable::EnergyPrimitive, Observable::EnergyVirial] {
                let est = e.estimate(obs).unwrap();
                assert!((est.mean - exact).abs() < 3.0 * est.std_error + 2e-3, "beta {beta} {obs:?}: {est:?} vs {exact}");
            }
        }
    }

    #[test]
    fn error_scales_with_sweeps() {
        let small = run_sampler(&ho_config(4.0, 20, 20_000, 8)).unwrap().estimate(Observable::Q2).unwrap();
        let large = run_sampler(&ho_config(4.0, 20, 80_000, 8)).unwrap().estimate(Observable::Q2).unwrap();
        let ratio = large.std_error / small.std_error;
        assert!((0.3..0.75).contains(&ratio), "ratio {ratio}");
        assert!(large.n_effective > small.n_effective);
    }

    #[test]
    fn tuning_contract() {
        let base = ho_config(4.0, 40, 1_000, 2);
        let acceptance = |c: &SamplerConfig| {
            let mut chain = Chain::new(c, 0).unwrap();
            for _ in 0..200 {
                chain.sweep();
            }
            chain.reset_counters();
            for _ in 0..400 {
                chain.sweep();
            }
            chain.acceptance_rate()
        };
        for w in [20.0, 0.001] {
            let mut c = base.clone();
            c.step_width = w;
            let tuned = tune_step(&c).unwrap();
            let acc = acceptance(&tuned);
            assert!((0.4..=0.6).contains(&acc), "start {w}: acc {acc}, width {}", tuned.step_width);
        }
        let once = tune_step(&base).unwrap();
        let twice = tune_step(&once).unwrap();
        assert!((twice.step_width / once.step_width - 1.0).abs() < 0.1);
        assert_eq!(tune_step(&base).unwrap(), once);
    }

    #[test]
    fn detailed_balance_on_three_sites() {
        // Positions restricted to multiples of h: the stationary law over
        // the 3-site loop must be exp(−S/ħ) on that grid.
        let h = 0.25;
        let beta = 1.5;
        let lat = Lattice::euclidean(3, beta).unwrap();
        let pot = Potential::harmonic(1.0);
        let mut c = SamplerConfig::new(lat, pot);
        c.position_quantum = Some(h);
        c.step_width = 0.75;
        c.seed = 17;
        let kmax = 14i64;
        let grid = |k: i64| k as f64 * h;
        let mut exact = vec![0.0; (2 * kmax + 1) as usize];
        for a in -kmax..=kmax {
            for b in -kmax..=kmax {
                for d in -kmax..=kmax {
                    let path = Path::periodic(vec![grid(a), grid(b), grid(d), grid(a)]).unwrap();
                    let s = discrete_action_with(&path, &lat, &pot, PotentialRule::Trapezoid).unwrap();
                    exact[(a + kmax) as usize] += (-s).exp();
                }
            }
        }
        let z: f64 = exact.iter().sum();
        let mut chain = Chain::new(&c, 0).unwrap();
        for _ in 0..1_000 {
            chain.sweep();
        }
        let n = 400_000;
        let mut counts = vec![0usize; exact.len()];
        for _ in 0..n {
            chain.sweep();
            let k = (chain.positions()[0] / h).round() as i64;
            if k.abs() <= kmax {
                counts[(k + kmax) as usize] += 1;
            }
        }
        for (i, (&cnt, &w)) in counts.iter().zip(&exact).enumerate() {
            let p = w / z;
            let emp = cnt as f64 / n as f64;
            let sigma = (4.0 * p * (1.0 - p) / n as f64).sqrt();
            assert!((emp - p).abs() < 5.0 * sigma + 1e-4, "k = {}: {emp} vs {p}", i as i64 - kmax);
        }
    }
}
