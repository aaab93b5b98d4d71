//! Closed forms for quadratic actions: free and harmonic propagators,
//! the oscillator partition function, Green's functions, the source-term
//! generating exponent, and the instanton profile.
//!
//! Euclidean harmonic results are the analytic continuation `T → −iβ` of
//! the real-time formulas. A time-sliced Gaussian composition
//! ([`lattice_propagator`]) provides the independent lattice route.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::model::{Lattice, Potential, PotentialKind, PotentialRule, Signature};
use crate::quad::{adaptive_gk, composite_gauss_legendre, trapezoid};

/// `|sin ωT|` below this is treated as a caustic.
pub const CAUSTIC_TOLERANCE: f64 = 1e-12;

/// A propagator split as `prefactor · phase · exp(i S/ħ)` (real time) or
/// `prefactor · exp(−S_E/ħ)` (Euclidean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorValue {
    pub prefactor_modulus: f64,
    /// Unit complex number; exactly `1` for the Euclidean signature.
    pub phase: [f64; 2],
    pub classical_action: f64,
    pub hbar: f64,
    pub signature: Signature,
}

impl PropagatorValue {
    pub fn phase(&self) -> Complex64 {
        Complex64::new(self.phase[0], self.phase[1])
    }

    /// Full complex amplitude.
    pub fn value(&self) -> Complex64 {
        match self.signature {
            Signature::Euclidean => Complex64::new(self.euclidean(), 0.0),
            Signature::RealTime => {
                self.phase()
                    * self.prefactor_modulus
                    * Complex64::from_polar(1.0, self.classical_action / self.hbar)
            }
        }
    }

    /// Real Euclidean value `prefactor · exp(−S_E/ħ)`; meaningless for real time.
    pub fn euclidean(&self) -> f64 {
        self.prefactor_modulus * (-self.classical_action / self.hbar).exp()
    }

    pub fn modulus(&self) -> f64 {
        self.value().norm()
    }
}

fn euclidean_value(prefactor: f64, action: f64, hbar: f64) -> PropagatorValue {
    PropagatorValue {
        prefactor_modulus: prefactor,
        phase: [1.0, 0.0],
        classical_action: action,
        hbar,
        signature: Signature::Euclidean,
    }
}

/// `1/sqrt(i·s)` on the principal branch for `s = ±1`.
fn fresnel_phase(sign: f64) -> [f64; 2] {
    let p = Complex64::new(0.0, sign).sqrt().inv();
    [p.re, p.im]
}

/// Free-particle propagator from `q` at time 0 to `q_final` after `extent`.
pub fn free_propagator(
    q: f64,
    q_final: f64,
    extent: f64,
    mass: f64,
    hbar: f64,
    signature: Signature,
) -> Result<PropagatorValue> {
    ensure_positive("extent", extent)?;
    ensure_positive("m", mass)?;
    ensure_positive("hbar", hbar)?;
    ensure_finite("q", q)?;
    ensure_finite("q'", q_final)?;
    let dq = q_final - q;
    let prefactor = (mass / (2.0 * PI * hbar * extent)).sqrt();
    let action = mass * dq * dq / (2.0 * extent);
    Ok(match signature {
        Signature::Euclidean => euclidean_value(prefactor, action, hbar),
        Signature::RealTime => PropagatorValue {
            prefactor_modulus: prefactor,
            phase: fresnel_phase(1.0),
            classical_action: action,
            hbar,
            signature,
        },
    })
}

/// Harmonic-oscillator propagator.
///
/// Real time requires `sin ωT ≠ 0`; at a caustic this returns
/// [`Error::Caustic`]. `ω = 0` reduces to [`free_propagator`].
pub fn ho_propagator(
    q: f64,
    q_final: f64,
    extent: f64,
    mass: f64,
    omega: f64,
    hbar: f64,
    signature: Signature,
) -> Result<PropagatorValue> {
    ensure_positive("extent", extent)?;
    ensure_positive("m", mass)?;
    ensure_positive("hbar", hbar)?;
    ensure_finite("q", q)?;
    ensure_finite("q'", q_final)?;
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::domain(format!("omega must be finite and >= 0, got {omega}")));
    }
    if omega == 0.0 {
        return free_propagator(q, q_final, extent, mass, hbar, signature);
    }
    let wt = omega * extent;
    let ends = q * q + q_final * q_final;
    match signature {
        Signature::Euclidean => {
            let sh = wt.sinh();
            let prefactor = (mass * omega / (2.0 * PI * hbar * sh)).sqrt();
            // (cosh x · ends − 2 q q')/sinh x, written to stay finite at large x.
            let action = 0.5 * mass * omega * (ends / wt.tanh() - 2.0 * q * q_final / sh);
            Ok(euclidean_value(prefactor, action, hbar))
        }
        Signature::RealTime => {
            let s = wt.sin();
            if s.abs() < CAUSTIC_TOLERANCE {
                return Err(Error::Caustic { phase: wt, sin: s });
            }
            let prefactor = (mass * omega / (2.0 * PI * hbar * s.abs())).sqrt();
            let action = mass * omega / (2.0 * s) * (ends * wt.cos() - 2.0 * q * q_final);
            Ok(PropagatorValue {
                prefactor_modulus: prefactor,
                phase: fresnel_phase(s.signum()),
                classical_action: action,
                hbar,
                signature,
            })
        }
    }
}

/// `Z(β) = e^{−βħω/2} / (1 − e^{−βħω})`.
pub fn ho_partition_function(beta: f64, omega: f64, hbar: f64) -> Result<f64> {
    ensure_positive("beta", beta)?;
    ensure_positive("omega", omega)?;
    ensure_positive("hbar", hbar)?;
    let x = beta * hbar * omega;
    Ok((-0.5 * x).exp() / -(-x).exp_m1())
}

/// Trace of the Euclidean oscillator propagator, `∫dq K_E(q, β; q, 0)`,
/// by composite Gauss–Legendre quadrature over a window that contains the
/// diagonal's support.
///
/// Time here is `β` in units where `K_E ∝ e^{−βH/ħ}`; to compare with
/// [`ho_partition_function`] pass `extent = ħβ`.
pub fn trace_by_quadrature(extent: f64, mass: f64, omega: f64, hbar: f64) -> Result<f64> {
    let diag = |q: f64| -> f64 {
        ho_propagator(q, q, extent, mass, omega, hbar, Signature::Euclidean)
            .map(|k| k.euclidean())
            .unwrap_or(f64::NAN)
    };
    let peak = diag(0.0);
    if !peak.is_finite() {
        // Surface the underlying domain error.
        ho_propagator(0.0, 0.0, extent, mass, omega, hbar, Signature::Euclidean)?;
    }
    let mut half_width = 1.0;
    while diag(half_width) > 1e-40 * peak {
        half_width *= 2.0;
        if half_width > 1e12 {
            return Err(Error::domain("diagonal propagator does not decay"));
        }
    }
    Ok(composite_gauss_legendre(diag, -half_width, half_width, 64, 20))
}

fn check_unit_interval(name: &str, t: f64, beta: f64) -> Result<()> {
    if !(t.is_finite() && (0.0..=beta).contains(&t)) {
        return Err(Error::domain(format!("{name} = {t} outside [0, {beta}]")));
    }
    Ok(())
}

/// Green's function of `m(d²/dτ² − ω²)` on `[0, β]` with Dirichlet ends:
/// `−sinh(ωτ_<) sinh(ω(β−τ_>)) / (mω sinh ωβ)`.
pub fn dirichlet_green(tau: f64, tau_p: f64, beta: f64, mass: f64, omega: f64) -> Result<f64> {
    ensure_positive("beta", beta)?;
    ensure_positive("m", mass)?;
    check_unit_interval("tau", tau, beta)?;
    check_unit_interval("tau'", tau_p, beta)?;
    Ok(dirichlet_green_unchecked(tau, tau_p, beta, mass, omega))
}

pub(crate) fn dirichlet_green_unchecked(tau: f64, tau_p: f64, beta: f64, mass: f64, omega: f64) -> f64 {
    let (lo, hi) = if tau <= tau_p { (tau, tau_p) } else { (tau_p, tau) };
    if omega == 0.0 {
        return -lo * (beta - hi) / (mass * beta);
    }
    // sinh(a)·sinh(b)/sinh(a+b+c) with c = hi − lo ≥ 0, evaluated with
    // exponentials scaled out so large ωβ does not overflow.
    let a = omega * lo;
    let b = omega * (beta - hi);
    let c = omega * (hi - lo);
    let num = (-(2.0 * a)).exp_m1() * (-(2.0 * b)).exp_m1();
    let den = -(-(2.0 * (a + b + c))).exp_m1();
    -0.5 * (-c).exp() * num / den / (mass * omega)
}

/// The `β → ∞` limit on the whole line: `−e^{−ω|τ−τ'|}/(2mω)`.
pub fn infinite_line_green(tau: f64, tau_p: f64, mass: f64, omega: f64) -> f64 {
    -(-omega * (tau - tau_p).abs()).exp() / (2.0 * mass * omega)
}

/// Regulator of the Feynman pole prescription `k² − ω² + iε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolePrescription {
    epsilon: f64,
}

impl PolePrescription {
    pub fn new(epsilon: f64) -> Result<Self> {
        ensure_positive("epsilon", epsilon)?;
        Ok(PolePrescription { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The default ladder `{1e-2, 1e-3, 1e-4}`.
    pub fn default_ladder() -> Vec<PolePrescription> {
        [1e-2, 1e-3, 1e-4].into_iter().map(|e| PolePrescription { epsilon: e }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeynmanGreen {
    pub epsilon: f64,
    pub value: [f64; 2],
    /// Quadrature error estimate plus the truncated-tail remainder.
    pub residual: f64,
}

impl FeynmanGreen {
    pub fn complex(&self) -> Complex64 {
        Complex64::new(self.value[0], self.value[1])
    }
}

/// `∫ dk/2π · i e^{−ikΔt} / (k² − ω² + iε)` by adaptive quadrature.
///
/// The integrand is even in `k`, so the integral is folded onto
/// `[0, ∞)`; the tail beyond the cutoff is added from its
/// integration-by-parts expansion and its remainder enters `residual`.
pub fn feynman_green_qm(dt: f64, omega: f64, prescription: PolePrescription) -> Result<FeynmanGreen> {
    ensure_finite("dt", dt)?;
    ensure_positive("omega", omega)?;
    let eps = prescription.epsilon;
    let t = dt.abs();
    let omega2 = Complex64::new(omega * omega, -eps);
    let g = |k: f64| (Complex64::new(k * k, 0.0) - omega2).inv();
    let cutoff = if t == 0.0 { 2000.0 * omega } else { (2000.0 * omega).max(200.0 / t) };

    // Dense breakpoints around the pole, geometric outwards.
    let width = (eps / omega).max(1e-12);
    let mut breaks = vec![0.0, 0.5 * omega];
    let mut offsets = Vec::new();
    let mut w = width;
    while w < 0.5 * omega {
        offsets.push(w);
        w *= 4.0;
    }
    for o in offsets.iter().rev() {
        breaks.push(omega - o);
    }
    breaks.push(omega);
    for o in &offsets {
        breaks.push(omega + o);
    }
    breaks.push(1.5 * omega);
    let mut edge = 1.5 * omega;
    while edge < cutoff {
        edge = (edge * 2.0).min(cutoff);
        breaks.push(edge);
    }
    // Keep each oscillation period resolved by the initial partition.
    if t > 0.0 {
        let period = 2.0 * PI / t;
        let mut refined = vec![breaks[0]];
        for win in breaks.windows(2) {
            let pieces = ((win[1] - win[0]) / period).ceil().max(1.0) as usize;
            for p in 1..=pieces {
                refined.push(win[0] + (win[1] - win[0]) * p as f64 / pieces as f64);
            }
        }
        breaks = refined;
    }

    let tol = 1e-11 / omega;
    let body = adaptive_gk(|k| g(k) * (k * t).cos(), &breaks, tol, 200_000);

    let (tail, tail_residual) = if t == 0.0 {
        // ∫_K^∞ dk/(k²−Ω²) = (1/2Ω) ln((K+Ω)/(K−Ω)), Ω = sqrt(ω² − iε).
        let big_omega = omega2.sqrt();
        let k = Complex64::new(cutoff, 0.0);
        (((k + big_omega) / (k - big_omega)).ln() / (2.0 * big_omega), 0.0)
    } else {
        let k = cutoff;
        let gk = g(k);
        let dg = -2.0 * k * gk * gk;
        let tail = -gk * (k * t).sin() / t - dg * (k * t).cos() / (t * t);
        let remainder = 6.0 / (k.powi(4) * t.powi(3));
        (tail, remainder)
    };
    let value = Complex64::i() * (body.value + tail) / PI;
    let residual = (body.error + tail_residual) / PI;
    if !body.converged {
        return Err(Error::Quadrature { residual });
    }
    Ok(FeynmanGreen { epsilon: eps, value: [value.re, value.im], residual })
}

/// The closed form `(1/2ω) e^{−iω|Δt|}` reached as `ε → 0⁺`.
pub fn feynman_green_limit(dt: f64, omega: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (2.0 * omega), -omega * dt.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeynmanLadder {
    pub rungs: Vec<FeynmanGreen>,
    /// Linear Richardson extrapolation to `ε = 0` from the two smallest rungs.
    pub extrapolated: [f64; 2],
}

/// Evaluates [`feynman_green_qm`] on every rung and extrapolates linearly
/// in `ε` (the leading finite-`ε` error is `O(ε)`).
pub fn feynman_green_ladder(dt: f64, omega: f64, ladder: &[PolePrescription]) -> Result<FeynmanLadder> {
    if ladder.len() < 2 {
        return Err(Error::Precondition("extrapolation needs at least two ε values".into()));
    }
    let mut sorted = ladder.to_vec();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let rungs = sorted
        .iter()
        .map(|p| feynman_green_qm(dt, omega, *p))
        .collect::<Result<Vec<_>>>()?;
    let n = rungs.len();
    let (a, b) = (&rungs[n - 2], &rungs[n - 1]);
    let slope = (a.complex() - b.complex()) / (a.epsilon - b.epsilon);
    let ext = b.complex() - slope * b.epsilon;
    Ok(FeynmanLadder { rungs, extrapolated: [ext.re, ext.im] })
}

/// Source samples `J(τ_j)` on the slices of a Euclidean lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFunction {
    lattice: Lattice,
    samples: Vec<f64>,
}

impl SourceFunction {
    pub fn new(lattice: Lattice, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != lattice.n_slices() + 1 {
            return Err(Error::structure(format!(
                "source has {} samples, lattice has {} slice times",
                samples.len(),
                lattice.n_slices() + 1
            )));
        }
        if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
            return Err(Error::domain(format!("non-finite source sample {x}")));
        }
        Ok(SourceFunction { lattice, samples })
    }

    pub fn zero(lattice: Lattice) -> Self {
        let n = lattice.n_slices() + 1;
        SourceFunction { lattice, samples: vec![0.0; n] }
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..=lattice.n_slices()).map(|j| f(lattice.time(j))).collect();
        Self::new(lattice, samples)
    }

    /// Discretized `c·δ(τ − τ₁)`: `c/δ` on the slice nearest `τ₁`.
    pub fn spike(lattice: Lattice, tau: f64, weight: f64) -> Result<Self> {
        check_unit_interval("tau", tau, lattice.extent())?;
        let dt = lattice.spacing();
        let j = ((tau / dt).round() as usize).min(lattice.n_slices());
        let mut s = Self::zero(lattice);
        s.samples[j] = weight / dt;
        Ok(s)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn scaled(&self, c: f64) -> Self {
        SourceFunction { lattice: self.lattice, samples: self.samples.iter().map(|x| x * c).collect() }
    }
}

/// `½ ∬ J(τ) G(τ,τ') J(τ') dτ dτ'` with the Dirichlet Green's function on
/// `[0, β]`, by the composite trapezoid rule in both variables.
pub fn quadratic_generating_exponent(source: &SourceFunction, beta: f64, mass: f64, omega: f64) -> Result<f64> {
    let lat = source.lattice();
    if lat.signature() != Signature::Euclidean {
        return Err(Error::structure("source must live on a Euclidean lattice"));
    }
    if (lat.extent() - beta).abs() > 1e-12 * beta {
        return Err(Error::structure(format!(
            "source lattice spans {} but beta = {beta}",
            lat.extent()
        )));
    }
    ensure_positive("m", mass)?;
    let dt = lat.spacing();
    let j = source.samples();
    let n = j.len();
    let row: Vec<f64> = (0..n)
        .map(|a| {
            if j[a] == 0.0 {
                return 0.0;
            }
            let inner: Vec<f64> = (0..n)
                .map(|b| dirichlet_green_unchecked(lat.time(a), lat.time(b), beta, mass, omega) * j[b])
                .collect();
            j[a] * trapezoid(&inner, dt)
        })
        .collect();
    Ok(0.5 * trapezoid(&row, dt))
}

fn instanton_omega(a: f64, lambda: f64) -> f64 {
    (lambda * a * a / 3.0).sqrt()
}

/// Zero-energy double-well trajectory `a·tanh((ω/2)(τ − τ₀))`,
/// `ω = sqrt(λa²/3)` (unit mass).
pub fn instanton_profile(tau: f64, a: f64, lambda: f64, tau0: f64) -> f64 {
    let w = instanton_omega(a, lambda);
    a * (0.5 * w * (tau - tau0)).tanh()
}

/// `dq/dτ` along [`instanton_profile`].
pub fn instanton_velocity(tau: f64, a: f64, lambda: f64, tau0: f64) -> f64 {
    let w = instanton_omega(a, lambda);
    let c = (0.5 * w * (tau - tau0)).cosh();
    0.5 * a * w / (c * c)
}

/// Exact Gaussian kernel `norm · exp(−(p (y − x)² + r y² + t x²))` from `x`
/// to `y`. Kept in difference form so composing many slices never subtracts
/// the large kinetic coefficients from each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub norm: f64,
    pub p: f64,
    pub r: f64,
    pub t: f64,
}

impl GaussianKernel {
    /// One Euclidean time slice of a quadratic potential.
    pub fn slice(potential: &Potential, spacing: f64, rule: PotentialRule) -> Result<Self> {
        let m = potential.mass;
        let hbar = potential.hbar;
        let omega = match potential.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Harmonic { omega } => omega,
            _ => return Err(Error::Unsupported("Gaussian slicing needs a free or harmonic potential".into())),
        };
        let kin = m / (2.0 * hbar * spacing);
        let k = spacing * m * omega * omega / hbar;
        // midpoint: (k/8)(x + y)² = (k/4)(x² + y²) − (k/8)(y − x)²
        let p = match rule {
            PotentialRule::Midpoint => kin - k / 8.0,
            PotentialRule::Trapezoid => kin,
        };
        Ok(GaussianKernel { norm: (m / (2.0 * PI * hbar * spacing)).sqrt(), p, r: k / 4.0, t: k / 4.0 })
    }

    /// Kernel of `self` followed by `next`: `∫dz next(y,z) self(z,x)`.
    pub fn then(&self, next: &GaussianKernel) -> GaussianKernel {
        let inner = self.r + next.t;
        let s = self.p + next.p + inner;
        GaussianKernel {
            norm: self.norm * next.norm * (PI / s).sqrt(),
            p: self.p * next.p / s,
            r: next.r + next.p * inner / s,
            t: self.t + self.p * inner / s,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = y - x;
        self.norm * (-(self.p * d * d + self.r * y * y + self.t * x * x)).exp()
    }
}

/// N-slice Euclidean propagator obtained by integrating out every interior
/// slice of the time-sliced action exactly (iterated Gaussian convolution),
/// with the trapezoid potential rule.
pub fn lattice_propagator(potential: &Potential, q: f64, q_final: f64, lattice: &Lattice) -> Result<f64> {
    lattice_propagator_with(potential, q, q_final, lattice, PotentialRule::Trapezoid)
}

pub fn lattice_propagator_with(
    potential: &Potential,
    q: f64,
    q_final: f64,
    lattice: &Lattice,
    rule: PotentialRule,
) -> Result<f64> {
    if lattice.signature() != Signature::Euclidean {
        return Err(Error::Unsupported("lattice propagator is Euclidean only".into()));
    }
    // Square-and-multiply: O(log N) compositions keep the cancellation in
    // the exponent coefficients from accumulating.
    let mut power = GaussianKernel::slice(potential, lattice.spacing(), rule)?;
    let mut acc: Option<GaussianKernel> = None;
    let mut n = lattice.n_slices();
    while n > 0 {
        if n & 1 == 1 {
            acc = Some(match acc {
                Some(k) => k.then(&power),
                None => power,
            });
        }
        n >>= 1;
        if n > 0 {
            power = power.then(&power);
        }
    }
    Ok(acc.expect("lattices have at least one slice").eval(q, q_final))
}
