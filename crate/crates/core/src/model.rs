//! Potentials, time lattices, discretized paths and the discrete action.
//!
//! Everything here is immutable after construction. The action uses the
//! midpoint rule by default: on leg `j` the potential is evaluated at
//! `(q_j + q_{j+1}) / 2` and the velocity is `(q_{j+1} - q_j) / δ`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// Closed-form one-dimensional potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Free,
    /// `½ m ω² q²`
    Harmonic { omega: f64 },
    /// `½ m ω² q² + λ q⁴ / 4!`
    AnharmonicQuartic { omega: f64, lambda: f64 },
    /// `λ (q² − a²)² / 4!`
    DoubleWell { lambda: f64, a: f64 },
    /// `depth · (1 − cos(2π q / period))`, minima at integer multiples of `period`.
    Periodic { period: f64, depth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub mass: f64,
    pub hbar: f64,
}

impl Potential {
    pub fn free() -> Self {
        Self::with_kind(PotentialKind::Free)
    }

    pub fn harmonic(omega: f64) -> Self {
        Self::with_kind(PotentialKind::Harmonic { omega })
    }

    pub fn anharmonic(omega: f64, lambda: f64) -> Self {
        Self::with_kind(PotentialKind::AnharmonicQuartic { omega, lambda })
    }

    pub fn double_well(lambda: f64, a: f64) -> Self {
        Self::with_kind(PotentialKind::DoubleWell { lambda, a })
    }

    pub fn periodic(period: f64, depth: f64) -> Self {
        Self::with_kind(PotentialKind::Periodic { period, depth })
    }

    fn with_kind(kind: PotentialKind) -> Self {
        Potential { kind, mass: 1.0, hbar: 1.0 }
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    /// Checks the parameter constraints; call after the builder methods.
    pub fn validated(self) -> Result<Self> {
        ensure_positive("m", self.mass)?;
        ensure_positive("hbar", self.hbar)?;
        let nonneg = |name: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be finite and >= 0, got {x}")))
            }
        };
        match self.kind {
            PotentialKind::Free => {}
            PotentialKind::Harmonic { omega } => nonneg("omega", omega)?,
            PotentialKind::AnharmonicQuartic { omega, lambda } => {
                nonneg("omega", omega)?;
                nonneg("lambda", lambda)?;
            }
            PotentialKind::DoubleWell { lambda, a } => {
                nonneg("lambda", lambda)?;
                ensure_positive("a", a)?;
            }
            PotentialKind::Periodic { period, depth } => {
                ensure_positive("period", period)?;
                nonneg("depth", depth)?;
            }
        }
        Ok(self)
    }

    /// Small-oscillation frequency about a minimum, `sqrt(V''(q_min)/m)`.
    /// For the double well this is `sqrt(λa²/3)` at unit mass.
    pub fn omega(&self) -> f64 {
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Harmonic { omega } | PotentialKind::AnharmonicQuartic { omega, .. } => omega,
            PotentialKind::DoubleWell { lambda, a } => (lambda * a * a / (3.0 * self.mass)).sqrt(),
            PotentialKind::Periodic { period, depth } => {
                let k = 2.0 * PI / period;
                (depth * k * k / self.mass).sqrt()
            }
        }
    }

    #[inline]
    pub fn value(&self, q: f64) -> f64 {
        let m = self.mass;
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Harmonic { omega } => 0.5 * m * omega * omega * q * q,
            PotentialKind::AnharmonicQuartic { omega, lambda } => {
                let q2 = q * q;
                0.5 * m * omega * omega * q2 + lambda * q2 * q2 / 24.0
            }
            PotentialKind::DoubleWell { lambda, a } => {
                let d = q * q - a * a;
                lambda * d * d / 24.0
            }
            PotentialKind::Periodic { period, depth } => {
                depth * (1.0 - (2.0 * PI * q / period).cos())
            }
        }
    }

    /// `(V, V', V'')` at `q`, all analytic.
    pub fn derivatives(&self, q: f64) -> Result<(f64, f64, f64)> {
        ensure_finite("q", q)?;
        let m = self.mass;
        let v = self.value(q);
        let (d1, d2) = match self.kind {
            PotentialKind::Free => (0.0, 0.0),
            PotentialKind::Harmonic { omega } => {
                let k = m * omega * omega;
                (k * q, k)
            }
            PotentialKind::AnharmonicQuartic { omega, lambda } => {
                let k = m * omega * omega;
                (k * q + lambda * q * q * q / 6.0, k + lambda * q * q / 2.0)
            }
            PotentialKind::DoubleWell { lambda, a } => (
                lambda * q * (q * q - a * a) / 6.0,
                lambda * (3.0 * q * q - a * a) / 6.0,
            ),
            PotentialKind::Periodic { period, depth } => {
                let k = 2.0 * PI / period;
                (depth * k * (k * q).sin(), depth * k * k * (k * q).cos())
            }
        };
        Ok((v, d1, d2))
    }
}

/// `(V, V', V'')` of `potential` at `q`.
pub fn potential_derivatives(potential: &Potential, q: f64) -> Result<(f64, f64, f64)> {
    potential.derivatives(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    RealTime,
    Euclidean,
}

/// Uniform time discretization of `[0, extent]` into `n_slices` legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    n_slices: usize,
    extent: f64,
    signature: Signature,
}

impl Lattice {
    pub fn new(n_slices: usize, extent: f64, signature: Signature) -> Result<Self> {
        if n_slices == 0 {
            return Err(Error::domain("lattice needs at least one slice"));
        }
        ensure_positive("extent", extent)?;
        Ok(Lattice { n_slices, extent, signature })
    }

    pub fn euclidean(n_slices: usize, beta: f64) -> Result<Self> {
        Self::new(n_slices, beta, Signature::Euclidean)
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n_slices as f64
    }

    /// Time of slice `j`, `j = 0..=n_slices`.
    pub fn time(&self, j: usize) -> f64 {
        if j == self.n_slices {
            self.extent
        } else {
            j as f64 * self.spacing()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    FixedEndpoints { start: f64, end: f64 },
    Periodic,
}

/// Positions `q_0 … q_N` on the slices of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    positions: Vec<f64>,
    boundary: Boundary,
}

impl Path {
    /// Fixed-endpoint path; the endpoints are read off the sequence.
    pub fn fixed(positions: Vec<f64>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::structure("a path needs at least two positions"));
        }
        let boundary = Boundary::FixedEndpoints {
            start: positions[0],
            end: positions[positions.len() - 1],
        };
        Ok(Path { positions, boundary })
    }

    /// Closed path; requires `q_0 == q_N`.
    pub fn periodic(positions: Vec<f64>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::structure("a path needs at least two positions"));
        }
        if positions[0] != positions[positions.len() - 1] {
            return Err(Error::structure(format!(
                "periodic path must close: q_0 = {} but q_N = {}",
                positions[0],
                positions[positions.len() - 1]
            )));
        }
        Ok(Path { positions, boundary: Boundary::Periodic })
    }

    /// Samples `f` on every slice time of `lattice`.
    pub fn sample(lattice: &Lattice, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::fixed((0..=lattice.n_slices()).map(|j| f(lattice.time(j))).collect())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_slices(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn reversed(&self) -> Self {
        let mut positions = self.positions.clone();
        positions.reverse();
        let boundary = match self.boundary {
            Boundary::FixedEndpoints { start, end } => Boundary::FixedEndpoints { start: end, end: start },
            Boundary::Periodic => Boundary::Periodic,
        };
        Path { positions, boundary }
    }
}

/// Where the potential is sampled on each leg of a time-sliced path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialRule {
    /// `V((q_j + q_{j+1})/2)`.
    #[default]
    Midpoint,
    /// `(V(q_j) + V(q_{j+1}))/2`, the symmetric Trotter split. Needed
    /// wherever Brownian paths are integrated over: the midpoint rule
    /// differs from it by `O(δ)` per unit time on such paths.
    Trapezoid,
}

impl PotentialRule {
    #[inline]
    pub fn leg(&self, potential: &Potential, q0: f64, q1: f64) -> f64 {
        match self {
            PotentialRule::Midpoint => potential.value(0.5 * (q0 + q1)),
            PotentialRule::Trapezoid => 0.5 * (potential.value(q0) + potential.value(q1)),
        }
    }
}

/// Time-sliced action `Σ_j δ [m q̇_j²/2 ∓ V(q̄_j)]` with the midpoint rule.
///
/// The Euclidean signature adds the potential, the real-time signature
/// subtracts it (the returned value is then the phase argument `S`).
pub fn discrete_action(path: &Path, lattice: &Lattice, potential: &Potential) -> Result<f64> {
    discrete_action_with(path, lattice, potential, PotentialRule::Midpoint)
}

pub fn discrete_action_with(
    path: &Path,
    lattice: &Lattice,
    potential: &Potential,
    rule: PotentialRule,
) -> Result<f64> {
    if path.n_slices() != lattice.n_slices() {
        return Err(Error::structure(format!(
            "path has {} positions but lattice needs {}",
            path.positions.len(),
            lattice.n_slices() + 1
        )));
    }
    if let Some(bad) = path.positions.iter().find(|q| !q.is_finite()) {
        return Err(Error::domain(format!("non-finite position {bad}")));
    }
    let dt = lattice.spacing();
    let sign = match lattice.signature() {
        Signature::Euclidean => 1.0,
        Signature::RealTime => -1.0,
    };
    let half_m = 0.5 * potential.mass;
    let sum: f64 = path
        .positions
        .windows(2)
        .map(|w| {
            let dq = w[1] - w[0];
            half_m * dq * dq / (dt * dt) + sign * rule.leg(potential, w[0], w[1])
        })
        .sum();
    Ok(sum * dt)
}
