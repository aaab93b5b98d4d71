//! Finite-difference oracle for `H = p²/2m + V(q)`.
//!
//! Second-order central differences with Dirichlet walls give a symmetric
//! tridiagonal matrix. Eigenvalues come from Sturm-sequence bisection and
//! eigenvectors from inverse iteration. By default each spectrum is
//! computed on the requested grid and on the grid with half the spacing,
//! and the two are Richardson-combined, cancelling the `O(h²)` error.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::model::{Potential, PotentialKind};

/// Edge amplitude (relative to the peak) the two lowest states must decay below.
pub const EDGE_DECAY_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_POINTS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub n_points: usize,
}

impl SpectralGrid {
    pub fn new(q_min: f64, q_max: f64, n_points: usize) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite() && q_min < q_max) {
            return Err(Error::domain(format!("grid needs q_min < q_max, got [{q_min}, {q_max}]")));
        }
        if n_points < 16 {
            return Err(Error::domain(format!("grid needs at least 16 points, got {n_points}")));
        }
        Ok(SpectralGrid { q_min, q_max, n_points })
    }

    pub fn symmetric(half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_points)
    }

    /// `[−L, L]` with `L = max(8, a + 8·sqrt(ħ/mω))`, wide enough for the
    /// low states of every supported potential.
    pub fn default_for(potential: &Potential) -> Self {
        let w = potential.omega();
        let width = if w > 0.0 { (potential.hbar / (potential.mass * w)).sqrt() } else { 1.0 };
        let a = match potential.kind {
            PotentialKind::DoubleWell { a, .. } => a,
            _ => 0.0,
        };
        let half = (a + 8.0 * width).max(8.0);
        SpectralGrid { q_min: -half, q_max: half, n_points: DEFAULT_POINTS }
    }

    pub fn spacing(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.spacing()
    }

    /// Same interval, half the spacing.
    pub fn refined(&self) -> Self {
        SpectralGrid { n_points: 2 * self.n_points - 1, ..*self }
    }

    fn widened(&self, factor: f64) -> Self {
        let mid = 0.5 * (self.q_min + self.q_max);
        let half = 0.5 * (self.q_max - self.q_min) * factor;
        let n = ((self.n_points - 1) as f64 * factor).ceil() as usize + 1;
        SpectralGrid { q_min: mid - half, q_max: mid + half, n_points: n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Plain second-order differences on the requested grid.
    SecondOrder,
    /// Combination `(4·E(h/2) − E(h))/3` of two second-order solves.
    #[default]
    Richardson,
}

/// Eigenpairs on a grid; `eigenfunctions[j][i]` is `φ_j` at grid point `i`
/// (boundary points included, where it vanishes). Normalized so that
/// `h·Σ_i φ_j(q_i)² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: SpectralGrid,
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
    pub scheme: Scheme,
    /// `max(|φ(edge)|)/max|φ|` over the outer grid points for `φ₀, φ₁`.
    pub edge_amplitude: f64,
}

impl Spectrum {
    /// `φ_j` at a grid point nearest `q`.
    pub fn value_at(&self, j: usize, q: f64) -> f64 {
        let h = self.grid.spacing();
        let i = ((q - self.grid.q_min) / h).round().clamp(0.0, (self.grid.n_points - 1) as f64) as usize;
        self.eigenfunctions[j][i]
    }

    /// Grid inner product `h·Σ φ_i φ_j`.
    pub fn overlap(&self, i: usize, j: usize) -> f64 {
        let h = self.grid.spacing();
        h * self.eigenfunctions[i].iter().zip(&self.eigenfunctions[j]).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `h·Σ φ_j² f(q)`.
    pub fn expectation(&self, j: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.grid.spacing();
        h * self.eigenfunctions[j].iter().enumerate().map(|(i, p)| p * p * f(self.grid.point(i))).sum::<f64>()
    }

    /// `+1` for even, `−1` for odd, `0` if neither within `tol` (symmetric grids only).
    pub fn parity(&self, j: usize, tol: f64) -> i32 {
        let phi = &self.eigenfunctions[j];
        let n = phi.len();
        let scale = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let even = (0..n).all(|i| (phi[i] - phi[n - 1 - i]).abs() <= tol * scale);
        let odd = (0..n).all(|i| (phi[i] + phi[n - 1 - i]).abs() <= tol * scale);
        match (even, odd) {
            (true, false) => 1,
            (false, true) => -1,
            _ => 0,
        }
    }
}

struct Tridiagonal {
    diag: Vec<f64>,
    off: f64,
}

impl Tridiagonal {
    fn hamiltonian(potential: &Potential, grid: &SpectralGrid) -> Self {
        let h = grid.spacing();
        let t = potential.hbar * potential.hbar / (2.0 * potential.mass * h * h);
        let diag = (1..grid.n_points - 1).map(|i| 2.0 * t + potential.value(grid.point(i))).collect();
        Tridiagonal { diag, off: -t }
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64) -> usize {
        let e2 = self.off * self.off;
        let mut count = 0;
        let mut q = 1.0;
        for (i, d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - x } else { d - x - e2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + self.off.abs());
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bounds(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().fold(f64::INFINITY, |m, d| m.min(d - r));
        let hi = self.diag.iter().fold(f64::NEG_INFINITY, |m, d| m.max(d + r));
        (lo, hi)
    }

    /// `k`-th smallest eigenvalue (0-based) by bisection.
    fn eigenvalue(&self, k: usize, lo: f64, hi: f64) -> f64 {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solves `(T − σ)x = b` by LU with partial pivoting.
    fn shifted_solve(&self, sigma: f64, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        // Row i of U holds (u0, u1, u2) at columns (i, i+1, i+2).
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut rhs = b.to_vec();
        let e = self.off;
        // current row candidates
        let mut cur = (self.diag[0] - sigma, if n > 1 { e } else { 0.0 }, 0.0);
        for i in 0..n {
            if i + 1 < n {
                let next = (e, self.diag[i + 1] - sigma, if i + 2 < n { e } else { 0.0 });
                // next row expressed at columns (i, i+1, i+2)
                if cur.0.abs() >= next.0.abs() {
                    let l = next.0 / nonzero(cur.0);
                    u0[i] = cur.0;
                    u1[i] = cur.1;
                    u2[i] = cur.2;
                    rhs[i + 1] -= l * rhs[i];
                    cur = (next.1 - l * cur.1, next.2 - l * cur.2, 0.0);
                } else {
                    let l = cur.0 / next.0;
                    u0[i] = next.0;
                    u1[i] = next.1;
                    u2[i] = next.2;
                    rhs.swap(i, i + 1);
                    rhs[i + 1] -= l * rhs[i];
                    cur = (cur.1 - l * next.1, cur.2 - l * next.2, 0.0);
                }
            } else {
                u0[i] = cur.0;
                u1[i] = 0.0;
                u2[i] = 0.0;
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            if i + 1 < n {
                s -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= u2[i] * x[i + 2];
            }
            x[i] = s / nonzero(u0[i]);
        }
        x
    }

    fn eigenvector(&self, lambda: f64, previous: &[Vec<f64>]) -> Vec<f64> {
        let n = self.diag.len();
        let scale = self.off.abs().max(lambda.abs()).max(1.0);
        let sigma = lambda + 1e-13 * scale;
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919 % 1013) as f64 / 1013.0)).collect();
        for _ in 0..4 {
            orthogonalize(&mut x, previous);
            normalize(&mut x);
            x = self.shifted_solve(sigma, &x);
        }
        orthogonalize(&mut x, previous);
        normalize(&mut x);
        x
    }
}

fn nonzero(x: f64) -> f64 {
    if x == 0.0 {
        f64::MIN_POSITIVE.sqrt()
    } else {
        x
    }
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
}

fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = x.iter().zip(b).map(|(a, c)| a * c).sum();
        x.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
    }
}

/// Fix sign so the first significant component is positive.
fn fix_sign(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-3 * peak) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Lowest `n_states` eigenpairs from one second-order solve; eigenvectors
/// include the zero boundary values and are grid-normalized.
fn solve_raw(potential: &Potential, grid: &SpectralGrid, n_states: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let t = Tridiagonal::hamiltonian(potential, grid);
    let (lo, hi) = t.bounds();
    let h = grid.spacing();
    let mut values = Vec::with_capacity(n_states);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n_states);
    for k in 0..n_states {
        let lambda = t.eigenvalue(k, lo, hi);
        let v = t.eigenvector(lambda, &vectors);
        values.push(lambda);
        vectors.push(v);
    }
    let full = vectors
        .into_iter()
        .map(|v| {
            let mut f = Vec::with_capacity(grid.n_points);
            f.push(0.0);
            f.extend(v.iter().map(|x| x / h.sqrt()));
            f.push(0.0);
            fix_sign(&mut f);
            f
        })
        .collect();
    (values, full)
}

fn edge_amplitude(grid: &SpectralGrid, functions: &[Vec<f64>]) -> f64 {
    // Outermost 1% of the interval (at least two interior points) on each side.
    let n = grid.n_points;
    let band = (n / 100).max(3);
    functions
        .iter()
        .take(2)
        .map(|f| {
            let peak = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let edge = f[..band].iter().chain(&f[n - band..]).fold(0.0f64, |m, v| m.max(v.abs()));
            edge / peak
        })
        .fold(0.0, f64::max)
}

/// Lowest `n_states` eigenpairs of the finite-difference Hamiltonian.
///
/// Fails with [`Error::GridTooSmall`] when `φ₀` or `φ₁` has not decayed
/// below [`EDGE_DECAY_THRESHOLD`] at the grid edges.
pub fn diagonalize(potential: &Potential, grid: &SpectralGrid, n_states: usize) -> Result<Spectrum> {
    diagonalize_with(potential, grid, n_states, Scheme::Richardson)
}

pub fn diagonalize_with(potential: &Potential, grid: &SpectralGrid, n_states: usize, scheme: Scheme) -> Result<Spectrum> {
    let potential = potential.validated()?;
    if n_states == 0 || n_states > grid.n_points - 2 {
        return Err(Error::domain(format!("cannot extract {n_states} states from {} points", grid.n_points)));
    }
    let (coarse_values, coarse_vectors) = solve_raw(&potential, grid, n_states);
    let (eigenvalues, eigenfunctions) = match scheme {
        Scheme::SecondOrder => (coarse_values, coarse_vectors),
        Scheme::Richardson => {
            let fine = grid.refined();
            let (fine_values, fine_vectors) = solve_raw(&potential, &fine, n_states);
            let values = coarse_values.iter().zip(&fine_values).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
            let h = grid.spacing();
            let vectors = coarse_vectors
                .iter()
                .zip(&fine_vectors)
                .map(|(c, f)| {
                    let sign = if c.iter().zip(f.iter().step_by(2)).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
                    let mut v: Vec<f64> =
                        c.iter().zip(f.iter().step_by(2)).map(|(a, b)| (4.0 * sign * b - a) / 3.0).collect();
                    let norm = (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
                    v.iter_mut().for_each(|x| *x /= norm);
                    v
                })
                .collect();
            (values, vectors)
        }
    };
    let edge = edge_amplitude(grid, &eigenfunctions);
    if edge > EDGE_DECAY_THRESHOLD {
        return Err(Error::GridTooSmall { edge_amplitude: edge, threshold: EDGE_DECAY_THRESHOLD });
    }
    Ok(Spectrum { grid: *grid, eigenvalues, eigenfunctions, scheme, edge_amplitude: edge })
}

/// [`diagonalize`] starting from [`SpectralGrid::default_for`], widening
/// the interval (at fixed spacing) until the edge-decay check passes.
pub fn diagonalize_auto(potential: &Potential, n_states: usize) -> Result<Spectrum> {
    let mut grid = SpectralGrid::default_for(potential);
    for _ in 0..8 {
        match diagonalize(potential, &grid, n_states) {
            Err(Error::GridTooSmall { .. }) => grid = grid.widened(1.5),
            other => return other,
        }
    }
    diagonalize(potential, &grid, n_states)
}

/// Change of the two lowest eigenvalues when the point count is doubled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub e0_change: f64,
    pub e1_change: f64,
}

impl ConvergenceReport {
    pub fn converged(&self, tol: f64) -> bool {
        self.e0_change < tol && self.e1_change < tol
    }
}

pub fn convergence_check(potential: &Potential, grid: &SpectralGrid) -> Result<ConvergenceReport> {
    let a = diagonalize(potential, grid, 2)?;
    let b = diagonalize(potential, &grid.refined(), 2)?;
    Ok(ConvergenceReport {
        e0_change: (a.eigenvalues[0] - b.eigenvalues[0]).abs(),
        e1_change: (a.eigenvalues[1] - b.eigenvalues[1]).abs(),
    })
}

/// Relative size below which further Boltzmann terms are dropped.
pub const PARTITION_TRUNCATION: f64 = 1e-16;

/// `Σ_j e^{−βE_j}` over the available states; fails if the last available
/// term is still above the truncation threshold.
pub fn partition_from_spectrum(spectrum: &Spectrum, beta: f64) -> Result<f64> {
    ensure_positive("beta", beta)?;
    let e0 = spectrum.eigenvalues[0];
    // Sum relative to the ground state to avoid underflow at large β.
    let mut sum = 0.0;
    for e in &spectrum.eigenvalues {
        let term = (-beta * (e - e0)).exp();
        sum += term;
        if term < PARTITION_TRUNCATION * sum {
            return Ok(sum * (-beta * e0).exp());
        }
    }
    Err(Error::Precondition(format!(
        "{} states are not enough to converge Z at beta = {beta}",
        spectrum.eigenvalues.len()
    )))
}

/// `E₁ − E₀` for a double well.
pub fn splitting(potential: &Potential, grid: &SpectralGrid) -> Result<f64> {
    if !matches!(potential.kind, PotentialKind::DoubleWell { .. }) {
        return Err(Error::Unsupported("splitting is defined for the double well".into()));
    }
    let s = diagonalize(potential, grid, 2)?;
    Ok(s.eigenvalues[1] - s.eigenvalues[0])
}

/// [`splitting`] on the automatically sized grid.
pub fn splitting_auto(potential: &Potential) -> Result<f64> {
    if !matches!(potential.kind, PotentialKind::DoubleWell { .. }) {
        return Err(Error::Unsupported("splitting is defined for the double well".into()));
    }
    let s = diagonalize_auto(potential, 2)?;
    Ok(s.eigenvalues[1] - s.eigenvalues[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ho_propagator;
    use crate::model::Signature;

    fn ho_grid() -> SpectralGrid {
        SpectralGrid::symmetric(8.0, 2048).unwrap()
    }

    #[test]
    fn harmonic_levels() {
        let s = diagonalize(&Potential::harmonic(1.0), &ho_grid(), 6).unwrap();
        for (j, e) in s.eigenvalues.iter().enumerate() {
            assert!((e - (j as f64 + 0.5)).abs() < 1e-6, "E_{j} = {e}");
        }
        let raw = diagonalize_with(&Potential::harmonic(1.0), &ho_grid(), 1, Scheme::SecondOrder).unwrap();
        // plain differences sit below the exact level by ~h²⟨p⁴⟩/24
        let h = ho_grid().spacing();
        let shift = 0.5 - raw.eigenvalues[0];
        assert!(shift > 0.0 && (shift - h * h * 0.75 / 24.0).abs() < 0.05 * shift);
    }

    #[test]
    fn orthonormal_and_sorted() {
        let s = diagonalize(&Potential::double_well(1.0, 2.0), &SpectralGrid::symmetric(10.0, 2048).unwrap(), 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let o = s.overlap(i, j);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((o - expect).abs() < 1e-8, "<{i}|{j}> = {o}");
            }
        }
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn double_well_parity_alternates() {
        let s = diagonalize(&Potential::double_well(1.0, 2.0), &SpectralGrid::symmetric(10.0, 2048).unwrap(), 4).unwrap();
        assert_eq!(s.parity(0, 1e-6), 1);
        assert_eq!(s.parity(1, 1e-6), -1);
        assert_eq!(s.parity(2, 1e-6), 1);
        assert_eq!(s.parity(3, 1e-6), -1);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let err = diagonalize(&Potential::harmonic(1.0), &SpectralGrid::symmetric(3.0, 256).unwrap(), 2).unwrap_err();
        assert!(matches!(err, Error::GridTooSmall { .. }));
        // the automatic grid widens until it passes
        let p = Potential::harmonic(0.05);
        let s = diagonalize_auto(&p, 2).unwrap();
        assert!((s.eigenvalues[0] - 0.025).abs() < 1e-6);
        assert!(SpectralGrid::new(1.0, -1.0, 100).is_err());
        assert!(SpectralGrid::new(-1.0, 1.0, 8).is_err());
    }

    #[test]
    fn raw_ground_state_rises_under_refinement() {
        // Plain differences approach E₀ from below: each doubling raises it.
        let p = Potential::double_well(1.0, 2.0);
        let mut prev = f64::NEG_INFINITY;
        for n in [256, 511, 1021, 2041] {
            let s = diagonalize_with(&p, &SpectralGrid::symmetric(10.0, n).unwrap(), 1, Scheme::SecondOrder).unwrap();
            assert!(s.eigenvalues[0] > prev - 1e-10);
            prev = s.eigenvalues[0];
        }
    }

    #[test]
    fn converged_under_doubling() {
        for p in [Potential::harmonic(1.0), Potential::double_well(1.0, 2.0), Potential::anharmonic(1.0, 0.1)] {
            let grid = SpectralGrid::default_for(&p);
            let r = convergence_check(&p, &grid).unwrap();
            assert!(r.converged(1e-6), "{p:?}: {r:?}");
        }
    }

    #[test]
    fn virial_for_harmonic_ground_state() {
        let p = Potential::harmonic(1.0);
        let s = diagonalize(&p, &ho_grid(), 1).unwrap();
        let v = s.expectation(0, |q| p.value(q));
        let t = s.eigenvalues[0] - v;
        assert!((t - v).abs() < 1e-6, "T={t} V={v}");
    }

    #[test]
    fn partition_matches_closed_form() {
        let p = Potential::harmonic(1.0);
        let s = diagonalize(&p, &SpectralGrid::symmetric(12.0, 4096).unwrap(), 45).unwrap();
        let z = partition_from_spectrum(&s, 1.0).unwrap();
        let exact = crate::gaussian::ho_partition_function(1.0, 1.0, 1.0).unwrap();
        assert!((z - exact).abs() < 1e-6 * exact, "{z} vs {exact}");
        let few = diagonalize(&p, &ho_grid(), 3).unwrap();
        assert!(partition_from_spectrum(&few, 1.0).is_err());
        // ground state dominates at large β
        let big = partition_from_spectrum(&few, 60.0).unwrap();
        assert!(((-big.ln()) / 60.0 - 0.5).abs() < 1e-6);
    }

    #[test]
    fn completeness_reproduces_diagonal_propagator() {
        let p = Potential::harmonic(1.0);
        let s = diagonalize(&p, &SpectralGrid::symmetric(10.0, 4097).unwrap(), 40).unwrap();
        for beta in [2.0, 4.0] {
            let sum: f64 = (0..40).map(|j| s.value_at(j, 0.0).powi(2) * (-beta * s.eigenvalues[j]).exp()).sum();
            let k = ho_propagator(0.0, 0.0, beta, 1.0, 1.0, 1.0, Signature::Euclidean).unwrap().euclidean();
            assert!((sum - k).abs() < 1e-6 * k, "beta={beta}: {sum} vs {k}");
        }
    }

    #[test]
    fn splitting_shrinks_with_separation() {
        // fixed ω² = λa²/3 = 1 as a grows
        let mut prev = f64::INFINITY;
        for a in [1.5, 2.0, 2.5, 3.0] {
            let lambda = 3.0 / (a * a);
            let d = splitting_auto(&Potential::double_well(lambda, a)).unwrap();
            assert!(d > 0.0 && d < prev, "a={a}: {d}");
            prev = d;
        }
        assert!(splitting_auto(&Potential::harmonic(1.0)).is_err());
    }
}
