//! Ground-state energies from the large-β behaviour of the Euclidean
//! propagator, and the first-order quartic correction.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::gaussian::ho_propagator;
use crate::model::{Potential, Signature};
use crate::spectral::{diagonalize, SpectralGrid};
use crate::wick::{euclidean_first_order_log_ke, KernelChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateOrder {
    ExactQuadratic,
    FirstOrder,
    /// Slope of `−ln K_E` over a β ladder.
    LogSlope,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub value: f64,
    pub order: EstimateOrder,
    pub error_bar: f64,
}

impl EnergyEstimate {
    fn exact(value: f64, order: EstimateOrder) -> Self {
        EnergyEstimate { value, order, error_bar: 0.0 }
    }
}

/// `E₀ = ħω/2 + ħ²λ/(32m²ω²)`.
pub fn anharmonic_e0_first_order(mass: f64, omega: f64, lambda: f64, hbar: f64) -> Result<EnergyEstimate> {
    ensure_positive("m", mass)?;
    ensure_positive("omega", omega)?;
    ensure_positive("hbar", hbar)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let order = if lambda == 0.0 { EstimateOrder::ExactQuadratic } else { EstimateOrder::FirstOrder };
    Ok(EnergyEstimate::exact(
        0.5 * hbar * omega + hbar * hbar * lambda / (32.0 * mass * mass * omega * omega),
        order,
    ))
}

/// [`log_slope_energy`] on a function returning `ln K_E(0,β;0,0)`
/// directly, for ladders where `K_E` itself would underflow.
pub fn log_slope_energy_from_log(log_diag: impl Fn(f64) -> f64, ladder: &[f64], hbar: f64) -> Result<EnergyEstimate> {
    if ladder.len() < 3 {
        return Err(Error::Precondition(format!("beta ladder needs >= 3 points, got {}", ladder.len())));
    }
    if ladder.windows(2).any(|w| !(w[1] > w[0])) || ladder[0] <= 0.0 {
        return Err(Error::Precondition("beta ladder must be positive and strictly increasing".into()));
    }
    ensure_positive("hbar", hbar)?;
    let logs: Vec<f64> = ladder.iter().map(|&b| log_diag(b)).collect();
    if let Some((b, l)) = ladder.iter().zip(&logs).find(|(_, l)| !l.is_finite()) {
        return Err(Error::domain(format!("ln K_E({b}) = {l} is not finite")));
    }
    let slopes: Vec<f64> = (0..ladder.len() - 1)
        .map(|i| -(logs[i + 1] - logs[i]) / (ladder[i + 1] - ladder[i]))
        .collect();
    let n = slopes.len();
    Ok(EnergyEstimate {
        value: hbar * slopes[n - 1],
        order: EstimateOrder::LogSlope,
        error_bar: hbar * (slopes[n - 1] - slopes[n - 2]).abs(),
    })
}

/// `E₀ = −lim (ħ/β) ln K_E(0,β;0,0)`, estimated from successive secant
/// slopes of `−ln K_E` on an increasing β ladder: the last slope is the
/// value, its change from the previous slope the error bar.
pub fn log_slope_energy(diag: impl Fn(f64) -> f64, ladder: &[f64], hbar: f64) -> Result<EnergyEstimate> {
    let values: Vec<(f64, f64)> = ladder.iter().map(|&b| (b, diag(b))).collect();
    if let Some((b, k)) = values.iter().find(|(_, k)| !(*k > 0.0) || !k.is_finite()) {
        return Err(Error::domain(format!("K_E({b}) = {k} is not positive")));
    }
    log_slope_energy_from_log(
        |b| values.iter().find(|(x, _)| *x == b).map(|(_, k)| k.ln()).unwrap_or(f64::NAN),
        ladder,
        hbar,
    )
}

/// The three independent ground-state routes for the quartic oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStateRoutes {
    pub formula: EnergyEstimate,
    pub contraction: EnergyEstimate,
    pub oracle: EnergyEstimate,
}

impl GroundStateRoutes {
    pub fn max_pairwise_gap(&self) -> f64 {
        let v = [self.formula.value, self.contraction.value, self.oracle.value];
        let mut gap: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                gap = gap.max((v[i] - v[j]).abs());
            }
        }
        gap
    }
}

/// β ladder used by the contraction route.
pub const CONTRACTION_LADDER: [f64; 5] = [20.0, 25.0, 30.0, 35.0, 40.0];

/// Closed-form first-order energy, the Wick-contraction propagator fed
/// through the log-slope estimator (finite-β Dirichlet kernel), and the
/// finite-difference oracle.
pub fn ground_state_routes(mass: f64, omega: f64, lambda: f64, hbar: f64) -> Result<GroundStateRoutes> {
    let formula = anharmonic_e0_first_order(mass, omega, lambda, hbar)?;
    let ladder: Vec<f64> = CONTRACTION_LADDER.iter().map(|b| b / omega).collect();
    let log_diag = |beta: f64| -> f64 {
        let free = ho_propagator(0.0, 0.0, beta, mass, omega, hbar, Signature::Euclidean)
            .map(|k| k.prefactor_modulus.ln() - k.classical_action / hbar)
            .unwrap_or(f64::NAN);
        let correction =
            euclidean_first_order_log_ke(beta, mass, omega, lambda, hbar, KernelChoice::Dirichlet).unwrap_or(f64::NAN);
        free + correction
    };
    let contraction = log_slope_energy_from_log(log_diag, &ladder, hbar)?;
    let potential = Potential::anharmonic(omega, lambda).with_mass(mass).with_hbar(hbar);
    let spectrum = diagonalize(&potential, &SpectralGrid::default_for(&potential), 1)?;
    let oracle = EnergyEstimate::exact(spectrum.eigenvalues[0], EstimateOrder::Oracle);
    Ok(GroundStateRoutes { formula, contraction, oracle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_order_examples() {
        let e = anharmonic_e0_first_order(1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.order, EstimateOrder::ExactQuadratic);
        let e = anharmonic_e0_first_order(1.0, 1.0, 0.1, 1.0).unwrap();
        assert!((e.value - 0.503_125).abs() < 1e-15);
        assert_eq!(e.error_bar, 0.0);
        assert!(anharmonic_e0_first_order(0.0, 1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn oracle_gap_is_second_order() {
        // Rayleigh–Schrödinger: E₂ = −21/4608 λ² for m = ω = ħ = 1.
        let p = Potential::anharmonic(1.0, 0.1);
        let oracle = diagonalize(&p, &SpectralGrid::default_for(&p), 1).unwrap().eigenvalues[0];
        assert!((oracle - 0.50308).abs() < 1e-5, "{oracle}");
        let gap = anharmonic_e0_first_order(1.0, 1.0, 0.1, 1.0).unwrap().value - oracle;
        let c2 = 21.0 / 4608.0;
        assert!((gap - c2 * 0.01).abs() < 0.1 * c2 * 0.01, "gap {gap}");
    }

    #[test]
    fn log_slope_on_harmonic_diagonal() {
        let diag = |b: f64| ho_propagator(0.0, 0.0, b, 1.0, 1.0, 1.0, Signature::Euclidean).unwrap().euclidean();
        let e = log_slope_energy(diag, &[10.0, 20.0, 25.0, 30.0], 1.0).unwrap();
        assert!((e.value - 0.5).abs() < 1e-4);
        assert!(e.error_bar < 1e-4);
    }

    #[test]
    fn log_slope_on_free_diagonal_tends_to_zero() {
        let diag = |b: f64| (1.0 / (2.0 * std::f64::consts::PI * b)).sqrt();
        let short = log_slope_energy(diag, &[10.0, 20.0, 30.0], 1.0).unwrap();
        let long = log_slope_energy(diag, &[1e3, 1e4, 1e5], 1.0).unwrap();
        assert!(long.value.abs() < short.value.abs());
        assert!(long.value.abs() < 1e-4);
    }

    #[test]
    fn log_slope_recovers_first_order_shift() {
        let lambda = 0.2;
        let diag = |b: f64| {
            ho_propagator(0.0, 0.0, b, 1.0, 1.0, 1.0, Signature::Euclidean).unwrap().euclidean()
                * (-b * lambda / 32.0).exp()
        };
        let e = log_slope_energy(diag, &[20.0, 25.0, 30.0], 1.0).unwrap();
        assert!((e.value - (0.5 + lambda / 32.0)).abs() < 1e-10);
    }

    #[test]
    fn log_slope_errors() {
        assert!(matches!(log_slope_energy(|_| 1.0, &[1.0, 2.0], 1.0), Err(Error::Precondition(_))));
        assert!(matches!(log_slope_energy(|_| 1.0, &[1.0, 3.0, 2.0], 1.0), Err(Error::Precondition(_))));
        assert!(matches!(log_slope_energy(|b| 1.0 - b, &[1.0, 2.0, 3.0], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn three_routes_agree() {
        let r = ground_state_routes(1.0, 1.0, 0.1, 1.0).unwrap();
        assert!((r.contraction.value - 0.503_125).abs() < 1e-8, "{r:?}");
        assert!(r.max_pairwise_gap() < 2e-3);
        assert!((r.formula.value - r.oracle.value).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn log_slope_bounds_polynomial_prefactor(e0 in 0.1f64..10.0, c1 in 0.0f64..3.0, c2 in 0.0f64..3.0) {
            // ln K = −βE₀ + ln(1 + c1 β + c2 β²); tripling ladder
            let ladder: Vec<f64> = (0..10).map(|k| 3f64.powi(k)).collect();
            let est = log_slope_energy_from_log(|b| -b * e0 + (1.0 + c1 * b + c2 * b * b).ln(), &ladder, 1.0).unwrap();
            prop_assert!((est.value - e0).abs() <= est.error_bar + 1e-12,
                "est {} ± {} vs {}", est.value, est.error_bar, e0);
        }
    }
}
