//! Phase bookkeeping on multiply connected configuration spaces:
//! Aharonov–Bohm interference, exchange-statistics phases, winding sums and
//! Dirac quantization. Gaussian units with explicit ħ and c.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSetup {
    pub base_phase: f64,
    pub flux: f64,
    pub charge: f64,
    pub hbar: f64,
    pub c: f64,
}

impl InterferenceSetup {
    pub fn new(base_phase: f64, flux: f64, charge: f64, hbar: f64, c: f64) -> Result<Self> {
        ensure_finite("base phase", base_phase)?;
        ensure_finite("flux", flux)?;
        ensure_positive("charge", charge)?;
        ensure_positive("hbar", hbar)?;
        ensure_positive("c", c)?;
        Ok(InterferenceSetup { base_phase, flux, charge, hbar, c })
    }

    /// Natural units ħ = c = e = 1.
    pub fn natural(base_phase: f64, flux: f64) -> Result<Self> {
        Self::new(base_phase, flux, 1.0, 1.0, 1.0)
    }

    /// `eΦ/ħc`.
    pub fn flux_phase(&self) -> f64 {
        self.charge * self.flux / (self.hbar * self.c)
    }

    /// `2πħc/e`, the flux period.
    pub fn flux_quantum(&self) -> f64 {
        TAU * self.hbar * self.c / self.charge
    }

    pub fn with_flux(mut self, flux: f64) -> Self {
        self.flux = flux;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePhase {
    pub raw: f64,
    /// Reduced into [0, 2π).
    pub reduced: f64,
}

/// `φ′₁₂ = φ₁₂ − eΦ/ħc`.
pub fn ab_relative_phase(setup: &InterferenceSetup) -> RelativePhase {
    let raw = setup.base_phase - setup.flux_phase();
    RelativePhase { raw, reduced: raw.rem_euclid(TAU) }
}

/// `|A₁ + e^{−ieΦ/ħc} A₂|²`.
pub fn two_slit_intensity(a1: Complex64, a2: Complex64, setup: &InterferenceSetup) -> f64 {
    (a1 + Complex64::from_polar(1.0, -setup.flux_phase()) * a2).norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    Two,
    Three,
}

impl TryFrom<u32> for Dimension {
    type Error = Error;
    fn try_from(d: u32) -> Result<Self> {
        match d {
            2 => Ok(Dimension::Two),
            3 => Ok(Dimension::Three),
            _ => Err(Error::Unsupported(format!("statistics phases are defined in 2 or 3 dimensions, got {d}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AllowedPhases {
    /// Bose (0) and Fermi (π).
    Discrete { values: [f64; 2] },
    /// Any φ in [0, 2π).
    Interval { lower: f64, upper: f64 },
}

impl AllowedPhases {
    pub fn contains(&self, phi: f64) -> bool {
        let p = phi.rem_euclid(TAU);
        match self {
            AllowedPhases::Discrete { values } => values.iter().any(|v| {
                let d = (p - v).abs();
                d.min(TAU - d) < 1e-12
            }),
            AllowedPhases::Interval { .. } => phi.is_finite(),
        }
    }
}

pub fn statistics_solutions(dimension: u32) -> Result<AllowedPhases> {
    Ok(match Dimension::try_from(dimension)? {
        Dimension::Three => AllowedPhases::Discrete { values: [0.0, PI] },
        Dimension::Two => AllowedPhases::Interval { lower: 0.0, upper: TAU },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticsPhase {
    pub dimension: Dimension,
    pub phi: f64,
}

impl StatisticsPhase {
    /// In three dimensions φ must be 0 or π (mod 2π).
    pub fn new(dimension: u32, phi: f64) -> Result<Self> {
        ensure_finite("phi", phi)?;
        let dim = Dimension::try_from(dimension)?;
        if !statistics_solutions(dimension)?.contains(phi) {
            return Err(Error::domain(format!("phi = {phi} is not an allowed exchange phase in 3D")));
        }
        Ok(StatisticsPhase { dimension: dim, phi })
    }

    /// `C_n = e^{inφ}`.
    pub fn coefficient(&self, n: i64) -> Complex64 {
        Complex64::from_polar(1.0, n as f64 * self.phi)
    }
}

/// `Σ_n e^{inφ} Ā_n`.
pub fn winding_amplitude(sectors: &BTreeMap<i64, Complex64>, phi: f64) -> Complex64 {
    sectors.iter().map(|(&n, &a)| Complex64::from_polar(1.0, n as f64 * phi) * a).sum()
}

/// `e = nħc/2g`. The accompanying prose value 2πħc/g for the charge unit
/// differs from this by 4π; the relation implemented here is the one for
/// which the string phase below is a multiple of 2π.
pub fn dirac_charge_unit(n: i64, g: f64, hbar: f64, c: f64) -> Result<f64> {
    ensure_finite("g", g)?;
    if g == 0.0 {
        return Err(Error::domain("magnetic charge g must be nonzero"));
    }
    ensure_positive("hbar", hbar)?;
    ensure_positive("c", c)?;
    Ok(n as f64 * hbar * c / (2.0 * g))
}

/// Phase `−4πeg/ħc` picked up around the Dirac string.
pub fn dirac_string_phase(e: f64, g: f64, hbar: f64, c: f64) -> f64 {
    -4.0 * PI * e * g / (hbar * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ab_examples() {
        let s = InterferenceSetup::natural(0.7, 0.0).unwrap();
        assert_eq!(ab_relative_phase(&s).raw, 0.7);
        let s = InterferenceSetup::natural(0.0, PI).unwrap();
        assert!((ab_relative_phase(&s).reduced - PI).abs() < 1e-15);
        let s = InterferenceSetup::new(0.3, 1.1, 2.0, 0.5, 3.0).unwrap();
        let shifted = s.with_flux(s.flux + s.flux_quantum());
        let (p, q) = (ab_relative_phase(&s).reduced, ab_relative_phase(&shifted).reduced);
        assert!((p - q).abs() < 1e-12 || (TAU - (p - q).abs()) < 1e-12);
        assert!(InterferenceSetup::new(0.0, 1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn intensity_flip() {
        let one = c(1.0, 0.0);
        assert!((two_slit_intensity(one, one, &InterferenceSetup::natural(0.0, 0.0).unwrap()) - 4.0).abs() < 1e-15);
        assert!(two_slit_intensity(one, one, &InterferenceSetup::natural(0.0, PI).unwrap()) < 1e-30);
    }

    #[test]
    fn statistics() {
        assert_eq!(statistics_solutions(3).unwrap(), AllowedPhases::Discrete { values: [0.0, PI] });
        assert!(matches!(statistics_solutions(4), Err(Error::Unsupported(_))));
        let any = StatisticsPhase::new(2, 1.3).unwrap();
        for n in -3..=3 {
            assert!((any.coefficient(n) - Complex64::from_polar(1.0, 1.3 * n as f64)).norm() < 1e-15);
        }
        assert!(StatisticsPhase::new(3, 1.3).is_err());
        let fermi = StatisticsPhase::new(3, PI).unwrap();
        assert!((fermi.coefficient(1) + 1.0).norm() < 1e-15);
        for phi in [0.0, PI] {
            let s = StatisticsPhase::new(3, phi).unwrap();
            assert!((s.coefficient(1) * s.coefficient(1) - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn winding_cases() {
        let sectors: BTreeMap<i64, Complex64> = [(0, c(1.0, 0.5)), (1, c(-0.2, 0.3)), (2, c(0.7, -1.0))].into();
        let plain: Complex64 = sectors.values().sum();
        assert!((winding_amplitude(&sectors, 0.0) - plain).norm() < 1e-15);
        let alternating = sectors[&0] - sectors[&1] + sectors[&2];
        assert!((winding_amplitude(&sectors, PI) - alternating).norm() < 1e-14);
    }

    #[test]
    fn dirac() {
        assert_eq!(dirac_charge_unit(0, 0.5, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(dirac_charge_unit(1, 0.5, 1.0, 1.0).unwrap(), 1.0);
        assert!(dirac_charge_unit(1, 0.0, 1.0, 1.0).is_err());
        for n in -4..=4 {
            let (g, h, cc) = (0.37, 1.3, 2.9);
            let e = dirac_charge_unit(n, g, h, cc).unwrap();
            assert!((e * g - n as f64 * h * cc / 2.0).abs() < 1e-14);
            let phase = dirac_string_phase(e, g, h, cc);
            assert!((phase.abs() - TAU * n.abs() as f64).abs() < 1e-12);
        }
    }

    fn amp() -> impl Strategy<Value = Complex64> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| c(a, b))
    }

    proptest! {
        #[test]
        fn intensity_flux_periodic(base in -10.0f64..10.0, flux in -10.0f64..10.0, e in 0.1f64..3.0,
                                   h in 0.1f64..3.0, cc in 0.1f64..3.0, a1 in amp(), a2 in amp()) {
            let s = InterferenceSetup::new(base, flux, e, h, cc).unwrap();
            let t = s.with_flux(flux + s.flux_quantum());
            prop_assert!((two_slit_intensity(a1, a2, &s) - two_slit_intensity(a1, a2, &t)).abs() < 1e-12 * (1.0 + two_slit_intensity(a1, a2, &s)));
        }

        #[test]
        fn intensity_overall_phase(flux in -10.0f64..10.0, chi in 0.0f64..TAU, a1 in amp(), a2 in amp()) {
            let s = InterferenceSetup::natural(0.0, flux).unwrap();
            let u = Complex64::from_polar(1.0, chi);
            let i0 = two_slit_intensity(a1, a2, &s);
            prop_assert!((two_slit_intensity(u * a1, u * a2, &s) - i0).abs() < 1e-12 * (1.0 + i0));
        }

        #[test]
        fn winding_shift(phi in 0.0f64..TAU, amps in proptest::collection::vec(amp(), 5)) {
            let a: BTreeMap<i64, Complex64> = amps.iter().enumerate().map(|(n, &x)| (n as i64 - 2, x)).collect();
            // Ā'_n = Ā_{n+1}
            let shifted: BTreeMap<i64, Complex64> = a.iter().map(|(&n, &x)| (n - 1, x)).collect();
            let lhs = winding_amplitude(&shifted, phi);
            let rhs = Complex64::from_polar(1.0, -phi) * winding_amplitude(&a, phi);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn winding_linear(phi in 0.0f64..TAU, s in amp(), x in proptest::collection::vec(amp(), 4), y in proptest::collection::vec(amp(), 4)) {
            let ax: BTreeMap<i64, Complex64> = x.iter().enumerate().map(|(n, &v)| (n as i64, v)).collect();
            let ay: BTreeMap<i64, Complex64> = y.iter().enumerate().map(|(n, &v)| (n as i64, v)).collect();
            let comb: BTreeMap<i64, Complex64> = (0..4).map(|n| (n, ax[&n] + s * ay[&n])).collect();
            let lhs = winding_amplitude(&comb, phi);
            let rhs = winding_amplitude(&ax, phi) + s * winding_amplitude(&ay, phi);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
