//! Linear spectral theory of q-twisted states on the band graphon.
//!
//! Linearising the continuum limit around `u = 2πqx + Ωt + θ` gives an
//! operator whose eigenfunctions are the Fourier modes `e^{±2πiℓx}`. The
//! eigenvalue of mode `ℓ` is
//!
//! ```text
//! λ_ℓ^∓ = p χ₁(κ; ℓ, q) cos σ ∓ i p χ₂(κ; ℓ, q) sin σ
//! ```
//!
//! and the constant mode always carries the zero eigenvalue from rotation
//! invariance.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::roots::{bisect, ROOT_TOL};
use crate::{Error, Result};

/// Default number of Fourier modes inspected for a stability verdict.
pub const DEFAULT_ELL_MAX: u32 = 64;

/// Real parts within this distance of zero are reported as marginal.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Mode index, winding number and graphon/coupling parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeParams {
    pub ell: u32,
    pub q: u32,
    pub kappa: f64,
    pub sigma: f64,
    pub p: f64,
}

fn check_modes(ell: u32, q: u32) -> Result<()> {
    if ell == 0 || q == 0 {
        return Err(Error::InvalidParameter(format!(
            "chi requires ell >= 1 and q >= 1 (got ell = {ell}, q = {q}); use eigenvalues_q0 for q = 0"
        )));
    }
    Ok(())
}

/// `sin(2π m κ) / (2π m)`.
#[inline]
fn sinc_term(m: f64, kappa: f64) -> f64 {
    (2.0 * PI * m * kappa).sin() / (2.0 * PI * m)
}

/// Real-part spectral function χ₁(κ; ℓ, q).
pub fn chi1(kappa: f64, ell: u32, q: u32) -> Result<f64> {
    check_modes(ell, q)?;
    Ok(chi1_unchecked(kappa, ell, q))
}

pub(crate) fn chi1_unchecked(kappa: f64, ell: u32, q: u32) -> f64 {
    let qf = q as f64;
    let self_term = (2.0 * PI * qf * kappa).sin() / (PI * qf);
    if ell == q {
        kappa + (4.0 * PI * qf * kappa).sin() / (4.0 * PI * qf) - self_term
    } else {
        let (l, q) = (ell as f64, qf);
        sinc_term(l - q, kappa) + sinc_term(l + q, kappa) - self_term
    }
}

/// Imaginary-part spectral function χ₂(κ; ℓ, q).
pub fn chi2(kappa: f64, ell: u32, q: u32) -> Result<f64> {
    check_modes(ell, q)?;
    Ok(chi2_unchecked(kappa, ell, q))
}

pub(crate) fn chi2_unchecked(kappa: f64, ell: u32, q: u32) -> f64 {
    let qf = q as f64;
    if ell == q {
        kappa - (4.0 * PI * qf * kappa).sin() / (4.0 * PI * qf)
    } else {
        let l = ell as f64;
        sinc_term(l - qf, kappa) - sinc_term(l + qf, kappa)
    }
}

/// `φ(ζ) = (sin ζ / ζ)(2 − cos ζ)`, extended continuously by `φ(0) = 1`.
pub fn phi(zeta: f64) -> f64 {
    if zeta.abs() < 1e-8 {
        // φ(ζ) = 1 + ζ²/3 + O(ζ⁴)
        return 1.0 + zeta * zeta / 3.0;
    }
    zeta.sin() / zeta * (2.0 - zeta.cos())
}

/// `ζ² φ'(ζ)` up to the positive factor `1/ζ`:
/// `(cos ζ − 2) sin ζ / ζ − (2cos²ζ − 2cos ζ − 1)`.
fn phi_slope_numerator(zeta: f64) -> f64 {
    let c = zeta.cos();
    (c - 2.0) * zeta.sin() / zeta - (2.0 * c * c - 2.0 * c - 1.0)
}

/// The j-th positive critical point ζ_j of φ, located in `((j−1)π, jπ)`.
///
/// Odd `j` are local maxima, even `j` local minima.
pub fn zeta_extremum(j: u32) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidParameter("zeta_extremum requires j >= 1".into()));
    }
    let lo = (j - 1) as f64 * PI;
    let hi = j as f64 * PI;
    // ζ = 0 is a removable double zero of the slope numerator; φ is
    // increasing just to its right
    let lo = if j == 1 { 1e-3 } else { lo };
    bisect(phi_slope_numerator, lo, hi, ROOT_TOL)
}

/// The unique root ζ₀ of `φ(ζ) = 1` on `(0, ζ₂)`, which lies in `(ζ₁, ζ₂)`.
pub fn zeta0() -> Result<f64> {
    let z1 = zeta_extremum(1)?;
    let z2 = zeta_extremum(2)?;
    bisect(|z| phi(z) - 1.0, z1, z2, ROOT_TOL)
}

/// Stability classification of a spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    LinearlyStable,
    Unstable,
    /// The largest real part is within [`MARGINAL_TOL`] of zero at mode `ℓ*`.
    Marginal(u32),
}

/// The conjugate pair of eigenvalues carried by Fourier mode `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeEigenvalues {
    pub ell: u32,
    /// Eigenvalue of `cos 2πℓx + i sin 2πℓx`.
    pub minus: Complex64,
    /// Eigenvalue of `cos 2πℓx − i sin 2πℓx`.
    pub plus: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<ModeEigenvalues>,
    pub zero_mode: Complex64,
    pub verdict: Verdict,
    pub max_real_part: f64,
}

impl SpectrumReport {
    fn from_modes(eigenvalues: Vec<ModeEigenvalues>) -> Self {
        let (ell_star, max_real_part) = eigenvalues
            .iter()
            .map(|m| (m.ell, m.minus.re))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let verdict = if max_real_part > MARGINAL_TOL {
            Verdict::Unstable
        } else if max_real_part >= -MARGINAL_TOL {
            Verdict::Marginal(ell_star)
        } else {
            Verdict::LinearlyStable
        };
        SpectrumReport { eigenvalues, zero_mode: Complex64::new(0.0, 0.0), verdict, max_real_part }
    }
}

/// Eigenvalues `λ_ℓ^∓` for `ℓ = 1..=ell_max` of the twisted state with
/// winding `q ≥ 1`. The `ell` field of `params` is ignored.
pub fn eigenvalues(params: &ModeParams, ell_max: u32) -> Result<SpectrumReport> {
    check_modes(1, params.q)?;
    if ell_max == 0 {
        return Err(Error::InvalidParameter("ell_max must be >= 1".into()));
    }
    let (s, c) = params.sigma.sin_cos();
    let modes = (1..=ell_max)
        .map(|ell| {
            let re = params.p * chi1_unchecked(params.kappa, ell, params.q) * c;
            let im = params.p * chi2_unchecked(params.kappa, ell, params.q) * s;
            ModeEigenvalues { ell, minus: Complex64::new(re, -im), plus: Complex64::new(re, im) }
        })
        .collect();
    Ok(SpectrumReport::from_modes(modes))
}

/// Spectrum of the synchronous state (`q = 0`):
/// `λ_ℓ = −p cos σ (2κ − sin 2πℓκ / (πℓ))`, all real.
pub fn eigenvalues_q0(kappa: f64, sigma: f64, p: f64, ell_max: u32) -> Result<SpectrumReport> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must lie in (0, 1/2)")));
    }
    let c = sigma.cos();
    let modes = (1..=ell_max)
        .map(|ell| {
            let l = ell as f64;
            let lam = -p * c * (2.0 * kappa - (2.0 * PI * l * kappa).sin() / (PI * l));
            let z = Complex64::new(lam, 0.0);
            ModeEigenvalues { ell, minus: z, plus: z }
        })
        .collect();
    Ok(SpectrumReport::from_modes(modes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_rejects_zero_modes() {
        assert!(chi1(0.2, 0, 1).is_err());
        assert!(chi1(0.2, 1, 0).is_err());
        assert!(chi2(0.2, 0, 1).is_err());
    }

    #[test]
    fn chi1_examples() {
        assert!(chi1(0.34046, 1, 1).unwrap().abs() < 1e-4);
        assert!(chi1(1.0 / 6.0, 1, 2).unwrap().abs() < 1e-15);
        for q in 1..=4 {
            assert!((chi1(0.5, q, q).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn chi2_examples() {
        assert!((chi2(0.34046, 1, 1).unwrap() - 0.41266).abs() < 1e-4);
        assert!((chi2(0.25, 1, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((chi2(0.16667, 1, 2).unwrap() - 0.13783).abs() < 1e-4);
    }

    #[test]
    fn phi_values() {
        assert!((phi(1.39535) - 1.28815).abs() < 1e-4);
        assert!((phi(4.18392) + 0.51688).abs() < 1e-4);
        assert!((phi(1e-12) - 1.0).abs() < 1e-15);
        assert_eq!(phi(0.0), 1.0);
    }

    #[test]
    fn zeta_constants() {
        assert!((zeta_extremum(1).unwrap() - 1.39535).abs() < 1e-4);
        assert!((zeta_extremum(2).unwrap() - 4.18392).abs() < 1e-4);
        let z0 = zeta0().unwrap();
        assert!((z0 - 2.1391).abs() < 1e-4);
        assert!((phi(z0) - 1.0).abs() < 1e-10);
        assert!((z0 / (2.0 * PI) - 0.34046).abs() < 1e-4);
        assert!(zeta_extremum(0).is_err());
    }

    #[test]
    fn zeta_brackets() {
        for j in 1..=50u32 {
            let z = zeta_extremum(j).unwrap();
            assert!(z > (j - 1) as f64 * PI && z < j as f64 * PI, "j = {j}: {z}");
        }
    }

    #[test]
    fn verdicts() {
        let stable = ModeParams { ell: 1, q: 1, kappa: 0.2, sigma: 0.0, p: 1.0 };
        let report = eigenvalues(&stable, 8).unwrap();
        assert_eq!(report.verdict, Verdict::LinearlyStable);
        assert!(report.eigenvalues.iter().all(|m| m.minus.re < 0.0 && m.minus.im == 0.0));
        assert_eq!(report.zero_mode, Complex64::new(0.0, 0.0));

        let unstable = ModeParams { kappa: 0.36, ..stable };
        let report = eigenvalues(&unstable, 8).unwrap();
        assert_eq!(report.verdict, Verdict::Unstable);
        assert!(report.eigenvalues[0].minus.re > 0.0);

        let kc = crate::bifurcation::kappa_critical(1, 1).unwrap();
        let marginal = ModeParams { kappa: kc, ..stable };
        assert_eq!(eigenvalues(&marginal, 8).unwrap().verdict, Verdict::Marginal(1));
    }

    #[test]
    fn complex_pairs_for_nonzero_lag() {
        let params = ModeParams { ell: 1, q: 2, kappa: 0.15, sigma: 0.7, p: 0.8 };
        let report = eigenvalues(&params, 6).unwrap();
        for m in &report.eigenvalues {
            assert_eq!(m.minus, m.plus.conj());
            let expect = params.p * chi2(params.kappa, m.ell, params.q).unwrap() * params.sigma.sin();
            assert!((m.plus.im - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn q0_spectrum() {
        let report = eigenvalues_q0(0.25, 0.0, 1.0, 1).unwrap();
        assert!((report.eigenvalues[0].minus.re + (0.5 - 1.0 / PI)).abs() < 1e-15);
        for kappa in [0.01, 0.1, 0.25, 0.49] {
            let r = eigenvalues_q0(kappa, 0.0, 1.0, 200).unwrap();
            assert_eq!(r.verdict, Verdict::LinearlyStable);
        }
        let far = eigenvalues_q0(0.3, 0.4, 0.7, 100_000).unwrap();
        let last = far.eigenvalues.last().unwrap().minus.re;
        assert!((last + 2.0 * 0.7 * 0.3 * 0.4f64.cos()).abs() < 1e-5);
        let flipped = eigenvalues_q0(0.3, 2.0, 1.0, 10).unwrap();
        assert_eq!(flipped.verdict, Verdict::Unstable);
    }
}
