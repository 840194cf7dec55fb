//! Bifurcations of the q-twisted family at the first critical coupling range.
//!
//! When `χ₁(κ; 1, q)` crosses zero at `κ = κ_{1q}` the twisted family loses
//! stability through the first Fourier mode. A center-manifold reduction
//! yields the truncated normal form
//!
//! ```text
//! ṙ = μ r − p β r³,   ψ̇ = ν₁,   μ = p χ̄′ (κ − κ_{1q}) cos σ
//! ```
//!
//! with `β = β₀` for `σ = 0` and `β = β_σ` otherwise. This module evaluates
//! every constant entering that reduction and turns them into branch
//! predictions.

use std::f64::consts::PI;

use serde::Serialize;

use crate::roots::{scan_roots, ROOT_TOL};
use crate::spectrum::{chi1_unchecked, chi2_unchecked};
use crate::{Error, Result};

/// Largest winding number supported by [`normal_form_constants`].
pub const MAX_Q: u32 = 8;

const KAPPA_LO: f64 = 1e-3;
const KAPPA_HI: f64 = 0.5 - 1e-9;
const SCAN_CELLS: usize = 4000;

fn check_q(q: u32) -> Result<()> {
    if q == 0 {
        return Err(Error::InvalidParameter("winding number q must be >= 1".into()));
    }
    Ok(())
}

/// All roots of `χ₁(·; ℓ, q)` in `(0, 1/2)`, ascending.
pub fn kappa_critical_all(ell: u32, q: u32) -> Result<Vec<f64>> {
    check_q(q)?;
    if ell == 0 {
        return Err(Error::InvalidParameter("mode index ell must be >= 1".into()));
    }
    let roots = scan_roots(|k| chi1_unchecked(k, ell, q), KAPPA_LO, KAPPA_HI, SCAN_CELLS, ROOT_TOL);
    if roots.is_empty() {
        return Err(Error::NoRoot { ell, q });
    }
    Ok(roots)
}

/// The smallest root `κ_{ℓq}` of `χ₁(·; ℓ, q)` in `(0, 1/2)`.
pub fn kappa_critical(ell: u32, q: u32) -> Result<f64> {
    kappa_critical_all(ell, q).map(|r| r[0])
}

/// Analytic `∂χ₁/∂κ (κ; ℓ, q)`.
pub fn chi1_dkappa(kappa: f64, ell: u32, q: u32) -> Result<f64> {
    check_q(q)?;
    if ell == 0 {
        return Err(Error::InvalidParameter("mode index ell must be >= 1".into()));
    }
    let (l, qf) = (ell as f64, q as f64);
    let self_term = 2.0 * (2.0 * PI * qf * kappa).cos();
    Ok(if ell == q {
        1.0 + (4.0 * PI * qf * kappa).cos() - self_term
    } else {
        (2.0 * PI * (l - qf) * kappa).cos() + (2.0 * PI * (l + qf) * kappa).cos() - self_term
    })
}

/// Window integrals `(a₁(q, j), a₂(q, j))` at coupling range `κ`:
///
/// ```text
/// a₁ = −∫_{−κ}^{κ} sin 2πqs · sin 2πjs ds,   a₂ = −∫_{−κ}^{κ} cos 2πqs · cos 2πjs ds
/// ```
pub fn a_coeffs(q: u32, j: u32, kappa: f64) -> Result<(f64, f64)> {
    check_q(q)?;
    let (qf, jf) = (q as f64, j as f64);
    if j == q {
        let s = (4.0 * PI * qf * kappa).sin() / (4.0 * PI * qf);
        return Ok((s - kappa, -s - kappa));
    }
    let (sj, cj) = (2.0 * PI * jf * kappa).sin_cos();
    let (sq, cq) = (2.0 * PI * qf * kappa).sin_cos();
    let den = PI * (qf * qf - jf * jf);
    Ok(((qf * sj * cq - jf * cj * sq) / den, (jf * sj * cq - qf * cj * sq) / den))
}

/// `ω + p sin(2πqκ) sin σ / (πq)`: rotation speed of the q-twisted state.
pub fn rotation_speed_omega(omega: f64, p: f64, q: u32, kappa: f64, sigma: f64) -> f64 {
    omega + rotation_shift(p, q, kappa, sigma)
}

/// The natural frequency `ω` for which the q-twisted state does not rotate.
pub fn natural_frequency_for_zero_rotation(p: f64, q: u32, kappa: f64, sigma: f64) -> f64 {
    -rotation_shift(p, q, kappa, sigma)
}

fn rotation_shift(p: f64, q: u32, kappa: f64, sigma: f64) -> f64 {
    let qf = q as f64;
    p * (2.0 * PI * qf * kappa).sin() * sigma.sin() / (PI * qf)
}

/// Every constant of the reduced dynamics at `κ_{1q}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalFormConstants {
    pub q: u32,
    pub p: f64,
    pub sigma: f64,
    pub kappa_crit: f64,
    /// `χ̄′ = ∂χ₁/∂κ (κ_{1q}; 1, q)`.
    pub chi1_dk: f64,
    /// `a₁(q, j)` for `j = 0..=3`.
    pub a1: [f64; 4],
    /// `a₂(q, j)` for `j = 0..=3`.
    pub a2: [f64; 4],
    pub beta1: f64,
    pub beta2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub rho0: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// `μ_j = p χ₁(κ_{1q}; j, q) cos σ` for `j = 1..=3`.
    pub mu_j: [f64; 3],
    /// `ν_j = p χ₂(κ_{1q}; j, q) sin σ` for `j = 1..=3`.
    pub nu_j: [f64; 3],
    pub c1: f64,
    pub c2: f64,
    pub beta0: f64,
    pub beta_sigma: f64,
    /// `Ω − ω` at `κ_{1q}`; add the natural frequency for the rotation speed.
    pub omega: f64,
    /// Coefficient of `κ − κ_{1q}` in `Ω̃ − Ω`.
    pub omega_tilde_slope: f64,
    pub nu1: f64,
}

impl NormalFormConstants {
    /// `μ₂ / p` at `σ = 0`, the column printed alongside β₀.
    pub fn mu2_over_p(&self) -> f64 {
        chi1_unchecked(self.kappa_crit, 2, self.q)
    }

    /// `ν_j / (p sin σ) = χ₂(κ_{1q}; j, q)`.
    pub fn nu_over_p_sin(&self, j: u32) -> f64 {
        chi2_unchecked(self.kappa_crit, j, self.q)
    }

    /// Linear growth rate `μ = p χ̄′ (κ − κ_{1q}) cos σ` of the first mode.
    pub fn mu(&self, kappa: f64) -> f64 {
        self.p * self.chi1_dk * (kappa - self.kappa_crit) * self.sigma.cos()
    }

    /// The cubic coefficient selected by the regime: β₀ for σ = 0, else β_σ.
    pub fn beta_sel(&self) -> f64 {
        if self.sigma == 0.0 {
            self.beta0
        } else {
            self.beta_sigma
        }
    }
}

struct Combos {
    beta1: f64,
    beta2: f64,
    delta1: f64,
    delta2: f64,
    rho0: f64,
    rho1: f64,
    rho2: f64,
}

fn combos(a1: &[f64; 4], a2: &[f64; 4]) -> Combos {
    Combos {
        beta1: 0.375 * a2[0] - 0.5 * a2[1] + 0.125 * a2[2],
        beta2: 0.25 * a1[1] - 0.125 * a1[2],
        delta1: a1[1] - 0.5 * a1[2],
        delta2: 0.5 * a2[0] - 0.5 * a2[2],
        rho0: 0.5 * (a2[0] - a2[1]),
        rho1: 0.5 * a1[1] - 0.25 * a1[2],
        rho2: 0.25 * a2[0] - 0.5 * a2[1] + 0.25 * a2[2],
    }
}

/// `β_σ` from its ingredients; `mu2` and `nu1`, `nu2` are taken at `σ`.
fn beta_sigma_formula(p: f64, sigma: f64, k: &Combos, mu2: f64, nu1: f64, nu2: f64) -> f64 {
    let g = 2.0 * nu1 - nu2;
    let d = mu2 * mu2 + g * g;
    let (s2, c2) = (2.0 * sigma).sin_cos();
    k.beta1 * sigma.cos()
        + p / (2.0 * d)
            * (mu2 * (k.delta1 * k.rho1 + k.delta2 * k.rho2)
                + mu2 * (k.delta1 * k.rho1 - k.delta2 * k.rho2) * c2
                + g * (k.delta1 * k.rho2 - k.delta2 * k.rho1) * s2)
}

fn check_nf_params(q: u32, p: f64, sigma: f64) -> Result<()> {
    if q == 0 || q > MAX_Q {
        return Err(Error::InvalidParameter(format!("q = {q} outside supported range 1..={MAX_Q}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1]")));
    }
    if !(sigma.abs() < PI / 2.0) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must lie in (-pi/2, pi/2)")));
    }
    Ok(())
}

/// Evaluate the normal-form constants for winding `q ∈ 1..=8`.
pub fn normal_form_constants(q: u32, p: f64, sigma: f64) -> Result<NormalFormConstants> {
    check_nf_params(q, p, sigma)?;
    let kc = kappa_critical(1, q)?;
    let chi1_dk = chi1_dkappa(kc, 1, q)?;
    let mut a1 = [0.0; 4];
    let mut a2 = [0.0; 4];
    for j in 0..4u32 {
        let (x, y) = a_coeffs(q, j, kc)?;
        a1[j as usize] = x;
        a2[j as usize] = y;
    }
    let k = combos(&a1, &a2);

    let (s, c) = sigma.sin_cos();
    let mu_j = [1, 2, 3].map(|j| p * chi1_unchecked(kc, j, q) * c);
    let nu_j = [1, 2, 3].map(|j| p * chi2_unchecked(kc, j, q) * s);
    let mu2_0 = p * chi1_unchecked(kc, 2, q);
    if mu2_0 == 0.0 || mu_j[1] == 0.0 {
        return Err(Error::Degenerate(format!(
            "mu_2 vanishes at kappa_1{q} = {kc}; the center manifold is not three-dimensional"
        )));
    }

    let g = 2.0 * nu_j[0] - nu_j[1];
    let d = mu_j[1] * mu_j[1] + g * g;
    let c1 = (p * g * k.rho1 * c - mu_j[1] * k.rho2 * s) / d;
    let c2 = (p * mu_j[1] * k.rho1 * c - g * k.rho2 * s) / d;
    let beta0 = k.beta1 + p * k.delta1 * k.rho1 / mu2_0;
    let beta_sigma = beta_sigma_formula(p, sigma, &k, mu_j[1], nu_j[0], nu_j[1]);

    Ok(NormalFormConstants {
        q,
        p,
        sigma,
        kappa_crit: kc,
        chi1_dk,
        a1,
        a2,
        beta1: k.beta1,
        beta2: k.beta2,
        delta1: k.delta1,
        delta2: k.delta2,
        rho0: k.rho0,
        rho1: k.rho1,
        rho2: k.rho2,
        mu_j,
        nu_j,
        c1,
        c2,
        beta0,
        beta_sigma,
        omega: rotation_shift(p, q, kc, sigma),
        omega_tilde_slope: p * k.rho0 * s * chi1_dk / beta_sigma,
        nu1: nu_j[0],
    })
}

/// `β_σ` along a grid of phase lags.
pub fn beta_sigma_curve(q: u32, p: f64, sigma_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_nf_params(q, p, 0.0)?;
    let base = normal_form_constants(q, p, 0.0)?;
    let k = combos(&base.a1, &base.a2);
    let kc = base.kappa_crit;
    let (x2, y1, y2) = (chi1_unchecked(kc, 2, q), chi2_unchecked(kc, 1, q), chi2_unchecked(kc, 2, q));
    sigma_grid
        .iter()
        .map(|&sigma| {
            check_nf_params(q, p, sigma)?;
            let (s, c) = sigma.sin_cos();
            Ok((sigma, beta_sigma_formula(p, sigma, &k, p * x2 * c, p * y1 * s, p * y2 * s)))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SigmaZero,
    SigmaNonzero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Side of `κ_{1q}` on which a family exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Below,
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Branch {
    pub side: Side,
    pub stability: Stability,
}

/// Branch assignment as stated by the theorems, keyed on the sign of `χ̄′β`.
///
/// For `σ = 0` a positive product gives a stable branch above `κ_{1q}`; for
/// `σ ≠ 0` the statement reads the other way round, a negative product
/// giving the stable branch above.
pub fn theorem_branch(regime: Regime, chi_beta: f64) -> Branch {
    let positive = chi_beta > 0.0;
    let stable_above = match regime {
        Regime::SigmaZero => positive,
        Regime::SigmaNonzero => !positive,
    };
    if stable_above {
        Branch { side: Side::Above, stability: Stability::Stable }
    } else {
        Branch { side: Side::Below, stability: Stability::Unstable }
    }
}

/// Branch assignment read off the truncated flow `ṙ = μr − pβr³`: the
/// nontrivial equilibrium exists where `μ/β > 0` and is stable iff `β > 0`.
pub fn flow_branch(chi1_dk: f64, beta: f64) -> Branch {
    let side = if chi1_dk * beta > 0.0 { Side::Above } else { Side::Below };
    let stability = if beta > 0.0 { Stability::Stable } else { Stability::Unstable };
    Branch { side, stability }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BifurcationPrediction {
    pub regime: Regime,
    pub kappa: f64,
    pub kappa_crit: f64,
    pub family_stability_below: Stability,
    pub family_stability_above: Stability,
    /// Branch as worded in the theorem for this regime.
    pub theorem: Branch,
    /// Branch from the sign analysis of the reduced amplitude flow.
    pub flow: Branch,
    pub criteria_agree: bool,
    pub beta_sel: f64,
    /// `sqrt(χ̄′(κ − κ_{1q})/β_sel)`, `None` when the radicand is negative.
    pub amplitude: Option<f64>,
    /// `Ω̃ − ω`.
    pub omega_tilde_offset: f64,
    pub nu1: f64,
    /// `2π/|ν₁|`, present when σ ≠ 0.
    pub period: Option<f64>,
    /// Modes `j ≥ 2` with `μ_j ≥ 0`, violating the reduction hypothesis.
    pub hypothesis_violations: Vec<u32>,
}

impl BifurcationPrediction {
    pub fn hypothesis_holds(&self) -> bool {
        self.hypothesis_violations.is_empty()
    }
}

/// `sqrt(χ̄′(κ − κ_{1q}) / β)` when real. Only meaningful near `κ_{1q}`.
pub fn branch_amplitude(chi1_dk: f64, kappa: f64, kappa_crit: f64, beta: f64) -> Option<f64> {
    let rad = chi1_dk * (kappa - kappa_crit) / beta;
    (rad >= 0.0).then(|| rad.sqrt())
}

/// Predictions of the normal form at coupling range `kappa` (assumed close
/// to `κ_{1q}`). The reduction hypothesis `μ_j < 0` is checked for
/// `j = 2..=ell_max`.
pub fn predict_bifurcation(c: &NormalFormConstants, kappa: f64, ell_max: u32) -> BifurcationPrediction {
    let regime = if c.sigma == 0.0 { Regime::SigmaZero } else { Regime::SigmaNonzero };
    let beta_sel = c.beta_sel();
    let (below, above) = if c.chi1_dk > 0.0 {
        (Stability::Stable, Stability::Unstable)
    } else {
        (Stability::Unstable, Stability::Stable)
    };
    let theorem = theorem_branch(regime, c.chi1_dk * beta_sel);
    let flow = flow_branch(c.chi1_dk, beta_sel);
    let cos_s = c.sigma.cos();
    let hypothesis_violations =
        (2..=ell_max.max(2)).filter(|&j| c.p * chi1_unchecked(c.kappa_crit, j, c.q) * cos_s >= 0.0).collect();
    let shift = match regime {
        Regime::SigmaZero => 0.0,
        Regime::SigmaNonzero => c.omega_tilde_slope * (kappa - c.kappa_crit),
    };
    BifurcationPrediction {
        regime,
        kappa,
        kappa_crit: c.kappa_crit,
        family_stability_below: below,
        family_stability_above: above,
        theorem,
        flow,
        criteria_agree: theorem == flow,
        beta_sel,
        amplitude: branch_amplitude(c.chi1_dk, kappa, c.kappa_crit, beta_sel),
        omega_tilde_offset: c.omega + shift,
        nu1: c.nu1,
        period: (regime == Regime::SigmaNonzero && c.nu1 != 0.0).then(|| 2.0 * PI / c.nu1.abs()),
        hypothesis_violations,
    }
}

/// Exact solution of the truncated flow `ṙ = μr − pβr³` at the given times.
///
/// Entries after a finite-time blow-up (subcritical case) are `+∞`.
pub fn reduced_amplitude_flow(mu: f64, p: f64, beta: f64, r0: f64, times: &[f64]) -> Vec<f64> {
    let z0 = r0 * r0;
    let b = p * beta;
    times
        .iter()
        .map(|&t| {
            let z = if mu == 0.0 {
                let den = 1.0 + 2.0 * b * z0 * t;
                if den <= 0.0 {
                    f64::INFINITY
                } else {
                    z0 / den
                }
            } else {
                // z = μ z₀ e^{2μt} / (μ + b z₀ (e^{2μt} − 1)), rescaled to avoid overflow
                let e = (-2.0 * mu * t).exp();
                let den = mu * e + b * z0 * (1.0 - e);
                // den is monotone in t and starts at μ; a sign change is blow-up
                if den * mu <= 0.0 {
                    f64::INFINITY
                } else {
                    mu * z0 / den
                }
            };
            z.max(0.0).sqrt()
        })
        .collect()
}

/// The nontrivial equilibrium `sqrt(μ/(pβ))`, when it exists.
pub fn reduced_equilibrium(mu: f64, p: f64, beta: f64) -> Option<f64> {
    let rad = mu / (p * beta);
    (rad > 0.0 && rad.is_finite()).then(|| rad.sqrt())
}
