//! Post-processing of phase vectors: twisted-state fits, first-mode
//! modulation, distances modulo global rotation and resolution studies.
//!
//! Nodes are indexed `k = 0..n` at positions `x_k = k/n`. The first Fourier
//! mode of a deviation field `v` is written `r sin(2πk/n + ψ)`.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{run_experiment, SimulationConfig};
use crate::graphon::GraphKind;
use crate::phase::{circular_mean, unwrap, wrap};
use crate::{Error, Result};

/// Below this circular-mean magnitude no offset can be fitted.
pub const FIT_MAGNITUDE_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwistedFit {
    pub q: u32,
    pub theta_hat: f64,
    /// Magnitude of the circular mean of `u_k − 2πqk/n`.
    pub coherence: f64,
    pub residual_max: f64,
    /// Root-mean-square wrapped residual.
    pub residual_l2: f64,
}

fn twist(q: u32, k: usize, n: usize) -> f64 {
    TAU * q as f64 * k as f64 / n as f64
}

/// Fits `u_k ≈ 2πqk/n + θ̂` with `θ̂` the circular mean of the detwisted phases.
pub fn fit_twisted(u: &[f64], q: u32) -> Result<TwistedFit> {
    let n = u.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("fit needs n >= 2, got {n}")));
    }
    let (mag, theta_hat) = circular_mean(u.iter().enumerate().map(|(k, x)| x - twist(q, k, n)));
    if mag < FIT_MAGNITUDE_MIN {
        return Err(Error::NoFit { magnitude: mag });
    }
    let (mut max, mut ss) = (0.0f64, 0.0);
    for (k, x) in u.iter().enumerate() {
        let r = wrap(x - twist(q, k, n) - theta_hat);
        max = max.max(r.abs());
        ss += r * r;
    }
    Ok(TwistedFit { q, theta_hat, coherence: mag, residual_max: max, residual_l2: (ss / n as f64).sqrt() })
}

/// Wrapped deviation from the fitted twisted state, `v_k = wrap(u_k − 2πqk/n − θ̂)`.
pub fn deviation_field(u: &[f64], q: u32) -> Result<Vec<f64>> {
    let fit = fit_twisted(u, q)?;
    let n = u.len();
    Ok(u.iter().enumerate().map(|(k, x)| wrap(x - twist(q, k, n) - fit.theta_hat)).collect())
}

/// First Fourier mode of a deviation field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mode1 {
    /// `mean(v_k cos 2πk/n)`.
    pub c: f64,
    /// `mean(v_k sin 2πk/n)`.
    pub s: f64,
    pub r: f64,
    pub psi: f64,
}

pub fn fourier_mode1(v: &[f64]) -> Result<Mode1> {
    let n = v.len();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("mode projection needs n >= 4, got {n}")));
    }
    let (mut c, mut s) = (0.0, 0.0);
    for (k, x) in v.iter().enumerate() {
        let (sn, cs) = (TAU * k as f64 / n as f64).sin_cos();
        c += x * cs;
        s += x * sn;
    }
    c /= n as f64;
    s /= n as f64;
    Ok(Mode1 { c, s, r: 2.0 * c.hypot(s), psi: c.atan2(s) })
}

/// `r sin(2πk/n + ψ)` for `k = 0..n`.
pub fn reconstruct_mode1(m: &Mode1, n: usize) -> Vec<f64> {
    (0..n).map(|k| m.r * (TAU * k as f64 / n as f64 + m.psi).sin()).collect()
}

/// Online summary of one sample of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleStats {
    pub t: f64,
    /// Fitted offset θ̂ (argument of the circular mean of detwisted phases).
    pub theta: f64,
    /// Magnitude of that circular mean; near 1 close to a twisted state.
    pub coherence: f64,
    /// Largest wrapped deviation from the fitted twisted state.
    pub max_deviation: f64,
    pub c: f64,
    pub s: f64,
    pub r: f64,
    pub psi: f64,
}

/// Summary statistics of the full state `u` at time `t` relative to the
/// q-twisted family. When no offset can be fitted the deviation is
/// reported as π and the mode as zero.
pub fn sample_stats(t: f64, u: &[f64], q: u32) -> SampleStats {
    match fit_twisted(u, q) {
        Ok(fit) => {
            let n = u.len();
            let v: Vec<f64> = u.iter().enumerate().map(|(k, x)| wrap(x - twist(q, k, n) - fit.theta_hat)).collect();
            let m = fourier_mode1(&v).unwrap_or(Mode1 { c: 0.0, s: 0.0, r: 0.0, psi: 0.0 });
            SampleStats {
                t,
                theta: fit.theta_hat,
                coherence: fit.coherence,
                max_deviation: fit.residual_max,
                c: m.c,
                s: m.s,
                r: m.r,
                psi: m.psi,
            }
        }
        Err(_) => SampleStats { t, theta: 0.0, coherence: 0.0, max_deviation: PI, c: 0.0, s: 0.0, r: 0.0, psi: 0.0 },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModulationSample {
    pub t: f64,
    pub c: f64,
    pub s: f64,
    pub r: f64,
    /// Unwrapped mode phase.
    pub psi: f64,
    /// Unwrapped offset track `Ω̃t + θ`.
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModulationEstimate {
    pub samples: Vec<ModulationSample>,
    /// Least-squares slope of the drift track.
    pub omega_tilde: f64,
    /// Least-squares slope of the unwrapped mode phase.
    pub psi_rate: f64,
}

impl ModulationEstimate {
    fn window(&self, t_from: f64, t_to: f64) -> impl Iterator<Item = &ModulationSample> {
        self.samples.iter().filter(move |s| s.t >= t_from && s.t <= t_to)
    }

    /// Slope of the unwrapped mode phase over `[t_from, t_to]`.
    pub fn psi_rate_over(&self, t_from: f64, t_to: f64) -> Option<f64> {
        let (t, y): (Vec<f64>, Vec<f64>) = self.window(t_from, t_to).map(|s| (s.t, s.psi)).unzip();
        linear_fit(&t, &y).map(|f| f.0)
    }

    /// Slope of the drift track over `[t_from, t_to]`.
    pub fn omega_tilde_over(&self, t_from: f64, t_to: f64) -> Option<f64> {
        let (t, y): (Vec<f64>, Vec<f64>) = self.window(t_from, t_to).map(|s| (s.t, s.drift)).unzip();
        linear_fit(&t, &y).map(|f| f.0)
    }

    /// Smallest and largest amplitude over `[t_from, t_to]`.
    pub fn r_range(&self, t_from: f64, t_to: f64) -> Option<(f64, f64)> {
        self.window(t_from, t_to).fold(None, |acc, s| match acc {
            None => Some((s.r, s.r)),
            Some((lo, hi)) => Some((lo.min(s.r), hi.max(s.r))),
        })
    }
}

/// Ordinary least squares `y ≈ slope·t + intercept`; `None` for fewer than
/// two distinct abscissae.
pub fn linear_fit(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = t.len().min(y.len());
    if n < 2 {
        return None;
    }
    let tm = t[..n].iter().sum::<f64>() / n as f64;
    let ym = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sty, mut stt) = (0.0, 0.0);
    for i in 0..n {
        sty += (t[i] - tm) * (y[i] - ym);
        stt += (t[i] - tm) * (t[i] - tm);
    }
    (stt > 0.0).then(|| {
        let slope = sty / stt;
        (slope, ym - slope * tm)
    })
}

/// Largest tolerated jump of the wrapped drift between consecutive samples.
pub const DRIFT_JUMP_MAX: f64 = 0.75 * PI;

/// Builds the modulation estimate from per-sample statistics.
pub fn modulation_from_stats(stats: &[SampleStats]) -> Result<ModulationEstimate> {
    let theta: Vec<f64> = stats.iter().map(|s| s.theta).collect();
    if let Some(jump) = theta.windows(2).map(|w| wrap(w[1] - w[0]).abs()).find(|j| *j > DRIFT_JUMP_MAX) {
        return Err(Error::SamplingTooCoarse { quantity: "drift", jump });
    }
    let drift = unwrap(&theta);
    let psi = unwrap(&stats.iter().map(|s| s.psi).collect::<Vec<_>>());
    let samples: Vec<ModulationSample> = stats
        .iter()
        .zip(drift.iter().zip(&psi))
        .map(|(s, (d, p))| ModulationSample { t: s.t, c: s.c, s: s.s, r: s.r, psi: *p, drift: *d })
        .collect();
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    Ok(ModulationEstimate {
        omega_tilde: linear_fit(&t, &drift).map_or(0.0, |f| f.0),
        psi_rate: linear_fit(&t, &psi).map_or(0.0, |f| f.0),
        samples,
    })
}

/// Modulation estimate from full-state samples `states[i]` at `times[i]`.
pub fn estimate_modulation(times: &[f64], states: &[Vec<f64>], q: u32) -> Result<ModulationEstimate> {
    if times.len() != states.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: states.len() });
    }
    let stats: Vec<SampleStats> = times
        .par_iter()
        .zip(states.par_iter())
        .map(|(&t, u)| {
            fit_twisted(u, q)?;
            Ok(sample_stats(t, u, q))
        })
        .collect::<Result<_>>()?;
    modulation_from_stats(&stats)
}

/// `min_θ sqrt(mean_k wrap(a_k − b_k − θ)²)`, minimised exactly.
///
/// Every wrapped residual vector corresponds to one of the `n` ways of
/// cutting the circle between sorted differences; the optimum is the
/// smallest variance among those unwrapped representations.
pub fn distance_mod_rotation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let n = a.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| wrap(x - y)).collect();
    d.sort_by(f64::total_cmp);
    let nf = n as f64;
    // shift relative to d[0] to limit cancellation in the running sums
    let base = d[0];
    let mut sum: f64 = d.iter().map(|x| x - base).sum();
    let mut sq: f64 = d.iter().map(|x| (x - base) * (x - base)).sum();
    let mut best = (sq - sum * sum / nf).max(0.0);
    for x in d.iter().take(n - 1) {
        // move the smallest remaining element up by one turn
        let old = x - base;
        let new = old + TAU;
        sum += TAU;
        sq += new * new - old * old;
        best = best.min((sq - sum * sum / nf).max(0.0));
    }
    Ok((best / nf).sqrt())
}

/// Piecewise-constant embedding of `u` (n cells) onto `m` cells, `n | m`.
pub fn embed_piecewise_constant(u: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = u.len();
    if n == 0 || m % n != 0 {
        return Err(Error::InvalidParameter(format!("cannot embed {n} cells into {m}")));
    }
    let f = m / n;
    Ok((0..m).map(|i| u[i / f]).collect())
}

/// Resolution study on deterministic graphs: runs `template` (noise-free,
/// same smooth initial profile) at every `n` in `n_list` and at `n_ref`, and
/// returns the distance modulo rotation of each final state to the
/// reference after piecewise-constant embedding. Each `n` must divide `n_ref`.
pub fn convergence_study(template: &SimulationConfig, n_list: &[usize], n_ref: usize) -> Result<Vec<(usize, f64)>> {
    if template.graph.kind != GraphKind::DeterministicDense {
        return Err(Error::InvalidParameter("convergence study requires a deterministic graph".into()));
    }
    let run = |n: usize| -> Result<Vec<f64>> {
        let mut cfg = template.clone();
        cfg.graph.n = n;
        cfg.perturbation_amplitude = 0.0;
        cfg.sample_dt = cfg.t_end;
        cfg.snapshots.clear();
        let traj = run_experiment(&cfg)?;
        embed_piecewise_constant(&traj.final_state.phases, n_ref)
    };
    let reference = run(n_ref)?;
    n_list.par_iter().map(|&n| Ok((n, distance_mod_rotation(&run(n)?, &reference)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twisted(n: usize, q: u32, theta: f64) -> Vec<f64> {
        (0..n).map(|k| twist(q, k, n) + theta).collect()
    }

    #[test]
    fn exact_fit() {
        let u = twisted(100, 3, 1.234);
        let fit = fit_twisted(&u, 3).unwrap();
        assert!((fit.theta_hat - 1.234).abs() < 1e-12);
        assert!(fit.residual_max < 1e-12);
        assert!(deviation_field(&u, 3).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn desynchronised_has_no_fit() {
        let u: Vec<f64> = (0..64).map(|k| TAU * k as f64 / 64.0).collect();
        assert!(matches!(fit_twisted(&u, 0), Err(Error::NoFit { .. })));
        assert!(fit_twisted(&[0.0], 0).is_err());
    }

    #[test]
    fn mode_round_trip() {
        let n = 1000;
        for (a, psi0) in [(0.1, 0.3), (0.5, -2.0), (0.02, 3.0)] {
            let v: Vec<f64> = (0..n).map(|k| a * (TAU * k as f64 / n as f64 + psi0).sin()).collect();
            let m = fourier_mode1(&v).unwrap();
            assert!((m.r - a).abs() < 1e-12);
            assert!(wrap(m.psi - psi0).abs() < 1e-12);
            let back = reconstruct_mode1(&m, n);
            let res = back.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(res < 1e-10);
        }
        let zero = fourier_mode1(&vec![0.0; 16]).unwrap();
        assert_eq!(zero.r, 0.0);
        let mode2: Vec<f64> = (0..n).map(|k| 0.3 * (2.0 * TAU * k as f64 / n as f64).cos()).collect();
        assert!(fourier_mode1(&mode2).unwrap().r < 1e-12);
        assert!(fourier_mode1(&[0.0; 3]).is_err());
    }

    #[test]
    fn deviation_recovers_sinusoid() {
        let n = 500;
        let a = 0.5;
        let u: Vec<f64> = (0..n).map(|k| twist(2, k, n) + a * (TAU * k as f64 / n as f64).sin() + 0.7).collect();
        let v = deviation_field(&u, 2).unwrap();
        for (k, x) in v.iter().enumerate() {
            assert!((x - a * (TAU * k as f64 / n as f64).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_examples() {
        let a: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin() * 2.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 2.5).collect();
        assert!(distance_mod_rotation(&a, &b).unwrap() < 1e-12);
        // half the nodes antipodal: best θ leaves ±π/2 everywhere
        let z = vec![0.0; 10];
        let h: Vec<f64> = (0..10).map(|k| if k < 5 { 0.0 } else { PI }).collect();
        assert!((distance_mod_rotation(&h, &z).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!(distance_mod_rotation(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn distance_matches_brute_force() {
        let a: Vec<f64> = (0..37).map(|k| ((k * k) as f64 * 0.913).sin() * 3.0).collect();
        let b: Vec<f64> = (0..37).map(|k| (k as f64 * 1.7).cos() * 2.0).collect();
        let exact = distance_mod_rotation(&a, &b).unwrap();
        let brute = (0..10_000)
            .map(|i| {
                let th = -PI + TAU * i as f64 / 10_000.0;
                let s: f64 = a.iter().zip(&b).map(|(x, y)| wrap(x - y - th).powi(2)).sum();
                (s / 37.0).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(exact <= brute + 1e-12);
        assert!(brute - exact < 1e-3);
    }

    #[test]
    fn modulation_from_synthetic_trajectory() {
        let n = 1000;
        let (a, nu, om) = (0.1, 0.05, 0.02);
        let times: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let states: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                (0..n).map(|k| twist(2, k, n) + a * (TAU * k as f64 / n as f64 + nu * t).sin() + om * t).collect()
            })
            .collect();
        let est = estimate_modulation(&times, &states, 2).unwrap();
        assert!((est.psi_rate - nu).abs() < 0.01 * nu);
        assert!((est.omega_tilde - om).abs() < 0.01 * om);
        assert!(est.samples.iter().all(|s| (s.r - a).abs() < 0.01 * a));
    }

    #[test]
    fn coarse_sampling_detected() {
        let n = 64;
        let times = [0.0, 1.0, 2.0];
        let states: Vec<Vec<f64>> = times.iter().map(|&t| twisted(n, 1, 2.8 * t)).collect();
        assert!(matches!(estimate_modulation(&times, &states, 1), Err(Error::SamplingTooCoarse { .. })));
    }

    #[test]
    fn linear_fit_basics() {
        let (s, c) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-15 && (c - 1.0).abs() < 1e-15);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn embedding() {
        assert_eq!(embed_piecewise_constant(&[1.0, 2.0], 4).unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert!(embed_piecewise_constant(&[1.0, 2.0, 3.0], 4).is_err());
    }
}
