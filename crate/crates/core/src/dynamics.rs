//! Time integration of the finite Kuramoto model
//!
//! ```text
//! du_k/dt = ω + 1/(n α_n) Σ_j w_kj sin(u_j − u_k + σ)
//! ```
//!
//! on the band graphs of [`crate::graphon`]. Phases are kept unwrapped
//! during integration; wrapping happens only in analysis and output.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{sample_stats, SampleStats};
use crate::bifurcation::natural_frequency_for_zero_rotation;
use crate::graphon::{build_coupling, CouplingMatrix, Csr, GraphSpec, Layout};
use crate::ode::{integrate, Dop853Options, Dop853Stats};
use crate::{Error, Result};

/// Rows per rayon task in the sparse and naive paths.
const PAR_MIN_ROWS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub t: f64,
    pub phases: Vec<f64>,
}

fn check_len(u: &[f64], out: &[f64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u.len() });
    }
    if out.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: out.len() });
    }
    Ok(())
}

/// Reference right-hand side: a direct double loop over all `(k, j)`.
pub fn rhs_naive(u: &[f64], coupling: &CouplingMatrix, omega: f64, sigma: f64, out: &mut [f64]) -> Result<()> {
    let n = coupling.n;
    check_len(u, out, n)?;
    out.par_iter_mut().with_min_len(PAR_MIN_ROWS).enumerate().for_each(|(k, o)| {
        let mut acc = 0.0;
        for (j, uj) in u.iter().enumerate() {
            let w = coupling.weight(k, j);
            if w != 0.0 {
                acc += w * (uj - u[k] + sigma).sin();
            }
        }
        *o = omega + coupling.scale * acc;
    });
    Ok(())
}

/// Prefix-sum buffers for the banded path.
#[derive(Clone, Debug, Default)]
pub struct BandScratch {
    ps: Vec<f64>,
    pc: Vec<f64>,
}

/// O(n) right-hand side for the circulant band of half-width `M` and
/// uniform weight `w`, using
/// `sin(u_j − u_k + σ) = sin u_j cos(u_k − σ) − cos u_j sin(u_k − σ)`
/// and circular prefix sums of `sin u`, `cos u` over each window.
pub fn rhs_banded_fast(
    u: &[f64],
    half_width: usize,
    w: f64,
    scale: f64,
    omega: f64,
    sigma: f64,
    out: &mut [f64],
) -> Result<()> {
    rhs_banded_with(u, half_width, w, scale, omega, sigma, out, &mut BandScratch::default())
}

#[allow(clippy::too_many_arguments)]
fn rhs_banded_with(
    u: &[f64],
    half_width: usize,
    w: f64,
    scale: f64,
    omega: f64,
    sigma: f64,
    out: &mut [f64],
    scratch: &mut BandScratch,
) -> Result<()> {
    let n = u.len();
    check_len(u, out, n)?;
    if 2 * half_width + 1 > n {
        return Err(Error::InvalidParameter(format!("band half-width {half_width} too wide for n = {n}")));
    }
    let BandScratch { ps, pc } = scratch;
    ps.clear();
    pc.clear();
    ps.reserve(n + 1);
    pc.reserve(n + 1);
    ps.push(0.0);
    pc.push(0.0);
    let (mut as_, mut ac) = (0.0, 0.0);
    for x in u {
        let (s, c) = x.sin_cos();
        as_ += s;
        ac += c;
        ps.push(as_);
        pc.push(ac);
    }
    let m = half_width;
    let window = |p: &[f64], k: usize| -> f64 {
        // indices k−M ..= k+M, wrapping on at most one side since 2M+1 ≤ n
        if k >= m && k + m < n {
            p[k + m + 1] - p[k - m]
        } else if k < m {
            p[k + m + 1] + (p[n] - p[n + k - m])
        } else {
            (p[n] - p[k - m]) + p[k + m + 1 - n]
        }
    };
    let f = scale * w;
    for (k, o) in out.iter_mut().enumerate() {
        let (s, c) = (u[k] - sigma).sin_cos();
        *o = omega + f * (window(ps, k) * c - window(pc, k) * s);
    }
    Ok(())
}

/// Row-compressed right-hand side for binary adjacency, O(nnz).
pub fn rhs_sparse(u: &[f64], csr: &Csr, scale: f64, omega: f64, sigma: f64, out: &mut [f64]) -> Result<()> {
    let n = csr.n();
    check_len(u, out, n)?;
    let sc: Vec<(f64, f64)> = u.iter().map(|x| x.sin_cos()).collect();
    out.par_iter_mut().with_min_len(PAR_MIN_ROWS).enumerate().for_each(|(k, o)| {
        let (mut ss, mut cc) = (0.0, 0.0);
        for &j in csr.row(k) {
            let (s, c) = sc[j as usize];
            ss += s;
            cc += c;
        }
        let (s, c) = (u[k] - sigma).sin_cos();
        *o = omega + scale * (ss * c - cc * s);
    });
    Ok(())
}

/// Which right-hand-side evaluation to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsPath {
    /// Banded for deterministic graphs, sparse for random ones.
    #[default]
    Auto,
    Naive,
    Banded,
    Sparse,
}

/// The Kuramoto vector field bound to a coupling matrix.
pub struct KuramotoRhs<'a> {
    coupling: &'a CouplingMatrix,
    omega: f64,
    sigma: f64,
    path: RhsPath,
    scratch: BandScratch,
}

impl<'a> KuramotoRhs<'a> {
    pub fn new(coupling: &'a CouplingMatrix, omega: f64, sigma: f64, path: RhsPath) -> Result<Self> {
        let path = match (path, &coupling.layout) {
            (RhsPath::Auto, Layout::BandedUniform { .. }) => RhsPath::Banded,
            (RhsPath::Auto, Layout::SparseBinary(_)) => RhsPath::Sparse,
            (RhsPath::Banded, Layout::SparseBinary(_)) => {
                return Err(Error::InvalidParameter("banded path requires a deterministic band".into()))
            }
            (RhsPath::Sparse, Layout::BandedUniform { .. }) => {
                return Err(Error::InvalidParameter("sparse path requires a sampled adjacency".into()))
            }
            (p, _) => p,
        };
        Ok(KuramotoRhs { coupling, omega, sigma, path, scratch: BandScratch::default() })
    }

    pub fn path(&self) -> RhsPath {
        self.path
    }

    pub fn eval(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let c = self.coupling;
        match (&c.layout, self.path) {
            (_, RhsPath::Naive) => rhs_naive(u, c, self.omega, self.sigma, out),
            (Layout::BandedUniform { half_width, weight }, _) => {
                rhs_banded_with(u, *half_width, *weight, c.scale, self.omega, self.sigma, out, &mut self.scratch)
            }
            (Layout::SparseBinary(csr), _) => rhs_sparse(u, csr, c.scale, self.omega, self.sigma, out),
        }
    }
}

/// `u_k = 2πqk/n + η_k`, `η_k` i.i.d. uniform on `[−A, A]` from a ChaCha8
/// stream seeded with `seed`.
pub fn twisted_initial_condition(n: usize, q: u32, amplitude: f64, seed: u64) -> Result<PhaseState> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidParameter(format!("perturbation amplitude {amplitude} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = (0..n)
        .map(|k| {
            let eta = if amplitude > 0.0 { rng.random_range(-amplitude..=amplitude) } else { 0.0 };
            TAU * q as f64 * k as f64 / n as f64 + eta
        })
        .collect();
    Ok(PhaseState { t: 0.0, phases })
}

/// Natural frequency: a fixed value, or `"auto"` for the value that makes
/// the q-twisted state of the continuum limit stationary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Omega {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for Omega {
    fn default() -> Self {
        Omega::Value(0.0)
    }
}

fn default_tol() -> f64 {
    1e-8
}
fn default_sample_dt() -> f64 {
    1.0
}
fn default_perturbation() -> f64 {
    1e-2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub graph: GraphSpec,
    /// Winding number of the initial twisted state.
    pub q: u32,
    #[serde(default)]
    pub omega: Omega,
    #[serde(default)]
    pub sigma: f64,
    pub t_end: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation_amplitude: f64,
    /// Amplitude `A` of an extra `A sin(2πx_k)` added to the initial state.
    #[serde(default)]
    pub initial_modulation: f64,
    /// Seed of the initial perturbation.
    #[serde(default)]
    pub seed: u64,
    /// Speed subtracted from recorded node phases, `u_k − Ω̂ t`.
    #[serde(default)]
    pub rotating_frame: Option<f64>,
    /// Record every `stride`-th node; defaults to `max(1, ⌊n/10⌋)`.
    #[serde(default)]
    pub output_stride: Option<usize>,
    /// Instants at which the full state is kept.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub rhs: RhsPath,
}

impl SimulationConfig {
    /// A deterministic-graph run with default tolerances and sampling.
    pub fn new(graph: GraphSpec, q: u32, sigma: f64, t_end: f64) -> Self {
        SimulationConfig {
            graph,
            q,
            omega: Omega::default(),
            sigma,
            t_end,
            rel_tol: default_tol(),
            abs_tol: default_tol(),
            sample_dt: default_sample_dt(),
            perturbation_amplitude: default_perturbation(),
            initial_modulation: 0.0,
            seed: 0,
            rotating_frame: None,
            output_stride: None,
            snapshots: Vec::new(),
            rhs: RhsPath::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return bad(format!("{name} = {tol} must lie in (0, 1e-2]"));
            }
        }
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return bad(format!("sample_dt = {} must be positive", self.sample_dt));
        }
        if !(self.perturbation_amplitude >= 0.0 && self.perturbation_amplitude.is_finite()) {
            return bad(format!("perturbation_amplitude = {} must be >= 0", self.perturbation_amplitude));
        }
        if !self.sigma.is_finite() || !self.initial_modulation.is_finite() {
            return bad("sigma and initial_modulation must be finite".into());
        }
        if let Omega::Value(w) = self.omega {
            if !w.is_finite() {
                return bad("omega must be finite".into());
            }
        }
        if self.output_stride == Some(0) {
            return bad("output_stride must be >= 1".into());
        }
        if let Some(t) = self.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
            return bad(format!("snapshot time {t} outside [0, t_end]"));
        }
        Ok(())
    }

    /// The natural frequency actually used.
    pub fn resolved_omega(&self) -> f64 {
        match self.omega {
            Omega::Value(w) => w,
            Omega::Auto(_) => natural_frequency_for_zero_rotation(self.graph.p, self.q, self.graph.kappa, self.sigma),
        }
    }

    pub fn stride(&self) -> usize {
        self.output_stride.unwrap_or((self.graph.n / 10).max(1))
    }

    pub fn solver_options(&self) -> Dop853Options {
        Dop853Options::with_tol(self.rel_tol, self.abs_tol)
    }

    /// `0, dt, 2dt, …` up to `t_end`, with `t_end` appended if missed.
    pub fn sample_times(&self) -> Vec<f64> {
        let count = (self.t_end / self.sample_dt * (1.0 + 1e-12)).floor() as usize;
        let mut ts: Vec<f64> = (0..=count).map(|i| (i as f64 * self.sample_dt).min(self.t_end)).collect();
        ts.dedup();
        if *ts.last().unwrap() < self.t_end {
            ts.push(self.t_end);
        }
        ts
    }

    /// Initial phases: twisted state, optional first-mode bump, uniform noise.
    pub fn initial_state(&self) -> Result<PhaseState> {
        let n = self.graph.n;
        let mut s = twisted_initial_condition(n, self.q, self.perturbation_amplitude, self.seed)?;
        if self.initial_modulation != 0.0 {
            for (k, u) in s.phases.iter_mut().enumerate() {
                *u += self.initial_modulation * (TAU * k as f64 / n as f64).sin();
            }
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub omega: f64,
    pub rhs_path: RhsPath,
    pub node_indices: Vec<usize>,
    pub times: Vec<f64>,
    /// Recorded phases of `node_indices`, in the output frame.
    pub states: Vec<Vec<f64>>,
    /// Statistics of the full state (lab frame) at every sample.
    pub stats: Vec<SampleStats>,
    pub snapshots: Vec<PhaseState>,
    pub final_state: PhaseState,
    pub solver: Dop853Stats,
}

impl Trajectory {
    /// Largest deviation from the fitted twisted state over samples in `[t_from, t_to]`.
    pub fn max_deviation(&self, t_from: f64, t_to: f64) -> f64 {
        self.stats.iter().filter(|s| s.t >= t_from && s.t <= t_to).map(|s| s.max_deviation).fold(0.0, f64::max)
    }

    /// First sample time at which the deviation exceeds `threshold`.
    pub fn escape_time(&self, threshold: f64) -> Option<f64> {
        self.stats.iter().find(|s| s.max_deviation > threshold).map(|s| s.t)
    }
}

/// Builds the graph and initial state described by `config` and integrates.
pub fn run_experiment(config: &SimulationConfig) -> Result<Trajectory> {
    config.validate()?;
    let coupling = build_coupling(&config.graph)?;
    let u0 = config.initial_state()?;
    run_with(config, &coupling, &u0.phases)
}

/// Largest `h·L` allowed, `L` the Jacobian bound of the coupling; inside
/// DOP853's real stability interval (about −6) with some margin.
pub const MAX_STEP_TIMES_LIPSCHITZ: f64 = 4.0;

/// Integrates `config` from the given initial phases on a prebuilt coupling.
pub fn run_with(config: &SimulationConfig, coupling: &CouplingMatrix, u0: &[f64]) -> Result<Trajectory> {
    config.validate()?;
    let n = coupling.n;
    if u0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u0.len() });
    }
    let omega = config.resolved_omega();
    let mut field = KuramotoRhs::new(coupling, omega, config.sigma, config.rhs)?;
    let rhs_path = field.path();
    // Near an equilibrium the error estimate sits at round-off level and the
    // controller would stretch steps past the stability interval, where the
    // step ends stay accurate but the dense output between them does not.
    let mut options = config.solver_options();
    let bound = coupling.jacobian_bound();
    if bound > 0.0 {
        options.h_max = options.h_max.min(MAX_STEP_TIMES_LIPSCHITZ / bound);
    }

    let samples = config.sample_times();
    let mut snaps: Vec<f64> = config.snapshots.clone();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();
    let mut observe: Vec<f64> = samples.iter().chain(&snaps).copied().collect();
    observe.sort_by(f64::total_cmp);
    observe.dedup();

    let nodes: Vec<usize> = (0..n).step_by(config.stride()).collect();
    let frame = config.rotating_frame.unwrap_or(0.0);
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    let mut stats = Vec::with_capacity(samples.len());
    let mut snapshots = Vec::with_capacity(snaps.len());
    let (mut si, mut pi) = (0, 0);
    let mut failure: Option<Error> = None;

    let (y_end, solver) = integrate(
        |_t, y: &[f64], dy: &mut [f64]| {
            if let Err(e) = field.eval(y, dy) {
                failure.get_or_insert(e);
                dy.fill(f64::NAN);
            }
        },
        0.0,
        u0,
        config.t_end,
        &observe,
        options,
        |t, y| {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            if si < samples.len() && samples[si] == t {
                times.push(t);
                states.push(nodes.iter().map(|&k| y[k] - frame * t).collect());
                stats.push(sample_stats(t, y, config.q));
                si += 1;
            }
            if pi < snaps.len() && snaps[pi] == t {
                snapshots.push(PhaseState { t, phases: y.to_vec() });
                pi += 1;
            }
            Ok(())
        },
    )
    .map_err(|e| failure.take().unwrap_or(e))?;

    Ok(Trajectory {
        omega,
        rhs_path,
        node_indices: nodes,
        times,
        states,
        stats,
        snapshots,
        final_state: PhaseState { t: config.t_end, phases: y_end },
        solver,
    })
}
