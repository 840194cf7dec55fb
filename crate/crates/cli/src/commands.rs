//! One function per subcommand.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use twisted_core::analysis::{deviation_field, estimate_modulation, fourier_mode1, reconstruct_mode1};
use twisted_core::bifurcation::{
    beta_sigma_curve, flow_branch, normal_form_constants, theorem_branch, Branch, NormalFormConstants, Regime,
};
use twisted_core::dynamics::{run_experiment, AutoTag, Omega, RhsPath, SimulationConfig, Trajectory};
use twisted_core::graphon::{build_coupling, within_band_density, GraphKind, GraphSpec};
use twisted_core::io::{
    read_trajectory_csv, write_adjacency_binary, write_estimate_csv, write_pixel_csv, write_snapshot, write_stats_csv,
    write_trajectory_csv, AdjacencyHeader,
};
use twisted_core::spectrum::{
    chi1, chi2, eigenvalues, eigenvalues_q0, phi, zeta0, zeta_extremum, ModeParams, SpectrumReport, Verdict,
};

use crate::config::{self, locate};
use crate::manifest::ManifestBuilder;
use crate::{
    BetaSigmaArgs, CliError, CliResult, ConstantsArgs, EstimateArgs, GraphArgs, GraphFlags, Output, RunManifest,
    SimFlags, SimulateArgs, SpectrumArgs, SweepArgs,
};

/// Routes named outputs to files in the output directory, or to stdout.
struct Sink<'a> {
    out: &'a Output,
    printed: bool,
}

impl<'a> Sink<'a> {
    fn new(out: &'a Output) -> CliResult<Self> {
        if let Some(dir) = &out.out_dir {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        Ok(Sink { out, printed: false })
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.out.out_dir.as_ref().map(|d| d.join(name))
    }

    fn require_dir(&self, what: &str) -> CliResult<&Path> {
        self.out.out_dir.as_deref().ok_or_else(|| CliError::Config(format!("{what} needs --out-dir")))
    }

    fn emit(&mut self, name: &str, bytes: &[u8], mb: &mut ManifestBuilder) -> CliResult<()> {
        match self.path(name) {
            Some(path) => {
                std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
                mb.output(path);
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                let sep: &[u8] = if self.printed { b"\n" } else { b"" };
                stdout.write_all(sep).and_then(|_| stdout.write_all(bytes)).map_err(|e| CliError::io("<stdout>", e))?;
                self.printed = true;
            }
        }
        Ok(())
    }

    fn finish(self, mb: ManifestBuilder) -> CliResult<RunManifest> {
        let manifest = mb.finish();
        match (&self.out.manifest, &self.out.out_dir) {
            (Some(p), _) => manifest.write(p)?,
            (None, Some(d)) => manifest.write(&d.join("manifest.json"))?,
            (None, None) => {
                eprintln!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serialises"));
            }
        }
        Ok(manifest)
    }
}

fn core_buf<F>(f: F) -> CliResult<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> twisted_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("values serialise");
    s.push('\n');
    s.into_bytes()
}

// ---------------------------------------------------------------- constants

/// The reference tables for a list of winding numbers.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantsTables {
    pub rows: Vec<NormalFormConstants>,
    pub zeta0: f64,
    pub zeta1: f64,
    pub zeta2: f64,
}

pub fn constants_tables(q: &[u32], p: f64, sigma: f64) -> CliResult<ConstantsTables> {
    let rows = q.iter().map(|&q| normal_form_constants(q, p, sigma)).collect::<Result<Vec<_>, _>>()?;
    Ok(ConstantsTables { rows, zeta0: zeta0()?, zeta1: zeta_extremum(1)?, zeta2: zeta_extremum(2)? })
}

impl ConstantsTables {
    /// `q, κ_{1q}, χ̄′, β₁, δ₁, ρ₁, μ₂/p, β₀`.
    pub fn table1_csv(&self) -> String {
        let mut s = String::from("q,kappa_1q,chi_bar_prime,beta1,delta1,rho1,mu2_over_p,beta0\n");
        for c in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.q,
                c.kappa_crit,
                c.chi1_dk,
                c.beta1,
                c.delta1,
                c.rho1,
                c.mu2_over_p(),
                c.beta0
            );
        }
        s
    }

    /// `q, δ₂, ρ₂, ν₁/(p sin σ), ν₂/(p sin σ)`.
    pub fn table2_csv(&self) -> String {
        let mut s = String::from("q,delta2,rho2,nu1_over_p_sin_sigma,nu2_over_p_sin_sigma\n");
        for c in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", c.q, c.delta2, c.rho2, c.nu_over_p_sin(1), c.nu_over_p_sin(2));
        }
        s
    }

    pub fn zeta_csv(&self) -> String {
        format!(
            "name,value\nzeta0,{}\nzeta1,{}\nzeta2,{}\nphi_zeta1,{}\nphi_zeta2,{}\n",
            self.zeta0,
            self.zeta1,
            self.zeta2,
            phi(self.zeta1),
            phi(self.zeta2)
        )
    }
}

pub fn constants(args: &ConstantsArgs) -> CliResult<RunManifest> {
    let echo = json!({ "q": args.q, "p": args.p, "sigma": args.sigma });
    let mut mb = ManifestBuilder::new("constants", &echo, None);
    let tables = constants_tables(&args.q, args.p, args.sigma)?;
    let mut sink = Sink::new(&args.output)?;
    sink.emit("table1.csv", tables.table1_csv().as_bytes(), &mut mb)?;
    sink.emit("table2.csv", tables.table2_csv().as_bytes(), &mut mb)?;
    sink.emit("zeta.csv", tables.zeta_csv().as_bytes(), &mut mb)?;
    if sink.path("normal_form.json").is_some() {
        sink.emit("normal_form.json", &pretty(&tables), &mut mb)?;
    }
    sink.finish(mb)
}

// ---------------------------------------------------------------- spectrum

fn verdict_str(v: Verdict) -> String {
    match v {
        Verdict::LinearlyStable => "linearly_stable".into(),
        Verdict::Unstable => "unstable".into(),
        Verdict::Marginal(ell) => format!("marginal({ell})"),
    }
}

fn eigen_csv(report: &SpectrumReport) -> String {
    let mut s = format!("# verdict={}\n# max_real_part={}\n", verdict_str(report.verdict), report.max_real_part);
    s.push_str("ell,re_minus,im_minus,re_plus,im_plus\n");
    let z = report.zero_mode;
    let _ = writeln!(s, "0,{},{},{},{}", z.re, z.im, z.re, z.im);
    for m in &report.eigenvalues {
        let _ = writeln!(s, "{},{},{},{},{}", m.ell, m.minus.re, m.minus.im, m.plus.re, m.plus.im);
    }
    s
}

fn kappa_grid(args: &SpectrumArgs) -> CliResult<Vec<f64>> {
    if !args.kappa.is_empty() {
        return Ok(args.kappa.clone());
    }
    if args.kappa_steps == 0 || !(args.kappa_min <= args.kappa_max) {
        return Err(CliError::Config("need kappa_steps ≥ 1 and kappa_min ≤ kappa_max".into()));
    }
    if args.kappa_steps == 1 {
        return Ok(vec![args.kappa_min]);
    }
    let h = (args.kappa_max - args.kappa_min) / (args.kappa_steps - 1) as f64;
    Ok((0..args.kappa_steps).map(|i| args.kappa_min + h * i as f64).collect())
}

pub fn spectrum(args: &SpectrumArgs) -> CliResult<RunManifest> {
    let echo = json!({
        "q": args.q, "ell_max": args.ell_max, "kappa_min": args.kappa_min, "kappa_max": args.kappa_max,
        "kappa_steps": args.kappa_steps, "kappa": args.kappa, "at_kappa": args.at_kappa,
        "sigma": args.sigma, "p": args.p,
    });
    let mut mb = ManifestBuilder::new("spectrum", &echo, None);
    let mut sink = Sink::new(&args.output)?;
    if let Some(kappa) = args.at_kappa {
        let report = if args.q == 0 {
            eigenvalues_q0(kappa, args.sigma, args.p, args.ell_max)?
        } else {
            let mp = ModeParams { ell: 1, q: args.q, kappa, sigma: args.sigma, p: args.p };
            eigenvalues(&mp, args.ell_max)?
        };
        sink.emit("eigenvalues.csv", eigen_csv(&report).as_bytes(), &mut mb)?;
        println!("verdict: {} (max Re = {})", verdict_str(report.verdict), report.max_real_part);
    } else {
        if args.q == 0 {
            return Err(CliError::Config("q = 0 curves are not defined; use --at-kappa".into()));
        }
        let mut s = String::from("kappa,ell,chi1,chi2\n");
        for kappa in kappa_grid(args)? {
            for ell in 1..=args.ell_max {
                let _ = writeln!(s, "{kappa},{ell},{},{}", chi1(kappa, ell, args.q)?, chi2(kappa, ell, args.q)?);
            }
        }
        sink.emit("spectrum.csv", s.as_bytes(), &mut mb)?;
    }
    sink.finish(mb)
}

// ---------------------------------------------------------------- betasigma

fn branch_cols(b: Branch) -> String {
    let side = serde_json::to_value(b.side).expect("serialises");
    let st = serde_json::to_value(b.stability).expect("serialises");
    format!("{},{}", side.as_str().unwrap_or_default(), st.as_str().unwrap_or_default())
}

pub fn betasigma(args: &BetaSigmaArgs) -> CliResult<RunManifest> {
    let echo = json!({ "q": args.q, "p": args.p, "steps": args.steps });
    let mut mb = ManifestBuilder::new("betasigma", &echo, None);
    if args.steps < 3 {
        return Err(CliError::Config("steps must be at least 3".into()));
    }
    let h = 2.0 * FRAC_PI_2 / (args.steps - 1) as f64;
    let grid: Vec<f64> = (1..args.steps - 1).map(|i| -FRAC_PI_2 + h * i as f64).collect();
    let mut s =
        String::from("q,sigma,beta_sigma,chi_beta,theorem_side,theorem_stability,flow_side,flow_stability,agree\n");
    for &q in &args.q {
        let chi1_dk = normal_form_constants(q, args.p, 0.0)?.chi1_dk;
        for (sigma, beta) in beta_sigma_curve(q, args.p, &grid)? {
            let regime = if sigma == 0.0 { Regime::SigmaZero } else { Regime::SigmaNonzero };
            let th = theorem_branch(regime, chi1_dk * beta);
            let fl = flow_branch(chi1_dk, beta);
            let _ = writeln!(
                s,
                "{q},{sigma},{beta},{},{},{},{}",
                chi1_dk * beta,
                branch_cols(th),
                branch_cols(fl),
                th == fl
            );
        }
    }
    let mut sink = Sink::new(&args.output)?;
    sink.emit("beta_sigma.csv", s.as_bytes(), &mut mb)?;
    sink.finish(mb)
}

// ---------------------------------------------------------------- graphs

fn apply_graph_flags(g: &mut GraphSpec, f: &GraphFlags) -> CliResult<()> {
    if let Some(n) = f.n {
        g.n = n;
    }
    if let Some(p) = f.p {
        g.p = p;
    }
    if let Some(k) = f.kappa {
        g.kappa = k;
    }
    if let Some(kind) = &f.kind {
        g.kind = kind.parse::<GraphKind>()?;
        if g.kind == GraphKind::DeterministicDense {
            g.seed = None;
            g.gamma = None;
        }
    }
    if f.gamma.is_some() {
        g.gamma = f.gamma;
    }
    if f.graph_seed.is_some() {
        g.seed = f.graph_seed;
    }
    Ok(())
}

fn graph_from_flags(f: &GraphFlags) -> CliResult<GraphSpec> {
    let (Some(n), Some(kappa)) = (f.n, f.kappa) else {
        return Err(CliError::Config("without --config, --n and --kappa are required".into()));
    };
    let mut g = GraphSpec::deterministic(n, f.p.unwrap_or(1.0), kappa);
    apply_graph_flags(&mut g, f)?;
    Ok(g)
}

/// Loads a config file (if any), applies flag overrides and validates.
fn resolve<T, V>(
    path: Option<&Path>,
    fresh: impl FnOnce() -> CliResult<T>,
    apply: impl FnOnce(&mut T) -> CliResult<()>,
    validate: V,
) -> CliResult<T>
where
    T: serde::de::DeserializeOwned,
    V: Fn(&T) -> twisted_core::Result<()>,
{
    match path {
        Some(path) => {
            let (mut value, text) = config::load::<T>(path)?;
            apply(&mut value)?;
            validate(&value).map_err(|e| locate(path, &text, e))?;
            Ok(value)
        }
        None => {
            let mut value = fresh()?;
            apply(&mut value)?;
            validate(&value)?;
            Ok(value)
        }
    }
}

pub fn graph(args: &GraphArgs) -> CliResult<RunManifest> {
    let spec = resolve(
        args.config.as_deref(),
        || graph_from_flags(&args.graph),
        |g| apply_graph_flags(g, &args.graph),
        GraphSpec::validate,
    )?;
    let (pixel, binary) = match args.format.as_str() {
        "pixel" => (true, false),
        "binary" => (false, true),
        "both" => (true, true),
        other => return Err(CliError::Config(format!("unknown format `{other}` (pixel | binary | both)"))),
    };
    let mut mb = ManifestBuilder::new("graph", &spec, spec.seed);
    let mut sink = Sink::new(&args.output)?;
    let coupling = build_coupling(&spec)?;
    let m = spec.half_width();
    let (density, trials) = within_band_density(&coupling, m);
    let prob = spec.edge_probability();
    let sd = (prob * (1.0 - prob) / trials.max(1) as f64).sqrt();
    let summary = json!({
        "n": spec.n, "kind": spec.kind.as_str(), "half_width": m, "nnz": coupling.nnz(),
        "edge_probability": prob, "band_density": density, "band_pairs": trials,
        "density_sd": sd, "z_score": if sd > 0.0 { (density - prob) / sd } else { 0.0 },
    });
    if pixel {
        let buf = core_buf(|b| write_pixel_csv(&coupling, b))?;
        sink.emit("graph.csv", &buf, &mut mb)?;
    }
    if binary {
        sink.require_dir("binary output")?;
        let header = AdjacencyHeader { n: spec.n, kind: spec.kind, seed: spec.seed };
        let buf = core_buf(|b| write_adjacency_binary(&coupling, header, b))?;
        sink.emit("graph.bin", &buf, &mut mb)?;
    }
    if sink.path("graph_summary.json").is_some() {
        sink.emit("graph_summary.json", &pretty(&summary), &mut mb)?;
    } else {
        eprintln!("{summary}");
    }
    sink.finish(mb)
}

// ---------------------------------------------------------------- simulation

fn apply_sim_flags(c: &mut SimulationConfig, f: &SimFlags) -> CliResult<()> {
    apply_graph_flags(&mut c.graph, &f.graph)?;
    if let Some(q) = f.q {
        c.q = q;
    }
    if let Some(s) = f.sigma {
        c.sigma = s;
    }
    if let Some(o) = &f.omega {
        c.omega = if o == "auto" {
            Omega::Auto(AutoTag::Auto)
        } else {
            Omega::Value(o.parse().map_err(|_| CliError::Config(format!("omega `{o}` is neither a number nor auto")))?)
        };
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = f.$flag.clone() {
                c.$field = v;
            }
        )*};
    }
    set!(t_end => t_end, rel_tol => rel_tol, abs_tol => abs_tol, sample_dt => sample_dt,
        perturbation => perturbation_amplitude, modulation => initial_modulation, seed => seed,
        snapshots => snapshots);
    if f.rotating_frame.is_some() {
        c.rotating_frame = f.rotating_frame;
    }
    if f.stride.is_some() {
        c.output_stride = f.stride;
    }
    if let Some(r) = &f.rhs {
        c.rhs = serde_json::from_value::<RhsPath>(json!(r))
            .map_err(|_| CliError::Config(format!("unknown rhs `{r}` (auto | naive | banded | sparse)")))?;
    }
    Ok(())
}

fn sim_from_flags(f: &SimFlags) -> CliResult<SimulationConfig> {
    let (Some(q), Some(t_end)) = (f.q, f.t_end) else {
        return Err(CliError::Config("without --config, --q and --t-end are required".into()));
    };
    Ok(SimulationConfig::new(graph_from_flags(&f.graph)?, q, 0.0, t_end))
}

fn resolve_sim(path: Option<&Path>, flags: &SimFlags) -> CliResult<SimulationConfig> {
    resolve(path, || sim_from_flags(flags), |c| apply_sim_flags(c, flags), SimulationConfig::validate)
}

/// Per-run summary used by `simulate` and `sweep`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub omega: f64,
    pub max_deviation_end: f64,
    pub max_deviation: f64,
    pub final_r: f64,
    pub escaped: bool,
    pub escape_time: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

pub fn summarize(traj: &Trajectory, t_end: f64, threshold: f64) -> RunSummary {
    let last = traj.stats.last();
    let escape_time = traj.escape_time(threshold);
    RunSummary {
        omega: traj.omega,
        max_deviation_end: last.map_or(0.0, |s| s.max_deviation),
        max_deviation: traj.max_deviation(0.0, t_end),
        final_r: last.map_or(0.0, |s| s.r),
        escaped: escape_time.is_some(),
        escape_time,
        accepted_steps: traj.solver.accepted,
        rejected_steps: traj.solver.rejected,
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<RunManifest> {
    let cfg = resolve_sim(args.config.as_deref(), &args.sim)?;
    let mut mb = ManifestBuilder::new("simulate", &cfg, Some(cfg.seed));
    let mut sink = Sink::new(&args.output)?;
    let traj = run_experiment(&cfg)?;
    let buf = core_buf(|b| write_trajectory_csv(&cfg, &traj, b))?;
    sink.emit("trajectory.csv", &buf, &mut mb)?;
    if sink.path("stats.csv").is_some() {
        let buf = core_buf(|b| write_stats_csv(&traj.stats, b))?;
        sink.emit("stats.csv", &buf, &mut mb)?;
        for (i, snap) in traj.snapshots.iter().enumerate() {
            let buf = core_buf(|b| write_snapshot(snap, b))?;
            sink.emit(&format!("snapshot_{i}.bin"), &buf, &mut mb)?;
        }
    }
    let summary = summarize(&traj, cfg.t_end, args.escape_threshold);
    eprintln!("{}", serde_json::to_string(&summary).expect("summary serialises"));
    sink.finish(mb)
}

fn apply_param(c: &mut SimulationConfig, name: &str, v: f64) -> CliResult<()> {
    let int = || -> CliResult<u64> {
        if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
            Ok(v as u64)
        } else {
            Err(CliError::Config(format!("{name} needs a non-negative integer, got {v}")))
        }
    };
    match name {
        "kappa" => c.graph.kappa = v,
        "p" => c.graph.p = v,
        "gamma" => c.graph.gamma = Some(v),
        "sigma" => c.sigma = v,
        "omega" => c.omega = Omega::Value(v),
        "t_end" => c.t_end = v,
        "perturbation_amplitude" | "perturbation" => c.perturbation_amplitude = v,
        "initial_modulation" | "modulation" => c.initial_modulation = v,
        "q" => c.q = u32::try_from(int()?).map_err(|_| CliError::Config(format!("q = {v} too large")))?,
        "n" => c.graph.n = int()? as usize,
        "seed" => c.seed = int()?,
        "graph_seed" => c.graph.seed = Some(int()?),
        other => return Err(CliError::Config(format!("cannot sweep over `{other}`"))),
    }
    Ok(())
}

/// One line of the merged sweep summary.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

pub fn sweep(args: &SweepArgs) -> CliResult<RunManifest> {
    let base = resolve_sim(args.config.as_deref(), &args.sim)?;
    let echo = json!({ "config": base, "param": args.param, "values": args.values });
    let mut mb = ManifestBuilder::new("sweep", &echo, Some(base.seed));
    let sink = Sink::new(&args.output)?;
    let dir = sink.require_dir("sweep")?.to_path_buf();
    let runs_dir = dir.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| CliError::io(&runs_dir, e))?;

    // validate every point before spending time on any of them
    let configs = args
        .values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            apply_param(&mut c, &args.param, v)?;
            c.validate().map_err(|e| CliError::Config(format!("{} = {v}: {e}", args.param)))?;
            Ok(c)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let rows: Vec<(SweepRow, Option<PathBuf>)> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .enumerate()
            .map(|(index, c)| {
                let value = args.values[index];
                match run_experiment(c) {
                    Ok(traj) => {
                        let path = runs_dir.join(format!("run_{index:03}.csv"));
                        let written = core_buf(|b| write_stats_csv(&traj.stats, b))
                            .and_then(|buf| std::fs::write(&path, buf).map_err(|e| CliError::io(&path, e)));
                        let summary = summarize(&traj, c.t_end, args.escape_threshold);
                        match written {
                            Ok(()) => (SweepRow { index, value, summary: Some(summary), error: None }, Some(path)),
                            Err(e) => {
                                (SweepRow { index, value, summary: Some(summary), error: Some(e.to_string()) }, None)
                            }
                        }
                    }
                    Err(e) => (SweepRow { index, value, summary: None, error: Some(e.to_string()) }, None),
                }
            })
            .collect()
    });

    let mut s = format!("index,{},max_deviation_end,max_deviation,final_r,escaped,escape_time,status\n", args.param);
    for (row, path) in &rows {
        if let Some(p) = path {
            mb.output(p);
        }
        let status = row.error.as_deref().unwrap_or("ok").replace([',', '\n'], ";");
        match &row.summary {
            Some(r) => {
                let et = r.escape_time.map(|t| t.to_string()).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{et},{status}",
                    row.index, row.value, r.max_deviation_end, r.max_deviation, r.final_r, r.escaped
                );
            }
            None => {
                let _ = writeln!(s, "{},{},,,,,,{status}", row.index, row.value);
            }
        }
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, s).map_err(|e| CliError::io(&path, e))?;
    mb.output(path);
    let failed = rows.iter().filter(|(r, _)| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see summary.csv", rows.len());
    }
    sink.finish(mb)
}

// ---------------------------------------------------------------- estimate

/// What `estimate` reports besides the per-sample table.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub q: u32,
    pub n: usize,
    pub nodes_used: usize,
    pub t_from: f64,
    pub t_to: f64,
    /// Lab-frame frequency of the twisted component.
    pub omega_tilde: f64,
    pub psi_rate: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Largest `max|v − v₁| / max|v|` over the window, `v₁` the first-mode reconstruction.
    pub max_relative_residual: f64,
    /// The same ratio at the last sample of the window.
    pub final_relative_residual: f64,
}

pub fn estimate_report(
    path: &Path,
    q: Option<u32>,
    t_from: Option<f64>,
    t_to: Option<f64>,
) -> CliResult<(EstimateReport, twisted_core::analysis::ModulationEstimate)> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let table = read_trajectory_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let n: usize = table.meta_parse("n")?;
    let q = match q {
        Some(q) => q,
        None => table.meta_parse("q")?,
    };
    let m = table.nodes.len();
    let stride = n.checked_div(m).unwrap_or(0);
    let equispaced = m > 0 && stride * m == n && table.nodes.iter().enumerate().all(|(i, &k)| k == i * stride);
    if !equispaced {
        return Err(CliError::Config(format!(
            "{}: estimate needs the nodes 0, s, 2s, … covering all {n} oscillators",
            path.display()
        )));
    }
    if m < 4 {
        return Err(CliError::Config(format!("{}: need at least 4 recorded nodes", path.display())));
    }
    // q-twist over every s-th node of n is a q-twist over m nodes
    let est = estimate_modulation(&table.times, &table.states, q)?;
    let frame: f64 = table.meta_parse("rotating_frame").unwrap_or(0.0);
    let t0 = t_from.unwrap_or(f64::NEG_INFINITY);
    let t1 = t_to.unwrap_or(f64::INFINITY);
    let window = || CliError::Config(format!("too few samples in [{t0}, {t1}]"));
    let omega_tilde = est.omega_tilde_over(t0, t1).ok_or_else(window)? + frame;
    let psi_rate = est.psi_rate_over(t0, t1).ok_or_else(window)?;
    let (r_min, r_max) = est.r_range(t0, t1).ok_or_else(window)?;
    let (mut max_rel, mut last_rel) = (0.0f64, 0.0);
    for (t, row) in table.times.iter().zip(&table.states) {
        if *t < t0 || *t > t1 {
            continue;
        }
        let v = deviation_field(row, q)?;
        let rec = reconstruct_mode1(&fourier_mode1(&v)?, v.len());
        let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let err = v.iter().zip(&rec).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        last_rel = if scale > 0.0 { err / scale } else { 0.0 };
        max_rel = max_rel.max(last_rel);
    }
    let report = EstimateReport {
        q,
        n,
        nodes_used: m,
        t_from: t0.max(table.times.first().copied().unwrap_or(0.0)),
        t_to: t1.min(table.times.last().copied().unwrap_or(0.0)),
        omega_tilde,
        psi_rate,
        r_min,
        r_max,
        max_relative_residual: max_rel,
        final_relative_residual: last_rel,
    };
    Ok((report, est))
}

pub fn estimate(args: &EstimateArgs) -> CliResult<RunManifest> {
    let echo = json!({ "input": args.input, "q": args.q, "t_from": args.t_from, "t_to": args.t_to });
    let mut mb = ManifestBuilder::new("estimate", &echo, None);
    let (report, est) = estimate_report(&args.input, args.q, args.t_from, args.t_to)?;
    let mut sink = Sink::new(&args.output)?;
    let buf = core_buf(|b| write_estimate_csv(&est, b))?;
    sink.emit("estimate.csv", &buf, &mut mb)?;
    if sink.path("report.json").is_some() {
        sink.emit("report.json", &pretty(&report), &mut mb)?;
    }
    eprintln!("{}", serde_json::to_string(&report).expect("report serialises"));
    sink.finish(mb)
}
