//! Dormand–Prince 8(5,3) explicit Runge–Kutta integrator with dense output.
//!
//! Follows Hairer's DOP853: twelve stages per step, an error estimate
//! blending the embedded 5th- and 3rd-order solutions, a PI step-size
//! controller, and a 7th-order continuous extension built from three extra
//! stages that are only evaluated when an interpolated value is requested.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Controller and tolerance settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dop853Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    pub safety: f64,
    /// Lower bound on `h_new / h`.
    pub fac_min: f64,
    /// Upper bound on `h_new / h`.
    pub fac_max: f64,
    /// Lund stabilisation exponent of the PI controller (0 gives an I controller).
    pub beta: f64,
}

impl Default for Dop853Options {
    fn default() -> Self {
        Dop853Options {
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            h0: None,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
            safety: 0.9,
            fac_min: 0.333,
            fac_max: 6.0,
            beta: 0.04,
        }
    }
}

impl Dop853Options {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> Self {
        Dop853Options { rel_tol, abs_tol, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol >= 0.0
            && self.h_max > 0.0
            && self.safety > 0.0
            && self.safety < 1.0
            && self.fac_min > 0.0
            && self.fac_min < 1.0
            && self.fac_max > 1.0
            && (0.0..=0.1).contains(&self.beta)
            && self.h0.is_none_or(|h| h > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid integrator options: {self:?}")))
        }
    }
}

/// Work counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Dop853Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Adaptive DOP853 stepper for `y' = f(t, y)` with `f` writing into its
/// third argument.
pub struct Dop853<F> {
    f: F,
    opts: Dop853Options,
    t: f64,
    y: Vec<f64>,
    h: f64,
    // k[0..16]: stage derivatives k1..k16; k[12] is f(t_new, y_new)
    k: Vec<Vec<f64>>,
    y_new: Vec<f64>,
    scratch: Vec<f64>,
    t_old: f64,
    y_old: Vec<f64>,
    h_old: f64,
    cont: Vec<Vec<f64>>,
    dense_ready: bool,
    facold: f64,
    last_rejected: bool,
    stats: Dop853Stats,
}

impl<F> Dop853<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(f: F, t0: f64, y0: &[f64], opts: Dop853Options) -> Result<Self> {
        opts.validate()?;
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t0 });
        }
        let n = y0.len();
        let mut s = Dop853 {
            f,
            opts,
            t: t0,
            y: y0.to_vec(),
            h: 0.0,
            k: vec![vec![0.0; n]; 16],
            y_new: vec![0.0; n],
            scratch: vec![0.0; n],
            t_old: t0,
            y_old: y0.to_vec(),
            h_old: 0.0,
            cont: vec![vec![0.0; n]; 8],
            dense_ready: false,
            facold: 1e-4,
            last_rejected: false,
            stats: Dop853Stats::default(),
        };
        (s.f)(t0, &s.y, &mut s.k[0]);
        s.stats.evaluations += 1;
        if s.k[0].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t0 });
        }
        s.h = match s.opts.h0 {
            Some(h) => h.min(s.opts.h_max),
            None => s.initial_step(),
        };
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn stats(&self) -> Dop853Stats {
        self.stats
    }

    /// Start of the most recent accepted step.
    pub fn t_prev(&self) -> f64 {
        self.t_old
    }

    fn weight(&self, a: f64, b: f64) -> f64 {
        self.opts.abs_tol + self.opts.rel_tol * a.abs().max(b.abs())
    }

    /// Hairer's starting-step heuristic.
    fn initial_step(&mut self) -> f64 {
        let n = self.y.len().max(1) as f64;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..self.y.len() {
            let sk = self.weight(self.y[i], self.y[i]);
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * (dny / dnf).sqrt() };
        h = h.min(self.opts.h_max);
        for i in 0..self.y.len() {
            self.scratch[i] = self.y[i] + h * self.k[0][i];
        }
        (self.f)(self.t + h, &self.scratch, &mut self.k[1]);
        self.stats.evaluations += 1;
        let mut der2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.weight(self.y[i], self.y[i]);
            der2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
        }
        let der2 = (der2 / n).sqrt() / h;
        let der12 = der2.max((dnf / n).sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
        (100.0 * h).min(h1).min(self.opts.h_max)
    }

    fn stage(&mut self, i: usize, h: f64) {
        let row = &A[i];
        let n = self.y.len();
        for m in 0..n {
            let mut acc = 0.0;
            for (j, a) in row.iter().enumerate().take(i) {
                if *a != 0.0 {
                    acc += a * self.k[j][m];
                }
            }
            self.scratch[m] = self.y[m] + h * acc;
        }
        (self.f)(self.t + C[i] * h, &self.scratch, &mut self.k[i]);
    }

    /// Take one accepted step, never stepping past `t_bound`.
    pub fn step(&mut self, t_bound: f64) -> Result<()> {
        let n = self.y.len();
        let dim = n.max(1) as f64;
        loop {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(Error::MaxSteps { t: self.t });
            }
            let mut h = self.h.min(self.opts.h_max);
            let remaining = t_bound - self.t;
            if remaining <= 0.0 {
                return Ok(());
            }
            // land exactly on the bound when close
            if self.t + 1.01 * h >= t_bound {
                h = remaining;
            }
            if 0.1 * h.abs() <= self.t.abs() * f64::EPSILON {
                return Err(Error::StepSizeUnderflow { t: self.t });
            }

            for i in 1..12 {
                self.stage(i, h);
            }
            self.stats.evaluations += 11;

            let (mut err5, mut err3) = (0.0, 0.0);
            for m in 0..n {
                let mut bsum = 0.0;
                let mut esum = 0.0;
                for j in [0, 5, 6, 7, 8, 9, 10, 11] {
                    bsum += B[j] * self.k[j][m];
                    esum += ER[j] * self.k[j][m];
                }
                self.y_new[m] = self.y[m] + h * bsum;
                let sk = self.weight(self.y[m], self.y_new[m]);
                let e3 = bsum - BHH[0] * self.k[0][m] - BHH[1] * self.k[8][m] - BHH[2] * self.k[11][m];
                err3 += (e3 / sk).powi(2);
                err5 += (esum / sk).powi(2);
            }
            let mut deno = err5 + 0.01 * err3;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err5 * (1.0 / (deno * dim)).sqrt();

            let expo = 1.0 / 8.0 - 0.2 * self.opts.beta;
            let fac11 = err.powf(expo);
            let inv_min = 1.0 / self.opts.fac_min;
            let inv_max = 1.0 / self.opts.fac_max;

            if err <= 1.0 && err.is_finite() {
                let fac = fac11 / self.facold.powf(self.opts.beta);
                let fac = inv_max.max(inv_min.min(fac / self.opts.safety));
                let mut h_new = h / fac;
                self.facold = err.max(1e-4);
                let t_new = self.t + h;
                if self.y_new.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { t: t_new });
                }
                (self.f)(t_new, &self.y_new, &mut self.k[12]);
                self.stats.evaluations += 1;
                self.stats.accepted += 1;
                if self.last_rejected {
                    h_new = h_new.min(h);
                    self.last_rejected = false;
                }

                std::mem::swap(&mut self.y_old, &mut self.y);
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.t_old = self.t;
                self.h_old = h;
                self.t = if h == remaining { t_bound } else { t_new };
                self.dense_ready = false;
                // k1 of the next step is the FSAL evaluation; keep the
                // current k1 for the continuous extension in k[15]
                self.k.swap(0, 15);
                for m in 0..n {
                    self.k[0][m] = self.k[12][m];
                }
                self.h = h_new.min(self.opts.h_max);
                return Ok(());
            }

            let shrink = if err.is_finite() { inv_min.min(fac11 / self.opts.safety) } else { 10.0 };
            self.h = h / shrink;
            self.stats.rejected += 1;
            self.last_rejected = true;
        }
    }

    /// Builds the interpolation coefficients for the last accepted step.
    /// Stage storage: k1 of that step lives in `k[15]` until this runs.
    fn prepare_dense(&mut self) {
        if self.dense_ready {
            return;
        }
        let n = self.y.len();
        let h = self.h_old;
        // restore k1 of the step into slot 0 and keep the FSAL value in 12
        self.k.swap(0, 15);
        for r in 0..3 {
            let idx = 13 + r;
            for m in 0..n {
                let mut acc = 0.0;
                for (j, a) in A_DENSE[r].iter().enumerate().take(idx) {
                    if *a != 0.0 {
                        acc += a * self.k[j][m];
                    }
                }
                self.scratch[m] = self.y_old[m] + h * acc;
            }
            (self.f)(self.t_old + C_DENSE[r] * h, &self.scratch, &mut self.k[idx]);
        }
        self.stats.evaluations += 3;
        for m in 0..n {
            let ydiff = self.y[m] - self.y_old[m];
            let bspl = h * self.k[0][m] - ydiff;
            self.cont[0][m] = self.y_old[m];
            self.cont[1][m] = ydiff;
            self.cont[2][m] = bspl;
            self.cont[3][m] = ydiff - h * self.k[12][m] - bspl;
            for r in 0..4 {
                let mut acc = 0.0;
                for (j, d) in D[r].iter().enumerate() {
                    if *d != 0.0 {
                        acc += d * self.k[j][m];
                    }
                }
                self.cont[4 + r][m] = h * acc;
            }
        }
        // slot 0 must again hold the next step's first stage
        for m in 0..n {
            self.k[0][m] = self.k[12][m];
        }
        self.dense_ready = true;
    }

    /// Continuous-extension value at `t ∈ [t_prev, t]` of the last step.
    pub fn interpolate(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.y.len() {
            return Err(Error::DimensionMismatch { expected: self.y.len(), found: out.len() });
        }
        if t == self.t {
            out.copy_from_slice(&self.y);
            return Ok(());
        }
        let span = self.t - self.t_old;
        let slack = 1e-12 * span.abs().max(f64::MIN_POSITIVE);
        if self.h_old == 0.0 || t < self.t_old - slack || t > self.t + slack {
            return Err(Error::InvalidParameter(format!(
                "interpolation time {t} outside last step [{}, {}]",
                self.t_old, self.t
            )));
        }
        self.prepare_dense();
        let s = (t - self.t_old) / self.h_old;
        let s1 = 1.0 - s;
        let c = &self.cont;
        for (m, o) in out.iter_mut().enumerate() {
            let conpar = c[4][m] + (c[5][m] + (c[6][m] + c[7][m] * s) * s1) * s;
            *o = c[0][m] + (c[1][m] + (c[2][m] + (c[3][m] + conpar * s1) * s) * s1) * s;
        }
        Ok(())
    }
}

/// Integrates from `t0` to `t_end`, calling `observer(t, y)` at each of the
/// ascending `sample_times` (which must lie in `[t0, t_end]`).
pub fn integrate<F, O>(
    f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    sample_times: &[f64],
    opts: Dop853Options,
    mut observer: O,
) -> Result<(Vec<f64>, Dop853Stats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(t_end >= t0) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end} precedes t0 = {t0}")));
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) || sample_times.iter().any(|&s| s < t0 || s > t_end) {
        return Err(Error::InvalidParameter("sample times must be increasing within [t0, t_end]".into()));
    }
    let mut solver = Dop853::new(f, t0, y0, opts)?;
    let mut buf = vec![0.0; y0.len()];
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] == t0 {
        observer(t0, y0)?;
        next += 1;
    }
    while solver.t() < t_end {
        solver.step(t_end)?;
        while next < sample_times.len() && sample_times[next] <= solver.t() {
            let ts = sample_times[next];
            solver.interpolate(ts, &mut buf)?;
            observer(ts, &buf)?;
            next += 1;
        }
    }
    Ok((solver.y().to_vec(), solver.stats()))
}

const C: [f64; 12] = [
    0.0,
    5.260_015_195_876_773E-2,
    7.890_022_793_815_16E-2,
    1.183_503_419_072_274E-1,
    2.816_496_580_927_726E-1,
    3.333_333_333_333_333E-1,
    0.25,
    3.076_923_076_923_077E-1,
    6.512_820_512_820_513E-1,
    0.6,
    8.571_428_571_428_571E-1,
    1.0,
];

const A: [[f64; 12]; 12] = [
    [0.0; 12],
    [5.260_015_195_876_773E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.972_505_698_453_79E-2, 5.917_517_095_361_37E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.958_758_547_680_685E-2, 0.0, 8.876_275_643_042_054E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        2.413_651_341_592_667E-1,
        0.0,
        -8.845_494_793_282_861E-1,
        9.248_340_032_617_92E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.703_703_703_703_703_5E-2,
        0.0,
        0.0,
        1.708_286_087_294_738_6E-1,
        1.254_676_875_668_224_2E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.7109375E-2,
        0.0,
        0.0,
        1.702_522_110_195_440_5E-1,
        6.021_653_898_045_596E-2,
        -1.7578125E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.709_200_011_850_479E-2,
        0.0,
        0.0,
        1.703_839_257_122_399_8E-1,
        1.072_620_304_463_732_8E-1,
        -1.531_943_774_862_440_2E-2,
        8.273_789_163_814_023E-3,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        6.241_109_587_160_757E-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_4,
        -8.682_193_468_417_26E-1,
        2.759_209_969_944_671E1,
        2.015_406_755_047_789_4E1,
        -4.348_988_418_106_996E1,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.776_625_364_382_643_4E-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_7,
        -5.902_908_268_368_43E-1,
        2.123_005_144_818_119_3E1,
        1.527_923_363_288_242_3E1,
        -3.328_821_096_898_486E1,
        -2.033_120_170_850_862_7E-2,
        0.0,
        0.0,
        0.0,
    ],
    [
        -9.371_424_300_859_873E-1,
        0.0,
        0.0,
        5.186_372_428_844_064,
        1.091_437_348_996_729_5,
        -8.149_787_010_746_927,
        -1.852_006_565_999_696E1,
        2.273_948_709_935_050_5E1,
        2.493_605_552_679_652_3,
        -3.046_764_471_898_219_6,
        0.0,
        0.0,
    ],
    [
        2.273_310_147_516_538,
        0.0,
        0.0,
        -1.053_449_546_673_725E1,
        -2.000_872_058_224_862_5,
        -1.795_893_186_311_88E1,
        2.794_888_452_941_996E1,
        -2.858_998_277_135_023_5,
        -8.872_856_933_530_63,
        1.236_056_717_579_430_3E1,
        6.433_927_460_157_636E-1,
        0.0,
    ],
];

const B: [f64; 12] = [
    5.429_373_411_656_876_5E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    3.111_643_669_578_199E-1,
    -1.521_609_496_625_161E-1,
    2.013_654_008_040_303_4E-1,
    4.471_061_572_777_259E-2,
];

const ER: [f64; 12] = [
    1.312_004_499_419_488E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.225_156_446_376_204_4,
    -4.957_589_496_572_502E-1,
    1.664_377_182_454_986_4,
    -3.503_288_487_499_736_6E-1,
    3.341_791_187_130_175E-1,
    8.192_320_648_511_571E-2,
    -2.235_530_786_388_629_4E-2,
];

const BHH: [f64; 3] = [2.440_944_881_889_764E-1, 7.338_466_882_816_118E-1, 2.205_882_352_941_176_6E-2];

const C_DENSE: [f64; 3] = [0.1, 0.2, 7.777_777_777_777_778E-1];

const A_DENSE: [[f64; 16]; 3] = [
    [
        5.616_750_228_304_795_4E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        2.535_002_102_166_248_3E-1,
        -2.462_390_374_708_025E-1,
        -1.241_914_232_638_163_7E-1,
        1.532_917_982_787_656_8E-1,
        8.201_052_295_634_69E-3,
        7.567_897_660_545_699E-3,
        -8.298E-3,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.183_464_816_350_214E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        2.830_090_967_236_677_6E-2,
        5.354_198_830_743_856_6E-2,
        -5.492_374_857_139_099E-2,
        0.0,
        0.0,
        -1.083_473_286_972_493_2E-4,
        3.825_710_908_356_584E-4,
        -3.404_650_086_874_045_6E-4,
        1.413_124_436_746_325E-1,
        0.0,
        0.0,
    ],
    [
        -4.288_963_015_837_919_4E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        -4.697_621_415_361_164,
        7.683_421_196_062_599,
        4.068_989_818_397_11,
        3.567_271_874_552_811E-1,
        0.0,
        0.0,
        0.0,
        -1.399_024_165_159_014_5E-3,
        2.947_514_789_152_772_4,
        -9.150_958_472_179_87,
        0.0,
    ],
];

const D: [[f64; 16]; 4] = [
    [
        -8.428_938_276_109_013,
        0.0,
        0.0,
        0.0,
        0.0,
        5.667_149_535_193_777E-1,
        -3.068_949_945_949_891_7,
        2.384_667_656_512_07,
        2.117_034_582_445_028,
        -8.713_915_837_779_73E-1,
        2.240_437_430_260_788_3,
        6.315_787_787_694_688E-1,
        -8.899_033_645_133_331E-2,
        1.814_850_552_085_472_7E1,
        -9.194_632_392_478_356,
        -4.436_036_387_594_894,
    ],
    [
        1.042_750_864_257_913_4E1,
        0.0,
        0.0,
        0.0,
        0.0,
        2.422_834_917_752_581_7E2,
        1.652_004_517_172_702_8E2,
        -3.745_467_547_226_902E2,
        -2.211_366_685_312_530_6E1,
        7.733_432_668_472_264,
        -3.067_408_473_108_939_8E1,
        -9.332_130_526_430_229,
        1.569_723_812_177_084_5E1,
        -3.113_940_321_956_517_8E1,
        -9.352_924_358_844_48,
        3.581_684_148_639_408E1,
    ],
    [
        1.998_505_324_200_243_3E1,
        0.0,
        0.0,
        0.0,
        0.0,
        -3.870_373_087_493_518E2,
        -1.891_781_381_951_675_8E2,
        5.278_081_592_054_236E2,
        -1.157_390_253_995_963E1,
        6.881_232_694_696_3,
        -1.000_605_096_691_083_8,
        7.777_137_798_053_443E-1,
        -2.778_205_752_353_508,
        -6.019_669_523_126_412E1,
        8.432_040_550_667_716E1,
        1.199_229_113_618_279E1,
    ],
    [
        -2.569_393_346_270_375E1,
        0.0,
        0.0,
        0.0,
        0.0,
        -1.541_897_486_902_364_3E2,
        -2.315_293_791_760_455E2,
        3.576_391_179_106_141E2,
        9.340_532_418_362_432E1,
        -3.745_832_313_645_163E1,
        1.040_996_495_089_623E2,
        2.984_029_342_666_05E1,
        -4.353_345_659_001_114E1,
        9.632_455_395_918_828E1,
        -3.917_726_167_561_544E1,
        -1.497_268_362_579_856_4E2,
    ],
];
