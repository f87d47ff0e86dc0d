//! One-parameter families `t ↦ A_t`, parameter sweeps of `L₁`, and the
//! named example families.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyperbolicity::{certify, null_word_search, ArcSet, CertifyOptions, Verdict};
use crate::limits::{monte_carlo_l1, SimConfig};
use crate::linalg::{svd2, winding_speed, Mat2, ProjPoint};
use crate::numeric::{fmt_f64, linear_fit, serialize_real};
use crate::shift::{Cocycle, Word};
use crate::stationary::{furstenberg_l1, l1_branch_series, lyapunov_spectrum};

type EvalFn = dyn Fn(f64) -> Result<Cocycle> + Send + Sync;
type DerivFn = dyn Fn(f64) -> Vec<Mat2> + Send + Sync;

/// A cocycle depending on a real parameter over a closed interval, with
/// the exact per-letter derivative.
#[derive(Clone)]
pub struct ParamFamily {
    name: String,
    domain: (f64, f64),
    constant: Vec<bool>,
    eval: Arc<EvalFn>,
    deriv: Arc<DerivFn>,
}

impl fmt::Debug for ParamFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamFamily")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("constant", &self.constant)
            .finish()
    }
}

impl ParamFamily {
    /// `constant[i]` declares letter `i` independent of `t`.
    pub fn new(
        name: impl Into<String>,
        domain: (f64, f64),
        constant: Vec<bool>,
        eval: impl Fn(f64) -> Result<Cocycle> + Send + Sync + 'static,
        deriv: impl Fn(f64) -> Vec<Mat2> + Send + Sync + 'static,
    ) -> Self {
        ParamFamily { name: name.into(), domain, constant, eval: Arc::new(eval), deriv: Arc::new(deriv) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn constant_flags(&self) -> &[bool] {
        &self.constant
    }

    pub fn eval(&self, t: f64) -> Result<Cocycle> {
        (self.eval)(t)
    }

    pub fn derivative(&self, t: f64) -> Vec<Mat2> {
        (self.deriv)(t)
    }

    fn probes(&self, n: usize) -> Vec<f64> {
        let (a, b) = self.domain;
        (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect()
    }

    /// Largest entrywise variation of the letters flagged constant over
    /// `n` probes. Fails when it exceeds `1e-12`, or when a singular letter
    /// is not flagged constant.
    pub fn check_constancy(&self, n: usize) -> Result<f64> {
        let probes = self.probes(n.max(2));
        let first = self.eval(probes[0])?;
        for i in first.singular_symbols() {
            if !self.constant.get(i).copied().unwrap_or(false) {
                return Err(Error::InvalidArgument(format!("singular letter {} is not flagged constant", i + 1)));
            }
        }
        let mut worst: f64 = 0.0;
        for &t in &probes[1..] {
            let c = self.eval(t)?;
            for (i, flag) in self.constant.iter().enumerate() {
                if *flag {
                    worst = worst.max(c.matrix(i).sub(first.matrix(i)).max_abs());
                }
            }
        }
        if worst > 1e-12 {
            return Err(Error::InvalidArgument(format!("letter flagged constant varies by {worst:e}")));
        }
        Ok(worst)
    }

    /// `max ‖(A(t+h) − A(t))/h − A'(t)‖ / h` over `n` probes: the constant
    /// `C` in the first-order finite-difference error.
    pub fn check_derivative(&self, n: usize, h: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for t in self.probes(n.max(1)) {
            let a = self.eval(t)?;
            let b = self.eval(t + h)?;
            let d = self.derivative(t);
            for i in 0..a.k() {
                let fd = b.matrix(i).sub(a.matrix(i)).scale(1.0 / h);
                worst = worst.max(fd.sub(&d[i]).norm() / h);
            }
        }
        Ok(worst)
    }
}

/// Where the rotation acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationMode {
    /// `R_t A_i` for every letter.
    Left,
    /// `A_i R_t` for every letter.
    Right,
    /// `A_i R_t` for invertible letters; singular letters stay fixed.
    InvertibleOnly,
}

/// [`rotation_family_with_speed`] at unit speed.
pub fn rotation_family(base: &Cocycle, mode: RotationMode) -> ParamFamily {
    rotation_family_with_speed(base, mode, 1.0)
}

/// Rotate the letters of `base` by `R_{speed·t}`, `t ∈ [0, π/|speed|]`.
pub fn rotation_family_with_speed(base: &Cocycle, mode: RotationMode, speed: f64) -> ParamFamily {
    let mats = base.matrices().to_vec();
    let singular = base.singular_flags().to_vec();
    let rotates: Vec<bool> = singular.iter().map(|&s| mode != RotationMode::InvertibleOnly || !s).collect();
    let constant: Vec<bool> = rotates.iter().map(|r| !r).collect();
    let base_eval = base.clone();
    let (m1, r1) = (mats.clone(), rotates.clone());
    let eval = move |t: f64| {
        let r = Mat2::rotation(speed * t);
        let letters = m1
            .iter()
            .zip(&r1)
            .map(|(a, &rot)| match (rot, mode) {
                (false, _) => *a,
                (true, RotationMode::Left) => r * *a,
                (true, _) => *a * r,
            })
            .collect();
        base_eval.with_matrices(letters)
    };
    let deriv = move |t: f64| {
        let r = Mat2::rotation(speed * t);
        mats.iter()
            .zip(&rotates)
            .map(|(a, &rot)| match (rot, mode) {
                (false, _) => Mat2::ZERO,
                (true, RotationMode::Left) => (Mat2::J * r * *a).scale(speed),
                (true, _) => (*a * r * Mat2::J).scale(speed),
            })
            .collect()
    };
    let name = format!("rotation-{}", serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
    ParamFamily::new(name, (0.0, PI / speed.abs().max(f64::MIN_POSITIVE)), constant, eval, deriv)
}

/// `diag(1, 0)` and `R_t` with equal weights, `t ∈ [0, π]`.
pub fn irrat_rot_family() -> ParamFamily {
    let base = crate::catalog::irrat_rot(0.0);
    let mut f = rotation_family(&base, RotationMode::InvertibleOnly);
    f.name = "irrat-rot".into();
    f
}

/// Smallest angular speed `(A v ∧ A' v)/‖A v‖²` of the invertible letters
/// over the grids. A family winds positively when this is positive.
pub fn winding_speed_min(f: &ParamFamily, t_grid: &[f64], v_grid: &[ProjPoint]) -> Result<f64> {
    let mut c_min = f64::INFINITY;
    for &t in t_grid {
        let c = f.eval(t)?;
        let d = f.derivative(t);
        for i in c.invertible_symbols() {
            for &v in v_grid {
                c_min = c_min.min(winding_speed(c.matrix(i), &d[i], v)?);
            }
        }
    }
    Ok(c_min)
}

/// `{v̂ : ‖m v‖ < ε}`: an arc around the kernel direction of `m`, of
/// half-width `asin √((ε² − σ₂²)/(σ₁² − σ₂²))`.
pub fn small_norm_set(m: &Mat2, eps: f64) -> ArcSet {
    let s = svd2(m);
    if eps <= s.sigma2 {
        return ArcSet::empty();
    }
    if eps >= s.sigma1 {
        return ArcSet::full();
    }
    let ratio = (eps * eps - s.sigma2 * s.sigma2) / (s.sigma1 * s.sigma1 - s.sigma2 * s.sigma2);
    ArcSet::ball(s.right_top.perp(), ratio.sqrt().asin())
}

/// Partial sum `Σ_{j ≤ J} 2^{−(j+1)} log|cos(j t)|` with its tail estimate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IrratSeries {
    #[serde(serialize_with = "serialize_real")]
    pub value: f64,
    pub tail: f64,
    /// First `j` with `|cos(j t)| ≤ 1e-12`, when the value is `−∞`.
    pub null_j: Option<usize>,
}

/// Closed form for the exponent of the rotation family, in the induced
/// normalization `L₁/q` (twice the Furstenberg value at `q = 1/2`).
pub fn irrat_rotation_l1(t: f64, j_max: usize) -> IrratSeries {
    let mut acc = crate::numeric::Neumaier::default();
    for j in 0..=j_max {
        let c = (j as f64 * t).cos().abs();
        if c <= 1e-12 {
            return IrratSeries { value: f64::NEG_INFINITY, tail: 0.0, null_j: Some(j) };
        }
        acc.add(c.ln() / 2f64.powi(j as i32 + 1));
    }
    let worst = (0..=j_max + 20).map(|j| (j as f64 * t).cos().abs().ln().abs()).fold(0.0, f64::max);
    IrratSeries { value: acc.sum(), tail: worst / 2f64.powi(j_max as i32), null_j: None }
}

/// Potential letters: `diag(1, 0)` for the infinite value (probability
/// `p`) and `[[a − t, −1], [1, 0]]` for the value `a`.
pub fn schrodinger_family(a: f64, p: f64) -> ParamFamily {
    let eval = move |t: f64| {
        Cocycle::bernoulli(vec![Mat2::diag(1.0, 0.0), Mat2::new(a - t, -1.0, 1.0, 0.0)], vec![p, 1.0 - p])
    };
    let deriv = |_t: f64| vec![Mat2::ZERO, Mat2::new(-1.0, 0.0, 0.0, 0.0)];
    ParamFamily::new(format!("schrodinger-a{}", fmt_f64(a)), (a - 4.0, a + 4.0), vec![true, false], eval, deriv)
}

/// Finite-`λ` cocycle `λ_j⁻¹ [[v_j − t, −1], [1, 0]]` with `v = (λ, a)`
/// and `λ_j = (λ, 1)`.
pub fn schrodinger_rescaled(a: f64, p: f64, lambda: f64, t: f64) -> Result<Cocycle> {
    Cocycle::bernoulli(
        vec![Mat2::new(lambda - t, -1.0, 1.0, 0.0).scale(1.0 / lambda), Mat2::new(a - t, -1.0, 1.0, 0.0)],
        vec![p, 1.0 - p],
    )
}

/// The transfer-matrix cocycle of the potential itself, without rescaling.
pub fn schrodinger_unscaled(a: f64, p: f64, lambda: f64, t: f64) -> Result<Cocycle> {
    Cocycle::bernoulli(
        vec![Mat2::new(lambda - t, -1.0, 1.0, 0.0), Mat2::new(a - t, -1.0, 1.0, 0.0)],
        vec![p, 1.0 - p],
    )
}

/// Spectrum `[a − 2, a + 2] ∪ [λ − 2, λ + 2]`.
pub fn spectrum_intervals(a: f64, lambda: f64) -> [(f64, f64); 2] {
    [(a - 2.0, a + 2.0), (lambda - 2.0, lambda + 2.0)]
}

/// `A = diag(2, 1/2)` and `B_t = [[−t², t], [−t, 1]]` (range `(t, 1)`,
/// kernel `(1, t)`); `t = 0` is the cocycle `diag(2, 1/2)`, `diag(0, 1)`.
pub fn explo_family() -> ParamFamily {
    let eval = |t: f64| Cocycle::bernoulli(vec![Mat2::diag(2.0, 0.5), Mat2::new(-t * t, t, -t, 1.0)], vec![0.5, 0.5]);
    let deriv = |t: f64| vec![Mat2::ZERO, Mat2::new(-2.0 * t, 1.0, -1.0, 0.0)];
    ParamFamily::new("explo", (-1.0, 1.0), vec![true, false], eval, deriv)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Engine {
    Series,
    MonteCarlo { seed: u64, n: usize, trials: usize },
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub engine: Engine,
    /// Depth of the per-point null-word search.
    pub null_depth: usize,
    pub tail_eps: f64,
    pub certify: Option<CertifyOptions>,
    /// Rounds of midpoint insertion where neighbouring values jump.
    pub refine_rounds: usize,
    pub refine_jump: f64,
    /// Word budget per point for discontinuity flagging.
    pub flag_word_cap: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            engine: Engine::Series,
            null_depth: 20,
            tail_eps: 1e-12,
            certify: None,
            refine_rounds: 0,
            refine_jump: 0.5,
            flag_word_cap: 200_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    #[serde(serialize_with = "serialize_real")]
    pub l1: f64,
    pub stderr: Option<f64>,
    pub verdict: Option<Verdict>,
    /// Smallest product `σ₁` among the candidate null words.
    pub nearest_sigma1: Option<f64>,
    pub nearest_word: Option<Word>,
    pub null_word: Option<Word>,
    /// A null word exists at a parameter within one grid step.
    pub flagged: bool,
    pub error: Option<String>,
}

/// A sign change of the signed angle between `Aⁿ r̂_s` and `k̂_t` for one
/// word between two neighbouring grid points, located by secant steps.
#[derive(Clone, Debug, Serialize)]
pub struct Discontinuity {
    pub t: f64,
    pub bracket: (f64, f64),
    pub word: Word,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub family: String,
    pub engine: Engine,
    pub points: Vec<SweepPoint>,
    pub discontinuities: Vec<Discontinuity>,
    /// Set when flagging was skipped.
    pub flag_note: Option<String>,
}

impl SweepResult {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn l1(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.l1).collect()
    }

    /// `(t, word, σ₁)` at every point with an exact null word.
    pub fn null_word_hits(&self) -> Vec<(f64, Word, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.null_word.as_ref().map(|w| (p.t, w.clone(), p.nearest_sigma1.unwrap_or(0.0))))
            .collect()
    }

    /// Columns `t, l1, puh_verdict, nearest_null_word_sigma1, null_word`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,l1,puh_verdict,nearest_null_word_sigma1,null_word")?;
        for p in &self.points {
            let verdict = p.verdict.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            let sigma = p.nearest_sigma1.map(fmt_f64).unwrap_or_else(|| "-".into());
            let word = p.null_word.as_ref().map(|w| w.to_string()).unwrap_or_else(|| "-".into());
            let l1 = if p.error.is_some() && p.l1.is_nan() { "nan".into() } else { fmt_f64(p.l1) };
            writeln!(out, "{},{},{},{},{}", fmt_f64(p.t), l1, verdict, sigma, word)?;
        }
        Ok(())
    }
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn point_seed(seed: u64, i: usize, t: f64) -> u64 {
    seed ^ t.to_bits().rotate_left(17) ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn evaluate_point(f: &ParamFamily, t: f64, idx: usize, opts: &SweepOptions) -> SweepPoint {
    let mut pt = SweepPoint {
        t,
        l1: f64::NAN,
        stderr: None,
        verdict: None,
        nearest_sigma1: None,
        nearest_word: None,
        null_word: None,
        flagged: false,
        error: None,
    };
    let c = match f.eval(t) {
        Ok(c) => c,
        Err(e) => {
            pt.error = Some(e.to_string());
            return pt;
        }
    };
    if let Some(co) = &opts.certify {
        pt.verdict = Some(certify(&c, co).verdict);
    }
    if c.has_singular() {
        match null_word_search(&c, opts.null_depth, 0.0) {
            Ok(ns) => {
                if ns.min_sigma1.is_finite() {
                    pt.nearest_sigma1 = Some(ns.min_sigma1);
                    pt.nearest_word = ns.min_sigma1_word.clone();
                }
                if let Some(hit) = ns.exact() {
                    pt.l1 = f64::NEG_INFINITY;
                    pt.null_word = Some(hit.word.clone());
                    return pt;
                }
            }
            Err(e) => pt.error = Some(e.to_string()),
        }
    }
    let report = match opts.engine {
        Engine::Series if c.has_singular() => {
            l1_branch_series(&c, opts.tail_eps).or_else(|e| match e {
                Error::NullWord(_) => Err(e),
                _ => furstenberg_l1(&c, opts.tail_eps),
            })
        }
        Engine::Series => lyapunov_spectrum(&c).map(|(l1, _)| crate::stationary::LyapunovReport {
            l1,
            l2: f64::NAN,
            induced_l1: None,
            series_depth: 0,
            tail_bound: f64::NAN,
            method: crate::stationary::Method::MonteCarlo,
            stderr: None,
            cross_check_gap: None,
        }),
        Engine::MonteCarlo { seed, n, trials } => {
            let cfg = SimConfig { seed: point_seed(seed, idx, t), n, trials, start: SimConfig::natural_start(&c) };
            monte_carlo_l1(&c, &cfg)
        }
    };
    match report {
        Ok(r) => {
            pt.l1 = r.l1;
            pt.stderr = r.stderr;
        }
        Err(Error::NullWord(w)) => {
            pt.l1 = f64::NEG_INFINITY;
            pt.null_word = Some(w);
        }
        Err(e) => pt.error = Some(e.to_string()),
    }
    pt
}

fn jumps(a: f64, b: f64, tol: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return false;
    }
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return a != b;
    }
    (a - b).abs() > tol
}

/// `L₁` over a grid, one point per parameter, evaluated in parallel.
/// Per-point failures are recorded in the point and the sweep continues.
pub fn sweep_l1(f: &ParamFamily, grid: &[f64], opts: &SweepOptions) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    let mut points: Vec<SweepPoint> =
        grid.par_iter().enumerate().map(|(i, &t)| evaluate_point(f, t, i, opts)).collect();
    for round in 0..opts.refine_rounds {
        let mids: Vec<f64> = points
            .windows(2)
            .filter(|w| jumps(w[0].l1, w[1].l1, opts.refine_jump))
            .map(|w| 0.5 * (w[0].t + w[1].t))
            .filter(|m| points.iter().all(|p| p.t != *m))
            .collect();
        if mids.is_empty() {
            break;
        }
        let base = points.len() + round * 1_000_003;
        let extra: Vec<SweepPoint> =
            mids.par_iter().enumerate().map(|(i, &t)| evaluate_point(f, t, base + i, opts)).collect();
        points.extend(extra);
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    let mut result = SweepResult {
        family: f.name().to_string(),
        engine: opts.engine,
        points,
        discontinuities: Vec::new(),
        flag_note: None,
    };
    flag_discontinuities(f, &mut result, opts);
    Ok(result)
}

/// Words `s ω t` (singular, invertible branch, singular) up to `depth`
/// invertible letters in a fixed order, with the signed angle from
/// `A_ω r̂_s` to `k̂_t` wrapped into `(−π/2, π/2]`.
fn signed_gaps(c: &Cocycle, depth: usize, cap: usize) -> Option<Vec<(Vec<usize>, f64)>> {
    let inv = c.invertible_symbols();
    let sing = c.singular_symbols();
    let mut out = Vec::new();
    fn rec(
        c: &Cocycle,
        inv: &[usize],
        sing: &[usize],
        word: &mut Vec<usize>,
        v: [f64; 2],
        depth: usize,
        cap: usize,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) -> bool {
        let last = *word.last().expect("nonempty");
        let theta = v[1].atan2(v[0]);
        for &t in sing {
            if !c.allowed(t, last) {
                continue;
            }
            let k = c.kernel(t).expect("singular").theta();
            let mut g = (theta - k).rem_euclid(PI);
            if g > FRAC_PI_2 {
                g -= PI;
            }
            let mut w = word.clone();
            w.push(t);
            out.push((w, g));
            if out.len() > cap {
                return false;
            }
        }
        if word.len() > depth {
            return true;
        }
        for &i in inv {
            if !c.allowed(i, last) {
                continue;
            }
            let mut u = c.matrix(i).apply(v);
            let n = u[0].hypot(u[1]);
            u = [u[0] / n, u[1] / n];
            word.push(i);
            let ok = rec(c, inv, sing, word, u, depth, cap, out);
            word.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    for &s in &sing {
        let mut word = vec![s];
        let r = c.range(s).expect("singular").unit();
        if !rec(c, &inv, &sing, &mut word, r, depth, cap, &mut out) {
            return None;
        }
    }
    Some(out)
}

fn gap_of(c: &Cocycle, word: &[usize]) -> f64 {
    let s = word[0];
    let t = *word.last().expect("nonempty");
    let mut v = c.range(s).expect("singular").unit();
    for &i in &word[1..word.len() - 1] {
        let u = c.matrix(i).apply(v);
        let n = u[0].hypot(u[1]);
        v = [u[0] / n, u[1] / n];
    }
    let k = c.kernel(t).expect("singular").theta();
    let mut g = (v[1].atan2(v[0]) - k).rem_euclid(PI);
    if g > FRAC_PI_2 {
        g -= PI;
    }
    g
}

fn flag_discontinuities(f: &ParamFamily, res: &mut SweepResult, opts: &SweepOptions) {
    let gaps: Vec<Option<Vec<(Vec<usize>, f64)>>> = res
        .points
        .par_iter()
        .map(|p| match f.eval(p.t) {
            Ok(c) if c.has_singular() => signed_gaps(&c, opts.null_depth, opts.flag_word_cap),
            _ => None,
        })
        .collect();
    if gaps.iter().any(|g| g.is_none()) {
        res.flag_note = Some("discontinuity flagging skipped: no singular letter or word budget exceeded".into());
        return;
    }
    let gaps: Vec<Vec<(Vec<usize>, f64)>> = gaps.into_iter().map(|g| g.expect("checked")).collect();
    let brackets: Vec<(usize, Vec<usize>)> = (0..res.points.len().saturating_sub(1))
        .flat_map(|i| {
            let (a, b) = (&gaps[i], &gaps[i + 1]);
            if a.len() != b.len() {
                return Vec::new();
            }
            a.iter()
                .zip(b)
                .filter(|((wa, ga), (wb, gb))| {
                    wa == wb && ga.abs() < FRAC_PI_4 && gb.abs() < FRAC_PI_4 && (*ga == 0.0 || *gb == 0.0 || ga.signum() != gb.signum())
                })
                .map(|((w, _), _)| (i, w.clone()))
                .collect()
        })
        .collect();
    let found: Vec<Discontinuity> = brackets
        .par_iter()
        .filter_map(|(i, w)| {
            let (lo, hi) = (res.points[*i].t, res.points[*i + 1].t);
            let g = |t: f64| f.eval(t).map(|c| gap_of(&c, w)).ok();
            let (mut a, mut b) = (lo, hi);
            let (mut ga, mut gb) = (g(a)?, g(b)?);
            for _ in 0..60 {
                let m = if gb != ga { b - gb * (b - a) / (gb - ga) } else { 0.5 * (a + b) };
                let m = if m > a && m < b { m } else { 0.5 * (a + b) };
                let gm = g(m)?;
                if gm == 0.0 || b - a < 1e-15 * (1.0 + m.abs()) {
                    a = m;
                    ga = gm;
                    break;
                }
                if gm.signum() == ga.signum() {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                    gb = gm;
                }
                if (b - a).abs() < 1e-14 {
                    break;
                }
            }
            let (t, r) = if ga.abs() <= gb.abs() { (a, ga) } else { (b, gb) };
            Some(Discontinuity { t, bracket: (lo, hi), word: Word(w.clone()), residual: r.abs() })
        })
        .collect();
    for d in &found {
        for p in res.points.iter_mut() {
            if p.t == d.bracket.0 || p.t == d.bracket.1 {
                p.flagged = true;
            }
        }
    }
    res.discontinuities = found;
}

#[derive(Clone, Debug, Serialize)]
pub struct SublevelReport {
    /// `(N, fraction of the parameter interval with L₁ < −N)`.
    pub rows: Vec<(f64, f64)>,
    /// Fitted `γ` in `fraction ≈ C e^{−N^γ}`, when at least two fractions
    /// lie strictly between 0 and 1.
    pub gamma: Option<f64>,
}

/// Cell-weighted sublevel fractions of a sweep; `−∞` counts in every
/// sublevel and failed points are left out.
pub fn sublevel_decay(sweep: &SweepResult, n_list: &[f64]) -> SublevelReport {
    let pts: Vec<&SweepPoint> = sweep.points.iter().filter(|p| !p.l1.is_nan()).collect();
    let m = pts.len();
    let weight = |i: usize| -> f64 {
        if m == 1 {
            return 1.0;
        }
        let lo = if i == 0 { pts[0].t } else { 0.5 * (pts[i - 1].t + pts[i].t) };
        let hi = if i + 1 == m { pts[m - 1].t } else { 0.5 * (pts[i].t + pts[i + 1].t) };
        hi - lo
    };
    let w: Vec<f64> = (0..m).map(weight).collect();
    let total: f64 = w.iter().sum();
    let rows: Vec<(f64, f64)> = n_list
        .iter()
        .map(|&n| {
            if total <= 0.0 {
                return (n, 0.0);
            }
            let below = pts.iter().zip(&w).filter(|(p, _)| p.l1 < -n).fold(0.0, |acc, (_, w)| acc + w);
            (n, below / total)
        })
        .collect();
    let fit: Vec<(f64, f64)> =
        rows.iter().filter(|(n, f)| *n > 0.0 && *f > 0.0 && *f < 1.0).map(|(n, f)| (n.ln(), (-f.ln()).ln())).collect();
    let gamma = if fit.len() >= 2 { linear_fit(&fit).map(|(slope, _)| slope) } else { None };
    SublevelReport { rows, gamma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::f64::consts::LN_2;

    #[test]
    fn left_rotation_of_identity() {
        let base = Cocycle::bernoulli(vec![Mat2::IDENTITY], vec![1.0]).unwrap();
        let f = rotation_family(&base, RotationMode::Left);
        let c = f.eval(FRAC_PI_4).unwrap();
        assert!(c.matrix(0).sub(&Mat2::rotation(FRAC_PI_4)).max_abs() < 1e-15);
        let a = Mat2::new(1.0, 2.0, -0.5, 3.0);
        let g = rotation_family(&Cocycle::bernoulli(vec![a], vec![1.0]).unwrap(), RotationMode::Left);
        assert!(g.derivative(0.0)[0].sub(&(Mat2::J * a)).max_abs() < 1e-15);
    }

    #[test]
    fn irrat_rot_family_matches_catalog() {
        let f = irrat_rot_family();
        for t in [0.3, 1.0, 2.5] {
            let c = f.eval(t).unwrap();
            let d = catalog::irrat_rot(t);
            for i in 0..2 {
                assert!(c.matrix(i).sub(d.matrix(i)).max_abs() < 1e-15);
            }
        }
        assert_eq!(f.check_constancy(50).unwrap(), 0.0);
        assert!(f.check_derivative(20, 1e-5).unwrap() < 1.0);
    }

    #[test]
    fn left_mode_fails_constancy() {
        let f = rotation_family(&catalog::irrat_rot(0.0), RotationMode::Left);
        assert!(f.check_constancy(10).is_err());
    }

    #[test]
    fn winding_speeds() {
        let id = Cocycle::bernoulli(vec![Mat2::IDENTITY], vec![1.0]).unwrap();
        let ts = uniform_grid(0.0, 3.0, 7);
        let vs: Vec<ProjPoint> = uniform_grid(0.0, 3.0, 9).into_iter().map(ProjPoint::new).collect();
        let c1 = winding_speed_min(&rotation_family(&id, RotationMode::Left), &ts, &vs).unwrap();
        assert!((c1 - 1.0).abs() < 1e-12);
        let c2 = winding_speed_min(&rotation_family_with_speed(&id, RotationMode::Right, 2.0 * PI), &ts, &vs).unwrap();
        assert!((c2 - 2.0 * PI).abs() < 1e-12);
        let constant = ParamFamily::new("const", (0.0, 1.0), vec![true], move |_| Ok(id.clone()), |_| vec![Mat2::ZERO]);
        assert_eq!(winding_speed_min(&constant, &ts, &vs).unwrap(), 0.0);
    }

    #[test]
    fn irrat_series_values() {
        assert_eq!(irrat_rotation_l1(FRAC_PI_2, 10).value, f64::NEG_INFINITY);
        assert_eq!(irrat_rotation_l1(FRAC_PI_2, 10).null_j, Some(1));
        assert_eq!(irrat_rotation_l1(0.7, 0).value, 0.0);
        let s = irrat_rotation_l1(1.0, 60);
        assert!(s.value.is_finite() && s.tail < 1e-15);
    }

    #[test]
    fn irrat_series_is_twice_the_branch_series() {
        for t in [0.4, 1.0, 2.2] {
            let direct = l1_branch_series(&catalog::irrat_rot(t), 1e-14).unwrap().l1;
            let closed = irrat_rotation_l1(t, 60).value;
            assert!((2.0 * direct - closed).abs() < 1e-12, "{t}: {direct} {closed}");
        }
    }

    #[test]
    fn schrodinger_examples() {
        assert_eq!(spectrum_intervals(0.0, 1000.0), [(-2.0, 2.0), (998.0, 1002.0)]);
        let f = schrodinger_family(0.0, 0.5);
        let inside = f.eval(1.0).unwrap();
        assert!(inside.matrix(1).trace().abs() < 2.0);
        let outside = f.eval(3.0).unwrap();
        assert!(outside.matrix(1).trace().abs() > 2.0);
        assert_eq!(certify(&outside, &CertifyOptions::default()).verdict, Verdict::Puh);
        assert!(f.check_derivative(10, 1e-6).unwrap() < 1e-3);
        f.check_constancy(10).unwrap();
        let big = schrodinger_rescaled(0.0, 0.5, 1e12, 0.3).unwrap();
        assert!(big.matrix(0).sub(&Mat2::diag(1.0, 0.0)).max_abs() < 1e-11);
    }

    #[test]
    fn explo_family_kernel_and_range() {
        let f = explo_family();
        let c = f.eval(0.25).unwrap();
        assert!((c.range(1).unwrap().theta() - (1.0f64).atan2(0.25)).abs() < 1e-12);
        assert!((c.kernel(1).unwrap().theta() - (0.25f64).atan2(1.0)).abs() < 1e-12);
        assert!(f.check_derivative(10, 1e-6).unwrap() < 10.0);
        let at0 = f.eval(0.0).unwrap();
        assert!((l1_branch_series(&at0, 1e-12).unwrap().l1 + LN_2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn small_norm_arc_length() {
        let m = Mat2::diag(1.0, 0.0);
        for eps in [1e-2, 1e-3, 1e-4] {
            let s = small_norm_set(&m, eps);
            assert!((s.total_length() - 2.0 * eps.asin()).abs() < 1e-15);
            assert!(s.contains(ProjPoint::new(FRAC_PI_2)));
        }
        assert!(small_norm_set(&Mat2::diag(2.0, 0.5), 0.4).is_empty());
        assert!(small_norm_set(&Mat2::diag(2.0, 0.5), 3.0).is_full());
    }

    #[test]
    fn sweep_marks_null_words() {
        let f = irrat_rot_family();
        let grid = [FRAC_PI_4, 1.0, PI / 3.0, FRAC_PI_2];
        let res = sweep_l1(&f, &grid, &SweepOptions::default()).unwrap();
        assert_eq!(res.points[0].l1, f64::NEG_INFINITY);
        assert_eq!(res.points[0].null_word.as_ref().unwrap().to_string(), "1 2 2 1");
        assert!(res.points[1].l1.is_finite());
        assert!(res.points[2].l1.is_finite());
        assert_eq!(res.points[3].null_word.as_ref().unwrap().to_string(), "1 2 1");
        assert_eq!(res.null_word_hits().len(), 2);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let f = irrat_rot_family();
        assert!(matches!(sweep_l1(&f, &[], &SweepOptions::default()), Err(Error::EmptyGrid)));
        assert!(sweep_l1(&f, &[1.0, 0.5], &SweepOptions::default()).is_err());
    }

    #[test]
    fn sweep_flags_crossings() {
        let f = irrat_rot_family();
        let grid = uniform_grid(1.5, 1.65, 16);
        let res = sweep_l1(&f, &grid, &SweepOptions::default()).unwrap();
        let d = res.discontinuities.iter().find(|d| d.word.to_string() == "1 2 1").expect("crossing at π/2");
        assert!((d.t - FRAC_PI_2).abs() < 1e-12);
        assert!(res.points.iter().any(|p| p.flagged));
    }

    #[test]
    fn constant_family_sweep() {
        let c = catalog::explo1();
        let f = ParamFamily::new("const", (0.0, 1.0), vec![true, true], move |_| Ok(c.clone()), |_| vec![Mat2::ZERO; 2]);
        let res = sweep_l1(&f, &uniform_grid(0.0, 1.0, 5), &SweepOptions::default()).unwrap();
        assert!(res.l1().iter().all(|x| (x + LN_2 / 2.0).abs() < 1e-9));
        assert!(res.discontinuities.is_empty());
        let rep = sublevel_decay(&res, &[1.0, 2.0]);
        assert_eq!(rep.rows, vec![(1.0, 0.0), (2.0, 0.0)]);
    }

    #[test]
    fn sublevel_of_all_null() {
        let f = irrat_rot_family();
        let res = sweep_l1(&f, &[FRAC_PI_4, FRAC_PI_2], &SweepOptions::default()).unwrap();
        let rep = sublevel_decay(&res, &[1.0, 8.0]);
        assert_eq!(rep.rows, vec![(1.0, 1.0), (8.0, 1.0)]);
    }

    #[test]
    fn sweep_csv_tokens() {
        let f = irrat_rot_family();
        let res = sweep_l1(&f, &[1.0, FRAC_PI_2], &SweepOptions::default()).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,l1,puh_verdict,nearest_null_word_sigma1,null_word");
        assert!(lines[2].contains(",-inf,") && lines[2].ends_with(",1 2 1"));
    }

    #[test]
    fn refinement_inserts_midpoints() {
        let f = irrat_rot_family();
        let opts = SweepOptions { refine_rounds: 2, ..SweepOptions::default() };
        let grid = [1.0, FRAC_PI_2, 2.0];
        let res = sweep_l1(&f, &grid, &opts).unwrap();
        assert!(res.points.len() > 3);
        assert!(res.grid().windows(2).all(|w| w[1] > w[0]));
    }
}
