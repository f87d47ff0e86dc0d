//! Monte Carlo engine for finite-time Lyapunov statistics.
//!
//! Trial `r` of a run draws from its own ChaCha8 stream `(seed, r)`, so
//! results do not depend on how trials are spread across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, ProjPoint};
use crate::numeric::{linear_fit, mean_stderr, serialize_real, wilson_interval, Neumaier};
use crate::shift::{Cocycle, Word};
use crate::stationary::{AtomGraph, AtomicMeasure, GraphOptions, LyapunovReport, Method, NULL_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    Point(ProjPoint),
    /// Initial (symbol, direction) drawn from the stationary measure.
    FromEta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n: usize,
    pub trials: usize,
    pub start: Start,
}

impl SimConfig {
    /// `FromEta` when the cocycle has a singular letter, else `θ = 0.5`.
    pub fn natural_start(c: &Cocycle) -> Start {
        if c.has_singular() {
            Start::FromEta
        } else {
            Start::Point(ProjPoint::new(0.5))
        }
    }
}

pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_from(rng: &mut ChaCha8Rng, k: usize, prob: impl Fn(usize) -> f64) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for i in 0..k {
        let p = prob(i);
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// First letter, from `p` or `q`.
pub fn draw_initial(c: &Cocycle, rng: &mut ChaCha8Rng) -> usize {
    draw_from(rng, c.k(), |i| c.initial(i))
}

/// Next letter after `prev`.
pub fn draw_next(c: &Cocycle, rng: &mut ChaCha8Rng, prev: usize) -> usize {
    draw_from(rng, c.k(), |i| c.transition(i, prev))
}

/// Cumulative weights of the stationary atoms.
struct EtaSampler {
    atoms: Vec<(Option<usize>, ProjPoint)>,
    cumulative: Vec<f64>,
}

impl EtaSampler {
    fn new(eta: &AtomicMeasure) -> Result<Self> {
        let mut acc = 0.0;
        let mut atoms = Vec::new();
        let mut cumulative = Vec::new();
        for a in eta.atoms.iter().filter(|a| a.weight > 0.0) {
            acc += a.weight;
            atoms.push((a.symbol, a.point));
            cumulative.push(acc);
        }
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("stationary measure has no atoms".into()));
        }
        cumulative.iter_mut().for_each(|x| *x /= acc);
        Ok(EtaSampler { atoms, cumulative })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Option<usize>, ProjPoint) {
        let u: f64 = rng.gen();
        let i = self.cumulative.partition_point(|&x| x <= u).min(self.atoms.len() - 1);
        self.atoms[i]
    }
}

fn sampler_for(c: &Cocycle, start: Start) -> Result<Option<EtaSampler>> {
    match start {
        Start::Point(_) => Ok(None),
        Start::FromEta => {
            if !c.has_singular() {
                return Err(Error::InvalidArgument("from-eta start needs a singular letter".into()));
            }
            let eta = crate::stationary::stationary_measure(c, 1e-12)?;
            Ok(Some(EtaSampler::new(&eta)?))
        }
    }
}

fn check_cfg(cfg: &SimConfig) -> Result<()> {
    if cfg.n == 0 || cfg.trials == 0 {
        return Err(Error::InvalidArgument("n and trials must be at least 1".into()));
    }
    Ok(())
}

struct Trial {
    log_norm: f64,
    start: [f64; 2],
    word: Vec<usize>,
}

/// One trajectory: draws letters, accumulates `log‖A_i v‖` with the
/// direction renormalized at every step. With `floor = Some(N)` each
/// increment is clipped at `−N` and a killed direction restarts from the
/// range of the killing letter.
fn run_trial(c: &Cocycle, cfg: &SimConfig, trial: usize, eta: Option<&EtaSampler>, floor: Option<f64>, record: bool) -> Trial {
    let mut rng = trial_rng(cfg.seed, trial as u64);
    let (prev, point) = match (cfg.start, eta) {
        (Start::Point(p), _) => (None, p),
        (Start::FromEta, Some(s)) => s.draw(&mut rng),
        (Start::FromEta, None) => unreachable!("sampler is built for from-eta starts"),
    };
    let start = point.unit();
    let mut v = start;
    let mut prev = prev;
    let mut acc = Neumaier::default();
    let mut word = Vec::new();
    for _ in 0..cfg.n {
        let i = match prev {
            Some(j) => draw_next(c, &mut rng, j),
            None => draw_initial(c, &mut rng),
        };
        if record {
            word.push(i);
        }
        let m = c.matrix(i);
        let w = m.apply(v);
        let norm = w[0].hypot(w[1]);
        if norm <= NULL_TOL * m.norm() {
            match floor {
                Some(n) => {
                    acc.add(-n);
                    v = c.range(i).map(|r| r.unit()).unwrap_or(v);
                }
                None => {
                    return Trial { log_norm: f64::NEG_INFINITY, start, word };
                }
            }
        } else {
            let inc = norm.ln();
            acc.add(floor.map_or(inc, |n| inc.max(-n)));
            v = [w[0] / norm, w[1] / norm];
        }
        prev = Some(i);
    }
    Trial { log_norm: acc.sum(), start, word }
}

fn run(c: &Cocycle, cfg: &SimConfig, floor: Option<f64>) -> Result<Vec<f64>> {
    check_cfg(cfg)?;
    let sampler = sampler_for(c, cfg.start)?;
    let n = cfg.n as f64;
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|r| run_trial(c, cfg, r, sampler.as_ref(), floor, false).log_norm / n)
        .collect())
}

/// Samples of `(1/n) log‖Aⁿ(ω) v‖`, one per trial.
pub fn simulate_lognorm(c: &Cocycle, cfg: &SimConfig) -> Result<Vec<f64>> {
    run(c, cfg, None)
}

/// Samples of `(1/n) Σ max(φ, −N)` along the orbit.
pub fn simulate_truncated(c: &Cocycle, cfg: &SimConfig, n_floor: f64) -> Result<Vec<f64>> {
    truncate_observable(c, n_floor)?;
    run(c, cfg, Some(n_floor))
}

/// Letters, start vector and the incrementally accumulated `log‖Aⁿ v‖` of
/// one trial.
pub fn trajectory(c: &Cocycle, cfg: &SimConfig, trial: usize) -> Result<(Word, [f64; 2], f64)> {
    check_cfg(cfg)?;
    let sampler = sampler_for(c, cfg.start)?;
    let t = run_trial(c, cfg, trial, sampler.as_ref(), None, true);
    Ok((Word(t.word), t.start, t.log_norm))
}

/// `log‖A_{ω_n} ⋯ A_{ω_1} v‖` from raw products over blocks of `block`
/// letters, rescaling only between blocks.
pub fn lognorm_blocked(c: &Cocycle, word: &Word, v: [f64; 2], block: usize) -> f64 {
    let mut v = v;
    let mut acc = Neumaier::default();
    for chunk in word.0.chunks(block.max(1)) {
        let m = chunk.iter().fold(Mat2::IDENTITY, |acc, &i| *c.matrix(i) * acc);
        let w = m.apply(v);
        let norm = w[0].hypot(w[1]);
        if norm == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc.add(norm.ln());
        v = [w[0] / norm, w[1] / norm];
    }
    acc.sum()
}

/// Samples of `(1/n) log‖Aⁿ(ω)‖`, the matrix norm, one per trial.
pub fn simulate_matrix_lognorm(c: &Cocycle, cfg: &SimConfig) -> Result<Vec<f64>> {
    check_cfg(cfg)?;
    let n = cfg.n as f64;
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|r| {
            let mut rng = trial_rng(cfg.seed, r as u64);
            let mut prod = Mat2::IDENTITY;
            let mut acc = Neumaier::default();
            let mut prev: Option<usize> = None;
            for _ in 0..cfg.n {
                let i = match prev {
                    Some(j) => draw_next(c, &mut rng, j),
                    None => draw_initial(c, &mut rng),
                };
                prod = *c.matrix(i) * prod;
                let s = prod.norm();
                if s == 0.0 {
                    return f64::NEG_INFINITY;
                }
                acc.add(s.ln());
                prod = prod.scale(1.0 / s);
                prev = Some(i);
            }
            acc.sum() / n
        })
        .collect())
}

/// Plain Monte Carlo estimate of `L₁` with its standard error.
pub fn monte_carlo_l1(c: &Cocycle, cfg: &SimConfig) -> Result<LyapunovReport> {
    let samples = simulate_lognorm(c, cfg)?;
    let (l1, se) = if samples.iter().any(|x| *x == f64::NEG_INFINITY) {
        (f64::NEG_INFINITY, 0.0)
    } else {
        mean_stderr(&samples)
    };
    let l2 = if c.has_singular() {
        f64::NEG_INFINITY
    } else {
        let logdet: f64 = (0..c.k()).map(|i| c.initial(i) * c.matrix(i).det().abs().ln()).sum();
        logdet - l1
    };
    Ok(LyapunovReport {
        l1,
        l2,
        induced_l1: crate::stationary::induced_l1(c, l1).ok(),
        series_depth: 0,
        tail_bound: 3.0 * se,
        method: Method::MonteCarlo,
        stderr: Some(se),
        cross_check_gap: None,
    })
}

/// `φ(i, v̂) = log‖A_i v‖` for unit `v`; `−∞` on the kernel of a singular
/// letter.
pub fn observable_phi(c: &Cocycle, i: usize, v: ProjPoint) -> f64 {
    let m = c.matrix(i);
    let w = m.apply(v.unit());
    let n = w[0].hypot(w[1]);
    if c.is_singular(i) && n <= 1e-13 * m.norm() {
        f64::NEG_INFINITY
    } else {
        n.ln()
    }
}

/// `φ_N = max(φ, −N)`.
#[derive(Clone, Copy, Debug)]
pub struct TruncatedPhi<'a> {
    pub cocycle: &'a Cocycle,
    pub n: f64,
}

impl TruncatedPhi<'_> {
    pub fn eval(&self, i: usize, v: ProjPoint) -> f64 {
        observable_phi(self.cocycle, i, v).max(-self.n)
    }
}

pub fn truncate_observable(c: &Cocycle, n: f64) -> Result<TruncatedPhi<'_>> {
    let bound = c.log_norm_bound();
    if !(n > bound) {
        return Err(Error::BadTruncation { n, bound });
    }
    Ok(TruncatedPhi { cocycle: c, n })
}

fn for_pairs(c: &Cocycle, eta: &AtomicMeasure, mut f: impl FnMut(f64, f64)) {
    for a in &eta.atoms {
        for i in 0..c.k() {
            let p = match a.symbol {
                Some(j) => c.transition(i, j),
                None => c.initial(i),
            };
            if p > 0.0 {
                f(a.weight * p, observable_phi(c, i, a.point));
            }
        }
    }
}

/// `∫|φ − φ_N| d(p×η)`.
pub fn truncation_gap(c: &Cocycle, eta: &AtomicMeasure, n: f64) -> f64 {
    let mut acc = 0.0;
    for_pairs(c, eta, |w, phi| {
        if phi < -n {
            acc += if phi == f64::NEG_INFINITY { f64::INFINITY } else { w * (-n - phi) };
        }
    });
    acc
}

/// `(p×η){φ < −N}`.
pub fn tail_set_mass(c: &Cocycle, eta: &AtomicMeasure, n: f64) -> f64 {
    let mut acc = 0.0;
    for_pairs(c, eta, |w, phi| {
        if phi < -n {
            acc += w;
        }
    });
    acc
}

/// Schedule of the truncation level `N_n` in LDT runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    None,
    /// `N_n = max(n^{1/3}, c(A) + 1)`.
    CubeRoot,
    Fixed(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct LdtRow {
    pub n: usize,
    pub trials: usize,
    pub hits: usize,
    #[serde(serialize_with = "serialize_real")]
    pub tail: f64,
    #[serde(serialize_with = "serialize_real")]
    pub wilson_lo: f64,
    #[serde(serialize_with = "serialize_real")]
    pub wilson_hi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LdtReport {
    pub epsilon: f64,
    pub l1_ref: f64,
    pub truncation: Truncation,
    pub rows: Vec<LdtRow>,
    /// Slope and intercept of `log P̂` against `n`.
    pub fit_linear: Option<(f64, f64)>,
    /// Slope and intercept of `log P̂` against `n^{1/3}`.
    pub fit_cube_root: Option<(f64, f64)>,
}

/// Seed of the run at trajectory length `n`.
fn seed_for(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Empirical `P[|S_n/n − L₁| > ε]` at each `n`.
pub fn ldt_tail(c: &Cocycle, l1_ref: f64, epsilon: f64, n_list: &[usize], trials: usize, seed: u64) -> Result<LdtReport> {
    ldt_tail_with(c, l1_ref, epsilon, n_list, trials, seed, Truncation::None)
}

pub fn ldt_tail_with(
    c: &Cocycle,
    l1_ref: f64,
    epsilon: f64,
    n_list: &[usize],
    trials: usize,
    seed: u64,
    truncation: Truncation,
) -> Result<LdtReport> {
    if !l1_ref.is_finite() {
        return Err(Error::InvalidArgument("reference exponent must be finite".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let start = SimConfig::natural_start(c);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cfg = SimConfig { seed: seed_for(seed, n), n, trials, start };
        let samples = match truncation {
            Truncation::None => simulate_lognorm(c, &cfg)?,
            Truncation::CubeRoot => simulate_truncated(c, &cfg, (n as f64).cbrt().max(c.log_norm_bound() + 1.0))?,
            Truncation::Fixed(level) => simulate_truncated(c, &cfg, level)?,
        };
        let hits = samples.iter().filter(|x| !((**x - l1_ref).abs() <= epsilon)).count();
        let (lo, hi) = wilson_interval(hits, trials, 1.96);
        rows.push(LdtRow { n, trials, hits, tail: hits as f64 / trials as f64, wilson_lo: lo, wilson_hi: hi });
    }
    let positive: Vec<&LdtRow> = rows.iter().filter(|r| r.hits > 0).collect();
    let fit = |x: fn(usize) -> f64| linear_fit(&positive.iter().map(|r| (x(r.n), r.tail.ln())).collect::<Vec<_>>());
    Ok(LdtReport {
        epsilon,
        l1_ref,
        truncation,
        fit_linear: fit(|n| n as f64),
        fit_cube_root: fit(|n| (n as f64).cbrt()),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GlReport {
    #[serde(serialize_with = "serialize_real")]
    pub sigma: f64,
    /// `‖g‖² − ‖Q̄g‖²` before clamping.
    pub sigma2_raw: f64,
    /// `∫φ d(p×η)`.
    pub mean: f64,
    /// Envelope for truncating the series and for boundary atoms.
    pub uncertainty: f64,
    pub series_depth: usize,
    pub clamped: bool,
}

/// Gordin–Livšic variance of `φ(i, v̂) = log‖A_i v‖` under `p×η`.
///
/// Functions live on pairs (atom, next letter). `Q̄f(u, i) = Σ_{i'} p_{i'i}
/// f(Â_i u, i')`; on atoms whose successor was cut off by the truncation
/// the value is set to zero and the lost mass enters the uncertainty.
pub fn gordin_livsic_sigma(c: &Cocycle, graph: &AtomGraph, series_depth: usize) -> Result<GlReport> {
    let k = c.k();
    let nodes = &graph.nodes;
    let total: f64 = graph.total_weight();
    let prob = |i: usize, u: usize| c.transition(i, nodes[u].symbol);
    let mut phi = vec![0.0; nodes.len() * k];
    let mut mean = Neumaier::default();
    for u in 0..nodes.len() {
        for i in 0..k {
            let p = prob(i, u);
            if p <= 0.0 {
                continue;
            }
            let m = c.matrix(i);
            let w = m.apply(nodes[u].point.unit());
            let n = w[0].hypot(w[1]);
            if n <= NULL_TOL * m.norm() {
                let mut word = graph.word_to(u);
                word.0.push(i);
                return Err(Error::NullWord(word));
            }
            phi[u * k + i] = n.ln();
            mean.add(nodes[u].weight * p * n.ln());
        }
    }
    let mean = mean.sum() / total;
    phi.iter_mut().for_each(|x| *x -= mean);

    let lift = |f: &[f64]| -> Vec<f64> {
        let h: Vec<f64> = (0..nodes.len())
            .map(|u| (0..k).map(|i| prob(i, u) * f[u * k + i]).sum())
            .collect();
        let mut out = vec![0.0; nodes.len() * k];
        for u in 0..nodes.len() {
            for i in 0..k {
                if prob(i, u) > 0.0 {
                    if let Some(t) = graph.successor(c, u, i) {
                        out[u * k + i] = h[t];
                    }
                }
            }
        }
        out
    };
    let sup = |f: &[f64]| f.iter().fold(0.0f64, |a, x| a.max(x.abs()));

    let mut g = phi.clone();
    let mut term = phi.clone();
    let mut last_sup = sup(&term);
    let mut prev_sup = last_sup;
    for _ in 0..series_depth {
        term = lift(&term);
        prev_sup = last_sup;
        last_sup = sup(&term);
        g.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
        if last_sup == 0.0 {
            break;
        }
    }
    let qg = lift(&g);
    let mut g2 = Neumaier::default();
    let mut qg2 = Neumaier::default();
    let mut boundary = 0.0;
    for u in 0..nodes.len() {
        for i in 0..k {
            let p = prob(i, u);
            if p <= 0.0 {
                continue;
            }
            let w = nodes[u].weight * p;
            g2.add(w * g[u * k + i].powi(2));
            qg2.add(w * qg[u * k + i].powi(2));
            if graph.successor(c, u, i).is_none() {
                boundary += w;
            }
        }
    }
    let sigma2_raw = (g2.sum() - qg2.sum()) / total;
    let rho = if prev_sup > 0.0 { (last_sup / prev_sup).min(0.999) } else { 0.0 };
    let series_tail = last_sup * rho / (1.0 - rho);
    let g_sup = sup(&g) + series_tail;
    let uncertainty = 4.0 * g_sup * series_tail + 2.0 * g_sup * g_sup * (boundary + graph.tail_mass) / total;
    let clamped = sigma2_raw < 0.0;
    if clamped {
        eprintln!("warning: negative variance {sigma2_raw:e} clamped to 0");
    }
    Ok(GlReport {
        sigma: sigma2_raw.max(0.0).sqrt(),
        sigma2_raw,
        mean,
        uncertainty,
        series_depth,
        clamped,
    })
}

/// Gordin–Livšic `σ` with the atom graph built at `tail_eps`.
pub fn gordin_livsic_for(c: &Cocycle, tail_eps: f64, series_depth: usize) -> Result<GlReport> {
    let graph = AtomGraph::build(c, &GraphOptions::with_tail(tail_eps))?;
    gordin_livsic_sigma(c, &graph, series_depth)
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub sigma_gl: f64,
    pub sigma_mc: f64,
    pub ks_distance: f64,
    pub n: usize,
    pub trials: usize,
    /// Mean and standard deviation of the normalized samples.
    pub z_mean: f64,
    pub z_std: f64,
}

/// Kolmogorov–Smirnov distance of `(log‖Aⁿv‖ − n L₁)/(σ√n)` to `N(0, 1)`.
pub fn clt_test(c: &Cocycle, l1: f64, sigma: f64, n: usize, trials: usize, seed: u64) -> Result<CltReport> {
    if !(sigma > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let cfg = SimConfig { seed, n, trials, start: SimConfig::natural_start(c) };
    let samples = simulate_lognorm(c, &cfg)?;
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("a trajectory hit a zero product".into()));
    }
    let nf = n as f64;
    let mut z: Vec<f64> = samples.iter().map(|s| (s * nf - nf * l1) / (sigma * nf.sqrt())).collect();
    let totals: Vec<f64> = samples.iter().map(|s| s * nf).collect();
    let (_, se) = mean_stderr(&totals);
    let sigma_mc = se * (trials as f64).sqrt() / nf.sqrt();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let m = z.len() as f64;
    let ks = z
        .iter()
        .enumerate()
        .map(|(r, x)| {
            let f = normal.cdf(*x);
            (f - r as f64 / m).abs().max((f - (r + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max);
    let (z_mean, z_se) = mean_stderr(&z);
    Ok(CltReport { sigma_gl: sigma, sigma_mc, ks_distance: ks, n, trials, z_mean, z_std: z_se * m.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::stationary::stationary_measure;
    use std::f64::consts::{LN_2, PI};

    fn cfg(n: usize, trials: usize, start: Start) -> SimConfig {
        SimConfig { seed: 7, n, trials, start }
    }

    #[test]
    fn rotation_samples_are_zero() {
        let s = simulate_lognorm(&catalog::rotation(0.3), &cfg(1000, 20, Start::Point(ProjPoint::new(0.2)))).unwrap();
        assert!(s.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn hyperbolic_samples_are_ln2() {
        let s = simulate_lognorm(&catalog::hyperbolic_singleton(), &cfg(500, 5, Start::Point(ProjPoint::new(0.0)))).unwrap();
        assert!(s.iter().all(|x| (x - LN_2).abs() < 1e-12));
        let m = simulate_matrix_lognorm(&catalog::hyperbolic_singleton(), &cfg(500, 5, Start::FromEta)).unwrap();
        assert!(m.iter().all(|x| (x - LN_2).abs() < 1e-12));
    }

    #[test]
    fn explo_mean() {
        let s = simulate_lognorm(&catalog::explo1(), &cfg(10_000, 1000, Start::Point(ProjPoint::new(1.0)))).unwrap();
        let (m, se) = mean_stderr(&s);
        assert!((m + LN_2 / 2.0).abs() < 3.0 * se + 1e-4, "{m} {se}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = catalog::markov_example();
        let conf = cfg(300, 64, Start::FromEta);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_lognorm(&c, &conf).unwrap());
        let b = four.install(|| simulate_lognorm(&c, &conf).unwrap());
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn telescoping_matches_blocked_products() {
        for c in [catalog::markov_example(), catalog::cantor(2.0, 0.3, 2.0, [0.05, 0.05, 0.9]), catalog::random_invertible_cocycle(3, 4)] {
            let start = SimConfig::natural_start(&c);
            let conf = cfg(400, 8, start);
            for r in 0..8 {
                let (w, v, inc) = trajectory(&c, &conf, r).unwrap();
                let direct = lognorm_blocked(&c, &w, v, 16);
                assert!((inc - direct).abs() <= 1e-8 * direct.abs().max(1.0), "{inc} {direct}");
            }
        }
    }

    #[test]
    fn phi_examples() {
        let c = catalog::irrat_rot(0.5);
        assert!(observable_phi(&c, 1, ProjPoint::new(0.9)).abs() < 1e-15);
        assert_eq!(observable_phi(&c, 0, ProjPoint::new(PI / 2.0)), f64::NEG_INFINITY);
        assert!((observable_phi(&c, 0, ProjPoint::new(PI / 4.0)) + LN_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn truncation() {
        let c = catalog::explo1();
        let t = truncate_observable(&c, 10.0).unwrap();
        assert!((t.eval(0, ProjPoint::new(PI / 4.0)) - observable_phi(&c, 0, ProjPoint::new(PI / 4.0))).abs() < 1e-15);
        assert!((t.eval(1, ProjPoint::new(PI / 4.0)) + LN_2 / 2.0).abs() < 1e-15);
        assert_eq!(t.eval(1, ProjPoint::new(0.0)), -10.0);
        assert!(matches!(truncate_observable(&c, 0.1), Err(Error::BadTruncation { .. })));
    }

    #[test]
    fn truncation_gap_and_tail_set_decay() {
        for c in [catalog::irrat_rot(1.0), catalog::markov_example(), catalog::cantor(2.0, 0.3, 2.0, [0.05, 0.05, 0.9])] {
            let eta = stationary_measure(&c, 1e-12).unwrap();
            let gaps: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|&n| truncation_gap(&c, &eta, n)).collect();
            let tails: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|&n| tail_set_mass(&c, &eta, n)).collect();
            assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
            assert!(tails.windows(2).all(|w| w[1] <= w[0]), "{tails:?}");
        }
    }

    #[test]
    fn ldt_trivial_cases() {
        let r = ldt_tail(&catalog::rotation(0.4), 0.0, 0.01, &[10, 100], 50, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.hits == 0));
        let r = ldt_tail(&catalog::hyperbolic_singleton(), LN_2, 0.01, &[100, 1000], 50, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.hits == 0 && row.wilson_lo <= row.tail && row.tail <= row.wilson_hi));
        assert!(r.fit_linear.is_none());
    }

    #[test]
    fn gl_sigma_examples() {
        let r = gordin_livsic_for(&catalog::explo1(), 1e-12, 200).unwrap();
        assert!((r.sigma - LN_2 / 2.0).abs() < 1e-6, "{r:?}");
        let r = gordin_livsic_for(&catalog::rank_one_singleton(), 1e-12, 50).unwrap();
        assert!(r.sigma.abs() < 1e-12);
    }

    #[test]
    fn clt_rejects_zero_sigma() {
        assert!(matches!(clt_test(&catalog::rotation(0.4), 0.0, 0.0, 10, 10, 1), Err(Error::ZeroVariance)));
    }

    #[test]
    fn monte_carlo_spectrum_of_diagonal() {
        let r = monte_carlo_l1(&catalog::hyperbolic_singleton(), &cfg(100, 4, Start::Point(ProjPoint::new(0.0)))).unwrap();
        assert!((r.l1 - LN_2).abs() < 1e-12 && (r.l2 + LN_2).abs() < 1e-12);
    }
}
