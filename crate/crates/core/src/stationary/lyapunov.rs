//! Top Lyapunov exponent of rank-one cocycles: the branch series, the
//! Furstenberg integral `∫Ψ dη`, and a sampled fallback.

use serde::Serialize;

use super::graph::{AtomGraph, GraphOptions, MassProfile, NULL_TOL};
use super::AtomicMeasure;
use crate::error::{Error, Result};
use crate::limits::{self, SimConfig, Start};
use crate::linalg::{proj_dist, range_kernel, Mat2, ProjPoint};
use crate::numeric::{mean_stderr, serialize_opt_real, serialize_real, Neumaier};
use crate::shift::{Cocycle, Word};

/// Atoms closer than this to a kernel make `Ψ` diverge.
pub const KERNEL_TOL: f64 = 1e-13;
const SERIES_LEAF_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BranchSeries,
    Furstenberg,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    #[serde(serialize_with = "serialize_real")]
    pub l1: f64,
    #[serde(serialize_with = "serialize_real")]
    pub l2: f64,
    /// `L₁ / q`, the exponent of the first-return cocycle.
    #[serde(serialize_with = "serialize_opt_real")]
    pub induced_l1: Option<f64>,
    pub series_depth: usize,
    #[serde(serialize_with = "serialize_real")]
    pub tail_bound: f64,
    pub method: Method,
    #[serde(serialize_with = "serialize_opt_real")]
    pub stderr: Option<f64>,
    /// Difference to the independent branch-series value, when computed.
    #[serde(serialize_with = "serialize_opt_real")]
    pub cross_check_gap: Option<f64>,
}

impl LyapunovReport {
    fn rank_one(c: &Cocycle, l1: f64, depth: usize, tail_bound: f64, method: Method) -> Self {
        LyapunovReport {
            l1,
            l2: f64::NEG_INFINITY,
            induced_l1: induced_l1(c, l1).ok(),
            series_depth: depth,
            tail_bound,
            method,
            stderr: None,
            cross_check_gap: None,
        }
    }
}

/// `log‖B_n ⋯ B_1 r₀‖ = Σ_l log‖B_l r_{l−1}‖` with `r_l` the unit range of
/// `B_l`; `−∞` when a factor vanishes.
pub fn rank1_product_norm(mats: &[Mat2], r0: [f64; 2]) -> Result<f64> {
    let mut v = r0;
    let mut acc = Neumaier::default();
    for m in mats {
        let (r, _) = range_kernel(m)?;
        let w = m.apply(v);
        let n = w[0].hypot(w[1]);
        if n <= NULL_TOL * m.norm() {
            return Ok(f64::NEG_INFINITY);
        }
        acc.add(n.ln());
        v = r.unit();
    }
    Ok(acc.sum())
}

struct SeriesWalk<'a> {
    c: &'a Cocycle,
    depth: usize,
    word: Vec<usize>,
    acc: Neumaier,
    abs: f64,
    leaves: usize,
}

impl SeriesWalk<'_> {
    /// `v` is the unit direction after the letters in `word`; `weight`
    /// carries `q_s p(ω)` and `log` the accumulated log-norm.
    fn walk(&mut self, v: [f64; 2], weight: f64, log: f64) -> Result<()> {
        let last = *self.word.last().expect("nonempty");
        let transitions = self.word.len() - 1;
        for i in 0..self.c.k() {
            let p = self.c.transition(i, last);
            if p <= 0.0 {
                continue;
            }
            let m = self.c.matrix(i);
            let w = m.apply(v);
            let n = w[0].hypot(w[1]);
            if self.c.is_singular(i) {
                if n <= NULL_TOL * m.norm() {
                    let mut word = self.word.clone();
                    word.push(i);
                    return Err(Error::NullWord(Word(word)));
                }
                self.leaves += 1;
                if self.leaves > SERIES_LEAF_CAP {
                    return Err(Error::EnumerationCap(SERIES_LEAF_CAP));
                }
                let term = weight * p * (log + n.ln());
                self.acc.add(term);
                self.abs += term.abs();
            } else if transitions + 2 <= self.depth {
                self.word.push(i);
                self.walk([w[0] / n, w[1] / n], weight * p, log + n.ln())?;
                self.word.pop();
            }
        }
        Ok(())
    }
}

/// Branch series: the sum over singular `s`, `l` and branches
/// `ω ∈ B_n(s, l)` of `q_s p(ω) log‖Aⁿ(ω) r_s‖`, truncated where the
/// remaining branch mass drops below `tail_eps`.
pub fn l1_branch_series(c: &Cocycle, tail_eps: f64) -> Result<LyapunovReport> {
    if !c.has_singular() {
        return Err(Error::NoSingularSymbol);
    }
    let profile = MassProfile::compute(c, tail_eps * 1e-6);
    let closing_tail = |d: usize| -> f64 { profile.closing.iter().skip(d + 1).sum::<f64>() + profile.remainder };
    let mut depth = 1;
    while closing_tail(depth) > tail_eps {
        depth += 1;
        if depth > super::graph::DEPTH_CAP {
            return Err(Error::EnumerationCap(SERIES_LEAF_CAP));
        }
    }
    if branch_count(c, depth) > SERIES_LEAF_CAP as f64 {
        return Err(Error::EnumerationCap(SERIES_LEAF_CAP));
    }
    let mut walk = SeriesWalk { c, depth, word: Vec::new(), acc: Neumaier::default(), abs: 0.0, leaves: 0 };
    for s in c.singular_symbols() {
        walk.word = vec![s];
        walk.walk(c.range(s).expect("singular").unit(), c.initial(s), 0.0)?;
    }
    let l1 = walk.acc.sum();
    let tail_bound = c.log_norm_bound() * profile.weighted_closing_tail(depth) + 1e-15 * walk.abs + 1e-16;
    Ok(LyapunovReport::rank_one(c, l1, depth, tail_bound, Method::BranchSeries))
}

/// Number of branches of length at most `depth`.
fn branch_count(c: &Cocycle, depth: usize) -> f64 {
    let k = c.k();
    let mut paths = vec![0.0f64; k];
    for s in c.singular_symbols() {
        paths[s] = 1.0;
    }
    let mut total = 0.0;
    for len in 1..=depth {
        let mut next = vec![0.0; k];
        for i in 0..k {
            let n: f64 = (0..k).filter(|&j| paths[j] > 0.0 && c.allowed(i, j)).map(|j| paths[j]).sum();
            if c.is_singular(i) {
                total += n;
            } else if len < depth {
                next[i] = n;
            }
        }
        paths = next;
        if total > 1e300 {
            break;
        }
    }
    total
}

fn transition_from(c: &Cocycle, i: usize, j: Option<usize>) -> f64 {
    match j {
        Some(j) => c.transition(i, j),
        None => c.initial(i),
    }
}

/// `Ψ(j, v̂) = Σ_i p_{ij} log‖A_i v‖`.
fn psi(c: &Cocycle, j: Option<usize>, v: ProjPoint) -> Result<(f64, f64)> {
    let mut acc = Neumaier::default();
    let mut abs = 0.0;
    for i in 0..c.k() {
        let p = transition_from(c, i, j);
        if p <= 0.0 {
            continue;
        }
        if let Some(ker) = c.kernel(i) {
            let d = proj_dist(v, ker);
            if d <= KERNEL_TOL {
                return Err(Error::DivergentObservable(d));
            }
        }
        let w = c.matrix(i).apply(v.unit());
        let t = p * w[0].hypot(w[1]).ln();
        acc.add(t);
        abs += t.abs();
    }
    Ok((acc.sum(), abs))
}

/// `∫Ψ dη` over the atoms of a measure.
pub fn furstenberg_integral(c: &Cocycle, eta: &AtomicMeasure) -> Result<f64> {
    let mut acc = Neumaier::default();
    for a in &eta.atoms {
        acc.add(a.weight * psi(c, a.symbol, a.point)?.0);
    }
    Ok(acc.sum())
}

/// Furstenberg integral over the truncated atomic stationary measure, with
/// the branch series as an independent cross-check. Falls back to sampling
/// when the atom graph outgrows its cap.
pub fn furstenberg_l1(c: &Cocycle, tail_eps: f64) -> Result<LyapunovReport> {
    if !c.has_singular() {
        return Err(Error::NoSingularSymbol);
    }
    let graph = match AtomGraph::build(c, &GraphOptions::with_tail(tail_eps)) {
        Ok(g) => g,
        Err(Error::TooManyAtoms(_)) => return sampled_furstenberg(c, 1_000_000, 0),
        Err(e) => return Err(e),
    };
    let mut acc = Neumaier::default();
    let mut abs = 0.0;
    for n in &graph.nodes {
        let (v, a) = psi(c, Some(n.symbol), n.point)?;
        acc.add(n.weight * v);
        abs += n.weight * a;
    }
    let l1 = acc.sum();
    let tail_bound = c.log_norm_bound() * graph.tail_mass + 1e-15 * abs + 1e-16;
    let mut report = LyapunovReport::rank_one(c, l1, graph.depth, tail_bound, Method::Furstenberg);
    if let Ok(series) = l1_branch_series(c, tail_eps) {
        report.cross_check_gap = Some((series.l1 - l1).abs());
    }
    Ok(report)
}

/// Time average of `Ψ` along one long trajectory started from the
/// stationary chain; the direction is the range of the last singular letter
/// pushed forward by the letters since. Batch means give the error bar.
pub fn sampled_furstenberg(c: &Cocycle, samples: usize, seed: u64) -> Result<LyapunovReport> {
    if !c.has_singular() {
        return Err(Error::NoSingularSymbol);
    }
    let mut rng = limits::trial_rng(seed, 0);
    let mut sym = limits::draw_initial(c, &mut rng);
    let mut v: Option<ProjPoint> = c.range(sym);
    let mut values = Vec::with_capacity(samples);
    let mut guard = 0usize;
    while values.len() < samples {
        if let Some(dir) = v {
            match psi(c, Some(sym), dir) {
                Ok((x, _)) => values.push(x),
                Err(Error::DivergentObservable(_)) => values.push(f64::NEG_INFINITY),
                Err(e) => return Err(e),
            }
        } else {
            guard += 1;
            if guard > 100 * samples.max(1) {
                return Err(Error::InvalidArgument("chain never visits a singular symbol".into()));
            }
        }
        let next = limits::draw_next(c, &mut rng, sym);
        v = match (c.range(next), v) {
            (Some(r), _) => Some(r),
            (None, Some(dir)) => Some(crate::linalg::proj_act(c.matrix(next), dir)?),
            (None, None) => None,
        };
        sym = next;
    }
    if values.iter().any(|x| *x == f64::NEG_INFINITY) {
        let mut r = LyapunovReport::rank_one(c, f64::NEG_INFINITY, 0, 0.0, Method::MonteCarlo);
        r.stderr = Some(0.0);
        return Ok(r);
    }
    let batches = 50.min(values.len());
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let (_, se) = mean_stderr(&means);
    let l1 = values.iter().copied().collect::<Neumaier>().sum() / values.len() as f64;
    let mut r = LyapunovReport::rank_one(c, l1, 0, 3.0 * se, Method::MonteCarlo);
    r.stderr = Some(se);
    Ok(r)
}

/// Exponent of the first-return cocycle, `L₁ / q`.
pub fn induced_l1(c: &Cocycle, l1: f64) -> Result<f64> {
    let q = c.singular_mass();
    if q <= 0.0 {
        return Err(Error::NoSingularSymbol);
    }
    Ok(l1 / q)
}

/// `(L₁, L₂)`. Rank-one cocycles have `L₂ = −∞`; invertible ones use a
/// Monte Carlo `L₁` and `L₂ = E log|det| − L₁`.
pub fn lyapunov_spectrum(c: &Cocycle) -> Result<(f64, f64)> {
    if c.has_singular() {
        let r = furstenberg_l1(c, super::DEFAULT_TAIL_EPS)?;
        return Ok((r.l1, f64::NEG_INFINITY));
    }
    let cfg = SimConfig { seed: 0x5eed, n: 10_000, trials: 32, start: Start::Point(ProjPoint::new(0.5)) };
    let samples = limits::simulate_matrix_lognorm(c, &cfg)?;
    let l1 = samples.iter().copied().collect::<Neumaier>().sum() / samples.len() as f64;
    let logdet: f64 = (0..c.k()).map(|i| c.initial(i) * c.matrix(i).det().abs().ln()).sum();
    Ok((l1, logdet - l1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::stationary::stationary_measure;
    use std::f64::consts::{LN_2, PI};

    #[test]
    fn product_norm_examples() {
        let p = Mat2::diag(1.0, 0.0);
        assert_eq!(rank1_product_norm(&[p], [1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(rank1_product_norm(&[p, p], [1.0, 0.0]).unwrap(), 0.0);
        let killer = Mat2::diag(0.0, 1.0);
        assert_eq!(rank1_product_norm(&[p, killer], [1.0, 0.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn product_norm_matches_direct_product() {
        let mats = [
            Mat2::outer([1.0, 2.0], [0.5, -0.3]),
            Mat2::outer([-0.4, 1.0], [1.0, 1.0]),
            Mat2::outer([0.3, 0.3], [2.0, -1.0]),
        ];
        let r0 = [0.6, 0.8];
        let direct = mats.iter().fold(Mat2::IDENTITY, |acc, m| *m * acc).apply(r0);
        let expected = direct[0].hypot(direct[1]).ln();
        assert!((rank1_product_norm(&mats, r0).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn explo_series_and_integral() {
        let c = catalog::explo1();
        let s = l1_branch_series(&c, 1e-12).unwrap();
        assert!((s.l1 + LN_2 / 2.0).abs() <= s.tail_bound + 1e-12, "{s:?}");
        let f = furstenberg_l1(&c, 1e-12).unwrap();
        assert!((f.l1 + LN_2 / 2.0).abs() < 1e-10);
        assert!((f.l1 - s.l1).abs() < 1e-10);
        assert!(f.cross_check_gap.unwrap() < 1e-10);
        assert!((f.induced_l1.unwrap() + LN_2).abs() < 1e-10);
        assert_eq!(f.l2, f64::NEG_INFINITY);
    }

    #[test]
    fn irrat_rot_integral_is_half_the_series() {
        let t = 1.0;
        let c = catalog::irrat_rot(t);
        let f = furstenberg_l1(&c, 1e-18).unwrap();
        let closed: f64 = (0..=60).map(|j| 0.5f64.powi(j + 1) * (j as f64 * t).cos().abs().ln()).sum();
        assert!((f.l1 - closed / 2.0).abs() <= f.tail_bound + 1e-15, "{} vs {}", f.l1, closed / 2.0);
        let s = l1_branch_series(&c, 1e-18).unwrap();
        assert!((f.l1 - s.l1).abs() <= f.tail_bound + s.tail_bound);
    }

    #[test]
    fn null_words_abort() {
        let c = catalog::irrat_rot(PI / 2.0);
        assert!(matches!(l1_branch_series(&c, 1e-12), Err(Error::NullWord(_))));
        assert!(matches!(furstenberg_l1(&c, 1e-12), Err(Error::NullWord(_))));
    }

    #[test]
    fn singular_singleton_has_zero_exponent() {
        let c = catalog::rank_one_singleton();
        assert_eq!(l1_branch_series(&c, 1e-12).unwrap().l1, 0.0);
        assert_eq!(furstenberg_l1(&c, 1e-12).unwrap().l1, 0.0);
        assert_eq!(induced_l1(&c, 0.7).unwrap(), 0.7);
    }

    #[test]
    fn divergent_atom_is_rejected() {
        let c = catalog::irrat_rot(1.0);
        let mut eta = stationary_measure(&c, 1e-12).unwrap();
        eta.atoms[0].point = ProjPoint::new(PI / 2.0);
        assert!(matches!(furstenberg_integral(&c, &eta), Err(Error::DivergentObservable(_))));
    }

    #[test]
    fn all_invertible_is_rejected() {
        assert!(matches!(furstenberg_l1(&catalog::rotation(0.4), 1e-12), Err(Error::NoSingularSymbol)));
    }

    #[test]
    fn spectrum_examples() {
        let (l1, l2) = lyapunov_spectrum(&catalog::explo1()).unwrap();
        assert!((l1 + LN_2 / 2.0).abs() < 1e-10 && l2 == f64::NEG_INFINITY);
        let (l1, l2) = lyapunov_spectrum(&catalog::hyperbolic_singleton()).unwrap();
        assert!((l1 - LN_2).abs() < 1e-12 && (l2 + LN_2).abs() < 1e-12);
        let (l1, l2) = lyapunov_spectrum(&catalog::rotation(0.9)).unwrap();
        assert!(l1.abs() < 1e-12 && l2.abs() < 1e-12);
    }

    #[test]
    fn sampling_agrees_with_integral() {
        let c = catalog::markov_example();
        let exact = furstenberg_l1(&c, 1e-12).unwrap();
        let s = sampled_furstenberg(&c, 400_000, 3).unwrap();
        assert!((s.l1 - exact.l1).abs() < 5.0 * s.stderr.unwrap() + 1e-3, "{} vs {}", s.l1, exact.l1);
    }

    #[test]
    fn markov_series_matches_integral() {
        let c = Cocycle::markov(
            vec![Mat2::outer([1.0, 0.2], [0.3, 1.0]), Mat2::new(1.2, 0.4, -0.3, 0.9), Mat2::diag(1.0, 0.0)],
            vec![vec![0.2, 0.5, 0.3], vec![0.5, 0.3, 0.3], vec![0.3, 0.2, 0.4]],
            None,
        )
        .unwrap();
        let f = furstenberg_l1(&c, 1e-10).unwrap();
        let s = l1_branch_series(&c, 1e-10).unwrap();
        assert!((f.l1 - s.l1).abs() <= f.tail_bound + s.tail_bound, "{f:?} {s:?}");
    }
}
