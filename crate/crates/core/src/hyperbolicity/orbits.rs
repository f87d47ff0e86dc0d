//! Orbits of ranges and kernels under invertible branches: null words,
//! the sets 𝒲⁺ and 𝒲⁻, and word-norm growth.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{proj_act, proj_dist, svd2, Mat2, ProjPoint};
use crate::numeric::{linear_fit, serialize_real};
use crate::shift::{Cocycle, Word};

/// Exact null words have product `σ₁` at most this.
pub const NULL_SIGMA: f64 = 1e-12;
const WORD_CAP: usize = 10_000_000;
const TREE_CAP: usize = 200_000;

#[derive(Clone, Debug, Serialize)]
pub struct OrbitTree {
    pub points: Vec<(ProjPoint, Word)>,
    pub depth: usize,
    pub merge_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullHit {
    pub word: Word,
    #[serde(serialize_with = "serialize_real")]
    pub sigma1: f64,
    /// Distance from the transported range to the closing kernel.
    pub dist: f64,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NullSearch {
    /// Sorted by `σ₁`.
    pub hits: Vec<NullHit>,
    /// Closest approach over all candidate words.
    pub min_dist: f64,
    pub min_word: Option<Word>,
    /// Smallest product `σ₁` over all candidate words.
    #[serde(serialize_with = "serialize_real")]
    pub min_sigma1: f64,
    pub min_sigma1_word: Option<Word>,
    pub words_checked: usize,
}

impl NullSearch {
    pub fn exact(&self) -> Option<&NullHit> {
        self.hits.iter().find(|h| h.exact)
    }
}

struct NullWalk<'a> {
    c: &'a Cocycle,
    inv: Vec<usize>,
    depth: usize,
    near_tol: f64,
    word: Vec<usize>,
    hits: Vec<NullHit>,
    min_dist: f64,
    min_word: Option<Word>,
    min_sigma1: f64,
    min_sigma1_word: Option<Word>,
    checked: usize,
}

impl NullWalk<'_> {
    /// `v` is the unit image of the seed range, `scale` the telescoped
    /// `‖A_s‖ ‖Aⁿ(ω) r_s‖`.
    fn walk(&mut self, v: ProjPoint, scale: f64) -> Result<()> {
        let last = *self.word.last().expect("seeded");
        for t in self.c.singular_symbols() {
            if !self.c.allowed(t, last) {
                continue;
            }
            self.checked += 1;
            let m = self.c.matrix(t);
            let w = m.apply(v.unit());
            let sigma1 = scale * w[0].hypot(w[1]);
            let dist = proj_dist(v, self.c.kernel(t).expect("singular"));
            let mut word = self.word.clone();
            word.push(t);
            if dist < self.min_dist {
                self.min_dist = dist;
                self.min_word = Some(Word(word.clone()));
            }
            if sigma1 < self.min_sigma1 {
                self.min_sigma1 = sigma1;
                self.min_sigma1_word = Some(Word(word.clone()));
            }
            let exact = sigma1 <= NULL_SIGMA;
            if exact || dist <= self.near_tol {
                self.hits.push(NullHit { word: Word(word), sigma1, dist, exact });
            }
        }
        if self.checked > WORD_CAP {
            return Err(Error::EnumerationCap(WORD_CAP));
        }
        if self.word.len() - 1 >= self.depth {
            return Ok(());
        }
        for idx in 0..self.inv.len() {
            let i = self.inv[idx];
            if !self.c.allowed(i, last) {
                continue;
            }
            let m = self.c.matrix(i);
            let w = m.apply(v.unit());
            let n = w[0].hypot(w[1]);
            self.word.push(i);
            self.walk(ProjPoint::from_vector(w).expect("invertible"), scale * n)?;
            self.word.pop();
        }
        Ok(())
    }
}

/// Words `(s, ω, t)` with `s`, `t` singular and `ω` an invertible branch of
/// length at most `depth`, whose product is (nearly) zero: either the
/// transported range `Âⁿ(ω) r̂_s` lies within `near_tol` of `k̂_t`, or the
/// product has `σ₁ ≤ 1e-12`.
pub fn null_word_search(c: &Cocycle, depth: usize, near_tol: f64) -> Result<NullSearch> {
    if !c.has_singular() {
        return Err(Error::NoSingularSymbol);
    }
    let inv = c.invertible_symbols();
    let per_seed: Vec<Result<NullWalk>> = c
        .singular_symbols()
        .into_par_iter()
        .map(|s| {
            let mut walk = NullWalk {
                c,
                inv: inv.clone(),
                depth,
                near_tol,
                word: vec![s],
                hits: Vec::new(),
                min_dist: f64::INFINITY,
                min_word: None,
                min_sigma1: f64::INFINITY,
                min_sigma1_word: None,
                checked: 0,
            };
            walk.walk(c.range(s).expect("singular"), c.matrix(s).norm())?;
            Ok(walk)
        })
        .collect();
    let mut out = NullSearch {
        hits: Vec::new(),
        min_dist: f64::INFINITY,
        min_word: None,
        min_sigma1: f64::INFINITY,
        min_sigma1_word: None,
        words_checked: 0,
    };
    for w in per_seed {
        let w = w?;
        out.hits.extend(w.hits);
        out.words_checked += w.checked;
        if w.min_dist < out.min_dist {
            out.min_dist = w.min_dist;
            out.min_word = w.min_word;
        }
        if w.min_sigma1 < out.min_sigma1 {
            out.min_sigma1 = w.min_sigma1;
            out.min_sigma1_word = w.min_sigma1_word;
        }
    }
    out.hits.sort_by(|a, b| a.sigma1.total_cmp(&b.sigma1).then(a.word.len().cmp(&b.word.len())));
    Ok(out)
}

/// Tagged points bucketed by angle for merging within `tol`.
struct PointIndex {
    tol: f64,
    width: f64,
    map: HashMap<(usize, i64), Vec<ProjPoint>>,
}

impl PointIndex {
    fn new(tol: f64) -> Self {
        PointIndex { tol, width: tol.max(1e-9), map: HashMap::new() }
    }

    fn bucket(&self, p: ProjPoint) -> i64 {
        (p.theta() / self.width).floor() as i64
    }

    fn contains(&self, tag: usize, p: ProjPoint) -> bool {
        let b = self.bucket(p);
        let last = (PI / self.width).floor() as i64;
        [b - 1, b, b + 1, 0, last].iter().any(|&key| {
            self.map.get(&(tag, key)).is_some_and(|v| v.iter().any(|q| proj_dist(*q, p) <= self.tol))
        })
    }

    fn insert(&mut self, tag: usize, p: ProjPoint) {
        let b = self.bucket(p);
        self.map.entry((tag, b)).or_default().push(p);
    }
}

/// Circular distance from `x` to the nearest entry of the sorted angles.
fn nearest(sorted: &[(f64, usize)], x: f64) -> Option<(f64, usize)> {
    if sorted.is_empty() {
        return None;
    }
    let i = sorted.partition_point(|e| e.0 < x);
    let n = sorted.len();
    [i % n, (i + n - 1) % n]
        .iter()
        .map(|&j| (proj_dist(ProjPoint::new(sorted[j].0), ProjPoint::new(x)), sorted[j].1))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Forward tree of the ranges (tagged by last letter) or backward tree of
/// the kernels (tagged by the next letter).
fn grow_tree(c: &Cocycle, depth: usize, forward: bool, tol: f64) -> (Vec<(usize, ProjPoint, Word)>, bool) {
    let inv = c.invertible_symbols();
    let inverses: Vec<Option<Mat2>> = (0..c.k()).map(|i| c.matrix(i).inverse()).collect();
    let mut all: Vec<(usize, ProjPoint, Word)> = c
        .singular_symbols()
        .into_iter()
        .map(|s| {
            let p = if forward { c.range(s) } else { c.kernel(s) }.expect("singular");
            (s, p, Word(vec![s]))
        })
        .collect();
    let mut seen = PointIndex::new(tol);
    for (t, p, _) in &all {
        seen.insert(if c.is_bernoulli() { 0 } else { *t }, *p);
    }
    let mut frontier = all.clone();
    let mut truncated = false;
    for _ in 0..depth {
        let mut next: Vec<(usize, ProjPoint, Word)> = Vec::new();
        for (tag, p, w) in &frontier {
            for &i in &inv {
                let ok = if forward { c.allowed(i, *tag) } else { c.allowed(*tag, i) };
                if !ok {
                    continue;
                }
                let m = if forward { *c.matrix(i) } else { inverses[i].expect("invertible") };
                let q = proj_act(&m, *p).expect("invertible");
                let mut word = w.0.clone();
                if forward {
                    word.push(i);
                } else {
                    word.insert(0, i);
                }
                next.push((i, q, Word(word)));
            }
        }
        let tag_of = |t: usize| if c.is_bernoulli() { 0 } else { t };
        next.sort_by(|a, b| tag_of(a.0).cmp(&tag_of(b.0)).then(a.1.theta().total_cmp(&b.1.theta())));
        next.dedup_by(|b, a| tag_of(a.0) == tag_of(b.0) && proj_dist(a.1, b.1) <= tol);
        next.retain(|(t, p, _)| !seen.contains(tag_of(*t), *p));
        for (t, p, _) in &next {
            seen.insert(tag_of(*t), *p);
        }
        if next.is_empty() {
            break;
        }
        all.extend(next.iter().cloned());
        frontier = next;
        if all.len() > TREE_CAP {
            truncated = true;
            break;
        }
    }
    (all, truncated)
}

#[derive(Clone, Debug, Serialize)]
pub struct WReport {
    pub wplus: OrbitTree,
    pub wminus: OrbitTree,
    /// `min d(𝒲⁺, 𝒲⁻)` over pairs that can be joined admissibly.
    pub min_dist: f64,
    pub closest: Option<(Word, Word)>,
    /// `d(𝒲⁺, 𝒦)`.
    pub kernel_gap: f64,
    /// `d(ℛ, 𝒲⁻)`.
    pub range_gap: f64,
    pub truncated: bool,
}

/// Depth-limited 𝒲⁺ (forward orbits of ranges) and 𝒲⁻ (backward orbits of
/// kernels) under invertible branches.
pub fn wplus_wminus(c: &Cocycle, depth: usize) -> Result<WReport> {
    if !c.has_singular() {
        return Err(Error::NoSingularSymbol);
    }
    let tol = 1e-12;
    let (plus, t1) = grow_tree(c, depth, true, tol);
    let (minus, t2) = grow_tree(c, depth, false, tol);
    // A forward point with last letter m meets a backward point whose next
    // letter t when t may follow m.
    let mut by_tag: Vec<Vec<(f64, usize)>> = vec![Vec::new(); c.k()];
    for (idx, (t, q, _)) in minus.iter().enumerate() {
        by_tag[*t].push((q.theta(), idx));
    }
    by_tag.iter_mut().for_each(|v| v.sort_by(|a, b| a.0.total_cmp(&b.0)));
    let mut min_dist = f64::INFINITY;
    let mut closest = None;
    for (m, p, wp) in &plus {
        for t in 0..c.k() {
            if !c.allowed(t, *m) {
                continue;
            }
            if let Some((d, idx)) = nearest(&by_tag[t], p.theta()) {
                if d < min_dist {
                    min_dist = d;
                    closest = Some((wp.clone(), minus[idx].2.clone()));
                }
            }
        }
    }
    let mut kernel_gap = f64::INFINITY;
    for (m, p, _) in &plus {
        for s in c.singular_symbols() {
            if c.allowed(s, *m) {
                kernel_gap = kernel_gap.min(proj_dist(*p, c.kernel(s).expect("singular")));
            }
        }
    }
    let mut range_gap = f64::INFINITY;
    for s in c.singular_symbols() {
        for (t, q, _) in &minus {
            if c.allowed(*t, s) {
                range_gap = range_gap.min(proj_dist(c.range(s).expect("singular"), *q));
            }
        }
    }
    let tree = |v: Vec<(usize, ProjPoint, Word)>| OrbitTree {
        points: v.into_iter().map(|(_, p, w)| (p, w)).collect(),
        depth,
        merge_tol: tol,
    };
    Ok(WReport {
        wplus: tree(plus),
        wminus: tree(minus),
        min_dist,
        closest,
        kernel_gap,
        range_gap,
        truncated: t1 || t2,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WordNormRow {
    pub n: usize,
    /// Minimum of `σ₁/σ₂` over admissible words of length `n`: `+∞` for
    /// nonzero rank-one products, `0` for zero products.
    #[serde(serialize_with = "serialize_real")]
    pub min_ratio: f64,
    pub argmin: Word,
    /// Minimum over words made of invertible letters only.
    #[serde(serialize_with = "serialize_real")]
    pub min_ratio_invertible: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WordNormReport {
    pub rows: Vec<WordNormRow>,
    /// `exp` of the slope of `log min_ratio` against `n`.
    pub lambda: Option<f64>,
    /// Largest `n` actually tabulated.
    pub n_reached: usize,
}

/// Table of `min σ₁/σ₂` over admissible words of each length `n ≤ n_max`,
/// stopping before the number of words exceeds `10⁷`.
pub fn word_norm_criterion(c: &Cocycle, n_max: usize) -> WordNormReport {
    let k = c.k();
    // (last letter, normalized product, log|det| − 2 log scale, has singular, word)
    struct Entry {
        last: usize,
        prod: Mat2,
        log_det: f64,
        log_scale: f64,
        rank_one: bool,
        zero: bool,
        word: Vec<usize>,
    }
    let mut layer: Vec<Entry> = Vec::new();
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let mut next = Vec::new();
        if n == 1 {
            for i in 0..k {
                if c.initial(i) > 0.0 {
                    let m = *c.matrix(i);
                    let s = m.norm();
                    next.push(Entry {
                        last: i,
                        prod: m.scale(1.0 / s),
                        log_det: if c.is_singular(i) { f64::NEG_INFINITY } else { m.det().abs().ln() },
                        log_scale: s.ln(),
                        rank_one: c.is_singular(i),
                        zero: false,
                        word: vec![i],
                    });
                }
            }
        } else {
            if layer.len() * k > WORD_CAP {
                break;
            }
            for e in &layer {
                for i in 0..k {
                    if !c.allowed(i, e.last) {
                        continue;
                    }
                    let m = c.matrix(i);
                    let q = *m * e.prod;
                    let s = q.norm();
                    let zero = e.zero || s <= NULL_SIGMA * m.norm();
                    let mut word = e.word.clone();
                    word.push(i);
                    next.push(Entry {
                        last: i,
                        prod: if zero { Mat2::ZERO } else { q.scale(1.0 / s) },
                        log_det: e.log_det + if c.is_singular(i) { f64::NEG_INFINITY } else { m.det().abs().ln() },
                        log_scale: e.log_scale + if zero { 0.0 } else { s.ln() },
                        rank_one: e.rank_one || c.is_singular(i),
                        zero,
                        word,
                    });
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            break;
        }
        let mut best = (f64::INFINITY, Vec::new());
        let mut best_inv = f64::INFINITY;
        for e in &layer {
            let ratio = if e.zero {
                0.0
            } else if e.rank_one {
                f64::INFINITY
            } else {
                // σ₁²/|det| of the unnormalized product.
                let s1 = svd2(&e.prod).sigma1;
                (2.0 * (s1.ln() + e.log_scale) - e.log_det).exp()
            };
            if ratio < best.0 || best.1.is_empty() {
                best = (ratio, e.word.clone());
            }
            if !e.rank_one {
                best_inv = best_inv.min(ratio);
            }
        }
        rows.push(WordNormRow { n, min_ratio: best.0, argmin: Word(best.1), min_ratio_invertible: best_inv });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.min_ratio.is_finite() && r.min_ratio > 0.0)
        .map(|r| (r.n as f64, r.min_ratio.ln()))
        .collect();
    let lambda = linear_fit(&pts).map(|(slope, _)| slope.exp());
    let n_reached = rows.last().map_or(0, |r| r.n);
    WordNormReport { rows, lambda, n_reached }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn irrat_rot_null_word() {
        let r = null_word_search(&catalog::irrat_rot(PI / 2.0), 2, 0.0).unwrap();
        let h = r.exact().unwrap();
        assert_eq!(h.word.one_based(), vec![1, 2, 1]);
        assert!(h.sigma1 <= 1e-12);
        assert!(h.word.product(&catalog::irrat_rot(PI / 2.0)).max_abs() <= 1e-12);
    }

    #[test]
    fn aligned_rank_one_pair() {
        let c = Cocycle::bernoulli(vec![Mat2::diag(1.0, 0.0), Mat2::new(0.0, 0.0, 1.0, 0.0)], vec![0.5, 0.5]).unwrap();
        // the range of the second letter is the kernel of the first
        let r = null_word_search(&c, 0, 0.0).unwrap();
        assert_eq!(r.exact().unwrap().word.one_based(), vec![2, 1]);
    }

    #[test]
    fn diagonal_plus_rank_one_has_no_null_word() {
        let r = null_word_search(&catalog::diag_plus_rank_one(), 12, 0.0).unwrap();
        assert!(r.hits.is_empty());
        assert!((r.min_dist - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn w_sets_of_explo() {
        let r = wplus_wminus(&catalog::explo1(), 12).unwrap();
        assert_eq!(r.wplus.points.len(), 1);
        assert_eq!(r.wminus.points.len(), 1);
        assert!((r.min_dist - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn w_sets_of_irrational_rotation_approach() {
        let c = catalog::irrat_rot(1.0);
        let d20 = wplus_wminus(&c, 20).unwrap().min_dist;
        let d50 = wplus_wminus(&c, 50).unwrap().min_dist;
        assert!(d50 < 0.05 && d50 <= d20);
    }

    #[test]
    fn w_sets_without_invertible_letters() {
        let r = wplus_wminus(&catalog::rank_one_singleton(), 5).unwrap();
        assert_eq!(r.wplus.points.len(), 1);
        assert_eq!(r.wminus.points.len(), 1);
        assert!((r.min_dist - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn word_norms() {
        let r = word_norm_criterion(&catalog::hyperbolic_singleton(), 6);
        for row in &r.rows {
            assert!((row.min_ratio / 4f64.powi(row.n as i32) - 1.0).abs() < 1e-10);
        }
        assert!((r.lambda.unwrap() - 4.0).abs() < 1e-9);
        let r = word_norm_criterion(&catalog::rotation(0.4), 5);
        assert!(r.rows.iter().all(|row| (row.min_ratio - 1.0).abs() < 1e-9));
        let r = word_norm_criterion(&catalog::irrat_rot(PI / 2.0), 3);
        assert_eq!(r.rows[2].min_ratio, 0.0);
    }
}
