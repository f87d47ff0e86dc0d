//! Certificates of projective uniform hyperbolicity.

use serde::Serialize;

use super::arcset::ArcSet;
use super::cone::{search_system, verify_system, LetterSystem, MultiCone, SearchFailure, SearchParams};
use super::orbits::{null_word_search, wplus_wminus, word_norm_criterion, WordNormReport};
use crate::error::{Error, Result};
use crate::linalg::{proj_dist, Mat2, ProjPoint};
use crate::numeric::serialize_opt_real;
use crate::shift::{Cocycle, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PUH")]
    Puh,
    #[serde(rename = "NotPUH")]
    NotPuh,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Puh => "PUH",
            Verdict::NotPuh => "NotPUH",
            Verdict::Unknown => "Unknown",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    MultiCone { cone: MultiCone },
    NullWord { word: Word, sigma1: f64 },
    /// A periodic invertible word with complex eigenvalues.
    EllipticPeriodic { word: Word, trace: f64, det: f64 },
    NearIntersection { plus_word: Word, minus_word: Word, distance: f64 },
    /// Kernel-to-range distance of an all-rank-one cocycle that is neither
    /// clearly positive nor zero.
    RankOneGap { distance: f64, word: Word },
    HypothesisFailure { tags: Vec<String> },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Margins {
    #[serde(serialize_with = "serialize_opt_real")]
    pub cone_margin: Option<f64>,
    #[serde(serialize_with = "serialize_opt_real")]
    pub kernel_clearance: Option<f64>,
    #[serde(serialize_with = "serialize_opt_real")]
    pub rank_one_gap: Option<f64>,
    #[serde(serialize_with = "serialize_opt_real")]
    pub w_min_dist: Option<f64>,
    #[serde(serialize_with = "serialize_opt_real")]
    pub w_kernel_gap: Option<f64>,
    #[serde(serialize_with = "serialize_opt_real")]
    pub w_range_gap: Option<f64>,
    #[serde(serialize_with = "serialize_opt_real")]
    pub null_min_dist: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub search: Option<SearchFailure>,
    pub invertible_part_puh: Option<bool>,
    pub diagonalizable: Option<bool>,
    pub tags: Vec<String>,
    pub word_norm: Option<WordNormReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub witness: Witness,
    pub margins: Margins,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CertifyOptions {
    /// Longest invertible branch in the null-word search.
    pub depth: usize,
    pub search: SearchParams,
    /// Kernel-to-range distances above this certify all-rank-one cocycles.
    pub gap_tol: f64,
    pub word_norm_n: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { depth: 12, search: SearchParams::default(), gap_tol: 1e-4, word_norm_n: 10 }
    }
}

/// All letters rank one: PUH iff kernels stay away from the ranges that can
/// precede them. The cone is the union of balls of radius `2d/3` around the
/// ranges.
pub fn rank1_puh(c: &Cocycle, gap_tol: f64) -> Result<Certificate> {
    if (0..c.k()).any(|i| !c.is_singular(i)) {
        return Err(Error::NotAllRankOne);
    }
    let mut d = f64::INFINITY;
    let mut pair = (0, 0);
    for i in 0..c.k() {
        for j in 0..c.k() {
            if c.allowed(i, j) {
                let dist = proj_dist(c.kernel(i).expect("singular"), c.range(j).expect("singular"));
                if dist < d {
                    d = dist;
                    pair = (j, i);
                }
            }
        }
    }
    let word = Word(vec![pair.0, pair.1]);
    let mut margins = Margins { rank_one_gap: Some(d), ..Default::default() };
    if d > gap_tol {
        let sys = LetterSystem::from_cocycle(c);
        let ball = |j: usize| ArcSet::ball(c.range(j).expect("singular"), 2.0 * d / 3.0);
        let mut cone = if c.is_bernoulli() {
            MultiCone::global((0..c.k()).fold(ArcSet::empty(), |acc, j| acc.union(&ball(j))))
        } else {
            MultiCone::per_symbol((0..c.k()).map(ball).collect())
        };
        let r = verify_system(&sys, &cone);
        if r.verified {
            cone.margin = r.margin;
            margins.cone_margin = Some(r.margin);
            margins.kernel_clearance = Some(r.kernel_clearance);
            return Ok(Certificate { verdict: Verdict::Puh, witness: Witness::MultiCone { cone }, margins, diagnostics: Diagnostics::default() });
        }
    }
    if d <= 1e-12 {
        let sigma1 = word.product(c).norm();
        return Ok(Certificate { verdict: Verdict::NotPuh, witness: Witness::NullWord { word, sigma1 }, margins, diagnostics: Diagnostics::default() });
    }
    Ok(Certificate { verdict: Verdict::Unknown, witness: Witness::RankOneGap { distance: d, word }, margins, diagnostics: Diagnostics::default() })
}

/// Common real eigenbasis of all letters, if any. Scalar letters fit any
/// basis; the basis is read off the first non-scalar letter.
pub fn common_eigenbasis(mats: &[Mat2]) -> Option<(ProjPoint, ProjPoint)> {
    let tol = 1e-10;
    let is_scalar = |m: &Mat2| m.b.abs() <= tol * m.norm() && m.c.abs() <= tol * m.norm() && (m.a - m.d).abs() <= tol * m.norm();
    let Some(m) = mats.iter().find(|m| !is_scalar(m)) else {
        return Some((ProjPoint::new(0.0), ProjPoint::new(std::f64::consts::FRAC_PI_2)));
    };
    let tr = m.trace();
    let disc = tr * tr / 4.0 - m.det();
    if disc <= tol * m.norm() * m.norm() {
        return None;
    }
    let root = disc.sqrt();
    let eigvec = |lambda: f64| -> ProjPoint {
        let r1 = [m.b, lambda - m.a];
        let r2 = [lambda - m.d, m.c];
        let v = if r1[0].hypot(r1[1]) >= r2[0].hypot(r2[1]) { r1 } else { r2 };
        ProjPoint::from_vector(v).expect("non-scalar letter")
    };
    let e1 = eigvec(tr / 2.0 + root);
    let e2 = eigvec(tr / 2.0 - root);
    let basis = Mat2::new(e1.unit()[0], e2.unit()[0], e1.unit()[1], e2.unit()[1]);
    let inv = basis.inverse()?;
    for x in mats {
        let d = inv * *x * basis;
        if d.b.abs() > tol * x.norm().max(1.0) || d.c.abs() > tol * x.norm().max(1.0) {
            return None;
        }
    }
    Some((e1, e2))
}

/// Periodic invertible words of length at most `max_len` (cyclically
/// admissible) whose product has complex eigenvalues.
fn elliptic_periodic_word(c: &Cocycle, max_len: usize) -> Option<(Word, f64, f64)> {
    let inv = c.invertible_symbols();
    let mut stack: Vec<Vec<usize>> = inv.iter().map(|&i| vec![i]).collect();
    let mut found = None;
    while let Some(w) = stack.pop() {
        let first = w[0];
        let last = *w.last().expect("nonempty");
        if c.allowed(first, last) {
            let p = Word(w.clone()).product(c);
            let (tr, det) = (p.trace(), p.det());
            let scale = det.abs().sqrt();
            if det > 0.0 && tr.abs() < 2.0 * scale * (1.0 - 1e-9) {
                let cand = (Word(w.clone()), tr, det);
                match &found {
                    Some((fw, _, _)) if Word::len(fw) <= w.len() => {}
                    _ => found = Some(cand),
                }
            }
        }
        if w.len() < max_len {
            for &i in &inv {
                if c.allowed(i, last) {
                    let mut n = w.clone();
                    n.push(i);
                    stack.push(n);
                }
            }
        }
    }
    found
}

/// Decision tree: rank-one shortcut; exact null word; elliptic periodic
/// invertible word; multi-cone search; otherwise Unknown with diagnostics.
pub fn certify(c: &Cocycle, opts: &CertifyOptions) -> Certificate {
    if (0..c.k()).all(|i| c.is_singular(i)) {
        return rank1_puh(c, opts.gap_tol).expect("all letters rank one");
    }
    let mut margins = Margins::default();
    let mut diagnostics = Diagnostics::default();
    if c.has_singular() {
        match null_word_search(c, opts.depth, 0.0) {
            Ok(ns) => {
                margins.null_min_dist = Some(ns.min_dist);
                if let Some(h) = ns.exact() {
                    return Certificate {
                        verdict: Verdict::NotPuh,
                        witness: Witness::NullWord { word: h.word.clone(), sigma1: h.sigma1 },
                        margins,
                        diagnostics,
                    };
                }
            }
            Err(_) => diagnostics.tags.push("null-search-capped".into()),
        }
    }
    if let Some((word, trace, det)) = elliptic_periodic_word(c, 4) {
        return Certificate { verdict: Verdict::NotPuh, witness: Witness::EllipticPeriodic { word, trace, det }, margins, diagnostics };
    }
    let sys = LetterSystem::from_cocycle(c);
    match search_system(&sys, &opts.search) {
        Ok(cone) => {
            let r = verify_system(&sys, &cone);
            margins.cone_margin = Some(r.margin);
            margins.kernel_clearance = Some(r.kernel_clearance);
            return Certificate { verdict: Verdict::Puh, witness: Witness::MultiCone { cone }, margins, diagnostics };
        }
        Err(f) => {
            diagnostics.search = Some(f);
            diagnostics.tags.push(match f {
                SearchFailure::FullCircle => "no-cone-full-circle".into(),
                SearchFailure::MaxIter => "no-cone-max-iter".into(),
            });
        }
    }
    let inv_sys = LetterSystem::invertible_part(c);
    if c.has_singular() && !inv_sys.is_empty() {
        let inv_puh = search_system(&inv_sys, &opts.search).is_ok();
        diagnostics.invertible_part_puh = Some(inv_puh);
        if !inv_puh {
            diagnostics.tags.push("invertible-part-not-puh".into());
        }
    }
    let diag = common_eigenbasis(c.matrices()).is_some();
    diagnostics.diagonalizable = Some(diag);
    if diag {
        diagnostics.tags.push("diagonalizable".into());
    }
    let mut witness = Witness::HypothesisFailure { tags: diagnostics.tags.clone() };
    if c.has_singular() {
        if let Ok(w) = wplus_wminus(c, opts.depth) {
            margins.w_min_dist = Some(w.min_dist);
            margins.w_kernel_gap = Some(w.kernel_gap);
            margins.w_range_gap = Some(w.range_gap);
            if w.min_dist < 1e-6 {
                if let Some((p, m)) = w.closest {
                    witness = Witness::NearIntersection { plus_word: p, minus_word: m, distance: w.min_dist };
                }
            }
        }
    }
    diagnostics.word_norm = Some(word_norm_criterion(c, opts.word_norm_n));
    Certificate { verdict: Verdict::Unknown, witness, margins, diagnostics }
}
