//! Multi-cones: verification, the fattened-orbit search, shrinking under
//! the invertible letters and the sets `K_inv^u`, `K_inv^s`.

use std::f64::consts::PI;

use serde::Serialize;

use super::arcset::{image_arc, ArcSet};
use super::orbits::OrbitTree;
use crate::error::{Error, Result};
use crate::linalg::{desingularize, proj_act, proj_dist, range_kernel, svd2, Mat2, ProjPoint};
use crate::shift::{Cocycle, Word};

/// Letters with their admissibility pattern, detached from the shift so
/// that sub-alphabets and inverses can be formed.
#[derive(Clone, Debug)]
pub struct LetterSystem {
    pub mats: Vec<Mat2>,
    pub singular: Vec<bool>,
    /// `allowed[i][j]`: letter `i` may follow letter `j`.
    pub allowed: Vec<Vec<bool>>,
    pub bernoulli: bool,
    /// Symbols of the original cocycle.
    pub symbols: Vec<usize>,
}

impl LetterSystem {
    pub fn from_cocycle(c: &Cocycle) -> Self {
        Self::restricted(c, (0..c.k()).collect())
    }

    pub fn invertible_part(c: &Cocycle) -> Self {
        Self::restricted(c, c.invertible_symbols())
    }

    fn restricted(c: &Cocycle, symbols: Vec<usize>) -> Self {
        LetterSystem {
            mats: symbols.iter().map(|&s| *c.matrix(s)).collect(),
            singular: symbols.iter().map(|&s| c.is_singular(s)).collect(),
            allowed: symbols.iter().map(|&i| symbols.iter().map(|&j| c.allowed(i, j)).collect()).collect(),
            bernoulli: c.is_bernoulli(),
            symbols,
        }
    }

    /// Every singular letter replaced by its desingularization at `mu`.
    pub fn desingularized(c: &Cocycle, mu: f64) -> Result<Self> {
        let mut s = Self::from_cocycle(c);
        for m in s.mats.iter_mut() {
            *m = desingularize(m, mu)?;
        }
        s.singular.iter_mut().for_each(|x| *x = false);
        Ok(s)
    }

    /// Inverse letters with time reversed.
    pub fn inverse(&self) -> Result<Self> {
        let k = self.len();
        let mut mats = Vec::with_capacity(k);
        for (i, m) in self.mats.iter().enumerate() {
            mats.push(m.inverse().ok_or(Error::SingularComponent(self.symbols[i]))?);
        }
        Ok(LetterSystem {
            mats,
            singular: vec![false; k],
            allowed: (0..k).map(|i| (0..k).map(|j| self.allowed[j][i]).collect()).collect(),
            bernoulli: self.bernoulli,
            symbols: self.symbols.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn n_sets(&self) -> usize {
        if self.bernoulli {
            1
        } else {
            self.len()
        }
    }

    /// Cone component carrying directions whose last letter is `i`.
    pub fn set_index(&self, i: usize) -> usize {
        if self.bernoulli {
            0
        } else {
            i
        }
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.len();
        (0..k).flat_map(move |i| (0..k).map(move |j| (i, j))).filter(|&(i, j)| self.allowed[i][j])
    }

    fn kernel(&self, i: usize) -> Option<ProjPoint> {
        if self.singular[i] {
            range_kernel(&self.mats[i]).ok().map(|(_, k)| k)
        } else {
            None
        }
    }

    fn range(&self, i: usize) -> Option<ProjPoint> {
        if self.singular[i] {
            range_kernel(&self.mats[i]).ok().map(|(r, _)| r)
        } else {
            None
        }
    }
}

/// One arc union for Bernoulli shifts, one per symbol for Markov shifts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiCone {
    pub sets: Vec<ArcSet>,
    pub per_symbol: bool,
    /// Smallest containment gap of the images, once verified.
    pub margin: f64,
}

impl MultiCone {
    pub fn global(set: ArcSet) -> Self {
        MultiCone { sets: vec![set], per_symbol: false, margin: 0.0 }
    }

    pub fn per_symbol(sets: Vec<ArcSet>) -> Self {
        MultiCone { sets, per_symbol: true, margin: 0.0 }
    }

    fn well_formed(&self, sys: &LetterSystem) -> bool {
        self.sets.len() == sys.n_sets() && self.sets.iter().all(|s| !s.is_empty() && s.total_length() < PI)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub verified: bool,
    pub margin: f64,
    /// Distance from the closures to the kernels of singular letters that
    /// may act on them.
    pub kernel_clearance: f64,
}

/// Checks `Â_i M_j ⋐ M_i` for every admissible pair, and that no kernel
/// meets the closure of a component it can act on.
pub fn verify_system(sys: &LetterSystem, m: &MultiCone) -> VerifyReport {
    if !m.well_formed(sys) {
        return VerifyReport { verified: false, margin: f64::NEG_INFINITY, kernel_clearance: f64::NEG_INFINITY };
    }
    let mut margin = f64::INFINITY;
    let mut clearance = f64::INFINITY;
    for (i, j) in sys.pairs() {
        let src = &m.sets[sys.set_index(j)];
        let dst = &m.sets[sys.set_index(i)];
        if let Some(k) = sys.kernel(i) {
            clearance = clearance.min(src.dist_to_closure(k));
        }
        for arc in src.arcs() {
            margin = margin.min(dst.containment_gap(&image_arc(&sys.mats[i], sys.singular[i], arc)));
        }
    }
    VerifyReport { verified: margin > 0.0 && clearance > 0.0, margin, kernel_clearance: clearance }
}

pub fn multicone_verify(c: &Cocycle, m: &MultiCone) -> (bool, f64) {
    let r = verify_system(&LetterSystem::from_cocycle(c), m);
    (r.verified, r.margin)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchParams {
    pub eps: f64,
    pub max_iter: usize,
    /// Length of the invertible words whose top directions seed the search.
    pub seed_depth: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams { eps: 1e-3, max_iter: 500, seed_depth: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchFailure {
    FullCircle,
    MaxIter,
}

/// Top singular directions of the admissible invertible words of length
/// `depth`, at most a few thousand of them, tagged by their last letter.
fn deep_directions(sys: &LetterSystem, depth: usize) -> Vec<(usize, ProjPoint)> {
    let inv: Vec<usize> = (0..sys.len()).filter(|&i| !sys.singular[i]).collect();
    if inv.is_empty() {
        return Vec::new();
    }
    let mut depth = depth;
    while depth > 1 && (inv.len() as f64).powi(depth as i32) > 4096.0 {
        depth -= 1;
    }
    let mut layer: Vec<(usize, Mat2)> = inv.iter().map(|&i| (i, sys.mats[i].scale(1.0 / sys.mats[i].norm()))).collect();
    for _ in 1..depth {
        let mut next = Vec::with_capacity(layer.len() * inv.len());
        for &(j, p) in &layer {
            for &i in &inv {
                if sys.allowed[i][j] {
                    let q = sys.mats[i] * p;
                    next.push((i, q.scale(1.0 / q.norm())));
                }
            }
        }
        layer = next;
    }
    layer.into_iter().map(|(i, p)| (i, svd2(&p).left_top)).collect()
}

/// Fattened-orbit search: `M_{k+1} = fatten(M_k ∪ ⋃_i Â_i M_k, ε)` from
/// ε-balls around the ranges and the top directions of deep invertible
/// words, until the cone verifies with margin `ε/2`.
pub fn search_system(sys: &LetterSystem, params: &SearchParams) -> std::result::Result<MultiCone, SearchFailure> {
    let eps = params.eps;
    let n = sys.n_sets();
    let mut seeds: Vec<Vec<crate::linalg::Arc>> = vec![Vec::new(); n];
    for i in 0..sys.len() {
        if let Some(r) = sys.range(i) {
            seeds[sys.set_index(i)].push(crate::linalg::Arc::ball(r, eps));
        }
    }
    for (i, p) in deep_directions(sys, params.seed_depth) {
        seeds[sys.set_index(i)].push(crate::linalg::Arc::ball(p, eps));
    }
    let mut sets: Vec<ArcSet> = seeds.into_iter().map(ArcSet::from_arcs).collect();
    for _ in 0..params.max_iter {
        if sets.iter().any(|s| s.is_full() || s.total_length() >= PI - eps) {
            return Err(SearchFailure::FullCircle);
        }
        let cone = MultiCone { sets: sets.clone(), per_symbol: !sys.bernoulli, margin: 0.0 };
        if sets.iter().all(|s| !s.is_empty()) {
            let r = verify_system(sys, &cone);
            if r.kernel_clearance > 0.0 && r.margin >= eps / 2.0 {
                return Ok(MultiCone { margin: r.margin, ..cone });
            }
        }
        let mut grown: Vec<Vec<crate::linalg::Arc>> = sets.iter().map(|s| s.arcs().to_vec()).collect();
        for (i, j) in sys.pairs() {
            for arc in sets[sys.set_index(j)].arcs() {
                grown[sys.set_index(i)].push(image_arc(&sys.mats[i], sys.singular[i], arc));
            }
        }
        sets = grown
            .into_iter()
            .map(|arcs| {
                let pts = arcs.iter().filter(|a| a.length == 0.0).map(|a| crate::linalg::Arc::ball(a.start_point(), eps));
                let rest = arcs.iter().filter(|a| a.length > 0.0).copied();
                ArcSet::from_arcs(rest.chain(pts).collect::<Vec<_>>()).fatten(eps)
            })
            .collect();
    }
    Err(SearchFailure::MaxIter)
}

pub fn multicone_search(c: &Cocycle, params: &SearchParams) -> std::result::Result<MultiCone, SearchFailure> {
    search_system(&LetterSystem::from_cocycle(c), params)
}

fn require_verified(sys: &LetterSystem, m: &MultiCone) -> Result<()> {
    if sys.singular.iter().any(|&s| s) || sys.is_empty() || !verify_system(sys, m).verified {
        return Err(Error::NoCone);
    }
    Ok(())
}

/// `M_n = ⋃_{|ω|=n} Âⁿ(ω) M` for an invertible letter system.
pub fn cone_shrink(sys: &LetterSystem, m: &MultiCone, n: usize) -> Result<MultiCone> {
    require_verified(sys, m)?;
    let mut sets = m.sets.clone();
    for _ in 0..n {
        let mut next: Vec<Vec<crate::linalg::Arc>> = vec![Vec::new(); sys.n_sets()];
        for (i, j) in sys.pairs() {
            for arc in sets[sys.set_index(j)].arcs() {
                next[sys.set_index(i)].push(image_arc(&sys.mats[i], false, arc));
            }
        }
        sets = next.into_iter().map(ArcSet::from_arcs).collect();
    }
    let mut out = MultiCone { sets, per_symbol: m.per_symbol, margin: 0.0 };
    out.margin = verify_system(sys, &out).margin;
    Ok(out)
}

/// Smallest `n ≤ cap` with `v` outside the closure of every component of
/// `M_n`; `None` when `v` is never excluded (e.g. `v ∈ K_inv^u`).
pub fn exclusion_depth(sys: &LetterSystem, m: &MultiCone, v: ProjPoint, cap: usize) -> Result<Option<usize>> {
    require_verified(sys, m)?;
    for n in 0..=cap {
        let mn = cone_shrink(sys, m, n)?;
        if mn.sets.iter().all(|s| s.dist_to_closure(v) > 1e-12) {
            return Ok(Some(n));
        }
        if mn.sets.iter().map(|s| s.arcs().len()).sum::<usize>() > 100_000 {
            break;
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, Serialize)]
pub struct KinvSets {
    pub unstable: OrbitTree,
    pub stable: OrbitTree,
    /// Hausdorff distance between the last two depths of each cloud.
    pub unstable_change: f64,
    pub stable_change: f64,
}

/// Point clouds approximating `K_inv^u` (images of a reference point of
/// `M` under words of length `depth`) and `K_inv^s` (the same for the
/// inverses started in the complement of `M`).
pub fn kinv_sets(sys: &LetterSystem, m: &MultiCone, depth: usize) -> Result<KinvSets> {
    require_verified(sys, m)?;
    let inv = sys.inverse()?;
    let starts_u: Vec<(usize, ProjPoint)> = (0..sys.len())
        .filter_map(|i| m.sets[sys.set_index(i)].reference_point().map(|p| (i, p)))
        .collect();
    let starts_s: Vec<(usize, ProjPoint)> = (0..sys.len())
        .filter_map(|i| m.sets[sys.set_index(i)].complement().reference_point().map(|p| (i, p)))
        .collect();
    let (unstable, unstable_change) = image_cloud(sys, &starts_u, depth);
    let (stable, stable_change) = image_cloud(&inv, &starts_s, depth);
    Ok(KinvSets { unstable, stable, unstable_change, stable_change })
}

/// Images of the tagged start points under all admissible words of length
/// `depth`, merged at `1e-12`.
fn image_cloud(sys: &LetterSystem, starts: &[(usize, ProjPoint)], depth: usize) -> (OrbitTree, f64) {
    let dedup = |mut pts: Vec<(usize, ProjPoint, Vec<usize>)>| {
        if sys.bernoulli {
            pts.iter_mut().for_each(|p| p.0 = 0);
        }
        pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.theta().total_cmp(&b.1.theta())));
        pts.dedup_by(|b, a| a.0 == b.0 && proj_dist(a.1, b.1) <= 1e-12);
        pts
    };
    let mut layer: Vec<(usize, ProjPoint, Vec<usize>)> = dedup(starts.iter().map(|&(i, p)| (i, p, Vec::new())).collect());
    let mut prev = layer.clone();
    for _ in 0..depth {
        let mut next = Vec::new();
        for (j, p, w) in &layer {
            for i in 0..sys.len() {
                if sys.bernoulli || sys.allowed[i][*j] {
                    let mut word = w.clone();
                    word.push(sys.symbols[i]);
                    next.push((i, proj_act(&sys.mats[i], *p).expect("invertible"), word));
                }
            }
        }
        prev = std::mem::replace(&mut layer, dedup(next));
        if layer.len() > 1_000_000 {
            break;
        }
    }
    let a: Vec<ProjPoint> = layer.iter().map(|x| x.1).collect();
    let b: Vec<ProjPoint> = prev.iter().map(|x| x.1).collect();
    let change = hausdorff(&a, &b);
    let points = layer.into_iter().map(|(_, p, w)| (p, Word(w))).collect();
    (OrbitTree { points, depth, merge_tol: 1e-12 }, change)
}

fn hausdorff(a: &[ProjPoint], b: &[ProjPoint]) -> f64 {
    let one = |x: &[ProjPoint], y: &[ProjPoint]| {
        x.iter()
            .map(|p| y.iter().map(|q| proj_dist(*p, *q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.len() * b.len() > 4_000_000 {
        return f64::NAN;
    }
    one(a, b).max(one(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::linalg::Arc;

    #[test]
    fn diagonal_arc_verifies() {
        let c = catalog::hyperbolic_singleton();
        let m = MultiCone::global(ArcSet::ball(ProjPoint::new(0.0), 0.3));
        let (ok, margin) = multicone_verify(&c, &m);
        let expected = 0.3 - (0.3f64.tan() / 4.0).atan();
        assert!(ok && (margin - expected).abs() < 1e-12);
    }

    #[test]
    fn rotation_admits_no_cone() {
        let c = catalog::rotation(0.5);
        for w in [0.1, 0.5, 1.0] {
            assert!(!multicone_verify(&c, &MultiCone::global(ArcSet::ball(ProjPoint::new(0.2), w))).0);
        }
        assert_eq!(multicone_search(&c, &SearchParams::default()), Err(SearchFailure::FullCircle));
    }

    #[test]
    fn rank_one_with_diagonal_verifies() {
        let c = catalog::diag_plus_rank_one();
        let m = MultiCone::global(ArcSet::ball(ProjPoint::new(0.0), 0.3));
        assert!(multicone_verify(&c, &m).0);
    }

    #[test]
    fn search_outcomes() {
        let m = multicone_search(&catalog::hyperbolic_singleton(), &SearchParams::default()).unwrap();
        assert!(m.sets[0].contains(ProjPoint::new(0.0)));
        assert_eq!(multicone_search(&catalog::explo1(), &SearchParams::default()), Err(SearchFailure::FullCircle));
    }

    #[test]
    fn search_is_self_certifying() {
        let p = SearchParams::default();
        for c in [catalog::hyperbolic_singleton(), catalog::diag_plus_rank_one(), catalog::cantor(2.0, 0.3, 2.0, [0.05, 0.05, 0.9])] {
            let m = multicone_search(&c, &p).unwrap();
            let (ok, margin) = multicone_verify(&c, &m);
            assert!(ok && margin >= p.eps / 2.0);
        }
    }

    #[test]
    fn shrink_diagonal() {
        let sys = LetterSystem::from_cocycle(&catalog::hyperbolic_singleton());
        let m = MultiCone::global(ArcSet::ball(ProjPoint::new(0.0), 0.3));
        let m2 = cone_shrink(&sys, &m, 2).unwrap();
        let half = m2.sets[0].total_length() / 2.0;
        assert!((half - (0.3f64.tan() / 16.0).atan()).abs() < 1e-12);
        assert_eq!(cone_shrink(&sys, &m, 0).unwrap().sets, m.sets);
        assert_eq!(exclusion_depth(&sys, &m, ProjPoint::new(0.0), 20).unwrap(), None);
        assert_eq!(exclusion_depth(&sys, &m, ProjPoint::new(0.2), 20).unwrap(), Some(1));
    }

    #[test]
    fn kinv_of_diagonal() {
        let sys = LetterSystem::from_cocycle(&catalog::hyperbolic_singleton());
        let m = MultiCone::global(ArcSet::ball(ProjPoint::new(0.0), 0.3));
        let k = kinv_sets(&sys, &m, 60).unwrap();
        assert!(k.unstable.points.iter().all(|(p, _)| proj_dist(*p, ProjPoint::new(0.0)) < 1e-12));
        assert!(k.stable.points.iter().all(|(p, _)| proj_dist(*p, ProjPoint::new(PI / 2.0)) < 1e-12));
    }

    #[test]
    fn kinv_rejects_rotation() {
        let sys = LetterSystem::from_cocycle(&catalog::rotation(0.5));
        let m = MultiCone::global(ArcSet::from_arcs([Arc::new(0.0, 0.5)]));
        assert!(matches!(kinv_sets(&sys, &m, 3), Err(Error::NoCone)));
    }

    #[test]
    fn cantor_kinv_is_a_cantor_set() {
        let c = catalog::cantor(2.0, 0.3, 2.0, [0.05, 0.05, 0.9]);
        let sys = LetterSystem::invertible_part(&c);
        let m = search_system(&sys, &SearchParams::default()).unwrap();
        for depth in 1..=8 {
            let k = kinv_sets(&sys, &m, depth).unwrap();
            assert!(k.unstable.points.len() >= 1 << depth, "{depth}: {}", k.unstable.points.len());
        }
        let m3 = cone_shrink(&sys, &m, 3).unwrap();
        let a = cone_shrink(&sys, &m, 0).unwrap();
        let img_a: Vec<Arc> = a.sets[0].arcs().iter().map(|x| image_arc(&sys.mats[0], false, x)).collect();
        let img_b: Vec<Arc> = a.sets[0].arcs().iter().map(|x| image_arc(&sys.mats[1], false, x)).collect();
        let sa = ArcSet::from_arcs(img_a);
        let sb = ArcSet::from_arcs(img_b);
        assert!(sa.arcs().iter().all(|x| !sb.contains(x.midpoint())));
        assert!(m3.margin > 0.0);
    }
}
