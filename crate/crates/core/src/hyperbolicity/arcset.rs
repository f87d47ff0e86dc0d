//! Finite unions of open arcs on the projective circle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{ccw_offset, proj_act, proj_dist, wrap_angle, Arc, Mat2, ProjPoint};

/// Disjoint open arcs sorted by start angle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcSet {
    arcs: Vec<Arc>,
}

impl ArcSet {
    pub fn empty() -> Self {
        ArcSet { arcs: Vec::new() }
    }

    pub fn full() -> Self {
        ArcSet { arcs: vec![Arc::full()] }
    }

    /// Union of arbitrary arcs. Overlapping arcs merge; arcs that only
    /// touch stay separate.
    pub fn from_arcs<I: IntoIterator<Item = Arc>>(arcs: I) -> Self {
        let mut iv: Vec<(f64, f64)> = Vec::new();
        for a in arcs {
            if a.is_full() {
                return ArcSet::full();
            }
            if a.length <= 0.0 {
                continue;
            }
            let s = a.start;
            let e = s + a.length;
            if e > PI {
                iv.push((s, PI));
                iv.push((0.0, e - PI));
            } else {
                iv.push((s, e));
            }
        }
        iv.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
        for (s, e) in iv {
            match merged.last_mut() {
                Some(last) if s < last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        if merged.len() == 1 && merged[0].0 <= 0.0 && merged[0].1 >= PI {
            return ArcSet::full();
        }
        if merged.len() >= 2 && merged[merged.len() - 1].1 >= PI && merged[0].0 <= 0.0 {
            let (s, _) = merged.pop().expect("nonempty");
            let e = PI + merged[0].1;
            merged[0] = (s, e);
            merged.rotate_left(1);
            if e - s >= PI {
                return ArcSet::full();
            }
        }
        let mut arcs: Vec<Arc> = merged.into_iter().map(|(s, e)| Arc::new(s, e - s)).collect();
        arcs.sort_by(|a, b| a.start.total_cmp(&b.start));
        ArcSet { arcs }
    }

    pub fn ball(p: ProjPoint, r: f64) -> Self {
        ArcSet::from_arcs([Arc::ball(p, r)])
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.arcs.iter().any(|a| a.is_full())
    }

    pub fn total_length(&self) -> f64 {
        self.arcs.iter().map(|a| a.length).sum()
    }

    pub fn union(&self, other: &ArcSet) -> ArcSet {
        ArcSet::from_arcs(self.arcs.iter().chain(&other.arcs).copied())
    }

    /// Grow every arc by `eps` on both sides.
    pub fn fatten(&self, eps: f64) -> ArcSet {
        ArcSet::from_arcs(self.arcs.iter().map(|a| Arc::new(a.start - eps, a.length + 2.0 * eps)))
    }

    pub fn contains(&self, p: ProjPoint) -> bool {
        self.arcs.iter().any(|a| a.contains(p))
    }

    /// Distance from `p` to the complement; zero outside.
    pub fn depth(&self, p: ProjPoint) -> f64 {
        self.arcs.iter().map(|a| a.depth(p)).fold(0.0, f64::max)
    }

    /// Distance from `p` to the closure.
    pub fn dist_to_closure(&self, p: ProjPoint) -> f64 {
        self.arcs.iter().map(|a| a.dist_to_closure(p)).fold(f64::INFINITY, f64::min)
    }

    /// Gap by which the closed arc `inner` sits inside one open arc of the
    /// set; nonpositive when it does not.
    pub fn containment_gap(&self, inner: &Arc) -> f64 {
        if inner.is_full() {
            return if self.is_full() { f64::INFINITY } else { -1.0 };
        }
        let mut best = f64::NEG_INFINITY;
        for a in &self.arcs {
            if a.is_full() {
                return f64::INFINITY;
            }
            let off = wrap_angle(inner.start - a.start);
            let gap = if off < a.length { off.min(a.length - off - inner.length) } else { -proj_dist(inner.start_point(), a.start_point()) };
            best = best.max(gap);
        }
        if best == f64::NEG_INFINITY {
            -1.0
        } else {
            best
        }
    }

    /// Open arcs of the complement of the closure.
    pub fn complement(&self) -> ArcSet {
        if self.arcs.is_empty() {
            return ArcSet::full();
        }
        if self.is_full() {
            return ArcSet::empty();
        }
        let n = self.arcs.len();
        let gaps = (0..n).map(|i| {
            let a = self.arcs[i];
            let b = self.arcs[(i + 1) % n];
            let len = if n == 1 { PI - a.length } else { ccw_offset(a.end_point(), b.start_point()) };
            Arc::new(a.end(), len)
        });
        ArcSet::from_arcs(gaps.collect::<Vec<_>>())
    }

    /// A point well inside the set: the midpoint of its longest arc.
    pub fn reference_point(&self) -> Option<ProjPoint> {
        self.arcs.iter().max_by(|a, b| a.length.total_cmp(&b.length)).map(|a| a.midpoint())
    }
}

/// Image of a closed arc under a letter. Invertible letters map endpoints
/// monotonically, reversing orientation when `det < 0`; singular letters
/// collapse everything to their range.
pub fn image_arc(m: &Mat2, singular: bool, arc: &Arc) -> Arc {
    if singular {
        let r = proj_act(m, arc.start_point()).expect("nonzero letter");
        return Arc { start: r.theta(), length: 0.0 };
    }
    if arc.is_full() {
        return Arc::full();
    }
    let fa = proj_act(m, arc.start_point()).expect("invertible");
    if arc.length == 0.0 {
        return Arc { start: fa.theta(), length: 0.0 };
    }
    let fb = proj_act(m, arc.end_point()).expect("invertible");
    if m.det() > 0.0 {
        Arc::new(fa.theta(), ccw_offset(fa, fb))
    } else {
        Arc::new(fb.theta(), ccw_offset(fb, fa))
    }
}
