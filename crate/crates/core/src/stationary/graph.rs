//! The atom graph: the orbit of the singular ranges under invertible
//! branches, with flows carrying the stationary weights.
//!
//! A node is a pair (last applied symbol, direction). Roots are the ranges
//! `(s, r̂_s)` of the singular symbols with weight `q_s`. Flow leaves a node
//! along every admissible invertible letter `i`, scaled by `p_{i j}`, and a
//! node's weight is the total flow that ever reaches it. Directions closer
//! than the merge tolerance (same symbol) share a node, so eigendirections
//! and periodic orbits produce cycles instead of unbounded trees.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{proj_act, proj_dist, ProjPoint};
use crate::shift::{Cocycle, Word};

/// A product `‖A_i v‖ ≤ NULL_TOL · ‖A_i‖` counts as a vanishing branch.
pub const NULL_TOL: f64 = 1e-12;
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;
pub const DEFAULT_MERGE_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_NODES: usize = 2_000_000;
/// Hard cap on the truncation depth.
pub const DEPTH_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug)]
pub struct GraphOptions {
    pub tail_eps: f64,
    pub merge_tol: f64,
    pub max_nodes: usize,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions { tail_eps: DEFAULT_TAIL_EPS, merge_tol: DEFAULT_MERGE_TOL, max_nodes: DEFAULT_MAX_NODES }
    }
}

impl GraphOptions {
    pub fn with_tail(tail_eps: f64) -> Self {
        GraphOptions { tail_eps, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub symbol: usize,
    pub point: ProjPoint,
    pub weight: f64,
    /// Level at which the node was first reached.
    pub depth: usize,
    /// Node and letter through which it was first reached.
    pub parent: Option<(usize, usize)>,
    /// Successor along each letter, where known.
    pub succ: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct AtomGraph {
    pub nodes: Vec<Node>,
    pub roots: Vec<Option<usize>>,
    pub tail_mass: f64,
    pub depth: usize,
    pub merge_tol: f64,
}

/// Flow mass per level: entry `n` is the mass first reaching invertible
/// symbols after `n` letters past the last singular one.
#[derive(Clone, Debug)]
pub struct MassProfile {
    pub level: Vec<f64>,
    /// Mass of branches of each length ending at a singular symbol.
    pub closing: Vec<f64>,
    /// Geometric extrapolation of the level masses beyond the table.
    pub remainder: f64,
}

impl MassProfile {
    pub fn compute(c: &Cocycle, floor: f64) -> MassProfile {
        let k = c.k();
        let sing = c.singular_symbols();
        let inv = c.invertible_symbols();
        let mut level = vec![0.0];
        let mut closing = vec![0.0];
        let mut carry: Vec<f64> = vec![0.0; k];
        for &s in &sing {
            carry[s] = c.initial(s);
        }
        let mut from_singular = true;
        let mut remainder = 0.0;
        loop {
            let n = level.len();
            let mut next = vec![0.0; k];
            let mut close = 0.0;
            for j in 0..k {
                let sources: &[usize] = if from_singular { &sing } else { &inv };
                let m: f64 = sources.iter().map(|&src| c.transition(j, src) * carry[src]).sum();
                if c.is_singular(j) {
                    close += m;
                } else {
                    next[j] = m;
                }
            }
            from_singular = false;
            let total: f64 = next.iter().sum();
            level.push(total);
            closing.push(close);
            carry = next;
            if total <= floor || n >= DEPTH_CAP + 64 {
                let prev = level[n - 1].max(f64::MIN_POSITIVE);
                let r = if n >= 2 { total / prev } else { 0.0 };
                if total > 0.0 && r < 1.0 {
                    remainder = total * r / (1.0 - r);
                } else if total > 0.0 {
                    remainder = f64::INFINITY;
                }
                break;
            }
        }
        MassProfile { level, closing, remainder }
    }

    /// Mass beyond level `d`.
    pub fn tail(&self, d: usize) -> f64 {
        let s: f64 = self.level.iter().skip(d + 1).sum();
        s + self.remainder
    }

    /// Smallest depth whose tail is at most `eps`.
    pub fn depth_for(&self, eps: f64) -> Option<usize> {
        let mut suffix = self.remainder;
        let mut best = None;
        for d in (0..self.level.len()).rev() {
            if suffix <= eps {
                best = Some(d);
            } else {
                break;
            }
            suffix += self.level[d];
        }
        best.filter(|&d| d <= DEPTH_CAP)
    }

    /// `Σ_{n > d} n · closing_n`, for value tail bounds.
    pub fn weighted_closing_tail(&self, d: usize) -> f64 {
        let s: f64 = self.closing.iter().enumerate().skip(d + 1).map(|(n, m)| n as f64 * m).sum();
        let n = self.closing.len() as f64;
        s + n * self.remainder * 2.0
    }
}

struct MergeIndex {
    tol: f64,
    buckets: i64,
    map: HashMap<(usize, i64), Vec<usize>>,
}

impl MergeIndex {
    fn new(tol: f64) -> Self {
        MergeIndex { tol, buckets: (PI / tol).ceil() as i64, map: HashMap::new() }
    }

    fn bucket(&self, p: ProjPoint) -> i64 {
        ((p.theta() / self.tol) as i64).min(self.buckets - 1)
    }

    fn find(&self, nodes: &[Node], symbol: usize, p: ProjPoint) -> Option<usize> {
        let b = self.bucket(p);
        let mut best: Option<(f64, usize)> = None;
        for db in [-1i64, 0, 1] {
            let key = (symbol, (b + db).rem_euclid(self.buckets));
            if let Some(ids) = self.map.get(&key) {
                for &id in ids {
                    let d = proj_dist(nodes[id].point, p);
                    if d <= self.tol && best.is_none_or(|(bd, bid)| d < bd || (d == bd && id < bid)) {
                        best = Some((d, id));
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }

    fn insert(&mut self, symbol: usize, p: ProjPoint, id: usize) {
        let key = (symbol, self.bucket(p));
        self.map.entry(key).or_default().push(id);
    }
}

impl AtomGraph {
    pub fn build(c: &Cocycle, opts: &GraphOptions) -> Result<AtomGraph> {
        if !c.has_singular() {
            return Err(Error::NoSingularSymbol);
        }
        let profile = MassProfile::compute(c, opts.tail_eps * 1e-6);
        let depth = profile
            .depth_for(opts.tail_eps / 2.0)
            .ok_or(Error::TooManyAtoms(opts.max_nodes))?;
        let tail_mass = profile.tail(depth);
        let k = c.k();
        let mut g = AtomGraph { nodes: Vec::new(), roots: vec![None; k], tail_mass, depth, merge_tol: opts.merge_tol };
        let mut index = MergeIndex::new(opts.merge_tol);
        let mut frontier: BTreeMap<usize, f64> = BTreeMap::new();
        for s in c.singular_symbols() {
            let r = c.range(s).expect("singular");
            let id = g.push(c, s, r, 0, None)?;
            g.nodes[id].weight = c.initial(s);
            g.roots[s] = Some(id);
            index.insert(s, r, id);
            frontier.insert(id, c.initial(s));
        }
        let inv = c.invertible_symbols();
        for level in 1..=depth {
            let mut next: BTreeMap<usize, f64> = BTreeMap::new();
            for (&u, &flow) in &frontier {
                let sym = g.nodes[u].symbol;
                for &i in &inv {
                    let p = c.transition(i, sym);
                    if p <= 0.0 {
                        continue;
                    }
                    let target = match g.nodes[u].succ[i] {
                        Some(t) => t,
                        None => {
                            let img = proj_act(c.matrix(i), g.nodes[u].point)?;
                            let t = match index.find(&g.nodes, i, img) {
                                Some(t) => t,
                                None => {
                                    if g.nodes.len() >= opts.max_nodes {
                                        return Err(Error::TooManyAtoms(opts.max_nodes));
                                    }
                                    let t = g.push(c, i, img, level, Some((u, i)))?;
                                    index.insert(i, img, t);
                                    t
                                }
                            };
                            g.nodes[u].succ[i] = Some(t);
                            t
                        }
                    };
                    g.nodes[target].weight += flow * p;
                    *next.entry(target).or_insert(0.0) += flow * p;
                }
            }
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        Ok(g)
    }

    /// Add a node after checking that no admissible singular letter kills
    /// its direction.
    fn push(&mut self, c: &Cocycle, symbol: usize, point: ProjPoint, depth: usize, parent: Option<(usize, usize)>) -> Result<usize> {
        let id = self.nodes.len();
        let mut succ = vec![None; c.k()];
        for i in c.singular_symbols() {
            if c.allowed(i, symbol) {
                let m = c.matrix(i);
                let v = m.apply(point.unit());
                if v[0].hypot(v[1]) <= NULL_TOL * m.norm() {
                    let mut w = self.word_to_parent(parent, symbol);
                    w.0.push(i);
                    return Err(Error::NullWord(w));
                }
                succ[i] = self.roots[i];
            }
        }
        self.nodes.push(Node { symbol, point, weight: 0.0, depth, parent, succ });
        Ok(id)
    }

    fn word_to_parent(&self, parent: Option<(usize, usize)>, symbol: usize) -> Word {
        match parent {
            Some((u, _)) => {
                let mut w = self.word_to(u);
                w.0.push(symbol);
                w
            }
            None => Word(vec![symbol]),
        }
    }

    /// Generating word of a node: its root symbol followed by the letters
    /// along the first path that reached it.
    pub fn word_to(&self, mut u: usize) -> Word {
        let mut letters = Vec::new();
        while let Some((p, letter)) = self.nodes[u].parent {
            letters.push(letter);
            u = p;
        }
        letters.push(self.nodes[u].symbol);
        letters.reverse();
        Word(letters)
    }

    /// Root successors are attached lazily: singular roots are created in
    /// symbol order, so earlier nodes may miss later roots.
    pub fn successor(&self, c: &Cocycle, u: usize, i: usize) -> Option<usize> {
        if c.is_singular(i) {
            self.roots[i]
        } else {
            self.nodes[u].succ[i]
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).collect::<crate::numeric::Neumaier>().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn explo_graph_is_a_self_loop() {
        let g = AtomGraph::build(&catalog::explo1(), &GraphOptions::default()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert!(g.nodes.iter().all(|n| proj_dist(n.point, ProjPoint::new(PI / 2.0)) < 1e-15));
        assert!(g.tail_mass <= 1e-12);
        assert!((g.total_weight() + g.tail_mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn irrat_rot_levels_are_rotations() {
        let t = 1.0;
        let g = AtomGraph::build(&catalog::irrat_rot(t), &GraphOptions::default()).unwrap();
        for n in &g.nodes {
            assert!(proj_dist(n.point, ProjPoint::new(n.depth as f64 * t)) < 1e-12);
            let expected = 2f64.powi(-(n.depth as i32 + 1));
            assert!((n.weight - expected).abs() < 1e-15 * expected.max(1e-300) + 1e-300);
        }
        assert_eq!(g.nodes.len(), g.depth + 1);
    }

    #[test]
    fn null_word_is_reported() {
        let e = AtomGraph::build(&catalog::irrat_rot(PI / 2.0), &GraphOptions::default()).unwrap_err();
        match e {
            Error::NullWord(w) => assert_eq!(w.to_string(), "1 2 1"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn profile_tail_matches_geometric_series() {
        let c = catalog::irrat_rot(1.0);
        let p = MassProfile::compute(&c, 1e-20);
        for d in [0usize, 5, 20] {
            assert!((p.tail(d) - 0.5f64.powi(d as i32 + 1)).abs() < 1e-15);
        }
        assert_eq!(p.depth_for(0.5f64.powi(11)), Some(10));
    }

    #[test]
    fn no_singular_symbol() {
        assert!(matches!(
            AtomGraph::build(&catalog::rotation(0.3), &GraphOptions::default()),
            Err(Error::NoSingularSymbol)
        ));
    }
}
