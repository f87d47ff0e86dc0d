//! Stationary measures on the projective line, the Markov operator and the
//! top Lyapunov exponent of rank-one cocycles.
//!
//! For a rank-one cocycle the stationary measure is purely atomic: every
//! atom is a singular range pushed forward by an invertible branch,
//!
//! ```text
//! η_j = (1/q_j) Σ_s q_s Σ_n Σ_{ω ∈ B_n(s,j)} p(ω) δ_{Âⁿ(ω) r̂_s}.
//! ```
//!
//! Measures are stored with joint weights `q_j η_j` per symbol (Markov) or
//! as the marginal on the projective line (Bernoulli).

mod graph;
mod lyapunov;
mod operator;

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use graph::{AtomGraph, GraphOptions, MassProfile, Node, DEFAULT_MERGE_TOL, DEFAULT_TAIL_EPS, NULL_TOL};
pub use lyapunov::{
    furstenberg_integral, furstenberg_l1, induced_l1, l1_branch_series, lyapunov_spectrum,
    rank1_product_norm, sampled_furstenberg, LyapunovReport, Method,
};
pub use operator::{
    apply_on_graph, markov_operator_apply, markov_operator_on_atoms, mixing_rate, q_inv_apply,
    q_sing_apply, verify_stationarity, MixingReport, ObservableOnAtoms, StationarityReport,
};

use crate::error::Result;
use crate::linalg::{proj_dist, ProjPoint};
use crate::numeric::fmt_f64;
use crate::shift::Cocycle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub symbol: Option<usize>,
    pub point: ProjPoint,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
    pub tail_mass: f64,
    pub depth: usize,
}

impl AtomicMeasure {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).collect::<crate::numeric::Neumaier>().sum()
    }

    pub fn integrate(&self, phi: &dyn Observable) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * phi.eval(a.symbol, a.point))
            .collect::<crate::numeric::Neumaier>()
            .sum()
    }

    /// CSV with a comment line carrying the tail mass and depth.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# tail_mass={} depth={}", fmt_f64(self.tail_mass), self.depth)?;
        writeln!(out, "symbol,theta,weight")?;
        for a in &self.atoms {
            let sym = a.symbol.map(|s| (s + 1).to_string()).unwrap_or_default();
            writeln!(out, "{},{},{}", sym, fmt_f64(a.point.theta()), fmt_f64(a.weight))?;
        }
        Ok(())
    }
}

impl AtomGraph {
    /// Per-symbol atoms (Markov) or the merged marginal (Bernoulli).
    pub fn measure(&self, c: &Cocycle) -> AtomicMeasure {
        let mut atoms: Vec<Atom> = self
            .nodes
            .iter()
            .filter(|n| n.weight > 0.0)
            .map(|n| Atom { symbol: Some(n.symbol), point: n.point, weight: n.weight })
            .collect();
        if c.is_bernoulli() {
            atoms.iter_mut().for_each(|a| a.symbol = None);
            atoms.sort_by(|a, b| a.point.theta().total_cmp(&b.point.theta()).then(a.weight.total_cmp(&b.weight)));
            let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
            for a in atoms {
                match merged.last_mut() {
                    Some(m) if proj_dist(m.point, a.point) <= self.merge_tol => m.weight += a.weight,
                    _ => merged.push(a),
                }
            }
            if merged.len() > 1 {
                let last = merged[merged.len() - 1];
                if proj_dist(last.point, merged[0].point) <= self.merge_tol {
                    merged[0].weight += last.weight;
                    merged.pop();
                }
            }
            atoms = merged;
        } else {
            atoms.sort_by(|a, b| a.symbol.cmp(&b.symbol).then(a.point.theta().total_cmp(&b.point.theta())));
        }
        AtomicMeasure { atoms, tail_mass: self.tail_mass, depth: self.depth }
    }
}

/// Stationary measure truncated at tail mass `tail_eps`.
pub fn stationary_measure(c: &Cocycle, tail_eps: f64) -> Result<AtomicMeasure> {
    let g = AtomGraph::build(c, &GraphOptions::with_tail(tail_eps))?;
    Ok(g.measure(c))
}

/// A function of (symbol, direction). Symbol-free observables ignore the
/// first argument, which is `None` on marginal atoms.
pub trait Observable: Sync {
    fn eval(&self, symbol: Option<usize>, p: ProjPoint) -> f64;

    /// Upper bound for the sup norm.
    fn sup_norm(&self) -> f64 {
        let n = 8192;
        (0..n)
            .map(|i| self.eval(None, ProjPoint::new(PI * i as f64 / n as f64)).abs())
            .fold(0.0, f64::max)
    }
}

impl<F: Fn(Option<usize>, ProjPoint) -> f64 + Sync> Observable for F {
    fn eval(&self, symbol: Option<usize>, p: ProjPoint) -> f64 {
        self(symbol, p)
    }
}

/// `c₀ + Σ_m (a_m cos 2mθ + b_m sin 2mθ)`, a π-periodic trigonometric
/// polynomial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrigPoly {
    pub c0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn random(seed: u64, degree: usize) -> TrigPoly {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TrigPoly {
            c0: rng.gen_range(-1.0..1.0),
            cos: (0..degree).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            sin: (0..degree).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    pub fn value(&self, theta: f64) -> f64 {
        let mut s = self.c0;
        for (m, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (sn, cs) = (2.0 * (m + 1) as f64 * theta).sin_cos();
            s += a * cs + b * sn;
        }
        s
    }
}

impl Observable for TrigPoly {
    fn eval(&self, _symbol: Option<usize>, p: ProjPoint) -> f64 {
        self.value(p.theta())
    }

    /// Grid maximum plus a Lipschitz allowance for the grid spacing.
    fn sup_norm(&self) -> f64 {
        let n = 4096;
        let h = PI / n as f64;
        let lip: f64 = self
            .cos
            .iter()
            .zip(&self.sin)
            .enumerate()
            .map(|(m, (a, b))| 2.0 * (m + 1) as f64 * a.hypot(*b))
            .sum();
        let grid = (0..n).map(|i| self.value(h * i as f64).abs()).fold(0.0, f64::max);
        grid + lip * h / 2.0
    }
}
