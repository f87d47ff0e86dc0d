//! The Markov operator `Qφ(j, v̂) = Σ_i p_{ij} φ(i, Â_i v̂)` and its
//! splitting into invertible and singular parts.

use serde::Serialize;

use super::graph::{AtomGraph, GraphOptions};
use super::{AtomicMeasure, Observable};
use crate::error::{Error, Result};
use crate::linalg::{proj_act, proj_dist, ProjPoint};
use crate::numeric::{linear_fit, Neumaier};
use crate::shift::{primitivity_check, Cocycle};

const LEAF_CAP: usize = 50_000_000;

/// Transition weight into `i` from a point tagged `j`; marginal points use
/// the Bernoulli weights.
fn weight(c: &Cocycle, i: usize, j: Option<usize>) -> f64 {
    match j {
        Some(j) => c.transition(i, j),
        None => c.initial(i),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    /// `max |∫Qφ dη − ∫φ dη|` over the test functions.
    pub max_residual: f64,
    /// Largest mass within the merge tolerance of the kernel of a singular
    /// letter that can follow it.
    pub kernel_mass: f64,
    /// Per-symbol push-forward recursion defect (Markov only).
    pub recursion_residual: Option<f64>,
    /// `|Σ weights + tail − 1|`.
    pub mass_defect: f64,
}

pub fn verify_stationarity(c: &Cocycle, eta: &AtomicMeasure, test_fns: &[&dyn Observable]) -> Result<StationarityReport> {
    if !c.is_bernoulli() && eta.atoms.iter().any(|a| a.symbol.is_none()) {
        return Err(Error::InvalidArgument("Markov measures need symbol-tagged atoms".into()));
    }
    let k = c.k();
    let mut images: Vec<Vec<ProjPoint>> = Vec::with_capacity(eta.atoms.len());
    for a in &eta.atoms {
        images.push((0..k).map(|i| proj_act(c.matrix(i), a.point)).collect::<Result<_>>()?);
    }
    let mut max_residual: f64 = 0.0;
    let mut recursion: f64 = 0.0;
    for phi in test_fns {
        let lhs: Neumaier = eta
            .atoms
            .iter()
            .zip(&images)
            .flat_map(|(a, img)| (0..k).map(move |i| a.weight * weight(c, i, a.symbol) * phi.eval(Some(i), img[i])))
            .collect();
        max_residual = max_residual.max((lhs.sum() - eta.integrate(*phi)).abs());
        if !c.is_bernoulli() {
            for j in 0..k {
                let pushed: Neumaier = eta
                    .atoms
                    .iter()
                    .zip(&images)
                    .map(|(a, img)| a.weight * weight(c, j, a.symbol) * phi.eval(Some(j), img[j]))
                    .collect();
                let own: Neumaier = eta
                    .atoms
                    .iter()
                    .filter(|a| a.symbol == Some(j))
                    .map(|a| a.weight * phi.eval(Some(j), a.point))
                    .collect();
                recursion = recursion.max((pushed.sum() - own.sum()).abs());
            }
        }
    }
    let mut kernel_mass: f64 = 0.0;
    for i in c.singular_symbols() {
        let ker = c.kernel(i).expect("singular");
        let m: f64 = eta
            .atoms
            .iter()
            .filter(|a| weight(c, i, a.symbol) > 0.0 && proj_dist(a.point, ker) <= super::DEFAULT_MERGE_TOL)
            .map(|a| a.weight)
            .sum();
        kernel_mass = kernel_mass.max(m);
    }
    Ok(StationarityReport {
        max_residual,
        kernel_mass,
        recursion_residual: (!c.is_bernoulli()).then_some(recursion),
        mass_defect: (eta.total_weight() + eta.tail_mass - 1.0).abs(),
    })
}

/// `Q_inv φ(j, v̂) = Σ_{i invertible} p_{ij} φ(i, Â_i v̂)`.
pub fn q_inv_apply(c: &Cocycle, phi: &dyn Observable, j: Option<usize>, v: ProjPoint) -> Result<f64> {
    let mut s = Neumaier::default();
    for i in c.invertible_symbols() {
        let p = weight(c, i, j);
        if p > 0.0 {
            s.add(p * phi.eval(Some(i), proj_act(c.matrix(i), v)?));
        }
    }
    Ok(s.sum())
}

/// `Q_sing φ(j, ·) = Σ_{i singular} p_{ij} φ(i, r̂_i)`, constant in the
/// direction.
pub fn q_sing_apply(c: &Cocycle, phi: &dyn Observable, j: Option<usize>) -> f64 {
    c.singular_symbols()
        .into_iter()
        .map(|i| weight(c, i, j) * phi.eval(Some(i), c.range(i).expect("singular")))
        .collect::<Neumaier>()
        .sum()
}

/// Exact evaluation of `Qᵐφ`: singular letters reset the direction to a
/// range, whose values are cached per iteration count.
struct ClosedForm<'a> {
    c: &'a Cocycle,
    phi: &'a dyn Observable,
    at_ranges: Vec<Vec<f64>>,
    leaves: usize,
}

impl<'a> ClosedForm<'a> {
    fn new(c: &'a Cocycle, phi: &'a dyn Observable) -> Self {
        ClosedForm { c, phi, at_ranges: Vec::new(), leaves: 0 }
    }

    fn ensure(&mut self, m: usize) -> Result<()> {
        while self.at_ranges.len() <= m {
            let level = self.at_ranges.len();
            let mut row = vec![0.0; self.c.k()];
            for s in self.c.singular_symbols() {
                row[s] = self.eval_inner(level, Some(s), self.c.range(s).expect("singular"))?;
            }
            self.at_ranges.push(row);
        }
        Ok(())
    }

    fn eval(&mut self, m: usize, j: Option<usize>, v: ProjPoint) -> Result<f64> {
        if m > 0 {
            self.ensure(m - 1)?;
        }
        self.eval_inner(m, j, v)
    }

    fn eval_inner(&mut self, m: usize, j: Option<usize>, v: ProjPoint) -> Result<f64> {
        if m == 0 {
            self.leaves += 1;
            if self.leaves > LEAF_CAP {
                return Err(Error::EnumerationCap(LEAF_CAP));
            }
            return Ok(self.phi.eval(j, v));
        }
        let mut s = Neumaier::default();
        for i in 0..self.c.k() {
            let p = weight(self.c, i, j);
            if p <= 0.0 {
                continue;
            }
            if self.c.is_singular(i) {
                s.add(p * self.at_ranges[m - 1][i]);
            } else {
                let img = proj_act(self.c.matrix(i), v)?;
                s.add(p * self.eval_inner(m - 1, Some(i), img)?);
            }
        }
        Ok(s.sum())
    }
}

/// `Qⁿφ` at the given (symbol, direction) points, for a closed-form `φ`.
pub fn markov_operator_apply(
    c: &Cocycle,
    phi: &dyn Observable,
    n: usize,
    points: &[(Option<usize>, ProjPoint)],
) -> Result<Vec<f64>> {
    let mut cf = ClosedForm::new(c, phi);
    points.iter().map(|&(j, v)| cf.eval(n, j, v)).collect()
}

/// Values on the nodes of an atom graph; `None` where undefined.
#[derive(Clone, Debug)]
pub struct ObservableOnAtoms {
    pub values: Vec<Option<f64>>,
}

impl ObservableOnAtoms {
    pub fn from_closed_form(graph: &AtomGraph, phi: &dyn Observable) -> Self {
        ObservableOnAtoms { values: graph.nodes.iter().map(|n| Some(phi.eval(Some(n.symbol), n.point))).collect() }
    }
}

/// One step of `Q` on the graph. A node whose admissible successors are not
/// all present, or carry no value, becomes undefined.
pub fn apply_on_graph(c: &Cocycle, graph: &AtomGraph, phi: &ObservableOnAtoms) -> ObservableOnAtoms {
    let values = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(u, n)| {
            let mut s = Neumaier::default();
            for i in 0..c.k() {
                let p = c.transition(i, n.symbol);
                if p <= 0.0 {
                    continue;
                }
                s.add(p * phi.values[graph.successor(c, u, i)?]?);
            }
            Some(s.sum())
        })
        .collect();
    ObservableOnAtoms { values }
}

/// `Qⁿφ` at the requested nodes using only values stored on the graph.
pub fn markov_operator_on_atoms(
    c: &Cocycle,
    graph: &AtomGraph,
    phi: &ObservableOnAtoms,
    n: usize,
    at: &[usize],
) -> Result<Vec<f64>> {
    let mut cur = phi.clone();
    for _ in 0..n {
        cur = apply_on_graph(c, graph, &cur);
    }
    at.iter().map(|&u| cur.values[u].ok_or(Error::UndefinedPoint(u))).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    /// `max_φ ‖Qⁿφ − ∫φ dη‖∞ / ‖φ‖∞` on the atoms, for `n = 0..=n_max`.
    pub decay: Vec<f64>,
    pub fitted_c: Option<f64>,
    pub fitted_rate: Option<f64>,
    /// `1 − q` (Bernoulli) or the invertible column-sum bound of `P^N`.
    pub sigma0: f64,
    pub n_primitive: usize,
    /// `max_n decay_n / (2 (1 − q)ⁿ)`, Bernoulli only.
    pub bound_ratio: Option<f64>,
}

pub fn mixing_rate(c: &Cocycle, trial_fns: &[&dyn Observable], n_max: usize, tail_eps: f64) -> Result<MixingReport> {
    let graph = AtomGraph::build(c, &GraphOptions::with_tail(tail_eps))?;
    let total = graph.total_weight();
    let points: Vec<(Option<usize>, ProjPoint)> = graph.nodes.iter().map(|n| (Some(n.symbol), n.point)).collect();
    let mut decay = vec![0.0f64; n_max + 1];
    for phi in trial_fns {
        let norm = phi.sup_norm();
        if norm == 0.0 {
            continue;
        }
        let mean = graph
            .nodes
            .iter()
            .map(|n| n.weight * phi.eval(Some(n.symbol), n.point))
            .collect::<Neumaier>()
            .sum()
            / total;
        let mut cf = ClosedForm::new(c, *phi);
        for (n, d) in decay.iter_mut().enumerate() {
            for &(j, v) in &points {
                let x = cf.eval(n, j, v)?;
                *d = d.max((x - mean).abs() / norm);
            }
        }
    }
    let pts: Vec<(f64, f64)> = decay
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, d)| **d > 1e-300)
        .map(|(n, d)| (n as f64, d.ln()))
        .collect();
    let fit = linear_fit(&pts);
    let (sigma0, n_primitive) = if c.is_bernoulli() {
        (1.0 - c.singular_mass(), 1)
    } else {
        let pm = c.transition_matrix();
        let n = primitivity_check(&pm)?;
        let k = c.k();
        let mut pow = pm.clone();
        for _ in 1..n {
            pow = (0..k)
                .map(|i| (0..k).map(|j| (0..k).map(|m| pow[i][m] * pm[m][j]).sum()).collect())
                .collect();
        }
        let inv = c.invertible_symbols();
        let s0 = (0..k).map(|j| inv.iter().map(|&i| pow[i][j]).sum::<f64>()).fold(0.0, f64::max);
        (s0, n)
    };
    let bound_ratio = c.is_bernoulli().then(|| {
        decay
            .iter()
            .enumerate()
            .map(|(n, d)| d / (2.0 * sigma0.powi(n as i32)))
            .fold(0.0, f64::max)
    });
    Ok(MixingReport {
        decay,
        fitted_c: fit.map(|(_, b)| b.exp()),
        fitted_rate: fit.map(|(a, _)| a.exp()),
        sigma0,
        n_primitive,
        bound_ratio,
    })
}
