//! Base dynamics: Bernoulli and Markov shifts carrying a cocycle of 2×2
//! letters, cylinder measures, branch words and the oriented lift.
//!
//! Symbols are 0-based internally and 1-based in every textual form.
//! Transition probabilities follow the left-stochastic convention:
//! `P[i][j]` is the probability of moving from `j` to `i`, so the columns
//! of `P` sum to one and `P q = q`.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{range_kernel, svd2, Mat2, ProjPoint, RANK_TOL};

/// Tolerance for probability normalization checks on input.
pub const PROB_TOL: f64 = 1e-9;
/// Hard cap on the words returned by one enumeration call.
pub const BRANCH_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Base {
    Bernoulli { p: Vec<f64> },
    Markov { p: Vec<Vec<f64>>, q: Vec<f64> },
}

/// A finite alphabet of 2×2 letters split into rank-one ("singular") and
/// invertible symbols, over a Bernoulli or Markov shift.
#[derive(Clone, Debug)]
pub struct Cocycle {
    matrices: Vec<Mat2>,
    singular: Vec<bool>,
    base: Base,
    range_kernel: Vec<Option<(ProjPoint, ProjPoint)>>,
}

fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::InvalidCocycle(format!("{what} must have strictly positive entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidCocycle(format!("{what} must sum to 1 (got {s})")));
    }
    Ok(())
}

fn check_stochastic(pm: &[Vec<f64>], k: usize) -> Result<()> {
    if pm.len() != k || pm.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidCocycle(format!("transition matrix must be {k}x{k}")));
    }
    if pm.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidCocycle("transition matrix entries must be nonnegative".into()));
    }
    for j in 0..k {
        let s: f64 = (0..k).map(|i| pm[i][j]).sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidCocycle(format!(
                "transition matrix column {} must sum to 1 (got {s})",
                j + 1
            )));
        }
    }
    Ok(())
}

impl Cocycle {
    /// Build and validate a cocycle. `singular[i]` declares symbol `i` rank
    /// one; the declaration is checked against the matrices.
    pub fn new(matrices: Vec<Mat2>, singular: Vec<bool>, base: Base) -> Result<Self> {
        let k = matrices.len();
        if k == 0 {
            return Err(Error::InvalidCocycle("alphabet is empty".into()));
        }
        if singular.len() != k {
            return Err(Error::InvalidCocycle("singular flags do not match the alphabet".into()));
        }
        let mut rk = Vec::with_capacity(k);
        for (i, m) in matrices.iter().enumerate() {
            if !m.is_finite() {
                return Err(Error::InvalidCocycle(format!("matrix {} has non-finite entries", i + 1)));
            }
            let s = svd2(m);
            if singular[i] {
                if s.sigma1 == 0.0 || s.sigma2 > RANK_TOL * s.sigma1 {
                    return Err(Error::InvalidCocycle(format!(
                        "matrix {} is declared singular but is not rank one",
                        i + 1
                    )));
                }
                rk.push(Some(range_kernel(m)?));
            } else {
                if m.det() == 0.0 {
                    return Err(Error::InvalidCocycle(format!(
                        "matrix {} is declared invertible but has zero determinant",
                        i + 1
                    )));
                }
                rk.push(None);
            }
        }
        let base = match base {
            Base::Bernoulli { p } => {
                if p.len() != k {
                    return Err(Error::InvalidCocycle(format!("probability vector must have {k} entries")));
                }
                check_prob_vector(&p, "probability vector")?;
                Base::Bernoulli { p }
            }
            Base::Markov { p, q } => {
                check_stochastic(&p, k)?;
                primitivity_check(&p)?;
                if q.len() != k {
                    return Err(Error::InvalidCocycle(format!("stationary vector must have {k} entries")));
                }
                check_prob_vector(&q, "stationary vector")?;
                let res = (0..k)
                    .map(|i| ((0..k).map(|j| p[i][j] * q[j]).sum::<f64>() - q[i]).abs())
                    .fold(0.0, f64::max);
                if res > PROB_TOL {
                    return Err(Error::InvalidCocycle(format!(
                        "stationary vector must satisfy Pq = q (residual {res:e})"
                    )));
                }
                Base::Markov { p, q }
            }
        };
        Ok(Cocycle { matrices, singular, base, range_kernel: rk })
    }

    /// Bernoulli cocycle with ranks read off the matrices.
    pub fn bernoulli(matrices: Vec<Mat2>, p: Vec<f64>) -> Result<Self> {
        let singular = classify(&matrices)?;
        Cocycle::new(matrices, singular, Base::Bernoulli { p })
    }

    /// Markov cocycle with ranks read off the matrices; `q` is computed when
    /// absent.
    pub fn markov(matrices: Vec<Mat2>, p: Vec<Vec<f64>>, q: Option<Vec<f64>>) -> Result<Self> {
        let singular = classify(&matrices)?;
        check_stochastic(&p, matrices.len())?;
        let q = match q {
            Some(q) => q,
            None => stationary_vector(&p)?,
        };
        Cocycle::new(matrices, singular, Base::Markov { p, q })
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[Mat2] {
        &self.matrices
    }

    pub fn matrix(&self, i: usize) -> &Mat2 {
        &self.matrices[i]
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn is_bernoulli(&self) -> bool {
        matches!(self.base, Base::Bernoulli { .. })
    }

    pub fn is_singular(&self, i: usize) -> bool {
        self.singular[i]
    }

    pub fn singular_flags(&self) -> &[bool] {
        &self.singular
    }

    pub fn singular_symbols(&self) -> Vec<usize> {
        (0..self.k()).filter(|&i| self.singular[i]).collect()
    }

    pub fn invertible_symbols(&self) -> Vec<usize> {
        (0..self.k()).filter(|&i| !self.singular[i]).collect()
    }

    pub fn has_singular(&self) -> bool {
        self.singular.iter().any(|&s| s)
    }

    /// Range of a singular letter.
    pub fn range(&self, i: usize) -> Option<ProjPoint> {
        self.range_kernel[i].map(|rk| rk.0)
    }

    /// Kernel of a singular letter.
    pub fn kernel(&self, i: usize) -> Option<ProjPoint> {
        self.range_kernel[i].map(|rk| rk.1)
    }

    /// Probability of the transition `j → i`.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        match &self.base {
            Base::Bernoulli { p } => p[i],
            Base::Markov { p, .. } => p[i][j],
        }
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.transition(i, j) > 0.0
    }

    /// Probability of the first symbol.
    pub fn initial(&self, i: usize) -> f64 {
        match &self.base {
            Base::Bernoulli { p } => p[i],
            Base::Markov { q, .. } => q[i],
        }
    }

    pub fn initial_distribution(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.initial(i)).collect()
    }

    /// Left-stochastic transition matrix; identical columns for Bernoulli.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.k();
        (0..k).map(|i| (0..k).map(|j| self.transition(i, j)).collect()).collect()
    }

    /// Total stationary mass of the singular symbols.
    pub fn singular_mass(&self) -> f64 {
        self.singular_symbols().iter().map(|&i| self.initial(i)).sum()
    }

    pub fn is_admissible(&self, w: &Word) -> bool {
        w.0.windows(2).all(|p| self.allowed(p[1], p[0]))
    }

    /// Uniform bound `c` with `|log‖A_i v‖| ≤ c` on invertible letters and
    /// on singular letters acting on admissible ranges, and `‖A_i‖ ≤ e^c`.
    pub fn log_norm_bound(&self) -> f64 {
        let mut c: f64 = 0.0;
        for i in 0..self.k() {
            let s = svd2(&self.matrices[i]);
            c = c.max(s.sigma1.ln().abs());
            if !self.singular[i] {
                c = c.max(s.sigma2.ln().abs());
            }
        }
        for i in self.singular_symbols() {
            for l in self.singular_symbols() {
                let r = self.range(l).expect("singular").unit();
                let v = self.matrices[i].apply(r);
                let n = v[0].hypot(v[1]);
                if n > 0.0 {
                    c = c.max(n.ln().abs());
                }
            }
        }
        c
    }

    /// Cocycle of inverse letters over the time-reversed shift.
    pub fn inverse(&self) -> Result<Cocycle> {
        let mut inv = Vec::with_capacity(self.k());
        for (i, m) in self.matrices.iter().enumerate() {
            inv.push(m.inverse().ok_or(Error::SingularComponent(i))?);
        }
        let base = match &self.base {
            Base::Bernoulli { p } => Base::Bernoulli { p: p.clone() },
            Base::Markov { p, q } => {
                let k = self.k();
                let rev = (0..k)
                    .map(|i| (0..k).map(|j| p[j][i] * q[i] / q[j]).collect())
                    .collect();
                Base::Markov { p: rev, q: q.clone() }
            }
        };
        Cocycle::new(inv, vec![false; self.k()], base)
    }

    /// Same base, new letters; ranks are reclassified.
    pub fn with_matrices(&self, matrices: Vec<Mat2>) -> Result<Cocycle> {
        let singular = classify(&matrices)?;
        Cocycle::new(matrices, singular, self.base.clone())
    }
}

/// Rank flags read off the matrices; zero letters are rejected.
pub fn classify(matrices: &[Mat2]) -> Result<Vec<bool>> {
    matrices
        .iter()
        .enumerate()
        .map(|(i, m)| match m.rank() {
            crate::linalg::Rank::Zero => Err(Error::InvalidCocycle(format!("matrix {} is zero", i + 1))),
            r => Ok(r == crate::linalg::Rank::RankOne),
        })
        .collect()
}

/// A finite word over the alphabet, stored 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn from_one_based(symbols: &[usize]) -> Word {
        Word(symbols.iter().map(|s| s - 1).collect())
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|s| s + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `A_{ω_n} ⋯ A_{ω_1} A_{ω_0}`.
    pub fn product(&self, c: &Cocycle) -> Mat2 {
        self.0.iter().fold(Mat2::IDENTITY, |acc, &s| *c.matrix(s) * acc)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| (s + 1).to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.one_based())
    }
}

fn bool_product(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let k = a.len();
    (0..k)
        .map(|i| (0..k).map(|j| (0..k).any(|m| a[i][m] && b[m][j])).collect())
        .collect()
}

/// Smallest `N` with `P^N` entrywise positive.
pub fn primitivity_check(pm: &[Vec<f64>]) -> Result<usize> {
    let k = pm.len();
    let pattern: Vec<Vec<bool>> = pm.iter().map(|r| r.iter().map(|&x| x > 0.0).collect()).collect();
    let mut power = pattern.clone();
    let bound = (k - 1) * (k - 1) + 1;
    for n in 1..=bound {
        if power.iter().flatten().all(|&x| x) {
            return Ok(n);
        }
        power = bool_product(&power, &pattern);
    }
    Err(Error::NotPrimitive)
}

/// Stationary probability vector of a primitive left-stochastic matrix.
pub fn stationary_vector(pm: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = pm.len();
    check_stochastic(pm, k)?;
    primitivity_check(pm)?;
    // (P - I) q = 0 with the last equation replaced by Σ q = 1.
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| pm[i][j] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[k - 1] = vec![1.0; k + 1];
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("nonempty");
        a.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            return Err(Error::NotPrimitive);
        }
        for row in 0..k {
            if row != col {
                let f = a[row][col] / d;
                if f != 0.0 {
                    for m in col..=k {
                        a[row][m] -= f * a[col][m];
                    }
                }
            }
        }
    }
    let mut q: Vec<f64> = (0..k).map(|i| (a[i][k] / a[i][i]).abs()).collect();
    for _ in 0..10_000 {
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        let next: Vec<f64> = (0..k).map(|i| (0..k).map(|j| pm[i][j] * q[j]).sum()).collect();
        let res = next.iter().zip(&q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        q = next;
        if res <= 1e-14 {
            break;
        }
    }
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= s);
    Ok(q)
}

/// Probability of the cylinder spanned by `w`.
pub fn cylinder_measure(c: &Cocycle, w: &Word) -> Result<f64> {
    let Some(&first) = w.0.first() else {
        return Ok(1.0);
    };
    let mut m = c.initial(first);
    for (pos, pair) in w.0.windows(2).enumerate() {
        let t = c.transition(pair[1], pair[0]);
        if t <= 0.0 {
            return Err(Error::Inadmissible(pos + 1));
        }
        m *= t;
    }
    Ok(m)
}

/// Branch probability `p(ω) = ∏ p_{ω_{l+1} ω_l}` (no initial weight).
pub fn branch_probability(c: &Cocycle, w: &Word) -> f64 {
    w.0.windows(2).map(|p| c.transition(p[1], p[0])).product()
}

/// All admissible words `(s, ω₁, …, ω_{n-1}, l)` with invertible interior,
/// in lexicographic order.
pub fn enumerate_branches(c: &Cocycle, s: usize, l: usize, n: usize) -> Result<Vec<Word>> {
    if !c.is_singular(s) {
        return Err(Error::NotSingular(s + 1));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("branch length must be at least 1".into()));
    }
    let inv = c.invertible_symbols();
    let mut out = Vec::new();
    let mut stack = vec![s];
    fn rec(
        c: &Cocycle,
        inv: &[usize],
        l: usize,
        n: usize,
        stack: &mut Vec<usize>,
        out: &mut Vec<Word>,
    ) -> Result<()> {
        let last = *stack.last().expect("nonempty");
        if stack.len() == n {
            if c.allowed(l, last) {
                if out.len() >= BRANCH_CAP {
                    return Err(Error::EnumerationCap(BRANCH_CAP));
                }
                let mut w = stack.clone();
                w.push(l);
                out.push(Word(w));
            }
            return Ok(());
        }
        for &i in inv {
            if c.allowed(i, last) {
                stack.push(i);
                rec(c, inv, l, n, stack, out)?;
                stack.pop();
            }
        }
        Ok(())
    }
    rec(c, &inv, l, n, &mut stack, &mut out)?;
    Ok(out)
}

/// Per-symbol branch masses: entry `n - 1` holds, for every symbol `j`,
/// `Σ_s q_s Σ_{ω ∈ B_n(s, j)} p(ω)`.
pub fn branch_masses(c: &Cocycle, n_max: usize) -> Vec<Vec<f64>> {
    let k = c.k();
    let sing = c.singular_symbols();
    let inv = c.invertible_symbols();
    let mut out = Vec::with_capacity(n_max);
    if n_max == 0 {
        return out;
    }
    // Mass sitting on invertible symbols after the last singular letter.
    let mut carry = vec![0.0; k];
    let first: Vec<f64> = (0..k)
        .map(|j| sing.iter().map(|&s| c.initial(s) * c.transition(j, s)).sum())
        .collect();
    for &j in &inv {
        carry[j] = first[j];
    }
    out.push(first);
    for _ in 1..n_max {
        let next: Vec<f64> = (0..k)
            .map(|j| inv.iter().map(|&m| c.transition(j, m) * carry[m]).sum())
            .collect();
        carry = vec![0.0; k];
        for &j in &inv {
            carry[j] = next[j];
        }
        out.push(next);
    }
    out
}

/// `q_j − Σ_s q_s Σ_{n ≤ n_max} Σ_{ω ∈ B_n(s, j)} p(ω)`.
pub fn branch_mass_check(c: &Cocycle, j: usize, n_max: usize) -> Result<f64> {
    if !c.has_singular() {
        return Err(Error::NoSingularSymbol);
    }
    let masses = branch_masses(c, n_max);
    let mut acc = crate::numeric::Neumaier::default();
    for m in &masses {
        acc.add(m[j]);
    }
    Ok(c.initial(j) - acc.sum())
}

/// A symbol of the doubled alphabet `𝒜 ⊔ 𝒜*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LiftedSymbol {
    pub symbol: usize,
    pub starred: bool,
}

impl LiftedSymbol {
    pub fn star(self) -> LiftedSymbol {
        LiftedSymbol { symbol: self.symbol, starred: !self.starred }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LiftedEdge {
    pub from: LiftedSymbol,
    pub to: LiftedSymbol,
    /// Copy of the letter of the destination symbol.
    pub matrix: Mat2,
}

#[derive(Clone, Debug, Serialize)]
pub struct LiftedCocycle {
    pub k: usize,
    pub edges: Vec<LiftedEdge>,
    /// `det A_i < 0` per original symbol.
    pub orientation_reversing: Vec<bool>,
}

impl LiftedCocycle {
    /// Edge matrix after conjugating the fibers over starred symbols by the
    /// reflection `diag(1, -1)`.
    pub fn conjugated_matrix(&self, e: &LiftedEdge) -> Mat2 {
        let refl = Mat2::diag(1.0, -1.0);
        let mut m = e.matrix;
        if e.from.starred {
            m = m * refl;
        }
        if e.to.starred {
            m = refl * m;
        }
        m
    }
}

/// Oriented double cover of the transition graph. The edge `j → i` lifts
/// to `j → i, j* → i*` when `det A_i > 0` and to `j → i*, j* → i` otherwise.
pub fn oriented_lift(c: &Cocycle) -> Result<LiftedCocycle> {
    let k = c.k();
    for (i, m) in c.matrices().iter().enumerate() {
        if c.is_singular(i) || m.det() == 0.0 {
            return Err(Error::SingularComponent(i + 1));
        }
    }
    let reversing: Vec<bool> = c.matrices().iter().map(|m| m.det() < 0.0).collect();
    let mut edges = Vec::new();
    for j in 0..k {
        for i in 0..k {
            if !c.allowed(i, j) {
                continue;
            }
            let m = *c.matrix(i);
            for starred in [false, true] {
                let from = LiftedSymbol { symbol: j, starred };
                let to = LiftedSymbol { symbol: i, starred: starred ^ reversing[i] };
                edges.push(LiftedEdge { from, to, matrix: m });
            }
        }
    }
    Ok(LiftedCocycle { k, edges, orientation_reversing: reversing })
}
