//! 2×2 real matrices and the projective circle.
//!
//! A line through the origin is stored as the angle of a spanning vector in
//! `[0, π)`. The projective circle therefore has circumference π and the
//! distance between lines is the angular metric `min(|u - v|, π - |u - v|)`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance deciding rank one: `σ₂ ≤ RANK_TOL · σ₁`.
pub const RANK_TOL: f64 = 1e-10;

/// Real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rank {
    Invertible,
    RankOne,
    Zero,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };
    pub const ZERO: Mat2 = Mat2 { a: 0.0, b: 0.0, c: 0.0, d: 0.0 };
    /// Generator of rotations, `d/dt R_t` at `t = 0`.
    pub const J: Mat2 = Mat2 { a: 0.0, b: -1.0, c: 1.0, d: 0.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn from_array(m: [f64; 4]) -> Self {
        Mat2::new(m[0], m[1], m[2], m[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn diag(x: f64, y: f64) -> Self {
        Mat2::new(x, 0.0, 0.0, y)
    }

    /// Rotation by `t` radians.
    pub fn rotation(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    /// Rank-one matrix `u vᵀ`.
    pub fn outer(u: [f64; 2], v: [f64; 2]) -> Self {
        Mat2::new(u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1])
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    /// Operator norm.
    pub fn norm(&self) -> f64 {
        svd2(self).sigma1
    }

    pub fn rank(&self) -> Rank {
        let s = svd2(self);
        if s.sigma1 == 0.0 {
            Rank::Zero
        } else if s.sigma2 <= RANK_TOL * s.sigma1 {
            Rank::RankOne
        } else {
            Rank::Invertible
        }
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// Reduce an angle to `[0, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// A point of the projective line, `θ ∈ [0, π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjPoint {
    theta: f64,
}

impl ProjPoint {
    pub fn new(theta: f64) -> Self {
        ProjPoint { theta: wrap_angle(theta) }
    }

    /// Line spanned by `(x, y)`; the zero vector is rejected.
    pub fn from_vector(v: [f64; 2]) -> Option<Self> {
        if v[0] == 0.0 && v[1] == 0.0 {
            return None;
        }
        Some(ProjPoint::new(v[1].atan2(v[0])))
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Unit representative `(cos θ, sin θ)`.
    pub fn unit(&self) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c, s]
    }

    /// The orthogonal line.
    pub fn perp(&self) -> Self {
        ProjPoint::new(self.theta + PI / 2.0)
    }

    pub fn shifted(&self, delta: f64) -> Self {
        ProjPoint::new(self.theta + delta)
    }
}

/// Angular distance on the projective circle, in `[0, π/2]`.
pub fn proj_dist(u: ProjPoint, v: ProjPoint) -> f64 {
    let d = (u.theta - v.theta).abs();
    d.min(PI - d).max(0.0)
}

/// Counter-clockwise offset from `from` to `to`, in `[0, π)`.
pub fn ccw_offset(from: ProjPoint, to: ProjPoint) -> f64 {
    wrap_angle(to.theta - from.theta)
}

/// Open arc `(start, start + length)` on the circle of circumference π.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub length: f64,
}

impl Arc {
    pub fn new(start: f64, length: f64) -> Self {
        if length >= PI {
            return Arc::full();
        }
        Arc { start: wrap_angle(start), length: length.max(0.0) }
    }

    pub fn full() -> Self {
        Arc { start: 0.0, length: PI }
    }

    /// Open ball of angular radius `r` around `p`.
    pub fn ball(p: ProjPoint, r: f64) -> Self {
        Arc::new(p.theta - r, 2.0 * r)
    }

    pub fn is_full(&self) -> bool {
        self.length >= PI
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn start_point(&self) -> ProjPoint {
        ProjPoint::new(self.start)
    }

    pub fn end_point(&self) -> ProjPoint {
        ProjPoint::new(self.end())
    }

    pub fn midpoint(&self) -> ProjPoint {
        ProjPoint::new(self.start + self.length / 2.0)
    }

    /// Membership in the open arc.
    pub fn contains(&self, p: ProjPoint) -> bool {
        if self.is_full() {
            return true;
        }
        let off = wrap_angle(p.theta - self.start);
        off > 0.0 && off < self.length
    }

    /// Distance from `p` to the complement of the arc; zero outside.
    pub fn depth(&self, p: ProjPoint) -> f64 {
        if self.is_full() {
            return f64::INFINITY;
        }
        let off = wrap_angle(p.theta - self.start);
        if off > 0.0 && off < self.length {
            off.min(self.length - off)
        } else {
            0.0
        }
    }

    /// Distance from `p` to the closed arc.
    pub fn dist_to_closure(&self, p: ProjPoint) -> f64 {
        if self.is_full() {
            return 0.0;
        }
        let off = wrap_angle(p.theta - self.start);
        if off <= self.length {
            0.0
        } else {
            (off - self.length).min(PI - off)
        }
    }
}

/// Closed-form singular value decomposition of a 2×2 matrix.
///
/// The matrix is `σ₁ u vᵀ + s₂ (J u)(J v)ᵀ` with unit `u`, `v` and
/// `|s₂| = σ₂`; `left_top = [u]` and `right_top = [v]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Svd2 {
    pub sigma1: f64,
    pub sigma2: f64,
    pub left_top: ProjPoint,
    pub right_top: ProjPoint,
    #[serde(skip)]
    u: [f64; 2],
    #[serde(skip)]
    v: [f64; 2],
    #[serde(skip)]
    s2: f64,
}

impl Svd2 {
    pub fn left_vector(&self) -> [f64; 2] {
        self.u
    }

    pub fn right_vector(&self) -> [f64; 2] {
        self.v
    }

    /// Second singular value with the sign of the determinant.
    pub fn signed_sigma2(&self) -> f64 {
        self.s2
    }

    /// Rebuild the matrix, replacing the second singular value by `s2`.
    pub fn compose(&self, sigma1: f64, s2: f64) -> Mat2 {
        let ju = [-self.u[1], self.u[0]];
        let jv = [-self.v[1], self.v[0]];
        Mat2::outer(self.u, self.v).scale(sigma1).add(&Mat2::outer(ju, jv).scale(s2))
    }

    pub fn reconstruct(&self) -> Mat2 {
        self.compose(self.sigma1, self.s2)
    }
}

pub fn svd2(m: &Mat2) -> Svd2 {
    let e = (m.a + m.d) / 2.0;
    let f = (m.a - m.d) / 2.0;
    let g = (m.c + m.b) / 2.0;
    let h = (m.c - m.b) / 2.0;
    let q = e.hypot(h);
    let r = f.hypot(g);
    let sigma1 = q + r;
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    let phi = (a2 + a1) / 2.0;
    let theta = (a2 - a1) / 2.0;
    let u = [phi.cos(), phi.sin()];
    let v = [theta.cos(), -theta.sin()];
    let det = m.det();
    let s2 = if sigma1 > 0.0 { det / sigma1 } else { 0.0 };
    Svd2 {
        sigma1,
        sigma2: s2.abs().min(sigma1),
        left_top: ProjPoint::from_vector(u).unwrap_or(ProjPoint::new(0.0)),
        right_top: ProjPoint::from_vector(v).unwrap_or(ProjPoint::new(0.0)),
        u,
        v,
        s2,
    }
}

/// Projective action. Rank-one matrices send every line, the kernel
/// included, to their range.
pub fn proj_act(m: &Mat2, v: ProjPoint) -> Result<ProjPoint> {
    let s = svd2(m);
    if s.sigma1 == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    if s.sigma2 <= RANK_TOL * s.sigma1 {
        return Ok(s.left_top);
    }
    Ok(ProjPoint::from_vector(m.apply(v.unit())).expect("invertible image is nonzero"))
}

/// Range and kernel of a rank-one matrix.
pub fn range_kernel(m: &Mat2) -> Result<(ProjPoint, ProjPoint)> {
    let s = svd2(m);
    if s.sigma1 == 0.0 || s.sigma2 > RANK_TOL * s.sigma1 {
        return Err(Error::NotRankOne);
    }
    Ok((s.left_top, s.right_top.perp()))
}

/// `(m v ∧ dm v) / ‖m v‖²` for a unit `v`: the angular speed of the image
/// line when `m` moves with velocity `dm`.
pub fn winding_speed(m: &Mat2, dm: &Mat2, v: ProjPoint) -> Result<f64> {
    let u = v.unit();
    let w = m.apply(u);
    let dw = dm.apply(u);
    let n2 = w[0] * w[0] + w[1] * w[1];
    if n2.sqrt() < 1e-14 {
        return Err(Error::Degenerate);
    }
    Ok((w[0] * dw[1] - w[1] * dw[0]) / n2)
}

/// Replace the zero singular value of a rank-one matrix by `μ⁻²`,
/// keeping both singular frames. Invertible matrices pass through.
pub fn desingularize(m: &Mat2, mu: f64) -> Result<Mat2> {
    let s = svd2(m);
    if s.sigma1 == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    if s.sigma2 > RANK_TOL * s.sigma1 {
        return Ok(*m);
    }
    Ok(s.compose(s.sigma1, mu.powi(-2)))
}

/// `Ã_μ / √|det Ã_μ|`, a matrix of determinant ±1.
pub fn desingularize_unimodular(m: &Mat2, mu: f64) -> Result<Mat2> {
    let t = desingularize(m, mu)?;
    Ok(t.scale(1.0 / t.det().abs().sqrt()))
}
