//! Named example cocycles and seeded random generators used by the tests,
//! the benchmarks in the acceptance suite and the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Mat2;
use crate::shift::Cocycle;

/// `A₀ = diag(2, 1/2)` and `B₀ = [[0, 0], [0, 1]]` with equal weights.
pub fn explo1() -> Cocycle {
    Cocycle::bernoulli(vec![Mat2::diag(2.0, 0.5), Mat2::diag(0.0, 1.0)], vec![0.5, 0.5])
        .expect("valid")
}

/// [`explo1`] written as a Markov chain with all transitions 1/2.
pub fn explo1_markov() -> Cocycle {
    Cocycle::markov(
        vec![Mat2::diag(2.0, 0.5), Mat2::diag(0.0, 1.0)],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        Some(vec![0.5, 0.5]),
    )
    .expect("valid")
}

/// Projection `diag(1, 0)` and rotation `R_t` with equal weights.
pub fn irrat_rot(t: f64) -> Cocycle {
    Cocycle::bernoulli(vec![Mat2::diag(1.0, 0.0), Mat2::rotation(t)], vec![0.5, 0.5]).expect("valid")
}

/// The single letter `diag(1, 0)`.
pub fn rank_one_singleton() -> Cocycle {
    Cocycle::bernoulli(vec![Mat2::diag(1.0, 0.0)], vec![1.0]).expect("valid")
}

/// `diag(2, 1/2)` together with `diag(1, 0)`.
pub fn diag_plus_rank_one() -> Cocycle {
    Cocycle::bernoulli(vec![Mat2::diag(2.0, 0.5), Mat2::diag(1.0, 0.0)], vec![0.5, 0.5]).expect("valid")
}

/// The single letter `R_θ`.
pub fn rotation(theta: f64) -> Cocycle {
    Cocycle::bernoulli(vec![Mat2::rotation(theta)], vec![1.0]).expect("valid")
}

/// The single letter `diag(2, 1/2)`.
pub fn hyperbolic_singleton() -> Cocycle {
    Cocycle::bernoulli(vec![Mat2::diag(2.0, 0.5)], vec![1.0]).expect("valid")
}

pub fn cantor_a(lambda: f64) -> Mat2 {
    Mat2::diag(lambda, 1.0 / lambda)
}

pub fn cantor_b(lambda: f64) -> Mat2 {
    Mat2::new(lambda, 0.0, lambda - 1.0 / lambda, 1.0 / lambda)
}

/// `(A_λ, B_λ, C)` with `C` of range `range` and kernel `kernel` (angles).
pub fn cantor(lambda: f64, range: f64, kernel: f64, p: [f64; 3]) -> Cocycle {
    let c = Mat2::outer([range.cos(), range.sin()], [-kernel.sin(), kernel.cos()]);
    Cocycle::bernoulli(vec![cantor_a(lambda), cantor_b(lambda), c], p.to_vec()).expect("valid")
}

/// Three-symbol Markov example with one forbidden transition.
pub fn markov_example() -> Cocycle {
    Cocycle::markov(
        vec![
            Mat2::outer([0.2f64.cos(), 0.2f64.sin()], [1.0, 0.3]),
            Mat2::new(1.5, 0.3, 0.2, 0.8),
            Mat2::rotation(0.7),
        ],
        vec![vec![0.5, 0.8, 0.8], vec![0.3, 0.1, 0.2], vec![0.2, 0.1, 0.0]],
        None,
    )
    .expect("valid")
}

fn random_invertible(rng: &mut ChaCha8Rng) -> Mat2 {
    loop {
        let m = Mat2::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        if m.det().abs() > 0.2 {
            return m;
        }
    }
}

fn random_rank_one(rng: &mut ChaCha8Rng) -> Mat2 {
    let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let b: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let s: f64 = rng.gen_range(0.5..2.0);
    Mat2::outer([s * a.cos(), s * a.sin()], [b.cos(), b.sin()])
}

fn random_probabilities(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn random_base(rng: &mut ChaCha8Rng, mats: Vec<Mat2>, markov: bool) -> Cocycle {
    let k = mats.len();
    if markov {
        let cols: Vec<Vec<f64>> = (0..k).map(|_| random_probabilities(rng, k)).collect();
        let pm = (0..k).map(|i| (0..k).map(|j| cols[j][i]).collect()).collect();
        Cocycle::markov(mats, pm, None).expect("valid")
    } else {
        let p = random_probabilities(rng, k);
        Cocycle::bernoulli(mats, p).expect("valid")
    }
}

/// Random cocycle whose first symbol is rank one and the rest invertible.
pub fn random_cocycle(k: usize, seed: u64, markov: bool) -> Cocycle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mats = vec![random_rank_one(&mut rng)];
    for _ in 1..k {
        mats.push(random_invertible(&mut rng));
    }
    random_base(&mut rng, mats, markov)
}

/// Random cocycle of invertible letters, both determinant signs allowed.
pub fn random_invertible_cocycle(k: usize, seed: u64) -> Cocycle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = (0..k).map(|_| random_invertible(&mut rng)).collect();
    let markov = rng.gen_bool(0.5);
    random_base(&mut rng, mats, markov)
}
