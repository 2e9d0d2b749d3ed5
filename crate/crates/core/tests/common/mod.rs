#![allow(dead_code, clippy::too_many_arguments)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use torus_kam::linalg::c;
use torus_kam::{CMatrix, Lattice, LinearDeck, TaylorLaurentSeries};

pub fn lattice(rng: &mut ChaCha8Rng, n: usize) -> Lattice {
    torus_kam::instance::random_lattice(n, rng).unwrap()
}

/// Generic complex vertical multipliers.
pub fn deck(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Lattice, LinearDeck) {
    let lat = lattice(rng, n);
    let mu = CMatrix::from_fn(n, d, |_, _| Complex64::from_polar(rng.random_range(0.6..1.5), rng.random_range(0.0..2.0 * PI)));
    let deck = LinearDeck::from_lattice(&lat, mu).unwrap();
    (lat, deck)
}

pub fn series(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize, q_max: u32, terms: usize, v_min: u32, p_abs: i32) -> TaylorLaurentSeries {
    let mut s = TaylorLaurentSeries::zero(n, d, m, q_max, 12).unwrap();
    for _ in 0..terms {
        let deg = rng.random_range(v_min..=q_max);
        let mut q = vec![0u32; d];
        for _ in 0..deg {
            q[rng.random_range(0..d)] += 1;
        }
        let p: Vec<i32> = (0..n).map(|_| rng.random_range(-p_abs..=p_abs)).collect();
        s.add_component_term(rng.random_range(0..m), &q, &p, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .unwrap();
    }
    s
}

pub fn max_coeff(s: &TaylorLaurentSeries) -> f64 {
    s.terms().iter().flat_map(|(_, z)| z.iter().map(|x| x.norm())).fold(0.0, f64::max)
}

pub fn max_coeff_diff(a: &TaylorLaurentSeries, b: &TaylorLaurentSeries) -> f64 {
    max_coeff(&a.sub(b).unwrap())
}

/// Upper shift on `C^k`.
pub fn shift(k: usize) -> CMatrix {
    CMatrix::from_fn(k, k, |i, j| if j == i + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) })
}

/// The pair `(λI + N, μI + N²)` with `N` the 3×3 shift.
pub fn example_pair(lam: f64, mu: f64) -> Vec<CMatrix> {
    let n = shift(3);
    let i3 = CMatrix::identity(3, 3);
    vec![&i3 * c(lam, 0.0) + &n, &i3 * c(mu, 0.0) + &n * &n]
}

/// `count` commuting nonsingular matrices of size `dim`: polynomials in one
/// matrix `S J S⁻¹`, `J` block upper triangular with possibly repeated
/// eigenvalues and nilpotent parts.
pub fn commuting_family(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<CMatrix> {
    let eig: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::from_polar(rng.random_range(0.5..2.0), rng.random_range(-3.0..3.0)))
        .collect();
    let mut j = CMatrix::from_fn(dim, dim, |a, b| if a == b { eig[a] } else { c(0.0, 0.0) });
    // glue some neighbours into Jordan-like blocks
    for a in 0..dim.saturating_sub(1) {
        if rng.random_bool(0.4) {
            j[(a + 1, a + 1)] = j[(a, a)];
            j[(a, a + 1)] = c(rng.random_range(0.2..1.0), 0.0);
        }
    }
    let s = CMatrix::from_fn(dim, dim, |a, b| {
        let base = if a == b { c(1.0, 0.0) } else { c(0.0, 0.0) };
        base + c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
    });
    let s_inv = s.clone().try_inverse().unwrap();
    let m = &s * &j * &s_inv;
    let id = CMatrix::identity(dim, dim);
    (0..count)
        .map(|_| {
            let a0 = Complex64::from_polar(rng.random_range(1.2..1.8), rng.random_range(-3.0..3.0));
            let a1 = c(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
            let a2 = c(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            &id * a0 + &m * a1 + &m * &m * a2
        })
        .collect()
}
