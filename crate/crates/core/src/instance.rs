//! Synthetic test systems with known answers.
//!
//! * conjugated: `τ_i = Φ∘τ̂_i∘Φ⁻¹` for a random sparse `Φ = Id + g`, so the
//!   linearizing map is known (`g`) and the `τ_i` commute through `Q_max`;
//! * planted resonance: `μ_{·,j} = λ^{−P}` makes `(P, 2e_j)` resonant for the
//!   vertical target `j`, and `τ_i = τ̂_i∘exp(X)` with the resonant field
//!   `X = c h^P v_j² ∂_{v_j}`, which commutes with every `τ̂_i` but cannot be
//!   removed.
//!
//! All randomness is ChaCha8 seeded from a `u64`.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::diophantine::{self, Target};
use crate::error::{Error, Result};
use crate::lattice::{DomainSpec, Lattice};
use crate::linalg::{c, CMatrix};
use crate::series::{DeckSystem, LinearDeck, TaylorLaurentSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub q_max: u32,
    pub p_max: u32,
    /// Sup-norm of `g` (conjugated) or of `τ^•` (planted) on `dom`.
    pub pert_norm: f64,
    pub terms_per_component: usize,
    pub dom: DomainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedResonance {
    #[serde(rename = "P")]
    pub p: Vec<i32>,
    #[serde(rename = "Q")]
    pub q: Vec<u32>,
    pub target: Target,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub system: DeckSystem,
    /// The map `g` with `(Id + g)∘τ̂_i = τ_i∘(Id + g)`, when known.
    pub phi_true: Option<TaylorLaurentSeries>,
    pub planted: Option<PlantedResonance>,
}

/// A lattice with `Im e′` diagonally dominant, diagonal in `[0.25, 0.6]`.
pub fn random_lattice(n: usize, rng: &mut ChaCha8Rng) -> Result<Lattice> {
    Lattice::new(CMatrix::from_fn(n, n, |i, j| {
        let im = if i == j { rng.random_range(0.25..0.6) } else { rng.random_range(-0.05..0.05) };
        c(rng.random_range(-0.5..0.5), im)
    }))
}

/// Real vertical multipliers in `[0.5, 2]`.
pub fn random_real_mu(n: usize, d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(n, d, |_, _| c(rng.random_range(0.5..2.0), 0.0))
}

/// Random sparse `g` vanishing to order 2: vertical terms `h^P v^Q` with
/// `|Q| = 2, P = 0` or `|Q| = 3, |P|_∞ ≤ 1`; horizontal terms `h_k h^P v^Q`
/// with `|Q| = 2, |P|_∞ ≤ 1`. Scaled to sup-norm `pert_norm` on `dom`.
pub fn random_sparse_map(lat: &Lattice, d: usize, shape: &InstanceShape, rng: &mut ChaCha8Rng) -> Result<TaylorLaurentSeries> {
    let n = lat.n();
    let mut g = TaylorLaurentSeries::zero(n, d, n + d, shape.q_max, shape.p_max)?;
    if shape.pert_norm == 0.0 || shape.q_max < 2 {
        return Ok(g);
    }
    let unit_p = |rng: &mut ChaCha8Rng| -> Vec<i32> { (0..n).map(|_| rng.random_range(-1..=1)).collect() };
    for comp in 0..n + d {
        for _ in 0..shape.terms_per_component {
            let (deg, p) = if comp < n {
                let mut p = unit_p(rng);
                p[comp] += 1;
                (2, p)
            } else if shape.q_max >= 3 && rng.random_bool(0.5) {
                (3, unit_p(rng))
            } else {
                (2, vec![0; n])
            };
            let mut q = vec![0u32; d];
            for _ in 0..deg {
                q[rng.random_range(0..d)] += 1;
            }
            let w = lat.sup_h_pow(shape.dom.eps, &p) * shape.dom.r.powi(deg);
            let a = Complex64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI));
            g.add_component_term(comp, &q, &p, a / w)?;
        }
    }
    let norm = g.norm_upper(lat, shape.dom);
    Ok(if norm > 0.0 { g.scale(c(shape.pert_norm / norm, 0.0)) } else { g })
}

/// `τ^•_i` of `(Id + g)∘τ̂_i∘(Id + g)⁻¹`: with `(Id + g)⁻¹ = Id − ψ`,
/// `τ^•_i = −τ̂_iψ + (g∘τ̂_i)∘(Id − ψ)`.
pub fn conjugate_linear(lat: Lattice, deck: LinearDeck, g: &TaylorLaurentSeries) -> Result<DeckSystem> {
    let psi = crate::kam::invert_map(g, 1).or_else(|e| if g.is_zero() { Ok(g.clone()) } else { Err(e) })?;
    let mpsi = psi.neg();
    let pert = (0..deck.n())
        .map(|i| {
            let tail = g.compose_with_linear(&deck, i).compose(&mpsi)?;
            psi.deck_mul(&deck, i, false).neg().add(&tail)
        })
        .collect::<Result<Vec<_>>>()?;
    DeckSystem::new(lat, deck, pert)
}

pub fn conjugated(lat: Lattice, mu: CMatrix, shape: &InstanceShape, rng: &mut ChaCha8Rng) -> Result<Instance> {
    let deck = LinearDeck::from_lattice(&lat, mu)?;
    let g = random_sparse_map(&lat, deck.d(), shape, rng)?;
    let system = conjugate_linear(lat, deck, &g)?;
    Ok(Instance { system, phi_true: Some(g), planted: None })
}

/// Plants the resonance `(P, 2e_j)` on the vertical target `j` (`μ_{·,j}` is
/// overwritten) and builds `τ_i = τ̂_i∘exp(X)`. Terms of `exp(X)` whose `P`
/// leaves the band are dropped; they sit at high vertical order.
pub fn planted(lat: Lattice, mu: CMatrix, p: &[i32], j: usize, shape: &InstanceShape) -> Result<Instance> {
    let (n, d) = (lat.n(), mu.ncols());
    if p.len() != n || j >= d {
        return Err(Error::Shape(format!("planted P needs {n} entries and j < {d}")));
    }
    if p.iter().all(|&x| x == 0) || p.iter().any(|&x| x.unsigned_abs() > shape.p_max) {
        return Err(Error::InvalidParams("planted P must be nonzero and inside the Laurent band".into()));
    }
    if shape.q_max < 2 {
        return Err(Error::InvalidParams("planting needs Q_max >= 2".into()));
    }
    let deck = diophantine::plant_vertical_resonance(&LinearDeck::from_lattice(&lat, mu)?, p, j)?;
    // exp(X): v_j ↦ v_j / (1 − c h^P v_j) = Σ_m c^{m−1} h^{(m−1)P} v_j^m
    let coef = shape.pert_norm / (lat.sup_h_pow(shape.dom.eps, p) * shape.dom.r.powi(2));
    let mut pert = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = TaylorLaurentSeries::zero(n, d, n + d, shape.q_max, shape.p_max)?;
        let muij = deck.mu()[(i, j)];
        for m in 2..=shape.q_max {
            let pm: Vec<i32> = p.iter().map(|&x| x * (m as i32 - 1)).collect();
            if pm.iter().any(|x| x.unsigned_abs() > shape.p_max) {
                break;
            }
            let mut q = vec![0u32; d];
            q[j] = m;
            t.add_component_term(n + j, &q, &pm, muij * coef.powi(m as i32 - 1))?;
        }
        pert.push(t);
    }
    let system = DeckSystem::new(lat, deck, pert)?;
    let mut q = vec![0u32; d];
    q[j] = 2;
    Ok(Instance { system, phi_true: None, planted: Some(PlantedResonance { p: p.to_vec(), q, target: Target::V(j) }) })
}
