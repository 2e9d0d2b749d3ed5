//! The linearized conjugacy operators `L_i(φ) = φ∘τ̂_i − Dτ̂_i·φ`, the jet
//! compatibility `L_i F_j = L_j F_i`, and the coefficientwise small-divisor
//! solver for `L_m G = F_m`.

use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::diophantine::{self, DiophantineFit, Target, RESONANCE_TOL};
use crate::error::{Error, Result};
use crate::lattice::{DomainSpec, Lattice};
use crate::series::{DeckSystem, LinearDeck, Mono, TaylorLaurentSeries};

/// Divisors below this (relative) size are logged as near-resonant.
pub const NEAR_RESONANCE_WARN: f64 = 1e-8;

/// `φ∘τ̂_i − τ̂_i·φ`, coefficientwise: component `c` at `(Q, P)` is multiplied
/// by `λ_i^P μ_i^Q − (Dτ̂_i)_{cc}`.
pub fn apply_l(deck: &LinearDeck, i: usize, phi: &TaylorLaurentSeries) -> TaylorLaurentSeries {
    let mut cache: FxHashMap<Mono, Complex64> = FxHashMap::default();
    phi.map_coeffs(|c, k, z| {
        let mult = *cache.entry(k).or_insert_with(|| deck.multiplier_mono(i, k));
        z * (mult - deck.diag(i, c))
    })
}

/// Jet through order `order` of `τ_i∘τ_j − τ_j∘τ_i`, i.e.
/// `τ̂_iτ^•_j − τ̂_jτ^•_i + (τ^•_i∘τ̂_j)∘(Id + τ̂_j⁻¹τ^•_j) − (i ↔ j)`.
pub fn commutator_jet(sys: &DeckSystem, i: usize, j: usize, order: u32) -> Result<TaylorLaurentSeries> {
    let deck = sys.linear();
    let ti = sys.pert()[i].jet_truncate(order);
    let tj = sys.pert()[j].jet_truncate(order);
    let half = |a: &TaylorLaurentSeries, ia: usize, b: &TaylorLaurentSeries, ib: usize| -> Result<TaylorLaurentSeries> {
        let inner = b.deck_mul(deck, ib, true);
        let outer = a.compose_with_linear(deck, ib).compose(&inner)?;
        b.deck_mul(deck, ia, false).add(&outer)
    };
    Ok(half(&ti, i, &tj, j)?.sub(&half(&tj, j, &ti, i)?)?.jet_truncate(order))
}

/// Certified norm of the commutator jet on `dom`.
pub fn commutation_defect(sys: &DeckSystem, i: usize, j: usize, order: u32, dom: DomainSpec) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidParams("commutation defect needs two distinct generators".into()));
    }
    Ok(commutator_jet(sys, i, j, order)?.norm_upper(sys.lattice(), dom))
}

/// Tolerances for `d_a F_m = d_m F_a` at each key. `weighted_abs` is an
/// absolute slack in sup-norm units on a reference domain (so that roundoff
/// in coefficients that should vanish does not trip the test).
#[derive(Debug, Clone, Copy)]
pub struct CompatTolerance<'a> {
    pub rel: f64,
    pub weighted_abs: f64,
    pub weights: Option<(&'a Lattice, DomainSpec)>,
}

impl Default for CompatTolerance<'_> {
    fn default() -> Self {
        CompatTolerance { rel: 1e-9, weighted_abs: 0.0, weights: None }
    }
}

fn weight(tol: &CompatTolerance, n: usize, k: Mono) -> f64 {
    match tol.weights {
        Some((lat, dom)) => (lat.log_sup_h_pow(dom.eps, &k.p_vec(n)) + k.deg() as f64 * dom.r.ln()).exp(),
        None => 1.0,
    }
}

fn in_range(f: &[TaylorLaurentSeries], lo: u32, hi: u32) -> Vec<Mono> {
    let mut keys: Vec<Mono> = f
        .iter()
        .flat_map(|s| s.jet_range(lo, hi).keys())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

fn check_shapes(f: &[TaylorLaurentSeries], deck: &LinearDeck) -> Result<()> {
    let (n, d) = (deck.n(), deck.d());
    if f.len() != n || f.iter().any(|s| s.n() != n || s.d() != d || s.m() != n + d) {
        return Err(Error::Shape(format!("need {n} right-hand sides with {} components", n + d)));
    }
    Ok(())
}

fn first_incompatibility(f: &[TaylorLaurentSeries], deck: &LinearDeck, lo: u32, hi: u32, tol: &CompatTolerance) -> Option<Mono> {
    let (n, d) = (deck.n(), deck.d());
    for k in in_range(f, lo, hi) {
        let (q, p) = (k.q_vec(d), k.p_vec(n));
        let w = weight(tol, n, k);
        for c in 0..n + d {
            let t = Target::from_component(c, n);
            let rec = diophantine::small_divisor(deck, &p, &q, t);
            if rec.value <= RESONANCE_TOL * rec.scale {
                // every divisor vanishes; solve reports the resonance
                continue;
            }
            let a = rec.argmax;
            let divs: Vec<Complex64> = (0..n).map(|m| diophantine::divisor(deck, m, &p, &q, t)).collect();
            let dmax = divs.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let fa = f[a].coeff_mono(c, k);
            for m in 0..n {
                let lhs = divs[a] * f[m].coeff_mono(c, k);
                let rhs = divs[m] * fa;
                let slack = tol.rel * lhs.norm().max(rhs.norm()) + tol.weighted_abs * dmax / w;
                if (lhs - rhs).norm() > slack {
                    return Some(k);
                }
            }
        }
    }
    None
}

/// Checks `(λ_a^Pμ_a^Q − t_a) F_m = (λ_m^Pμ_m^Q − t_m) F_a` on `lo ≤ |Q| ≤ hi`,
/// `a` the argmax index, to `1e-9` relative.
pub fn compatibility_check(f: &[TaylorLaurentSeries], deck: &LinearDeck, lo: u32, hi: u32) -> bool {
    check_shapes(f, deck).is_ok() && first_incompatibility(f, deck, lo, hi, &CompatTolerance::default()).is_none()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohomSolveReport {
    pub jet_range: [u32; 2],
    /// Smallest divisor modulus actually divided by.
    pub max_divisor_used: f64,
    pub norm_g: f64,
    /// `max_i ‖G∘τ̂_i‖`.
    pub norm_g_composed: f64,
    /// Whether `|G_{Q,P}| ≤ max_i|F_{i,Q,P}|(|P|+|Q|)^τ/D` held everywhere.
    pub coeff_bound_ok: bool,
    /// Largest `|G_{Q,P}| / bound` seen.
    pub max_bound_ratio: f64,
    /// Number of divisors below the near-resonance warning threshold.
    pub near_resonant: usize,
}

/// Solves `L_m G = F_m` on `lo ≤ |Q| ≤ hi` with the default tolerances,
/// reporting norms on `(lat, dom)`.
pub fn solve(
    f: &[TaylorLaurentSeries],
    deck: &LinearDeck,
    jet_range: (u32, u32),
    fit: &DiophantineFit,
    lat: &Lattice,
    dom: DomainSpec,
) -> Result<(TaylorLaurentSeries, CohomSolveReport)> {
    solve_with(f, deck, jet_range, fit, lat, dom, &CompatTolerance::default())
}

pub fn solve_with(
    f: &[TaylorLaurentSeries],
    deck: &LinearDeck,
    (lo, hi): (u32, u32),
    fit: &DiophantineFit,
    lat: &Lattice,
    dom: DomainSpec,
    tol: &CompatTolerance,
) -> Result<(TaylorLaurentSeries, CohomSolveReport)> {
    check_shapes(f, deck)?;
    let (n, d) = (deck.n(), deck.d());
    if let Some(k) = first_incompatibility(f, deck, lo, hi, tol) {
        return Err(Error::IncompatibleRhs { p: k.p_vec(n), q: k.q_vec(d) });
    }
    let mut g = f[0].zero_like(n + d);
    let mut smallest = f64::INFINITY;
    let mut near = 0;
    let mut bound_ok = true;
    let mut ratio: f64 = 0.0;
    for k in in_range(f, lo, hi) {
        let (q, p) = (k.q_vec(d), k.p_vec(n));
        let order = k.p_l1() + k.deg();
        for c in 0..n + d {
            let fmax = f.iter().map(|s| s.coeff_mono(c, k).norm()).fold(0.0, f64::max);
            if fmax == 0.0 {
                continue;
            }
            let t = Target::from_component(c, n);
            let rec = diophantine::small_divisor(deck, &p, &q, t);
            if rec.value <= RESONANCE_TOL * rec.scale {
                return Err(Error::ResonantDivisor { p, q, target: t, value: rec.value });
            }
            if rec.value <= NEAR_RESONANCE_WARN * rec.scale {
                near += 1;
                log::warn!("near-resonant divisor {:e} at P={p:?} Q={q:?} target={t}", rec.value);
            }
            smallest = smallest.min(rec.value);
            let a = rec.argmax;
            let div = diophantine::divisor(deck, a, &p, &q, t);
            let gz = f[a].coeff_mono(c, k) / div;
            let bound = fmax * (order as f64).powf(fit.tau_exp) / fit.d_fit;
            ratio = ratio.max(gz.norm() / bound);
            if gz.norm() > bound * (1.0 + 1e-12) {
                bound_ok = false;
            }
            g.add_component_term(c, &q, &p, gz)?;
        }
    }
    let norm_g = g.norm_upper(lat, dom);
    let norm_g_composed = (0..n)
        .map(|i| g.compose_with_linear(deck, i).norm_upper(lat, dom))
        .fold(0.0, f64::max);
    let report = CohomSolveReport {
        jet_range: [lo, hi],
        max_divisor_used: smallest,
        norm_g,
        norm_g_composed,
        coeff_bound_ok: bound_ok,
        max_bound_ratio: ratio,
        near_resonant: near,
    };
    Ok((g, report))
}
