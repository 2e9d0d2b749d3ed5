//! Small divisors `λ_ℓ^P μ_ℓ^Q − λ_{ℓ,i}` / `− μ_{ℓ,j}`: non-resonance scans,
//! Diophantine constant fits over finite ranges, and generator changes.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::series::LinearDeck;

/// Anything at or below `RESONANCE_TOL·(1 + |λ^Pμ^Q| + |target|)` is an
/// exact resonance.
pub const RESONANCE_TOL: f64 = 1e-13;

/// Which eigenvalue a divisor is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Horizontal component `i` (against `λ_{ℓ,i}`).
    H(usize),
    /// Vertical component `j` (against `μ_{ℓ,j}`).
    V(usize),
}

impl Target {
    /// Position in an `(n+d)`-component map.
    pub fn component(self, n: usize) -> usize {
        match self {
            Target::H(i) => i,
            Target::V(j) => n + j,
        }
    }

    pub fn from_component(c: usize, n: usize) -> Target {
        if c < n {
            Target::H(c)
        } else {
            Target::V(c - n)
        }
    }

    pub fn all(n: usize, d: usize) -> impl Iterator<Item = Target> {
        (0..n).map(Target::H).chain((0..d).map(Target::V))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::H(i) => write!(f, "h{i}"),
            Target::V(j) => write!(f, "v{j}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisorRecord {
    #[serde(rename = "P")]
    pub p: Vec<i32>,
    #[serde(rename = "Q")]
    pub q: Vec<u32>,
    pub target: Target,
    /// `max_ℓ |λ_ℓ^P μ_ℓ^Q − target_ℓ|`.
    pub value: f64,
    /// The `ℓ` realizing the maximum (smallest on ties).
    pub argmax: usize,
    /// `1 + |λ_a^P μ_a^Q| + |target_a|` at the argmax, the resonance scale.
    #[serde(skip)]
    pub scale: f64,
}

impl DivisorRecord {
    pub fn order(&self) -> u32 {
        self.p.iter().map(|x| x.unsigned_abs()).sum::<u32>() + self.q.iter().sum::<u32>()
    }

    pub fn is_resonant(&self) -> bool {
        self.value <= RESONANCE_TOL * self.scale
    }
}

pub fn target_value(deck: &LinearDeck, l: usize, t: Target) -> Complex64 {
    match t {
        Target::H(i) => deck.lambda()[(l, i)],
        Target::V(j) => deck.mu()[(l, j)],
    }
}

/// The signed divisor `λ_ℓ^P μ_ℓ^Q − target_ℓ`.
pub fn divisor(deck: &LinearDeck, l: usize, p: &[i32], q: &[u32], t: Target) -> Complex64 {
    deck.multiplier(l, q, p) - target_value(deck, l, t)
}

pub fn small_divisor(deck: &LinearDeck, p: &[i32], q: &[u32], target: Target) -> DivisorRecord {
    let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
    for l in 0..deck.n() {
        let mult = deck.multiplier(l, q, p);
        let tv = target_value(deck, l, target);
        let v = (mult - tv).norm();
        if v > best.0 {
            best = (v, l, 1.0 + mult.norm() + tv.norm());
        }
    }
    DivisorRecord { p: p.to_vec(), q: q.to_vec(), target, value: best.0, argmax: best.1, scale: best.2 }
}

/// All `P ∈ ℤⁿ` with `|P|_1 ≤ max`, in lexicographic order.
pub fn laurent_indices(n: usize, max: u32) -> Vec<Vec<i32>> {
    fn rec(n: usize, budget: i32, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for x in -budget..=budget {
            cur.push(x);
            rec(n, budget - x.abs(), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, max as i32, &mut Vec::new(), &mut out);
    out
}

/// All `Q ∈ ℕ^d` with `|Q| = deg`.
pub fn taylor_indices(d: usize, deg: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == d {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for x in (0..=left).rev() {
            cur.push(x);
            rec(d, left - x, cur, out);
            cur.pop();
        }
    }
    if d == 0 {
        return if deg == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    rec(d, deg, &mut Vec::new(), &mut out);
    out
}

/// Every `(P, Q, target)` with `|P| + |Q| ≤ n_max` and `|Q| ∈ q_degrees`.
fn scan_records(deck: &LinearDeck, n_max: u32, q_lo: u32, q_hi: u32, targets: &[Target]) -> Vec<DivisorRecord> {
    let mut out = Vec::new();
    for qd in q_lo..=q_hi.min(n_max) {
        for q in taylor_indices(deck.d(), qd) {
            for p in laurent_indices(deck.n(), n_max - qd) {
                for &t in targets {
                    out.push(small_divisor(deck, &p, &q, t));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResult {
    pub ok: bool,
    pub witnesses: Vec<DivisorRecord>,
}

/// Scans `|P| + |Q| ≤ N`, `|Q| ≥ 2`, all targets.
pub fn nonresonance_scan(deck: &LinearDeck, n_max: u32) -> ScanResult {
    let targets: Vec<Target> = Target::all(deck.n(), deck.d()).collect();
    let witnesses: Vec<DivisorRecord> = scan_records(deck, n_max, 2, n_max, &targets)
        .into_iter()
        .filter(DivisorRecord::is_resonant)
        .collect();
    ScanResult { ok: witnesses.is_empty(), witnesses }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiophantineFit {
    pub tau_exp: f64,
    #[serde(rename = "D_fit")]
    pub d_fit: f64,
    #[serde(rename = "N_scan")]
    pub n_scan: u32,
    pub worst: Option<DivisorRecord>,
}

impl DiophantineFit {
    /// `D / (|P|+|Q|)^τ`, the guaranteed divisor size at that order.
    pub fn lower_bound(&self, order: u32) -> f64 {
        self.d_fit / (order as f64).powf(self.tau_exp)
    }
}

/// `D_fit = min value·(|P|+|Q|)^τ` over the scan.
pub fn diophantine_fit(deck: &LinearDeck, n_max: u32, tau_exp: f64) -> Result<DiophantineFit> {
    if n_max < 2 || !(tau_exp >= 0.0) {
        return Err(Error::InvalidParams("need N >= 2 and tau_exp >= 0".into()));
    }
    let targets: Vec<Target> = Target::all(deck.n(), deck.d()).collect();
    let mut best: Option<(f64, DivisorRecord)> = None;
    for rec in scan_records(deck, n_max, 2, n_max, &targets) {
        if rec.is_resonant() {
            return Err(Error::ResonantInput { p: rec.p, q: rec.q, target: rec.target });
        }
        let w = rec.value * (rec.order() as f64).powf(tau_exp);
        if best.as_ref().is_none_or(|b| w < b.0) {
            best = Some((w, rec));
        }
    }
    Ok(match best {
        Some((d, rec)) => DiophantineFit { tau_exp, d_fit: d, n_scan: n_max, worst: Some(rec) },
        None => DiophantineFit { tau_exp, d_fit: f64::INFINITY, n_scan: n_max, worst: None },
    })
}

/// `B = 2 max |λ_{k,i}|, |μ_{k,j}|`.
pub fn multiplier_bound(deck: &LinearDeck) -> f64 {
    2.0 * deck.lambda().iter().chain(deck.mu().iter()).map(|z| z.norm()).fold(0.0, f64::max)
}

/// Lower bound `D′ max_k|λ_k^P μ_k^Q| / (|P|+|Q|)^τ` with `D′ = min(D/B, 1/2)`.
pub fn enhanced_lower_bound(deck: &LinearDeck, fit: &DiophantineFit, p: &[i32], q: &[u32]) -> f64 {
    let d_prime = (fit.d_fit / multiplier_bound(deck)).min(0.5);
    let biggest = (0..deck.n()).map(|k| deck.multiplier(k, q, p).norm()).fold(0.0, f64::max);
    let order = p.iter().map(|x| x.unsigned_abs()).sum::<u32>() + q.iter().sum::<u32>();
    d_prime * biggest / (order as f64).powf(fit.tau_exp)
}

/// Re-expresses the deck in the generators `ẽ'_ℓ = Σ_k a_{ℓk} e'_k`.
pub fn change_generators(deck: &LinearDeck, a: &[Vec<i64>]) -> Result<LinearDeck> {
    let n = deck.n();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!("generator change must be {n}×{n}")));
    }
    let det = int_det(a);
    if det.abs() != 1 {
        return Err(Error::NotUnimodular { det });
    }
    let prod = |m: &CMatrix, l: usize, col: usize| -> Complex64 {
        let mut z = Complex64::new(1.0, 0.0);
        for k in 0..n {
            z *= m[(k, col)].powi(a[l][k] as i32);
        }
        z
    };
    let lambda = CMatrix::from_fn(n, n, |l, i| prod(deck.lambda(), l, i));
    let mu = CMatrix::from_fn(n, deck.d(), |l, j| prod(deck.mu(), l, j));
    LinearDeck::new(lambda, mu)
}

/// Exact determinant by fraction-free elimination.
pub fn int_det(a: &[Vec<i64>]) -> i64 {
    let n = a.len();
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    (sign * m[n - 1][n - 1]) as i64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingCheck {
    pub ok: bool,
    pub min_weighted: f64,
    pub worst: Option<DivisorRecord>,
}

/// The `|Q| = 1` horizontal divisor scan: `min value·(|P|+1)^τ > 0`.
pub fn splitting_divisor_check(deck: &LinearDeck, n_max: u32, tau_exp: f64) -> SplittingCheck {
    let targets: Vec<Target> = (0..deck.n()).map(Target::H).collect();
    let recs = scan_records(deck, n_max, 1, 1, &targets);
    // An exact resonance is reported at the lowest order it occurs.
    if let Some(r) = recs.iter().filter(|r| r.is_resonant()).min_by_key(|r| r.order()) {
        return SplittingCheck { ok: false, min_weighted: 0.0, worst: Some(r.clone()) };
    }
    let weighted = |r: &DivisorRecord| r.value * (r.order() as f64).powf(tau_exp);
    match recs.iter().min_by(|a, b| weighted(a).total_cmp(&weighted(b))) {
        Some(r) => SplittingCheck { ok: weighted(r) > 0.0, min_weighted: weighted(r), worst: Some(r.clone()) },
        None => SplittingCheck { ok: true, min_weighted: f64::INFINITY, worst: None },
    }
}

/// Sets `μ_{ℓ,j} = λ_ℓ^{-P}` so that `(P, 2e_j)` resonates against `μ_{·,j}`.
pub fn plant_vertical_resonance(deck: &LinearDeck, p: &[i32], j: usize) -> Result<LinearDeck> {
    let mut mu = deck.mu().clone();
    let zero_q = vec![0u32; deck.d()];
    for l in 0..deck.n() {
        mu[(l, j)] = deck.multiplier(l, &zero_q, p).inv();
    }
    LinearDeck::new(deck.lambda().clone(), mu)
}
