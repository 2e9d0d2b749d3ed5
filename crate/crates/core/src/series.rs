//! Truncated Taylor–Laurent series `Σ c_{Q,P} h^P v^Q` with `P ∈ ℤⁿ`,
//! `Q ∈ ℕ^d`, vector-valued coefficients, jet-exact composition and certified
//! sup-norm bounds over `Ω_{ε,r}`.
//!
//! Storage is sparse, one coefficient table per component, bucketed by the
//! vertical degree `|Q|` so that products and compositions only ever touch
//! pairs whose degrees fit under `Q_max`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DomainSpec, Lattice};
use crate::linalg::{self, CMatrix};

/// Largest supported `n` and `d`.
pub const MAX_VARS: usize = 4;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const P_OFF: u128 = 0x8000_8000_8000_8000;

/// A monomial `h^P v^Q` packed into sixteen-bit lanes, most significant
/// first: `Q_1..Q_4` then `P_1..P_4` (offset by `2^15`). Integer order is the
/// lexicographic order on `(Q, P)`, and multiplication is lane-wise addition.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Mono(u128);

fn q_shift(j: usize) -> u32 {
    112 - 16 * j as u32
}

fn p_shift(k: usize) -> u32 {
    48 - 16 * k as u32
}

impl Mono {
    pub const ONE: Mono = Mono(P_OFF);

    pub fn new(q: &[u32], p: &[i32]) -> Mono {
        debug_assert!(q.len() <= MAX_VARS && p.len() <= MAX_VARS);
        let mut bits = P_OFF;
        for (j, &qj) in q.iter().enumerate() {
            bits += (qj as u128) << q_shift(j);
        }
        for (k, &pk) in p.iter().enumerate() {
            bits = bits.wrapping_add(((pk as i128) << p_shift(k)) as u128);
        }
        Mono(bits)
    }

    pub fn q(self, j: usize) -> u32 {
        (self.0 >> q_shift(j)) as u16 as u32
    }

    pub fn p(self, k: usize) -> i32 {
        (self.0 >> p_shift(k)) as u16 as i32 - 0x8000
    }

    pub fn q_vec(self, d: usize) -> Vec<u32> {
        (0..d).map(|j| self.q(j)).collect()
    }

    pub fn p_vec(self, n: usize) -> Vec<i32> {
        (0..n).map(|k| self.p(k)).collect()
    }

    /// `|Q|`.
    pub fn deg(self) -> u32 {
        let hi = (self.0 >> 64) as u64;
        (hi & 0xffff) as u32 + (hi >> 16 & 0xffff) as u32 + (hi >> 32 & 0xffff) as u32 + (hi >> 48) as u32
    }

    /// `|P|_∞`.
    pub fn p_inf(self) -> u32 {
        (0..MAX_VARS).map(|k| self.p(k).unsigned_abs()).max().unwrap()
    }

    /// `|P|_1`.
    pub fn p_l1(self) -> u32 {
        (0..MAX_VARS).map(|k| self.p(k).unsigned_abs()).sum()
    }

    pub fn mul(self, o: Mono) -> Mono {
        Mono(self.0.wrapping_add(o.0).wrapping_sub(P_OFF))
    }

    fn h_step(k: usize) -> u128 {
        1u128 << p_shift(k)
    }

    fn v_step(j: usize) -> u128 {
        1u128 << q_shift(j)
    }
}

/// One scalar component, bucketed by `|Q|`; each bucket is sorted.
#[derive(Clone, Debug, PartialEq, Default)]
struct Scalar {
    by_deg: Vec<Vec<(Mono, Complex64)>>,
}

type Acc = FxHashMap<Mono, Complex64>;

impl Scalar {
    fn zero(q_max: u32) -> Self {
        Scalar { by_deg: vec![Vec::new(); q_max as usize + 1] }
    }

    fn from_acc(acc: Acc, q_max: u32) -> Self {
        let mut s = Scalar::zero(q_max);
        for (k, c) in acc {
            if c != ZERO {
                s.by_deg[k.deg() as usize].push((k, c));
            }
        }
        for b in &mut s.by_deg {
            b.sort_unstable_by_key(|t| t.0);
        }
        s
    }

    fn is_zero(&self) -> bool {
        self.by_deg.iter().all(Vec::is_empty)
    }

    /// Lowest degree present, `None` for the zero series.
    fn v_min(&self) -> Option<u32> {
        self.by_deg.iter().position(|b| !b.is_empty()).map(|p| p as u32)
    }

    fn iter(&self) -> impl Iterator<Item = &(Mono, Complex64)> {
        self.by_deg.iter().flatten()
    }

    fn len(&self) -> usize {
        self.by_deg.iter().map(Vec::len).sum()
    }

    fn get(&self, k: Mono) -> Complex64 {
        let b = &self.by_deg[k.deg() as usize];
        b.binary_search_by_key(&k, |t| t.0).map_or(ZERO, |i| b[i].1)
    }

    fn map(&self, mut f: impl FnMut(Mono, Complex64) -> Complex64) -> Self {
        let by_deg = self
            .by_deg
            .iter()
            .map(|b| b.iter().map(|&(k, c)| (k, f(k, c))).filter(|t| t.1 != ZERO).collect())
            .collect();
        Scalar { by_deg }
    }

    fn accumulate(&self, acc: &mut Acc, w: Complex64) {
        for &(k, c) in self.iter() {
            *acc.entry(k).or_insert(ZERO) += w * c;
        }
    }

    /// `acc += self·other`, keeping degrees `≤ q_max`.
    fn mul_acc(&self, other: &Scalar, q_max: u32, acc: &mut Acc) {
        for (da, ba) in self.by_deg.iter().enumerate() {
            if ba.is_empty() || da as u32 > q_max {
                continue;
            }
            for bb in other.by_deg.iter().take(q_max as usize - da + 1) {
                for &(kb, cb) in bb {
                    for &(ka, ca) in ba {
                        *acc.entry(ka.mul(kb)).or_insert(ZERO) += ca * cb;
                    }
                }
            }
        }
    }

    fn mul(&self, other: &Scalar, q_max: u32) -> Scalar {
        let mut acc = Acc::default();
        self.mul_acc(other, q_max, &mut acc);
        Scalar::from_acc(acc, q_max)
    }

    /// `∂/∂h_k` (Laurent exponents lower by one).
    fn d_h(&self, k: usize) -> Scalar {
        let step = Mono::h_step(k);
        let by_deg = self
            .by_deg
            .iter()
            .map(|b| {
                b.iter()
                    .filter(|t| t.0.p(k) != 0)
                    .map(|&(m, c)| (Mono(m.0 - step), c * m.p(k) as f64))
                    .collect()
            })
            .collect();
        Scalar { by_deg }
    }

    /// `∂/∂v_j`.
    fn d_v(&self, j: usize) -> Scalar {
        let step = Mono::v_step(j);
        let mut by_deg = vec![Vec::new(); self.by_deg.len()];
        for (deg, b) in self.by_deg.iter().enumerate().skip(1) {
            by_deg[deg - 1] = b
                .iter()
                .filter(|t| t.0.q(j) != 0)
                .map(|&(m, c)| (Mono(m.0 - step), c * m.q(j) as f64))
                .collect();
        }
        Scalar { by_deg }
    }
}

/// Diagonal linear parts `τ̂_j(h, v) = (T_j h, M_j v)` of the model deck maps:
/// `T_j = diag(λ_{j,·})`, `M_j = diag(μ_{j,·})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeckRepr", into = "DeckRepr")]
pub struct LinearDeck {
    lambda: CMatrix,
    mu: CMatrix,
    ln_lambda: CMatrix,
    ln_mu: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct DeckRepr {
    #[serde(with = "linalg::serde_matrix")]
    lambda: CMatrix,
    #[serde(with = "linalg::serde_matrix")]
    mu: CMatrix,
}

impl TryFrom<DeckRepr> for LinearDeck {
    type Error = Error;
    fn try_from(r: DeckRepr) -> Result<Self> {
        LinearDeck::new(r.lambda, r.mu)
    }
}

impl From<LinearDeck> for DeckRepr {
    fn from(l: LinearDeck) -> Self {
        DeckRepr { lambda: l.lambda, mu: l.mu }
    }
}

impl LinearDeck {
    pub fn new(lambda: CMatrix, mu: CMatrix) -> Result<Self> {
        let n = lambda.nrows();
        if n == 0 || lambda.ncols() != n || mu.nrows() != n {
            return Err(Error::Shape("lambda must be n×n and mu n×d".into()));
        }
        if n > MAX_VARS || mu.ncols() > MAX_VARS {
            return Err(Error::Shape(format!("at most {MAX_VARS} horizontal and vertical variables")));
        }
        if lambda.iter().chain(mu.iter()).any(|z| z.norm() == 0.0 || !z.is_finite()) {
            return Err(Error::InvalidParams("deck multipliers must be finite and nonzero".into()));
        }
        Ok(LinearDeck { ln_lambda: lambda.map(|z| z.ln()), ln_mu: mu.map(|z| z.ln()), lambda, mu })
    }

    /// `λ` from the lattice, `μ` given.
    pub fn from_lattice(lat: &Lattice, mu: CMatrix) -> Result<Self> {
        LinearDeck::new(lat.multipliers(), mu)
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn d(&self) -> usize {
        self.mu.ncols()
    }

    pub fn lambda(&self) -> &CMatrix {
        &self.lambda
    }

    pub fn mu(&self) -> &CMatrix {
        &self.mu
    }

    /// `ln(λ_j^P μ_j^Q)`, summed in log space.
    pub fn ln_multiplier(&self, j: usize, q: &[u32], p: &[i32]) -> Complex64 {
        let mut s = ZERO;
        for (k, &pk) in p.iter().enumerate() {
            s += self.ln_lambda[(j, k)] * pk as f64;
        }
        for (l, &ql) in q.iter().enumerate() {
            s += self.ln_mu[(j, l)] * ql as f64;
        }
        s
    }

    /// `λ_j^P μ_j^Q`.
    pub fn multiplier(&self, j: usize, q: &[u32], p: &[i32]) -> Complex64 {
        self.ln_multiplier(j, q, p).exp()
    }

    pub fn multiplier_mono(&self, j: usize, m: Mono) -> Complex64 {
        let mut s = ZERO;
        for k in 0..self.n() {
            s += self.ln_lambda[(j, k)] * m.p(k) as f64;
        }
        for l in 0..self.d() {
            s += self.ln_mu[(j, l)] * m.q(l) as f64;
        }
        s.exp()
    }

    /// Diagonal entry of `Dτ̂_j` acting on component `c` of an `(n+d)`-vector.
    pub fn diag(&self, j: usize, c: usize) -> Complex64 {
        let n = self.n();
        if c < n {
            self.lambda[(j, c)]
        } else {
            self.mu[(j, c - n)]
        }
    }
}

/// A truncated series with `m` components. Keys satisfy `|Q| ≤ Q_max` and
/// `|P|_∞ ≤ P_max`; exact zeros are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesRepr", into = "SeriesRepr")]
pub struct TaylorLaurentSeries {
    n: usize,
    d: usize,
    q_max: u32,
    p_max: u32,
    comps: Vec<Scalar>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    #[serde(rename = "Q")]
    q: Vec<u32>,
    #[serde(rename = "P")]
    p: Vec<i32>,
    c: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SeriesRepr {
    n: usize,
    d: usize,
    m: usize,
    #[serde(rename = "Q_max")]
    q_max: u32,
    #[serde(rename = "P_max")]
    p_max: u32,
    coeffs: Vec<TermRepr>,
}

impl TryFrom<SeriesRepr> for TaylorLaurentSeries {
    type Error = Error;
    fn try_from(r: SeriesRepr) -> Result<Self> {
        let mut s = TaylorLaurentSeries::zero(r.n, r.d, r.m, r.q_max, r.p_max)?;
        for t in r.coeffs {
            if t.c.len() != r.m {
                return Err(Error::Shape(format!("coefficient has {} entries, expected {}", t.c.len(), r.m)));
            }
            let c: Vec<Complex64> = t.c.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
            s.add_term(&t.q, &t.p, &c)?;
        }
        Ok(s)
    }
}

impl From<TaylorLaurentSeries> for SeriesRepr {
    fn from(s: TaylorLaurentSeries) -> Self {
        let coeffs = s
            .terms()
            .into_iter()
            .map(|(k, c)| TermRepr {
                q: k.q_vec(s.d),
                p: k.p_vec(s.n),
                c: c.iter().map(|z| [z.re, z.im]).collect(),
            })
            .collect();
        SeriesRepr { n: s.n, d: s.d, m: s.comps.len(), q_max: s.q_max, p_max: s.p_max, coeffs }
    }
}

impl TaylorLaurentSeries {
    pub fn zero(n: usize, d: usize, m: usize, q_max: u32, p_max: u32) -> Result<Self> {
        if n == 0 || n > MAX_VARS || d > MAX_VARS || m == 0 {
            return Err(Error::Shape(format!("unsupported series shape n={n}, d={d}, m={m}")));
        }
        if q_max > 1000 || p_max > 10_000 {
            return Err(Error::Shape("truncation orders out of range".into()));
        }
        Ok(TaylorLaurentSeries { n, d, q_max, p_max, comps: vec![Scalar::zero(q_max); m] })
    }

    /// Zero series with the shape of `self`, `m` components.
    pub fn zero_like(&self, m: usize) -> Self {
        TaylorLaurentSeries { comps: vec![Scalar::zero(self.q_max); m], ..self.clone_shape() }
    }

    fn clone_shape(&self) -> Self {
        TaylorLaurentSeries { n: self.n, d: self.d, q_max: self.q_max, p_max: self.p_max, comps: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.comps.len()
    }

    pub fn q_max(&self) -> u32 {
        self.q_max
    }

    pub fn p_max(&self) -> u32 {
        self.p_max
    }

    /// Smallest `|Q|` carrying a nonzero coefficient; `Q_max + 1` for zero.
    pub fn v_min(&self) -> u32 {
        self.comps.iter().filter_map(Scalar::v_min).min().unwrap_or(self.q_max + 1)
    }

    pub fn component_v_min(&self, c: usize) -> u32 {
        self.comps[c].v_min().unwrap_or(self.q_max + 1)
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Scalar::is_zero)
    }

    /// Number of stored `(component, key)` entries.
    pub fn nnz(&self) -> usize {
        self.comps.iter().map(Scalar::len).sum()
    }

    pub fn key(&self, q: &[u32], p: &[i32]) -> Result<Mono> {
        if q.len() != self.d || p.len() != self.n {
            return Err(Error::Shape(format!("monomial needs |Q|-vector of length {} and P of length {}", self.d, self.n)));
        }
        let k = Mono::new(q, p);
        if k.deg() > self.q_max || k.p_inf() > self.p_max {
            return Err(Error::Shape(format!("monomial Q={q:?} P={p:?} outside the truncation box")));
        }
        Ok(k)
    }

    /// Adds `c` (one entry per component) to the coefficient of `h^P v^Q`.
    pub fn add_term(&mut self, q: &[u32], p: &[i32], c: &[Complex64]) -> Result<()> {
        if c.len() != self.m() {
            return Err(Error::Shape("coefficient vector has the wrong length".into()));
        }
        let k = self.key(q, p)?;
        for (comp, &z) in c.iter().enumerate() {
            if z != ZERO {
                self.add_mono(comp, k, z);
            }
        }
        Ok(())
    }

    pub fn add_component_term(&mut self, comp: usize, q: &[u32], p: &[i32], c: Complex64) -> Result<()> {
        let k = self.key(q, p)?;
        if comp >= self.m() {
            return Err(Error::Shape("component index out of range".into()));
        }
        if c != ZERO {
            self.add_mono(comp, k, c);
        }
        Ok(())
    }

    fn add_mono(&mut self, comp: usize, k: Mono, c: Complex64) {
        let b = &mut self.comps[comp].by_deg[k.deg() as usize];
        match b.binary_search_by_key(&k, |t| t.0) {
            Ok(i) => {
                b[i].1 += c;
                if b[i].1 == ZERO {
                    b.remove(i);
                }
            }
            Err(i) => b.insert(i, (k, c)),
        }
    }

    pub fn coeff(&self, comp: usize, q: &[u32], p: &[i32]) -> Complex64 {
        self.comps[comp].get(Mono::new(q, p))
    }

    pub fn coeff_mono(&self, comp: usize, k: Mono) -> Complex64 {
        self.comps[comp].get(k)
    }

    /// Terms of one component, by degree then key.
    pub fn component_terms(&self, comp: usize) -> impl Iterator<Item = (Mono, Complex64)> + '_ {
        self.comps[comp].iter().copied()
    }

    /// The union of all keys with their coefficient vectors, sorted by `(Q, P)`.
    pub fn terms(&self) -> Vec<(Mono, Vec<Complex64>)> {
        let mut keys: Vec<Mono> = self.comps.iter().flat_map(|s| s.iter().map(|t| t.0)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|k| (k, self.comps.iter().map(|s| s.get(k)).collect()))
            .collect()
    }

    /// Keys present in any component, sorted.
    pub fn keys(&self) -> Vec<Mono> {
        self.terms().into_iter().map(|t| t.0).collect()
    }

    fn check_shape(&self, o: &Self) -> Result<()> {
        if self.n != o.n || self.d != o.d || self.m() != o.m() {
            return Err(Error::Shape("series shapes differ".into()));
        }
        Ok(())
    }

    /// `self + w·o`.
    pub fn axpy(&self, w: Complex64, o: &Self) -> Result<Self> {
        self.check_shape(o)?;
        let comps = self
            .comps
            .iter()
            .zip(&o.comps)
            .map(|(a, b)| {
                let mut acc = Acc::default();
                a.accumulate(&mut acc, Complex64::new(1.0, 0.0));
                b.accumulate(&mut acc, w);
                let mut s = Scalar::from_acc(acc, self.q_max);
                s.by_deg.iter_mut().enumerate().for_each(|(deg, bkt)| {
                    if deg as u32 > self.q_max {
                        bkt.clear()
                    }
                });
                s
            })
            .collect();
        Ok(TaylorLaurentSeries { comps, ..self.clone_shape() })
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.axpy(Complex64::new(1.0, 0.0), o)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.axpy(Complex64::new(-1.0, 0.0), o)
    }

    pub fn scale(&self, w: Complex64) -> Self {
        self.map_coeffs(|_, _, c| c * w)
    }

    pub fn neg(&self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// Coefficientwise map `(component, key, c) ↦ c'`; zeros are dropped.
    pub fn map_coeffs(&self, mut f: impl FnMut(usize, Mono, Complex64) -> Complex64) -> Self {
        let comps = self.comps.iter().enumerate().map(|(i, s)| s.map(|k, c| f(i, k, c))).collect();
        TaylorLaurentSeries { comps, ..self.clone_shape() }
    }

    /// Keeps only the components listed.
    pub fn select(&self, comps: &[usize]) -> Self {
        TaylorLaurentSeries { comps: comps.iter().map(|&c| self.comps[c].clone()).collect(), ..self.clone_shape() }
    }

    /// Builds a vector series from scalar (`m = 1`) parts.
    pub fn stack(parts: &[TaylorLaurentSeries]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to stack".into()))?;
        let mut comps = Vec::new();
        for p in parts {
            if p.n != first.n || p.d != first.d || p.q_max != first.q_max {
                return Err(Error::Shape("stacked series shapes differ".into()));
            }
            comps.extend(p.comps.iter().cloned());
        }
        Ok(TaylorLaurentSeries { comps, ..first.clone_shape() })
    }

    /// Product of two scalar series, truncated at `Q_max` (no band applied).
    pub fn mul(&self, o: &Self) -> Result<Self> {
        if self.m() != 1 || o.m() != 1 {
            return Err(Error::Shape("products are defined for scalar series".into()));
        }
        self.check_shape(o)?;
        Ok(TaylorLaurentSeries { comps: vec![self.comps[0].mul(&o.comps[0], self.q_max)], ..self.clone_shape() })
    }

    /// Drops all terms with `|Q| > q`.
    pub fn jet_truncate(&self, q: u32) -> Self {
        self.jet_range(0, q)
    }

    /// Keeps `lo ≤ |Q| ≤ hi`.
    pub fn jet_range(&self, lo: u32, hi: u32) -> Self {
        let comps = self
            .comps
            .iter()
            .map(|s| Scalar {
                by_deg: s
                    .by_deg
                    .iter()
                    .enumerate()
                    .map(|(deg, b)| if (lo..=hi).contains(&(deg as u32)) { b.clone() } else { Vec::new() })
                    .collect(),
            })
            .collect();
        TaylorLaurentSeries { comps, ..self.clone_shape() }
    }

    pub fn eval(&self, h: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>> {
        if h.len() != self.n || v.len() != self.d {
            return Err(Error::Shape("evaluation point has the wrong dimension".into()));
        }
        if let Some(k) = h.iter().position(|z| *z == ZERO) {
            return Err(Error::ZeroHCoordinate(k));
        }
        let mut cache: FxHashMap<Mono, Complex64> = FxHashMap::default();
        let mut mono_val = |k: Mono| {
            *cache.entry(k).or_insert_with(|| {
                let mut z = Complex64::new(1.0, 0.0);
                for (i, hi) in h.iter().enumerate() {
                    z *= hi.powi(k.p(i));
                }
                for (j, vj) in v.iter().enumerate() {
                    z *= vj.powi(k.q(j) as i32);
                }
                z
            })
        };
        Ok(self.comps.iter().map(|s| s.iter().map(|&(k, c)| c * mono_val(k)).sum()).collect())
    }

    /// `f∘τ̂_j`: coefficient `(Q, P)` picks up `λ_j^P μ_j^Q`.
    pub fn compose_with_linear(&self, deck: &LinearDeck, j: usize) -> Self {
        let mut cache: FxHashMap<Mono, Complex64> = FxHashMap::default();
        self.map_coeffs(|_, k, c| c * *cache.entry(k).or_insert_with(|| deck.multiplier_mono(j, k)))
    }

    /// `Dτ̂_j·f` (or its inverse): component `c` is multiplied by `λ_{j,c}`
    /// (horizontal) or `μ_{j,c-n}` (vertical). Requires `m = n + d`.
    pub fn deck_mul(&self, deck: &LinearDeck, j: usize, inverse: bool) -> Self {
        debug_assert_eq!(self.m(), self.n + self.d);
        self.map_coeffs(|c, _, z| if inverse { z / deck.diag(j, c) } else { z * deck.diag(j, c) })
    }

    /// `f∘(Id + ĝ)` through order `Q_max`, with the ℓ1 mass of coefficients
    /// pushed out of the Laurent band. `ĝ` has `n + d` components, each
    /// vanishing at `v = 0`.
    pub fn compose_tracked(&self, ghat: &Self) -> Result<(Self, f64)> {
        let nv = self.n + self.d;
        if ghat.n != self.n || ghat.d != self.d || ghat.m() != nv {
            return Err(Error::Shape("inner map must have n + d components of the same shape".into()));
        }
        let q_max = self.q_max;
        let gv: Vec<u32> = (0..nv).map(|k| ghat.component_v_min(k)).collect();
        if gv.contains(&0) {
            return Err(Error::Shape("inner perturbation must vanish on v = 0".into()));
        }
        // pow[k][a] = ĝ_k^a / a!
        let pows: Vec<Vec<Scalar>> = (0..nv)
            .map(|k| {
                let mut out = vec![];
                if gv[k] > q_max {
                    return out;
                }
                let g = &ghat.comps[k];
                let mut cur: Option<Scalar> = None;
                let mut a = 1u32;
                while a * gv[k] <= q_max {
                    let next = match &cur {
                        None => g.clone(),
                        Some(c) => c.mul(g, q_max).map(|_, z| z / a as f64),
                    };
                    out.push(next.clone());
                    cur = Some(next);
                    a += 1;
                }
                out
            })
            .collect();

        let mut acc: Vec<Acc> = vec![Acc::default(); self.m()];
        let ctx = ComposeCtx { n: self.n, nv, q_max, gv: &gv, pows: &pows };
        ctx.dfs(0, None, 0, self.comps.clone(), &mut acc);

        let mut dropped = 0.0;
        let comps = acc
            .into_iter()
            .map(|a| {
                let mut keep = Acc::default();
                for (k, c) in a {
                    if k.p_inf() > self.p_max {
                        dropped += c.norm();
                    } else {
                        keep.insert(k, c);
                    }
                }
                Scalar::from_acc(keep, q_max)
            })
            .collect();
        Ok((TaylorLaurentSeries { comps, ..self.clone_shape() }, dropped))
    }

    /// `f∘(Id + ĝ)`; any coefficient mass outside the Laurent band is an error.
    pub fn compose(&self, ghat: &Self) -> Result<Self> {
        let (out, dropped) = self.compose_tracked(ghat)?;
        if dropped > 0.0 {
            return Err(Error::PBandOverflow { dropped_mass: dropped });
        }
        Ok(out)
    }

    /// `max_c Σ |c_{Q,P}| sup_{Ω_ε}|h^P| r^{|Q|}` — a certified bound on the
    /// sup norm over `Ω_{ε,r}`.
    /// Outward-rounded, so it also dominates pointwise evaluations that hit
    /// the boundary of the domain exactly.
    pub fn norm_upper(&self, lat: &Lattice, dom: DomainSpec) -> f64 {
        self.component_norms(lat, dom).into_iter().fold(0.0, f64::max) * (1.0 + 64.0 * f64::EPSILON)
    }

    pub fn component_norms(&self, lat: &Lattice, dom: DomainSpec) -> Vec<f64> {
        let mut w = Weights::new(lat, dom, self.n);
        self.comps.iter().map(|s| s.iter().map(|&(k, c)| c.norm() * w.get(k)).fold(0.0, |a, b| a + b)).collect()
    }

    /// `max |a - b|·sup|h^P|·r^{|Q|}` over all coefficients.
    pub fn weighted_max_diff(&self, o: &Self, lat: &Lattice, dom: DomainSpec) -> Result<f64> {
        let diff = self.sub(o)?;
        let mut w = Weights::new(lat, dom, self.n);
        Ok(diff.comps.iter().flat_map(|s| s.iter()).map(|&(k, c)| c.norm() * w.get(k)).fold(0.0, f64::max))
    }

    /// Checks each coefficient against the Cauchy estimate
    /// `|c_{Q,P}| ≤ M / (r^{|Q|} sup_{Ω_ε}|h^P|)`; returns the offending
    /// `(component, key)` pairs.
    pub fn cauchy_bound_check(&self, lat: &Lattice, dom: DomainSpec, m_sup: f64) -> CauchyCheck {
        let mut w = Weights::new(lat, dom, self.n);
        let mut flagged = Vec::new();
        for (comp, s) in self.comps.iter().enumerate() {
            for &(k, c) in s.iter() {
                if c.norm() * w.get(k) > m_sup * (1.0 + 1e-9) {
                    flagged.push((comp, k));
                }
            }
        }
        CauchyCheck { ok: flagged.is_empty(), flagged }
    }

    /// Largest component modulus over random points of `Ω_{ε,r}`; horizontal
    /// log-moduli range over the closed parallelotope, half of the samples on
    /// its vertices.
    pub fn sampled_sup<R: Rng>(&self, lat: &Lattice, dom: DomainSpec, samples: usize, rng: &mut R) -> f64 {
        (0..samples)
            .map(|i| {
                let (h, v) = sample_point(lat, dom, self.d, i % 2 == 0, rng);
                self.eval(&h, &v).unwrap().iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Conjugation by the dilation `v ↦ s v` applied to a map-valued series:
    /// horizontal components scale by `s^{|Q|}`, vertical ones by
    /// `s^{|Q|-1}`. Requires `m = n + d`.
    pub fn dilate_map(&self, s: f64) -> Self {
        let n = self.n;
        self.map_coeffs(|c, k, z| {
            let e = k.deg() as i32 - if c < n { 0 } else { 1 };
            z * s.powi(e)
        })
    }
}

/// A random point `(h, v)` of `Ω_{ε,r}`.
pub fn sample_point<R: Rng>(lat: &Lattice, dom: DomainSpec, d: usize, vertex: bool, rng: &mut R) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = lat.n();
    let w = lat.im_tau();
    let t: Vec<f64> = (0..n)
        .map(|_| {
            if vertex {
                if rng.random_bool(0.5) { 1.0 + dom.eps } else { -dom.eps }
            } else {
                rng.random_range(-dom.eps..=1.0 + dom.eps)
            }
        })
        .collect();
    let h = (0..n)
        .map(|k| {
            let r: f64 = (0..n).map(|i| t[i] * w[(i, k)]).sum();
            Complex64::from_polar((-2.0 * PI * r).exp(), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let v = (0..d)
        .map(|_| {
            let rad = if vertex { dom.r } else { dom.r * rng.random::<f64>().sqrt() };
            Complex64::from_polar(rad, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    (h, v)
}

#[derive(Debug, Clone)]
pub struct CauchyCheck {
    pub ok: bool,
    pub flagged: Vec<(usize, Mono)>,
}

/// Memoized `sup|h^P|·r^{|Q|}`.
struct Weights<'a> {
    lat: &'a Lattice,
    dom: DomainSpec,
    n: usize,
    cache: FxHashMap<Mono, f64>,
}

impl<'a> Weights<'a> {
    fn new(lat: &'a Lattice, dom: DomainSpec, n: usize) -> Self {
        Weights { lat, dom, n, cache: FxHashMap::default() }
    }

    fn get(&mut self, k: Mono) -> f64 {
        let (lat, dom, n) = (self.lat, self.dom, self.n);
        *self.cache.entry(k).or_insert_with(|| {
            let lp = lat.log_sup_h_pow(dom.eps, &k.p_vec(n));
            (lp + k.deg() as f64 * dom.r.ln()).exp()
        })
    }
}

struct ComposeCtx<'a> {
    n: usize,
    nv: usize,
    q_max: u32,
    gv: &'a [u32],
    pows: &'a [Vec<Scalar>],
}

impl ComposeCtx<'_> {
    /// Taylor expansion `Σ_α ∂^α f · ĝ^α / α!`, one variable per level.
    fn dfs(&self, var: usize, prod: Option<&Scalar>, ord: u32, derivs: Vec<Scalar>, acc: &mut [Acc]) {
        if var == self.nv {
            for (c, dc) in derivs.iter().enumerate() {
                match prod {
                    None => dc.accumulate(&mut acc[c], Complex64::new(1.0, 0.0)),
                    Some(p) => {
                        if let (Some(a), Some(b)) = (dc.v_min(), p.v_min()) {
                            if a + b <= self.q_max {
                                dc.mul_acc(p, self.q_max, &mut acc[c]);
                            }
                        }
                    }
                }
            }
            return;
        }
        let mut cur = derivs;
        let mut a = 0usize;
        loop {
            let this_ord = ord + a as u32 * self.gv[var];
            if this_ord > self.q_max {
                break;
            }
            let next_prod;
            let p = if a == 0 {
                prod
            } else {
                let pw = &self.pows[var][a - 1];
                next_prod = match prod {
                    None => pw.clone(),
                    Some(m) => m.mul(pw, self.q_max),
                };
                Some(&next_prod)
            };
            if p.is_none_or(|s| !s.is_zero()) {
                self.dfs(var + 1, p, this_ord, cur.clone(), acc);
            }
            a += 1;
            if a > self.pows[var].len() {
                break;
            }
            cur = cur
                .iter()
                .map(|s| if var < self.n { s.d_h(var) } else { s.d_v(var - self.n) })
                .collect();
            if cur.iter().all(Scalar::is_zero) {
                break;
            }
        }
    }
}

/// The `n` perturbed deck maps `τ_j = τ̂_j + τ^•_j`, each perturbation an
/// `(n+d)`-component series vanishing to second order on `v = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SystemRepr", into = "SystemRepr")]
pub struct DeckSystem {
    lat: Lattice,
    linear: LinearDeck,
    pert: Vec<TaylorLaurentSeries>,
}

#[derive(Serialize, Deserialize)]
struct SystemRepr {
    lattice: Lattice,
    linear: LinearDeck,
    pert: Vec<TaylorLaurentSeries>,
}

impl TryFrom<SystemRepr> for DeckSystem {
    type Error = Error;
    fn try_from(r: SystemRepr) -> Result<Self> {
        DeckSystem::new(r.lattice, r.linear, r.pert)
    }
}

impl From<DeckSystem> for SystemRepr {
    fn from(s: DeckSystem) -> Self {
        SystemRepr { lattice: s.lat, linear: s.linear, pert: s.pert }
    }
}

impl DeckSystem {
    pub fn new(lat: Lattice, linear: LinearDeck, pert: Vec<TaylorLaurentSeries>) -> Result<Self> {
        let (n, d) = (linear.n(), linear.d());
        if lat.n() != n {
            return Err(Error::Shape("lattice and deck dimensions differ".into()));
        }
        let expect = lat.multipliers();
        if linalg::rel_diff(linear.lambda(), &expect) > 1e-12 {
            return Err(Error::InvalidParams("horizontal multipliers do not match the lattice".into()));
        }
        if pert.len() != n {
            return Err(Error::Shape(format!("expected {n} perturbations, got {}", pert.len())));
        }
        for p in &pert {
            if p.n() != n || p.d() != d || p.m() != n + d {
                return Err(Error::Shape("perturbation shape does not match the deck".into()));
            }
            if p.v_min() < 2 {
                return Err(Error::InvalidParams("perturbations must vanish to second order on v = 0".into()));
            }
        }
        Ok(DeckSystem { lat, linear, pert })
    }

    /// The unperturbed system with the given truncation box.
    pub fn linear_only(lat: Lattice, linear: LinearDeck, q_max: u32, p_max: u32) -> Result<Self> {
        let (n, d) = (linear.n(), linear.d());
        let z = TaylorLaurentSeries::zero(n, d, n + d, q_max, p_max)?;
        DeckSystem::new(lat, linear, vec![z; n])
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn linear(&self) -> &LinearDeck {
        &self.linear
    }

    pub fn pert(&self) -> &[TaylorLaurentSeries] {
        &self.pert
    }

    pub fn n(&self) -> usize {
        self.linear.n()
    }

    pub fn d(&self) -> usize {
        self.linear.d()
    }

    pub fn q_max(&self) -> u32 {
        self.pert[0].q_max()
    }

    pub fn p_max(&self) -> u32 {
        self.pert[0].p_max()
    }

    pub fn v_min(&self) -> u32 {
        self.pert.iter().map(TaylorLaurentSeries::v_min).min().unwrap()
    }

    /// `max_j ‖τ^•_j‖` on `dom`.
    pub fn residual_norm(&self, dom: DomainSpec) -> f64 {
        self.pert.iter().map(|p| p.norm_upper(&self.lat, dom)).fold(0.0, f64::max)
    }

    pub fn with_pert(&self, pert: Vec<TaylorLaurentSeries>) -> Result<Self> {
        DeckSystem::new(self.lat.clone(), self.linear.clone(), pert)
    }

    /// Conjugate by `v ↦ s v`.
    pub fn dilate(&self, s: f64) -> Self {
        DeckSystem { pert: self.pert.iter().map(|p| p.dilate_map(s)).collect(), ..self.clone() }
    }

    /// `τ_j` evaluated at a point.
    pub fn eval_map(&self, j: usize, h: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n();
        let mut out = self.pert[j].eval(h, v)?;
        for (c, o) in out.iter_mut().enumerate() {
            let base = if c < n { h[c] } else { v[c - n] };
            *o += self.linear.diag(j, c) * base;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s11(q_max: u32) -> TaylorLaurentSeries {
        TaylorLaurentSeries::zero(1, 1, 1, q_max, 12).unwrap()
    }

    fn lat1() -> Lattice {
        Lattice::new(CMatrix::from_element(1, 1, c(0.0, 1.0))).unwrap()
    }

    /// Random sparse series in the test box.
    pub(crate) fn random_series(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize, q_max: u32, terms: usize, v_min: u32) -> TaylorLaurentSeries {
        let mut s = TaylorLaurentSeries::zero(n, d, m, q_max, 12).unwrap();
        for _ in 0..terms {
            let deg = rng.random_range(v_min..=q_max);
            let mut q = vec![0u32; d];
            if d > 0 {
                for _ in 0..deg {
                    q[rng.random_range(0..d)] += 1;
                }
            }
            let p: Vec<i32> = (0..n).map(|_| rng.random_range(-2..=2)).collect();
            let comp = rng.random_range(0..m);
            s.add_component_term(comp, &q, &p, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap();
        }
        s
    }

    #[test]
    fn mono_packing() {
        let k = Mono::new(&[3, 0, 7], &[-2, 5]);
        assert_eq!(k.q_vec(3), vec![3, 0, 7]);
        assert_eq!(k.p_vec(2), vec![-2, 5]);
        assert_eq!(k.deg(), 10);
        assert_eq!(k.p_inf(), 5);
        let j = Mono::new(&[1, 2, 0], &[4, -7]);
        let kj = k.mul(j);
        assert_eq!(kj.q_vec(3), vec![4, 2, 7]);
        assert_eq!(kj.p_vec(2), vec![2, -2]);
        assert!(Mono::new(&[0, 1], &[5]) < Mono::new(&[1, 0], &[-5]));
        assert!(Mono::new(&[1, 0], &[-5]) < Mono::new(&[1, 0], &[-4]));
    }

    #[test]
    fn eval_examples() {
        let mut f = s11(4);
        f.add_term(&[0], &[0], &[c(2.0, -1.0)]).unwrap();
        assert_eq!(f.eval(&[c(0.3, 0.2)], &[c(5.0, 1.0)]).unwrap()[0], c(2.0, -1.0));
        let mut g = s11(4);
        g.add_term(&[2], &[-1], &[c(1.0, 0.0)]).unwrap();
        assert!((g.eval(&[c(2.0, 0.0)], &[c(3.0, 0.0)]).unwrap()[0] - c(4.5, 0.0)).norm() < 1e-15);
        assert!(matches!(g.eval(&[c(0.0, 0.0)], &[c(1.0, 0.0)]), Err(Error::ZeroHCoordinate(0))));
    }

    /// Double-double accumulation.
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    #[test]
    fn eval_matches_compensated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let f = random_series(&mut rng, 2, 2, 1, 8, 40, 0);
            let h = vec![c(0.8, 0.3), c(-0.5, 0.9)];
            let v = vec![c(0.4, -0.2), c(0.1, 0.6)];
            let got = f.eval(&h, &v).unwrap()[0];
            let (mut re, mut re_err, mut im, mut im_err) = (0.0, 0.0, 0.0, 0.0);
            for (k, z) in f.component_terms(0) {
                let mut t = z;
                for i in 0..2 {
                    for _ in 0..k.p(i).abs() {
                        t = if k.p(i) > 0 { t * h[i] } else { t / h[i] };
                    }
                }
                for j in 0..2 {
                    for _ in 0..k.q(j) {
                        t *= v[j];
                    }
                }
                let (s, e) = two_sum(re, t.re);
                re = s;
                re_err += e;
                let (s, e) = two_sum(im, t.im);
                im = s;
                im_err += e;
            }
            let want = c(re + re_err, im + im_err);
            assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
        }
    }

    fn deck22() -> LinearDeck {
        let lat = Lattice::new(CMatrix::from_fn(2, 2, |i, j| if i == j { c(0.3, 0.5) } else { c(0.1, 0.05) })).unwrap();
        LinearDeck::from_lattice(&lat, CMatrix::from_fn(2, 2, |i, j| c(0.7 + 0.4 * i as f64, 0.3 * j as f64 - 0.1))).unwrap()
    }

    #[test]
    fn compose_with_linear_examples() {
        let deck = LinearDeck::new(CMatrix::from_element(1, 1, c(0.2, 0.5)), CMatrix::from_element(1, 1, c(1.5, -0.5))).unwrap();
        let mut f = s11(4);
        f.add_term(&[1], &[0], &[c(1.0, 0.0)]).unwrap();
        let g = f.compose_with_linear(&deck, 0);
        assert!((g.coeff(0, &[1], &[0]) - c(1.5, -0.5)).norm() < 1e-15);
        let mut f = s11(4);
        f.add_term(&[2], &[1], &[c(1.0, 0.0)]).unwrap();
        let g = f.compose_with_linear(&deck, 0);
        let want = c(0.2, 0.5) * c(1.5, -0.5) * c(1.5, -0.5);
        assert!((g.coeff(0, &[2], &[1]) - want).norm() < 1e-15);
    }

    #[test]
    fn compose_with_linear_pointwise() {
        let deck = deck22();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_series(&mut rng, 2, 2, 3, 6, 30, 0);
        let g = f.compose_with_linear(&deck, 1);
        for _ in 0..50 {
            let h: Vec<Complex64> = (0..2).map(|_| Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(0.0..6.0))).collect();
            let v: Vec<Complex64> = (0..2).map(|_| c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))).collect();
            let th: Vec<Complex64> = (0..2).map(|k| deck.lambda()[(1, k)] * h[k]).collect();
            let mv: Vec<Complex64> = (0..2).map(|k| deck.mu()[(1, k)] * v[k]).collect();
            let a = g.eval(&h, &v).unwrap();
            let b = f.eval(&th, &mv).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() <= 1e-11 * y.norm().max(1.0));
            }
        }
    }

    #[test]
    fn jet_truncate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_series(&mut rng, 1, 2, 2, 8, 30, 3);
        assert!(f.jet_truncate(2).is_zero());
        assert_eq!(f.jet_truncate(8), f);
        assert_eq!(f.jet_truncate(4).add(&f.sub(&f.jet_truncate(4)).unwrap()).unwrap(), f);
    }

    #[test]
    fn jet_truncate_scaling_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_series(&mut rng, 1, 1, 1, 10, 40, 0);
        let q = 4;
        let g = f.jet_truncate(q);
        let h = [c(0.9, 0.2)];
        let err = |t: f64| {
            let v = [c(0.3 * t, 0.1 * t)];
            (f.eval(&h, &v).unwrap()[0] - g.eval(&h, &v).unwrap()[0]).norm()
        };
        let (t1, t2) = (1e-2, 1e-3);
        let slope = (err(t1).ln() - err(t2).ln()) / (t1.ln() - t2.ln());
        assert!(slope >= q as f64 + 1.0 - 0.05, "slope {slope}");
    }

    #[test]
    fn compose_identity_and_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_series(&mut rng, 2, 1, 3, 8, 20, 0);
        let zero = TaylorLaurentSeries::zero(2, 1, 3, 8, 12).unwrap();
        assert_eq!(f.compose(&zero).unwrap(), f);

        let mut f = s11(8);
        f.add_term(&[2], &[0], &[c(1.0, 0.0)]).unwrap();
        let mut g = TaylorLaurentSeries::zero(1, 1, 2, 8, 12).unwrap();
        g.add_component_term(1, &[2], &[0], c(1.0, 0.0)).unwrap();
        let r = f.compose(&g).unwrap();
        // (v + v²)² = v² + 2v³ + v⁴
        assert_eq!(r.coeff(0, &[2], &[0]), c(1.0, 0.0));
        assert_eq!(r.coeff(0, &[3], &[0]), c(2.0, 0.0));
        assert_eq!(r.coeff(0, &[4], &[0]), c(1.0, 0.0));
        assert_eq!(r.nnz(), 3);
    }

    #[test]
    fn compose_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q_max = 8;
        let f = random_series(&mut rng, 2, 2, 2, q_max, 25, 0);
        let g = random_series(&mut rng, 2, 2, 4, q_max, 12, 2);
        let r = f.compose(&g).unwrap();
        let h = vec![c(0.9, 0.4), c(-0.6, 0.7)];
        let v0 = [c(0.6, -0.3), c(0.2, 0.5)];
        let t = 1e-3;
        let v: Vec<Complex64> = v0.iter().map(|z| z * t).collect();
        let gv = g.eval(&h, &v).unwrap();
        let h2: Vec<Complex64> = (0..2).map(|k| h[k] + gv[k]).collect();
        let v2: Vec<Complex64> = (0..2).map(|k| v[k] + gv[2 + k]).collect();
        let want = f.eval(&h2, &v2).unwrap();
        let got = r.eval(&h, &v).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() <= 1e-13 + 1e3 * t.powi(q_max as i32 + 1), "{a} vs {b}");
        }
    }

    #[test]
    fn compose_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_series(&mut rng, 1, 2, 3, 8, 15, 0);
        let g = random_series(&mut rng, 1, 2, 3, 8, 8, 2);
        let k = random_series(&mut rng, 1, 2, 3, 8, 8, 2);
        // (Id+g)∘(Id+k) = Id + k + g∘(Id+k)
        let gk = k.add(&g.compose(&k).unwrap()).unwrap();
        let lhs = f.compose(&g).unwrap().compose(&k).unwrap();
        let rhs = f.compose(&gk).unwrap();
        let lat = Lattice::new(CMatrix::from_element(1, 1, c(0.0, 0.3))).unwrap();
        let d = lhs.weighted_max_diff(&rhs, &lat, DomainSpec::new(0.0, 1.0).unwrap()).unwrap();
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn band_overflow_reported() {
        let mut f = TaylorLaurentSeries::zero(1, 1, 1, 6, 2).unwrap();
        f.add_term(&[2], &[2], &[c(1.0, 0.0)]).unwrap();
        let mut g = TaylorLaurentSeries::zero(1, 1, 2, 6, 2).unwrap();
        g.add_component_term(1, &[2], &[1], c(0.5, 0.0)).unwrap();
        match f.compose(&g) {
            Err(Error::PBandOverflow { dropped_mass }) => assert!(dropped_mass > 0.0),
            other => panic!("{other:?}"),
        }
        let (r, m) = f.compose_tracked(&g).unwrap();
        assert!(m > 0.0 && r.coeff(0, &[2], &[2]) == c(1.0, 0.0));
    }

    #[test]
    fn norm_examples() {
        let lat = lat1();
        let mut one = s11(4);
        one.add_term(&[0], &[0], &[c(1.0, 0.0)]).unwrap();
        assert!((one.norm_upper(&lat, DomainSpec::new(0.0, 0.5).unwrap()) - 1.0).abs() < 1e-13);
        let mut hv = s11(4);
        hv.add_term(&[1], &[1], &[c(1.0, 0.0)]).unwrap();
        assert!((hv.norm_upper(&lat, DomainSpec::new(0.0, 0.5).unwrap()) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn norm_dominates_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let lat = Lattice::new(CMatrix::from_fn(2, 2, |i, j| if i == j { c(0.1, 0.4) } else { c(0.0, 0.1) })).unwrap();
        let dom = DomainSpec::new(0.1, 0.7).unwrap();
        for _ in 0..10 {
            let f = random_series(&mut rng, 2, 2, 2, 6, 20, 0);
            let sup = f.sampled_sup(&lat, dom, 1000, &mut rng);
            assert!(f.norm_upper(&lat, dom) >= sup);
        }
    }

    #[test]
    fn norm_subadditive_submultiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lat = Lattice::scaled_identity(2, 0.5).unwrap();
        let dom = DomainSpec::new(0.2, 0.8).unwrap();
        for _ in 0..10 {
            let f = random_series(&mut rng, 2, 1, 1, 8, 10, 0);
            let g = random_series(&mut rng, 2, 1, 1, 8, 10, 0);
            let nf = f.norm_upper(&lat, dom);
            let ng = g.norm_upper(&lat, dom);
            assert!(f.add(&g).unwrap().norm_upper(&lat, dom) <= (nf + ng) * (1.0 + 1e-12));
            let mut big = TaylorLaurentSeries::zero(2, 1, 1, 16, 12).unwrap();
            let mut big2 = big.clone();
            for (k, z) in f.component_terms(0) {
                big.add_component_term(0, &k.q_vec(1), &k.p_vec(2), z).unwrap();
            }
            for (k, z) in g.component_terms(0) {
                big2.add_component_term(0, &k.q_vec(1), &k.p_vec(2), z).unwrap();
            }
            let prod = big.mul(&big2).unwrap();
            assert!(prod.norm_upper(&lat, dom) <= nf * ng * (1.0 + 1e-12));
        }
    }

    #[test]
    fn linear_composition_is_a_ring_map() {
        let deck = deck22();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = random_series(&mut rng, 2, 2, 1, 8, 15, 0);
        let g = random_series(&mut rng, 2, 2, 1, 8, 15, 0);
        let lhs = f.add(&g).unwrap().compose_with_linear(&deck, 0);
        let rhs = f.compose_with_linear(&deck, 0).add(&g.compose_with_linear(&deck, 0)).unwrap();
        for (k, z) in lhs.terms() {
            assert!((z[0] - rhs.coeff_mono(0, k)).norm() <= 1e-12 * z[0].norm().max(1.0));
        }
        let lhs = f.mul(&g).unwrap().compose_with_linear(&deck, 1);
        let rhs = f.compose_with_linear(&deck, 1).mul(&g.compose_with_linear(&deck, 1)).unwrap();
        for (k, z) in lhs.terms() {
            assert!((z[0] - rhs.coeff_mono(0, k)).norm() <= 1e-12 * z[0].norm().max(1.0));
        }
    }

    #[test]
    fn cauchy_checks() {
        let lat = lat1();
        let dom = DomainSpec::new(0.0, 0.5).unwrap();
        // 1/(1 - a h v) = Σ (a h v)^k on |h| ≤ 1, |v| ≤ 1/2
        let a: f64 = 1.2;
        let rho = a * 0.5;
        let m_sup = 1.0 / (1.0 - rho);
        let mut f = s11(10);
        for k in 0..=10u32 {
            f.add_term(&[k], &[k as i32], &[c(a.powi(k as i32), 0.0)]).unwrap();
        }
        assert!(f.cauchy_bound_check(&lat, dom, m_sup).ok);
        let mut bad = f.clone();
        bad.add_term(&[0], &[0], &[c(9.0, 0.0)]).unwrap();
        let chk = bad.cauchy_bound_check(&lat, dom, m_sup);
        assert!(!chk.ok && chk.flagged == vec![(0, Mono::new(&[0], &[0]))]);

        let mut mono = s11(4);
        mono.add_term(&[3], &[-2], &[c(0.3, 0.4)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sup = mono.sampled_sup(&lat, dom, 200, &mut rng);
        assert!((sup - mono.norm_upper(&lat, dom)).abs() < 1e-12 * sup);
        assert!(mono.cauchy_bound_check(&lat, dom, sup).ok);
    }

    #[test]
    fn json_roundtrip_sorted() {
        let mut f = TaylorLaurentSeries::zero(1, 2, 2, 4, 3).unwrap();
        f.add_term(&[1, 1], &[-1], &[c(1.0, 0.0), c(0.0, 2.0)]).unwrap();
        f.add_term(&[0, 2], &[3], &[c(0.5, 0.0), c(0.0, 0.0)]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with(r#"{"n":1,"d":2,"m":2,"Q_max":4,"P_max":3,"coeffs":[{"Q":[0,2],"P":[3],"c":[[0.5,0.0],[0.0,0.0]]}"#), "{s}");
        let back: TaylorLaurentSeries = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<TaylorLaurentSeries>(&s.replace("[3]", "[4]")).is_err());
    }

    #[test]
    fn dilation_scales_by_degree() {
        let mut f = TaylorLaurentSeries::zero(1, 1, 2, 6, 3).unwrap();
        f.add_term(&[3], &[1], &[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let g = f.dilate_map(0.5);
        assert_eq!(g.coeff(0, &[3], &[1]), c(0.125, 0.0));
        assert_eq!(g.coeff(1, &[3], &[1]), c(0.25, 0.0));
    }
}
