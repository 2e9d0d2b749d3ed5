//! The Newton/KAM iteration: domain schedules, one conjugation step, map
//! inversion by contraction, and accumulation of the composite transform.
//!
//! A step at order `q` starts from a residual `τ^•` vanishing to order `s`
//! and solves `L_i φ = −J τ^•_i` over `s ≤ |Q| ≤ min(2q, 2s−2)`; the quadratic
//! remainder then vanishes to order `2s−1`. Steps are repeated internally
//! until the residual vanishes to order `2q+1` (or the jet is exhausted).
//!
//! Dilation `v ↦ s·v` is never applied to coefficients: since conjugation by a
//! dilation commutes with every operation here, the iteration runs on the
//! original coefficients and all reported norms are taken in the dilated
//! frame (weights `(s r)^{|Q|}`, vertical components divided by `s`). This is
//! exact and avoids underflow for tiny `s`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::cohomology::{self, CompatTolerance};
use crate::diophantine::DiophantineFit;
use crate::error::{Error, Result};
use crate::lattice::{DomainSpec, Lattice};
use crate::series::{sample_point, DeckSystem, Mono, TaylorLaurentSeries};

/// What to do with coefficient mass pushed past `P_max` by a composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    #[default]
    Strict,
    Tolerant,
}

fn default_commute_tol() -> f64 {
    1e-10
}

fn default_residual_target() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KamParams {
    pub delta0: f64,
    pub eps0: f64,
    pub r0: f64,
    pub mu_exp: f64,
    pub q0: u32,
    #[serde(rename = "K_max")]
    pub k_max: usize,
    pub tau_exp: f64,
    #[serde(rename = "D_fit")]
    pub d_fit: f64,
    #[serde(default)]
    pub overflow_policy: OverflowPolicy,
    #[serde(default = "default_commute_tol")]
    pub commute_tol: f64,
    #[serde(default = "default_residual_target")]
    pub residual_target: f64,
}

impl KamParams {
    /// Defaults: `μ = 3(τ + n + d)`, `q_0 = 1`, `K_max = 20`, strict overflow.
    pub fn new(delta0: f64, eps0: f64, r0: f64, fit: &DiophantineFit, n: usize, d: usize) -> Self {
        KamParams {
            delta0,
            eps0,
            r0,
            mu_exp: 3.0 * (fit.tau_exp + (n + d) as f64),
            q0: 1,
            k_max: 20,
            tau_exp: fit.tau_exp,
            d_fit: fit.d_fit,
            overflow_policy: OverflowPolicy::Strict,
            commute_tol: default_commute_tol(),
            residual_target: default_residual_target(),
        }
    }

    pub fn fit(&self) -> DiophantineFit {
        DiophantineFit { tau_exp: self.tau_exp, d_fit: self.d_fit, n_scan: 0, worst: None }
    }

    /// `δ_0 < κ ε_0 / 20` and `δ_0 < ln 2 / 10`, plus basic positivity.
    pub fn validate(&self, kappa: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.delta0 > 0.0 && self.eps0 > 0.0 && self.r0 > 0.0) {
            return bad("delta0, eps0 and r0 must be positive".into());
        }
        if !(self.mu_exp > 0.0) || self.q0 < 1 || !(self.d_fit > 0.0) || !(self.tau_exp >= 0.0) {
            return bad("need mu_exp > 0, q0 >= 1, D_fit > 0 and tau_exp >= 0".into());
        }
        if !(self.delta0 < kappa / 20.0 * self.eps0) {
            return bad(format!("delta0 = {} violates delta0 < kappa*eps0/20 = {}", self.delta0, kappa * self.eps0 / 20.0));
        }
        if !(self.delta0 < std::f64::consts::LN_2 / 10.0) {
            return bad(format!("delta0 = {} violates delta0 < ln(2)/10", self.delta0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub k: usize,
    pub delta: f64,
    pub eps: f64,
    pub r: f64,
    /// Saturates at `u64::MAX`.
    pub q: u64,
}

impl ScheduleEntry {
    pub fn domain(&self) -> DomainSpec {
        DomainSpec { eps: self.eps, r: self.r }
    }
}

/// `δ_k = δ_0/(k+1)²`, `r_{k+1} = r_k e^{−5δ_k}`, `ε_{k+1} = ε_k − 5δ_k/κ`,
/// `q_{k+1} = 2q_k + 1`, for `k < count`.
pub fn schedule(params: &KamParams, kappa: f64, count: usize) -> Result<Vec<ScheduleEntry>> {
    params.validate(kappa)?;
    let mut out = Vec::with_capacity(count);
    let (mut eps, mut r, mut q) = (params.eps0, params.r0, params.q0 as u64);
    for k in 0..count {
        let delta = params.delta0 / ((k + 1) as f64).powi(2);
        if !(eps > params.eps0 / 2.0 && r > params.r0 / 2.0) {
            return Err(Error::InvalidParams(format!("domain floor violated at step {k}")));
        }
        out.push(ScheduleEntry { k, delta, eps, r, q });
        eps -= 5.0 * delta / kappa;
        r *= (-5.0 * delta).exp();
        q = q.saturating_mul(2).saturating_add(1);
    }
    Ok(out)
}

/// Sup-norm bound of the map-valued series `f` after conjugation by
/// `v ↦ s v`, on `dom`.
pub fn dilated_norm(f: &TaylorLaurentSeries, lat: &Lattice, dom: DomainSpec, s: f64) -> f64 {
    let (n, d) = (f.n(), f.d());
    let zq = vec![0u32; d];
    let ln_sr = (s * dom.r).ln();
    let ln_s = s.ln();
    let mut cache: FxHashMap<Mono, f64> = FxHashMap::default();
    (0..f.m())
        .map(|c| {
            f.component_terms(c)
                .map(|(k, z)| {
                    let pk = Mono::new(&zq, &k.p_vec(n));
                    let lw = *cache.entry(pk).or_insert_with(|| lat.log_sup_h_pow(dom.eps, &k.p_vec(n)));
                    let e = lw + k.deg() as f64 * ln_sr - if c >= n { ln_s } else { 0.0 };
                    z.norm() * e.exp()
                })
                .fold(0.0, |a, b| a + b)
        })
        .fold(0.0, f64::max)
}

struct Tracker {
    policy: OverflowPolicy,
    dropped: f64,
}

impl Tracker {
    fn compose(&mut self, f: &TaylorLaurentSeries, g: &TaylorLaurentSeries) -> Result<TaylorLaurentSeries> {
        let (out, dropped) = f.compose_tracked(g)?;
        if dropped > 0.0 {
            if self.policy == OverflowPolicy::Strict {
                return Err(Error::PBandOverflow { dropped_mass: dropped });
            }
            self.dropped += dropped;
        }
        Ok(out)
    }
}

fn invert_tracked(phi: &TaylorLaurentSeries, tr: &mut Tracker) -> Result<TaylorLaurentSeries> {
    let mut psi = phi.zero_like(phi.m());
    for _ in 0..phi.q_max() + 2 {
        let next = tr.compose(phi, &psi.neg())?;
        if next == psi {
            return Ok(psi);
        }
        psi = next;
    }
    // Roundoff can make the last digits cycle; accept a converged tail.
    let next = tr.compose(phi, &psi.neg())?;
    let gap = next.sub(&psi)?.terms().iter().flat_map(|(_, c)| c.iter().map(|z| z.norm())).fold(0.0, f64::max);
    let size = psi.terms().iter().flat_map(|(_, c)| c.iter().map(|z| z.norm())).fold(0.0, f64::max);
    if gap <= 1e-13 * size.max(f64::MIN_POSITIVE) {
        return Ok(next);
    }
    Err(Error::NumericalBreakdown(format!("map inversion did not settle (gap {gap:e})")))
}

/// `ψ` with `(Id + φ)∘(Id − ψ) = Id` through order `Q_max`, by the contraction
/// `ψ ← φ∘(Id − ψ)` from `ψ = 0`. `φ` must vanish to order `q + 1`.
pub fn invert_map(phi: &TaylorLaurentSeries, q: u32) -> Result<TaylorLaurentSeries> {
    if q < 1 || phi.v_min() < q + 1 || phi.m() != phi.n() + phi.d() {
        return Err(Error::InvalidParams(format!("inversion needs an (n+d)-component map vanishing to order {}", q + 1)));
    }
    invert_tracked(phi, &mut Tracker { policy: OverflowPolicy::Strict, dropped: 0.0 })
}

/// Where an iteration stands: index, order, and the (undilated) domain used
/// for the commutation check and vanishing tests.
#[derive(Debug, Clone, Copy)]
pub struct StepState {
    pub k: usize,
    pub q: u64,
    pub dom: DomainSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    pub k: usize,
    pub inner_iterations: usize,
    /// `[lo, hi]` of each inner solve.
    pub jet_ranges: Vec<[u32; 2]>,
    pub v_min_before: u32,
    pub v_min_after: u32,
    pub commutation_defect: f64,
    pub min_divisor: f64,
    pub coeff_bound_ok: bool,
    pub dropped_mass: f64,
}

/// Result of one step: `Φ = Id + phi` conjugates `sys` to `sys′`, i.e.
/// `τ′_i = Φ∘τ_i∘Φ⁻¹`, and `Φ⁻¹ = Id − psi`.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub sys: DeckSystem,
    pub phi: TaylorLaurentSeries,
    pub psi: TaylorLaurentSeries,
    pub report: StepReport,
}

/// Largest pairwise commutation defect at order `order` on `dom`.
pub fn max_commutation_defect(sys: &DeckSystem, order: u32, dom: DomainSpec) -> Result<(f64, usize, usize)> {
    let mut worst = (0.0, 0, 0);
    for i in 0..sys.n() {
        for j in i + 1..sys.n() {
            let d = cohomology::commutation_defect(sys, i, j, order, dom)?;
            if d > worst.0 || d.is_nan() {
                worst = (d, i, j);
            }
        }
    }
    Ok(worst)
}

/// One inner update at the current residual order. Returns the new
/// perturbations together with `φ` and `ψ`.
fn inner_update(
    sys: &DeckSystem,
    q: u64,
    dom: DomainSpec,
    fit: &DiophantineFit,
    tr: &mut Tracker,
    rep: &mut StepReport,
) -> Result<Option<(Vec<TaylorLaurentSeries>, TaylorLaurentSeries, TaylorLaurentSeries)>> {
    let (n, q_max) = (sys.n(), sys.q_max());
    let deck = sys.linear();
    let s = sys.v_min();
    let hi = (2 * q).min(2 * s as u64 - 2).min(q_max as u64) as u32;
    if s > q_max || hi < s {
        return Ok(None);
    }
    let f: Vec<TaylorLaurentSeries> = sys.pert().iter().map(|t| t.jet_range(s, hi).neg()).collect();
    let f_norm = f.iter().map(|x| x.norm_upper(sys.lattice(), dom)).fold(0.0, f64::max);
    let tol = CompatTolerance { rel: 1e-9, weighted_abs: 1e-9 * f_norm, weights: Some((sys.lattice(), dom)) };
    let (phi, srep) = cohomology::solve_with(&f, deck, (s, hi), fit, sys.lattice(), dom, &tol)?;
    rep.jet_ranges.push([s, hi]);
    rep.min_divisor = rep.min_divisor.min(srep.max_divisor_used);
    rep.coeff_bound_ok &= srep.coeff_bound_ok;
    let psi = invert_tracked(&phi, tr)?;
    let mpsi = psi.neg();

    let old_norm = sys.residual_norm(dom);
    let mut out = Vec::with_capacity(n);
    for (i, t) in sys.pert().iter().enumerate() {
        let a = tr.compose(t, &mpsi)?;
        let w = mpsi.add(&a.deck_mul(deck, i, true))?;
        let b = tr.compose(&phi.compose_with_linear(deck, i), &w)?;
        let new = psi.deck_mul(deck, i, false).neg().add(&a)?.add(&b)?;
        out.push(zero_low_orders(new, hi, sys.lattice(), dom, old_norm)?);
    }
    Ok(Some((out, phi, psi)))
}

/// Checks that coefficients with `|Q| ≤ hi` are roundoff, then drops them.
fn zero_low_orders(t: TaylorLaurentSeries, hi: u32, lat: &Lattice, dom: DomainSpec, scale: f64) -> Result<TaylorLaurentSeries> {
    let low = t.jet_truncate(hi);
    if low.is_zero() {
        return Ok(t);
    }
    let size = low.norm_upper(lat, dom);
    if size > 1e-10 * scale {
        return Err(Error::NumericalBreakdown(format!(
            "residual coefficients through order {hi} did not cancel (norm {size:e} vs {scale:e})"
        )));
    }
    Ok(t.jet_range(hi + 1, t.q_max()))
}

/// One Newton step at order `q_k`: repeated inner updates until the residual
/// vanishes to order `2q_k + 1` or past `Q_max`.
pub fn newton_step(sys: &DeckSystem, state: StepState, params: &KamParams) -> Result<StepOutput> {
    let q_max = sys.q_max();
    let order = (2 * state.q).min(q_max as u64) as u32;
    let (defect, i, j) = max_commutation_defect(sys, order, state.dom)?;
    if !(defect <= params.commute_tol) {
        return Err(Error::CommutationDefectTooLarge { i, j, defect, tolerance: params.commute_tol });
    }
    let fit = params.fit();
    let mut tr = Tracker { policy: params.overflow_policy, dropped: 0.0 };
    let mut rep = StepReport {
        k: state.k,
        inner_iterations: 0,
        jet_ranges: vec![],
        v_min_before: sys.v_min(),
        v_min_after: sys.v_min(),
        commutation_defect: defect,
        min_divisor: f64::INFINITY,
        coeff_bound_ok: true,
        dropped_mass: 0.0,
    };
    let zero = sys.pert()[0].zero_like(sys.n() + sys.d());
    let (mut cur, mut phi_s, mut psi_s) = (sys.clone(), zero.clone(), zero);
    let goal = (2 * state.q + 1).min(q_max as u64 + 1) as u32;
    while cur.v_min() < goal {
        let Some((pert, phi, psi)) = inner_update(&cur, state.q, state.dom, &fit, &mut tr, &mut rep)? else {
            break;
        };
        rep.inner_iterations += 1;
        // Φ_step ← (Id + φ)∘Φ_step, Φ_step⁻¹ ← Φ_step⁻¹∘(Id − ψ)
        phi_s = phi_s.add(&tr.compose(&phi, &phi_s)?)?;
        psi_s = psi.add(&tr.compose(&psi_s, &psi.neg())?)?;
        cur = cur.with_pert(pert)?;
    }
    rep.v_min_after = cur.v_min();
    rep.dropped_mass = tr.dropped;
    Ok(StepOutput { sys: cur, phi: phi_s, psi: psi_s, report: rep })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KamRow {
    pub k: usize,
    pub q_k: u64,
    pub delta_k: f64,
    pub eps_k: f64,
    pub r_k: f64,
    pub residual_bound: f64,
    pub phi_norm: f64,
    pub dropped_mass: f64,
    pub residual_vmin: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KamReport {
    pub rows: Vec<KamRow>,
    pub converged: bool,
    /// Last scheduled domain, in the dilated frame.
    pub final_domain: DomainSpec,
    /// Dilation factor `s` of the frame in which norms are reported.
    pub dilation: f64,
    /// `(ε_K, s r_K)`: the final domain in original coordinates.
    pub final_domain_original: DomainSpec,
    /// `verify_conjugacy` of the composite on the original final domain.
    pub conjugacy_defect: Option<f64>,
    pub steps: Vec<StepReport>,
}

pub const CSV_HEADER: &str = "k,q_k,delta_k,eps_k,r_k,residual_bound,phi_norm,dropped_mass";

impl KamReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.k, r.q_k, r.delta_k, r.eps_k, r.r_k, r.residual_bound, r.phi_norm, r.dropped_mass
            );
        }
        s
    }

    /// Smallest `residual_vmin / 2^k` violation of `v_min ≥ q_0 2^k` for rows
    /// after the first step; `None` when all rows comply.
    pub fn jet_growth_violation(&self, q0: u32) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.k >= 1)
            .find(|r| (r.residual_vmin as u128) < (q0 as u128) << r.k.min(100))
            .map(|r| r.k)
    }
}

/// Runs the iteration. Returns the composite `Φ = Id + phi` with
/// `Φ∘τ̂_i = τ_i∘Φ` through `Q_max`.
pub fn run(sys: &DeckSystem, params: &KamParams) -> Result<(TaylorLaurentSeries, KamReport)> {
    let lat = sys.lattice();
    let kappa = lat.kappa();
    let sched = schedule(params, kappa, params.k_max + 1)?;
    let dom0 = sched[0].domain();
    let res0 = dilated_norm_sys(sys, dom0, 1.0);
    let goal0 = params.delta0.powf(params.mu_exp);
    let mut s = if res0 <= goal0 { 1.0 } else { 0.5 * goal0 / res0 };
    if !(s > 0.0) {
        return Err(Error::InvalidParams(format!("dilation needed to reach delta0^mu = {goal0:e} underflows")));
    }

    let zero = sys.pert()[0].zero_like(sys.n() + sys.d());
    let mut phi_tot = zero.clone();
    let mut cur = sys.clone();
    let mut history: Vec<(DeckSystem, TaylorLaurentSeries, f64)> = vec![];
    let mut steps = vec![];
    let mut converged = false;
    let mut last = 0;
    for e in &sched {
        last = e.k;
        // Stop on the undilated residual: it bounds the dilated one (s ≤ 1)
        // and also certifies the composite in original coordinates.
        let res = dilated_norm_sys(&cur, e.domain(), 1.0);
        if res < params.residual_target || cur.v_min() > cur.q_max() {
            converged = true;
            break;
        }
        if e.k == params.k_max {
            break;
        }
        let out = newton_step(&cur, StepState { k: e.k, q: e.q, dom: e.domain() }, params)?;
        log::info!(
            "step {}: v_min {} -> {} in {} inner updates",
            e.k,
            out.report.v_min_before,
            out.report.v_min_after,
            out.report.inner_iterations
        );
        let mut tr = Tracker { policy: params.overflow_policy, dropped: 0.0 };
        let mpsi = out.psi.neg();
        phi_tot = mpsi.add(&tr.compose(&phi_tot, &mpsi)?)?;
        let dropped = out.report.dropped_mass + tr.dropped;
        history.push((cur, out.phi, dropped));
        steps.push(out.report);
        cur = out.sys;
    }

    let rows_for = |s: f64| -> Vec<KamRow> {
        let mut rows: Vec<KamRow> = history
            .iter()
            .zip(&sched)
            .map(|((st, phi, dropped), e)| KamRow {
                k: e.k,
                q_k: e.q,
                delta_k: e.delta,
                eps_k: e.eps,
                r_k: e.r,
                residual_bound: dilated_norm_sys(st, e.domain(), s),
                phi_norm: dilated_norm(phi, lat, sched[e.k + 1].domain(), s),
                dropped_mass: *dropped,
                residual_vmin: st.v_min(),
            })
            .collect();
        let e = &sched[last];
        rows.push(KamRow {
            k: e.k,
            q_k: e.q,
            delta_k: e.delta,
            eps_k: e.eps,
            r_k: e.r,
            residual_bound: dilated_norm_sys(&cur, e.domain(), s),
            phi_norm: 0.0,
            dropped_mass: 0.0,
            residual_vmin: cur.v_min(),
        });
        rows
    };
    let mut rows = rows_for(s);
    if converged {
        // Shrink the frame until every row meets residual_k ≤ δ_k^μ.
        for _ in 0..64 {
            let worst = rows
                .iter()
                .map(|r| r.residual_bound / r.delta_k.powf(params.mu_exp))
                .fold(0.0, f64::max);
            if worst <= 1.0 {
                break;
            }
            s *= 0.5 / worst;
            rows = rows_for(s);
        }
    }
    let fin = sched[last];
    let final_original = DomainSpec { eps: fin.eps, r: s * fin.r };
    let defect = if converged { Some(verify_conjugacy(&phi_tot, sys, final_original)?) } else { None };
    let report = KamReport {
        rows,
        converged,
        final_domain: fin.domain(),
        dilation: s,
        final_domain_original: final_original,
        conjugacy_defect: defect,
        steps,
    };
    if !converged {
        let residual = report.rows.last().map_or(f64::NAN, |r| r.residual_bound);
        return Err(Error::NoConvergence { steps: params.k_max, residual, report: Box::new(report) });
    }
    Ok((phi_tot, report))
}

fn dilated_norm_sys(sys: &DeckSystem, dom: DomainSpec, s: f64) -> f64 {
    sys.pert().iter().map(|p| dilated_norm(p, sys.lattice(), dom, s)).fold(0.0, f64::max)
}

/// `Φ∘τ̂_i − τ_i∘Φ = L_i(φ) − τ^•_i∘(Id + φ)` for each generator.
pub fn conjugacy_defects(phi: &TaylorLaurentSeries, sys: &DeckSystem) -> Result<Vec<TaylorLaurentSeries>> {
    (0..sys.n())
        .map(|i| cohomology::apply_l(sys.linear(), i, phi).sub(&sys.pert()[i].compose(phi)?))
        .collect()
}

/// Certified bound on `max_i ‖Φ∘τ̂_i − τ_i∘Φ‖` through `Q_max` on `dom`.
/// A pointwise evaluation of the defect at 100 seeded sample points is
/// checked against the bound.
pub fn verify_conjugacy(phi: &TaylorLaurentSeries, sys: &DeckSystem, dom: DomainSpec) -> Result<f64> {
    let defects = conjugacy_defects(phi, sys)?;
    let bound = defects.iter().map(|d| d.norm_upper(sys.lattice(), dom)).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sampled = defects
        .iter()
        .map(|d| d.sampled_sup(sys.lattice(), dom, 100 / sys.n().max(1), &mut rng))
        .fold(0.0, f64::max);
    if sampled > bound * (1.0 + 1e-9) + f64::MIN_POSITIVE {
        return Err(Error::NumericalBreakdown(format!("sampled defect {sampled:e} exceeds bound {bound:e}")));
    }
    Ok(bound)
}

/// `Φ(τ̂_i x) − τ_i(Φ(x))` evaluated directly at one point (includes the
/// truncation tail of the compositions).
pub fn pointwise_defect(phi: &TaylorLaurentSeries, sys: &DeckSystem, i: usize, h: &[Complex64], v: &[Complex64]) -> Result<f64> {
    let n = sys.n();
    let deck = sys.linear();
    let th: Vec<Complex64> = (0..n).map(|k| deck.lambda()[(i, k)] * h[k]).collect();
    let tv: Vec<Complex64> = (0..sys.d()).map(|j| deck.mu()[(i, j)] * v[j]).collect();
    let lhs: Vec<Complex64> = phi.eval(&th, &tv)?.iter().zip(th.iter().chain(&tv)).map(|(a, b)| a + b).collect();
    let px: Vec<Complex64> = phi.eval(h, v)?.iter().zip(h.iter().chain(v)).map(|(a, b)| a + b).collect();
    let rhs = sys.eval_map(i, &px[..n], &px[n..])?;
    Ok(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// Largest pointwise defect over seeded samples of `dom`.
pub fn sampled_pointwise_defect(phi: &TaylorLaurentSeries, sys: &DeckSystem, dom: DomainSpec, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..samples {
        let (h, v) = sample_point(sys.lattice(), dom, sys.d(), t % 2 == 0, &mut rng);
        for i in 0..sys.n() {
            worst = worst.max(pointwise_defect(phi, sys, i, &h, &v)?);
        }
    }
    Ok(worst)
}
