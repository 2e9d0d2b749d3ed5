//! End-to-end acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use torus_kam::automorphy::ConstantFactor;
use torus_kam::cohomology;
use torus_kam::diophantine::{self, Target};
use torus_kam::instance::{self, InstanceShape};
use torus_kam::kam::{self, KamParams};
use torus_kam::linalg::{self, c, rel_diff};
use torus_kam::matcom::{self, CommutingFamily};
use torus_kam::{CMatrix, DomainSpec, Error, Lattice, LinearDeck};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn shape(q_max: u32, dom: DomainSpec) -> InstanceShape {
    InstanceShape { q_max, p_max: 12, pert_norm: 1e-3, terms_per_component: 2, dom }
}

fn params_for(deck: &LinearDeck, n: usize, d: usize) -> KamParams {
    let fit = diophantine::diophantine_fit(deck, 12, 2.0).unwrap();
    let mut p = KamParams::new(0.01, 0.2, 0.5, &fit, n, d);
    p.mu_exp = 2.0;
    p
}

/// 1 + 2: linearization of conjugated instances and jet growth in the rows.
fn end_to_end() -> (Outcome, Outcome) {
    let dom = DomainSpec::new(0.2, 0.5).unwrap();
    let mut lines = vec![];
    let mut growth = vec![];
    let mut err1 = None;
    let mut err2 = None;
    for (n, d, seed) in [(1, 1, 101), (1, 1, 102), (2, 2, 201), (2, 2, 202)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lat = instance::random_lattice(n, &mut rng).unwrap();
        let mu = instance::random_real_mu(n, d, &mut rng);
        let start = Instant::now();
        let inst = instance::conjugated(lat, mu, &shape(16, dom), &mut rng).unwrap();
        let params = params_for(inst.system.linear(), n, d);
        let run = kam::run(&inst.system, &params);
        let secs = start.elapsed().as_secs_f64();
        let (phi, rep) = match run {
            Ok(x) => x,
            Err(e) => {
                err1.get_or_insert(format!("n={n} d={d} seed={seed}: {e}"));
                continue;
            }
        };
        let fin = rep.final_domain;
        let defect = kam::verify_conjugacy(&phi, &inst.system, fin).unwrap();
        let defect_orig = rep.conjugacy_defect.unwrap();
        let diff = common::max_coeff_diff(&phi, inst.phi_true.as_ref().unwrap());
        let ok = rep.converged && defect <= 1e-9 && defect_orig <= 1e-9 && diff <= 1e-7 && secs < 60.0;
        let line = format!(
            "n={n} d={d} seed={seed}: steps={} defect={defect:.1e} coeff_diff={diff:.1e} time={secs:.1}s",
            rep.steps.len()
        );
        if !ok {
            err1.get_or_insert(line.clone());
        }
        lines.push(line);
        let q0 = params.q0 as u64;
        for r in &rep.rows {
            growth.push(format!("{}", r.residual_vmin));
            if (r.residual_vmin as u64) < q0 << r.k {
                err2.get_or_insert(format!("seed {seed} row {}: v_min {} < {}", r.k, r.residual_vmin, q0 << r.k));
            }
        }
        growth.push("|".into());
    }
    let c1 = match err1 {
        Some(e) => Err(e),
        None => Ok(lines.join("; ")),
    };
    let c2 = match err2 {
        Some(e) => Err(e),
        None => Ok(format!("v_min per row: {}", growth.join(" "))),
    };
    (c1, c2)
}

fn cohomology_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dom = DomainSpec::new(0.1, 0.5).unwrap();
    let mut worst: f64 = 0.0;
    let mut coeffs = 0usize;
    for draw in 0..200 {
        let (n, d) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let (lat, deck) = common::deck(&mut rng, n, d);
        let g0 = common::series(&mut rng, n, d, n + d, 6, 20, 2, 2);
        let fit = diophantine::diophantine_fit(&deck, 6 + 2 * n as u32, 2.0).map_err(|e| format!("draw {draw}: {e}"))?;
        let f: Vec<_> = (0..n).map(|i| cohomology::apply_l(&deck, i, &g0)).collect();
        let (g, rep) = cohomology::solve(&f, &deck, (2, 6), &fit, &lat, dom).map_err(|e| format!("draw {draw}: {e}"))?;
        ensure(rep.coeff_bound_ok, || format!("draw {draw}: coefficient bound ratio {}", rep.max_bound_ratio))?;
        ensure(g.nnz() == g0.nnz(), || format!("draw {draw}: support changed"))?;
        for (k, z) in g0.terms() {
            for (comp, want) in z.iter().enumerate() {
                let err = (g.coeff_mono(comp, k) - want).norm() / want.norm().max(1.0);
                worst = worst.max(err);
                coeffs += 1;
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max relative coefficient error {worst:e}"))?;
    Ok(format!("200 draws, {coeffs} coefficients, max error {worst:.1e}, bound held everywhere"))
}

fn commuting_logs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_exp: f64 = 0.0;
    let mut worst_comm: f64 = 0.0;
    let mut worst_cocycle: f64 = 0.0;
    for t in 0..100 {
        let mats = if t == 0 {
            common::example_pair(2.0, 3.0)
        } else {
            let dim = rng.random_range(1..=6);
            let count = rng.random_range(1..=3);
            common::commuting_family(&mut rng, dim, count)
        };
        let fam = CommutingFamily::new(mats.clone()).map_err(|e| format!("family {t}: {e}"))?;
        let logs = matcom::commuting_logs(&fam).map_err(|e| format!("family {t}: {e}"))?;
        for (l, a) in logs.iter().zip(&mats) {
            worst_exp = worst_exp.max(rel_diff(&l.exp(), a));
        }
        for i in 0..logs.len() {
            for j in i + 1..logs.len() {
                let scale = (linalg::norm_inf(&logs[i]) * linalg::norm_inf(&logs[j])).max(1.0);
                worst_comm = worst_comm.max(linalg::norm_inf(&linalg::commutator(&logs[i], &logs[j])) / scale);
            }
        }
        let k = logs.len();
        let z: Vec<Complex64> = (0..k).map(|_| c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))).collect();
        let w: Vec<Complex64> = (0..k).map(|_| c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))).collect();
        let zw: Vec<Complex64> = z.iter().zip(&w).map(|(a, b)| a + b).collect();
        let lhs = matcom::flow_map(&logs, &zw).unwrap();
        let rhs = matcom::flow_map(&logs, &z).unwrap() * matcom::flow_map(&logs, &w).unwrap();
        worst_cocycle = worst_cocycle.max(rel_diff(&lhs, &rhs));
    }
    ensure(worst_exp <= 1e-9, || format!("exp(L) vs A: {worst_exp:e}"))?;
    ensure(worst_comm <= 1e-9, || format!("commutator: {worst_comm:e}"))?;
    ensure(worst_cocycle <= 1e-9, || format!("cocycle: {worst_cocycle:e}"))?;
    Ok(format!("100 families: exp {worst_exp:.1e}, commutators {worst_comm:.1e}, cocycle {worst_cocycle:.1e}"))
}

fn trivialization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_id: f64 = 0.0;
    let mut worst_const: f64 = 0.0;
    for t in 0..50 {
        let n = rng.random_range(1..=2);
        let rank = rng.random_range(1..=4);
        let lat = common::lattice(&mut rng, n);
        let rho = common::commuting_family(&mut rng, rank, 2 * n);
        let factor = ConstantFactor::new(lat, rho.clone()).map_err(|e| format!("factor {t}: {e}"))?;
        let triv = factor.trivialize_over_cylinder().map_err(|e| format!("factor {t}: {e}"))?;
        let id = CMatrix::identity(rank, rank);
        for j in 0..n {
            worst_id = worst_id.max(linalg::norm_inf(&(&triv.factor.generators()[j] - &id)));
        }
        for _ in 0..20 {
            let z: Vec<Complex64> = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3))).collect();
            let vz_inv = triv.flow(&z).unwrap().try_inverse().unwrap();
            for g in 0..2 * n {
                let pt = factor.generator_point(g);
                let zl: Vec<Complex64> = z.iter().zip(&pt).map(|(a, b)| a + b).collect();
                let at_z = triv.flow(&zl).unwrap() * &rho[g] * &vz_inv;
                worst_const = worst_const.max(rel_diff(&at_z, &triv.factor.generators()[g]));
            }
        }
    }
    ensure(worst_id <= 1e-9, || format!("horizontal generators: {worst_id:e}"))?;
    ensure(worst_const <= 1e-8, || format!("z-dependence: {worst_const:e}"))?;
    Ok(format!("50 factors: |rho(e_j) - I| {worst_id:.1e}, z-variation {worst_const:.1e}"))
}

fn domain_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_ratio: f64 = 0.0;
    let mut strict = 0usize;
    for t in 0..100 {
        let n = rng.random_range(1..=3);
        let lat = common::lattice(&mut rng, n);
        let kappa = lat.kappa();
        for _ in 0..100 {
            let p: Vec<i32> = loop {
                let p: Vec<i32> = (0..n).map(|_| rng.random_range(-6..=6)).collect();
                if p.iter().any(|&x| x != 0) {
                    break p;
                }
            };
            let eps = rng.random_range(0.05..0.5);
            let eps_p = eps * rng.random_range(0.0..0.95);
            let lhs = lat.inf_sup_decay(eps, eps_p, &p);
            let rhs = (-kappa * (eps - eps_p) * torus_kam::lattice::l1(&p) as f64).exp();
            // n = 1 is an equality case; allow round-off only
            ensure(lhs <= rhs * (1.0 + 1e-12), || format!("lattice {t}, P={p:?}: {lhs:e} > {rhs:e}"))?;
            strict += (lhs < rhs) as usize;
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    Ok(format!("10^4 (lattice, P) pairs, max inf-sup / bound = {worst_ratio:.3}, {strict} strictly below"))
}

/// Random unimodular matrix with entries bounded by 3, so the transformed
/// multipliers stay O(1) and the absolute witness stays meaningful.
fn unimodular(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<i64>> {
    loop {
        let mut a: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i64).collect()).collect();
        for _ in 0..4 {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j {
                let k = if rng.random_bool(0.5) { 1 } else { -1 };
                for col in 0..n {
                    a[i][col] += k * a[j][col];
                }
            } else {
                for col in 0..n {
                    a[i][col] = -a[i][col];
                }
            }
        }
        let is_identity = a.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, &x)| x == (i == j) as i64));
        if !is_identity && a.iter().flatten().all(|x| x.abs() <= 3) {
            return a;
        }
    }
}

fn diophantine_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let n = rng.random_range(2..=3);
        let d = rng.random_range(1..=2);
        let (_, deck) = common::deck(&mut rng, n, d);
        let p: Vec<i32> = (0..n).map(|_| rng.random_range(-1..=1)).collect();
        let p = if p.iter().all(|&x| x == 0) { (0..n).map(|k| (k == 0) as i32).collect() } else { p };
        let j = rng.random_range(0..d);
        let planted = diophantine::plant_vertical_resonance(&deck, &p, j).unwrap();
        let a = unimodular(&mut rng, n);
        let moved = diophantine::change_generators(&planted, &a).map_err(|e| format!("case {t}: {e}"))?;
        let mut q = vec![0u32; d];
        q[j] = 2;
        let rec = diophantine::small_divisor(&moved, &p, &q, Target::V(j));
        ensure(rec.value <= 1e-10, || format!("case {t}: witness divisor {} after transform", rec.value))?;
        worst = worst.max(rec.value);
        let n_scan = 2 + l1(&p);
        let verdict = |dk: &LinearDeck| diophantine::diophantine_fit(dk, n_scan, 2.0).is_ok();
        let plain_moved = diophantine::change_generators(&deck, &a).unwrap();
        ensure(verdict(&deck) == verdict(&plain_moved), || format!("case {t}: generic verdict changed"))?;
        ensure(!verdict(&planted) && !verdict(&moved), || format!("case {t}: planted resonance not detected"))?;
    }
    Ok(format!("20 unimodular changes, max transported witness {worst:.1e}, verdicts agree"))
}

fn l1(p: &[i32]) -> u32 {
    torus_kam::lattice::l1(p)
}

fn schedules() -> Outcome {
    let lat = Lattice::new(CMatrix::from_element(1, 1, c(0.1, 0.4))).unwrap();
    let kappa = lat.kappa();
    let fit = diophantine::DiophantineFit { tau_exp: 2.0, d_fit: 0.1, n_scan: 8, worst: None };
    let eps0 = 0.3;
    let limit = (kappa * eps0 / 20.0).min(std::f64::consts::LN_2 / 10.0);
    let mut p = KamParams::new(0.999 * limit, eps0, 0.7, &fit, 1, 1);
    let sched = kam::schedule(&p, kappa, 10_000).map_err(|e| e.to_string())?;
    ensure(sched.iter().all(|e| e.eps > eps0 / 2.0 && e.r > 0.35), || "domain floor violated".into())?;
    ensure(sched.windows(2).all(|w| w[1].eps < w[0].eps && w[1].r < w[0].r), || "not strictly decreasing".into())?;
    let sigma: f64 = sched.iter().map(|e| e.delta).sum();
    ensure(sigma < 2.0 * p.delta0, || format!("sum of deltas {sigma} >= {}", 2.0 * p.delta0))?;
    p.delta0 = kappa * eps0 / 20.0;
    ensure(matches!(kam::schedule(&p, kappa, 3), Err(Error::InvalidParams(_))), || "cond1 not enforced".into())?;
    let big = Lattice::new(CMatrix::from_element(1, 1, c(0.1, 5.0))).unwrap();
    p.delta0 = std::f64::consts::LN_2 / 10.0;
    p.eps0 = 1.0;
    ensure(matches!(kam::schedule(&p, big.kappa(), 3), Err(Error::InvalidParams(_))), || "cond2 not enforced".into())?;
    Ok(format!("10^4 steps: eps_K = {:.4} > {:.4}, r_K = {:.4} > 0.35, sum delta = {sigma:.6} < {:.6}", sched.last().unwrap().eps, eps0 / 2.0, sched.last().unwrap().r, 2.0 * 0.999 * limit))
}

fn negative_paths() -> Outcome {
    let dom = DomainSpec::new(0.2, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut seen = vec![];
    for (n, d, p, j) in [(1, 1, vec![1], 0), (2, 2, vec![1, -1], 1), (2, 1, vec![0, 1], 0)] {
        let lat = instance::random_lattice(n, &mut rng).unwrap();
        let mu = instance::random_real_mu(n, d, &mut rng);
        let inst = instance::planted(lat, mu, &p, j, &shape(10, dom)).unwrap();
        let fit = diophantine::DiophantineFit { tau_exp: 2.0, d_fit: 1e-2, n_scan: 0, worst: None };
        let mut params = KamParams::new(0.01, 0.2, 0.5, &fit, n, d);
        params.mu_exp = 2.0;
        match kam::run(&inst.system, &params) {
            Err(Error::ResonantDivisor { p: got_p, q, target, .. }) => {
                let pl = inst.planted.as_ref().unwrap();
                ensure(got_p == pl.p && q == pl.q && target == pl.target, || format!("wrong witness P={got_p:?} Q={q:?}"))?;
                seen.push(format!("P={got_p:?} Q={q:?} {target}"));
            }
            other => return Err(format!("planted n={n}: expected ResonantDivisor, got {:?}", other.map(|_| ()))),
        }
    }
    // independently perturb one generator of a commuting system
    let lat = instance::random_lattice(2, &mut rng).unwrap();
    let mu = instance::random_real_mu(2, 1, &mut rng);
    let inst = instance::conjugated(lat, mu, &shape(8, dom), &mut rng).unwrap();
    let mut pert = inst.system.pert().to_vec();
    pert[1].add_component_term(2, &[2], &[0, 1], c(1e-3, 0.0)).unwrap();
    let bad = inst.system.with_pert(pert).unwrap();
    let params = params_for(bad.linear(), 2, 1);
    match kam::run(&bad, &params) {
        Err(Error::CommutationDefectTooLarge { defect, .. }) => seen.push(format!("commutation defect {defect:.1e}")),
        other => return Err(format!("non-commuting: expected CommutationDefectTooLarge, got {:?}", other.map(|_| ()))),
    }
    Ok(seen.join("; "))
}

fn norm_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut min_gap = f64::INFINITY;
    for t in 0..500 {
        let n = rng.random_range(1..=3);
        let d = rng.random_range(1..=2);
        let m = rng.random_range(1..=2);
        let lat = common::lattice(&mut rng, n);
        let terms = rng.random_range(1..=12);
        let s = common::series(&mut rng, n, d, m, 5, terms, 0, 3);
        let dom = DomainSpec::new(rng.random_range(0.0..0.3), rng.random_range(0.2..1.0)).unwrap();
        let bound = s.norm_upper(&lat, dom);
        let sampled = s.sampled_sup(&lat, dom, 1000, &mut rng);
        ensure(sampled <= bound, || format!("series {t}: sampled {sampled:e} > bound {bound:e}"))?;
        if sampled > 0.0 {
            min_gap = min_gap.min(bound / sampled);
        }
    }
    Ok(format!("500 series x 1000 points, min bound/sampled = {min_gap:.3}"))
}

fn main() -> ExitCode {
    let guard = |f: &dyn Fn() -> Outcome| -> Outcome {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        })
    };
    let (c1, c2) = catch_unwind(end_to_end).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    let results: Vec<(&str, Outcome)> = vec![
        ("end-to-end linearization", c1),
        ("quadratic jet growth", c2),
        ("cohomology round-trip", guard(&cohomology_roundtrip)),
        ("commuting logarithms", guard(&commuting_logs)),
        ("trivialization", guard(&trivialization)),
        ("domain geometry", guard(&domain_geometry)),
        ("diophantine invariance", guard(&diophantine_invariance)),
        ("schedules", guard(&schedules)),
        ("negative paths", guard(&negative_paths)),
        ("norm soundness", guard(&norm_soundness)),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
