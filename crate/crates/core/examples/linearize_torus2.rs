// A two-dimensional torus with a rank-two normal bundle, the largest
// configuration exercised routinely. Also cross-checks the conjugacy at
// sampled points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use torus_kam::diophantine;
use torus_kam::instance::{self, InstanceShape};
use torus_kam::kam::{self, KamParams};
use torus_kam::{DomainSpec, Result};

pub fn run() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let lat = instance::random_lattice(2, &mut rng)?;
    let mu = instance::random_real_mu(2, 2, &mut rng);
    let dom = DomainSpec::new(0.2, 0.5)?;
    let shape = InstanceShape { q_max: 12, p_max: 12, pert_norm: 1e-3, terms_per_component: 2, dom };
    let inst = instance::conjugated(lat, mu, &shape, &mut rng)?;

    let fit = diophantine::diophantine_fit(inst.system.linear(), 10, 2.0)?;
    println!("D_fit = {:.3e} over |P|+|Q| ≤ {}", fit.d_fit, fit.n_scan);
    let mut params = KamParams::new(0.01, 0.2, 0.5, &fit, 2, 2);
    params.mu_exp = 2.0;
    let start = Instant::now();
    let (phi, rep) = kam::run(&inst.system, &params)?;
    println!("{} steps in {:.2}s", rep.steps.len(), start.elapsed().as_secs_f64());
    for s in &rep.steps {
        println!("  step {}: v_min {} → {} in {} solves", s.k, s.v_min_before, s.v_min_after, s.inner_iterations);
    }
    let dom = rep.final_domain_original;
    println!("series defect {:.1e}", kam::verify_conjugacy(&phi, &inst.system, dom)?);
    let small = DomainSpec::new(dom.eps, 0.05)?;
    println!("pointwise defect near the torus {:.1e}", kam::sampled_pointwise_defect(&phi, &inst.system, small, 100, 0)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
