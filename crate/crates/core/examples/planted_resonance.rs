// Failure modes: an exact small-divisor resonance and a pair of maps that
// do not commute. Both stop the iteration with a typed error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_kam::diophantine::DiophantineFit;
use torus_kam::instance::{self, InstanceShape};
use torus_kam::kam::{self, KamParams};
use torus_kam::linalg::c;
use torus_kam::{DomainSpec, Error, Result};

pub fn run() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dom = DomainSpec::new(0.2, 0.5)?;
    let shape = InstanceShape { q_max: 10, p_max: 12, pert_norm: 1e-3, terms_per_component: 2, dom };
    // the divisor scan would refuse this deck outright, so hand the solver a
    // nominal constant and let it hit the zero divisor itself
    let fit = DiophantineFit { tau_exp: 2.0, d_fit: 1e-2, n_scan: 0, worst: None };

    let lat = instance::random_lattice(2, &mut rng)?;
    let inst = instance::planted(lat, instance::random_real_mu(2, 1, &mut rng), &[1, -1], 0, &shape)?;
    println!("planted: {:?}", inst.planted);
    match kam::run(&inst.system, &KamParams::new(0.01, 0.2, 0.5, &fit, 2, 1)) {
        Err(e @ Error::ResonantDivisor { .. }) => println!("→ {e}"),
        other => println!("unexpected: {:?}", other.map(|_| ())),
    }

    let lat = instance::random_lattice(2, &mut rng)?;
    let inst = instance::conjugated(lat, instance::random_real_mu(2, 1, &mut rng), &shape, &mut rng)?;
    let mut pert = inst.system.pert().to_vec();
    pert[1].add_component_term(2, &[2], &[0, 1], c(1e-3, 0.0))?;
    let broken = inst.system.with_pert(pert)?;
    match kam::run(&broken, &KamParams::new(0.01, 0.2, 0.5, &fit, 2, 1)) {
        Err(e @ Error::CommutationDefectTooLarge { .. }) => println!("→ {e}"),
        other => println!("unexpected: {:?}", other.map(|_| ())),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
