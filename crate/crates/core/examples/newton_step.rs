// A few Newton steps by hand: each step solves the cohomological equations
// over a jet range and roughly doubles the order to which the system agrees
// with its linear part.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_kam::diophantine;
use torus_kam::instance::{self, InstanceShape};
use torus_kam::kam::{self, KamParams, StepState};
use torus_kam::{DomainSpec, Result};

pub fn run() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lat = instance::random_lattice(2, &mut rng)?;
    let mu = instance::random_real_mu(2, 1, &mut rng);
    let dom = DomainSpec::new(0.2, 0.5)?;
    let shape = InstanceShape { q_max: 12, p_max: 12, pert_norm: 1e-3, terms_per_component: 2, dom };
    let inst = instance::conjugated(lat, mu, &shape, &mut rng)?;
    let fit = diophantine::diophantine_fit(inst.system.linear(), 10, 2.0)?;
    let params = KamParams::new(0.01, 0.2, 0.5, &fit, 2, 1);

    let mut sys = inst.system.clone();
    let mut q = 1;
    for k in 0..4 {
        let out = kam::newton_step(&sys, StepState { k, q, dom }, &params)?;
        let r = &out.report;
        println!(
            "step {k}: order {} → {}, solves {:?}, ‖φ‖ = {:.2e}, commutation defect {:.1e}",
            r.v_min_before,
            r.v_min_after,
            r.jet_ranges,
            out.phi.norm_upper(sys.lattice(), dom),
            r.commutation_defect
        );
        sys = out.sys;
        q = 2 * q + 1;
        if sys.pert().iter().all(|p| p.is_zero()) {
            println!("perturbation exhausted through order {}", sys.q_max());
            break;
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
