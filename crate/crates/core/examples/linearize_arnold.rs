// The one-dimensional case: a curve in a surface, one horizontal and one
// fibre coordinate. Runs the full iteration and compares the result with the
// map used to build the instance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use torus_kam::diophantine;
use torus_kam::instance::{self, InstanceShape};
use torus_kam::kam::{self, KamParams};
use torus_kam::linalg::c;
use torus_kam::{CMatrix, DomainSpec, Lattice, Result};

pub fn run() -> Result<()> {
    let lat = Lattice::new(CMatrix::from_element(1, 1, c(0.31, 0.47)))?;
    let mu = CMatrix::from_element(1, 1, c(1.37, 0.0));
    let dom = DomainSpec::new(0.2, 0.5)?;
    let shape = InstanceShape { q_max: 16, p_max: 12, pert_norm: 1e-3, terms_per_component: 2, dom };
    let inst = instance::conjugated(lat, mu, &shape, &mut ChaCha8Rng::seed_from_u64(7))?;

    let fit = diophantine::diophantine_fit(inst.system.linear(), 12, 2.0)?;
    let mut params = KamParams::new(0.01, 0.2, 0.5, &fit, 1, 1);
    params.mu_exp = 2.0;
    let (phi, rep) = kam::run(&inst.system, &params)?;

    print!("{}", rep.to_csv());
    let truth = inst.phi_true.as_ref().unwrap();
    let diff = phi.sub(truth)?.norm_upper(inst.system.lattice(), rep.final_domain_original);
    println!("converged: {}, conjugacy defect {:.1e}, ‖Φ − Φ_true‖ = {diff:.1e}", rep.converged, rep.conjugacy_defect.unwrap_or(f64::NAN));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
