// Lattice data, fundamental parallelotopes and the decay of h^P between
// nested domains.

use torus_kam::linalg::c;
use torus_kam::{CMatrix, Lattice, Result};

pub fn run() -> Result<()> {
    let lat = Lattice::new(CMatrix::from_row_slice(2, 2, &[c(0.2, 0.5), c(0.0, 0.05), c(-0.1, 0.0), c(0.3, 0.4)]))?;
    println!("multipliers exp(2πi e′):\n{:.4}", lat.multipliers());
    println!("σ_min(Im e′) = {:.4}, κ₀ = {:.4}, κ = {:.4}", lat.sigma_min(), lat.kappa0(), lat.kappa());
    println!("vertices of the ε = 0.1 parallelotope: {:?}", lat.parallelotope_vertices(0.1));
    let (eps, eps_p) = (0.3, 0.1);
    println!("{:>10} {:>12} {:>12} {:>12}", "P", "sup|h^P|", "inf-sup", "bound");
    for p in [[1, 0], [0, 1], [1, -1], [2, 3], [-4, 1]] {
        let l1 = torus_kam::lattice::l1(&p) as f64;
        let bound = (-lat.kappa() * (eps - eps_p) * l1).exp();
        let decay = lat.inf_sup_decay(eps, eps_p, &p);
        assert!(decay <= bound * (1.0 + 1e-12));
        println!("{:>10} {:>12.4e} {:>12.4e} {:>12.4e}", format!("{p:?}"), lat.sup_h_pow(eps, &p), decay, bound);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
