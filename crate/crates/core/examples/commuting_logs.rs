// Simultaneous triangularization and commuting logarithms of a commuting
// pair with a nontrivial Jordan structure.

use num_complex::Complex64;
use torus_kam::linalg::{self, c};
use torus_kam::matcom::{self, CommutingFamily};
use torus_kam::{CMatrix, Result};

pub fn run() -> Result<()> {
    // (2I + N, 3I + N²) with N the 3×3 shift
    let n = CMatrix::from_fn(3, 3, |i, j| if j == i + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let id = CMatrix::identity(3, 3);
    let a = &id * c(2.0, 0.0) + &n;
    let b = &id * c(3.0, 0.0) + &n * &n;
    let fam = CommutingFamily::new(vec![a.clone(), b.clone()])?;

    let tri = matcom::simultaneous_triangularize(&fam)?;
    println!("joint blocks: {:?}", tri.blocks);
    println!("reconstruction error {:.1e}", tri.reconstruction_error(&fam));

    let logs = matcom::commuting_logs(&fam)?;
    for (l, m) in logs.iter().zip([&a, &b]) {
        println!("log:\n{:.4}", l);
        println!("exp(log) vs matrix: {:.1e}", linalg::rel_diff(&l.exp(), m));
    }
    println!("commutator of logs: {:.1e}", linalg::norm_inf(&linalg::commutator(&logs[0], &logs[1])));

    // the flow z ↦ exp(Σ z_j L_j) is a homomorphism
    let z = [c(0.3, -0.2), c(0.1, 0.4)];
    let w = [c(-0.5, 0.1), c(0.2, 0.2)];
    let zw: Vec<Complex64> = z.iter().zip(&w).map(|(x, y)| x + y).collect();
    let gap = linalg::rel_diff(&matcom::flow_map(&logs, &zw)?, &(matcom::flow_map(&logs, &z)? * matcom::flow_map(&logs, &w)?));
    println!("cocycle defect {gap:.1e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
