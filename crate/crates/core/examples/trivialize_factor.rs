// Makes a constant factor of automorphy trivial along the real lattice
// directions, then reads off real vertical multipliers from a unitary one.

use num_complex::Complex64;
use torus_kam::automorphy::ConstantFactor;
use torus_kam::linalg::{self, c};
use torus_kam::{CMatrix, Lattice, Result};

pub fn run() -> Result<()> {
    let lat = Lattice::new(CMatrix::from_element(1, 1, c(0.25, 0.5)))?;
    // ρ(e_1) = rotation by a quarter turn, ρ(e′_1) = 2I + nilpotent
    let rho = vec![
        CMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]),
        CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(2.0, 0.0)]),
    ];
    let factor = ConstantFactor::new(lat.clone(), rho.clone())?;
    let triv = factor.trivialize_over_cylinder()?;
    println!("ρ̃(e_1):\n{:.3}", triv.factor.generators()[0]);
    println!("ρ̃(e′_1):\n{:.4}", triv.factor.generators()[1]);

    // v(z + λ) ρ(λ) v(z)⁻¹ does not depend on z
    for z in [c(0.0, 0.0), c(0.4, 0.1), c(-0.7, 0.2)] {
        let shifted: Vec<Complex64> = factor.generator_point(1).iter().map(|p| p + z).collect();
        let m = triv.flow(&shifted)? * &rho[1] * triv.flow(&[z])?.try_inverse().unwrap();
        println!("z = {z:.2}: deviation {:.1e}", linalg::rel_diff(&m, &triv.factor.generators()[1]));
    }

    // a unitary-flat factor: ρ(e_1) = I and ρ(e′_1) Hermitian
    let herm = ConstantFactor::new(
        lat,
        vec![
            CMatrix::identity(2, 2),
            CMatrix::from_row_slice(2, 2, &[c(1.3, 0.0), c(0.0, 0.2), c(0.0, -0.2), c(0.9, 0.0)]),
        ],
    )?;
    let frame = herm.hermitian_frame()?;
    println!("real vertical multipliers: {:.4}", frame.mu);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
