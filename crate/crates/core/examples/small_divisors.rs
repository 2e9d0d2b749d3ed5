// Non-resonance scan and the Diophantine constant fitted over a finite range,
// before and after planting an exact resonance.

use torus_kam::diophantine::{self, Target};
use torus_kam::linalg::c;
use torus_kam::{CMatrix, Lattice, LinearDeck, Result};

pub fn run() -> Result<()> {
    let lat = Lattice::new(CMatrix::from_row_slice(2, 2, &[c(0.13, 0.45), c(0.02, 0.03), c(-0.2, 0.01), c(0.37, 0.52)]))?;
    let deck = LinearDeck::from_lattice(&lat, CMatrix::from_row_slice(2, 1, &[c(1.21, 0.0), c(0.83, 0.0)]))?;
    let scan = diophantine::nonresonance_scan(&deck, 8);
    println!("generic deck: non-resonant through order 8 = {}", scan.ok);
    for tau in [1.0, 2.0, 3.0] {
        let fit = diophantine::diophantine_fit(&deck, 8, tau)?;
        let w = fit.worst.as_ref().unwrap();
        println!("τ = {tau}: D_fit = {:.4e}, attained at P={:?} Q={:?} {}", fit.d_fit, w.p, w.q, w.target);
    }
    let split = diophantine::splitting_divisor_check(&deck, 8, 2.0);
    println!("splitting divisors ok: {}", split.ok);

    // force μ_{·,0} = λ^{-P} so that (P, 2e_0) resonates for the fibre target
    let planted = diophantine::plant_vertical_resonance(&deck, &[1, -1], 0)?;
    let rec = diophantine::small_divisor(&planted, &[1, -1], &[2], Target::V(0));
    println!("planted divisor |λ^P μ^Q − μ| = {:.1e}", rec.value);
    match diophantine::diophantine_fit(&planted, 8, 2.0) {
        Err(e) => println!("fit refuses: {e}"),
        Ok(f) => println!("unexpected fit {:e}", f.d_fit),
    }

    // generator changes move the witness but keep it resonant
    let moved = diophantine::change_generators(&planted, &[vec![1, 1], vec![0, 1]])?;
    println!("after e′ ↦ A e′: {:.1e}", diophantine::small_divisor(&moved, &[1, -1], &[2], Target::V(0)).value);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
