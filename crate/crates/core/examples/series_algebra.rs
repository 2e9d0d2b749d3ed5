// Taylor–Laurent maps: building, composing, truncating, and bounding them.

use torus_kam::linalg::c;
use torus_kam::{DomainSpec, Lattice, Result, TaylorLaurentSeries};

pub fn run() -> Result<()> {
    let lat = Lattice::scaled_identity(1, 0.5)?;
    let dom = DomainSpec::new(0.1, 0.4)?;
    // g(h, v) = (0.1 h v², 0.2 h⁻¹ v² + 0.05 v³) as a map of (h, v)
    let mut g = TaylorLaurentSeries::zero(1, 1, 2, 8, 6)?;
    g.add_component_term(0, &[2], &[1], c(0.1, 0.0))?;
    g.add_component_term(1, &[2], &[-1], c(0.2, 0.0))?;
    g.add_component_term(1, &[3], &[0], c(0.05, 0.0))?;
    println!("g has {} terms, vanishing order {}", g.nnz(), g.v_min());
    println!("‖g‖ on (ε, r) = (0.1, 0.4): {:.4e}", g.norm_upper(&lat, dom));

    // g∘(Id + g) through order 8
    let gg = g.compose(&g)?;
    println!("g∘(Id+g): {} terms, order {:?}", gg.nnz(), gg.v_min());
    println!("degree ≤ 4 part:");
    for (k, z) in gg.jet_truncate(4).terms() {
        println!("  Q={:?} P={:?}: h-comp {:.4}, v-comp {:.4}", k.q_vec(1), k.p_vec(1), z[0], z[1]);
    }

    // the upper norm dominates point values
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let sampled = gg.sampled_sup(&lat, dom, 500, &mut rng);
    println!("sampled sup {:.4e} ≤ norm {:.4e}", sampled, gg.norm_upper(&lat, dom));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
