//! Period lattices of complex tori and the geometry of their Reinhardt
//! fundamental domains.
//!
//! A lattice is given by the identity periods `e_1, …, e_n` together with
//! `n` extra periods `e'_1, …, e'_n` stored as the rows of `e_prime`. Under
//! `h = exp(2πi z)` the strip `ω_ε` becomes the Reinhardt domain `Ω_ε`, whose
//! log-modulus image is the parallelotope
//! `P_ε^+ = { Σ t_i Im e'_i : t ∈ (-ε, 1+ε)^n }`. Every sup-norm estimate in
//! the crate reduces to a maximization of a linear form over `P_ε^+`, which is
//! attained at a vertex.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

const DET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeRepr", into = "LatticeRepr")]
pub struct Lattice {
    e_prime: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct LatticeRepr {
    n: usize,
    e_prime: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<LatticeRepr> for Lattice {
    type Error = Error;

    fn try_from(r: LatticeRepr) -> Result<Self> {
        let m = linalg::matrix_from_rows(&r.e_prime).map_err(Error::Shape)?;
        if m.nrows() != r.n || m.ncols() != r.n {
            return Err(Error::Shape(format!(
                "e_prime is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols(),
                n = r.n
            )));
        }
        Lattice::new(m)
    }
}

impl From<Lattice> for LatticeRepr {
    fn from(l: Lattice) -> Self {
        LatticeRepr { n: l.n(), e_prime: linalg::matrix_to_rows(&l.e_prime) }
    }
}

/// The `(ε, r)` pair describing `Ω_{ε,r} = Ω_ε × Δ_r^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub eps: f64,
    pub r: f64,
}

impl DomainSpec {
    pub fn new(eps: f64, r: f64) -> Result<Self> {
        if !(eps >= 0.0) || !(r > 0.0) || !eps.is_finite() || !r.is_finite() {
            return Err(Error::InvalidParams(format!("domain needs eps >= 0, r > 0 (got {eps}, {r})")));
        }
        Ok(DomainSpec { eps, r })
    }
}

impl Lattice {
    pub fn new(e_prime: CMatrix) -> Result<Self> {
        if e_prime.nrows() != e_prime.ncols() || e_prime.nrows() == 0 {
            return Err(Error::Shape("e_prime must be a non-empty square matrix".into()));
        }
        let det = e_prime.map(|z| z.im).determinant();
        if det.abs() <= DET_TOL || !det.is_finite() {
            return Err(Error::SingularLattice { det: det.abs() });
        }
        Ok(Lattice { e_prime })
    }

    /// Square lattice-like torus: `e'_j = i·s·e_j`.
    pub fn scaled_identity(n: usize, s: f64) -> Result<Self> {
        Lattice::new(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(0.0, s)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn n(&self) -> usize {
        self.e_prime.nrows()
    }

    pub fn e_prime(&self) -> &CMatrix {
        &self.e_prime
    }

    /// `Im e'`, row `i` is `Im e'_i`.
    pub fn im_tau(&self) -> DMatrix<f64> {
        self.e_prime.map(|z| z.im)
    }

    /// Multipliers `λ_{j,k} = exp(2πi e'_{j,k})` of the horizontal deck maps.
    pub fn multipliers(&self) -> CMatrix {
        self.e_prime.map(|z| (Complex64::new(0.0, 2.0 * PI) * z).exp())
    }

    /// The `2^n` vertices of `P_ε^+`, in binary order of `t ∈ {-ε, 1+ε}^n`.
    pub fn parallelotope_vertices(&self, eps: f64) -> Vec<Vec<f64>> {
        let n = self.n();
        let w = self.im_tau();
        (0..1usize << n)
            .map(|mask| {
                let mut r = vec![0.0; n];
                for i in 0..n {
                    let t = if mask >> i & 1 == 1 { 1.0 + eps } else { -eps };
                    for (k, rk) in r.iter_mut().enumerate() {
                        *rk += t * w[(i, k)];
                    }
                }
                r
            })
            .collect()
    }

    /// `min_{R ∈ P_ε^+} ⟨R, P⟩`. The form is separable in `t`, so the
    /// vertex minimum is a sum of per-generator minima.
    fn min_pairing(&self, eps: f64, p: &[i32]) -> f64 {
        let w = self.im_tau();
        (0..self.n())
            .map(|i| {
                let a: f64 = p.iter().enumerate().map(|(k, &pk)| w[(i, k)] * pk as f64).sum();
                (-eps * a).min((1.0 + eps) * a)
            })
            .sum()
    }

    /// `sup_{h ∈ Ω_ε} |h^P| = max_R exp(-2π⟨R, P⟩)` over vertices `R` of `P_ε^+`.
    pub fn sup_h_pow(&self, eps: f64, p: &[i32]) -> f64 {
        debug_assert_eq!(p.len(), self.n());
        (-2.0 * PI * self.min_pairing(eps, p)).exp()
    }

    /// `ln sup_{h ∈ Ω_ε} |h^P|`, for callers that need to avoid overflow.
    pub fn log_sup_h_pow(&self, eps: f64, p: &[i32]) -> f64 {
        -2.0 * PI * self.min_pairing(eps, p)
    }

    pub fn sigma_min(&self) -> f64 {
        let sv = self.im_tau().svd(false, false).singular_values;
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Separation constant `κ_0 = σ_min(Im e') / √n`.
    ///
    /// For `|P|` the ℓ1 norm, `Σ_i |⟨Im e'_i, P⟩| ≥ ‖(Im e') P‖_2 ≥ σ_min ‖P‖_2 ≥ σ_min |P| / √n`.
    pub fn kappa0(&self) -> f64 {
        self.sigma_min() / (self.n() as f64).sqrt()
    }

    /// `κ = 2π κ_0`.
    pub fn kappa(&self) -> f64 {
        2.0 * PI * self.kappa0()
    }

    /// `inf_{R ∈ P_ε^+} sup_{R' ∈ P_{ε'}^+} exp(-2π⟨R - R', P⟩)` by explicit
    /// enumeration of both vertex sets.
    pub fn inf_sup_decay(&self, eps: f64, eps_prime: f64, p: &[i32]) -> f64 {
        let pf: Vec<f64> = p.iter().map(|&x| x as f64).collect();
        let dot = |r: &[f64]| r.iter().zip(&pf).map(|(a, b)| a * b).sum::<f64>();
        let inner: Vec<f64> = self.parallelotope_vertices(eps_prime).iter().map(|v| dot(v)).collect();
        self.parallelotope_vertices(eps)
            .iter()
            .map(|r| {
                let pr = dot(r);
                inner
                    .iter()
                    .map(|&pr2| (-2.0 * PI * (pr - pr2)).exp())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn l1(p: &[i32]) -> u32 {
    p.iter().map(|x| x.unsigned_abs()).sum()
}
