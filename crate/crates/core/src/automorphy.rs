//! Constant (flat) factors of automorphy and their trivialization over the
//! cylinder `ℂⁿ/ℤⁿ`.
//!
//! A constant factor assigns an invertible `d×d` matrix to each of the `2n`
//! lattice generators `e_1..e_n, e'_1..e'_n`; the cocycle law reduces to
//! `ρ(λ+μ) = ρ(λ)ρ(μ)`, so the images must commute.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{self, CMatrix};
use crate::matcom::{self, CommutingFamily};

const COMMUTE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "FactorRepr", into = "FactorRepr")]
pub struct ConstantFactor {
    lat: Lattice,
    rho: Vec<CMatrix>,
}

#[derive(Serialize, Deserialize)]
struct FactorRepr {
    lattice: Lattice,
    #[serde(with = "linalg::serde_matrix_vec")]
    rho: Vec<CMatrix>,
}

impl TryFrom<FactorRepr> for ConstantFactor {
    type Error = Error;
    fn try_from(r: FactorRepr) -> Result<Self> {
        ConstantFactor::new(r.lattice, r.rho)
    }
}

impl From<ConstantFactor> for FactorRepr {
    fn from(f: ConstantFactor) -> Self {
        FactorRepr { lattice: f.lat, rho: f.rho }
    }
}

impl ConstantFactor {
    pub fn new(lat: Lattice, rho: Vec<CMatrix>) -> Result<Self> {
        let n = lat.n();
        if rho.len() != 2 * n {
            return Err(Error::Shape(format!("expected {} generator images, got {}", 2 * n, rho.len())));
        }
        let d = rho[0].nrows();
        if d == 0 || rho.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::Shape("generator images must be square of a common size".into()));
        }
        for i in 0..rho.len() {
            for j in i + 1..rho.len() {
                let defect = linalg::norm_inf(&linalg::commutator(&rho[i], &rho[j]));
                let scale = (linalg::norm_inf(&rho[i]) * linalg::norm_inf(&rho[j])).max(1.0);
                if defect > COMMUTE_TOL * scale {
                    return Err(Error::NotCommuting { i, j, defect });
                }
            }
        }
        Ok(ConstantFactor { lat, rho })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn rank(&self) -> usize {
        self.rho[0].nrows()
    }

    /// Images of `e_1..e_n, e'_1..e'_n`, in that order.
    pub fn generators(&self) -> &[CMatrix] {
        &self.rho
    }

    /// `ρ(Σ m_j gen_j) = Π ρ(gen_j)^{m_j}`.
    pub fn rho_of(&self, coeffs: &[i64]) -> Result<CMatrix> {
        if coeffs.len() != self.rho.len() {
            return Err(Error::Shape(format!("expected {} coefficients", self.rho.len())));
        }
        let d = self.rank();
        let mut out = CMatrix::identity(d, d);
        for (g, &m) in self.rho.iter().zip(coeffs) {
            if m == 0 {
                continue;
            }
            let base = if m < 0 {
                g.clone().try_inverse().ok_or(Error::SingularMatrix { modulus: 0.0 })?
            } else {
                g.clone()
            };
            out *= int_pow(&base, m.unsigned_abs());
        }
        Ok(out)
    }

    /// Point of `ℂⁿ` represented by generator `g` (`e_j` or `e'_j`).
    pub fn generator_point(&self, g: usize) -> Vec<Complex64> {
        let n = self.lat.n();
        if g < n {
            (0..n).map(|k| Complex64::new(if k == g { 1.0 } else { 0.0 }, 0.0)).collect()
        } else {
            self.lat.e_prime().row(g - n).iter().copied().collect()
        }
    }

    /// Replaces `ρ` by the equivalent factor `ρ̃(λ) = v(λ)ρ(λ)` where
    /// `v(z) = exp(Σ z_j L_j)` and `exp L_j = ρ(e_j)⁻¹`, so that `ρ̃(e_j) = I`.
    pub fn trivialize_over_cylinder(&self) -> Result<Trivialization> {
        let n = self.lat.n();
        let inverses = self.rho[..n]
            .iter()
            .map(|m| {
                m.clone().try_inverse().ok_or_else(|| Error::SingularMatrix {
                    modulus: m.clone().determinant().norm(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let logs = matcom::commuting_logs(&CommutingFamily::new(inverses)?)?;
        let rho = (0..2 * n)
            .map(|g| Ok(matcom::flow_map(&logs, &self.generator_point(g))? * &self.rho[g]))
            .collect::<Result<Vec<_>>>()?;
        let factor = ConstantFactor::new(self.lat.clone(), rho)?;
        Ok(Trivialization { logs, factor })
    }

    /// Simultaneous unitary diagonalization of the vertical generators
    /// `ρ(e'_j)`, which must be Hermitian and commute.
    pub fn hermitian_frame(&self) -> Result<HermitianFrame> {
        let n = self.lat.n();
        let d = self.rank();
        let vertical = &self.rho[n..];
        for m in vertical {
            let skew = linalg::norm_inf(&(m - m.adjoint()));
            if skew > 1e-9 * linalg::norm_inf(m).max(1.0) {
                return Err(Error::InvalidParams(format!("vertical generator is not Hermitian (defect {skew:e})")));
            }
        }
        // A generic real combination separates all joint eigenspaces.
        let mut comb = CMatrix::zeros(d, d);
        for (j, m) in vertical.iter().enumerate() {
            let w = 1.0 / (j as f64 + std::f64::consts::PI);
            comb += m * Complex64::new(w, 0.0);
        }
        let comb = (&comb + comb.adjoint()) * Complex64::new(0.5, 0.0);
        let frame = comb.symmetric_eigen().eigenvectors;
        let mut mu = DMatrix::<f64>::zeros(n, d);
        let mut max_imag: f64 = 0.0;
        for (j, m) in vertical.iter().enumerate() {
            let t = frame.adjoint() * m * &frame;
            let off = (0..d)
                .flat_map(|a| (0..d).map(move |b| (a, b)))
                .filter(|(a, b)| a != b)
                .map(|(a, b)| t[(a, b)].norm())
                .fold(0.0, f64::max);
            if off > 1e-9 * linalg::norm_inf(m).max(1.0) {
                return Err(Error::NumericalBreakdown(format!("generators are not simultaneously diagonal (off-diagonal {off:e})")));
            }
            for a in 0..d {
                mu[(j, a)] = t[(a, a)].re;
                max_imag = max_imag.max(t[(a, a)].im.abs());
                if t[(a, a)].norm() == 0.0 {
                    return Err(Error::SingularMatrix { modulus: 0.0 });
                }
            }
        }
        Ok(HermitianFrame { frame, mu, max_imag })
    }
}

fn int_pow(a: &CMatrix, mut e: u64) -> CMatrix {
    let d = a.nrows();
    let mut base = a.clone();
    let mut out = CMatrix::identity(d, d);
    while e > 0 {
        if e & 1 == 1 {
            out *= &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Trivialization {
    /// `L_j` with `exp L_j = ρ(e_j)⁻¹`.
    pub logs: Vec<CMatrix>,
    pub factor: ConstantFactor,
}

impl Trivialization {
    /// `v(z)`.
    pub fn flow(&self, z: &[Complex64]) -> Result<CMatrix> {
        matcom::flow_map(&self.logs, z)
    }
}

#[derive(Debug, Clone)]
pub struct HermitianFrame {
    /// Unitary `U` with `U* ρ(e'_j) U = diag(μ_{j,·})`.
    pub frame: CMatrix,
    /// `μ_{j,l}`, row `j` per vertical generator.
    pub mu: DMatrix<f64>,
    /// Largest `|Im|` seen on the diagonal before it was discarded.
    pub max_imag: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, rel_diff};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat1() -> Lattice {
        Lattice::new(CMatrix::from_element(1, 1, c(0.2, 0.8))).unwrap()
    }

    #[test]
    fn rho_of_basics() {
        let a = CMatrix::from_element(1, 1, c(2.0, 0.0));
        let b = CMatrix::from_element(1, 1, c(0.0, 3.0));
        let f = ConstantFactor::new(lat1(), vec![a.clone(), b.clone()]).unwrap();
        assert!(rel_diff(&f.rho_of(&[0, 0]).unwrap(), &CMatrix::identity(1, 1)) < 1e-16);
        assert!(rel_diff(&f.rho_of(&[1, 0]).unwrap(), &a) < 1e-16);
        let z = f.rho_of(&[-2, 3]).unwrap()[(0, 0)];
        assert!((z - c(0.0, -27.0) / 4.0).norm() < 1e-14);
    }

    #[test]
    fn rho_of_is_additive() {
        let s = CMatrix::from_fn(2, 2, |i, j| if i == j { c(1.0, 0.0) } else { c(0.3, 0.1 * i as f64) });
        let si = s.clone().try_inverse().unwrap();
        let diag = |a: f64, b: f64| &s * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(a, 0.1), c(b, -0.2)])) * &si;
        let lat = Lattice::scaled_identity(2, 0.5).unwrap();
        let f = ConstantFactor::new(lat, vec![diag(1.1, 0.9), diag(0.8, 1.3), diag(1.5, 0.7), diag(0.6, 1.2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let l: Vec<i64> = (0..4).map(|_| rng.random_range(-3..=3)).collect();
            let m: Vec<i64> = (0..4).map(|_| rng.random_range(-3..=3)).collect();
            let lm: Vec<i64> = l.iter().zip(&m).map(|(a, b)| a + b).collect();
            let lhs = f.rho_of(&lm).unwrap();
            let rhs = f.rho_of(&l).unwrap() * f.rho_of(&m).unwrap();
            assert!(rel_diff(&lhs, &rhs) < 1e-9);
        }
    }

    #[test]
    fn already_trivial_factor_unchanged() {
        let m = CMatrix::from_fn(2, 2, |i, j| if i == j { c(2.0, 0.0) } else { c(0.5, 0.0) });
        let lat = Lattice::new(CMatrix::from_element(1, 1, c(0.0, 1.0))).unwrap();
        let f = ConstantFactor::new(lat, vec![CMatrix::identity(2, 2), m.clone()]).unwrap();
        let t = f.trivialize_over_cylinder().unwrap();
        assert!(linalg::norm_inf(&t.logs[0]) < 1e-15);
        assert!(rel_diff(&t.factor.generators()[1], &m) < 1e-15);
    }

    #[test]
    fn scalar_closed_form() {
        let cval = c(0.7, -1.2);
        let rho1 = c(1.5, 0.4);
        let lat = lat1();
        let ep = lat.e_prime()[(0, 0)];
        let f = ConstantFactor::new(lat, vec![CMatrix::from_element(1, 1, cval), CMatrix::from_element(1, 1, rho1)]).unwrap();
        let t = f.trivialize_over_cylinder().unwrap();
        assert!((t.factor.generators()[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-9);
        // v(z) = c^{-z} = exp(z·ln(1/c)), Im ln(1/c) ∈ [0, 2π)
        let v = (ep * linalg::ln_branch(cval.inv())).exp();
        assert!((t.factor.generators()[1][(0, 0)] - v * rho1).norm() < 1e-12);
    }

    #[test]
    fn trivialized_factor_is_z_independent() {
        let n3 = CMatrix::from_fn(3, 3, |i, j| if j == i + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let i3 = CMatrix::identity(3, 3);
        let a = &i3 * c(2.0, 0.5) + &n3;
        let b = &i3 * c(-1.0, 0.3) + &n3 * &n3 * c(0.4, 0.0);
        let lat = Lattice::new(CMatrix::from_element(1, 1, c(0.3, 0.9))).unwrap();
        let f = ConstantFactor::new(lat, vec![a, b]).unwrap();
        let t = f.trivialize_over_cylinder().unwrap();
        assert!(rel_diff(&t.factor.generators()[0], &i3) < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in 0..2 {
            let lam = f.generator_point(g);
            let mut first: Option<CMatrix> = None;
            for _ in 0..20 {
                let z = vec![c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))];
                let zl = vec![z[0] + lam[0]];
                let val = t.flow(&zl).unwrap() * &f.generators()[g] * t.flow(&z).unwrap().try_inverse().unwrap();
                match &first {
                    None => first = Some(val),
                    Some(f0) => assert!(rel_diff(&val, f0) < 1e-8),
                }
            }
            assert!(rel_diff(first.as_ref().unwrap(), &t.factor.generators()[g]) < 1e-8);
        }
    }

    #[test]
    fn hermitian_case_has_real_multipliers() {
        let u = CMatrix::from_fn(2, 2, |i, j| c(0.6 * (i + j) as f64 - 0.3, 0.2 * i as f64 - 0.1 * j as f64)).qr().q();
        let herm = |a: f64, b: f64| &u * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(a, 0.0), c(b, 0.0)])) * u.adjoint();
        let lat = Lattice::scaled_identity(2, 0.4).unwrap();
        let i2 = CMatrix::identity(2, 2);
        let f = ConstantFactor::new(lat, vec![i2.clone(), i2, herm(1.5, -0.7), herm(0.8, 2.0)]).unwrap();
        let fr = f.trivialize_over_cylinder().unwrap().factor.hermitian_frame().unwrap();
        assert!(fr.max_imag < 1e-9);
        let mut row0: Vec<f64> = fr.mu.row(0).iter().copied().collect();
        row0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((row0[0] + 0.7).abs() < 1e-12 && (row0[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let f = ConstantFactor::new(lat1(), vec![CMatrix::from_element(1, 1, c(2.0, 0.0)), CMatrix::from_element(1, 1, c(1.0, 1.0))]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"rho\":[[[[2.0,0.0]]],[[[1.0,1.0]]]]"));
        let back: ConstantFactor = serde_json::from_str(&s).unwrap();
        assert_eq!(back.generators(), f.generators());
    }
}
