//! Pairwise-commuting matrix families: simultaneous triangularization,
//! splitting into joint generalized eigenspaces, logarithms that still
//! commute, and the entire flow `v(z) = exp(Σ z_j L_j)`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

const COMMUTE_TOL: f64 = 1e-10;
/// Two diagonal entries share a block iff `|λ - λ'| ≤ CLUSTER_TOL·(1 + |λ|)`.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Looser tolerance used only while searching for eigenvalues of possibly
/// defective blocks, whose computed eigenvalues scatter like `ε^{1/b}`.
const SEARCH_TOL: f64 = 1e-4;
const NULL_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct CommutingFamily {
    mats: Vec<CMatrix>,
}

impl CommutingFamily {
    pub fn new(mats: Vec<CMatrix>) -> Result<Self> {
        let d = mats.first().map_or(0, |m| m.nrows());
        if mats.is_empty() || mats.iter().any(|m| m.nrows() != d || m.ncols() != d) || d == 0 {
            return Err(Error::Shape("family needs at least one square matrix of a common size".into()));
        }
        for i in 0..mats.len() {
            for j in i + 1..mats.len() {
                let defect = linalg::norm_inf(&linalg::commutator(&mats[i], &mats[j]));
                let scale = (linalg::norm_inf(&mats[i]) * linalg::norm_inf(&mats[j])).max(1.0);
                if defect > COMMUTE_TOL * scale {
                    return Err(Error::NotCommuting { i, j, defect });
                }
            }
        }
        Ok(CommutingFamily { mats })
    }

    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn mats(&self) -> &[CMatrix] {
        &self.mats
    }
}

/// A joint eigen-block: positions `start..start+len` of the triangular basis,
/// on which matrix `j` has the single eigenvalue `eigenvalues[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBlock {
    pub start: usize,
    pub len: usize,
    pub eigenvalues: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct TriangularizedFamily {
    pub s: CMatrix,
    pub s_inv: CMatrix,
    /// `tri[j] = S⁻¹ A_j S`, block diagonal with upper-triangular blocks.
    pub tri: Vec<CMatrix>,
    pub blocks: Vec<JointBlock>,
}

impl TriangularizedFamily {
    /// `max_j ‖S tri_j S⁻¹ − A_j‖ / max(‖A_j‖, 1)`.
    pub fn reconstruction_error(&self, fam: &CommutingFamily) -> f64 {
        self.tri
            .iter()
            .zip(fam.mats())
            .map(|(t, a)| linalg::rel_diff(&(&self.s * t * &self.s_inv), a))
            .fold(0.0, f64::max)
    }
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

fn schur_diagonal(b: &CMatrix) -> Vec<Complex64> {
    if b.nrows() == 1 {
        return vec![b[(0, 0)]];
    }
    let (_, t) = b.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Orthonormal basis (as columns) of the numerical kernel of `b - λI`.
fn kernel(b: &CMatrix, lambda: Complex64) -> Result<CMatrix> {
    let k = b.nrows();
    let shifted = b - CMatrix::identity(k, k) * lambda;
    let scale = linalg::norm_inf(b).max(1.0);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^*");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
    let mut cols: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] <= NULL_TOL * scale)
        .collect();
    if cols.is_empty() {
        let smallest = idx[0];
        if svd.singular_values[smallest] > SEARCH_TOL * scale {
            return Err(Error::NumericalBreakdown(format!(
                "no eigenvector for eigenvalue {lambda} (σ_min = {:e})",
                svd.singular_values[smallest]
            )));
        }
        cols.push(smallest);
    }
    Ok(CMatrix::from_fn(k, cols.len(), |i, c| v_t[(cols[c], i)].conj()))
}

/// Finds a common unit eigenvector of the (commuting) `mats`. With
/// `preferred`, only that joint eigenvalue is accepted; `Ok(None)` means it is
/// not present.
fn common_eigenvector(
    mats: &[CMatrix],
    preferred: Option<&[Complex64]>,
) -> Result<Option<DVector<Complex64>>> {
    let k = mats[0].nrows();
    let mut w = CMatrix::identity(k, k);
    for (j, a) in mats.iter().enumerate() {
        let b = w.adjoint() * a * &w;
        let ev = schur_diagonal(&b);
        let anchor = match preferred {
            Some(pref) => match ev.iter().find(|&&e| close(e, pref[j], SEARCH_TOL)) {
                Some(&e) => e,
                None => return Ok(None),
            },
            None => ev[0],
        };
        let cluster: Vec<Complex64> = ev.iter().copied().filter(|&e| close(e, anchor, SEARCH_TOL)).collect();
        let lambda = cluster.iter().sum::<Complex64>() / cluster.len() as f64;
        let basis = kernel(&b, lambda)?;
        w = &w * basis;
    }
    let v = w.column(0).into_owned();
    let nrm = v.norm();
    Ok(Some(v / Complex64::new(nrm, 0.0)))
}

/// Hermitian unitary `H` whose first column is a unimodular multiple of `w`.
fn householder_completion(w: &DVector<Complex64>) -> CMatrix {
    let k = w.len();
    let theta = if w[0].norm() > 0.0 { w[0] / w[0].norm() } else { Complex64::new(1.0, 0.0) };
    let beta = -theta;
    let mut v = w.clone();
    v[0] -= beta;
    let vv = v.norm_squared();
    let mut h = CMatrix::identity(k, k);
    if vv > 1e-300 {
        h -= (&v * v.adjoint()) * Complex64::new(2.0 / vv, 0.0);
    }
    h
}

/// Unitary simultaneous triangularization by repeated common-eigenvector
/// deflation, followed by block-diagonalization over joint eigenvalues.
pub fn simultaneous_triangularize(fam: &CommutingFamily) -> Result<TriangularizedFamily> {
    let d = fam.dim();
    let m = fam.mats().len();
    let mut tri: Vec<CMatrix> = fam.mats().to_vec();
    let mut u = CMatrix::identity(d, d);
    let mut joint: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    let scale = fam.mats().iter().map(linalg::norm_inf).fold(1.0, f64::max);

    for p in 0..d {
        let k = d - p;
        let trailing: Vec<CMatrix> = tri.iter().map(|t| t.view((p, p), (k, k)).into_owned()).collect();
        let prev = joint.last().map(Vec::as_slice);
        let w = match prev {
            Some(pref) => match common_eigenvector(&trailing, Some(pref))? {
                Some(w) => w,
                None => common_eigenvector(&trailing, None)?.expect("unconstrained search"),
            },
            None => common_eigenvector(&trailing, None)?.expect("unconstrained search"),
        };
        let h = householder_completion(&w);
        let mut full = CMatrix::identity(d, d);
        full.view_mut((p, p), (k, k)).copy_from(&h);
        for t in tri.iter_mut() {
            *t = full.adjoint() * &*t * &full;
            let residue = (p + 1..d).map(|i| t[(i, p)].norm()).fold(0.0, f64::max);
            if residue > 1e-8 * scale {
                return Err(Error::NumericalBreakdown(format!(
                    "deflation left sub-diagonal residue {residue:e} at column {p}"
                )));
            }
            for i in p + 1..d {
                t[(i, p)] = Complex64::new(0.0, 0.0);
            }
        }
        u *= full;
        joint.push(tri.iter().map(|t| t[(p, p)]).collect());
    }

    // Group contiguous positions into joint eigen-blocks.
    let mut blocks: Vec<JointBlock> = Vec::new();
    for (p, ev) in joint.iter().enumerate() {
        match blocks.last_mut() {
            Some(b) if b.eigenvalues.iter().zip(ev).all(|(&a, &e)| close(a, e, CLUSTER_TOL)) => {
                b.len += 1;
            }
            _ => blocks.push(JointBlock { start: p, len: 1, eigenvalues: ev.clone() }),
        }
    }
    for i in 0..blocks.len() {
        for j in i + 1..blocks.len() {
            let same = blocks[i]
                .eigenvalues
                .iter()
                .zip(&blocks[j].eigenvalues)
                .all(|(&a, &b)| close(a, b, CLUSTER_TOL));
            if same {
                return Err(Error::NumericalBreakdown("joint eigenvalue block is not contiguous".into()));
            }
        }
    }
    for b in blocks.iter_mut() {
        for (j, t) in tri.iter().enumerate() {
            let mean: Complex64 = (b.start..b.start + b.len).map(|p| t[(p, p)]).sum();
            b.eigenvalues[j] = mean / b.len as f64;
        }
    }

    // Decouple each block from everything after it: with Y = [[I, X], [0, I]],
    // Y⁻¹ T Y kills the coupling iff T11 X − X T22 = −T12. X does not depend on
    // which family member is used, so each column is solved with the member
    // whose spectra are best separated there.
    let mut s = u.clone();
    let mut s_inv = u.adjoint();
    for b in &blocks {
        let (b0, e0) = (b.start, b.start + b.len);
        let rest = d - e0;
        if rest == 0 {
            continue;
        }
        let mut x = CMatrix::zeros(b.len, rest);
        for col in 0..rest {
            let pick = (0..m)
                .max_by(|&i, &j| {
                    let gi = (b.eigenvalues[i] - tri[i][(e0 + col, e0 + col)]).norm();
                    let gj = (b.eigenvalues[j] - tri[j][(e0 + col, e0 + col)]).norm();
                    gi.partial_cmp(&gj).unwrap()
                })
                .unwrap();
            let t = &tri[pick];
            let shift = t[(e0 + col, e0 + col)];
            let mut rhs = DVector::from_fn(b.len, |r, _| -t[(b0 + r, e0 + col)]);
            for prev in 0..col {
                let coeff = t[(e0 + prev, e0 + col)];
                for r in 0..b.len {
                    rhs[r] += x[(r, prev)] * coeff;
                }
            }
            // Back substitution with the upper-triangular T11 − shift·I.
            for r in (0..b.len).rev() {
                let mut acc = rhs[r];
                for c2 in r + 1..b.len {
                    acc -= t[(b0 + r, b0 + c2)] * x[(c2, col)];
                }
                let piv = t[(b0 + r, b0 + r)] - shift;
                if piv.norm() <= CLUSTER_TOL * (1.0 + shift.norm()) {
                    return Err(Error::NumericalBreakdown("blocks share an eigenvalue in every member".into()));
                }
                x[(r, col)] = acc / piv;
            }
        }
        for t in tri.iter_mut() {
            let t11 = t.view((b0, b0), (b.len, b.len)).into_owned();
            let t12 = t.view((b0, e0), (b.len, rest)).into_owned();
            let t22 = t.view((e0, e0), (rest, rest)).into_owned();
            let resid = &t11 * &x - &x * &t22 + &t12;
            let sc = linalg::norm_inf(&t12).max(linalg::norm_inf(&t11)).max(1.0);
            if linalg::norm_inf(&resid) > 1e-8 * sc * (1.0 + linalg::norm_inf(&x)) {
                return Err(Error::NumericalBreakdown("block decoupling is inconsistent across the family".into()));
            }
            t.view_mut((b0, e0), (b.len, rest)).fill(Complex64::new(0.0, 0.0));
        }
        // S ← S·Y, S⁻¹ ← Y⁻¹·S⁻¹
        let s_block = s.view((0, b0), (d, b.len)).into_owned();
        let mut s_right = s.view_mut((0, e0), (d, rest));
        s_right += &s_block * &x;
        let s_inv_rest = s_inv.view((e0, 0), (rest, d)).into_owned();
        let mut s_inv_top = s_inv.view_mut((b0, 0), (b.len, d));
        s_inv_top -= &x * &s_inv_rest;
    }

    Ok(TriangularizedFamily { s, s_inv, tri, blocks })
}

/// `ln A = (ln λ) I − Σ_{0<k<d} (−a/λ)^k / k` for `A = λI + a` upper
/// triangular with a single eigenvalue, `Im ln λ ∈ [0, 2π)`.
pub fn log_upper_triangular(a: &CMatrix) -> Result<CMatrix> {
    let d = a.nrows();
    if a.ncols() != d || d == 0 {
        return Err(Error::Shape("log_upper_triangular needs a square matrix".into()));
    }
    let scale = linalg::norm_inf(a).max(1.0);
    for i in 0..d {
        for j in 0..i {
            if a[(i, j)].norm() > 1e-14 * scale {
                return Err(Error::Shape("matrix is not upper triangular".into()));
            }
        }
    }
    let lambda = (0..d).map(|i| a[(i, i)]).sum::<Complex64>() / d as f64;
    let spread = (0..d).map(|i| (a[(i, i)] - lambda).norm()).fold(0.0, f64::max);
    if lambda.norm() <= 1e-14 * scale {
        return Err(Error::SingularMatrix { modulus: lambda.norm() });
    }
    if spread > CLUSTER_TOL * (1.0 + lambda.norm()) {
        return Err(Error::NotSingleEigenvalue { spread });
    }
    let mut nil = a.clone();
    for i in 0..d {
        nil[(i, i)] -= lambda;
        for j in 0..i {
            nil[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    let x = nil * (-lambda.inv());
    let mut out = CMatrix::identity(d, d) * linalg::ln_branch(lambda);
    let mut pow = CMatrix::identity(d, d);
    for k in 1..d {
        pow = &pow * &x;
        out -= &pow * Complex64::new(1.0 / k as f64, 0.0);
    }
    Ok(out)
}

/// Logarithms of every member, built blockwise in the joint triangular basis
/// so that they commute pairwise.
pub fn commuting_logs(fam: &CommutingFamily) -> Result<Vec<CMatrix>> {
    let tf = simultaneous_triangularize(fam)?;
    let d = fam.dim();
    tf.tri
        .iter()
        .map(|t| {
            let mut diag = CMatrix::zeros(d, d);
            for b in &tf.blocks {
                let blk = t.view((b.start, b.start), (b.len, b.len)).into_owned();
                diag.view_mut((b.start, b.start), (b.len, b.len)).copy_from(&log_upper_triangular(&blk)?);
            }
            Ok(&tf.s * diag * &tf.s_inv)
        })
        .collect()
}

/// `v(z) = exp(z_1 L_1 + … + z_n L_n)`.
pub fn flow_map(logs: &[CMatrix], z: &[Complex64]) -> Result<CMatrix> {
    if logs.len() != z.len() || logs.is_empty() {
        return Err(Error::Shape("flow_map needs one coordinate per logarithm".into()));
    }
    let d = logs[0].nrows();
    for i in 0..logs.len() {
        for j in i + 1..logs.len() {
            let defect = linalg::norm_inf(&linalg::commutator(&logs[i], &logs[j]));
            let scale = (linalg::norm_inf(&logs[i]) * linalg::norm_inf(&logs[j])).max(1.0);
            if defect > 1e-8 * scale {
                return Err(Error::NotCommuting { i, j, defect });
            }
        }
    }
    let mut gen = CMatrix::zeros(d, d);
    for (l, &zj) in logs.iter().zip(z) {
        gen += l * zj;
    }
    Ok(gen.exp())
}
