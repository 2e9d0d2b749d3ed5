//! Small helpers around dense complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type CMatrix = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Max-row-sum norm.
pub fn norm_inf(a: &CMatrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// `‖A - B‖_∞ / max(‖B‖_∞, 1)`.
pub fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    norm_inf(&(a - b)) / norm_inf(b).max(1.0)
}

pub fn is_upper_triangular(a: &CMatrix) -> bool {
    (0..a.nrows()).all(|i| (0..i.min(a.ncols())).all(|j| a[(i, j)] == Complex64::new(0.0, 0.0)))
}

/// Principal logarithm with imaginary part in `[0, 2π)`.
pub fn ln_branch(z: Complex64) -> Complex64 {
    let mut arg = z.arg();
    if arg < 0.0 {
        arg += 2.0 * std::f64::consts::PI;
    }
    if arg >= 2.0 * std::f64::consts::PI {
        arg -= 2.0 * std::f64::consts::PI;
    }
    Complex64::new(z.norm().ln(), arg)
}

pub fn matrix_to_rows(a: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    a.row_iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err("ragged matrix rows".into());
    }
    Ok(CMatrix::from_fn(nr, nc, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

/// Serde adapter: complex matrices as nested `[re, im]` row arrays.
pub mod serde_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(a: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod serde_matrix_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(matrix_to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        let mats = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        mats.iter()
            .map(|m| matrix_from_rows(m).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod serde_complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let v = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(v.into_iter().map(|[re, im]| c(re, im)).collect())
    }
}
