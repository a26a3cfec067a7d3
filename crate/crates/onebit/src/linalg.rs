//! Minimal dense row-major matrix, just enough for measurement operators
//! and the LP solver's normal equations.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows in matrix".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matvec: {}x{} matrix with vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(self.rows_iter().map(|row| dot(row, x)).collect())
    }

    /// `A^T y`.
    pub fn t_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::Dimension(format!(
                "t_matvec: {}x{} matrix with vector of length {}",
                self.rows,
                self.cols,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.rows_iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        Ok(out)
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.rows_iter().map(|r| r.to_vec()).collect()
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_nested().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(rows).map_err(|e| D::Error::custom(e.to_string()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

/// In-place Cholesky factorization of a symmetric positive-definite matrix
/// given as the full dense square; returns the lower factor.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("cholesky: matrix not square".into()));
    }
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::Numerical(format!(
                        "cholesky: non-positive pivot {sum:e} at {i}"
                    )));
                }
                l.set(i, i, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b` for `x` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_roundtrip() {
        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0, 11.0]);
        assert_eq!(a.t_matvec(&[1.0, 0.0, 1.0]).unwrap(), vec![6.0, 8.0]);
        assert!(a.matvec(&[1.0]).is_err());
    }

    #[test]
    fn ragged_rejected() {
        assert!(Matrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = M M^T + I is SPD
        let m = Matrix::from_rows(vec![
            vec![1.0, 0.3, -0.2],
            vec![0.0, 1.2, 0.5],
            vec![0.7, -0.1, 0.9],
        ])
        .unwrap();
        let n = 3;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, dot(m.row(i), m.row(j)) + if i == j { 1.0 } else { 0.0 });
            }
        }
        let b = vec![1.0, -2.0, 0.5];
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &b);
        let r = a.matvec(&x).unwrap();
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_serde_nested_rows() {
        let a = Matrix::from_rows(vec![vec![1.5, 2.0], vec![3.0, -4.25]]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.5,2.0],[3.0,-4.25]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
    }
}
