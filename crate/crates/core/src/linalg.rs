//! Small dense linear-algebra helpers shared by the solver and the
//! sensitivity pipeline.

use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

/// Pivots smaller than this fraction of the largest pivot are treated as zero.
const PIVOT_RATIO: f64 = 1e-13;

/// LU factorization with partial pivoting, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct Factorization {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Factorization {
    pub fn new(matrix: RMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "cannot factor a {}x{} matrix",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let lu = matrix.lu();
        let u = lu.u();
        let diag = u.diagonal();
        let largest = diag.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
        if diag.is_empty() {
            return Ok(Self { lu });
        }
        let smallest = diag.iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
        if !largest.is_finite() || largest == 0.0 || smallest <= PIVOT_RATIO * largest {
            return Err(Error::SingularJacobian);
        }
        Ok(Self { lu })
    }

    pub fn dim(&self) -> usize {
        self.lu.l().nrows()
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(rhs).ok_or(Error::SingularJacobian)
    }

    pub fn solve(&self, rhs: &RMatrix) -> Result<RMatrix> {
        self.lu.solve(rhs).ok_or(Error::SingularJacobian)
    }
}

/// Entrywise maximum absolute value.
pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs(m: &RMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.abs()))
}

pub fn conj(m: &CMatrix) -> CMatrix {
    m.map(|z| z.conj())
}

/// Scales row `i` of `m` by `d[i]`, i.e. computes `diag(d) * m`.
pub fn scale_rows(d: &[Complex64], m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_matrix_is_rejected() {
        let m = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Factorization::new(m), Err(Error::SingularJacobian)));
    }

    #[test]
    fn solves_multiple_rhs() {
        let m = RMatrix::from_row_slice(2, 2, &[4.0, 1.0, 2.0, 3.0]);
        let f = Factorization::new(m.clone()).unwrap();
        let rhs = RMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let inv = f.solve(&rhs).unwrap();
        let id = &m * &inv;
        assert!((id - RMatrix::identity(2, 2)).abs().max() < 1e-14);
    }
}
