//! Conversions between component derivatives `(d/dg, d/db)` and Wirtinger
//! derivatives `(d/dw, d/dw̄)` for `w = g + jb`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{to_complex, CMatrix, RMatrix};

const HALF: Complex64 = Complex64::new(0.5, 0.0);
const J: Complex64 = Complex64::new(0.0, 1.0);

/// `d/dw = (d/dg - j d/db) / 2`, `d/dw̄ = (d/dg + j d/db) / 2`.
pub fn wirtinger(d_dg: &RMatrix, d_db: &RMatrix) -> Result<(CMatrix, CMatrix)> {
    wirtinger_c(&to_complex(d_dg), &to_complex(d_db))
}

/// Same as [`wirtinger`] for complex-valued functions.
pub fn wirtinger_c(d_dg: &CMatrix, d_db: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if d_dg.shape() != d_db.shape() {
        return Err(Error::Dimension(format!(
            "component blocks differ in shape: {:?} vs {:?}",
            d_dg.shape(),
            d_db.shape()
        )));
    }
    let jb = d_db * J;
    Ok(((d_dg - &jb) * HALF, (d_dg + &jb) * HALF))
}

/// Inverse map: `d/dg = d/dw + d/dw̄`, `d/db = j (d/dw - d/dw̄)`.
pub fn components(d_dw: &CMatrix, d_dwbar: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if d_dw.shape() != d_dwbar.shape() {
        return Err(Error::Dimension("Wirtinger blocks differ in shape".into()));
    }
    Ok((d_dw + d_dwbar, (d_dw - d_dwbar) * J))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_c;
    use proptest::prelude::*;

    #[test]
    fn identity_conductance_block() {
        let (dw, dwb) = wirtinger(&RMatrix::identity(3, 3), &RMatrix::zeros(3, 3)).unwrap();
        let half = to_complex(&RMatrix::identity(3, 3)) * Complex64::new(0.5, 0.0);
        assert_eq!(dw, half);
        assert_eq!(dwb, half);
    }

    #[test]
    fn identity_susceptance_block() {
        let (dw, dwb) = wirtinger(&RMatrix::zeros(2, 2), &RMatrix::identity(2, 2)).unwrap();
        let id = to_complex(&RMatrix::identity(2, 2));
        assert_eq!(dw, &id * Complex64::new(0.0, -0.5));
        assert_eq!(dwb, &id * Complex64::new(0.0, 0.5));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(wirtinger(&RMatrix::zeros(2, 2), &RMatrix::zeros(2, 3)).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_recovers_components(vals in proptest::collection::vec(-1e3f64..1e3, 24)) {
            let g = CMatrix::from_fn(3, 2, |r, c| Complex64::new(vals[2 * r + c], vals[6 + 2 * r + c]));
            let b = CMatrix::from_fn(3, 2, |r, c| Complex64::new(vals[12 + 2 * r + c], vals[18 + 2 * r + c]));
            let (dw, dwb) = wirtinger_c(&g, &b).unwrap();
            let (g2, b2) = components(&dw, &dwb).unwrap();
            prop_assert!(max_abs_c(&(g2 - &g)) <= 1e-12 * (1.0 + max_abs_c(&g)));
            prop_assert!(max_abs_c(&(b2 - &b)) <= 1e-12 * (1.0 + max_abs_c(&b)));
        }
    }
}
