//! Orthogonal projections onto the complement of a block's column span.

use nalgebra::DMatrix;

use super::operator::LinearOperator;
use crate::error::{Error, Result};

/// `P = I - S (S^T S)^{-1} S^T`, the projector onto `span(S)^perp`.
///
/// `S` must have full column rank; the rank check uses a pivoted QR with
/// tolerance `1e-12 * ||S||` and the error names the first dependent column.
pub fn orthogonal_projection(s: &DMatrix<f64>) -> Result<LinearOperator> {
    let n = s.nrows();
    if s.ncols() == 0 {
        return Ok(LinearOperator::projection_from_orthonormal(
            DMatrix::zeros(n, 0),
            true,
        ));
    }
    let q = orthonormal_basis(s)?;
    Ok(LinearOperator::projection_from_orthonormal(q, true))
}

/// Orthonormal basis of `span(S)` via column-pivoted QR, with a full-rank
/// check at tolerance `1e-12 * ||S||`.
pub fn orthonormal_basis(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = s.ncols();
    let norm = s.norm();
    let tol = (1e-12 * norm).max(1e-300);
    let qr = s.clone().col_piv_qr();
    let r = qr.r();
    // Pivoted R has non-increasing |diagonal|; the first small pivot marks a
    // dependent column. Map it back to the original ordering.
    let mut order = nalgebra::RowDVector::<f64>::from_fn(k, |_, j| j as f64);
    qr.p().permute_columns(&mut order);
    for i in 0..k.min(s.nrows()) {
        if r[(i, i)].abs() <= tol {
            return Err(Error::RankDeficient {
                column: order[i] as usize,
            });
        }
    }
    if k > s.nrows() {
        return Err(Error::RankDeficient { column: s.nrows() });
    }
    Ok(qr.q().columns(0, k).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    use crate::testutil::{pinv, random_matrix};

    #[test]
    fn projection_away_from_e1() {
        let s = DMatrix::from_columns(&[DVector::from_vec(vec![1.0, 0.0, 0.0])]);
        let p = orthogonal_projection(&s).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 1.0]));
        assert_relative_eq!(p.to_dense().unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn full_basis_projects_to_zero() {
        let s = random_matrix(4, 4, 9);
        let p = orthogonal_projection(&s).unwrap().to_dense().unwrap();
        assert!(p.amax() <= 1e-12);
    }

    #[test]
    fn empty_block_gives_identity() {
        let s = DMatrix::zeros(3, 0);
        let p = orthogonal_projection(&s).unwrap();
        assert_relative_eq!(p.to_dense().unwrap(), DMatrix::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn idempotent_symmetric_and_annihilates_s() {
        let s = random_matrix(6, 3, 17);
        let p = orthogonal_projection(&s).unwrap();
        let pd = p.to_dense().unwrap();
        assert_relative_eq!(&pd * &pd, pd.clone(), epsilon = 1e-12);
        assert_relative_eq!(pd.transpose(), pd.clone(), epsilon = 1e-13);
        assert!((&pd * &s).amax() <= 1e-12);

        // Against the dense pseudo-inverse oracle P = I - S S^+.
        let oracle = DMatrix::identity(6, 6) - &s * pinv(&s, 1e-12);
        assert_relative_eq!(pd, oracle, epsilon = 1e-11);
    }

    #[test]
    fn rank_deficient_block_names_the_column() {
        let c0 = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let c1 = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
        let c2 = &c0 * 2.0; // dependent on column 0
        let s = DMatrix::from_columns(&[c0, c1, c2]);
        match orthogonal_projection(&s) {
            Err(Error::RankDeficient { column }) => {
                assert!(column < 3, "column index {column} out of range");
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }
}
