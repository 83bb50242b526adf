//! Symmetric vectorization and Kronecker-type products through their
//! characteristic properties.
//!
//! `svec` stacks the lower triangle column-wise with off-diagonal entries
//! scaled by sqrt(2), making it an isometry between symmetric matrices under
//! the Frobenius norm and vectors under the 2-norm. The products are never
//! materialized; they act through
//!
//! - `(A (x) B) vec(X)  = vec(B X A^T)`
//! - `(A [x] B) vec(Y)  = vec(B Y^T A^T)`        (box product)
//! - `(A (xs) B) svec(X) = svec(B X A^T + A X B^T) / 2`

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Vector living in svec coordinates of symmetric `n x n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SvecVector {
    n: usize,
    data: DVector<f64>,
}

impl SvecVector {
    pub fn from_data(n: usize, data: DVector<f64>) -> Result<Self> {
        if data.len() != svec_len(n) {
            return Err(Error::Shape {
                expected: format!("svec length {} for n = {}", svec_len(n), n),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self { n, data })
    }

    /// Dimension of the underlying symmetric matrix.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_data(self) -> DVector<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }
}

/// `n(n+1)/2`.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Recover `n` from a triangular length, or fail with a shape error.
pub fn svec_dim(len: usize) -> Result<usize> {
    // n = (sqrt(8 len + 1) - 1) / 2
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if svec_len(n) != len {
        return Err(Error::Shape {
            expected: "a triangular number n(n+1)/2".into(),
            got: format!("{len}"),
        });
    }
    Ok(n)
}

/// Column-wise symmetric stacking with sqrt(2)-scaled off-diagonals.
///
/// The input must already be symmetric within `1e-10` relative tolerance;
/// packing a symmetrized copy of an asymmetric matrix is an error, not a
/// convenience.
pub fn svec(x: &DMatrix<f64>) -> Result<SvecVector> {
    let asym = super::operator::max_asymmetry(x);
    let tol = super::operator::asym_tol(x, 1e-10);
    if asym > tol {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
            tol,
        });
    }
    let n = x.nrows();
    let mut data = DVector::zeros(svec_len(n));
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            data[idx] = if i == j { x[(i, j)] } else { SQRT2 * x[(i, j)] };
            idx += 1;
        }
    }
    Ok(SvecVector { n, data })
}

/// Inverse of [`svec`]; the output is exactly symmetric by construction.
pub fn smat(v: &SvecVector) -> DMatrix<f64> {
    let n = v.n;
    let mut x = DMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            let val = if i == j {
                v.data[idx]
            } else {
                v.data[idx] / SQRT2
            };
            x[(i, j)] = val;
            x[(j, i)] = val;
            idx += 1;
        }
    }
    x
}

/// [`smat`] for a raw triangular-length vector.
pub fn smat_from_data(data: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = svec_dim(data.len())?;
    Ok(smat(&SvecVector {
        n,
        data: data.clone(),
    }))
}

/// `(A (xs) B) svec(X) = svec(B X A^T + A X B^T) / 2` without forming the
/// product. `A` and `B` may be rectangular (`m x n`) mapping svec space of
/// `n x n` matrices to svec space of `m x m` matrices.
pub fn sym_kron_apply(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &SvecVector) -> Result<SvecVector> {
    if a.shape() != b.shape() || a.ncols() != x.n {
        return Err(Error::Shape {
            expected: format!("A, B of shape m x {} matching svec dim {}", x.n, x.n),
            got: format!("A {:?}, B {:?}", a.shape(), b.shape()),
        });
    }
    let xm = smat(x);
    let bx = b * &xm;
    let ax = a * &xm;
    // (B X A^T + A X B^T) / 2, built symmetrically entry by entry.
    let m = a.nrows();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = 0.5
                * (bx.row(i).dot(&a.row(j)) + ax.row(i).dot(&b.row(j)));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    svec(&out)
}

/// `(A (x) B) vec(X) = vec(B X A^T)` for `X` of shape `B.ncols x A.ncols`.
pub fn kron_apply(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let (n1, n2) = (a.ncols(), b.ncols());
    if x.len() != n1 * n2 {
        return Err(Error::Shape {
            expected: format!("vec length {}", n1 * n2),
            got: format!("{}", x.len()),
        });
    }
    let xm = DMatrix::from_column_slice(n2, n1, x.as_slice());
    let out = b * xm * a.transpose();
    Ok(DVector::from_column_slice(out.as_slice()))
}

/// `(A [x] B) vec(Y) = vec(B Y^T A^T)` for `Y` of shape `A.ncols x B.ncols`.
pub fn box_apply(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let (n1, n2) = (a.ncols(), b.ncols());
    if x.len() != n1 * n2 {
        return Err(Error::Shape {
            expected: format!("vec length {}", n1 * n2),
            got: format!("{}", x.len()),
        });
    }
    let ym = DMatrix::from_column_slice(n1, n2, x.as_slice());
    let out = b * ym.transpose() * a.transpose();
    Ok(DVector::from_column_slice(out.as_slice()))
}
