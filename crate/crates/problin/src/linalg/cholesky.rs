//! Cholesky factor maintenance: rank-1 up/downdates, the rank-2 split, a
//! pivoted factorization for PSD matrices, and a bordered factorization for
//! Gram matrices that grow one column per iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Direction of a rank-1 modification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateSign {
    Update,
    Downdate,
}

/// In-place rank-1 update/downdate of a lower Cholesky factor:
/// on exit `L L^T = L_in L_in^T + sign * v v^T`.
///
/// Direct LINPACK-style formulation, O(n^2), no allocation beyond the
/// workspace copy of `v`. A downdate that loses positive definiteness fails
/// with a definiteness error and leaves `l` partially modified.
pub fn cholesky_rank1(l: &mut DMatrix<f64>, v: &DVector<f64>, sign: UpdateSign) -> Result<()> {
    let n = l.nrows();
    assert!(l.is_square(), "factor must be square");
    assert_eq!(v.len(), n, "update vector length mismatch");
    let s = match sign {
        UpdateSign::Update => 1.0,
        UpdateSign::Downdate => -1.0,
    };
    let mut w = v.clone();
    for j in 0..n {
        let ljj = l[(j, j)];
        if ljj <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                what: format!("Cholesky factor diagonal at {j}"),
            });
        }
        let wj = w[j];
        let arg = ljj * ljj + s * wj * wj;
        if arg <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                what: format!("rank-1 downdate at pivot {j}"),
            });
        }
        let r = arg.sqrt();
        let c = r / ljj;
        let t = wj / ljj;
        l[(j, j)] = r;
        for i in (j + 1)..n {
            l[(i, j)] = (l[(i, j)] + s * t * w[i]) / c;
            w[i] = c * w[i] - t * l[(i, j)];
        }
    }
    Ok(())
}

/// Split the symmetric rank-2 matrix `u v^T + v u^T` into one rank-1 update
/// and one rank-1 downdate:
///
/// `u v^T + v u^T = p p^T - q q^T` with `p = (u + v)/sqrt(2)`,
/// `q = (u - v)/sqrt(2)`.
pub fn rank2_as_two_rank1(u: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    assert_eq!(u.len(), v.len(), "rank-2 vectors must have equal length");
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    ((u + v) * inv_sqrt2, (u - v) * inv_sqrt2)
}

/// Rank-revealing pivoted Cholesky of a symmetric PSD matrix.
///
/// Returns `L` with `W ~= L L^T`, where `L` is `n x r` and `r` is the
/// numerical rank at the given absolute tolerance on the remaining diagonal.
pub struct PivotedCholesky {
    pub l: DMatrix<f64>,
    pub rank: usize,
}

pub fn pivoted_cholesky(w: &DMatrix<f64>, tol: f64) -> Result<PivotedCholesky> {
    let n = w.nrows();
    assert!(w.is_square(), "pivoted Cholesky needs a square matrix");
    let mut diag: Vec<f64> = (0..n).map(|i| w[(i, i)]).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = DMatrix::zeros(n, n);
    let mut rank = 0;
    let neg_tol = -tol.max(1e-14 * diag.iter().fold(0.0f64, |a, &b| a.max(b.abs()))).max(1e-300);

    for k in 0..n {
        // Pivot on the largest remaining diagonal entry.
        let (piv, &max_d) = diag[k..]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, d)| (i + k, d))
            .unwrap();
        if max_d <= tol {
            if max_d < neg_tol {
                return Err(Error::NotPositiveDefinite {
                    what: format!("pivoted Cholesky: diagonal {max_d:.3e} at step {k}"),
                });
            }
            break;
        }
        perm.swap(k, piv);
        diag.swap(k, piv);
        l.swap_rows(k, piv);

        let pk = perm[k];
        let d = diag[k].sqrt();
        l[(k, k)] = d;
        for i in (k + 1)..n {
            let pi = perm[i];
            let mut v = w[(pi, pk)];
            for j in 0..k {
                v -= l[(i, j)] * l[(k, j)];
            }
            let lik = v / d;
            l[(i, k)] = lik;
            diag[i] -= lik * lik;
        }
        rank = k + 1;
    }

    // Undo the row permutation so that L L^T approximates W directly.
    let mut out = DMatrix::zeros(n, rank);
    for (i, &pi) in perm.iter().enumerate() {
        for j in 0..rank {
            out[(pi, j)] = l[(i, j)];
        }
    }
    Ok(PivotedCholesky { l: out, rank })
}

/// Cholesky factorization of a symmetric positive definite Gram matrix grown
/// one row/column at a time (bordering scheme): appending costs O(k^2).
#[derive(Debug, Clone, Default)]
pub struct BorderedCholesky {
    /// Lower factor stored row by row (row `i` has `i + 1` entries).
    rows: Vec<Vec<f64>>,
}

impl BorderedCholesky {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Append the new column `[cross; diag]` of the Gram matrix, i.e. the
    /// inner products of the new vector against the old ones and itself.
    pub fn push(&mut self, cross: &[f64], diag: f64) -> Result<()> {
        let k = self.dim();
        assert_eq!(cross.len(), k, "cross terms must match current dimension");
        // Solve L w = cross by forward substitution.
        let mut w = vec![0.0; k];
        for i in 0..k {
            let mut v = cross[i];
            for j in 0..i {
                v -= self.rows[i][j] * w[j];
            }
            w[i] = v / self.rows[i][i];
        }
        let rem = diag - w.iter().map(|x| x * x).sum::<f64>();
        if rem <= 0.0 || !rem.is_finite() {
            return Err(Error::GramSingular { k: k + 1 });
        }
        w.push(rem.sqrt());
        self.rows.push(w);
        Ok(())
    }

    /// Solve `G x = b` where `G = L L^T`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.dim();
        assert_eq!(b.len(), k);
        let mut x = b.to_vec();
        for i in 0..k {
            for j in 0..i {
                x[i] -= self.rows[i][j] * x[j];
            }
            x[i] /= self.rows[i][i];
        }
        for i in (0..k).rev() {
            for j in (i + 1)..k {
                x[i] -= self.rows[j][i] * x[j];
            }
            x[i] /= self.rows[i][i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    use crate::testutil::{random_matrix, random_spd_simple, random_vector};

    #[test]
    fn identity_update_with_e1() {
        let mut l = DMatrix::identity(2, 2);
        let v = DVector::from_vec(vec![1.0, 0.0]);
        cholesky_rank1(&mut l, &v, UpdateSign::Update).unwrap();
        assert_relative_eq!(
            l,
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0f64.sqrt(), 1.0])),
            epsilon = 1e-14
        );
    }

    #[test]
    fn update_then_downdate_restores_factor() {
        let a = random_spd_simple(5, 3);
        let mut l = a.cholesky().unwrap().l();
        let orig = l.clone();
        let v = random_vector(5, 4);
        cholesky_rank1(&mut l, &v, UpdateSign::Update).unwrap();
        cholesky_rank1(&mut l, &v, UpdateSign::Downdate).unwrap();
        assert!((l - orig).amax() <= 1e-12);
    }

    #[test]
    fn random_update_matches_refactorization() {
        for seed in 0..5 {
            let a = random_spd_simple(8, 50 + seed);
            let v = random_vector(8, 60 + seed);
            for sign in [UpdateSign::Update, UpdateSign::Downdate] {
                let s = match sign {
                    UpdateSign::Update => 1.0,
                    UpdateSign::Downdate => -1.0,
                };
                let target = &a + &v * v.transpose() * s;
                if target.clone().cholesky().is_none() {
                    continue;
                }
                let mut l = a.clone().cholesky().unwrap().l();
                cholesky_rank1(&mut l, &v, sign).unwrap();
                let rebuilt = &l * l.transpose();
                let err = (&rebuilt - &target).norm() / target.norm();
                assert!(err <= 1e-10, "relative error {err}");
            }
        }
    }

    #[test]
    fn downdate_losing_definiteness_errors() {
        let mut l = DMatrix::identity(3, 3);
        let v = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        assert!(matches!(
            cholesky_rank1(&mut l, &v, UpdateSign::Downdate),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rank2_split_with_equal_vectors() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (p, q) = rank2_as_two_rank1(&u, &u);
        assert_relative_eq!(p, &u * 2.0f64.sqrt(), epsilon = 1e-15);
        assert!(q.amax() == 0.0);
    }

    #[test]
    fn rank2_split_orthonormal_vectors_has_unit_eigenvalues() {
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let (p, q) = rank2_as_two_rank1(&u, &v);
        let m = &p * p.transpose() - &q * q.transpose();
        let eig = nalgebra::SymmetricEigen::new(m);
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        assert_relative_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank2_split_reconstructs_random_outer_products() {
        let u = random_vector(5, 70);
        let v = random_vector(5, 71);
        let (p, q) = rank2_as_two_rank1(&u, &v);
        let rebuilt = &p * p.transpose() - &q * q.transpose();
        let target = &u * v.transpose() + &v * u.transpose();
        assert!((rebuilt - target).amax() <= 1e-14);
    }

    #[test]
    fn pivoted_cholesky_handles_rank_deficiency() {
        let b = random_matrix(6, 3, 80);
        let w = &b * b.transpose();
        let pc = pivoted_cholesky(&w, 1e-12 * w.trace()).unwrap();
        assert_eq!(pc.rank, 3);
        assert!((&pc.l * pc.l.transpose() - &w).amax() <= 1e-10 * w.amax());
    }

    #[test]
    fn pivoted_cholesky_full_rank_matches() {
        let w = random_spd_simple(5, 81);
        let pc = pivoted_cholesky(&w, 1e-12 * w.trace()).unwrap();
        assert_eq!(pc.rank, 5);
        assert!((&pc.l * pc.l.transpose() - &w).amax() <= 1e-10 * w.amax());
    }

    #[test]
    fn pivoted_cholesky_rejects_indefinite() {
        let w = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(pivoted_cholesky(&w, 1e-12).is_err());
    }

    #[test]
    fn bordered_cholesky_matches_dense_solve() {
        let g = random_spd_simple(6, 90);
        let mut bc = BorderedCholesky::new();
        for k in 0..6 {
            let cross: Vec<f64> = (0..k).map(|i| g[(i, k)]).collect();
            bc.push(&cross, g[(k, k)]).unwrap();
        }
        let b = random_vector(6, 91);
        let x = bc.solve(b.as_slice());
        let expected = g.cholesky().unwrap().solve(&b);
        for i in 0..6 {
            assert_relative_eq!(x[i], expected[i], max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn bordered_cholesky_rejects_dependent_column() {
        let mut bc = BorderedCholesky::new();
        bc.push(&[], 1.0).unwrap();
        // Second vector identical to the first: Gram [[1,1],[1,1]] singular.
        assert!(matches!(
            bc.push(&[1.0], 1.0),
            Err(Error::GramSingular { k: 2 })
        ));
    }
}
