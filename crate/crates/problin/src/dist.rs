//! Matrix-variate normal beliefs and the induced Gaussian belief over the
//! solution `x = H b`.
//!
//! A symmetric belief stores its covariance through the factor `W` of
//! `W (xs) W` only — the full covariance has `n^2(n+1)^2/4` entries and is
//! never formed. Sampling and density evaluation go through `W` and its
//! (pivoted) Cholesky factor.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    pivoted_cholesky, smat_from_data, LinearOperator, RankOneTerm, DENSE_FALLBACK_LIMIT,
};

/// Gaussian over `n x m` matrices with covariance `V (x) W` in
/// `vec(X^T)` coordinates.
#[derive(Debug, Clone)]
pub struct MatrixNormal {
    pub mean: LinearOperator,
    pub row_cov: LinearOperator,
    pub col_cov: LinearOperator,
}

impl MatrixNormal {
    /// Both covariance operands must be symmetric positive definite; this is
    /// probed via Cholesky success on the dense fallback when densifiable.
    pub fn new(
        mean: LinearOperator,
        row_cov: LinearOperator,
        col_cov: LinearOperator,
    ) -> Result<Self> {
        if row_cov.rows() != mean.rows() || col_cov.rows() != mean.cols() {
            return Err(Error::Shape {
                expected: format!("{}x{} covariances", mean.rows(), mean.cols()),
                got: format!("V {:?}, W {:?}", row_cov.shape(), col_cov.shape()),
            });
        }
        for (name, op) in [("row covariance", &row_cov), ("column covariance", &col_cov)] {
            if !op.is_symmetric() {
                return Err(Error::NotSymmetric {
                    max_asymmetry: op.symmetry_defect(3, 2),
                    tol: 1e-10,
                });
            }
            if op.rows() <= DENSE_FALLBACK_LIMIT {
                let dense = op.to_dense()?;
                if dense.cholesky().is_none() {
                    return Err(Error::NotPositiveDefinite {
                        what: name.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            mean,
            row_cov,
            col_cov,
        })
    }
}

/// Gaussian over symmetric `n x n` matrices: mean `X0` and covariance
/// `W (xs) W` in svec coordinates.
#[derive(Debug, Clone)]
pub struct SymmetricMatrixNormal {
    mean: LinearOperator,
    cov_factor: LinearOperator,
}

impl SymmetricMatrixNormal {
    /// The mean must be symmetric (probed within `1e-10`); the factor must be
    /// symmetric positive semi-definite (probed on the dense fallback when
    /// densifiable — posterior factors are rank-deficient by design).
    pub fn new(mean: LinearOperator, cov_factor: LinearOperator) -> Result<Self> {
        if mean.rows() != mean.cols() || cov_factor.shape() != mean.shape() {
            return Err(Error::Shape {
                expected: "square mean and matching covariance factor".into(),
                got: format!("mean {:?}, W {:?}", mean.shape(), cov_factor.shape()),
            });
        }
        let mean = if mean.is_symmetric() {
            mean
        } else {
            mean.assume_symmetric(3, 1e-10, 17)?
        };
        let cov_factor = if cov_factor.is_symmetric() {
            cov_factor
        } else {
            cov_factor.assume_symmetric(3, 1e-10, 19)?
        };
        if cov_factor.rows() <= DENSE_FALLBACK_LIMIT {
            let dense = cov_factor.to_dense()?;
            pivoted_cholesky(&dense, psd_tol(&dense)).map_err(|_| Error::NotPositiveDefinite {
                what: "covariance factor W".into(),
            })?;
        }
        Ok(Self { mean, cov_factor })
    }

    /// Construct without the dense PSD validation, for factors that are
    /// positive semi-definite by construction (scaled projections, Schur
    /// complements of validated priors). The symmetry flags must already be
    /// correct.
    pub(crate) fn new_trusted(mean: LinearOperator, cov_factor: LinearOperator) -> Self {
        debug_assert_eq!(mean.shape(), cov_factor.shape());
        Self { mean, cov_factor }
    }

    /// Scalar-mean prior `N(alpha I, (w_scale I) (xs) (w_scale I))`.
    pub fn scalar(n: usize, alpha: f64, w_scale: f64) -> Self {
        Self {
            mean: LinearOperator::scaled_identity(n, alpha),
            cov_factor: LinearOperator::scaled_identity(n, w_scale),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.rows()
    }

    pub fn mean(&self) -> &LinearOperator {
        &self.mean
    }

    pub fn cov_factor(&self) -> &LinearOperator {
        &self.cov_factor
    }

    pub fn into_parts(self) -> (LinearOperator, LinearOperator) {
        (self.mean, self.cov_factor)
    }
}

/// Gaussian belief over a vector with a cached covariance trace.
#[derive(Debug, Clone)]
pub struct GaussianVector {
    pub mean: DVector<f64>,
    pub cov: LinearOperator,
    pub trace_cov: f64,
}

impl GaussianVector {
    pub fn new(mean: DVector<f64>, cov: LinearOperator, trace_cov: f64) -> Result<Self> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::Shape {
                expected: format!("{0}x{0} covariance", mean.len()),
                got: format!("{:?}", cov.shape()),
            });
        }
        if trace_cov < -1e-10 {
            return Err(Error::NotPositiveDefinite {
                what: format!("solution covariance trace {trace_cov:.3e}"),
            });
        }
        Ok(Self {
            mean,
            cov,
            trace_cov: trace_cov.max(0.0),
        })
    }

    /// Point mass at `mean`.
    pub fn dirac(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: LinearOperator::zero(n),
            trace_cov: 0.0,
        }
    }
}

fn psd_tol(w: &DMatrix<f64>) -> f64 {
    (1e-12 * w.trace().abs()).max(1e-14)
}

/// Draw `count` samples `X = X0 + L smat(z) L^T` with `W = L L^T` and `z`
/// standard normal in svec coordinates. The factor may be rank-deficient;
/// a pivoted Cholesky with tolerance `1e-12 tr(W)` truncates to the
/// numerical rank. Samples are exactly symmetric by construction and the
/// stream is a deterministic function of `seed`.
pub fn sample_symmetric(
    belief: &SymmetricMatrixNormal,
    seed: u64,
    count: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let n = belief.dim();
    let w = belief.cov_factor.to_dense()?;
    let x0 = symmetrized_dense(&belief.mean)?;
    let pc = pivoted_cholesky(&w, psd_tol(&w)).map_err(|_| Error::NotPositiveDefinite {
        what: "covariance factor W in sampling".into(),
    })?;
    let l = pc.l; // n x r
    let r = pc.rank;
    let zdim = r * (r + 1) / 2;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DVector::from_fn(zdim, |_, _| StandardNormal.sample(&mut rng));
        let zm = smat_from_data(&z)?;
        // X = X0 + L Z L^T, filled from the lower triangle so the transpose
        // is bitwise equal.
        let lz = &l * zm;
        let mut x = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = x0[(i, j)] + lz.row(i).dot(&l.row(j));
                x[(i, j)] = v;
                x[(j, i)] = v;
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Belief over `x = H b` induced by a belief over `H`:
/// mean `E[H] b`, covariance `(W (b^T W b) + (W b)(W b)^T) / 2` and its trace
/// `((b^T W b) tr(W) + ||W b||^2) / 2`.
pub fn solution_belief(
    h_belief: &SymmetricMatrixNormal,
    b: &DVector<f64>,
) -> Result<GaussianVector> {
    let n = h_belief.dim();
    if b.len() != n {
        return Err(Error::Shape {
            expected: format!("right-hand side of length {n}"),
            got: format!("{}", b.len()),
        });
    }
    let mean = h_belief.mean.apply(b);
    let w = &h_belief.cov_factor;
    let wb = w.apply(b);
    let btwb = b.dot(&wb).max(0.0);
    let trace = 0.5 * (btwb * w.trace() + wb.norm_squared());
    let cov = LinearOperator::sum(
        w.clone().scale(0.5 * btwb),
        LinearOperator::low_rank(
            LinearOperator::zero(n),
            vec![RankOneTerm {
                left: wb.clone(),
                right: wb,
                coeff: 0.5,
            }],
            true,
        ),
    );
    GaussianVector::new(mean, cov, trace)
}

/// Log-density of a symmetric matrix under the belief, evaluated in svec
/// coordinates (Lebesgue measure on the `n(n+1)/2`-dimensional svec space):
///
/// `log N(svec(X); svec(X0), W (xs) W)`
///   `= -(d/2) ln 2pi - ((n+1)/2) ln det W - q/2`,
///
/// with `q = || L^{-1} (X - X0) L^{-T} ||_F^2` for `W = L L^T` and
/// `d = n(n+1)/2`; uses `det(W (xs) W) = det(W)^{n+1}` and
/// `(W (xs) W)^{-1} = W^{-1} (xs) W^{-1}`.
pub fn logpdf_symmetric(belief: &SymmetricMatrixNormal, x: &DMatrix<f64>) -> Result<f64> {
    let n = belief.dim();
    if x.shape() != (n, n) {
        return Err(Error::Shape {
            expected: format!("{n}x{n}"),
            got: format!("{:?}", x.shape()),
        });
    }
    let w = belief.cov_factor.to_dense()?;
    let chol = w.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: "covariance factor W in logpdf".into(),
    })?;
    let x0 = symmetrized_dense(&belief.mean)?;
    let d = x - x0;
    let l = chol.l();
    // S = L^{-1} D L^{-T}
    let mut s = d;
    l.solve_lower_triangular_mut(&mut s);
    s.transpose_mut();
    l.solve_lower_triangular_mut(&mut s);
    let quad = s.norm_squared();
    let logdet_w = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let dim = (n * (n + 1) / 2) as f64;
    Ok(
        -0.5 * dim * (2.0 * std::f64::consts::PI).ln() - 0.5 * (n as f64 + 1.0) * logdet_w
            - 0.5 * quad,
    )
}

fn symmetrized_dense(op: &LinearOperator) -> Result<DMatrix<f64>> {
    let m = op.to_dense()?;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    use crate::testutil::{dense_sym_kron, random_spd_simple, random_symmetric, random_vector};

    fn belief_from_dense(x0: DMatrix<f64>, w: DMatrix<f64>) -> SymmetricMatrixNormal {
        SymmetricMatrixNormal::new(LinearOperator::dense(x0), LinearOperator::dense(w)).unwrap()
    }

    #[test]
    fn zero_covariance_samples_equal_the_mean() {
        let x0 = random_symmetric(3, 1);
        let belief = belief_from_dense(x0.clone(), DMatrix::zeros(3, 3));
        for x in sample_symmetric(&belief, 7, 4).unwrap() {
            assert_relative_eq!(x, x0.clone(), epsilon = 1e-14);
        }
    }

    #[test]
    fn unit_covariance_entry_variance_matches() {
        let n = 2;
        let belief = SymmetricMatrixNormal::scalar(n, 0.0, 1.0);
        let count = 100_000;
        let samples = sample_symmetric(&belief, 99, count).unwrap();
        // Var[X_11] = 1 for W = I (the svec-space covariance of I (xs) I is
        // the identity and the (1,1) entry is a diagonal svec coordinate).
        let vals: Vec<f64> = samples.iter().map(|x| x[(0, 0)]).collect();
        let mean = vals.iter().sum::<f64>() / count as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        // Standard error of a variance estimate ~ var * sqrt(2/(count-1)).
        let se = (2.0 / (count as f64 - 1.0)).sqrt();
        assert!(
            (var - 1.0).abs() <= 3.0 * se,
            "empirical variance {var} outside 3 standard errors"
        );
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let belief = belief_from_dense(random_symmetric(3, 2), random_spd_simple(3, 3));
        let a = sample_symmetric(&belief, 1234, 3).unwrap();
        let b = sample_symmetric(&belief, 1234, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y, "same seed must reproduce bit-identical samples");
        }
    }

    #[test]
    fn samples_are_bitwise_symmetric() {
        let belief = belief_from_dense(random_symmetric(4, 5), random_spd_simple(4, 6));
        for x in sample_symmetric(&belief, 11, 5).unwrap() {
            assert_eq!(x, x.transpose(), "sample must be exactly symmetric");
        }
    }

    #[test]
    fn sample_covariance_converges_to_sym_kron() {
        use crate::linalg::svec;
        let n = 3;
        let w = random_spd_simple(n, 8);
        let belief = belief_from_dense(DMatrix::zeros(n, n), w.clone());
        let count = 100_000;
        let samples = sample_symmetric(&belief, 21, count).unwrap();
        let d = n * (n + 1) / 2;
        let mut cov = DMatrix::zeros(d, d);
        let mut mean = DVector::zeros(d);
        let vecs: Vec<DVector<f64>> = samples
            .iter()
            .map(|x| svec(x).unwrap().into_data())
            .collect();
        for v in &vecs {
            mean += v;
        }
        mean /= count as f64;
        for v in &vecs {
            let c = v - &mean;
            cov += &c * c.transpose();
        }
        cov /= (count - 1) as f64;
        let expected = dense_sym_kron(&w, &w);
        for i in 0..d {
            for j in 0..d {
                // Entrywise tolerance: 5 standard errors of a covariance
                // estimate, se ~ sqrt((S_ii S_jj + S_ij^2)/count).
                let se = ((expected[(i, i)] * expected[(j, j)] + expected[(i, j)].powi(2))
                    / count as f64)
                    .sqrt();
                assert!(
                    (cov[(i, j)] - expected[(i, j)]).abs() <= 5.0 * se,
                    "entry ({i},{j}): {} vs {} (se {se})",
                    cov[(i, j)],
                    expected[(i, j)]
                );
            }
        }
    }

    #[test]
    fn solution_belief_with_zero_factor_is_a_dirac() {
        let n = 3;
        let h0 = random_symmetric(n, 30);
        let belief = belief_from_dense(h0.clone(), DMatrix::zeros(n, n));
        let b = random_vector(n, 31);
        let g = solution_belief(&belief, &b).unwrap();
        assert_relative_eq!(g.mean, &h0 * &b, epsilon = 1e-14);
        assert_eq!(g.trace_cov, 0.0);
    }

    #[test]
    fn solution_belief_identity_factor_example() {
        let n = 3;
        let belief = SymmetricMatrixNormal::scalar(n, 1.0, 1.0);
        let mut b = DVector::zeros(n);
        b[0] = 1.0;
        let g = solution_belief(&belief, &b).unwrap();
        let mut expected = DMatrix::identity(n, n) * 0.5;
        expected[(0, 0)] += 0.5;
        assert_relative_eq!(g.cov.to_dense().unwrap(), expected, epsilon = 1e-13);
        assert_relative_eq!(g.trace_cov, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn solution_belief_trace_matches_dense_oracle() {
        for n in [6usize, 16, 64] {
            let w = random_spd_simple(n, 100 + n as u64);
            let belief = belief_from_dense(random_symmetric(n, n as u64), w.clone());
            let b = random_vector(n, 200 + n as u64);
            let g = solution_belief(&belief, &b).unwrap();
            let wb = &w * &b;
            let dense_cov = 0.5 * (&w * b.dot(&wb) + &wb * wb.transpose());
            assert_relative_eq!(g.trace_cov, dense_cov.trace(), max_relative = 1e-10);
            assert_relative_eq!(
                g.cov.to_dense().unwrap(),
                dense_cov,
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn logpdf_is_maximized_at_the_mean() {
        let n = 3;
        let x0 = random_symmetric(n, 40);
        let w = random_spd_simple(n, 41);
        let belief = belief_from_dense(x0.clone(), w);
        let at_mode = logpdf_symmetric(&belief, &x0).unwrap();
        for seed in 0..5 {
            let other = random_symmetric(n, 500 + seed);
            assert!(logpdf_symmetric(&belief, &other).unwrap() <= at_mode);
        }
    }

    #[test]
    fn logpdf_scalar_case_is_the_standard_normal() {
        let belief = SymmetricMatrixNormal::scalar(1, 0.0, 1.0);
        for x in [-1.5, 0.0, 0.7] {
            let m = DMatrix::from_element(1, 1, x);
            let expected = -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln();
            assert_relative_eq!(
                logpdf_symmetric(&belief, &m).unwrap(),
                expected,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn logpdf_matches_dense_svec_space_oracle() {
        use crate::linalg::svec;
        let n = 3;
        let x0 = random_symmetric(n, 50);
        let w = random_spd_simple(n, 51);
        let belief = belief_from_dense(x0.clone(), w.clone());
        let x = random_symmetric(n, 52);

        let sigma = dense_sym_kron(&w, &w);
        let diff = svec(&x).unwrap().into_data() - svec(&x0).unwrap().into_data();
        let chol = sigma.clone().cholesky().unwrap();
        let quad = diff.dot(&chol.solve(&diff));
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let d = (n * (n + 1) / 2) as f64;
        let expected = -0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * quad;

        assert_relative_eq!(
            logpdf_symmetric(&belief, &x).unwrap(),
            expected,
            max_relative = 1e-10
        );
    }

    #[test]
    fn logpdf_rejects_singular_factor() {
        let belief = belief_from_dense(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2));
        assert!(matches!(
            logpdf_symmetric(&belief, &DMatrix::zeros(2, 2)),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn matrix_normal_validates_covariances() {
        let mean = LinearOperator::dense(random_symmetric(3, 60));
        let v = LinearOperator::dense(random_spd_simple(3, 61));
        let w = LinearOperator::dense(random_spd_simple(3, 62));
        assert!(MatrixNormal::new(mean.clone(), v.clone(), w).is_ok());
        let indefinite = LinearOperator::dense_symmetric(DMatrix::from_diagonal(
            &DVector::from_vec(vec![1.0, -1.0, 1.0]),
        ))
        .unwrap();
        assert!(matches!(
            MatrixNormal::new(mean, v, indefinite),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
