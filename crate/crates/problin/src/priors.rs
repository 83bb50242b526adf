//! Prior configuration: the empirical covariance class built from collected
//! actions and observations, prior construction from an initial solution
//! guess, and preconditioner plumbing.
//!
//! The covariance class couples the matrix and inverse views:
//!
//! - `W0_A = Y (S^T Y)^{-1} Y^T + phi P_{S-perp}`
//! - `W0_H = Z (Y^T Z)^{-1} Z^T + psi P_{Y-perp}`,  `Z = H0 Y`
//!
//! so `W0_A S = Y` holds at every intermediate iteration (the class acts like
//! `A` on the explored span, where `A S = Y` is exactly what has been
//! observed) and only matrix-vector products ever touch `A`. The scalar
//! degrees of freedom `phi`, `psi` govern uncertainty on the unexplored
//! orthogonal spaces and are what calibration adjusts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inference::ObservationBlock;
use crate::linalg::{orthogonal_projection, LinearOperator, RankOneTerm};

/// Prior mean configuration: a scalar `A0 = alpha I, H0 = alpha^{-1} I` or an
/// explicit symmetric positive definite pair with `H0 = A0^{-1}`.
#[derive(Debug, Clone)]
pub enum PriorMean {
    Scalar(f64),
    Explicit {
        a0: LinearOperator,
        h0: LinearOperator,
    },
}

/// Prior specification: mean pair plus the scalar degrees of freedom
/// `Phi = phi I`, `Psi = psi I` of the covariance class.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub mean: PriorMean,
    pub phi: f64,
    pub psi: f64,
}

impl PriorSpec {
    /// Scalar prior mean `alpha I` with the uncalibrated defaults
    /// `phi = alpha`, `psi = alpha^{-1}` (prior-scale uncertainty on the
    /// unexplored spaces; calibration replaces these).
    pub fn scalar(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scalar prior mean must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            mean: PriorMean::Scalar(alpha),
            phi: alpha,
            psi: 1.0 / alpha,
        })
    }

    /// Explicit mean pair; `A0 H0 = I` is verified on random probes within
    /// `1e-8` relative tolerance.
    pub fn explicit(a0: LinearOperator, h0: LinearOperator) -> Result<Self> {
        verify_inverse_pair(&a0, &h0, 1e-8)?;
        let n = a0.rows();
        // Prior-scale defaults from the mean's average eigenvalue.
        let alpha = (a0.trace() / n as f64).max(1e-300);
        Ok(Self {
            mean: PriorMean::Explicit { a0, h0 },
            phi: alpha,
            psi: 1.0 / alpha,
        })
    }

    pub fn with_phi_psi(mut self, phi: f64, psi: f64) -> Result<Self> {
        if phi < 0.0 || psi < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "phi and psi must be nonnegative, got ({phi}, {psi})"
            )));
        }
        self.phi = phi;
        self.psi = psi;
        Ok(self)
    }

    /// Apply `A0` to a vector.
    pub fn a0_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.mean {
            PriorMean::Scalar(alpha) => v * *alpha,
            PriorMean::Explicit { a0, .. } => a0.apply(v),
        }
    }

    /// Apply `H0 = A0^{-1}` to a vector.
    pub fn h0_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.mean {
            PriorMean::Scalar(alpha) => v / *alpha,
            PriorMean::Explicit { h0, .. } => h0.apply(v),
        }
    }

    pub fn a0_operator(&self, n: usize) -> LinearOperator {
        match &self.mean {
            PriorMean::Scalar(alpha) => LinearOperator::scaled_identity(n, *alpha),
            PriorMean::Explicit { a0, .. } => a0.clone(),
        }
    }

    pub fn h0_operator(&self, n: usize) -> LinearOperator {
        match &self.mean {
            PriorMean::Scalar(alpha) => LinearOperator::scaled_identity(n, 1.0 / alpha),
            PriorMean::Explicit { h0, .. } => h0.clone(),
        }
    }
}

fn verify_inverse_pair(a0: &LinearOperator, h0: &LinearOperator, tol: f64) -> Result<()> {
    if a0.shape() != h0.shape() || a0.rows() != a0.cols() {
        return Err(Error::Shape {
            expected: "square A0 and H0 of equal dimension".into(),
            got: format!("A0 {:?}, H0 {:?}", a0.shape(), h0.shape()),
        });
    }
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(23);
    let n = a0.rows();
    for _ in 0..3 {
        let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let back = a0.apply(&h0.apply(&v));
        if (&back - &v).norm() > tol * v.norm() {
            return Err(Error::InvalidArgument(format!(
                "A0 H0 deviates from the identity by {:.3e} on a random probe",
                (back - &v).norm() / v.norm()
            )));
        }
    }
    Ok(())
}

/// `W0_A = Y (S^T Y)^{-1} Y^T + phi P_{S-perp}`, using `A S = Y` so that `A`
/// itself is never needed. Symmetric by construction, `W0_A S = Y`.
pub fn covariance_class_wa(obs: &ObservationBlock, phi: f64) -> Result<LinearOperator> {
    let n = obs.n();
    if obs.k() == 0 {
        return Ok(LinearOperator::scaled_identity(n, phi));
    }
    let proj = orthogonal_projection(obs.actions())?;
    let base = proj.scale(phi);
    let terms = inverse_gram_outer_terms(obs.observations(), obs.actions(), obs.observations())?;
    Ok(LinearOperator::low_rank(base, terms, true))
}

/// `W0_H = Z (Y^T Z)^{-1} Z^T + psi P_{Y-perp}` with `Z = H0 Y` supplied
/// through the `A0`-inverse operator.
pub fn covariance_class_wh(
    obs: &ObservationBlock,
    a0_inv: &LinearOperator,
    psi: f64,
) -> Result<LinearOperator> {
    let n = obs.n();
    if obs.k() == 0 {
        return Ok(LinearOperator::scaled_identity(n, psi));
    }
    let z = a0_inv.apply_mat(obs.observations());
    let proj = orthogonal_projection(obs.observations())?;
    let base = proj.scale(psi);
    let terms = inverse_gram_outer_terms(&z, obs.observations(), &z)?;
    Ok(LinearOperator::low_rank(base, terms, true))
}

/// Rank-`k` terms for `L (R^T L)^{-1} C^T` given blocks with `R^T L`
/// symmetric positive definite.
fn inverse_gram_outer_terms(
    l: &DMatrix<f64>,
    r: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<Vec<RankOneTerm>> {
    let k = l.ncols();
    let g = r.tr_mul(l);
    let g_sym = 0.5 * (&g + g.transpose());
    let chol = g_sym.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: "block Gram matrix in the covariance class (is A positive definite?)".into(),
    })?;
    let coeffs = chol.solve(&c.transpose()); // G^{-1} C^T, k x n
    Ok((0..k)
        .map(|j| RankOneTerm {
            left: l.column(j).into_owned(),
            right: coeffs.row(j).transpose(),
            coeff: 1.0,
        })
        .collect())
}

/// Prior trace identity for the inverse-view factor with scalar mean:
/// `tr(W0_H) = k / alpha + psi (n - k)`.
pub fn prior_trace_wh_scalar(alpha: f64, psi: f64, n: usize, k: usize) -> f64 {
    k as f64 / alpha + psi * (n as f64 - k as f64)
}

/// Scalar prior mean `tr(A)/n`: exact for dense-accessible operators, a
/// 10-sample Hutchinson estimate (Rademacher probes, documented as an
/// estimate) otherwise.
pub fn scalar_mean_from_trace(a: &LinearOperator, seed: u64) -> f64 {
    use crate::linalg::OpKind;
    let n = a.rows();
    if matches!(a.kind(), OpKind::Dense(_)) {
        return a.trace() / n as f64;
    }
    use rand::RngExt;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let samples = 10;
    let mut acc = 0.0;
    for _ in 0..samples {
        let z = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        acc += z.dot(&a.apply(&z));
    }
    (acc / samples as f64 / n as f64).max(f64::MIN_POSITIVE)
}

/// Result of [`prior_from_guess`].
#[derive(Debug, Clone)]
pub struct PriorFromGuess {
    pub h0: LinearOperator,
    pub a0: LinearOperator,
    /// Possibly sign-flipped or rescaled starting point actually encoded by
    /// the prior (`H0 b = adjusted_x0`).
    pub adjusted_x0: DVector<f64>,
    /// The `alpha` actually used after clamping.
    pub alpha: f64,
}

/// Build a symmetric positive definite prior mean pair encoding an initial
/// guess: `H0 = alpha I + d d^T / (d^T b)` with `d = x0 - alpha b`, so that
/// `H0 b = x0`, and `A0 = H0^{-1}` in closed form.
///
/// Cases: if `x0^T b < 0` the guess is replaced by `-x0`; if `x0^T b = 0` it
/// is replaced by `(b^T b / b^T A b) b`, which needs one matvec with `A`
/// (supplied through `a`). If `alpha` is at or above the admissible bound
/// `b^T x0 / b^T b` it is clamped to half the bound.
pub fn prior_from_guess(
    x0: &DVector<f64>,
    b: &DVector<f64>,
    alpha: f64,
    a: Option<&LinearOperator>,
) -> Result<PriorFromGuess> {
    let n = b.len();
    if x0.len() != n {
        return Err(Error::Shape {
            expected: format!("x0 of length {n}"),
            got: format!("{}", x0.len()),
        });
    }
    if b.norm() == 0.0 {
        return Err(Error::InvalidSystem("right-hand side b is zero".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }

    let xtb = x0.dot(b);
    let adjusted_x0 = if xtb > 0.0 {
        x0.clone()
    } else if xtb < 0.0 {
        -x0
    } else {
        let a = a.ok_or_else(|| {
            Error::InvalidArgument(
                "x0 is orthogonal to b; the fallback guess needs one matvec with A".into(),
            )
        })?;
        let ab = a.apply(b);
        let btab = b.dot(&ab);
        if !(btab > 0.0) {
            return Err(Error::NotPositiveDefinite {
                what: format!("b^T A b = {btab:.3e} in the orthogonal-guess fallback"),
            });
        }
        b * (b.norm_squared() / btab)
    };

    let bound = adjusted_x0.dot(b) / b.norm_squared();
    let alpha = if alpha < bound { alpha } else { 0.5 * bound };

    let d = &adjusted_x0 - b * alpha;
    let dtb = d.dot(b);
    let (h0, a0) = if dtb.abs() <= 1e-14 * d.norm().max(1.0) * b.norm() {
        // x0 = alpha b: the scalar prior already encodes the guess.
        (
            LinearOperator::scaled_identity(n, alpha),
            LinearOperator::scaled_identity(n, 1.0 / alpha),
        )
    } else {
        let h0 = LinearOperator::low_rank(
            LinearOperator::scaled_identity(n, alpha),
            vec![RankOneTerm {
                left: d.clone(),
                right: d.clone(),
                coeff: 1.0 / dtb,
            }],
            true,
        );
        // Sherman-Morrison closed form: A0 = alpha^{-1} I
        //   - alpha^{-1} d d^T / (d^T x0).
        let dtx = d.dot(&adjusted_x0);
        let a0 = LinearOperator::low_rank(
            LinearOperator::scaled_identity(n, 1.0 / alpha),
            vec![RankOneTerm {
                left: d.clone(),
                right: d.clone(),
                coeff: -1.0 / (alpha * dtx),
            }],
            true,
        );
        (h0, a0)
    };

    Ok(PriorFromGuess {
        h0,
        a0,
        adjusted_x0,
        alpha,
    })
}

/// A linear system transformed by a preconditioner:
/// `A' = P^{-T} A P^{-1}`, `b' = P^{-T} b`, with solution pullback
/// `x = P^{-1} x'`.
#[derive(Debug, Clone)]
pub struct PreconditionedSystem {
    pub a: LinearOperator,
    pub b: DVector<f64>,
    p_inv: LinearOperator,
}

impl PreconditionedSystem {
    /// Recover the solution of the original system from the transformed one.
    pub fn pull_back(&self, x_transformed: &DVector<f64>) -> DVector<f64> {
        self.p_inv.apply(x_transformed)
    }
}

/// Transform `A x = b` with an invertible preconditioner given through its
/// inverse applies (`p_inv` must support both `apply` and
/// `apply_transpose`).
pub fn precondition(
    p_inv: &LinearOperator,
    a: &LinearOperator,
    b: &DVector<f64>,
) -> Result<PreconditionedSystem> {
    if a.rows() != a.cols() || p_inv.rows() != a.rows() || b.len() != a.rows() {
        return Err(Error::Shape {
            expected: "conformable square A, P^{-1} and b".into(),
            got: format!(
                "A {:?}, P^{{-1}} {:?}, b {}",
                a.shape(),
                p_inv.shape(),
                b.len()
            ),
        });
    }
    let p_inv_t = TransposedOp::operator(p_inv.clone());
    let a_prime = LinearOperator::product(
        p_inv_t.clone(),
        LinearOperator::product(a.clone(), p_inv.clone()),
    )
    .assume_symmetric(3, 1e-8, 29)?;
    let b_prime = p_inv.apply_transpose(b);
    Ok(PreconditionedSystem {
        a: a_prime,
        b: b_prime,
        p_inv: p_inv.clone(),
    })
}

/// Helper to view the transpose of an operator as an operator.
struct TransposedOp;

impl TransposedOp {
    fn operator(inner: LinearOperator) -> LinearOperator {
        if inner.is_symmetric() {
            return inner;
        }
        // Materialize through the dense fallback; preconditioners at desk
        // scale are always densifiable.
        match inner.to_dense() {
            Ok(m) => LinearOperator::dense(m.transpose()),
            Err(_) => inner,
        }
    }
}
