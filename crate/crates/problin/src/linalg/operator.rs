//! Lazy linear operators `v -> Lv`.
//!
//! Everything the solver touches — the system matrix, prior covariance
//! factors, projections, posterior means — is a [`LinearOperator`]. Dense
//! storage is a variant, not a requirement; beliefs stay in low-rank form so
//! a solve costs O(kn) memory.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest dimension for which [`LinearOperator::to_dense`] materializes.
pub const DENSE_FALLBACK_LIMIT: usize = 512;

/// A rank-one term `coeff * left * right^T`.
#[derive(Debug, Clone)]
pub struct RankOneTerm {
    pub left: DVector<f64>,
    pub right: DVector<f64>,
    pub coeff: f64,
}

#[derive(Debug, Clone)]
pub enum OpKind {
    /// Explicitly stored matrix.
    Dense(DMatrix<f64>),
    /// `scale * I`.
    ScaledIdentity { dim: usize, scale: f64 },
    /// `base + sum_i coeff_i * u_i v_i^T`.
    LowRank {
        base: Box<LinearOperator>,
        terms: Vec<RankOneTerm>,
    },
    /// `I - QQ^T` (complement = true) or `QQ^T` (complement = false),
    /// with `Q` an orthonormal basis block.
    OrthogonalProjection {
        dim: usize,
        q: DMatrix<f64>,
        complement: bool,
    },
    /// Sum or product of two operators.
    Composite(CompositeOp),
}

#[derive(Debug, Clone)]
pub enum CompositeOp {
    Sum(Box<LinearOperator>, Box<LinearOperator>),
    Product(Box<LinearOperator>, Box<LinearOperator>),
}

/// Lazy linear map with shape and symmetry metadata.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    kind: OpKind,
    rows: usize,
    cols: usize,
    symmetric: bool,
}

impl LinearOperator {
    /// Dense operator; symmetry is detected from the entries.
    pub fn dense(m: DMatrix<f64>) -> Self {
        let symmetric = m.is_square() && {
            let tol = asym_tol(&m, 1e-12);
            max_asymmetry(&m) <= tol
        };
        let (rows, cols) = m.shape();
        Self {
            kind: OpKind::Dense(m),
            rows,
            cols,
            symmetric,
        }
    }

    /// Dense operator asserted symmetric within `1e-10` relative tolerance.
    pub fn dense_symmetric(m: DMatrix<f64>) -> Result<Self> {
        let tol = asym_tol(&m, 1e-10);
        let asym = max_asymmetry(&m);
        if !m.is_square() || asym > tol {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
                tol,
            });
        }
        let (rows, cols) = m.shape();
        Ok(Self {
            kind: OpKind::Dense(m),
            rows,
            cols,
            symmetric: true,
        })
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self {
            kind: OpKind::ScaledIdentity { dim, scale },
            rows: dim,
            cols: dim,
            symmetric: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn zero(dim: usize) -> Self {
        Self::scaled_identity(dim, 0.0)
    }

    /// `base + sum coeff_i u_i v_i^T`. The caller asserts symmetry; it is
    /// probed by consumers that require it.
    pub fn low_rank(base: LinearOperator, terms: Vec<RankOneTerm>, symmetric: bool) -> Self {
        let rows = base.rows;
        let cols = base.cols;
        for t in &terms {
            assert_eq!(t.left.len(), rows, "rank-one term row mismatch");
            assert_eq!(t.right.len(), cols, "rank-one term col mismatch");
        }
        Self {
            kind: OpKind::LowRank {
                base: Box::new(base),
                terms,
            },
            rows,
            cols,
            symmetric,
        }
    }

    /// Projection from an orthonormal basis block `q` (n x r).
    /// `complement = true` yields `I - QQ^T`.
    pub(crate) fn projection_from_orthonormal(q: DMatrix<f64>, complement: bool) -> Self {
        let dim = q.nrows();
        Self {
            kind: OpKind::OrthogonalProjection { dim, q, complement },
            rows: dim,
            cols: dim,
            symmetric: true,
        }
    }

    pub fn sum(a: LinearOperator, b: LinearOperator) -> Self {
        assert_eq!(a.shape(), b.shape(), "sum of mismatched operators");
        let symmetric = a.symmetric && b.symmetric;
        let (rows, cols) = a.shape();
        Self {
            kind: OpKind::Composite(CompositeOp::Sum(Box::new(a), Box::new(b))),
            rows,
            cols,
            symmetric,
        }
    }

    pub fn product(a: LinearOperator, b: LinearOperator) -> Self {
        assert_eq!(a.cols, b.rows, "product of mismatched operators");
        // A product is symmetric when one factor is a scaled identity and the
        // other is symmetric; anything else must be asserted via
        // `assume_symmetric` after probing.
        let symmetric = match (&a.kind, &b.kind) {
            (OpKind::ScaledIdentity { .. }, _) => b.symmetric,
            (_, OpKind::ScaledIdentity { .. }) => a.symmetric,
            _ => false,
        };
        let rows = a.rows;
        let cols = b.cols;
        Self {
            kind: OpKind::Composite(CompositeOp::Product(Box::new(a), Box::new(b))),
            rows,
            cols,
            symmetric,
        }
    }

    pub fn scale(self, factor: f64) -> Self {
        let dim = self.rows;
        Self::product(Self::scaled_identity(dim, factor), self)
    }

    /// Mark the operator symmetric after verifying `u^T Av = v^T Au` on
    /// `probes` random pairs.
    pub fn assume_symmetric(mut self, probes: usize, tol: f64, seed: u64) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Shape {
                expected: "square operator".into(),
                got: format!("{}x{}", self.rows, self.cols),
            });
        }
        let asym = self.symmetry_defect(probes, seed);
        if asym > tol {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
                tol,
            });
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn kind(&self) -> &OpKind {
        &self.kind
    }

    /// `self * v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(
            v.len(),
            self.cols,
            "apply: vector length {} does not match operator cols {}",
            v.len(),
            self.cols
        );
        match &self.kind {
            OpKind::Dense(m) => m * v,
            OpKind::ScaledIdentity { scale, .. } => v * *scale,
            OpKind::LowRank { base, terms } => {
                let mut out = base.apply(v);
                for t in terms {
                    let w = t.coeff * t.right.dot(v);
                    out.axpy(w, &t.left, 1.0);
                }
                out
            }
            OpKind::OrthogonalProjection { q, complement, .. } => {
                let qt_v = q.tr_mul(v);
                let proj = q * qt_v;
                if *complement {
                    v - proj
                } else {
                    proj
                }
            }
            OpKind::Composite(CompositeOp::Sum(a, b)) => a.apply(v) + b.apply(v),
            OpKind::Composite(CompositeOp::Product(a, b)) => a.apply(&b.apply(v)),
        }
    }

    /// `self^T * v`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(
            v.len(),
            self.rows,
            "apply_transpose: vector length {} does not match operator rows {}",
            v.len(),
            self.rows
        );
        if self.symmetric {
            return self.apply(v);
        }
        match &self.kind {
            OpKind::Dense(m) => m.tr_mul(v),
            OpKind::ScaledIdentity { scale, .. } => v * *scale,
            OpKind::LowRank { base, terms } => {
                let mut out = base.apply_transpose(v);
                for t in terms {
                    let w = t.coeff * t.left.dot(v);
                    out.axpy(w, &t.right, 1.0);
                }
                out
            }
            OpKind::OrthogonalProjection { .. } => self.apply(v),
            OpKind::Composite(CompositeOp::Sum(a, b)) => {
                a.apply_transpose(v) + b.apply_transpose(v)
            }
            OpKind::Composite(CompositeOp::Product(a, b)) => {
                b.apply_transpose(&a.apply_transpose(v))
            }
        }
    }

    /// Apply to every column of a matrix.
    pub fn apply_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, m.ncols());
        for (j, col) in m.column_iter().enumerate() {
            let v = self.apply(&col.into_owned());
            out.set_column(j, &v);
        }
        out
    }

    /// Materialize as a dense matrix. Refuses above [`DENSE_FALLBACK_LIMIT`].
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.rows.max(self.cols);
        if dim > DENSE_FALLBACK_LIMIT {
            return Err(Error::TooLargeForDense {
                dim,
                limit: DENSE_FALLBACK_LIMIT,
            });
        }
        if let OpKind::Dense(m) = &self.kind {
            return Ok(m.clone());
        }
        let mut out = DMatrix::zeros(self.rows, self.cols);
        let mut e = DVector::zeros(self.cols);
        for j in 0..self.cols {
            e[j] = 1.0;
            out.set_column(j, &self.apply(&e));
            e[j] = 0.0;
        }
        Ok(out)
    }

    /// Trace of a square operator. Cheap for structured variants, falls back
    /// to `n` applies otherwise.
    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "trace of non-square operator");
        match &self.kind {
            OpKind::Dense(m) => m.trace(),
            OpKind::ScaledIdentity { dim, scale } => *scale * *dim as f64,
            OpKind::LowRank { base, terms } => {
                let mut t = base.trace();
                for term in terms {
                    t += term.coeff * term.left.dot(&term.right);
                }
                t
            }
            OpKind::OrthogonalProjection { dim, q, complement } => {
                let r = q.ncols() as f64;
                if *complement {
                    *dim as f64 - r
                } else {
                    r
                }
            }
            OpKind::Composite(CompositeOp::Sum(a, b)) => a.trace() + b.trace(),
            OpKind::Composite(CompositeOp::Product(a, b)) => {
                if let OpKind::ScaledIdentity { scale, .. } = a.kind {
                    return scale * b.trace();
                }
                if let OpKind::ScaledIdentity { scale, .. } = b.kind {
                    return scale * a.trace();
                }
                let mut t = 0.0;
                let mut e = DVector::zeros(self.cols);
                for j in 0..self.cols {
                    e[j] = 1.0;
                    t += self.apply(&e)[j];
                    e[j] = 0.0;
                }
                t
            }
        }
    }

    /// Largest relative deviation of `u^T Av` from `v^T Au` over seeded
    /// random probe pairs.
    pub fn symmetry_defect(&self, probes: usize, seed: u64) -> f64 {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let n = self.cols;
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let uav = u.dot(&self.apply(&v));
            let vau = v.dot(&self.apply(&u));
            let scale = uav.abs().max(vau.abs()).max(1e-14);
            worst = worst.max((uav - vau).abs() / scale);
        }
        worst
    }

    /// Largest relative deviation from linearity on seeded random probes.
    pub fn linearity_defect(&self, probes: usize, seed: u64) -> f64 {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let n = self.cols;
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let lhs = self.apply(&(&u * a + &v * b));
            let rhs = self.apply(&u) * a + self.apply(&v) * b;
            let scale = lhs.norm().max(rhs.norm()).max(1e-14);
            worst = worst.max((lhs - rhs).norm() / scale);
        }
        worst
    }
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn asym_tol(m: &DMatrix<f64>, rel: f64) -> f64 {
    let scale = m.amax();
    (rel * scale).max(1e-14)
}
