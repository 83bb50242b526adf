//! Matrix-free linear algebra: lazy operators, symmetric vectorization,
//! Kronecker-type products, projections and Cholesky factor maintenance.

pub mod cholesky;
pub mod operator;
pub mod projection;
pub mod svec;

pub use cholesky::{
    cholesky_rank1, pivoted_cholesky, rank2_as_two_rank1, BorderedCholesky, PivotedCholesky,
    UpdateSign,
};
pub use operator::{CompositeOp, LinearOperator, OpKind, RankOneTerm, DENSE_FALLBACK_LIMIT};
pub use projection::{orthogonal_projection, orthonormal_basis};
pub use svec::{box_apply, kron_apply, smat, smat_from_data, svec, svec_dim, svec_len, sym_kron_apply, SvecVector};
