//! Fixtures and brute-force oracles for tests. Not part of the public API.
//!
//! The explicit `Q` matrix translating `vec` to `svec` coordinates lives here
//! and nowhere else: production code always works through characteristic
//! properties, the dense `Q` is only ever formed for small oracle checks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut r = rng(seed);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r))
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
}

pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let m = random_matrix(n, n, seed);
    0.5 * (&m + m.transpose())
}

/// Well-conditioned random SPD matrix (Gram matrix plus identity shift).
pub fn random_spd_simple(n: usize, seed: u64) -> DMatrix<f64> {
    let m = random_matrix(n, n, seed);
    &m * m.transpose() + DMatrix::identity(n, n) * (n as f64)
}

/// Explicit `Q` with `Q vec(X) = svec(X)` and `Q Q^T = I`, for oracles only.
pub fn explicit_q(n: usize) -> DMatrix<f64> {
    let d = n * (n + 1) / 2;
    let mut q = DMatrix::zeros(d, n * n);
    let mut row = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                q[(row, j * n + i)] = 1.0;
            } else {
                let w = std::f64::consts::FRAC_1_SQRT_2;
                q[(row, j * n + i)] = w;
                q[(row, i * n + j)] = w;
            }
            row += 1;
        }
    }
    q
}

/// Dense `W (xs) W` in svec coordinates via the explicit `Q` oracle.
pub fn dense_sym_kron(w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let q = explicit_q(n);
    0.5 * (&q * (w.kronecker(v) + v.kronecker(w)) * q.transpose())
}

/// Moore-Penrose pseudo-inverse via SVD with a relative rank cutoff.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let cut = rel_tol * max_sv;
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut s_inv = DMatrix::zeros(vt.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            s_inv[(i, i)] = 1.0 / s;
        }
    }
    vt.transpose() * s_inv * u.transpose()
}
