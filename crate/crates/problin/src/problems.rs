//! Test-system generators: kernel Gram matrices, random SPD matrices with a
//! prescribed spectrum, finite-difference Poisson systems, coarse-to-fine
//! prolongation, and GP-regression propagation of solver output.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::SymmetricMatrixNormal;
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, LinearOperator};
use crate::solver::SolverResult;

/// Kernel family for Gram-matrix problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Smoothness `nu` entering the spectral-decay exponent `nu + 1/2`.
    pub fn smoothness(&self) -> f64 {
        match self {
            KernelFamily::Rbf => 4.5, // effectively very smooth; steep decay
            KernelFamily::Matern32 => 1.5,
            KernelFamily::Matern52 => 2.5,
        }
    }
}

/// Kernel specification: family, lengthscale and diagonal damping `eps^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub epsilon_sq: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscale: f64, epsilon_sq: f64) -> Result<Self> {
        if !(lengthscale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if epsilon_sq < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "damping eps^2 must be nonnegative, got {epsilon_sq}"
            )));
        }
        Ok(Self {
            family,
            lengthscale,
            epsilon_sq,
        })
    }

    /// Kernel value at distance `r` (unit signal variance, `k(x, x) = 1`).
    pub fn eval(&self, r: f64) -> f64 {
        let ell = self.lengthscale;
        match self.family {
            KernelFamily::Rbf => (-r * r / (2.0 * ell * ell)).exp(),
            KernelFamily::Matern32 => {
                let s = 3.0f64.sqrt() * r / ell;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let s = 5.0f64.sqrt() * r / ell;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Damped kernel Gram matrix `K' = k(X, X) + eps^2 I` as an SPD operator.
/// With `eps^2 = 0` duplicate points make the matrix numerically singular; a
/// warning is logged and the caller owns the consequences.
pub fn kernel_gram(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<LinearOperator> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no input points".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape {
            expected: format!("points of dimension {dim}"),
            got: "mixed dimensions".into(),
        });
    }
    if spec.epsilon_sq == 0.0 {
        let mut dup = false;
        'outer: for i in 0..n {
            for j in 0..i {
                if euclidean(&points[i], &points[j]) == 0.0 {
                    dup = true;
                    break 'outer;
                }
            }
        }
        if dup {
            log::warn!("duplicate points with eps^2 = 0: Gram matrix is singular");
        }
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + spec.epsilon_sq;
        for j in 0..i {
            let v = spec.eval(euclidean(&points[i], &points[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    LinearOperator::dense_symmetric(k)
}

/// Cross-kernel block `k(X, X~)` between training and query points.
pub fn kernel_cross(spec: &KernelSpec, x: &[Vec<f64>], x_query: &[Vec<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.len(), x_query.len());
    for i in 0..x.len() {
        for j in 0..x_query.len() {
            out[(i, j)] = spec.eval(euclidean(&x[i], &x_query[j]));
        }
    }
    out
}

/// Uniformly random points in `[0, 1]^dim`.
pub fn uniform_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::RngExt;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Gaussian-cluster points around a handful of uniform centers in `[0,1]^dim`.
pub fn clustered_points(n: usize, dim: usize, clusters: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::RngExt;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..clusters.max(1))
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    (0..n)
        .map(|i| {
            let c = &centers[i % centers.len()];
            c.iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (m + 0.05 * z).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

/// Random SPD matrix `Q diag(spectrum) Q^T` with Haar-distributed `Q`
/// (QR of a Gaussian matrix with the sign of the `R` diagonal fixed).
pub fn random_spd(n: usize, spectrum: &[f64], seed: u64) -> Result<DMatrix<f64>> {
    if spectrum.len() != n {
        return Err(Error::InvalidArgument(format!(
            "spectrum must have {n} entries, got {}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgument(
            "spectrum entries must all be positive".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let lambda = DMatrix::from_diagonal(&DVector::from_row_slice(spectrum));
    let m = &q * lambda * q.transpose();
    Ok(0.5 * (&m + m.transpose()))
}

/// Log-spaced spectrum from 1 to `condition`.
pub fn log_spaced_spectrum(n: usize, condition: f64) -> Vec<f64> {
    (0..n)
        .map(|i| condition.powf(i as f64 / (n - 1).max(1) as f64))
        .collect()
}

/// Random spectrum drawn uniformly from `[1, condition]` with the extremes
/// pinned so the condition number is exact.
pub fn uniform_spectrum(n: usize, condition: f64, seed: u64) -> Vec<f64> {
    use rand::RngExt;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s: Vec<f64> = (0..n)
        .map(|_| 1.0 + (condition - 1.0) * rng.random::<f64>())
        .collect();
    if n >= 1 {
        s[0] = 1.0;
    }
    if n >= 2 {
        s[n - 1] = condition;
    }
    s
}

/// Finite-difference discretization of the Poisson Dirichlet problem on the
/// unit square: `m x m` interior grid, mesh width `h = 1/(m+1)`, 5-point
/// Laplacian, boundary values folded into the right-hand side.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub m: usize,
    pub h: f64,
    pub a: LinearOperator,
    pub f_rhs: DVector<f64>,
    /// Interior grid coordinates, row-major over (i, j) -> (x, y).
    pub coords: Vec<(f64, f64)>,
}

/// The source and boundary data of the demo problem: `f = 15`,
/// `g(x, y) = (x^2 - 2y)^2 (1 + sin(2 pi x))`.
pub fn demo_boundary(x: f64, y: f64) -> f64 {
    let t = x * x - 2.0 * y;
    t * t * (1.0 + (2.0 * std::f64::consts::PI * x).sin())
}

/// Assemble the Dirichlet problem `-lap u = f` with boundary condition `g`.
pub fn poisson_dirichlet(
    m: usize,
    f: impl Fn(f64, f64) -> f64,
    g: impl Fn(f64, f64) -> f64,
) -> Result<PoissonProblem> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid size m must be at least 2, got {m}"
        )));
    }
    let n = m * m;
    let h = 1.0 / (m as f64 + 1.0);
    let inv_h2 = 1.0 / (h * h);
    let idx = |i: usize, j: usize| i * m + j; // row-major over interior nodes

    let mut a = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    let mut coords = Vec::with_capacity(n);
    for i in 0..m {
        for j in 0..m {
            let x = (i as f64 + 1.0) * h;
            let y = (j as f64 + 1.0) * h;
            coords.push((x, y));
            let row = idx(i, j);
            a[(row, row)] = 4.0 * inv_h2;
            rhs[row] = f(x, y);
            // Neighbors: interior couples through the stencil, boundary
            // lifts into the right-hand side.
            let mut neighbor = |ii: isize, jj: isize, bx: f64, by: f64| {
                if ii >= 0 && ii < m as isize && jj >= 0 && jj < m as isize {
                    a[(row, idx(ii as usize, jj as usize))] = -inv_h2;
                } else {
                    rhs[row] += g(bx, by) * inv_h2;
                }
            };
            neighbor(i as isize - 1, j as isize, x - h, y);
            neighbor(i as isize + 1, j as isize, x + h, y);
            neighbor(i as isize, j as isize - 1, x, y - h);
            neighbor(i as isize, j as isize + 1, x, y + h);
        }
    }
    // Gershgorin: diagonal dominance with positive diagonal makes the
    // stencil matrix positive definite.
    debug_assert!(a.row_iter().enumerate().all(|(i, row)| {
        let off: f64 = row.iter().map(|v| v.abs()).sum::<f64>() - a[(i, i)].abs();
        a[(i, i)] > 0.0 && a[(i, i)] >= off
    }));
    Ok(PoissonProblem {
        m,
        h,
        a: LinearOperator::dense_symmetric(a)?,
        f_rhs: rhs,
        coords,
    })
}

/// Orthonormal prolongation from an `m_c x m_c` interior grid to the nested
/// `(2 m_c + 1) x (2 m_c + 1)` grid: bilinear interpolation columns,
/// orthonormalized so `P^T P = I`.
pub fn prolongation(m_coarse: usize, m_fine: usize) -> Result<LinearOperator> {
    if m_fine != 2 * m_coarse + 1 {
        return Err(Error::InvalidArgument(format!(
            "grids must be nested: m_fine = 2 m_coarse + 1, got ({m_coarse}, {m_fine})"
        )));
    }
    let interp = bilinear_interpolation(m_coarse, m_fine);
    let q = orthonormal_basis(&interp)?;
    Ok(LinearOperator::dense(q))
}

/// Bilinear interpolation matrix between nested interior grids (columns are
/// coarse hat functions evaluated on the fine grid).
pub fn bilinear_interpolation(m_coarse: usize, m_fine: usize) -> DMatrix<f64> {
    let h_c = 1.0 / (m_coarse as f64 + 1.0);
    let h_f = 1.0 / (m_fine as f64 + 1.0);
    let hat = |t: f64| (1.0 - t.abs()).max(0.0);
    let mut p = DMatrix::zeros(m_fine * m_fine, m_coarse * m_coarse);
    for ci in 0..m_coarse {
        for cj in 0..m_coarse {
            let cx = (ci as f64 + 1.0) * h_c;
            let cy = (cj as f64 + 1.0) * h_c;
            let col = ci * m_coarse + cj;
            for fi in 0..m_fine {
                for fj in 0..m_fine {
                    let fx = (fi as f64 + 1.0) * h_f;
                    let fy = (fj as f64 + 1.0) * h_f;
                    let v = hat((fx - cx) / h_c) * hat((fy - cy) / h_c);
                    if v != 0.0 {
                        p[(fi * m_fine + fj, col)] = v;
                    }
                }
            }
        }
    }
    p
}

/// Transport a coarse-grid inverse belief to the fine grid:
/// mean `P H P^T`, covariance factor `P W P^T + sqrt(lambda) I`.
///
/// Exact for `lambda_inflate = 0`; a nonzero inflation is a declared
/// approximation since the predictive covariance with additive noise has no
/// symmetric Kronecker form.
pub fn predictive_fine_prior(
    h_coarse: &SymmetricMatrixNormal,
    p: &LinearOperator,
    lambda_inflate: f64,
) -> Result<SymmetricMatrixNormal> {
    if lambda_inflate < 0.0 {
        return Err(Error::InvalidArgument(
            "lambda inflation must be nonnegative".into(),
        ));
    }
    if p.cols() != h_coarse.dim() {
        return Err(Error::Shape {
            expected: format!("prolongation with {} columns", h_coarse.dim()),
            got: format!("{:?}", p.shape()),
        });
    }
    let n_fine = p.rows();
    let pd = p.to_dense()?;
    let h_mean = h_coarse.mean().to_dense()?;
    let w = h_coarse.cov_factor().to_dense()?;
    let mean_fine = &pd * h_mean * pd.transpose();
    let mut factor_fine = &pd * w * pd.transpose();
    if lambda_inflate > 0.0 {
        let s = lambda_inflate.sqrt();
        for i in 0..n_fine {
            factor_fine[(i, i)] += s;
        }
    }
    SymmetricMatrixNormal::new(
        LinearOperator::dense(0.5 * (&mean_fine + mean_fine.transpose())),
        LinearOperator::dense(0.5 * (&factor_fine + factor_fine.transpose())),
    )
}

/// GP-regression propagation of a solver run on `(K + eps^2 I) z = y`:
/// predictive mean `ktilde^T E[x]`, variance estimate
/// `prior_var - ktilde^T (E[H] ktilde)` using the inverse belief with no
/// further solver iterations, and the numerical trace budget
/// `ktilde^T Cov[x] ktilde` per prediction.
#[derive(Debug, Clone)]
pub struct GpPropagation {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub numerical_trace: DVector<f64>,
}

pub fn gp_propagate(
    ktilde: &DMatrix<f64>,
    prior_var: &DVector<f64>,
    solve_output: &SolverResult,
) -> Result<GpPropagation> {
    let n = solve_output.h_belief.dim();
    let m = ktilde.ncols();
    if ktilde.nrows() != n || prior_var.len() != m {
        return Err(Error::Shape {
            expected: format!("ktilde {n} x m with prior variances of length m"),
            got: format!("ktilde {:?}, prior_var {}", ktilde.shape(), prior_var.len()),
        });
    }
    let x_mean = &solve_output.x_belief.mean;
    let mut mean = DVector::zeros(m);
    let mut variance = DVector::zeros(m);
    let mut numerical_trace = DVector::zeros(m);
    for j in 0..m {
        let kj = ktilde.column(j).into_owned();
        mean[j] = kj.dot(x_mean);
        let hk = solve_output.h_belief.mean().apply(&kj);
        variance[j] = prior_var[j] - kj.dot(&hk);
        numerical_trace[j] = kj.dot(&solve_output.x_belief.cov.apply(&kj)).max(0.0);
    }
    Ok(GpPropagation {
        mean,
        variance,
        numerical_trace,
    })
}
