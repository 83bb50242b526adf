//! Experiment subcommands: calibration sweep, CG comparison, the
//! coarse-to-fine Poisson demo and GP-regression propagation.

use std::path::Path;
use std::time::Instant;

use clap::Args;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::records::ResultRecord;
use super::OverrideParams;
use crate::calibration::w_statistic;
use crate::dist::sample_symmetric;
use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::priors::PriorSpec;
use crate::problems::{
    demo_boundary, kernel_cross, kernel_gram, poisson_dirichlet, predictive_fine_prior,
    prolongation, random_spd, uniform_points, uniform_spectrum, KernelFamily, KernelSpec,
};
use crate::solver::{solve, solve_with_beliefs, BeliefPrior, SolverConfig};

fn parse_kernel(name: &str) -> Result<KernelFamily> {
    match name {
        "matern32" => Ok(KernelFamily::Matern32),
        "matern52" => Ok(KernelFamily::Matern52),
        "rbf" => Ok(KernelFamily::Rbf),
        other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// calibration-experiment

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibParams {
    /// Kernel families in the sweep.
    pub kernels: Vec<String>,
    /// Problem sizes (desk-scale ceiling of 1000 by default).
    pub sizes: Vec<usize>,
    /// Calibration methods: none | eps2 | spectrum | rayleigh.
    pub methods: Vec<String>,
    /// Sampled problems per (kernel, n, method) cell.
    pub num_problems: usize,
    pub lengthscale: f64,
    pub eps2: f64,
    pub dim: usize,
    /// Draw inputs from Gaussian clusters instead of uniformly.
    pub clustered: bool,
    pub rtol: f64,
    pub seed: u64,
    /// Worker threads for the sweep (cells are independent).
    pub jobs: usize,
    /// Hard ceiling on problem sizes.
    pub max_n: usize,
}

impl Default for CalibParams {
    fn default() -> Self {
        Self {
            kernels: vec!["matern32".into(), "matern52".into(), "rbf".into()],
            sizes: vec![100],
            methods: vec!["none".into(), "rayleigh".into(), "eps2".into(), "spectrum".into()],
            num_problems: 50,
            lengthscale: 0.5,
            eps2: 1e-4,
            dim: 1,
            clustered: false,
            rtol: 1e-6,
            seed: 0,
            jobs: 0,
            max_n: 1000,
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibArgs {
    /// Comma-separated kernel families.
    #[arg(long, value_delimiter = ',')]
    pub kernels: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub num_problems: Option<usize>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub clustered: bool,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = rayon default).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl OverrideParams<CalibParams> for CalibArgs {
    fn apply(&self, p: &mut CalibParams) {
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { p.$f = v.clone(); } )* };
        }
        over!(kernels, sizes, methods, num_problems, lengthscale, eps2, dim, rtol, seed, jobs);
        if self.clustered {
            p.clustered = true;
        }
    }
}

/// One row of the calibration table.
#[derive(Debug, Clone, Serialize)]
pub struct CalibRow {
    pub kernel: String,
    pub n: usize,
    pub method: String,
    pub w_bar: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of the mean w-statistic over sampled problems
/// `(K + eps^2 I) x* = b` for each (kernel, size, method) cell.
pub fn run_calibration_experiment(p: &CalibParams) -> Result<Vec<CalibRow>> {
    for &n in &p.sizes {
        if n > p.max_n {
            return Err(Error::InvalidArgument(format!(
                "size {n} exceeds the desk-scale ceiling {}",
                p.max_n
            )));
        }
    }
    let mut cells = Vec::new();
    for kernel in &p.kernels {
        parse_kernel(kernel)?;
        for &n in &p.sizes {
            for method in &p.methods {
                cells.push((kernel.clone(), n, method.clone()));
            }
        }
    }

    let run_cell = |(kernel, n, method): &(String, usize, String)| -> Result<CalibRow> {
        let family = parse_kernel(kernel)?;
        let spec = KernelSpec::new(family, p.lengthscale, p.eps2)?;
        let points = if p.clustered {
            crate::problems::clustered_points(*n, p.dim, 5, p.seed ^ hash(kernel) ^ *n as u64)
        } else {
            uniform_points(*n, p.dim, p.seed ^ hash(kernel) ^ *n as u64)
        };
        let k_op = kernel_gram(&spec, &points)?;
        let spectrum = if method == "spectrum" {
            let dense = k_op.to_dense()?;
            let eig = nalgebra::SymmetricEigen::new(0.5 * (&dense + dense.transpose()));
            let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            vals.sort_by(|x, y| y.total_cmp(x));
            Some(vals)
        } else {
            None
        };
        let calibration =
            super::solve_cmd::calibration_from_name(method, p.eps2, spectrum.as_deref())?;
        let alpha = k_op.trace() / *n as f64;

        let mut ws = Vec::with_capacity(p.num_problems);
        for i in 0..p.num_problems {
            let mut rng =
                ChaCha20Rng::seed_from_u64(p.seed ^ hash(kernel) ^ (*n as u64) << 8 ^ i as u64);
            let x_star = DVector::from_fn(*n, |_, _| StandardNormal.sample(&mut rng));
            let b = k_op.apply(&x_star);
            let prior = PriorSpec::scalar(alpha)?;
            let config = SolverConfig {
                rtol: p.rtol,
                calibration: calibration.clone(),
                seed: p.seed ^ i as u64,
                track_matrix_belief: false,
                ..Default::default()
            };
            let out = solve(&k_op, &b, &prior, &config)?;
            let w = w_statistic(&x_star, &out.x_belief);
            if w.is_finite() {
                ws.push(w);
            } else {
                // Degenerate cells (exact hit or zero trace) contribute the
                // sign but not the magnitude; clamp to a large finite value.
                ws.push(w.signum() * 1e3);
            }
        }
        let m = ws.iter().sum::<f64>() / ws.len() as f64;
        let var = ws.iter().map(|w| (w - m).powi(2)).sum::<f64>() / (ws.len() - 1).max(1) as f64;
        Ok(CalibRow {
            kernel: kernel.clone(),
            n: *n,
            method: method.clone(),
            w_bar: m,
            stderr: (var / ws.len() as f64).sqrt(),
        })
    };

    let results: Vec<Result<CalibRow>> = if p.jobs == 1 {
        cells.iter().map(run_cell).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(p.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        use rayon::prelude::*;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    };
    results.into_iter().collect()
}

fn hash(s: &str) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    s.hash(&mut h);
    h.finish()
}

pub fn calib_rows_to_csv(rows: &[CalibRow]) -> String {
    let mut out = String::from("kernel,n,method,w_bar,stderr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            r.kernel, r.n, r.method, r.w_bar, r.stderr
        ));
    }
    out
}

pub fn cmd_calibration_experiment(p: &CalibParams, out_path: Option<&Path>) -> Result<i32> {
    let rows = run_calibration_experiment(p)?;
    super::emit(out_path, &calib_rows_to_csv(&rows))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// cg-compare

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CgCompareParams {
    pub n: usize,
    pub condition: f64,
    pub seeds: usize,
    /// Deviation threshold for the exit code.
    pub tol: f64,
    /// Iterations to compare (capped at n).
    pub iters: usize,
    pub seed: u64,
}

impl Default for CgCompareParams {
    fn default() -> Self {
        Self {
            n: 50,
            condition: 1e4,
            seeds: 20,
            tol: 1e-8,
            iters: 25,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct CgCompareArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub condition: Option<f64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl OverrideParams<CgCompareParams> for CgCompareArgs {
    fn apply(&self, p: &mut CgCompareParams) {
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { p.$f = v.clone(); } )* };
        }
        over!(n, condition, seeds, tol, iters, seed);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CgCompareReport {
    pub n: usize,
    pub condition: f64,
    pub seeds: usize,
    pub iterations_compared: usize,
    pub max_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Textbook conjugate gradients recording every iterate.
fn textbook_cg(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    iters: usize,
) -> Vec<DVector<f64>> {
    let mut x = x0.clone();
    let mut r = b - a * &x;
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    let mut iterates = Vec::new();
    for _ in 0..iters {
        if rs.sqrt() < 1e-300 {
            break;
        }
        let ap = a * &p;
        let alpha = rs / p.dot(&ap);
        x += &p * alpha;
        r -= &ap * alpha;
        iterates.push(x.clone());
        let rs_new = r.norm_squared();
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    iterates
}

pub fn run_cg_compare(p: &CgCompareParams) -> Result<CgCompareReport> {
    if p.n > 512 {
        return Err(Error::InvalidArgument(format!(
            "cg-compare is desk-scale: n must be <= 512, got {}",
            p.n
        )));
    }
    let iters = p.iters.min(p.n);
    let mut max_dev: f64 = 0.0;
    for s in 0..p.seeds as u64 {
        let spectrum = uniform_spectrum(p.n, p.condition, p.seed ^ (s << 16) ^ 0x51);
        let a = random_spd(p.n, &spectrum, p.seed ^ (s << 16))?;
        let mut rng = ChaCha20Rng::seed_from_u64(p.seed ^ (s << 16) ^ 0xb);
        let b = DVector::from_fn(p.n, |_, _| StandardNormal.sample(&mut rng));
        let alpha = a.trace() / p.n as f64;
        let prior = PriorSpec::scalar(alpha)?;
        let config = SolverConfig {
            rtol: 1e-13,
            atol: 1e-300,
            max_iter: Some(iters),
            track_matrix_belief: false,
            seed: p.seed ^ s,
            ..Default::default()
        };
        let out = solve(&LinearOperator::dense(a.clone()), &b, &prior, &config)?;
        let cg = textbook_cg(&a, &b, &out.x0, out.iterations);
        for (i, cg_x) in cg.iter().enumerate() {
            let dev = (out.iterate(i + 1) - cg_x).norm() / cg_x.norm().max(1e-300);
            max_dev = max_dev.max(dev);
        }
    }
    Ok(CgCompareReport {
        n: p.n,
        condition: p.condition,
        seeds: p.seeds,
        iterations_compared: iters,
        max_deviation: max_dev,
        tol: p.tol,
        passed: max_dev <= p.tol,
    })
}

pub fn cmd_cg_compare(p: &CgCompareParams, out_path: Option<&Path>) -> Result<i32> {
    let report = run_cg_compare(p)?;
    super::emit(
        out_path,
        &serde_json::to_string_pretty(&report).expect("report serialize"),
    )?;
    Ok(if report.passed { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// pde-demo

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PdeDemoParams {
    pub m_coarse: usize,
    pub m_fine: usize,
    /// Paired right-hand sides for the iteration comparison.
    pub seeds: usize,
    pub rtol: f64,
    /// Covariance inflation of the transported prior.
    pub lambda_inflate: f64,
    /// Posterior samples drawn on the fine grid.
    pub samples: usize,
    pub seed: u64,
}

impl Default for PdeDemoParams {
    fn default() -> Self {
        Self {
            m_coarse: 3,
            m_fine: 7,
            seeds: 10,
            rtol: 1e-6,
            lambda_inflate: 1e-8,
            samples: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct PdeDemoArgs {
    #[arg(long)]
    pub m_coarse: Option<usize>,
    #[arg(long)]
    pub m_fine: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub lambda_inflate: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl OverrideParams<PdeDemoParams> for PdeDemoArgs {
    fn apply(&self, p: &mut PdeDemoParams) {
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { p.$f = v.clone(); } )* };
        }
        over!(m_coarse, m_fine, seeds, rtol, lambda_inflate, samples, seed);
    }
}

/// Full demo output: coarse and fine records plus per-node diagnostics for a
/// calibration plot, and the paired iteration comparison.
#[derive(Debug, Serialize)]
pub struct PdeDemoOutput {
    pub coarse: ResultRecord,
    pub fine_transported: ResultRecord,
    pub fine_default: ResultRecord,
    pub fine_solution_mean: Vec<f64>,
    pub fine_posterior_std: Vec<f64>,
    pub fine_samples: Vec<Vec<f64>>,
    /// Signed error of the fine mean against a dense direct solve.
    pub signed_error: Vec<f64>,
    /// error / posterior std per node.
    pub standardized_error: Vec<f64>,
    /// (transported, default) iteration counts per paired right-hand side.
    pub paired_iterations: Vec<(usize, usize)>,
    pub transported_wins_or_ties: usize,
}

pub fn run_pde_demo(p: &PdeDemoParams) -> Result<PdeDemoOutput> {
    let config_echo = serde_json::to_value(p).expect("params serialize");
    let coarse_problem = poisson_dirichlet(p.m_coarse, |_, _| 15.0, demo_boundary)?;
    let fine_problem = poisson_dirichlet(p.m_fine, |_, _| 15.0, demo_boundary)?;
    let n_fine = p.m_fine * p.m_fine;

    // Coarse solve with the scalar prior.
    let coarse_alpha = coarse_problem.a.trace() / (p.m_coarse * p.m_coarse) as f64;
    let coarse_prior = PriorSpec::scalar(coarse_alpha)?;
    let config = SolverConfig {
        rtol: p.rtol,
        seed: p.seed,
        ..Default::default()
    };
    let started = Instant::now();
    let coarse_out = solve(&coarse_problem.a, &coarse_problem.f_rhs, &coarse_prior, &config)?;
    let coarse_record = ResultRecord::from_solver(
        "pde-demo/coarse",
        p.seed,
        config_echo.clone(),
        &coarse_out,
        None,
        started.elapsed().as_secs_f64() * 1e3,
    );

    // Transport the posterior over the inverse to the fine grid.
    let prolong = if p.m_fine == p.m_coarse {
        LinearOperator::identity(p.m_coarse * p.m_coarse)
    } else {
        prolongation(p.m_coarse, p.m_fine)?
    };
    let transported = predictive_fine_prior(&coarse_out.h_belief, &prolong, p.lambda_inflate)?;

    // Fine solves on the demo right-hand side: transported vs default prior.
    let fine_alpha = fine_problem.a.trace() / n_fine as f64;
    let fine_prior_default = PriorSpec::scalar(fine_alpha)?;
    let started = Instant::now();
    let fine_t = solve_with_beliefs(
        &fine_problem.a,
        &fine_problem.f_rhs,
        BeliefPrior {
            h: transported.clone(),
            a: None,
        },
        &SolverConfig {
            rtol: p.rtol,
            seed: p.seed,
            track_matrix_belief: false,
            ..Default::default()
        },
    )?;
    let fine_t_record = ResultRecord::from_solver(
        "pde-demo/fine-transported",
        p.seed,
        config_echo.clone(),
        &fine_t,
        None,
        started.elapsed().as_secs_f64() * 1e3,
    );
    let started = Instant::now();
    let fine_d = solve(
        &fine_problem.a,
        &fine_problem.f_rhs,
        &fine_prior_default,
        &SolverConfig {
            rtol: p.rtol,
            seed: p.seed,
            track_matrix_belief: false,
            ..Default::default()
        },
    )?;
    let fine_d_record = ResultRecord::from_solver(
        "pde-demo/fine-default",
        p.seed,
        config_echo.clone(),
        &fine_d,
        None,
        started.elapsed().as_secs_f64() * 1e3,
    );

    // Diagnostics against the dense direct solution.
    let dense = fine_problem.a.to_dense()?;
    let direct = dense
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: "fine Poisson matrix".into(),
        })?
        .solve(&fine_problem.f_rhs);
    let mean = fine_t.x_belief.mean.clone();
    let cov = &fine_t.x_belief.cov;
    let mut std = DVector::zeros(n_fine);
    let mut e = DVector::zeros(n_fine);
    for i in 0..n_fine {
        e[i] = 1.0;
        std[i] = cov.apply(&e)[i].max(0.0).sqrt();
        e[i] = 0.0;
    }
    let signed_error: Vec<f64> = (&mean - &direct).iter().copied().collect();
    let standardized_error: Vec<f64> = signed_error
        .iter()
        .zip(std.iter())
        .map(|(err, s)| if *s > 0.0 { err / s } else { 0.0 })
        .collect();

    // Posterior draws over the solution: x = mean + sample of H b deviation.
    // Samples of H are drawn from the fine posterior belief and applied to b.
    let h_samples = sample_symmetric(&fine_t.h_belief, p.seed ^ 0xdeaf, p.samples)?;
    let fine_samples: Vec<Vec<f64>> = h_samples
        .iter()
        .map(|h| {
            let hb = h * &fine_problem.f_rhs;
            let dev = &hb - fine_t.h_belief.mean().apply(&fine_problem.f_rhs);
            (&mean + dev).iter().copied().collect()
        })
        .collect();

    // Paired iteration comparison over random right-hand sides.
    let mut paired = Vec::with_capacity(p.seeds);
    let mut wins = 0usize;
    for s in 0..p.seeds as u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(p.seed ^ (0xfeed << 8) ^ s);
        let b = DVector::from_fn(n_fine, |_, _| StandardNormal.sample(&mut rng));
        let cfg = SolverConfig {
            rtol: p.rtol,
            seed: p.seed ^ s,
            track_matrix_belief: false,
            ..Default::default()
        };
        let with_t = solve_with_beliefs(
            &fine_problem.a,
            &b,
            BeliefPrior {
                h: transported.clone(),
                a: None,
            },
            &cfg,
        )?;
        let with_d = solve(&fine_problem.a, &b, &fine_prior_default, &cfg)?;
        if with_t.iterations <= with_d.iterations {
            wins += 1;
        }
        paired.push((with_t.iterations, with_d.iterations));
    }

    Ok(PdeDemoOutput {
        coarse: coarse_record,
        fine_transported: fine_t_record,
        fine_default: fine_d_record,
        fine_solution_mean: mean.iter().copied().collect(),
        fine_posterior_std: std.iter().copied().collect(),
        fine_samples,
        signed_error,
        standardized_error,
        paired_iterations: paired,
        transported_wins_or_ties: wins,
    })
}

pub fn cmd_pde_demo(p: &PdeDemoParams, out_path: Option<&Path>) -> Result<i32> {
    let out = run_pde_demo(p)?;
    super::emit(
        out_path,
        &serde_json::to_string_pretty(&out).expect("output serialize"),
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// gp-demo

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GpDemoParams {
    /// Training points.
    pub n: usize,
    /// Query points.
    pub m: usize,
    /// Iteration checkpoints; defaults to n/4, n/2, n.
    pub checkpoints: Vec<usize>,
    pub kernel: String,
    pub lengthscale: f64,
    pub eps2: f64,
    pub seed: u64,
}

impl Default for GpDemoParams {
    fn default() -> Self {
        Self {
            n: 64,
            m: 16,
            checkpoints: Vec::new(),
            kernel: "matern32".into(),
            lengthscale: 0.3,
            eps2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct GpDemoArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl OverrideParams<GpDemoParams> for GpDemoArgs {
    fn apply(&self, p: &mut GpDemoParams) {
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { p.$f = v.clone(); } )* };
        }
        over!(n, m, checkpoints, kernel, lengthscale, eps2, seed);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GpCheckpointRow {
    pub k: usize,
    pub mean_abs_error: f64,
    pub mean_variance_estimate: f64,
    pub mean_numerical_trace: f64,
}

/// GP regression through the solver at increasing iteration budgets: the
/// numerical GP mean approaches the exact one as `k` grows, and the
/// propagated solution-belief trace quantifies what is left.
pub fn run_gp_demo(p: &GpDemoParams) -> Result<Vec<GpCheckpointRow>> {
    let family = parse_kernel(&p.kernel)?;
    let spec = KernelSpec::new(family, p.lengthscale, p.eps2)?;
    let x = uniform_points(p.n, 1, p.seed ^ 0x91);
    let x_query = uniform_points(p.m, 1, p.seed ^ 0x92);
    let k_op = kernel_gram(&spec, &x)?;
    let ktilde = kernel_cross(&spec, &x, &x_query);

    // Targets drawn from the GP prior at the training inputs.
    let kd = k_op.to_dense()?;
    let chol = kd.clone().cholesky().ok_or_else(|| Error::Conditioning(
        "kernel Gram matrix is numerically singular".into(),
    ))?;
    let mut rng = ChaCha20Rng::seed_from_u64(p.seed ^ 0x93);
    let z = DVector::from_fn(p.n, |_, _| StandardNormal.sample(&mut rng));
    let y = chol.l() * z;

    let exact_weights = chol.solve(&y);
    let exact_mean = ktilde.tr_mul(&exact_weights);
    let prior_var = DVector::from_element(p.m, 1.0 + p.eps2 * 0.0);

    let alpha = kd.trace() / p.n as f64;
    let checkpoints: Vec<usize> = if p.checkpoints.is_empty() {
        vec![p.n / 4, p.n / 2, p.n]
    } else {
        p.checkpoints.clone()
    };

    let mut rows = Vec::with_capacity(checkpoints.len());
    for &k in &checkpoints {
        let prior = PriorSpec::scalar(alpha)?;
        let config = SolverConfig {
            rtol: 1e-14,
            atol: 1e-300,
            max_iter: Some(k.max(1)),
            seed: p.seed,
            track_matrix_belief: false,
            ..Default::default()
        };
        let out = if k == 0 {
            // Prior-only propagation: run zero iterations by stopping im-
            // mediately on the iteration cap.
            let cfg0 = SolverConfig {
                max_iter: Some(1),
                rtol: 1e300,
                ..config
            };
            solve(&k_op, &y, &prior, &cfg0)?
        } else {
            solve(&k_op, &y, &prior, &config)?
        };
        let prop = crate::problems::gp_propagate(&ktilde, &prior_var, &out)?;
        let mean_abs_error = (&prop.mean - &exact_mean).abs().sum() / p.m as f64;
        rows.push(GpCheckpointRow {
            k: out.iterations,
            mean_abs_error,
            mean_variance_estimate: prop.variance.sum() / p.m as f64,
            mean_numerical_trace: prop.numerical_trace.sum() / p.m as f64,
        });
    }
    Ok(rows)
}

pub fn gp_rows_to_csv(rows: &[GpCheckpointRow]) -> String {
    let mut out = String::from("k,mean_abs_error,mean_variance_estimate,mean_numerical_trace\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e}\n",
            r.k, r.mean_abs_error, r.mean_variance_estimate, r.mean_numerical_trace
        ));
    }
    out
}

pub fn cmd_gp_demo(p: &GpDemoParams, out_path: Option<&Path>) -> Result<i32> {
    let rows = run_gp_demo(p)?;
    super::emit(out_path, &gp_rows_to_csv(&rows))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_compare_passes_at_reference_settings() {
        let p = CgCompareParams {
            n: 32,
            seeds: 5,
            ..Default::default()
        };
        let report = run_cg_compare(&p).unwrap();
        assert!(report.passed, "deviation {:.3e}", report.max_deviation);
    }

    #[test]
    fn cg_compare_is_exact_for_n1() {
        let p = CgCompareParams {
            n: 1,
            seeds: 3,
            ..Default::default()
        };
        let report = run_cg_compare(&p).unwrap();
        assert!(report.max_deviation <= 1e-12);
    }

    #[test]
    fn calibration_sweep_is_deterministic() {
        let p = CalibParams {
            kernels: vec!["matern32".into()],
            sizes: vec![40],
            methods: vec!["none".into()],
            num_problems: 1,
            jobs: 1,
            seed: 5,
            ..Default::default()
        };
        let a = run_calibration_experiment(&p).unwrap();
        let b = run_calibration_experiment(&p).unwrap();
        assert_eq!(a[0].w_bar.to_bits(), b[0].w_bar.to_bits());
    }

    #[test]
    fn pde_demo_identity_transport_converges_immediately() {
        let p = PdeDemoParams {
            m_coarse: 3,
            m_fine: 3,
            seeds: 2,
            // No inflation: the transported posterior is used verbatim.
            lambda_inflate: 1e-10,
            samples: 1,
            ..Default::default()
        };
        let out = run_pde_demo(&p).unwrap();
        // Same grid: the transported prior already solved this exact system,
        // so the fine solve needs (almost) no work.
        assert!(
            out.fine_transported.iterations <= 1,
            "took {} iterations",
            out.fine_transported.iterations
        );
    }

    #[test]
    fn gp_demo_errors_shrink_along_checkpoints() {
        let p = GpDemoParams {
            n: 32,
            m: 8,
            ..Default::default()
        };
        let rows = run_gp_demo(&p).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].mean_abs_error + 1e-12 >= rows[1].mean_abs_error);
        assert!(rows[1].mean_abs_error + 1e-12 >= rows[2].mean_abs_error);
        assert!(rows[2].mean_abs_error <= 1e-6);
    }
}
