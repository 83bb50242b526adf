//! The `solve` subcommand: one system in, one JSON record out.

use std::path::Path;
use std::time::Instant;

use clap::Args;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::records::{write_json, ResultRecord};
use super::OverrideParams;
use crate::calibration::{CalibrationMethod, RayleighGpParams};
use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::priors::PriorSpec;
use crate::problems::{kernel_gram, random_spd, uniform_points, uniform_spectrum, KernelFamily, KernelSpec};
use crate::solver::{solve, SolverConfig};

/// Fully resolved parameters of a `solve` run; serialized verbatim into the
/// record's config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveParams {
    /// Matrix Market file; mutually exclusive with `gen`.
    pub mtx: Option<String>,
    /// Generator: identity | matern32 | matern52 | rbf | randspd | poisson.
    pub gen: Option<String>,
    pub n: usize,
    /// Condition number for `randspd`.
    pub condition: f64,
    /// Interior grid size for `poisson` (dimension becomes m^2).
    pub m: usize,
    /// Kernel lengthscale for the kernel generators.
    pub lengthscale: f64,
    /// Kernel damping eps^2 (also the noise-floor calibration value).
    pub eps2: f64,
    /// Input-point dimension for kernel generators.
    pub dim: usize,
    /// Right-hand side file (one value per line); generated from a seeded
    /// standard normal when absent.
    pub b_file: Option<String>,
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: Option<usize>,
    /// none | eps2 | spectrum | rayleigh
    pub calib: String,
    /// Scalar prior mean; `alpha_from_trace` replaces it by tr(A)/n.
    pub alpha: f64,
    pub alpha_from_trace: bool,
    pub seed: u64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            mtx: None,
            gen: None,
            n: 16,
            condition: 1e4,
            m: 4,
            lengthscale: 0.5,
            eps2: 1e-4,
            dim: 1,
            b_file: None,
            rtol: 1e-6,
            atol: 0.0,
            max_iter: None,
            calib: "none".into(),
            alpha: 1.0,
            alpha_from_trace: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Matrix Market input file (real, coordinate or array).
    #[arg(long, value_name = "FILE", conflicts_with = "gen")]
    pub mtx: Option<String>,
    /// Problem generator: identity | matern32 | matern52 | rbf | randspd | poisson.
    #[arg(long)]
    pub gen: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub condition: Option<f64>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Right-hand side file; seeded standard normal when absent.
    #[arg(long, value_name = "FILE")]
    pub b_file: Option<String>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Calibration: none | eps2 | spectrum | rayleigh.
    #[arg(long)]
    pub calib: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Use tr(A)/n as the scalar prior mean (Hutchinson-probed when the
    /// matrix is not dense-accessible).
    #[arg(long)]
    pub alpha_from_trace: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl OverrideParams<SolveParams> for SolveArgs {
    fn apply(&self, p: &mut SolveParams) {
        if self.mtx.is_some() {
            p.mtx = self.mtx.clone();
            p.gen = None;
        }
        if self.gen.is_some() {
            p.gen = self.gen.clone();
            p.mtx = None;
        }
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { p.$f = v.clone(); } )* };
        }
        over!(n, condition, m, lengthscale, eps2, dim, rtol, atol, calib, alpha, seed);
        if self.b_file.is_some() {
            p.b_file = self.b_file.clone();
        }
        if self.max_iter.is_some() {
            p.max_iter = self.max_iter;
        }
        if self.alpha_from_trace {
            p.alpha_from_trace = true;
        }
    }
}

/// Assembled problem plus everything needed for diagnostics.
pub struct AssembledProblem {
    pub a: LinearOperator,
    pub b: DVector<f64>,
    /// Sorted (descending) spectrum when the generator knows it.
    pub spectrum: Option<Vec<f64>>,
}

pub fn assemble_problem(p: &SolveParams) -> Result<AssembledProblem> {
    let a = if let Some(path) = &p.mtx {
        let m = crate::io::read_matrix_market(Path::new(path))?;
        if !m.is_square() {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{:?}", m.shape()),
            });
        }
        LinearOperator::dense(m)
    } else {
        match p.gen.as_deref().unwrap_or("identity") {
            "identity" => LinearOperator::identity(p.n),
            "randspd" => {
                let spectrum = uniform_spectrum(p.n, p.condition, p.seed ^ 0xa5a5);
                LinearOperator::dense(random_spd(p.n, &spectrum, p.seed)?)
            }
            "poisson" => {
                crate::problems::poisson_dirichlet(p.m, |_, _| 15.0, crate::problems::demo_boundary)?
                    .a
            }
            family @ ("matern32" | "matern52" | "rbf") => {
                let fam = match family {
                    "matern32" => KernelFamily::Matern32,
                    "matern52" => KernelFamily::Matern52,
                    _ => KernelFamily::Rbf,
                };
                let spec = KernelSpec::new(fam, p.lengthscale, p.eps2)?;
                let pts = uniform_points(p.n, p.dim, p.seed ^ 0x77);
                kernel_gram(&spec, &pts)?
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown generator '{other}'"
                )))
            }
        }
    };
    let n = a.rows();
    let b = match &p.b_file {
        Some(path) => {
            let rows = crate::io::read_points_csv(Path::new(path))?;
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            if flat.len() != n {
                return Err(Error::Shape {
                    expected: format!("right-hand side of length {n}"),
                    got: format!("{}", flat.len()),
                });
            }
            DVector::from_vec(flat)
        }
        None => {
            let mut rng = ChaCha20Rng::seed_from_u64(p.seed ^ 0xb0b);
            DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
        }
    };
    let spectrum = if matches!(p.calib.as_str(), "spectrum") {
        let dense = a.to_dense()?;
        let eig = nalgebra::SymmetricEigen::new(0.5 * (&dense + dense.transpose()));
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|x, y| y.total_cmp(x));
        Some(vals)
    } else {
        None
    };
    Ok(AssembledProblem { a, b, spectrum })
}

pub fn calibration_from_name(
    name: &str,
    eps2: f64,
    spectrum: Option<&[f64]>,
) -> Result<CalibrationMethod> {
    match name {
        "none" => Ok(CalibrationMethod::None),
        "eps2" => Ok(CalibrationMethod::NoiseFloor { epsilon_sq: eps2 }),
        "rayleigh" => Ok(CalibrationMethod::RayleighGp(RayleighGpParams::default())),
        "spectrum" => {
            let spectrum = spectrum.ok_or_else(|| {
                Error::UnsupportedConfiguration(
                    "spectrum calibration needs a dense-accessible matrix".into(),
                )
            })?;
            Ok(CalibrationMethod::SpectrumMean {
                tail_eigenvalues: spectrum.to_vec(),
            })
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown calibration method '{other}'"
        ))),
    }
}

/// Run one solve per the resolved parameters and return the record.
pub fn run_solve(p: &SolveParams) -> Result<ResultRecord> {
    let started = Instant::now();
    let problem = assemble_problem(p)?;
    let alpha = if p.alpha_from_trace {
        crate::priors::scalar_mean_from_trace(&problem.a, p.seed ^ 0x7ace)
    } else {
        p.alpha
    };
    let prior = PriorSpec::scalar(alpha)?;
    let calibration = calibration_from_name(&p.calib, p.eps2, problem.spectrum.as_deref())?;
    let config = SolverConfig {
        rtol: p.rtol,
        atol: p.atol,
        max_iter: p.max_iter,
        calibration,
        seed: p.seed,
        ..Default::default()
    };
    let out = solve(&problem.a, &problem.b, &prior, &config)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(ResultRecord::from_solver(
        "solve",
        p.seed,
        serde_json::to_value(p).expect("params serialize"),
        &out,
        None,
        wall_ms,
    ))
}

pub fn cmd_solve(p: &SolveParams, out_path: Option<&Path>) -> Result<i32> {
    let record = run_solve(p)?;
    super::emit(out_path, &write_json(&record))?;
    Ok(record.exit_code())
}
