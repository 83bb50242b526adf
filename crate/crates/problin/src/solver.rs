//! The probabilistic linear solver iteration: policy, step size, stopping
//! criteria, belief maintenance and result assembly.
//!
//! Per iteration the solver takes an action `s = -E[H] r`, observes
//! `y = A s` (the only place `A` is touched), performs the optimal step and
//! conditions both matrix beliefs on the pair `(s, y)`. Beliefs are kept in
//! block form: growing action/observation blocks plus small Gram
//! factorizations, so applying a posterior mean costs O(kn). With the
//! empirical covariance class the posterior covariance factors collapse to
//! scaled projections onto the unexplored subspaces, which is what the
//! stopping criterion and calibration manipulate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calibration::{compute_phi_psi, CalibrationMethod, RayleighSample};
use crate::dist::{GaussianVector, SymmetricMatrixNormal};
use crate::error::{Error, Result};
use crate::inference::ObservationBlock;
use crate::linalg::{BorderedCholesky, LinearOperator, RankOneTerm};
use crate::priors::{PriorMean, PriorSpec};

/// Breakdown threshold: `s^T y` below this multiple of `||s|| ||y||` signals
/// loss of positive definiteness or conjugacy.
pub const BREAKDOWN_REL_TOL: f64 = 1e-14;

/// Solver configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative tolerance on `max(rtol ||b||, atol)`.
    pub rtol: f64,
    /// Absolute tolerance.
    pub atol: f64,
    /// Iteration cap; defaults to `10 n` when `None`.
    pub max_iter: Option<usize>,
    pub calibration: CalibrationMethod,
    pub seed: u64,
    /// Maintain the belief over `A` alongside the belief over its inverse.
    /// The policy only needs the inverse view; skipping `A` saves time.
    pub track_matrix_belief: bool,
    /// Residuals are updated recursively; every this many iterations they
    /// are recomputed from scratch to bound drift.
    pub residual_recompute_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 0.0,
            max_iter: None,
            calibration: CalibrationMethod::None,
            seed: 0,
            track_matrix_belief: true,
            residual_recompute_interval: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rtol < 0.0 || self.atol < 0.0 {
            return Err(Error::InvalidArgument(
                "tolerances must be nonnegative".into(),
            ));
        }
        if self.rtol == 0.0 && self.atol == 0.0 {
            return Err(Error::InvalidArgument(
                "rtol and atol must not both be zero".into(),
            ));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if self.residual_recompute_interval == 0 {
            return Err(Error::InvalidArgument(
                "residual recompute interval must be at least 1".into(),
            ));
        }
        self.calibration.validate()
    }
}

/// Which criterion ended the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Residual,
    Trace,
    MaxIter,
    Breakdown,
}

/// Covariance bookkeeping of a block belief.
enum CovKind {
    /// Empirical covariance class: the posterior factor is
    /// `scale * P_{actions-perp}`; `basis` is an orthonormal basis of the
    /// action span and `tau` tracks `tr(P)` through the trace recursion.
    Class { scale: f64, basis: Vec<DVector<f64>> },
    /// Fixed prior covariance factor `W0`: the posterior factor is
    /// `W0 - (W0 A) G^{-1} (W0 A)^T`; `tau` tracks its trace recursively.
    Fixed { w0: LinearOperator },
}

/// Posterior belief over a symmetric operator in block form. The same
/// structure serves the matrix view (`actions = S`, `observations = Y`) and
/// the inverse view (`actions = Y`, `observations = S`).
struct BlockBelief {
    n: usize,
    mean0: LinearOperator,
    cov: CovKind,
    actions: Vec<DVector<f64>>,
    deltas: Vec<DVector<f64>>,
    w0_actions: Vec<DVector<f64>>,
    gram: BorderedCholesky,
    /// Trace of the posterior factor: `tr(P)` (unit scale) in class mode,
    /// `tr(W_k)` in fixed mode.
    tau: f64,
}

impl BlockBelief {
    fn new_class(mean0: LinearOperator, scale: f64) -> Self {
        let n = mean0.rows();
        Self {
            n,
            mean0,
            cov: CovKind::Class {
                scale,
                basis: Vec::new(),
            },
            actions: Vec::new(),
            deltas: Vec::new(),
            w0_actions: Vec::new(),
            gram: BorderedCholesky::new(),
            tau: n as f64,
        }
    }

    fn new_fixed(mean0: LinearOperator, w0: LinearOperator) -> Self {
        let n = mean0.rows();
        let tau = w0.trace();
        Self {
            n,
            mean0,
            cov: CovKind::Fixed { w0 },
            actions: Vec::new(),
            deltas: Vec::new(),
            w0_actions: Vec::new(),
            gram: BorderedCholesky::new(),
            tau,
        }
    }

    fn k(&self) -> usize {
        self.actions.len()
    }

    fn set_scale(&mut self, new_scale: f64) {
        if let CovKind::Class { scale, .. } = &mut self.cov {
            *scale = new_scale;
        }
    }

    /// Condition on one more (action, observation) pair. `w0_action` is the
    /// prior covariance factor applied to the action (`= observation` for the
    /// matrix view under the class, `= H0 y` for the inverse view).
    fn push(
        &mut self,
        action: DVector<f64>,
        observation: &DVector<f64>,
        w0_action: DVector<f64>,
    ) -> Result<()> {
        // Factor trace recursion with the *current* posterior factor:
        // tr(W_k) = tr(W_{k-1}) - ||W_{k-1} a||^2 / (a^T W_{k-1} a).
        match &mut self.cov {
            CovKind::Class { basis, .. } => {
                // Unit-scale projection: g = P_{perp} a, with one
                // reorthogonalization pass for stability.
                let mut g = action.clone();
                for q in basis.iter() {
                    let c = q.dot(&g);
                    g.axpy(-c, q, 1.0);
                }
                for q in basis.iter() {
                    let c = q.dot(&g);
                    g.axpy(-c, q, 1.0);
                }
                let den = action.dot(&g);
                let num = g.norm_squared();
                if den <= 0.0 || !den.is_finite() {
                    return Err(Error::GramSingular { k: self.k() + 1 });
                }
                self.tau -= num / den;
                basis.push(&g / g.norm());
            }
            CovKind::Fixed { .. } => {
                let g = self.factor_apply(&action);
                let den = action.dot(&g);
                let num = g.norm_squared();
                if den <= 0.0 || !den.is_finite() {
                    return Err(Error::GramSingular { k: self.k() + 1 });
                }
                self.tau -= num / den;
            }
        }

        let cross: Vec<f64> = self.actions.iter().map(|a| a.dot(&w0_action)).collect();
        let diag = action.dot(&w0_action);
        self.gram.push(&cross, diag)?;

        let delta = observation - self.mean0.apply(&action);
        self.actions.push(action);
        self.deltas.push(delta);
        self.w0_actions.push(w0_action);
        Ok(())
    }

    /// Posterior mean applied to a vector, O(kn):
    /// `mean0 v + D t + U (D^T v - A^T (D t))` with `t = G^{-1} (W0 A)^T v`
    /// and `U = (W0 A) G^{-1}`.
    fn mean_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.mean0.apply(v);
        let k = self.k();
        if k == 0 {
            return out;
        }
        let c: Vec<f64> = self.w0_actions.iter().map(|w| w.dot(v)).collect();
        let t = self.gram.solve(&c);
        let mut dt = DVector::zeros(self.n);
        for (j, d) in self.deltas.iter().enumerate() {
            dt.axpy(t[j], d, 1.0);
        }
        let mut rhs: Vec<f64> = self.deltas.iter().map(|d| d.dot(v)).collect();
        for (j, a) in self.actions.iter().enumerate() {
            rhs[j] -= a.dot(&dt);
        }
        let u_coeff = self.gram.solve(&rhs);
        out += &dt;
        for (j, w) in self.w0_actions.iter().enumerate() {
            out.axpy(u_coeff[j], w, 1.0);
        }
        out
    }

    /// Posterior covariance factor applied to a vector, O(kn).
    fn factor_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.cov {
            CovKind::Class { scale, basis } => {
                let mut g = v.clone();
                for q in basis {
                    let c = q.dot(&g);
                    g.axpy(-c, q, 1.0);
                }
                g * *scale
            }
            CovKind::Fixed { w0 } => {
                let mut out = w0.apply(v);
                if self.k() > 0 {
                    let c: Vec<f64> = self.w0_actions.iter().map(|w| w.dot(v)).collect();
                    let t = self.gram.solve(&c);
                    for (j, w) in self.w0_actions.iter().enumerate() {
                        out.axpy(-t[j], w, 1.0);
                    }
                }
                out
            }
        }
    }

    /// Trace of the posterior covariance factor (recursively maintained).
    fn factor_trace(&self) -> f64 {
        match &self.cov {
            CovKind::Class { scale, .. } => *scale * self.tau.max(0.0),
            CovKind::Fixed { .. } => self.tau.max(0.0),
        }
    }

    /// Snapshot as a lazily represented symmetric matrix-variate normal.
    fn as_belief(&self) -> Result<SymmetricMatrixNormal> {
        let k = self.k();
        let mean = if k == 0 {
            self.mean0.clone()
        } else {
            // U = (W0 A) G^{-1}, columns built once.
            let mut u_cols = Vec::with_capacity(k);
            for j in 0..k {
                let mut e = vec![0.0; k];
                e[j] = 1.0;
                let g_inv_e = self.gram.solve(&e);
                let mut u = DVector::zeros(self.n);
                for (i, w) in self.w0_actions.iter().enumerate() {
                    u.axpy(g_inv_e[i], w, 1.0);
                }
                u_cols.push(u);
            }
            // E = A^T D.
            let mut terms = Vec::with_capacity(3 * k);
            for j in 0..k {
                terms.push(RankOneTerm {
                    left: self.deltas[j].clone(),
                    right: u_cols[j].clone(),
                    coeff: 1.0,
                });
                terms.push(RankOneTerm {
                    left: u_cols[j].clone(),
                    right: self.deltas[j].clone(),
                    coeff: 1.0,
                });
                // -(U E)_j u_j^T with (U E)_j = sum_i u_i E_ij.
                let mut ue = DVector::zeros(self.n);
                for (i, a) in self.actions.iter().enumerate() {
                    let e_ij = a.dot(&self.deltas[j]);
                    ue.axpy(e_ij, &u_cols[i], 1.0);
                }
                terms.push(RankOneTerm {
                    left: ue,
                    right: u_cols[j].clone(),
                    coeff: -1.0,
                });
            }
            LinearOperator::low_rank(self.mean0.clone(), terms, true)
        };

        let factor = match &self.cov {
            CovKind::Class { scale, basis } => {
                let proj = if basis.is_empty() {
                    LinearOperator::identity(self.n)
                } else {
                    let q = DMatrix::from_columns(basis);
                    LinearOperator::projection_from_orthonormal(q, true)
                };
                proj.scale(*scale)
            }
            CovKind::Fixed { w0 } => {
                if k == 0 {
                    w0.clone()
                } else {
                    let mut terms = Vec::with_capacity(k);
                    for j in 0..k {
                        let mut e = vec![0.0; k];
                        e[j] = 1.0;
                        let g_inv_e = self.gram.solve(&e);
                        let mut u = DVector::zeros(self.n);
                        for (i, w) in self.w0_actions.iter().enumerate() {
                            u.axpy(g_inv_e[i], w, 1.0);
                        }
                        terms.push(RankOneTerm {
                            left: u,
                            right: self.w0_actions[j].clone(),
                            coeff: -1.0,
                        });
                    }
                    LinearOperator::low_rank(w0.clone(), terms, true)
                }
            }
        };
        // PSD by construction (scaled projection / Schur complement of a
        // validated prior factor); skip the dense re-validation.
        Ok(SymmetricMatrixNormal::new_trusted(mean, factor))
    }
}

/// Prior beliefs handed to [`solve_with_beliefs`]: required inverse view,
/// optional matrix view.
pub struct BeliefPrior {
    pub h: SymmetricMatrixNormal,
    pub a: Option<SymmetricMatrixNormal>,
}

/// Live solver state; public getters expose what the stopping logic and the
/// diagnostics need.
pub struct SolverState {
    iter: usize,
    x: DVector<f64>,
    r: DVector<f64>,
    b_norm: f64,
    obs: ObservationBlock,
    alphas: Vec<f64>,
    rayleigh: Vec<RayleighSample>,
    h_view: BlockBelief,
    a_view: Option<BlockBelief>,
    phi: f64,
    psi: f64,
}

impl SolverState {
    pub fn iterations(&self) -> usize {
        self.iter
    }

    pub fn solution_estimate(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn observations(&self) -> &ObservationBlock {
        &self.obs
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.alphas
    }

    pub fn rayleigh_samples(&self) -> &[RayleighSample] {
        &self.rayleigh
    }

    pub fn phi_psi(&self) -> (f64, f64) {
        (self.phi, self.psi)
    }

    /// Trace of the current inverse-view posterior covariance factor.
    pub fn trace_w_h(&self) -> f64 {
        self.h_view.factor_trace()
    }
}

/// Solver output: Gaussian solution belief, posterior operator beliefs and
/// convergence diagnostics.
pub struct SolverResult {
    pub x_belief: GaussianVector,
    pub a_belief: Option<SymmetricMatrixNormal>,
    pub h_belief: SymmetricMatrixNormal,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub residual_history: Vec<f64>,
    pub trace_history: Vec<f64>,
    pub final_residual_norm: f64,
    pub phi: f64,
    pub psi: f64,
    /// Initial iterate `x0 = E[H0] b`.
    pub x0: DVector<f64>,
    /// Collected actions and observations.
    pub observations: ObservationBlock,
    pub step_sizes: Vec<f64>,
}

impl SolverResult {
    pub fn solution(&self) -> &DVector<f64> {
        &self.x_belief.mean
    }

    /// Reconstruct the iterate after `i` completed iterations from the
    /// recorded actions and step sizes.
    pub fn iterate(&self, i: usize) -> DVector<f64> {
        let mut x = self.x0.clone();
        for j in 0..i.min(self.step_sizes.len()) {
            x.axpy(
                self.step_sizes[j],
                &self.observations.actions().column(j).into_owned(),
                1.0,
            );
        }
        x
    }
}

/// Policy: `s = -E[H] r`. Fails with an already-converged signal on a zero
/// residual. If `E[H]` equals the true inverse the very next step lands on
/// the solution.
pub fn policy(h_belief: &SymmetricMatrixNormal, r: &DVector<f64>) -> Result<DVector<f64>> {
    if r.norm() == 0.0 {
        return Err(Error::AlreadyConverged);
    }
    Ok(-h_belief.mean().apply(r))
}

/// Optimal step size `alpha = -s^T r / (s^T y)` minimizing the quadratic
/// `q(x + alpha s)` along `s`.
pub fn step_size(s: &DVector<f64>, r: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let sy = s.dot(y);
    if sy <= BREAKDOWN_REL_TOL * s.norm() * y.norm() {
        return Err(Error::Breakdown { s_dot_y: sy });
    }
    Ok(-s.dot(r) / sy)
}

/// `tr(Cov[x]) = ((b^T W b) tr(W) + ||W b||^2) / 2` with `W` the current
/// inverse-view posterior covariance factor; `tr(W)` comes from the
/// three-matvec recursion maintained by the state.
pub fn trace_cov_x(state: &SolverState, b: &DVector<f64>) -> f64 {
    let wb = state.h_view.factor_apply(b);
    let btwb = b.dot(&wb).max(0.0);
    0.5 * (btwb * state.h_view.factor_trace() + wb.norm_squared())
}

/// Evaluate the stopping rule
/// `min(sqrt(tr Cov[x]), ||r||) <= max(rtol ||b||, atol)` plus the iteration
/// cap. Ties prefer the trace criterion.
pub fn should_stop(state: &SolverState, b: &DVector<f64>, config: &SolverConfig) -> Option<StopReason> {
    let threshold = (config.rtol * state.b_norm).max(config.atol);
    let sqrt_trace = trace_cov_x(state, b).max(0.0).sqrt();
    let r_norm = state.r.norm();
    if sqrt_trace.min(r_norm) <= threshold {
        return Some(if sqrt_trace <= r_norm {
            StopReason::Trace
        } else {
            StopReason::Residual
        });
    }
    let cap = config.max_iter.unwrap_or(10 * state.x.len());
    if state.iter >= cap {
        return Some(StopReason::MaxIter);
    }
    None
}

/// Solve `A x = b` with the empirical covariance-class prior.
pub fn solve(
    a: &LinearOperator,
    b: &DVector<f64>,
    prior: &PriorSpec,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let n = check_system(a, b, config)?;
    let h_view = match &prior.mean {
        PriorMean::Scalar(alpha) => {
            BlockBelief::new_class(LinearOperator::scaled_identity(n, 1.0 / alpha), prior.psi)
        }
        PriorMean::Explicit { h0, .. } => BlockBelief::new_class(h0.clone(), prior.psi),
    };
    let a_view = config.track_matrix_belief.then(|| match &prior.mean {
        PriorMean::Scalar(alpha) => {
            BlockBelief::new_class(LinearOperator::scaled_identity(n, *alpha), prior.phi)
        }
        PriorMean::Explicit { a0, .. } => BlockBelief::new_class(a0.clone(), prior.phi),
    });
    run(a, b, h_view, a_view, prior.phi, prior.psi, config)
}

/// Solve with explicit prior beliefs (e.g. transported from a related
/// problem) instead of the covariance class. Calibration requires the class
/// degrees of freedom and is rejected here.
pub fn solve_with_beliefs(
    a: &LinearOperator,
    b: &DVector<f64>,
    prior: BeliefPrior,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let n = check_system(a, b, config)?;
    if prior.h.dim() != n {
        return Err(Error::Shape {
            expected: format!("prior belief of dimension {n}"),
            got: format!("{}", prior.h.dim()),
        });
    }
    if !matches!(config.calibration, CalibrationMethod::None) {
        return Err(Error::UnsupportedConfiguration(
            "calibration adjusts the covariance-class degrees of freedom; \
             explicit prior beliefs fix the covariance factor instead"
                .into(),
        ));
    }
    let (h_mean, h_factor) = prior.h.into_parts();
    let h_view = BlockBelief::new_fixed(h_mean, h_factor);
    let a_view = match (config.track_matrix_belief, prior.a) {
        (true, Some(belief)) => {
            let (a_mean, a_factor) = belief.into_parts();
            Some(BlockBelief::new_fixed(a_mean, a_factor))
        }
        _ => None,
    };
    run(a, b, h_view, a_view, 0.0, 0.0, config)
}

fn check_system(a: &LinearOperator, b: &DVector<f64>, config: &SolverConfig) -> Result<usize> {
    config.validate()?;
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(Error::Shape {
            expected: "square A matching b".into(),
            got: format!("A {:?}, b {}", a.shape(), b.len()),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSystem("b contains non-finite entries".into()));
    }
    let defect = a.symmetry_defect(3, config.seed ^ 0x5f5f);
    if defect > 1e-8 {
        return Err(Error::NotSymmetric {
            max_asymmetry: defect,
            tol: 1e-8,
        });
    }
    Ok(a.rows())
}

fn run(
    a: &LinearOperator,
    b: &DVector<f64>,
    h_view: BlockBelief,
    a_view: Option<BlockBelief>,
    phi: f64,
    psi: f64,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let n = b.len();
    let x0 = h_view.mean_apply(b);
    let r0 = a.apply(&x0) - b;
    let mut state = SolverState {
        iter: 0,
        x: x0.clone(),
        r: r0,
        b_norm: b.norm(),
        obs: ObservationBlock::empty(n),
        alphas: Vec::new(),
        rayleigh: Vec::new(),
        h_view,
        a_view,
        phi,
        psi,
    };
    let mut residual_history = Vec::new();
    let mut trace_history = Vec::new();

    let stop_reason = loop {
        if let Some(reason) = should_stop(&state, b, config) {
            break reason;
        }

        let s = -state.h_view.mean_apply(&state.r);
        if s.norm() == 0.0 {
            break StopReason::Breakdown;
        }
        let y = a.apply(&s);
        let alpha = match step_size(&s, &state.r, &y) {
            Ok(alpha) => alpha,
            Err(Error::Breakdown { .. }) => break StopReason::Breakdown,
            Err(e) => return Err(e),
        };

        // Condition the beliefs before committing the step so a numerically
        // degenerate observation leaves the state at the previous iterate.
        // The inverse view observes (y -> s) with W0^H y = H0 y under the
        // class; the matrix view observes (s -> y) with W0^A s = y.
        let h_w0_action = match &state.h_view.cov {
            CovKind::Class { .. } => state.h_view.mean0.apply(&y),
            CovKind::Fixed { w0 } => w0.apply(&y),
        };
        if let Err(e) = state.h_view.push(y.clone(), &s, h_w0_action) {
            log::warn!(
                "inverse-view update failed at iteration {}: {e}",
                state.iter + 1
            );
            break StopReason::Breakdown;
        }
        if let Some(view) = &mut state.a_view {
            let w0_action = match &view.cov {
                CovKind::Class { .. } => y.clone(),
                CovKind::Fixed { w0 } => w0.apply(&s),
            };
            if let Err(e) = view.push(s.clone(), &y, w0_action) {
                log::warn!(
                    "matrix-view update failed at iteration {}: {e}",
                    state.iter + 1
                );
                break StopReason::Breakdown;
            }
        }

        state.x.axpy(alpha, &s, 1.0);
        state.r.axpy(alpha, &y, 1.0);
        state.iter += 1;
        if state.iter % config.residual_recompute_interval == 0 {
            state.r = a.apply(&state.x) - b;
        }
        state.alphas.push(alpha);
        state.rayleigh.push(RayleighSample {
            index: state.iter,
            log_rayleigh: (s.dot(&y) / s.norm_squared()).ln(),
        });
        state.obs.push(s, y)?;

        // Calibrate the class degrees of freedom from the data collected so
        // far. Methods needing more samples than available keep the current
        // values. A SpectrumMean configured with the full descending
        // spectrum is sliced to the current n - k tail.
        if !matches!(config.calibration, CalibrationMethod::None) {
            let method = match &config.calibration {
                CalibrationMethod::SpectrumMean { tail_eigenvalues }
                    if tail_eigenvalues.len() > n - state.obs.k() =>
                {
                    let tail = tail_eigenvalues[tail_eigenvalues.len() - (n - state.obs.k())..]
                        .to_vec();
                    CalibrationMethod::SpectrumMean {
                        tail_eigenvalues: tail,
                    }
                }
                other => other.clone(),
            };
            match compute_phi_psi(&method, &state.obs, n) {
                Ok((new_phi, new_psi)) if new_phi > 0.0 => {
                    state.phi = new_phi;
                    state.psi = new_psi;
                    state.h_view.set_scale(new_psi);
                    if let Some(view) = &mut state.a_view {
                        view.set_scale(new_phi);
                    }
                }
                Ok(_) => {}
                Err(Error::InvalidArgument(_)) if state.iter < 2 => {}
                Err(e) => return Err(e),
            }
        }

        residual_history.push(state.r.norm());
        trace_history.push(trace_cov_x(&state, b));
    };

    let h_belief = state.h_view.as_belief()?;
    let a_belief = match &state.a_view {
        Some(view) => Some(view.as_belief()?),
        None => None,
    };

    // Solution belief N(x_k, Cov[H b]) with the posterior factor.
    let wb = state.h_view.factor_apply(b);
    let btwb = b.dot(&wb).max(0.0);
    let trace = 0.5 * (btwb * state.h_view.factor_trace() + wb.norm_squared());
    let cov = LinearOperator::sum(
        h_belief.cov_factor().clone().scale(0.5 * btwb),
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
    let x_belief = GaussianVector::new(state.x.clone(), cov, trace)?;

    Ok(SolverResult {
        x_belief,
        a_belief,
        h_belief,
        iterations: state.iter,
        stop_reason,
        residual_history,
        trace_history,
        final_residual_norm: state.r.norm(),
        phi: state.phi,
        psi: state.psi,
        x0,
        observations: state.obs,
        step_sizes: state.alphas,
    })
}
