//! Machine-readable result records and their published JSON schema.

use serde::{Deserialize, Serialize};

use crate::solver::{SolverResult, StopReason};

/// JSON record emitted for every solve-shaped run. The `config` echo holds
/// the fully resolved parameters; feeding it back through `--config`
/// reproduces the run bit-identically (timings aside).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub residual_history: Vec<f64>,
    pub trace_history: Vec<f64>,
    pub final_residual_norm: f64,
    pub trace_cov_x: f64,
    pub phi: f64,
    pub psi: f64,
    /// Calibration statistic when the true solution is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_statistic: Option<f64>,
    pub wall_ms: f64,
}

impl ResultRecord {
    pub fn from_solver(
        experiment: &str,
        seed: u64,
        config: serde_json::Value,
        out: &SolverResult,
        w_statistic: Option<f64>,
        wall_ms: f64,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            version: crate::VERSION.to_string(),
            seed,
            config,
            iterations: out.iterations,
            stop_reason: out.stop_reason,
            residual_history: out.residual_history.clone(),
            trace_history: out.trace_history.clone(),
            final_residual_norm: out.final_residual_norm,
            trace_cov_x: out.x_belief.trace_cov,
            phi: out.phi,
            psi: out.psi,
            w_statistic,
            wall_ms,
        }
    }

    /// Exit code contract: 0 converged, 2 iteration cap, 3 breakdown.
    pub fn exit_code(&self) -> i32 {
        match self.stop_reason {
            StopReason::Residual | StopReason::Trace => 0,
            StopReason::MaxIter => 2,
            StopReason::Breakdown => 3,
        }
    }
}

/// The JSON schema shipped in-repo at `schemas/result_record.schema.json`;
/// embedded here so tests can validate emitted records against the published
/// contract without path gymnastics.
pub const RESULT_RECORD_SCHEMA: &str = include_str!("../../../../schemas/result_record.schema.json");

pub fn write_json(record: &ResultRecord) -> String {
    serde_json::to_string_pretty(record).expect("record serialization cannot fail")
}
