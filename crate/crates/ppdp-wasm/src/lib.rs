//! Browser bindings for the saddle-point solver demo page.
//!
//! Three operations, all speaking JSON strings so the page needs no glue
//! types: `run_preset` executes a preset with interactive parameter
//! overrides and returns the residual curve plus a 2-d trajectory,
//! `validate_params` reports the analytic constants and assumption flags
//! for slider values, and `compare_recovery` races the relaxed algorithm
//! against the literal primal-dual reference iteration.
//!
//! Build:
//!
//! ```sh
//! cargo build -p ppdp-wasm --target wasm32-unknown-unknown --release
//! wasm-bindgen --target web --out-dir crates/ppdp-wasm/www/pkg \
//!   target/wasm32-unknown-unknown/release/ppdp_wasm.wasm
//! ```

use ppdp::config::{build, preset, preset_names, DiagonalConfig};
use ppdp::diagnostics::TraceRow;
use ppdp::oracles::{reference_generalized_pd, reference_pdhg};
use ppdp::solver::{solve, Algorithm, Correction, SolverConfig, StepsizeMode, ThetaMode};
use ppdp::{
    Coupling, DiagonalMap, LinearMap, PreconditionerSpec, PrimalDualPoint, ProblemInstance,
    ProxFunction,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize, Default)]
struct RunRequest {
    /// Uniform scaling nu of both diagonal preconditioner blocks
    /// (N1 = N2 = nu I); falls back to the preset values when absent.
    nu: Option<f64>,
    /// Q = q_factor * K.
    q_factor: Option<f64>,
    theta: Option<f64>,
    adaptive: Option<bool>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    allow_unverified: Option<bool>,
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    k: usize,
    residual: f64,
    dist: Option<f64>,
    t: Option<f64>,
    theta: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RunResponse {
    preset: String,
    status: String,
    iterations: usize,
    final_residual: f64,
    constants: ppdp::ConstantsReport,
    rows: Vec<CurvePoint>,
    /// Plane the trajectory lives in: the first two primal coordinates, or
    /// (x, y) for one-dimensional blocks.
    plane: &'static str,
    trajectory: Vec<[f64; 2]>,
    warnings: Vec<String>,
}

fn status_name(status: ppdp::ExitStatus) -> &'static str {
    match status {
        ppdp::ExitStatus::Converged => "converged",
        ppdp::ExitStatus::NotConverged => "not_converged",
        ppdp::ExitStatus::AssumptionViolation => "assumption_violation",
        ppdp::ExitStatus::NumericalBreakdown => "numerical_breakdown",
    }
}

fn patch_config(cfg: &mut ppdp::RunConfig, req: &RunRequest) {
    if let Some(nu) = req.nu {
        let n = match &cfg.preconditioner.n1 {
            DiagonalConfig::Diagonal { d } => d.len(),
            DiagonalConfig::ScaledIdentity { .. } => 0,
        };
        cfg.preconditioner.n1 = if n > 0 {
            DiagonalConfig::Diagonal { d: vec![nu; n] }
        } else {
            DiagonalConfig::ScaledIdentity { tau: 1.0 / nu }
        };
        let m = match &cfg.preconditioner.n2 {
            DiagonalConfig::Diagonal { d } => d.len(),
            DiagonalConfig::ScaledIdentity { .. } => 0,
        };
        cfg.preconditioner.n2 = if m > 0 {
            DiagonalConfig::Diagonal { d: vec![nu; m] }
        } else {
            DiagonalConfig::ScaledIdentity { tau: 1.0 / nu }
        };
    }
    if let Some(factor) = req.q_factor {
        cfg.preconditioner.q = ppdp::config::QConfig::ScaledCoupling { factor };
    }
    if req.adaptive == Some(true) {
        cfg.solver.theta = ThetaMode::Adaptive { eps_theta: 0.05 };
    } else if let Some(theta) = req.theta {
        cfg.solver.theta = ThetaMode::Constant { value: theta };
    }
    if let Some(tol) = req.tol {
        cfg.solver.tol = tol;
    }
    if let Some(max_iter) = req.max_iter {
        cfg.solver.max_iter = max_iter;
    }
    if let Some(allow) = req.allow_unverified {
        cfg.solver.allow_unverified = allow;
    }
}

fn run_preset_impl(name: &str, overrides: &str) -> Result<String, String> {
    let req: RunRequest = if overrides.trim().is_empty() {
        RunRequest::default()
    } else {
        serde_json::from_str(overrides).map_err(|e| format!("override parse error: {e}"))?
    };
    let mut cfg = preset(name).map_err(|e| e.to_string())?;
    patch_config(&mut cfg, &req);
    let built = build(&cfg).map_err(|e| e.to_string())?;
    let theta = built.solver.theta_for_flags();
    let t_flags = match built.solver.stepsize {
        StepsizeMode::Constant { t } => t,
        StepsizeMode::Projection => built
            .spec
            .constants(&built.problem.phi, theta, 1.0)
            .t_lower
            .max(f64::MIN_POSITIVE),
    };
    let constants = built.spec.constants(&built.problem.phi, theta, t_flags);
    let out =
        solve(&built.problem, &built.spec, &built.solver, &built.u0).map_err(|e| e.to_string())?;

    let rows: Vec<CurvePoint> = out
        .trace
        .rows
        .iter()
        .map(|r: &TraceRow| CurvePoint {
            k: r.k,
            residual: r.residual,
            dist: r.dist_to_solution,
            t: r.t,
            theta: r.theta,
        })
        .collect();
    let (plane, trajectory) = if built.problem.n() >= 2 {
        (
            "x1-x2",
            out.history.iter().map(|u| [u.x[0], u.x[1]]).collect(),
        )
    } else {
        (
            "x-y",
            out.history.iter().map(|u| [u.x[0], u.y[0]]).collect(),
        )
    };
    let response = RunResponse {
        preset: name.to_string(),
        status: status_name(out.state.status).to_string(),
        iterations: out.state.k,
        final_residual: out.state.residual,
        constants,
        rows,
        plane,
        trajectory,
        warnings: out.trace.warnings.clone(),
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

fn validate_params_impl(name: &str, overrides: &str) -> Result<String, String> {
    let req: RunRequest = if overrides.trim().is_empty() {
        RunRequest::default()
    } else {
        serde_json::from_str(overrides).map_err(|e| format!("override parse error: {e}"))?
    };
    let mut cfg = preset(name).map_err(|e| e.to_string())?;
    patch_config(&mut cfg, &req);
    let built = build(&cfg).map_err(|e| e.to_string())?;
    let theta = built.solver.theta_for_flags();
    let t = match built.solver.stepsize {
        StepsizeMode::Constant { t } => t,
        StepsizeMode::Projection => built
            .spec
            .constants(&built.problem.phi, theta, 1.0)
            .t_lower
            .max(f64::MIN_POSITIVE),
    };
    let constants = built.spec.constants(&built.problem.phi, theta, t);
    serde_json::to_string(&constants).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct RecoveryResponse {
    theta_pd: f64,
    max_deviation: f64,
    deviation: Vec<f64>,
    residual: Vec<f64>,
}

fn compare_recovery_impl(
    theta_pd: f64,
    tau: f64,
    sigma: f64,
    iters: usize,
) -> Result<String, String> {
    if !(0.0..=1.0).contains(&theta_pd) {
        return Err(format!("theta_pd must lie in [0, 1], got {theta_pd}"));
    }
    if !(tau > 0.0 && sigma > 0.0) {
        return Err("tau and sigma must be positive".into());
    }
    let iters = iters.clamp(1, 2000);
    let k =
        LinearMap::from_rows(vec![vec![0.6, -0.8], vec![0.8, 0.6]]).map_err(|e| e.to_string())?;
    let f = ProxFunction::l1(2, 0.5).map_err(|e| e.to_string())?;
    let g = ProxFunction::squared_l2(2, 1.0).map_err(|e| e.to_string())?;
    let phi = Coupling::bilinear(k.clone()).map_err(|e| e.to_string())?;
    let problem =
        ProblemInstance::new("recovery_demo", f, g, phi, None, true).map_err(|e| e.to_string())?;
    let spec = PreconditionerSpec::new(
        DiagonalMap::scaled_identity(2, 1.0 / tau).map_err(|e| e.to_string())?,
        DiagonalMap::scaled_identity(2, 1.0 / sigma).map_err(|e| e.to_string())?,
        k.scale(-(theta_pd + 1.0)),
    )
    .map_err(|e| e.to_string())?;
    let config = SolverConfig {
        algorithm: Algorithm::Relaxed,
        correction: Correction::GeneralizedPd { sigma, theta_pd },
        tol: 0.0,
        max_iter: iters,
        allow_unverified: true,
        ..Default::default()
    };
    let u0 = PrimalDualPoint::new(vec![1.0, -1.0], vec![0.5, 0.5]).map_err(|e| e.to_string())?;
    let out = solve(&problem, &spec, &config, &u0).map_err(|e| e.to_string())?;
    let steps = out.history.len() - 1;
    let reference = if (theta_pd - 1.0).abs() < 1e-15 {
        reference_pdhg(&k, &problem.f, &problem.g, tau, sigma, 1.0, &u0, steps)
    } else {
        reference_generalized_pd(&k, &problem.f, &problem.g, tau, sigma, theta_pd, &u0, steps)
    }
    .map_err(|e| e.to_string())?;
    let deviation: Vec<f64> = out
        .history
        .iter()
        .zip(&reference)
        .map(|(a, b)| {
            let d = a.sub(b).unwrap();
            d.x.iter()
                .chain(d.y.iter())
                .fold(0.0f64, |acc, v| acc.max(v.abs()))
        })
        .collect();
    let response = RecoveryResponse {
        theta_pd,
        max_deviation: deviation.iter().cloned().fold(0.0, f64::max),
        deviation,
        residual: out.trace.rows.iter().map(|r| r.residual).collect(),
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

/// JSON array of available preset names.
#[wasm_bindgen]
pub fn list_presets() -> String {
    serde_json::to_string(&preset_names()).unwrap()
}

/// Run a preset with interactive overrides
/// (`{"nu": 3.0, "theta": 1.0, "adaptive": false, ...}`); returns the
/// residual curve, the iterate trajectory, and the constants report.
#[wasm_bindgen]
pub fn run_preset(name: &str, overrides: &str) -> Result<String, JsValue> {
    run_preset_impl(name, overrides).map_err(|e| JsValue::from_str(&e))
}

/// Constants and assumption flags for a preset under parameter overrides,
/// without running the solver.
#[wasm_bindgen]
pub fn validate_params(name: &str, overrides: &str) -> Result<String, JsValue> {
    validate_params_impl(name, overrides).map_err(|e| JsValue::from_str(&e))
}

/// Race the relaxed algorithm against the literal primal-dual reference
/// iteration and report the per-iteration deviation.
#[wasm_bindgen]
pub fn compare_recovery(
    theta_pd: f64,
    tau: f64,
    sigma: f64,
    iters: usize,
) -> Result<String, JsValue> {
    compare_recovery_impl(theta_pd, tau, sigma, iters).map_err(|e| JsValue::from_str(&e))
}
