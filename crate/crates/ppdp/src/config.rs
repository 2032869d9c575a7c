//! JSON run configuration: problem catalog selection, preconditioner
//! blocks, solver options, output paths, and the built-in presets.

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::linalg::{DiagonalMap, LinearMap, PrimalDualPoint};
use crate::precond::PreconditionerSpec;
use crate::problems::{make_l1_bilinear, make_matrix_game, make_quadratic_saddle, ProblemInstance};
use crate::solver::{Algorithm, Correction, SolverConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub problem: ProblemConfig,
    pub preconditioner: PrecondConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Compare the run against a literal reference iteration and record the
    /// maximum componentwise deviation in the summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_check: Option<ReferenceKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Pdhg,
    GeneralizedPd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(flatten)]
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_y: Option<Vec<f64>>,
    /// Optional sharper Lipschitz constant for the coupling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tight_l: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemKind {
    MatrixGame {
        payoff: Vec<Vec<f64>>,
    },
    QuadraticSaddle {
        k: Vec<Vec<f64>>,
        a: f64,
        b: f64,
        fw: f64,
        gw: f64,
    },
    L1Bilinear {
        k: Vec<Vec<f64>>,
        b: Vec<f64>,
        lam: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecondConfig {
    pub n1: DiagonalConfig,
    pub n2: DiagonalConfig,
    #[serde(default)]
    pub q: QConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiagonalConfig {
    /// N = (1/tau) I.
    ScaledIdentity {
        tau: f64,
    },
    Diagonal {
        d: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QConfig {
    Matrix {
        entries: Vec<Vec<f64>>,
    },
    /// Q = factor * K.
    ScaledCoupling {
        factor: f64,
    },
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig::ScaledCoupling { factor: 0.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_path: Option<String>,
}

/// Everything `run` needs, built and cross-validated from a `RunConfig`.
pub struct BuiltRun {
    pub problem: ProblemInstance,
    pub spec: PreconditionerSpec,
    pub solver: SolverConfig,
    pub u0: PrimalDualPoint,
    pub output: OutputConfig,
    pub reference_check: Option<ReferenceKind>,
    pub seed: Option<u64>,
}

fn build_diagonal(cfg: &DiagonalConfig, dim: usize, which: &str) -> Result<DiagonalMap> {
    match cfg {
        DiagonalConfig::ScaledIdentity { tau } => {
            if !(tau.is_finite() && *tau > 0.0) {
                return Err(Error::Config(format!(
                    "{which}.tau must be positive, got {tau}"
                )));
            }
            DiagonalMap::scaled_identity(dim, 1.0 / tau)
        }
        DiagonalConfig::Diagonal { d } => {
            if d.len() != dim {
                return Err(Error::Config(format!(
                    "{which}.d has length {}, problem needs {dim}",
                    d.len()
                )));
            }
            DiagonalMap::from_diagonal(d.clone())
        }
    }
}

pub fn build(config: &RunConfig) -> Result<BuiltRun> {
    if config.schema != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema version {}, expected {SCHEMA_VERSION}",
            config.schema
        )));
    }
    let mut problem = match &config.problem.kind {
        ProblemKind::MatrixGame { payoff } => {
            make_matrix_game(LinearMap::from_rows(payoff.clone())?)?
        }
        ProblemKind::QuadraticSaddle { k, a, b, fw, gw } => {
            make_quadratic_saddle(LinearMap::from_rows(k.clone())?, *a, *b, *fw, *gw)?
        }
        ProblemKind::L1Bilinear { k, b, lam } => {
            make_l1_bilinear(LinearMap::from_rows(k.clone())?, b.clone(), *lam)?
        }
    };
    if let Some(l) = config.problem.tight_l {
        problem.phi = match problem.phi.kind().clone() {
            crate::coupling::CouplingKind::Bilinear => {
                Coupling::bilinear(problem.phi.k().clone())?.with_tight_l(l)?
            }
            crate::coupling::CouplingKind::Quadratic { a, b } => {
                Coupling::quadratic(problem.phi.k().clone(), a, b)?.with_tight_l(l)?
            }
        };
    }
    let n = problem.n();
    let m = problem.m();
    let n1 = build_diagonal(&config.preconditioner.n1, n, "preconditioner.n1")?;
    let n2 = build_diagonal(&config.preconditioner.n2, m, "preconditioner.n2")?;
    let q = match &config.preconditioner.q {
        QConfig::Matrix { entries } => {
            let q = LinearMap::from_rows(entries.clone())?;
            if q.rows() != m || q.cols() != n {
                return Err(Error::Config(format!(
                    "preconditioner.q must be {m}x{n}, got {}x{}",
                    q.rows(),
                    q.cols()
                )));
            }
            q
        }
        QConfig::ScaledCoupling { factor } => problem.phi.k().scale(*factor),
    };
    let spec = PreconditionerSpec::new(n1, n2, q)?;
    config.solver.validate()?;

    let u0 = match (&config.problem.start_x, &config.problem.start_y) {
        (Some(x), Some(y)) => PrimalDualPoint::new(x.clone(), y.clone())?,
        (None, None) => PrimalDualPoint::zeros(n, m),
        _ => {
            return Err(Error::Config(
                "start_x and start_y must be given together".into(),
            ))
        }
    };
    if u0.x.len() != n || u0.y.len() != m {
        return Err(Error::Config(format!(
            "start point has dimensions ({}, {}), problem needs ({n}, {m})",
            u0.x.len(),
            u0.y.len()
        )));
    }

    Ok(BuiltRun {
        problem,
        spec,
        solver: config.solver.clone(),
        u0,
        output: config.output.clone(),
        reference_check: config.reference_check,
        seed: config.problem.seed,
    })
}

pub fn parse(json: &str) -> Result<RunConfig> {
    serde_json::from_str(json).map_err(|e| Error::Config(format!("config parse error: {e}")))
}

fn rot2() -> Vec<Vec<f64>> {
    vec![vec![0.6, -0.8], vec![0.8, 0.6]]
}

fn strict_saddle_payoff() -> Vec<Vec<f64>> {
    vec![
        vec![-2.0, 1.0, -1.0, 2.0, 0.0],
        vec![1.0, -1.0, -1.5, 0.5, 2.0],
        vec![1.0, 2.0, 0.0, 1.5, 1.0],
        vec![-1.0, 0.0, -1.0, -2.0, 1.0],
        vec![0.0, -2.0, -2.0, 1.0, -1.0],
    ]
}

fn preset_output(name: &str) -> OutputConfig {
    OutputConfig {
        trace_path: Some(format!("{name}_trace.csv")),
        summary_path: Some(format!("{name}_summary.json")),
    }
}

/// The built-in presets, in a fixed order.
pub fn preset_names() -> Vec<&'static str> {
    vec![
        "quadratic_monotone",
        "quadratic_strong",
        "quadratic_weak",
        "matrix_game_5x5",
        "lasso_small",
        "pdhg_recovery",
        "generalized_pd_recovery",
    ]
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let config = match name {
        "quadratic_monotone" => RunConfig {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig {
                kind: ProblemKind::QuadraticSaddle {
                    k: rot2(),
                    a: 0.0,
                    b: 0.0,
                    fw: 1.0,
                    gw: 1.0,
                },
                seed: None,
                start_x: Some(vec![1.0, -0.5]),
                start_y: Some(vec![0.5, 1.0]),
                tight_l: None,
            },
            preconditioner: PrecondConfig {
                n1: DiagonalConfig::Diagonal { d: vec![3.0, 3.0] },
                n2: DiagonalConfig::Diagonal { d: vec![3.0, 3.0] },
                q: QConfig::default(),
            },
            solver: SolverConfig {
                tol: 1e-9,
                max_iter: 2000,
                ..Default::default()
            },
            output: preset_output(name),
            reference_check: None,
        },
        "quadratic_strong" => RunConfig {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig {
                kind: ProblemKind::QuadraticSaddle {
                    k: rot2(),
                    a: 1.0,
                    b: 1.0,
                    fw: 1.0,
                    gw: 1.0,
                },
                seed: None,
                start_x: Some(vec![1.0, -0.5]),
                start_y: Some(vec![0.5, 1.0]),
                tight_l: None,
            },
            preconditioner: PrecondConfig {
                n1: DiagonalConfig::ScaledIdentity { tau: 0.25 },
                n2: DiagonalConfig::ScaledIdentity { tau: 0.25 },
                q: QConfig::default(),
            },
            solver: SolverConfig {
                tol: 1e-12,
                max_iter: 500,
                ..Default::default()
            },
            output: preset_output(name),
            reference_check: None,
        },
        "quadratic_weak" => RunConfig {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig {
                kind: ProblemKind::QuadraticSaddle {
                    k: vec![vec![1.0]],
                    a: -0.2,
                    b: -0.1,
                    fw: 1.0,
                    gw: 1.0,
                },
                seed: None,
                start_x: Some(vec![1.0]),
                start_y: Some(vec![1.0]),
                tight_l: None,
            },
            preconditioner: PrecondConfig {
                n1: DiagonalConfig::Diagonal { d: vec![3.0] },
                n2: DiagonalConfig::Diagonal { d: vec![3.0] },
                q: QConfig::default(),
            },
            solver: SolverConfig {
                tol: 1e-8,
                max_iter: 5000,
                ..Default::default()
            },
            output: preset_output(name),
            reference_check: None,
        },
        "matrix_game_5x5" => RunConfig {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig {
                kind: ProblemKind::MatrixGame {
                    payoff: strict_saddle_payoff(),
                },
                seed: None,
                start_x: Some(vec![0.2; 5]),
                start_y: Some(vec![0.2; 5]),
                tight_l: None,
            },
            preconditioner: PrecondConfig {
                n1: DiagonalConfig::Diagonal { d: vec![7.5; 5] },
                n2: DiagonalConfig::Diagonal { d: vec![7.5; 5] },
                q: QConfig::default(),
            },
            solver: SolverConfig {
                tol: 1e-6,
                max_iter: 2000,
                ..Default::default()
            },
            output: preset_output(name),
            reference_check: None,
        },
        "lasso_small" => RunConfig {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig {
                kind: ProblemKind::L1Bilinear {
                    k: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                    b: vec![0.5, 0.3],
                    lam: 1.0,
                },
                seed: None,
                start_x: Some(vec![0.8, -0.8]),
                start_y: Some(vec![0.2, 0.1]),
                tight_l: None,
            },
            preconditioner: PrecondConfig {
                n1: DiagonalConfig::ScaledIdentity { tau: 0.5 },
                n2: DiagonalConfig::ScaledIdentity { tau: 0.5 },
                q: QConfig::default(),
            },
            solver: SolverConfig {
                tol: 1e-9,
                max_iter: 2000,
                ..Default::default()
            },
            output: preset_output(name),
            reference_check: None,
        },
        "pdhg_recovery" => RunConfig {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig {
                kind: ProblemKind::L1Bilinear {
                    k: rot2(),
                    b: vec![0.0, 0.0],
                    lam: 0.5,
                },
                seed: None,
                start_x: Some(vec![1.0, -1.0]),
                start_y: Some(vec![0.5, 0.5]),
                tight_l: None,
            },
            preconditioner: PrecondConfig {
                n1: DiagonalConfig::ScaledIdentity { tau: 0.4 },
                n2: DiagonalConfig::ScaledIdentity { tau: 0.4 },
                q: QConfig::ScaledCoupling { factor: -2.0 },
            },
            solver: SolverConfig {
                algorithm: Algorithm::Relaxed,
                correction: Correction::Identity,
                tol: 1e-12,
                max_iter: 100,
                ..Default::default()
            },
            output: preset_output(name),
            reference_check: Some(ReferenceKind::Pdhg),
        },
        "generalized_pd_recovery" => RunConfig {
            schema: SCHEMA_VERSION,
            problem: ProblemConfig {
                kind: ProblemKind::L1Bilinear {
                    k: rot2(),
                    b: vec![0.0, 0.0],
                    lam: 0.5,
                },
                seed: None,
                start_x: Some(vec![1.0, -1.0]),
                start_y: Some(vec![0.5, 0.5]),
                tight_l: None,
            },
            preconditioner: PrecondConfig {
                n1: DiagonalConfig::ScaledIdentity { tau: 0.4 },
                n2: DiagonalConfig::ScaledIdentity { tau: 0.4 },
                q: QConfig::ScaledCoupling { factor: -1.5 },
            },
            solver: SolverConfig {
                algorithm: Algorithm::Relaxed,
                correction: Correction::GeneralizedPd {
                    sigma: 0.4,
                    theta_pd: 0.5,
                },
                tol: 1e-12,
                max_iter: 100,
                ..Default::default()
            },
            output: preset_output(name),
            reference_check: Some(ReferenceKind::GeneralizedPd),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; available: {}",
                preset_names().join(", ")
            )))
        }
    };
    Ok(config)
}

/// Override a dotted path in the raw JSON config with a JSON (or bare
/// string) value, e.g. `solver.tol=1e-6`.
pub fn apply_override(value: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override '{assignment}' is not of the form key=value"
        ))
    })?;
    let parsed: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match cursor {
                serde_json::Value::Object(map) => {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                _ => {
                    return Err(Error::Config(format!(
                        "override path '{path}' does not address an object field"
                    )))
                }
            }
        }
        cursor = cursor
            .as_object_mut()
            .and_then(|m| m.get_mut(*part))
            .ok_or_else(|| Error::Config(format!("override path '{path}' not found")))?;
    }
    unreachable!("split always yields at least one part")
}
