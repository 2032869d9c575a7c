//! Trace capture, the metric matrices of the contraction analysis,
//! certificate checks, rate fitting, and CSV/JSON export.

use crate::coupling::{Coupling, CouplingKind};
use crate::error::{Error, Result};
use crate::linalg::{LinearMap, PrimalDualPoint};
use crate::precond::{ConstantsReport, PreconditionerSpec};
use crate::problems::ProblemInstance;
use crate::solver::{make_halfspace, Algorithm, ExitStatus, SolverConfig, StepsizeMode};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Additive slack for the per-iteration certificate inequalities.
pub const CERT_SLACK: f64 = 1e-10;
/// Slack for the strict decrease of the H-seminorm column.
pub const H_DECAY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecondSummary {
    pub n1_min: f64,
    pub n1_max: f64,
    pub n2_min: f64,
    pub n2_max: f64,
    pub norm_q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceHeader {
    pub instance: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub m: usize,
    pub preconditioner: PrecondSummary,
    pub constants: ConstantsReport,
    pub config: SolverConfig,
}

impl TraceHeader {
    pub fn new(
        problem: &ProblemInstance,
        spec: &PreconditionerSpec,
        constants: &ConstantsReport,
        config: &SolverConfig,
    ) -> Self {
        Self {
            instance: problem.name.clone(),
            seed: None,
            n: problem.n(),
            m: problem.m(),
            preconditioner: PrecondSummary {
                n1_min: spec.n1().min_entry(),
                n1_max: spec.n1().max_entry(),
                n2_min: spec.n2().min_entry(),
                n2_max: spec.n2().max_entry(),
                norm_q: spec.norm_q(),
            },
            constants: constants.clone(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// Prediction gap ||u_k - r_k||, the stopping quantity.
    pub residual: f64,
    pub t: Option<f64>,
    pub theta: Option<f64>,
    /// psi evaluated at the iterate itself: <u - r, a> - margin.
    pub psi_self: Option<f64>,
    pub dist_to_solution: Option<f64>,
    /// ||N (u_k - r_k)||_H on linear instances in constant-stepsize runs.
    pub h_seminorm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub header: TraceHeader,
    pub rows: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

/// Explicit matrices of the analysis operators over the stacked
/// (n + m)-space: C is lower block-triangular, D = I - B C^{-1},
/// H = D / (theta t), N = theta t C, and the gap metric
/// G = M + M^T - N^T H N.
#[derive(Debug, Clone)]
pub struct MetricMatrices {
    pub m_mat: LinearMap,
    pub c_mat: LinearMap,
    pub d_mat: LinearMap,
    pub h_mat: LinearMap,
    pub n_mat: LinearMap,
    pub gmetric_mat: LinearMap,
    pub theta: f64,
    pub t: f64,
}

fn block2(tl: &LinearMap, tr: &LinearMap, bl: &LinearMap, br: &LinearMap) -> LinearMap {
    let n = tl.rows();
    let m = br.rows();
    let mut out = LinearMap::zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, tl.get(i, j));
        }
        for j in 0..m {
            out.set(i, n + j, tr.get(i, j));
        }
    }
    for i in 0..m {
        for j in 0..n {
            out.set(n + i, j, bl.get(i, j));
        }
        for j in 0..m {
            out.set(n + i, n + j, br.get(i, j));
        }
    }
    out
}

fn coupling_ab(phi: &Coupling) -> (f64, f64) {
    match *phi.kind() {
        CouplingKind::Bilinear => (0.0, 0.0),
        CouplingKind::Quadratic { a, b } => (a, b),
    }
}

/// Assemble the analysis matrices for a linear configuration (matrix
/// coupling gradients, diagonal N blocks, matrix Q). C is inverted through
/// its explicit triangular block inverse.
pub fn build_matrices(
    spec: &PreconditionerSpec,
    phi: &Coupling,
    theta: f64,
    t: f64,
) -> Result<MetricMatrices> {
    if !(theta > 0.0 && theta < 2.0 && t > 0.0) {
        return Err(Error::Config(format!(
            "metric matrices need theta in (0,2) and t > 0, got theta={theta}, t={t}"
        )));
    }
    let n = spec.n1().dim();
    let m = spec.n2().dim();
    if phi.n() != n || phi.m() != m {
        return Err(Error::DimensionMismatch {
            context: "build_matrices",
            expected: n + m,
            got: phi.n() + phi.m(),
        });
    }
    let (a, b) = coupling_ab(phi);
    let k = phi.k();
    let n1 = spec.n1().to_matrix();
    let n2 = spec.n2().to_matrix();
    let q = spec.q().clone();

    let b_mat = block2(
        &LinearMap::identity(n).scale(a),
        &k.transpose(),
        &k.scale(-1.0),
        &LinearMap::identity(m).scale(b),
    );
    let c_mat = block2(&n1, &LinearMap::zeros(n, m), &q, &n2);
    let m_mat = c_mat.sub(&b_mat)?;

    // triangular block inverse of C
    let n1_inv = {
        let mut inv = LinearMap::zeros(n, n);
        for (i, d) in spec.n1().diagonal().iter().enumerate() {
            inv.set(i, i, 1.0 / d);
        }
        inv
    };
    let n2_inv = {
        let mut inv = LinearMap::zeros(m, m);
        for (i, d) in spec.n2().diagonal().iter().enumerate() {
            inv.set(i, i, 1.0 / d);
        }
        inv
    };
    let bl = n2_inv.matmul(&q)?.matmul(&n1_inv)?.scale(-1.0);
    let c_inv = block2(&n1_inv, &LinearMap::zeros(n, m), &bl, &n2_inv);

    let d_mat = LinearMap::identity(n + m).sub(&b_mat.matmul(&c_inv)?)?;
    let h_mat = d_mat.scale(1.0 / (theta * t));
    let n_mat = c_mat.scale(theta * t);
    let gmetric_mat = m_mat
        .add(&m_mat.transpose())?
        .sub(&n_mat.transpose().matmul(&h_mat)?.matmul(&n_mat)?)?;

    Ok(MetricMatrices {
        m_mat,
        c_mat,
        d_mat,
        h_mat,
        n_mat,
        gmetric_mat,
        theta,
        t,
    })
}

impl MetricMatrices {
    /// ||v||^2 in the (possibly asymmetric) quadratic form of `mat`.
    pub fn norm2_in(mat: &LinearMap, v: &PrimalDualPoint) -> f64 {
        mat.quadratic_form(&v.stacked())
    }
}

pub fn symmetric_part(a: &LinearMap) -> LinearMap {
    a.add(&a.transpose()).expect("square matrix").scale(0.5)
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi rotation method,
/// sorted ascending.
pub fn symmetric_eigenvalues(a: &LinearMap) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            context: "symmetric_eigenvalues",
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    let mut w = a.clone();
    let scale: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| w.get(i, j).abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += w.get(i, j).abs();
            }
        }
        if off <= 1e-14 * scale * (n * n) as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let wkp = w.get(k, p);
                    let wkq = w.get(k, q);
                    w.set(k, p, c * wkp - s * wkq);
                    w.set(k, q, s * wkp + c * wkq);
                }
                for k in 0..n {
                    let wpk = w.get(p, k);
                    let wqk = w.get(q, k);
                    w.set(p, k, c * wpk - s * wqk);
                    w.set(q, k, s * wpk + c * wqk);
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| w.get(i, i)).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eigs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub status: CheckStatus,
    pub checked: usize,
    /// Largest amount by which the inequality under test was exceeded;
    /// nonpositive values mean it held everywhere.
    pub max_violation: f64,
    pub first_violation: Option<usize>,
    pub note: Option<String>,
}

impl CheckReport {
    fn skipped(note: impl Into<String>) -> Self {
        Self {
            status: CheckStatus::Skipped,
            checked: 0,
            max_violation: f64::NEG_INFINITY,
            first_violation: None,
            note: Some(note.into()),
        }
    }

    fn from_violations(checked: usize, max_violation: f64, first: Option<usize>) -> Self {
        Self {
            status: if first.is_none() {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            checked,
            max_violation,
            first_violation: first,
            note: None,
        }
    }
}

struct StepGeometry {
    psi_self: f64,
    psi_solution: Option<f64>,
    proj_disp2: f64,
}

fn step_geometry(
    problem: &ProblemInstance,
    spec: &PreconditionerSpec,
    l: f64,
    u: &PrimalDualPoint,
    z_star: Option<&PrimalDualPoint>,
) -> Result<StepGeometry> {
    let r = spec.warped_resolvent(&problem.f, &problem.g, &problem.phi, u)?;
    let hs = make_halfspace(u, &r, spec, l)?;
    let num = u.sub(&r)?.dot(&hs.normal)? - hs.margin;
    let na2 = hs.normal.dot(&hs.normal)?;
    let proj_disp2 = if num > 0.0 && na2 > 0.0 {
        num * num / na2
    } else {
        0.0
    };
    let psi_solution = match z_star {
        Some(z) => Some(hs.psi(z)?),
        None => None,
    };
    Ok(StepGeometry {
        psi_self: num,
        psi_solution,
        proj_disp2,
    })
}

/// Separation certificates along a run: psi at the iterate dominates
/// (mu - gamma - L/4) ||u - r||^2, and psi at the known solution stays
/// nonpositive. Both with `CERT_SLACK` additive slack.
pub fn check_separation(
    problem: &ProblemInstance,
    spec: &PreconditionerSpec,
    trace: &IterateTrace,
    history: &[PrimalDualPoint],
) -> Result<CheckReport> {
    let consts = &trace.header.constants;
    let bound = consts.mu - consts.gamma - consts.l / 4.0;
    let z = problem.known_solution.as_ref();
    let mut max_violation = f64::NEG_INFINITY;
    let mut first = None;
    let mut checked = 0;
    for (row, u) in trace.rows.iter().zip(history) {
        if row.t.is_none() && row.psi_self.is_none() && row.residual <= trace.header.config.tol {
            continue; // terminal converged record
        }
        let geo = step_geometry(problem, spec, consts.l, u, z)?;
        checked += 1;
        let lower_gap = bound * row.residual * row.residual - geo.psi_self - CERT_SLACK;
        let mut violation = lower_gap;
        if let Some(psi_z) = geo.psi_solution {
            violation = violation.max(psi_z - CERT_SLACK);
        }
        if violation > max_violation {
            max_violation = violation;
        }
        if violation > 0.0 && first.is_none() {
            first = Some(row.k);
        }
    }
    Ok(CheckReport::from_violations(checked, max_violation, first))
}

/// Stepsize bracket along a run: every recorded stepsize of an iteration
/// whose projection actually fired (psi_self > 0) and whose residual
/// exceeds the tolerance must lie in [t_lower, t_upper].
pub fn check_stepsize_bracket(trace: &IterateTrace) -> CheckReport {
    let consts = &trace.header.constants;
    let tol = trace.header.config.tol;
    let Some(t_upper) = consts.t_upper else {
        return CheckReport::skipped("stepsize bracket undefined (mu <= gamma)");
    };
    let mut max_violation = f64::NEG_INFINITY;
    let mut first = None;
    let mut checked = 0;
    for row in &trace.rows {
        let (Some(t), Some(psi)) = (row.t, row.psi_self) else {
            continue;
        };
        if row.residual <= tol || psi <= 0.0 {
            continue;
        }
        checked += 1;
        let violation = (consts.t_lower - t).max(t - t_upper) - CERT_SLACK;
        if violation > max_violation {
            max_violation = violation;
        }
        if violation > 0.0 && first.is_none() {
            first = Some(row.k);
        }
    }
    CheckReport::from_violations(checked, max_violation, first)
}

/// Distance to a known solution never grows by more than the projection
/// progress: ||u_{k+1} - z||^2 <= ||u_k - z||^2 - theta(2-theta)||Pi u - u||^2
/// up to `CERT_SLACK`.
pub fn check_fejer(
    problem: &ProblemInstance,
    spec: &PreconditionerSpec,
    trace: &IterateTrace,
    z_star: &PrimalDualPoint,
    history: &[PrimalDualPoint],
) -> Result<CheckReport> {
    let consts = &trace.header.constants;
    let mut max_violation = f64::NEG_INFINITY;
    let mut first = None;
    let mut checked = 0;
    for k in 0..history.len().saturating_sub(1) {
        let theta = trace.rows.get(k).and_then(|r| r.theta).unwrap_or(1.0);
        let geo = step_geometry(problem, spec, consts.l, &history[k], None)?;
        let d0 = history[k].dist(z_star)?;
        let d1 = history[k + 1].dist(z_star)?;
        checked += 1;
        let violation = d1 * d1 - (d0 * d0 - theta * (2.0 - theta) * geo.proj_disp2) - CERT_SLACK;
        if violation > max_violation {
            max_violation = violation;
        }
        if violation > 0.0 && first.is_none() {
            first = Some(k);
        }
    }
    Ok(CheckReport::from_violations(checked, max_violation, first))
}

#[derive(Debug, Clone, Serialize)]
pub struct HDecayReport {
    pub status: CheckStatus,
    pub note: Option<String>,
    /// sup_k (k+1) ||N(u_k - r_k)||_H^2, the sublinear-rate certificate.
    pub sup_weighted: f64,
    /// ||u_0 - u*||_H^2 divided by the sup above; positive when the decay
    /// certificate holds.
    pub c_fit: f64,
    pub first_violation: Option<usize>,
}

/// Strict decrease of the H-seminorm column plus the fitted sublinear-rate
/// constant. Skipped unless the trace was recorded with the metric
/// matrices available and the positive-definiteness flags hold.
pub fn check_h_seminorm_decay(
    trace: &IterateTrace,
    mats: Option<&MetricMatrices>,
    u0: &PrimalDualPoint,
    z_star: &PrimalDualPoint,
) -> Result<HDecayReport> {
    let consts = &trace.header.constants;
    if !consts.flag_g_pd {
        return Ok(HDecayReport {
            status: CheckStatus::Skipped,
            note: Some("flag_G_pd false".into()),
            sup_weighted: f64::NAN,
            c_fit: f64::NAN,
            first_violation: None,
        });
    }
    if !consts.flag_d_pd {
        return Ok(HDecayReport {
            status: CheckStatus::Skipped,
            note: Some("flag_D_pd false".into()),
            sup_weighted: f64::NAN,
            c_fit: f64::NAN,
            first_violation: None,
        });
    }
    let Some(mats) = mats else {
        return Ok(HDecayReport {
            status: CheckStatus::Skipped,
            note: Some("metric matrices unavailable".into()),
            sup_weighted: f64::NAN,
            c_fit: f64::NAN,
            first_violation: None,
        });
    };
    let h: Vec<(usize, f64)> = trace
        .rows
        .iter()
        .filter_map(|r| r.h_seminorm.map(|v| (r.k, v)))
        .collect();
    if h.len() < 2 {
        return Ok(HDecayReport {
            status: CheckStatus::Skipped,
            note: Some("h_seminorm column empty".into()),
            sup_weighted: f64::NAN,
            c_fit: f64::NAN,
            first_violation: None,
        });
    }
    let mut first = None;
    for w in h.windows(2) {
        let (_, prev) = w[0];
        let (k1, next) = w[1];
        if next * next > prev * prev + H_DECAY_SLACK && first.is_none() {
            first = Some(k1);
        }
    }
    let sup_weighted = h
        .iter()
        .map(|&(k, v)| (k + 1) as f64 * v * v)
        .fold(0.0, f64::max);
    let d0 = u0.sub(z_star)?;
    let initial = MetricMatrices::norm2_in(&mats.h_mat, &d0);
    let c_fit = if sup_weighted > 0.0 {
        initial / sup_weighted
    } else {
        f64::INFINITY
    };
    Ok(HDecayReport {
        status: if first.is_none() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        note: None,
        sup_weighted,
        c_fit,
        first_violation: first,
    })
}

/// Per-step contraction in the H-metric:
/// ||u_{k+1} - u*||_H^2 <= ||u_k - u*||_H^2 - ||u_k - r_k||_G^2 with
/// `CERT_SLACK`, evaluated with the assembled matrices.
pub fn check_contraction(
    problem: &ProblemInstance,
    spec: &PreconditionerSpec,
    mats: &MetricMatrices,
    history: &[PrimalDualPoint],
    z_star: &PrimalDualPoint,
) -> Result<CheckReport> {
    let mut max_violation = f64::NEG_INFINITY;
    let mut first = None;
    let mut checked = 0;
    for k in 0..history.len().saturating_sub(1) {
        let u = &history[k];
        let r = spec.warped_resolvent(&problem.f, &problem.g, &problem.phi, u)?;
        let w = u.sub(&r)?;
        let lhs = MetricMatrices::norm2_in(&mats.h_mat, &history[k + 1].sub(z_star)?);
        let rhs = MetricMatrices::norm2_in(&mats.h_mat, &u.sub(z_star)?)
            - MetricMatrices::norm2_in(&mats.gmetric_mat, &w);
        checked += 1;
        let violation = lhs - rhs - CERT_SLACK;
        if violation > max_violation {
            max_violation = violation;
        }
        if violation > 0.0 && first.is_none() {
            first = Some(k);
        }
    }
    Ok(CheckReport::from_violations(checked, max_violation, first))
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// Geometric mean of residual ratios over the last half, reported only
    /// for a genuinely geometric tail (factor < 1, log-linear R^2 above
    /// 0.95, and no drift of the factor across the window).
    pub linear_factor: Option<f64>,
    pub r_squared: f64,
    /// max_k (k+1) residual_k^2 over the whole trace.
    pub sublinear_const: f64,
}

/// Fit convergence rates from the residual column. Needs at least 20 rows.
pub fn fit_rate(trace: &IterateTrace) -> Result<RateFit> {
    let rows = &trace.rows;
    if rows.len() < 20 {
        return Err(Error::Config(format!(
            "rate fit needs at least 20 trace rows, got {}",
            rows.len()
        )));
    }
    let sublinear_const = rows
        .iter()
        .map(|r| (r.k + 1) as f64 * r.residual * r.residual)
        .fold(0.0, f64::max);

    let start = rows.len() - rows.len().div_ceil(2);
    let window: Vec<f64> = rows[start..]
        .iter()
        .map(|r| r.residual)
        .take_while(|&v| v > 0.0)
        .collect();
    if window.len() < 4 {
        return Ok(RateFit {
            linear_factor: None,
            r_squared: f64::NAN,
            sublinear_const,
        });
    }
    let logs: Vec<f64> = window.iter().map(|v| v.ln()).collect();
    let n = logs.len() as f64;
    let kbar = (logs.len() - 1) as f64 / 2.0;
    let ybar = logs.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (i, y) in logs.iter().enumerate() {
        let dx = i as f64 - kbar;
        let dy = y - ybar;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    let ratios: Vec<f64> = logs.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_log = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let factor = mean_log.exp();

    // a genuine geometric tail keeps the same factor on both halves of the
    // window; harmonic-type decay drifts toward 1 and is rejected here
    let half = ratios.len() / 2;
    let m1 = ratios[..half].iter().sum::<f64>() / half.max(1) as f64;
    let m2 = ratios[half..].iter().sum::<f64>() / (ratios.len() - half).max(1) as f64;
    let stationary = (m2 - m1).abs() <= 0.1 * mean_log.abs();

    let linear_factor = if factor < 1.0 && r_squared > 0.95 && stationary {
        Some(factor)
    } else {
        None
    };
    Ok(RateFit {
        linear_factor,
        r_squared,
        sublinear_const,
    })
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.16e}"),
        None => String::new(),
    }
}

/// Write the trace as CSV: '#'-prefixed lines carry the JSON header, then
/// one row per iteration with 17-significant-digit cells.
pub fn export_trace(trace: &IterateTrace, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header = serde_json::to_string(&trace.header)
        .map_err(|e| Error::Config(format!("header serialization failed: {e}")))?;
    out.push_str("# ");
    out.push_str(&header);
    out.push('\n');
    for w in &trace.warnings {
        out.push_str("# warning: ");
        out.push_str(w);
        out.push('\n');
    }
    out.push_str("k,residual,t,theta,psi_self,dist_to_solution,h_seminorm\n");
    for row in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.k,
            fmt_cell(Some(row.residual)),
            fmt_cell(row.t),
            fmt_cell(row.theta),
            fmt_cell(row.psi_self),
            fmt_cell(row.dist_to_solution),
            fmt_cell(row.h_seminorm),
        ));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(out.as_bytes()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificates {
    pub fejer: String,
    pub separation: String,
    pub stepsize_bracket: String,
    pub h_decay: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: ExitStatus,
    pub final_residual: f64,
    pub iterations: usize,
    pub linear_factor: Option<f64>,
    pub sublinear_const: Option<f64>,
    pub certificates: Certificates,
}

fn describe(report: &CheckReport) -> String {
    match report.status {
        CheckStatus::Pass => format!("pass ({} iterations checked)", report.checked),
        CheckStatus::Fail => format!(
            "fail (first violation at iteration {}, size {:.3e})",
            report.first_violation.unwrap_or(0),
            report.max_violation
        ),
        CheckStatus::Skipped => format!("skipped ({})", report.note.clone().unwrap_or_default()),
    }
}

/// Post-run certification bundle feeding the summary JSON.
pub fn summarize(
    problem: &ProblemInstance,
    spec: &PreconditionerSpec,
    output: &crate::solver::SolveOutput,
    reference_deviation: Option<f64>,
) -> RunSummary {
    let trace = &output.trace;
    let projected = trace.header.config.algorithm == Algorithm::Projected;
    let has_rows = trace
        .rows
        .iter()
        .any(|r| r.t.is_some() || r.psi_self.is_some());

    let separation = if !projected {
        "skipped (relaxed algorithm has no halfspace)".to_string()
    } else if !has_rows {
        "skipped (no projection iterations)".to_string()
    } else {
        match check_separation(problem, spec, trace, &output.history) {
            Ok(rep) => describe(&rep),
            Err(e) => format!("error ({e})"),
        }
    };

    let fejer = match (&problem.known_solution, projected && has_rows) {
        (Some(z), true) => match check_fejer(problem, spec, trace, z, &output.history) {
            Ok(rep) => describe(&rep),
            Err(e) => format!("error ({e})"),
        },
        (None, _) => "skipped (no known solution)".to_string(),
        _ => "skipped (no projection iterations)".to_string(),
    };

    let bracket = if projected && has_rows {
        describe(&check_stepsize_bracket(trace))
    } else {
        "skipped (no projection iterations)".to_string()
    };

    let h_decay = {
        let mats = match trace.header.config.stepsize {
            StepsizeMode::Constant { t } => {
                build_matrices(spec, &problem.phi, trace.header.config.theta_for_flags(), t).ok()
            }
            StepsizeMode::Projection => None,
        };
        match (&problem.known_solution, mats) {
            (Some(z), Some(mats)) => {
                match check_h_seminorm_decay(trace, Some(&mats), &output.history[0], z) {
                    Ok(rep) => match rep.status {
                        CheckStatus::Pass => format!(
                            "pass (sup (k+1)h^2 = {:.3e}, c_fit = {:.3e})",
                            rep.sup_weighted, rep.c_fit
                        ),
                        CheckStatus::Fail => format!(
                            "fail (first increase at iteration {})",
                            rep.first_violation.unwrap_or(0)
                        ),
                        CheckStatus::Skipped => {
                            format!("skipped ({})", rep.note.unwrap_or_default())
                        }
                    },
                    Err(e) => format!("error ({e})"),
                }
            }
            (None, _) => "skipped (no known solution)".to_string(),
            _ => "skipped (projection-stepsize run)".to_string(),
        }
    };

    let rate = fit_rate(trace).ok();
    RunSummary {
        status: output.state.status,
        final_residual: output.state.residual,
        iterations: output.state.k,
        linear_factor: rate.as_ref().and_then(|r| r.linear_factor),
        sublinear_const: rate.as_ref().map(|r| r.sublinear_const),
        certificates: Certificates {
            fejer,
            separation,
            stepsize_bracket: bracket,
            h_decay,
            reference_deviation,
        },
    }
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Config(format!("summary serialization failed: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DiagonalMap;
    use crate::problems::make_quadratic_saddle;
    use crate::solver::{solve, SolverConfig, ThetaMode};

    fn spec_nu(n: usize, m: usize, nu: f64) -> PreconditionerSpec {
        PreconditionerSpec::scaled_identity(n, m, 1.0 / nu, 1.0 / nu).unwrap()
    }

    #[test]
    fn build_matrices_hand_example() {
        // N1 = N2 = 2I, Q = 0, K = [[1]]: D = [[1, -0.5], [0.5, 1]]
        let spec = spec_nu(1, 1, 2.0);
        let phi = Coupling::bilinear(LinearMap::from_rows(vec![vec![1.0]]).unwrap()).unwrap();
        let mats = build_matrices(&spec, &phi, 1.0, 0.5).unwrap();
        assert!((mats.d_mat.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((mats.d_mat.get(0, 1) + 0.5).abs() < 1e-15);
        assert!((mats.d_mat.get(1, 0) - 0.5).abs() < 1e-15);
        assert!((mats.d_mat.get(1, 1) - 1.0).abs() < 1e-15);
        // M = C - B hand check
        assert!((mats.m_mat.get(0, 0) - 2.0).abs() < 1e-15);
        assert!((mats.m_mat.get(0, 1) + 1.0).abs() < 1e-15);
        assert!((mats.m_mat.get(1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn build_matrices_zero_coupling() {
        // zero coupling, N1 = N2 = I: D = I, H = I/(theta t), G = 2I - theta t I
        let spec = spec_nu(1, 1, 1.0);
        let phi = Coupling::bilinear(LinearMap::zeros(1, 1)).unwrap();
        let theta = 0.8;
        let t = 0.6;
        let mats = build_matrices(&spec, &phi, theta, t).unwrap();
        for i in 0..2 {
            assert!((mats.d_mat.get(i, i) - 1.0).abs() < 1e-15);
            assert!((mats.h_mat.get(i, i) - 1.0 / (theta * t)).abs() < 1e-15);
            assert!((mats.gmetric_mat.get(i, i) - (2.0 - theta * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_identity_ctdc_equals_ctm() {
        let spec = PreconditionerSpec::new(
            DiagonalMap::from_diagonal(vec![3.0, 2.5]).unwrap(),
            DiagonalMap::from_diagonal(vec![2.0]).unwrap(),
            LinearMap::from_rows(vec![vec![0.3, -0.1]]).unwrap(),
        )
        .unwrap();
        let phi = Coupling::bilinear(LinearMap::from_rows(vec![vec![0.4, 0.2]]).unwrap()).unwrap();
        let mats = build_matrices(&spec, &phi, 0.7, 0.3).unwrap();
        let ct = mats.c_mat.transpose();
        let lhs = ct.matmul(&mats.d_mat).unwrap().matmul(&mats.c_mat).unwrap();
        let rhs = ct.matmul(&mats.m_mat).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((lhs.get(i, j) - rhs.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobi_eigenvalues_known_matrix() {
        let a = LinearMap::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eigs = symmetric_eigenvalues(&a).unwrap();
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
        assert_eq!(
            symmetric_eigenvalues(&LinearMap::zeros(3, 3)).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn positive_definiteness_matches_flag_bounds() {
        // smallest eigenvalues of the symmetric parts dominate the analytic
        // lower bounds whenever the flags hold, across sampled configurations
        let k = LinearMap::from_rows(vec![vec![0.6, -0.8], vec![0.8, 0.6]]).unwrap();
        let phi = Coupling::quadratic(k, 0.0, 0.0).unwrap();
        let mut verified = 0;
        for nu in [2.9, 3.0, 3.5, 4.0] {
            for theta in [0.3, 0.5, 0.8] {
                let spec = spec_nu(2, 2, nu);
                let t = spec.constants(&phi, theta, 1.0).t_lower;
                let consts = spec.constants(&phi, theta, t);
                if !(consts.flag_d_pd && consts.flag_g_pd) {
                    continue;
                }
                let mats = build_matrices(&spec, &phi, theta, t).unwrap();
                let d_min = symmetric_eigenvalues(&symmetric_part(&mats.d_mat)).unwrap()[0];
                let g_min = symmetric_eigenvalues(&symmetric_part(&mats.gmetric_mat)).unwrap()[0];
                assert!(d_min >= 1.0 - consts.l / (consts.mu - consts.gamma) - 1e-10);
                assert!(
                    g_min >= 2.0 * consts.mu - theta * t * (consts.l + consts.q) * consts.q - 1e-10
                );
                assert!(d_min > 0.0 && g_min > 0.0, "nu={nu} theta={theta}");
                verified += 1;
            }
        }
        assert!(
            verified >= 6,
            "only {verified} configurations had both flags"
        );
    }

    #[test]
    fn fit_rate_geometric() {
        let header = dummy_header();
        let rows: Vec<TraceRow> = (0..40)
            .map(|k| TraceRow {
                k,
                residual: 0.5f64.powi(k as i32),
                t: None,
                theta: None,
                psi_self: None,
                dist_to_solution: None,
                h_seminorm: None,
            })
            .collect();
        let trace = IterateTrace {
            header,
            rows,
            warnings: vec![],
        };
        let fit = fit_rate(&trace).unwrap();
        assert!((fit.linear_factor.unwrap() - 0.5).abs() < 1e-12);
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn fit_rate_harmonic_reports_no_linear_factor() {
        let header = dummy_header();
        let rows: Vec<TraceRow> = (0..40)
            .map(|k| TraceRow {
                k,
                residual: 1.0 / (k as f64 + 1.0),
                t: None,
                theta: None,
                psi_self: None,
                dist_to_solution: None,
                h_seminorm: None,
            })
            .collect();
        let trace = IterateTrace {
            header,
            rows,
            warnings: vec![],
        };
        let fit = fit_rate(&trace).unwrap();
        assert!(fit.linear_factor.is_none());
        assert!((fit.sublinear_const - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_needs_enough_rows() {
        let header = dummy_header();
        let rows: Vec<TraceRow> = (0..10)
            .map(|k| TraceRow {
                k,
                residual: 1.0,
                t: None,
                theta: None,
                psi_self: None,
                dist_to_solution: None,
                h_seminorm: None,
            })
            .collect();
        let trace = IterateTrace {
            header,
            rows,
            warnings: vec![],
        };
        assert!(fit_rate(&trace).is_err());
    }

    fn dummy_header() -> TraceHeader {
        let k = LinearMap::from_rows(vec![vec![1.0]]).unwrap();
        let problem = make_quadratic_saddle(k, 0.0, 0.0, 1.0, 1.0).unwrap();
        let spec = spec_nu(1, 1, 2.0);
        let consts = spec.constants(&problem.phi, 1.0, 1.0);
        TraceHeader::new(&problem, &spec, &consts, &SolverConfig::default())
    }

    #[test]
    fn fejer_negative_control_detects_corruption() {
        let k = LinearMap::from_rows(vec![vec![1.0]]).unwrap();
        let problem = make_quadratic_saddle(k, 0.0, 0.0, 1.0, 1.0).unwrap();
        let spec = spec_nu(1, 1, 2.0);
        let config = SolverConfig {
            tol: 1e-10,
            max_iter: 40,
            ..Default::default()
        };
        let u0 = PrimalDualPoint::new(vec![1.0], vec![1.0]).unwrap();
        let out = solve(&problem, &spec, &config, &u0).unwrap();
        let z = problem.known_solution.as_ref().unwrap();

        let clean = check_fejer(&problem, &spec, &out.trace, z, &out.history).unwrap();
        assert_eq!(clean.status, CheckStatus::Pass);

        // move one iterate away from the solution
        let mut corrupted = out.history.clone();
        let idx = 5;
        corrupted[idx] = corrupted[idx]
            .add_scaled(10.0, &PrimalDualPoint::new(vec![1.0], vec![0.0]).unwrap())
            .unwrap();
        let bad = check_fejer(&problem, &spec, &out.trace, z, &corrupted).unwrap();
        assert_eq!(bad.status, CheckStatus::Fail);
        assert_eq!(bad.first_violation, Some(idx - 1));
    }

    #[test]
    fn fejer_constant_trace_from_solution() {
        let k = LinearMap::from_rows(vec![vec![1.0]]).unwrap();
        let problem = make_quadratic_saddle(k, 0.0, 0.0, 1.0, 1.0).unwrap();
        let spec = spec_nu(1, 1, 2.0);
        let config = SolverConfig {
            tol: 1e-12,
            max_iter: 10,
            ..Default::default()
        };
        let out = solve(&problem, &spec, &config, &PrimalDualPoint::zeros(1, 1)).unwrap();
        let z = problem.known_solution.as_ref().unwrap();
        let rep = check_fejer(&problem, &spec, &out.trace, z, &out.history).unwrap();
        assert_eq!(rep.status, CheckStatus::Pass);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn h_decay_gating_on_flags() {
        // theta t too large: flag_G_pd false, check reports skipped
        let k = LinearMap::from_rows(vec![vec![0.6, -0.8], vec![0.8, 0.6]]).unwrap();
        let problem = make_quadratic_saddle(k, 0.0, 0.0, 1.0, 1.0).unwrap();
        let spec = spec_nu(2, 2, 3.0);
        let config = SolverConfig {
            stepsize: StepsizeMode::Constant { t: 2.0 },
            theta: ThetaMode::Constant { value: 1.9 },
            tol: 0.0,
            max_iter: 5,
            ..Default::default()
        };
        let u0 = PrimalDualPoint::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let out = solve(&problem, &spec, &config, &u0).unwrap();
        let z = problem.known_solution.as_ref().unwrap();
        let rep = check_h_seminorm_decay(&out.trace, None, &out.history[0], z).unwrap();
        assert_eq!(rep.status, CheckStatus::Skipped);
        assert_eq!(rep.note.as_deref(), Some("flag_G_pd false"));
    }

    #[test]
    fn export_round_trips_formatted_fields() {
        let k = LinearMap::from_rows(vec![vec![1.0]]).unwrap();
        let problem = make_quadratic_saddle(k, 0.0, 0.0, 1.0, 1.0).unwrap();
        let spec = spec_nu(1, 1, 2.0);
        let config = SolverConfig {
            tol: 1e-10,
            max_iter: 100,
            ..Default::default()
        };
        let u0 = PrimalDualPoint::new(vec![1.0], vec![1.0]).unwrap();
        let out = solve(&problem, &spec, &config, &u0).unwrap();

        let dir = std::env::temp_dir().join("ppdp_trace_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trace.csv");
        export_trace(&out.trace, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();

        let mut lines = body.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "k,residual,t,theta,psi_self,dist_to_solution,h_seminorm"
        );
        let mut count = 0;
        for (line, row) in lines.zip(&out.trace.rows) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 7);
            assert_eq!(cells[0].parse::<usize>().unwrap(), row.k);
            assert_eq!(cells[1].parse::<f64>().unwrap(), row.residual);
            match row.t {
                Some(t) => assert_eq!(cells[2].parse::<f64>().unwrap(), t),
                None => assert!(cells[2].is_empty()),
            }
            match row.psi_self {
                Some(p) => assert_eq!(cells[4].parse::<f64>().unwrap(), p),
                None => assert!(cells[4].is_empty()),
            }
            count += 1;
        }
        assert_eq!(count, out.trace.rows.len());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn export_minimal_run_has_header_and_one_row() {
        let k = LinearMap::from_rows(vec![vec![1.0]]).unwrap();
        let problem = make_quadratic_saddle(k, 0.0, 0.0, 1.0, 1.0).unwrap();
        let spec = spec_nu(1, 1, 2.0);
        let config = SolverConfig {
            tol: 0.0,
            max_iter: 0,
            ..Default::default()
        };
        let u0 = PrimalDualPoint::new(vec![1.0], vec![1.0]).unwrap();
        let out = solve(&problem, &spec, &config, &u0).unwrap();
        let dir = std::env::temp_dir().join("ppdp_trace_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.csv");
        export_trace(&out.trace, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let data_lines: Vec<&str> = body
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with('k'))
            .collect();
        assert_eq!(data_lines.len(), 1);
        assert!(body.lines().next().unwrap().starts_with("# {"));
        std::fs::remove_file(&path).ok();
    }
}
