//! The projected and relaxed preconditioned primal-dual iterations.
//!
//! One projected cycle: predict r = (M + P)^{-1} M u, build the separating
//! halfspace from C = M + B, then relax-project u onto it. The relaxed
//! variant replaces the projection by a fixed correction operator applied
//! to u - r.

use crate::coupling::Coupling;
use crate::diagnostics::{IterateTrace, MetricMatrices, TraceHeader, TraceRow};
use crate::error::{Error, Result};
use crate::linalg::PrimalDualPoint;
use crate::precond::{ConstantsReport, PreconditionerSpec};
use crate::problems::ProblemInstance;
use serde::{Deserialize, Serialize};

/// Largest stacked dimension for which metric matrices are assembled and the
/// per-iteration H-seminorm column is filled.
const METRIC_DIM_CAP: usize = 200;

/// Separating halfspace {z : <z - anchor, normal> <= margin}.
#[derive(Debug, Clone)]
pub struct Halfspace {
    /// Normal direction a = C(u) - C(r).
    pub normal: PrimalDualPoint,
    /// Anchor r, the current prediction.
    pub anchor: PrimalDualPoint,
    /// Margin (L/4) ||u - r||^2; always nonnegative when built by
    /// `make_halfspace`.
    pub margin: f64,
}

impl Halfspace {
    /// The separating function psi(z) = <z - anchor, normal> - margin;
    /// nonpositive exactly on the halfspace.
    pub fn psi(&self, z: &PrimalDualPoint) -> Result<f64> {
        Ok(z.sub(&self.anchor)?.dot(&self.normal)? - self.margin)
    }

    pub fn contains(&self, z: &PrimalDualPoint) -> Result<bool> {
        Ok(self.psi(z)? <= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Halfspace projection with relaxation (the projected variant).
    Projected,
    /// Fixed correction operator applied to u - r (the relaxed variant).
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThetaMode {
    Constant {
        value: f64,
    },
    /// Per-iteration optimal relaxation, clipped to
    /// [eps_theta, 2 - eps_theta].
    Adaptive {
        eps_theta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepsizeMode {
    /// Exact projection stepsize from the halfspace geometry.
    Projection,
    /// Fixed stepsize; the regime of the contraction and O(1/n)
    /// certificates.
    Constant { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Correction {
    Identity,
    /// Triangular corrector W = [[I, 0], [(1 - theta_pd) sigma K, I]].
    GeneralizedPd {
        sigma: f64,
        theta_pd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub theta: ThetaMode,
    pub stepsize: StepsizeMode,
    pub correction: Correction,
    pub tol: f64,
    pub max_iter: usize,
    /// Run even when the assumption flags fail.
    pub allow_unverified: bool,
    /// In unverified runs, replace a nonpositive projection stepsize by the
    /// analytic lower bound instead of stopping.
    pub clamp_t_to_lower: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Projected,
            theta: ThetaMode::Constant { value: 1.0 },
            stepsize: StepsizeMode::Projection,
            correction: Correction::Identity,
            tol: 1e-8,
            max_iter: 10_000,
            allow_unverified: false,
            clamp_t_to_lower: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        match self.theta {
            ThetaMode::Constant { value } => {
                if !(value > 0.0 && value < 2.0) {
                    return Err(Error::Config(format!(
                        "relaxation parameter must lie in (0, 2), got {value}"
                    )));
                }
            }
            ThetaMode::Adaptive { eps_theta } => {
                if !(eps_theta > 0.0 && eps_theta < 1.0) {
                    return Err(Error::Config(format!(
                        "adaptive clip band needs eps_theta in (0, 1), got {eps_theta}"
                    )));
                }
            }
        }
        if let StepsizeMode::Constant { t } = self.stepsize {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!(
                    "constant stepsize must be positive, got {t}"
                )));
            }
        }
        if let Correction::GeneralizedPd { sigma, theta_pd } = self.correction {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::Config(format!(
                    "corrector sigma must be positive, got {sigma}"
                )));
            }
            if !(0.0..=1.0).contains(&theta_pd) {
                return Err(Error::Config(format!(
                    "corrector theta_pd must lie in [0, 1], got {theta_pd}"
                )));
            }
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be nonnegative, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    /// The relaxation value assumption flags are evaluated at.
    pub fn theta_for_flags(&self) -> f64 {
        match self.theta {
            ThetaMode::Constant { value } => value,
            ThetaMode::Adaptive { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Converged,
    NotConverged,
    AssumptionViolation,
    NumericalBreakdown,
}

impl ExitStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExitStatus::Converged => 0,
            ExitStatus::NotConverged => 2,
            ExitStatus::AssumptionViolation => 3,
            ExitStatus::NumericalBreakdown => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: usize,
    pub u: PrimalDualPoint,
    pub r: PrimalDualPoint,
    pub residual: f64,
    pub t: Option<f64>,
    pub theta: Option<f64>,
    pub status: ExitStatus,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub state: SolverState,
    pub trace: IterateTrace,
    /// Visited iterates u_0, u_1, ..., aligned with the trace rows.
    pub history: Vec<PrimalDualPoint>,
}

/// Halfspace from the current iterate and its prediction: normal
/// a = C(u) - C(r), anchor r, margin (L/4) ||u - r||^2.
pub fn make_halfspace(
    u: &PrimalDualPoint,
    r: &PrimalDualPoint,
    spec: &PreconditionerSpec,
    l: f64,
) -> Result<Halfspace> {
    let cu = spec.apply_c(u)?;
    let cr = spec.apply_c(r)?;
    let normal = cu.sub(&cr)?;
    let d2 = u.sub(r)?.dot(&u.sub(r)?)?;
    Ok(Halfspace {
        normal,
        anchor: r.clone(),
        margin: l / 4.0 * d2,
    })
}

/// Projection stepsize t = (<u - r, a> - margin) / ||a||^2. A vanishing
/// normal with a nonzero prediction gap cannot occur while C is strongly
/// monotone and is reported as a breakdown.
pub fn stepsize_t(u: &PrimalDualPoint, r: &PrimalDualPoint, hs: &Halfspace) -> Result<f64> {
    let na2 = hs.normal.dot(&hs.normal)?;
    if na2 == 0.0 {
        return Err(Error::NumericalBreakdown(
            "zero halfspace normal with nonzero prediction gap".into(),
        ));
    }
    let num = u.sub(r)?.dot(&hs.normal)? - hs.margin;
    Ok(num / na2)
}

/// Relaxed projection u+ = u - theta * t * a. With theta = 1 and u outside
/// the halfspace this is the exact projection.
pub fn project_relax(
    u: &PrimalDualPoint,
    hs: &Halfspace,
    t: f64,
    theta: f64,
) -> Result<PrimalDualPoint> {
    u.add_scaled(-theta * t, &hs.normal)
}

/// Optimal relaxation for linear M in the monotone regime:
/// theta* = <r - u, M(r) - M(u)> / (t <a, M(u) - M(r)>), clipped to
/// [eps_theta, 2 - eps_theta]. Returns the clipped value and whether the
/// nonpositive-denominator fallback to 1 fired.
pub fn adaptive_theta(
    u: &PrimalDualPoint,
    r: &PrimalDualPoint,
    spec: &PreconditionerSpec,
    phi: &Coupling,
    t: f64,
    eps_theta: f64,
) -> Result<(f64, bool)> {
    if phi.weak_mono_gamma() != 0.0 {
        return Err(Error::Config(
            "adaptive relaxation requires the monotone regime (gamma = 0)".into(),
        ));
    }
    let mu = spec.apply_m(phi, u)?;
    let mr = spec.apply_m(phi, r)?;
    let dm = mu.sub(&mr)?;
    let d = u.sub(r)?;
    let a = spec.apply_c(u)?.sub(&spec.apply_c(r)?)?;
    let num = d.dot(&dm)?;
    let den = t * a.dot(&dm)?;
    if den <= 0.0 {
        return Ok((1.0, true));
    }
    Ok(((num / den).clamp(eps_theta, 2.0 - eps_theta), false))
}

struct Driver<'a> {
    problem: &'a ProblemInstance,
    spec: &'a PreconditionerSpec,
    config: &'a SolverConfig,
    consts: ConstantsReport,
    metrics: Option<MetricMatrices>,
    flags_ok: bool,
}

impl Driver<'_> {
    fn row(&self, k: usize, u: &PrimalDualPoint, r: &PrimalDualPoint, residual: f64) -> TraceRow {
        let dist = self
            .problem
            .known_solution
            .as_ref()
            .and_then(|z| u.dist(z).ok());
        let h_seminorm = self.metrics.as_ref().and_then(|m| {
            let w = u.sub(r).ok()?;
            let nw = m.n_mat.apply(&w.stacked()).ok()?;
            Some(m.h_mat.quadratic_form(&nw).max(0.0).sqrt())
        });
        TraceRow {
            k,
            residual,
            t: None,
            theta: None,
            psi_self: None,
            dist_to_solution: dist,
            h_seminorm,
        }
    }

    /// One projected cycle from u; fills the step fields of `row` and
    /// returns the next iterate, or None when the update is skipped.
    fn step_projected(
        &self,
        u: &PrimalDualPoint,
        r: &PrimalDualPoint,
        row: &mut TraceRow,
        warnings: &mut Vec<String>,
    ) -> Result<Option<PrimalDualPoint>> {
        let hs = make_halfspace(u, r, self.spec, self.consts.l)?;
        let na2 = hs.normal.dot(&hs.normal)?;
        let num = u.sub(r)?.dot(&hs.normal)? - hs.margin;
        row.psi_self = Some(num);

        let t_proj = if na2 > 0.0 {
            num / na2
        } else {
            f64::NEG_INFINITY
        };
        let t = match self.config.stepsize {
            StepsizeMode::Constant { t } => t,
            StepsizeMode::Projection => {
                if num <= 0.0 {
                    // already inside the halfspace
                    if self.flags_ok {
                        row.t = Some(0.0);
                        return Ok(None);
                    }
                    if self.config.clamp_t_to_lower && self.consts.t_lower > 0.0 {
                        warnings.push(format!(
                            "iteration {}: nonpositive projection stepsize clamped to t_lower",
                            row.k
                        ));
                        self.consts.t_lower
                    } else {
                        return Err(Error::NumericalBreakdown(format!(
                            "nonpositive projection stepsize {t_proj:.3e} under unverified assumptions"
                        )));
                    }
                } else {
                    if na2 == 0.0 {
                        return Err(Error::NumericalBreakdown(
                            "zero halfspace normal with nonzero prediction gap".into(),
                        ));
                    }
                    t_proj
                }
            }
        };

        let theta = match self.config.theta {
            ThetaMode::Constant { value } => value,
            ThetaMode::Adaptive { eps_theta } => {
                let (th, fell_back) =
                    adaptive_theta(u, r, self.spec, &self.problem.phi, t, eps_theta)?;
                if fell_back {
                    warnings.push(format!(
                        "iteration {}: adaptive relaxation denominator nonpositive, used theta = 1",
                        row.k
                    ));
                }
                th
            }
        };
        row.t = Some(t);
        row.theta = Some(theta);
        Ok(Some(project_relax(u, &hs, t, theta)?))
    }

    /// One relaxed cycle: u+ = u - G(u - r) with the configured corrector.
    fn step_relaxed(&self, u: &PrimalDualPoint, r: &PrimalDualPoint) -> Result<PrimalDualPoint> {
        let w = u.sub(r)?;
        let gw = match self.config.correction {
            Correction::Identity => w,
            Correction::GeneralizedPd { sigma, theta_pd } => {
                let kwx = self.problem.phi.k().apply(&w.x)?;
                PrimalDualPoint {
                    x: w.x.clone(),
                    y: w.y
                        .iter()
                        .zip(&kwx)
                        .map(|(wy, kx)| (1.0 - theta_pd) * sigma * kx + wy)
                        .collect(),
                }
            }
        };
        u.add_scaled(-1.0, &gw)
    }
}

/// Run the configured algorithm from u0 until the residual ||u - r|| drops
/// to the tolerance or the iteration budget is spent. Returns the final
/// state, the per-iteration trace, and the visited iterates.
pub fn solve(
    problem: &ProblemInstance,
    spec: &PreconditionerSpec,
    config: &SolverConfig,
    u0: &PrimalDualPoint,
) -> Result<SolveOutput> {
    config.validate()?;
    let (n1_dim, n2_dim) = spec.dims();
    if n1_dim != problem.n() || n2_dim != problem.m() {
        return Err(Error::DimensionMismatch {
            context: "solve preconditioner/problem",
            expected: problem.n() + problem.m(),
            got: n1_dim + n2_dim,
        });
    }
    if u0.x.len() != problem.n() || u0.y.len() != problem.m() {
        return Err(Error::DimensionMismatch {
            context: "solve start point",
            expected: problem.n() + problem.m(),
            got: u0.x.len() + u0.y.len(),
        });
    }
    if config.algorithm == Algorithm::Relaxed {
        if let ThetaMode::Adaptive { .. } = config.theta {
            return Err(Error::Config(
                "adaptive relaxation applies to the projected algorithm only".into(),
            ));
        }
    }

    let theta_flags = config.theta_for_flags();
    let t_flags = match config.stepsize {
        StepsizeMode::Constant { t } => t,
        StepsizeMode::Projection => {
            let base = spec.constants(&problem.phi, theta_flags, 1.0);
            base.t_lower.max(f64::MIN_POSITIVE)
        }
    };
    let consts = spec.constants(&problem.phi, theta_flags, t_flags);

    let flags_ok = match config.algorithm {
        Algorithm::Projected => consts.required_ok(),
        Algorithm::Relaxed => consts.flag_resolvent_ok,
    };

    let mut trace = IterateTrace {
        header: TraceHeader::new(problem, spec, &consts, config),
        rows: Vec::new(),
        warnings: Vec::new(),
    };

    if !flags_ok && !config.allow_unverified {
        let state = SolverState {
            k: 0,
            u: u0.clone(),
            r: u0.clone(),
            residual: f64::NAN,
            t: None,
            theta: None,
            status: ExitStatus::AssumptionViolation,
        };
        trace
            .warnings
            .push("assumption flags failed; run refused (allow_unverified is off)".into());
        return Ok(SolveOutput {
            state,
            trace,
            history: vec![u0.clone()],
        });
    }

    let metrics = if matches!(config.stepsize, StepsizeMode::Constant { .. })
        && consts.flag_d_pd
        && consts.flag_g_pd
        && problem.n() + problem.m() <= METRIC_DIM_CAP
    {
        crate::diagnostics::build_matrices(spec, &problem.phi, theta_flags, t_flags).ok()
    } else {
        None
    };

    let driver = Driver {
        problem,
        spec,
        config,
        consts,
        metrics,
        flags_ok,
    };

    let mut u = u0.clone();
    let mut history = vec![u.clone()];
    let status;
    let mut final_r;
    let mut k = 0;
    loop {
        let r = driver
            .spec
            .warped_resolvent(&problem.f, &problem.g, &problem.phi, &u)?;
        let residual = u.dist(&r)?;
        let mut row = driver.row(k, &u, &r, residual);
        final_r = r.clone();
        if residual <= config.tol {
            trace.rows.push(row);
            status = ExitStatus::Converged;
            break;
        }
        if k == config.max_iter {
            trace.rows.push(row);
            status = ExitStatus::NotConverged;
            break;
        }
        let next = match config.algorithm {
            Algorithm::Projected => {
                match driver.step_projected(&u, &r, &mut row, &mut trace.warnings) {
                    Ok(Some(next)) => next,
                    Ok(None) => u.clone(),
                    Err(Error::NumericalBreakdown(msg)) => {
                        trace.warnings.push(msg);
                        trace.rows.push(row);
                        status = ExitStatus::NumericalBreakdown;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Algorithm::Relaxed => driver.step_relaxed(&u, &r)?,
        };
        trace.rows.push(row);
        if !next.is_finite() {
            trace
                .warnings
                .push(format!("iteration {k}: non-finite iterate, aborting"));
            status = ExitStatus::NumericalBreakdown;
            break;
        }
        u = next;
        history.push(u.clone());
        k += 1;
    }

    let last = trace.rows.last().expect("at least the initial record");
    let state = SolverState {
        k,
        u,
        r: final_r,
        residual: last.residual,
        t: last.t,
        theta: last.theta,
        status,
    };
    Ok(SolveOutput {
        state,
        trace,
        history,
    })
}
