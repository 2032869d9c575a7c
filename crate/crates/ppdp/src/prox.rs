//! Separable convex terms with generalized resolvents (∂f + N)^{-1} for
//! diagonal positive N.
//!
//! Every kind is proper, l.s.c. and convex. An optional linear tilt <c, .>
//! shifts the subdifferential; resolvents stay in closed form.

use crate::error::{Error, Result};
use crate::linalg::DiagonalMap;
use serde::{Deserialize, Serialize};

/// Tolerance for indicator membership tests; avoids spurious +inf from
/// rounding on iterates that sit on a constraint boundary.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxKind {
    Zero,
    SquaredL2 { weight: f64 },
    L1 { weight: f64 },
    IndicatorBox { lo: Vec<f64>, hi: Vec<f64> },
    IndicatorSimplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxFunction {
    kind: ProxKind,
    dim: usize,
    tilt: Option<Vec<f64>>,
}

impl ProxFunction {
    pub fn zero(dim: usize) -> Self {
        Self {
            kind: ProxKind::Zero,
            dim,
            tilt: None,
        }
    }

    pub fn squared_l2(dim: usize, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Config(format!(
                "squared_l2 weight must be positive, got {weight}"
            )));
        }
        Ok(Self {
            kind: ProxKind::SquaredL2 { weight },
            dim,
            tilt: None,
        })
    }

    pub fn l1(dim: usize, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Config(format!(
                "l1 weight must be positive, got {weight}"
            )));
        }
        Ok(Self {
            kind: ProxKind::L1 { weight },
            dim,
            tilt: None,
        })
    }

    pub fn indicator_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::indicator_box_vec(vec![lo; dim], vec![hi; dim])
    }

    pub fn indicator_box_vec(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "indicator_box bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite()) || l > h)
        {
            return Err(Error::Config(
                "indicator_box requires finite lo <= hi".into(),
            ));
        }
        let dim = lo.len();
        Ok(Self {
            kind: ProxKind::IndicatorBox { lo, hi },
            dim,
            tilt: None,
        })
    }

    pub fn indicator_simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config(
                "indicator_simplex needs dimension >= 1".into(),
            ));
        }
        Ok(Self {
            kind: ProxKind::IndicatorSimplex,
            dim,
            tilt: None,
        })
    }

    /// Add a linear tilt <c, .> to the function.
    pub fn with_tilt(mut self, c: Vec<f64>) -> Result<Self> {
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "tilt",
                expected: self.dim,
                got: c.len(),
            });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tilt"));
        }
        self.tilt = Some(c);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ProxKind {
        &self.kind
    }

    pub fn tilt(&self) -> Option<&[f64]> {
        self.tilt.as_deref()
    }

    fn check_dim(&self, v: &[f64], context: &'static str) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Function value, +inf outside the domain of an indicator.
    pub fn evaluate(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v, "evaluate")?;
        let base = match &self.kind {
            ProxKind::Zero => 0.0,
            ProxKind::SquaredL2 { weight } => 0.5 * weight * v.iter().map(|a| a * a).sum::<f64>(),
            ProxKind::L1 { weight } => weight * v.iter().map(|a| a.abs()).sum::<f64>(),
            ProxKind::IndicatorBox { lo, hi } => {
                let inside = v
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(a, (l, h))| *a >= l - MEMBERSHIP_TOL && *a <= h + MEMBERSHIP_TOL);
                if inside {
                    0.0
                } else {
                    return Ok(f64::INFINITY);
                }
            }
            ProxKind::IndicatorSimplex => {
                let sum: f64 = v.iter().sum();
                let inside =
                    (sum - 1.0).abs() <= MEMBERSHIP_TOL && v.iter().all(|a| *a >= -MEMBERSHIP_TOL);
                if inside {
                    0.0
                } else {
                    return Ok(f64::INFINITY);
                }
            }
        };
        let tilt = self
            .tilt
            .as_ref()
            .map_or(0.0, |c| c.iter().zip(v).map(|(ci, vi)| ci * vi).sum());
        Ok(base + tilt)
    }

    /// Generalized resolvent (∂f + N)^{-1} v: the unique x with
    /// v - N x ∈ ∂f(x). For N = (1/tau) I this equals prox_{tau f}(tau v).
    pub fn resolvent(&self, n: &DiagonalMap, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v, "resolvent")?;
        if n.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "resolvent diagonal",
                expected: self.dim,
                got: n.dim(),
            });
        }
        // shift the tilt out: v - N x ∈ ∂f0(x) + c  <=>  (v - c) - N x ∈ ∂f0(x)
        let w: Vec<f64> = match &self.tilt {
            Some(c) => v.iter().zip(c).map(|(a, b)| a - b).collect(),
            None => v.to_vec(),
        };
        let d = n.diagonal();
        Ok(match &self.kind {
            ProxKind::Zero => w.iter().zip(d).map(|(a, di)| a / di).collect(),
            ProxKind::SquaredL2 { weight } => {
                w.iter().zip(d).map(|(a, di)| a / (di + weight)).collect()
            }
            ProxKind::L1 { weight } => w
                .iter()
                .zip(d)
                .map(|(a, di)| a.signum() * (a.abs() - weight).max(0.0) / di)
                .collect(),
            ProxKind::IndicatorBox { lo, hi } => w
                .iter()
                .zip(d)
                .zip(lo.iter().zip(hi))
                .map(|((a, di), (l, h))| (a / di).clamp(*l, *h))
                .collect(),
            ProxKind::IndicatorSimplex => simplex_resolvent(d, &w),
        })
    }

    /// Standard proximal map prox_{tau f}(w) through the generalized
    /// resolvent with N = (1/tau) I.
    pub fn prox(&self, tau: f64, w: &[f64]) -> Result<Vec<f64>> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Config(format!(
                "prox parameter must be positive, got {tau}"
            )));
        }
        let n = DiagonalMap::scaled_identity(self.dim, 1.0 / tau)?;
        let v: Vec<f64> = w.iter().map(|a| a / tau).collect();
        self.resolvent(&n, &v)
    }

    /// Largest violation of the subgradient inclusion g ∈ ∂f(x), measured
    /// per kind (sign conditions for l1, active-set conditions for
    /// boxes/simplex, linear equation for squared_l2). Zero means g is a
    /// valid subgradient at x.
    pub fn subgradient_gap(&self, x: &[f64], g: &[f64]) -> Result<f64> {
        self.check_dim(x, "subgradient_gap x")?;
        self.check_dim(g, "subgradient_gap g")?;
        let g0: Vec<f64> = match &self.tilt {
            Some(c) => g.iter().zip(c).map(|(a, b)| a - b).collect(),
            None => g.to_vec(),
        };
        let mut gap: f64 = 0.0;
        match &self.kind {
            ProxKind::Zero => {
                for v in &g0 {
                    gap = gap.max(v.abs());
                }
            }
            ProxKind::SquaredL2 { weight } => {
                for (xi, gi) in x.iter().zip(&g0) {
                    gap = gap.max((gi - weight * xi).abs());
                }
            }
            ProxKind::L1 { weight } => {
                for (xi, gi) in x.iter().zip(&g0) {
                    if xi.abs() > MEMBERSHIP_TOL {
                        gap = gap.max((gi - weight * xi.signum()).abs());
                    } else {
                        gap = gap.max((gi.abs() - weight).max(0.0));
                    }
                }
            }
            ProxKind::IndicatorBox { lo, hi } => {
                for ((xi, gi), (l, h)) in x.iter().zip(&g0).zip(lo.iter().zip(hi)) {
                    gap = gap.max((xi - xi.clamp(*l, *h)).abs());
                    let at_lo = (xi - l).abs() <= MEMBERSHIP_TOL;
                    let at_hi = (xi - h).abs() <= MEMBERSHIP_TOL;
                    // normal cone of [l, h]: g <= 0 at l, g >= 0 at h, g = 0 inside
                    if at_lo && at_hi {
                        // degenerate interval, any g admissible
                    } else if at_lo {
                        gap = gap.max(gi.max(0.0));
                    } else if at_hi {
                        gap = gap.max((-gi).max(0.0));
                    } else {
                        gap = gap.max(gi.abs());
                    }
                }
            }
            ProxKind::IndicatorSimplex => {
                let sum: f64 = x.iter().sum();
                gap = gap.max((sum - 1.0).abs());
                for xi in x {
                    gap = gap.max((-xi).max(0.0));
                }
                // normal cone: g_i = mu on the support, g_i <= mu off it
                let mut mu = f64::NEG_INFINITY;
                let mut mu_lo = f64::INFINITY;
                for (xi, gi) in x.iter().zip(&g0) {
                    if *xi > MEMBERSHIP_TOL {
                        mu = mu.max(*gi);
                        mu_lo = mu_lo.min(*gi);
                    }
                }
                if mu.is_finite() {
                    gap = gap.max(mu - mu_lo);
                    for (xi, gi) in x.iter().zip(&g0) {
                        if *xi <= MEMBERSHIP_TOL {
                            gap = gap.max((gi - mu).max(0.0));
                        }
                    }
                }
            }
        }
        Ok(gap)
    }
}

/// Weighted simplex projection: the unique x on the unit simplex with
/// v - diag(d) x in the normal cone, i.e. x_i = max(0, (v_i - lam)/d_i)
/// with the threshold lam fixing sum x = 1. Sort-based, ties resolved by
/// the stable descending order on v.
fn simplex_resolvent(d: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
    let mut sum_vd = 0.0;
    let mut sum_inv = 0.0;
    let mut lam = f64::NEG_INFINITY;
    for &i in &idx {
        let cand_vd = sum_vd + v[i] / d[i];
        let cand_inv = sum_inv + 1.0 / d[i];
        let cand = (cand_vd - 1.0) / cand_inv;
        if v[i] > cand {
            sum_vd = cand_vd;
            sum_inv = cand_inv;
            lam = cand;
        } else {
            break;
        }
    }
    v.iter()
        .zip(d)
        .map(|(vi, di)| ((vi - lam) / di).max(0.0))
        .collect()
}
