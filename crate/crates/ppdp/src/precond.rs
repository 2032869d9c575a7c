//! The lower block-triangular preconditioner, its analytic constants, and
//! the warped-resolvent prediction step.
//!
//! M u = (N1 x - grad_x phi(u), Q x + N2 y + grad_y phi(u)) with diagonal
//! positive N1, N2 and a dense coupling block Q. Q enters the constants only
//! through its operator norm.

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::linalg::{DiagonalMap, LinearMap, PrimalDualPoint};
use crate::prox::ProxFunction;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionerSpec {
    n1: DiagonalMap,
    n2: DiagonalMap,
    q: LinearMap,
    norm_q: f64,
}

/// Analytic constants of one (problem, preconditioner) pairing together with
/// the assumption flags the solver checks before iterating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    /// Lipschitz constant of the saddle operator block B.
    pub l: f64,
    /// Weak monotonicity constant of B.
    pub gamma: f64,
    /// Strong monotonicity constant of M: min(mu1, mu2) - L - ||Q||/2.
    pub mu: f64,
    /// Lipschitz constant of M: gamma + max(L1, L2) + ||Q||/2.
    pub q: f64,
    /// Lower stepsize bound (mu - gamma - L/4) / (L + q).
    pub t_lower: f64,
    /// Upper stepsize bound (3L/4 + q) / (mu - gamma); undefined when
    /// mu <= gamma.
    pub t_upper: Option<f64>,
    /// mu > gamma: the warped resolvent is single-valued with full domain.
    pub flag_resolvent_ok: bool,
    /// mu > gamma + L/4: the halfspace strictly separates iterates from
    /// the solution set.
    pub flag_separation_ok: bool,
    /// mu > gamma + L: the metric factor D is positive definite.
    pub flag_d_pd: bool,
    /// 2 mu > theta * t * (L + q) * q: the gap metric G is positive
    /// definite at the relaxation/stepsize pair the report was built for.
    pub flag_g_pd: bool,
}

impl ConstantsReport {
    /// Flags that must hold before running the projected algorithm.
    pub fn required_ok(&self) -> bool {
        self.flag_resolvent_ok && self.flag_separation_ok
    }
}

impl PreconditionerSpec {
    pub fn new(n1: DiagonalMap, n2: DiagonalMap, q: LinearMap) -> Result<Self> {
        if q.rows() != n2.dim() || q.cols() != n1.dim() {
            return Err(Error::DimensionMismatch {
                context: "preconditioner Q block",
                expected: n2.dim() * n1.dim(),
                got: q.rows() * q.cols(),
            });
        }
        let norm_q = q.operator_norm()?;
        Ok(Self { n1, n2, q, norm_q })
    }

    /// Scaled-identity blocks N1 = (1/tau) I, N2 = (1/sigma) I with Q = 0.
    pub fn scaled_identity(n: usize, m: usize, tau: f64, sigma: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0 && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!(
                "scaled-identity preconditioner needs positive tau/sigma, got {tau}/{sigma}"
            )));
        }
        Self::new(
            DiagonalMap::scaled_identity(n, 1.0 / tau)?,
            DiagonalMap::scaled_identity(m, 1.0 / sigma)?,
            LinearMap::zeros(m, n),
        )
    }

    pub fn n1(&self) -> &DiagonalMap {
        &self.n1
    }

    pub fn n2(&self) -> &DiagonalMap {
        &self.n2
    }

    pub fn q(&self) -> &LinearMap {
        &self.q
    }

    pub fn norm_q(&self) -> f64 {
        self.norm_q
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1.dim(), self.n2.dim())
    }

    fn check_dims(&self, u: &PrimalDualPoint, context: &'static str) -> Result<()> {
        if u.x.len() != self.n1.dim() || u.y.len() != self.n2.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.n1.dim() + self.n2.dim(),
                got: u.x.len() + u.y.len(),
            });
        }
        Ok(())
    }

    /// M u = (N1 x - grad_x phi(u), Q x + N2 y + grad_y phi(u)).
    pub fn apply_m(&self, phi: &Coupling, u: &PrimalDualPoint) -> Result<PrimalDualPoint> {
        self.check_dims(u, "apply_m")?;
        let gx = phi.grad_x(u)?;
        let gy = phi.grad_y(u)?;
        let n1x = self.n1.apply(&u.x)?;
        let qx = self.q.apply(&u.x)?;
        let n2y = self.n2.apply(&u.y)?;
        Ok(PrimalDualPoint {
            x: n1x.iter().zip(&gx).map(|(a, b)| a - b).collect(),
            y: qx
                .iter()
                .zip(n2y.iter().zip(&gy))
                .map(|(q, (n, g))| q + n + g)
                .collect(),
        })
    }

    /// C u = (M + B) u = (N1 x, Q x + N2 y); the coupling gradients cancel.
    pub fn apply_c(&self, u: &PrimalDualPoint) -> Result<PrimalDualPoint> {
        self.check_dims(u, "apply_c")?;
        let n1x = self.n1.apply(&u.x)?;
        let qx = self.q.apply(&u.x)?;
        let n2y = self.n2.apply(&u.y)?;
        Ok(PrimalDualPoint {
            x: n1x,
            y: qx.iter().zip(&n2y).map(|(a, b)| a + b).collect(),
        })
    }

    /// Constants and assumption flags for this preconditioner against the
    /// coupling `phi`, with the gap-metric flag evaluated at the given
    /// relaxation/stepsize pair.
    pub fn constants(&self, phi: &Coupling, theta: f64, t: f64) -> ConstantsReport {
        let l = phi.lipschitz_l();
        let gamma = phi.weak_mono_gamma();
        let mu = self.n1.min_entry().min(self.n2.min_entry()) - l - self.norm_q / 2.0;
        let q = gamma + self.n1.max_entry().max(self.n2.max_entry()) + self.norm_q / 2.0;
        let t_lower = (mu - gamma - l / 4.0) / (l + q);
        let t_upper = if mu > gamma {
            Some((0.75 * l + q) / (mu - gamma))
        } else {
            None
        };
        ConstantsReport {
            l,
            gamma,
            mu,
            q,
            t_lower,
            t_upper,
            flag_resolvent_ok: mu > gamma,
            flag_separation_ok: mu > gamma + l / 4.0,
            flag_d_pd: mu > gamma + l,
            flag_g_pd: 2.0 * mu > theta * t * (l + q) * q,
        }
    }

    /// One warped-resolvent prediction r = (M + P)^{-1} M u, evaluated by
    /// the explicit lower-triangular scheme: the x block first, then the y
    /// block fed with Q(x - x_hat).
    pub fn warped_resolvent(
        &self,
        f: &ProxFunction,
        g: &ProxFunction,
        phi: &Coupling,
        u: &PrimalDualPoint,
    ) -> Result<PrimalDualPoint> {
        self.check_dims(u, "warped_resolvent")?;
        let gx = phi.grad_x(u)?;
        let gy = phi.grad_y(u)?;
        let n1x = self.n1.apply(&u.x)?;
        let vx: Vec<f64> = n1x.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let x_hat = f.resolvent(&self.n1, &vx)?;
        let dx: Vec<f64> = u.x.iter().zip(&x_hat).map(|(a, b)| a - b).collect();
        let qdx = self.q.apply(&dx)?;
        let n2y = self.n2.apply(&u.y)?;
        let vy: Vec<f64> = n2y
            .iter()
            .zip(gy.iter().zip(&qdx))
            .map(|(n, (g, q))| n + g + q)
            .collect();
        let y_hat = g.resolvent(&self.n2, &vy)?;
        Ok(PrimalDualPoint { x: x_hat, y: y_hat })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinearMap;

    fn p(x: &[f64], y: &[f64]) -> PrimalDualPoint {
        PrimalDualPoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn k1() -> Coupling {
        Coupling::bilinear(LinearMap::from_rows(vec![vec![1.0]]).unwrap()).unwrap()
    }

    fn spec_nu(nu: f64) -> PreconditionerSpec {
        PreconditionerSpec::scaled_identity(1, 1, 1.0 / nu, 1.0 / nu).unwrap()
    }

    #[test]
    fn apply_m_hand_values() {
        // N1 = N2 = I, Q = -2K, K = [[1]], u = ((1),(2)) -> ((-1),(1))
        let spec = PreconditionerSpec::new(
            DiagonalMap::scaled_identity(1, 1.0).unwrap(),
            DiagonalMap::scaled_identity(1, 1.0).unwrap(),
            LinearMap::from_rows(vec![vec![-2.0]]).unwrap(),
        )
        .unwrap();
        let m = spec.apply_m(&k1(), &p(&[1.0], &[2.0])).unwrap();
        assert_eq!(m.x, vec![-1.0]);
        assert_eq!(m.y, vec![1.0]);

        // zero coupling, Q = 0, N1 = N2 = I is the identity map
        let phi0 = Coupling::bilinear(LinearMap::zeros(1, 1)).unwrap();
        let id = PreconditionerSpec::scaled_identity(1, 1, 1.0, 1.0).unwrap();
        let u = p(&[0.7], &[-0.4]);
        assert_eq!(id.apply_m(&phi0, &u).unwrap(), u);

        // N1 = N2 = 2I, Q = 0, K = [[1]], u = ((1),(1)) -> ((1),(3))
        let m2 = spec_nu(2.0).apply_m(&k1(), &p(&[1.0], &[1.0])).unwrap();
        assert_eq!(m2.x, vec![1.0]);
        assert_eq!(m2.y, vec![3.0]);
    }

    #[test]
    fn apply_c_hand_values() {
        let spec = PreconditionerSpec::new(
            DiagonalMap::scaled_identity(1, 1.0).unwrap(),
            DiagonalMap::scaled_identity(1, 1.0).unwrap(),
            LinearMap::from_rows(vec![vec![-2.0]]).unwrap(),
        )
        .unwrap();
        let c = spec.apply_c(&p(&[1.0], &[2.0])).unwrap();
        assert_eq!(c.x, vec![1.0]);
        assert_eq!(c.y, vec![0.0]);

        let c2 = spec_nu(2.0).apply_c(&p(&[2.0 / 3.0], &[0.0])).unwrap();
        assert!((c2.x[0] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(c2.y, vec![0.0]);

        assert_eq!(
            spec_nu(2.0).apply_c(&p(&[0.0], &[0.0])).unwrap().norm(),
            0.0
        );
    }

    #[test]
    fn constants_reference_instance() {
        // N1 = N2 = 2I against ||K|| = 1 bilinear: mu = 2 - sqrt(2), q = 2
        let report = spec_nu(2.0).constants(&k1(), 1.0, 1.0);
        assert!((report.mu - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(report.q, 2.0);
        assert!((report.l - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(report.gamma, 0.0);
        assert!(report.flag_separation_ok);
        assert!(report.flag_resolvent_ok);
        assert!(!report.flag_d_pd);
    }

    #[test]
    fn constants_degenerate_identity() {
        // zero coupling with N1 = N2 = I collapses the stepsize bracket to {1}
        let phi0 = Coupling::bilinear(LinearMap::zeros(1, 1)).unwrap();
        let report = PreconditionerSpec::scaled_identity(1, 1, 1.0, 1.0)
            .unwrap()
            .constants(&phi0, 1.0, 1.0);
        assert_eq!(report.mu, 1.0);
        assert_eq!(report.q, 1.0);
        assert_eq!(report.t_lower, 1.0);
        assert_eq!(report.t_upper, Some(1.0));
    }

    #[test]
    fn warped_resolvent_identity_fixed_point() {
        // f = g = zero, zero coupling, N1 = N2 = I: r = u for any u
        let phi0 = Coupling::bilinear(LinearMap::zeros(2, 2)).unwrap();
        let spec = PreconditionerSpec::scaled_identity(2, 2, 1.0, 1.0).unwrap();
        let f = ProxFunction::zero(2);
        let g = ProxFunction::zero(2);
        let u = p(&[0.3, -1.2], &[0.9, 0.1]);
        let r = spec.warped_resolvent(&f, &g, &phi0, &u).unwrap();
        assert!(r.dist(&u).unwrap() < 1e-15);
    }

    #[test]
    fn warped_resolvent_hand_value() {
        // f = g = squared_l2(1), K = [[1]], N1 = N2 = 2I, u = ((1),(1))
        let f = ProxFunction::squared_l2(1, 1.0).unwrap();
        let g = ProxFunction::squared_l2(1, 1.0).unwrap();
        let r = spec_nu(2.0)
            .warped_resolvent(&f, &g, &k1(), &p(&[1.0], &[1.0]))
            .unwrap();
        assert!((r.x[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.y[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn warped_resolvent_fixes_zeros_of_p() {
        // u* = 0 solves the quadratic instance with f = g = squared_l2
        let f = ProxFunction::squared_l2(1, 1.0).unwrap();
        let g = ProxFunction::squared_l2(1, 1.0).unwrap();
        let phi =
            Coupling::quadratic(LinearMap::from_rows(vec![vec![1.0]]).unwrap(), 0.5, 0.25).unwrap();
        let r = spec_nu(3.0)
            .warped_resolvent(&f, &g, &phi, &p(&[0.0], &[0.0]))
            .unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn q_block_dimension_checked() {
        assert!(PreconditionerSpec::new(
            DiagonalMap::scaled_identity(2, 1.0).unwrap(),
            DiagonalMap::scaled_identity(3, 1.0).unwrap(),
            LinearMap::zeros(2, 2),
        )
        .is_err());
    }
}
