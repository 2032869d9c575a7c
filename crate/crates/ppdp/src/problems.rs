//! Catalog of reproducible saddle-point instances with analytic constants
//! and, where available, known solutions verified at construction.

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::linalg::{LinearMap, PrimalDualPoint};
use crate::oracles::{solve_matrix_game_exact, OracleConfig};
use crate::prox::ProxFunction;

/// Tolerance for the construction-time inclusion check on known solutions.
const SOLUTION_CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub f: ProxFunction,
    pub g: ProxFunction,
    pub phi: Coupling,
    pub known_solution: Option<PrimalDualPoint>,
    /// True when the saddle operator is monotone (convex-concave coupling
    /// with convex f, g).
    pub monotone: bool,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        f: ProxFunction,
        g: ProxFunction,
        phi: Coupling,
        known_solution: Option<PrimalDualPoint>,
        monotone: bool,
    ) -> Result<Self> {
        if f.dim() != phi.n() {
            return Err(Error::DimensionMismatch {
                context: "problem f block",
                expected: phi.n(),
                got: f.dim(),
            });
        }
        if g.dim() != phi.m() {
            return Err(Error::DimensionMismatch {
                context: "problem g block",
                expected: phi.m(),
                got: g.dim(),
            });
        }
        let instance = Self {
            name: name.into(),
            f,
            g,
            phi,
            known_solution,
            monotone,
        };
        if let Some(z) = &instance.known_solution {
            let gap = instance.inclusion_residual(z)?;
            if gap > SOLUTION_CHECK_TOL {
                return Err(Error::SolutionCheck(gap));
            }
        }
        Ok(instance)
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    pub fn m(&self) -> usize {
        self.phi.m()
    }

    /// How far u is from satisfying 0 ∈ P(u), measured through the exact
    /// subgradient conditions of f and g: the x block needs
    /// -grad_x phi(u) ∈ ∂f(x), the y block grad_y phi(u) ∈ ∂g(y).
    pub fn inclusion_residual(&self, u: &PrimalDualPoint) -> Result<f64> {
        let gx = self.phi.grad_x(u)?;
        let gy = self.phi.grad_y(u)?;
        let neg_gx: Vec<f64> = gx.iter().map(|v| -v).collect();
        let fx = self.f.subgradient_gap(&u.x, &neg_gx)?;
        let gy_gap = self.g.subgradient_gap(&u.y, &gy)?;
        Ok(fx.max(gy_gap))
    }
}

/// Two-player zero-sum matrix game min_x max_y y^T K x over probability
/// simplices. The equilibrium comes from the exact support-enumeration
/// oracle and is attached as the known solution; the all-zero payoff is
/// special-cased to the barycenter pair.
pub fn make_matrix_game(payoff: LinearMap) -> Result<ProblemInstance> {
    let m = payoff.rows();
    let n = payoff.cols();
    let f = ProxFunction::indicator_simplex(n)?;
    let g = ProxFunction::indicator_simplex(m)?;
    let known = if payoff.is_zero() {
        PrimalDualPoint::new(vec![1.0 / n as f64; n], vec![1.0 / m as f64; m])?
    } else {
        let (x, y, _) = solve_matrix_game_exact(&payoff, &OracleConfig::default())?;
        PrimalDualPoint::new(x, y)?
    };
    let phi = Coupling::bilinear(payoff)?;
    ProblemInstance::new("matrix_game", f, g, phi, Some(known), true)
}

/// Quadratic saddle instance: f = (fw/2)||x||^2, g = (gw/2)||y||^2 with the
/// quadratic coupling <Kx, y> + (a/2)||x||^2 - (b/2)||y||^2. Whenever
/// fw + a > 0 and gw + b > 0 the origin is the unique solution.
pub fn make_quadratic_saddle(
    k: LinearMap,
    a: f64,
    b: f64,
    fw: f64,
    gw: f64,
) -> Result<ProblemInstance> {
    if fw < 0.0 || gw < 0.0 {
        return Err(Error::Config(format!(
            "quadratic saddle weights must be nonnegative, got fw={fw}, gw={gw}"
        )));
    }
    let n = k.cols();
    let m = k.rows();
    let f = if fw > 0.0 {
        ProxFunction::squared_l2(n, fw)?
    } else {
        ProxFunction::zero(n)
    };
    let g = if gw > 0.0 {
        ProxFunction::squared_l2(m, gw)?
    } else {
        ProxFunction::zero(m)
    };
    let phi = Coupling::quadratic(k, a, b)?;
    let known = if fw + a > 0.0 && gw + b > 0.0 {
        Some(PrimalDualPoint::zeros(n, m))
    } else {
        None
    };
    let monotone = a >= 0.0 && b >= 0.0;
    ProblemInstance::new("quadratic_saddle", f, g, phi, known, monotone)
}

/// Saddle form of min_x lam ||x||_1 + (1/2) ||K x - b||^2 through the dual
/// variable: f = lam ||.||_1, phi bilinear, g(y) = (1/2)||y||^2 + <b, y>.
///
/// A known solution is attached in the two closed-form regimes: identity K
/// (componentwise soft threshold of b) and the null certificate
/// ||K^T b||_inf <= lam (x* = 0, y* = -b).
pub fn make_l1_bilinear(k: LinearMap, b: Vec<f64>, lam: f64) -> Result<ProblemInstance> {
    if !(lam.is_finite() && lam > 0.0) {
        return Err(Error::Config(format!(
            "l1 weight must be positive, got {lam}"
        )));
    }
    let n = k.cols();
    let m = k.rows();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            context: "l1_bilinear shift",
            expected: m,
            got: b.len(),
        });
    }
    let f = ProxFunction::l1(n, lam)?;
    let g = ProxFunction::squared_l2(m, 1.0)?.with_tilt(b.clone())?;
    let known = if k == LinearMap::identity(n) {
        let x: Vec<f64> = b
            .iter()
            .map(|v| v.signum() * (v.abs() - lam).max(0.0))
            .collect();
        let y: Vec<f64> = x.iter().zip(&b).map(|(xi, bi)| xi - bi).collect();
        Some(PrimalDualPoint::new(x, y)?)
    } else {
        let ktb = k.apply_transpose(&b)?;
        if ktb.iter().all(|v| v.abs() <= lam) {
            Some(PrimalDualPoint::new(
                vec![0.0; n],
                b.iter().map(|v| -v).collect(),
            )?)
        } else {
            None
        }
    };
    let phi = Coupling::bilinear(k)?;
    ProblemInstance::new("l1_bilinear", f, g, phi, known, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_game_identity_equilibrium() {
        let game = make_matrix_game(LinearMap::identity(2)).unwrap();
        let z = game.known_solution.as_ref().unwrap();
        assert_eq!(z.x, vec![0.5, 0.5]);
        assert_eq!(z.y, vec![0.5, 0.5]);
        assert!(game.monotone);
    }

    #[test]
    fn matrix_game_pure_equilibrium() {
        let game =
            make_matrix_game(LinearMap::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap())
                .unwrap();
        let z = game.known_solution.as_ref().unwrap();
        assert_eq!(z.x, vec![0.0, 1.0]);
        assert_eq!(z.y, vec![1.0, 0.0]);
    }

    #[test]
    fn matrix_game_zero_payoff_barycenter() {
        let game = make_matrix_game(LinearMap::zeros(3, 3)).unwrap();
        let z = game.known_solution.as_ref().unwrap();
        for v in z.x.iter().chain(z.y.iter()) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_saddle_origin_solution() {
        let k = LinearMap::from_rows(vec![vec![1.0]]).unwrap();
        let p = make_quadratic_saddle(k.clone(), 0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(p.known_solution.as_ref().unwrap().norm(), 0.0);
        assert!(p.monotone);

        // weakly monotone version keeps the origin as its solution
        let w = make_quadratic_saddle(k.clone(), -0.2, -0.1, 1.0, 1.0).unwrap();
        assert_eq!(w.known_solution.as_ref().unwrap().norm(), 0.0);
        assert!(!w.monotone);
        assert!((w.phi.weak_mono_gamma() - 0.2).abs() < 1e-15);

        // pure quadratic coupling, no proximal weights
        let q = make_quadratic_saddle(
            LinearMap::from_rows(vec![vec![2.0]]).unwrap(),
            1.0,
            1.0,
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!(q.known_solution.as_ref().unwrap().norm(), 0.0);
    }

    #[test]
    fn l1_bilinear_identity_soft_threshold() {
        let p = make_l1_bilinear(LinearMap::identity(2), vec![3.0, 0.0], 1.0).unwrap();
        let z = p.known_solution.as_ref().unwrap();
        assert_eq!(z.x, vec![2.0, 0.0]);
        assert_eq!(z.y, vec![-1.0, 0.0]);
    }

    #[test]
    fn l1_bilinear_zero_shift_origin() {
        let p = make_l1_bilinear(LinearMap::identity(3), vec![0.0; 3], 0.7).unwrap();
        assert_eq!(p.known_solution.as_ref().unwrap().norm(), 0.0);
    }

    #[test]
    fn l1_bilinear_null_certificate() {
        // lam beyond ||K^T b||_inf forces the zero primal solution
        let k = LinearMap::from_rows(vec![vec![1.0, 1.0]]).unwrap();
        let p = make_l1_bilinear(k, vec![1.0], 10.0).unwrap();
        let z = p.known_solution.as_ref().unwrap();
        assert_eq!(z.x, vec![0.0, 0.0]);
        assert_eq!(z.y, vec![-1.0]);
    }

    #[test]
    fn l1_bilinear_no_closed_form_leaves_solution_unset() {
        let k = LinearMap::from_rows(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let p = make_l1_bilinear(k, vec![3.0, 3.0], 1.0).unwrap();
        assert!(p.known_solution.is_none());
    }

    #[test]
    fn inclusion_check_rejects_wrong_solution() {
        let k = LinearMap::from_rows(vec![vec![1.0]]).unwrap();
        let f = ProxFunction::squared_l2(1, 1.0).unwrap();
        let g = ProxFunction::squared_l2(1, 1.0).unwrap();
        let phi = Coupling::quadratic(k, 0.0, 0.0).unwrap();
        let wrong = PrimalDualPoint::new(vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(
            ProblemInstance::new("bad", f, g, phi, Some(wrong), true),
            Err(Error::SolutionCheck(_))
        ));
    }

    #[test]
    fn catalog_constants_round_trip() {
        let p = make_quadratic_saddle(
            LinearMap::from_rows(vec![vec![0.6, -0.8], vec![0.8, 0.6]]).unwrap(),
            0.3,
            0.7,
            1.0,
            1.0,
        )
        .unwrap();
        assert!((p.phi.lipschitz_l() - (0.09f64 + 0.49 + 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(p.phi.weak_mono_gamma(), 0.7);
    }
}
