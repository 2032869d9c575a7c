//! The smooth coupling term phi(x, y) with exact partial gradients and
//! analytic Lipschitz / weak-monotonicity constants.

use crate::error::{Error, Result};
use crate::linalg::{LinearMap, PrimalDualPoint};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingKind {
    /// phi(x, y) = <K x, y>
    Bilinear,
    /// phi(x, y) = <K x, y> + (a/2) ||x||^2 - (b/2) ||y||^2, a and b of
    /// either sign. Negative a or b puts the saddle operator in the weakly
    /// monotone regime with exactly known constants.
    Quadratic { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    k: LinearMap,
    kind: CouplingKind,
    norm_k: f64,
    tight_l_override: Option<f64>,
}

impl Coupling {
    pub fn bilinear(k: LinearMap) -> Result<Self> {
        let norm_k = k.operator_norm()?;
        Ok(Self {
            k,
            kind: CouplingKind::Bilinear,
            norm_k,
            tight_l_override: None,
        })
    }

    pub fn quadratic(k: LinearMap, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::NonFinite("quadratic coupling coefficients"));
        }
        let norm_k = k.operator_norm()?;
        Ok(Self {
            k,
            kind: CouplingKind::Quadratic { a, b },
            norm_k,
            tight_l_override: None,
        })
    }

    /// Replace the conservative block-sum Lipschitz constant by a sharper
    /// known value (e.g. ||K|| for a purely bilinear coupling).
    pub fn with_tight_l(mut self, l: f64) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Config(format!(
                "tight_L override must be positive, got {l}"
            )));
        }
        self.tight_l_override = Some(l);
        Ok(self)
    }

    pub fn k(&self) -> &LinearMap {
        &self.k
    }

    pub fn kind(&self) -> &CouplingKind {
        &self.kind
    }

    /// Primal dimension n.
    pub fn n(&self) -> usize {
        self.k.cols()
    }

    /// Dual dimension m.
    pub fn m(&self) -> usize {
        self.k.rows()
    }

    pub fn norm_k(&self) -> f64 {
        self.norm_k
    }

    fn ab(&self) -> (f64, f64) {
        match self.kind {
            CouplingKind::Bilinear => (0.0, 0.0),
            CouplingKind::Quadratic { a, b } => (a, b),
        }
    }

    /// Block Lipschitz constants (L_xx, L_xy, L_yx, L_yy).
    pub fn block_constants(&self) -> (f64, f64, f64, f64) {
        let (a, b) = self.ab();
        (a.abs(), self.norm_k, self.norm_k, b.abs())
    }

    fn check_dims(&self, u: &PrimalDualPoint, context: &'static str) -> Result<()> {
        if u.x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.n(),
                got: u.x.len(),
            });
        }
        if u.y.len() != self.m() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.m(),
                got: u.y.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, u: &PrimalDualPoint) -> Result<f64> {
        self.check_dims(u, "coupling value")?;
        let kx = self.k.apply(&u.x)?;
        let (a, b) = self.ab();
        let xn2: f64 = u.x.iter().map(|v| v * v).sum();
        let yn2: f64 = u.y.iter().map(|v| v * v).sum();
        Ok(crate::linalg::dot(&kx, &u.y) + 0.5 * a * xn2 - 0.5 * b * yn2)
    }

    /// Exact analytic gradient in x: K^T y (+ a x for the quadratic kind).
    pub fn grad_x(&self, u: &PrimalDualPoint) -> Result<Vec<f64>> {
        self.check_dims(u, "grad_x")?;
        let mut g = self.k.apply_transpose(&u.y)?;
        let (a, _) = self.ab();
        if a != 0.0 {
            for (gi, xi) in g.iter_mut().zip(&u.x) {
                *gi += a * xi;
            }
        }
        Ok(g)
    }

    /// Exact analytic gradient in y: K x (- b y for the quadratic kind).
    pub fn grad_y(&self, u: &PrimalDualPoint) -> Result<Vec<f64>> {
        self.check_dims(u, "grad_y")?;
        let mut g = self.k.apply(&u.x)?;
        let (_, b) = self.ab();
        if b != 0.0 {
            for (gi, yi) in g.iter_mut().zip(&u.y) {
                *gi -= b * yi;
            }
        }
        Ok(g)
    }

    /// The saddle operator block B u = (grad_x phi(u), -grad_y phi(u)).
    pub fn apply_b(&self, u: &PrimalDualPoint) -> Result<PrimalDualPoint> {
        let gx = self.grad_x(u)?;
        let gy = self.grad_y(u)?;
        Ok(PrimalDualPoint {
            x: gx,
            y: gy.into_iter().map(|v| -v).collect(),
        })
    }

    /// Lipschitz constant of B: sqrt of the sum of squared block constants,
    /// unless a tight override is set.
    pub fn lipschitz_l(&self) -> f64 {
        if let Some(l) = self.tight_l_override {
            return l;
        }
        let (lxx, lxy, lyx, lyy) = self.block_constants();
        (lxx * lxx + lxy * lxy + lyx * lyx + lyy * lyy).sqrt()
    }

    /// Weak monotonicity constant gamma = max{L_xx, L_yy}; zero means B is
    /// monotone.
    pub fn weak_mono_gamma(&self) -> f64 {
        let (lxx, _, _, lyy) = self.block_constants();
        lxx.max(lyy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: &[f64], y: &[f64]) -> PrimalDualPoint {
        PrimalDualPoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    fn k1(v: f64) -> LinearMap {
        LinearMap::from_rows(vec![vec![v]]).unwrap()
    }

    #[test]
    fn grad_x_bilinear_identity() {
        let phi = Coupling::bilinear(LinearMap::identity(2)).unwrap();
        let u = p(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(phi.grad_x(&u).unwrap(), vec![3.0, 4.0]);
        assert_eq!(phi.grad_y(&u).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn quadratic_degenerates_to_bilinear() {
        let phi_q = Coupling::quadratic(LinearMap::identity(2), 0.0, 0.0).unwrap();
        let phi_b = Coupling::bilinear(LinearMap::identity(2)).unwrap();
        let u = p(&[0.3, -0.7], &[1.1, 0.2]);
        assert_eq!(phi_q.grad_x(&u).unwrap(), phi_b.grad_x(&u).unwrap());
        assert_eq!(phi_q.grad_y(&u).unwrap(), phi_b.grad_y(&u).unwrap());
        assert_eq!(phi_q.lipschitz_l(), phi_b.lipschitz_l());
    }

    #[test]
    fn quadratic_gradients_hand_values() {
        let phi = Coupling::quadratic(k1(1.0), 2.0, 0.0).unwrap();
        let u = p(&[1.0], &[1.0]);
        assert_eq!(phi.grad_x(&u).unwrap(), vec![3.0]);
        let phi2 = Coupling::quadratic(k1(1.0), 0.0, 2.0).unwrap();
        assert_eq!(phi2.grad_y(&u).unwrap(), vec![-1.0]);
        let phi3 = Coupling::bilinear(LinearMap::zeros(1, 1)).unwrap();
        assert_eq!(phi3.grad_y(&u).unwrap(), vec![0.0]);
    }

    #[test]
    fn apply_b_blocks() {
        let phi = Coupling::bilinear(LinearMap::identity(2)).unwrap();
        let b = phi.apply_b(&p(&[1.0, 2.0], &[3.0, 4.0])).unwrap();
        assert_eq!(b.x, vec![3.0, 4.0]);
        assert_eq!(b.y, vec![-1.0, -2.0]);
        let zero = phi.apply_b(&p(&[0.0, 0.0], &[0.0, 0.0])).unwrap();
        assert_eq!(zero.norm(), 0.0);

        let phi_q = Coupling::quadratic(k1(1.0), 2.0, 2.0).unwrap();
        let bq = phi_q.apply_b(&p(&[1.0], &[1.0])).unwrap();
        assert_eq!(bq.x, vec![3.0]);
        assert_eq!(bq.y, vec![1.0]);
    }

    #[test]
    fn lipschitz_constant_formula_and_override() {
        let phi0 = Coupling::bilinear(LinearMap::zeros(2, 2)).unwrap();
        assert_eq!(phi0.lipschitz_l(), 0.0);
        let phi = Coupling::bilinear(LinearMap::identity(2)).unwrap();
        assert!((phi.lipschitz_l() - 2f64.sqrt()).abs() < 1e-12);
        let tight = Coupling::bilinear(LinearMap::identity(2))
            .unwrap()
            .with_tight_l(1.0)
            .unwrap();
        assert_eq!(tight.lipschitz_l(), 1.0);
        assert!(Coupling::bilinear(LinearMap::identity(2))
            .unwrap()
            .with_tight_l(-1.0)
            .is_err());
    }

    #[test]
    fn weak_monotonicity_constant() {
        assert_eq!(
            Coupling::bilinear(LinearMap::identity(2))
                .unwrap()
                .weak_mono_gamma(),
            0.0
        );
        let phi = Coupling::quadratic(k1(1.0), 0.3, 0.7).unwrap();
        assert_eq!(phi.weak_mono_gamma(), 0.7);
        let phi0 = Coupling::quadratic(k1(1.0), 0.0, 0.0).unwrap();
        assert_eq!(phi0.weak_mono_gamma(), 0.0);
    }
}
