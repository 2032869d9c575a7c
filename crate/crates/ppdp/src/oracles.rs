//! Independent reference implementations used by tests, the acceptance
//! suite, and the recovery presets: finite-difference gradients, the KKT
//! halfspace projection, literal primal-dual reference iterations, and an
//! exact matrix-game solver.
//!
//! None of these share code with the solver path they validate beyond the
//! core vector module and the prox catalog.

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::linalg::{LinearMap, PrimalDualPoint};
use crate::prox::ProxFunction;
use crate::solver::Halfspace;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Central-difference step.
    pub fd_step: f64,
    /// Largest game dimension the support enumeration will attempt.
    pub game_enum_max: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            game_enum_max: 6,
        }
    }
}

/// Central finite differences of phi at u, one coordinate at a time.
pub fn fd_gradient(phi: &Coupling, u: &PrimalDualPoint, step: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!(
            "fd step must be positive, got {step}"
        )));
    }
    let mut gx = vec![0.0; u.x.len()];
    let mut gy = vec![0.0; u.y.len()];
    for (i, slot) in gx.iter_mut().enumerate() {
        let mut up = u.clone();
        let mut dn = u.clone();
        up.x[i] += step;
        dn.x[i] -= step;
        *slot = (phi.value(&up)? - phi.value(&dn)?) / (2.0 * step);
    }
    for (j, slot) in gy.iter_mut().enumerate() {
        let mut up = u.clone();
        let mut dn = u.clone();
        up.y[j] += step;
        dn.y[j] -= step;
        *slot = (phi.value(&up)? - phi.value(&dn)?) / (2.0 * step);
    }
    Ok((gx, gy))
}

/// Nearest point of the halfspace {z : <z - anchor, normal> <= margin},
/// via the KKT multiplier max(0, (<u - anchor, normal> - margin)/||normal||^2).
pub fn brute_projection(u: &PrimalDualPoint, hs: &Halfspace) -> Result<PrimalDualPoint> {
    let na2 = hs.normal.dot(&hs.normal)?;
    if na2 == 0.0 {
        return Err(Error::NumericalBreakdown(
            "halfspace projection with zero normal".into(),
        ));
    }
    let slack = u.sub(&hs.anchor)?.dot(&hs.normal)? - hs.margin;
    let lambda = (slack / na2).max(0.0);
    u.add_scaled(-lambda, &hs.normal)
}

/// The literal three-line primal-dual iteration with extrapolation
/// parameter `theta_pd`: prox on x, extrapolate, prox on y.
#[allow(clippy::too_many_arguments)]
pub fn reference_pdhg(
    k: &LinearMap,
    f: &ProxFunction,
    g: &ProxFunction,
    tau: f64,
    sigma: f64,
    theta_pd: f64,
    u0: &PrimalDualPoint,
    iters: usize,
) -> Result<Vec<PrimalDualPoint>> {
    if !(tau > 0.0 && sigma > 0.0) {
        return Err(Error::Config(
            "reference_pdhg needs positive tau, sigma".into(),
        ));
    }
    let mut seq = Vec::with_capacity(iters + 1);
    seq.push(u0.clone());
    let mut x = u0.x.clone();
    let mut y = u0.y.clone();
    for _ in 0..iters {
        let kty = k.apply_transpose(&y)?;
        let wx: Vec<f64> = x.iter().zip(&kty).map(|(a, b)| a - tau * b).collect();
        let xn = f.prox(tau, &wx)?;
        let xbar: Vec<f64> = xn
            .iter()
            .zip(&x)
            .map(|(n, o)| n + theta_pd * (n - o))
            .collect();
        let kxb = k.apply(&xbar)?;
        let wy: Vec<f64> = y.iter().zip(&kxb).map(|(a, b)| a + sigma * b).collect();
        let yn = g.prox(sigma, &wy)?;
        x = xn;
        y = yn;
        seq.push(PrimalDualPoint {
            x: x.clone(),
            y: y.clone(),
        });
    }
    Ok(seq)
}

/// The generalized primal-dual iteration written in prediction-correction
/// form: proximal prediction with extrapolated coupling, then the
/// triangular correction [[I, 0], [(1 - theta_pd) sigma K, I]].
#[allow(clippy::too_many_arguments)]
pub fn reference_generalized_pd(
    k: &LinearMap,
    f: &ProxFunction,
    g: &ProxFunction,
    tau: f64,
    sigma: f64,
    theta_pd: f64,
    u0: &PrimalDualPoint,
    iters: usize,
) -> Result<Vec<PrimalDualPoint>> {
    if !(tau > 0.0 && sigma > 0.0) {
        return Err(Error::Config(
            "reference_generalized_pd needs positive tau, sigma".into(),
        ));
    }
    let mut seq = Vec::with_capacity(iters + 1);
    seq.push(u0.clone());
    let mut x = u0.x.clone();
    let mut y = u0.y.clone();
    for _ in 0..iters {
        let kty = k.apply_transpose(&y)?;
        let wx: Vec<f64> = x.iter().zip(&kty).map(|(a, b)| a - tau * b).collect();
        let xt = f.prox(tau, &wx)?;
        let kxt = k.apply(&xt)?;
        let kx = k.apply(&x)?;
        let wy: Vec<f64> = y
            .iter()
            .zip(kxt.iter().zip(&kx))
            .map(|(yi, (t, o))| yi + sigma * (1.0 + theta_pd) * t - sigma * theta_pd * o)
            .collect();
        let yt = g.prox(sigma, &wy)?;
        let dx: Vec<f64> = x.iter().zip(&xt).map(|(a, b)| a - b).collect();
        let kdx = k.apply(&dx)?;
        x = xt;
        y = yt
            .iter()
            .zip(&kdx)
            .map(|(yi, d)| yi - (1.0 - theta_pd) * sigma * d)
            .collect();
        seq.push(PrimalDualPoint {
            x: x.clone(),
            y: y.clone(),
        });
    }
    Ok(seq)
}

type Rat = BigRational;

fn rat(v: f64) -> Rat {
    BigRational::from_f64(v).expect("finite payoff entry")
}

/// Gaussian elimination over exact rationals; None when singular.
#[allow(clippy::needless_range_loop)]
fn solve_rational(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col].clone();
        for v in a[col].iter_mut() {
            *v /= p.clone();
        }
        b[col] /= p;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..n {
                    let sub = &f * &a[col][c];
                    a[r][c] -= sub;
                }
                let sub = &f * &b[col];
                b[r] -= sub;
            }
        }
    }
    Some(b)
}

/// Lexicographically next size-k index subset; standard odometer step.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact mixed equilibrium of the zero-sum game value = min_x max_y y^T K x
/// over probability simplices, by support enumeration with rational
/// arithmetic. Deterministic tie-break: smallest support size first, then
/// lexicographic on the y support, then on the x support. The returned pair
/// satisfies the saddle inequalities exactly in rational arithmetic.
pub fn solve_matrix_game_exact(
    payoff: &LinearMap,
    cfg: &OracleConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let m = payoff.rows();
    let n = payoff.cols();
    if m == 0 || n == 0 {
        return Err(Error::Config("empty payoff matrix".into()));
    }
    if m > cfg.game_enum_max || n > cfg.game_enum_max {
        return Err(Error::EnumerationExhausted(cfg.game_enum_max));
    }
    let kq: Vec<Vec<Rat>> = (0..m)
        .map(|i| (0..n).map(|j| rat(payoff.get(i, j))).collect())
        .collect();

    for size in 1..=m.min(n) {
        let mut rows: Vec<usize> = (0..size).collect();
        loop {
            let mut cols: Vec<usize> = (0..size).collect();
            loop {
                if let Some(out) = try_support(&kq, m, n, &rows, &cols) {
                    return Ok(out);
                }
                if !next_combination(&mut cols, n) {
                    break;
                }
            }
            if !next_combination(&mut rows, m) {
                break;
            }
        }
    }
    // a finite zero-sum game always has an equilibrium; reaching this point
    // would mean the enumeration itself is wrong
    Err(Error::NumericalBreakdown(
        "support enumeration found no equilibrium".into(),
    ))
}

fn try_support(
    kq: &[Vec<Rat>],
    m: usize,
    n: usize,
    rows: &[usize],
    cols: &[usize],
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let size = rows.len();
    let one = Rat::from_integer(BigInt::from(1));

    // x on `cols` and game value v: K x is constant (= v) across `rows`,
    // and x sums to one.
    let mut ax: Vec<Vec<Rat>> = Vec::with_capacity(size + 1);
    let mut bx: Vec<Rat> = Vec::with_capacity(size + 1);
    for &i in rows {
        let mut row: Vec<Rat> = cols.iter().map(|&j| kq[i][j].clone()).collect();
        row.push(-one.clone());
        ax.push(row);
        bx.push(Rat::zero());
    }
    let mut last = vec![one.clone(); size];
    last.push(Rat::zero());
    ax.push(last);
    bx.push(one.clone());
    let solx = solve_rational(ax, bx)?;
    let (xs, v) = (&solx[..size], solx[size].clone());

    // y on `rows` and value w, by the same system on the transpose.
    let mut ay: Vec<Vec<Rat>> = Vec::with_capacity(size + 1);
    let mut by: Vec<Rat> = Vec::with_capacity(size + 1);
    for &j in cols {
        let mut row: Vec<Rat> = rows.iter().map(|&i| kq[i][j].clone()).collect();
        row.push(-one.clone());
        ay.push(row);
        by.push(Rat::zero());
    }
    let mut last = vec![one.clone(); size];
    last.push(Rat::zero());
    ay.push(last);
    by.push(one.clone());
    let soly = solve_rational(ay, by)?;
    let (ys, w) = (&soly[..size], soly[size].clone());

    if v != w {
        return None;
    }
    if xs.iter().any(|x| x.is_negative()) || ys.iter().any(|y| y.is_negative()) {
        return None;
    }

    let mut x = vec![Rat::zero(); n];
    let mut y = vec![Rat::zero(); m];
    for (slot, &j) in cols.iter().enumerate() {
        x[j] = xs[slot].clone();
    }
    for (slot, &i) in rows.iter().enumerate() {
        y[i] = ys[slot].clone();
    }

    // saddle inequalities: (K x)_i <= v everywhere, (K^T y)_j >= v everywhere
    for row in kq.iter() {
        let kx: Rat = row.iter().zip(&x).map(|(k, xj)| k * xj).sum();
        if kx > v {
            return None;
        }
    }
    for j in 0..n {
        let kty: Rat = kq.iter().zip(&y).map(|(row, yi)| &row[j] * yi).sum();
        if kty < v {
            return None;
        }
    }

    Some((
        x.iter().map(|r| r.to_f64().unwrap()).collect(),
        y.iter().map(|r| r.to_f64().unwrap()).collect(),
        v.to_f64().unwrap(),
    ))
}
