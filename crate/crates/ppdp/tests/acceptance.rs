//! End-to-end certification suite: each test drives one of the promised
//! guarantees at its stated tolerance on the built-in presets and prints a
//! pass line. Runs use tol = 0 so the iteration budget is spent in full; a
//! run may only stop early when its residual is exactly zero.

use ppdp::config::{build, preset};
use ppdp::diagnostics::{
    build_matrices, check_contraction, check_fejer, check_h_seminorm_decay, check_separation,
    check_stepsize_bracket, fit_rate, CheckStatus,
};
use ppdp::oracles::{brute_projection, fd_gradient, reference_generalized_pd, reference_pdhg};
use ppdp::solver::{
    project_relax, solve, stepsize_t, Algorithm, Correction, Halfspace, SolveOutput, SolverConfig,
    StepsizeMode, ThetaMode,
};
use ppdp::{
    BuiltRun, Coupling, DiagonalMap, LinearMap, PreconditionerSpec, PrimalDualPoint,
    ProblemInstance, ProxFunction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MONOTONE_PRESETS: [&str; 3] = ["quadratic_monotone", "matrix_game_5x5", "lasso_small"];

fn run_preset(name: &str, patch: impl FnOnce(&mut SolverConfig)) -> (BuiltRun, SolveOutput) {
    let mut cfg = preset(name).expect("preset exists");
    patch(&mut cfg.solver);
    let built = build(&cfg).expect("preset builds");
    let out = solve(&built.problem, &built.spec, &built.solver, &built.u0).expect("solve runs");
    (built, out)
}

fn full_budget(cfg: &mut SolverConfig, iters: usize) {
    cfg.tol = 0.0;
    cfg.max_iter = iters;
}

fn assert_full_length(name: &str, out: &SolveOutput, want: usize) {
    let enough = out.trace.rows.len() > want || out.state.residual == 0.0;
    assert!(
        enough,
        "{name}: run ended after {} rows with residual {:.3e}",
        out.trace.rows.len(),
        out.state.residual
    );
}

#[test]
fn separation_certificates_hold_on_monotone_presets() {
    let started = std::time::Instant::now();
    for name in MONOTONE_PRESETS {
        let (built, out) = run_preset(name, |s| full_budget(s, 400));
        assert_full_length(name, &out, 300);
        let report = check_separation(&built.problem, &built.spec, &out.trace, &out.history)
            .expect("separation check runs");
        assert_eq!(
            report.status,
            CheckStatus::Pass,
            "{name}: separation violated at iteration {:?} by {:.3e}",
            report.first_violation,
            report.max_violation
        );
        assert!(report.checked >= 1);
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "separation suite took {elapsed:?}, budget is 5 s"
    );
    println!("acceptance: separation certificates on monotone presets: PASS ({elapsed:?})");
}

#[test]
fn stepsizes_stay_in_the_analytic_bracket() {
    for name in [
        "quadratic_monotone",
        "matrix_game_5x5",
        "lasso_small",
        "quadratic_strong",
    ] {
        let (_, out) = run_preset(name, |s| full_budget(s, 400));
        let report = check_stepsize_bracket(&out.trace);
        assert_eq!(
            report.status,
            CheckStatus::Pass,
            "{name}: stepsize left the bracket at iteration {:?} by {:.3e}",
            report.first_violation,
            report.max_violation
        );
        assert!(report.checked >= 1, "{name}: no stepsizes checked");
    }
    println!("acceptance: projection stepsizes within the analytic bracket: PASS");
}

#[test]
fn fejer_monotonicity_holds_toward_known_solutions() {
    for name in [
        "quadratic_monotone",
        "matrix_game_5x5",
        "lasso_small",
        "quadratic_strong",
    ] {
        let (built, out) = run_preset(name, |s| full_budget(s, 400));
        let z = built
            .problem
            .known_solution
            .as_ref()
            .expect("known solution");
        let report = check_fejer(&built.problem, &built.spec, &out.trace, z, &out.history)
            .expect("fejer check runs");
        assert_eq!(
            report.status,
            CheckStatus::Pass,
            "{name}: distance growth at iteration {:?} by {:.3e}",
            report.first_violation,
            report.max_violation
        );
    }
    println!("acceptance: Fejer monotonicity toward known solutions: PASS");
}

#[test]
fn h_seminorm_decay_and_contraction_certificates() {
    // probe the constants to place the constant stepsize at the analytic
    // lower bound of the bracket
    let mut cfg = preset("quadratic_monotone").unwrap();
    let probe = build(&cfg).unwrap();
    let t = probe.spec.constants(&probe.problem.phi, 0.5, 1.0).t_lower;
    cfg.solver.tol = 0.0;
    cfg.solver.max_iter = 400;
    cfg.solver.theta = ThetaMode::Constant { value: 0.5 };
    cfg.solver.stepsize = StepsizeMode::Constant { t };
    let built = build(&cfg).unwrap();
    let out = solve(&built.problem, &built.spec, &built.solver, &built.u0).unwrap();

    let consts = built.spec.constants(&built.problem.phi, 0.5, t);
    assert!(
        consts.flag_d_pd && consts.flag_g_pd,
        "metric flags must hold"
    );
    assert!(
        out.trace
            .rows
            .iter()
            .take(10)
            .all(|r| r.h_seminorm.is_some()),
        "h column missing"
    );

    let mats = build_matrices(&built.spec, &built.problem.phi, 0.5, t).unwrap();
    let z = built.problem.known_solution.as_ref().unwrap();

    let decay = check_h_seminorm_decay(&out.trace, Some(&mats), &out.history[0], z).unwrap();
    assert_eq!(
        decay.status,
        CheckStatus::Pass,
        "h-seminorm increase at {:?}",
        decay.first_violation
    );
    assert!(
        decay.c_fit > 0.0,
        "fitted sublinear constant must be positive"
    );
    assert!(decay.sup_weighted.is_finite());

    let contraction = check_contraction(&built.problem, &built.spec, &mats, &out.history, z)
        .expect("contraction check runs");
    assert_eq!(
        contraction.status,
        CheckStatus::Pass,
        "H-metric contraction violated at {:?} by {:.3e}",
        contraction.first_violation,
        contraction.max_violation
    );
    println!(
        "acceptance: H-seminorm decay (c_fit = {:.3}) and per-step contraction: PASS",
        decay.c_fit
    );
}

#[test]
fn strongly_monotone_preset_converges_linearly() {
    let (_, out) = run_preset("quadratic_strong", |s| full_budget(s, 200));
    assert!(
        out.state.residual < 1e-10,
        "final residual {:.3e} above 1e-10",
        out.state.residual
    );
    let fit = fit_rate(&out.trace).expect("enough rows");
    let factor = fit.linear_factor.expect("linear factor detected");
    assert!(factor < 1.0);
    assert!(fit.r_squared > 0.95, "r^2 = {}", fit.r_squared);
    println!(
        "acceptance: linear rate on the strongly monotone preset (factor {:.4}, r^2 {:.6}): PASS",
        factor, fit.r_squared
    );
}

fn random_bilinear_instance(rng: &mut ChaCha8Rng, idx: usize) -> (ProblemInstance, f64, f64) {
    let m = rng.random_range(1..=4);
    let n = rng.random_range(1..=4);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let k = LinearMap::from_rows(rows).unwrap();
    let f = if idx.is_multiple_of(2) {
        ProxFunction::l1(n, rng.random_range(0.1..1.0)).unwrap()
    } else {
        ProxFunction::zero(n)
    };
    let g = ProxFunction::squared_l2(m, 1.0)
        .unwrap()
        .with_tilt((0..m).map(|_| rng.random_range(-0.5..0.5)).collect())
        .unwrap();
    let phi = Coupling::bilinear(k).unwrap();
    let problem = ProblemInstance::new("random_bilinear", f, g, phi, None, true).unwrap();
    let tau = rng.random_range(0.2..0.7);
    let sigma = rng.random_range(0.2..0.7);
    (problem, tau, sigma)
}

fn random_start(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PrimalDualPoint {
    PrimalDualPoint::new(
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap()
}

fn relaxed_spec(
    problem: &ProblemInstance,
    tau: f64,
    sigma: f64,
    q_factor: f64,
) -> PreconditionerSpec {
    PreconditionerSpec::new(
        DiagonalMap::scaled_identity(problem.n(), 1.0 / tau).unwrap(),
        DiagonalMap::scaled_identity(problem.m(), 1.0 / sigma).unwrap(),
        problem.phi.k().scale(q_factor),
    )
    .unwrap()
}

fn max_history_deviation(ours: &[PrimalDualPoint], reference: &[PrimalDualPoint]) -> f64 {
    assert_eq!(ours.len(), reference.len());
    ours.iter()
        .zip(reference)
        .map(|(a, b)| {
            let d = a.sub(b).unwrap();
            d.x.iter()
                .chain(d.y.iter())
                .fold(0.0f64, |acc, v| acc.max(v.abs()))
        })
        .fold(0.0, f64::max)
}

#[test]
fn relaxed_algorithm_reproduces_pdhg() {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let mut worst: f64 = 0.0;
    for idx in 0..20 {
        let (problem, tau, sigma) = random_bilinear_instance(&mut rng, idx);
        let u0 = random_start(&mut rng, problem.n(), problem.m());
        let spec = relaxed_spec(&problem, tau, sigma, -2.0);
        let config = SolverConfig {
            algorithm: Algorithm::Relaxed,
            correction: Correction::Identity,
            tol: 0.0,
            max_iter: 100,
            allow_unverified: true,
            ..Default::default()
        };
        let out = solve(&problem, &spec, &config, &u0).unwrap();
        let iters = out.history.len() - 1;
        let reference = reference_pdhg(
            problem.phi.k(),
            &problem.f,
            &problem.g,
            tau,
            sigma,
            1.0,
            &u0,
            iters,
        )
        .unwrap();
        let dev = max_history_deviation(&out.history, &reference);
        assert!(dev <= 1e-12, "instance {idx}: deviation {dev:.3e}");
        worst = worst.max(dev);
    }
    println!(
        "acceptance: relaxed algorithm matches the PDHG reference (max dev {worst:.3e}): PASS"
    );
}

#[test]
fn relaxed_algorithm_reproduces_generalized_pd() {
    let mut rng = ChaCha8Rng::seed_from_u64(602);
    let mut worst: f64 = 0.0;
    for theta_pd in [0.0, 0.5, 1.0] {
        for run in 0..7 {
            let (problem, tau, sigma) = random_bilinear_instance(&mut rng, run);
            let u0 = random_start(&mut rng, problem.n(), problem.m());
            let spec = relaxed_spec(&problem, tau, sigma, -(theta_pd + 1.0));
            let config = SolverConfig {
                algorithm: Algorithm::Relaxed,
                correction: Correction::GeneralizedPd { sigma, theta_pd },
                tol: 0.0,
                max_iter: 100,
                allow_unverified: true,
                ..Default::default()
            };
            let out = solve(&problem, &spec, &config, &u0).unwrap();
            let iters = out.history.len() - 1;
            let reference = reference_generalized_pd(
                problem.phi.k(),
                &problem.f,
                &problem.g,
                tau,
                sigma,
                theta_pd,
                &u0,
                iters,
            )
            .unwrap();
            let dev = max_history_deviation(&out.history, &reference);
            assert!(
                dev <= 1e-12,
                "theta_pd {theta_pd}, run {run}: deviation {dev:.3e}"
            );
            worst = worst.max(dev);
        }
    }
    println!(
        "acceptance: relaxed algorithm matches the generalized primal-dual reference (max dev {worst:.3e}): PASS"
    );
}

#[test]
fn projection_matches_the_kkt_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(603);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let mut normal = random_start(&mut rng, n, m);
        if normal.norm() < 1e-6 {
            normal.x[0] += 1.0;
        }
        let hs = Halfspace {
            normal,
            anchor: random_start(&mut rng, n, m),
            margin: rng.random_range(0.0..1.0),
        };
        let u = random_start(&mut rng, n, m);
        let ours = if hs.psi(&u).unwrap() > 0.0 {
            let t = stepsize_t(&u, &hs.anchor, &hs).unwrap();
            project_relax(&u, &hs, t, 1.0).unwrap()
        } else {
            u.clone()
        };
        let oracle = brute_projection(&u, &hs).unwrap();
        let dev = ours.dist(&oracle).unwrap();
        assert!(dev <= 1e-10, "case {case}: deviation {dev:.3e}");
        worst = worst.max(dev);
    }
    println!("acceptance: halfspace projection matches the KKT oracle (max dev {worst:.3e}): PASS");
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(604);
    let couplings: Vec<Coupling> = vec![
        Coupling::bilinear(
            LinearMap::from_rows(vec![vec![0.6, -0.8, 0.1], vec![0.8, 0.6, -0.3]]).unwrap(),
        )
        .unwrap(),
        Coupling::quadratic(
            LinearMap::from_rows(vec![vec![1.2, -0.4], vec![0.5, 0.9]]).unwrap(),
            0.7,
            -0.3,
        )
        .unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for phi in &couplings {
        for _ in 0..50 {
            let u = random_start(&mut rng, phi.n(), phi.m());
            let (fx, fy) = fd_gradient(phi, &u, 1e-6).unwrap();
            let gx = phi.grad_x(&u).unwrap();
            let gy = phi.grad_y(&u).unwrap();
            let scale = gx
                .iter()
                .chain(gy.iter())
                .fold(1.0f64, |acc, v| acc.max(v.abs()));
            let err = fx
                .iter()
                .zip(&gx)
                .chain(fy.iter().zip(&gy))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                / scale;
            assert!(err < 1e-6, "relative gradient error {err:.3e}");
            worst = worst.max(err);
        }
    }
    println!("acceptance: analytic coupling gradients match finite differences (max rel err {worst:.3e}): PASS");
}

#[test]
fn weakly_monotone_preset_converges_to_the_origin() {
    let (built, out) = run_preset("quadratic_weak", |_| {});
    assert_eq!(out.state.status, ppdp::ExitStatus::Converged);
    assert!(out.state.k <= 5000);
    assert!(out.state.residual <= 1e-8);
    let dist = out.state.u.norm();
    assert!(dist <= 1e-6, "distance to the origin {dist:.3e}");
    assert!(!built.problem.monotone);
    println!(
        "acceptance: weakly monotone preset converged in {} iterations (dist {:.3e}): PASS",
        out.state.k, dist
    );
}

#[test]
fn known_solutions_are_fixed_points_of_the_prediction() {
    let mut checked = 0;
    for name in [
        "quadratic_monotone",
        "quadratic_strong",
        "quadratic_weak",
        "matrix_game_5x5",
        "lasso_small",
        "pdhg_recovery",
    ] {
        let cfg = preset(name).unwrap();
        let built = build(&cfg).unwrap();
        let z = built
            .problem
            .known_solution
            .as_ref()
            .expect("preset has a known solution");
        let r = built
            .spec
            .warped_resolvent(&built.problem.f, &built.problem.g, &built.problem.phi, z)
            .unwrap();
        let gap = r.dist(z).unwrap();
        assert!(gap <= 1e-10, "{name}: fixed-point gap {gap:.3e}");
        checked += 1;
    }
    // catalog closed forms outside the presets
    let extra = ppdp::make_l1_bilinear(LinearMap::identity(2), vec![3.0, 0.0], 1.0).unwrap();
    let spec = PreconditionerSpec::scaled_identity(2, 2, 0.5, 0.5).unwrap();
    let z = extra.known_solution.as_ref().unwrap();
    let r = spec
        .warped_resolvent(&extra.f, &extra.g, &extra.phi, z)
        .unwrap();
    assert!(r.dist(z).unwrap() <= 1e-10);
    checked += 1;
    println!("acceptance: known solutions are prediction fixed points ({checked} instances): PASS");
}

#[test]
fn matrix_game_run_reaches_small_duality_gap() {
    let (built, out) = run_preset("matrix_game_5x5", |s| s.tol = 1e-6);
    assert_eq!(out.state.status, ppdp::ExitStatus::Converged);
    // tail-averaged predictions stay on the simplex; their duality gap
    // against the exact oracle value certifies the equilibrium
    let half = out.history.len() / 2;
    let k = built.problem.phi.k();
    let n = built.problem.n();
    let m = built.problem.m();
    let mut xbar = vec![0.0; n];
    let mut ybar = vec![0.0; m];
    let mut count = 0.0;
    for u in &out.history[half..] {
        let r = built
            .spec
            .warped_resolvent(&built.problem.f, &built.problem.g, &built.problem.phi, u)
            .unwrap();
        for (acc, v) in xbar.iter_mut().zip(&r.x) {
            *acc += v;
        }
        for (acc, v) in ybar.iter_mut().zip(&r.y) {
            *acc += v;
        }
        count += 1.0;
    }
    for v in xbar.iter_mut().chain(ybar.iter_mut()) {
        *v /= count;
    }
    let kx = k.apply(&xbar).unwrap();
    let kty = k.apply_transpose(&ybar).unwrap();
    let gap =
        kx.iter().cloned().fold(f64::MIN, f64::max) - kty.iter().cloned().fold(f64::MAX, f64::min);
    assert!(gap < 1e-5, "duality gap of the averaged iterate {gap:.3e}");
    println!("acceptance: matrix game averaged-iterate duality gap {gap:.3e} < 1e-5: PASS");
}
