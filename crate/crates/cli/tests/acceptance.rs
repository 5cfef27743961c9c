//! End-to-end acceptance suite. One test per criterion, each printing a
//! single pass/fail line (run with `-- --nocapture` to see them all).

use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use fbsde_core::coeff::{CoefficientFlags, CoefficientSet, ConstantsRecord, Dims, EvalCtx};
use fbsde_core::conditions::{lambda_window_optimal, lower_bound_at, weights_admissible, yin_lower_bound};
use fbsde_core::control::{
    adjoint_solve, cost, fd_gradient, optimize_policy, policy_gradient, verify_max_principle,
    ControlProblem, Policy, VerifyConfig,
};
use fbsde_core::field::{
    build_field, decoupling_residual, ikw_standard_cases, ikw_residual, stationarity_test,
    z_consistency_residual, Lattice,
};
use fbsde_core::grid::TimeGrid;
use fbsde_core::models::{
    black_consol_constant, dornbusch_model, dornbusch_oracle, dornbusch_oracle_residual,
    krugman_model, DornbuschParams, ModelSpec, SignMap,
};
use fbsde_core::picard::{
    comparison_harness, sensitivity_harness, solve_fbsde, SolveConfig, SolveMode,
};
use fbsde_core::rng;
use fbsde_core::stats::line_fit;

fn report(id: u32, name: &str, ok: bool) -> bool {
    println!("criterion {id:2} ({name}): {}", if ok { "pass" } else { "FAIL" });
    ok
}

/// Uniform in (0,1) from the deterministic counter generator.
fn uniform(seed: u64, a: u64, b: u64) -> f64 {
    ((rng::key(seed, a, b, 0) >> 11) as f64) * (1.0 / 9007199254740992.0)
}

// ---------------------------------------------------------------- criterion 1

/// Zooming log-grid minimization of the window lower bound over the
/// auxiliary weights, independent of the closed-form optimum.
fn grid_minimize_lower(c: &ConstantsRecord, gamma: f64) -> f64 {
    let full = (1e-3f64.ln(), 1e3f64.ln());
    let (mut lo1, mut hi1) = full;
    let (mut lo2, mut hi2) = full;
    let mut best = f64::INFINITY;
    let (mut b1, mut b2) = (0.0, 0.0);
    for round in 0..14 {
        let m = if round == 0 { 48 } else { 24 };
        for i in 0..=m {
            let r1 = (lo1 + (hi1 - lo1) * i as f64 / m as f64).exp();
            for j in 0..=m {
                let r2 = (lo2 + (hi2 - lo2) * j as f64 / m as f64).exp();
                if !weights_admissible(c, gamma, r1, r2) {
                    continue;
                }
                let v = lower_bound_at(c, gamma, r1, r2);
                if v.is_finite() && v < best {
                    best = v;
                    b1 = r1.ln();
                    b2 = r2.ln();
                }
            }
        }
        let (w1, w2) = ((hi1 - lo1) / 4.0, (hi2 - lo2) / 4.0);
        lo1 = (b1 - w1 / 2.0).max(full.0);
        hi1 = (b1 + w1 / 2.0).min(full.1);
        lo2 = (b2 - w2 / 2.0).max(full.0);
        hi2 = (b2 + w2 / 2.0).min(full.1);
    }
    best
}

#[test]
fn criterion_01_lambda_window_algebra() {
    let started = Instant::now();
    // Exact instance: mu2 = 0, c1 = 1, c2 = 0 with coupling ratio 1.
    let c = ConstantsRecord { c1: 1.0, k2: 1.0, ..Default::default() };
    let w = lambda_window_optimal(&c).expect("window");
    let mut ok = (w.gamma - 1.0).abs() < 1e-12
        && (w.lower - 3.0).abs() < 1e-12
        && (yin_lower_bound(&c) - 5.0).abs() < 1e-12;

    // Random admissible records: strict dominance over the literature bound
    // and agreement of the closed-form optimum with a grid search.
    let mut worst_rel = 0.0f64;
    for s in 0..10_000u64 {
        let u = |j: u64| uniform(42, s, j);
        let c = ConstantsRecord {
            mu2: -1.0 + 2.0 * u(0),
            c1: 0.05 + 1.45 * u(1),
            c2: 0.9 * u(2),
            k1: 0.05 + u(3),
            k2: u(4),
            k4: 0.05 + u(5),
            k5: u(6),
            eps1: 0.5 + 1.5 * u(7),
            eps2: 0.5 + 1.5 * u(8),
            ..Default::default()
        };
        let w = lambda_window_optimal(&c).expect("window");
        if w.lower >= yin_lower_bound(&c) {
            ok = false;
            break;
        }
        // The grid search is expensive; spot-check a deterministic subsample.
        if s % 100 == 0 {
            let grid = grid_minimize_lower(&c, w.gamma);
            worst_rel = worst_rel.max((grid - w.lower).abs() / (1.0 + w.lower.abs()));
        }
    }
    ok &= worst_rel < 1e-6;
    ok &= started.elapsed().as_secs_f64() < 10.0;
    assert!(
        report(1, "lambda-window algebra", ok),
        "worst grid/closed-form gap {worst_rel:.3e}, elapsed {:?}",
        started.elapsed()
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_02_krugman_reproduction() {
    let started = Instant::now();
    let model = krugman_model(5.0, 0.1, 1.0).expect("model");
    let cfg = SolveConfig {
        lambda: model.lambda_default,
        paths: 100_000,
        probe_paths: 5_000,
        dt: 0.01,
        horizon: 10.0,
        // Stage acceptance: the tail rule still decides the horizon; the
        // Y(0)-stabilization tolerance just has to sit below the 1 percent
        // accuracy target rather than at the Picard default.
        tol: 1e-3,
        ..Default::default()
    };
    let r = solve_fbsde(&model.coeffs, &[0.0], None, &cfg).expect("solve");
    let y0 = r.diag.y0[0];
    let se = r.diag.y0_se;
    let mut ok = r.diag.converged;
    ok &= (y0 - 1.0).abs() < (3.0 * se).max(0.01);
    ok &= (r.diag.z_avg[0] - 0.1).abs() < 0.05 * 0.1;
    ok &= r.diag.tail < cfg.tail_tol;

    // The production run above takes the decoupled single-pass route, which
    // performs no Picard iteration; the contraction-ratio property is
    // demonstrated in the iterative mode at a path count whose stored
    // tensors fit in memory.
    let cfg_iter = SolveConfig {
        lambda: model.lambda_default,
        paths: 2_000,
        dt: 0.01,
        horizon: 20.0,
        refine_horizon: false,
        mode: SolveMode::Gamma2,
        ..Default::default()
    };
    let ri = solve_fbsde(&model.coeffs, &[0.0], None, &cfg_iter).expect("iterative solve");
    ok &= ri.diag.converged;
    ok &= ri.diag.iterations <= 30;
    ok &= !ri.diag.contraction_ratios.is_empty();
    ok &= ri.diag.contraction_ratios.iter().all(|r| *r < 1.0);

    let elapsed = started.elapsed().as_secs_f64();
    ok &= elapsed < 120.0;
    assert!(
        report(2, "krugman reproduction", ok),
        "y0 {y0} (se {se}), z {:?}, T {}, iterations {}, ratios {:?}, {elapsed:.1}s",
        r.diag.z_avg,
        r.diag.horizon_used,
        ri.diag.iterations,
        ri.diag.contraction_ratios,
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_03_dornbusch_affine_oracle() {
    let p = DornbuschParams {
        nu: 1.0,
        xi: 0.2,
        vartheta: 1.0,
        eta: 0.3,
        phi: 0.5,
        sigma: 0.1,
        m: 1.0,
    };
    let (alpha, beta) = dornbusch_oracle(&p).expect("oracle");
    let (res_a, res_b) = dornbusch_oracle_residual(&p, alpha, beta).expect("residual");
    let mut ok = res_a.abs() < 1e-12 && res_b.abs() < 1e-12;

    let model = dornbusch_model(p).expect("model");
    let x0 = model.x0_default.clone();
    let cfg = SolveConfig {
        lambda: model.lambda_default,
        paths: 5_000,
        dt: 0.02,
        horizon: 40.0,
        refine_horizon: false,
        ..Default::default()
    };
    let r = solve_fbsde(&model.coeffs, &x0, None, &cfg).expect("solve");
    ok &= r.diag.converged;
    // The parameter set must actually pass the window check.
    ok &= r.diag.lambda_inside_window == Some(true);
    let target = alpha * x0[0] + beta;
    let tol = (3.0 * r.diag.y0_se).max(0.02 * target.abs());
    ok &= (r.diag.y0[0] - target).abs() < tol;
    assert!(
        report(3, "dornbusch affine oracle", ok),
        "y0 {} vs {target} (tol {tol}), window {:?}",
        r.diag.y0[0],
        r.diag.window,
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_black_consol_constant_rate() {
    let model = black_consol_constant();
    let cfg = SolveConfig {
        lambda: model.lambda_default,
        paths: 1_000,
        dt: 0.01,
        horizon: 10.0,
        ..Default::default()
    };
    let r = solve_fbsde(&model.coeffs, &[0.05], None, &cfg).expect("solve");
    let y0 = r.diag.y0[0];
    let tol = (3.0 * r.diag.y0_se).max(0.02 * 20.0);
    let ok = r.diag.converged && (y0 - 20.0).abs() < tol && r.diag.tail < 1e-6;
    assert!(
        report(4, "black consol constant rate", ok),
        "y0 {y0} (tol {tol}), tail {:.3e}, T {}",
        r.diag.tail,
        r.diag.horizon_used
    );
}

// ---------------------------------------------------------------- criterion 5

/// Clone a coefficient set with the driver shifted up by `delta`.
fn lifted(base: &CoefficientSet, delta: f64) -> CoefficientSet {
    let mut cs = base.clone();
    let inner = base.f.clone();
    cs.f = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
        inner(ctx, out);
        out[0] += delta;
    });
    cs
}

#[test]
fn criterion_05_comparison_theorem() {
    let mut ok = true;
    let cfg = SolveConfig {
        lambda: -0.2,
        paths: 4_000,
        dt: 0.02,
        horizon: 20.0,
        refine_horizon: false,
        ..Default::default()
    };
    for pair in 0..20u64 {
        let u = |j: u64| uniform(905, pair, j);
        let (fa, fx, fy) = (-0.5 + u(0), 0.1 * u(1), -1.0 + 0.7 * u(2));
        let (bc, bx) = (-0.5 + u(3), -0.5 + 0.4 * u(4));
        let sig = 0.05 + 0.25 * u(5);
        let x0 = -0.5 + u(6);
        let delta = if pair % 2 == 0 { 0.1 } else { 0.5 };
        let mut base = CoefficientSet::zero(Dims { n: 1, m: 1, d: 1 });
        base.b = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| out[0] = bc + bx * ctx.x[0]);
        base.sigma = Arc::new(move |_ctx: &EvalCtx, out: &mut [f64]| out[0] = sig);
        base.f = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
            out[0] = fa + fx * ctx.x[0] + fy * ctx.y[0];
        });
        let high = lifted(&base, delta);
        let rep = comparison_harness(&high, &base, &[x0], &cfg).expect("comparison");
        ok &= rep.pass && rep.spot_check_violations == 0;
    }

    // Krugman pair: shifting the driver by delta moves Y(0) by delta * gamma.
    let gamma = 5.0;
    let delta = 0.1;
    let model = krugman_model(gamma, 0.1, 1.0).expect("model");
    let cfg_k = SolveConfig {
        lambda: model.lambda_default,
        paths: 4_000,
        dt: 0.02,
        horizon: 40.0,
        refine_horizon: false,
        ..Default::default()
    };
    let high = lifted(&model.coeffs, delta);
    let rep = comparison_harness(&high, &model.coeffs, &[0.0], &cfg_k).expect("krugman pair");
    ok &= rep.pass;
    let gap_ok = (rep.diff - delta * gamma).abs() < 0.02 * delta * gamma;
    ok &= gap_ok;
    assert!(
        report(5, "comparison theorem", ok),
        "krugman gap {} vs {}",
        rep.diff,
        delta * gamma
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_continuous_dependence() {
    let model = krugman_model(5.0, 0.1, 1.0).expect("model");
    let cfg = SolveConfig {
        lambda: model.lambda_default,
        paths: 2_000,
        dt: 0.01,
        horizon: 10.0,
        ..Default::default()
    };
    let rep = sensitivity_harness(
        &model.coeffs,
        &[0.0],
        &[0.4, 0.2, 0.1, 0.05],
        &[0.2, 0.1, 0.05],
        &cfg,
    )
    .expect("sensitivity");
    let ok = rep.pass && (rep.spatial_slope - 2.0).abs() <= 0.3;
    assert!(
        report(6, "continuous dependence", ok),
        "spatial slope {}, fitted constant {}, ratios {:?}",
        rep.spatial_slope,
        rep.fitted_constant,
        rep.spatial.iter().map(|r| r.ratio).collect::<Vec<_>>()
    );
}

// ---------------------------------------------------------------- criterion 7

fn field_residuals(model: &ModelSpec, lo: f64, hi: f64) -> (f64, f64) {
    let points = ((hi - lo) / 0.05).round() as usize + 1;
    let lattice = Lattice::regular(&[lo], &[hi], &[points]).expect("lattice");
    let field_cfg = SolveConfig {
        lambda: model.lambda_default,
        paths: 500,
        dt: 0.01,
        horizon: 20.0,
        refine_horizon: false,
        ..Default::default()
    };
    let field = build_field(model, &[0.0], lattice, &field_cfg).expect("field");
    let solve_cfg = SolveConfig {
        lambda: model.lambda_default,
        paths: 2_000,
        dt: 0.01,
        horizon: 20.0,
        refine_horizon: false,
        store_paths: true,
        ..Default::default()
    };
    let dec = decoupling_residual(model, &field, &solve_cfg).expect("decoupling");
    let r = solve_fbsde(&model.coeffs, &model.x0_default, None, &solve_cfg).expect("solve");
    let zc = z_consistency_residual(model, &field, r.triple.as_ref().expect("triple"))
        .expect("z consistency");
    (dec, zc)
}

#[test]
fn criterion_07_decoupling_identity() {
    let krugman = krugman_model(5.0, 0.1, 1.0).expect("model");
    let (dec_k, zc_k) = field_residuals(&krugman, -1.5, 1.5);
    let dornbusch = dornbusch_model(DornbuschParams {
        nu: 1.0,
        xi: 0.2,
        vartheta: 1.0,
        eta: 0.3,
        phi: 0.5,
        sigma: 0.1,
        m: 1.0,
    })
    .expect("model");
    let (dec_d, zc_d) = field_residuals(&dornbusch, -0.5, 1.5);
    let ok = dec_k < 1e-2 && zc_k < 5e-2 && dec_d < 1e-2 && zc_d < 5e-2;
    assert!(
        report(7, "decoupling identity", ok),
        "krugman ({dec_k:.3e}, {zc_k:.3e}), dornbusch ({dec_d:.3e}, {zc_d:.3e})"
    );
}

// ---------------------------------------------------------------- criterion 8

/// A deliberately time-inhomogeneous variant (explicit t in the forward
/// drift) with the autonomous flag left on, so the stationarity test runs
/// and must reject it.
fn tilted_model() -> ModelSpec {
    let mut coeffs = CoefficientSet::zero(Dims { n: 1, m: 1, d: 1 });
    coeffs.b = Arc::new(|ctx: &EvalCtx, out: &mut [f64]| out[0] = 0.25 * ctx.t);
    coeffs.sigma = Arc::new(|_ctx: &EvalCtx, out: &mut [f64]| out[0] = 0.1);
    coeffs.f = Arc::new(|ctx: &EvalCtx, out: &mut [f64]| {
        out[0] = (1.0 + ctx.x[0] - ctx.y[0]) / 5.0;
    });
    coeffs.flags = CoefficientFlags {
        sigma_depends_on_z: false,
        deterministic_coefficients: true,
        autonomous: true,
    };
    ModelSpec {
        name: "tilted".into(),
        coeffs,
        oracle: None,
        model_constants: ConstantsRecord::default(),
        sign_map: SignMap { backward_diffusion_sign: -1.0 },
        saddlepoint: None,
        terminal: None,
        lambda_default: -0.38,
        x0_default: vec![0.0],
    }
}

#[test]
fn criterion_08_stationarity() {
    let cfg = |lambda: f64| SolveConfig {
        lambda,
        paths: 200,
        dt: 0.025,
        horizon: 5.0,
        refine_horizon: false,
        ..Default::default()
    };
    let mut ok = true;
    let mut details = String::new();
    let autonomous: Vec<ModelSpec> = vec![
        krugman_model(5.0, 0.1, 1.0).expect("model"),
        dornbusch_model(DornbuschParams {
            nu: 1.0,
            xi: 0.2,
            vartheta: 1.0,
            eta: 0.3,
            phi: 0.5,
            sigma: 0.1,
            m: 1.0,
        })
        .expect("model"),
        black_consol_constant(),
    ];
    for model in &autonomous {
        let rep = stationarity_test(
            model,
            1.0,
            0.5,
            &model.x0_default,
            500,
            &cfg(model.lambda_default),
        )
        .expect("stationarity");
        ok &= rep.p_value > 0.01;
        details.push_str(&format!("{} p={:.3} ", model.name, rep.p_value));
    }
    let tilted = tilted_model();
    let rep = stationarity_test(&tilted, 1.0, 0.5, &[0.0], 500, &cfg(tilted.lambda_default))
        .expect("stationarity");
    ok &= rep.p_value < 0.01;
    details.push_str(&format!("tilted p={:.2e}", rep.p_value));
    assert!(report(8, "stationarity", ok), "{details}");
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_ikw_decomposition() {
    let dts = [0.02f64, 0.01, 0.005];
    let mut ok = true;
    let mut details = String::new();
    for case in ikw_standard_cases() {
        let mut lr = Vec::new();
        for &dt in &dts {
            let steps = (1.0 / dt).round() as usize;
            let grid = TimeGrid::new(0.0, 1.0, steps).expect("grid");
            let r = ikw_residual(&case, grid, 2_000, 11).expect("residual");
            lr.push(r);
        }
        if case.name == "identity" {
            // The identity field's decomposition telescopes exactly; the
            // residual is zero at every step size and the slope is vacuous.
            ok &= lr.iter().all(|r| *r < 1e-14);
            details.push_str("identity exact ");
        } else {
            let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
            let ly: Vec<f64> = lr.iter().map(|r| r.ln()).collect();
            let slope = line_fit(&lx, &ly).0;
            ok &= (slope - 1.0).abs() <= 0.3;
            details.push_str(&format!("{} slope {:.2} ", case.name, slope));
        }
    }
    assert!(report(9, "ito-kunita-wentzell", ok), "{details}");
}

// --------------------------------------------------------------- criterion 10

fn lq_problem() -> Arc<ControlProblem> {
    let gamma = 5.0;
    Arc::new(ControlProblem {
        b: Arc::new(|_ctx: &EvalCtx, _u: &[f64], out: &mut [f64]| out[0] = 0.0),
        sigma: Arc::new(|_ctx: &EvalCtx, _u: &[f64], out: &mut [f64]| out[0] = 0.1),
        f: Arc::new(move |ctx: &EvalCtx, u: &[f64], out: &mut [f64]| {
            out[0] = (u[0] + ctx.x[0] - ctx.y[0]) / gamma;
        }),
        h: Arc::new(|_ctx: &EvalCtx, u: &[f64]| u[0] * u[0]),
        a: Arc::new(|y: &[f64]| (y[0] - 0.5) * (y[0] - 0.5)),
        lambda: -0.15,
        control_box: vec![(-1.0, 1.0)],
        k_dim: 1,
        dims: Dims { n: 1, m: 1, d: 1 },
        constants: ConstantsRecord { mu2: -0.2, c1: 0.2, ..Default::default() },
        flags: CoefficientFlags {
            sigma_depends_on_z: false,
            deterministic_coefficients: true,
            autonomous: true,
        },
    })
}

#[test]
fn criterion_10_maximum_principle() {
    let started = Instant::now();
    let prob = lq_problem();
    let cfg = SolveConfig {
        lambda: -0.15,
        paths: 800,
        dt: 0.05,
        horizon: 40.0,
        refine_horizon: false,
        ..Default::default()
    };
    let start = Policy::open_loop(0.0, 40.0, 16, 1).expect("policy");
    let opt = optimize_policy(&prob, start, &[0.0], &cfg, 400).expect("optimize");

    let vcfg = VerifyConfig { perturbations: 50, ..Default::default() };
    let vr = verify_max_principle(&prob, &opt.policy, &[0.0], &cfg, &vcfg).expect("verify");
    let mut ok = vr.pointwise_pass && vr.convexity_pass && vr.global_pass && vr.pass;

    // Adjoint vs finite-difference gradient at a non-stationary policy (the
    // gradients vanish at the optimum, where a relative comparison is
    // meaningless). The finite step differentiates the discrete-time cost
    // exactly, so the gap closes only as dt does; compare on a finer grid.
    let cfg_fd = SolveConfig { dt: 0.0125, ..cfg };
    let mut probe = opt.policy.clone();
    for v in &mut probe.params {
        *v += 0.2;
    }
    let rep = cost(&prob, &probe, &[0.0], &cfg_fd).expect("cost");
    let adj = adjoint_solve(&prob, &probe, &rep.state, &cfg_fd).expect("adjoint");
    let ga = policy_gradient(&prob, &probe, &rep, &adj).expect("gradient");
    let gf = fd_gradient(&prob, &probe, &[0.0], &cfg_fd, 1e-4).expect("fd gradient");
    let scale = gf.iter().map(|g| g.abs()).fold(0.0f64, f64::max);
    for (a, f) in ga.iter().zip(&gf) {
        ok &= (a - f).abs() <= 0.05 * f.abs().max(0.1 * scale);
    }

    // A shifted candidate must fail the pointwise minimality check.
    let mut shifted = opt.policy.clone();
    for v in &mut shifted.params {
        *v += 0.5;
    }
    let vcfg_small = VerifyConfig { perturbations: 10, ..Default::default() };
    let vr2 = verify_max_principle(&prob, &shifted, &[0.0], &cfg, &vcfg_small).expect("verify");
    ok &= !vr2.pointwise_pass;

    let elapsed = started.elapsed().as_secs_f64();
    ok &= elapsed < 300.0;
    assert!(
        report(10, "maximum principle", ok),
        "checks ({}, {}, {}), shifted pointwise {}, grad gap {:?} vs {:?}, {elapsed:.0}s",
        vr.pointwise_pass,
        vr.convexity_pass,
        vr.global_pass,
        vr2.pointwise_pass,
        ga,
        gf
    );
}

// --------------------------------------------------------------- criterion 11

fn run_cli(args: &[&str], out: &std::path::Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_fbsde"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("spawn cli");
    assert!(status.success(), "cli failed: {args:?}");
}

fn read(dir: &std::path::Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

/// Manifest without timing comments (wall time is the one intentionally
/// run-dependent line).
fn manifest_settings(dir: &std::path::Path) -> String {
    read(dir, "manifest.txt")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_11_determinism() {
    let base = std::env::temp_dir().join(format!("fbsde-acceptance-{}", std::process::id()));
    let dirs: Vec<_> = ["a", "b", "c", "d"].iter().map(|s| base.join(s)).collect();
    for d in &dirs {
        std::fs::create_dir_all(d).expect("mkdir");
    }
    let args = [
        "solve", "--model", "krugman", "--paths", "800", "--dt", "0.02", "--horizon", "5",
        "--seed", "3",
    ];
    run_cli(&args, &dirs[0]);
    run_cli(&args, &dirs[1]);
    let mut with_threads: Vec<&str> = args.to_vec();
    with_threads.extend_from_slice(&["--threads", "2"]);
    run_cli(&with_threads, &dirs[2]);
    // Replay the first run's manifest as a config file.
    run_cli(
        &["solve", "--config", dirs[0].join("manifest.txt").to_str().expect("path")],
        &dirs[3],
    );

    let csv = read(&dirs[0], "solve.csv");
    let mut ok = !csv.is_empty();
    for d in &dirs[1..] {
        ok &= read(d, "solve.csv") == csv;
    }
    let settings = manifest_settings(&dirs[0]);
    ok &= manifest_settings(&dirs[1]) == settings;
    ok &= manifest_settings(&dirs[3]) == settings;
    let _ = std::fs::remove_dir_all(&base);
    assert!(report(11, "determinism", ok), "outputs under {}", base.display());
}
