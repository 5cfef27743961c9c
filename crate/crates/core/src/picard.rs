//! Contraction maps over the frozen coupling arguments, the outer Picard
//! loop with truncation-horizon refinement, and the comparison and
//! continuous-dependence harnesses.

use crate::bsde::{solve_bsde, BasisConfig, BsdeConfig, TerminalFn};
use crate::coeff::{CoefficientSet, EvalCtx};
use crate::conditions::{gamma_ratio, lambda_window, LambdaWindow};
use crate::error::{invalid, Error, Result};
use crate::grid::{PathTensor, PathTriple, TimeGrid};
use crate::rng;
use crate::simulate::{euler_forward, generate_brownian, BrownianBundle, CheckpointedX, XAccess, YzSource};
use crate::stats::mean_se;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Gamma1,
    Gamma2,
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub paths: usize,
    pub seed: u64,
    pub t0: f64,
    pub dt: f64,
    /// Initial truncation horizon (duration past t0).
    pub horizon: f64,
    pub mode: SolveMode,
    /// Double the horizon until the tail rule accepts.
    pub refine_horizon: bool,
    pub max_doublings: usize,
    pub tail_tol: f64,
    pub basis: BasisConfig,
    /// Keep the full (X, Y, Z) tensors of the final solve.
    pub store_paths: bool,
    /// Checkpoint stride for memory-lean decoupled solves without storage.
    pub checkpoint_every: usize,
    /// Absolute step offset of the noise (the shift operator's index); used
    /// to align perturbed-start solves with a base solve on common noise.
    pub noise_offset: usize,
    /// When nonzero and below `paths`, run the horizon-doubling stages at
    /// this reduced path count and redo only the accepted horizon at full
    /// resolution. The truncation tail decays like e^{lambda T}, so the
    /// horizon decision needs far fewer paths than the final estimate.
    pub probe_paths: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            lambda: -0.1,
            tol: 1e-4,
            max_iter: 50,
            paths: 10_000,
            seed: 0,
            t0: 0.0,
            dt: 0.01,
            horizon: 10.0,
            mode: SolveMode::Auto,
            refine_horizon: true,
            max_doublings: 6,
            tail_tol: 1e-6,
            basis: BasisConfig::default(),
            store_paths: false,
            checkpoint_every: 256,
            noise_offset: 0,
            probe_paths: 0,
        }
    }
}

/// Convergence record of one full solve.
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Per-iteration ratio of the Lyapunov metric (recorded from the second
    /// iteration on).
    pub contraction_ratios: Vec<f64>,
    pub final_residual: f64,
    pub horizon_used: f64,
    pub converged: bool,
    /// Midpoint tail e^{lambda * T/2} E|Y(T/2)|^2 of the accepted horizon.
    pub tail: f64,
    pub y0: Vec<f64>,
    pub y0_se: f64,
    /// Z averaged over paths and the first half of the grid.
    pub z_avg: Vec<f64>,
    pub divergent_paths: usize,
    pub window: Option<LambdaWindow>,
    pub lambda_inside_window: Option<bool>,
    /// (horizon, Y(0) first component) of every horizon stage.
    pub horizon_stages: Vec<(f64, f64)>,
}

pub struct SolveResult {
    pub triple: Option<PathTriple>,
    pub diag: SolveDiagnostics,
    /// Pathwise martingale estimates of Y(0) (paths x m) of the final solve.
    pub pathwise_y0: Vec<f64>,
}

/// Squared lambda-weighted norm of the difference of two tensors over the
/// grid (per-path average, left-endpoint sum).
pub fn weighted_sq_diff(a: &PathTensor, b: &PathTensor, grid: &TimeGrid, lambda: f64) -> f64 {
    assert_eq!(a.data.len(), b.data.len());
    let dt = grid.dt();
    let mut acc = 0.0;
    for i in 0..grid.steps {
        let w = (lambda * grid.node(i)).exp() * dt;
        let mut s = 0.0;
        for p in 0..a.paths {
            let ra = a.at(p, i);
            let rb = b.at(p, i);
            for (va, vb) in ra.iter().zip(rb) {
                s += (va - vb) * (va - vb);
            }
        }
        acc += w * s;
    }
    acc / a.paths as f64
}

fn weighted_sq(a: &PathTensor, grid: &TimeGrid, lambda: f64) -> f64 {
    let zero = PathTensor::zeros(a.paths, a.nodes, a.width);
    weighted_sq_diff(a, &zero, grid, lambda)
}

pub struct GammaStepOut {
    pub x: PathTensor,
    pub y: PathTensor,
    pub z: PathTensor,
    pub divergent: usize,
    pub y0: Vec<f64>,
    pub pathwise_y0: Vec<f64>,
    pub mean_y_sq: Vec<f64>,
    pub z_avg: Vec<f64>,
}

/// One application of the backward-frozen map: solve the forward equation
/// with (Y, Z) frozen at `prev`, then the backward equation along that X.
pub fn gamma2_step(
    coeffs: &CoefficientSet,
    prev_y: &PathTensor,
    prev_z: &PathTensor,
    x0: &[f64],
    bundle: &BrownianBundle,
    terminal: &TerminalFn,
    basis: BasisConfig,
) -> Result<GammaStepOut> {
    let fwd = euler_forward(coeffs, x0, YzSource::Frozen { y: prev_y, z: prev_z }, bundle)?;
    let cfg = BsdeConfig { basis, store: true, keep_coefficients: false };
    let out = solve_bsde(coeffs, &mut XAccess::Full(&fwd.x), terminal, bundle, &cfg, None)?;
    Ok(GammaStepOut {
        x: fwd.x,
        y: out.y.unwrap(),
        z: out.z.unwrap(),
        divergent: fwd.divergent,
        y0: out.y0,
        pathwise_y0: out.pathwise_y0,
        mean_y_sq: out.mean_y_sq,
        z_avg: out.z_first_half_avg,
    })
}

/// One application of the forward-frozen map (requires sigma independent of
/// z): solve the backward equation along `prev_x`, then the forward equation
/// with the fresh (Y, Z).
pub fn gamma1_step(
    coeffs: &CoefficientSet,
    prev_x: &PathTensor,
    x0: &[f64],
    bundle: &BrownianBundle,
    terminal: &TerminalFn,
    basis: BasisConfig,
) -> Result<GammaStepOut> {
    if coeffs.flags.sigma_depends_on_z || coeffs.constants.k5 != 0.0 {
        return Err(Error::InvalidMode(
            "gamma1_step requires sigma independent of z (k5 = 0)".into(),
        ));
    }
    let cfg = BsdeConfig { basis, store: true, keep_coefficients: false };
    let mut prev_access = XAccess::Full(prev_x);
    let out = solve_bsde(coeffs, &mut prev_access, terminal, bundle, &cfg, None)?;
    let y = out.y.unwrap();
    let z = out.z.unwrap();
    let fwd = euler_forward(coeffs, x0, YzSource::Frozen { y: &y, z: &z }, bundle)?;
    Ok(GammaStepOut {
        x: fwd.x,
        y,
        z,
        divergent: fwd.divergent,
        y0: out.y0,
        pathwise_y0: out.pathwise_y0,
        mean_y_sq: out.mean_y_sq,
        z_avg: out.z_first_half_avg,
    })
}

struct StageOutcome {
    triple: Option<PathTriple>,
    y0: Vec<f64>,
    y0_se: f64,
    pathwise_y0: Vec<f64>,
    z_avg: Vec<f64>,
    tail_mid: f64,
    iterations: usize,
    ratios: Vec<f64>,
    final_residual: f64,
    converged: bool,
    divergent: usize,
}

fn pathwise_se(pathwise: &[f64], m: usize) -> f64 {
    // First backward component only; harness models are scalar.
    let vals: Vec<f64> = pathwise.chunks(m).map(|c| c[0]).collect();
    if vals.len() < 2 {
        return 0.0;
    }
    mean_se(&vals).1
}

fn solve_stage(
    coeffs: &CoefficientSet,
    x0: &[f64],
    terminal: &TerminalFn,
    cfg: &SolveConfig,
    grid: TimeGrid,
    mode: SolveMode,
) -> Result<StageOutcome> {
    let dims = coeffs.dims;
    let mut bundle = generate_brownian(grid, cfg.paths, dims.d, cfg.seed)?;
    bundle.step_offset = cfg.noise_offset;
    let mid = grid.steps / 2;
    let lam = cfg.lambda;
    let tail_of = |mean_y_sq: &[f64]| (lam * (grid.node(mid) - grid.t0)).exp() * mean_y_sq[mid];

    match mode {
        SolveMode::Auto => unreachable!("mode resolved before solve_stage"),
        SolveMode::Gamma1 if coeffs.is_decoupled() => {
            // Decoupled fast path: one forward pass, one backward pass.
            let bsde_cfg =
                BsdeConfig { basis: cfg.basis, store: cfg.store_paths, keep_coefficients: false };
            let (out, triple, divergent) = if cfg.store_paths {
                let fwd = euler_forward(coeffs, x0, YzSource::Zero, &bundle)?;
                let out = solve_bsde(
                    coeffs,
                    &mut XAccess::Full(&fwd.x),
                    terminal,
                    &bundle,
                    &bsde_cfg,
                    None,
                )?;
                let divergent = fwd.divergent;
                let triple = PathTriple {
                    x: fwd.x,
                    y: out.y.clone().unwrap(),
                    z: out.z.clone().unwrap(),
                    grid,
                };
                (out, Some(triple), divergent)
            } else {
                let mut ck = CheckpointedX::build(coeffs, x0, &bundle, cfg.checkpoint_every)?;
                let divergent = ck.divergent;
                let out = solve_bsde(
                    coeffs,
                    &mut XAccess::Checkpointed(&mut ck),
                    terminal,
                    &bundle,
                    &bsde_cfg,
                    None,
                )?;
                (out, None, divergent)
            };
            Ok(StageOutcome {
                triple,
                y0: out.y0,
                y0_se: pathwise_se(&out.pathwise_y0, dims.m),
                pathwise_y0: out.pathwise_y0,
                z_avg: out.z_first_half_avg,
                tail_mid: tail_of(&out.mean_y_sq),
                iterations: 1,
                ratios: Vec::new(),
                final_residual: 0.0,
                converged: true,
                divergent,
            })
        }
        SolveMode::Gamma1 => {
            let mut prev_x = euler_forward(coeffs, x0, YzSource::Zero, &bundle)?.x;
            let mut ratios = Vec::new();
            let mut prev_metric: Option<f64> = None;
            let mut last: Option<GammaStepOut> = None;
            let mut converged = false;
            let mut rel = f64::INFINITY;
            let mut iterations = 0;
            for _ in 1..=cfg.max_iter {
                iterations += 1;
                let step = gamma1_step(coeffs, &prev_x, x0, &bundle, terminal, cfg.basis)?;
                let metric = weighted_sq_diff(&step.x, &prev_x, &grid, lam);
                let scale = weighted_sq(&step.x, &grid, lam);
                rel = metric.sqrt() / (1.0 + scale.sqrt());
                if let Some(pm) = prev_metric {
                    ratios.push(if pm > 0.0 { metric / pm } else { 0.0 });
                }
                prev_metric = Some(metric);
                prev_x = step.x.clone();
                last = Some(step);
                if rel < cfg.tol {
                    converged = true;
                    break;
                }
            }
            let step = last.expect("at least one iteration");
            // Refresh (Y, Z) along the converged forward paths.
            let step = gamma1_step(coeffs, &step.x, x0, &bundle, terminal, cfg.basis)?;
            let tail_mid = tail_of(&step.mean_y_sq);
            Ok(StageOutcome {
                y0: step.y0.clone(),
                y0_se: pathwise_se(&step.pathwise_y0, dims.m),
                pathwise_y0: step.pathwise_y0.clone(),
                z_avg: step.z_avg.clone(),
                tail_mid,
                iterations,
                ratios,
                final_residual: rel,
                converged,
                divergent: step.divergent,
                triple: cfg.store_paths.then(|| PathTriple {
                    x: step.x,
                    y: step.y,
                    z: step.z,
                    grid,
                }),
            })
        }
        SolveMode::Gamma2 => {
            let nodes = grid.nodes();
            let mut prev_y = PathTensor::zeros(cfg.paths, nodes, dims.m);
            let mut prev_z = PathTensor::zeros(cfg.paths, nodes, dims.m * dims.d);
            let gamma = gamma_ratio(&coeffs.constants).unwrap_or(1.0);
            let mut ratios = Vec::new();
            let mut prev_metric: Option<f64> = None;
            let mut last: Option<GammaStepOut> = None;
            let mut converged = false;
            let mut rel = f64::INFINITY;
            let mut iterations = 0;
            for _ in 1..=cfg.max_iter {
                iterations += 1;
                let step = gamma2_step(coeffs, &prev_y, &prev_z, x0, &bundle, terminal, cfg.basis)?;
                let metric = weighted_sq_diff(&step.y, &prev_y, &grid, lam)
                    + gamma * weighted_sq_diff(&step.z, &prev_z, &grid, lam);
                let scale = weighted_sq(&step.y, &grid, lam) + gamma * weighted_sq(&step.z, &grid, lam);
                rel = metric.sqrt() / (1.0 + scale.sqrt());
                if let Some(pm) = prev_metric {
                    ratios.push(if pm > 0.0 { metric / pm } else { 0.0 });
                }
                prev_metric = Some(metric);
                prev_y = step.y.clone();
                prev_z = step.z.clone();
                last = Some(step);
                if rel < cfg.tol {
                    converged = true;
                    break;
                }
            }
            let step = last.expect("at least one iteration");
            let tail_mid = tail_of(&step.mean_y_sq);
            Ok(StageOutcome {
                y0: step.y0.clone(),
                y0_se: pathwise_se(&step.pathwise_y0, dims.m),
                pathwise_y0: step.pathwise_y0.clone(),
                z_avg: step.z_avg.clone(),
                tail_mid,
                iterations,
                ratios,
                final_residual: rel,
                converged,
                divergent: step.divergent,
                triple: cfg.store_paths.then(|| PathTriple {
                    x: step.x,
                    y: step.y,
                    z: step.z,
                    grid,
                }),
            })
        }
    }
}

/// Full solve: Picard iteration at the configured horizon, then horizon
/// doubling until the midpoint tail e^{lambda T/2} E|Y(T/2)|^2 is below the
/// tail tolerance and Y(0) has stabilized to within max(tol*(1+|Y0|), SE).
pub fn solve_fbsde(
    coeffs: &CoefficientSet,
    x0: &[f64],
    terminal: Option<&TerminalFn>,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    let zero_term = crate::bsde::zero_terminal();
    let terminal = terminal.unwrap_or(&zero_term);
    let mode = match cfg.mode {
        SolveMode::Auto => {
            if coeffs.is_decoupled() || !coeffs.flags.sigma_depends_on_z {
                SolveMode::Gamma1
            } else {
                SolveMode::Gamma2
            }
        }
        m => m,
    };
    let window = lambda_window(&coeffs.constants).ok();
    let lambda_inside_window = window
        .filter(|_| !coeffs.is_decoupled())
        .map(|w| w.feasible && cfg.lambda > w.lower && cfg.lambda < w.upper);

    let mut stages = Vec::new();
    let mut prev_y0: Option<f64> = None;
    let mut accepted: Option<StageOutcome> = None;
    let mut horizon_used = cfg.horizon;
    let mut total_iterations = 0;
    let mut all_ratios = Vec::new();
    let mut final_converged = false;
    let mut final_residual = f64::INFINITY;
    let probing = cfg.refine_horizon && cfg.probe_paths > 0 && cfg.probe_paths < cfg.paths;
    let mut stage_cfg = *cfg;
    if probing {
        stage_cfg.paths = cfg.probe_paths;
        stage_cfg.store_paths = false;
    }
    for stage in 0..=cfg.max_doublings {
        let horizon = cfg.horizon * (1u64 << stage) as f64;
        let steps = (horizon / cfg.dt).round().max(1.0) as usize;
        let grid = TimeGrid::new(cfg.t0, cfg.t0 + steps as f64 * cfg.dt, steps)?;
        let out = solve_stage(coeffs, x0, terminal, &stage_cfg, grid, mode)?;
        total_iterations += out.iterations;
        all_ratios.extend(out.ratios.iter().copied());
        final_converged = out.converged;
        final_residual = out.final_residual;
        stages.push((horizon, out.y0[0]));
        horizon_used = horizon;
        let dy0_ok = prev_y0.map(|p| {
            (out.y0[0] - p).abs() < (cfg.tol * (1.0 + out.y0[0].abs())).max(out.y0_se)
        });
        let tail_ok = out.tail_mid < cfg.tail_tol;
        prev_y0 = Some(out.y0[0]);
        let done = !cfg.refine_horizon || (tail_ok && dy0_ok.unwrap_or(false));
        accepted = Some(out);
        if done {
            break;
        }
    }
    if probing {
        // Redo the accepted horizon once at full resolution; all reported
        // estimates come from this solve, the probes only fixed the horizon.
        let steps = (horizon_used / cfg.dt).round().max(1.0) as usize;
        let grid = TimeGrid::new(cfg.t0, cfg.t0 + steps as f64 * cfg.dt, steps)?;
        let out = solve_stage(coeffs, x0, terminal, cfg, grid, mode)?;
        total_iterations += out.iterations;
        all_ratios.extend(out.ratios.iter().copied());
        final_converged = out.converged;
        final_residual = out.final_residual;
        stages.push((horizon_used, out.y0[0]));
        accepted = Some(out);
    }
    let out = accepted.expect("at least one horizon stage");
    let diag = SolveDiagnostics {
        iterations: total_iterations,
        contraction_ratios: all_ratios,
        final_residual,
        horizon_used,
        converged: final_converged && (!cfg.refine_horizon || out.tail_mid < cfg.tail_tol),
        tail: out.tail_mid,
        y0: out.y0.clone(),
        y0_se: out.y0_se,
        z_avg: out.z_avg.clone(),
        divergent_paths: out.divergent,
        window,
        lambda_inside_window,
        horizon_stages: stages,
    };
    Ok(SolveResult { triple: out.triple, diag, pathwise_y0: out.pathwise_y0 })
}

/// Initial-value comparison of two scalar-backward systems on common noise.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub y1_0: f64,
    pub y2_0: f64,
    pub diff: f64,
    pub se_diff: f64,
    pub pass: bool,
    pub spot_check_violations: usize,
}

pub fn comparison_harness(
    model1: &CoefficientSet,
    model2: &CoefficientSet,
    x0: &[f64],
    cfg: &SolveConfig,
) -> Result<ComparisonReport> {
    if model1.dims.m != 1 || model2.dims.m != 1 {
        return Err(invalid("comparison requires scalar backward state (m = 1)"));
    }
    if model1.dims != model2.dims {
        return Err(invalid("comparison requires matching dimensions"));
    }
    // Spot-check the pointwise ordering b1 >= b2, f1 >= f2 on random points.
    let dims = model1.dims;
    let mut violations = 0usize;
    let mut o1 = vec![0.0; dims.n.max(1)];
    let mut o2 = vec![0.0; dims.n.max(1)];
    for i in 0..1000u64 {
        let draw = |slot: u64| rng::standard_normal(cfg.seed ^ 0xc0fe, i, slot, 0);
        let t = draw(0).abs();
        let x: Vec<f64> = (0..dims.n).map(|j| x0[j] + draw(1 + j as u64)).collect();
        let y = vec![draw(20)];
        let z: Vec<f64> = (0..dims.d).map(|j| draw(30 + j as u64)).collect();
        let ctx = EvalCtx { t, env: 0.0, x: &x, y: &y, z: &z };
        (model1.b)(&ctx, &mut o1[..dims.n]);
        (model2.b)(&ctx, &mut o2[..dims.n]);
        if o1[..dims.n].iter().zip(&o2[..dims.n]).any(|(a, b)| a < &(b - 1e-12)) {
            violations += 1;
            continue;
        }
        (model1.f)(&ctx, &mut o1[..1]);
        (model2.f)(&ctx, &mut o2[..1]);
        if o1[0] < o2[0] - 1e-12 {
            violations += 1;
        }
    }
    if violations > 0 {
        return Err(invalid(format!(
            "comparison precondition b1 >= b2, f1 >= f2 violated at {violations} of 1000 points"
        )));
    }
    let r1 = solve_fbsde(model1, x0, None, cfg)?;
    let r2 = solve_fbsde(model2, x0, None, cfg)?;
    // Common random numbers: difference of pathwise estimators.
    let diffs: Vec<f64> = r1
        .pathwise_y0
        .iter()
        .zip(&r2.pathwise_y0)
        .map(|(a, b)| a - b)
        .collect();
    let (_, se_diff) = mean_se(&diffs);
    let y1_0 = r1.diag.y0[0];
    let y2_0 = r2.diag.y0[0];
    Ok(ComparisonReport {
        y1_0,
        y2_0,
        diff: y1_0 - y2_0,
        se_diff,
        pass: y1_0 >= y2_0 - 3.0 * se_diff,
        spot_check_violations: violations,
    })
}

/// One perturbation entry of the sensitivity report.
#[derive(Debug, Clone)]
pub struct PerturbationRecord {
    /// Perturbation magnitude (|dx| or |dt0|).
    pub size: f64,
    pub sup_x: f64,
    pub sup_y: f64,
    pub norm_z: f64,
    /// Combined metric divided by the continuous-dependence bound.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub spatial: Vec<PerturbationRecord>,
    pub temporal: Vec<PerturbationRecord>,
    /// log-log slope of sup_t e^{lambda t}E|dY|^2 against |dx|.
    pub spatial_slope: f64,
    /// log-log slope of the combined metric against |dt0|.
    pub temporal_slope: Option<f64>,
    pub fitted_constant: f64,
    pub pass: bool,
}

fn sup_weighted_diff(a: &PathTensor, b: &PathTensor, grid: &TimeGrid, lambda: f64) -> f64 {
    let mut sup: f64 = 0.0;
    for i in 0..grid.nodes() {
        let w = (lambda * (grid.node(i) - grid.t0)).exp();
        let mut s = 0.0;
        for p in 0..a.paths {
            for (va, vb) in a.at(p, i).iter().zip(b.at(p, i)) {
                s += (va - vb) * (va - vb);
            }
        }
        sup = sup.max(w * s / a.paths as f64);
    }
    sup
}

pub fn sensitivity_harness(
    model: &CoefficientSet,
    x0: &[f64],
    dx_list: &[f64],
    dt0_list: &[f64],
    cfg: &SolveConfig,
) -> Result<SensitivityReport> {
    let mut cfg = *cfg;
    cfg.store_paths = true;
    cfg.refine_horizon = false;
    let base = solve_fbsde(model, x0, None, &cfg)?;
    let base_triple = base.triple.as_ref().expect("store_paths requested");
    let x_norm_sq: f64 = x0.iter().map(|v| v * v).sum();

    let mut spatial = Vec::new();
    for &dx in dx_list {
        if dx == 0.0 {
            continue;
        }
        let mut x0p = x0.to_vec();
        x0p[0] += dx;
        let pert = solve_fbsde(model, &x0p, None, &cfg)?;
        let pt = pert.triple.as_ref().unwrap();
        let sup_x = sup_weighted_diff(&pt.x, &base_triple.x, &pt.grid, cfg.lambda);
        let sup_y = sup_weighted_diff(&pt.y, &base_triple.y, &pt.grid, cfg.lambda);
        let norm_z = weighted_sq_diff(&pt.z, &base_triple.z, &pt.grid, cfg.lambda);
        let bound = dx * dx;
        spatial.push(PerturbationRecord {
            size: dx.abs(),
            sup_x,
            sup_y,
            norm_z,
            ratio: (sup_x + sup_y + norm_z) / bound,
        });
    }

    let mut temporal = Vec::new();
    for &dt0 in dt0_list {
        if dt0 == 0.0 {
            continue;
        }
        // Shifted start on common noise: the perturbed solve reads the same
        // absolute increment indices via the noise offset.
        let offset = (dt0 / cfg.dt).round() as usize;
        if (offset as f64 * cfg.dt - dt0).abs() > 1e-9 {
            return Err(invalid("dt0 perturbations must be multiples of dt"));
        }
        let mut cfg_t = cfg;
        cfg_t.t0 = cfg.t0 + dt0;
        cfg_t.noise_offset = cfg.noise_offset + offset;
        let pert = solve_fbsde(model, x0, None, &cfg_t)?;
        let pt = pert.triple.as_ref().unwrap();
        let g = pt.grid;
        let mut sup_x: f64 = 0.0;
        let mut sup_y: f64 = 0.0;
        let mut norm_z = 0.0;
        for j in 0..g.nodes() {
            let i = j + offset;
            if i >= base_triple.grid.nodes() {
                break;
            }
            let w = (cfg.lambda * (g.node(j) - cfg.t0)).exp();
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sz = 0.0;
            for p in 0..pt.x.paths {
                for (va, vb) in pt.x.at(p, j).iter().zip(base_triple.x.at(p, i)) {
                    sx += (va - vb) * (va - vb);
                }
                for (va, vb) in pt.y.at(p, j).iter().zip(base_triple.y.at(p, i)) {
                    sy += (va - vb) * (va - vb);
                }
                for (va, vb) in pt.z.at(p, j).iter().zip(base_triple.z.at(p, i)) {
                    sz += (va - vb) * (va - vb);
                }
            }
            let paths = pt.x.paths as f64;
            sup_x = sup_x.max(w * sx / paths);
            sup_y = sup_y.max(w * sy / paths);
            norm_z += w * sz / paths * cfg.dt;
        }
        let bound = (1.0 + x_norm_sq) * dt0;
        temporal.push(PerturbationRecord {
            size: dt0,
            sup_x,
            sup_y,
            norm_z,
            ratio: (sup_x + sup_y + norm_z) / bound,
        });
    }

    let logs: Vec<f64> = spatial.iter().map(|r| r.size.ln()).collect();
    let logy: Vec<f64> = spatial.iter().map(|r| r.sup_y.max(1e-300).ln()).collect();
    let spatial_slope = if spatial.len() >= 2 {
        crate::stats::line_fit(&logs, &logy).0
    } else {
        f64::NAN
    };
    let temporal_slope = if temporal.len() >= 2 {
        let lx: Vec<f64> = temporal.iter().map(|r| r.size.ln()).collect();
        let ly: Vec<f64> = temporal
            .iter()
            .map(|r| (r.sup_x + r.sup_y + r.norm_z).max(1e-300).ln())
            .collect();
        Some(crate::stats::line_fit(&lx, &ly).0)
    } else {
        None
    };
    let mut ratios: Vec<f64> = spatial.iter().chain(&temporal).map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let fitted_constant = ratios.last().copied().unwrap_or(0.0);
    let median = if ratios.is_empty() { 0.0 } else { ratios[ratios.len() / 2] };
    // Pass: quadratic spatial slope and ratio stability (the max ratio must
    // not run away from the bulk as the perturbation shrinks).
    let pass = spatial_slope > 1.7
        && spatial_slope < 2.3
        && fitted_constant.is_finite()
        && (ratios.is_empty() || fitted_constant <= 3.0 * median.max(1e-300));
    Ok(SensitivityReport {
        spatial,
        temporal,
        spatial_slope,
        temporal_slope,
        fitted_constant,
        pass,
    })
}
