//! Command-line front end: experiment orchestration, config ingestion, and
//! bit-stable CSV emission with a replayable run manifest.

mod settings;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};

use fbsde_core::coeff::{CoefficientSet, Dims, EvalCtx};
use fbsde_core::conditions::{lambda_window_optimal, yin_lower_bound};
use fbsde_core::control::{
    cost as control_cost, optimize_policy, ControlProblem, Policy,
};
use fbsde_core::field::{build_field, ikw_standard_cases, ikw_residual, stationarity_test, Lattice};
use fbsde_core::models::{
    black_consol_constant, blanchard_model, dornbusch_model, krugman_model, zoo_list,
    BlanchardParams, DornbuschParams, ModelSpec, ScalarProcess,
};
use fbsde_core::picard::{
    comparison_harness, sensitivity_harness, solve_fbsde, SolveConfig, SolveMode,
};
use fbsde_core::{CoefficientFlags, ConstantsRecord, Error, TimeGrid};

use settings::Settings;

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "FBSDE_OUT_DIR";

#[derive(Parser)]
#[command(name = "fbsde", version, about = "Infinite-horizon FBSDE laboratory")]
struct Cli {
    /// Config file of `section.key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model name (see zoo-list).
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Picard mode: auto, gamma1, or gamma2.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output directory (default: $FBSDE_OUT_DIR, then the current one).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker-thread cap; 0 keeps the library default. Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Double the horizon until the tail rule accepts (true/false).
    #[arg(long, global = true)]
    refine_horizon: Option<bool>,
    // Model parameters.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Fundamental / money-supply level m.
    #[arg(long = "m-target", global = true)]
    m_target: Option<f64>,
    #[arg(long, global = true)]
    nu: Option<f64>,
    #[arg(long, global = true)]
    xi: Option<f64>,
    #[arg(long, global = true)]
    vartheta: Option<f64>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    phi: Option<f64>,
    /// Forward initial state (scalar models).
    #[arg(long, global = true)]
    x0: Option<f64>,
    /// Driver shift of the second model in `compare`.
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Print the solvability window of the discount weight for the model.
    CheckWindow,
    /// Solve the model and emit path means over the grid.
    Solve,
    /// Compare the model against a copy with the driver shifted by delta.
    Compare,
    /// Continuous-dependence sweep over initial-state perturbations.
    Sensitivity,
    /// Build the representing field on a regular lattice.
    Field,
    /// Two-sample stationarity test under the noise shift.
    Stationarity,
    /// Residuals of the generalized Ito formula on the polynomial cases.
    IkwCheck,
    /// Optimize an open-loop policy on the linear-quadratic family.
    Control,
    /// List the model zoo.
    ZooList,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn exit_code_of(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::InvalidMode(_) | Error::DecoupledSystem
        | Error::Coverage { .. } => 2,
        Error::DivergentPaths { .. } | Error::SingularRegression { .. }
        | Error::NotConverged(_) => 3,
    }
}

fn run(cli: Cli) -> i32 {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        if let Err(e) = s.load_config(path) {
            eprintln!("error: {e}");
            return 2;
        }
    }
    apply_flags(&mut s, &cli);
    if s.out.as_os_str().is_empty() {
        s.out = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| ".".into());
    }
    if s.threads > 0 {
        // Results are thread-count independent; this only caps the workers.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(s.threads).build_global();
    }
    let started = Instant::now();
    let outcome = dispatch(cli.cmd, &s);
    let (output, exit) = match outcome {
        Ok(out) => (out, 0),
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_of(&e);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&s.out) {
        eprintln!("error: cannot create output directory: {e}");
        return 2;
    }
    for (name, content) in &output.files {
        if let Err(e) = std::fs::write(s.out.join(name), content) {
            eprintln!("error: cannot write {name}: {e}");
            return 2;
        }
    }
    let mut manifest = String::new();
    manifest.push_str("# fbsde run manifest; replayable as --config\n");
    manifest.push_str(&format!("# subcommand: {}\n", subcommand_name(cli.cmd)));
    manifest.push_str(&format!(
        "# versions: fbsde-cli {}, fbsde-core {}\n",
        env!("CARGO_PKG_VERSION"),
        fbsde_core::VERSION
    ));
    manifest.push_str(&format!("# wall_time_ms: {}\n", started.elapsed().as_millis()));
    for (k, v) in &output.notes {
        manifest.push_str(&format!("# {k}: {v}\n"));
    }
    manifest.push_str(&s.echo());
    if let Err(e) = std::fs::write(s.out.join("manifest.txt"), manifest) {
        eprintln!("error: cannot write manifest: {e}");
        return 2;
    }
    if exit == 0 {
        if let Some((k, v)) = output.notes.iter().find(|(k, _)| k == "converged") {
            if v == "false" {
                eprintln!("warning: {k} = false");
                return 3;
            }
        }
    }
    exit
}

fn subcommand_name(cmd: Command) -> &'static str {
    match cmd {
        Command::CheckWindow => "check-window",
        Command::Solve => "solve",
        Command::Compare => "compare",
        Command::Sensitivity => "sensitivity",
        Command::Field => "field",
        Command::Stationarity => "stationarity",
        Command::IkwCheck => "ikw-check",
        Command::Control => "control",
        Command::ZooList => "zoo-list",
    }
}

fn apply_flags(s: &mut Settings, cli: &Cli) {
    macro_rules! take {
        ($field:ident, $flag:expr) => {
            if let Some(v) = $flag {
                s.$field = v;
            }
        };
    }
    if let Some(v) = &cli.model {
        s.model = v.clone();
    }
    take!(seed, cli.seed);
    take!(paths, cli.paths);
    take!(dt, cli.dt);
    take!(horizon, cli.horizon);
    if let Some(v) = cli.lambda {
        s.lambda = Some(v);
    }
    take!(tol, cli.tol);
    take!(max_iter, cli.max_iter);
    if let Some(v) = &cli.mode {
        s.mode = v.clone();
    }
    if let Some(v) = &cli.out {
        s.out = v.clone();
    }
    take!(threads, cli.threads);
    take!(refine_horizon, cli.refine_horizon);
    take!(gamma, cli.gamma);
    take!(sigma, cli.sigma);
    take!(m, cli.m_target);
    take!(nu, cli.nu);
    take!(xi, cli.xi);
    take!(vartheta, cli.vartheta);
    take!(eta, cli.eta);
    take!(phi, cli.phi);
    if let Some(v) = cli.x0 {
        s.x0 = Some(v);
    }
    take!(delta, cli.delta);
}

struct RunOutput {
    /// (file name, content) pairs to write into the output directory.
    files: Vec<(String, String)>,
    /// Extra manifest comment lines.
    notes: Vec<(String, String)>,
}

/// Fixed CSV number format: 17 significant digits, '.' decimal separator.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn build_model(s: &Settings) -> Result<ModelSpec, Error> {
    match s.model.as_str() {
        "krugman" => krugman_model(s.gamma, s.sigma, s.m),
        "dornbusch" => dornbusch_model(DornbuschParams {
            nu: s.nu,
            xi: s.xi,
            vartheta: s.vartheta,
            eta: s.eta,
            phi: s.phi,
            sigma: s.sigma,
            m: s.m,
        }),
        "black-consol" => Ok(black_consol_constant()),
        "blanchard" => blanchard_model(BlanchardParams {
            a1: s.bl_a1,
            a2: s.bl_a2,
            a3: s.bl_a3,
            rho: s.bl_rho,
            theta_s: s.bl_theta_s,
            sigma: s.sigma,
            i_proc: ScalarProcess::constant(s.bl_i),
            g_proc: ScalarProcess::constant(s.bl_g),
            c_proc: ScalarProcess::constant(s.bl_c),
        }),
        other => Err(Error::InvalidInput(format!(
            "unknown model {other:?}; see zoo-list"
        ))),
    }
}

fn solve_config(s: &Settings, model: &ModelSpec) -> Result<SolveConfig, Error> {
    let mode = match s.mode.as_str() {
        "auto" => SolveMode::Auto,
        "gamma1" => SolveMode::Gamma1,
        "gamma2" => SolveMode::Gamma2,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown mode {other:?}; expected auto, gamma1, or gamma2"
            )))
        }
    };
    Ok(SolveConfig {
        lambda: s.lambda.unwrap_or(model.lambda_default),
        tol: s.tol,
        max_iter: s.max_iter,
        paths: s.paths,
        seed: s.seed,
        dt: s.dt,
        horizon: s.horizon,
        mode,
        refine_horizon: s.refine_horizon,
        ..Default::default()
    })
}

fn x0_of(s: &Settings, model: &ModelSpec) -> Vec<f64> {
    match s.x0 {
        Some(v) => vec![v; model.coeffs.dims.n],
        None => model.x0_default.clone(),
    }
}

fn dispatch(cmd: Command, s: &Settings) -> Result<RunOutput, Error> {
    match cmd {
        Command::CheckWindow => cmd_check_window(s),
        Command::Solve => cmd_solve(s),
        Command::Compare => cmd_compare(s),
        Command::Sensitivity => cmd_sensitivity(s),
        Command::Field => cmd_field(s),
        Command::Stationarity => cmd_stationarity(s),
        Command::IkwCheck => cmd_ikw(s),
        Command::Control => cmd_control(s),
        Command::ZooList => cmd_zoo(),
    }
}

fn cmd_check_window(s: &Settings) -> Result<RunOutput, Error> {
    let model = build_model(s)?;
    let w = lambda_window_optimal(&model.model_constants)?;
    let yin = yin_lower_bound(&model.model_constants);
    let mut csv = String::from("lower,upper,feasible,gamma,rho1,rho2,yin_lower\n");
    csv.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        num(w.lower),
        num(w.upper),
        w.feasible,
        num(w.gamma),
        num(w.rho1_used),
        num(w.rho2_used),
        num(yin)
    ));
    Ok(RunOutput {
        files: vec![("check-window.csv".into(), csv)],
        notes: vec![("feasible".into(), w.feasible.to_string())],
    })
}

fn cmd_solve(s: &Settings) -> Result<RunOutput, Error> {
    let model = build_model(s)?;
    let mut cfg = solve_config(s, &model)?;
    cfg.store_paths = true;
    let x0 = x0_of(s, &model);
    let r = solve_fbsde(&model.coeffs, &x0, model.terminal.as_ref(), &cfg)?;
    let triple = r.triple.as_ref().expect("store_paths requested");
    let dims = model.coeffs.dims;
    let mut csv = String::from("t");
    for c in 0..dims.n {
        csv.push_str(&format!(",mean_x_{c}"));
    }
    for c in 0..dims.m {
        csv.push_str(&format!(",mean_y_{c}"));
    }
    for c in 0..dims.m * dims.d {
        csv.push_str(&format!(",mean_z_{c}"));
    }
    csv.push_str(",se_y0\n");
    let paths = triple.paths() as f64;
    for i in 0..triple.grid.nodes() {
        csv.push_str(&num(triple.grid.node(i)));
        for (tensor, width) in [
            (&triple.x, dims.n),
            (&triple.y, dims.m),
            (&triple.z, dims.m * dims.d),
        ] {
            for c in 0..width {
                let mut mean = 0.0;
                for p in 0..triple.paths() {
                    mean += tensor.at(p, i)[c];
                }
                csv.push_str(&format!(",{}", num(mean / paths)));
            }
        }
        if i == 0 {
            csv.push_str(&format!(",{}", num(r.diag.y0_se)));
        } else {
            csv.push(',');
        }
        csv.push('\n');
    }
    let notes = vec![
        ("converged".into(), r.diag.converged.to_string()),
        ("iterations".into(), r.diag.iterations.to_string()),
        ("horizon_used".into(), format!("{}", r.diag.horizon_used)),
        ("tail".into(), format!("{:.3e}", r.diag.tail)),
        ("y0".into(), format!("{:?}", r.diag.y0)),
        ("divergent_paths".into(), r.diag.divergent_paths.to_string()),
        (
            "lambda_inside_window".into(),
            format!("{:?}", r.diag.lambda_inside_window),
        ),
    ];
    Ok(RunOutput { files: vec![("solve.csv".into(), csv)], notes })
}

/// The model with its driver lifted by delta (constants unchanged).
fn shifted_driver(model: &ModelSpec, delta: f64) -> CoefficientSet {
    let mut coeffs = model.coeffs.clone();
    let base = coeffs.f.clone();
    coeffs.f = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
        base(ctx, out);
        for v in out.iter_mut() {
            *v += delta;
        }
    });
    coeffs
}

fn cmd_compare(s: &Settings) -> Result<RunOutput, Error> {
    let model = build_model(s)?;
    let cfg = solve_config(s, &model)?;
    let lifted = shifted_driver(&model, s.delta);
    let x0 = x0_of(s, &model);
    let report = comparison_harness(&lifted, &model.coeffs, &x0, &cfg)?;
    let mut csv = String::from("y1_0,y2_0,diff,se_diff,pass,spot_check_violations\n");
    csv.push_str(&format!(
        "{},{},{},{},{},{}\n",
        num(report.y1_0),
        num(report.y2_0),
        num(report.diff),
        num(report.se_diff),
        report.pass,
        report.spot_check_violations
    ));
    Ok(RunOutput {
        files: vec![("compare.csv".into(), csv)],
        notes: vec![("pass".into(), report.pass.to_string())],
    })
}

fn cmd_sensitivity(s: &Settings) -> Result<RunOutput, Error> {
    let model = build_model(s)?;
    let cfg = solve_config(s, &model)?;
    let x0 = x0_of(s, &model);
    let report = sensitivity_harness(&model.coeffs, &x0, &s.dx_list, &s.dt0_list, &cfg)?;
    let mut csv = String::from("kind,size,sup_x,sup_y,norm_z,ratio\n");
    for (kind, records) in [("spatial", &report.spatial), ("temporal", &report.temporal)] {
        for r in records {
            csv.push_str(&format!(
                "{kind},{},{},{},{},{}\n",
                num(r.size),
                num(r.sup_x),
                num(r.sup_y),
                num(r.norm_z),
                num(r.ratio)
            ));
        }
    }
    let mut notes = vec![
        ("spatial_slope".into(), format!("{}", report.spatial_slope)),
        ("fitted_constant".into(), format!("{}", report.fitted_constant)),
        ("pass".into(), report.pass.to_string()),
    ];
    if let Some(t) = report.temporal_slope {
        notes.push(("temporal_slope".into(), format!("{t}")));
    }
    Ok(RunOutput { files: vec![("sensitivity.csv".into(), csv)], notes })
}

fn cmd_field(s: &Settings) -> Result<RunOutput, Error> {
    let model = build_model(s)?;
    let mut cfg = solve_config(s, &model)?;
    cfg.refine_horizon = false;
    let dim = model.coeffs.dims.n;
    let lattice = Lattice::regular(
        &vec![s.grid_lo; dim],
        &vec![s.grid_hi; dim],
        &vec![s.grid_points; dim],
    )?;
    let field = build_field(&model, &s.t_nodes, lattice, &cfg)?;
    let mut csv = String::from("t");
    for c in 0..dim {
        csv.push_str(&format!(",x_{c}"));
    }
    csv.push_str(",value");
    for c in 0..dim {
        csv.push_str(&format!(",grad_{c}"));
    }
    csv.push('\n');
    let points = field.lattice.points();
    for (ti, &t) in field.t_nodes.iter().enumerate() {
        for flat in 0..points {
            let x = field.lattice.point(flat);
            csv.push_str(&num(t));
            for &v in &x {
                csv.push_str(&format!(",{}", num(v)));
            }
            csv.push_str(&format!(",{}", num(field.values[ti * points + flat])));
            for c in 0..dim {
                csv.push_str(&format!(
                    ",{}",
                    num(field.gradient[(ti * points + flat) * dim + c])
                ));
            }
            csv.push('\n');
        }
    }
    let solved = field.mask.iter().filter(|&&ok| ok).count();
    Ok(RunOutput {
        files: vec![("field.csv".into(), csv)],
        notes: vec![(
            "nodes_converged".into(),
            format!("{solved} of {}", field.mask.len()),
        )],
    })
}

fn cmd_stationarity(s: &Settings) -> Result<RunOutput, Error> {
    let model = build_model(s)?;
    let cfg = solve_config(s, &model)?;
    let x0 = x0_of(s, &model);
    let report = stationarity_test(&model, s.t, s.alpha, &x0, s.samples, &cfg)?;
    let mut csv = String::from("ks_stat,p_value,samples_used\n");
    csv.push_str(&format!(
        "{},{},{}\n",
        num(report.ks_stat),
        num(report.p_value),
        report.samples_used
    ));
    Ok(RunOutput {
        files: vec![("stationarity.csv".into(), csv)],
        notes: vec![("p_value".into(), format!("{}", report.p_value))],
    })
}

fn cmd_ikw(s: &Settings) -> Result<RunOutput, Error> {
    let mut csv = String::from("case,dt,residual\n");
    for case in ikw_standard_cases() {
        for dt in [2.0 * s.ikw_dt, s.ikw_dt] {
            let steps = (s.ikw_horizon / dt).round().max(1.0) as usize;
            let grid = TimeGrid::new(0.0, s.ikw_horizon, steps)?;
            let residual = ikw_residual(&case, grid, s.ikw_paths, s.seed)?;
            csv.push_str(&format!("{},{},{}\n", case.name, num(dt), num(residual)));
        }
    }
    Ok(RunOutput { files: vec![("ikw-check.csv".into(), csv)], notes: vec![] })
}

/// The linear-quadratic control family: X = sigma W, driver
/// f = (u + x - y) / gamma, running cost r u^2, initial cost n (y - target)^2.
fn lq_problem(s: &Settings) -> Arc<ControlProblem> {
    let gamma = s.gamma;
    let sigma = s.sigma;
    let (r, n, target) = (s.r_weight, s.n_weight, s.y_target);
    Arc::new(ControlProblem {
        b: Arc::new(|_ctx: &EvalCtx, _u: &[f64], out: &mut [f64]| out[0] = 0.0),
        sigma: Arc::new(move |_ctx: &EvalCtx, _u: &[f64], out: &mut [f64]| out[0] = sigma),
        f: Arc::new(move |ctx: &EvalCtx, u: &[f64], out: &mut [f64]| {
            out[0] = (u[0] + ctx.x[0] - ctx.y[0]) / gamma;
        }),
        h: Arc::new(move |_ctx: &EvalCtx, u: &[f64]| r * u[0] * u[0]),
        a: Arc::new(move |y: &[f64]| n * (y[0] - target) * (y[0] - target)),
        lambda: -0.15,
        control_box: vec![(-s.control_bound, s.control_bound)],
        k_dim: 1,
        dims: Dims { n: 1, m: 1, d: 1 },
        constants: ConstantsRecord {
            mu2: -1.0 / gamma,
            c1: 1.0 / gamma,
            ..Default::default()
        },
        flags: CoefficientFlags {
            sigma_depends_on_z: false,
            deterministic_coefficients: true,
            autonomous: true,
        },
    })
}

fn cmd_control(s: &Settings) -> Result<RunOutput, Error> {
    let problem = lq_problem(s);
    let cfg = SolveConfig {
        lambda: s.lambda.unwrap_or(problem.lambda),
        tol: s.tol,
        max_iter: s.max_iter,
        paths: s.paths,
        seed: s.seed,
        dt: s.dt,
        horizon: s.horizon,
        refine_horizon: false,
        ..Default::default()
    };
    let start = Policy::open_loop(0.0, s.horizon, s.cells, 1)?;
    let out = optimize_policy(&problem, start, &[s.x0.unwrap_or(0.0)], &cfg, s.budget)?;
    let final_report = control_cost(&problem, &out.policy, &[s.x0.unwrap_or(0.0)], &cfg)?;
    let mut csv = String::from("iteration,cost,se");
    for c in 0..out.policy.params.len() {
        csv.push_str(&format!(",param_{c}"));
    }
    csv.push('\n');
    let last = out.trace.len() - 1;
    for (i, cost) in out.trace.iter().enumerate() {
        csv.push_str(&format!("{i},{}", num(*cost)));
        if i == last {
            csv.push_str(&format!(",{}", num(final_report.se)));
            for v in &out.policy.params {
                csv.push_str(&format!(",{}", num(*v)));
            }
        } else {
            csv.push_str(&",".repeat(1 + out.policy.params.len()));
        }
        csv.push('\n');
    }
    Ok(RunOutput {
        files: vec![("control.csv".into(), csv)],
        notes: vec![
            ("evaluations".into(), out.evaluations.to_string()),
            ("budget_exhausted".into(), out.budget_exhausted.to_string()),
            ("final_cost".into(), format!("{}", out.trace[last])),
        ],
    })
}

fn cmd_zoo() -> Result<RunOutput, Error> {
    let mut csv = String::from("name,description\n");
    for (name, desc) in zoo_list() {
        csv.push_str(&format!("{name},\"{desc}\"\n"));
    }
    Ok(RunOutput { files: vec![("zoo-list.csv".into(), csv)], notes: vec![] })
}
