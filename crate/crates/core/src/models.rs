//! The model zoo: economic models expressed in the general forward-backward
//! form, with their structural constants, analytic oracles where available,
//! and the saddlepoint-equivalence residual.
//!
//! Sign convention: the general backward equation is dY = -f dt + Z dW.
//! Several source models carry -z dW instead; their `sign_map` records
//! z_native = backward_diffusion_sign * Z_general.

use std::sync::Arc;

use crate::bsde::TerminalFn;
use crate::coeff::{CoefficientFlags, CoefficientSet, ConstantsRecord, Dims, EvalCtx};
use crate::error::{invalid, Result};
use crate::grid::PathTriple;

/// Orientation of a model's native backward diffusion relative to the
/// general form.
#[derive(Debug, Clone, Copy)]
pub struct SignMap {
    /// z_native = backward_diffusion_sign * Z_general.
    pub backward_diffusion_sign: f64,
}

impl SignMap {
    pub fn to_native(&self, z_general: f64) -> f64 {
        self.backward_diffusion_sign * z_general
    }
    pub fn to_general(&self, z_native: f64) -> f64 {
        z_native / self.backward_diffusion_sign
    }
}

/// Closed-form reference solution, when one exists.
pub struct Oracle {
    /// Exact representing field v(t, x) (length m output).
    pub y_field: Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>,
    /// Exact constant Z in general orientation, when Z is constant.
    pub z_const: Option<Vec<f64>>,
}

/// Saddlepoint decomposition f(t, x, y) = g(t, x, y) - r(t) * y  (scalar m).
pub struct SaddlepointForm {
    /// Discount rate r(t); second argument is the environment noise value.
    pub r: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// Forcing term g(t, env, x, y).
    pub g: Arc<dyn Fn(f64, f64, &[f64], &[f64]) -> f64 + Send + Sync>,
}

/// A zoo entry: coefficients, constants, oracle, and bookkeeping.
pub struct ModelSpec {
    pub name: String,
    pub coeffs: CoefficientSet,
    pub oracle: Option<Oracle>,
    pub model_constants: ConstantsRecord,
    pub sign_map: SignMap,
    pub saddlepoint: Option<SaddlepointForm>,
    /// Model-suggested terminal condition for the truncated backward solve;
    /// None means the zero truncation.
    pub terminal: Option<TerminalFn>,
    /// Sensible default discount weight for numerical work on this model.
    pub lambda_default: f64,
    pub x0_default: Vec<f64>,
}

fn dims1() -> Dims {
    Dims { n: 1, m: 1, d: 1 }
}

/// Exchange-rate target model: dv = sigma dW, gamma ds = (m + v - s) dt + ... ,
/// in general form b = 0, f = (m + x - y) / gamma. Decoupled; the exact
/// solution is Y(t) = m + X(t) with constant Z = sigma.
pub fn krugman_model(gamma: f64, sigma: f64, m: f64) -> Result<ModelSpec> {
    if !(gamma > 0.0) {
        return Err(invalid(format!("krugman_model requires gamma > 0, got {gamma}")));
    }
    let mut coeffs = CoefficientSet::zero(dims1());
    coeffs.sigma = Arc::new(move |_ctx: &EvalCtx, out: &mut [f64]| out[0] = sigma);
    coeffs.f = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
        out[0] = (m + ctx.x[0] - ctx.y[0]) / gamma;
    });
    coeffs.constants = ConstantsRecord {
        mu2: -1.0 / gamma,
        c1: 1.0 / gamma,
        lambda: -1.9 / gamma,
        ..Default::default()
    };
    coeffs.flags = CoefficientFlags::default();
    let gamma_c = gamma;
    Ok(ModelSpec {
        name: "krugman".into(),
        coeffs,
        oracle: Some(Oracle {
            y_field: Arc::new(move |_t, x| vec![m + x[0]]),
            z_const: Some(vec![sigma]),
        }),
        model_constants: ConstantsRecord {
            mu2: -1.0 / gamma,
            c1: 1.0 / gamma,
            rho0: Some(0.0),
            mu0: Some(-1.0 / gamma),
            c0: Some(1.0 / gamma),
            ..Default::default()
        },
        sign_map: SignMap { backward_diffusion_sign: -1.0 },
        saddlepoint: Some(SaddlepointForm {
            r: Arc::new(move |_t, _env| 1.0 / gamma_c),
            g: Arc::new(move |_t, _env, x, _y| (m + x[0]) / gamma_c),
        }),
        terminal: None,
        lambda_default: -1.9 / gamma,
        x0_default: vec![0.0],
    })
}

/// Dornbusch overshooting parameters.
#[derive(Debug, Clone, Copy)]
pub struct DornbuschParams {
    pub nu: f64,
    pub xi: f64,
    pub vartheta: f64,
    pub eta: f64,
    pub phi: f64,
    pub sigma: f64,
    pub m: f64,
}

/// Linear drift coefficients of the Dornbusch system in general form:
/// b = a + b_p * p + b_s * s, f = e + f_p * p + f_s * s.
#[derive(Debug, Clone, Copy)]
pub struct DornbuschLinear {
    pub a: f64,
    pub b_p: f64,
    pub b_s: f64,
    pub e: f64,
    pub f_p: f64,
    pub f_s: f64,
    pub d: f64,
}

pub fn dornbusch_linear(p: &DornbuschParams) -> Result<DornbuschLinear> {
    let d = p.nu * p.vartheta + p.xi - p.phi * p.vartheta * p.xi;
    if d.abs() < 1e-12 {
        return Err(invalid("dornbusch_model requires D = nu*vartheta + xi - phi*vartheta*xi != 0"));
    }
    Ok(DornbuschLinear {
        a: p.phi * p.vartheta * p.m / d,
        b_p: -p.phi * (p.vartheta + p.xi * p.eta) / d,
        b_s: p.phi * p.xi * p.eta / d,
        e: -(p.phi * p.vartheta - 1.0) * p.m / d,
        f_p: -(1.0 - p.nu * p.eta - p.phi * p.vartheta) / d,
        f_s: -p.nu * p.eta / d,
        d,
    })
}

/// Sticky-price exchange-rate model, a genuinely coupled linear system:
/// dp = (a + b_p p + b_s s) dt + sigma dW, ds carries the backward equation.
pub fn dornbusch_model(p: DornbuschParams) -> Result<ModelSpec> {
    let lin = dornbusch_linear(&p)?;
    let mut coeffs = CoefficientSet::zero(dims1());
    let sigma = p.sigma;
    coeffs.b = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
        out[0] = lin.a + lin.b_p * ctx.x[0] + lin.b_s * ctx.y[0];
    });
    coeffs.sigma = Arc::new(move |_ctx: &EvalCtx, out: &mut [f64]| out[0] = sigma);
    coeffs.f = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
        out[0] = lin.e + lin.f_p * ctx.x[0] + lin.f_s * ctx.y[0];
    });
    let constants = ConstantsRecord {
        mu1: lin.b_p,
        mu2: lin.f_s,
        c1: lin.f_p.abs(),
        k1: lin.b_s.abs(),
        ..Default::default()
    };
    coeffs.constants = constants;
    let oracle = dornbusch_oracle(&p)
        .ok()
        .map(|(alpha, beta)| Oracle {
            y_field: Arc::new(move |_t, x| vec![alpha * x[0] + beta]),
            z_const: Some(vec![alpha * sigma]),
        });
    Ok(ModelSpec {
        name: "dornbusch".into(),
        coeffs,
        oracle,
        model_constants: constants,
        sign_map: SignMap { backward_diffusion_sign: -1.0 },
        saddlepoint: None,
        terminal: None,
        lambda_default: -0.1,
        x0_default: vec![0.5],
    })
}

/// Affine decoupling of the Dornbusch system: substitute s = alpha*p + beta
/// (so Z = alpha*sigma) into both drifts and match terms:
///   b_s alpha^2 + (b_p + f_s) alpha + f_p = 0,
///   beta = -(alpha*a + e) / (alpha*b_s + f_s),
/// selecting the root with stable closed-loop forward drift b_p + b_s*alpha < 0.
pub fn dornbusch_oracle(p: &DornbuschParams) -> Result<(f64, f64)> {
    let lin = dornbusch_linear(p)?;
    let roots: Vec<f64> = if lin.b_s.abs() < 1e-14 {
        let denom = lin.b_p + lin.f_s;
        if denom.abs() < 1e-14 {
            return Err(invalid("dornbusch_oracle: degenerate linear equation for alpha"));
        }
        vec![-lin.f_p / denom]
    } else {
        let disc = (lin.b_p + lin.f_s) * (lin.b_p + lin.f_s) - 4.0 * lin.b_s * lin.f_p;
        if disc < 0.0 {
            return Err(invalid("dornbusch_oracle: no real root for alpha"));
        }
        let sq = disc.sqrt();
        vec![
            (-(lin.b_p + lin.f_s) + sq) / (2.0 * lin.b_s),
            (-(lin.b_p + lin.f_s) - sq) / (2.0 * lin.b_s),
        ]
    };
    // Prefer the root with the most stable closed-loop forward drift; a
    // slope of exactly zero (fully degenerate coupling) is acceptable.
    let mut best: Option<(f64, f64)> = None;
    for alpha in roots {
        let slope = lin.b_p + lin.b_s * alpha;
        if best.map(|(_, s)| slope < s).unwrap_or(true) {
            best = Some((alpha, slope));
        }
    }
    let (alpha, slope) = best.expect("at least one root");
    if slope > 0.0 {
        return Err(invalid("dornbusch_oracle: no stable root"));
    }
    let denom = alpha * lin.b_s + lin.f_s;
    if denom.abs() < 1e-14 {
        return Err(invalid("dornbusch_oracle: constant term underdetermined"));
    }
    let beta = -(alpha * lin.a + lin.e) / denom;
    Ok((alpha, beta))
}

/// Residuals of the two drift-matching identities at (alpha, beta).
pub fn dornbusch_oracle_residual(p: &DornbuschParams, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    let lin = dornbusch_linear(p)?;
    let slope = lin.b_s * alpha * alpha + (lin.b_p + lin.f_s) * alpha + lin.f_p;
    let constant = alpha * (lin.a + lin.b_s * beta) + lin.e + lin.f_s * beta;
    Ok((slope, constant))
}

/// A scalar coefficient process (t, env) -> value with declared bounds.
#[derive(Clone)]
pub struct ScalarProcess {
    pub eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub bounds: (f64, f64),
    /// True when the process reads the environment noise.
    pub random: bool,
    /// True when the process does not depend on t.
    pub time_invariant: bool,
}

impl ScalarProcess {
    pub fn constant(v: f64) -> Self {
        ScalarProcess {
            eval: Arc::new(move |_t, _e| v),
            bounds: (v, v),
            random: false,
            time_invariant: true,
        }
    }
}

#[derive(Clone)]
pub struct BlanchardParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub rho: f64,
    pub theta_s: f64,
    pub sigma: f64,
    pub i_proc: ScalarProcess,
    pub g_proc: ScalarProcess,
    pub c_proc: ScalarProcess,
}

/// Stock-market/output model with (possibly random) coefficient processes:
/// b(t,x,s) = a3(a1-1)x + a2*a3*s + a3*g(t), f(t,x,s) = -(i(t)+rho*theta_s*sigma^2)s + c(t).
pub fn blanchard_model(p: BlanchardParams) -> Result<ModelSpec> {
    for (name, proc_) in [("i", &p.i_proc), ("g", &p.g_proc), ("c", &p.c_proc)] {
        if !proc_.bounds.0.is_finite() || !proc_.bounds.1.is_finite() {
            return Err(invalid(format!("blanchard_model: process {name} must be bounded")));
        }
    }
    let risk = p.rho * p.theta_s * p.sigma * p.sigma;
    let mut coeffs = CoefficientSet::zero(dims1());
    let (a1, a2, a3, sigma) = (p.a1, p.a2, p.a3, p.sigma);
    let g = p.g_proc.clone();
    let i_p = p.i_proc.clone();
    let c_p = p.c_proc.clone();
    coeffs.b = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
        out[0] = a3 * (a1 - 1.0) * ctx.x[0] + a2 * a3 * ctx.y[0] + a3 * (g.eval)(ctx.t, ctx.env);
    });
    coeffs.sigma = Arc::new(move |_ctx: &EvalCtx, out: &mut [f64]| out[0] = sigma);
    coeffs.f = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| {
        out[0] = -((i_p.eval)(ctx.t, ctx.env) + risk) * ctx.y[0] + (c_p.eval)(ctx.t, ctx.env);
    });
    let random = p.i_proc.random || p.g_proc.random || p.c_proc.random;
    let autonomous =
        p.i_proc.time_invariant && p.g_proc.time_invariant && p.c_proc.time_invariant;
    coeffs.flags = CoefficientFlags {
        sigma_depends_on_z: false,
        deterministic_coefficients: !random,
        autonomous,
    };
    let i_min = p.i_proc.bounds.0;
    let constants = ConstantsRecord {
        mu1: p.a3 * (p.a1 - 1.0),
        mu2: -(i_min + risk),
        k1: (p.a2 * p.a3).abs(),
        rho0: Some(0.0),
        mu0: Some(-(i_min + risk)),
        c0: Some(0.0),
        ..Default::default()
    };
    coeffs.constants = constants;
    let i_sp = p.i_proc.clone();
    let c_sp = p.c_proc.clone();
    Ok(ModelSpec {
        name: "blanchard".into(),
        coeffs,
        oracle: None,
        model_constants: constants,
        sign_map: SignMap { backward_diffusion_sign: 1.0 },
        saddlepoint: Some(SaddlepointForm {
            r: Arc::new(move |t, env| (i_sp.eval)(t, env) + risk),
            g: Arc::new(move |t, env, _x, _y| (c_sp.eval)(t, env)),
        }),
        terminal: None,
        lambda_default: -(i_min + risk).max(0.05) * 1.5,
        x0_default: vec![0.0],
    })
}

/// Black's consol rate model: forward dr = mu(r, Y) dt + alpha(r, Y) dW,
/// backward driver f = 1 - r*y (consol paying dividends at rate 1).
pub fn black_consol_model(
    mu: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    alpha: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    coupled: bool,
    constants: ConstantsRecord,
) -> Result<ModelSpec> {
    let mut coeffs = CoefficientSet::zero(dims1());
    let mu_c = mu.clone();
    let al_c = alpha.clone();
    coeffs.b = Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| out[0] = mu_c(ctx.x[0], ctx.y[0]));
    coeffs.sigma =
        Arc::new(move |ctx: &EvalCtx, out: &mut [f64]| out[0] = al_c(ctx.x[0], ctx.y[0]));
    coeffs.f = Arc::new(|ctx: &EvalCtx, out: &mut [f64]| out[0] = 1.0 - ctx.x[0] * ctx.y[0]);
    coeffs.constants = constants;
    coeffs.flags = CoefficientFlags {
        sigma_depends_on_z: false,
        deterministic_coefficients: true,
        autonomous: true,
    };
    if coupled && constants.k1 == 0.0 && constants.k4 == 0.0 {
        return Err(invalid("black_consol_model: coupled variant needs k1 or k4 > 0"));
    }
    Ok(ModelSpec {
        name: "black-consol".into(),
        coeffs,
        oracle: None,
        model_constants: constants,
        sign_map: SignMap { backward_diffusion_sign: 1.0 },
        saddlepoint: None,
        terminal: None,
        lambda_default: constants.lambda,
        x0_default: vec![0.05],
    })
}

/// The constant-rate consol special case mu = alpha = 0, whose exact solution
/// is Y = 1/r along every (constant) path.
pub fn black_consol_constant() -> ModelSpec {
    let constants = ConstantsRecord {
        mu2: -0.01,
        c1: 40.0,
        lambda: -0.3,
        ..Default::default()
    };
    let mut spec = black_consol_model(
        Arc::new(|_r, _y| 0.0),
        Arc::new(|_r, _y| 0.0),
        false,
        constants,
    )
    .expect("constant consol model is valid");
    spec.oracle = Some(Oracle {
        y_field: Arc::new(|_t, x| vec![1.0 / x[0]]),
        z_const: Some(vec![0.0]),
    });
    spec
}

/// Monte Carlo residual of the saddlepoint (future-expectations) equivalence:
/// |mean over paths of int_0^T exp(-int_0^s r) g(s, X, Y) ds  -  Y(0)| / (1 + |Y(0)|).
pub fn rem_equivalence_residual(model: &ModelSpec, solution: &PathTriple) -> Result<f64> {
    let sp = model
        .saddlepoint
        .as_ref()
        .ok_or_else(|| invalid("model lacks a saddlepoint decomposition"))?;
    if model.coeffs.dims.m != 1 {
        return Err(invalid("rem_equivalence_residual requires scalar backward state"));
    }
    let grid = solution.grid;
    let dt = grid.dt();
    let paths = solution.paths();
    let mut avg = 0.0;
    let mut y0_mean = 0.0;
    for p in 0..paths {
        let mut discount = 1.0;
        let mut integral = 0.0;
        for i in 0..grid.steps {
            let t = grid.node(i);
            let x = solution.x.at(p, i);
            let y = solution.y.at(p, i);
            // Environment-dependent rates are not reconstructed here; the
            // residual applies to deterministic-rate decompositions.
            let r = (sp.r)(t, 0.0);
            let g = (sp.g)(t, 0.0, x, y);
            integral += discount * g * dt;
            discount *= (-r * dt).exp();
        }
        avg += integral;
        y0_mean += solution.y.at(p, 0)[0];
    }
    avg /= paths as f64;
    y0_mean /= paths as f64;
    Ok((avg - y0_mean).abs() / (1.0 + y0_mean.abs()))
}

/// Names and one-line descriptions of the zoo, for the CLI.
pub fn zoo_list() -> Vec<(&'static str, &'static str)> {
    vec![
        ("krugman", "exchange-rate target model; decoupled, exact solution Y = m + X"),
        ("dornbusch", "sticky-price overshooting model; coupled linear, affine oracle"),
        ("blanchard", "stock-market/output model; optional random coefficient processes"),
        ("black-consol", "consol rate model; nonlinear driver f = 1 - r*y"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{estimate_constants, SamplerConfig};

    #[test]
    fn krugman_rejects_bad_gamma() {
        assert!(krugman_model(0.0, 0.1, 1.0).is_err());
        assert!(krugman_model(5.0, 0.1, 1.0).is_ok());
    }

    #[test]
    fn krugman_oracle_identity_pathwise() {
        // Y = m + X solves the backward equation exactly: f(x, m+x) = 0 and
        // dY = sigma dW matches the forward diffusion.
        let spec = krugman_model(5.0, 0.1, 1.0).unwrap();
        let oracle = spec.oracle.as_ref().unwrap();
        for x in [-1.0, 0.0, 0.3, 2.0] {
            let y = (oracle.y_field)(0.0, &[x]);
            let mut f = [f64::NAN];
            (spec.coeffs.f)(
                &EvalCtx { t: 0.0, env: 0.0, x: &[x], y: &y, z: &[0.1] },
                &mut f,
            );
            assert!(f[0].abs() < 1e-15);
        }
    }

    #[test]
    fn sign_map_round_trip() {
        let sm = SignMap { backward_diffusion_sign: -1.0 };
        let z = 0.37;
        assert_eq!(sm.to_general(sm.to_native(z)), z);
    }

    fn params() -> DornbuschParams {
        DornbuschParams {
            nu: 1.0,
            xi: 0.2,
            vartheta: 1.0,
            eta: 0.3,
            phi: 0.5,
            sigma: 0.1,
            m: 1.0,
        }
    }

    #[test]
    fn dornbusch_oracle_back_substitution() {
        let p = params();
        let (alpha, beta) = dornbusch_oracle(&p).unwrap();
        let (r1, r2) = dornbusch_oracle_residual(&p, alpha, beta).unwrap();
        assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12, "residuals {r1} {r2}");
        let lin = dornbusch_linear(&p).unwrap();
        assert!(lin.b_p + lin.b_s * alpha < 0.0, "closed loop unstable");
    }

    #[test]
    fn dornbusch_oracle_degenerate_linear() {
        // phi = 0 (so phi*xi*eta = 0, nu*eta > 0): the quadratic degenerates
        // to a linear equation with alpha = -(1 - nu*eta - phi*vartheta)/(nu*eta).
        let mut p = params();
        p.phi = 0.0;
        let (alpha, beta) = dornbusch_oracle(&p).unwrap();
        let expected = -(1.0 - p.nu * p.eta - p.phi * p.vartheta) / (p.nu * p.eta);
        assert!((alpha - expected).abs() < 1e-12, "{alpha} vs {expected}");
        let (r1, r2) = dornbusch_oracle_residual(&p, alpha, beta).unwrap();
        assert!(r1.abs() < 1e-14 && r2.abs() < 1e-14);
    }

    #[test]
    fn dornbusch_oracle_newton_cross_check() {
        // 2-d Newton on the pair of identities converges to the same (alpha,
        // beta) from a nearby start, and only that pair zeroes both.
        let p = params();
        let (alpha, beta) = dornbusch_oracle(&p).unwrap();
        let lin = dornbusch_linear(&p).unwrap();
        let mut a = alpha + 0.1;
        let mut b = beta - 0.2;
        for _ in 0..60 {
            let g1 = lin.b_s * a * a + (lin.b_p + lin.f_s) * a + lin.f_p;
            let g2 = a * (lin.a + lin.b_s * b) + lin.e + lin.f_s * b;
            // Jacobian [[dg1/da, 0], [dg2/da, dg2/db]].
            let j11 = 2.0 * lin.b_s * a + lin.b_p + lin.f_s;
            let j21 = lin.a + lin.b_s * b;
            let j22 = a * lin.b_s + lin.f_s;
            let da = g1 / j11;
            a -= da;
            let db = (g2 - j21 * da) / j22;
            b -= db;
        }
        assert!((a - alpha).abs() < 1e-10 && (b - beta).abs() < 1e-10, "{a} {b}");
    }

    #[test]
    fn dornbusch_window_matches_closed_form() {
        // Optimal window lower/upper vs the published closed form.
        let p = params();
        let spec = dornbusch_model(p).unwrap();
        let w = crate::conditions::lambda_window_optimal(&spec.model_constants).unwrap();
        let lin = dornbusch_linear(&p).unwrap();
        let d = lin.d;
        let lower_cf =
            -2.0 * p.nu * p.eta / d + 2.0 * (1.0 - p.nu * p.eta - p.phi * p.vartheta).abs() / d.abs();
        let eps1 = spec.model_constants.eps1;
        let upper_cf = 2.0 * p.phi * (p.vartheta + p.xi * p.eta) / d
            - (p.phi * p.xi).abs() * p.eta / d.abs() * (eps1 + 1.0 / eps1);
        assert!((w.lower - lower_cf).abs() < 1e-12, "{} vs {lower_cf}", w.lower);
        assert!((w.upper - upper_cf).abs() < 1e-12, "{} vs {upper_cf}", w.upper);
        assert!(w.feasible, "acceptance parameter set must give a nonempty window");
        assert!(w.lower < -0.1 && w.upper > 0.0, "window {w:?} should contain -0.1");
    }

    #[test]
    fn estimated_constants_respect_declared_ones() {
        for spec in [
            krugman_model(5.0, 0.1, 1.0).unwrap(),
            dornbusch_model(params()).unwrap(),
        ] {
            let est = estimate_constants(
                &spec.coeffs,
                &SamplerConfig { pairs: 2000, ..Default::default() },
            );
            let dec = spec.model_constants;
            let tol = 1e-9;
            assert!(est.c1 <= dec.c1 + tol, "{}: c1 {} > {}", spec.name, est.c1, dec.c1);
            assert!(est.c2 <= dec.c2 + tol);
            assert!(est.k1 <= dec.k1 + tol, "{}: k1 {} > {}", spec.name, est.k1, dec.k1);
            assert!(est.mu1 <= dec.mu1 + tol, "{}: mu1 {} > {}", spec.name, est.mu1, dec.mu1);
            assert!(est.mu2 <= dec.mu2 + tol, "{}: mu2 {} > {}", spec.name, est.mu2, dec.mu2);
        }
    }

    #[test]
    fn blanchard_requires_bounded_processes() {
        let mut p = BlanchardParams {
            a1: 0.5,
            a2: 0.2,
            a3: 1.0,
            rho: 0.0,
            theta_s: 0.0,
            sigma: 0.1,
            i_proc: ScalarProcess::constant(0.05),
            g_proc: ScalarProcess::constant(0.0),
            c_proc: ScalarProcess::constant(0.0),
        };
        assert!(blanchard_model(p.clone()).is_ok());
        p.i_proc.bounds = (0.0, f64::INFINITY);
        assert!(blanchard_model(p).is_err());
    }

    #[test]
    fn black_consol_constant_oracle() {
        let spec = black_consol_constant();
        let oracle = spec.oracle.as_ref().unwrap();
        assert!(((oracle.y_field)(0.0, &[0.05])[0] - 20.0).abs() < 1e-12);
        let mut f = [f64::NAN];
        (spec.coeffs.f)(
            &EvalCtx { t: 0.0, env: 0.0, x: &[0.05], y: &[20.0], z: &[0.0] },
            &mut f,
        );
        assert!(f[0].abs() < 1e-15, "driver vanishes at the oracle");
    }
}
