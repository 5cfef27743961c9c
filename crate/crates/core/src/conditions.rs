//! Solvability windows for the discount weight lambda, and empirical
//! estimation of the structural constants.

use crate::coeff::{CoefficientSet, ConstantsRecord, EvalCtx};
use crate::error::{invalid, Error, Result};
use crate::rng;

/// A lambda-window: the contraction argument works for lambda strictly
/// between `lower` and `upper`, provided the auxiliary-weight constraint
/// holds.
#[derive(Debug, Clone, Copy)]
pub struct LambdaWindow {
    pub lower: f64,
    pub upper: f64,
    pub feasible: bool,
    pub gamma: f64,
    pub rho1_used: f64,
    pub rho2_used: f64,
    pub constraint_ok: bool,
}

/// Coupling ratio gamma = (k2/eps2 + k5) / max(k1/eps1 + k4, k2/eps2 + k5).
///
/// Undefined exactly when k1 = k2 = k4 = k5 = 0 (decoupled system).
pub fn gamma_ratio(c: &ConstantsRecord) -> Result<f64> {
    if c.k1 == 0.0 && c.k2 == 0.0 && c.k4 == 0.0 && c.k5 == 0.0 {
        return Err(Error::DecoupledSystem);
    }
    let a = c.k1 / c.eps1 + c.k4;
    let b = c.k2 / c.eps2 + c.k5;
    Ok(b / a.max(b))
}

/// Gamma for window formulas: decoupled systems take gamma = 0 (the
/// coupling term vanishes from the bound).
fn gamma_or_zero(c: &ConstantsRecord) -> f64 {
    gamma_ratio(c).unwrap_or(0.0)
}

fn upper_bound(c: &ConstantsRecord) -> f64 {
    -2.0 * c.mu1
        - c.k3
        - c.k1 * c.eps1
        - c.k2 * c.eps2
        - (c.k1 / c.eps1 + c.k4).max(c.k2 / c.eps2 + c.k5)
}

/// Lower bound of the window at explicit weights (rho1, rho2); NaN/infinite
/// when the weight constraint fails.
pub fn lower_bound_at(c: &ConstantsRecord, gamma: f64, rho1: f64, rho2: f64) -> f64 {
    let q2 = c.c2 / rho2;
    let denom = 1.0 - q2 - gamma * c.c1 / rho1;
    2.0 * c.mu2 + c.c1 * rho1 + c.c2 * rho2 + c.c1 / rho1 * (1.0 - q2) / denom
}

/// Constraint on the auxiliary weights: 1 - c2/rho2 - gamma*c1/rho1 > 0 and
/// c2/rho2 < 1.
pub fn weights_admissible(c: &ConstantsRecord, gamma: f64, rho1: f64, rho2: f64) -> bool {
    c.c2 / rho2 < 1.0 && 1.0 - c.c2 / rho2 - gamma * c.c1 / rho1 > 0.0
}

/// Window at the record's own (rho1, rho2) weights.
pub fn lambda_window(c: &ConstantsRecord) -> Result<LambdaWindow> {
    if !(c.rho1 > 0.0 && c.rho2 > 0.0 && c.eps1 > 0.0 && c.eps2 > 0.0) {
        return Err(invalid("lambda_window requires positive rho1, rho2, eps1, eps2"));
    }
    let gamma = gamma_or_zero(c);
    let constraint_ok = weights_admissible(c, gamma, c.rho1, c.rho2);
    let lower = if constraint_ok {
        lower_bound_at(c, gamma, c.rho1, c.rho2)
    } else {
        f64::INFINITY
    };
    let upper = upper_bound(c);
    Ok(LambdaWindow {
        lower,
        upper,
        feasible: constraint_ok && lower < upper,
        gamma,
        rho1_used: c.rho1,
        rho2_used: c.rho2,
        constraint_ok,
    })
}

/// Window at the optimal weights rho1* = c1*gamma + c2*sqrt(gamma) + 1,
/// rho2* = c2 + c1*sqrt(gamma), giving the widest range
/// lower = 2*mu2 + 2*c1 + 2*c1*c2*sqrt(gamma) + c1^2*gamma + c2^2.
pub fn lambda_window_optimal(c: &ConstantsRecord) -> Result<LambdaWindow> {
    let gamma = gamma_or_zero(c);
    let sg = gamma.sqrt();
    let rho1 = c.c1 * gamma + c.c2 * sg + 1.0;
    let rho2 = (c.c2 + c.c1 * sg).max(1e-9);
    let lower = 2.0 * c.mu2 + 2.0 * c.c1 + 2.0 * c.c1 * c.c2 * sg + c.c1 * c.c1 * gamma
        + c.c2 * c.c2;
    let upper = upper_bound(c);
    Ok(LambdaWindow {
        lower,
        upper,
        feasible: lower < upper,
        gamma,
        rho1_used: rho1,
        rho2_used: rho2,
        constraint_ok: true,
    })
}

/// The earlier literature bound 2*mu2 + 4*c1^2 + 2*c2^2 + 1, always strictly
/// above the optimal lower bound.
pub fn yin_lower_bound(c: &ConstantsRecord) -> f64 {
    2.0 * c.mu2 + 4.0 * c.c1 * c.c1 + 2.0 * c.c2 * c.c2 + 1.0
}

/// Window for saddlepoint-form systems (f = g - r*y with rate bound rho0,
/// monotonicity mu0, Lipschitz c0; requires k2 = k5 = c2 = 0).
pub fn saddlepoint_window(c: &ConstantsRecord) -> Result<LambdaWindow> {
    let (rho0, mu0, c0) = match (c.rho0, c.mu0, c.c0) {
        (Some(a), Some(b), Some(d)) => (a, b, d),
        _ => return Err(invalid("saddlepoint_window requires rho0, mu0, c0")),
    };
    if c.k2 != 0.0 || c.k5 != 0.0 || c.c2 != 0.0 {
        return Err(invalid("saddlepoint_window requires k2 = k5 = c2 = 0"));
    }
    if !(c.rho1 > 0.0 && c.eps1 > 0.0) {
        return Err(invalid("saddlepoint_window requires positive rho1, eps1"));
    }
    let lower = 2.0 * rho0 + 2.0 * mu0 + c0 * c.rho1 + c0 / c.rho1;
    let upper = -2.0 * c.mu1 - c.k3 - c.k1 * c.eps1 - c.k1 / c.eps1 - c.k4;
    Ok(LambdaWindow {
        lower,
        upper,
        feasible: lower < upper,
        gamma: gamma_or_zero(c),
        rho1_used: c.rho1,
        rho2_used: c.rho2,
        constraint_ok: true,
    })
}

/// Sampling box for empirical constant estimation.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub pairs: usize,
    pub seed: u64,
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            pairs: 10_000,
            seed: 0,
            t_range: (0.0, 10.0),
            x_range: (-2.0, 2.0),
            y_range: (-2.0, 2.0),
            z_range: (-2.0, 2.0),
        }
    }
}

fn uniform_in(seed: u64, pair: u64, slot: u64, lo: f64, hi: f64) -> f64 {
    // Map a normal draw through its CDF-free route: reuse the key as uniform.
    let k = rng::key(seed, pair, slot, 0);
    let u = (k >> 11) as f64 * (1.0 / 9007199254740992.0);
    lo + u * (hi - lo)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Empirical lower bounds on the Lipschitz constants and sample-maximum
/// monotonicity quotients, from ratio sampling over random point pairs that
/// vary one argument at a time. Estimates approach the true constants from
/// below; they certify violation of a claimed bound, never satisfaction.
pub fn estimate_constants(coeffs: &CoefficientSet, cfg: &SamplerConfig) -> ConstantsRecord {
    let (n, m, d) = (coeffs.dims.n, coeffs.dims.m, coeffs.dims.d);
    let mut rec = ConstantsRecord { mu1: f64::NEG_INFINITY, mu2: f64::NEG_INFINITY, ..Default::default() };
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    let mut s1 = vec![0.0; n * d];
    let mut s2 = vec![0.0; n * d];
    let mut f1 = vec![0.0; m];
    let mut f2 = vec![0.0; m];
    for pair in 0..cfg.pairs as u64 {
        let t = uniform_in(cfg.seed, pair, 0, cfg.t_range.0, cfg.t_range.1);
        let x: Vec<f64> =
            (0..n).map(|j| uniform_in(cfg.seed, pair, 10 + j as u64, cfg.x_range.0, cfg.x_range.1)).collect();
        let y: Vec<f64> =
            (0..m).map(|j| uniform_in(cfg.seed, pair, 40 + j as u64, cfg.y_range.0, cfg.y_range.1)).collect();
        let z: Vec<f64> = (0..m * d)
            .map(|j| uniform_in(cfg.seed, pair, 70 + j as u64, cfg.z_range.0, cfg.z_range.1))
            .collect();
        let x2: Vec<f64> =
            (0..n).map(|j| uniform_in(cfg.seed, pair, 110 + j as u64, cfg.x_range.0, cfg.x_range.1)).collect();
        let y2: Vec<f64> =
            (0..m).map(|j| uniform_in(cfg.seed, pair, 140 + j as u64, cfg.y_range.0, cfg.y_range.1)).collect();
        let z2: Vec<f64> = (0..m * d)
            .map(|j| uniform_in(cfg.seed, pair, 170 + j as u64, cfg.z_range.0, cfg.z_range.1))
            .collect();

        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(p, q)| p - q).collect()
        };

        // Vary x: mu1 (monotonicity of b), c1 (f), k3 (|sigma|^2).
        {
            let c_a = EvalCtx { t, env: 0.0, x: &x, y: &y, z: &z };
            let c_b = EvalCtx { t, env: 0.0, x: &x2, y: &y, z: &z };
            (coeffs.b)(&c_a, &mut b1);
            (coeffs.b)(&c_b, &mut b2);
            (coeffs.f)(&c_a, &mut f1);
            (coeffs.f)(&c_b, &mut f2);
            (coeffs.sigma)(&c_a, &mut s1);
            (coeffs.sigma)(&c_b, &mut s2);
            let dx = diff(&x, &x2);
            let nx = norm(&dx);
            if nx > 1e-9 {
                let inner: f64 =
                    b1.iter().zip(&b2).zip(&dx).map(|((a, b), e)| (a - b) * e).sum();
                rec.mu1 = rec.mu1.max(inner / (nx * nx));
                rec.c1 = rec.c1.max(norm(&diff(&f1, &f2)) / nx);
                let ds = norm(&diff(&s1, &s2));
                rec.k3 = rec.k3.max(ds * ds / (nx * nx));
            }
        }
        // Vary y: mu2 (monotonicity of f), k1 (b), k4 (|sigma|^2).
        {
            let c_a = EvalCtx { t, env: 0.0, x: &x, y: &y, z: &z };
            let c_b = EvalCtx { t, env: 0.0, x: &x, y: &y2, z: &z };
            (coeffs.b)(&c_a, &mut b1);
            (coeffs.b)(&c_b, &mut b2);
            (coeffs.f)(&c_a, &mut f1);
            (coeffs.f)(&c_b, &mut f2);
            (coeffs.sigma)(&c_a, &mut s1);
            (coeffs.sigma)(&c_b, &mut s2);
            let dy = diff(&y, &y2);
            let ny = norm(&dy);
            if ny > 1e-9 {
                let inner: f64 =
                    f1.iter().zip(&f2).zip(&dy).map(|((a, b), e)| (a - b) * e).sum();
                rec.mu2 = rec.mu2.max(inner / (ny * ny));
                rec.k1 = rec.k1.max(norm(&diff(&b1, &b2)) / ny);
                let ds = norm(&diff(&s1, &s2));
                rec.k4 = rec.k4.max(ds * ds / (ny * ny));
            }
        }
        // Vary z: c2 (f), k2 (b), k5 (|sigma|^2).
        {
            let c_a = EvalCtx { t, env: 0.0, x: &x, y: &y, z: &z };
            let c_b = EvalCtx { t, env: 0.0, x: &x, y: &y, z: &z2 };
            (coeffs.b)(&c_a, &mut b1);
            (coeffs.b)(&c_b, &mut b2);
            (coeffs.f)(&c_a, &mut f1);
            (coeffs.f)(&c_b, &mut f2);
            (coeffs.sigma)(&c_a, &mut s1);
            (coeffs.sigma)(&c_b, &mut s2);
            let dz = diff(&z, &z2);
            let nz = norm(&dz);
            if nz > 1e-9 {
                rec.c2 = rec.c2.max(norm(&diff(&f1, &f2)) / nz);
                rec.k2 = rec.k2.max(norm(&diff(&b1, &b2)) / nz);
                let ds = norm(&diff(&s1, &s2));
                rec.k5 = rec.k5.max(ds * ds / (nz * nz));
            }
        }
    }
    rec
}
