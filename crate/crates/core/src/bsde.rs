//! Backward solver: regression-based conditional expectations over frozen
//! forward paths (Longstaff-Schwartz style).
//!
//! Per backward step i:
//!   Z(t_i)  = fit of E[Y(t_{i+1}) dW_i^T | X(t_i)] / dt,
//!   Y(t_i)  = fit of E[Y(t_{i+1}) | X(t_i)] + f(t_i, X, y*, Z) dt,
//! where y* is one predictor-corrector refinement of the implicit y-argument.
//! The regression basis is the set of monomials of per-step standardized X up
//! to a total degree, with a ridge term on the normal equations.

use rayon::prelude::*;
use std::sync::Arc;

use crate::coeff::{CoefficientSet, EvalCtx};
use crate::error::{Error, Result};
use crate::grid::PathTensor;
use crate::simulate::{BrownianBundle, XAccess};
use crate::stats::{chunked_sum, solve_spd, REDUCE_CHUNK};

/// Terminal condition Phi(T, x).
pub type TerminalFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// The zero terminal condition (the infinite-horizon truncation default).
pub fn zero_terminal() -> TerminalFn {
    Arc::new(|_t, _x, out: &mut [f64]| out.fill(0.0))
}

#[derive(Debug, Clone, Copy)]
pub struct BasisConfig {
    pub degree: usize,
    pub ridge: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { degree: 2, ridge: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BsdeConfig {
    pub basis: BasisConfig,
    /// Store the full (Y, Z) tensors (needed by coupled Picard iterations).
    pub store: bool,
    /// Keep per-step regression coefficients (adaptedness diagnostics).
    pub keep_coefficients: bool,
}

/// Per-step regression record: standardization and fitted coefficients.
#[derive(Debug, Clone)]
pub struct StepRegression {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// K x m, column-major by target: beta_e[target*K + basis].
    pub beta_e: Vec<f64>,
    /// K x (m*d), column-major by target.
    pub beta_z: Vec<f64>,
}

pub struct BsdeOutput {
    pub y: Option<PathTensor>,
    pub z: Option<PathTensor>,
    /// Fitted Y at the initial node (identical across paths; length m).
    pub y0: Vec<f64>,
    /// Martingale ("pathwise") estimator of Y(0) per path (paths x m):
    /// Phi + sum f dt - sum Z dW. Its spread yields the Y(0) standard error.
    pub pathwise_y0: Vec<f64>,
    /// Mean over paths of |Y|^2 at every node.
    pub mean_y_sq: Vec<f64>,
    /// Z averaged over paths and the first half of the time nodes (m*d).
    pub z_first_half_avg: Vec<f64>,
    /// Number of steps where the ridge had to be escalated.
    pub ridge_escalations: usize,
    /// Regression records (node index = step index), present when requested.
    pub regressions: Option<Vec<StepRegression>>,
}

/// Multi-indices over `n` variables with total degree <= `degree`,
/// in a fixed deterministic order starting with the constant.
pub fn multi_indices(n: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; n]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for idx in &out {
            let deg: usize = idx.iter().sum();
            if deg + 1 > degree {
                continue;
            }
            for v in 0..n {
                let mut cand = idx.clone();
                cand[v] += 1;
                if !next.contains(&cand) && !out.contains(&cand) {
                    next.push(cand);
                }
            }
        }
        out.extend(next);
    }
    out
}

#[inline]
fn eval_basis(indices: &[Vec<usize>], xs: &[f64], mean: &[f64], std: &[f64], phi: &mut [f64]) {
    for (j, idx) in indices.iter().enumerate() {
        let mut v = 1.0;
        for (c, &p) in idx.iter().enumerate() {
            if p > 0 {
                let s = (xs[c] - mean[c]) / std[c];
                for _ in 0..p {
                    v *= s;
                }
            }
        }
        phi[j] = v;
    }
}

/// Callback invoked at every node from the terminal down to node 0 with the
/// per-path X (paths*n), Y (paths*m) and Z (paths*m*d, zeros at the terminal
/// node) buffers.
pub type NodeObserver<'a> = &'a mut dyn FnMut(usize, &[f64], &[f64], &[f64]);

pub fn solve_bsde(
    coeffs: &CoefficientSet,
    x: &mut XAccess,
    terminal: &TerminalFn,
    bundle: &BrownianBundle,
    cfg: &BsdeConfig,
    mut observer: Option<NodeObserver>,
) -> Result<BsdeOutput> {
    let (n, m, d) = (coeffs.dims.n, coeffs.dims.m, coeffs.dims.d);
    let paths = bundle.paths;
    let steps = bundle.grid.steps;
    let nodes = steps + 1;
    let dt = bundle.grid.dt();
    let env = bundle.env_path();

    let indices = multi_indices(n, cfg.basis.degree);
    let k = indices.len();
    // The scalar quadratic shape dominates production runs; its inner loops
    // are unrolled below with the exact same operation order as the generic
    // path, so both produce bit-identical output.
    let scalar_quad =
        n == 1 && m == 1 && d == 1 && k == 3 && indices[1][0] == 1 && indices[2][0] == 2;

    let mut x_cur = vec![0.0; paths * n];
    // Per-step basis values and Brownian increments, computed once per node
    // and shared by the accumulation and fitted passes.
    let mut phi_all = vec![0.0; paths * k];
    let mut dw_all = vec![0.0; paths * d];
    let mut y_next = vec![0.0; paths * m];
    let mut y_cur = vec![0.0; paths * m];
    let mut z_cur = vec![0.0; paths * m * d];
    let mut pathwise = vec![0.0; paths * m];

    let mut y_store = cfg.store.then(|| PathTensor::zeros(paths, nodes, m));
    let mut z_store = cfg.store.then(|| PathTensor::zeros(paths, nodes, m * d));
    let mut regressions = cfg
        .keep_coefficients
        .then(|| Vec::<StepRegression>::with_capacity(steps));
    let mut mean_y_sq = vec![0.0; nodes];
    let mut z_half_sum = vec![0.0; m * d];
    let mut z_half_count = 0usize;
    let mut ridge_escalations = 0usize;

    // Terminal node.
    x.load(steps, &mut x_cur);
    let t_end = bundle.grid.node(steps);
    y_next
        .par_chunks_mut(m)
        .zip(x_cur.par_chunks(n))
        .for_each(|(y, xs)| terminal(t_end, xs, y));
    for p in 0..paths {
        pathwise[p * m..(p + 1) * m].copy_from_slice(&y_next[p * m..(p + 1) * m]);
    }
    mean_y_sq[steps] = y_next.iter().map(|v| v * v).sum::<f64>() / paths as f64;
    if let Some(ys) = y_store.as_mut() {
        for p in 0..paths {
            ys.at_mut(p, steps).copy_from_slice(&y_next[p * m..(p + 1) * m]);
        }
    }
    if let Some(obs) = observer.as_mut() {
        z_cur.fill(0.0);
        obs(steps, &x_cur, &y_next, &z_cur);
    }

    for i in (0..steps).rev() {
        let t = bundle.grid.node(i);
        x.load(i, &mut x_cur);

        // Standardization moments.
        let moms = chunked_sum(paths, 2 * n, |range, acc| {
            for p in range {
                for c in 0..n {
                    let v = x_cur[p * n + c];
                    acc[c] += v;
                    acc[n + c] += v * v;
                }
            }
        });
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for c in 0..n {
            mean[c] = moms[c] / paths as f64;
            let var = (moms[n + c] / paths as f64 - mean[c] * mean[c]).max(0.0);
            std[c] = if var > 1e-300 { var.sqrt() } else { 1.0 };
        }

        let have_dw = x.load_dw(i, &mut dw_all);
        {
            let x_ref = &x_cur;
            let mean = &mean;
            let std = &std;
            let indices = &indices;
            if scalar_quad {
                let (mu, sd) = (mean[0], std[0]);
                phi_all
                    .par_chunks_mut(k)
                    .zip(dw_all.par_chunks_mut(d))
                    .enumerate()
                    .for_each(|(p, (phi, dw))| {
                        let s = (x_ref[p] - mu) / sd;
                        phi[0] = 1.0;
                        phi[1] = s;
                        phi[2] = s * s;
                        if !have_dw {
                            bundle.increments_at(p, i, dw);
                        }
                    });
            } else {
                phi_all
                    .par_chunks_mut(k)
                    .zip(dw_all.par_chunks_mut(d))
                    .enumerate()
                    .for_each(|(p, (phi, dw))| {
                        eval_basis(indices, &x_ref[p * n..(p + 1) * n], mean, std, phi);
                        if !have_dw {
                            bundle.increments_at(p, i, dw);
                        }
                    });
            }
        }

        // Gram and conditional-mean right-hand sides, accumulated separately
        // over the two path halves so the pathwise Y(0) estimator can use a
        // cross-fitted Z control variate (fitting Z on the same increments it
        // multiplies would bias the estimator mean by ~ k*steps/paths).
        // Layout: [gram (k*k), rhs_e (m*k)].
        let width = k * k + m * k;
        let half = paths / 2;
        let accumulate = |lo: usize, hi: usize| {
            let y_ref = &y_next;
            let phi_ref = &phi_all;
            if scalar_quad {
                // Unrolled layout for k = 3, m = d = 1 (same update order).
                chunked_sum(hi - lo, width, move |range, acc| {
                    let range = range.start + lo..range.end + lo;
                    for p in range {
                        let (p0, p1, p2) = (phi_ref[p * 3], phi_ref[p * 3 + 1], phi_ref[p * 3 + 2]);
                        let yv = y_ref[p];
                        acc[0] += p0 * p0;
                        acc[1] += p0 * p1;
                        acc[2] += p0 * p2;
                        acc[4] += p1 * p1;
                        acc[5] += p1 * p2;
                        acc[8] += p2 * p2;
                        acc[9] += yv * p0;
                        acc[10] += yv * p1;
                        acc[11] += yv * p2;
                    }
                })
            } else {
                chunked_sum(hi - lo, width, move |range, acc| {
                    let range = range.start + lo..range.end + lo;
                    for p in range {
                        let phi = &phi_ref[p * k..(p + 1) * k];
                        // Upper triangle only; mirrored below (Gram is symmetric).
                        for a in 0..k {
                            let pa = phi[a];
                            for b in a..k {
                                acc[a * k + b] += pa * phi[b];
                            }
                        }
                        for j in 0..m {
                            let yv = y_ref[p * m + j];
                            let base_e = k * k + j * k;
                            for a in 0..k {
                                acc[base_e + a] += yv * phi[a];
                            }
                        }
                    }
                })
            }
        };
        // Z right-hand sides with the fitted conditional mean subtracted from
        // the target: E[(Y - e(X)) dW | X] = E[Y dW | X] for any e measurable
        // at the current node, while the target variance drops from order
        // E|Y|^2 dt to the one-step conditional variance times dt. Without
        // the centering the fitted Z carries statistical noise of order
        // sqrt(E|Y|^2 / (paths dt)), which swamps Z itself on fine grids.
        let accumulate_z = |lo: usize, hi: usize, be: &[f64]| {
            let y_ref = &y_next;
            let phi_ref = &phi_all;
            let dw_ref = &dw_all;
            if scalar_quad {
                chunked_sum(hi - lo, k, move |range, acc| {
                    let range = range.start + lo..range.end + lo;
                    for p in range {
                        let (p0, p1, p2) = (phi_ref[p * 3], phi_ref[p * 3 + 1], phi_ref[p * 3 + 2]);
                        let mut e = 0.0;
                        e += be[0] * p0;
                        e += be[1] * p1;
                        e += be[2] * p2;
                        let target = (y_ref[p] - e) * dw_ref[p];
                        acc[0] += target * p0;
                        acc[1] += target * p1;
                        acc[2] += target * p2;
                    }
                })
            } else {
                chunked_sum(hi - lo, m * d * k, move |range, acc| {
                    let range = range.start + lo..range.end + lo;
                    for p in range {
                        let phi = &phi_ref[p * k..(p + 1) * k];
                        let dw = &dw_ref[p * d..(p + 1) * d];
                        for j in 0..m {
                            let mut e = 0.0;
                            for a in 0..k {
                                e += be[j * k + a] * phi[a];
                            }
                            let yv = y_ref[p * m + j] - e;
                            for dd in 0..d {
                                let base_z = (j * d + dd) * k;
                                let target = yv * dw[dd];
                                for a in 0..k {
                                    acc[base_z + a] += target * phi[a];
                                }
                            }
                        }
                    }
                })
            }
        };
        let mirror = |mut acc: Vec<f64>| {
            for a in 0..k {
                for b in 0..a {
                    acc[a * k + b] = acc[b * k + a];
                }
            }
            acc
        };
        let sums_lo = mirror(accumulate(0, half));
        let sums_hi = mirror(accumulate(half, paths));
        let sums: Vec<f64> = sums_lo.iter().zip(&sums_hi).map(|(a, b)| a + b).collect();

        // Solve the (ridged) normal equations for all targets at once.
        let solve_ridged = |sums: &[f64], targets: &[Vec<f64>]| -> Option<(Vec<Vec<f64>>, bool)> {
            let trace_avg = (0..k).map(|a| sums[a * k + a]).sum::<f64>() / k as f64;
            let mut ridge = cfg.basis.ridge;
            for attempt in 0..2 {
                let mut gram = sums[..k * k].to_vec();
                for a in 0..k {
                    gram[a * k + a] += ridge * trace_avg.max(1.0);
                }
                let mut rhs_try = targets.to_vec();
                if solve_spd(&mut gram, k, &mut rhs_try).is_ok() {
                    return Some((rhs_try, attempt > 0));
                }
                ridge *= 1e8;
            }
            None
        };
        let e_targets_of = |sums: &[f64]| -> Vec<Vec<f64>> {
            (0..m).map(|j| sums[k * k + j * k..k * k + (j + 1) * k].to_vec()).collect()
        };
        let (rhs_e, esc_e) = solve_ridged(&sums, &e_targets_of(&sums))
            .ok_or(Error::SingularRegression { step: i })?;
        let beta_e: Vec<f64> = rhs_e.concat();
        // Per-half conditional means center the Z targets of their own half,
        // keeping the cross fits below functions of the opposite half only.
        let half_beta_e = |s: &[f64]| -> Vec<f64> {
            if half >= 2 {
                if let Some((sol, _)) = solve_ridged(s, &e_targets_of(s)) {
                    return sol.concat();
                }
            }
            beta_e.clone()
        };
        let beta_e_lo = half_beta_e(&sums_lo);
        let beta_e_hi = half_beta_e(&sums_hi);

        let zsums_lo = accumulate_z(0, half, &beta_e_lo);
        let zsums_hi = accumulate_z(half, paths, &beta_e_hi);
        let zsums: Vec<f64> = zsums_lo.iter().zip(&zsums_hi).map(|(a, b)| a + b).collect();
        let z_targets_of =
            |zs: &[f64]| -> Vec<Vec<f64>> { zs.chunks(k).map(|c| c.to_vec()).collect() };
        let (rhs_z, esc_z) = solve_ridged(&sums, &z_targets_of(&zsums))
            .ok_or(Error::SingularRegression { step: i })?;
        let beta_z: Vec<f64> = rhs_z.concat();
        if esc_e || esc_z {
            ridge_escalations += 1;
        }
        // Cross-fitted Z coefficients for the pathwise estimator: the lower
        // path half uses the fit from the upper half and vice versa. Falls
        // back to the full-sample fit if a half-fit is singular.
        let cross_of = |gram_sums: &[f64], zs: &[f64]| -> Vec<f64> {
            if half >= 2 {
                if let Some((sol, _)) = solve_ridged(gram_sums, &z_targets_of(zs)) {
                    return sol.concat();
                }
            }
            beta_z.clone()
        };
        let beta_z_for_lo = cross_of(&sums_hi, &zsums_hi);
        let beta_z_for_hi = cross_of(&sums_lo, &zsums_lo);

        // Fitted values, predictor-corrector driver, and accumulators.
        let chunk = REDUCE_CHUNK;
        let n_chunks = paths.div_ceil(chunk);
        let partials: Vec<(f64, Vec<f64>)> = y_cur
            .par_chunks_mut(chunk * m)
            .zip(z_cur.par_chunks_mut(chunk * m * d))
            .zip(pathwise.par_chunks_mut(chunk * m))
            .enumerate()
            .map(|(ci, ((yc, zc), pw))| {
                let lo = ci * chunk;
                let hi = (lo + chunk).min(paths);
                let mut e_fit = vec![0.0; m];
                let mut y_try = vec![0.0; m];
                let mut f1 = vec![0.0; m];
                let mut f2 = vec![0.0; m];
                let mut ysq_sum = 0.0;
                let mut z_sum = vec![0.0; m * d];
                if scalar_quad {
                    // Unrolled scalar body; operation order matches the
                    // generic loop below exactly.
                    for p in lo..hi {
                        let lp = p - lo;
                        let (p0, p1, p2) = (phi_all[p * 3], phi_all[p * 3 + 1], phi_all[p * 3 + 2]);
                        let mut e = 0.0;
                        e += beta_e[0] * p0;
                        e += beta_e[1] * p1;
                        e += beta_e[2] * p2;
                        e_fit[0] = e;
                        let mut zv = 0.0;
                        zv += beta_z[0] * p0;
                        zv += beta_z[1] * p1;
                        zv += beta_z[2] * p2;
                        let zrow = &mut zc[lp..lp + 1];
                        zrow[0] = zv / dt;
                        let xs = &x_cur[p..p + 1];
                        let ctx = EvalCtx { t, env: env[i], x: xs, y: &e_fit, z: zrow };
                        (coeffs.f)(&ctx, &mut f1);
                        y_try[0] = e_fit[0] + f1[0] * dt;
                        let ctx2 = EvalCtx { t, env: env[i], x: xs, y: &y_try, z: zrow };
                        (coeffs.f)(&ctx2, &mut f2);
                        let bc = if p < half { &beta_z_for_lo } else { &beta_z_for_hi };
                        let y_new = e_fit[0] + f2[0] * dt;
                        yc[lp] = y_new;
                        ysq_sum += y_new * y_new;
                        let mut zc_fit = 0.0;
                        zc_fit += bc[0] * p0;
                        zc_fit += bc[1] * p1;
                        zc_fit += bc[2] * p2;
                        let mut zdw = 0.0;
                        zdw += zc_fit / dt * dw_all[p];
                        pw[lp] += f2[0] * dt - zdw;
                        z_sum[0] += zc[lp];
                    }
                    return (ysq_sum, z_sum);
                }
                for p in lo..hi {
                    let lp = p - lo;
                    let xs = &x_cur[p * n..(p + 1) * n];
                    let phi = &phi_all[p * k..(p + 1) * k];
                    let dw = &dw_all[p * d..(p + 1) * d];
                    let zrow = &mut zc[lp * m * d..(lp + 1) * m * d];
                    for j in 0..m {
                        let mut e = 0.0;
                        for a in 0..k {
                            e += beta_e[j * k + a] * phi[a];
                        }
                        e_fit[j] = e;
                        for dd in 0..d {
                            let mut zv = 0.0;
                            for a in 0..k {
                                zv += beta_z[(j * d + dd) * k + a] * phi[a];
                            }
                            zrow[j * d + dd] = zv / dt;
                        }
                    }
                    let ctx = EvalCtx { t, env: env[i], x: xs, y: &e_fit, z: zrow };
                    (coeffs.f)(&ctx, &mut f1);
                    for j in 0..m {
                        y_try[j] = e_fit[j] + f1[j] * dt;
                    }
                    let ctx2 = EvalCtx { t, env: env[i], x: xs, y: &y_try, z: zrow };
                    (coeffs.f)(&ctx2, &mut f2);
                    let beta_cross = if p < half { &beta_z_for_lo } else { &beta_z_for_hi };
                    let yrow = &mut yc[lp * m..(lp + 1) * m];
                    for j in 0..m {
                        yrow[j] = e_fit[j] + f2[j] * dt;
                        ysq_sum += yrow[j] * yrow[j];
                        let mut zdw = 0.0;
                        for dd in 0..d {
                            let mut zv = 0.0;
                            for a in 0..k {
                                zv += beta_cross[(j * d + dd) * k + a] * phi[a];
                            }
                            zdw += zv / dt * dw[dd];
                        }
                        pw[lp * m + j] += f2[j] * dt - zdw;
                    }
                    for c in 0..m * d {
                        z_sum[c] += zrow[c];
                    }
                }
                (ysq_sum, z_sum)
            })
            .collect();
        debug_assert_eq!(partials.len(), n_chunks);
        let mut ysq = 0.0;
        for (s, zs) in &partials {
            ysq += s;
            if i < steps / 2 {
                for (a, v) in z_half_sum.iter_mut().zip(zs) {
                    *a += v;
                }
            }
        }
        mean_y_sq[i] = ysq / paths as f64;
        if i < steps / 2 {
            z_half_count += paths;
        }

        if let Some(ys) = y_store.as_mut() {
            for p in 0..paths {
                ys.at_mut(p, i).copy_from_slice(&y_cur[p * m..(p + 1) * m]);
            }
        }
        if let Some(zs) = z_store.as_mut() {
            for p in 0..paths {
                zs.at_mut(p, i).copy_from_slice(&z_cur[p * m * d..(p + 1) * m * d]);
            }
        }
        if let Some(regs) = regressions.as_mut() {
            regs.push(StepRegression {
                mean: mean.clone(),
                std: std.clone(),
                beta_e: beta_e.clone(),
                beta_z: beta_z.clone(),
            });
        }
        if let Some(obs) = observer.as_mut() {
            obs(i, &x_cur, &y_cur, &z_cur);
        }
        std::mem::swap(&mut y_next, &mut y_cur);
    }

    if let Some(regs) = regressions.as_mut() {
        regs.reverse();
    }
    let y0 = y_next[..m].to_vec();
    let z_first_half_avg = if z_half_count > 0 {
        z_half_sum.iter().map(|v| v / z_half_count as f64).collect()
    } else {
        vec![0.0; m * d]
    };
    Ok(BsdeOutput {
        y: y_store,
        z: z_store,
        y0,
        pathwise_y0: pathwise,
        mean_y_sq,
        z_first_half_avg,
        ridge_escalations,
        regressions,
    })
}
