//! The representing random field v(t, x) = Y_{t,x}(t), decoupling and
//! Z-consistency residuals, the stationarity test, and the
//! Ito-Kunita-Wentzell decomposition validator.
//!
//! Field values are Monte Carlo averages over inner (Brownian) paths of one
//! environment-noise realization; when the coefficients are deterministic the
//! environment is inert and the table is the plain Markovian field. Samples
//! across realizations are obtained by rebuilding with different seeds.

use std::sync::Arc;

use crate::coeff::EvalCtx;
use crate::error::{invalid, Error, Result};
use crate::grid::{PathTriple, TimeGrid};
use crate::models::ModelSpec;
use crate::picard::{solve_fbsde, SolveConfig};
use crate::simulate::generate_brownian;
use crate::stats::ks_two_sample;

/// Axis-aligned lattice in R^n: the cartesian product of per-axis node sets.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub axes: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("lattice needs at least one axis"));
        }
        for ax in &axes {
            if ax.is_empty() {
                return Err(invalid("lattice axis needs at least one node"));
            }
            if ax.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("lattice axis nodes must be strictly increasing"));
            }
        }
        Ok(Lattice { axes })
    }

    /// Uniformly spaced axis nodes from per-axis ranges.
    pub fn regular(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() {
            return Err(invalid("lattice range arrays must have equal length"));
        }
        let mut axes = Vec::with_capacity(lo.len());
        for i in 0..lo.len() {
            if counts[i] < 2 || hi[i] <= lo[i] {
                return Err(invalid("lattice axis needs >= 2 nodes and hi > lo"));
            }
            let h = (hi[i] - lo[i]) / (counts[i] - 1) as f64;
            axes.push((0..counts[i]).map(|j| lo[i] + j as f64 * h).collect());
        }
        Lattice::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn points(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Coordinates of the flat point index (last axis fastest).
    pub fn point(&self, mut flat: usize) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for ax in (0..n).rev() {
            let len = self.axes[ax].len();
            out[ax] = self.axes[ax][flat % len];
            flat /= len;
        }
        out
    }

    /// Per-axis cell index and fraction for `x`, clipping to the axis range.
    /// Returns true in the second slot when any coordinate was clipped.
    fn locate(&self, x: &[f64]) -> (Vec<(usize, f64)>, bool) {
        let mut cells = Vec::with_capacity(self.dim());
        let mut clipped = false;
        for (ax, v) in self.axes.iter().zip(x) {
            let last = ax.len() - 1;
            if *v <= ax[0] {
                clipped |= *v < ax[0] - 1e-12;
                cells.push((0, 0.0));
            } else if *v >= ax[last] {
                clipped |= *v > ax[last] + 1e-12;
                cells.push((last.saturating_sub(1), if last == 0 { 0.0 } else { 1.0 }));
            } else {
                let j = ax.partition_point(|a| a <= v) - 1;
                cells.push((j, (v - ax[j]) / (ax[j + 1] - ax[j])));
            }
        }
        (cells, clipped)
    }

    /// Multilinear interpolation of a table indexed by flat point index.
    fn interpolate(&self, table: &dyn Fn(usize) -> f64, cells: &[(usize, f64)]) -> f64 {
        let n = self.dim();
        let mut strides = vec![1usize; n];
        for ax in (0..n.saturating_sub(1)).rev() {
            strides[ax] = strides[ax + 1] * self.axes[ax + 1].len();
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for ax in 0..n {
                let hi = (corner >> ax) & 1 == 1;
                let (j, frac) = cells[ax];
                let single = self.axes[ax].len() == 1;
                if hi {
                    if single {
                        w = 0.0;
                        break;
                    }
                    w *= frac;
                    flat += (j + 1) * strides[ax];
                } else {
                    w *= 1.0 - frac;
                    flat += j * strides[ax];
                }
            }
            if w != 0.0 {
                acc += w * table(flat);
            }
        }
        acc
    }
}

/// Tabulated representing field over a time-by-lattice grid.
pub struct RepresentingField {
    pub t_nodes: Vec<f64>,
    pub lattice: Lattice,
    /// v at [t_index * points + point_index].
    pub values: Vec<f64>,
    /// Central-difference gradient at [ (t_index * points + point) * n + axis ].
    pub gradient: Vec<f64>,
    /// False where the node solve failed or did not converge.
    pub mask: Vec<bool>,
    /// Solve configuration the table was built with.
    pub meta: SolveConfig,
}

impl RepresentingField {
    /// Interpolated (value, clipped) at (t, x): linear in t (clamped to the
    /// node range), multilinear in x with clipping to the lattice box.
    pub fn value_at(&self, t: f64, x: &[f64]) -> (f64, bool) {
        self.lookup(t, x, None)
    }

    /// Interpolated gradient component `axis` at (t, x).
    pub fn gradient_at(&self, t: f64, x: &[f64], axis: usize) -> (f64, bool) {
        self.lookup(t, x, Some(axis))
    }

    fn lookup(&self, t: f64, x: &[f64], axis: Option<usize>) -> (f64, bool) {
        let points = self.lattice.points();
        let n = self.lattice.dim();
        let (cells, clipped) = self.lattice.locate(x);
        let slice_val = |ti: usize| {
            let table = |flat: usize| match axis {
                None => self.values[ti * points + flat],
                Some(a) => self.gradient[(ti * points + flat) * n + a],
            };
            self.lattice.interpolate(&table, &cells)
        };
        let tn = &self.t_nodes;
        let v = if tn.len() == 1 || t <= tn[0] {
            slice_val(0)
        } else if t >= tn[tn.len() - 1] {
            slice_val(tn.len() - 1)
        } else {
            let j = tn.partition_point(|a| a <= &t) - 1;
            let frac = (t - tn[j]) / (tn[j + 1] - tn[j]);
            (1.0 - frac) * slice_val(j) + frac * slice_val(j + 1)
        };
        (v, clipped)
    }
}

fn offset_for(t: f64, base_t0: f64, dt: f64, base_offset: usize) -> Result<usize> {
    let steps = (t - base_t0) / dt;
    let k = steps.round();
    if (steps - k).abs() > 1e-9 || k < 0.0 {
        return Err(invalid("field times must be t0 plus a multiple of dt"));
    }
    Ok(base_offset + k as usize)
}

/// Tabulate v(t, x) = Y_{t,x}(t) by one solve per (t, lattice point), all on
/// the common noise realization selected by the config seed.
pub fn build_field(
    model: &ModelSpec,
    t_nodes: &[f64],
    lattice: Lattice,
    cfg: &SolveConfig,
) -> Result<RepresentingField> {
    if model.coeffs.dims.m != 1 {
        return Err(invalid("build_field requires scalar backward state (m = 1)"));
    }
    if lattice.dim() != model.coeffs.dims.n {
        return Err(invalid("lattice dimension must match the forward state"));
    }
    if t_nodes.is_empty() || t_nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("t_nodes must be non-empty and strictly increasing"));
    }
    let points = lattice.points();
    let n = lattice.dim();
    let mut values = vec![0.0; t_nodes.len() * points];
    let mut mask = vec![false; t_nodes.len() * points];
    for (ti, &t) in t_nodes.iter().enumerate() {
        let mut node_cfg = *cfg;
        node_cfg.store_paths = false;
        node_cfg.t0 = t;
        node_cfg.noise_offset = offset_for(t, cfg.t0, cfg.dt, cfg.noise_offset)?;
        for pi in 0..points {
            let x = lattice.point(pi);
            match solve_fbsde(&model.coeffs, &x, model.terminal.as_ref(), &node_cfg) {
                Ok(r) if r.diag.converged => {
                    values[ti * points + pi] = r.diag.y0[0];
                    mask[ti * points + pi] = true;
                }
                _ => {}
            }
        }
    }
    // Central-difference gradient along each axis (one-sided at the ends).
    let mut strides = vec![1usize; n];
    for ax in (0..n.saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * lattice.axes[ax + 1].len();
    }
    let mut gradient = vec![0.0; t_nodes.len() * points * n];
    for ti in 0..t_nodes.len() {
        for pi in 0..points {
            for ax in 0..n {
                let len = lattice.axes[ax].len();
                if len < 2 {
                    continue;
                }
                let j = (pi / strides[ax]) % len;
                let (lo, hi) = if j == 0 {
                    (pi, pi + strides[ax])
                } else if j == len - 1 {
                    (pi - strides[ax], pi)
                } else {
                    (pi - strides[ax], pi + strides[ax])
                };
                let jl = (lo / strides[ax]) % len;
                let jh = (hi / strides[ax]) % len;
                let dx = lattice.axes[ax][jh] - lattice.axes[ax][jl];
                gradient[(ti * points + pi) * n + ax] =
                    (values[ti * points + hi] - values[ti * points + lo]) / dx;
            }
        }
    }
    Ok(RepresentingField {
        t_nodes: t_nodes.to_vec(),
        lattice,
        values,
        gradient,
        mask,
        meta: *cfg,
    })
}

/// Decoupling residual: solve the coupled system once from (t0, x0) and
/// return the max over the first half of the grid times of
/// E|Y(s) - v(s, X(s))|^2 / (1 + E|Y(s)|^2).
pub fn decoupling_residual(
    model: &ModelSpec,
    field: &RepresentingField,
    cfg: &SolveConfig,
) -> Result<f64> {
    if model.coeffs.dims.m != 1 {
        return Err(invalid("decoupling_residual requires scalar backward state"));
    }
    let mut solve_cfg = *cfg;
    solve_cfg.store_paths = true;
    solve_cfg.refine_horizon = false;
    let r = solve_fbsde(&model.coeffs, &model.x0_default, model.terminal.as_ref(), &solve_cfg)?;
    let triple = r.triple.expect("store_paths requested");
    let grid = triple.grid;
    let paths = triple.paths();
    let mut off_lattice = 0usize;
    let mut total = 0usize;
    let mut worst = 0.0f64;
    for i in 0..=grid.steps / 2 {
        let s = grid.node(i);
        let mut num = 0.0;
        let mut den = 0.0;
        for p in 0..paths {
            let y = triple.y.at(p, i)[0];
            let (v, clipped) = field.value_at(s, triple.x.at(p, i));
            total += 1;
            if clipped {
                off_lattice += 1;
            }
            num += (y - v) * (y - v);
            den += y * y;
        }
        worst = worst.max(num / paths as f64 / (1.0 + den / paths as f64));
    }
    if off_lattice * 20 > total {
        return Err(Error::Coverage { off_lattice, total });
    }
    Ok(worst)
}

/// Markovian Z-consistency: normalized mean square of
/// Z(s) - grad_x v(s, X(s))^T sigma(s, X(s), v, Z) over the first half of the
/// solved paths. Requires deterministic coefficients (for genuinely random
/// coefficients the field's own diffusion term is not observable here).
pub fn z_consistency_residual(
    model: &ModelSpec,
    field: &RepresentingField,
    solution: &PathTriple,
) -> Result<f64> {
    if !model.coeffs.flags.deterministic_coefficients {
        return Err(Error::InvalidMode(
            "z_consistency_residual requires deterministic coefficients".into(),
        ));
    }
    let dims = model.coeffs.dims;
    if dims.m != 1 {
        return Err(invalid("z_consistency_residual requires scalar backward state"));
    }
    let grid = solution.grid;
    let paths = solution.paths();
    let (n, d) = (dims.n, dims.d);
    let mut sigma = vec![0.0; n * d];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0usize;
    for i in 0..=grid.steps / 2 {
        let s = grid.node(i);
        for p in 0..paths {
            let x = solution.x.at(p, i);
            let z = solution.z.at(p, i);
            let (v, _) = field.value_at(s, x);
            let y = [v];
            (model.coeffs.sigma)(&EvalCtx { t: s, env: 0.0, x, y: &y, z }, &mut sigma);
            for dd in 0..d {
                let mut pred = 0.0;
                for ax in 0..n {
                    pred += field.gradient_at(s, x, ax).0 * sigma[ax * d + dd];
                }
                num += (z[dd] - pred) * (z[dd] - pred);
                den += z[dd] * z[dd];
            }
            count += 1;
        }
    }
    let count = count.max(1) as f64;
    Ok(num / count / (1.0 + den / count))
}

/// Two-sample stationarity report.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub ks_stat: f64,
    pub p_value: f64,
    /// Realizations that produced a converged pair of solves.
    pub samples_used: usize,
}

/// Theorem-4.5-style test: over independent environment realizations compare
/// the sample of v(t, x) with the sample of v(t + alpha, x) computed under
/// the shifted noise, via the two-sample Kolmogorov-Smirnov statistic.
pub fn stationarity_test(
    model: &ModelSpec,
    t: f64,
    alpha: f64,
    x: &[f64],
    samples: usize,
    cfg: &SolveConfig,
) -> Result<StationarityReport> {
    if !model.coeffs.flags.autonomous {
        return Err(Error::InvalidMode(
            "stationarity_test requires autonomous coefficients".into(),
        ));
    }
    if samples == 0 {
        return Err(invalid("stationarity_test needs at least one sample"));
    }
    let mut a = Vec::with_capacity(samples);
    let mut b = Vec::with_capacity(samples);
    for s in 0..samples {
        let mut cfg_a = *cfg;
        cfg_a.seed = cfg.seed.wrapping_add(s as u64);
        cfg_a.t0 = t;
        cfg_a.noise_offset = offset_for(t, cfg.t0, cfg.dt, cfg.noise_offset)?;
        let mut cfg_b = cfg_a;
        cfg_b.t0 = t + alpha;
        cfg_b.noise_offset = offset_for(t + alpha, cfg.t0, cfg.dt, cfg.noise_offset)?;
        let ra = solve_fbsde(&model.coeffs, x, model.terminal.as_ref(), &cfg_a);
        let rb = solve_fbsde(&model.coeffs, x, model.terminal.as_ref(), &cfg_b);
        if let (Ok(ra), Ok(rb)) = (ra, rb) {
            if ra.diag.converged && rb.diag.converged {
                a.push(ra.diag.y0[0]);
                b.push(rb.diag.y0[0]);
            }
        }
    }
    if a.len() * 2 < samples {
        return Err(Error::NotConverged(format!(
            "stationarity_test: only {} of {samples} realizations solved",
            a.len()
        )));
    }
    let (ks_stat, p_value) = ks_two_sample(&a, &b);
    Ok(StationarityReport { ks_stat, p_value, samples_used: a.len() })
}

/// Closed-form scalar random field evaluator (t, x, w) where w is the value
/// of the driving Brownian motion at t.
pub type FieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// One Ito-Kunita-Wentzell test case for F(t, X(t)) with X = W (so the
/// semimartingale characteristics of X are drift 0 and diffusion 1). All
/// decomposition terms must be supplied in closed form.
pub struct IkwCase {
    pub name: &'static str,
    pub f: FieldFn,
    /// Drift of the field at fixed x.
    pub a_f: Option<FieldFn>,
    /// Diffusion of the field at fixed x.
    pub psi_f: Option<FieldFn>,
    pub df_dx: Option<FieldFn>,
    pub d2f_dx2: Option<FieldFn>,
    /// x-gradient of the field diffusion (the cross-variation term).
    pub dpsi_f_dx: Option<FieldFn>,
}

/// The three polynomial validation cases.
pub fn ikw_standard_cases() -> Vec<IkwCase> {
    let zero: FieldFn = Arc::new(|_t, _x, _w| 0.0);
    let one: FieldFn = Arc::new(|_t, _x, _w| 1.0);
    vec![
        IkwCase {
            name: "identity",
            f: Arc::new(|_t, x, _w| x),
            a_f: Some(zero.clone()),
            psi_f: Some(zero.clone()),
            df_dx: Some(one.clone()),
            d2f_dx2: Some(zero.clone()),
            dpsi_f_dx: Some(zero.clone()),
        },
        IkwCase {
            name: "square",
            f: Arc::new(|_t, x, _w| x * x),
            a_f: Some(zero.clone()),
            psi_f: Some(zero.clone()),
            df_dx: Some(Arc::new(|_t, x, _w| 2.0 * x)),
            d2f_dx2: Some(Arc::new(|_t, _x, _w| 2.0)),
            dpsi_f_dx: Some(zero.clone()),
        },
        IkwCase {
            name: "cross",
            f: Arc::new(|_t, x, w| w * x),
            a_f: Some(zero),
            psi_f: Some(Arc::new(|_t, x, _w| x)),
            df_dx: Some(Arc::new(|_t, _x, w| w)),
            d2f_dx2: Some(zero_fn()),
            dpsi_f_dx: Some(one),
        },
    ]
}

fn zero_fn() -> FieldFn {
    Arc::new(|_t, _x, _w| 0.0)
}

/// Discretized both-sides check of the decomposition of F(t, W(t)):
/// max over grid nodes of the path-mean squared gap between F itself and its
/// reconstructed drift + diffusion + cross-variation integrals. The squared
/// aggregation makes the residual first order in dt (the pathwise gap of the
/// quadratic-variation term is only of order sqrt(dt)).
pub fn ikw_residual(case: &IkwCase, grid: TimeGrid, paths: usize, seed: u64) -> Result<f64> {
    let (a_f, psi_f, df_dx, d2f_dx2, dpsi_f_dx) = match (
        &case.a_f,
        &case.psi_f,
        &case.df_dx,
        &case.d2f_dx2,
        &case.dpsi_f_dx,
    ) {
        (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
        _ => {
            return Err(invalid(format!(
                "ikw case '{}' is missing decomposition terms",
                case.name
            )))
        }
    };
    let bundle = generate_brownian(grid, paths, 1, seed)?;
    let dt = grid.dt();
    let mut gap_sum = vec![0.0; grid.nodes()];
    for p in 0..paths {
        let mut w = 0.0;
        let mut rhs = (case.f)(grid.t0, 0.0, 0.0);
        for i in 0..grid.steps {
            let t = grid.node(i);
            let dw = bundle.increment(p, i, 0);
            let drift = a_f(t, w, w)
                + 0.5 * d2f_dx2(t, w, w)
                + dpsi_f_dx(t, w, w);
            let diffusion = psi_f(t, w, w) + df_dx(t, w, w);
            rhs += drift * dt + diffusion * dw;
            w += dw;
            let lhs = (case.f)(grid.node(i + 1), w, w);
            gap_sum[i + 1] += (lhs - rhs) * (lhs - rhs);
        }
    }
    Ok(gap_sum
        .iter()
        .map(|g| g / paths as f64)
        .fold(0.0f64, f64::max))
}
