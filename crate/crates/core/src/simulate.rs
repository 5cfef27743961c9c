//! Brownian path generation, forward Euler-Maruyama integration, and the
//! shift operator.

use rayon::prelude::*;

use crate::coeff::{CoefficientSet, EvalCtx};
use crate::error::{invalid, Error, Result};
use crate::grid::{PathTensor, TimeGrid};
use crate::rng;

/// Path magnitude beyond which a path counts as divergent.
pub const OVERFLOW_BOUND: f64 = 1e12;
/// Fraction of divergent paths above which a run aborts.
pub const DIVERGENCE_LIMIT: f64 = 1e-3;

const ENV_SALT: u64 = 0x5eed_0e2f_1234_abcd;

/// Brownian increment bundle over a grid.
///
/// Increments are a pure function of (seed, path, absolute step, dim), so the
/// tensor is generated on demand instead of stored; backward sweeps can
/// re-simulate chunks bit-identically. `step_offset` is the absolute index of
/// the first increment, advanced by the shift operator.
#[derive(Debug, Clone)]
pub struct BrownianBundle {
    pub seed: u64,
    pub grid: TimeGrid,
    pub paths: usize,
    pub d: usize,
    pub step_offset: usize,
}

impl BrownianBundle {
    /// Increment of dimension `dim` over step `i` (grid-local index) for `path`.
    #[inline]
    pub fn increment(&self, path: usize, i: usize, dim: usize) -> f64 {
        let g = rng::standard_normal(
            self.seed,
            path as u64,
            (self.step_offset + i) as u64,
            dim as u64,
        );
        g * self.grid.dt().sqrt()
    }

    /// Fill `out` (length d) with the increments over step `i` for `path`.
    #[inline]
    pub fn increments_at(&self, path: usize, i: usize, out: &mut [f64]) {
        for (dim, o) in out.iter_mut().enumerate() {
            *o = self.increment(path, i, dim);
        }
    }

    /// Materialize the full increment tensor (tests and small runs only).
    pub fn increments(&self) -> PathTensor {
        let mut t = PathTensor::zeros(self.paths, self.grid.steps, self.d);
        for p in 0..self.paths {
            for i in 0..self.grid.steps {
                self.increments_at(p, i, t.at_mut(p, i));
            }
        }
        t
    }

    /// Environment (coefficient) noise path shared by all inner paths of this
    /// realization: a scalar Brownian path sampled at the grid nodes, keyed
    /// by a salted copy of the seed over absolute steps so that `shift`
    /// produces exactly the time-shifted environment.
    pub fn env_path(&self) -> Vec<f64> {
        let dt_sqrt = self.grid.dt().sqrt();
        let mut cum = 0.0;
        for j in 0..self.step_offset {
            cum += rng::standard_normal(self.seed ^ ENV_SALT, 0, j as u64, 0) * dt_sqrt;
        }
        let mut out = Vec::with_capacity(self.grid.nodes());
        out.push(cum);
        for i in 0..self.grid.steps {
            cum += rng::standard_normal(self.seed ^ ENV_SALT, 0, (self.step_offset + i) as u64, 0)
                * dt_sqrt;
            out.push(cum);
        }
        out
    }
}

/// Construct a Brownian bundle; deterministic in the seed.
pub fn generate_brownian(
    grid: TimeGrid,
    paths: usize,
    d: usize,
    seed: u64,
) -> Result<BrownianBundle> {
    if paths == 0 || d == 0 {
        return Err(invalid("generate_brownian requires positive path count and dimension"));
    }
    Ok(BrownianBundle { seed, grid, paths, d, step_offset: 0 })
}

/// Shift operator: increments of s -> W(s+alpha) - W(alpha).
pub fn shift(bundle: &BrownianBundle, alpha: f64) -> Result<BrownianBundle> {
    if alpha < 0.0 {
        return Err(invalid("shift requires alpha >= 0"));
    }
    let dt = bundle.grid.dt();
    let k_real = alpha / dt;
    let k = k_real.round();
    if (k_real - k).abs() > 1e-9 * (1.0 + k_real.abs()) {
        return Err(invalid(format!("shift alpha {alpha} is not a multiple of dt {dt}")));
    }
    let k = k as usize;
    let grid = TimeGrid::new(
        bundle.grid.t0 + alpha,
        bundle.grid.t_end + alpha,
        bundle.grid.steps,
    )?;
    Ok(BrownianBundle {
        seed: bundle.seed,
        grid,
        paths: bundle.paths,
        d: bundle.d,
        step_offset: bundle.step_offset + k,
    })
}

/// Source of (Y, Z) values for the forward pass.
pub enum YzSource<'a> {
    /// (Y, Z) = (0, 0): the canonical initial Picard guess.
    Zero,
    /// Frozen paths from a previous iterate, aligned with the bundle grid.
    Frozen { y: &'a PathTensor, z: &'a PathTensor },
    /// A field evaluated at (t, env, x), writing y then z.
    Field(&'a (dyn Fn(f64, f64, &[f64], &mut [f64], &mut [f64]) + Sync)),
}

/// Output of a forward pass.
pub struct ForwardOutput {
    pub x: PathTensor,
    pub divergent: usize,
}

fn step_path(
    coeffs: &CoefficientSet,
    bundle: &BrownianBundle,
    env: &[f64],
    y_source: &YzSource,
    path: usize,
    i: usize,
    x: &[f64],
    y_frozen: &mut [f64],
    z_frozen: &mut [f64],
    b_buf: &mut [f64],
    s_buf: &mut [f64],
    dw: &mut [f64],
    x_next: &mut [f64],
) {
    let (n, m, d) = (coeffs.dims.n, coeffs.dims.m, coeffs.dims.d);
    let t = bundle.grid.node(i);
    match y_source {
        YzSource::Zero => {
            y_frozen.fill(0.0);
            z_frozen.fill(0.0);
        }
        YzSource::Frozen { y, z } => {
            y.row(path, i, y_frozen);
            z.row(path, i, z_frozen);
        }
        YzSource::Field(f) => f(t, env[i], x, y_frozen, z_frozen),
    }
    let ctx = EvalCtx { t, env: env[i], x, y: y_frozen, z: z_frozen };
    (coeffs.b)(&ctx, b_buf);
    (coeffs.sigma)(&ctx, s_buf);
    bundle.increments_at(path, i, dw);
    let dt = bundle.grid.dt();
    for j in 0..n {
        let mut v = x[j] + b_buf[j] * dt;
        for k in 0..d {
            v += s_buf[j * d + k] * dw[k];
        }
        x_next[j] = v;
    }
    let _ = m;
}

/// Forward Euler-Maruyama over the full grid, storing every node.
///
/// Divergent paths (any |component| above `OVERFLOW_BOUND`) are frozen at
/// their last finite value and counted; the run errors out when more than
/// 0.1% of paths diverge.
pub fn euler_forward(
    coeffs: &CoefficientSet,
    x0: &[f64],
    y_source: YzSource,
    bundle: &BrownianBundle,
) -> Result<ForwardOutput> {
    let (n, m, d) = (coeffs.dims.n, coeffs.dims.m, coeffs.dims.d);
    if x0.len() != n {
        return Err(invalid(format!("x0 has length {}, expected {n}", x0.len())));
    }
    let nodes = bundle.grid.nodes();
    let env = bundle.env_path();
    let mut x = PathTensor::zeros(bundle.paths, nodes, n);
    let per_path = nodes * n;
    let divergent: usize = x
        .data
        .par_chunks_mut(per_path)
        .enumerate()
        .map(|(path, slab)| {
            slab[..n].copy_from_slice(x0);
            let mut y_f = vec![0.0; m];
            let mut z_f = vec![0.0; m * d];
            let mut b_buf = vec![0.0; n];
            let mut s_buf = vec![0.0; n * d];
            let mut dw = vec![0.0; d];
            let mut x_next = vec![0.0; n];
            let mut diverged = false;
            for i in 0..nodes - 1 {
                let (cur, rest) = slab.split_at_mut((i + 1) * n);
                let x_cur = &cur[i * n..];
                if diverged {
                    rest[..n].copy_from_slice(x_cur);
                    continue;
                }
                step_path(
                    coeffs, bundle, &env, &y_source, path, i, x_cur, &mut y_f, &mut z_f,
                    &mut b_buf, &mut s_buf, &mut dw, &mut x_next,
                );
                if x_next.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_BOUND) {
                    diverged = true;
                    rest[..n].copy_from_slice(x_cur);
                } else {
                    rest[..n].copy_from_slice(&x_next);
                }
            }
            usize::from(diverged)
        })
        .sum();
    if divergent as f64 > DIVERGENCE_LIMIT * bundle.paths as f64 {
        return Err(Error::DivergentPaths { count: divergent, total: bundle.paths });
    }
    Ok(ForwardOutput { x, divergent })
}

/// Forward pass storing only every `every`-th node, for memory-lean backward
/// sweeps that re-simulate chunks on demand.
pub struct CheckpointedX {
    coeffs: CoefficientSet,
    bundle: BrownianBundle,
    env: Vec<f64>,
    every: usize,
    /// Checkpoint c holds X at node c*every; the last checkpoint is node
    /// `steps` rounded down plus a stored final node.
    checkpoints: PathTensor,
    /// Current chunk buffer: nodes [chunk_start, chunk_start+len) for all paths.
    buf: Vec<f64>,
    /// Brownian increments of steps [chunk_start, chunk_start+len-1), kept
    /// from re-simulation so backward sweeps skip a second generator pass.
    dw_buf: Vec<f64>,
    chunk_start: usize,
    chunk_len: usize,
    pub divergent: usize,
}

impl CheckpointedX {
    /// Run the forward pass once, recording checkpoints. Only valid for
    /// coefficient sets whose b and sigma ignore (y, z): chunk re-simulation
    /// feeds the zero source, which is exact in that case.
    pub fn build(
        coeffs: &CoefficientSet,
        x0: &[f64],
        bundle: &BrownianBundle,
        every: usize,
    ) -> Result<Self> {
        let (n, m, d) = (coeffs.dims.n, coeffs.dims.m, coeffs.dims.d);
        if x0.len() != n {
            return Err(invalid(format!("x0 has length {}, expected {n}", x0.len())));
        }
        if every == 0 {
            return Err(invalid("checkpoint stride must be positive"));
        }
        if !coeffs.is_decoupled() {
            return Err(Error::InvalidMode(
                "checkpointed forward requires b, sigma independent of (y, z)".into(),
            ));
        }
        let y_source = &YzSource::Zero;
        let env = bundle.env_path();
        let n_ck = bundle.grid.steps / every + 1;
        let mut checkpoints = PathTensor::zeros(bundle.paths, n_ck, n);
        let per_ck = n_ck * n;
        let divergent: usize = checkpoints
            .data
            .par_chunks_mut(per_ck)
            .enumerate()
            .map(|(path, cks)| {
                let mut xc = x0.to_vec();
                cks[..n].copy_from_slice(&xc);
                let mut y_f = vec![0.0; m];
                let mut z_f = vec![0.0; m * d];
                let mut b_buf = vec![0.0; n];
                let mut s_buf = vec![0.0; n * d];
                let mut dw = vec![0.0; d];
                let mut x_next = vec![0.0; n];
                let mut diverged = false;
                for i in 0..bundle.grid.steps {
                    if !diverged {
                        step_path(
                            coeffs, bundle, &env, y_source, path, i, &xc, &mut y_f, &mut z_f,
                            &mut b_buf, &mut s_buf, &mut dw, &mut x_next,
                        );
                        if x_next.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_BOUND) {
                            diverged = true;
                        } else {
                            xc.copy_from_slice(&x_next);
                        }
                    }
                    let node = i + 1;
                    if node % every == 0 {
                        let c = node / every;
                        cks[c * n..(c + 1) * n].copy_from_slice(&xc);
                    }
                }
                usize::from(diverged)
            })
            .sum();
        if divergent as f64 > DIVERGENCE_LIMIT * bundle.paths as f64 {
            return Err(Error::DivergentPaths { count: divergent, total: bundle.paths });
        }
        Ok(CheckpointedX {
            coeffs: coeffs.clone(),
            bundle: bundle.clone(),
            env,
            every,
            checkpoints,
            buf: Vec::new(),
            dw_buf: Vec::new(),
            chunk_start: usize::MAX,
            chunk_len: 0,
            divergent,
        })
    }

    fn load_chunk(&mut self, chunk: usize) {
        let n = self.coeffs.dims.n;
        let start = chunk * self.every;
        let len = (self.bundle.grid.steps + 1 - start).min(self.every + 1);
        self.buf.resize(self.bundle.paths * len * n, 0.0);
        let coeffs = &self.coeffs;
        let bundle = &self.bundle;
        let env = &self.env;
        let checkpoints = &self.checkpoints;
        let (m, d) = (coeffs.dims.m, coeffs.dims.d);
        self.dw_buf.resize(self.bundle.paths * (len - 1) * d, 0.0);
        self.buf
            .par_chunks_mut(len * n)
            .zip(self.dw_buf.par_chunks_mut((len - 1) * d))
            .enumerate()
            .for_each(|(path, (slab, dws))| {
                slab[..n].copy_from_slice(checkpoints.at(path, chunk));
                let mut y_f = vec![0.0; m];
                let mut z_f = vec![0.0; m * d];
                let mut b_buf = vec![0.0; n];
                let mut s_buf = vec![0.0; n * d];
                let mut dw = vec![0.0; d];
                let mut x_next = vec![0.0; n];
                for j in 0..len - 1 {
                    let i = start + j;
                    let (cur, rest) = slab.split_at_mut((j + 1) * n);
                    let x_cur = &cur[j * n..];
                    step_path(
                        coeffs, bundle, env, &YzSource::Zero, path, i, x_cur, &mut y_f,
                        &mut z_f, &mut b_buf, &mut s_buf, &mut dw, &mut x_next,
                    );
                    dws[j * d..(j + 1) * d].copy_from_slice(&dw);
                    // Re-simulation clamps exactly as the recording pass did.
                    if x_next.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_BOUND) {
                        rest[..n].copy_from_slice(x_cur);
                    } else {
                        rest[..n].copy_from_slice(&x_next);
                    }
                }
            });
        self.chunk_start = start;
        self.chunk_len = len;
    }

    /// Chunk that holds `node`. The terminal node of a grid with
    /// `every | steps` is served as the last node of the preceding chunk;
    /// a chunk of its own would hold a single node and no increments.
    fn chunk_of(&self, node: usize) -> usize {
        let c = node / self.every;
        if node > 0 && c * self.every == self.bundle.grid.steps {
            c - 1
        } else {
            c
        }
    }

    /// X at `node` for `path`; loads/re-simulates the containing chunk.
    pub fn at(&mut self, path: usize, node: usize) -> &[f64] {
        let chunk = self.chunk_of(node);
        if self.chunk_start != chunk * self.every
            || node >= self.chunk_start + self.chunk_len
        {
            self.load_chunk(chunk);
        }
        let n = self.coeffs.dims.n;
        let j = node - self.chunk_start;
        let off = (path * self.chunk_len + j) * n;
        &self.buf[off..off + n]
    }

    /// Copy X at `node` for all paths into `out` (paths * n).
    pub fn load(&mut self, node: usize, out: &mut [f64]) {
        let chunk = self.chunk_of(node);
        if self.chunk_start != chunk * self.every
            || node >= self.chunk_start + self.chunk_len
        {
            self.load_chunk(chunk);
        }
        let n = self.coeffs.dims.n;
        let j = node - self.chunk_start;
        if n == 1 {
            let len = self.chunk_len;
            for (path, o) in out.iter_mut().enumerate() {
                *o = self.buf[path * len + j];
            }
            return;
        }
        for path in 0..self.bundle.paths {
            let off = (path * self.chunk_len + j) * n;
            out[path * n..(path + 1) * n].copy_from_slice(&self.buf[off..off + n]);
        }
    }

    /// Copy the Brownian increments of `step` for all paths into `out`
    /// (paths * d), re-simulating the containing chunk if needed. The values
    /// are identical to `bundle.increments_at`; they are just kept from the
    /// chunk pass instead of being regenerated.
    pub fn load_dw(&mut self, step: usize, out: &mut [f64]) {
        let chunk = step / self.every;
        if self.chunk_start != chunk * self.every
            || step + 1 >= self.chunk_start + self.chunk_len
        {
            self.load_chunk(chunk);
        }
        let d = self.coeffs.dims.d;
        let per_path = self.chunk_len - 1;
        let j = step - self.chunk_start;
        if d == 1 {
            for (path, o) in out.iter_mut().enumerate() {
                *o = self.dw_buf[path * per_path + j];
            }
            return;
        }
        for path in 0..self.bundle.paths {
            let off = (path * per_path + j) * d;
            out[path * d..(path + 1) * d].copy_from_slice(&self.dw_buf[off..off + d]);
        }
    }
}

/// Uniform access to forward paths for backward sweeps, regardless of
/// whether they are fully stored or checkpointed.
pub enum XAccess<'a> {
    Full(&'a PathTensor),
    Checkpointed(&'a mut CheckpointedX),
}

impl XAccess<'_> {
    pub fn load(&mut self, node: usize, out: &mut [f64]) {
        match self {
            XAccess::Full(t) => {
                let n = t.width;
                for path in 0..t.paths {
                    out[path * n..(path + 1) * n].copy_from_slice(t.at(path, node));
                }
            }
            XAccess::Checkpointed(c) => c.load(node, out),
        }
    }

    /// Fill the Brownian increments of `step` for all paths when the source
    /// has them cached; returns false if the caller must generate them.
    pub fn load_dw(&mut self, step: usize, out: &mut [f64]) -> bool {
        match self {
            XAccess::Full(_) => false,
            XAccess::Checkpointed(c) => {
                c.load_dw(step, out);
                true
            }
        }
    }
}
