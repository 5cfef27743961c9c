//! Time grids, path containers, and the weighted-norm estimator.

use crate::error::{invalid, Result};

/// Uniform time grid on [t0, T] with N steps (N+1 nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(invalid(format!("grid requires T > t0, got [{t0}, {t_end}]")));
        }
        if steps == 0 {
            return Err(invalid("grid requires at least one step"));
        }
        Ok(TimeGrid { t0, t_end, steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    /// Node time t0 + i*dt (exact multiple-of-dt arithmetic).
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.t0 + self.dt() * i as f64
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }
}

/// Dense tensor indexed (path, node, component), path-major.
#[derive(Debug, Clone)]
pub struct PathTensor {
    pub data: Vec<f64>,
    pub paths: usize,
    pub nodes: usize,
    pub width: usize,
}

impl PathTensor {
    pub fn zeros(paths: usize, nodes: usize, width: usize) -> Self {
        PathTensor { data: vec![0.0; paths * nodes * width], paths, nodes, width }
    }

    #[inline]
    pub fn at(&self, path: usize, node: usize) -> &[f64] {
        let off = (path * self.nodes + node) * self.width;
        &self.data[off..off + self.width]
    }

    #[inline]
    pub fn at_mut(&mut self, path: usize, node: usize) -> &mut [f64] {
        let off = (path * self.nodes + node) * self.width;
        &mut self.data[off..off + self.width]
    }

    /// Immutable row access by flat (path, node) pair used in parallel loops.
    #[inline]
    pub fn row(&self, path: usize, node: usize, out: &mut [f64]) {
        out.copy_from_slice(self.at(path, node));
    }
}

/// Discretized (X, Y, Z) sample paths over a grid and path batch.
#[derive(Debug, Clone)]
pub struct PathTriple {
    pub x: PathTensor,
    pub y: PathTensor,
    pub z: PathTensor,
    pub grid: TimeGrid,
}

impl PathTriple {
    pub fn zeros(grid: TimeGrid, paths: usize, n: usize, m: usize, d: usize) -> Self {
        let nodes = grid.nodes();
        PathTriple {
            x: PathTensor::zeros(paths, nodes, n),
            y: PathTensor::zeros(paths, nodes, m),
            z: PathTensor::zeros(paths, nodes, m * d),
            grid,
        }
    }

    pub fn paths(&self) -> usize {
        self.x.paths
    }
}

/// Which component a weighted norm was taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormComponent {
    X,
    Y,
    Z,
    Combined,
}

/// Monte Carlo estimate of the squared weighted norm E ∫ e^{λs}|·|² ds.
#[derive(Debug, Clone, Copy)]
pub struct WeightedNormResult {
    pub value: f64,
    pub lambda: f64,
    pub component: NormComponent,
}

fn tensor_norm(t: &PathTensor, grid: &TimeGrid, lambda: f64) -> f64 {
    let dt = grid.dt();
    let mut acc = 0.0;
    // Left-endpoint Riemann sum: nodes 0..steps-1.
    for i in 0..grid.steps {
        let w = (lambda * grid.node(i)).exp() * dt;
        let mut s = 0.0;
        for p in 0..t.paths {
            let row = t.at(p, i);
            for v in row {
                s += v * v;
            }
        }
        acc += w * s;
    }
    acc / t.paths as f64
}

/// Left-endpoint Riemann-sum, per-path-averaged estimate of the squared
/// 𝕄_λ² norm of the chosen component.
pub fn weighted_norm(
    paths: &PathTriple,
    lambda: f64,
    component: NormComponent,
) -> Result<WeightedNormResult> {
    if paths.paths() == 0 {
        return Err(invalid("weighted_norm on an empty path batch"));
    }
    if !lambda.is_finite() {
        return Err(invalid("weighted_norm requires finite lambda"));
    }
    let g = &paths.grid;
    let value = match component {
        NormComponent::X => tensor_norm(&paths.x, g, lambda),
        NormComponent::Y => tensor_norm(&paths.y, g, lambda),
        NormComponent::Z => tensor_norm(&paths.z, g, lambda),
        NormComponent::Combined => {
            tensor_norm(&paths.x, g, lambda)
                + tensor_norm(&paths.y, g, lambda)
                + tensor_norm(&paths.z, g, lambda)
        }
    };
    Ok(WeightedNormResult { value, lambda, component })
}

/// Inject paths onto a nested finer grid: X linearly interpolated, Y and Z
/// piecewise constant from the left; exact at shared nodes.
pub fn resample_grid(paths: &PathTriple, finer: TimeGrid) -> Result<PathTriple> {
    let coarse = paths.grid;
    if (finer.t0 - coarse.t0).abs() > 1e-12 || (finer.t_end - coarse.t_end).abs() > 1e-12 {
        return Err(invalid("resample_grid requires matching endpoints"));
    }
    if finer.steps % coarse.steps != 0 {
        return Err(invalid("resample_grid requires a nested (multiple) step count"));
    }
    let ratio = finer.steps / coarse.steps;
    let p = paths.paths();
    let mut out = PathTriple::zeros(finer, p, paths.x.width, paths.y.width, paths.z.width);
    for path in 0..p {
        for j in 0..finer.nodes() {
            let ci = j / ratio;
            let frac = (j % ratio) as f64 / ratio as f64;
            let (xl, xr) = if ci < coarse.steps {
                (paths.x.at(path, ci), paths.x.at(path, ci + 1))
            } else {
                (paths.x.at(path, ci), paths.x.at(path, ci))
            };
            {
                let dst = out.x.at_mut(path, j);
                for k in 0..dst.len() {
                    dst[k] = xl[k] + frac * (xr[k] - xl[k]);
                }
            }
            out.y.at_mut(path, j).copy_from_slice(paths.y.at(path, ci));
            out.z.at_mut(path, j).copy_from_slice(paths.z.at(path, ci));
        }
    }
    Ok(out)
}
