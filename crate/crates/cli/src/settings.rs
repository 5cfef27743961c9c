//! Resolved run settings: defaults, overridden by a `section.key = value`
//! config file, overridden by command-line flags. The run manifest echoes
//! every setting in the same format so a manifest can be replayed as a
//! config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Settings {
    // model.*
    pub model: String,
    pub gamma: f64,
    pub sigma: f64,
    pub m: f64,
    pub nu: f64,
    pub xi: f64,
    pub vartheta: f64,
    pub eta: f64,
    pub phi: f64,
    pub x0: Option<f64>,
    // blanchard.*
    pub bl_a1: f64,
    pub bl_a2: f64,
    pub bl_a3: f64,
    pub bl_rho: f64,
    pub bl_theta_s: f64,
    pub bl_i: f64,
    pub bl_g: f64,
    pub bl_c: f64,
    // solve.*
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: String,
    pub refine_horizon: bool,
    // run.*
    pub threads: usize,
    pub out: PathBuf,
    // compare.*
    pub delta: f64,
    // sensitivity.*
    pub dx_list: Vec<f64>,
    pub dt0_list: Vec<f64>,
    // field.*
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub t_nodes: Vec<f64>,
    // stationarity.*
    pub t: f64,
    pub alpha: f64,
    pub samples: usize,
    // ikw.*
    pub ikw_dt: f64,
    pub ikw_horizon: f64,
    pub ikw_paths: usize,
    // control.*
    pub cells: usize,
    pub budget: usize,
    pub r_weight: f64,
    pub n_weight: f64,
    pub y_target: f64,
    pub control_bound: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            model: "krugman".into(),
            gamma: 5.0,
            sigma: 0.1,
            m: 1.0,
            nu: 1.0,
            xi: 0.2,
            vartheta: 1.0,
            eta: 0.3,
            phi: 0.5,
            x0: None,
            bl_a1: 0.5,
            bl_a2: 0.2,
            bl_a3: 1.0,
            bl_rho: 0.0,
            bl_theta_s: 0.0,
            bl_i: 0.05,
            bl_g: 0.0,
            bl_c: 0.1,
            seed: 0,
            paths: 10_000,
            dt: 0.01,
            horizon: 10.0,
            lambda: None,
            tol: 1e-4,
            max_iter: 50,
            mode: "auto".into(),
            refine_horizon: true,
            threads: 0,
            out: PathBuf::new(),
            delta: 0.1,
            dx_list: vec![0.4, 0.2, 0.1, 0.05],
            dt0_list: vec![],
            grid_lo: -1.5,
            grid_hi: 1.5,
            grid_points: 13,
            t_nodes: vec![0.0],
            t: 1.0,
            alpha: 0.5,
            samples: 100,
            ikw_dt: 0.01,
            ikw_horizon: 1.0,
            ikw_paths: 2000,
            cells: 16,
            budget: 400,
            r_weight: 1.0,
            n_weight: 1.0,
            y_target: 0.5,
            control_bound: 1.0,
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Apply one `section.key = value` pair; unknown keys are errors so a
    /// manifest replays exactly or not at all.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let bad = |e: std::num::ParseFloatError| format!("{key}: {e}");
        let badi = |e: std::num::ParseIntError| format!("{key}: {e}");
        match key {
            "model.name" => self.model = value.into(),
            "model.gamma" => self.gamma = value.parse().map_err(bad)?,
            "model.sigma" => self.sigma = value.parse().map_err(bad)?,
            "model.m" => self.m = value.parse().map_err(bad)?,
            "model.nu" => self.nu = value.parse().map_err(bad)?,
            "model.xi" => self.xi = value.parse().map_err(bad)?,
            "model.vartheta" => self.vartheta = value.parse().map_err(bad)?,
            "model.eta" => self.eta = value.parse().map_err(bad)?,
            "model.phi" => self.phi = value.parse().map_err(bad)?,
            "model.x0" => self.x0 = Some(value.parse().map_err(bad)?),
            "blanchard.a1" => self.bl_a1 = value.parse().map_err(bad)?,
            "blanchard.a2" => self.bl_a2 = value.parse().map_err(bad)?,
            "blanchard.a3" => self.bl_a3 = value.parse().map_err(bad)?,
            "blanchard.rho" => self.bl_rho = value.parse().map_err(bad)?,
            "blanchard.theta_s" => self.bl_theta_s = value.parse().map_err(bad)?,
            "blanchard.i" => self.bl_i = value.parse().map_err(bad)?,
            "blanchard.g" => self.bl_g = value.parse().map_err(bad)?,
            "blanchard.c" => self.bl_c = value.parse().map_err(bad)?,
            "solve.seed" => self.seed = value.parse().map_err(badi)?,
            "solve.paths" => self.paths = value.parse().map_err(badi)?,
            "solve.dt" => self.dt = value.parse().map_err(bad)?,
            "solve.horizon" => self.horizon = value.parse().map_err(bad)?,
            "solve.lambda" => self.lambda = Some(value.parse().map_err(bad)?),
            "solve.tol" => self.tol = value.parse().map_err(bad)?,
            "solve.max_iter" => self.max_iter = value.parse().map_err(badi)?,
            "solve.mode" => self.mode = value.into(),
            "solve.refine_horizon" => {
                self.refine_horizon = value.parse().map_err(|e| format!("{key}: {e}"))?
            }
            "run.threads" => self.threads = value.parse().map_err(badi)?,
            "run.out" => self.out = value.into(),
            "compare.delta" => self.delta = value.parse().map_err(bad)?,
            "sensitivity.dx_list" => self.dx_list = parse_list(value)?,
            "sensitivity.dt0_list" => self.dt0_list = parse_list(value)?,
            "field.grid_lo" => self.grid_lo = value.parse().map_err(bad)?,
            "field.grid_hi" => self.grid_hi = value.parse().map_err(bad)?,
            "field.grid_points" => self.grid_points = value.parse().map_err(badi)?,
            "field.t_nodes" => self.t_nodes = parse_list(value)?,
            "stationarity.t" => self.t = value.parse().map_err(bad)?,
            "stationarity.alpha" => self.alpha = value.parse().map_err(bad)?,
            "stationarity.samples" => self.samples = value.parse().map_err(badi)?,
            "ikw.dt" => self.ikw_dt = value.parse().map_err(bad)?,
            "ikw.horizon" => self.ikw_horizon = value.parse().map_err(bad)?,
            "ikw.paths" => self.ikw_paths = value.parse().map_err(badi)?,
            "control.cells" => self.cells = value.parse().map_err(badi)?,
            "control.budget" => self.budget = value.parse().map_err(badi)?,
            "control.r" => self.r_weight = value.parse().map_err(bad)?,
            "control.n" => self.n_weight = value.parse().map_err(bad)?,
            "control.target" => self.y_target = value.parse().map_err(bad)?,
            "control.bound" => self.control_bound = value.parse().map_err(bad)?,
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    pub fn load_config(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `section.key = value`", ln + 1))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", ln + 1))?;
        }
        Ok(())
    }

    /// Every setting in config-file form, sorted by key.
    pub fn echo(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("model.name", self.model.clone());
        map.insert("model.gamma", self.gamma.to_string());
        map.insert("model.sigma", self.sigma.to_string());
        map.insert("model.m", self.m.to_string());
        map.insert("model.nu", self.nu.to_string());
        map.insert("model.xi", self.xi.to_string());
        map.insert("model.vartheta", self.vartheta.to_string());
        map.insert("model.eta", self.eta.to_string());
        map.insert("model.phi", self.phi.to_string());
        if let Some(x0) = self.x0 {
            map.insert("model.x0", x0.to_string());
        }
        map.insert("blanchard.a1", self.bl_a1.to_string());
        map.insert("blanchard.a2", self.bl_a2.to_string());
        map.insert("blanchard.a3", self.bl_a3.to_string());
        map.insert("blanchard.rho", self.bl_rho.to_string());
        map.insert("blanchard.theta_s", self.bl_theta_s.to_string());
        map.insert("blanchard.i", self.bl_i.to_string());
        map.insert("blanchard.g", self.bl_g.to_string());
        map.insert("blanchard.c", self.bl_c.to_string());
        map.insert("solve.seed", self.seed.to_string());
        map.insert("solve.paths", self.paths.to_string());
        map.insert("solve.dt", self.dt.to_string());
        map.insert("solve.horizon", self.horizon.to_string());
        if let Some(l) = self.lambda {
            map.insert("solve.lambda", l.to_string());
        }
        map.insert("solve.tol", self.tol.to_string());
        map.insert("solve.max_iter", self.max_iter.to_string());
        map.insert("solve.mode", self.mode.clone());
        map.insert("solve.refine_horizon", self.refine_horizon.to_string());
        map.insert("run.threads", self.threads.to_string());
        map.insert("compare.delta", self.delta.to_string());
        map.insert("sensitivity.dx_list", fmt_list(&self.dx_list));
        map.insert("sensitivity.dt0_list", fmt_list(&self.dt0_list));
        map.insert("field.grid_lo", self.grid_lo.to_string());
        map.insert("field.grid_hi", self.grid_hi.to_string());
        map.insert("field.grid_points", self.grid_points.to_string());
        map.insert("field.t_nodes", fmt_list(&self.t_nodes));
        map.insert("stationarity.t", self.t.to_string());
        map.insert("stationarity.alpha", self.alpha.to_string());
        map.insert("stationarity.samples", self.samples.to_string());
        map.insert("ikw.dt", self.ikw_dt.to_string());
        map.insert("ikw.horizon", self.ikw_horizon.to_string());
        map.insert("ikw.paths", self.ikw_paths.to_string());
        map.insert("control.cells", self.cells.to_string());
        map.insert("control.budget", self.budget.to_string());
        map.insert("control.r", self.r_weight.to_string());
        map.insert("control.n", self.n_weight.to_string());
        map.insert("control.target", self.y_target.to_string());
        map.insert("control.bound", self.control_bound.to_string());
        let mut s = String::new();
        for (k, v) in map {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
