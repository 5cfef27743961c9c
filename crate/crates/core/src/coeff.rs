//! Structural constants and the coefficient abstraction.

use std::sync::Arc;

/// Structural constants governing the monotonicity/Lipschitz hypotheses.
///
/// `mu1`, `mu2` are the monotonicity constants of b and f; `c1`, `c2` the
/// Lipschitz constants of f in x and z; `k1`, `k2` those of b in y and z;
/// `k3`..`k5` those of |sigma|^2 in x, y, z. `eps1`, `eps2`, `rho1`, `rho2`
/// are the auxiliary positive weights of the lambda-window algebra, and
/// `lambda` the discount weight. The optional (`rho0`, `mu0`, `c0`) triple
/// carries the saddlepoint-form constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsRecord {
    pub mu1: f64,
    pub mu2: f64,
    pub c1: f64,
    pub c2: f64,
    pub k: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub lambda: f64,
    pub rho0: Option<f64>,
    pub mu0: Option<f64>,
    pub c0: Option<f64>,
}

impl Default for ConstantsRecord {
    fn default() -> Self {
        ConstantsRecord {
            mu1: 0.0,
            mu2: 0.0,
            c1: 0.0,
            c2: 0.0,
            k: 0.0,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            k4: 0.0,
            k5: 0.0,
            eps1: 1.0,
            eps2: 1.0,
            rho1: 1.0,
            rho2: 1.0,
            lambda: 0.0,
            rho0: None,
            mu0: None,
            c0: None,
        }
    }
}

impl ConstantsRecord {
    /// Basic sign/positivity invariants.
    pub fn validate(&self) -> crate::error::Result<()> {
        let nonneg = [
            ("c1", self.c1),
            ("c2", self.c2),
            ("k", self.k),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(crate::error::invalid(format!("constant {name} must be >= 0, got {v}")));
            }
        }
        let pos = [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(crate::error::invalid(format!("constant {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Problem dimensions: forward state n, backward state m, Wiener dimension d.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub d: usize,
}

/// Structural flags used for mode selection and test gating.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientFlags {
    pub sigma_depends_on_z: bool,
    pub deterministic_coefficients: bool,
    pub autonomous: bool,
}

impl Default for CoefficientFlags {
    fn default() -> Self {
        CoefficientFlags {
            sigma_depends_on_z: false,
            deterministic_coefficients: true,
            autonomous: true,
        }
    }
}

/// Evaluation context handed to coefficient evaluators.
///
/// `env` is the scalar environment noise value at time `t` for the current
/// realization; deterministic models ignore it. `z` is the m x d matrix in
/// row-major layout.
pub struct EvalCtx<'a> {
    pub t: f64,
    pub env: f64,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub z: &'a [f64],
}

/// Write-into-slice coefficient evaluator.
pub type Evaluator = Arc<dyn Fn(&EvalCtx, &mut [f64]) + Send + Sync>;

/// Coefficients of the general forward-backward system
/// dX = b dt + sigma dW, dY = -f dt + Z dW.
#[derive(Clone)]
pub struct CoefficientSet {
    pub b: Evaluator,
    pub sigma: Evaluator,
    pub f: Evaluator,
    pub constants: ConstantsRecord,
    pub flags: CoefficientFlags,
    pub dims: Dims,
}

impl CoefficientSet {
    /// True when b and sigma are independent of (y, z): the system decouples
    /// and a single forward/backward pass solves it.
    pub fn is_decoupled(&self) -> bool {
        let c = &self.constants;
        c.k1 == 0.0 && c.k2 == 0.0 && c.k4 == 0.0 && c.k5 == 0.0
    }

    /// Constant-zero coefficient set for tests and defaults.
    pub fn zero(dims: Dims) -> Self {
        let zero: Evaluator = Arc::new(|_ctx, out: &mut [f64]| out.fill(0.0));
        CoefficientSet {
            b: zero.clone(),
            sigma: zero.clone(),
            f: zero,
            constants: ConstantsRecord::default(),
            flags: CoefficientFlags::default(),
            dims,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_negative_lipschitz() {
        let c = ConstantsRecord { c1: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(ConstantsRecord::default().validate().is_ok());
    }

    #[test]
    fn zero_set_is_decoupled() {
        let cs = CoefficientSet::zero(Dims { n: 1, m: 1, d: 1 });
        assert!(cs.is_decoupled());
        let mut out = [1.0];
        (cs.b)(&EvalCtx { t: 0.0, env: 0.0, x: &[1.0], y: &[1.0], z: &[1.0] }, &mut out);
        assert_eq!(out[0], 0.0);
    }
}
