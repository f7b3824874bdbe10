//! Central-difference verification of tape gradients.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::{BackwardFault, Tape, Var};
use crate::tensor::Tensor;

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over the coordinates of each parameter, in
    /// the order the parameters were given.
    pub max_rel_error: Vec<f64>,
    pub eps: f64,
    pub tol: f64,
    pub pass: bool,
}

impl GradCheckReport {
    /// Largest relative error over all parameters.
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares [`Tape::backward`] against `(f(p+eps) − f(p−eps)) / 2eps` for
/// every coordinate of every parameter.
///
/// Relative error is `|a − b| / max(|a|, |b|, 1e-8)`.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: f64,
    pub tol: f64,
    /// Backward-rule corruption for the analytic pass (negative control).
    pub fault: Option<BackwardFault>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { eps: 1e-5, tol: 1e-4, fault: None }
    }
}

impl GradCheck {
    /// `f` receives a fresh tape and one leaf per parameter and must return
    /// a scalar loss recorded on that tape.
    pub fn run<F>(&self, f: F, params: &[Tensor]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Parameter(format!("eps must be positive, got {}", self.eps)));
        }
        let eval = |ps: &[Tensor]| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
            let loss = f(&mut tape, &vars)?;
            Ok(tape.value(loss).item())
        };

        let mut tape = self.fault.map(Tape::with_fault).unwrap_or_default();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let base = tape.value(loss).item();
        if eval(params)?.to_bits() != base.to_bits() || eval(params)?.to_bits() != base.to_bits() {
            return Err(Error::Determinism);
        }
        let grads = tape.backward(loss)?;

        let mut work: Vec<Tensor> = params.to_vec();
        let mut max_rel_error = Vec::with_capacity(params.len());
        for (pi, var) in vars.iter().enumerate() {
            let analytic = grads.wrt(*var);
            let mut worst = 0.0f64;
            for flat in 0..params[pi].numel() {
                let x = params[pi].data()[flat];
                work[pi] = params[pi].with_value(flat, x + self.eps);
                let plus = eval(&work)?;
                work[pi] = params[pi].with_value(flat, x - self.eps);
                let minus = eval(&work)?;
                let numeric = (plus - minus) / (2.0 * self.eps);
                let a = analytic.data()[flat];
                let denom = libm::fabs(a).max(libm::fabs(numeric)).max(1e-8);
                worst = worst.max(libm::fabs(a - numeric) / denom);
            }
            work[pi] = params[pi].clone();
            max_rel_error.push(worst);
        }
        let pass = max_rel_error.iter().all(|&e| e <= self.tol);
        Ok(GradCheckReport { max_rel_error, eps: self.eps, tol: self.tol, pass })
    }
}

/// [`GradCheck::run`] without fault injection.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    GradCheck { eps, tol, fault: None }.run(f, params)
}
