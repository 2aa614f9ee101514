//! The one-dimensional Liouville bubble and its periodic projection.
//!
//! `U(r) = ln( (4/eps^2) e^x / (1 + e^x)^2 )` with `x = sqrt(2) (r - s) / eps`
//! solves `-U'' = e^U` on the line, peaks at `U(s) = ln(1/eps^2)` and has
//! total mass `int e^U = 2 sqrt(2) / eps`. Its projection `PU` solves
//! `L PU = e^U` with periodic boundary conditions.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{assemble, OperatorModel};
use crate::periodic::{Grid, GridFn};
use crate::quadrature;

/// Minimum number of grid cells per bubble width accepted by [`project`].
pub const CELLS_PER_WIDTH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub eps: f64,
    pub s: f64,
    /// Power exponent this scale was matched to, if any.
    pub p: Option<f64>,
    /// Exponential parameter this scale was matched to, if any.
    pub lambda: Option<f64>,
}

impl BubbleParams {
    pub fn new(eps: f64, s: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("bubble scale must be positive, got {eps}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidArgument(format!("bubble center must lie in (0, 1), got {s}")));
        }
        Ok(Self { eps, s, p: None, lambda: None })
    }

    fn stretched(&self, r: f64) -> f64 {
        SQRT_2 * (r - self.s) / self.eps
    }
}

/// `U(r)`, written as `ln(4/eps^2) - |x| - 2 ln(1 + e^{-|x|})` so that it
/// stays accurate for `|x|` in the thousands.
pub fn u_eval(bp: &BubbleParams, r: f64) -> f64 {
    let x = bp.stretched(r).abs();
    (4.0 / (bp.eps * bp.eps)).ln() - x - 2.0 * (-x).exp().ln_1p()
}

/// `(U, U', U'')` at `r`.
pub fn u_derivatives(bp: &BubbleParams, r: f64) -> (f64, f64, f64) {
    let x = bp.stretched(r);
    let e = (-x.abs()).exp();
    // logistic(x), computed from the side that does not overflow
    let sigma = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    let d1 = SQRT_2 / bp.eps * (1.0 - 2.0 * sigma);
    (u_eval(bp, r), d1, -exp_u(bp, r))
}

/// `e^U = (4/eps^2) sigma (1 - sigma)` with `sigma` the logistic function of `x`.
pub fn exp_u(bp: &BubbleParams, r: f64) -> f64 {
    let e = (-bp.stretched(r).abs()).exp();
    4.0 / (bp.eps * bp.eps) * e / ((1.0 + e) * (1.0 + e))
}

/// `int_0^1 e^U` by adaptive quadrature split at the peak.
pub fn bubble_mass(bp: &BubbleParams) -> f64 {
    quadrature::integrate_with_breaks(&|r| exp_u(bp, r), &[0.0, bp.s, 1.0], 1e-14, 1e-14)
}

/// Samples of `U` and of its periodic projection `PU`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub params: BubbleParams,
    pub u: GridFn,
    pub pu: GridFn,
}

/// Solves `L PU = e^U` with periodic boundary conditions.
///
/// Refuses bubbles narrower than [`CELLS_PER_WIDTH`] grid cells.
pub fn project(model: &OperatorModel, grid: &Grid, bp: &BubbleParams) -> Result<Profile> {
    if bp.eps < CELLS_PER_WIDTH * grid.h() {
        return Err(Error::Resolution { eps: bp.eps, h: grid.h() });
    }
    let opr = assemble(model, grid)?;
    let solver = opr.factor()?;
    let load = grid.sample_with(|r| exp_u(bp, r));
    Ok(Profile { params: *bp, u: grid.sample_with(|r| u_eval(bp, r)), pu: solver.solve(&load) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerMatch {
    pub eps: f64,
    /// Ansatz amplitude `1/p`.
    pub rho: f64,
}

/// Scale matched to the exponent: `eps = 2 sqrt(2) H(r0, r0) / p`.
pub fn match_eps_to_p(h00: f64, p: f64) -> Result<PowerMatch> {
    if !(h00 > 0.0) || !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("need H(r0,r0) > 0 and p > 1, got {h00}, {p}")));
    }
    Ok(PowerMatch { eps: 2.0 * SQRT_2 * h00 / p, rho: 1.0 / p })
}

/// `ln lambda` for `lambda = (4/eps^2) exp(-2 sqrt(2) H(r0, r0) / eps)`.
pub fn log_lambda_for_eps(h00: f64, eps: f64) -> f64 {
    (4.0 / (eps * eps)).ln() - 2.0 * SQRT_2 * h00 / eps
}

/// Exponential parameter matched to the scale.
pub fn match_lambda_to_eps(h00: f64, eps: f64) -> Result<f64> {
    if !(h00 > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("need H(r0,r0) > 0 and eps > 0, got {h00}, {eps}")));
    }
    Ok(log_lambda_for_eps(h00, eps).exp())
}

/// Inverts [`match_lambda_to_eps`] on the branch `0 < eps < sqrt(2) H(r0, r0)`
/// where the matching is increasing.
pub fn eps_from_lambda(h00: f64, lambda: f64) -> Result<f64> {
    let top = SQRT_2 * h00;
    if !(h00 > 0.0) || !(lambda > 0.0) || lambda.ln() >= log_lambda_for_eps(h00, top) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda:e} is not attained on the small-scale branch for H(r0,r0) = {h00}"
        )));
    }
    let target = lambda.ln();
    // bisection on ln(eps): ln lambda(eps) is increasing there
    let (mut lo, mut hi) = ((1e-300f64).ln(), top.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_lambda_for_eps(h00, mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
