//! Newton continuation for the periodic power problem `L v = v^p, v > 0`
//! and the exponential problem `L v = lambda e^v`.
//!
//! Both are solved in the weighted form `A v = a N(v)` where `A` is the
//! assembled self-adjoint operator and `a = f^n`. Seeds come from the bubble
//! projection `PU` centred at a nondegenerate concentration point; each
//! continuation step then seeds the next one.
//!
//! Convergence is judged by the normwise backward error
//! `|F|_inf / (|A|_inf |v|_inf + |a N(v)|_inf)` of `F = A v - a N(v)`. The
//! entries of `A` grow like `N^2`, so the absolute residual has a round-off
//! floor far above any fixed tolerance once the solution is peaked; the
//! absolute residual of `L v - N(v)` is still reported alongside.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::bubble::{eps_from_lambda, match_eps_to_p, project, u_eval, BubbleParams};
use crate::error::{Error, Result};
use crate::greens::{greens_column, greens_matrix};
use crate::linalg::CyclicTridiagonal;
use crate::locator::{locate_critical, select_concentration_point, CriticalPointReport, LocatorOptions};
use crate::operator::{assemble, DiscreteOperator, OperatorModel};
use crate::periodic::{quad_periodic, Grid, GridFn};

/// Power iterates are clipped from below at this value before exponentiation.
pub const CLIP_FLOOR: f64 = 1e-14;
/// Largest fraction of clipped nodes tolerated before an iterate is rejected.
pub const CLIP_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Problem {
    Power { p: f64 },
    Exp { lambda: f64 },
}

impl Problem {
    fn validate(&self) -> Result<()> {
        match *self {
            Problem::Power { p } if !(p > 1.0 && p.is_finite()) => {
                Err(Error::InvalidArgument(format!("power exponent must exceed 1, got {p}")))
            }
            Problem::Exp { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")))
            }
            _ => Ok(()),
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            Problem::Power { p } => p,
            Problem::Exp { lambda } => lambda,
        }
    }

    /// `N(v)` and `N'(v)` at every node.
    fn nonlinearity(&self, v: &GridFn) -> Result<(Vec<f64>, Vec<f64>)> {
        match *self {
            Problem::Power { p } => {
                let clipped = v.iter().filter(|&&x| x < CLIP_FLOOR).count();
                let fraction = clipped as f64 / v.len() as f64;
                if fraction > CLIP_LIMIT {
                    return Err(Error::NonPositiveIterate { fraction: 100.0 * fraction });
                }
                let base: Vec<f64> = v.iter().map(|&x| x.max(CLIP_FLOOR)).collect();
                let value = base.iter().map(|x| x.powf(p)).collect();
                let slope = base.iter().map(|x| p * x.powf(p - 1.0)).collect();
                Ok((value, slope))
            }
            Problem::Exp { lambda } => {
                let value: Vec<f64> = v.iter().map(|x| lambda * x.exp()).collect();
                Ok((value.clone(), value))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Tolerance on the normwise backward error.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Backtracking halvings allowed per Newton step.
    pub max_halvings: usize,
    /// Largest sup-norm change of `v` in one Newton step.
    pub step_cap: f64,
    pub grid_n: usize,
    /// Grid used to locate the concentration point.
    pub locator_n: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { newton_tol: 1e-10, max_iter: 50, max_halvings: 30, step_cap: 1.0, grid_n: 2048, locator_n: 512 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || !(self.step_cap > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        Grid::new(self.grid_n)?;
        Grid::new(self.locator_n)?;
        Ok(())
    }
}

/// Weighted residual `A v - a N(v)`.
pub fn residual(opr: &DiscreteOperator, v: &GridFn, problem: &Problem) -> Result<GridFn> {
    problem.validate()?;
    let (nl, _) = problem.nonlinearity(v)?;
    let av = opr.matrix().apply(v.values());
    let values = av.iter().zip(opr.weight()).zip(&nl).map(|((x, a), n)| x - a * n).collect();
    GridFn::new(&opr.grid(), values)
}

pub fn residual_power(opr: &DiscreteOperator, v: &GridFn, p: f64) -> Result<GridFn> {
    residual(opr, v, &Problem::Power { p })
}

pub fn residual_exp(opr: &DiscreteOperator, v: &GridFn, lambda: f64) -> Result<GridFn> {
    residual(opr, v, &Problem::Exp { lambda })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub backward_error: f64,
    /// `sup |L v - N(v)|`.
    pub strong: f64,
}

pub fn residual_norms(opr: &DiscreteOperator, v: &GridFn, problem: &Problem) -> Result<ResidualNorms> {
    let f = residual(opr, v, problem)?;
    norms(opr, v, problem, &f)
}

fn norms(opr: &DiscreteOperator, v: &GridFn, problem: &Problem, f: &GridFn) -> Result<ResidualNorms> {
    let (nl, _) = problem.nonlinearity(v)?;
    let load = nl.iter().zip(opr.weight()).fold(0.0f64, |m, (n, a)| m.max((a * n).abs()));
    let scale = opr.matrix().norm_inf() * v.max_abs() + load;
    let sup = f.max_abs();
    let backward_error = if scale > 0.0 { sup / scale } else { sup };
    let strong = f.iter().zip(opr.weight()).fold(0.0f64, |m, (x, a)| m.max((x / a).abs()));
    Ok(ResidualNorms { backward_error, strong })
}

/// Jacobian `A - diag(a N'(v))` of the weighted residual.
pub fn jacobian(opr: &DiscreteOperator, v: &GridFn, problem: &Problem) -> Result<CyclicTridiagonal> {
    let (_, slope) = problem.nonlinearity(v)?;
    let shift: Vec<f64> = slope.iter().zip(opr.weight()).map(|(s, a)| -a * s).collect();
    Ok(opr.matrix().add_diagonal(&shift))
}

/// Largest relative sup-norm gap between `J d` and a central difference of the
/// residual along `d`, over the given directions.
pub fn jacobian_check(
    opr: &DiscreteOperator,
    v: &GridFn,
    problem: &Problem,
    directions: &[GridFn],
) -> Result<f64> {
    let j = jacobian(opr, v, problem)?;
    let mut worst: f64 = 0.0;
    for d in directions {
        let step = 1e-6 * v.max_abs().max(1.0) / d.max_abs();
        let shifted = |sign: f64| {
            let values = v.iter().zip(d.iter()).map(|(x, y)| x + sign * step * y).collect();
            GridFn::new(&opr.grid(), values)
        };
        let up = residual(opr, &shifted(1.0)?, problem)?;
        let down = residual(opr, &shifted(-1.0)?, problem)?;
        let jd = j.apply(d.values());
        let scale = jd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let gap = (0..jd.len())
            .map(|i| (jd[i] - (up[i] - down[i]) / (2.0 * step)).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOutcome {
    pub v: GridFn,
    pub iterations: usize,
    pub backward_error: f64,
    pub residual_sup: f64,
}

/// Damped Newton iteration from `seed`.
///
/// Each step is capped to `cfg.step_cap` in sup norm and then halved until
/// the residual decreases; positivity of power iterates is enforced through
/// the clipping rule.
pub fn newton_solve(
    opr: &DiscreteOperator,
    seed: &GridFn,
    problem: &Problem,
    cfg: &SolverConfig,
) -> Result<NewtonOutcome> {
    problem.validate()?;
    let mut v = seed.clone();
    let mut f = residual(opr, &v, problem)?;
    let mut current = norms(opr, &v, problem, &f)?;
    for iteration in 0..=cfg.max_iter {
        if current.backward_error < cfg.newton_tol {
            // the backward error scales with |A| ~ h^-2 and can pass while the
            // iterate is still visibly off, so finish with full corrections
            let (polished, extra) = polish(opr, v, problem, cfg.max_iter)?;
            v = polished;
            f = residual(opr, &v, problem)?;
            current = norms(opr, &v, problem, &f)?;
            if let Problem::Power { .. } = problem {
                if v.min() <= 0.0 {
                    let fraction = v.iter().filter(|&&x| x <= 0.0).count() as f64 / v.len() as f64;
                    return Err(Error::NonPositiveIterate { fraction: 100.0 * fraction });
                }
            }
            return Ok(NewtonOutcome {
                v,
                iterations: iteration + extra,
                backward_error: current.backward_error,
                residual_sup: current.strong,
            });
        }
        if iteration == cfg.max_iter {
            break;
        }
        let factor = jacobian(opr, &v, problem)?.factor().map_err(|_| Error::JacobianSingular)?;
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let dv = factor.solve(&rhs);
        let dmax = dv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !dmax.is_finite() {
            return Err(Error::JacobianSingular);
        }
        let fnorm = f.max_abs();
        let mut t = if dmax > 0.0 { (cfg.step_cap / dmax).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial_values = v.iter().zip(&dv).map(|(x, d)| x + t * d).collect();
            let trial = GridFn::new(&opr.grid(), trial_values)?;
            match residual(opr, &trial, problem) {
                Ok(ft) if ft.max_abs().is_finite() && ft.max_abs() < (1.0 - 1e-4 * t) * fnorm => {
                    accepted = Some((trial, ft));
                    break;
                }
                Ok(_) | Err(Error::NonPositiveIterate { .. }) => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((next, fnext)) = accepted else {
            return Err(Error::NoConvergence { iterations: iteration + 1, residual: current.backward_error });
        };
        v = next;
        f = fnext;
        current = norms(opr, &v, problem, &f)?;
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter, residual: current.backward_error })
}

/// Periodic cubic interpolation of grid samples.
fn interpolate(v: &GridFn, r: f64) -> f64 {
    v.spline().eval(r).0
}

/// Seed for the exponential problem: `PU` at scale `eps` and the parameter
/// `lambda = exp(U(s) - PU(s))` that makes `lambda e^{PU}` match `e^U` at the peak.
pub fn exp_seed(model: &OperatorModel, grid: &Grid, r0: f64, eps: f64) -> Result<(GridFn, f64)> {
    let bp = BubbleParams::new(eps, r0)?;
    let profile = project(model, grid, &bp)?;
    let lambda = (u_eval(&bp, r0) - interpolate(&profile.pu, r0)).exp();
    Ok((profile.pu, lambda))
}

/// Seed for the power problem: `c PU` with `PU` at the matched scale and `c`
/// from the one-dimensional Galerkin condition
/// `<PU, A PU> = c^{p-1} sum a PU^{p+1}`, evaluated in logarithms.
pub fn power_seed(model: &OperatorModel, grid: &Grid, r0: f64, h00: f64, p: f64) -> Result<GridFn> {
    let matched = match_eps_to_p(h00, p)?;
    let mut bp = BubbleParams::new(matched.eps, r0)?;
    bp.p = Some(p);
    let pu = project(model, grid, &bp)?.pu;
    let opr = assemble(model, grid)?;
    let energy: f64 = opr.apply(&pu).iter().zip(pu.iter()).map(|(x, y)| x * y).sum();
    let logs: Vec<f64> = pu
        .iter()
        .zip(opr.weight())
        .map(|(u, a)| a.ln() + (p + 1.0) * u.max(CLIP_FLOOR).ln())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    let amplitude = ((energy.ln() - log_sum) / (p - 1.0)).exp();
    Ok(pu.map(|u| amplitude * u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BranchFamily {
    /// Geometric decrease of `lambda` by `ratio` per step, starting from the
    /// peak-matched parameter of a bubble of scale `eps0`.
    Exp { eps0: f64, ratio: f64, steps: usize },
    /// Increasing exponents.
    Power { exponents: Vec<f64> },
}

impl BranchFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            BranchFamily::Exp { eps0, ratio, steps } => {
                if !(*eps0 > 0.0) || !(*ratio > 0.0 && *ratio < 1.0) || *steps == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "exp branch needs eps0 > 0, 0 < ratio < 1 and at least one step (got {eps0}, {ratio}, {steps})"
                    )));
                }
            }
            BranchFamily::Power { exponents } => {
                if exponents.is_empty()
                    || exponents.iter().any(|&p| !(p > 1.0))
                    || exponents.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(Error::InvalidArgument(
                        "power branch needs increasing exponents above 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchStep {
    /// `p` or `lambda`.
    pub parameter: f64,
    pub iterations: usize,
    pub backward_error: f64,
    pub residual_sup: f64,
    /// Scale from the matching rule (`2 sqrt(2) H / p`, or the inverse of the lambda matching).
    pub eps_formula: f64,
    /// Scale fitted from the peak height of the nonlinear term, `max N(v) / rho = 1 / eps^2`.
    pub eps_fit: f64,
    /// Exponential problem only: `2 sqrt(2) / int lambda e^v`.
    pub eps_mass: Option<f64>,
    pub peak_location: f64,
    pub peak_value: f64,
    /// Sup distance to the limit profile (`eps_fit`-scaled for the exponential problem).
    pub asymptotic_error: f64,
    pub asymptotic_error_formula: Option<f64>,
    pub asymptotic_error_mass: Option<f64>,
    /// `eps_fit * int lambda e^v / (2 sqrt(2))` for the exponential problem.
    pub mass_ratio: Option<f64>,
    /// `eps_fit / eps_formula`; drift from 1 exposes the constants hidden by the matching rule.
    pub matched_ratio: f64,
    pub value_at_r0: f64,
    pub v: GridFn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionBranch {
    pub family: BranchFamily,
    pub grid_n: usize,
    pub concentration_point: CriticalPointReport,
    /// `H(r0, r0)`.
    pub h00: f64,
    /// `2 sqrt(2) G(., r0)` for the exponential family, `G(., r0) / H(r0, r0)` for the power family.
    pub limit_profile: GridFn,
    pub steps: Vec<BranchStep>,
    /// First error met; the branch stops there.
    pub failure: Option<Error>,
}

fn peak(v: &GridFn) -> (f64, f64) {
    let n = v.len();
    let i = v.argmax();
    let (vm, v0, vp) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
    let curvature = vm - 2.0 * v0 + vp;
    let offset = if curvature < 0.0 { 0.5 * (vm - vp) / curvature } else { 0.0 };
    (((i as f64 + offset) / n as f64).rem_euclid(1.0), v0)
}

struct BranchContext {
    limit: GridFn,
    r0: f64,
    h00: f64,
}

impl BranchContext {
    fn exp_step(&self, outcome: NewtonOutcome, lambda: f64) -> BranchStep {
        let v = outcome.v;
        let total = lambda * quad_periodic(&v.map(f64::exp));
        let eps_fit = (lambda * v.max().exp()).powf(-0.5);
        let eps_formula = eps_from_lambda(self.h00, lambda).unwrap_or(f64::NAN);
        let eps_mass = 2.0 * SQRT_2 / total;
        let error_for = |eps: f64| v.map(|x| eps * x).distance(&self.limit);
        let (peak_location, peak_value) = peak(&v);
        BranchStep {
            parameter: lambda,
            iterations: outcome.iterations,
            backward_error: outcome.backward_error,
            residual_sup: outcome.residual_sup,
            eps_formula,
            eps_fit,
            eps_mass: Some(eps_mass),
            peak_location,
            peak_value,
            asymptotic_error: error_for(eps_fit),
            asymptotic_error_formula: eps_formula.is_finite().then(|| error_for(eps_formula)),
            asymptotic_error_mass: Some(error_for(eps_mass)),
            mass_ratio: Some(eps_fit * total / (2.0 * SQRT_2)),
            matched_ratio: eps_fit / eps_formula,
            value_at_r0: interpolate(&v, self.r0),
            v,
        }
    }

    fn power_step(&self, outcome: NewtonOutcome, p: f64) -> BranchStep {
        let v = outcome.v;
        let eps_formula = 2.0 * SQRT_2 * self.h00 / p;
        // rho = 1/p, so max v^p / rho = p max v^p
        let eps_fit = (p * v.max().powf(p)).powf(-0.5);
        let (peak_location, peak_value) = peak(&v);
        BranchStep {
            parameter: p,
            iterations: outcome.iterations,
            backward_error: outcome.backward_error,
            residual_sup: outcome.residual_sup,
            eps_formula,
            eps_fit,
            eps_mass: None,
            peak_location,
            peak_value,
            asymptotic_error: v.distance(&self.limit),
            asymptotic_error_formula: None,
            asymptotic_error_mass: None,
            mass_ratio: None,
            matched_ratio: eps_fit / eps_formula,
            value_at_r0: interpolate(&v, self.r0),
            v,
        }
    }
}

/// Locates the concentration point, then follows the requested family of
/// problems by natural-parameter continuation.
///
/// Errors before the first step (no usable concentration point, invalid
/// settings) are returned; a failing step ends the branch and is recorded in
/// [`SolutionBranch::failure`] next to the steps already computed.
pub fn continue_branch(
    model: &OperatorModel,
    family: &BranchFamily,
    cfg: &SolverConfig,
) -> Result<SolutionBranch> {
    family.validate()?;
    cfg.validate()?;
    let tables = greens_matrix(model, &Grid::new(cfg.locator_n)?)?;
    let points = locate_critical(&tables, &LocatorOptions::default())?;
    let point = select_concentration_point(&points)?;
    let r0 = point.r0;
    let h00 = tables.h_diag_at(r0);

    let grid = Grid::new(cfg.grid_n)?;
    let opr = assemble(model, &grid)?;
    let green = greens_column(model, &grid, r0)?;
    let limit = match family {
        BranchFamily::Exp { .. } => green.map(|g| 2.0 * SQRT_2 * g),
        BranchFamily::Power { .. } => green.map(|g| g / h00),
    };
    let ctx = BranchContext { limit: limit.clone(), r0, h00 };
    let mut steps = Vec::new();
    let mut failure = None;

    match family {
        BranchFamily::Exp { eps0, ratio, steps: count } => {
            let mut state = exp_seed(model, &grid, r0, *eps0);
            for _ in 0..*count {
                let (seed, lambda) = match state {
                    Ok(s) => s,
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                };
                match newton_solve(&opr, &seed, &Problem::Exp { lambda }, cfg) {
                    Ok(outcome) => {
                        let step = ctx.exp_step(outcome, lambda);
                        let next_lambda = lambda * ratio;
                        // rescale so that eps * v keeps its shape as eps shrinks
                        let scale = match (eps_from_lambda(h00, lambda), eps_from_lambda(h00, next_lambda)) {
                            (Ok(a), Ok(b)) => a / b,
                            _ => 1.0,
                        };
                        state = Ok((step.v.map(|x| scale * x), next_lambda));
                        steps.push(step);
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
        }
        BranchFamily::Power { exponents } => {
            for &p in exponents {
                let outcome = power_seed(model, &grid, r0, h00, p)
                    .and_then(|seed| newton_solve(&opr, &seed, &Problem::Power { p }, cfg));
                match outcome {
                    Ok(outcome) => steps.push(ctx.power_step(outcome, p)),
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
        }
    }
    Ok(SolutionBranch {
        family: family.clone(),
        grid_n: cfg.grid_n,
        concentration_point: point,
        h00,
        limit_profile: limit,
        steps,
        failure,
    })
}

/// Re-solves on the doubled grid from the interpolated solution and returns
/// the sup-norm change at the shared nodes.
pub fn refinement_difference(
    model: &OperatorModel,
    v: &GridFn,
    problem: &Problem,
    cfg: &SolverConfig,
) -> Result<f64> {
    let fine = v.grid().refined();
    let opr = assemble(model, &fine)?;
    let solved = newton_solve(&opr, &v.resample(&fine), problem, cfg)?;
    Ok((0..v.len()).map(|i| (solved.v[2 * i] - v[i]).abs()).fold(0.0, f64::max))
}

/// Full Newton corrections from a converged iterate until the updates stop
/// shrinking, which is where quadratic convergence meets round-off. Returns
/// the iterate and the number of corrections applied.
fn polish(opr: &DiscreteOperator, mut v: GridFn, problem: &Problem, max_iter: usize) -> Result<(GridFn, usize)> {
    let mut previous = f64::INFINITY;
    for steps in 0..max_iter {
        let f = residual(opr, &v, problem)?;
        let factor = jacobian(opr, &v, problem)?.factor().map_err(|_| Error::JacobianSingular)?;
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let dv = factor.solve(&rhs);
        let dmax = dv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !dmax.is_finite() {
            return Err(Error::JacobianSingular);
        }
        if dmax > 0.1 * previous || dmax <= 4.0 * f64::EPSILON * v.max_abs() {
            return Ok((v, steps));
        }
        v = GridFn::new(&opr.grid(), v.iter().zip(&dv).map(|(x, d)| x + d).collect())?;
        previous = dmax;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: residual_norms(opr, &v, problem)?.backward_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(f: &str, kappa: &str, n: u32) -> OperatorModel {
        OperatorModel::new(f.parse().unwrap(), kappa.parse().unwrap(), n).unwrap()
    }

    #[test]
    fn unit_constant_solves_power_problem() {
        let m = model("const:1", "const:1", 1);
        let grid = Grid::new(64).unwrap();
        let opr = assemble(&m, &grid).unwrap();
        let one = GridFn::constant(&grid, 1.0);
        for p in [2.0, 7.5, 100.0] {
            let r = residual_power(&opr, &one, p).unwrap();
            assert!(r.max_abs() < 1e-9, "{}", r.max_abs());
            let out = newton_solve(&opr, &one, &Problem::Power { p }, &SolverConfig::default()).unwrap();
            assert_eq!(out.iterations, 0);
        }
    }

    #[test]
    fn constant_solution_of_exponential_problem() {
        // c = lambda e^c, smaller root for lambda = 0.1, by bisection on c e^{-c}
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (-mid).exp() < 0.1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = 0.5 * (lo + hi);
        let m = model("const:1", "const:1", 1);
        let grid = Grid::new(64).unwrap();
        let opr = assemble(&m, &grid).unwrap();
        let v = GridFn::constant(&grid, c);
        let r = residual_exp(&opr, &v, 0.1).unwrap();
        let strong = r.iter().zip(opr.weight()).map(|(x, a)| (x / a).abs()).fold(0.0, f64::max);
        assert!(strong < 1e-12, "{strong}");
    }

    #[test]
    fn power_residual_rejects_nonpositive_iterates() {
        let m = model("const:1", "const:1", 1);
        let grid = Grid::new(64).unwrap();
        let opr = assemble(&m, &grid).unwrap();
        let v = grid.sample_with(|r| (2.0 * std::f64::consts::PI * r).sin());
        assert!(matches!(residual_power(&opr, &v, 3.0), Err(Error::NonPositiveIterate { .. })));
        // a single clipped node out of 64 is under the 1% limit only for larger grids
        let grid = Grid::new(256).unwrap();
        let opr = assemble(&m, &grid).unwrap();
        let mut values = vec![1.0; 256];
        values[3] = -0.5;
        let v = GridFn::new(&grid, values).unwrap();
        assert!(residual_power(&opr, &v, 3.0).is_ok());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = model("trig:2,1", "const:1", 1);
        let grid = Grid::new(128).unwrap();
        let opr = assemble(&m, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = grid.sample_with(|r| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * r).cos());
        let dirs: Vec<GridFn> = (0..5)
            .map(|_| GridFn::new(&grid, (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        for problem in [Problem::Power { p: 5.0 }, Problem::Exp { lambda: 0.3 }] {
            let gap = jacobian_check(&opr, &v, &problem, &dirs).unwrap();
            assert!(gap < 1e-6, "{problem:?}: {gap}");
        }
    }

    #[test]
    fn exponential_solve_near_concentration_point() {
        let m = model("trig:2,1", "const:1", 1);
        let grid = Grid::new(1024).unwrap();
        let opr = assemble(&m, &grid).unwrap();
        let (seed, lambda) = exp_seed(&m, &grid, 0.5, 0.03).unwrap();
        let out = newton_solve(&opr, &seed, &Problem::Exp { lambda }, &SolverConfig::default()).unwrap();
        assert!(out.iterations <= 10, "{}", out.iterations);
        let (s_hat, _) = peak(&out.v);
        assert!((s_hat - 0.5).abs() < 0.02);
    }

    #[test]
    fn power_solve_from_galerkin_seed() {
        let m = model("trig:2,1", "const:1", 1);
        let grid = Grid::new(1024).unwrap();
        let opr = assemble(&m, &grid).unwrap();
        let tables = greens_matrix(&m, &Grid::new(256).unwrap()).unwrap();
        let h00 = tables.h_diag_at(0.5);
        let seed = power_seed(&m, &grid, 0.5, h00, 80.0).unwrap();
        let out = newton_solve(&opr, &seed, &Problem::Power { p: 80.0 }, &SolverConfig::default()).unwrap();
        assert!(out.v.min() > 0.0);
        let limit_max = greens_column(&m, &grid, 0.5).unwrap().max() / h00;
        assert!((out.v.max() / limit_max - 1.0).abs() < 0.2);
    }

    #[test]
    fn branch_refuses_translation_invariant_model() {
        let m = model("const:1", "const:1", 1);
        let family = BranchFamily::Power { exponents: vec![40.0] };
        let cfg = SolverConfig { grid_n: 256, locator_n: 128, ..SolverConfig::default() };
        assert!(matches!(continue_branch(&m, &family, &cfg), Err(Error::ConstantV { .. })));
    }

    #[test]
    fn schedules_must_be_monotone() {
        assert!(BranchFamily::Power { exponents: vec![40.0, 20.0] }.validate().is_err());
        assert!(BranchFamily::Power { exponents: vec![] }.validate().is_err());
        assert!(BranchFamily::Exp { eps0: 0.03, ratio: 2.0, steps: 3 }.validate().is_err());
        assert!(BranchFamily::Exp { eps0: 0.03, ratio: 0.5, steps: 3 }.validate().is_ok());
    }

    #[test]
    fn failing_step_truncates_branch() {
        // the second exponent needs a bubble narrower than the grid resolves
        let m = model("trig:2,1", "const:1", 1);
        let family = BranchFamily::Power { exponents: vec![20.0, 400.0] };
        let cfg = SolverConfig { grid_n: 256, locator_n: 128, ..SolverConfig::default() };
        let branch = continue_branch(&m, &family, &cfg).unwrap();
        assert_eq!(branch.steps.len(), 1);
        assert!(matches!(branch.failure, Some(Error::Resolution { .. })));
    }
}
