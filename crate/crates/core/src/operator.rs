//! The periodic operator `L v = -v'' - n (f'/f) v' + kappa v` and its
//! self-adjoint discretization.
//!
//! Multiplying `L v = g` by the weight `a = f^n` gives the divergence form
//! `-(a v')' + a kappa v = a g`. On the uniform grid the flux `a v'` is
//! sampled at cell midpoints, which yields a symmetric cyclic tridiagonal
//! matrix: the discrete operator is self-adjoint for the plain Euclidean
//! inner product, and `L` itself is self-adjoint for the `a`-weighted one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CyclicFactor, CyclicTridiagonal};
use crate::periodic::{Grid, GridFn, PeriodicFn};

/// Number of points used to certify positivity of the warping function.
pub const POSITIVITY_SCAN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorModel {
    f: PeriodicFn,
    kappa: PeriodicFn,
    n: u32,
}

impl OperatorModel {
    /// Builds a model after checking `min f > 0` on a fine scan.
    pub fn new(f: PeriodicFn, kappa: PeriodicFn, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("fiber dimension n must be positive".into()));
        }
        let model = Self { f, kappa, n };
        model.check_positive(POSITIVITY_SCAN)?;
        Ok(model)
    }

    /// Fails with the smallest scanned value if `f` is not positive on `samples` points.
    pub fn check_positive(&self, samples: usize) -> Result<()> {
        let (r, value) = self.f.min_on_scan(samples);
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::NonPositiveWarping { r, value })
        }
    }

    pub fn f(&self) -> &PeriodicFn {
        &self.f
    }

    pub fn kappa(&self) -> &PeriodicFn {
        &self.kappa
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn with_kappa(&self, kappa: PeriodicFn) -> Self {
        Self { f: self.f.clone(), kappa, n: self.n }
    }

    pub fn with_f(&self, f: PeriodicFn) -> Result<Self> {
        Self::new(f, self.kappa.clone(), self.n)
    }

    /// Weight `a(r) = f(r)^n`.
    pub fn weight(&self, r: f64) -> f64 {
        self.f.value(r).powi(self.n as i32)
    }

    /// `f'(r) / f(r)`.
    pub fn log_derivative(&self, r: f64) -> f64 {
        let (v, d1, _) = self.f.eval(r);
        d1 / v
    }

    /// `true` when both `f` and `kappa` are constant, so that the problem is
    /// translation invariant.
    pub fn is_translation_invariant(&self) -> bool {
        self.f.is_constant() && self.kappa.is_constant()
    }

    /// Applies the continuous operator to a function given by its value and
    /// first two derivatives.
    pub fn apply_exact(&self, r: f64, v: (f64, f64, f64)) -> f64 {
        -v.2 - self.n as f64 * self.log_derivative(r) * v.1 + self.kappa.value(r) * v.0
    }
}

/// Symmetric cyclic tridiagonal matrix for `v -> -(a v')' + a kappa v`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    matrix: CyclicTridiagonal,
    weight: Vec<f64>,
}

impl DiscreteOperator {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn matrix(&self) -> &CyclicTridiagonal {
        &self.matrix
    }

    /// `a(r_i)` at the grid nodes.
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn apply(&self, v: &GridFn) -> GridFn {
        GridFn::new(&self.grid, self.matrix.apply(v.values())).expect("same grid")
    }

    /// The discrete `L v`, i.e. `A v / a`.
    pub fn apply_unweighted(&self, v: &GridFn) -> GridFn {
        let av = self.matrix.apply(v.values());
        let values = av.iter().zip(&self.weight).map(|(x, a)| x / a).collect();
        GridFn::new(&self.grid, values).expect("same grid")
    }

    /// Factorization for repeated solves. Refuses matrices that are not
    /// positive definite, since those do not come from a coercive operator.
    pub fn factor(&self) -> Result<LinearSolver> {
        if self.matrix.count_eigenvalues_below(0.0, &self.weight) > 0 {
            return Err(Error::CoercivityFailure { lambda_min: self.lambda_min() });
        }
        let factor = self
            .matrix
            .factor()
            .map_err(|_| Error::CoercivityFailure { lambda_min: self.lambda_min() })?;
        Ok(LinearSolver { grid: self.grid, factor, weight: self.weight.clone() })
    }

    /// Gershgorin interval for the spectrum of the pencil `(A, diag(a))`.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let m = &self.matrix;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m.len() {
            let radius = m.lower()[i].abs() + m.upper()[i].abs();
            lo = lo.min((m.diag()[i] - radius) / self.weight[i]);
            hi = hi.max((m.diag()[i] + radius) / self.weight[i]);
        }
        (lo, hi)
    }

    /// Smallest eigenvalue of `A x = lambda diag(a) x`, by bisection on inertia counts.
    pub fn lambda_min(&self) -> f64 {
        let (mut lo, mut hi) = self.spectral_bounds();
        let scale = lo.abs().max(hi.abs());
        for _ in 0..200 {
            if hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.matrix.count_eigenvalues_below(mid, &self.weight) > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// A factored operator; solves `A v = a g` for right-hand sides `g`.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    grid: Grid,
    factor: CyclicFactor,
    weight: Vec<f64>,
}

impl LinearSolver {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Solves `L v = g`.
    pub fn solve(&self, g: &GridFn) -> GridFn {
        let rhs: Vec<f64> = g.iter().zip(&self.weight).map(|(x, a)| x * a).collect();
        self.solve_weighted(&rhs)
    }

    /// Solves `A v = b` for an already weighted right-hand side.
    pub fn solve_weighted(&self, rhs: &[f64]) -> GridFn {
        GridFn::new(&self.grid, self.factor.solve(rhs)).expect("same grid")
    }
}

/// Assembles the discrete operator on `grid`.
pub fn assemble(model: &OperatorModel, grid: &Grid) -> Result<DiscreteOperator> {
    let n = grid.n();
    let h = grid.h();
    let h2 = h * h;
    let weight: Vec<f64> = (0..n).map(|i| model.weight(grid.node(i))).collect();
    // mid[i] is a at r_i + h/2
    let mid: Vec<f64> = (0..n).map(|i| model.weight((i as f64 + 0.5) * h)).collect();
    for (i, &w) in weight.iter().enumerate() {
        if !(w > 0.0) || !(mid[i] > 0.0) {
            let r = grid.node(i);
            return Err(Error::NonPositiveWarping { r, value: model.f().value(r) });
        }
    }
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let left = mid[(i + n - 1) % n];
        let right = mid[i];
        lower[i] = -left / h2;
        upper[i] = -right / h2;
        diag[i] = (left + right) / h2 + weight[i] * model.kappa().value(grid.node(i));
    }
    Ok(DiscreteOperator { grid: *grid, matrix: CyclicTridiagonal::new(lower, diag, upper), weight })
}

/// Solves `L v = g` with periodic boundary conditions.
pub fn solve_linear(opr: &DiscreteOperator, g: &GridFn) -> Result<GridFn> {
    Ok(opr.factor()?.solve(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coercivity {
    pub is_coercive: bool,
    pub lambda_min: f64,
}

/// Smallest eigenvalue of the pencil `(A, diag(a))` and whether it is
/// positive beyond round-off.
pub fn coercivity_check(model: &OperatorModel, grid: &Grid) -> Result<Coercivity> {
    let opr = assemble(model, grid)?;
    let lambda_min = opr.lambda_min();
    let (lo, hi) = opr.spectral_bounds();
    let noise = 1e-10 * lo.abs().max(hi.abs());
    Ok(Coercivity { is_coercive: lambda_min > noise, lambda_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn model(f: &str, kappa: &str, n: u32) -> OperatorModel {
        OperatorModel::new(f.parse().unwrap(), kappa.parse().unwrap(), n).unwrap()
    }

    #[test]
    fn constant_model_gives_shifted_laplacian() {
        let grid = Grid::new(32).unwrap();
        let opr = assemble(&model("const:1", "const:1", 1), &grid).unwrap();
        let h2 = grid.h() * grid.h();
        let m = opr.matrix();
        for i in 0..32 {
            assert!((m.diag()[i] - (2.0 / h2 + 1.0)).abs() < 1e-9);
            assert!((m.lower()[i] + 1.0 / h2).abs() < 1e-9);
            assert!((m.upper()[i] + 1.0 / h2).abs() < 1e-9);
        }
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn constants_reproduce_weighted_potential() {
        let grid = Grid::new(64).unwrap();
        let m = model("trig:2,1", "const:3", 2);
        let opr = assemble(&m, &grid).unwrap();
        let out = opr.apply(&GridFn::constant(&grid, 1.0));
        for i in 0..64 {
            let expected = 3.0 * m.weight(grid.node(i));
            assert!((out[i] - expected).abs() < 1e-9 * expected.max(1.0) * 64.0 * 64.0);
        }
    }

    #[test]
    fn manufactured_operator_is_second_order() {
        let m = model("trig:2,1", "const:1", 1);
        let err = |n: usize| {
            let grid = Grid::new(n).unwrap();
            let opr = assemble(&m, &grid).unwrap();
            let v = grid.sample_with(|r| (2.0 * PI * r).sin());
            let lv = opr.apply_unweighted(&v);
            let exact = grid.sample_with(|r| {
                let w = 2.0 * PI;
                m.apply_exact(r, ((w * r).sin(), w * (w * r).cos(), -w * w * (w * r).sin()))
            });
            lv.distance(&exact)
        };
        let order = (err(256) / err(512)).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn solve_linear_examples() {
        let grid = Grid::new(512).unwrap();
        for n in [1, 3] {
            let opr = assemble(&model("const:1", "const:1", n), &grid).unwrap();
            let v = solve_linear(&opr, &GridFn::constant(&grid, 1.0)).unwrap();
            assert!(v.distance(&GridFn::constant(&grid, 1.0)) < 1e-12);
            let zero = solve_linear(&opr, &GridFn::zeros(&grid)).unwrap();
            assert_eq!(zero.max_abs(), 0.0);
        }
        let opr = assemble(&model("const:1", "const:1", 1), &grid).unwrap();
        let w = 2.0 * PI;
        let rhs = grid.sample_with(|r| (1.0 + w * w) * (w * r).sin());
        let v = solve_linear(&opr, &rhs).unwrap();
        assert!(v.distance(&grid.sample_with(|r| (w * r).sin())) < 1e-4);
    }

    #[test]
    fn solve_linear_rejects_indefinite() {
        let grid = Grid::new(64).unwrap();
        let opr = assemble(&model("const:1", "const:-1", 1), &grid).unwrap();
        match solve_linear(&opr, &GridFn::constant(&grid, 1.0)) {
            Err(Error::CoercivityFailure { lambda_min }) => assert!((lambda_min + 1.0).abs() < 1e-6),
            other => panic!("expected coercivity failure, got {other:?}"),
        }
    }

    #[test]
    fn coercivity_examples() {
        let grid = Grid::new(256).unwrap();
        let c = coercivity_check(&model("const:1", "const:1", 1), &grid).unwrap();
        assert!(c.is_coercive && (c.lambda_min - 1.0).abs() < 1e-8, "{c:?}");
        let c = coercivity_check(&model("const:1", "const:0", 1), &grid).unwrap();
        assert!(!c.is_coercive && c.lambda_min.abs() < 1e-6, "{c:?}");
        let c = coercivity_check(&model("const:1", "const:-1", 1), &grid).unwrap();
        assert!(!c.is_coercive && (c.lambda_min + 1.0).abs() < 1e-8, "{c:?}");
    }

    #[test]
    fn rejects_nonpositive_warping() {
        let err = OperatorModel::new("trig:0.5,1".parse().unwrap(), PeriodicFn::Const(1.0), 1).unwrap_err();
        assert!(matches!(err, Error::NonPositiveWarping { value, .. } if value < 0.0));
    }

    proptest! {
        #[test]
        fn discrete_operator_is_self_adjoint(
            u in prop::collection::vec(-1.0f64..1.0, 32),
            v in prop::collection::vec(-1.0f64..1.0, 32),
            amp in 0.0f64..0.9,
        ) {
            let m = OperatorModel::new(PeriodicFn::trig(vec![1.0, amp], vec![0.0, 0.3 * amp]),
                "exptrig:1,0.5".parse().unwrap(), 2).unwrap();
            let grid = Grid::new(32).unwrap();
            let opr = assemble(&m, &grid).unwrap();
            let u = GridFn::new(&grid, u).unwrap();
            let v = GridFn::new(&grid, v).unwrap();
            let lhs: f64 = opr.apply(&u).iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(opr.apply(&v).iter()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0) * 1e3);
        }

        #[test]
        fn solve_inverts_apply(values in prop::collection::vec(-1.0f64..1.0, 48)) {
            let m = OperatorModel::new("trig:2,1".parse().unwrap(), "const:1".parse().unwrap(), 1).unwrap();
            let grid = Grid::new(48).unwrap();
            let opr = assemble(&m, &grid).unwrap();
            let g = GridFn::new(&grid, values).unwrap();
            let v = solve_linear(&opr, &g).unwrap();
            prop_assert!(opr.apply_unweighted(&v).distance(&g) < 1e-10);
        }
    }
}
