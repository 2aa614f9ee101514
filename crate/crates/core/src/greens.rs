//! Periodic Green's function, its singular/regular split and the identities
//! the regular part satisfies.
//!
//! `G(., s)` solves `L G(., s) = delta_s` with periodic boundary conditions.
//! The singular part
//!
//! ```text
//! Gamma(r, s) = 0                          if r <= s
//!             = -a(s) * int_s^r 1/a(t) dt  if r > s
//! ```
//!
//! carries the unit jump of `a * dG/dr` across the diagonal, so the regular
//! part `H = G - Gamma` is `C^2` on the closed square. Tables are stored on the
//! `(N + 1) x (N + 1)` closed grid: `H` is not periodic in `r`, and the jump
//! conditions between `r = 0` and `r = 1` are part of what gets checked.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::dense_inverse;
use crate::operator::{assemble, DiscreteOperator, LinearSolver, OperatorModel};
use crate::periodic::{quad_segment, Grid, GridFn, PeriodicSpline};

/// Singular part `Gamma(r, s)` evaluated by adaptive quadrature.
pub fn gamma_eval(model: &OperatorModel, r: f64, s: f64) -> f64 {
    if r <= s {
        0.0
    } else {
        -model.weight(s) * quad_segment(|t| 1.0 / model.weight(t), s, r)
    }
}

/// Square table indexed by closed grid nodes `(r_i, s_j)`, `0 <= i, j <= N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    size: usize,
    data: Vec<f64>,
}

impl Table {
    fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                data.push(f(i, j));
            }
        }
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation at `(r, s)` in `[0, 1]^2`.
    pub fn bilinear(&self, r: f64, s: f64) -> f64 {
        let n = (self.size - 1) as f64;
        let locate = |x: f64| {
            let x = x.clamp(0.0, 1.0) * n;
            let i = (x.floor() as usize).min(self.size - 2);
            (i, x - i as f64)
        };
        let (i, u) = locate(r);
        let (j, w) = locate(s);
        (1.0 - u) * (1.0 - w) * self.get(i, j)
            + u * (1.0 - w) * self.get(i + 1, j)
            + (1.0 - u) * w * self.get(i, j + 1)
            + u * w * self.get(i + 1, j + 1)
    }
}

/// Derivatives of `H` on the diagonal, `r = s = r_i` for `0 <= i <= N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalDerivatives {
    pub hr: Vec<f64>,
    pub hs: Vec<f64>,
    pub hrr: Vec<f64>,
    pub hrs: Vec<f64>,
    pub hss: Vec<f64>,
}

/// Grid-sampled `G`, `Gamma`, `H` and diagonal derivatives of `H`.
#[derive(Debug, Clone)]
pub struct GreensTables {
    model: OperatorModel,
    grid: Grid,
    g: Table,
    gamma: Table,
    h: Table,
    /// `a(r_i)` on the closed grid.
    weight: Vec<f64>,
    /// `int_0^{r_i} 1/a` on the closed grid.
    primitive: Vec<f64>,
    diagonal: DiagonalDerivatives,
    h_diag_spline: PeriodicSpline,
    hr_spline: PeriodicSpline,
    second_form_spline: PeriodicSpline,
}

/// Cumulative integral of `1/a` at the closed grid nodes, cell by cell.
fn inverse_weight_primitive(model: &OperatorModel, grid: &Grid) -> Vec<f64> {
    let cells: Vec<f64> = (0..grid.n())
        .into_par_iter()
        .map(|i| quad_segment(|t| 1.0 / model.weight(t), grid.node(i), grid.node(i + 1)))
        .collect();
    let mut out = Vec::with_capacity(grid.n() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for c in cells {
        acc += c;
        out.push(acc);
    }
    out
}

/// Discrete load for `delta_s * a(s)`: a hat split between the two nearest nodes.
fn point_load(opr: &DiscreteOperator, model: &OperatorModel, s: f64) -> Vec<f64> {
    let grid = opr.grid();
    let (j, t) = grid.locate(s);
    let scale = model.weight(s) / grid.h();
    let mut rhs = vec![0.0; grid.n()];
    rhs[j] += (1.0 - t) * scale;
    rhs[(j + 1) % grid.n()] += t * scale;
    rhs
}

/// `G(., s)` on the grid for an arbitrary source point `s`.
pub fn greens_column(model: &OperatorModel, grid: &Grid, s: f64) -> Result<GridFn> {
    let opr = assemble(model, grid)?;
    let solver = opr.factor()?;
    Ok(solver.solve_weighted(&point_load(&opr, model, s)))
}

/// Same as [`greens_column`] with an existing factorization.
pub fn greens_column_with(
    opr: &DiscreteOperator,
    solver: &LinearSolver,
    model: &OperatorModel,
    s: f64,
) -> GridFn {
    solver.solve_weighted(&point_load(opr, model, s))
}

// Triangular lattices of 10 points supporting a bivariate cubic fit, in
// (r, s) index offsets. The lower lattice stays in r >= s, the upper one in
// r <= s, so neither straddles the derivative jump on the diagonal.
fn lattice(kind: u8) -> Vec<(i64, i64)> {
    let mut pts = Vec::with_capacity(10);
    for k in 0..4i64 {
        for l in 0..=k {
            pts.push(match kind {
                0 => (k, l),
                1 => (l, k),
                2 => (-l, -k),
                _ => (-k, -l),
            });
        }
    }
    pts
}

fn monomials(x: f64, y: f64) -> [f64; 10] {
    [1.0, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y]
}

struct DiagonalFit {
    points: Vec<(i64, i64)>,
    inverse: Vec<f64>,
}

impl DiagonalFit {
    fn new(kind: u8) -> Self {
        let points = lattice(kind);
        let vander: Vec<f64> =
            points.iter().flat_map(|&(x, y)| monomials(x as f64, y as f64)).collect();
        let inverse = dense_inverse(&vander, 10).expect("lattice is unisolvent for cubics");
        Self { points, inverse }
    }

    /// `[Hr, Hs, Hrr, Hrs, Hss]` at diagonal node `i`.
    fn derivatives(&self, h: &Table, i: usize, step: f64) -> [f64; 5] {
        let values: Vec<f64> = self
            .points
            .iter()
            .map(|&(k, l)| h.get((i as i64 + k) as usize, (i as i64 + l) as usize))
            .collect();
        let coeff = |row: usize| -> f64 { (0..10).map(|c| self.inverse[row * 10 + c] * values[c]).sum() };
        [
            coeff(1) / step,
            coeff(2) / step,
            2.0 * coeff(3) / (step * step),
            coeff(4) / (step * step),
            2.0 * coeff(5) / (step * step),
        ]
    }
}

fn diagonal_derivatives(h: &Table, grid: &Grid) -> DiagonalDerivatives {
    let n = grid.n();
    let step = grid.h();
    let fits: Vec<DiagonalFit> = (0..4).map(DiagonalFit::new).collect();
    let rows: Vec<[f64; 5]> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let (lo, up) = if i + 3 <= n { (&fits[0], &fits[1]) } else { (&fits[2], &fits[3]) };
            let a = lo.derivatives(h, i, step);
            let b = up.derivatives(h, i, step);
            let mut avg = [0.0; 5];
            for k in 0..5 {
                avg[k] = 0.5 * (a[k] + b[k]);
            }
            avg
        })
        .collect();
    let column = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    DiagonalDerivatives { hr: column(0), hs: column(1), hrr: column(2), hrs: column(3), hss: column(4) }
}

/// Builds all tables for `model` on `grid`.
pub fn greens_matrix(model: &OperatorModel, grid: &Grid) -> Result<GreensTables> {
    let opr = assemble(model, grid)?;
    let solver = opr.factor()?;
    let n = grid.n();
    let h = grid.h();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rhs = vec![0.0; n];
            rhs[j] = opr.weight()[j] / h;
            solver.solve_weighted(&rhs).into_values()
        })
        .collect();
    let size = n + 1;
    let g = Table::from_fn(size, |i, j| columns[j % n][i % n]);
    let weight: Vec<f64> = (0..size).map(|i| model.weight(grid.node(i))).collect();
    let primitive = inverse_weight_primitive(model, grid);
    let gamma = Table::from_fn(size, |i, j| {
        if i > j {
            -weight[j] * (primitive[i] - primitive[j])
        } else {
            0.0
        }
    });
    let h_table = Table::from_fn(size, |i, j| g.get(i, j) - gamma.get(i, j));
    let diagonal = diagonal_derivatives(&h_table, grid);

    let periodic_part = |v: &[f64]| PeriodicSpline::new(v[..n].to_vec()).expect("n >= 16");
    let h_diag: Vec<f64> = (0..size).map(|i| h_table.get(i, i)).collect();
    let second_form: Vec<f64> = diagonal.hrr.iter().zip(&diagonal.hrs).map(|(a, b)| a + b).collect();
    Ok(GreensTables {
        model: model.clone(),
        grid: *grid,
        h_diag_spline: periodic_part(&h_diag),
        hr_spline: periodic_part(&diagonal.hr),
        second_form_spline: periodic_part(&second_form),
        g,
        gamma,
        h: h_table,
        weight,
        primitive,
        diagonal,
    })
}

impl GreensTables {
    pub fn model(&self) -> &OperatorModel {
        &self.model
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn g(&self) -> &Table {
        &self.g
    }

    pub fn gamma(&self) -> &Table {
        &self.gamma
    }

    pub fn h(&self) -> &Table {
        &self.h
    }

    pub fn diagonal(&self) -> &DiagonalDerivatives {
        &self.diagonal
    }

    /// `a(r_i)` on the closed grid.
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// `H(r_i, r_i)` on the closed grid.
    pub fn h_diagonal(&self) -> Vec<f64> {
        (0..=self.grid.n()).map(|i| self.h.get(i, i)).collect()
    }

    /// `int_s^r 1/a` from the tabulated primitive (nodes only).
    pub fn inverse_weight_integral(&self, s_index: usize, r_index: usize) -> f64 {
        self.primitive[r_index] - self.primitive[s_index]
    }

    /// `H(r, s)` by bilinear interpolation of the smooth table.
    pub fn h_at(&self, r: f64, s: f64) -> f64 {
        self.h.bilinear(r, s)
    }

    /// `G(r, s)` as interpolated `H` plus the exact singular part, so the kink
    /// on the diagonal is not smeared by interpolation.
    pub fn g_at(&self, r: f64, s: f64) -> f64 {
        self.h_at(r, s) + gamma_eval(&self.model, r, s)
    }

    /// `H(r, r)` by cubic interpolation along the diagonal.
    pub fn h_diag_at(&self, r: f64) -> f64 {
        self.h_diag_spline.eval(r).0
    }

    /// `dH/dr (r, r)` by cubic interpolation along the diagonal.
    pub fn hr_diag_at(&self, r: f64) -> f64 {
        self.hr_spline.eval(r).0
    }

    /// `Hrr + Hrs` at `(r, r)` by cubic interpolation along the diagonal.
    pub fn second_form_at(&self, r: f64) -> f64 {
        self.second_form_spline.eval(r).0
    }

    /// `G(r_i, s)` for every node `r_i`, `s` arbitrary.
    pub fn column(&self, s: f64) -> Result<GridFn> {
        greens_column(&self.model, &self.grid, s)
    }

    /// Max over columns of `|A G(., s_j) - a_j e_j / h|`, relative to the load.
    pub fn column_residual(&self) -> Result<f64> {
        let opr = assemble(&self.model, &self.grid)?;
        let n = self.grid.n();
        let h = self.grid.h();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| self.g.get(i, j)).collect();
            let out = opr.matrix().apply(&col);
            let load = opr.weight()[j] / h;
            for (i, v) in out.iter().enumerate() {
                let target = if i == j { load } else { 0.0 };
                worst = worst.max((v - target).abs() / load);
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `max |G(r,s) a(r) - G(s,r) a(s)|`
    pub res_ii: f64,
    /// `max |H(s,r) - H(r,s) a(r)/a(s) + a(r) int_s^r 1/a|`
    pub res_iii: f64,
    /// `max_t |Hs(t,t) - Hr(t,t) - n H(t,t) f'(t)/f(t) + 1|`
    pub res_iv: f64,
}

/// Residuals of the reciprocity, transposition and diagonal derivative identities.
pub fn h_identity_residuals(t: &GreensTables) -> IdentityResiduals {
    let size = t.grid.n() + 1;
    let a = &t.weight;
    let mut res_ii: f64 = 0.0;
    let mut res_iii: f64 = 0.0;
    for i in 0..size {
        for j in 0..size {
            res_ii = res_ii.max((t.g.get(i, j) * a[i] - t.g.get(j, i) * a[j]).abs());
            let predicted = t.h.get(i, j) * a[i] / a[j] - a[i] * (t.primitive[i] - t.primitive[j]);
            res_iii = res_iii.max((t.h.get(j, i) - predicted).abs());
        }
    }
    let n = t.model.n() as f64;
    let d = &t.diagonal;
    let res_iv = (0..size)
        .map(|i| {
            let r = t.grid.node(i);
            let predicted = d.hr[i] + n * t.h.get(i, i) * t.model.log_derivative(r) - 1.0;
            (d.hs[i] - predicted).abs()
        })
        .fold(0.0, f64::max);
    IdentityResiduals { res_ii, res_iii, res_iv }
}

/// Largest violations of the two jump conditions linking `r = 0` and `r = 1`:
/// `H(0,s) = H(1,s) - a(s) int_s^1 1/a` and `Hr(0,s) = Hr(1,s) - a(s)/a(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryViolation {
    pub value_jump: f64,
    pub slope_jump: f64,
}

impl BoundaryViolation {
    pub fn max(&self) -> f64 {
        self.value_jump.max(self.slope_jump)
    }
}

pub fn h_boundary_check(t: &GreensTables) -> BoundaryViolation {
    let n = t.grid.n();
    let step = t.grid.h();
    let h = &t.h;
    let a = &t.weight;
    let mut value_jump: f64 = 0.0;
    let mut slope_jump: f64 = 0.0;
    for j in 0..=n {
        let tail = a[j] * (t.primitive[n] - t.primitive[j]);
        value_jump = value_jump.max((h.get(0, j) - (h.get(n, j) - tail)).abs());
        // second-order one-sided differences in r
        let start = (-3.0 * h.get(0, j) + 4.0 * h.get(1, j) - h.get(2, j)) / (2.0 * step);
        let end = (3.0 * h.get(n, j) - 4.0 * h.get(n - 1, j) + h.get(n - 2, j)) / (2.0 * step);
        slope_jump = slope_jump.max((start - (end - a[j] / a[n])).abs());
    }
    BoundaryViolation { value_jump, slope_jump }
}

/// Closed-form periodic Green's function of `-v'' + c v` (constant `f`, `kappa = c > 0`).
pub fn constant_coefficient_green(c: f64, r: f64, s: f64) -> f64 {
    let k = c.sqrt();
    (k * ((r - s).abs() - 0.5)).cosh() / (2.0 * k * (0.5 * k).sinh())
}
