//! Concentration points: critical points of `V(r) = H(r, r) / a(r)`.
//!
//! Along the diagonal the derivative identity for `H` gives
//! `V'(r) = (2 Hr(r, r) - 1) / a(r)`, so critical points are exactly the
//! roots of `Hr(r, r) - 1/2`, and at such a root
//! `V''(r) = 2 (Hrr + Hrs)(r, r) / a(r)`. The locator finds the roots on the
//! interpolated diagonal and classifies them by the sign of `Hrr + Hrs`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{greens_column, greens_matrix, GreensTables};
use crate::operator::{assemble, coercivity_check, OperatorModel};
use crate::periodic::{Grid, GridFn, PeriodicFn};

/// `V(r) = H(r, r) / a(r)`.
pub fn concentration_value(t: &GreensTables, r: f64) -> f64 {
    t.h_diag_at(r) / t.model().weight(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatorOptions {
    /// Allowed `|Hr(r0, r0) - 1/2|` at a reported point; `None` means `max(10 h^2, 1e-6)`.
    pub tol: Option<f64>,
    /// Below this sup of `|Hr - 1/2|` the functional is declared constant.
    pub constant_tol: f64,
    /// A point is nondegenerate when `|Hrr + Hrs|` exceeds this fraction of
    /// its largest value along the diagonal.
    pub nondegeneracy_rel: f64,
}

impl Default for LocatorOptions {
    fn default() -> Self {
        Self { tol: None, constant_tol: 1e-9, nondegeneracy_rel: 1e-3 }
    }
}

impl LocatorOptions {
    pub fn tol_for(&self, grid: &Grid) -> f64 {
        self.tol.unwrap_or_else(|| (10.0 * grid.h() * grid.h()).max(1e-6))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Minimum,
    Maximum,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub r0: f64,
    pub value: f64,
    pub hr_at_diag: f64,
    pub second_form: f64,
    pub nondegenerate: bool,
    pub kind: CriticalKind,
    pub tol_used: f64,
    pub nondegeneracy_threshold: f64,
    pub grid_n: usize,
}

fn periodic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Root of `g` in `[a, b]` given a sign change, by the Illinois variant of
/// regula falsi (a secant step that falls back towards bisection).
fn bracketed_root(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    let mut gb = g(b);
    if ga == 0.0 {
        return a;
    }
    if gb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * gb - b * ga) / (gb - ga);
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let gc = g(c);
        if gc == 0.0 || (b - a).abs() < 4.0 * f64::EPSILON {
            return c;
        }
        if gc.signum() == gb.signum() {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    if ga.abs() < gb.abs() {
        a
    } else {
        b
    }
}

/// All critical points of `V`, each classified by `Hrr + Hrs`.
///
/// Fails with [`Error::ConstantV`] when `|Hr - 1/2|` stays below
/// `options.constant_tol` along the whole diagonal.
pub fn locate_critical(t: &GreensTables, options: &LocatorOptions) -> Result<Vec<CriticalPointReport>> {
    let grid = t.grid();
    let n = grid.n();
    let tol = options.tol_for(&grid);
    let diag = t.diagonal();
    let g: Vec<f64> = diag.hr[..n].iter().map(|v| v - 0.5).collect();
    let max_abs = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs < options.constant_tol {
        return Err(Error::ConstantV { max_abs, tol: options.constant_tol });
    }
    let max_form = (0..n).map(|i| (diag.hrr[i] + diag.hrs[i]).abs()).fold(0.0, f64::max);
    let threshold = options.nondegeneracy_rel * max_form;

    let criterion = |r: f64| t.hr_diag_at(r) - 0.5;
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..n {
        let (g0, g1) = (g[i], g[(i + 1) % n]);
        let root = if g0 == 0.0 {
            Some(grid.node(i))
        } else if g0.signum() != g1.signum() && g1 != 0.0 {
            Some(bracketed_root(criterion, grid.node(i), grid.node(i + 1)))
        } else {
            None
        };
        if let Some(r) = root {
            let r = r.rem_euclid(1.0);
            if !roots.iter().any(|&q| periodic_distance(q, r) < 0.5 * grid.h()) {
                roots.push(r);
            }
        }
    }
    roots.sort_by(f64::total_cmp);

    Ok(roots
        .into_iter()
        .map(|r0| {
            let second_form = t.second_form_at(r0);
            let nondegenerate = second_form.abs() > threshold;
            let kind = match (nondegenerate, second_form > 0.0) {
                (false, _) => CriticalKind::Degenerate,
                (true, true) => CriticalKind::Minimum,
                (true, false) => CriticalKind::Maximum,
            };
            CriticalPointReport {
                r0,
                value: concentration_value(t, r0),
                hr_at_diag: t.hr_diag_at(r0),
                second_form,
                nondegenerate,
                kind,
                tol_used: tol,
                nondegeneracy_threshold: threshold,
                grid_n: n,
            }
        })
        .collect())
}

/// The nondegenerate critical point farthest from the ends of `[0, 1]`.
pub fn select_concentration_point(reports: &[CriticalPointReport]) -> Result<CriticalPointReport> {
    reports
        .iter()
        .filter(|c| c.nondegenerate)
        .max_by(|a, b| a.r0.min(1.0 - a.r0).total_cmp(&b.r0.min(1.0 - b.r0)))
        .cloned()
        .ok_or(Error::NoNondegeneratePoint)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanExtremum {
    pub r: f64,
    pub value: f64,
    pub kind: CriticalKind,
}

/// Strict local extrema of the interpolated `V` sampled on `samples` points.
pub fn scan_extrema(t: &GreensTables, samples: usize) -> Vec<ScanExtremum> {
    let values: Vec<f64> =
        (0..samples).map(|k| concentration_value(t, k as f64 / samples as f64)).collect();
    let mut out = Vec::new();
    for k in 0..samples {
        let prev = values[(k + samples - 1) % samples];
        let next = values[(k + 1) % samples];
        let v = values[k];
        let kind = if v > prev && v >= next {
            CriticalKind::Maximum
        } else if v < prev && v <= next {
            CriticalKind::Minimum
        } else {
            continue;
        };
        out.push(ScanExtremum { r: k as f64 / samples as f64, value: v, kind });
    }
    out
}

/// Central-difference derivative of `H(., rbar)` with respect to the
/// potential in direction `theta`: `(H[kappa + d theta] - H[kappa - d theta]) / (2 d)`.
///
/// The singular part does not depend on the potential, so this is also the
/// derivative of `G(., rbar)`.
pub fn frechet_dh_kappa(
    model: &OperatorModel,
    grid: &Grid,
    rbar: f64,
    theta: &PeriodicFn,
    delta: f64,
) -> Result<GridFn> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let plus = model.with_kappa(model.kappa().plus(&theta.scaled(delta)));
    let minus = model.with_kappa(model.kappa().plus(&theta.scaled(-delta)));
    let up = greens_column(&plus, grid, rbar)?;
    let down = greens_column(&minus, grid, rbar)?;
    let values = up.iter().zip(down.iter()).map(|(a, b)| (a - b) / (2.0 * delta)).collect();
    GridFn::new(grid, values)
}

/// `sup |L z + G(., rbar) theta|` for the unperturbed model: the residual of
/// the linear problem the derivative should solve.
pub fn frechet_residual(
    model: &OperatorModel,
    grid: &Grid,
    rbar: f64,
    theta: &PeriodicFn,
    z: &GridFn,
) -> Result<f64> {
    let opr = assemble(model, grid)?;
    let lz = opr.apply_unweighted(z);
    let g = greens_column(model, grid, rbar)?;
    Ok((0..grid.n())
        .map(|i| (lz[i] + g[i] * theta.value(grid.node(i))).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbTarget {
    #[serde(rename = "f")]
    Warping,
    #[serde(rename = "kappa")]
    Potential,
}

impl std::str::FromStr for PerturbTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f" => Ok(PerturbTarget::Warping),
            "kappa" => Ok(PerturbTarget::Potential),
            other => Err(Error::Parse(format!("perturbation target must be 'f' or 'kappa', got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub grid_n: usize,
    /// Number of Fourier modes in each random perturbation.
    pub modes: usize,
    pub locator: LocatorOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { grid_n: 256, modes: 6, locator: LocatorOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericitySample {
    pub trial: u64,
    pub perturbed: PeriodicFn,
    /// Sup of `|theta| + |theta'| + |theta''|` for the added perturbation.
    pub perturbation_norm: f64,
    pub critical_points: Vec<CriticalPointReport>,
    pub all_nondegenerate: bool,
    pub min_abs_second_form: Option<f64>,
    /// Set when the functional came out constant and no points were located.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedTrial {
    pub trial: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericitySweep {
    pub target: PerturbTarget,
    pub rho: f64,
    pub seed: u64,
    pub samples: Vec<GenericitySample>,
    pub discarded: Vec<DiscardedTrial>,
}

impl GenericitySweep {
    /// Fraction of admissible trials whose critical points are all nondegenerate.
    pub fn fraction_nondegenerate(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let good = self.samples.iter().filter(|s| s.all_nondegenerate).count();
        Some(good as f64 / self.samples.len() as f64)
    }
}

const NORM_SCAN: usize = 4096;

/// Random trigonometric polynomial with `modes` harmonics scaled so that its
/// `C^2` norm is `u * rho` for `u` uniform in `(0, 1]`.
pub fn random_perturbation(rng: &mut impl Rng, modes: usize, rho: f64) -> (PeriodicFn, f64) {
    let cos: Vec<f64> = (0..=modes).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mut sin: Vec<f64> = (0..=modes).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    sin[0] = 0.0;
    let raw = PeriodicFn::trig(cos, sin);
    let u: f64 = 1.0 - rng.gen::<f64>();
    let target = u * rho;
    let norm = raw.c2_norm(NORM_SCAN);
    let theta = raw.scaled(target / norm);
    let actual = theta.c2_norm(NORM_SCAN);
    (theta, actual)
}

fn run_trial(
    base: &OperatorModel,
    target: PerturbTarget,
    rho: f64,
    seed: u64,
    trial: u64,
    options: &SweepOptions,
) -> std::result::Result<GenericitySample, DiscardedTrial> {
    let discard = |reason: String| DiscardedTrial { trial, reason };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let (theta, norm) = random_perturbation(&mut rng, options.modes, rho);
    let grid = Grid::new(options.grid_n).map_err(|e| discard(e.to_string()))?;
    let (model, perturbed) = match target {
        PerturbTarget::Warping => {
            let f = base.f().plus(&theta);
            (base.with_f(f.clone()).map_err(|e| discard(e.to_string()))?, f)
        }
        PerturbTarget::Potential => {
            let kappa = base.kappa().plus(&theta);
            let model = base.with_kappa(kappa.clone());
            let c = coercivity_check(&model, &grid).map_err(|e| discard(e.to_string()))?;
            if !c.is_coercive {
                return Err(discard(Error::CoercivityFailure { lambda_min: c.lambda_min }.to_string()));
            }
            (model, kappa)
        }
    };
    let tables = greens_matrix(&model, &grid).map_err(|e| discard(e.to_string()))?;
    let (critical_points, constant) = match locate_critical(&tables, &options.locator) {
        Ok(points) => (points, false),
        Err(Error::ConstantV { .. }) => (Vec::new(), true),
        Err(e) => return Err(discard(e.to_string())),
    };
    let all_nondegenerate =
        !critical_points.is_empty() && critical_points.iter().all(|c| c.nondegenerate);
    let min_abs_second_form =
        critical_points.iter().map(|c| c.second_form.abs()).min_by(f64::total_cmp);
    Ok(GenericitySample {
        trial,
        perturbed,
        perturbation_norm: norm,
        critical_points,
        all_nondegenerate,
        min_abs_second_form,
        constant,
    })
}

/// Perturbs `f` or `kappa` by random trigonometric polynomials in the
/// `C^2` ball of radius `rho` and records how often every critical point of
/// the perturbed functional is nondegenerate.
///
/// Trial `k` draws from its own ChaCha stream, so results do not depend on
/// scheduling; trials leaving the admissible set are listed separately.
pub fn genericity_sweep(
    base: &OperatorModel,
    target: PerturbTarget,
    rho: f64,
    trials: u64,
    seed: u64,
    options: &SweepOptions,
) -> Result<GenericitySweep> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let outcomes: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|trial| run_trial(base, target, rho, seed, trial, options))
        .collect();
    let mut samples = Vec::new();
    let mut discarded = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(s) => samples.push(s),
            Err(d) => discarded.push(d),
        }
    }
    Ok(GenericitySweep { target, rho, seed, samples, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(f: &str, kappa: &str, n: u32) -> OperatorModel {
        OperatorModel::new(f.parse().unwrap(), kappa.parse().unwrap(), n).unwrap()
    }

    #[test]
    fn constant_model_has_constant_functional() {
        let grid = Grid::new(128).unwrap();
        let t = greens_matrix(&model("const:1", "const:1", 2), &grid).unwrap();
        let expected = 0.5f64.cosh() / (2.0 * 0.5f64.sinh());
        for k in 0..10 {
            let v = concentration_value(&t, k as f64 / 10.0 + 0.03);
            assert!((v - expected).abs() < 1e-4, "{v} vs {expected}");
        }
        assert!(matches!(locate_critical(&t, &LocatorOptions::default()), Err(Error::ConstantV { .. })));
    }

    #[test]
    fn running_example_has_minimum_at_zero_and_maximum_at_half() {
        let grid = Grid::new(256).unwrap();
        let t = greens_matrix(&model("trig:2,1", "const:1", 1), &grid).unwrap();
        assert!((concentration_value(&t, 0.0) - concentration_value(&t, 1.0)).abs() < 1e-12);
        let points = locate_critical(&t, &LocatorOptions::default()).unwrap();
        assert_eq!(points.len(), 2, "{points:?}");
        let min = points.iter().find(|p| p.kind == CriticalKind::Minimum).unwrap();
        let max = points.iter().find(|p| p.kind == CriticalKind::Maximum).unwrap();
        assert!(periodic_distance(min.r0, 0.0) < 1e-4);
        assert!((max.r0 - 0.5).abs() < 1e-4);
        for p in &points {
            assert!((p.hr_at_diag - 0.5).abs() <= p.tol_used);
        }
        let chosen = select_concentration_point(&points).unwrap();
        assert!((chosen.r0 - 0.5).abs() < 1e-4);

        let scan = scan_extrema(&t, 4 * 256);
        assert_eq!(scan.len(), 2);
        for e in scan {
            let p = points.iter().find(|p| p.kind == e.kind).unwrap();
            assert!(periodic_distance(p.r0, e.r) < 2.0 * grid.h());
        }
    }

    #[test]
    fn illinois_finds_simple_roots() {
        let r = bracketed_root(|x| x * x * x - 0.2, 0.0, 1.0);
        assert!((r - 0.2f64.cbrt()).abs() < 1e-14);
        let r = bracketed_root(|x| (x - 0.3).tanh(), 0.0, 1.0);
        assert!((r - 0.3).abs() < 1e-14);
    }

    #[test]
    fn zero_direction_gives_zero_derivative() {
        let m = model("trig:2,1", "const:1", 1);
        let grid = Grid::new(64).unwrap();
        let z = frechet_dh_kappa(&m, &grid, 0.3, &PeriodicFn::Const(0.0), 1e-5).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn derivative_is_linear_in_direction() {
        let m = model("trig:2,1", "const:1", 1);
        let grid = Grid::new(128).unwrap();
        let theta: PeriodicFn = "trig:0,1".parse().unwrap();
        let z1 = frechet_dh_kappa(&m, &grid, 0.3, &theta, 1e-3).unwrap();
        let z2 = frechet_dh_kappa(&m, &grid, 0.3, &theta.scaled(2.0), 1e-3).unwrap();
        let doubled = z1.map(|v| 2.0 * v);
        assert!(z2.distance(&doubled) < 1e-5 * doubled.max_abs());
    }

    #[test]
    fn derivative_residual_is_second_order_in_delta() {
        let m = model("trig:2,1", "const:1", 1);
        let grid = Grid::new(128).unwrap();
        let theta: PeriodicFn = "trig:0,1".parse().unwrap();
        let res = |d: f64| {
            let z = frechet_dh_kappa(&m, &grid, 0.3, &theta, d).unwrap();
            frechet_residual(&m, &grid, 0.3, &theta, &z).unwrap()
        };
        let (a, b) = (res(0.2), res(0.1));
        assert!((a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn empty_sweep() {
        let m = model("const:1", "const:1", 1);
        let sweep = genericity_sweep(&m, PerturbTarget::Warping, 0.05, 0, 1, &SweepOptions::default()).unwrap();
        assert!(sweep.samples.is_empty() && sweep.discarded.is_empty());
        assert_eq!(sweep.fraction_nondegenerate(), None);
    }

    #[test]
    fn sweep_is_reproducible_and_discards_inadmissible_trials() {
        let m = model("const:1", "const:1", 1);
        let opts = SweepOptions { grid_n: 64, ..SweepOptions::default() };
        let a = genericity_sweep(&m, PerturbTarget::Warping, 0.05, 4, 9, &opts).unwrap();
        let b = genericity_sweep(&m, PerturbTarget::Warping, 0.05, 4, 9, &opts).unwrap();
        assert_eq!(a, b);
        for s in &a.samples {
            assert!(s.perturbation_norm <= 0.05 * (1.0 + 1e-12));
        }
        // a huge potential perturbation makes some trials non-coercive
        let wild = genericity_sweep(&m, PerturbTarget::Potential, 20000.0, 8, 3, &opts).unwrap();
        assert!(!wild.discarded.is_empty());
        assert_eq!(wild.samples.len() + wild.discarded.len(), 8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn functional_is_periodic(amp in 0.0f64..0.8, phase in 0.0f64..1.0, n in 1u32..3) {
            let f = PeriodicFn::trig(vec![1.0, amp * phase.cos()], vec![0.0, amp * phase.sin()]);
            let m = OperatorModel::new(f, PeriodicFn::Const(1.0), n).unwrap();
            let t = greens_matrix(&m, &Grid::new(32).unwrap()).unwrap();
            prop_assert!((concentration_value(&t, 0.0) - concentration_value(&t, 1.0)).abs() < 1e-12);
            prop_assert!((t.h().get(0, 0) - t.h().get(32, 32)).abs() < 1e-12);
        }

        #[test]
        fn located_points_are_scan_extrema(amp in 0.2f64..0.8, phase in 0.0f64..1.0) {
            let f = PeriodicFn::trig(vec![1.0, amp * phase.cos()], vec![0.0, amp * phase.sin()]);
            let m = OperatorModel::new(f, PeriodicFn::Const(1.0), 1).unwrap();
            let grid = Grid::new(128).unwrap();
            let t = greens_matrix(&m, &grid).unwrap();
            let points = locate_critical(&t, &LocatorOptions::default()).unwrap();
            let scan = scan_extrema(&t, 4 * 128);
            prop_assert_eq!(points.len(), scan.len());
            for p in &points {
                let close = scan.iter().find(|e| periodic_distance(e.r, p.r0) < 2.0 * grid.h());
                prop_assert!(close.is_some());
                prop_assert_eq!(close.unwrap().kind, p.kind);
            }
        }
    }
}
