use std::f64::consts::SQRT_2;

use serde::Serialize;

use warpgreen_core::bubble::{bubble_mass, project, BubbleParams};
use warpgreen_core::greens::{greens_column, greens_matrix, DiagonalDerivatives, Table};
use warpgreen_core::locator::{
    genericity_sweep, locate_critical, scan_extrema, select_concentration_point, CriticalKind,
    CriticalPointReport, GenericitySweep, ScanExtremum, SweepOptions,
};
use warpgreen_core::nonlinear::{continue_branch, BranchFamily, SolutionBranch};

use crate::config::ValidConfig;
use crate::error::CliError;
use crate::output::{to_json, CsvTable};
use crate::verify::{run_verify, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Green,
    Locate,
    Genericity,
    Bubble,
    SolveExp,
    SolvePower,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Green => "green",
            Command::Locate => "locate",
            Command::Genericity => "genericity",
            Command::Bubble => "bubble",
            Command::SolveExp => "solve-exp",
            Command::SolvePower => "solve-power",
            Command::Verify => "verify",
        }
    }
}

/// What a command produced. `failure` is set when the result is written but
/// the run must still exit non-zero (a failed identity, a stalled branch).
#[derive(Debug)]
pub struct Outcome {
    pub json: String,
    pub tables: Vec<CsvTable>,
    pub summary: String,
    pub failure: Option<CliError>,
}

pub fn run(command: Command, cfg: &ValidConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Green => green(cfg),
        Command::Locate => locate(cfg),
        Command::Genericity => genericity(cfg),
        Command::Bubble => bubble(cfg),
        Command::SolveExp => {
            let e = &cfg.config.solve_exp;
            branch(cfg, command, BranchFamily::Exp { eps0: e.eps0, ratio: e.ratio, steps: e.steps })
        }
        Command::SolvePower => {
            branch(cfg, command, BranchFamily::Power { exponents: cfg.config.solve_power.p_list.clone() })
        }
        Command::Verify => verify(cfg),
    }
}

fn rows(t: &Table) -> Vec<&[f64]> {
    (0..t.size()).map(|i| t.row(i)).collect()
}

#[derive(Serialize)]
struct GreenResult<'a> {
    n: usize,
    h: f64,
    /// Closed grid `r_0 = 0, ..., r_N = 1`; tables are indexed `[r][s]` on it.
    nodes: Vec<f64>,
    #[serde(rename = "G")]
    g: Vec<&'a [f64]>,
    #[serde(rename = "Gamma")]
    gamma: Vec<&'a [f64]>,
    #[serde(rename = "H")]
    h_table: Vec<&'a [f64]>,
    diagonal: &'a DiagonalDerivatives,
    h_diagonal: Vec<f64>,
    column_residual: f64,
}

fn matrix_csv(suffix: &str, nodes: &[f64], t: &Table) -> CsvTable {
    let mut header = vec!["r".to_string()];
    header.extend(nodes.iter().map(|s| format!("s={s}")));
    let mut table = CsvTable { suffix: suffix.to_string(), header, rows: Vec::new() };
    for i in 0..t.size() {
        let row: Vec<f64> = std::iter::once(nodes[i]).chain(t.row(i).iter().copied()).collect();
        table.push(&row);
    }
    table
}

fn green(cfg: &ValidConfig) -> Result<Outcome, CliError> {
    let t = greens_matrix(&cfg.model, &cfg.grid)?;
    let nodes = cfg.grid.closed_nodes();
    let result = GreenResult {
        n: cfg.grid.n(),
        h: cfg.grid.h(),
        nodes: nodes.clone(),
        g: rows(t.g()),
        gamma: rows(t.gamma()),
        h_table: rows(t.h()),
        diagonal: t.diagonal(),
        h_diagonal: t.h_diagonal(),
        column_residual: t.column_residual()?,
    };
    let json = to_json("green", &cfg.config, &result)?;
    let d = t.diagonal();
    let hd = t.h_diagonal();
    let mut diag = CsvTable::new("diagonal", &["r", "H", "Hr", "Hs", "Hrr", "Hrs", "Hss"]);
    for i in 0..nodes.len() {
        diag.push(&[nodes[i], hd[i], d.hr[i], d.hs[i], d.hrr[i], d.hrs[i], d.hss[i]]);
    }
    let tables = vec![
        matrix_csv("G", &nodes, t.g()),
        matrix_csv("Gamma", &nodes, t.gamma()),
        matrix_csv("H", &nodes, t.h()),
        diag,
    ];
    let summary = format!(
        "green: N = {}, min G {:.6}, max H {:.6}, column residual {:.2e}",
        cfg.grid.n(),
        t.g().min(),
        t.h().max(),
        result.column_residual
    );
    Ok(Outcome { json, tables, summary, failure: None })
}

#[derive(Serialize)]
struct LocateResult {
    tol: f64,
    critical_points: Vec<CriticalPointReport>,
    /// Nondegenerate point farthest from the period endpoints, if any.
    selected: Option<CriticalPointReport>,
    /// Extrema of the directly sampled concentration functional on `4N` points.
    scan_extrema: Vec<ScanExtremum>,
}

fn kind_code(kind: CriticalKind) -> f64 {
    match kind {
        CriticalKind::Minimum => 1.0,
        CriticalKind::Maximum => -1.0,
        CriticalKind::Degenerate => 0.0,
    }
}

fn locate(cfg: &ValidConfig) -> Result<Outcome, CliError> {
    let t = greens_matrix(&cfg.model, &cfg.grid)?;
    let options = cfg.config.locate.options();
    let points = locate_critical(&t, &options)?;
    let result = LocateResult {
        tol: options.tol_for(&cfg.grid),
        selected: select_concentration_point(&points).ok(),
        scan_extrema: scan_extrema(&t, 4 * cfg.grid.n()),
        critical_points: points,
    };
    let json = to_json("locate", &cfg.config, &result)?;
    let mut table = CsvTable::new("", &["r0", "value", "hr_at_diag", "second_form", "nondegenerate", "kind"]);
    for p in &result.critical_points {
        let nondegenerate = if p.nondegenerate { 1.0 } else { 0.0 };
        table.push(&[p.r0, p.value, p.hr_at_diag, p.second_form, nondegenerate, kind_code(p.kind)]);
    }
    let listed: Vec<String> =
        result.critical_points.iter().map(|p| format!("{:.6} ({:?})", p.r0, p.kind)).collect();
    let summary = format!("locate: {} critical points: {}", listed.len(), listed.join(", "));
    Ok(Outcome { json, tables: vec![table], summary, failure: None })
}

#[derive(Serialize)]
struct GenericityResult {
    fraction_nondegenerate: Option<f64>,
    sweep: GenericitySweep,
}

fn genericity(cfg: &ValidConfig) -> Result<Outcome, CliError> {
    let g = &cfg.config.genericity;
    let opts = SweepOptions { grid_n: cfg.grid.n(), modes: g.modes, locator: cfg.config.locate.options() };
    let sweep = genericity_sweep(&cfg.model, g.perturb, g.rho, g.trials, cfg.config.seed, &opts)?;
    let result = GenericityResult { fraction_nondegenerate: sweep.fraction_nondegenerate(), sweep };
    let json = to_json("genericity", &cfg.config, &result)?;
    let mut table = CsvTable::new(
        "",
        &["trial", "perturbation_norm", "critical_points", "all_nondegenerate", "min_abs_second_form", "constant"],
    );
    for s in &result.sweep.samples {
        table.push(&[
            s.trial as f64,
            s.perturbation_norm,
            s.critical_points.len() as f64,
            if s.all_nondegenerate { 1.0 } else { 0.0 },
            s.min_abs_second_form.unwrap_or(f64::NAN),
            if s.constant { 1.0 } else { 0.0 },
        ]);
    }
    let summary = format!(
        "genericity: {} admissible trials, {} discarded, fraction nondegenerate {}",
        result.sweep.samples.len(),
        result.sweep.discarded.len(),
        result.fraction_nondegenerate.map_or("n/a".to_string(), |f| format!("{f:.3}"))
    );
    Ok(Outcome { json, tables: vec![table], summary, failure: None })
}

#[derive(Serialize)]
struct BubbleResult {
    params: BubbleParams,
    /// `eps * int e^U`, which tends to `2 sqrt(2)`.
    scaled_mass: f64,
    /// `max |eps PU - 2 sqrt(2) G| / (2 sqrt(2) G)` over nodes at distance at least 0.2 from `s`.
    far_field_rel_error: f64,
    r: Vec<f64>,
    u: Vec<f64>,
    pu: Vec<f64>,
    eps_pu: Vec<f64>,
    two_sqrt2_g: Vec<f64>,
}

fn periodic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

fn bubble(cfg: &ValidConfig) -> Result<Outcome, CliError> {
    let b = &cfg.config.bubble;
    let bp = BubbleParams::new(b.eps, b.s)?;
    let profile = project(&cfg.model, &cfg.grid, &bp)?;
    let g = greens_column(&cfg.model, &cfg.grid, b.s)?;
    let r = cfg.grid.nodes();
    let eps_pu: Vec<f64> = profile.pu.iter().map(|x| b.eps * x).collect();
    let two_sqrt2_g: Vec<f64> = g.iter().map(|x| 2.0 * SQRT_2 * x).collect();
    let far_field_rel_error = r
        .iter()
        .enumerate()
        .filter(|(_, &ri)| periodic_distance(ri, b.s) >= 0.2)
        .map(|(i, _)| (eps_pu[i] - two_sqrt2_g[i]).abs() / two_sqrt2_g[i])
        .fold(0.0, f64::max);
    let result = BubbleResult {
        params: bp,
        scaled_mass: b.eps * bubble_mass(&bp),
        far_field_rel_error,
        u: profile.u.values().to_vec(),
        pu: profile.pu.values().to_vec(),
        r,
        eps_pu,
        two_sqrt2_g,
    };
    let json = to_json("bubble", &cfg.config, &result)?;
    let mut table = CsvTable::new("", &["r", "U", "PU", "eps_PU", "two_sqrt2_G"]);
    for i in 0..result.r.len() {
        table.push(&[result.r[i], result.u[i], result.pu[i], result.eps_pu[i], result.two_sqrt2_g[i]]);
    }
    let summary = format!(
        "bubble: eps {}, s {}, eps*mass {:.9}, far-field relative error {:.3e}",
        b.eps, b.s, result.scaled_mass, result.far_field_rel_error
    );
    Ok(Outcome { json, tables: vec![table], summary, failure: None })
}

#[derive(Serialize)]
struct BranchResult {
    /// Grid nodes shared by every `v` and by the limit profile.
    r: Vec<f64>,
    branch: SolutionBranch,
}

fn branch(cfg: &ValidConfig, command: Command, family: BranchFamily) -> Result<Outcome, CliError> {
    let solved = continue_branch(&cfg.model, &family, &cfg.solver())?;
    let failure = solved.failure.clone().map(CliError::from);
    let result = BranchResult { r: cfg.grid.nodes(), branch: solved };
    let json = to_json(command.name(), &cfg.config, &result)?;
    let mut table = CsvTable::new(
        "",
        &[
            "parameter",
            "iterations",
            "backward_error",
            "residual_sup",
            "eps_formula",
            "eps_fit",
            "eps_mass",
            "peak_location",
            "peak_value",
            "asymptotic_error",
            "value_at_r0",
        ],
    );
    for s in &result.branch.steps {
        table.push(&[
            s.parameter,
            s.iterations as f64,
            s.backward_error,
            s.residual_sup,
            s.eps_formula,
            s.eps_fit,
            s.eps_mass.unwrap_or(f64::NAN),
            s.peak_location,
            s.peak_value,
            s.asymptotic_error,
            s.value_at_r0,
        ]);
    }
    let errors: Vec<String> = result.branch.steps.iter().map(|s| format!("{:.4}", s.asymptotic_error)).collect();
    let summary = format!(
        "{}: r0 = {:.6}, {} steps, asymptotic error {}{}",
        command.name(),
        result.branch.concentration_point.r0,
        result.branch.steps.len(),
        errors.join(" "),
        result.branch.failure.as_ref().map(|e| format!(", stopped: {e}")).unwrap_or_default()
    );
    Ok(Outcome { json, tables: vec![table], summary, failure })
}

fn verify(cfg: &ValidConfig) -> Result<Outcome, CliError> {
    let report: VerifyReport = run_verify(cfg)?;
    let json = to_json("verify", &cfg.config, &report)?;
    let mut table = CsvTable::new("", &["check", "coarse", "fine", "tolerance", "order", "passed"]);
    for c in &report.checks {
        table.push_labeled(&c.name, &[
            c.coarse,
            c.fine,
            c.tolerance,
            c.order.unwrap_or(f64::NAN),
            if c.passed { 1.0 } else { 0.0 },
        ]);
    }
    let lines: Vec<String> = report
        .checks
        .iter()
        .map(|c| {
            format!(
                "  {:<15} {:.3e} -> {:.3e} (tol {:.1e}, order {}) {}",
                c.name,
                c.coarse,
                c.fine,
                c.tolerance,
                c.order.map_or("-".to_string(), |o| format!("{o:.2}")),
                if c.passed { "ok" } else { "FAIL" }
            )
        })
        .collect();
    let summary = format!("verify at N = {} and {}:\n{}", report.grids[0], report.grids[1], lines.join("\n"));
    let failure = (!report.passed).then(|| CliError::Identity(report.failed_checks().join(", ")));
    Ok(Outcome { json, tables: vec![table], summary, failure })
}
