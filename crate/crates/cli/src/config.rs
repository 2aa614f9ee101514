//! Run configuration: a TOML document with one section per concern. Every
//! field has a default, so an empty document is a valid configuration of the
//! running example `f = 2 + cos 2 pi r`, `kappa = 1`, `n = 1`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use warpgreen_core::locator::{LocatorOptions, PerturbTarget, SweepOptions};
use warpgreen_core::nonlinear::SolverConfig;
use warpgreen_core::operator::{coercivity_check, POSITIVITY_SCAN};
use warpgreen_core::{Error as CoreError, Grid, OperatorModel, PeriodicFn};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::config("output.format", format!("expected 'json' or 'csv', got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub f: String,
    pub kappa: String,
    /// Exponent of the warping weight `a = f^n`.
    pub n: u32,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { f: "trig:2,1".into(), kappa: "const:1".into(), n: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    /// When unset, taken from the extension of `path`, else JSON.
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocateSection {
    /// Tolerance on `|dH/dr - 1/2|`; unset means `max(10 h^2, 1e-6)`.
    pub tol: Option<f64>,
    pub constant_tol: f64,
    pub nondegeneracy_rel: f64,
}

impl Default for LocateSection {
    fn default() -> Self {
        let d = LocatorOptions::default();
        Self { tol: d.tol, constant_tol: d.constant_tol, nondegeneracy_rel: d.nondegeneracy_rel }
    }
}

impl LocateSection {
    pub fn options(&self) -> LocatorOptions {
        LocatorOptions { tol: self.tol, constant_tol: self.constant_tol, nondegeneracy_rel: self.nondegeneracy_rel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenericitySection {
    pub perturb: PerturbTarget,
    pub rho: f64,
    pub trials: u64,
    pub modes: usize,
}

impl Default for GenericitySection {
    fn default() -> Self {
        Self { perturb: PerturbTarget::Warping, rho: 0.05, trials: 50, modes: SweepOptions::default().modes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleSection {
    pub eps: f64,
    pub s: f64,
}

impl Default for BubbleSection {
    fn default() -> Self {
        Self { eps: 0.01, s: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveExpSection {
    pub eps0: f64,
    pub steps: usize,
    pub ratio: f64,
}

impl Default for SolveExpSection {
    fn default() -> Self {
        Self { eps0: 0.03, steps: 12, ratio: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolvePowerSection {
    pub p_list: Vec<f64>,
}

impl Default for SolvePowerSection {
    fn default() -> Self {
        Self { p_list: vec![40.0, 80.0, 160.0, 320.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub step_cap: f64,
    /// Grid used to locate the concentration point before a branch is traced.
    pub locator_n: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            newton_tol: d.newton_tol,
            max_iter: d.max_iter,
            max_halvings: d.max_halvings,
            step_cap: d.step_cap,
            locator_n: d.locator_n,
        }
    }
}

/// Tolerances of the identity suite run by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub symmetry: f64,
    pub split_symmetry: f64,
    pub diagonal_slope: f64,
    pub value_jump: f64,
    pub slope_jump: f64,
    pub corner: f64,
    pub closed_form: f64,
    /// Required empirical order for quantities that converge under refinement.
    pub min_order: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            symmetry: 1e-9,
            split_symmetry: 1e-9,
            diagonal_slope: 1e-3,
            value_jump: 1e-3,
            slope_jump: 1e-3,
            corner: 1e-4,
            closed_form: 1e-3,
            min_order: 1.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub grid: GridSection,
    pub output: OutputSection,
    pub locate: LocateSection,
    pub genericity: GenericitySection,
    pub bubble: BubbleSection,
    pub solve_exp: SolveExpSection,
    pub solve_power: SolvePowerSection,
    pub solver: SolverSection,
    pub verify: VerifySection,
}

/// A configuration whose model passed the positivity and coercivity checks.
#[derive(Debug, Clone)]
pub struct ValidConfig {
    pub config: RunConfig,
    pub model: OperatorModel,
    pub grid: Grid,
}

impl ValidConfig {
    pub fn solver(&self) -> SolverConfig {
        let s = &self.config.solver;
        SolverConfig {
            newton_tol: s.newton_tol,
            max_iter: s.max_iter,
            max_halvings: s.max_halvings,
            step_cap: s.step_cap,
            grid_n: self.grid.n(),
            locator_n: s.locator_n,
        }
    }

    pub fn format(&self) -> Format {
        self.config.output.format.unwrap_or(Format::Json)
    }
}

/// Line and column (1-based) of a byte offset.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let field = match e.span() {
                Some(span) => {
                    let (line, column) = position(text, span.start);
                    format!("line {line}, column {column}")
                }
                None => "document".to_string(),
            };
            CliError::config(field, e.message().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Parses the model, scans `f` for positivity on `4N` points, checks
    /// coercivity on the run grid and fills the output format.
    pub fn validate(mut self) -> Result<ValidConfig, CliError> {
        let f: PeriodicFn =
            self.model.f.parse().map_err(|e: CoreError| CliError::config("model.f", e.to_string()))?;
        let kappa: PeriodicFn =
            self.model.kappa.parse().map_err(|e: CoreError| CliError::config("model.kappa", e.to_string()))?;
        let grid = Grid::new(self.grid.n).map_err(|e| CliError::config("grid.n", e.to_string()))?;
        let model = OperatorModel::new(f, kappa, self.model.n).map_err(CliError::Validation)?;
        model.check_positive((4 * grid.n()).max(POSITIVITY_SCAN)).map_err(CliError::Validation)?;
        let coercivity = coercivity_check(&model, &grid).map_err(CliError::Validation)?;
        if !coercivity.is_coercive {
            return Err(CliError::Validation(CoreError::CoercivityFailure { lambda_min: coercivity.lambda_min }));
        }
        if self.output.format.is_none() {
            let by_extension = self
                .output
                .path
                .as_ref()
                .and_then(|p| p.extension())
                .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
            self.output.format = Some(if by_extension { Format::Csv } else { Format::Json });
        }
        Ok(ValidConfig { config: self, model, grid })
    }
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub f: Option<String>,
    pub kappa: Option<String>,
    pub exponent: Option<u32>,
    pub n_grid: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub tol: Option<f64>,
    pub perturb: Option<PerturbTarget>,
    pub rho: Option<f64>,
    pub trials: Option<u64>,
    pub eps: Option<f64>,
    pub s: Option<f64>,
    pub eps0: Option<f64>,
    pub steps: Option<usize>,
    pub ratio: Option<f64>,
    pub p_list: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        set(&mut self.model.f, &o.f);
        set(&mut self.model.kappa, &o.kappa);
        set(&mut self.model.n, &o.exponent);
        set(&mut self.grid.n, &o.n_grid);
        set(&mut self.seed, &o.seed);
        if o.out.is_some() {
            self.output.path = o.out.clone();
        }
        if o.format.is_some() {
            self.output.format = o.format;
        }
        if o.tol.is_some() {
            self.locate.tol = o.tol;
        }
        set(&mut self.genericity.perturb, &o.perturb);
        set(&mut self.genericity.rho, &o.rho);
        set(&mut self.genericity.trials, &o.trials);
        set(&mut self.bubble.eps, &o.eps);
        set(&mut self.bubble.s, &o.s);
        set(&mut self.solve_exp.eps0, &o.eps0);
        set(&mut self.solve_exp.steps, &o.steps);
        set(&mut self.solve_exp.ratio, &o.ratio);
        set(&mut self.solve_power.p_list, &o.p_list);
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ValidConfig, CliError> {
    RunConfig::from_toml(text)?.validate()
}
