use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use warpgreen_cli::config::Overrides;
use warpgreen_cli::locator_target;
use warpgreen_cli::{execute, CliError, Command, Format, RunConfig};

/// Periodic Green's functions, concentration points and concentrating
/// solutions of warped-product reductions.
#[derive(Parser)]
#[command(name = "warpgreen", version, about, long_about = None)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of grid cells on the period
    #[arg(long, global = true)]
    n_grid: Option<usize>,
    /// Random seed for perturbation sweeps
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format: json or csv (default from the --out extension, else json)
    #[arg(long, global = true)]
    format: Option<String>,
    /// Warping function, e.g. "trig:2,1" or "exptrig:1,0.3"
    #[arg(long, global = true)]
    f: Option<String>,
    /// Potential, e.g. "const:1"
    #[arg(long, global = true)]
    kappa: Option<String>,
    /// Exponent n of the weight f^n
    #[arg(long, global = true)]
    exponent: Option<u32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Green's function, its singular part and regular part on the closed grid
    Green,
    /// Critical points of the concentration functional
    Locate {
        /// Tolerance on |dH/dr - 1/2| at reported points
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Fraction of random perturbations with only nondegenerate critical points
    Genericity {
        /// Perturbed coefficient: f or kappa
        #[arg(long)]
        perturb: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Bubble profile U and its projection PU
    Bubble {
        #[arg(long)]
        eps: Option<f64>,
        /// Bubble centre
        #[arg(long)]
        s: Option<f64>,
    },
    /// Branch of the exponential problem with geometrically decreasing lambda
    SolveExp {
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Branch of the power problem over increasing exponents
    SolvePower {
        /// Comma-separated exponents, e.g. 40,80,160
        #[arg(long, value_delimiter = ',')]
        p_list: Option<Vec<f64>>,
    },
    /// Identity suite of the Green's function at N and 2N
    Verify,
}

fn overrides(cli: &Cli) -> Result<(Command, Overrides), CliError> {
    let c = &cli.common;
    let mut o = Overrides {
        f: c.f.clone(),
        kappa: c.kappa.clone(),
        exponent: c.exponent,
        n_grid: c.n_grid,
        seed: c.seed,
        out: c.out.clone(),
        format: c.format.as_deref().map(str::parse::<Format>).transpose()?,
        ..Overrides::default()
    };
    let command = match &cli.command {
        Cmd::Green => Command::Green,
        Cmd::Locate { tol } => {
            o.tol = *tol;
            Command::Locate
        }
        Cmd::Genericity { perturb, rho, trials } => {
            o.perturb = perturb.as_deref().map(locator_target).transpose()?;
            o.rho = *rho;
            o.trials = *trials;
            Command::Genericity
        }
        Cmd::Bubble { eps, s } => {
            o.eps = *eps;
            o.s = *s;
            Command::Bubble
        }
        Cmd::SolveExp { eps0, steps, ratio } => {
            o.eps0 = *eps0;
            o.steps = *steps;
            o.ratio = *ratio;
            Command::SolveExp
        }
        Cmd::SolvePower { p_list } => {
            o.p_list = p_list.clone();
            Command::SolvePower
        }
        Cmd::Verify => Command::Verify,
    };
    Ok((command, o))
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let (command, o) = overrides(&cli)?;
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    config.apply(&o);
    let cfg = config.validate()?;
    let done = execute(command, &cfg)?;
    eprintln!("{}", done.summary);
    for path in &done.written {
        eprintln!("wrote {}", path.display());
    }
    done.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("warpgreen: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
