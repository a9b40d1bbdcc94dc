mod optimal;
mod output;
mod settings;
mod table2;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};
use gdlab_core::harness::run_training;
use gdlab_core::{F3Gradient, HyperTarget, Method, ObjectiveId};

use crate::output::{write_output, Format};
use crate::settings::{PolicyName, RunSettings};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gdlab",
    version,
    about = "Closed-form hyperparameters for gradient descent methods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method on one objective and write the per-epoch trace.
    Run(RunArgs),
    /// Evaluate closed-form optimal hyperparameters at a given state.
    Optimal(optimal::OptimalArgs),
    /// Check closed forms and gradients against numeric oracles.
    Verify(verify::VerifyArgs),
    /// Reproduce the method × objective convergence matrix.
    Table2(table2::Table2Args),
}

/// Starting point `w=..[,b=..]`.
#[derive(Debug, Clone, Copy)]
pub struct InitPoint {
    pub w: f64,
    pub b: Option<f64>,
}

pub fn parse_init(s: &str) -> Result<InitPoint, String> {
    let mut w = None;
    let mut b = None;
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("malformed number `{}`", value.trim()))?;
        let slot = match key.trim() {
            "w" => &mut w,
            "b" => &mut b,
            other => return Err(format!("unknown coordinate `{other}` (expected w or b)")),
        };
        if slot.replace(value).is_some() {
            return Err(format!("coordinate `{}` given twice", key.trim()));
        }
    }
    let w = w.ok_or("initial point needs w")?;
    Ok(InitPoint { w, b })
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    objective: Option<ObjectiveId>,
    #[arg(long, value_enum)]
    policy: Option<PolicyName>,
    /// Hyperparameters replaced by closed forms each epoch (comma separated).
    /// Defaults to every hyperparameter the method uses.
    #[arg(long, value_delimiter = ',')]
    optimize: Option<Vec<HyperTarget>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Initial point, e.g. `w=0.3,b=0.3`. Defaults to w = b = 0.3.
    #[arg(long, value_parser = parse_init, conflicts_with = "seed")]
    init: Option<InitPoint>,
    /// Draw the initial point uniformly from [0, 1) with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Regression input for f3.
    #[arg(long)]
    x: Option<f64>,
    /// Regression target for f3.
    #[arg(long)]
    y: Option<f64>,
    #[arg(long)]
    f3_gradient: Option<F3Gradient>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Output format; inferred from the output extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// TOML config file (or a JSON run artifact). Flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn settings(&self) -> RunSettings {
        RunSettings {
            method: self.method,
            objective: self.objective,
            policy: self.policy,
            optimize: self.optimize.clone(),
            eta: self.eta,
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            init_w: self.init.map(|p| p.w),
            init_b: self.init.and_then(|p| p.b),
            seed: self.seed,
            x: self.x,
            y: self.y,
            f3_gradient: self.f3_gradient,
            max_epochs: self.max_epochs,
            tolerance: self.tolerance,
        }
    }
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<u8> {
    let file = match &args.config {
        Some(path) => RunSettings::load(path)?,
        None => RunSettings::default(),
    };
    let (cfg, echo) = args.settings().or(file).resolve()?;
    let trace = run_training(&cfg)?;
    let format = Format::choose(args.format, args.output.as_deref());
    let body = match format {
        Format::Csv => output::trace_csv(&trace),
        Format::Json => output::trace_json(&echo, &trace)?,
    };
    write_output(args.output.as_deref(), &body)?;
    if format == Format::Csv {
        if let Some(path) = &args.output {
            let mut sidecar = path.clone().into_os_string();
            sidecar.push(".config.toml");
            std::fs::write(&sidecar, toml::to_string(&echo)?)?;
        }
    }
    if trace.diverged {
        bail!(
            "loss became non-finite after epoch {}; trace truncated",
            trace.epochs_run()
        );
    }
    Ok(if trace.converged_epoch.is_some() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Optimal(a) => optimal::cmd_optimal(a),
        Command::Verify(a) => verify::cmd_verify(a),
        Command::Table2(a) => table2::cmd_table2(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
