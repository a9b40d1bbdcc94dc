use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use gdlab_core::harness::{reproduce_table2, Init, PublishedCell, Table2Config, Trace};
use gdlab_core::{F3Gradient, Method, ObjectiveId, ParamPoint, RegressionSample};
use serde::Serialize;

use crate::output::{json, num, write_output, Format};
use crate::{parse_init, InitPoint, EXIT_OK};

#[derive(Args)]
pub struct Table2Args {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    /// Regression target; defaults to 0.1·x + 0.2.
    #[arg(long)]
    y: Option<f64>,
    /// Initial point `w=..,b=..`; F1 uses only w. Defaults to w = b = 0.3.
    #[arg(long, value_parser = parse_init, conflicts_with = "seed")]
    init: Option<InitPoint>,
    /// Seeded uniform initial point instead of a fixed one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    f3_gradient: Option<F3Gradient>,
    /// Output format; inferred from the output extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct ArmSummary {
    converged_epoch: Option<usize>,
    epochs_run: usize,
    final_loss: f64,
    diverged: bool,
}

impl From<&Trace> for ArmSummary {
    fn from(t: &Trace) -> Self {
        Self {
            converged_epoch: t.converged_epoch,
            epochs_run: t.epochs_run(),
            final_loss: t.final_loss,
            diverged: t.diverged,
        }
    }
}

#[derive(Serialize)]
struct CellSummary {
    method: Method,
    objective: ObjectiveId,
    optimal: ArmSummary,
    fixed: ArmSummary,
    /// Values reported in the original publication, for comparison only.
    published: PublishedCell,
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a Table2Config,
    cells: Vec<CellSummary>,
}

const HEADER: &str = "method,objective,\
optimal_converged_epoch,optimal_epochs_run,optimal_final_loss,\
fixed_converged_epoch,fixed_epochs_run,fixed_final_loss,\
published_optimal_epoch,published_optimal_loss,published_fixed_epoch,published_fixed_loss";

pub fn cmd_table2(args: &Table2Args) -> anyhow::Result<u8> {
    let mut cfg = Table2Config::default();
    let d = &mut cfg.defaults;
    d.eta = args.eta.unwrap_or(d.eta);
    d.alpha = args.alpha.unwrap_or(d.alpha);
    d.beta = args.beta.unwrap_or(d.beta);
    d.epsilon = args.epsilon.unwrap_or(d.epsilon);
    d.validate()?;
    let x = args.x.unwrap_or(cfg.sample.x);
    let y = args.y.unwrap_or(0.1 * x + 0.2);
    cfg.sample = RegressionSample::new(x, y);
    if let Some(p) = args.init {
        let Some(b) = p.b else {
            anyhow::bail!("--init needs both w and b (F1 uses only w)");
        };
        cfg.init = Init::Point(ParamPoint::two(p.w, b));
    }
    if let Some(seed) = args.seed {
        cfg.init = Init::Random { seed };
    }
    cfg.tolerance = args.tolerance.unwrap_or(cfg.tolerance);
    cfg.max_epochs = args.max_epochs.unwrap_or(cfg.max_epochs);
    cfg.f3_gradient = args.f3_gradient.unwrap_or(cfg.f3_gradient);

    let table = reproduce_table2(&cfg)?;
    let body = match Format::choose(args.format, args.output.as_deref()) {
        Format::Json => json(&Report {
            config: &table.config,
            cells: table
                .cells
                .iter()
                .map(|c| CellSummary {
                    method: c.method,
                    objective: c.objective,
                    optimal: (&c.optimal).into(),
                    fixed: (&c.fixed).into(),
                    published: c.published,
                })
                .collect(),
        })?,
        Format::Csv => {
            let mut s = String::from(HEADER);
            s.push('\n');
            let epoch = |e: Option<usize>| e.map(|e| e.to_string()).unwrap_or_default();
            for c in &table.cells {
                let p = c.published;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    c.method,
                    c.objective,
                    epoch(c.optimal.converged_epoch),
                    c.optimal.epochs_run(),
                    num(c.optimal.final_loss),
                    epoch(c.fixed.converged_epoch),
                    c.fixed.epochs_run(),
                    num(c.fixed.final_loss),
                    p.optimal_epoch,
                    num(p.optimal_loss),
                    p.default_epoch,
                    num(p.default_loss),
                );
            }
            s
        }
    };
    write_output(args.output.as_deref(), &body)?;
    Ok(EXIT_OK)
}
