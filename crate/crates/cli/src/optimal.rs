use std::fmt::Write as _;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use gdlab_core::hyperopt::{optimal_value, relevant_targets};
use gdlab_core::{
    F3Gradient, FeasibleValue, HyperParams, HyperTarget, Method, Objective, ObjectiveId,
    OptimizerState, ParamPoint,
};
use serde::Serialize;

use crate::output::{json, write_output};
use crate::settings::{DEFAULT_X, DEFAULT_Y};
use crate::EXIT_OK;

#[derive(Args)]
pub struct OptimalArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    objective: ObjectiveId,
    /// Hyperparameters to evaluate (comma separated). Defaults to every
    /// hyperparameter the method uses.
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<HyperTarget>>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Velocity for every coordinate.
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    vw: Option<f64>,
    #[arg(long)]
    vb: Option<f64>,
    /// AdaGrad accumulator for every coordinate.
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    phi_w: Option<f64>,
    #[arg(long)]
    phi_b: Option<f64>,
    /// RMSProp accumulator for every coordinate.
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    u_w: Option<f64>,
    #[arg(long)]
    u_b: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_X)]
    x: f64,
    #[arg(long, default_value_t = DEFAULT_Y)]
    y: f64,
    #[arg(long, default_value_t = HyperParams::default().eta)]
    eta: f64,
    #[arg(long, default_value_t = HyperParams::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = HyperParams::default().beta)]
    beta: f64,
    #[arg(long, default_value_t = HyperParams::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = F3Gradient::Exact)]
    f3_gradient: F3Gradient,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    format: TableFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Text,
    Json,
}

#[derive(Serialize)]
struct Row {
    target: HyperTarget,
    #[serde(flatten)]
    value: FeasibleValue,
}

/// Per-coordinate state field: a shared value, overridable per coordinate.
fn coords(
    arity: usize,
    name: &str,
    both: Option<f64>,
    w: Option<f64>,
    b: Option<f64>,
) -> anyhow::Result<Option<ParamPoint>> {
    if arity == 1 && b.is_some() {
        bail!("--{name}-b given but the objective has no b coordinate");
    }
    let w = w.or(both);
    let b = b.or(both);
    Ok(match (w, arity) {
        (None, _) => None,
        (Some(w), 1) => Some(ParamPoint::one(w)),
        (Some(w), _) => b.map(|b| ParamPoint::two(w, b)),
    })
}

fn require(
    point: Option<ParamPoint>,
    what: &str,
    target: HyperTarget,
) -> anyhow::Result<ParamPoint> {
    point.with_context(|| format!("{target}* needs {what} for every coordinate"))
}

pub fn cmd_optimal(args: &OptimalArgs) -> anyhow::Result<u8> {
    let objective = match args.objective {
        ObjectiveId::F3 => Objective::f3(args.x, args.y)?.with_f3_gradient(args.f3_gradient),
        id => Objective::new(id, None)?,
    };
    let arity = objective.arity();
    if arity == 1 && args.b.is_some() {
        bail!("--b given but the objective has no b coordinate");
    }
    let params = match (args.w, args.b, arity) {
        (Some(w), _, 1) => Some(ParamPoint::one(w)),
        (Some(w), Some(b), _) => Some(ParamPoint::two(w, b)),
        _ => None,
    };
    let velocity = coords(arity, "v", args.v, args.vw, args.vb)?;
    let phi = coords(arity, "phi", args.phi, args.phi_w, args.phi_b)?;
    let u = coords(arity, "u", args.u, args.u_w, args.u_b)?;
    let hyper = HyperParams {
        eta: args.eta,
        alpha: args.alpha,
        beta: args.beta,
        epsilon: args.epsilon,
    };

    let targets = match &args.target {
        Some(t) => t.clone(),
        None => relevant_targets(args.method).to_vec(),
    };
    let mut rows = Vec::new();
    for &target in &targets {
        if !target.applies_to(args.method) {
            bail!("{} has no hyperparameter {target}", args.method);
        }
        let zeros = ParamPoint::zeros(arity);
        let mut state = OptimizerState::new(zeros);
        if args.method != Method::Gd {
            state.params = require(params, "--w/--b", target)?;
        }
        match args.method {
            Method::Gd => {}
            Method::Momentum => state.velocity = require(velocity, "--v (or --vw/--vb)", target)?,
            Method::AdaGrad => {
                state.grad_sq_sum = require(phi, "--phi (or --phi-w/--phi-b)", target)?
            }
            Method::RmsProp => state.weighted_grad_sq = require(u, "--u (or --u-w/--u-b)", target)?,
        }
        let value = optimal_value(args.method, target, &objective, &state, &hyper)?
            .expect("target applies to method");
        rows.push(Row { target, value });
    }

    let body = match args.format {
        TableFormat::Json => json(&rows)?,
        TableFormat::Text => {
            let mut s = String::from("target value raw feasible defined\n");
            for r in &rows {
                let v = r.value;
                let _ = writeln!(
                    s,
                    "{} {} {} {} {}",
                    r.target, v.value, v.raw, v.feasible, v.defined
                );
            }
            s
        }
    };
    write_output(None, &body)?;
    Ok(EXIT_OK)
}
