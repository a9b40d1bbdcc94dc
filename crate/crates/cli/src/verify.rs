use std::path::PathBuf;

use clap::{Args, ValueEnum};
use gdlab_core::verify::{
    gd_argmin_checks, gd_pointwise_checks, gradient_checks, one_step_checks, pointwise_checks,
    reduction_checks, CheckReport,
};
use gdlab_core::Method;
use serde::Serialize;

use crate::output::{json, write_output};
use crate::{EXIT_CHECK_FAILED, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Gradients,
    Argmin,
    OneStep,
    Reductions,
    All,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Scope::All)]
    scope: Scope,
    /// Restrict argmin and one-step checks to one method.
    #[arg(long)]
    method: Option<Method>,
    /// Samples per check. Defaults: 1000 for gradients and one-step, 100 for
    /// argmin and reductions.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON summary here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a> {
    scope: Scope,
    method: Option<Method>,
    seed: u64,
    passed: bool,
    checks: &'a [CheckReport],
}

pub fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<u8> {
    let wants = |s: Scope| args.scope == Scope::All || args.scope == s;
    let n = |default: usize| args.samples.unwrap_or(default);
    let mut checks = Vec::new();
    if wants(Scope::Gradients) {
        checks.extend(gradient_checks(n(1000), args.seed)?);
    }
    if wants(Scope::Argmin) {
        if args.method.is_none_or(|m| m == Method::Gd) {
            checks.extend(gd_argmin_checks()?);
            checks.extend(gd_pointwise_checks(n(100), args.seed)?);
        }
        checks.extend(pointwise_checks(n(100), args.seed, args.method)?);
    }
    if wants(Scope::OneStep) {
        checks.extend(one_step_checks(n(1000), args.seed, args.method)?);
    }
    if wants(Scope::Reductions) {
        checks.extend(reduction_checks(n(100), args.seed)?);
    }
    let passed = checks.iter().all(|c| c.passed);
    let summary = Summary {
        scope: args.scope,
        method: args.method,
        seed: args.seed,
        passed,
        checks: &checks,
    };
    write_output(args.output.as_deref(), &json(&summary)?)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
