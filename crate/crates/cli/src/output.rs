use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use gdlab_core::harness::Trace;
use serde::Serialize;

use crate::settings::RunSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Explicit choice, else `.json` extension, else CSV.
    pub fn choose(explicit: Option<Format>, output: Option<&Path>) -> Format {
        explicit.unwrap_or_else(|| {
            let json = output
                .and_then(Path::extension)
                .is_some_and(|e| e.eq_ignore_ascii_case("json"));
            if json {
                Format::Json
            } else {
                Format::Csv
            }
        })
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const TRACE_HEADER: &str = "epoch,loss,w,b,eta,alpha,beta,eta_flag,alpha_flag,beta_flag";

pub fn trace_csv(trace: &Trace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let h = r.hyper_used;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            num(r.loss),
            num(r.params.w),
            opt_num(r.params.b),
            num(h.eta),
            num(h.alpha),
            num(h.beta),
            r.flags.eta.as_str(),
            r.flags.alpha.as_str(),
            r.flags.beta.as_str(),
        );
    }
    out
}

#[derive(Serialize)]
struct RunArtifact<'a> {
    config: &'a RunSettings,
    trace: &'a Trace,
}

pub fn trace_json(config: &RunSettings, trace: &Trace) -> anyhow::Result<String> {
    json(&RunArtifact { config, trace })
}

pub fn json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or standard output when absent.
pub fn write_output(path: Option<&Path>, body: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
