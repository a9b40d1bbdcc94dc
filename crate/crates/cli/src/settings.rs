//! Flat run configuration shared by `--config` files and the echoed config
//! written next to every trace.

use std::path::Path;

use anyhow::{bail, Context};
use gdlab_core::harness::{HyperPolicy, Init, RunConfig, DEFAULT_MAX_EPOCHS, DEFAULT_TOLERANCE};
use gdlab_core::{
    F3Gradient, HyperParams, HyperTarget, Method, ObjectiveId, ParamPoint, RegressionSample,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_X: f64 = 0.3;
pub const DEFAULT_Y: f64 = 0.23;
pub const DEFAULT_INIT: (f64, f64) = (0.3, 0.3);

/// Every key is optional in a config file; a resolved echo fills all keys
/// that apply to the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveId>,
    /// `fixed` or `optimal`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimize: Option<Vec<HyperTarget>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f3_gradient: Option<F3Gradient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Fixed,
    Optimal,
}

#[derive(Deserialize)]
struct Artifact {
    config: RunSettings,
}

impl RunSettings {
    /// Reads a TOML config, or the `config` member of a JSON run artifact.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let settings = if is_json {
            serde_json::from_str::<Artifact>(&text)
                .with_context(|| format!("parsing run artifact {}", path.display()))?
                .config
        } else {
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        };
        Ok(settings)
    }

    /// Field-wise merge; values in `self` win.
    pub fn or(self, fallback: RunSettings) -> RunSettings {
        let init_given = self.init_w.is_some() || self.init_b.is_some() || self.seed.is_some();
        RunSettings {
            method: self.method.or(fallback.method),
            objective: self.objective.or(fallback.objective),
            policy: self.policy.or(fallback.policy),
            optimize: self.optimize.or(fallback.optimize),
            eta: self.eta.or(fallback.eta),
            alpha: self.alpha.or(fallback.alpha),
            beta: self.beta.or(fallback.beta),
            epsilon: self.epsilon.or(fallback.epsilon),
            // The initialization is taken as a unit so a flag seed replaces a
            // config point and vice versa.
            init_w: if init_given {
                self.init_w
            } else {
                fallback.init_w
            },
            init_b: if init_given {
                self.init_b
            } else {
                fallback.init_b
            },
            seed: if init_given { self.seed } else { fallback.seed },
            x: self.x.or(fallback.x),
            y: self.y.or(fallback.y),
            f3_gradient: self.f3_gradient.or(fallback.f3_gradient),
            max_epochs: self.max_epochs.or(fallback.max_epochs),
            tolerance: self.tolerance.or(fallback.tolerance),
        }
    }

    /// Applies defaults and builds a validated run configuration together with
    /// its fully resolved echo.
    pub fn resolve(&self) -> anyhow::Result<(RunConfig, RunSettings)> {
        let Some(method) = self.method else {
            bail!("missing --method")
        };
        let Some(objective) = self.objective else {
            bail!("missing --objective")
        };
        let base = HyperParams::default();
        let hyper = HyperParams {
            eta: self.eta.unwrap_or(base.eta),
            alpha: self.alpha.unwrap_or(base.alpha),
            beta: self.beta.unwrap_or(base.beta),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
        };
        let policy_name = self.policy.unwrap_or(PolicyName::Fixed);
        let policy = match policy_name {
            PolicyName::Fixed => {
                if self.optimize.as_ref().is_some_and(|o| !o.is_empty()) {
                    bail!("--optimize requires --policy optimal");
                }
                HyperPolicy::fixed(hyper)
            }
            PolicyName::Optimal => match &self.optimize {
                Some(targets) => HyperPolicy::optimal(hyper, targets.iter().copied()),
                None => HyperPolicy::optimal_all(method, hyper),
            },
        };

        let arity = objective.arity();
        let init = match (self.seed, self.init_w, self.init_b) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                bail!("give either an initial point or a seed, not both")
            }
            (Some(seed), None, None) => Init::Random { seed },
            (None, None, None) => Init::Point(ParamPoint::new(
                DEFAULT_INIT.0,
                (arity == 2).then_some(DEFAULT_INIT.1),
            )),
            (None, None, Some(_)) => bail!("initial point is missing w"),
            (None, Some(w), b) => Init::Point(ParamPoint::new(w, b)),
        };
        init.resolve(arity)?;

        let mut cfg = RunConfig::new(method, objective, init, policy)
            .with_f3_gradient(self.f3_gradient.unwrap_or_default())
            .with_max_epochs(self.max_epochs.unwrap_or(DEFAULT_MAX_EPOCHS))
            .with_tolerance(self.tolerance.unwrap_or(DEFAULT_TOLERANCE));
        let (x, y) = (self.x.unwrap_or(DEFAULT_X), self.y.unwrap_or(DEFAULT_Y));
        if objective.needs_sample() {
            cfg = cfg.with_sample(RegressionSample::new(x, y));
        }
        cfg.validate()?;

        let (init_w, init_b, seed) = match init {
            Init::Point(p) => (Some(p.w), p.b, None),
            Init::Random { seed } => (None, None, Some(seed)),
        };
        let echo = RunSettings {
            method: Some(method),
            objective: Some(objective),
            policy: Some(policy_name),
            optimize: (policy_name == PolicyName::Optimal).then(|| cfg.policy.optimize.clone()),
            eta: Some(hyper.eta),
            alpha: Some(hyper.alpha),
            beta: Some(hyper.beta),
            epsilon: Some(hyper.epsilon),
            init_w,
            init_b,
            seed,
            x: objective.needs_sample().then_some(x),
            y: objective.needs_sample().then_some(y),
            f3_gradient: Some(cfg.f3_gradient),
            max_epochs: Some(cfg.max_epochs),
            tolerance: Some(cfg.tolerance),
        };
        Ok((cfg, echo))
    }
}
