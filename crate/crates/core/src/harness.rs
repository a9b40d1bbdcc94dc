//! Training runs under fixed or per-epoch optimal hyperparameters, and the
//! optimal-vs-default comparison matrix.
//!
//! Epoch 1 is the initial state; epoch `i + 1` is the state after the `i`-th
//! update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperopt::{optimal_value, relevant_targets, HyperTarget};
use crate::objective::{F3Gradient, Objective, ObjectiveId, ParamPoint, RegressionSample};
use crate::optimizer::{step, HyperParams, Method, OptimizerState};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_EPOCHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fixed,
    OptimalPerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPolicy {
    pub kind: PolicyKind,
    /// Used as-is by `Fixed`; the starting point and fallback source for
    /// `OptimalPerEpoch`.
    pub base: HyperParams,
    /// Hyperparameters replaced by their closed form every epoch.
    pub optimize: Vec<HyperTarget>,
}

impl HyperPolicy {
    pub fn fixed(base: HyperParams) -> Self {
        Self {
            kind: PolicyKind::Fixed,
            base,
            optimize: Vec::new(),
        }
    }

    pub fn optimal(base: HyperParams, optimize: impl IntoIterator<Item = HyperTarget>) -> Self {
        let mut optimize: Vec<_> = optimize.into_iter().collect();
        optimize.sort();
        optimize.dedup();
        Self {
            kind: PolicyKind::OptimalPerEpoch,
            base,
            optimize,
        }
    }

    /// Optimize every hyperparameter `method` has a closed form for.
    pub fn optimal_all(method: Method, base: HyperParams) -> Self {
        Self::optimal(base, relevant_targets(method).iter().copied())
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        self.base.validate()?;
        match (self.kind, self.optimize.is_empty()) {
            (PolicyKind::Fixed, false) => {
                return Err(Error::InvalidConfig(
                    "a fixed policy cannot optimize hyperparameters".into(),
                ))
            }
            (PolicyKind::OptimalPerEpoch, true) => {
                return Err(Error::InvalidConfig(
                    "an optimal policy needs at least one hyperparameter to optimize".into(),
                ))
            }
            _ => {}
        }
        if let Some(t) = self.optimize.iter().find(|t| !t.applies_to(method)) {
            return Err(Error::InvalidConfig(format!(
                "{method} has no hyperparameter {t}"
            )));
        }
        Ok(())
    }
}

/// Where a hyperparameter value in an epoch record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperFlag {
    /// Epoch 1: no update has happened yet.
    Initial,
    /// Taken from the policy's base values.
    Fixed,
    /// Closed form, feasible, used unchanged.
    ClosedForm,
    /// Closed form outside `[0, 1]`, clamped.
    Clamped,
    /// Closed form undefined; the previous epoch's value was kept.
    Fallback,
}

impl HyperFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            HyperFlag::Initial => "initial",
            HyperFlag::Fixed => "fixed",
            HyperFlag::ClosedForm => "closed_form",
            HyperFlag::Clamped => "clamped",
            HyperFlag::Fallback => "fallback",
        }
    }
}

impl std::str::FromStr for HyperFlag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "initial" => HyperFlag::Initial,
            "fixed" => HyperFlag::Fixed,
            "closed_form" => HyperFlag::ClosedForm,
            "clamped" => HyperFlag::Clamped,
            "fallback" => HyperFlag::Fallback,
            other => return Err(format!("unknown hyperparameter flag `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperFlags {
    pub eta: HyperFlag,
    pub alpha: HyperFlag,
    pub beta: HyperFlag,
}

impl HyperFlags {
    fn all(flag: HyperFlag) -> Self {
        Self {
            eta: flag,
            alpha: flag,
            beta: flag,
        }
    }

    pub fn get(&self, target: HyperTarget) -> HyperFlag {
        match target {
            HyperTarget::Eta => self.eta,
            HyperTarget::Alpha => self.alpha,
            HyperTarget::Beta => self.beta,
        }
    }

    fn set(&mut self, target: HyperTarget, flag: HyperFlag) {
        match target {
            HyperTarget::Eta => self.eta = flag,
            HyperTarget::Alpha => self.alpha = flag,
            HyperTarget::Beta => self.beta = flag,
        }
    }
}

/// One row of a trace. `hyper_used` holds the values applied in the update
/// that produced this epoch (the base values at epoch 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub params: ParamPoint,
    pub loss: f64,
    pub hyper_used: HyperParams,
    pub flags: HyperFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Point(ParamPoint),
    /// Parameters drawn uniformly from `[0, 1)` with a seeded ChaCha8 stream.
    Random {
        seed: u64,
    },
}

impl Init {
    pub fn resolve(&self, arity: usize) -> Result<ParamPoint> {
        match *self {
            Init::Point(p) => {
                if p.arity() != arity {
                    return Err(Error::InvalidConfig(format!(
                        "initial point has {} coordinate(s), objective takes {arity}",
                        p.arity()
                    )));
                }
                if !p.is_finite() {
                    return Err(Error::NonFinite {
                        what: "initial point",
                    });
                }
                Ok(p)
            }
            Init::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = rng.random::<f64>();
                Ok(if arity == 1 {
                    ParamPoint::one(w)
                } else {
                    ParamPoint::two(w, rng.random::<f64>())
                })
            }
        }
    }

    /// Same initialization restricted to `arity` coordinates (drops `b` for
    /// one-parameter objectives).
    fn for_arity(&self, arity: usize) -> Init {
        match *self {
            Init::Point(p) if arity == 1 => Init::Point(ParamPoint::one(p.w)),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub objective: ObjectiveId,
    pub sample: Option<RegressionSample>,
    #[serde(default)]
    pub f3_gradient: F3Gradient,
    pub init: Init,
    pub policy: HyperPolicy,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl RunConfig {
    pub fn new(method: Method, objective: ObjectiveId, init: Init, policy: HyperPolicy) -> Self {
        Self {
            method,
            objective,
            sample: None,
            f3_gradient: F3Gradient::default(),
            init,
            policy,
            max_epochs: DEFAULT_MAX_EPOCHS,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_sample(mut self, sample: RegressionSample) -> Self {
        self.sample = Some(sample);
        self
    }

    pub fn with_f3_gradient(mut self, convention: F3Gradient) -> Self {
        self.f3_gradient = convention;
        self
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn objective(&self) -> Result<Objective> {
        Ok(Objective::new(self.objective, self.sample)?.with_f3_gradient(self.f3_gradient))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 2 {
            return Err(Error::InvalidConfig(format!(
                "max_epochs must be >= 2, got {}",
                self.max_epochs
            )));
        }
        // NaN fails this comparison too
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        self.policy.validate(self.method)?;
        self.objective()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<EpochRecord>,
    /// Smallest epoch whose loss is within tolerance.
    pub converged_epoch: Option<usize>,
    pub final_loss: f64,
    /// The run stopped because an update produced non-finite values.
    pub diverged: bool,
}

impl Trace {
    pub fn epochs_run(&self) -> usize {
        self.records.last().map_or(0, |r| r.epoch)
    }
}

/// Smallest recorded epoch with `loss <= tolerance`.
pub fn detect_convergence(records: &[EpochRecord], tolerance: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.loss <= tolerance)
        .map(|r| r.epoch)
}

/// Values for the next update under `policy`, with their provenance.
fn resolve_hyper(
    method: Method,
    policy: &HyperPolicy,
    objective: &Objective,
    state: &OptimizerState,
    previous: &HyperParams,
) -> Result<(HyperParams, HyperFlags)> {
    let mut flags = HyperFlags::all(HyperFlag::Fixed);
    if policy.kind == PolicyKind::Fixed {
        return Ok((policy.base, flags));
    }
    let mut h = *previous;
    for &target in relevant_targets(method) {
        if !policy.optimize.contains(&target) {
            h.set(target, policy.base.get(target));
            continue;
        }
        let fv = optimal_value(method, target, objective, state, &h)?
            .expect("relevant targets always have a closed form");
        let flag = match (fv.defined, fv.feasible) {
            (true, true) => HyperFlag::ClosedForm,
            (true, false) => HyperFlag::Clamped,
            (false, _) => HyperFlag::Fallback,
        };
        if let Some(v) = fv.usable() {
            h.set(target, v);
        }
        flags.set(target, flag);
    }
    Ok((h, flags))
}

/// Run one training trajectory.
pub fn run_training(cfg: &RunConfig) -> Result<Trace> {
    cfg.validate()?;
    let objective = cfg.objective()?;
    let params = cfg.init.resolve(objective.arity())?;
    let mut state = OptimizerState::new(params);
    let mut current = cfg.policy.base;

    let loss = objective.evaluate(&params)?;
    let mut records = vec![EpochRecord {
        epoch: 1,
        params,
        loss,
        hyper_used: current,
        flags: HyperFlags::all(HyperFlag::Initial),
    }];
    let mut diverged = false;

    if loss > cfg.tolerance {
        for _ in 2..=cfg.max_epochs {
            let (h, flags) = resolve_hyper(cfg.method, &cfg.policy, &objective, &state, &current)?;
            let next = match step(cfg.method, &state, &h, &objective) {
                Ok(next) => next,
                Err(Error::NonFinite { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let loss = objective.evaluate(&next.params)?;
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            state = next;
            current = h;
            records.push(EpochRecord {
                epoch: state.epoch,
                params: state.params,
                loss,
                hyper_used: h,
                flags,
            });
            if loss <= cfg.tolerance {
                break;
            }
        }
    }

    let converged_epoch = detect_convergence(&records, cfg.tolerance);
    let final_loss = records.last().map_or(f64::NAN, |r| r.loss);
    Ok(Trace {
        records,
        converged_epoch,
        final_loss,
        diverged,
    })
}

/// Published convergence results for one method/objective cell, kept for
/// side-by-side display. Not produced by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedCell {
    pub optimal_epoch: usize,
    pub optimal_loss: f64,
    pub default_epoch: usize,
    pub default_loss: f64,
}

const fn published(
    optimal_epoch: usize,
    optimal_loss: f64,
    default_epoch: usize,
    default_loss: f64,
) -> PublishedCell {
    PublishedCell {
        optimal_epoch,
        optimal_loss,
        default_epoch,
        default_loss,
    }
}

/// Published optimal-vs-default results, rows in [`Method::ALL`] order,
/// columns in [`ObjectiveId::ALL`] order.
pub const PUBLISHED_TABLE2: [[PublishedCell; 3]; 4] = [
    [
        published(2, 0.0, 63, 2e-13),
        published(2, 0.0, 58, 2e-13),
        published(2, 0.0, 127, 0.0),
    ],
    [
        published(2, 0.0, 32, 2e-13),
        published(2, 0.0, 26, 2e-13),
        published(4, 4e-14, 205, 2e-13),
    ],
    [
        published(2, 0.0, 123, 2e-13),
        published(2, 0.0, 461, 2e-13),
        published(2, 0.0, 311, 2e-13),
    ],
    [
        published(2, 0.0, 48, 0.0025),
        published(2, 0.0, 56, 0.01),
        published(2, 6e-33, 13, 5e-9),
    ],
];

pub fn published_cell(method: Method, objective: ObjectiveId) -> PublishedCell {
    let row = Method::ALL
        .iter()
        .position(|&m| m == method)
        .expect("known method");
    let col = ObjectiveId::ALL
        .iter()
        .position(|&o| o == objective)
        .expect("known objective");
    PUBLISHED_TABLE2[row][col]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Config {
    pub defaults: HyperParams,
    pub sample: RegressionSample,
    /// For F1 only `w` of a point initialization is used.
    pub init: Init,
    pub tolerance: f64,
    pub max_epochs: usize,
    pub f3_gradient: F3Gradient,
}

impl Default for Table2Config {
    /// Defaults `η = 0.1, α = 0.5, β = 0.5`, sample `x = 0.3, y = 0.1·x + 0.2`,
    /// start `w = 0.3, b = 0.3`.
    fn default() -> Self {
        Self {
            defaults: HyperParams::default(),
            sample: RegressionSample::new(0.3, 0.1 * 0.3 + 0.2),
            init: Init::Point(ParamPoint::two(0.3, 0.3)),
            tolerance: DEFAULT_TOLERANCE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            f3_gradient: F3Gradient::default(),
        }
    }
}

impl Table2Config {
    /// Run configuration for one cell and arm.
    pub fn run_config(&self, method: Method, objective: ObjectiveId, optimal: bool) -> RunConfig {
        let policy = if optimal {
            HyperPolicy::optimal_all(method, self.defaults)
        } else {
            HyperPolicy::fixed(self.defaults)
        };
        let mut cfg = RunConfig::new(
            method,
            objective,
            self.init.for_arity(objective.arity()),
            policy,
        )
        .with_f3_gradient(self.f3_gradient)
        .with_max_epochs(self.max_epochs)
        .with_tolerance(self.tolerance);
        if objective.needs_sample() {
            cfg = cfg.with_sample(self.sample);
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub method: Method,
    pub objective: ObjectiveId,
    pub optimal: Trace,
    pub fixed: Trace,
    pub published: PublishedCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2 {
    pub config: Table2Config,
    /// Method-major, objective-minor.
    pub cells: Vec<Table2Cell>,
}

impl Table2 {
    pub fn cell(&self, method: Method, objective: ObjectiveId) -> &Table2Cell {
        self.cells
            .iter()
            .find(|c| c.method == method && c.objective == objective)
            .expect("every cell is populated")
    }
}

/// Run both arms for every method/objective pair. Cells run in parallel; the
/// result order is fixed.
pub fn reproduce_table2(cfg: &Table2Config) -> Result<Table2> {
    let pairs: Vec<(Method, ObjectiveId)> = Method::ALL
        .iter()
        .flat_map(|&m| ObjectiveId::ALL.iter().map(move |&o| (m, o)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(method, objective)| {
            Ok(Table2Cell {
                method,
                objective,
                optimal: run_training(&cfg.run_config(method, objective, true))?,
                fixed: run_training(&cfg.run_config(method, objective, false))?,
                published: published_cell(method, objective),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table2 {
        config: cfg.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, loss: f64) -> EpochRecord {
        EpochRecord {
            epoch,
            params: ParamPoint::one(0.0),
            loss,
            hyper_used: HyperParams::default(),
            flags: HyperFlags::all(HyperFlag::Fixed),
        }
    }

    #[test]
    fn convergence_detection() {
        let r = |ls: &[f64]| -> Vec<EpochRecord> {
            ls.iter()
                .enumerate()
                .map(|(i, &l)| record(i + 1, l))
                .collect()
        };
        assert_eq!(detect_convergence(&r(&[0.04, 0.0]), 1e-12), Some(2));
        assert_eq!(detect_convergence(&r(&[0.04, 0.02]), 1e-12), None);
        assert_eq!(detect_convergence(&r(&[0.0, 0.5, 0.0]), 1e-12), Some(1));
    }

    fn f1_run(policy: HyperPolicy, w: f64) -> RunConfig {
        RunConfig::new(
            Method::Gd,
            ObjectiveId::F1,
            Init::Point(ParamPoint::one(w)),
            policy,
        )
    }

    #[test]
    fn optimal_gd_converges_at_epoch_two() {
        let cfg = f1_run(
            HyperPolicy::optimal_all(Method::Gd, HyperParams::default()),
            0.3,
        );
        let t = run_training(&cfg).unwrap();
        assert_eq!(t.converged_epoch, Some(2));
        assert_eq!(t.final_loss, 0.0);
        assert_eq!(t.records.len(), 2);
        assert_eq!(t.records[0].flags, HyperFlags::all(HyperFlag::Initial));
        assert_eq!(t.records[1].flags.eta, HyperFlag::ClosedForm);
        assert_eq!(t.records[1].hyper_used.eta, 0.5);
    }

    #[test]
    fn start_at_minimum_converges_at_epoch_one() {
        for policy in [
            HyperPolicy::fixed(HyperParams::default()),
            HyperPolicy::optimal_all(Method::Gd, HyperParams::default()),
        ] {
            let t = run_training(&f1_run(policy, 0.5)).unwrap();
            assert_eq!(t.converged_epoch, Some(1));
            assert_eq!(t.records.len(), 1);
        }
    }

    #[test]
    fn momentum_alpha_falls_back_without_velocity() {
        let cfg = RunConfig::new(
            Method::Momentum,
            ObjectiveId::F1,
            Init::Point(ParamPoint::one(0.3)),
            HyperPolicy::optimal_all(Method::Momentum, HyperParams::default()),
        );
        let t = run_training(&cfg).unwrap();
        let r = &t.records[1];
        assert_eq!(r.flags.alpha, HyperFlag::Fallback);
        assert_eq!(r.hyper_used.alpha, 0.5);
        assert_eq!(r.flags.eta, HyperFlag::ClosedForm);
        assert_eq!(r.flags.beta, HyperFlag::Fixed);
        assert_eq!(t.converged_epoch, Some(2));
    }

    #[test]
    fn clamped_rate_is_flagged() {
        // AdaGrad on F2 from (1, 1): φ' = 16 per coordinate, η* = 1 exactly;
        // push it over with a larger start.
        let cfg = RunConfig::new(
            Method::AdaGrad,
            ObjectiveId::F2,
            Init::Point(ParamPoint::two(2.0, 2.0)),
            HyperPolicy::optimal_all(Method::AdaGrad, HyperParams::default()),
        );
        let t = run_training(&cfg).unwrap();
        assert_eq!(t.records[1].flags.eta, HyperFlag::Clamped);
        assert_eq!(t.records[1].hyper_used.eta, 1.0);
        assert!(t.records[1].loss < t.records[0].loss);
    }

    #[test]
    fn divergence_truncates_trace() {
        let cfg = f1_run(
            HyperPolicy::fixed(HyperParams::default().with_eta(1e155)),
            0.3,
        );
        let t = run_training(&cfg).unwrap();
        assert!(t.diverged);
        assert_eq!(t.converged_epoch, None);
        assert!(t.records.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn config_validation() {
        let base = HyperParams::default();
        let ok = f1_run(HyperPolicy::fixed(base), 0.3);
        assert!(ok.validate().is_ok());
        assert!(ok.clone().with_max_epochs(1).validate().is_err());
        assert!(ok.clone().with_tolerance(0.0).validate().is_err());
        assert!(ok.clone().with_tolerance(f64::NAN).validate().is_err());
        let mut bad = ok.clone();
        bad.policy.optimize = vec![HyperTarget::Eta];
        assert!(bad.validate().is_err());
        let bad = f1_run(HyperPolicy::optimal(base, []), 0.3);
        assert!(bad.validate().is_err());
        let bad = f1_run(HyperPolicy::optimal(base, [HyperTarget::Alpha]), 0.3);
        assert!(bad.validate().is_err());
        let bad = RunConfig::new(
            Method::Gd,
            ObjectiveId::F3,
            Init::Random { seed: 1 },
            HyperPolicy::fixed(base),
        );
        assert!(bad.validate().is_err());
        let bad = f1_run(HyperPolicy::fixed(base), 0.3);
        let bad = RunConfig {
            init: Init::Point(ParamPoint::two(0.1, 0.1)),
            ..bad
        };
        assert!(run_training(&bad).is_err());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let cfg = RunConfig::new(
            Method::RmsProp,
            ObjectiveId::F2,
            Init::Random { seed: 42 },
            HyperPolicy::fixed(HyperParams::default()),
        )
        .with_max_epochs(50);
        let a = run_training(&cfg).unwrap();
        let b = run_training(&cfg).unwrap();
        assert_eq!(a, b);
        let other = RunConfig {
            init: Init::Random { seed: 43 },
            ..cfg
        };
        assert_ne!(
            a.records[0].params,
            run_training(&other).unwrap().records[0].params
        );
    }

    #[test]
    fn published_lookup() {
        let c = published_cell(Method::Momentum, ObjectiveId::F3);
        assert_eq!((c.optimal_epoch, c.default_epoch), (4, 205));
        let c = published_cell(Method::RmsProp, ObjectiveId::F2);
        assert_eq!(c.default_loss, 0.01);
    }
}
