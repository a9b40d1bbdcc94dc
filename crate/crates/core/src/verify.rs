//! Seeded cross-checks of the closed forms against the numeric oracles.
//!
//! Each check returns a [`CheckReport`] with the worst deviation observed;
//! the caller decides what to do with a failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analyzer::{argmin_hyper, finite_diff_gradient, pointwise_argmin_hyper, SamplingSpec};
use crate::error::Result;
use crate::hyperopt::{
    optimal_lr_for_scales, optimal_lr_gd, optimal_lr_momentum, optimal_value, HyperTarget,
};
use crate::objective::{F3Gradient, Objective, ObjectiveId, ParamPoint};
use crate::optimizer::{step, HyperParams, Method, OptimizerState};

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-6;
pub const ARGMIN_TOLERANCE: f64 = 1e-6;
pub const ONE_STEP_TOLERANCE: f64 = 1e-20;
/// Share of sampled states whose closed form must be defined.
pub const MIN_DEFINED_SHARE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// States or points drawn.
    pub samples: usize,
    /// Draws actually compared (the rest hit an undefined closed form).
    pub compared: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(
        name: impl Into<String>,
        samples: usize,
        compared: usize,
        max_deviation: f64,
        tolerance: f64,
    ) -> Self {
        let enough = compared as f64 >= MIN_DEFINED_SHARE * samples as f64;
        Self {
            name: name.into(),
            samples,
            compared,
            max_deviation,
            tolerance,
            passed: enough && max_deviation <= tolerance,
        }
    }
}

/// Draws optimizer states: parameters in `[0, 1]²`, velocities in
/// `[−0.5, 0.5]`, accumulators in `(0, 1]`, and for F3 a sample with
/// `x ∈ [0.2, 2]`, `y ∈ [0, 1]`.
pub struct StateSampler {
    rng: ChaCha8Rng,
}

impl StateSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.random()
    }

    fn open_unit(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    pub fn objective(&mut self, id: ObjectiveId, convention: F3Gradient) -> Objective {
        match id {
            ObjectiveId::F1 => Objective::f1(),
            ObjectiveId::F2 => Objective::f2(),
            ObjectiveId::F3 => {
                let x = self.rng.random_range(0.2..2.0);
                let y = self.unit();
                Objective::f3(x, y)
                    .expect("finite sample")
                    .with_f3_gradient(convention)
            }
        }
    }

    pub fn state(&mut self, arity: usize) -> OptimizerState {
        let pick = |s: &mut Self, f: &mut dyn FnMut(&mut Self) -> f64| {
            let w = f(s);
            ParamPoint::new(w, (arity == 2).then(|| f(s)))
        };
        let params = pick(self, &mut |s| s.unit());
        let velocity = pick(self, &mut |s| s.unit() - 0.5);
        let grad_sq_sum = pick(self, &mut |s| s.open_unit());
        let weighted_grad_sq = pick(self, &mut |s| s.open_unit());
        OptimizerState {
            params,
            velocity,
            grad_sq_sum,
            weighted_grad_sq,
            epoch: 1,
        }
    }

    /// A state whose RMSProp accumulator is shared by both coordinates.
    pub fn common_u_state(&mut self, arity: usize) -> OptimizerState {
        let mut st = self.state(arity);
        st.weighted_grad_sq = st.weighted_grad_sq.filled_like(st.weighted_grad_sq.w);
        st
    }
}

/// `(method, target)` pairs with a state-dependent closed form.
pub const STATE_DEPENDENT: [(Method, HyperTarget); 5] = [
    (Method::Momentum, HyperTarget::Eta),
    (Method::Momentum, HyperTarget::Alpha),
    (Method::AdaGrad, HyperTarget::Eta),
    (Method::RmsProp, HyperTarget::Eta),
    (Method::RmsProp, HyperTarget::Beta),
];

/// Objective and state for one draw of a state-dependent check. The
/// RMSProp `β` closed form needs a shared `u` and, for F3, `x = 1`.
fn draw(
    sampler: &mut StateSampler,
    method: Method,
    target: HyperTarget,
    id: ObjectiveId,
    convention: F3Gradient,
) -> (Objective, OptimizerState) {
    let arity = id.arity();
    if (method, target) == (Method::RmsProp, HyperTarget::Beta) {
        let obj = match id {
            ObjectiveId::F3 => Objective::f3(1.0, sampler.unit())
                .expect("finite sample")
                .with_f3_gradient(convention),
            _ => sampler.objective(id, convention),
        };
        (obj, sampler.common_u_state(arity))
    } else {
        (sampler.objective(id, convention), sampler.state(arity))
    }
}

/// The held-fixed hyperparameters for a draw: the other hyperparameter of
/// the pair is uniform in `[0, 1]`.
fn fixed_hyper(sampler: &mut StateSampler) -> HyperParams {
    HyperParams::default()
        .with_eta(sampler.unit())
        .with_alpha(sampler.unit())
        .with_beta(sampler.unit())
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Analytic vs central finite-difference gradients (exact convention).
pub fn gradient_checks(samples: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut sampler = StateSampler::new(seed);
    ObjectiveId::ALL
        .iter()
        .map(|&id| {
            let mut worst = 0.0f64;
            for _ in 0..samples {
                let obj = sampler.objective(id, F3Gradient::Exact);
                let p = sampler.state(id.arity()).params;
                let g = obj.gradient(&p)?;
                let fd = finite_diff_gradient(&obj, &p, FD_STEP)?;
                worst = worst.max(relative_error(g.d_w, fd.d_w));
                if let (Some(a), Some(n)) = (g.d_b, fd.d_b) {
                    worst = worst.max(relative_error(a, n));
                }
            }
            Ok(CheckReport::new(
                format!("gradient/{id}"),
                samples,
                samples,
                worst,
                GRADIENT_TOLERANCE,
            ))
        })
        .collect()
}

/// Uniform-average argmin of the GD learning rate against the closed form.
///
/// F3 runs at `x ∈ {0.3, 1, 2}` (with `y = 0.1x + 0.2`) under both gradient
/// conventions.
pub fn gd_argmin_checks() -> Result<Vec<CheckReport>> {
    let mut cases = vec![Objective::f1(), Objective::f2()];
    for convention in [F3Gradient::Halved, F3Gradient::Exact] {
        for x in [0.3, 1.0, 2.0] {
            cases.push(Objective::f3(x, 0.1 * x + 0.2)?.with_f3_gradient(convention));
        }
    }
    cases
        .iter()
        .map(|obj| {
            let template = OptimizerState::new(ParamPoint::zeros(obj.arity()));
            let r = argmin_hyper(
                Method::Gd,
                obj,
                HyperTarget::Eta,
                &HyperParams::default(),
                &SamplingSpec::default_for(obj),
                &template,
            )?;
            let expected = optimal_lr_gd(obj).value;
            let name = match obj.sample() {
                Some(s) => format!("argmin/gd/{}/x={}/{}", obj.id(), s.x, obj.f3_gradient()),
                None => format!("argmin/gd/{}", obj.id()),
            };
            Ok(CheckReport::new(
                name,
                1,
                1,
                (r.argmin - expected).abs(),
                ARGMIN_TOLERANCE,
            ))
        })
        .collect()
}

/// Per-state argmin of the GD learning rate agrees with the uniform-average
/// argmin (the GD optimum does not depend on the state).
pub fn gd_pointwise_checks(samples: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut sampler = StateSampler::new(seed);
    ObjectiveId::ALL
        .iter()
        .map(|&id| {
            let obj = match id {
                ObjectiveId::F3 => Objective::f3(0.3, 0.23)?,
                _ => sampler.objective(id, F3Gradient::Exact),
            };
            let template = OptimizerState::new(ParamPoint::zeros(id.arity()));
            let fixed = HyperParams::default();
            let avg = argmin_hyper(
                Method::Gd,
                &obj,
                HyperTarget::Eta,
                &fixed,
                &SamplingSpec::default_for(&obj),
                &template,
            )?;
            let mut worst = 0.0f64;
            for _ in 0..samples {
                let st = sampler.state(id.arity());
                let r = pointwise_argmin_hyper(Method::Gd, &obj, HyperTarget::Eta, &fixed, &st)?;
                worst = worst.max((r.argmin - avg.argmin).abs());
            }
            Ok(CheckReport::new(
                format!("argmin/gd-pointwise/{id}"),
                samples,
                samples,
                worst,
                ARGMIN_TOLERANCE,
            ))
        })
        .collect()
}

/// Per-state argmin over `[0, 1]` against the (clamped) closed form for every
/// state-dependent pair.
pub fn pointwise_checks(
    samples: usize,
    seed: u64,
    method: Option<Method>,
) -> Result<Vec<CheckReport>> {
    let mut sampler = StateSampler::new(seed);
    let mut reports = Vec::new();
    for (m, target) in STATE_DEPENDENT {
        if method.is_some_and(|only| only != m) {
            continue;
        }
        for id in ObjectiveId::ALL {
            let mut worst = 0.0f64;
            let mut compared = 0;
            for _ in 0..samples {
                let (obj, st) = draw(&mut sampler, m, target, id, F3Gradient::Exact);
                let fixed = fixed_hyper(&mut sampler);
                let fv =
                    optimal_value(m, target, &obj, &st, &fixed)?.expect("pair has a closed form");
                let Some(value) = fv.usable() else { continue };
                let r = pointwise_argmin_hyper(m, &obj, target, &fixed, &st)?;
                worst = worst.max((r.argmin - value).abs());
                compared += 1;
            }
            reports.push(CheckReport::new(
                format!("argmin/{m}/{target}/{id}"),
                samples,
                compared,
                worst,
                ARGMIN_TOLERANCE,
            ));
        }
    }
    Ok(reports)
}

/// Post-step loss after applying the raw closed form. RMSProp `β` is checked
/// at the learning rate that makes a random `β₀` optimal, so every draw is
/// feasible.
pub fn one_step_checks(
    samples: usize,
    seed: u64,
    method: Option<Method>,
) -> Result<Vec<CheckReport>> {
    let mut sampler = StateSampler::new(seed);
    let mut pairs = vec![(Method::Gd, HyperTarget::Eta)];
    pairs.extend(STATE_DEPENDENT);
    let mut reports = Vec::new();
    for (m, target) in pairs {
        if method.is_some_and(|only| only != m) {
            continue;
        }
        for id in ObjectiveId::ALL {
            let mut worst = 0.0f64;
            let mut compared = 0;
            for _ in 0..samples {
                let (obj, st) = draw(&mut sampler, m, target, id, F3Gradient::Exact);
                let mut h = fixed_hyper(&mut sampler);
                if (m, target) == (Method::RmsProp, HyperTarget::Beta) {
                    let eta =
                        optimal_value(m, HyperTarget::Eta, &obj, &st, &h)?.expect("closed form");
                    if !eta.defined {
                        continue;
                    }
                    h.eta = eta.raw;
                }
                let fv = optimal_value(m, target, &obj, &st, &h)?.expect("closed form");
                let usable = fv.defined && (target != HyperTarget::Beta || fv.feasible);
                if !usable {
                    continue;
                }
                h.set(target, fv.raw);
                let next = step(m, &st, &h, &obj)?;
                worst = worst.max(obj.evaluate(&next.params)?);
                compared += 1;
            }
            reports.push(CheckReport::new(
                format!("one-step/{m}/{target}/{id}"),
                samples,
                compared,
                worst,
                ONE_STEP_TOLERANCE,
            ));
        }
    }
    Ok(reports)
}

/// Special-case reductions to the plain GD learning rate, compared with `==`:
/// momentum with `α = 0`, and AdaGrad/RMSProp with unit divisors.
pub fn reduction_checks(samples: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut sampler = StateSampler::new(seed);
    let mut reports = Vec::new();
    for id in ObjectiveId::ALL {
        for convention in [F3Gradient::Exact, F3Gradient::Halved] {
            if id != ObjectiveId::F3 && convention == F3Gradient::Halved {
                continue;
            }
            let mut momentum_mismatch = 0usize;
            let mut scale_mismatch = 0usize;
            let mut compared = 0;
            for _ in 0..samples {
                let obj = sampler.objective(id, convention);
                let st = sampler.state(id.arity());
                let gd = optimal_lr_gd(&obj);
                let m = optimal_lr_momentum(&obj, &st, 0.0)?;
                if !m.defined {
                    continue;
                }
                compared += 1;
                if m.raw != gd.raw {
                    momentum_mismatch += 1;
                }
                let unit = optimal_lr_for_scales(&obj, 1.0, (id.arity() == 2).then_some(1.0));
                if unit.raw != gd.raw {
                    scale_mismatch += 1;
                }
            }
            let suffix = if id == ObjectiveId::F3 {
                format!("{id}/{convention}")
            } else {
                id.to_string()
            };
            reports.push(CheckReport::new(
                format!("reduction/momentum-alpha0/{suffix}"),
                samples,
                compared,
                momentum_mismatch as f64,
                0.0,
            ));
            reports.push(CheckReport::new(
                format!("reduction/adaptive-unit-scale/{suffix}"),
                samples,
                compared,
                scale_mismatch as f64,
                0.0,
            ));
        }
    }
    Ok(reports)
}
