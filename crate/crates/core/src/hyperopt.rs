//! Closed-form per-state optimal hyperparameters.
//!
//! Each value zeroes the residual after one update from the given state. The
//! formulas are written per objective in the form they are usually quoted.
//! The F3 expressions carry the gradient scale `k` (2 for the exact gradient,
//! 1 for the halved one) so that they stay one-step optimal under either
//! convention; with `k = 1` they reduce to `η* = 1/(x² + 1)` and friends.
//!
//! Adaptive accumulators are taken from the state *before* the step and
//! advanced here exactly as the optimizer advances them, so `φ` and `ϕ`
//! include the current gradient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objective::{Objective, ObjectiveId};
use crate::optimizer::{
    adagrad_accumulate, checked_gradient, rmsprop_accumulate, HyperParams, Method, OptimizerState,
};

/// Denominators with magnitude below this make a closed form undefined.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// A closed-form value together with its feasibility metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleValue {
    /// Usable value: `raw` clamped to `[0, 1]`. NaN when undefined.
    pub value: f64,
    /// The unclamped closed form. NaN when undefined.
    pub raw: f64,
    /// `raw` lies in `[0, 1]`.
    pub feasible: bool,
    /// No singular denominator was hit.
    pub defined: bool,
}

impl FeasibleValue {
    pub fn from_raw(raw: f64) -> Self {
        if !raw.is_finite() {
            return Self::undefined();
        }
        // Drop the sign of a negative zero.
        let raw = raw + 0.0;
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
            feasible: (0.0..=1.0).contains(&raw),
            defined: true,
        }
    }

    pub fn undefined() -> Self {
        Self {
            value: f64::NAN,
            raw: f64::NAN,
            feasible: false,
            defined: false,
        }
    }

    /// `numerator / denominator`, undefined when the denominator is singular.
    fn ratio(numerator: f64, denominator: f64) -> Self {
        if denominator.abs() < SINGULAR_TOLERANCE {
            Self::undefined()
        } else {
            Self::from_raw(numerator / denominator)
        }
    }

    /// The value a caller should apply, if any.
    pub fn usable(&self) -> Option<f64> {
        self.defined.then_some(self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperTarget {
    Eta,
    Alpha,
    Beta,
}

impl HyperTarget {
    pub const ALL: [HyperTarget; 3] = [HyperTarget::Eta, HyperTarget::Alpha, HyperTarget::Beta];

    pub fn as_str(self) -> &'static str {
        match self {
            HyperTarget::Eta => "eta",
            HyperTarget::Alpha => "alpha",
            HyperTarget::Beta => "beta",
        }
    }

    /// Whether `method` reads this hyperparameter at all.
    pub fn applies_to(self, method: Method) -> bool {
        relevant_targets(method).contains(&self)
    }
}

impl fmt::Display for HyperTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HyperTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "eta" => Ok(HyperTarget::Eta),
            "alpha" => Ok(HyperTarget::Alpha),
            "beta" => Ok(HyperTarget::Beta),
            other => Err(format!(
                "unknown hyperparameter `{other}` (expected eta, alpha or beta)"
            )),
        }
    }
}

impl HyperParams {
    pub fn get(&self, target: HyperTarget) -> f64 {
        match target {
            HyperTarget::Eta => self.eta,
            HyperTarget::Alpha => self.alpha,
            HyperTarget::Beta => self.beta,
        }
    }

    pub fn set(&mut self, target: HyperTarget, value: f64) {
        match target {
            HyperTarget::Eta => self.eta = value,
            HyperTarget::Alpha => self.alpha = value,
            HyperTarget::Beta => self.beta = value,
        }
    }

    pub fn with(mut self, target: HyperTarget, value: f64) -> Self {
        self.set(target, value);
        self
    }
}

/// Hyperparameters with a closed form for `method`, in the order they should be
/// resolved: the learning rate always last, so it is optimal given the others.
pub fn relevant_targets(method: Method) -> &'static [HyperTarget] {
    match method {
        Method::Gd | Method::AdaGrad => &[HyperTarget::Eta],
        Method::Momentum => &[HyperTarget::Alpha, HyperTarget::Eta],
        Method::RmsProp => &[HyperTarget::Beta, HyperTarget::Eta],
    }
}

/// Plain gradient descent: 0.5 for F1, 0.25 for F2, `1/(k(x² + 1))` for F3.
pub fn optimal_lr_gd(objective: &Objective) -> FeasibleValue {
    match objective.id() {
        ObjectiveId::F1 => FeasibleValue::from_raw(0.5),
        ObjectiveId::F2 => FeasibleValue::from_raw(0.25),
        ObjectiveId::F3 => {
            let x = objective.x();
            let k = objective.gradient_scale();
            FeasibleValue::from_raw(1.0 / (k * (x * x + 1.0)))
        }
    }
}

/// Momentum learning rate given `alpha` and the current velocity.
pub fn optimal_lr_momentum(
    objective: &Objective,
    st: &OptimizerState,
    alpha: f64,
) -> Result<FeasibleValue> {
    objective.check_point(&st.params)?;
    objective.check_point(&st.velocity)?;
    let p = &st.params;
    let v = &st.velocity;
    Ok(match objective.id() {
        ObjectiveId::F1 => {
            let d = p.w - 0.5;
            FeasibleValue::ratio(alpha * v.w + d, 2.0 * d)
        }
        ObjectiveId::F2 => {
            let s = p.w + p.b.unwrap_or(0.0);
            let vs = v.w + v.b.unwrap_or(0.0);
            FeasibleValue::ratio(alpha * vs + s, 4.0 * s)
        }
        ObjectiveId::F3 => {
            let x = objective.x();
            let k = objective.gradient_scale();
            let delta = objective.residual_unchecked(p);
            if delta.abs() < SINGULAR_TOLERANCE {
                FeasibleValue::undefined()
            } else {
                let vx = v.w * x + v.b.unwrap_or(0.0);
                let curvature = x * x + 1.0;
                FeasibleValue::from_raw(
                    1.0 / (k * curvature) + alpha * vx / (k * delta * curvature),
                )
            }
        }
    })
}

/// Momentum coefficient given `eta` and the current velocity.
pub fn optimal_momentum_coef(
    objective: &Objective,
    st: &OptimizerState,
    eta: f64,
) -> Result<FeasibleValue> {
    objective.check_point(&st.params)?;
    objective.check_point(&st.velocity)?;
    let p = &st.params;
    let v = &st.velocity;
    Ok(match objective.id() {
        ObjectiveId::F1 => FeasibleValue::ratio(2.0 * (eta - 0.5) * (p.w - 0.5), v.w),
        ObjectiveId::F2 => {
            let s = p.w + p.b.unwrap_or(0.0);
            FeasibleValue::ratio((4.0 * eta - 1.0) * s, v.w + v.b.unwrap_or(0.0))
        }
        ObjectiveId::F3 => {
            let x = objective.x();
            let k = objective.gradient_scale();
            let delta = objective.residual_unchecked(p);
            let vx = v.w * x + v.b.unwrap_or(0.0);
            FeasibleValue::ratio(delta * (k * eta * x * x + k * eta - 1.0), vx)
        }
    })
}

/// Optimal learning rate for a per-coordinate scaled step `c − η·g_c/s_c`,
/// given the divisors `s_w = √(acc_w + ε)` and `s_b = √(acc_b + ε)`.
///
/// With unit divisors this is exactly [`optimal_lr_gd`].
pub fn optimal_lr_for_scales(objective: &Objective, s_w: f64, s_b: Option<f64>) -> FeasibleValue {
    match objective.id() {
        ObjectiveId::F1 => FeasibleValue::from_raw(s_w / 2.0),
        ObjectiveId::F2 => {
            let s_b = s_b.unwrap_or(s_w);
            FeasibleValue::ratio(s_w * s_b, 2.0 * (s_w + s_b))
        }
        ObjectiveId::F3 => {
            let s_b = s_b.unwrap_or(s_w);
            let x = objective.x();
            let k = objective.gradient_scale();
            FeasibleValue::ratio(s_w * s_b, k * (x * x * s_b + s_w))
        }
    }
}

/// AdaGrad learning rate. `φ` is advanced by the current squared gradient
/// before the formula is applied.
pub fn optimal_lr_adagrad(
    objective: &Objective,
    st: &OptimizerState,
    epsilon: f64,
) -> Result<FeasibleValue> {
    let g = checked_gradient(st, objective)?;
    let phi = adagrad_accumulate(&st.grad_sq_sum, &g);
    let s = phi.map(|a| (a + epsilon).sqrt());
    Ok(optimal_lr_for_scales(objective, s.w, s.b))
}

/// RMSProp learning rate over `ϕ = βu + (1 − β)g²`.
pub fn optimal_lr_rmsprop(
    objective: &Objective,
    st: &OptimizerState,
    beta: f64,
    epsilon: f64,
) -> Result<FeasibleValue> {
    let g = checked_gradient(st, objective)?;
    let phi = rmsprop_accumulate(&st.weighted_grad_sq, &g, beta);
    let s = phi.map(|a| (a + epsilon).sqrt());
    Ok(optimal_lr_for_scales(objective, s.w, s.b))
}

/// RMSProp squared-gradient coefficient given `eta`.
///
/// For F2 and F3 the formula assumes a common accumulator `u = u_w = u_b` and
/// a common gradient `g = ∂F/∂w = ∂F/∂b`; the `w` coordinate supplies both.
/// For F2 this holds whenever `u_w = u_b`; for F3 it additionally needs
/// `x = 1`.
pub fn optimal_beta_rmsprop(
    objective: &Objective,
    st: &OptimizerState,
    eta: f64,
    epsilon: f64,
) -> Result<FeasibleValue> {
    let grad = checked_gradient(st, objective)?;
    let g2 = grad.w * grad.w;
    let u = st.weighted_grad_sq.w;
    Ok(match objective.id() {
        ObjectiveId::F1 => FeasibleValue::ratio(4.0 * eta * eta - g2 - epsilon, u - g2),
        ObjectiveId::F2 => FeasibleValue::ratio(16.0 * eta * eta - g2 - epsilon, u - g2),
        ObjectiveId::F3 => {
            let x = objective.x();
            let delta = objective.residual_unchecked(&st.params);
            if delta.abs() < SINGULAR_TOLERANCE {
                FeasibleValue::undefined()
            } else {
                let d2 = delta * delta;
                let xp1 = x + 1.0;
                FeasibleValue::ratio(
                    eta * eta * g2 * xp1 * xp1 - g2 * d2 - epsilon * d2,
                    (u - g2) * d2,
                )
            }
        }
    })
}

/// Closed form for `target` under `method`, holding the other values of
/// `hyper` fixed. `None` when the method has no such hyperparameter.
pub fn optimal_value(
    method: Method,
    target: HyperTarget,
    objective: &Objective,
    st: &OptimizerState,
    hyper: &HyperParams,
) -> Result<Option<FeasibleValue>> {
    use HyperTarget::*;
    let value = match (method, target) {
        (Method::Gd, Eta) => {
            objective.check_point(&st.params)?;
            optimal_lr_gd(objective)
        }
        (Method::Momentum, Eta) => optimal_lr_momentum(objective, st, hyper.alpha)?,
        (Method::Momentum, Alpha) => optimal_momentum_coef(objective, st, hyper.eta)?,
        (Method::AdaGrad, Eta) => optimal_lr_adagrad(objective, st, hyper.epsilon)?,
        (Method::RmsProp, Eta) => optimal_lr_rmsprop(objective, st, hyper.beta, hyper.epsilon)?,
        (Method::RmsProp, Beta) => optimal_beta_rmsprop(objective, st, hyper.eta, hyper.epsilon)?,
        _ => return Ok(None),
    };
    Ok(Some(value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{F3Gradient, ParamPoint};
    use crate::optimizer::step;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f1_state(w: f64) -> OptimizerState {
        OptimizerState::new(ParamPoint::one(w))
    }

    #[test]
    fn gd_values() {
        assert_eq!(optimal_lr_gd(&Objective::f1()).value, 0.5);
        assert_eq!(optimal_lr_gd(&Objective::f2()).value, 0.25);
        let f3 = Objective::f3(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            optimal_lr_gd(&f3.with_f3_gradient(F3Gradient::Halved)).value,
            0.2,
            epsilon = 1e-16
        );
        assert_abs_diff_eq!(optimal_lr_gd(&f3).value, 0.1, epsilon = 1e-16);
    }

    #[test]
    fn momentum_lr_examples() {
        let f1 = Objective::f1();
        let st = f1_state(0.3).with_velocity(ParamPoint::one(0.1));
        let v = optimal_lr_momentum(&f1, &st, 0.5).unwrap();
        assert!(v.defined && v.feasible);
        assert_abs_diff_eq!(v.value, 0.375, epsilon = 1e-15);

        let v = optimal_lr_momentum(&f1, &f1_state(0.3), 0.5).unwrap();
        assert_eq!(v.value, 0.5);

        let st = f1_state(0.5).with_velocity(ParamPoint::one(0.1));
        assert!(!optimal_lr_momentum(&f1, &st, 0.5).unwrap().defined);
    }

    #[test]
    fn momentum_coef_examples() {
        let f1 = Objective::f1();
        let st = f1_state(0.3).with_velocity(ParamPoint::one(0.1));
        let a = optimal_momentum_coef(&f1, &st, 0.375).unwrap();
        assert_abs_diff_eq!(a.value, 0.5, epsilon = 1e-15);

        assert!(
            !optimal_momentum_coef(&f1, &f1_state(0.3), 0.3)
                .unwrap()
                .defined
        );

        let st =
            OptimizerState::new(ParamPoint::two(0.3, 0.4)).with_velocity(ParamPoint::two(0.1, 0.1));
        let a = optimal_momentum_coef(&Objective::f2(), &st, 0.25).unwrap();
        assert_eq!(a.value, 0.0);
        assert!(a.feasible);
    }

    #[test]
    fn adagrad_examples() {
        // w = 0.3 and φ = 0 accumulate to φ' = 0.16
        let v = optimal_lr_adagrad(&Objective::f1(), &f1_state(0.3), 0.0).unwrap();
        assert_abs_diff_eq!(v.value, 0.2, epsilon = 1e-15);
        assert_eq!(
            optimal_lr_for_scales(&Objective::f2(), 1.0, Some(1.0)).value,
            0.25
        );
        let f3 = Objective::f3(2.0, 1.0)
            .unwrap()
            .with_f3_gradient(F3Gradient::Halved);
        assert_abs_diff_eq!(
            optimal_lr_for_scales(&f3, 1.0, Some(1.0)).value,
            0.2,
            epsilon = 1e-16
        );
    }

    #[test]
    fn rmsprop_lr_examples() {
        let f1 = Objective::f1();
        let st = f1_state(0.3).with_weighted_grad_sq(ParamPoint::one(0.2));
        let v = optimal_lr_rmsprop(&f1, &st, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(v.value, 0.2f64.sqrt() / 2.0, epsilon = 1e-16);
        assert_abs_diff_eq!(v.value, 0.2236, epsilon = 1e-4);

        let st = f1_state(0.3).with_weighted_grad_sq(ParamPoint::one(0.77));
        let v = optimal_lr_rmsprop(&f1, &st, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(v.value, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn rmsprop_beta_examples() {
        let f1 = Objective::f1();
        let st = f1_state(0.3).with_weighted_grad_sq(ParamPoint::one(0.2));
        let b = optimal_beta_rmsprop(&f1, &st, 0.21, 0.0).unwrap();
        assert!(b.feasible);
        assert_abs_diff_eq!(b.value, 0.41, epsilon = 1e-12);

        let b = optimal_beta_rmsprop(&f1, &st, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(b.raw, -3.0, epsilon = 1e-12);
        assert!(b.defined && !b.feasible);
        assert_eq!(b.value, 0.0);

        // u = g² = 0.16
        let st = f1_state(0.3).with_weighted_grad_sq(ParamPoint::one(0.16000000000000003));
        assert!(!optimal_beta_rmsprop(&f1, &st, 0.1, 0.0).unwrap().defined);
    }

    #[test]
    fn unit_scale_reductions_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = rng.random_range(-3.0..3.0);
            for conv in [F3Gradient::Exact, F3Gradient::Halved] {
                let f3 = Objective::f3(x, 0.5).unwrap().with_f3_gradient(conv);
                assert_eq!(
                    optimal_lr_for_scales(&f3, 1.0, Some(1.0)),
                    optimal_lr_gd(&f3)
                );
            }
        }
        assert_eq!(
            optimal_lr_for_scales(&Objective::f1(), 1.0, None),
            optimal_lr_gd(&Objective::f1())
        );
    }

    #[test]
    fn momentum_duality_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let obj = match rng.random_range(0..3) {
                0 => Objective::f1(),
                1 => Objective::f2(),
                _ => Objective::f3(rng.random_range(0.2..2.0), rng.random_range(0.0..1.0)).unwrap(),
            };
            let sign = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let p = ParamPoint::new(rng.random(), (obj.arity() == 2).then(|| rng.random()));
            let v = p.map(|_| sign(&mut rng) * rng.random_range(0.01..0.5));
            let st = OptimizerState::new(p).with_velocity(v);
            let alpha: f64 = rng.random();
            let eta = optimal_lr_momentum(&obj, &st, alpha).unwrap();
            if !eta.defined {
                continue;
            }
            let back = optimal_momentum_coef(&obj, &st, eta.raw).unwrap();
            if back.defined {
                assert!((back.raw - alpha).abs() <= 1e-12, "{} vs {alpha}", back.raw);
            }
        }
    }

    #[test]
    fn larger_inputs_lower_the_rate() {
        let rate = |x: f64| optimal_lr_gd(&Objective::f3(x, 0.0).unwrap()).value;
        assert!(rate(0.3) > rate(1.0));
        assert!(rate(-1.0) > rate(2.0));
        assert!(optimal_lr_gd(&Objective::f2()).value < optimal_lr_gd(&Objective::f1()).value);
    }

    #[test]
    fn gd_optimum_solves_f1_f2_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for obj in [Objective::f1(), Objective::f2()] {
            let eta = optimal_lr_gd(&obj).value;
            for _ in 0..1000 {
                let p = ParamPoint::new(rng.random(), (obj.arity() == 2).then(|| rng.random()));
                let st = OptimizerState::new(p);
                let next =
                    step(Method::Gd, &st, &HyperParams::default().with_eta(eta), &obj).unwrap();
                assert!(obj.evaluate(&next.params).unwrap() <= 1e-28);
            }
        }
    }

    #[test]
    fn dispatch_rejects_irrelevant_targets() {
        let st = f1_state(0.3);
        let h = HyperParams::default();
        let f1 = Objective::f1();
        assert!(optimal_value(Method::Gd, HyperTarget::Alpha, &f1, &st, &h)
            .unwrap()
            .is_none());
        assert!(
            optimal_value(Method::AdaGrad, HyperTarget::Beta, &f1, &st, &h)
                .unwrap()
                .is_none()
        );
        assert!(
            optimal_value(Method::RmsProp, HyperTarget::Beta, &f1, &st, &h)
                .unwrap()
                .is_some()
        );
        assert!(HyperTarget::Alpha.applies_to(Method::Momentum));
        assert!(!HyperTarget::Alpha.applies_to(Method::RmsProp));
    }

    #[test]
    fn feasible_value_clamps() {
        let v = FeasibleValue::from_raw(1.7);
        assert_eq!((v.value, v.feasible, v.defined), (1.0, false, true));
        let v = FeasibleValue::from_raw(0.3);
        assert_eq!((v.value, v.feasible), (0.3, true));
        assert_eq!(FeasibleValue::ratio(1.0, 1e-13).usable(), None);
    }
}
