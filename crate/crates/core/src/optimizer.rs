//! Single update steps for plain gradient descent, momentum, AdaGrad and
//! RMSProp. Every step is a pure transition `OptimizerState -> OptimizerState`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{GradientVector, Objective, ParamPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Momentum,
    AdaGrad,
    RmsProp,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Gd,
        Method::Momentum,
        Method::AdaGrad,
        Method::RmsProp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Momentum => "momentum",
            Method::AdaGrad => "adagrad",
            Method::RmsProp => "rmsprop",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Method::Gd),
            "momentum" => Ok(Method::Momentum),
            "adagrad" => Ok(Method::AdaGrad),
            "rmsprop" => Ok(Method::RmsProp),
            other => Err(format!(
                "unknown method `{other}` (expected gd, momentum, adagrad or rmsprop)"
            )),
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Learning rate `eta`, momentum coefficient `alpha`, squared-gradient
/// coefficient `beta` and stabilizer `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for HyperParams {
    /// `eta = 0.1`, `alpha = 0.5`, `beta = 0.5`, `epsilon = 1e-8`.
    fn default() -> Self {
        Self {
            eta: 0.1,
            alpha: 0.5,
            beta: 0.5,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl HyperParams {
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Range checks for run configurations. Step functions themselves accept
    /// `epsilon = 0`.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHyper(msg));
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!(
                "epsilon must be finite and > 0, got {}",
                self.epsilon
            ));
        }
        Ok(())
    }
}

/// Parameters plus per-method accumulators.
///
/// Accumulators share the parameter layout. Only the ones belonging to the
/// method being stepped are read or written.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub params: ParamPoint,
    /// Momentum velocity `v`.
    pub velocity: ParamPoint,
    /// AdaGrad running sum of squared gradients `φ`.
    pub grad_sq_sum: ParamPoint,
    /// RMSProp exponentially weighted squared gradient `u`.
    pub weighted_grad_sq: ParamPoint,
    pub epoch: usize,
}

impl OptimizerState {
    /// Fresh state at epoch 1 with every accumulator zero.
    pub fn new(params: ParamPoint) -> Self {
        let zero = params.filled_like(0.0);
        Self {
            params,
            velocity: zero,
            grad_sq_sum: zero,
            weighted_grad_sq: zero,
            epoch: 1,
        }
    }

    pub fn with_velocity(mut self, v: ParamPoint) -> Self {
        self.velocity = v;
        self
    }

    pub fn with_grad_sq_sum(mut self, phi: ParamPoint) -> Self {
        self.grad_sq_sum = phi;
        self
    }

    pub fn with_weighted_grad_sq(mut self, u: ParamPoint) -> Self {
        self.weighted_grad_sq = u;
        self
    }

    /// Same accumulators, different parameters.
    pub fn at(mut self, params: ParamPoint) -> Self {
        self.params = params;
        self
    }

    fn check_layout(&self, objective: &Objective) -> Result<()> {
        objective.check_point(&self.params)?;
        for acc in [&self.velocity, &self.grad_sq_sum, &self.weighted_grad_sq] {
            objective.check_point(acc)?;
        }
        Ok(())
    }
}

/// Gradient at the state's parameters, rejecting non-finite values.
pub(crate) fn checked_gradient(st: &OptimizerState, objective: &Objective) -> Result<ParamPoint> {
    st.check_layout(objective)?;
    let g: GradientVector = objective.gradient_unchecked(&st.params);
    if !g.is_finite() {
        return Err(Error::NonFinite { what: "gradient" });
    }
    Ok(g.as_point())
}

/// `φ' = φ + g²`, the AdaGrad sum including the current gradient.
pub(crate) fn adagrad_accumulate(phi: &ParamPoint, g: &ParamPoint) -> ParamPoint {
    phi.zip_map(g, |phi, g| phi + g * g)
}

/// `ϕ = βu + (1 − β)g²`, the RMSProp weighted square after this step.
pub(crate) fn rmsprop_accumulate(u: &ParamPoint, g: &ParamPoint, beta: f64) -> ParamPoint {
    u.zip_map(g, |u, g| beta * u + (1.0 - beta) * g * g)
}

/// `c − η·g/√(acc + ε)`, leaving the coordinate untouched when `g = 0`.
fn scaled_descent(c: f64, g: f64, acc: f64, eta: f64, epsilon: f64) -> f64 {
    if g == 0.0 {
        c
    } else {
        c - eta * g / (acc + epsilon).sqrt()
    }
}

fn finish(mut next: OptimizerState) -> Result<OptimizerState> {
    if !next.params.is_finite() {
        return Err(Error::NonFinite {
            what: "parameter update",
        });
    }
    next.epoch += 1;
    Ok(next)
}

/// `c' = c − η·g`.
pub fn gd_step(
    st: &OptimizerState,
    h: &HyperParams,
    objective: &Objective,
) -> Result<OptimizerState> {
    let g = checked_gradient(st, objective)?;
    let mut next = *st;
    next.params = st.params.zip_map(&g, |c, g| c - h.eta * g);
    finish(next)
}

/// `v' = αv − ηg`, `c' = c + v'`.
pub fn momentum_step(
    st: &OptimizerState,
    h: &HyperParams,
    objective: &Objective,
) -> Result<OptimizerState> {
    let g = checked_gradient(st, objective)?;
    let mut next = *st;
    next.velocity = st.velocity.zip_map(&g, |v, g| h.alpha * v - h.eta * g);
    next.params = st.params.zip_map(&next.velocity, |c, v| c + v);
    finish(next)
}

/// `φ' = φ + g²`, `c' = c − η·g/√(φ' + ε)`.
pub fn adagrad_step(
    st: &OptimizerState,
    h: &HyperParams,
    objective: &Objective,
) -> Result<OptimizerState> {
    let g = checked_gradient(st, objective)?;
    let mut next = *st;
    next.grad_sq_sum = adagrad_accumulate(&st.grad_sq_sum, &g);
    next.params = descend_scaled(&st.params, &g, &next.grad_sq_sum, h);
    finish(next)
}

/// `u' = βu + (1 − β)g²`, `c' = c − η·g/√(u' + ε)`.
pub fn rmsprop_step(
    st: &OptimizerState,
    h: &HyperParams,
    objective: &Objective,
) -> Result<OptimizerState> {
    let g = checked_gradient(st, objective)?;
    let mut next = *st;
    next.weighted_grad_sq = rmsprop_accumulate(&st.weighted_grad_sq, &g, h.beta);
    next.params = descend_scaled(&st.params, &g, &next.weighted_grad_sq, h);
    finish(next)
}

fn descend_scaled(
    params: &ParamPoint,
    g: &ParamPoint,
    acc: &ParamPoint,
    h: &HyperParams,
) -> ParamPoint {
    ParamPoint {
        w: scaled_descent(params.w, g.w, acc.w, h.eta, h.epsilon),
        b: match (params.b, g.b, acc.b) {
            (Some(c), Some(g), Some(acc)) => Some(scaled_descent(c, g, acc, h.eta, h.epsilon)),
            _ => None,
        },
    }
}

/// Dispatch on `method`.
pub fn step(
    method: Method,
    st: &OptimizerState,
    h: &HyperParams,
    objective: &Objective,
) -> Result<OptimizerState> {
    match method {
        Method::Gd => gd_step(st, h, objective),
        Method::Momentum => momentum_step(st, h, objective),
        Method::AdaGrad => adagrad_step(st, h, objective),
        Method::RmsProp => rmsprop_step(st, h, objective),
    }
}
