//! Shared fixtures for the criterion benches.

use gdlab_core::{Objective, OptimizerState, ParamPoint};

/// The three objectives at the regression sample used throughout the benches.
pub fn objectives() -> [Objective; 3] {
    [
        Objective::f1(),
        Objective::f2(),
        Objective::f3(0.3, 0.23).expect("finite sample"),
    ]
}

/// A mid-run state with every accumulator populated.
pub fn warm_state(objective: &Objective) -> OptimizerState {
    let p = if objective.arity() == 1 {
        ParamPoint::one(0.3)
    } else {
        ParamPoint::two(0.3, 0.4)
    };
    OptimizerState::new(p)
        .with_velocity(p.filled_like(0.1))
        .with_grad_sq_sum(p.filled_like(0.2))
        .with_weighted_grad_sq(p.filled_like(0.2))
}
