//! Numeric oracles for the closed forms.
//!
//! * mean post-step error with parameters drawn uniformly from a box,
//! * one-dimensional argmin of that error (or of the post-step loss at a
//!   single state) over a hyperparameter in `[0, 1]`,
//! * central finite-difference gradients.
//!
//! Nothing here calls into [`crate::hyperopt`]; the optimizer step is the only
//! shared code path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperopt::HyperTarget;
use crate::objective::{GradientVector, Objective, ParamPoint};
use crate::optimizer::{step, HyperParams, Method, OptimizerState};

/// Points used by the coarse bracketing scan.
pub const SCAN_POINTS: usize = 64;
/// Golden-section refinement stops once the bracket is this narrow.
pub const GOLDEN_WIDTH: f64 = 1e-9;

pub const DEFAULT_GRID_1D: usize = 1000;
pub const DEFAULT_GRID_2D: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn lerp(&self, t: f64) -> f64 {
        self.lo + (self.hi - self.lo) * t
    }
}

/// How parameter points are drawn for the mean-error integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub mode: SamplingMode,
    /// Points per axis for `Grid`, total draws for `MonteCarlo`.
    pub resolution: usize,
    pub seed: u64,
    /// Domains of `w` and `b`.
    pub domain: [Interval; 2],
}

impl SamplingSpec {
    pub fn grid(resolution: usize) -> Self {
        Self {
            mode: SamplingMode::Grid,
            resolution,
            seed: 0,
            domain: [Interval::UNIT; 2],
        }
    }

    pub fn monte_carlo(draws: usize, seed: u64) -> Self {
        Self {
            mode: SamplingMode::MonteCarlo,
            resolution: draws,
            seed,
            domain: [Interval::UNIT; 2],
        }
    }

    /// Midpoint grid with 1000 points for one parameter, 200 per axis for two.
    pub fn default_for(objective: &Objective) -> Self {
        Self::grid(if objective.arity() == 1 {
            DEFAULT_GRID_1D
        } else {
            DEFAULT_GRID_2D
        })
    }

    pub fn with_domain(mut self, w: Interval, b: Interval) -> Self {
        self.domain = [w, b];
        self
    }

    fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidSampling(format!(
                "resolution must be >= 2, got {}",
                self.resolution
            )));
        }
        for d in &self.domain {
            if !(d.lo.is_finite() && d.hi.is_finite() && d.lo <= d.hi) {
                return Err(Error::InvalidSampling(format!(
                    "bad domain [{}, {}]",
                    d.lo, d.hi
                )));
            }
        }
        Ok(())
    }

    /// The parameter points, in a fixed order.
    pub fn points(&self, arity: usize) -> Result<Vec<ParamPoint>> {
        self.validate()?;
        let [dw, db] = self.domain;
        let n = self.resolution;
        Ok(match self.mode {
            SamplingMode::Grid => {
                let axis = |d: Interval| -> Vec<f64> {
                    (0..n)
                        .map(|k| d.lerp((k as f64 + 0.5) / n as f64))
                        .collect()
                };
                let ws = axis(dw);
                if arity == 1 {
                    ws.into_iter().map(ParamPoint::one).collect()
                } else {
                    let bs = axis(db);
                    ws.iter()
                        .flat_map(|&w| bs.iter().map(move |&b| ParamPoint::two(w, b)))
                        .collect()
                }
            }
            SamplingMode::MonteCarlo => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..n)
                    .map(|_| {
                        let w = dw.lerp(rng.random::<f64>());
                        if arity == 1 {
                            ParamPoint::one(w)
                        } else {
                            ParamPoint::two(w, db.lerp(rng.random::<f64>()))
                        }
                    })
                    .collect()
            }
        })
    }
}

/// Sample mean of the post-step loss with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn post_step_loss(
    method: Method,
    objective: &Objective,
    h: &HyperParams,
    st: &OptimizerState,
) -> Result<f64> {
    let next = step(method, st, h, objective)?;
    let loss = objective.evaluate(&next.params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: "post-step loss",
        });
    }
    Ok(loss)
}

fn mean_over(
    method: Method,
    objective: &Objective,
    h: &HyperParams,
    points: &[ParamPoint],
    template: &OptimizerState,
) -> Result<ErrorEstimate> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for p in points {
        let loss = post_step_loss(method, objective, h, &template.at(*p))?;
        sum += loss;
        sum_sq += loss * loss;
    }
    let n = points.len() as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(ErrorEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: points.len(),
    })
}

/// Mean loss after one step of `method`, averaged over parameter points drawn
/// per `spec`. Accumulators and velocities come from `template` and are held
/// fixed while the parameters are swept.
pub fn mean_post_step_error(
    method: Method,
    objective: &Objective,
    h: &HyperParams,
    spec: &SamplingSpec,
    template: &OptimizerState,
) -> Result<f64> {
    Ok(post_step_error_estimate(method, objective, h, spec, template)?.mean)
}

pub fn post_step_error_estimate(
    method: Method,
    objective: &Objective,
    h: &HyperParams,
    spec: &SamplingSpec,
    template: &OptimizerState,
) -> Result<ErrorEstimate> {
    let points = spec.points(objective.arity())?;
    mean_over(method, objective, h, &points, template)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgminResult {
    pub argmin: f64,
    pub min_value: f64,
    /// Scan bracket that the golden-section search refined.
    pub bracket: (f64, f64),
    pub evaluations: usize,
    /// Every scan point gave the same value; `argmin` is then arbitrary.
    pub flat: bool,
    /// Separated local minima seen by the scan. More than one means the curve
    /// is not unimodal and `argmin` is only the best scan basin.
    pub local_minima: usize,
}

impl ArgminResult {
    pub fn unimodal(&self) -> bool {
        self.local_minima <= 1
    }
}

/// Count runs of equal scan values that sit strictly below both neighbours.
fn count_local_minima(values: &[f64]) -> usize {
    let mut runs: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if runs.last() != Some(&v) {
            runs.push(v);
        }
    }
    (0..runs.len())
        .filter(|&i| {
            let left = i == 0 || runs[i - 1] > runs[i];
            let right = i + 1 == runs.len() || runs[i + 1] > runs[i];
            left && right
        })
        .count()
}

/// Minimize `f` over `[0, 1]`: uniform scan to bracket, then golden section.
pub fn minimize_unit_interval(mut f: impl FnMut(f64) -> Result<f64>) -> Result<ArgminResult> {
    let xs: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| i as f64 / SCAN_POINTS as f64)
        .collect();
    let ys = xs.iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    let mut evaluations = xs.len();

    let (best_i, &best_y) = ys
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("scan is non-empty");
    let worst_y = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let local_minima = count_local_minima(&ys);

    if worst_y <= best_y {
        return Ok(ArgminResult {
            argmin: xs[best_i],
            min_value: best_y,
            bracket: (0.0, 1.0),
            evaluations,
            flat: true,
            local_minima,
        });
    }

    let bracket = (
        xs[best_i.saturating_sub(1)],
        xs[(best_i + 1).min(SCAN_POINTS)],
    );
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = bracket;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    evaluations += 2;
    let mut best = (xs[best_i], best_y);
    while b - a > GOLDEN_WIDTH {
        if fc <= fd {
            if fc < best.1 {
                best = (c, fc);
            }
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            if fd < best.1 {
                best = (d, fd);
            }
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
    }
    let mid = 0.5 * (a + b);
    let f_mid = f(mid)?;
    evaluations += 1;
    for cand in [(c, fc), (d, fd), (mid, f_mid)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    Ok(ArgminResult {
        argmin: best.0,
        min_value: best.1,
        bracket,
        evaluations,
        flat: false,
        local_minima,
    })
}

fn check_target(method: Method, target: HyperTarget) -> Result<()> {
    if !target.applies_to(method) {
        return Err(Error::InvalidConfig(format!(
            "{method} has no hyperparameter {target}"
        )));
    }
    Ok(())
}

/// Argmin over `target ∈ [0, 1]` of the uniform-average post-step error,
/// every other hyperparameter taken from `fixed`.
pub fn argmin_hyper(
    method: Method,
    objective: &Objective,
    target: HyperTarget,
    fixed: &HyperParams,
    spec: &SamplingSpec,
    template: &OptimizerState,
) -> Result<ArgminResult> {
    check_target(method, target)?;
    let points = spec.points(objective.arity())?;
    minimize_unit_interval(|t| {
        Ok(mean_over(method, objective, &fixed.with(target, t), &points, template)?.mean)
    })
}

/// Argmin over `target ∈ [0, 1]` of the post-step loss from one fixed state.
pub fn pointwise_argmin_hyper(
    method: Method,
    objective: &Objective,
    target: HyperTarget,
    fixed: &HyperParams,
    state: &OptimizerState,
) -> Result<ArgminResult> {
    check_target(method, target)?;
    minimize_unit_interval(|t| post_step_loss(method, objective, &fixed.with(target, t), state))
}

/// Central differences `(f(c + h) − f(c − h)) / 2h` per coordinate.
pub fn finite_diff_gradient(
    objective: &Objective,
    p: &ParamPoint,
    h: f64,
) -> Result<GradientVector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("step h must be > 0, got {h}")));
    }
    objective.check_point(p)?;
    let f = |q: ParamPoint| objective.evaluate(&q);
    let d_w =
        (f(ParamPoint { w: p.w + h, ..*p })? - f(ParamPoint { w: p.w - h, ..*p })?) / (2.0 * h);
    let d_b = match p.b {
        Some(b) => Some(
            (f(ParamPoint {
                b: Some(b + h),
                ..*p
            })? - f(ParamPoint {
                b: Some(b - h),
                ..*p
            })?) / (2.0 * h),
        ),
        None => None,
    };
    Ok(GradientVector { d_w, d_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::F3Gradient;
    use approx::assert_abs_diff_eq;

    fn f1_template() -> OptimizerState {
        OptimizerState::new(ParamPoint::one(0.0))
    }

    fn f2_template() -> OptimizerState {
        OptimizerState::new(ParamPoint::two(0.0, 0.0))
    }

    fn gd(eta: f64) -> HyperParams {
        HyperParams::default().with_eta(eta)
    }

    #[test]
    fn grid_places_midpoints() {
        let pts = SamplingSpec::grid(4).points(1).unwrap();
        let ws: Vec<f64> = pts.iter().map(|p| p.w).collect();
        assert_eq!(ws, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(SamplingSpec::grid(3).points(2).unwrap().len(), 9);
        assert!(SamplingSpec::grid(1).points(1).is_err());
    }

    #[test]
    fn mean_error_examples() {
        let f1 = Objective::f1();
        let spec = SamplingSpec::grid(1000);
        let e = mean_post_step_error(Method::Gd, &f1, &gd(0.5), &spec, &f1_template()).unwrap();
        assert!(e <= 1e-28);
        let e = mean_post_step_error(Method::Gd, &f1, &gd(0.0), &spec, &f1_template()).unwrap();
        assert_abs_diff_eq!(e, 1.0 / 12.0, epsilon = 1e-4);
        let f2 = Objective::f2();
        let e = mean_post_step_error(
            Method::Gd,
            &f2,
            &gd(0.25),
            &SamplingSpec::grid(200),
            &f2_template(),
        )
        .unwrap();
        assert!(e <= 1e-28);
    }

    #[test]
    fn mean_error_matches_closed_integral_for_gd_f1() {
        // ∫₀¹ ((1 − 2η)(w − 0.5))² dw = (1 − 2η)²/12; the midpoint rule on n
        // cells undershoots by (1 − 2η)²/(12 n²).
        let f1 = Objective::f1();
        let n = 1000usize;
        for eta in [0.0, 0.1, 0.3, 0.9] {
            let exact = (1.0 - 2.0 * eta)
                * (1.0 - 2.0 * eta)
                * (1.0 / 12.0 - 1.0 / (12.0 * (n * n) as f64));
            let got = mean_post_step_error(
                Method::Gd,
                &f1,
                &gd(eta),
                &SamplingSpec::grid(n),
                &f1_template(),
            )
            .unwrap();
            assert_abs_diff_eq!(got, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn grid_and_monte_carlo_agree() {
        let f2 = Objective::f2();
        let template = f2_template().with_velocity(ParamPoint::two(0.1, -0.2));
        let h = HyperParams::default().with_eta(0.1).with_alpha(0.5);
        let grid = mean_post_step_error(
            Method::Momentum,
            &f2,
            &h,
            &SamplingSpec::grid(200),
            &template,
        )
        .unwrap();
        for seed in [1, 2, 3] {
            let mc = post_step_error_estimate(
                Method::Momentum,
                &f2,
                &h,
                &SamplingSpec::monte_carlo(100_000, seed),
                &template,
            )
            .unwrap();
            assert!(
                (mc.mean - grid).abs() <= 3.0 * mc.std_error,
                "seed {seed}: {mc:?} vs {grid}"
            );
        }
    }

    #[test]
    fn argmin_examples() {
        let f1 = Objective::f1();
        let r = argmin_hyper(
            Method::Gd,
            &f1,
            HyperTarget::Eta,
            &gd(0.1),
            &SamplingSpec::grid(1000),
            &f1_template(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.argmin, 0.5, epsilon = 1e-6);
        assert!(r.unimodal() && !r.flat);

        let r = argmin_hyper(
            Method::Gd,
            &Objective::f2(),
            HyperTarget::Eta,
            &gd(0.1),
            &SamplingSpec::grid(200),
            &f2_template(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.argmin, 0.25, epsilon = 1e-6);

        let f3 = Objective::f3(2.0, 1.0)
            .unwrap()
            .with_f3_gradient(F3Gradient::Halved);
        let r = argmin_hyper(
            Method::Gd,
            &f3,
            HyperTarget::Eta,
            &gd(0.1),
            &SamplingSpec::grid(200),
            &f2_template(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.argmin, 0.2, epsilon = 1e-6);
    }

    #[test]
    fn pointwise_examples() {
        let f1 = Objective::f1();
        let st = OptimizerState::new(ParamPoint::one(0.3)).with_velocity(ParamPoint::one(0.1));
        let h = HyperParams::default().with_alpha(0.5);
        let r = pointwise_argmin_hyper(Method::Momentum, &f1, HyperTarget::Eta, &h, &st).unwrap();
        assert_abs_diff_eq!(r.argmin, 0.375, epsilon = 1e-6);

        // φ = 0 at w = 0.3 accumulates to 0.16 before the division
        let st = OptimizerState::new(ParamPoint::one(0.3));
        let h = HyperParams::default().with_epsilon(0.0);
        let r = pointwise_argmin_hyper(Method::AdaGrad, &f1, HyperTarget::Eta, &h, &st).unwrap();
        assert_abs_diff_eq!(r.argmin, 0.2, epsilon = 1e-6);

        let st = OptimizerState::new(ParamPoint::one(0.5));
        let r = pointwise_argmin_hyper(Method::Gd, &f1, HyperTarget::Eta, &h, &st).unwrap();
        assert!(r.flat);
        assert_eq!(r.min_value, 0.0);
    }

    #[test]
    fn irrelevant_target_is_rejected() {
        let st = OptimizerState::new(ParamPoint::one(0.3));
        assert!(pointwise_argmin_hyper(
            Method::Gd,
            &Objective::f1(),
            HyperTarget::Beta,
            &gd(0.1),
            &st
        )
        .is_err());
    }

    #[test]
    fn scan_reports_multiple_basins() {
        let r = minimize_unit_interval(|t| Ok((4.0 * std::f64::consts::PI * t).cos())).unwrap();
        assert!(r.local_minima >= 2);
        assert!(!r.unimodal());
        let r = minimize_unit_interval(|t| Ok((t - 0.3) * (t - 0.3))).unwrap();
        assert_eq!(r.local_minima, 1);
        assert_abs_diff_eq!(r.argmin, 0.3, epsilon = 1e-8);
        // boundary minimum
        let r = minimize_unit_interval(|t| Ok(t + 1.0)).unwrap();
        assert_abs_diff_eq!(r.argmin, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn finite_diff_examples() {
        let f1 = Objective::f1();
        let g = finite_diff_gradient(&f1, &ParamPoint::one(0.3), 1e-6).unwrap();
        assert_abs_diff_eq!(g.d_w, -0.4, epsilon = 1e-9);
        let g = finite_diff_gradient(&Objective::f2(), &ParamPoint::two(0.3, 0.4), 1e-6).unwrap();
        assert_abs_diff_eq!(g.d_w, 1.4, epsilon = 1e-9);
        assert_abs_diff_eq!(g.d_b.unwrap(), 1.4, epsilon = 1e-9);
        let g = finite_diff_gradient(&f1, &ParamPoint::one(0.5), 1e-6).unwrap();
        assert_abs_diff_eq!(g.d_w, 0.0, epsilon = 1e-9);
        assert!(finite_diff_gradient(&f1, &ParamPoint::one(0.5), 0.0).is_err());
    }
}
