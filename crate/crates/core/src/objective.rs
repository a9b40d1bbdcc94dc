//! The three benchmark objectives and their analytic gradients.
//!
//! Every objective is the square of a residual that is affine in the
//! parameters:
//!
//! | id | loss            | residual      |
//! |----|-----------------|---------------|
//! | F1 | `(w - 0.5)^2`   | `w - 0.5`     |
//! | F2 | `(w + b)^2`     | `w + b`       |
//! | F3 | `(wx + b - y)^2`| `wx + b - y`  |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveId {
    F1,
    F2,
    F3,
}

impl ObjectiveId {
    pub const ALL: [ObjectiveId; 3] = [ObjectiveId::F1, ObjectiveId::F2, ObjectiveId::F3];

    /// Number of trainable parameters: 1 for F1 (`w`), 2 for F2/F3 (`w`, `b`).
    pub fn arity(self) -> usize {
        match self {
            ObjectiveId::F1 => 1,
            ObjectiveId::F2 | ObjectiveId::F3 => 2,
        }
    }

    pub fn needs_sample(self) -> bool {
        self == ObjectiveId::F3
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveId::F1 => "f1",
            ObjectiveId::F2 => "f2",
            ObjectiveId::F3 => "f3",
        }
    }
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectiveId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(ObjectiveId::F1),
            "f2" => Ok(ObjectiveId::F2),
            "f3" => Ok(ObjectiveId::F3),
            other => Err(format!(
                "unknown objective `{other}` (expected f1, f2 or f3)"
            )),
        }
    }
}

/// Coordinates `(w, b)` with `b` absent for one-parameter objectives.
///
/// Also used for per-coordinate optimizer accumulators (velocity, squared
/// gradient sums), which share the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub w: f64,
    pub b: Option<f64>,
}

impl ParamPoint {
    pub fn new(w: f64, b: Option<f64>) -> Self {
        Self { w, b }
    }

    pub fn one(w: f64) -> Self {
        Self { w, b: None }
    }

    pub fn two(w: f64, b: f64) -> Self {
        Self { w, b: Some(b) }
    }

    /// A point with the same layout as `self`, every coordinate set to `value`.
    pub fn filled_like(&self, value: f64) -> Self {
        Self {
            w: value,
            b: self.b.map(|_| value),
        }
    }

    pub fn zeros(arity: usize) -> Self {
        Self {
            w: 0.0,
            b: (arity == 2).then_some(0.0),
        }
    }

    pub fn arity(&self) -> usize {
        1 + usize::from(self.b.is_some())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            w: f(self.w),
            b: self.b.map(f),
        }
    }

    /// Coordinate-wise combination. Coordinates missing from either side stay absent.
    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        Self {
            w: f(self.w, other.w),
            b: match (self.b, other.b) {
                (Some(a), Some(b)) => Some(f(a, b)),
                _ => None,
            },
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> {
        std::iter::once(self.w).chain(self.b)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

/// Single `(x, y)` pair for the regression objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    pub x: f64,
    pub y: f64,
}

impl RegressionSample {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    pub d_w: f64,
    pub d_b: Option<f64>,
}

impl GradientVector {
    pub fn as_point(&self) -> ParamPoint {
        ParamPoint {
            w: self.d_w,
            b: self.d_b,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_point().is_finite()
    }
}

/// Scaling of the F3 gradient.
///
/// `Exact` is the true derivative of the squared residual, `(2xδ, 2δ)`.
/// `Halved` is `(xδ, δ)`, the convention under which `η* = 1/(x² + 1)` is the
/// one-step optimal GD rate for F3. F1 and F2 always use the exact factor 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F3Gradient {
    #[default]
    Exact,
    Halved,
}

impl F3Gradient {
    pub fn as_str(self) -> &'static str {
        match self {
            F3Gradient::Exact => "exact",
            F3Gradient::Halved => "halved",
        }
    }
}

impl fmt::Display for F3Gradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for F3Gradient {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(F3Gradient::Exact),
            "halved" => Ok(F3Gradient::Halved),
            other => Err(format!(
                "unknown F3 gradient convention `{other}` (expected exact or halved)"
            )),
        }
    }
}

/// A validated objective: the function id, its sample when it needs one, and
/// the gradient convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    id: ObjectiveId,
    sample: Option<RegressionSample>,
    f3_gradient: F3Gradient,
}

impl Objective {
    pub fn new(id: ObjectiveId, sample: Option<RegressionSample>) -> Result<Self> {
        match (id.needs_sample(), sample) {
            (true, None) => return Err(Error::MissingSample(id)),
            (false, Some(_)) => return Err(Error::UnexpectedSample(id)),
            (true, Some(s)) if !(s.x.is_finite() && s.y.is_finite()) => {
                return Err(Error::NonFinite {
                    what: "regression sample",
                })
            }
            _ => {}
        }
        Ok(Self {
            id,
            sample,
            f3_gradient: F3Gradient::default(),
        })
    }

    pub fn f1() -> Self {
        Self::new(ObjectiveId::F1, None).unwrap()
    }

    pub fn f2() -> Self {
        Self::new(ObjectiveId::F2, None).unwrap()
    }

    pub fn f3(x: f64, y: f64) -> Result<Self> {
        Self::new(ObjectiveId::F3, Some(RegressionSample::new(x, y)))
    }

    pub fn with_f3_gradient(mut self, convention: F3Gradient) -> Self {
        self.f3_gradient = convention;
        self
    }

    pub fn id(&self) -> ObjectiveId {
        self.id
    }

    pub fn sample(&self) -> Option<RegressionSample> {
        self.sample
    }

    pub fn f3_gradient(&self) -> F3Gradient {
        self.f3_gradient
    }

    pub fn arity(&self) -> usize {
        self.id.arity()
    }

    /// Input `x` of the regression sample; 0 for objectives without one.
    pub(crate) fn x(&self) -> f64 {
        self.sample.map_or(0.0, |s| s.x)
    }

    /// Factor `k` in `gradient = k · residual · ∂residual/∂c`.
    pub fn gradient_scale(&self) -> f64 {
        match (self.id, self.f3_gradient) {
            (ObjectiveId::F3, F3Gradient::Halved) => 1.0,
            _ => 2.0,
        }
    }

    pub fn check_point(&self, p: &ParamPoint) -> Result<()> {
        if p.arity() != self.arity() {
            return Err(Error::ArityMismatch {
                objective: self.id,
                expected: self.arity(),
                found: p.arity(),
            });
        }
        Ok(())
    }

    /// Signed residual `r` with `loss = r²`.
    pub fn residual(&self, p: &ParamPoint) -> Result<f64> {
        self.check_point(p)?;
        Ok(self.residual_unchecked(p))
    }

    pub(crate) fn residual_unchecked(&self, p: &ParamPoint) -> f64 {
        match self.id {
            ObjectiveId::F1 => p.w - 0.5,
            ObjectiveId::F2 => p.w + p.b.unwrap_or(0.0),
            ObjectiveId::F3 => {
                let s = self.sample.expect("F3 constructed without sample");
                p.w * s.x + p.b.unwrap_or(0.0) - s.y
            }
        }
    }

    pub fn evaluate(&self, p: &ParamPoint) -> Result<f64> {
        let r = self.residual(p)?;
        Ok(r * r)
    }

    pub fn gradient(&self, p: &ParamPoint) -> Result<GradientVector> {
        self.check_point(p)?;
        Ok(self.gradient_unchecked(p))
    }

    pub(crate) fn gradient_unchecked(&self, p: &ParamPoint) -> GradientVector {
        let r = self.residual_unchecked(p);
        match self.id {
            // ∂F1/∂w = 2(w - 0.5)
            ObjectiveId::F1 => GradientVector {
                d_w: 2.0 * r,
                d_b: None,
            },
            // ∂F2/∂w = ∂F2/∂b = 2(w + b)
            ObjectiveId::F2 => GradientVector {
                d_w: 2.0 * r,
                d_b: Some(2.0 * r),
            },
            ObjectiveId::F3 => {
                let k = self.gradient_scale();
                GradientVector {
                    d_w: k * self.x() * r,
                    d_b: Some(k * r),
                }
            }
        }
    }
}

/// Free-function form: validates `(id, sample)` then evaluates.
pub fn evaluate(id: ObjectiveId, p: &ParamPoint, sample: Option<RegressionSample>) -> Result<f64> {
    Objective::new(id, sample)?.evaluate(p)
}

pub fn gradient(
    id: ObjectiveId,
    p: &ParamPoint,
    sample: Option<RegressionSample>,
) -> Result<GradientVector> {
    Objective::new(id, sample)?.gradient(p)
}

pub fn residual(id: ObjectiveId, p: &ParamPoint, sample: Option<RegressionSample>) -> Result<f64> {
    Objective::new(id, sample)?.residual(p)
}
