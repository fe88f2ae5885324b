//! Upper bounds on how far a component model moves when it is rebuilt.
//!
//! For component `i` with stale center `c` and incumbent `xᵏ`, the step bound
//! covers `|m_i(x; xᵏ) − m_i(x; c)|` over the trust region `B(xᵏ; Δ)` and the
//! estimate bound covers the same difference at `xᵏ` and `xᵏ + s`. Both are
//! obtained from the sum of the errors of the two models.
//!
//! For the Gauss-Newton classes two forms are provided. The leading form keeps
//! only the terms of the model error that are linear in the residual error
//! and is cheap and tight in practice. The complete form also carries the
//! quadratic terms and is a guaranteed bound whenever the Lipschitz constant
//! and the interpolation cap hold.

use serde::{Deserialize, Serialize};

use crate::models::{vinv_norm_cap, ComponentModel, ModelClass};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorBounds {
    pub step_bound: f64,
    pub estimate_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnBoundForm {
    #[default]
    Leading,
    Complete,
}

/// The trial step as seen from the stale center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGeometry {
    /// `‖s‖`.
    pub step_norm: f64,
    /// `‖xᵏ + s − c‖`.
    pub trial_dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub lipschitz: f64,
    /// `‖xᵏ − c‖`.
    pub dist_center: f64,
    /// Trust-region radius `Δ`.
    pub radius: f64,
    pub step: Option<StepGeometry>,
    /// Interpolation radius `δ` of the stale model.
    pub interp_radius: f64,
    /// `√n · min{√n, 10}`.
    pub sqrt_n_cap: f64,
    /// `|f(c)|`.
    pub residual_center: f64,
    /// `|gᵀ(c − xᵏ)|` with `g` the stale model's residual gradient.
    pub center_slope: f64,
    /// `‖g‖`.
    pub grad_norm: f64,
}

impl BoundInputs {
    pub fn new(lipschitz: f64, dist_center: f64, radius: f64) -> Self {
        Self {
            lipschitz,
            dist_center,
            radius,
            step: None,
            interp_radius: radius,
            sqrt_n_cap: 1.0,
            residual_center: 0.0,
            center_slope: 0.0,
            grad_norm: 0.0,
        }
    }

    /// Gathers the inputs for the stale `model` at incumbent `x`.
    pub fn for_model(model: &ComponentModel, lipschitz: f64, x: &Point, radius: f64) -> Self {
        let n = model.dim();
        let shift = &model.center - x;
        Self {
            lipschitz,
            dist_center: shift.norm(),
            radius,
            step: None,
            interp_radius: model.delta.unwrap_or(radius),
            sqrt_n_cap: (n as f64).sqrt() * vinv_norm_cap(n),
            residual_center: model.f_center.abs(),
            center_slope: model.grad.dot(&shift).abs(),
            grad_norm: model.grad.norm(),
        }
    }

    pub fn with_step(mut self, model: &ComponentModel, x: &Point, s: &Point) -> Self {
        self.step = Some(StepGeometry {
            step_norm: s.norm(),
            trial_dist: (x + s - &model.center).norm(),
        });
        self
    }

    fn step_or_zero(&self) -> StepGeometry {
        self.step.unwrap_or(StepGeometry {
            step_norm: 0.0,
            trial_dist: self.dist_center,
        })
    }
}

/// Error of an interpolation model at distance `r` from its center when built
/// on radius `rho`.
fn interp_error(inputs: &BoundInputs, r: f64, rho: f64) -> f64 {
    inputs.lipschitz * (1.5 * r * r + 0.5 * inputs.sqrt_n_cap * rho * r)
}

fn taylor_error(inputs: &BoundInputs, r: f64) -> f64 {
    0.5 * inputs.lipschitz * r * r
}

pub fn bounds_fo(inputs: &BoundInputs) -> ErrorBounds {
    let d = inputs.dist_center;
    let delta = inputs.radius;
    let s = inputs.step_or_zero();
    ErrorBounds {
        step_bound: taylor_error(inputs, delta) + taylor_error(inputs, d + delta),
        estimate_bound: taylor_error(inputs, d)
            .max(taylor_error(inputs, s.step_norm) + taylor_error(inputs, s.trial_dist)),
    }
}

pub fn bounds_zo(inputs: &BoundInputs) -> ErrorBounds {
    let d = inputs.dist_center;
    let delta = inputs.radius;
    let rho = inputs.interp_radius;
    let s = inputs.step_or_zero();
    ErrorBounds {
        step_bound: interp_error(inputs, d + delta, rho) + interp_error(inputs, delta, delta),
        estimate_bound: interp_error(inputs, d, rho).max(
            interp_error(inputs, s.trial_dist, rho) + interp_error(inputs, s.step_norm, delta),
        ),
    }
}

/// Leading-order Gauss-Newton bound with exact residual derivatives.
pub fn bounds_fogn(inputs: &BoundInputs) -> ErrorBounds {
    let d = inputs.dist_center;
    let delta = inputs.radius;
    let s = inputs.step_or_zero();
    let fc = inputs.residual_center;
    let m = fc + inputs.center_slope + taylor_error(inputs, d);
    ErrorBounds {
        step_bound: fc * taylor_error(inputs, d + delta) + m * taylor_error(inputs, delta),
        estimate_bound: (fc * taylor_error(inputs, d)).max(
            fc * taylor_error(inputs, s.trial_dist) + m * taylor_error(inputs, s.step_norm),
        ),
    }
}

/// Leading-order Gauss-Newton bound for interpolated residual models.
pub fn bounds_zogn(inputs: &BoundInputs) -> ErrorBounds {
    let zo = bounds_zo(inputs);
    let fc = inputs.residual_center;
    ErrorBounds {
        step_bound: fc * zo.step_bound,
        estimate_bound: fc * zo.estimate_bound,
    }
}

/// `|½(l + e)² − ½l²| ≤ |l|·e + ½e²` for a residual model value `l` and a
/// residual error at most `e`.
fn gn_error(linear: f64, residual_error: f64) -> f64 {
    residual_error * (linear + 0.5 * residual_error)
}

/// Complete Gauss-Newton bound with exact residual derivatives.
pub fn bounds_fogn_complete(inputs: &BoundInputs) -> ErrorBounds {
    let d = inputs.dist_center;
    let delta = inputs.radius;
    let s = inputs.step_or_zero();
    let fc = inputs.residual_center;
    let g = inputs.grad_norm;
    let l = inputs.lipschitz;
    let residual_new = fc + inputs.center_slope + taylor_error(inputs, d);
    let grad_new = g + l * d;
    let old = |r: f64| gn_error(fc + g * r, taylor_error(inputs, r));
    let new = |r: f64| gn_error(residual_new + grad_new * r, taylor_error(inputs, r));
    ErrorBounds {
        step_bound: old(d + delta) + new(delta),
        estimate_bound: old(d).max(old(s.trial_dist) + new(s.step_norm)),
    }
}

/// Complete Gauss-Newton bound for interpolated residual models.
pub fn bounds_zogn_complete(inputs: &BoundInputs) -> ErrorBounds {
    let d = inputs.dist_center;
    let delta = inputs.radius;
    let rho = inputs.interp_radius;
    let s = inputs.step_or_zero();
    let fc = inputs.residual_center;
    let g = inputs.grad_norm;
    let l = inputs.lipschitz;
    let residual_new = fc + inputs.center_slope + interp_error(inputs, d, rho);
    let grad_new = g + 0.5 * inputs.sqrt_n_cap * l * (rho + delta) + l * d;
    let old = |r: f64| gn_error(fc + g * r, interp_error(inputs, r, rho));
    let new = |r: f64| gn_error(residual_new + grad_new * r, interp_error(inputs, r, delta));
    ErrorBounds {
        step_bound: old(d + delta) + new(delta),
        estimate_bound: old(d).max(old(s.trial_dist) + new(s.step_norm)),
    }
}

/// Dispatches on the model class.
pub fn bounds_for(class: ModelClass, form: GnBoundForm, inputs: &BoundInputs) -> ErrorBounds {
    match (class, form) {
        (ModelClass::Fo, _) => bounds_fo(inputs),
        (ModelClass::Zo, _) => bounds_zo(inputs),
        (ModelClass::Fogn, GnBoundForm::Leading) => bounds_fogn(inputs),
        (ModelClass::Fogn, GnBoundForm::Complete) => bounds_fogn_complete(inputs),
        (ModelClass::Zogn, GnBoundForm::Leading) => bounds_zogn(inputs),
        (ModelClass::Zogn, GnBoundForm::Complete) => bounds_zogn_complete(inputs),
    }
}

/// Bound on `|F(x) − m(x; c)|` for a `Zo` model, using the interpolation cap
/// in place of the exact inverse norm.
pub fn fully_linear_error(model: &ComponentModel, x: &Point, lipschitz: f64) -> f64 {
    let n = model.dim();
    let r = (x - &model.center).norm();
    let delta = model.delta.unwrap_or(0.0);
    let cap = model
        .interp
        .as_ref()
        .map_or_else(|| vinv_norm_cap(n), |set| set.vinv_norm_cap());
    1.5 * lipschitz * r * r + 0.5 * lipschitz * (n as f64).sqrt() * cap * delta * r
}
