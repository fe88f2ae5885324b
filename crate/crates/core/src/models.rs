//! Component models and interpolation geometry.
//!
//! Four model classes are supported. With `h = x − c`,
//!
//! | class  | model `m(x; c)`            | `grad` holds                    |
//! |--------|----------------------------|---------------------------------|
//! | `Fo`   | `F(c) + ∇F(c)ᵀh`           | `∇F(c)`                         |
//! | `Zo`   | `F(c) + gᵀh`               | interpolated gradient of `F`    |
//! | `Fogn` | `½ (f(c) + ∇f(c)ᵀh)²`      | `∇f(c)`                         |
//! | `Zogn` | `½ (f(c) + gᵀh)²`          | interpolated gradient of `f`    |
//!
//! where `f` is the residual of a least-squares component `F = ½ f²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problem::{CachedOracle, ComponentValue};
use crate::quadratic::Quadratic;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Fo,
    Zo,
    Fogn,
    Zogn,
}

impl ModelClass {
    pub const ALL: [ModelClass; 4] = [Self::Fo, Self::Zo, Self::Fogn, Self::Zogn];

    pub fn is_gauss_newton(self) -> bool {
        matches!(self, Self::Fogn | Self::Zogn)
    }

    pub fn is_interpolation(self) -> bool {
        matches!(self, Self::Zo | Self::Zogn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fo => "fo",
            Self::Zo => "zo",
            Self::Fogn => "fogn",
            Self::Zogn => "zogn",
        }
    }
}

/// Bound on the norm of the radius-scaled inverse interpolation matrix.
pub fn vinv_norm_cap(n: usize) -> f64 {
    (n as f64).sqrt().min(10.0)
}

/// Controls reuse of previously evaluated points when building interpolation
/// sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Prior points are reusable when within `reuse_radius · δ` of the center.
    /// Values above 1 trade model accuracy for fewer evaluations; the model
    /// then records the radius actually spanned as its `δ`.
    pub reuse_radius: f64,
    /// Minimum pivot on the scaled shifted points for a prior point to be kept.
    pub pivot_threshold: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            reuse_radius: 1.0,
            pivot_threshold: 0.01,
        }
    }
}

/// Points `{c, v¹, …, vⁿ}` and the residual or value data interpolated there.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationSet {
    points: Vec<Point>,
    values: Vec<f64>,
    shifts: DMatrix<f64>,
    vinv_norm_cap: f64,
}

impl InterpolationSet {
    /// Largest distance from the center to a point of the set.
    pub fn radius(&self) -> f64 {
        self.points[1..]
            .iter()
            .map(|y| (y - &self.points[0]).norm())
            .fold(0.0, f64::max)
    }

    /// Points with the center first.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Interpolated data, aligned with [`points`](Self::points).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The matrix whose columns are `vʲ − c`.
    pub fn shifts(&self) -> &DMatrix<f64> {
        &self.shifts
    }

    pub fn vinv_norm_cap(&self) -> f64 {
        self.vinv_norm_cap
    }

    pub fn center(&self) -> &Point {
        &self.points[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel {
    pub class: ModelClass,
    pub center: Point,
    /// `F(c)` for `Fo`/`Zo`, the residual `f(c)` for the Gauss-Newton classes.
    pub f_center: f64,
    pub grad: DVector<f64>,
    /// Interpolation radius, interpolation classes only.
    pub delta: Option<f64>,
    pub interp: Option<InterpolationSet>,
}

impl ComponentModel {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn linear_part(&self, x: &Point) -> f64 {
        self.f_center + self.grad.dot(&(x - &self.center))
    }

    pub fn value(&self, x: &Point) -> f64 {
        let l = self.linear_part(x);
        if self.class.is_gauss_newton() {
            0.5 * l * l
        } else {
            l
        }
    }

    pub fn gradient(&self, x: &Point) -> DVector<f64> {
        if self.class.is_gauss_newton() {
            &self.grad * self.linear_part(x)
        } else {
            self.grad.clone()
        }
    }

    /// Factor `g` of the Hessian `ggᵀ`, Gauss-Newton classes only.
    pub fn hess_rank1(&self) -> Option<&DVector<f64>> {
        self.class.is_gauss_newton().then_some(&self.grad)
    }

    /// Value of the component at the center, `F(c)`.
    pub fn center_value(&self) -> f64 {
        if self.class.is_gauss_newton() {
            0.5 * self.f_center * self.f_center
        } else {
            self.f_center
        }
    }

    /// Adds `weight · m(anchor + s)`, as a quadratic in `s`, to `q`.
    pub fn add_to(&self, q: &mut Quadratic, anchor: &Point, weight: f64) {
        let l = self.linear_part(anchor);
        match self.hess_rank1() {
            Some(g) => q.add_terms(weight, 0.5 * l * l, g, l, Some(g)),
            None => q.add_terms(weight, l, &self.grad, 1.0, None),
        }
    }

    /// Adds `weight · m(x)`, as a quadratic in `x`, to `q`.
    pub fn add_global(&self, q: &mut Quadratic, weight: f64) {
        self.add_to(q, &Point::zeros(self.dim()), weight);
    }
}

pub fn eval_model(model: &ComponentModel, x: &Point) -> f64 {
    model.value(x)
}

pub fn eval_model_gradient(model: &ComponentModel, x: &Point) -> DVector<f64> {
    model.gradient(x)
}

fn required<T>(value: Option<T>, what: &'static str) -> Result<T> {
    value.ok_or(Error::MissingCapability(what))
}

/// Builds `F(c) + ∇F(c)ᵀ(x − c)`.
pub fn build_first_order(
    oracle: &mut CachedOracle<'_>,
    i: usize,
    center: &Point,
) -> Result<ComponentModel> {
    if !oracle.problem().capabilities().has_gradient {
        return Err(Error::MissingCapability("gradients"));
    }
    let v = oracle.evaluate(i, center)?;
    Ok(ComponentModel {
        class: ModelClass::Fo,
        center: center.clone(),
        f_center: v.value,
        grad: required(v.gradient, "gradients")?,
        delta: None,
        interp: None,
    })
}

/// Builds `½ (f(c) + ∇f(c)ᵀ(x − c))²`.
pub fn build_gauss_newton(
    oracle: &mut CachedOracle<'_>,
    i: usize,
    center: &Point,
) -> Result<ComponentModel> {
    let caps = oracle.problem().capabilities();
    if !caps.is_least_squares {
        return Err(Error::MissingCapability("residuals"));
    }
    if !caps.has_gradient {
        return Err(Error::MissingCapability("gradients"));
    }
    let v = oracle.evaluate(i, center)?;
    Ok(ComponentModel {
        class: ModelClass::Fogn,
        center: center.clone(),
        f_center: required(v.residual, "residuals")?,
        grad: required(v.residual_gradient, "residual gradients")?,
        delta: None,
        interp: None,
    })
}

fn phi(value: &ComponentValue, residual: bool) -> Result<f64> {
    if residual {
        required(value.residual, "residuals")
    } else {
        Ok(value.value)
    }
}

/// Builds an interpolation model on `B(center; delta)`: `Zo` for general
/// problems, `Zogn` for least-squares ones.
///
/// Points of `prior` and remembered evaluations are reused where the geometry
/// allows; see [`improve_geometry`].
pub fn build_interp_model(
    oracle: &mut CachedOracle<'_>,
    i: usize,
    center: &Point,
    delta: f64,
    prior: Option<&InterpolationSet>,
    geometry: &GeometryConfig,
) -> Result<ComponentModel> {
    let class = if oracle.problem().capabilities().is_least_squares {
        ModelClass::Zogn
    } else {
        ModelClass::Zo
    };
    build_interp_model_as(oracle, i, center, delta, prior, geometry, class)
}

/// As [`build_interp_model`] with an explicit interpolation class.
pub fn build_interp_model_as(
    oracle: &mut CachedOracle<'_>,
    i: usize,
    center: &Point,
    delta: f64,
    prior: Option<&InterpolationSet>,
    geometry: &GeometryConfig,
    class: ModelClass,
) -> Result<ComponentModel> {
    if !class.is_interpolation() {
        return Err(Error::invalid("class", "not an interpolation class"));
    }
    let residual = class.is_gauss_newton();
    if residual && !oracle.problem().capabilities().is_least_squares {
        return Err(Error::MissingCapability("residuals"));
    }
    let set = improve_geometry_of(prior, center, delta, oracle, i, geometry, residual)?;
    let rhs = DVector::from_iterator(
        set.values.len() - 1,
        set.values[1..].iter().map(|v| v - set.values[0]),
    );
    let grad = set
        .shifts
        .transpose()
        .lu()
        .solve(&rhs)
        .filter(|g| g.iter().all(|v| v.is_finite()))
        .ok_or(Error::DegenerateGeometry)?;
    Ok(ComponentModel {
        class,
        center: center.clone(),
        f_center: set.values[0],
        grad,
        delta: Some(set.radius().max(delta)),
        interp: Some(set),
    })
}

/// Returns a set poised for linear interpolation on `B(center; delta)`.
///
/// Candidates are the points of `prior` followed by remembered evaluations of
/// component `i`, most recent first. A candidate is kept when the component of
/// its scaled shift orthogonal to the already kept shifts has norm at least
/// `geometry.pivot_threshold`. Missing directions are filled with points at
/// distance `delta` along the orthogonal complement, which for an empty prior
/// gives the coordinate simplex.
pub fn improve_geometry(
    set: Option<&InterpolationSet>,
    center: &Point,
    delta: f64,
    oracle: &mut CachedOracle<'_>,
    i: usize,
    geometry: &GeometryConfig,
) -> Result<InterpolationSet> {
    let residual = oracle.problem().capabilities().is_least_squares;
    improve_geometry_of(set, center, delta, oracle, i, geometry, residual)
}

fn improve_geometry_of(
    prior: Option<&InterpolationSet>,
    center: &Point,
    delta: f64,
    oracle: &mut CachedOracle<'_>,
    i: usize,
    geometry: &GeometryConfig,
    residual: bool,
) -> Result<InterpolationSet> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", "must be positive and finite"));
    }
    let n = center.len();
    let radius = geometry.reuse_radius * delta;
    let center_value = phi(&oracle.evaluate(i, center)?, residual)?;

    let mut kept = Kept::new(n, radius, geometry.pivot_threshold);
    let mut points = vec![center.clone()];
    let mut values = vec![center_value];

    let in_ball = |y: &Point| {
        let r = (y - center).norm();
        r > 0.0 && r <= radius * (1.0 + 1e-12)
    };

    if let Some(prior) = prior {
        for (y, v) in prior.points.iter().zip(&prior.values) {
            if points.len() > n {
                break;
            }
            if in_ball(y) && !points.contains(y) && kept.try_push(&(y - center)) {
                points.push(y.clone());
                values.push(*v);
            }
        }
    }

    if points.len() <= n {
        let mut candidates: Vec<(Point, f64)> = Vec::new();
        for (y, value) in oracle.history(i) {
            if in_ball(y) && !points.contains(y) && !candidates.iter().any(|(z, _)| z == y) {
                if let Ok(v) = phi(value, residual) {
                    candidates.push((y.clone(), v));
                }
            }
        }
        while points.len() <= n && !candidates.is_empty() {
            let (best, pivot) = candidates
                .iter()
                .enumerate()
                .map(|(k, (y, _))| (k, kept.pivot(&(y - center))))
                .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if pivot < geometry.pivot_threshold {
                break;
            }
            let (y, v) = candidates.swap_remove(best);
            kept.try_push(&(&y - center));
            points.push(y);
            values.push(v);
        }
    }

    while points.len() <= n {
        let direction = kept.complement_direction();
        let y = center + &direction * delta;
        let v = phi(&oracle.evaluate(i, &y)?, residual)?;
        kept.push_unit(direction);
        points.push(y);
        values.push(v);
    }

    let shifts = DMatrix::from_fn(n, n, |r, c| points[c + 1][r] - center[r]);
    Ok(InterpolationSet {
        points,
        values,
        shifts,
        vinv_norm_cap: vinv_norm_cap(n),
    })
}

/// Orthonormal basis of the accepted scaled shifts.
struct Kept {
    basis: Vec<DVector<f64>>,
    n: usize,
    scale: f64,
    threshold: f64,
}

impl Kept {
    fn new(n: usize, scale: f64, threshold: f64) -> Self {
        Self {
            basis: Vec::with_capacity(n),
            n,
            scale,
            threshold,
        }
    }

    fn residual(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut r = u.clone();
        // Two passes keep the basis orthonormal to working precision.
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r
    }

    fn pivot(&self, shift: &DVector<f64>) -> f64 {
        self.residual(&(shift / self.scale)).norm()
    }

    fn try_push(&mut self, shift: &DVector<f64>) -> bool {
        if self.basis.len() >= self.n {
            return false;
        }
        let r = self.residual(&(shift / self.scale));
        let norm = r.norm();
        if norm < self.threshold {
            return false;
        }
        self.basis.push(r / norm);
        true
    }

    fn push_unit(&mut self, u: DVector<f64>) {
        self.basis.push(u);
    }

    fn complement_direction(&self) -> DVector<f64> {
        let mut best = DVector::zeros(self.n);
        let mut best_norm = -1.0;
        for j in 0..self.n {
            let r = self.residual(&DVector::from_fn(self.n, |k, _| f64::from(u8::from(k == j))));
            let norm = r.norm();
            if norm > best_norm + 1e-12 {
                best_norm = norm;
                best = r;
            }
        }
        best / best_norm
    }
}

/// Capped surrogate for `‖V̂⁻¹(x; c)‖`, where `V̂` is the interpolation matrix
/// scaled by `1 / max{δ, ‖x − c‖}`.
pub fn vhat_inverse_norm(set: &InterpolationSet, x: &Point, center: &Point, delta: f64) -> f64 {
    delta.max((x - center).norm()) * set.vinv_norm_cap / delta
}
