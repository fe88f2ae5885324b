//! Truncated conjugate gradients for `min gᵀs + ½ sᵀHs` subject to `‖s‖ ≤ Δ`.

use nalgebra::DVector;

use crate::quadratic::Quadratic;

const RELATIVE_TOLERANCE: f64 = 1e-12;

/// Steihaug's method on the local model `q(s)`. The first iterate is the
/// Cauchy point, so the decrease is at least the Cauchy fraction.
pub fn solve_tr_subproblem(q: &Quadratic, delta: f64) -> DVector<f64> {
    assert!(delta > 0.0, "trust-region radius must be positive");
    let n = q.dim();
    let mut s = DVector::zeros(n);
    let mut r = q.linear.clone();
    let g_norm = r.norm();
    if g_norm == 0.0 || !g_norm.is_finite() {
        return s;
    }
    let mut d = -&r;
    let mut rr = r.norm_squared();
    for _ in 0..2 * n + 10 {
        let hd = &q.hessian * &d;
        let kappa = d.dot(&hd);
        if kappa <= 0.0 {
            return to_boundary(&s, &d, delta);
        }
        let alpha = rr / kappa;
        let next = &s + &d * alpha;
        if next.norm() >= delta {
            return to_boundary(&s, &d, delta);
        }
        s = next;
        r.axpy(alpha, &hd, 1.0);
        let rr_next = r.norm_squared();
        if rr_next.sqrt() <= RELATIVE_TOLERANCE * g_norm {
            break;
        }
        d = &d * (rr_next / rr) - &r;
        rr = rr_next;
    }
    s
}

/// `s + τd` with `τ ≥ 0` and `‖s + τd‖ = Δ`.
fn to_boundary(s: &DVector<f64>, d: &DVector<f64>, delta: f64) -> DVector<f64> {
    let dd = d.norm_squared();
    let sd = s.dot(d);
    let ss = s.norm_squared();
    let disc = (sd * sd + dd * (delta * delta - ss)).max(0.0);
    let tau = (delta * delta - ss) / (sd + disc.sqrt());
    let tau = if tau.is_finite() { tau.max(0.0) } else { 0.0 };
    s + d * tau
}

/// `q(0) − q(s)`.
pub fn model_decrease(q: &Quadratic, s: &DVector<f64>) -> f64 {
    -(q.linear.dot(s) + 0.5 * s.dot(&(&q.hessian * s)))
}
