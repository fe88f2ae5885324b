//! Dense quadratic functions `q(x) = a + bᵀx + ½ xᵀHx`.

use nalgebra::{DMatrix, DVector};

use crate::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub constant: f64,
    pub linear: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Quadratic {
    pub fn zeros(n: usize) -> Self {
        Self {
            constant: 0.0,
            linear: DVector::zeros(n),
            hessian: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.constant + self.linear.dot(x) + 0.5 * x.dot(&(&self.hessian * x))
    }

    pub fn gradient(&self, x: &Point) -> DVector<f64> {
        &self.linear + &self.hessian * x
    }

    /// The same function expressed in the shifted variable `s = x − anchor`.
    pub fn recentered(&self, anchor: &Point) -> Quadratic {
        let h_anchor = &self.hessian * anchor;
        Quadratic {
            constant: self.constant + self.linear.dot(anchor) + 0.5 * anchor.dot(&h_anchor),
            linear: &self.linear + h_anchor,
            hessian: self.hessian.clone(),
        }
    }

    /// `self += weight · other`.
    pub fn add_scaled(&mut self, other: &Quadratic, weight: f64) {
        self.constant += weight * other.constant;
        self.linear.axpy(weight, &other.linear, 1.0);
        self.hessian += &other.hessian * weight;
    }

    /// `self += weight · (a + bᵀx + ½ (gᵀx)²)`, the shape of every component
    /// model after expansion.
    pub(crate) fn add_terms(
        &mut self,
        weight: f64,
        constant: f64,
        linear: &DVector<f64>,
        linear_scale: f64,
        rank_one: Option<&DVector<f64>>,
    ) {
        self.constant += weight * constant;
        self.linear.axpy(weight * linear_scale, linear, 1.0);
        if let Some(g) = rank_one {
            self.hessian.ger(weight, g, g, 1.0);
        }
    }

    /// Largest absolute entry difference, scaled by the larger magnitude.
    pub fn relative_distance(&self, other: &Quadratic) -> f64 {
        let scale = self
            .coefficients()
            .chain(other.coefficients())
            .fold(1.0_f64, |m, v| m.max(v.abs()));
        let diff = self
            .coefficients()
            .zip(other.coefficients())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        diff / scale
    }

    fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.constant)
            .chain(self.linear.iter().copied())
            .chain(self.hessian.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Quadratic {
        Quadratic {
            constant: 1.5,
            linear: DVector::from_vec(vec![1.0, -2.0]),
            hessian: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        }
    }

    #[test]
    fn recentering_preserves_values() {
        let q = sample();
        let anchor = DVector::from_vec(vec![0.3, -1.2]);
        let local = q.recentered(&anchor);
        for s in [[0.0, 0.0], [1.0, 2.0], [-0.7, 0.1]] {
            let s = DVector::from_vec(s.to_vec());
            let x = &anchor + &s;
            assert!((local.value(&s) - q.value(&x)).abs() < 1e-12);
            assert!((local.gradient(&s) - q.gradient(&x)).norm() < 1e-12);
        }
    }

    #[test]
    fn rank_one_terms() {
        let mut q = Quadratic::zeros(2);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        q.add_terms(2.0, 0.5, &g, 3.0, Some(&g));
        assert_eq!(q.constant, 1.0);
        assert_eq!(q.linear, DVector::from_vec(vec![6.0, 12.0]));
        assert_eq!(q.hessian, DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 4.0, 8.0]));
        let mut r = q.clone();
        r.add_scaled(&q, -1.0);
        assert_eq!(r, Quadratic::zeros(2));
        assert_eq!(q.relative_distance(&q), 0.0);
    }
}
