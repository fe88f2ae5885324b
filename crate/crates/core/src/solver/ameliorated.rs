//! The corrected average model `m̂_I = m̄_{k−1} + Σ_{i∈I} (m_i(·; xᵏ) − m_i(·; c_i)) / π_i`.

use crate::models::ComponentModel;
use crate::quadratic::Quadratic;
use crate::{Error, Point, Result};

/// One sampled component: the fresh and the replaced model with the
/// probability of having been sampled.
#[derive(Debug, Clone)]
pub struct Correction {
    pub index: usize,
    pub new_model: ComponentModel,
    pub old_model: ComponentModel,
    pub pi: f64,
}

#[derive(Debug, Clone)]
pub struct AmelioratedModel {
    pub corrections: Vec<Correction>,
    /// Expansion of `m̂_I(anchor + s)` in `s`.
    pub local: Quadratic,
    pub anchor: Point,
}

impl AmelioratedModel {
    /// `base` is the average model before the batch was refreshed, in global
    /// coordinates.
    pub fn build(base: &Quadratic, anchor: &Point, corrections: Vec<Correction>) -> Result<Self> {
        let mut local = base.recentered(anchor);
        for c in &corrections {
            if !(c.pi > 0.0) {
                return Err(Error::ZeroProbability(c.index));
            }
            c.new_model.add_to(&mut local, anchor, 1.0 / c.pi);
            c.old_model.add_to(&mut local, anchor, -1.0 / c.pi);
        }
        Ok(Self {
            corrections,
            local,
            anchor: anchor.clone(),
        })
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.local.value(&(x - &self.anchor))
    }

    pub fn gradient_at_anchor(&self) -> &nalgebra::DVector<f64> {
        &self.local.linear
    }
}

/// The sum of `models` as one quadratic in global coordinates.
pub fn sum_models<'a>(models: impl IntoIterator<Item = &'a ComponentModel>, n: usize) -> Quadratic {
    let mut q = Quadratic::zeros(n);
    for m in models {
        m.add_global(&mut q, 1.0);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_first_order;
    use crate::problem::{CachedOracle, Capabilities, ComponentValue, FiniteSumProblem};
    use crate::rng;
    use nalgebra::DVector;
    use rand::Rng;

    /// `F_i(x) = a_iᵀx + b_i + q_i ‖x‖²` with residual `f_i = F_i`.
    struct Quadratics {
        a: Vec<DVector<f64>>,
        b: Vec<f64>,
        q: Vec<f64>,
    }

    impl Quadratics {
        fn random(p: usize, n: usize, seed: u64) -> Self {
            let mut rng = rng::stream(seed, "quadratics");
            Self {
                a: (0..p)
                    .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
                    .collect(),
                b: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
                q: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            }
        }
    }

    impl FiniteSumProblem for Quadratics {
        fn dim(&self) -> usize {
            self.a[0].len()
        }
        fn num_components(&self) -> usize {
            self.a.len()
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                has_gradient: true,
                is_least_squares: false,
            }
        }
        fn component(&self, i: usize, x: &Point) -> ComponentValue {
            let v = self.a[i].dot(x) + self.b[i] + self.q[i] * x.norm_squared();
            ComponentValue::with_gradient(v, &self.a[i] + x * (2.0 * self.q[i]))
        }
    }

    #[test]
    fn full_batch_telescopes_to_fresh_models() {
        let prob = Quadratics::random(4, 3, 1);
        let mut oracle = CachedOracle::new(&prob, 8);
        let c = Point::from_vec(vec![0.2, -0.1, 0.4]);
        let x = Point::from_vec(vec![-0.3, 0.5, 0.1]);
        let old: Vec<_> = (0..4).map(|i| build_first_order(&mut oracle, i, &c).unwrap()).collect();
        let new: Vec<_> = (0..4).map(|i| build_first_order(&mut oracle, i, &x).unwrap()).collect();
        let base = sum_models(&old, 3);
        let corrections = (0..4)
            .map(|i| Correction {
                index: i,
                new_model: new[i].clone(),
                old_model: old[i].clone(),
                pi: 1.0,
            })
            .collect();
        let m = AmelioratedModel::build(&base, &x, corrections).unwrap();
        let fresh = sum_models(&new, 3);
        let y = Point::from_vec(vec![1.0, 2.0, -1.0]);
        assert!((m.value(&y) - fresh.value(&y)).abs() < 1e-12);
    }

    #[test]
    fn corrections_vanish_when_centers_are_current() {
        let prob = Quadratics::random(3, 2, 2);
        let mut oracle = CachedOracle::new(&prob, 8);
        let x = Point::from_vec(vec![0.3, -0.7]);
        let models: Vec<_> = (0..3).map(|i| build_first_order(&mut oracle, i, &x).unwrap()).collect();
        let base = sum_models(&models, 2);
        let corrections = vec![Correction {
            index: 1,
            new_model: models[1].clone(),
            old_model: models[1].clone(),
            pi: 0.25,
        }];
        let m = AmelioratedModel::build(&base, &x, corrections).unwrap();
        let y = Point::from_vec(vec![-2.0, 0.5]);
        assert!((m.value(&y) - base.value(&y)).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_rejected() {
        let prob = Quadratics::random(2, 2, 3);
        let mut oracle = CachedOracle::new(&prob, 8);
        let x = Point::zeros(2);
        let m = build_first_order(&mut oracle, 0, &x).unwrap();
        let base = sum_models([&m], 2);
        let corrections = vec![Correction {
            index: 0,
            new_model: m.clone(),
            old_model: m,
            pi: 0.0,
        }];
        assert_eq!(
            AmelioratedModel::build(&base, &x, corrections).unwrap_err(),
            Error::ZeroProbability(0)
        );
    }

    /// Exhaustive expectation over independent sampling with probabilities
    /// `pi` equals the all-fresh model.
    fn enumerate_expectation(gauss_newton: bool, p: usize, seed: u64) {
        let n = 3;
        let prob = Quadratics::random(p, n, seed);
        let mut oracle = CachedOracle::new(&prob, 4 * p);
        let mut rng = rng::stream(seed, "enumeration");
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let build = |oracle: &mut CachedOracle<'_>, i: usize, c: &Point| {
            if gauss_newton {
                // Treat F_i itself as the residual.
                let v = oracle.evaluate(i, c).unwrap();
                ComponentModel {
                    class: crate::models::ModelClass::Fogn,
                    center: c.clone(),
                    f_center: v.value,
                    grad: v.gradient.unwrap(),
                    delta: None,
                    interp: None,
                }
            } else {
                build_first_order(oracle, i, c).unwrap()
            }
        };
        let old: Vec<_> = (0..p)
            .map(|i| {
                let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                build(&mut oracle, i, &c)
            })
            .collect();
        let new: Vec<_> = (0..p).map(|i| build(&mut oracle, i, &x)).collect();
        let pi: Vec<f64> = (0..p).map(|_| rng.random_range(0.05..1.0)).collect();
        let base = sum_models(&old, n);
        let fresh = sum_models(&new, n);
        let points: Vec<Point> = (0..10)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let mut expectation = vec![0.0; points.len()];
        for mask in 0u32..1 << p {
            let mut weight = 1.0;
            let mut corrections = Vec::new();
            for i in 0..p {
                if mask & (1 << i) != 0 {
                    weight *= pi[i];
                    corrections.push(Correction {
                        index: i,
                        new_model: new[i].clone(),
                        old_model: old[i].clone(),
                        pi: pi[i],
                    });
                } else {
                    weight *= 1.0 - pi[i];
                }
            }
            let m = AmelioratedModel::build(&base, &x, corrections).unwrap();
            for (e, y) in expectation.iter_mut().zip(&points) {
                *e += weight * m.value(y);
            }
        }
        for (e, y) in expectation.iter().zip(&points) {
            assert!((e - fresh.value(y)).abs() < 1e-10, "{e} vs {}", fresh.value(y));
        }
    }

    #[test]
    fn unbiased_over_all_subsets() {
        for p in 2..=6 {
            enumerate_expectation(false, p, p as u64);
            enumerate_expectation(true, p, 10 + p as u64);
        }
    }
}
