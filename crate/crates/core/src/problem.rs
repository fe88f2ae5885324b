//! Finite-sum objectives, the component oracle and evaluation accounting.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point in parameter space.
pub type Point = DVector<f64>;

/// What a [`FiniteSumProblem`] promises to return from a component evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// `ComponentValue::gradient` is populated, and for least-squares problems
    /// so is `ComponentValue::residual_gradient`.
    pub has_gradient: bool,
    /// Every component is `F_i = ½ f_i²` and the residual `f_i` is reported.
    pub is_least_squares: bool,
}

/// Result of evaluating one component at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentValue {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub residual: Option<f64>,
    pub residual_gradient: Option<DVector<f64>>,
}

impl ComponentValue {
    /// A plain value with no derivative or residual information.
    pub fn scalar(value: f64) -> Self {
        Self {
            value,
            gradient: None,
            residual: None,
            residual_gradient: None,
        }
    }

    /// Value and gradient of a general component.
    pub fn with_gradient(value: f64, gradient: DVector<f64>) -> Self {
        Self {
            value,
            gradient: Some(gradient),
            residual: None,
            residual_gradient: None,
        }
    }

    /// A least-squares component `½ r²`, with the residual gradient when
    /// available. The component gradient `r ∇r` is filled in from it.
    pub fn least_squares(residual: f64, residual_gradient: Option<DVector<f64>>) -> Self {
        Self {
            value: 0.5 * residual * residual,
            gradient: residual_gradient.as_ref().map(|g| g * residual),
            residual: Some(residual),
            residual_gradient,
        }
    }
}

/// A finite-sum objective `f(x) = Σ_i F_i(x)`.
///
/// Implementations must be deterministic: evaluating the same component at the
/// same point always yields the same value.
pub trait FiniteSumProblem: Send + Sync {
    /// Dimension `n` of the parameter space.
    fn dim(&self) -> usize;

    /// Number of components `p`.
    fn num_components(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    /// Known Lipschitz constants, one per component. For least-squares
    /// problems these bound the residual gradients `∇f_i`; otherwise they bound
    /// the component gradients `∇F_i`.
    fn lipschitz(&self) -> Option<&[f64]> {
        None
    }

    /// Evaluates component `i`. Callers guarantee `i < p` and a finite `x` of
    /// the right dimension; use [`evaluate_component`] for checked, counted
    /// access.
    fn component(&self, i: usize, x: &Point) -> ComponentValue;
}

/// Counts component evaluations.
///
/// A value and gradient computed at the same point count as a single unit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationLedger {
    per_component: Vec<u64>,
    per_iteration: Vec<(usize, BTreeSet<usize>)>,
    batch_count: u64,
    iteration: usize,
}

impl EvaluationLedger {
    pub fn new(num_components: usize) -> Self {
        Self {
            per_component: vec![0; num_components],
            per_iteration: Vec::new(),
            batch_count: 0,
            iteration: 0,
        }
    }

    /// Tags subsequent evaluations with iteration `k`.
    pub fn begin_iteration(&mut self, k: usize) {
        self.iteration = k;
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn record(&mut self, i: usize) {
        self.per_component[i] += 1;
        match self.per_iteration.last_mut() {
            Some((k, set)) if *k == self.iteration => {
                set.insert(i);
            }
            _ => self
                .per_iteration
                .push((self.iteration, BTreeSet::from([i]))),
        }
    }

    /// Adds `count` resource-sized batches.
    pub fn add_batches(&mut self, count: u64) {
        self.batch_count += count;
    }

    pub fn per_component(&self) -> &[u64] {
        &self.per_component
    }

    /// Iteration-tagged sets of components evaluated during that iteration.
    pub fn per_iteration(&self) -> &[(usize, BTreeSet<usize>)] {
        &self.per_iteration
    }

    /// Components evaluated during iteration `k`.
    pub fn evaluated_in(&self, k: usize) -> Option<&BTreeSet<usize>> {
        self.per_iteration
            .iter()
            .rev()
            .find(|(it, _)| *it == k)
            .map(|(_, set)| set)
    }

    pub fn batch_count(&self) -> u64 {
        self.batch_count
    }

    pub fn total(&self) -> u64 {
        self.per_component.iter().sum()
    }

    pub fn num_components(&self) -> usize {
        self.per_component.len()
    }
}

fn check_point(problem: &dyn FiniteSumProblem, x: &Point) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinitePoint);
    }
    Ok(())
}

/// Evaluates component `i` at `x` and charges one unit to the ledger.
pub fn evaluate_component(
    problem: &dyn FiniteSumProblem,
    i: usize,
    x: &Point,
    ledger: &mut EvaluationLedger,
) -> Result<ComponentValue> {
    let count = problem.num_components();
    if i >= count {
        return Err(Error::IndexOutOfRange { index: i, count });
    }
    check_point(problem, x)?;
    let value = problem.component(i, x);
    ledger.record(i);
    Ok(value)
}

/// Evaluates the full objective, charging `p` units.
pub fn evaluate_full(
    problem: &dyn FiniteSumProblem,
    x: &Point,
    ledger: &mut EvaluationLedger,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..problem.num_components() {
        total += evaluate_component(problem, i, x, ledger)?.value;
    }
    Ok(total)
}

/// Evaluates the full objective without touching any ledger. Used for
/// monitoring optimality gaps, which must not count as solver work.
pub fn objective_uncounted(problem: &dyn FiniteSumProblem, x: &Point) -> f64 {
    (0..problem.num_components())
        .map(|i| problem.component(i, x).value)
        .sum()
}

/// Counted oracle access with a per-component memory of recent evaluations.
///
/// Requesting a component at a point it was already evaluated at returns the
/// remembered value and charges nothing. The remembered points double as
/// candidates for interpolation sets.
pub struct CachedOracle<'a> {
    problem: &'a dyn FiniteSumProblem,
    ledger: EvaluationLedger,
    history: Vec<VecDeque<(Point, ComponentValue)>>,
    capacity: usize,
}

impl<'a> CachedOracle<'a> {
    /// `capacity` is the number of evaluations remembered per component.
    pub fn new(problem: &'a dyn FiniteSumProblem, capacity: usize) -> Self {
        let p = problem.num_components();
        Self {
            problem,
            ledger: EvaluationLedger::new(p),
            history: vec![VecDeque::new(); p],
            capacity: capacity.max(1),
        }
    }

    pub fn problem(&self) -> &'a dyn FiniteSumProblem {
        self.problem
    }

    pub fn ledger(&self) -> &EvaluationLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut EvaluationLedger {
        &mut self.ledger
    }

    pub fn into_ledger(self) -> EvaluationLedger {
        self.ledger
    }

    /// The remembered value of component `i` at exactly `x`, if any.
    pub fn lookup(&self, i: usize, x: &Point) -> Option<&ComponentValue> {
        self.history
            .get(i)?
            .iter()
            .rev()
            .find(|(y, _)| y == x)
            .map(|(_, v)| v)
    }

    pub fn evaluate(&mut self, i: usize, x: &Point) -> Result<ComponentValue> {
        if let Some(v) = self.lookup(i, x) {
            return Ok(v.clone());
        }
        let value = evaluate_component(self.problem, i, x, &mut self.ledger)?;
        let memory = &mut self.history[i];
        if memory.len() == self.capacity {
            memory.pop_front();
        }
        memory.push_back((x.clone(), value.clone()));
        Ok(value)
    }

    /// Remembered evaluations of component `i`, most recent first.
    pub fn history(&self, i: usize) -> impl Iterator<Item = &(Point, ComponentValue)> {
        self.history[i].iter().rev()
    }
}

/// Total component evaluations divided by the number of components.
pub fn effective_data_passes(ledger: &EvaluationLedger, p: usize) -> f64 {
    assert!(p > 0, "component count must be positive");
    ledger.total() as f64 / p as f64
}

/// Idealized parallel wall-clock proxy: `batches · ⌈r / μ⌉` for a machine that
/// evaluates `machine_size` components simultaneously.
pub fn rounds_metric(batch_count: u64, resource_size: usize, machine_size: usize) -> u64 {
    assert!(resource_size >= 1 && machine_size >= 1);
    batch_count * resource_size.div_ceil(machine_size) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant {
        p: usize,
    }

    impl FiniteSumProblem for Constant {
        fn dim(&self) -> usize {
            2
        }
        fn num_components(&self) -> usize {
            self.p
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                has_gradient: false,
                is_least_squares: false,
            }
        }
        fn component(&self, _i: usize, _x: &Point) -> ComponentValue {
            ComponentValue::scalar(1.0)
        }
    }

    #[test]
    fn full_objective_of_constant_stubs() {
        let problem = Constant { p: 2 };
        let mut ledger = EvaluationLedger::new(2);
        let f = evaluate_full(&problem, &Point::zeros(2), &mut ledger).unwrap();
        assert_eq!(f, 2.0);
        assert_eq!(ledger.total(), 2);
    }

    #[test]
    fn rejects_bad_index_and_point() {
        let problem = Constant { p: 3 };
        let mut ledger = EvaluationLedger::new(3);
        let x = Point::zeros(2);
        assert_eq!(
            evaluate_component(&problem, 3, &x, &mut ledger),
            Err(Error::IndexOutOfRange { index: 3, count: 3 })
        );
        let bad = Point::from_vec(vec![0.0, f64::NAN]);
        assert_eq!(
            evaluate_component(&problem, 0, &bad, &mut ledger),
            Err(Error::NonFinitePoint)
        );
        assert_eq!(
            evaluate_component(&problem, 0, &Point::zeros(3), &mut ledger),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn repeated_evaluation_is_counted_twice() {
        let problem = Constant { p: 1 };
        let mut ledger = EvaluationLedger::new(1);
        let x = Point::zeros(2);
        let a = evaluate_component(&problem, 0, &x, &mut ledger).unwrap();
        let b = evaluate_component(&problem, 0, &x, &mut ledger).unwrap();
        assert_eq!(a, b);
        assert_eq!(ledger.per_component(), &[2]);
    }

    #[test]
    fn data_passes() {
        let mut ledger = EvaluationLedger::new(256);
        assert_eq!(effective_data_passes(&ledger, 256), 0.0);
        for i in 0..384 {
            ledger.record(i % 256);
        }
        assert_eq!(effective_data_passes(&ledger, 256), 1.5);
        let mut ledger = EvaluationLedger::new(4);
        for i in 0..8 {
            ledger.record(i % 4);
        }
        assert_eq!(effective_data_passes(&ledger, 4), 2.0);
    }

    #[test]
    fn rounds() {
        assert_eq!(rounds_metric(10, 256, 256), 10);
        assert_eq!(rounds_metric(10, 256, 1), 2560);
        assert_eq!(rounds_metric(0, 4, 1), 0);
        assert_eq!(rounds_metric(5, 4, 1), 20);
        assert_eq!(rounds_metric(5, 4, 8), 5);
    }

    #[test]
    fn ledger_tags_iterations() {
        let mut ledger = EvaluationLedger::new(4);
        ledger.begin_iteration(0);
        ledger.record(0);
        ledger.record(1);
        ledger.begin_iteration(3);
        ledger.record(2);
        ledger.record(2);
        assert_eq!(ledger.per_iteration().len(), 2);
        assert_eq!(ledger.evaluated_in(3).unwrap(), &BTreeSet::from([2]));
        assert_eq!(ledger.total(), 4);
        assert!(ledger.evaluated_in(1).is_none());
    }

    #[test]
    fn cache_charges_once_per_point() {
        let problem = Constant { p: 2 };
        let mut oracle = CachedOracle::new(&problem, 2);
        let x = Point::zeros(2);
        let y = Point::from_vec(vec![1.0, 0.0]);
        let z = Point::from_vec(vec![0.0, 1.0]);
        oracle.evaluate(1, &x).unwrap();
        oracle.evaluate(1, &x).unwrap();
        assert_eq!(oracle.ledger().total(), 1);
        oracle.evaluate(1, &y).unwrap();
        oracle.evaluate(1, &z).unwrap();
        assert!(oracle.lookup(1, &x).is_none());
        assert_eq!(oracle.history(1).next().unwrap().0, z);
        assert_eq!(oracle.ledger().per_component(), &[0, 3]);
    }

    #[test]
    fn least_squares_value_is_half_square() {
        let v = ComponentValue::least_squares(-3.0, Some(DVector::from_vec(vec![1.0, 2.0])));
        assert_eq!(v.value, 4.5);
        assert_eq!(v.gradient.unwrap(), DVector::from_vec(vec![-3.0, -6.0]));
    }
}
