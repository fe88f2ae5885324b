//! Trust-region method on stochastic average models.
//!
//! Each component keeps a model built at its own (possibly stale) center. An
//! iteration refreshes the models of a sampled batch at the incumbent, forms
//! the importance-weighted correction of the average model, takes a
//! trust-region step on it and accepts or rejects the step by comparing the
//! predicted decrease with an estimate built from a second, independent
//! batch.

mod ameliorated;
mod subproblem;

use std::mem;

use serde::{Deserialize, Serialize};

use crate::bounds::{bounds_for, BoundInputs, GnBoundForm};
use crate::models::{
    build_first_order, build_gauss_newton, build_interp_model_as, ComponentModel, GeometryConfig,
    ModelClass,
};
use crate::problem::{effective_data_passes, objective_uncounted, CachedOracle, EvaluationLedger};
use crate::quadratic::Quadratic;
use crate::rng::{self, Stream};
use crate::sampler::{dynamic_batch, uniform_batch, Batch};
use crate::{Error, FiniteSumProblem, Point, Result};

pub use ameliorated::{sum_models, AmelioratedModel, Correction};
pub use subproblem::{model_decrease, solve_tr_subproblem};

/// Predicted decreases at or below this are treated as no decrease.
pub const MIN_PREDICTED_DECREASE: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Uniformly random subsets of size `r`.
    Uniform,
    /// Batches grown in steps of `r` until the variance bound is met.
    Dynamic,
    /// Every component, every iteration.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LipschitzMode {
    /// Constants supplied by the problem.
    Known,
    /// Running secant estimates, initialized at one.
    Secant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub delta0: f64,
    pub delta_max: f64,
    pub gamma: f64,
    pub eta1: f64,
    /// `None` leaves the gradient condition of the acceptance test off.
    pub eta2: Option<f64>,
    pub model_class: ModelClass,
    pub sampling_mode: SamplingMode,
    /// Computational resource size `r`.
    pub resource_size: usize,
    /// Accuracy constant `C`; `None` uses the sum of the Lipschitz constants.
    pub accuracy: Option<f64>,
    pub pi_prob: f64,
    pub lipschitz_mode: LipschitzMode,
    /// Maximum number of effective data passes.
    pub budget: f64,
    /// Target optimality gap, used when the optimal value is known.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub gn_bound_form: GnBoundForm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            delta_max: 1000.0,
            gamma: 2.0,
            eta1: 0.1,
            eta2: None,
            model_class: ModelClass::Fo,
            sampling_mode: SamplingMode::Dynamic,
            resource_size: 1,
            accuracy: None,
            pi_prob: 0.99,
            lipschitz_mode: LipschitzMode::Known,
            budget: 100.0,
            tol: 0.0,
            max_iterations: 100_000,
            seed: 0,
            geometry: GeometryConfig::default(),
            gn_bound_form: GnBoundForm::Leading,
        }
    }
}

impl SolverConfig {
    /// Checks the parameters on their own and against `problem`.
    pub fn validate(&self, problem: &dyn FiniteSumProblem) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0 < self.delta_max) {
            return Err(Error::invalid("delta0", "need 0 < delta0 < delta_max"));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::invalid("gamma", "must exceed 1"));
        }
        if !(self.eta1 > 0.0 && self.eta1 < 1.0) {
            return Err(Error::invalid("eta1", "must lie in (0, 1)"));
        }
        if let Some(eta2) = self.eta2 {
            if !(eta2 > 0.0) {
                return Err(Error::invalid("eta2", "must be positive"));
            }
        }
        if !(self.pi_prob > 0.5 && self.pi_prob < 1.0) {
            return Err(Error::invalid("pi_prob", "must lie in (1/2, 1)"));
        }
        if let Some(c) = self.accuracy {
            if !(c > 0.0) {
                return Err(Error::invalid("accuracy", "must be positive"));
            }
        }
        if !(self.budget > 0.0) {
            return Err(Error::invalid("budget", "must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol", "must be nonnegative"));
        }
        if !(self.geometry.reuse_radius >= 0.0
            && self.geometry.pivot_threshold > 0.0
            && self.geometry.pivot_threshold <= 1.0)
        {
            return Err(Error::invalid("geometry", "need reuse_radius ≥ 0 and pivot_threshold in (0, 1]"));
        }
        let p = problem.num_components();
        if p == 0 || problem.dim() == 0 {
            return Err(Error::invalid("problem", "needs at least one component and variable"));
        }
        if self.resource_size == 0 || self.resource_size > p {
            return Err(Error::BatchSizeOutOfRange {
                batch: self.resource_size,
                count: p,
            });
        }
        let caps = problem.capabilities();
        let class = self.model_class;
        if class.is_gauss_newton() && !caps.is_least_squares {
            return Err(Error::MissingCapability("residuals"));
        }
        if matches!(class, ModelClass::Fo | ModelClass::Fogn) && !caps.has_gradient {
            return Err(Error::MissingCapability("gradients"));
        }
        if self.lipschitz_mode == LipschitzMode::Known {
            match problem.lipschitz() {
                None => return Err(Error::MissingCapability("Lipschitz constants")),
                Some(l) if l.len() != p => {
                    return Err(Error::invalid("lipschitz", "need one constant per component"))
                }
                Some(l) if l.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
                    return Err(Error::invalid("lipschitz", "constants must be finite and nonnegative"))
                }
                Some(_) => {}
            }
            if caps.is_least_squares && !class.is_gauss_newton() {
                return Err(Error::invalid(
                    "lipschitz_mode",
                    "known constants of a least-squares problem bound the residual gradients, \
                     which only the Gauss-Newton classes use",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub accepted: bool,
    /// `NaN` when no estimate was formed.
    pub rho: f64,
    /// Radius used in this iteration.
    pub delta: f64,
    pub next_delta: f64,
    pub batch_i: Vec<usize>,
    pub batch_j: Vec<usize>,
    pub step: Vec<f64>,
    pub step_norm: f64,
    pub predicted_decrease: f64,
    pub estimated_decrease: f64,
    /// The full set was drawn to seed the secant estimates.
    pub bootstrap: bool,
    /// Components evaluated during the iteration.
    pub evaluated: Vec<usize>,
    pub data_passes: f64,
    pub batch_count: u64,
}

/// The iterate, the component models and everything the next iteration needs.
pub struct SolverState<'a> {
    config: SolverConfig,
    oracle: CachedOracle<'a>,
    x: Point,
    delta: f64,
    models: Vec<ComponentModel>,
    avg: Quadratic,
    lipschitz: Vec<f64>,
    k: usize,
    first_success: Option<usize>,
    bootstrapped: bool,
    rng_i: Stream,
    rng_j: Stream,
}

impl<'a> SolverState<'a> {
    /// Builds every component model at `x0`; these evaluations form
    /// iteration zero.
    pub fn new(problem: &'a dyn FiniteSumProblem, x0: &Point, config: &SolverConfig) -> Result<Self> {
        config.validate(problem)?;
        let n = problem.dim();
        let p = problem.num_components();
        if x0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x0.len(),
            });
        }
        let lipschitz = match config.lipschitz_mode {
            LipschitzMode::Known => problem.lipschitz().map(<[f64]>::to_vec).unwrap_or_default(),
            LipschitzMode::Secant => vec![1.0; p],
        };
        let mut state = Self {
            config: config.clone(),
            oracle: CachedOracle::new(problem, 3 * (n + 1)),
            x: x0.clone(),
            delta: config.delta0,
            models: Vec::with_capacity(p),
            avg: Quadratic::zeros(n),
            lipschitz,
            k: 0,
            first_success: None,
            bootstrapped: false,
            rng_i: rng::stream(config.seed, "sample_i"),
            rng_j: rng::stream(config.seed, "sample_j"),
        };
        state.oracle.ledger_mut().begin_iteration(0);
        for i in 0..p {
            let model = state.build_model(i, None)?;
            model.add_global(&mut state.avg, 1.0);
            state.models.push(model);
        }
        let batches = p.div_ceil(config.resource_size) as u64;
        state.oracle.ledger_mut().add_batches(batches);
        Ok(state)
    }

    pub fn x(&self) -> &Point {
        &self.x
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn problem(&self) -> &'a dyn FiniteSumProblem {
        self.oracle.problem()
    }

    pub fn models(&self) -> &[ComponentModel] {
        &self.models
    }

    /// The incrementally maintained `Σ_i m_i(·; c_i)` in global coordinates.
    pub fn average_model(&self) -> &Quadratic {
        &self.avg
    }

    /// The current Lipschitz constants or their estimates.
    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn ledger(&self) -> &EvaluationLedger {
        self.oracle.ledger()
    }

    pub fn into_ledger(self) -> EvaluationLedger {
        self.oracle.into_ledger()
    }

    pub fn first_success(&self) -> Option<usize> {
        self.first_success
    }

    fn p(&self) -> usize {
        self.oracle.problem().num_components()
    }

    fn build_model(&mut self, i: usize, prior: Option<&ComponentModel>) -> Result<ComponentModel> {
        let class = self.config.model_class;
        match class {
            ModelClass::Fo => build_first_order(&mut self.oracle, i, &self.x),
            ModelClass::Fogn => build_gauss_newton(&mut self.oracle, i, &self.x),
            ModelClass::Zo | ModelClass::Zogn => build_interp_model_as(
                &mut self.oracle,
                i,
                &self.x,
                self.delta,
                prior.and_then(|m| m.interp.as_ref()),
                &self.config.geometry,
                class,
            ),
        }
    }

    fn accuracy(&self) -> f64 {
        self.config
            .accuracy
            .unwrap_or_else(|| self.lipschitz.iter().sum::<f64>())
            .max(f64::MIN_POSITIVE)
    }

    fn draw(&mut self, bounds: Option<Vec<f64>>, second: bool) -> Result<Batch> {
        let p = self.p();
        let r = self.config.resource_size;
        let accuracy = self.accuracy();
        let rng = if second { &mut self.rng_j } else { &mut self.rng_i };
        match (self.config.sampling_mode, bounds) {
            (SamplingMode::Full, _) => Ok(Batch::full(p)),
            (SamplingMode::Uniform, _) => uniform_batch(p, r, rng),
            (SamplingMode::Dynamic, Some(d)) => {
                dynamic_batch(&d, r, self.delta, accuracy, self.config.pi_prob, rng)
            }
            (SamplingMode::Dynamic, None) => unreachable!("dynamic draws need bounds"),
        }
    }

    fn step_bounds(&self) -> Vec<f64> {
        self.models
            .iter()
            .zip(&self.lipschitz)
            .map(|(m, &l)| {
                let inputs = BoundInputs::for_model(m, l, &self.x, self.delta);
                bounds_for(m.class, self.config.gn_bound_form, &inputs).step_bound
            })
            .collect()
    }

    fn estimate_bounds(&self, s: &Point) -> Vec<f64> {
        self.models
            .iter()
            .zip(&self.lipschitz)
            .map(|(m, &l)| {
                let inputs = BoundInputs::for_model(m, l, &self.x, self.delta).with_step(m, &self.x, s);
                bounds_for(m.class, self.config.gn_bound_form, &inputs).estimate_bound
            })
            .collect()
    }

    /// Rebuilds the models of `batch` at the incumbent and returns the
    /// corrections, keeping the average model in step.
    fn refresh(&mut self, batch: &Batch, assign_secant: bool) -> Result<Vec<Correction>> {
        let secant = self.config.lipschitz_mode == LipschitzMode::Secant;
        let mut corrections = Vec::with_capacity(batch.len());
        for &i in &batch.indices {
            let old_snapshot = self.models[i].clone();
            let new = self.build_model(i, Some(&old_snapshot))?;
            if secant {
                update_lipschitz_secant(&mut self.lipschitz[i], &new, &old_snapshot, assign_secant);
            }
            let old = mem::replace(&mut self.models[i], new.clone());
            old.add_global(&mut self.avg, -1.0);
            new.add_global(&mut self.avg, 1.0);
            corrections.push(Correction {
                index: i,
                new_model: new,
                old_model: old,
                pi: batch.pi.pi[i],
            });
        }
        Ok(corrections)
    }

    /// Performs one iteration.
    pub fn iterate(&mut self) -> Result<IterationReport> {
        self.k += 1;
        let k = self.k;
        self.oracle.ledger_mut().begin_iteration(k);
        let r = self.config.resource_size;
        let delta = self.delta;
        let x = self.x.clone();

        let bootstrap = self.config.lipschitz_mode == LipschitzMode::Secant
            && !self.bootstrapped
            && self.first_success.is_some_and(|k0| k0 + 1 == k);
        let batch_i = if bootstrap {
            Batch::full(self.p())
        } else {
            let bounds = (self.config.sampling_mode == SamplingMode::Dynamic).then(|| self.step_bounds());
            self.draw(bounds, false)?
        };
        let base = self.avg.clone();
        let corrections = self.refresh(&batch_i, bootstrap)?;
        if bootstrap {
            self.bootstrapped = true;
        }
        let model = AmelioratedModel::build(&base, &x, corrections)?;
        let mut batches = batch_i.len().div_ceil(r) as u64;

        let s = solve_tr_subproblem(&model.local, delta);
        let predicted = model_decrease(&model.local, &s);
        let step_norm = s.norm();
        let mut batch_j = Vec::new();
        let mut estimated = f64::NAN;
        let mut rho = f64::NAN;
        let mut accepted = false;
        if step_norm > 0.0 && predicted > MIN_PREDICTED_DECREASE && predicted.is_finite() {
            let bounds = (self.config.sampling_mode == SamplingMode::Dynamic)
                .then(|| self.estimate_bounds(&s));
            let batch = self.draw(bounds, true)?;
            batches += batch.len().div_ceil(r) as u64;
            let trial = &x + &s;
            estimated = self.estimate_decrease(&batch, &x, &trial, &s)?;
            rho = estimated / predicted;
            let gradient_ok = self
                .config
                .eta2
                .is_none_or(|eta2| delta <= eta2 * model.gradient_at_anchor().norm());
            accepted = rho >= self.config.eta1 && gradient_ok;
            if accepted {
                self.x = trial;
            }
            batch_j = batch.indices;
        }
        self.delta = if accepted {
            (self.config.gamma * delta).min(self.config.delta_max)
        } else {
            delta / self.config.gamma
        };
        if accepted && self.first_success.is_none() {
            self.first_success = Some(k);
        }
        self.oracle.ledger_mut().add_batches(batches);
        let ledger = self.oracle.ledger();
        Ok(IterationReport {
            iteration: k,
            accepted,
            rho,
            delta,
            next_delta: self.delta,
            batch_i: batch_i.indices,
            batch_j,
            step: s.iter().copied().collect(),
            step_norm,
            predicted_decrease: predicted,
            estimated_decrease: estimated,
            bootstrap,
            evaluated: ledger
                .evaluated_in(k)
                .map(|set| set.iter().copied().collect())
                .unwrap_or_default(),
            data_passes: effective_data_passes(ledger, ledger.num_components()),
            batch_count: ledger.batch_count(),
        })
    }

    /// `m̂_J(x) − m̂_J(x + s)` where each sampled component contributes its
    /// model error at both points, weighted by `1/π_j`.
    fn estimate_decrease(&mut self, batch: &Batch, x: &Point, trial: &Point, s: &Point) -> Result<f64> {
        let local = self.avg.recentered(x);
        let mut estimate = model_decrease(&local, s);
        for &j in &batch.indices {
            let at_x = self.oracle.evaluate(j, x)?.value;
            let at_trial = self.oracle.evaluate(j, trial)?.value;
            let m = &self.models[j];
            let error = (at_x - m.value(x)) - (at_trial - m.value(trial));
            estimate += error / batch.pi.pi[j];
        }
        Ok(estimate)
    }
}

/// Secant estimate of the Lipschitz constant of component `i` from its two
/// most recent model gradients, each taken at its own center. The first
/// estimate after the bootstrap replaces the initial value; later ones only
/// raise it. Coinciding centers leave the estimate unchanged.
pub fn update_lipschitz_secant(
    estimate: &mut f64,
    new: &ComponentModel,
    old: &ComponentModel,
    assign: bool,
) {
    let dist = (&new.center - &old.center).norm();
    if dist == 0.0 || !dist.is_finite() {
        return;
    }
    let secant = (&new.grad - &old.grad).norm() / dist;
    if !secant.is_finite() {
        return;
    }
    *estimate = if assign { secant } else { estimate.max(secant) };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub f_value: f64,
    /// `f − f*`, or `f` when the optimal value is unknown.
    pub f_gap: f64,
    pub effective_data_passes: f64,
    pub batch_size_i: usize,
    pub batch_size_j: usize,
    pub delta: f64,
    pub rho: f64,
    pub accepted: bool,
    pub bootstrap: bool,
    pub batch_count: u64,
    pub evaluated: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    BudgetExhausted,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub final_point: Vec<f64>,
    pub final_value: f64,
    pub f_star: Option<f64>,
    pub stop: StopReason,
    pub iterations: usize,
    pub total_evaluations: u64,
    pub batch_count: u64,
    pub evaluations_per_component: Vec<u64>,
    pub lipschitz: Vec<f64>,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn final_gap(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.f_gap)
    }

    /// Data passes at the first trace row with gap at most `tol`.
    pub fn passes_to(&self, tol: f64) -> Option<f64> {
        self.trace
            .iter()
            .find(|r| r.f_gap <= tol)
            .map(|r| r.effective_data_passes)
    }
}

/// Iterates from `x0` until the gap to `f_star` reaches `config.tol`, the
/// data-pass budget is spent or the iteration limit is hit. The true
/// objective recorded in the trace is computed without charge.
pub fn run(
    problem: &dyn FiniteSumProblem,
    x0: &Point,
    f_star: Option<f64>,
    config: &SolverConfig,
) -> Result<RunResult> {
    let mut state = SolverState::new(problem, x0, config)?;
    let gap = |f: f64| f - f_star.unwrap_or(0.0);
    let p = problem.num_components();
    let mut f = objective_uncounted(problem, state.x());
    let ledger = state.ledger();
    let mut trace = vec![TraceRecord {
        iteration: 0,
        f_value: f,
        f_gap: gap(f),
        effective_data_passes: effective_data_passes(ledger, p),
        batch_size_i: p,
        batch_size_j: 0,
        delta: config.delta0,
        rho: f64::NAN,
        accepted: false,
        bootstrap: false,
        batch_count: ledger.batch_count(),
        evaluated: (0..p).collect(),
    }];
    let stop = loop {
        let last = trace.last().expect("trace starts with the initial row");
        if f_star.is_some() && last.f_gap <= config.tol {
            break StopReason::Converged;
        }
        if last.effective_data_passes >= config.budget {
            break StopReason::BudgetExhausted;
        }
        if state.iteration() >= config.max_iterations {
            break StopReason::IterationLimit;
        }
        let report = state.iterate()?;
        if report.accepted {
            f = objective_uncounted(problem, state.x());
        }
        trace.push(TraceRecord {
            iteration: report.iteration,
            f_value: f,
            f_gap: gap(f),
            effective_data_passes: report.data_passes,
            batch_size_i: report.batch_i.len(),
            batch_size_j: report.batch_j.len(),
            delta: report.delta,
            rho: report.rho,
            accepted: report.accepted,
            bootstrap: report.bootstrap,
            batch_count: report.batch_count,
            evaluated: report.evaluated,
        });
    };
    let iterations = state.iteration();
    let final_point = state.x().iter().copied().collect();
    let lipschitz = state.lipschitz().to_vec();
    let ledger = state.into_ledger();
    Ok(RunResult {
        trace,
        final_point,
        final_value: f,
        f_star,
        stop,
        iterations,
        total_evaluations: ledger.total(),
        batch_count: ledger.batch_count(),
        evaluations_per_component: ledger.per_component().to_vec(),
        lipschitz,
    })
}
