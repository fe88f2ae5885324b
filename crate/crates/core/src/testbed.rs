//! Synthetic test problems: regularized logistic regression, generalized
//! Rosenbrock and cube functions, each in three conditioning modes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::problem::{Capabilities, ComponentValue, FiniteSumProblem};
use crate::{rng, Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    Balanced,
    Progressive,
    Imbalanced,
}

impl DatasetMode {
    pub const ALL: [DatasetMode; 3] = [Self::Balanced, Self::Progressive, Self::Imbalanced];

    pub fn name(self) -> &'static str {
        match self {
            Self::Balanced => "balanced",
            Self::Progressive => "progressive",
            Self::Imbalanced => "imbalanced",
        }
    }
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("mode", format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    Rosenbrock,
    Cube,
}

impl Family {
    pub const ALL: [Family; 3] = [Self::Logistic, Self::Rosenbrock, Self::Cube];

    pub fn name(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::Rosenbrock => "rosenbrock",
            Self::Cube => "cube",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("family", format!("unknown family `{s}`")))
    }
}

/// `F_i(x) = (1/p) log(1 + exp(−y_i a_iᵀx)) + λ/(2p) ‖x‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticProblem {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    lambda: f64,
    #[serde(skip)]
    lipschitz: Vec<f64>,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticProblem {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>, lambda: f64) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::invalid("labels", "need one label per feature vector"));
        }
        let n = features[0].len();
        if n == 0 || features.iter().any(|a| a.len() != n) {
            return Err(Error::invalid("features", "ragged or empty feature vectors"));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        let p = features.len() as f64;
        let lipschitz = features
            .iter()
            .map(|a| (a.iter().map(|v| v * v).sum::<f64>() / 4.0 + lambda) / p)
            .collect();
        Ok(Self {
            features,
            labels,
            lambda,
            lipschitz,
        })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn margin(&self, i: usize, x: &Point) -> f64 {
        self.labels[i] * self.features[i].iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Gradient and Hessian of the full objective.
    pub fn full_derivatives(&self, x: &Point) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let p = self.features.len() as f64;
        let mut g = x * self.lambda;
        let mut h = DMatrix::identity(n, n) * self.lambda;
        for (i, a) in self.features.iter().enumerate() {
            let a = DVector::from_column_slice(a);
            let s = sigmoid(-self.margin(i, x));
            g.axpy(-self.labels[i] * s / p, &a, 1.0);
            h.ger(s * (1.0 - s) / p, &a, &a, 1.0);
        }
        (g, h)
    }

    /// Minimizes the full objective by damped Newton iterations until the
    /// gradient norm drops to `tol`. Returns the minimizer and minimum.
    pub fn reference_minimum(&self, tol: f64) -> (Point, f64) {
        let n = self.features[0].len();
        let f = |x: &Point| crate::problem::objective_uncounted(self, x);
        let mut x = Point::zeros(n);
        let mut fx = f(&x);
        for _ in 0..200 {
            let (g, h) = self.full_derivatives(&x);
            if g.norm() <= tol {
                break;
            }
            let step = match h.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => -&g,
            };
            let slope = g.dot(&step);
            let mut t = 1.0;
            loop {
                let trial = &x + &step * t;
                let ft = f(&trial);
                if ft <= fx + 1e-4 * t * slope || t < 1e-12 {
                    if ft <= fx {
                        x = trial;
                        fx = ft;
                    }
                    break;
                }
                t *= 0.5;
            }
            if t < 1e-12 {
                break;
            }
        }
        (x, fx)
    }
}

impl FiniteSumProblem for LogisticProblem {
    fn dim(&self) -> usize {
        self.features[0].len()
    }

    fn num_components(&self) -> usize {
        self.features.len()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_gradient: true,
            is_least_squares: false,
        }
    }

    fn lipschitz(&self) -> Option<&[f64]> {
        Some(&self.lipschitz)
    }

    fn component(&self, i: usize, x: &Point) -> ComponentValue {
        let p = self.features.len() as f64;
        let z = self.margin(i, x);
        let value = softplus(-z) / p + self.lambda / (2.0 * p) * x.norm_squared();
        let scale = -self.labels[i] * sigmoid(-z) / p;
        let mut gradient = x * (self.lambda / p);
        for (g, a) in gradient.iter_mut().zip(&self.features[i]) {
            *g += scale * a;
        }
        ComponentValue::with_gradient(value, gradient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualKind {
    Rosenbrock,
    Cube,
}

/// Least-squares problems with weighted residuals `f_i`; `F_i = ½ f_i²`.
///
/// Rosenbrock (one-based `i`, even `p`): odd `i` has
/// `f_i = 10 α_i (x_i² − x_{i+1})`, even `i` has `f_i = α_i (x_{i−1} − 1)`.
/// Cube: `f_1 = α_1 (x_1 − 1)` and `f_i = α_i (x_i − x_{i−1}³)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProblem {
    kind: ResidualKind,
    alpha: Vec<f64>,
    #[serde(skip)]
    lipschitz: Vec<f64>,
}

impl ResidualProblem {
    pub fn new(kind: ResidualKind, alpha: Vec<f64>) -> Result<Self> {
        let p = alpha.len();
        match kind {
            ResidualKind::Rosenbrock if p == 0 || p % 2 == 1 => {
                return Err(Error::invalid("p", "Rosenbrock needs a positive even size"))
            }
            ResidualKind::Cube if p < 2 => {
                return Err(Error::invalid("p", "cube needs at least two components"))
            }
            _ => {}
        }
        let lipschitz = alpha
            .iter()
            .enumerate()
            .map(|(i, a)| match kind {
                ResidualKind::Rosenbrock if i % 2 == 0 => 20.0 * a,
                ResidualKind::Rosenbrock => 0.0,
                ResidualKind::Cube if i == 0 => 0.0,
                ResidualKind::Cube => 30.0 * a,
            })
            .collect();
        Ok(Self {
            kind,
            alpha,
            lipschitz,
        })
    }

    pub fn kind(&self) -> ResidualKind {
        self.kind
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

impl FiniteSumProblem for ResidualProblem {
    fn dim(&self) -> usize {
        self.alpha.len()
    }

    fn num_components(&self) -> usize {
        self.alpha.len()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_gradient: true,
            is_least_squares: true,
        }
    }

    fn lipschitz(&self) -> Option<&[f64]> {
        Some(&self.lipschitz)
    }

    fn component(&self, i: usize, x: &Point) -> ComponentValue {
        let a = self.alpha[i];
        let mut grad = DVector::zeros(x.len());
        let residual = match self.kind {
            ResidualKind::Rosenbrock if i % 2 == 0 => {
                grad[i] = 20.0 * a * x[i];
                grad[i + 1] = -10.0 * a;
                10.0 * a * (x[i] * x[i] - x[i + 1])
            }
            ResidualKind::Rosenbrock => {
                grad[i - 1] = a;
                a * (x[i - 1] - 1.0)
            }
            ResidualKind::Cube if i == 0 => {
                grad[0] = a;
                a * (x[0] - 1.0)
            }
            ResidualKind::Cube => {
                grad[i] = a;
                grad[i - 1] = -3.0 * a * x[i - 1] * x[i - 1];
                a * (x[i] - x[i - 1].powi(3))
            }
        };
        ComponentValue::least_squares(residual, Some(grad))
    }
}

/// Weights `α` for the residual families, indexed from zero.
pub fn residual_weights(p: usize, mode: DatasetMode) -> Vec<f64> {
    (0..p)
        .map(|i| match mode {
            DatasetMode::Balanced => 1.0,
            DatasetMode::Progressive => (i + 1) as f64,
            DatasetMode::Imbalanced if i + 2 >= p => p as f64,
            DatasetMode::Imbalanced => 1.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub family: Family,
    pub mode: DatasetMode,
    pub seed: u64,
}

/// Replayable description of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ProblemDescriptor {
    Logistic {
        mode: DatasetMode,
        seed: u64,
        n: usize,
        p: usize,
        data: LogisticProblem,
    },
    Rosenbrock {
        mode: DatasetMode,
        p: usize,
        alpha: Vec<f64>,
    },
    Cube {
        mode: DatasetMode,
        p: usize,
        alpha: Vec<f64>,
    },
}

pub enum AnyProblem {
    Logistic(LogisticProblem),
    Residual(ResidualProblem),
}

impl AnyProblem {
    pub fn as_dyn(&self) -> &dyn FiniteSumProblem {
        match self {
            Self::Logistic(p) => p,
            Self::Residual(p) => p,
        }
    }
}

pub struct GeneratedProblem {
    pub problem: AnyProblem,
    pub x_star: Option<Point>,
    pub f_star: Option<f64>,
    pub lipschitz: Vec<f64>,
    pub provenance: Provenance,
}

impl GeneratedProblem {
    pub fn problem(&self) -> &dyn FiniteSumProblem {
        self.problem.as_dyn()
    }

    pub fn descriptor(&self) -> ProblemDescriptor {
        let mode = self.provenance.mode;
        match &self.problem {
            AnyProblem::Logistic(data) => ProblemDescriptor::Logistic {
                mode,
                seed: self.provenance.seed,
                n: data.dim(),
                p: data.num_components(),
                data: data.clone(),
            },
            AnyProblem::Residual(r) => match r.kind {
                ResidualKind::Rosenbrock => ProblemDescriptor::Rosenbrock {
                    mode,
                    p: r.alpha.len(),
                    alpha: r.alpha.clone(),
                },
                ResidualKind::Cube => ProblemDescriptor::Cube {
                    mode,
                    p: r.alpha.len(),
                    alpha: r.alpha.clone(),
                },
            },
        }
    }

    /// Rebuilds an instance from its descriptor. The logistic minimum is
    /// recomputed.
    pub fn from_descriptor(descriptor: ProblemDescriptor) -> Result<Self> {
        match descriptor {
            ProblemDescriptor::Logistic { mode, seed, data, .. } => {
                let data = LogisticProblem::new(data.features, data.labels, data.lambda)?;
                Ok(finish_logistic(data, mode, seed))
            }
            ProblemDescriptor::Rosenbrock { mode, alpha, .. } => {
                residual_instance(ResidualKind::Rosenbrock, alpha, mode)
            }
            ProblemDescriptor::Cube { mode, alpha, .. } => {
                residual_instance(ResidualKind::Cube, alpha, mode)
            }
        }
    }
}

fn finish_logistic(data: LogisticProblem, mode: DatasetMode, seed: u64) -> GeneratedProblem {
    let (x_star, f_star) = data.reference_minimum(1e-12);
    GeneratedProblem {
        lipschitz: data.lipschitz.clone(),
        problem: AnyProblem::Logistic(data),
        x_star: Some(x_star),
        f_star: Some(f_star),
        provenance: Provenance {
            family: Family::Logistic,
            mode,
            seed,
        },
    }
}

fn residual_instance(
    kind: ResidualKind,
    alpha: Vec<f64>,
    mode: DatasetMode,
) -> Result<GeneratedProblem> {
    let p = alpha.len();
    let problem = ResidualProblem::new(kind, alpha)?;
    Ok(GeneratedProblem {
        lipschitz: problem.lipschitz.clone(),
        problem: AnyProblem::Residual(problem),
        x_star: Some(Point::from_element(p, 1.0)),
        f_star: Some(0.0),
        provenance: Provenance {
            family: match kind {
                ResidualKind::Rosenbrock => Family::Rosenbrock,
                ResidualKind::Cube => Family::Cube,
            },
            mode,
            seed: 0,
        },
    })
}

/// Random logistic regression instance. The reference minimum is computed to
/// gradient norm `1e-12`.
pub fn gen_logistic(
    n: usize,
    p: usize,
    lambda: f64,
    mode: DatasetMode,
    seed: u64,
) -> Result<GeneratedProblem> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("n", "dimensions must be positive"));
    }
    let mut rng = rng::stream(seed, "logistic-data");
    let x_star: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut features = Vec::with_capacity(p);
    for i in 0..p {
        let scale = match mode {
            DatasetMode::Balanced => 1.0,
            DatasetMode::Progressive => (i + 1) as f64,
            DatasetMode::Imbalanced if i + 1 == p => 100.0,
            DatasetMode::Imbalanced => 1.0,
        };
        let a: Vec<f64> = (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        features.push(a);
    }
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let labels = features
        .iter()
        .map(|a| {
            let z: f64 = a.iter().zip(&x_star).map(|(u, v)| u * v).sum();
            if unit.sample(&mut rng) < sigmoid(z) {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let data = LogisticProblem::new(features, labels, lambda)?;
    Ok(finish_logistic(data, mode, seed))
}

pub fn gen_rosenbrock(p: usize, mode: DatasetMode) -> Result<GeneratedProblem> {
    residual_instance(ResidualKind::Rosenbrock, residual_weights(p, mode), mode)
}

pub fn gen_cube(p: usize, mode: DatasetMode) -> Result<GeneratedProblem> {
    residual_instance(ResidualKind::Cube, residual_weights(p, mode), mode)
}

/// Point with coordinates drawn uniformly from `[low, high]`.
pub fn random_init(dim: usize, low: f64, high: f64, seed: u64) -> Result<Point> {
    if !(low < high) {
        return Err(Error::invalid("low", "must be below high"));
    }
    let dist = Uniform::new_inclusive(low, high).expect("valid range");
    let mut rng = rng::stream(seed, "initial-point");
    Ok(Point::from_iterator(dim, (0..dim).map(|_| dist.sample(&mut rng))))
}
