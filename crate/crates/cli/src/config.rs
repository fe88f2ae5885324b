//! Experiment files, JSON or TOML.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sam_core::models::ModelClass;
use sam_core::solver::{LipschitzMode, SamplingMode, SolverConfig};
use sam_core::testbed::{DatasetMode, Family};

use crate::error::{CliError, Result};

/// Overrides the output directory of every verb except `--out`.
pub const OUT_DIR_ENV: &str = "SAM_OUT_DIR";

/// The file as written. Enumerations are kept as strings so that errors can
/// name the offending key.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: String,
    pub mode: String,
    /// Dimension. Rosenbrock and cube use `n = p`.
    pub n: Option<usize>,
    /// Number of components.
    pub p: Option<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Drive the logistic data and the starting points.
    #[serde(default = "default_seeds")]
    pub instance_seeds: Vec<u64>,
    /// Solver seeds; defaults to `solver.seed`.
    pub seeds: Option<Vec<u64>>,
    /// `uniform` draws from `init_bounds`, `zeros` starts at the origin.
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default = "default_init_bounds")]
    pub init_bounds: [f64; 2],
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub variants: Vec<VariantConfig>,
    #[serde(default)]
    pub machine_sizes: Vec<usize>,
    #[serde(default)]
    pub tolerances: Vec<f64>,
    /// Points on the data-pass grid of `sweep`, from 0 to the budget.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    pub output: Option<PathBuf>,
}

/// Overrides of the base solver settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub name: Option<String>,
    pub sampling_mode: Option<String>,
    pub resource_size: Option<usize>,
    pub lipschitz_mode: Option<String>,
    pub model_class: Option<String>,
}

fn default_lambda() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_init() -> String {
    "uniform".into()
}

fn default_init_bounds() -> [f64; 2] {
    [-1.0, 1.0]
}

fn default_grid_points() -> usize {
    101
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform { low: f64, high: f64 },
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub solver: SolverConfig,
}

/// A checked configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub family: Family,
    pub mode: DatasetMode,
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub instance_seeds: Vec<u64>,
    pub seeds: Vec<u64>,
    pub init: Init,
    pub variants: Vec<Variant>,
    pub machine_sizes: Vec<usize>,
    pub tolerances: Vec<f64>,
    pub grid_points: usize,
    pub output: Option<PathBuf>,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let raw = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => parse_json(&text)?,
            Some("toml") => parse_toml(&text)?,
            _ => parse_json(&text).or_else(|_| parse_toml(&text))?,
        };
        raw.validate()
    }

    /// Adds `offset` to every instance and solver seed.
    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        for s in self.instance_seeds.iter_mut().chain(self.seeds.iter_mut()) {
            *s = s.wrapping_add(offset);
        }
        self
    }

    pub fn budget(&self) -> f64 {
        self.variants.iter().map(|v| v.solver.budget).fold(0.0, f64::max)
    }
}

pub fn parse_json(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn parse_toml(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// `--out`, then the environment, then the file, then `out`.
pub fn output_dir(cli: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(dir) = cli {
        return dir.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    config.map_or_else(|| PathBuf::from("out"), Path::to_path_buf)
}

fn parse_name<T: DeserializeOwned>(field: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_owned()))
        .map_err(|e| CliError::field(field, e.to_string()))
}

impl ExperimentConfig {
    pub fn validate(self) -> Result<Experiment> {
        let family: Family = parse_name("family", &self.family)?;
        let mode: DatasetMode = parse_name("mode", &self.mode)?;
        let (n, p) = match family {
            Family::Logistic => (self.n.unwrap_or(32), self.p.unwrap_or(32)),
            Family::Rosenbrock | Family::Cube => {
                let n = self.n.or(self.p).unwrap_or(16);
                if self.p.is_some_and(|p| p != n) {
                    return Err(CliError::field("p", format!("{family} needs p = n")));
                }
                (n, n)
            }
        };
        if n == 0 || p == 0 {
            return Err(CliError::field("n", "dimensions must be positive"));
        }
        if family == Family::Logistic && !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CliError::field("lambda", "must be nonnegative"));
        }
        if self.instance_seeds.is_empty() {
            return Err(CliError::field("instance_seeds", "must not be empty"));
        }
        let seeds = self.seeds.unwrap_or_else(|| vec![self.solver.seed]);
        if seeds.is_empty() {
            return Err(CliError::field("seeds", "must not be empty"));
        }
        let init = match self.init.as_str() {
            "uniform" => {
                let [low, high] = self.init_bounds;
                if !(low < high && low.is_finite() && high.is_finite()) {
                    return Err(CliError::field("init_bounds", "need finite low < high"));
                }
                Init::Uniform { low, high }
            }
            "zeros" => Init::Zeros,
            other => {
                return Err(CliError::field(
                    "init",
                    format!("unknown start `{other}`, expected `uniform` or `zeros`"),
                ))
            }
        };
        let specs = if self.variants.is_empty() {
            vec![VariantConfig::default()]
        } else {
            self.variants
        };
        let mut variants = Vec::with_capacity(specs.len());
        let mut names = HashSet::new();
        for (k, spec) in specs.into_iter().enumerate() {
            let v = spec.resolve(k, &self.solver, p)?;
            if !names.insert(v.name.clone()) {
                return Err(CliError::field(
                    format!("variants[{k}].name"),
                    format!("duplicate name `{}`", v.name),
                ));
            }
            variants.push(v);
        }
        if self.machine_sizes.contains(&0) {
            return Err(CliError::field("machine_sizes", "entries must be positive"));
        }
        if self.tolerances.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(CliError::field("tolerances", "entries must be finite and nonnegative"));
        }
        if self.grid_points < 2 {
            return Err(CliError::field("grid_points", "need at least 2"));
        }
        Ok(Experiment {
            family,
            mode,
            n,
            p,
            lambda: self.lambda,
            instance_seeds: self.instance_seeds,
            seeds,
            init,
            variants,
            machine_sizes: self.machine_sizes,
            tolerances: self.tolerances,
            grid_points: self.grid_points,
            output: self.output,
        })
    }
}

impl VariantConfig {
    fn resolve(self, k: usize, base: &SolverConfig, p: usize) -> Result<Variant> {
        let field = |key: &str| format!("variants[{k}].{key}");
        let mut solver = base.clone();
        if let Some(s) = &self.sampling_mode {
            solver.sampling_mode = parse_name::<SamplingMode>(&field("sampling_mode"), s)?;
        }
        if let Some(r) = self.resource_size {
            solver.resource_size = r;
        }
        if let Some(s) = &self.lipschitz_mode {
            solver.lipschitz_mode = parse_name::<LipschitzMode>(&field("lipschitz_mode"), s)?;
        }
        if let Some(s) = &self.model_class {
            solver.model_class = parse_name::<ModelClass>(&field("model_class"), s)?;
        }
        if solver.resource_size == 0 || solver.resource_size > p {
            return Err(CliError::field(field("resource_size"), format!("must lie in 1..={p}")));
        }
        let name = match self.name {
            Some(name) => {
                let ok = !name.is_empty()
                    && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
                if !ok {
                    return Err(CliError::field(field("name"), "use letters, digits, `-` and `_`"));
                }
                name
            }
            None => default_name(&solver),
        };
        Ok(Variant { name, solver })
    }
}

fn default_name(solver: &SolverConfig) -> String {
    let sampling = match solver.sampling_mode {
        SamplingMode::Uniform => "uniform",
        SamplingMode::Dynamic => "dynamic",
        SamplingMode::Full => "full",
    };
    let mut name = format!("{}-{sampling}-r{}", solver.model_class.name(), solver.resource_size);
    if solver.lipschitz_mode == LipschitzMode::Secant {
        name.push_str("-secant");
    }
    name
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{"family": "rosenbrock", "mode": "balanced"}"#.to_owned()
    }

    #[test]
    fn defaults_fill_in() {
        let e = parse_json(&minimal()).unwrap().validate().unwrap();
        assert_eq!((e.n, e.p), (16, 16));
        assert_eq!(e.seeds, vec![0]);
        assert_eq!(e.variants.len(), 1);
        assert_eq!(e.variants[0].name, "fo-dynamic-r1");
        assert_eq!(e.init, Init::Uniform { low: -1.0, high: 1.0 });
    }

    #[test]
    fn invalid_mode_names_the_field() {
        let raw = parse_json(r#"{"family": "cube", "mode": "lopsided"}"#).unwrap();
        let err = raw.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("`mode`"), "{err}");
    }

    #[test]
    fn invalid_variant_sampling_names_the_field() {
        let raw = parse_json(
            r#"{"family": "cube", "mode": "balanced", "variants": [{"sampling_mode": "greedy"}]}"#,
        )
        .unwrap();
        let err = raw.validate().unwrap_err();
        assert!(err.to_string().contains("variants[0].sampling_mode"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_json(r#"{"family": "cube", "mode": "balanced", "colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = parse_toml("family = \"cube\"\nmode = \"balanced\"\n[solver]\ndelta = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
    }

    #[test]
    fn toml_and_json_agree() {
        let j = parse_json(
            r#"{"family": "logistic", "mode": "imbalanced", "n": 4, "p": 6,
                "solver": {"budget": 50.0, "model_class": "fo"},
                "variants": [{"name": "a", "resource_size": 2}]}"#,
        )
        .unwrap()
        .validate()
        .unwrap();
        let t = parse_toml(
            "family = \"logistic\"\nmode = \"imbalanced\"\nn = 4\np = 6\n\
             [solver]\nbudget = 50.0\nmodel_class = \"fo\"\n\
             [[variants]]\nname = \"a\"\nresource_size = 2\n",
        )
        .unwrap()
        .validate()
        .unwrap();
        assert_eq!(j, t);
        assert_eq!(j.variants[0].solver.resource_size, 2);
    }

    #[test]
    fn residual_families_need_square_shape() {
        let raw = parse_json(r#"{"family": "cube", "mode": "balanced", "n": 4, "p": 5}"#).unwrap();
        assert!(raw.validate().unwrap_err().to_string().contains("`p`"));
    }

    #[test]
    fn duplicate_variant_names_are_rejected() {
        let raw = parse_json(
            r#"{"family": "cube", "mode": "balanced", "variants": [{"name": "x"}, {"name": "x"}]}"#,
        )
        .unwrap();
        assert!(raw.validate().is_err());
    }

    #[test]
    fn seed_offset_shifts_everything() {
        let mut raw = parse_json(&minimal()).unwrap();
        raw.instance_seeds = vec![1, 2];
        raw.seeds = Some(vec![5]);
        let e = raw.validate().unwrap().with_seed_offset(10);
        assert_eq!(e.instance_seeds, vec![11, 12]);
        assert_eq!(e.seeds, vec![15]);
    }

    #[test]
    fn output_precedence() {
        assert_eq!(
            output_dir(Some(Path::new("a")), Some(Path::new("b"))),
            PathBuf::from("a")
        );
    }
}
