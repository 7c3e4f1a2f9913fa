//! JSON experiment configs. Unknown keys are rejected; the `experiment`
//! key selects the schema.

use std::path::{Path, PathBuf};

use minimax_core::affinity::ParamRegion;
use minimax_core::linear::LinearProblem;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Random Gaussian singleton problems: `x_i ~ N(0, I_n)`, `y_i = A x_i`
/// with `A` of unit spectral norm, `g = e_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSingletonsConfig {
    pub experiment: String,
    pub n: usize,
    pub m: usize,
    /// Number of singletons `I`.
    #[serde(rename = "I")]
    pub num_sets: usize,
    pub epsilon: f64,
    pub k_grid: Vec<usize>,
    /// Random problem instances.
    pub instances: usize,
    /// Simulated estimates per (instance, K).
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Coverage of the linear estimator on a user-supplied problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomLinearConfig {
    pub experiment: String,
    pub problem: LinearProblem,
    /// Overrides the problem's K; defaults to `[problem.K]`.
    #[serde(default)]
    pub k_grid: Option<Vec<usize>>,
    /// Signals per set, drawn as vertices of `X_l` for random costs.
    #[serde(default = "one")]
    pub points_per_set: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinearConfig {
    GaussianSingletons(GaussianSingletonsConfig),
    Custom(CustomLinearConfig),
}

/// Hazard rate `s_j` under censoring `theta I + (1 - theta) R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardConfig {
    pub experiment: String,
    #[serde(rename = "M")]
    pub m: usize,
    /// 1-based index of the hazard rate.
    pub j: usize,
    pub thetas: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub epsilon: f64,
    pub trials: usize,
    /// Maximal number of bisection steps.
    #[serde(rename = "L")]
    pub l: usize,
    /// Shrinking step of the segment search; defaults to a quarter of the
    /// final localizer width `(b0 - a0) / 2^L`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

pub const LINEAR_KIND: &str = "linear_gaussian_singletons";
pub const CUSTOM_KIND: &str = "custom";
pub const HAZARD_KIND: &str = "hazard_bisection";

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn parse_as<T: DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| bad(e.to_string()))
}

fn experiment_of(v: &serde_json::Value) -> Result<String> {
    v.get("experiment")
        .and_then(|e| e.as_str())
        .map(String::from)
        .ok_or_else(|| bad("missing string key \"experiment\""))
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(bad(format!("epsilon must be in (0, 1), got {eps}")))
    }
}

fn check_k_grid(k: &[usize]) -> Result<()> {
    if k.is_empty() || k.contains(&0) {
        return Err(bad("k_grid must be a nonempty list of positive integers"));
    }
    Ok(())
}

impl LinearConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let cfg = match experiment_of(&v)?.as_str() {
            LINEAR_KIND => LinearConfig::GaussianSingletons(parse_as(v)?),
            CUSTOM_KIND => LinearConfig::Custom(parse_as(v)?),
            other => return Err(bad(format!("experiment {other:?} is not a linear experiment"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LinearConfig::GaussianSingletons(c) => c.validate(),
            LinearConfig::Custom(c) => c.validate(),
        }
    }

    pub fn seed_mut(&mut self) -> &mut u64 {
        match self {
            LinearConfig::GaussianSingletons(c) => &mut c.seed,
            LinearConfig::Custom(c) => &mut c.seed,
        }
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            LinearConfig::GaussianSingletons(c) => c.out.as_deref(),
            LinearConfig::Custom(c) => c.out.as_deref(),
        }
    }
}

impl GaussianSingletonsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experiment != LINEAR_KIND {
            return Err(bad(format!("expected experiment {LINEAR_KIND:?}")));
        }
        if self.n == 0 || self.m == 0 || self.num_sets == 0 {
            return Err(bad("n, m and I must be positive"));
        }
        if self.instances == 0 || self.trials == 0 {
            return Err(bad("instances and trials must be positive"));
        }
        check_epsilon(self.epsilon)?;
        check_k_grid(&self.k_grid)
    }
}

impl CustomLinearConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experiment != CUSTOM_KIND {
            return Err(bad(format!("expected experiment {CUSTOM_KIND:?}")));
        }
        if self.trials == 0 || self.points_per_set == 0 {
            return Err(bad("trials and points_per_set must be positive"));
        }
        if let Some(k) = &self.k_grid {
            check_k_grid(k)?;
        }
        // re-run the constructor checks on the deserialized problem
        let p = &self.problem;
        let regions = p
            .regions
            .iter()
            .map(|r| ParamRegion::new(r.set.clone(), r.map.clone()))
            .collect::<minimax_core::Result<Vec<_>>>()
            .map_err(|e| bad(format!("problem: {e}")))?;
        LinearProblem::new(p.scheme, p.k, regions, p.g.clone(), p.epsilon)
            .map(|_| ())
            .map_err(|e| bad(format!("problem: {e}")))
    }

    pub fn k_grid(&self) -> Vec<usize> {
        self.k_grid.clone().unwrap_or_else(|| vec![self.problem.k])
    }
}

impl HazardConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let kind = experiment_of(&v)?;
        if kind != HAZARD_KIND {
            return Err(bad(format!("experiment {kind:?} is not {HAZARD_KIND:?}")));
        }
        let cfg: HazardConfig = parse_as(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment != HAZARD_KIND {
            return Err(bad(format!("expected experiment {HAZARD_KIND:?}")));
        }
        if self.m < 3 {
            return Err(bad("M must be at least 3"));
        }
        if self.j == 0 || self.j > self.m {
            return Err(bad(format!("j must be in 1..={}", self.m)));
        }
        if self.thetas.is_empty() || self.thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(bad("thetas must be a nonempty list of values in [0, 1]"));
        }
        if self.trials == 0 || self.l == 0 {
            return Err(bad("trials and L must be positive"));
        }
        if self.l > 40 {
            return Err(bad("L must be at most 40"));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(bad("kappa must be positive"));
            }
        }
        check_epsilon(self.epsilon)?;
        check_k_grid(&self.k_grid)
    }
}

pub fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))
}
