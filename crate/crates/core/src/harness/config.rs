use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{CostModel, Environment, Signal, TargetChain};
use crate::learning::{Algorithm, LearnerConfig, MultiplierCaps, QUpdate, StepsizeSchedule};
use crate::oracle::{VerifyOptions, WeightingFunction, DEFAULT_BUDGET};
use crate::physics::{BoundVariant, PhysicsConstants};
use crate::policy::JointPolicy;
use crate::rng::aux_stream;
use crate::topology::{validate_coverage, CommGraph, CoverageFunction, Point};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Master seed; `--seed` overrides it.
    pub seed: u64,
    /// Training horizon `T`; `--steps` overrides it.
    pub horizon: usize,
    pub geometry: GeometryConfig,
    pub coverage: CoverageFunction,
    pub physics: PhysicsConstants,
    pub chain: ChainConfig,
    pub actions: ActionsConfig,
    pub cost: CostModel,
    pub constraints: ConstraintsConfig,
    pub learning: LearningConfig,
    pub policy: PolicyInit,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// `[x, y]` per radar.
    pub radars: Vec<[f64; 2]>,
    /// `[x, y]` per target cell, indexed like the chain states.
    pub cells: Vec<[f64; 2]>,
    /// Communication radius `R`.
    pub comm_radius: f64,
    pub kappa: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub transition: Vec<Vec<f64>>,
    /// Uniform when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionsConfig {
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsConfig {
    /// Regional budget `u^i` on `Σ_{j∈N_κ(i)} c^j`, one per agent.
    pub cost_budget: Vec<f64>,
    /// SINR floor `γ_min`.
    pub sinr_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    pub algorithm: Algorithm,
    pub q_update: QUpdate,
    pub schedules: StepsizeSchedule,
    pub caps: MultiplierCaps,
    pub parallel: bool,
    pub audit: bool,
    /// Write every `metrics_stride`-th step.
    pub metrics_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyInit {
    Uniform,
    /// Logits drawn uniformly from `[-scale, scale]` on an auxiliary stream
    /// of the master seed.
    Random { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub weighting: WeightingFunction,
    pub bound_variant: BoundVariant,
    /// Cap on `|S| · L^n` for enumeration.
    pub budget: usize,
    pub ergodicity_horizon: usize,
    /// Multipliers for the weighted gradient check; all ones when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    pub gradcheck_eps: f64,
    pub gradcheck_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            weighting: WeightingFunction::Uniform,
            bound_variant: BoundVariant::NoiseFloor,
            budget: DEFAULT_BUDGET,
            ergodicity_horizon: 200,
            eta: None,
            gradcheck_eps: 1e-6,
            gradcheck_tol: 1e-4,
        }
    }
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Alg1,
            q_update: QUpdate::Plain,
            schedules: StepsizeSchedule::default(),
            caps: MultiplierCaps::default(),
            parallel: false,
            audit: false,
            metrics_stride: 1,
        }
    }
}

/// Every problem found while loading a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// A validated config turned into runnable objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub env: Environment,
    pub graph: CommGraph,
    pub warnings: Vec<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, super::HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| super::HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| super::HarnessError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Plain TOML without comments.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn n_agents(&self) -> usize {
        self.geometry.radars.len()
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            algorithm: self.learning.algorithm,
            schedules: self.learning.schedules,
            caps: self.learning.caps,
            q_update: self.learning.q_update,
            cost_budget: self.constraints.cost_budget.clone(),
            sinr_floor: self.constraints.sinr_floor,
            parallel: self.learning.parallel,
            audit: self.learning.audit,
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            weighting: self.oracle.weighting.clone(),
            budget: self.oracle.budget,
            ergodicity_horizon: self.oracle.ergodicity_horizon,
            variant: self.oracle.bound_variant,
            eta: self.oracle.eta.clone(),
        }
    }

    pub fn initial_policy(&self, n_states: usize) -> JointPolicy {
        let n = self.n_agents();
        match self.policy {
            PolicyInit::Uniform => JointPolicy::uniform(n, n_states, self.actions.levels),
            PolicyInit::Random { scale } => {
                JointPolicy::random(n, n_states, self.actions.levels, scale, &mut aux_stream(self.seed, u32::MAX as u64))
            }
        }
    }

    /// Validates everything and builds the environment and graph. Errors
    /// are collected rather than reported one at a time.
    pub fn build(&self) -> Result<Scenario, Diagnostics> {
        let mut d = Diagnostics::default();
        if self.schema_version != SCHEMA_VERSION {
            d.error(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let n = self.n_agents();
        let radars: Vec<Point> = self.geometry.radars.iter().map(|p| Point::new(p[0], p[1])).collect();
        let cells: Vec<Point> = self.geometry.cells.iter().map(|p| Point::new(p[0], p[1])).collect();
        if radars.iter().chain(&cells).any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            d.error("geometry coordinates must be finite");
        }
        if cells.is_empty() {
            d.error("geometry.cells must list at least one target cell");
        }
        let graph = CommGraph::build(&radars, self.geometry.comm_radius, self.geometry.kappa)
            .map_err(|e| d.error(format!("geometry: {e}")))
            .ok();
        if let Err(e) = self.coverage.validate() {
            d.error(format!("coverage: {e}"));
        }
        d.errors.extend(self.physics.validate());
        if self.physics.n() != n {
            d.error(format!("physics.noise_std has {} entries for {n} radars", self.physics.n()));
        }
        let k = self.chain.transition.len();
        if k != cells.len() {
            d.error(format!("chain has {k} states but geometry lists {} cells", cells.len()));
        }
        let initial = self.chain.initial.clone().unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]);
        let chain = TargetChain::new(self.chain.transition.clone(), initial)
            .map_err(|e| d.error(format!("chain: {e}")))
            .ok();
        if let Some(c) = &chain {
            if let Err(e) = c.ergodicity_certificate(self.oracle.ergodicity_horizon) {
                d.error(format!("chain: {e}"));
            }
        }
        if self.actions.levels < 2 {
            d.error(format!("actions.levels must be at least 2, got {}", self.actions.levels));
        }
        if self.constraints.cost_budget.len() != n {
            d.error(format!("constraints.cost_budget has {} entries for {n} agents", self.constraints.cost_budget.len()));
        }
        if self.constraints.cost_budget.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
            d.error("constraints.cost_budget entries must be positive and finite");
        }
        if !(self.constraints.sinr_floor.is_finite() && self.constraints.sinr_floor >= 0.0) {
            d.error("constraints.sinr_floor must be finite and nonnegative");
        }
        d.errors.extend(self.learning.schedules.validate().into_iter().map(|e| format!("learning.{e}")));
        let caps = self.learning.caps;
        if !(caps.nu > 0.0 && caps.nu.is_finite() && caps.eta > 0.0 && caps.eta.is_finite()) {
            d.error("learning.caps must be positive and finite");
        }
        if self.learning.metrics_stride == 0 {
            d.error("learning.metrics_stride must be at least 1");
        }
        if self.horizon == 0 {
            d.error("horizon must be at least 1");
        }
        if let PolicyInit::Random { scale } = self.policy {
            if !(scale.is_finite() && scale >= 0.0) {
                d.error("policy.scale must be finite and nonnegative");
            }
        }
        if let Some(eta) = &self.oracle.eta {
            if eta.len() != n {
                d.error(format!("oracle.eta has {} entries for {n} agents", eta.len()));
            }
        }
        if !(self.oracle.gradcheck_eps > 0.0 && self.oracle.gradcheck_tol > 0.0) {
            d.error("oracle.gradcheck_eps and oracle.gradcheck_tol must be positive");
        }
        if let Some(g) = &graph {
            if let Err(e) = self.oracle.weighting.validate(g, self.actions.levels) {
                d.error(format!("oracle: {e}"));
            }
            match validate_coverage(g, &radars, &self.coverage) {
                Ok(v) => {
                    for c in v {
                        d.warn(format!(
                            "coverage condition fails: radars {} and {} are {:.4} apart, below g = {:.4}; error bounds do not apply",
                            c.i, c.j, c.distance, c.required
                        ));
                    }
                }
                Err(e) => d.error(format!("coverage: {e}")),
            }
        }
        let env = match (chain, d.is_ok()) {
            (Some(chain), true) => Environment::new(
                self.physics.clone(),
                radars,
                cells,
                chain,
                self.actions.levels,
                self.cost.clone(),
            )
            .map_err(|e| d.error(format!("environment: {e}")))
            .ok(),
            _ => None,
        };
        if let Some(env) = &env {
            if let Some(w) = sinr_feasibility_warning(env, self.constraints.sinr_floor) {
                d.warn(w);
            }
        }
        match (env, graph, d.is_ok()) {
            (Some(env), Some(graph), true) => Ok(Scenario {
                config: self.clone(),
                env,
                graph,
                warnings: d.warnings,
            }),
            _ => Err(d),
        }
    }
}

/// Stationary SINR of each agent when every radar transmits at full power.
pub fn full_power_sinr(env: &Environment) -> Vec<f64> {
    let d = env.chain().stationary_distribution().expect("validated chain");
    let top = vec![env.n_levels() - 1; env.n_agents()];
    (0..env.n_agents())
        .map(|i| d.iter().enumerate().map(|(s, p)| p * env.signal(Signal::Reward, i, s, &top)).sum())
        .collect()
}

fn sinr_feasibility_warning(env: &Environment, floor: f64) -> Option<String> {
    let sinr = full_power_sinr(env);
    let (worst, value) = sinr
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (value < floor).then(|| {
        format!("constraints.sinr_floor = {floor} is not met even at full power (agent {worst} reaches {value:.4})")
    })
}
