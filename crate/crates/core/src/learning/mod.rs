//! Decentralized primal-dual training.
//!
//! Each agent keeps truncated Q-tables over its κ-hop neighbourhood, running
//! averages of its own reward and cost, and Lagrange multipliers. The pure
//! update rules live here; [`Learner`] drives them one synchronized
//! environment step at a time.

mod learner;
mod mailbox;
mod qtable;

pub use learner::{AgentSnapshot, LearnError, Learner, LearnerConfig, StepRecord};
pub use mailbox::{AuditEntry, Mailbox, Payload, Phase, ProtocolError, Shared};
pub use qtable::TruncatedQTable;

use serde::{Deserialize, Serialize};

/// `c / (1 + t)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stepsize {
    pub scale: f64,
    pub power: f64,
}

impl Stepsize {
    pub const fn new(scale: f64, power: f64) -> Self {
        Self { scale, power }
    }

    pub fn at(&self, t: usize) -> f64 {
        self.scale / (1.0 + t as f64).powf(self.power)
    }

    fn check(&self, name: &str, errs: &mut Vec<String>) {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            errs.push(format!("schedules.{name}.scale must be finite and nonnegative, got {}", self.scale));
        }
        if !(self.power.is_finite() && self.power >= 0.0) {
            errs.push(format!("schedules.{name}.power must be finite and nonnegative, got {}", self.power));
        }
    }
}

/// Policy (`α`), multiplier (`β`), critic/average (`ζ`) and the separate
/// cost-multiplier stepsize `δ` of the cost-minimization variant, which
/// falls back to `β` when unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    pub alpha: Stepsize,
    pub beta: Stepsize,
    pub zeta: Stepsize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Stepsize>,
}

impl Default for StepsizeSchedule {
    fn default() -> Self {
        Self {
            alpha: Stepsize::new(0.05, 0.6),
            beta: Stepsize::new(0.01, 0.8),
            zeta: Stepsize::new(0.5, 0.6),
            delta: None,
        }
    }
}

impl StepsizeSchedule {
    /// Every stepsize identically zero.
    pub fn frozen() -> Self {
        let zero = Stepsize::new(0.0, 0.0);
        Self {
            alpha: zero,
            beta: zero,
            zeta: zero,
            delta: Some(zero),
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha.at(t)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta.at(t)
    }

    pub fn zeta(&self, t: usize) -> f64 {
        self.zeta.at(t)
    }

    pub fn delta(&self, t: usize) -> f64 {
        self.delta.unwrap_or(self.beta).at(t)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        self.alpha.check("alpha", &mut errs);
        self.beta.check("beta", &mut errs);
        self.zeta.check("zeta", &mut errs);
        if let Some(d) = &self.delta {
            d.check("delta", &mut errs);
        }
        if self.zeta.scale > 1.0 {
            errs.push(format!("schedules.zeta.scale must be at most 1, got {}", self.zeta.scale));
        }
        errs
    }
}

/// Which training loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Maximize regional SINR subject to regional cost budgets.
    #[default]
    Alg1,
    /// Minimize cost subject to per-agent SINR floors and cost budgets.
    Alg2,
}

/// Critic update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QUpdate {
    /// `Q(key) += ζ (f - μ̂)` with no bootstrap.
    #[default]
    Plain,
    /// Differential TD(0): bootstraps from the next visited key.
    Td,
}

/// Projection caps for the multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierCaps {
    pub nu: f64,
    pub eta: f64,
}

impl Default for MultiplierCaps {
    fn default() -> Self {
        Self { nu: 1e3, eta: 1e3 }
    }
}

/// Running estimate `μ̂` of an average signal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AverageTracker {
    pub mu: f64,
}

impl AverageTracker {
    /// `μ̂ ← (1 - ζ) μ̂ + ζ f`.
    pub fn update(&mut self, f: f64, zeta: f64) {
        self.mu = update_average(self.mu, f, zeta);
    }
}

pub fn update_average(mu: f64, f: f64, zeta: f64) -> f64 {
    (1.0 - zeta) * mu + zeta * f
}

/// `ν^i ≥ 0` for the cost budget and, in the cost-minimization variant,
/// `η^i ≥ 0` for the SINR floor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiplierState {
    pub nu: f64,
    pub eta: f64,
}

fn project(x: f64, cap: f64) -> f64 {
    x.clamp(0.0, cap)
}

/// `(Σ_{j∈N_κ(i)} Q̃^{r^j} - Σ_{j∈N_κ(i)} ν^j · Q̃^{c^i}) · score`, the ascent
/// direction for `θ^i`.
pub fn grad_estimate_alg1(score: &[f64], reward_q: &[f64], own_cost_q: f64, nus: &[f64]) -> Vec<f64> {
    let weight = reward_q.iter().sum::<f64>() - nus.iter().sum::<f64>() * own_cost_q;
    score.iter().map(|s| weight * s).collect()
}

/// `ν^i ← proj(ν^i - β (u^i - Σ_{j∈N_κ(i)} μ̂^{c^j}))`.
pub fn dual_update_alg1(nu: f64, cost_averages: &[f64], budget: f64, beta: f64, cap: f64) -> f64 {
    project(nu - beta * (budget - cost_averages.iter().sum::<f64>()), cap)
}

/// `((1 + Σ ν^j) Q̃^{c^i} - Σ η^j Q̃^{r^j}) · score`, the descent direction for
/// `θ^i`.
pub fn grad_estimate_alg2(score: &[f64], own_cost_q: f64, nus: &[f64], reward_q: &[f64], etas: &[f64]) -> Vec<f64> {
    let cost_weight = (1.0 + nus.iter().sum::<f64>()) * own_cost_q;
    let reward_weight: f64 = etas.iter().zip(reward_q).map(|(e, q)| e * q).sum();
    let weight = cost_weight - reward_weight;
    score.iter().map(|s| weight * s).collect()
}

/// `η^i ← proj(η^i + β (γ_min - μ̂^{r^i}))`.
pub fn dual_update_alg2_eta(eta: f64, own_reward_average: f64, gamma_min: f64, beta: f64, cap: f64) -> f64 {
    project(eta + beta * (gamma_min - own_reward_average), cap)
}

/// `ν^i ← proj(ν^i + δ (Σ_{j∈N_κ(i)} μ̂^{c^j} - u^i))`: grows while the budget
/// is exceeded.
pub fn dual_update_alg2_nu(nu: f64, cost_averages: &[f64], budget: f64, delta: f64, cap: f64) -> f64 {
    project(nu + delta * (cost_averages.iter().sum::<f64>() - budget), cap)
}
