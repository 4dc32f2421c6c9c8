//! The finite constrained multi-agent MDP.
//!
//! Radars are static, so the joint state collapses to the target cell: every
//! agent's local state is `(target cell, own pose)` and the pose is a constant
//! folded into the precomputed channel gains. Power levels are a uniform grid
//! on `[0, a_max]` and the target chain ignores actions entirely.

mod chain;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chain::{stationary_distribution, total_variation, TargetChain};

use crate::physics::{ChannelGains, GeometrySnapshot, PhysicsConstants, PhysicsError};
use crate::policy::JointPolicy;
use crate::rng::{self, StreamRng};
use crate::topology::Point;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid target chain: {0}")]
    InvalidChain(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("invalid environment: {0}")]
    Invalid(String),
}

/// `L` equally spaced power levels `{0, a_max/(L-1), ..., a_max}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionGrid {
    levels: usize,
    max_power: f64,
}

impl ActionGrid {
    pub fn new(levels: usize, max_power: f64) -> Result<Self, EnvError> {
        if levels < 2 {
            return Err(EnvError::Invalid("at least two power levels are required".into()));
        }
        Ok(Self { levels, max_power })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn power(&self, level: usize) -> f64 {
        if level + 1 == self.levels {
            self.max_power
        } else {
            self.max_power * level as f64 / (self.levels - 1) as f64
        }
    }
}

/// Mixed-radix indexing of joint actions; agent 0 is the least significant
/// digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointActionSpace {
    agents: usize,
    levels: usize,
}

impl JointActionSpace {
    pub fn new(agents: usize, levels: usize) -> Self {
        Self { agents, levels }
    }

    /// `L^n`, or `None` on overflow.
    pub fn size(&self) -> Option<usize> {
        self.levels.checked_pow(self.agents as u32)
    }

    pub fn decode(&self, mut index: usize, out: &mut [usize]) {
        for slot in out.iter_mut().take(self.agents) {
            *slot = index % self.levels;
            index /= self.levels;
        }
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        actions.iter().rev().fold(0, |acc, &a| acc * self.levels + a)
    }
}

/// Per-agent cost `c^i(s^i, a^i)`. Depends only on the agent's own cell and
/// power level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum CostModel {
    /// `c^i = a^i`, the transmitted power.
    Power,
    /// `values[agent][cell][level]`.
    Table { values: Vec<Vec<Vec<f64>>> },
}

/// Which per-agent signal a value function or objective refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    Reward,
    Cost,
}

impl Signal {
    pub const ALL: [Signal; 2] = [Signal::Reward, Signal::Cost];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reward => "reward",
            Self::Cost => "cost",
        }
    }
}

/// What a radar knows about itself at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalState {
    pub target_cell: usize,
    pub radar: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: usize,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Environment {
    physics: PhysicsConstants,
    radars: Vec<Point>,
    cells: Vec<Point>,
    gains: Vec<ChannelGains>,
    chain: TargetChain,
    grid: ActionGrid,
    cost: CostModel,
}

impl Environment {
    pub fn new(
        physics: PhysicsConstants,
        radars: Vec<Point>,
        cells: Vec<Point>,
        chain: TargetChain,
        levels: usize,
        cost: CostModel,
    ) -> Result<Self, EnvError> {
        let n = radars.len();
        if n == 0 {
            return Err(EnvError::Invalid("no radars".into()));
        }
        if physics.n() != n {
            return Err(EnvError::Invalid(format!(
                "physics lists {} noise levels for {n} radars",
                physics.n()
            )));
        }
        if cells.len() != chain.n_states() {
            return Err(EnvError::Invalid(format!(
                "{} target cells but the chain has {} states",
                cells.len(),
                chain.n_states()
            )));
        }
        let problems = physics.validate();
        if !problems.is_empty() {
            return Err(EnvError::Invalid(problems.join("; ")));
        }
        let grid = ActionGrid::new(levels, physics.max_power)?;
        if let CostModel::Table { values } = &cost {
            let shaped = values.len() == n
                && values
                    .iter()
                    .all(|per_cell| per_cell.len() == cells.len() && per_cell.iter().all(|row| row.len() == levels));
            if !shaped {
                return Err(EnvError::Invalid("cost table must be [agent][cell][level]".into()));
            }
            if values.iter().flatten().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(EnvError::Invalid("cost table entries must be finite and nonnegative".into()));
            }
        }
        let gains = cells
            .iter()
            .map(|&cell| GeometrySnapshot::new(&radars, cell).map(|geo| ChannelGains::new(&physics, &geo)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            physics,
            radars,
            cells,
            gains,
            chain,
            grid,
            cost,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.radars.len()
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn n_levels(&self) -> usize {
        self.grid.levels()
    }

    pub fn joint_actions(&self) -> JointActionSpace {
        JointActionSpace::new(self.n_agents(), self.n_levels())
    }

    pub fn physics(&self) -> &PhysicsConstants {
        &self.physics
    }

    pub fn radars(&self) -> &[Point] {
        &self.radars
    }

    pub fn cells(&self) -> &[Point] {
        &self.cells
    }

    pub fn chain(&self) -> &TargetChain {
        &self.chain
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn gains(&self, state: usize) -> &ChannelGains {
        &self.gains[state]
    }

    pub fn geometry(&self, state: usize) -> GeometrySnapshot {
        GeometrySnapshot::new(&self.radars, self.cells[state]).expect("validated at construction")
    }

    pub fn local_state(&self, agent: usize, state: usize) -> LocalState {
        LocalState {
            target_cell: state,
            radar: agent,
        }
    }

    pub fn powers(&self, actions: &[usize]) -> Vec<f64> {
        actions.iter().map(|&a| self.grid.power(a)).collect()
    }

    /// `r^i(s, a)`: global SINR at radar `agent`.
    pub fn reward(&self, agent: usize, state: usize, powers: &[f64]) -> f64 {
        self.gains[state].sinr(agent, powers)
    }

    /// `r^i_κ(s, a)`: SINR with interference only from `neighborhood`.
    pub fn reward_truncated(&self, agent: usize, state: usize, powers: &[f64], neighborhood: &[usize]) -> f64 {
        self.gains[state].sinr_truncated(agent, powers, neighborhood)
    }

    /// `c^i(s^i, a^i)`.
    pub fn cost(&self, agent: usize, state: usize, level: usize) -> f64 {
        match &self.cost {
            CostModel::Power => self.grid.power(level),
            CostModel::Table { values } => values[agent][state][level],
        }
    }

    /// `f^i(s, a)` for a full joint action.
    pub fn signal(&self, signal: Signal, agent: usize, state: usize, actions: &[usize]) -> f64 {
        match signal {
            Signal::Reward => self.reward(agent, state, &self.powers(actions)),
            Signal::Cost => self.cost(agent, state, actions[agent]),
        }
    }

    /// Largest value any reward can take: `h^τ_ii a_max / σ_min²` per agent.
    pub fn reward_ceiling(&self) -> f64 {
        let floor = self.physics.noise_floor();
        self.gains
            .iter()
            .flat_map(|g| g.own.iter())
            .map(|h| h * self.physics.max_power / (floor * floor))
            .fold(0.0, f64::max)
    }

    /// Rewards and costs for `(state, actions)`, then a sampled successor.
    pub fn step(&self, state: usize, actions: &[usize], rng: &mut StreamRng) -> Transition {
        let powers = self.powers(actions);
        let rewards = (0..self.n_agents()).map(|i| self.reward(i, state, &powers)).collect();
        let costs = (0..self.n_agents()).map(|i| self.cost(i, state, actions[i])).collect();
        Transition {
            next_state: self.chain.sample_next(state, rng),
            rewards,
            costs,
        }
    }

    /// Fixed-policy trajectory of length `horizon`. Dynamics draw from the
    /// environment stream and agent `i` from its own stream.
    pub fn rollout(&self, policy: &JointPolicy, horizon: usize, seed: u64) -> Trajectory {
        let mut env_rng = rng::environment_stream(seed);
        let mut agent_rngs: Vec<StreamRng> = (0..self.n_agents()).map(|i| rng::agent_stream(seed, i)).collect();
        let mut state = self.chain.sample_initial(&mut env_rng);
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let actions: Vec<usize> = agent_rngs
                .iter_mut()
                .enumerate()
                .map(|(i, r)| policy.agent(i).sample(state, r))
                .collect();
            let tr = self.step(state, &actions, &mut env_rng);
            steps.push(TrajectoryStep {
                t,
                state,
                actions,
                rewards: tr.rewards,
                costs: tr.costs,
            });
            state = tr.next_state;
        }
        Trajectory { steps }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub state: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn mean_reward(&self, agent: usize) -> f64 {
        self.steps.iter().map(|s| s.rewards[agent]).sum::<f64>() / self.steps.len() as f64
    }

    pub fn mean_cost(&self, agent: usize) -> f64 {
        self.steps.iter().map(|s| s.costs[agent]).sum::<f64>() / self.steps.len() as f64
    }

    /// CSV with columns `t, state, a_0..a_{n-1}, r_0.., c_0..`. Actions are
    /// power-level indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.steps.first().map_or(0, |s| s.actions.len());
        let mut header = vec!["t".to_string(), "state".to_string()];
        for prefix in ["a", "r", "c"] {
            header.extend((0..n).map(|i| format!("{prefix}_{i}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for s in &self.steps {
            write!(out, "{},{}", s.t, s.state)?;
            for a in &s.actions {
                write!(out, ",{a}")?;
            }
            for v in s.rewards.iter().chain(&s.costs) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
