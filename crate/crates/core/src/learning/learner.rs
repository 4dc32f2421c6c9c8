use rayon::prelude::*;
use thiserror::Error;

use super::mailbox::{Mailbox, Payload, Phase, ProtocolError, Shared};
use super::qtable::TruncatedQTable;
use super::{
    dual_update_alg1, dual_update_alg2_eta, dual_update_alg2_nu, grad_estimate_alg1, grad_estimate_alg2, Algorithm,
    AverageTracker, MultiplierCaps, MultiplierState, QUpdate, StepsizeSchedule,
};
use crate::environment::{Environment, Signal};
use crate::policy::{AgentPolicy, JointPolicy};
use crate::rng::{self, StreamRng};
use crate::topology::CommGraph;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("learner configuration: {0}")]
    Config(String),
    #[error("step {step}: agent {agent} saw inconsistent target cells from its neighbours")]
    InconsistentState { step: usize, agent: usize },
    #[error("step {step}: agent {agent} has a non-finite value")]
    NonFinite { step: usize, agent: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub schedules: StepsizeSchedule,
    pub caps: MultiplierCaps,
    pub q_update: QUpdate,
    /// `u^i`, the regional cost budget of each agent.
    pub cost_budget: Vec<f64>,
    /// `γ_min`, the per-agent SINR floor (cost-minimization variant).
    pub sinr_floor: f64,
    /// Run agents' local computations on the rayon pool.
    pub parallel: bool,
    /// Keep a log of every delivered message.
    pub audit: bool,
}

/// Scalars an agent holds after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSnapshot {
    pub reward_avg: f64,
    pub cost_avg: f64,
    pub nu: f64,
    pub eta: f64,
}

/// Everything observable about one synchronized step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub state: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub agents: Vec<AgentSnapshot>,
    /// `u^i - Σ_{j∈N_κ(i)} μ̂^{c^j}`; negative means the budget is exceeded.
    pub cost_slack: Vec<f64>,
    /// `μ̂^{r^i} - γ_min`.
    pub sinr_slack: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    key: usize,
    reward: f64,
    cost: f64,
    reward_avg: f64,
    cost_avg: f64,
    zeta: f64,
}

#[derive(Debug, Clone)]
struct Agent {
    id: usize,
    budget: f64,
    policy: AgentPolicy,
    q_reward: TruncatedQTable,
    q_cost: TruncatedQTable,
    reward_avg: AverageTracker,
    cost_avg: AverageTracker,
    mult: MultiplierState,
    rng: StreamRng,
    obs: usize,
    action: usize,
    key: usize,
    pending: Option<Pending>,
    cost_slack: f64,
}

/// Per-step scalars every agent reads.
#[derive(Debug, Clone, Copy)]
struct Rates {
    t: usize,
    alpha: f64,
    beta: f64,
    delta: f64,
    zeta: f64,
}

impl Agent {
    fn observe(&mut self, t: usize, inbox: &[Payload]) -> Result<(), LearnError> {
        let mut cells = inbox.iter().map(|p| match p {
            Payload::State(s) => *s,
            _ => unreachable!("state round carries states"),
        });
        let first = cells.next().expect("neighbourhood contains the agent itself");
        if cells.any(|c| c != first) {
            return Err(LearnError::InconsistentState { step: t, agent: self.id });
        }
        self.obs = first;
        self.action = self.policy.sample(self.obs, &mut self.rng);
        Ok(())
    }

    fn track(&mut self, reward: f64, cost: f64, zeta: f64) {
        self.reward_avg.update(reward, zeta);
        self.cost_avg.update(cost, zeta);
    }

    fn critic(&mut self, inbox: &[Payload], reward: f64, cost: f64, zeta: f64, rule: QUpdate) -> Shared {
        let local: Vec<usize> = inbox
            .iter()
            .map(|p| match p {
                Payload::Action(a) => *a,
                _ => unreachable!("action round carries actions"),
            })
            .collect();
        self.key = self.q_reward.key(self.obs, &local);
        match rule {
            QUpdate::Plain => {
                self.q_reward.update(self.key, reward, self.reward_avg.mu, zeta);
                self.q_cost.update(self.key, cost, self.cost_avg.mu, zeta);
            }
            QUpdate::Td => {
                if let Some(p) = self.pending.take() {
                    self.q_reward.update_td(p.key, self.key, p.reward, p.reward_avg, p.zeta);
                    self.q_cost.update_td(p.key, self.key, p.cost, p.cost_avg, p.zeta);
                }
                self.pending = Some(Pending {
                    key: self.key,
                    reward,
                    cost,
                    reward_avg: self.reward_avg.mu,
                    cost_avg: self.cost_avg.mu,
                    zeta,
                });
            }
        }
        Shared {
            reward_q: self.q_reward.get(self.key),
            reward_avg: self.reward_avg.mu,
            cost_avg: self.cost_avg.mu,
            nu: self.mult.nu,
            eta: self.mult.eta,
        }
    }

    fn actor(&mut self, inbox: &[Payload], cfg: &LearnerConfig, rates: Rates) -> Result<(), LearnError> {
        let shared: Vec<Shared> = inbox
            .iter()
            .map(|p| match p {
                Payload::Share(s) => *s,
                _ => unreachable!("share round carries shares"),
            })
            .collect();
        let reward_q: Vec<f64> = shared.iter().map(|s| s.reward_q).collect();
        let nus: Vec<f64> = shared.iter().map(|s| s.nu).collect();
        let cost_avgs: Vec<f64> = shared.iter().map(|s| s.cost_avg).collect();
        let score = self.policy.score(self.obs, self.action);
        let cost_q = self.q_cost.get(self.key);
        match cfg.algorithm {
            Algorithm::Alg1 => {
                let dir = grad_estimate_alg1(&score, &reward_q, cost_q, &nus);
                self.policy.apply(&dir, rates.alpha);
                self.mult.nu = dual_update_alg1(self.mult.nu, &cost_avgs, self.budget, rates.beta, cfg.caps.nu);
            }
            Algorithm::Alg2 => {
                let etas: Vec<f64> = shared.iter().map(|s| s.eta).collect();
                let dir = grad_estimate_alg2(&score, cost_q, &nus, &reward_q, &etas);
                self.policy.apply(&dir, -rates.alpha);
                self.mult.eta =
                    dual_update_alg2_eta(self.mult.eta, self.reward_avg.mu, cfg.sinr_floor, rates.beta, cfg.caps.eta);
                self.mult.nu = dual_update_alg2_nu(self.mult.nu, &cost_avgs, self.budget, rates.delta, cfg.caps.nu);
            }
        }
        self.cost_slack = self.budget - cost_avgs.iter().sum::<f64>();
        let finite = self.policy.logits().iter().all(|z| z.is_finite())
            && self.q_reward.get(self.key).is_finite()
            && self.q_cost.get(self.key).is_finite()
            && self.mult.nu.is_finite()
            && self.mult.eta.is_finite();
        if !finite {
            return Err(LearnError::NonFinite {
                step: rates.t,
                agent: self.id,
            });
        }
        Ok(())
    }

    fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            reward_avg: self.reward_avg.mu,
            cost_avg: self.cost_avg.mu,
            nu: self.mult.nu,
            eta: self.mult.eta,
        }
    }
}

/// Bulk-synchronous driver: each step runs three message rounds (states,
/// actions, shared estimates) and agents only ever see their own inbox.
pub struct Learner<'a> {
    env: &'a Environment,
    cfg: LearnerConfig,
    agents: Vec<Agent>,
    mailbox: Mailbox,
    env_rng: StreamRng,
    state: usize,
    t: usize,
}

impl<'a> Learner<'a> {
    pub fn new(
        env: &'a Environment,
        graph: &CommGraph,
        policy: JointPolicy,
        cfg: LearnerConfig,
        seed: u64,
    ) -> Result<Self, LearnError> {
        let n = env.n_agents();
        if graph.n() != n {
            return Err(LearnError::Config(format!("graph has {} agents, environment {n}", graph.n())));
        }
        if cfg.cost_budget.len() != n {
            return Err(LearnError::Config(format!("{} cost budgets for {n} agents", cfg.cost_budget.len())));
        }
        if policy.n_agents() != n
            || policy
                .agents()
                .iter()
                .any(|p| p.n_obs() != env.n_states() || p.n_actions() != env.n_levels())
        {
            return Err(LearnError::Config("policy shape does not match the environment".into()));
        }
        let problems = cfg.schedules.validate();
        if !problems.is_empty() {
            return Err(LearnError::Config(problems.join("; ")));
        }
        let mut agents = Vec::with_capacity(n);
        for (i, p) in policy.agents().iter().enumerate() {
            let hood = graph.neighborhood(i).to_vec();
            let table = |signal| {
                TruncatedQTable::new(signal, hood.clone(), env.n_states(), env.n_levels())
                    .ok_or_else(|| LearnError::Config(format!("agent {i}: local Q-table is too large")))
            };
            agents.push(Agent {
                id: i,
                budget: cfg.cost_budget[i],
                policy: p.clone(),
                q_reward: table(Signal::Reward)?,
                q_cost: table(Signal::Cost)?,
                reward_avg: AverageTracker::default(),
                cost_avg: AverageTracker::default(),
                mult: MultiplierState::default(),
                rng: rng::agent_stream(seed, i),
                obs: 0,
                action: 0,
                key: 0,
                pending: None,
                cost_slack: cfg.cost_budget[i],
            });
        }
        let mut env_rng = rng::environment_stream(seed);
        let state = env.chain().sample_initial(&mut env_rng);
        let mailbox = Mailbox::new((0..n).map(|i| graph.neighborhood(i).to_vec()).collect(), cfg.audit);
        Ok(Self {
            env,
            cfg,
            agents,
            mailbox,
            env_rng,
            state,
            t: 0,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn policy(&self) -> JointPolicy {
        JointPolicy::new(self.agents.iter().map(|a| a.policy.clone()).collect())
    }

    pub fn snapshot(&self, i: usize) -> AgentSnapshot {
        self.agents[i].snapshot()
    }

    pub fn q_table(&self, i: usize, signal: Signal) -> &TruncatedQTable {
        match signal {
            Signal::Reward => &self.agents[i].q_reward,
            Signal::Cost => &self.agents[i].q_cost,
        }
    }

    pub fn mailbox(&self) -> &Mailbox {
        &self.mailbox
    }

    fn collect(&mut self, phase: Phase) -> Result<Vec<Vec<Payload>>, LearnError> {
        let t = self.t;
        (0..self.agents.len())
            .map(|i| self.mailbox.deliver(t, phase, i).map_err(LearnError::from))
            .collect()
    }

    /// Runs `f` on every agent with its inbox, in parallel when configured.
    /// Results are independent of scheduling because each agent only touches
    /// its own state.
    fn each<R, F>(&mut self, inboxes: &[Vec<Payload>], f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(&mut Agent, &[Payload]) -> R + Sync + Send,
    {
        if self.cfg.parallel {
            self.agents
                .par_iter_mut()
                .zip(inboxes.par_iter())
                .map(|(a, inbox)| f(a, inbox))
                .collect()
        } else {
            self.agents.iter_mut().zip(inboxes).map(|(a, inbox)| f(a, inbox)).collect()
        }
    }

    /// One synchronized environment step for every agent.
    pub fn step(&mut self) -> Result<StepRecord, LearnError> {
        let t = self.t;
        let s = &self.cfg.schedules;
        let rates = Rates {
            t,
            alpha: s.alpha(t),
            beta: s.beta(t),
            delta: s.delta(t),
            zeta: s.zeta(t),
        };

        // Round 1: each agent publishes its local state, then acts on what
        // its neighbourhood reports.
        for i in 0..self.agents.len() {
            let local = self.env.local_state(i, self.state);
            self.mailbox.post(t, i, Payload::State(local.target_cell));
        }
        let inboxes = self.collect(Phase::State)?;
        self.each(&inboxes, |a, inbox| a.observe(t, inbox))
            .into_iter()
            .collect::<Result<(), _>>()?;

        let actions: Vec<usize> = self.agents.iter().map(|a| a.action).collect();
        let transition = self.env.step(self.state, &actions, &mut self.env_rng);
        for (i, a) in self.agents.iter_mut().enumerate() {
            a.track(transition.rewards[i], transition.costs[i], rates.zeta);
        }

        // Round 2: actions, then critic updates at the local key.
        for (i, &a) in actions.iter().enumerate() {
            self.mailbox.post(t, i, Payload::Action(a));
        }
        let inboxes = self.collect(Phase::Action)?;
        let rule = self.cfg.q_update;
        let (rewards, costs) = (&transition.rewards, &transition.costs);
        let shares = self.each(&inboxes, |a, inbox| {
            a.critic(inbox, rewards[a.id], costs[a.id], rates.zeta, rule)
        });

        // Round 3: shared estimates, then primal and dual updates.
        for (i, sh) in shares.into_iter().enumerate() {
            self.mailbox.post(t, i, Payload::Share(sh));
        }
        let inboxes = self.collect(Phase::Share)?;
        let cfg = self.cfg.clone();
        self.each(&inboxes, |a, inbox| a.actor(inbox, &cfg, rates))
            .into_iter()
            .collect::<Result<(), _>>()?;

        let record = StepRecord {
            t,
            state: self.state,
            actions,
            rewards: transition.rewards,
            costs: transition.costs,
            agents: self.agents.iter().map(Agent::snapshot).collect(),
            cost_slack: self.agents.iter().map(|a| a.cost_slack).collect(),
            sinr_slack: self
                .agents
                .iter()
                .map(|a| a.reward_avg.mu - self.cfg.sinr_floor)
                .collect(),
        };
        self.state = transition.next_state;
        self.t += 1;
        Ok(record)
    }

    /// Runs `steps` steps, handing each record to `sink`.
    pub fn run<F>(&mut self, steps: usize, mut sink: F) -> Result<(), LearnError>
    where
        F: FnMut(&StepRecord),
    {
        for _ in 0..steps {
            let rec = self.step()?;
            sink(&rec);
        }
        Ok(())
    }
}
