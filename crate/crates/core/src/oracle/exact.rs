use nalgebra::{DMatrix, DVector};

use super::OracleError;
use crate::environment::{Environment, Signal};
use crate::policy::JointPolicy;

/// Default cap on `|S| · |A|^n` for brute-force enumeration.
pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Exact average and differential values of one signal for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSolution {
    /// `f(s, a)`, indexed `s * |A| + a`.
    pub f: Vec<f64>,
    /// Long-run average `J_f`.
    pub j: f64,
    /// State bias `V(s) = Σ_a π(a|s) Q(s, a)`.
    pub v: Vec<f64>,
    /// Differential action value `Q(s, a)`, indexed like `f`.
    pub q: Vec<f64>,
}

/// Everything the bound checks need about one fixed joint policy.
///
/// Q-functions use the zero-stationary-mean normalization
/// `Σ_s d(s) Σ_a π(a|s) Q(s, a) = 0`.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    n_agents: usize,
    n_states: usize,
    levels: usize,
    n_joint: usize,
    actions: Vec<usize>,
    stationary: Vec<f64>,
    transition: Vec<Vec<f64>>,
    probs: Vec<f64>,
    tables: Vec<SignalSolution>,
    residual: f64,
}

impl ExactSolution {
    pub const NORMALIZATION: &'static str = "zero-stationary-mean";

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `|A| = L^n`.
    pub fn n_joint(&self) -> usize {
        self.n_joint
    }

    /// Decoded joint action `a` (agent 0 first).
    pub fn joint(&self, a: usize) -> &[usize] {
        &self.actions[a * self.n_agents..(a + 1) * self.n_agents]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// `π_θ(a | s)`.
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_joint + a]
    }

    pub fn probs(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_joint..(s + 1) * self.n_joint]
    }

    pub fn table(&self, signal: Signal, agent: usize) -> &SignalSolution {
        let k = match signal {
            Signal::Reward => 0,
            Signal::Cost => 1,
        };
        &self.tables[k * self.n_agents + agent]
    }

    pub fn j(&self, signal: Signal, agent: usize) -> f64 {
        self.table(signal, agent).j
    }

    pub fn q(&self, signal: Signal, agent: usize, s: usize, a: usize) -> f64 {
        self.table(signal, agent).q[s * self.n_joint + a]
    }

    /// Largest residual of the evaluation equations over all tables.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `Σ_s d(s) Σ_a π(a|s) Q(s, a)` for one table.
    pub fn stationary_mean_q(&self, signal: Signal, agent: usize) -> f64 {
        let q = &self.table(signal, agent).q;
        (0..self.n_states)
            .map(|s| self.stationary[s] * (0..self.n_joint).map(|a| self.prob(s, a) * q[s * self.n_joint + a]).sum::<f64>())
            .sum()
    }
}

/// `|S| · L^n`, or `None` on overflow.
pub fn enumeration_size(env: &Environment) -> Option<usize> {
    env.joint_actions().size()?.checked_mul(env.n_states())
}

fn check_budget(env: &Environment, budget: usize) -> Result<usize, OracleError> {
    match enumeration_size(env) {
        Some(size) if size <= budget => Ok(env.joint_actions().size().expect("checked above")),
        size => Err(OracleError::Budget { size, budget }),
    }
}

/// `π_θ(a|s)` for every state and joint action, as a product of the agents'
/// marginals.
fn joint_probs(env: &Environment, policy: &JointPolicy, actions: &[usize], n_joint: usize) -> Vec<f64> {
    let n = env.n_agents();
    let mut out = Vec::with_capacity(env.n_states() * n_joint);
    for s in 0..env.n_states() {
        let marginals: Vec<Vec<f64>> = policy.agents().iter().map(|p| p.probs(s)).collect();
        for a in 0..n_joint {
            let joint = &actions[a * n..(a + 1) * n];
            out.push(joint.iter().enumerate().map(|(i, &ai)| marginals[i][ai]).product());
        }
    }
    out
}

/// Solves every agent's reward and cost evaluation equations under `policy`.
///
/// Dynamics ignore actions, so `V` solves the Poisson equation of the target
/// chain, `(I - P) V = f̄_π - J`, pinned by `d·V = 0`, and
/// `Q(s, a) = f(s, a) - J + (P V)(s)`.
pub fn solve_exact(env: &Environment, policy: &JointPolicy, budget: usize) -> Result<ExactSolution, OracleError> {
    let n_joint = check_budget(env, budget)?;
    let n = env.n_agents();
    let n_states = env.n_states();
    if policy.n_agents() != n
        || policy
            .agents()
            .iter()
            .any(|p| p.n_obs() != n_states || p.n_actions() != env.n_levels())
    {
        return Err(OracleError::Shape("policy shape does not match the environment".into()));
    }
    let space = env.joint_actions();
    let mut actions = vec![0; n_joint * n];
    for a in 0..n_joint {
        space.decode(a, &mut actions[a * n..(a + 1) * n]);
    }
    let stationary = env.chain().stationary_distribution().map_err(OracleError::Chain)?;
    let transition = env.chain().transition().to_vec();
    let probs = joint_probs(env, policy, &actions, n_joint);

    // (I - P + 1 dᵀ) is invertible for an ergodic chain and its solution
    // automatically satisfies d·V = 0.
    let mut system = DMatrix::<f64>::zeros(n_states, n_states);
    for s in 0..n_states {
        for t in 0..n_states {
            let id = if s == t { 1.0 } else { 0.0 };
            system[(s, t)] = id - transition[s][t] + stationary[t];
        }
    }
    let lu = system.lu();

    let mut tables = Vec::with_capacity(2 * n);
    let mut residual: f64 = 0.0;
    for signal in Signal::ALL {
        let mut f_all = vec![vec![0.0; n_states * n_joint]; n];
        for s in 0..n_states {
            for a in 0..n_joint {
                let joint = &actions[a * n..(a + 1) * n];
                match signal {
                    Signal::Reward => {
                        let powers = env.powers(joint);
                        for (i, f) in f_all.iter_mut().enumerate() {
                            f[s * n_joint + a] = env.reward(i, s, &powers);
                        }
                    }
                    Signal::Cost => {
                        for (i, f) in f_all.iter_mut().enumerate() {
                            f[s * n_joint + a] = env.cost(i, s, joint[i]);
                        }
                    }
                }
            }
        }
        for f in f_all {
            let fbar: Vec<f64> = (0..n_states)
                .map(|s| (0..n_joint).map(|a| probs[s * n_joint + a] * f[s * n_joint + a]).sum())
                .collect();
            let j: f64 = stationary.iter().zip(&fbar).map(|(d, x)| d * x).sum();
            let rhs = DVector::from_iterator(n_states, fbar.iter().map(|x| x - j));
            let v = lu
                .solve(&rhs)
                .ok_or_else(|| OracleError::Numerical("evaluation system is singular".into()))?;
            let v: Vec<f64> = v.iter().copied().collect();
            let pv: Vec<f64> = transition
                .iter()
                .map(|row| row.iter().zip(&v).map(|(p, x)| p * x).sum())
                .collect();
            let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let mut worst: f64 = stationary.iter().zip(&v).map(|(d, x)| d * x).sum::<f64>().abs();
            for s in 0..n_states {
                worst = worst.max((v[s] - pv[s] - (fbar[s] - j)).abs());
            }
            residual = residual.max(worst / scale);
            let q = (0..n_states * n_joint).map(|k| f[k] - j + pv[k / n_joint]).collect();
            tables.push(SignalSolution { f, j, v, q });
        }
    }
    if residual > 1e-10 {
        return Err(OracleError::Numerical(format!("evaluation residual {residual:e} exceeds 1e-10")));
    }
    Ok(ExactSolution {
        n_agents: n,
        n_states,
        levels: env.n_levels(),
        n_joint,
        actions,
        stationary,
        transition,
        probs,
        tables,
        residual,
    })
}

/// `J_{f^i}(θ) = Σ_s d(s) Σ_a π_θ(a|s) f^i(s, a)` by direct enumeration,
/// without solving for Q.
pub fn average_objective(env: &Environment, policy: &JointPolicy, signal: Signal, agent: usize) -> Result<f64, OracleError> {
    let n_joint = check_budget(env, usize::MAX)?;
    let d = env.chain().stationary_distribution().map_err(OracleError::Chain)?;
    let space = env.joint_actions();
    let mut joint = vec![0; env.n_agents()];
    let mut total = 0.0;
    for (s, ds) in d.iter().enumerate() {
        let marginals: Vec<Vec<f64>> = policy.agents().iter().map(|p| p.probs(s)).collect();
        let mut inner = 0.0;
        for a in 0..n_joint {
            space.decode(a, &mut joint);
            let p: f64 = joint.iter().enumerate().map(|(i, &ai)| marginals[i][ai]).product();
            inner += p * env.signal(signal, agent, s, &joint);
        }
        total += ds * inner;
    }
    Ok(total)
}
