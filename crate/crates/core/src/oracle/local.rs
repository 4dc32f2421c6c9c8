use serde::{Deserialize, Serialize};

use super::exact::ExactSolution;
use super::OracleError;
use crate::environment::Signal;
use crate::policy::JointPolicy;
use crate::topology::CommGraph;

/// How the local approximation averages over the agents outside `N_κ(i)`.
///
/// The complement's states are pinned by the shared target cell, so every
/// weighting is over complement action tuples only. Tuples are indexed with
/// the lowest-numbered complement agent as the least significant digit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum WeightingFunction {
    /// Equal weight on every completion.
    #[default]
    Uniform,
    /// The policy's own conditional law of the complement actions given the
    /// state: `Π_{j∉N_κ(i)} π^j(ā^j | s)`.
    ConditionalStationary,
    /// Explicit weights, `weights[agent][tuple]`.
    Custom { weights: Vec<Vec<f64>> },
}

impl WeightingFunction {
    /// Checks custom tables against the graph: one row per agent, `L^{|N^{-1}(i)|}`
    /// nonnegative entries summing to 1.
    pub fn validate(&self, graph: &CommGraph, levels: usize) -> Result<(), OracleError> {
        let Self::Custom { weights } = self else {
            return Ok(());
        };
        if weights.len() != graph.n() {
            return Err(OracleError::Weighting(format!("{} rows for {} agents", weights.len(), graph.n())));
        }
        for (i, row) in weights.iter().enumerate() {
            let expected = levels.pow(graph.complement(i).len() as u32);
            if row.len() != expected {
                return Err(OracleError::Weighting(format!(
                    "agent {i}: {} weights, expected {expected}",
                    row.len()
                )));
            }
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(OracleError::Weighting(format!("agent {i}: weights must be nonnegative")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(OracleError::Weighting(format!("agent {i}: weights sum to {total}")));
            }
        }
        Ok(())
    }

    fn weights(&self, policy: &JointPolicy, agent: usize, complement: &[usize], levels: usize, s: usize) -> Vec<f64> {
        let count = levels.pow(complement.len() as u32);
        match self {
            Self::Uniform => vec![1.0 / count as f64; count],
            Self::ConditionalStationary => {
                let marginals: Vec<Vec<f64>> = complement.iter().map(|&j| policy.agent(j).probs(s)).collect();
                let mut digits = vec![0; complement.len()];
                (0..count)
                    .map(|k| {
                        decode(k, levels, &mut digits);
                        digits.iter().zip(&marginals).map(|(&a, m)| m[a]).product()
                    })
                    .collect()
            }
            Self::Custom { weights } => weights[agent].clone(),
        }
    }
}

fn decode(mut k: usize, levels: usize, out: &mut [usize]) {
    for d in out.iter_mut() {
        *d = k % levels;
        k /= levels;
    }
}

/// `Q̃^{f^i}(s^{N_κ(i)}, a^{N_κ(i)})` for every local key.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalQ {
    pub agent: usize,
    pub signal: Signal,
    neighborhood: Vec<usize>,
    levels: usize,
    local_actions: usize,
    values: Vec<f64>,
    /// `max - min` of `Q` over completions, per key.
    spread: Vec<f64>,
}

impl LocalQ {
    pub fn neighborhood(&self) -> &[usize] {
        &self.neighborhood
    }

    /// Number of local keys.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest `|Q(s, a^N, ā) - Q(s, a^N, ā')|` over completions, per key.
    pub fn spread(&self) -> &[f64] {
        &self.spread
    }

    /// Local key of a full joint action at state `s`.
    pub fn key(&self, s: usize, joint: &[usize]) -> usize {
        let idx = self.neighborhood.iter().rev().fold(0, |acc, &j| acc * self.levels + joint[j]);
        s * self.local_actions + idx
    }

    pub fn at_joint(&self, s: usize, joint: &[usize]) -> f64 {
        self.values[self.key(s, joint)]
    }
}

/// Builds `Q̃^{f^i}` for every local key by enumerating completions.
///
/// Each value is formed as `Q(ref) + Σ_k w_k (Q(k) - Q(ref))` with the first
/// completion as reference, so completions that leave `Q` unchanged
/// contribute exactly nothing.
pub fn local_q_table(
    sol: &ExactSolution,
    graph: &CommGraph,
    policy: &JointPolicy,
    agent: usize,
    signal: Signal,
    w: &WeightingFunction,
) -> LocalQ {
    let levels = sol.levels();
    let n = sol.n_agents();
    let hood = graph.neighborhood(agent).to_vec();
    let comp = graph.complement(agent).to_vec();
    let local_actions = levels.pow(hood.len() as u32);
    let completions = levels.pow(comp.len() as u32);
    let q = &sol.table(signal, agent).q;
    let n_joint = sol.n_joint();

    let mut place = vec![0usize; n];
    let mut p = 1;
    for slot in place.iter_mut() {
        *slot = p;
        p *= levels;
    }
    let offsets = |agents: &[usize], count: usize| -> Vec<usize> {
        let mut digits = vec![0; agents.len()];
        (0..count)
            .map(|k| {
                decode(k, levels, &mut digits);
                agents.iter().zip(&digits).map(|(&j, &a)| a * place[j]).sum()
            })
            .collect()
    };
    let local_off = offsets(&hood, local_actions);
    let comp_off = offsets(&comp, completions);

    let mut values = Vec::with_capacity(sol.n_states() * local_actions);
    let mut spread = Vec::with_capacity(values.capacity());
    for s in 0..sol.n_states() {
        let weights = w.weights(policy, agent, &comp, levels, s);
        for &lo in &local_off {
            let row = |k: usize| q[s * n_joint + lo + comp_off[k]];
            let reference = row(0);
            let mut acc = 0.0;
            let (mut lo_q, mut hi_q) = (reference, reference);
            for (k, wk) in weights.iter().enumerate() {
                let qk = row(k);
                acc += wk * (qk - reference);
                lo_q = lo_q.min(qk);
                hi_q = hi_q.max(qk);
            }
            values.push(reference + acc);
            spread.push(hi_q - lo_q);
        }
    }
    LocalQ {
        agent,
        signal,
        neighborhood: hood,
        levels,
        local_actions,
        values,
        spread,
    }
}

/// One entry of `Q̃^{f^i}`; `local_actions` follows `N_κ(i)` in ascending order.
#[allow(clippy::too_many_arguments)]
pub fn local_q_approx(
    sol: &ExactSolution,
    graph: &CommGraph,
    policy: &JointPolicy,
    agent: usize,
    signal: Signal,
    w: &WeightingFunction,
    state: usize,
    local_actions: &[usize],
) -> f64 {
    let table = local_q_table(sol, graph, policy, agent, signal, w);
    let idx = local_actions.iter().rev().fold(0, |acc, &a| acc * sol.levels() + a);
    table.values[state * table.local_actions + idx]
}
