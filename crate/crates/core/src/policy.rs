//! Tabular softmax policies.
//!
//! Each agent keeps one logit per (local observation, power level). The local
//! observation is what the agent sees of `s^{N_κ(i)}`; with static radars
//! that reduces to the target cell index.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("checkpoint line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("checkpoint does not match the expected shape: {0}")]
    Shape(String),
}

/// `π^i_θ(a | o) ∝ exp θ(o, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPolicy {
    n_obs: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

impl AgentPolicy {
    pub fn zeros(n_obs: usize, n_actions: usize) -> Self {
        Self::from_logits(n_obs, n_actions, vec![0.0; n_obs * n_actions])
    }

    pub fn from_logits(n_obs: usize, n_actions: usize, logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), n_obs * n_actions, "logit table shape");
        Self { n_obs, n_actions, logits }
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of parameters, `|O| · |A|`.
    pub fn dim(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    /// Flat parameter index of `(obs, action)`.
    pub fn index(&self, obs: usize, action: usize) -> usize {
        obs * self.n_actions + action
    }

    fn row(&self, obs: usize) -> &[f64] {
        &self.logits[obs * self.n_actions..(obs + 1) * self.n_actions]
    }

    pub fn probs(&self, obs: usize) -> Vec<f64> {
        let row = self.row(obs);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    pub fn prob(&self, obs: usize, action: usize) -> f64 {
        self.probs(obs)[action]
    }

    pub fn log_prob(&self, obs: usize, action: usize) -> f64 {
        let row = self.row(obs);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        row[action] - lse
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: usize, rng: &mut R) -> usize {
        let probs = self.probs(obs);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.n_actions - 1
    }

    /// `∇_θ log π(action | obs)`: `[a' = action] − π(a' | obs)` on the
    /// observed row, zero elsewhere.
    pub fn score(&self, obs: usize, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(obs, action, &mut out);
        out
    }

    /// Writes the score into `out` (which must be zeroed outside `obs`'s row).
    pub fn score_into(&self, obs: usize, action: usize, out: &mut [f64]) {
        let probs = self.probs(obs);
        let base = obs * self.n_actions;
        for (a, p) in probs.iter().enumerate() {
            out[base + a] = if a == action { 1.0 } else { 0.0 } - p;
        }
    }

    /// Supremum of `‖∇_θ log π‖₂` over all parameters and inputs: `√2` for two
    /// or more actions, 0 for a single action.
    pub fn lipschitz_bound(&self) -> f64 {
        if self.n_actions < 2 {
            0.0
        } else {
            std::f64::consts::SQRT_2
        }
    }

    /// `θ ← θ + step · direction`.
    pub fn apply(&mut self, direction: &[f64], step: f64) {
        for (z, d) in self.logits.iter_mut().zip(direction) {
            *z += step * d;
        }
    }
}

/// Product-form joint policy `π_θ(a | s) = Π_i π^i(a^i | o^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    agents: Vec<AgentPolicy>,
}

impl JointPolicy {
    pub fn new(agents: Vec<AgentPolicy>) -> Self {
        Self { agents }
    }

    /// All-zero logits, i.e. uniform over power levels.
    pub fn uniform(n_agents: usize, n_obs: usize, n_actions: usize) -> Self {
        Self::new(vec![AgentPolicy::zeros(n_obs, n_actions); n_agents])
    }

    /// Logits drawn i.i.d. from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(n_agents: usize, n_obs: usize, n_actions: usize, scale: f64, rng: &mut R) -> Self {
        let agents = (0..n_agents)
            .map(|_| {
                let logits = (0..n_obs * n_actions).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
                AgentPolicy::from_logits(n_obs, n_actions, logits)
            })
            .collect();
        Self::new(agents)
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> &AgentPolicy {
        &self.agents[i]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut AgentPolicy {
        &mut self.agents[i]
    }

    pub fn agents(&self) -> &[AgentPolicy] {
        &self.agents
    }

    /// Joint probability when every agent observes `obs`.
    pub fn prob(&self, obs: usize, actions: &[usize]) -> f64 {
        self.agents.iter().zip(actions).map(|(p, &a)| p.prob(obs, a)).product()
    }

    pub fn log_prob(&self, obs: usize, actions: &[usize]) -> f64 {
        self.agents.iter().zip(actions).map(|(p, &a)| p.log_prob(obs, a)).sum()
    }

    /// Flat text checkpoint, one `agent obs action logit` record per line.
    /// Logits use the shortest round-trip representation, so reloading is
    /// bit-exact.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("# agent obs action logit\n");
        for (i, p) in self.agents.iter().enumerate() {
            for o in 0..p.n_obs {
                for a in 0..p.n_actions {
                    let _ = writeln!(out, "{i} {o} {a} {:?}", p.logits[p.index(o, a)]);
                }
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str, n_agents: usize, n_obs: usize, n_actions: usize) -> Result<Self, PolicyError> {
        let mut policy = Self::uniform(n_agents, n_obs, n_actions);
        let mut seen = vec![false; n_agents * n_obs * n_actions];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: &str| PolicyError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(parse_err("expected 4 fields"));
            }
            let idx = |k: usize| fields[k].parse::<usize>().map_err(|_| parse_err("bad index"));
            let (i, o, a) = (idx(0)?, idx(1)?, idx(2)?);
            let logit: f64 = fields[3].parse().map_err(|_| parse_err("bad logit"))?;
            if i >= n_agents || o >= n_obs || a >= n_actions {
                return Err(PolicyError::Shape(format!("record ({i}, {o}, {a}) out of range")));
            }
            let p = &mut policy.agents[i];
            let k = p.index(o, a);
            p.logits[k] = logit;
            seen[(i * n_obs + o) * n_actions + a] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(PolicyError::Shape("checkpoint is missing records".into()));
        }
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_logits_sample_uniformly() {
        let p = AgentPolicy::zeros(1, 3);
        let mut r = rng::agent_stream(9, 0);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[p.sample(0, &mut r)] += 1;
        }
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 3.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn saturated_logit_dominates() {
        let p = AgentPolicy::from_logits(1, 3, vec![0.0, 50.0, 0.0]);
        let mut r = rng::agent_stream(9, 1);
        let hits = (0..10_000).filter(|_| p.sample(0, &mut r) == 1).count();
        assert!(hits as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = AgentPolicy::from_logits(1, 2, vec![0.3, -0.2]);
        let draw = |seed| {
            let mut r = rng::agent_stream(seed, 0);
            (0..64).map(|_| p.sample(0, &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn uniform_two_action_score() {
        let p = AgentPolicy::zeros(2, 2);
        assert_eq!(p.score(1, 0), vec![0.0, 0.0, 0.5, -0.5]);
    }

    #[test]
    fn score_has_zero_mean() {
        let p = AgentPolicy::from_logits(2, 3, vec![0.1, -1.0, 2.0, 0.5, 0.5, -0.3]);
        for o in 0..2 {
            let probs = p.probs(o);
            let mut mean = vec![0.0; p.dim()];
            for (a, pa) in probs.iter().enumerate() {
                for (m, s) in mean.iter_mut().zip(p.score(o, a)) {
                    *m += pa * s;
                }
            }
            assert!(mean.iter().all(|m| m.abs() < 1e-15), "{mean:?}");
        }
    }

    #[test]
    fn score_matches_central_differences() {
        let base = AgentPolicy::from_logits(2, 3, vec![0.4, -0.7, 1.1, 0.0, 0.2, -0.5]);
        let eps = 1e-6;
        for o in 0..2 {
            for a in 0..3 {
                let score = base.score(o, a);
                for k in 0..base.dim() {
                    let mut plus = base.clone();
                    plus.logits_mut()[k] += eps;
                    let mut minus = base.clone();
                    minus.logits_mut()[k] -= eps;
                    let fd = (plus.log_prob(o, a) - minus.log_prob(o, a)) / (2.0 * eps);
                    let scale = score[k].abs().max(1e-3);
                    assert!((fd - score[k]).abs() <= 1e-6 * scale.max(1.0), "o={o} a={a} k={k}: {fd} vs {}", score[k]);
                }
            }
        }
    }

    #[test]
    fn lipschitz_bound_dominates_dense_sweep() {
        // Oracle: grid search of ‖score‖ over logits for 2 and 3 actions.
        let bound = AgentPolicy::zeros(1, 3).lipschitz_bound();
        assert_eq!(bound, std::f64::consts::SQRT_2);
        let mut worst: f64 = 0.0;
        let steps: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.5).collect();
        for &x in &steps {
            for &y in &steps {
                let p = AgentPolicy::from_logits(1, 3, vec![0.0, x, y]);
                for a in 0..3 {
                    let n = p.score(0, a).iter().map(|v| v * v).sum::<f64>().sqrt();
                    worst = worst.max(n);
                }
            }
        }
        assert!(worst <= bound && worst > 1.40, "{worst}");
        assert_eq!(AgentPolicy::zeros(1, 1).lipschitz_bound(), 0.0);
    }

    #[test]
    fn shift_invariance_and_product_form() {
        let p = AgentPolicy::from_logits(1, 3, vec![0.2, -0.4, 1.0]);
        let shifted = AgentPolicy::from_logits(1, 3, vec![5.2, 4.6, 6.0]);
        for a in 0..3 {
            assert!((p.prob(0, a) - shifted.prob(0, a)).abs() < 1e-15);
            let (s1, s2) = (p.score(0, a), shifted.score(0, a));
            assert!(s1.iter().zip(&s2).all(|(x, y)| (x - y).abs() < 1e-15));
        }
        let joint = JointPolicy::new(vec![p.clone(), shifted, AgentPolicy::zeros(1, 3)]);
        let acts = [2, 0, 1];
        let sum: f64 = (0..3).map(|i| joint.agent(i).log_prob(0, acts[i])).sum();
        assert!((joint.log_prob(0, &acts) - sum).abs() < 1e-12);
        assert!((joint.prob(0, &acts).ln() - sum).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut r = rng::aux_stream(1, 0);
        let joint = JointPolicy::random(3, 2, 3, 4.0, &mut r);
        let text = joint.to_checkpoint();
        let back = JointPolicy::from_checkpoint(&text, 3, 2, 3).unwrap();
        for i in 0..3 {
            for (a, b) in joint.agent(i).logits().iter().zip(back.agent(i).logits()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert!(JointPolicy::from_checkpoint("0 0 0 1.0\n", 1, 1, 2).is_err());
        assert!(matches!(
            JointPolicy::from_checkpoint("0 0 x 1.0\n", 1, 1, 2),
            Err(PolicyError::Parse { line: 1, .. })
        ));
    }
}
