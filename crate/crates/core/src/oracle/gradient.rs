use super::exact::ExactSolution;
use crate::environment::Signal;
use crate::policy::{AgentPolicy, JointPolicy};

/// Writes `∇_θ log π(action | obs)` into a zeroed buffer.
pub type ScoreFn<'a> = &'a (dyn Fn(&AgentPolicy, usize, usize, &mut [f64]) + Sync);

/// The analytic softmax score.
pub fn softmax_score(p: &AgentPolicy, obs: usize, action: usize, out: &mut [f64]) {
    p.score_into(obs, action, out);
}

/// `E_{s∼d, a∼π}[q(s, a) ∇_{θ^i} log π^i(a^i | s)]`.
///
/// Both the exact gradient (`q = Q^{f^j}`) and the local estimator
/// (`q = Q̃^{f^j}`) go through this one routine.
pub fn expected_score_product<Q>(sol: &ExactSolution, policy: &JointPolicy, agent: usize, q: Q, score: ScoreFn) -> Vec<f64>
where
    Q: Fn(usize, usize) -> f64,
{
    let p = policy.agent(agent);
    let mut out = vec![0.0; p.dim()];
    let mut buf = vec![0.0; p.dim()];
    for s in 0..sol.n_states() {
        let ds = sol.stationary()[s];
        for a in 0..sol.n_joint() {
            let w = ds * sol.prob(s, a) * q(s, a);
            if w == 0.0 {
                continue;
            }
            buf.iter_mut().for_each(|x| *x = 0.0);
            score(p, s, sol.joint(a)[agent], &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += w * b;
            }
        }
    }
    out
}

/// `∇_{θ^i} J_{f^j}(θ)` by the policy gradient theorem.
pub fn exact_policy_gradient(sol: &ExactSolution, policy: &JointPolicy, agent: usize, signal: Signal, target: usize) -> Vec<f64> {
    exact_policy_gradient_with(sol, policy, agent, signal, target, &softmax_score)
}

pub fn exact_policy_gradient_with(
    sol: &ExactSolution,
    policy: &JointPolicy,
    agent: usize,
    signal: Signal,
    target: usize,
    score: ScoreFn,
) -> Vec<f64> {
    let table = sol.table(signal, target);
    let nj = sol.n_joint();
    expected_score_product(sol, policy, agent, |s, a| table.q[s * nj + a], score)
}

/// Central difference `(J(θ + ε e_k) - J(θ - ε e_k)) / 2ε` for every
/// component of `θ^i`, where `J = Σ_s d(s) Σ_a π(a|s) f^j(s, a)`.
///
/// The stationary law does not depend on `θ`, and moving one logit `θ(o, b)`
/// only changes agent `i`'s row at `o`. The change of that row is evaluated
/// in closed form,
/// `π₊(b') - π₋(b') = 2 sinh ε · p_b ([b' = b] - p_{b'}) / (D₊ D₋)`,
/// `D± = 1 + p_b expm1(±ε)`,
/// which is exact but free of the cancellation in `J₊ - J₋`.
pub fn central_difference(sol: &ExactSolution, policy: &JointPolicy, agent: usize, signal: Signal, target: usize, eps: f64) -> Vec<f64> {
    let p = policy.agent(agent);
    let levels = p.n_actions();
    let f = &sol.table(signal, target).f;
    let nj = sol.n_joint();
    let mut out = vec![0.0; p.dim()];
    for o in 0..sol.n_states() {
        // g[b'] = Σ_{a: a^i = b'} Π_{j≠i} π^j(a^j | o) f(o, a)
        let marginals: Vec<Vec<f64>> = policy.agents().iter().map(|q| q.probs(o)).collect();
        let mut g = vec![0.0; levels];
        for a in 0..nj {
            let joint = sol.joint(a);
            let others: f64 = joint
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != agent)
                .map(|(j, &aj)| marginals[j][aj])
                .product();
            g[joint[agent]] += others * f[o * nj + a];
        }
        let probs = &marginals[agent];
        let sh = 2.0 * eps.sinh();
        for b in 0..levels {
            let pb = probs[b];
            let denom = (1.0 + pb * eps.exp_m1()) * (1.0 + pb * (-eps).exp_m1());
            let diff: f64 = (0..levels)
                .map(|bp| {
                    let ind = if bp == b { 1.0 } else { 0.0 };
                    g[bp] * sh * pb * (ind - probs[bp]) / denom
                })
                .sum();
            out[p.index(o, b)] = sol.stationary()[o] * diff / (2.0 * eps);
        }
    }
    out
}

/// `|e - fd| / max(|e|, |fd|, floor)`.
pub fn relative_error(exact: f64, fd: f64, floor: f64) -> f64 {
    let scale = exact.abs().max(fd.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (exact - fd).abs() / scale
    }
}

/// Outcome of comparing exact gradients with finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(agent, signal, target, component)` attaining the maximum.
    pub worst: Option<(usize, Signal, usize, usize)>,
    pub comparisons: usize,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares `∇_{θ^i} J_{f^j}` against central differences for every agent
/// `i`, target `j`, signal and component. Components that are zero up to
/// rounding are compared on the absolute scale `1e-6 · max(1, max |f^j|)`.
pub fn gradcheck(sol: &ExactSolution, policy: &JointPolicy, eps: f64, score: ScoreFn) -> GradCheck {
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        comparisons: 0,
    };
    for signal in Signal::ALL {
        for target in 0..sol.n_agents() {
            let f = &sol.table(signal, target).f;
            let floor = 1e-6 * f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for agent in 0..sol.n_agents() {
                let exact = exact_policy_gradient_with(sol, policy, agent, signal, target, score);
                let fd = central_difference(sol, policy, agent, signal, target, eps);
                for (k, (e, d)) in exact.iter().zip(&fd).enumerate() {
                    let err = relative_error(*e, *d, floor);
                    out.comparisons += 1;
                    if err > out.max_rel_error || out.worst.is_none() {
                        out.max_rel_error = out.max_rel_error.max(err);
                        out.worst = Some((agent, signal, target, k));
                    }
                }
            }
        }
    }
    out
}
