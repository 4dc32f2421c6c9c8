use rand::Rng;
use rayon::prelude::*;

use super::exact::ExactSolution;
use crate::environment::{Environment, Signal};
use crate::rng::aux_stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    /// Truncation horizon `T` of each differential-return sum.
    pub horizon: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            repeats: 100,
            seed: 0,
        }
    }
}

/// One compared entry `Q(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRow {
    pub signal: Signal,
    pub agent: usize,
    pub state: usize,
    pub action: usize,
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
}

impl MonteCarloRow {
    /// `|estimate - exact|` in standard errors; a zero standard error only
    /// tolerates rounding.
    pub fn z(&self) -> f64 {
        let diff = (self.estimate - self.exact).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff <= 1e-9 * self.exact.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub rows: Vec<MonteCarloRow>,
    pub options: MonteCarloOptions,
}

impl MonteCarloReport {
    pub fn max_z(&self) -> f64 {
        self.rows.iter().map(MonteCarloRow::z).fold(0.0, f64::max)
    }

    pub fn within(&self, k: f64) -> bool {
        self.rows.iter().all(|r| r.z() <= k)
    }
}

fn sample_cdf<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Estimates every `Q^{f^i}(s, a)` by truncated differential returns
/// `f(s, a) - J + Σ_{t=1}^{T-1} (f(s_t, a_t) - J)` and pairs them with the
/// exact values.
///
/// The target chain ignores actions, so the continuation after `(s, a)`
/// has the same law for every `a`. One batch of `repeats` trajectories per
/// starting state serves all first actions.
pub fn monte_carlo_q(env: &Environment, sol: &ExactSolution, opts: MonteCarloOptions) -> MonteCarloReport {
    let n = sol.n_agents();
    let nj = sol.n_joint();
    let n_states = sol.n_states();
    let tables: Vec<(Signal, usize)> = Signal::ALL.iter().flat_map(|&s| (0..n).map(move |i| (s, i))).collect();
    let cdfs: Vec<Vec<f64>> = (0..n_states)
        .map(|s| {
            let mut acc = 0.0;
            sol.probs(s)
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    let centred: Vec<Vec<f64>> = tables
        .iter()
        .map(|&(signal, i)| {
            let t = sol.table(signal, i);
            t.f.iter().map(|f| f - t.j).collect()
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..n_states).flat_map(|s| (0..opts.repeats).map(move |r| (s, r))).collect();
    let sums: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(s0, rep)| {
            let mut rng = aux_stream(opts.seed, (s0 * opts.repeats + rep) as u64);
            let mut acc = vec![0.0; tables.len()];
            let mut s = s0;
            for _ in 1..opts.horizon {
                s = env.chain().sample_next(s, &mut rng);
                let a = sample_cdf(&cdfs[s], &mut rng);
                for (x, c) in acc.iter_mut().zip(&centred) {
                    *x += c[s * nj + a];
                }
            }
            acc
        })
        .collect();

    let mut rows = Vec::with_capacity(tables.len() * n_states * nj);
    let r = opts.repeats as f64;
    for (k, &(signal, agent)) in tables.iter().enumerate() {
        for s0 in 0..n_states {
            let samples: Vec<f64> = sums[s0 * opts.repeats..(s0 + 1) * opts.repeats].iter().map(|v| v[k]).collect();
            let mean = samples.iter().sum::<f64>() / r;
            let var = if opts.repeats > 1 {
                samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)
            } else {
                0.0
            };
            let std_error = (var / r).sqrt();
            for a in 0..nj {
                rows.push(MonteCarloRow {
                    signal,
                    agent,
                    state: s0,
                    action: a,
                    exact: sol.q(signal, agent, s0, a),
                    estimate: centred[k][s0 * nj + a] + mean,
                    std_error,
                });
            }
        }
    }
    MonteCarloReport { rows, options: opts }
}
