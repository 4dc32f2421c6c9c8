use std::io::{self, Write};
use std::sync::OnceLock;

use rayon::prelude::*;

use super::exact::{solve_exact, ExactSolution};
use super::gradient::{expected_score_product, exact_policy_gradient, softmax_score};
use super::local::{local_q_table, LocalQ, WeightingFunction};
use super::OracleError;
use crate::environment::{Environment, Signal};
use crate::physics::{constant_m, BoundVariant, Ergodicity};
use crate::policy::JointPolicy;
use crate::topology::{validate_coverage, CommGraph, CoverageFunction};

/// Absolute slack when comparing a measured error with its bound.
pub const COMPARISON_SLACK: f64 = 1e-12;

/// The individual error-bound checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Check {
    /// Spread of `Q^{f^i}` over completions of the agents outside `N_κ(i)`.
    QPerturbation,
    /// `|Q̃^{f^i} - Q^{f^i}|` (selector `i`).
    LocalQ,
    /// `‖ĥ^i_{f^j} - ∇_{θ^i} J_{f^j}‖` for every pair (selector `ii`).
    PairGradient,
    /// `‖ĥ^i_f - ∇_{θ^i} J_f‖` for the network objective against the
    /// closed-form bound with `n̄ = max_j |N^{-1}(j)|` (selector `iii`).
    RegionalGradient,
    /// Same error against the sum of the pairwise bounds over `N_κ(i)`.
    /// Reported for comparison only.
    RegionalGradientPairwise,
    /// `η`-weighted combination of the pairwise estimates (selector `iv`).
    WeightedGradient,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Self::QPerturbation => "q-perturbation",
            Self::LocalQ => "local-q",
            Self::PairGradient => "pair-gradient",
            Self::RegionalGradient => "regional-gradient",
            Self::RegionalGradientPairwise => "regional-gradient-pairwise",
            Self::WeightedGradient => "weighted-gradient",
        }
    }

    /// Whether the check counts towards PASS/FAIL.
    pub fn gating(self) -> bool {
        self != Self::RegionalGradientPairwise
    }
}

/// Gradient checks selectable from the command line as `i,ii,iii,iv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    I,
    II,
    III,
    IV,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::I, Part::II, Part::III, Part::IV];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "i" => Some(Self::I),
            "ii" => Some(Self::II),
            "iii" => Some(Self::III),
            "iv" => Some(Self::IV),
            _ => None,
        }
    }

    /// Parses a comma-separated selector such as `i,iii`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, String> {
        let mut parts: Vec<Part> = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| Self::parse(p).ok_or_else(|| format!("unknown part {p:?}; expected i, ii, iii or iv")))
            .collect::<Result<_, _>>()?;
        parts.sort();
        parts.dedup();
        Ok(parts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub check: Check,
    pub variant: BoundVariant,
    pub signal: Signal,
    pub agent: usize,
    /// Second agent for pairwise checks.
    pub target: Option<usize>,
    pub measured: f64,
    pub bound: f64,
    /// Items compared (local keys or state-action pairs), 1 for vector norms.
    pub items: usize,
    /// Items whose individual error exceeded the bound.
    pub violations: usize,
}

impl BoundRow {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.measured <= self.bound + COMPARISON_SLACK
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub weighting: WeightingFunction,
    pub budget: usize,
    pub ergodicity_horizon: usize,
    /// The `M` variant that decides PASS/FAIL; both are reported.
    pub variant: BoundVariant,
    /// Multipliers for the weighted check, all ones by default.
    pub eta: Option<Vec<f64>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            weighting: WeightingFunction::Uniform,
            budget: super::DEFAULT_BUDGET,
            ergodicity_horizon: 200,
            variant: BoundVariant::NoiseFloor,
            eta: None,
        }
    }
}

struct Gradients {
    estimate: Vec<Vec<f64>>,
    exact: Vec<Vec<f64>>,
}

/// Exact quantities for one (environment, policy, graph) instance and the
/// bound checks built on them.
pub struct Verifier<'a> {
    policy: &'a JointPolicy,
    graph: &'a CommGraph,
    sol: ExactSolution,
    coverage: f64,
    coverage_holds: bool,
    ergodicity: Ergodicity,
    constants: Vec<(BoundVariant, f64)>,
    lipschitz: Vec<f64>,
    local: Vec<LocalQ>,
    opts: VerifyOptions,
    grads: OnceLock<Gradients>,
}

impl<'a> Verifier<'a> {
    pub fn new(
        env: &'a Environment,
        policy: &'a JointPolicy,
        graph: &'a CommGraph,
        coverage: &CoverageFunction,
        opts: VerifyOptions,
    ) -> Result<Self, OracleError> {
        let n = env.n_agents();
        if graph.n() != n {
            return Err(OracleError::Shape(format!("graph has {} agents, environment {n}", graph.n())));
        }
        opts.weighting.validate(graph, env.n_levels())?;
        if let Some(eta) = &opts.eta {
            if eta.len() != n {
                return Err(OracleError::Shape(format!("{} multipliers for {n} agents", eta.len())));
            }
        }
        let sol = solve_exact(env, policy, opts.budget)?;
        let g = coverage.lower_bound(graph.kappa())?;
        let coverage_holds = validate_coverage(graph, env.radars(), coverage)?.is_empty();
        let ergodicity = env
            .chain()
            .ergodicity_certificate(opts.ergodicity_horizon)
            .map_err(OracleError::Chain)?;
        let constants = BoundVariant::ALL
            .iter()
            .map(|&v| constant_m(env.physics(), ergodicity, v).map(|m| (v, m)))
            .collect::<Result<Vec<_>, _>>()?;
        let lipschitz = policy.agents().iter().map(|p| p.lipschitz_bound()).collect();
        let jobs: Vec<(Signal, usize)> = Signal::ALL.iter().flat_map(|&s| (0..n).map(move |i| (s, i))).collect();
        let local = jobs
            .par_iter()
            .map(|&(s, i)| local_q_table(&sol, graph, policy, i, s, &opts.weighting))
            .collect();
        Ok(Self {
            policy,
            graph,
            sol,
            coverage: g,
            coverage_holds,
            ergodicity,
            constants,
            lipschitz,
            local,
            opts,
            grads: OnceLock::new(),
        })
    }

    pub fn solution(&self) -> &ExactSolution {
        &self.sol
    }

    pub fn ergodicity(&self) -> Ergodicity {
        self.ergodicity
    }

    pub fn coverage_holds(&self) -> bool {
        self.coverage_holds
    }

    pub fn constant(&self, variant: BoundVariant) -> f64 {
        self.constants.iter().find(|(v, _)| *v == variant).map(|(_, m)| *m).expect("both variants computed")
    }

    pub fn local(&self, signal: Signal, agent: usize) -> &LocalQ {
        let k = match signal {
            Signal::Reward => 0,
            Signal::Cost => 1,
        };
        &self.local[k * self.sol.n_agents() + agent]
    }

    fn n(&self) -> usize {
        self.sol.n_agents()
    }

    fn g2(&self) -> f64 {
        self.coverage * self.coverage
    }

    /// `M |N_κ^{-1}(i)| / g²(κ, R)`.
    pub fn q_bound(&self, variant: BoundVariant, agent: usize) -> f64 {
        self.constant(variant) * self.graph.complement(agent).len() as f64 / self.g2()
    }

    fn grad_index(&self, signal: Signal, agent: usize, target: usize) -> usize {
        let k = match signal {
            Signal::Reward => 0,
            Signal::Cost => 1,
        };
        (k * self.n() + agent) * self.n() + target
    }

    fn gradients(&self) -> &Gradients {
        self.grads.get_or_init(|| {
            let n = self.n();
            let jobs: Vec<(Signal, usize, usize)> = Signal::ALL
                .iter()
                .flat_map(|&s| (0..n).flat_map(move |i| (0..n).map(move |j| (s, i, j))))
                .collect();
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = jobs
                .par_iter()
                .map(|&(signal, i, j)| {
                    let local = self.local(signal, j);
                    let est = expected_score_product(&self.sol, self.policy, i, |s, a| local.at_joint(s, self.sol.joint(a)), &softmax_score);
                    let exact = exact_policy_gradient(&self.sol, self.policy, i, signal, j);
                    (est, exact)
                })
                .collect();
            let (estimate, exact) = pairs.into_iter().unzip();
            Gradients { estimate, exact }
        })
    }

    /// `ĥ^i_{f^j}`, the stationary expectation of the local estimator.
    pub fn estimate(&self, signal: Signal, agent: usize, target: usize) -> &[f64] {
        &self.gradients().estimate[self.grad_index(signal, agent, target)]
    }

    /// `∇_{θ^i} J_{f^j}`.
    pub fn exact_gradient(&self, signal: Signal, agent: usize, target: usize) -> &[f64] {
        &self.gradients().exact[self.grad_index(signal, agent, target)]
    }

    /// Largest `‖∇_{θ^i} J_{r^j}‖` over agents `i` and `j ∉ N_κ(i)`.
    pub fn epsilon_kappa(&self) -> f64 {
        let mut eps: f64 = 0.0;
        for i in 0..self.n() {
            for &j in self.graph.complement(i) {
                eps = eps.max(norm(self.exact_gradient(Signal::Reward, i, j)));
            }
        }
        eps
    }

    pub fn perturbation_rows(&self) -> Vec<BoundRow> {
        let mut rows = Vec::new();
        for &(variant, _) in &self.constants {
            for signal in Signal::ALL {
                for i in 0..self.n() {
                    let bound = self.q_bound(variant, i);
                    let spread = self.local(signal, i).spread();
                    rows.push(BoundRow {
                        check: Check::QPerturbation,
                        variant,
                        signal,
                        agent: i,
                        target: None,
                        measured: spread.iter().copied().fold(0.0, f64::max),
                        bound,
                        items: spread.len(),
                        violations: spread.iter().filter(|&&x| x > bound + COMPARISON_SLACK).count(),
                    });
                }
            }
        }
        rows
    }

    pub fn local_q_rows(&self) -> Vec<BoundRow> {
        let nj = self.sol.n_joint();
        let mut errors = Vec::new();
        for signal in Signal::ALL {
            for i in 0..self.n() {
                let local = self.local(signal, i);
                let q = &self.sol.table(signal, i).q;
                let errs: Vec<f64> = (0..self.sol.n_states() * nj)
                    .map(|k| (local.at_joint(k / nj, self.sol.joint(k % nj)) - q[k]).abs())
                    .collect();
                errors.push((signal, i, errs));
            }
        }
        let mut rows = Vec::new();
        for &(variant, _) in &self.constants {
            for (signal, i, errs) in &errors {
                let bound = self.q_bound(variant, *i);
                rows.push(BoundRow {
                    check: Check::LocalQ,
                    variant,
                    signal: *signal,
                    agent: *i,
                    target: None,
                    measured: errs.iter().copied().fold(0.0, f64::max),
                    bound,
                    items: errs.len(),
                    violations: errs.iter().filter(|&&e| e > bound + COMPARISON_SLACK).count(),
                });
            }
        }
        rows
    }

    fn norm_row(&self, check: Check, variant: BoundVariant, signal: Signal, agent: usize, target: Option<usize>, measured: f64, bound: f64) -> BoundRow {
        BoundRow {
            check,
            variant,
            signal,
            agent,
            target,
            measured,
            bound,
            items: 1,
            violations: usize::from(measured > bound + COMPARISON_SLACK),
        }
    }

    pub fn pair_gradient_rows(&self) -> Vec<BoundRow> {
        let mut rows = Vec::new();
        for &(variant, m) in &self.constants {
            for signal in Signal::ALL {
                for i in 0..self.n() {
                    for j in 0..self.n() {
                        let err = distance(self.estimate(signal, i, j), self.exact_gradient(signal, i, j));
                        let bound = m * self.lipschitz[i] * self.graph.complement(j).len() as f64 / self.g2();
                        rows.push(self.norm_row(Check::PairGradient, variant, signal, i, Some(j), err, bound));
                    }
                }
            }
        }
        rows
    }

    pub fn regional_gradient_rows(&self) -> Vec<BoundRow> {
        let eps = self.epsilon_kappa();
        let n_bar = self.graph.max_complement_size() as f64;
        let mut rows = Vec::new();
        for &(variant, m) in &self.constants {
            for signal in Signal::ALL {
                for i in 0..self.n() {
                    let hood = self.graph.neighborhood(i);
                    let est = sum(hood.iter().map(|&j| self.estimate(signal, i, j)));
                    let exact = sum((0..self.n()).map(|j| self.exact_gradient(signal, i, j)));
                    let err = distance(&est, &exact);
                    let comp = self.graph.complement(i).len() as f64;
                    let li = self.lipschitz[i];
                    let stated = m * n_bar * li * comp / self.g2() + comp * eps;
                    let pairwise = hood
                        .iter()
                        .map(|&j| m * li * self.graph.complement(j).len() as f64 / self.g2())
                        .sum::<f64>()
                        + comp * eps;
                    rows.push(self.norm_row(Check::RegionalGradient, variant, signal, i, None, err, stated));
                    rows.push(self.norm_row(Check::RegionalGradientPairwise, variant, signal, i, None, err, pairwise));
                }
            }
        }
        rows
    }

    pub fn weighted_gradient_rows(&self) -> Vec<BoundRow> {
        let eps = self.epsilon_kappa();
        let eta = self.opts.eta.clone().unwrap_or_else(|| vec![1.0; self.n()]);
        let mut rows = Vec::new();
        for &(variant, m) in &self.constants {
            for signal in Signal::ALL {
                for i in 0..self.n() {
                    let hood = self.graph.neighborhood(i);
                    let est = weighted_sum(hood.iter().map(|&j| (eta[j], self.estimate(signal, i, j))));
                    let exact = weighted_sum((0..self.n()).map(|l| (eta[l], self.exact_gradient(signal, i, l))));
                    let err = distance(&est, &exact);
                    let bound = hood
                        .iter()
                        .map(|&j| eta[j].abs() * m * self.lipschitz[i] * self.graph.complement(j).len() as f64 / self.g2())
                        .sum::<f64>()
                        + self.graph.complement(i).iter().map(|&j| eta[j].abs() * eps).sum::<f64>();
                    rows.push(self.norm_row(Check::WeightedGradient, variant, signal, i, None, err, bound));
                }
            }
        }
        rows
    }

    /// Runs the perturbation check plus the selected gradient checks.
    pub fn report(&self, parts: &[Part]) -> BoundReport {
        let mut rows = self.perturbation_rows();
        let mut epsilon_kappa = None;
        for part in parts {
            match part {
                Part::I => rows.extend(self.local_q_rows()),
                Part::II => rows.extend(self.pair_gradient_rows()),
                Part::III => rows.extend(self.regional_gradient_rows()),
                Part::IV => rows.extend(self.weighted_gradient_rows()),
            }
            if matches!(part, Part::III | Part::IV) {
                epsilon_kappa = Some(self.epsilon_kappa());
            }
        }
        BoundReport {
            rows,
            judged: self.opts.variant,
            coverage_holds: self.coverage_holds,
            epsilon_kappa,
            constants: self.constants.clone(),
            ergodicity: self.ergodicity,
            coverage: self.coverage,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sum<'v>(vs: impl Iterator<Item = &'v [f64]>) -> Vec<f64> {
    weighted_sum(vs.map(|v| (1.0, v)))
}

fn weighted_sum<'v>(vs: impl Iterator<Item = (f64, &'v [f64])>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for (w, v) in vs {
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

/// Measured errors against their bounds.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// The `M` variant that decides PASS/FAIL.
    pub judged: BoundVariant,
    /// When the coverage condition fails the bounds do not apply and the
    /// report is informational.
    pub coverage_holds: bool,
    pub epsilon_kappa: Option<f64>,
    pub constants: Vec<(BoundVariant, f64)>,
    pub ergodicity: Ergodicity,
    /// `g(κ, R)`.
    pub coverage: f64,
}

impl BoundReport {
    fn checks(&self) -> Vec<Check> {
        let mut c: Vec<Check> = self.rows.iter().map(|r| r.check).collect();
        c.sort();
        c.dedup();
        c
    }

    fn judged_rows(&self, check: Check) -> impl Iterator<Item = &BoundRow> {
        self.rows.iter().filter(move |r| r.check == check && r.variant == self.judged)
    }

    /// `None` if the check was not run.
    pub fn check_holds(&self, check: Check) -> Option<bool> {
        let mut rows = self.judged_rows(check).peekable();
        rows.peek()?;
        Some(rows.all(BoundRow::holds))
    }

    /// Every gating check holds, or the bounds do not apply.
    pub fn passed(&self) -> bool {
        !self.coverage_holds
            || self
                .rows
                .iter()
                .filter(|r| r.check.gating() && r.variant == self.judged)
                .all(BoundRow::holds)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "check,variant,signal,agent,target,measured,bound,margin,items,violations,status")?;
        for r in &self.rows {
            let status = if !self.coverage_holds {
                "n/a"
            } else if !r.check.gating() || r.variant != self.judged {
                "info"
            } else if r.holds() {
                "ok"
            } else {
                "violated"
            };
            let target = r.target.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{:e},{:e},{:e},{},{},{}",
                r.check.name(),
                r.variant.name(),
                r.signal.name(),
                r.agent,
                target,
                r.measured,
                r.bound,
                r.margin(),
                r.items,
                r.violations,
                status
            )?;
        }
        Ok(())
    }

    /// One PASS/FAIL line per check, plus comparison notes.
    pub fn summary(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for check in self.checks() {
            let rows: Vec<&BoundRow> = self.judged_rows(check).collect();
            let violations: usize = rows.iter().filter(|r| !r.holds()).count();
            let worst = rows
                .iter()
                .map(|r| {
                    if r.bound > 0.0 {
                        r.measured / r.bound
                    } else if r.measured > COMPARISON_SLACK {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            let verdict = if !self.coverage_holds {
                "N/A"
            } else if !check.gating() {
                "INFO"
            } else if violations == 0 {
                "PASS"
            } else {
                "FAIL"
            };
            lines.push(format!(
                "{:<27} {verdict:<4} rows={} violated={} max measured/bound={:.3e} ({} M)",
                check.name(),
                rows.len(),
                violations,
                worst,
                self.judged.name()
            ));
        }
        let stated: Vec<&BoundRow> = self.judged_rows(Check::RegionalGradient).collect();
        let pairwise: Vec<&BoundRow> = self.judged_rows(Check::RegionalGradientPairwise).collect();
        if !stated.is_empty() {
            let tighter: Vec<String> = stated
                .iter()
                .zip(&pairwise)
                .filter(|(s, p)| p.bound < s.bound)
                .map(|(s, _)| format!("{}:{}", s.signal.name(), s.agent))
                .collect();
            lines.push(if tighter.is_empty() {
                "regional-gradient: closed-form bound is at least as tight as the pairwise sum everywhere".into()
            } else {
                format!("regional-gradient: pairwise sum is tighter for {}", tighter.join(" "))
            });
        }
        if !self.coverage_holds {
            lines.push("coverage condition fails on this instance; bounds are not applicable".into());
        }
        lines
    }
}
