use super::config::{
    full_power_sinr, ActionsConfig, ChainConfig, ConstraintsConfig, GeometryConfig, LearningConfig, OracleConfig,
    PolicyInit, ScenarioConfig, SCHEMA_VERSION,
};
use crate::environment::CostModel;
use crate::physics::{PairTable, PhysicsConstants};
use crate::topology::{CommGraph, CoverageFunction, Point};

pub const TEMPLATES: [&str; 3] = ["line4", "grid9", "single"];

fn physics(n: usize) -> PhysicsConstants {
    PhysicsConstants {
        gain_tx: 100.0,
        gain_rx: 100.0,
        side_gain_tx: 1.0,
        side_gain_rx: 1.0,
        wavelength: 10.0,
        max_power: 1.0,
        noise_std: vec![1.0; n],
        truncated_noise_std: None,
        rcs: PairTable::Constant(1.0),
        cross_correlation: PairTable::Constant(0.1),
    }
}

/// Radars on the x axis at `spacing`, cells hovering above them.
fn line_config(n: usize, spacing: f64, cells: Vec<[f64; 2]>, transition: Vec<Vec<f64>>, levels: usize) -> ScenarioConfig {
    let kappa = 1;
    let radars: Vec<[f64; 2]> = (0..n).map(|i| [spacing * i as f64, 0.0]).collect();
    let mut cfg = ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        seed: 1,
        horizon: 200_000,
        geometry: GeometryConfig {
            radars,
            cells,
            comm_radius: spacing,
            kappa,
        },
        coverage: CoverageFunction::linear(spacing),
        physics: physics(n),
        chain: ChainConfig { transition, initial: None },
        actions: ActionsConfig { levels },
        cost: CostModel::Power,
        constraints: ConstraintsConfig {
            cost_budget: vec![1.0; n],
            sinr_floor: 0.0,
        },
        learning: LearningConfig::default(),
        policy: PolicyInit::Uniform,
        oracle: OracleConfig::default(),
    };
    // Budgets at 1.5x the regional cost of the uniform policy; SINR floor at
    // 0.8x the weakest agent's full-power SINR.
    let points: Vec<Point> = cfg.geometry.radars.iter().map(|p| Point::new(p[0], p[1])).collect();
    let graph = CommGraph::build(&points, spacing, kappa).expect("template geometry is valid");
    let mean_power = cfg.physics.max_power / 2.0;
    cfg.constraints.cost_budget = (0..n).map(|i| 1.5 * mean_power * graph.neighborhood(i).len() as f64).collect();
    let scenario = cfg.build().expect("template validates");
    let worst = full_power_sinr(&scenario.env).into_iter().fold(f64::INFINITY, f64::min);
    cfg.constraints.sinr_floor = (0.8 * worst * 1e4).floor() / 1e4;
    cfg
}

fn drift_chain(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|s| {
            let mut row = vec![0.0; k];
            row[s] += 0.5;
            row[(s + 1) % k] += 0.3;
            row[(s + k - 1) % k] += 0.2;
            row
        })
        .collect()
}

pub fn template(name: &str) -> Option<ScenarioConfig> {
    match name {
        "line4" => Some(line_config(
            4,
            2.0,
            vec![[1.0, 2.0], [3.0, 2.0], [5.0, 2.0]],
            vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.3, 0.6]],
            2,
        )),
        "grid9" => Some(line_config(9, 2.0, vec![[4.0, 2.0], [8.0, 2.0], [12.0, 2.0]], drift_chain(3), 2)),
        "single" => {
            let mut cfg = line_config(1, 2.0, vec![[-1.0, 2.0], [1.0, 2.0]], vec![vec![0.7, 0.3], vec![0.4, 0.6]], 3);
            cfg.policy = PolicyInit::Random { scale: 0.5 };
            Some(cfg)
        }
        _ => None,
    }
}

/// Comments attached to section headers and keys, by dotted path.
const COMMENTS: &[(&str, &str)] = &[
    ("schema_version", "Config format version."),
    ("seed", "Master seed. Environment and agents draw from separate streams of it."),
    ("horizon", "Training steps T."),
    ("geometry", "Radar and target-cell positions, [x, y]."),
    ("geometry.cells", "Target cells, indexed like the chain states."),
    ("geometry.comm_radius", "Radars closer than this exchange messages."),
    ("geometry.kappa", "Hops kept in each agent's neighbourhood."),
    ("coverage", "Lower bound g(kappa, R) on the distance to radars outside a neighbourhood.\nform = \"linear\" gives kappa * radius; form = \"table\" lists values per kappa."),
    ("physics", "Antenna gains, wavelength, peak power and receiver noise."),
    ("physics.noise_std", "Receiver noise standard deviation, one per radar."),
    ("physics.rcs", "Radar cross section: a constant or an n x n matrix."),
    ("physics.cross_correlation", "Waveform cross-correlation between distinct radars: a constant or an n x n matrix."),
    ("chain", "Target motion. Must be irreducible and aperiodic."),
    ("chain.initial", "Initial distribution; uniform when omitted."),
    ("actions", "Power levels per radar, evenly spaced from 0 to max_power."),
    ("cost", "Per-step cost: form = \"power\" uses the transmitted power."),
    ("constraints", "Constraint levels."),
    ("constraints.cost_budget", "Budget u on the summed average cost of each neighbourhood."),
    ("constraints.sinr_floor", "Minimum average SINR per radar (cost-minimization variant)."),
    ("learning", "Training loop."),
    ("learning.algorithm", "alg1: maximize SINR under cost budgets. alg2: minimize cost under SINR floors."),
    ("learning.q_update", "plain: Q += zeta (f - mu). td: differential TD(0)."),
    ("learning.parallel", "Run agent updates on a thread pool; results are identical."),
    ("learning.audit", "Record every message for locality auditing."),
    ("learning.metrics_stride", "Write every n-th step to the metrics file."),
    ("learning.schedules", "Stepsizes scale / (1 + t)^power."),
    ("learning.schedules.alpha", "Stepsizes are scale / (1 + t)^power.\nalpha: policy step. beta: multiplier step, zeta: average and Q step.\ndelta (optional, defaults to beta): step for the nu multiplier of alg2."),
    ("learning.caps", "Multiplier projection caps."),
    ("policy", "Initial policy: form = \"uniform\" or form = \"random\" with a logit scale."),
    ("oracle", "Exact verification settings."),
    ("oracle.bound_variant", "noise-floor keeps the 1/sigma_min^4 factor in M; literal drops it."),
    ("oracle.budget", "Largest |S| * L^n to enumerate."),
    ("oracle.ergodicity_horizon", "Steps used to fit the mixing constant."),
    ("oracle.gradcheck_eps", "Finite-difference step for gradcheck."),
    ("oracle.gradcheck_tol", "Largest accepted relative error in gradcheck."),
    ("oracle.weighting", "Weighting over actions outside a neighbourhood: uniform, conditional-stationary or custom."),
];

fn comment_for(path: &str) -> Option<&'static str> {
    COMMENTS.iter().find(|(p, _)| *p == path).map(|(_, c)| *c)
}

fn push_comment(out: &mut String, text: &str) {
    for line in text.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
}

impl ScenarioConfig {
    /// TOML with explanatory comments. Loading it gives back `self`.
    pub fn to_commented_toml(&self) -> String {
        let plain = self.to_toml();
        let mut out = String::new();
        let mut section = String::new();
        for line in plain.lines() {
            let trimmed = line.trim();
            if let Some(header) = trimmed.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
                section = header.to_string();
                if !out.is_empty() && !out.ends_with("\n\n") {
                    out.push('\n');
                }
                if let Some(c) = comment_for(&section) {
                    push_comment(&mut out, c);
                }
            } else if let Some((key, _)) = trimmed.split_once(" = ") {
                let path = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
                if let Some(c) = comment_for(&path) {
                    push_comment(&mut out, c);
                }
            } else if trimmed.is_empty() {
                continue;
            }
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// A commented template ready to write to disk.
pub fn emit_config(name: &str) -> Option<String> {
    template(name).map(|c| c.to_commented_toml())
}
