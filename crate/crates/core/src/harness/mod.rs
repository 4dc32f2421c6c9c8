//! Scenario files, bundled templates and the train / verify / gradcheck /
//! simulate commands.

mod config;
mod templates;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    full_power_sinr, ActionsConfig, ChainConfig, ConstraintsConfig, Diagnostics, GeometryConfig, LearningConfig,
    OracleConfig, PolicyInit, Scenario, ScenarioConfig, SCHEMA_VERSION,
};
pub use templates::{emit_config, template, TEMPLATES};

use crate::learning::{LearnError, Learner, StepRecord};
use crate::oracle::{gradcheck, softmax_score, solve_exact, BoundReport, GradCheck, OracleError, Part, Verifier};
use crate::policy::{JointPolicy, PolicyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Steps between forced flushes of the metrics file to disk.
pub const SYNC_INTERVAL: usize = 10_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n{0}")]
    Invalid(Diagnostics),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Oracle(OracleError::Budget { .. }) => EXIT_BUDGET,
            _ => EXIT_INVALID,
        }
    }
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    ScenarioConfig::load(path)?.build().map_err(HarnessError::Invalid)
}

/// Reads a policy checkpoint shaped for `scenario`.
pub fn load_policy(scenario: &Scenario, path: &Path) -> Result<JointPolicy, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(JointPolicy::from_checkpoint(
        &text,
        scenario.env.n_agents(),
        scenario.env.n_states(),
        scenario.env.n_levels(),
    )?)
}

impl Scenario {
    pub fn initial_policy(&self) -> JointPolicy {
        self.config.initial_policy(self.env.n_states())
    }
}

/// Per-step training metrics as CSV, one row per written step.
pub struct MetricsWriter {
    file: BufWriter<File>,
    path: PathBuf,
    stride: usize,
    steps: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, n_agents: usize, stride: usize) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut w = Self {
            file: BufWriter::new(file),
            path: path.to_path_buf(),
            stride: stride.max(1),
            steps: 0,
        };
        let mut header = vec!["t".to_string(), "state".to_string()];
        for prefix in ["a", "r", "c", "mu_r", "mu_c", "nu", "eta", "cost_slack"] {
            header.extend((0..n_agents).map(|i| format!("{prefix}_{i}")));
        }
        writeln!(w.file, "{}", header.join(",")).map_err(|e| HarnessError::io(path, e))?;
        Ok(w)
    }

    fn write_row(&mut self, r: &StepRecord) -> io::Result<()> {
        let f = &mut self.file;
        write!(f, "{},{}", r.t, r.state)?;
        for a in &r.actions {
            write!(f, ",{a}")?;
        }
        for v in r.rewards.iter().chain(&r.costs) {
            write!(f, ",{v}")?;
        }
        for a in &r.agents {
            write!(f, ",{}", a.reward_avg)?;
        }
        for a in &r.agents {
            write!(f, ",{}", a.cost_avg)?;
        }
        for a in &r.agents {
            write!(f, ",{}", a.nu)?;
        }
        for a in &r.agents {
            write!(f, ",{}", a.eta)?;
        }
        for v in &r.cost_slack {
            write!(f, ",{v}")?;
        }
        writeln!(f)
    }

    pub fn record(&mut self, r: &StepRecord) -> Result<(), HarnessError> {
        let res = (|| {
            if r.t % self.stride == 0 {
                self.write_row(r)?;
            }
            self.steps += 1;
            if self.steps % SYNC_INTERVAL == 0 {
                self.sync()?;
            }
            Ok(())
        })();
        res.map_err(|e| HarnessError::io(&self.path, e))
    }

    fn sync(&mut self) -> io::Result<()> {
        self.file.flush()?;
        self.file.get_ref().sync_data()
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        self.sync().map_err(|e| HarnessError::io(&self.path, e))
    }
}

/// Summary of one training run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub steps: usize,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub wall_clock_secs: f64,
    pub version: String,
    pub final_reward_avg: Vec<f64>,
    pub final_cost_avg: Vec<f64>,
    /// `u^i - Σ_{j∈N_κ(i)} μ̂^{c^j}` at the end of the run.
    pub final_cost_slack: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "policy.ckpt";
pub const RECORD_FILE: &str = "run.json";
pub const BOUNDS_FILE: &str = "bounds.csv";

/// Trains from the scenario's initial policy and writes `metrics.csv`,
/// `policy.ckpt` and `run.json` into `out`.
pub fn train(scenario: &Scenario, out: &Path, overrides: RunOverrides) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let cfg = &scenario.config;
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let steps = overrides.steps.unwrap_or(cfg.horizon);
    let n = scenario.env.n_agents();

    let mut learner = Learner::new(
        &scenario.env,
        &scenario.graph,
        scenario.initial_policy(),
        cfg.learner_config(),
        seed,
    )?;
    let metrics_path = out.join(METRICS_FILE);
    let mut metrics = MetricsWriter::create(&metrics_path, n, cfg.learning.metrics_stride)?;
    let mut last = None;
    for _ in 0..steps {
        let rec = learner.step()?;
        metrics.record(&rec)?;
        last = Some(rec);
    }
    metrics.finish()?;

    let checkpoint_path = out.join(CHECKPOINT_FILE);
    std::fs::write(&checkpoint_path, learner.policy().to_checkpoint()).map_err(|e| HarnessError::io(&checkpoint_path, e))?;
    let (reward, cost, slack) = match &last {
        Some(r) => (
            r.agents.iter().map(|a| a.reward_avg).collect(),
            r.agents.iter().map(|a| a.cost_avg).collect(),
            r.cost_slack.clone(),
        ),
        None => (vec![0.0; n], vec![0.0; n], cfg.constraints.cost_budget.clone()),
    };
    let record = RunRecord {
        config_hash: cfg.hash(),
        seed,
        steps,
        metrics_path,
        checkpoint_path,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        final_reward_avg: reward,
        final_cost_avg: cost,
        final_cost_slack: slack,
    };
    let record_path = out.join(RECORD_FILE);
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    std::fs::write(&record_path, json + "\n").map_err(|e| HarnessError::io(&record_path, e))?;
    Ok(record)
}

/// Runs the bound checks at `policy` and writes `bounds.csv` into `out` when
/// given.
pub fn verify(scenario: &Scenario, policy: &JointPolicy, parts: &[Part], out: Option<&Path>) -> Result<BoundReport, HarnessError> {
    let verifier = Verifier::new(
        &scenario.env,
        policy,
        &scenario.graph,
        &scenario.config.coverage,
        scenario.config.verify_options(),
    )?;
    let report = verifier.report(parts);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(BOUNDS_FILE);
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        report
            .write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(report)
}

/// Exact gradients against central differences at `policy`.
pub fn run_gradcheck(scenario: &Scenario, policy: &JointPolicy) -> Result<GradCheck, HarnessError> {
    let sol = solve_exact(&scenario.env, policy, scenario.config.oracle.budget)?;
    Ok(gradcheck(&sol, policy, scenario.config.oracle.gradcheck_eps, &softmax_score))
}

/// Rolls out `policy` for `steps` and writes the trajectory CSV to `out`.
pub fn simulate(scenario: &Scenario, policy: &JointPolicy, steps: usize, seed: u64, out: &Path) -> Result<(), HarnessError> {
    let traj = scenario.env.rollout(policy, steps, seed);
    let file = File::create(out).map_err(|e| HarnessError::io(out, e))?;
    let mut w = BufWriter::new(file);
    traj.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(out, e))
}
