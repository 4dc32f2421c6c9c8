use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use radar_marl::harness::{
    self, load_policy, load_scenario, HarnessError, RunOverrides, Scenario, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK,
    TEMPLATES,
};
use radar_marl::oracle::Part;
use radar_marl::policy::JointPolicy;

#[derive(Parser)]
#[command(name = "radar-marl", version, about = "Decentralized power control for radar networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with the configured algorithm; writes metrics.csv, policy.ckpt and run.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Check measured truncation errors against their bounds at a fixed policy.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Gradient checks to run besides the Q-perturbation check.
        #[arg(long, default_value = "i,ii,iii,iv")]
        parts: String,
        /// Directory for bounds.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Policy checkpoint; the config's initial policy otherwise.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Compare exact policy gradients with central finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Roll out a fixed policy and dump the trajectory as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Print a commented scenario template.
    EmitConfig {
        #[arg(value_parser = TEMPLATES)]
        template: String,
    },
}

fn policy_for(scenario: &Scenario, path: Option<&Path>) -> Result<JointPolicy, HarnessError> {
    match path {
        Some(p) => load_policy(scenario, p),
        None => Ok(scenario.initial_policy()),
    }
}

fn load(path: &Path) -> Result<Scenario, HarnessError> {
    let scenario = load_scenario(path)?;
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    Ok(scenario)
}

fn run(cmd: Command) -> Result<i32, HarnessError> {
    match cmd {
        Command::Train { config, out, seed, steps } => {
            let scenario = load(&config)?;
            let rec = harness::train(&scenario, &out, RunOverrides { seed, steps })?;
            println!(
                "trained {} steps in {:.1}s (seed {}, config {})",
                rec.steps,
                rec.wall_clock_secs,
                rec.seed,
                &rec.config_hash[..12]
            );
            println!("metrics: {}", rec.metrics_path.display());
            println!("policy:  {}", rec.checkpoint_path.display());
            Ok(EXIT_OK)
        }
        Command::Verify { config, parts, out, policy } => {
            let parts = match Part::parse_list(&parts) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(EXIT_INVALID);
                }
            };
            let scenario = load(&config)?;
            let policy = policy_for(&scenario, policy.as_deref())?;
            let started = Instant::now();
            let report = harness::verify(&scenario, &policy, &parts, out.as_deref())?;
            for (variant, m) in &report.constants {
                println!("M ({}) = {m:.6e}", variant.name());
            }
            println!(
                "g = {:.4}, ergodicity m = {:.4}, rho = {:.4}",
                report.coverage, report.ergodicity.m, report.ergodicity.rho
            );
            if let Some(eps) = report.epsilon_kappa {
                println!("epsilon_kappa = {eps:.6e}");
            }
            for line in report.summary() {
                println!("{line}");
            }
            println!("elapsed {:.2}s", started.elapsed().as_secs_f64());
            Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Gradcheck { config, policy } => {
            let scenario = load(&config)?;
            let policy = policy_for(&scenario, policy.as_deref())?;
            let check = harness::run_gradcheck(&scenario, &policy)?;
            let tol = scenario.config.oracle.gradcheck_tol;
            let verdict = if check.passed(tol) { "PASS" } else { "FAIL" };
            println!(
                "gradcheck {verdict}: max relative error {:.3e} over {} components (tolerance {tol:e})",
                check.max_rel_error, check.comparisons
            );
            if let Some((agent, signal, target, k)) = check.worst {
                println!("worst: agent {agent}, {} of agent {target}, component {k}", signal.name());
            }
            Ok(if check.passed(tol) { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Simulate { config, out, seed, steps, policy } => {
            let scenario = load(&config)?;
            let policy = policy_for(&scenario, policy.as_deref())?;
            let seed = seed.unwrap_or(scenario.config.seed);
            let steps = steps.unwrap_or(scenario.config.horizon);
            harness::simulate(&scenario, &policy, steps, seed, &out)?;
            println!("wrote {steps} steps to {}", out.display());
            Ok(EXIT_OK)
        }
        Command::EmitConfig { template } => {
            let text = harness::emit_config(&template).expect("clap restricts the template names");
            print!("{text}");
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = run(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
