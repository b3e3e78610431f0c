use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cache_rl::experiments::{presets, run_scenario, LearnerSpec, Scenario};
use cache_rl::oracle::{write_policy_csv, write_q_csv};
use cache_rl::schedule::EpsilonSchedule;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cache-rl", version, about = "Edge-caching simulations with Q-learning agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario's Monte Carlo realizations and write metrics
    Run {
        /// Preset name or path to a scenario JSON file
        #[arg(long)]
        scenario: String,
        /// Base seed for the realizations
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Track the normalized Q error against the oracle
        #[arg(long)]
        oracle_compare: bool,
        /// Slots between Q error checkpoints
        #[arg(long, default_value_t = 1000)]
        oracle_every: usize,
        /// Replace the scenario's learner
        #[arg(long, value_enum)]
        learner: Option<LearnerKind>,
    },
    /// List the built-in scenarios
    Presets,
    /// Solve a scenario exactly and write the optimal policy, values and Q
    Oracle {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print a scenario as JSON, e.g. as a starting point for a custom file
    Show {
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerKind {
    /// Tabular Q-learning (beta 0.8, epsilon 0.05 unless the scenario sets them)
    Exact,
    /// Linear approximation (alpha 0.005, epsilon 0.05 unless the scenario sets them)
    Linear,
    /// Follow the optimal policy
    Oracle,
    /// Uniformly random caching
    Random,
}

fn load_scenario(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()));
    }
    presets::preset(spec).with_context(|| {
        format!(
            "{spec:?} is neither a scenario file nor a preset ({})",
            presets::PRESET_NAMES.join(", ")
        )
    })
}

fn replace_learner(current: &LearnerSpec, kind: LearnerKind) -> LearnerSpec {
    match (kind, current) {
        (LearnerKind::Exact, LearnerSpec::Exact { .. }) | (LearnerKind::Linear, LearnerSpec::Linear { .. }) => {
            *current
        }
        (LearnerKind::Exact, _) => presets::exact_learner(0.8, 0.05),
        (LearnerKind::Linear, _) => {
            presets::linear_learner(presets::SMALL_ALPHA, EpsilonSchedule::Constant { value: 0.05 })
        }
        (LearnerKind::Oracle, _) => LearnerSpec::OraclePolicy,
        (LearnerKind::Random, _) => LearnerSpec::RandomBaseline,
    }
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

#[allow(clippy::too_many_arguments)]
fn run(
    spec: &str,
    seed: Option<u64>,
    horizon: Option<usize>,
    realizations: Option<usize>,
    out: &Path,
    oracle_compare: bool,
    oracle_every: usize,
    learner: Option<LearnerKind>,
) -> Result<()> {
    let mut scenario = load_scenario(spec)?;
    if let Some(seed) = seed {
        scenario.base_seed = seed;
    }
    if let Some(h) = horizon {
        scenario.horizon = h;
    }
    if let Some(r) = realizations {
        scenario.realizations = r;
    }
    if let Some(kind) = learner {
        scenario.learner = replace_learner(&scenario.learner, kind);
    }
    if oracle_compare {
        scenario.oracle_every = Some(oracle_every);
    }
    scenario.validate()?;

    let trace = run_scenario(&scenario)?;
    create_dir(out)?;
    let csv = out.join(format!("{}_metrics.csv", scenario.name));
    let meta = out.join(format!("{}_metadata.json", scenario.name));
    trace.write_csv(&csv)?;
    trace.write_metadata(&meta)?;

    let window = scenario.summary_window.min(scenario.horizon);
    println!(
        "{} ({}): {} of {} realizations, final {window}-slot cost {:.4}, hit fraction {:.4}",
        scenario.name,
        scenario.learner.label(),
        trace.runs.len(),
        scenario.realizations,
        trace.window_cost(window),
        trace.window_hit(window),
    );
    if let Some((slot, err)) = trace.norm_error_points().last() {
        println!("normalized Q error at slot {}: {err:.4}", slot + 1);
    }
    println!("wrote {} and {}", csv.display(), meta.display());
    if !trace.failures.is_empty() {
        for f in &trace.failures {
            eprintln!("realization {} (seed {}) failed: {}", f.realization, f.seed, f.error);
        }
        bail!("{} realizations failed", trace.failures.len());
    }
    Ok(())
}

fn list_presets() {
    for name in presets::PRESET_NAMES {
        let weights = presets::weights(name)
            .map(|w| format!("({}, {}, {})", w.lambda1, w.lambda2, w.lambda3))
            .unwrap_or_else(|| "schedule".into());
        println!("{name:<8} {weights:<18} {}", presets::describe(name).unwrap_or_default());
    }
    println!();
    println!(
        "small network: F={}, M={}, 2 global states (Zipf {:?}), 2 local states (Zipf {:?})",
        presets::SMALL_CATALOG,
        presets::SMALL_CAPACITY,
        presets::SMALL_GLOBAL_EXPONENTS,
        presets::SMALL_LOCAL_EXPONENTS
    );
    println!(
        "large network: F={}, M={}, {} global and {} local states, Zipf exponents uniform on {:?}",
        presets::LARGE_CATALOG,
        presets::LARGE_CAPACITY,
        presets::LARGE_GLOBAL_STATES,
        presets::LARGE_LOCAL_STATES,
        presets::LARGE_EXPONENT_RANGE
    );
}

fn oracle(spec: &str, out: &Path) -> Result<()> {
    let scenario = load_scenario(spec)?;
    let (space, solution) = scenario.solve_oracle()?;
    create_dir(out)?;
    let policy = out.join(format!("{}_policy.csv", scenario.name));
    let q = out.join(format!("{}_q.csv", scenario.name));
    write_policy_csv(&space, &solution.policy, &solution.value, &policy)?;
    write_q_csv(&space, &solution.q, &q)?;
    println!(
        "{}: {} states, {} actions, {} policy iterations; wrote {} and {}",
        scenario.name,
        space.num_states(),
        space.num_actions(),
        solution.iterations,
        policy.display(),
        q.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            horizon,
            realizations,
            out,
            oracle_compare,
            oracle_every,
            learner,
        } => run(&scenario, seed, horizon, realizations, &out, oracle_compare, oracle_every, learner),
        Command::Presets => {
            list_presets();
            Ok(())
        }
        Command::Oracle { scenario, out } => oracle(&scenario, &out),
        Command::Show { scenario } => {
            println!("{}", load_scenario(&scenario)?.to_json()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
