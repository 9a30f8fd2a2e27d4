//! `trust-planner`: fit, solve, simulate, compare, enumerate, serve and play.

mod error;
mod play;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use trust_pomdp::learning::{
    compare_models, fit_trust_based, fit_trust_dynamics, fit_trust_free, reward_table, InteractionLog,
};
use trust_pomdp::pomdp::{exact_plan, pbvi_solve, ExactOptions, PbviOptions, Policy, SolveStatus};
use trust_pomdp::sim::{
    compare_policies, enumerate_sequences, evaluate, expected_reward, most_likely_actions, policy_tree,
    rollouts_to_csv, run_episodes, sequences_to_csv, Agent, HumanTruth,
};
use trust_pomdp::task::{
    build_model, build_myopic_model, build_trust_max_model, default_objects, preset, reference_parameters,
    ParameterFile, ParameterSource, TaskConfig, TaskConfigFile, TaskModel,
};
use trust_session_server::{AppState, Registry};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "trust-planner", version, about = "Trust-aware robot planning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Exact,
    Pbvi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyObjective {
    Performance,
    TrustMaximizing,
    Myopic,
}

#[derive(clap::Args, Debug, Clone, Default)]
struct TaskArgs {
    /// Built-in task: always-success or failure-scenario.
    #[arg(long)]
    preset: Option<String>,
    /// Task configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter file overriding the task's trust and behavior parameters.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(clap::Args, Debug, Clone)]
struct SolveArgs {
    #[arg(long, value_enum, default_value = "pbvi")]
    solver: Solver,
    /// Point-based solver convergence tolerance.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit trust dynamics and human behavior from interaction logs.
    Fit {
        #[command(flatten)]
        task: TaskArgs,
        /// Interaction log (JSONL).
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Parameter file to write.
        #[arg(long, visible_alias = "output")]
        out: Option<PathBuf>,
    },
    /// Solve a task for a robot policy.
    Solve {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, value_enum, default_value = "performance")]
        objective: PolicyObjective,
        #[arg(long, visible_alias = "output")]
        out: Option<PathBuf>,
    },
    /// Roll a policy out against the simulated human.
    Simulate {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Summary JSON, or per-step rows when the file ends in .csv.
        #[arg(long, visible_alias = "output")]
        out: Option<PathBuf>,
        /// Also write every episode as an interaction log (JSONL).
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Compare performance and trust-maximizing policies in simulation.
    Compare {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, visible_alias = "output")]
        out: Option<PathBuf>,
    },
    /// Enumerate every human action sequence under a policy.
    Enumerate {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        solve: SolveArgs,
        /// Policy file; solved on the fly when absent.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// JSON report, or sequence rows when the file ends in .csv.
        #[arg(long, visible_alias = "output")]
        out: Option<PathBuf>,
    },
    /// Host live sessions over HTTP.
    Serve {
        #[command(flatten)]
        task: TaskArgs,
        /// Extra policy, registered under its file stem.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Append completed episodes to this JSONL file.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Play one episode as the human in the terminal.
    Play {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Interaction log to write (JSONL).
        #[arg(long, visible_alias = "output")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return report(CliError::validation("INVALID_ARGUMENTS", e.render().to_string().trim_end().to_string()))
        }
    };
    if let Err(e) = configure_threads() {
        return report(e);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("{}", json!({"code": e.code(), "message": e.to_string()}));
    ExitCode::from(e.exit_code())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("TRUST_PLANNER_THREADS") else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::validation("INVALID_ENV", format!("TRUST_PLANNER_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::runtime("RUNTIME_ERROR", e.to_string()))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit { task, logs, out } => fit(&task, logs, out),
        Command::Solve { task, solve: opts, objective, out } => {
            let out = required(out, "--out")?;
            let (config, params) = load_task(&task)?;
            let (model, solved) = solve(&config, &params, objective, &opts, task_label(&task))?;
            let mut policy = solved.policy;
            policy.metadata.timestamp = Some(now());
            write_atomic(&out, &policy.to_json())?;
            print_json(&json!({
                "states": model.visible_count(),
                "actions": model.action_count(),
                "solver": policy.metadata.solver,
                "value": solved.value,
                "iterations": solved.iterations,
                "residual": solved.residual,
                "converged": solved.converged,
            }));
            Ok(())
        }
        Command::Simulate { task, policy, episodes, seed, out, logs } => {
            let policy_path = required(policy, "--policy")?;
            let (config, params) = load_task(&task)?;
            let policy = load_policy(&policy_path)?;
            let model = model_for_policy(&config, &params, &policy)?;
            let agent = Agent::new(&model, &policy);
            let truth = HumanTruth::from_config(&config);
            let wants_rows = out.as_deref().is_some_and(is_csv);
            if logs.is_some() || wants_rows {
                let records = run_episodes(&config, agent, &truth, episodes, seed)?;
                if let Some(path) = &logs {
                    let mut log = InteractionLog::new(records.iter().map(|r| r.to_episode(true)).collect());
                    for e in &mut log.episodes {
                        e.metadata.config = Some(task_label(&task));
                    }
                    write_atomic(path, &log.to_jsonl())?;
                }
                if let (Some(path), true) = (&out, wants_rows) {
                    write_atomic(path, &rollouts_to_csv(&records)?)?;
                }
            }
            let summary = evaluate(&config, agent, &truth, episodes, seed)?;
            let text = to_pretty(&summary);
            match out.filter(|p| !is_csv(p)) {
                Some(path) => write_atomic(&path, &text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Compare { task, solve: opts, episodes, seed, out } => {
            let (config, params) = load_task(&task)?;
            let label = task_label(&task);
            let (perf, perf_policy) = solve(&config, &params, PolicyObjective::Performance, &opts, label.clone())?;
            let (tmax, tmax_policy) = solve(&config, &params, PolicyObjective::TrustMaximizing, &opts, label)?;
            let report = compare_policies(
                &config,
                &[
                    ("performance", Agent::new(&perf, &perf_policy.policy)),
                    ("trust-maximizing", Agent::new(&tmax, &tmax_policy.policy)),
                ],
                &HumanTruth::from_config(&config),
                episodes,
                seed,
            )?;
            let text = to_pretty(&report);
            match out {
                Some(path) => write_atomic(&path, &text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Enumerate { task, solve: opts, policy, out } => {
            let (config, params) = load_task(&task)?;
            let (model, policy) = match policy {
                Some(path) => {
                    let policy = load_policy(&path)?;
                    (model_for_policy(&config, &params, &policy)?, policy)
                }
                None => {
                    let (model, solved) = solve(&config, &params, PolicyObjective::Performance, &opts, task_label(&task))?;
                    (model, solved.policy)
                }
            };
            let agent = Agent::new(&model, &policy);
            let records = enumerate_sequences(&config, agent)?;
            let text = match out.as_deref().is_some_and(is_csv) {
                true => sequences_to_csv(&records)?,
                false => {
                    let tree = policy_tree(&config, agent)?;
                    to_pretty(&json!({
                        "expectedReward": expected_reward(&records),
                        "mostLikelyActions": most_likely_actions(&tree),
                        "sequences": records,
                        "tree": tree,
                    }))
                }
            };
            match out {
                Some(path) => write_atomic(&path, &text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Serve { task, policy, port, logs } => serve(&task, policy, port, logs),
        Command::Play { task, policy, seed, out } => {
            let out = required(out, "--out")?;
            let (config, params) = load_task(&task)?;
            let (model, policy) = match policy {
                Some(path) => {
                    let policy = load_policy(&path)?;
                    (model_for_policy(&config, &params, &policy)?, policy)
                }
                None => {
                    let opts = SolveArgs { solver: Solver::Exact, tolerance: 1e-3 };
                    let (model, solved) = solve(&config, &params, PolicyObjective::Performance, &opts, task_label(&task))?;
                    (model, solved.policy)
                }
            };
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            let episode =
                play::play(&config, &model, &policy, seed, task_label(&task), &mut stdin.lock(), &mut stdout.lock())?;
            write_atomic(&out, &InteractionLog::new(vec![episode]).to_jsonl())
        }
    }
}

fn fit(task: &TaskArgs, logs: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), CliError> {
    let logs_path = required(logs, "--logs")?;
    let text = read(&logs_path)?;
    let log = InteractionLog::from_jsonl(&text)?;
    log.validate()?;
    let objects = match (&task.preset, &task.config) {
        (None, None) => default_objects(),
        _ => load_task(task)?.0.objects,
    };
    let rewards = reward_table(&objects);
    let dynamics = fit_trust_dynamics(&log)?;
    let based = fit_trust_based(&log, &rewards)?;
    let free = fit_trust_free(&log, &rewards)?;
    let comparison = compare_models(&log, &rewards)?;
    if !based.convergence.converged() {
        let message = format!(
            "gradient ascent hit the iteration cap for {} (gradient norm {:e})",
            based.convergence.unconverged.join(", "),
            based.convergence.residual
        );
        eprintln!("{}", json!({"code": "NON_CONVERGENCE", "message": message}));
    }
    let mut params = ParameterFile::new(
        dynamics.dynamics().expect("dynamics fit"),
        based.behavior().expect("behavior fit").clone(),
    );
    params.provenance = Some(format!("Fitted from {} episodes", log.episodes.len()));
    params.trust_free_behavior = free.behavior().cloned();
    if let Some(path) = &out {
        write_atomic(path, &params.to_json())?;
    }
    print_json(&json!({
        "episodes": log.episodes.len(),
        "dynamics": dynamics,
        "trustBased": based,
        "trustFree": free,
        "comparison": comparison,
        "parameters": if out.is_none() { serde_json::to_value(&params).expect("serializes") } else { serde_json::Value::Null },
    }));
    Ok(())
}

fn serve(task: &TaskArgs, policy: Option<PathBuf>, port: u16, logs: Option<PathBuf>) -> Result<(), CliError> {
    let params = match &task.params {
        Some(path) => ParameterFile::load(path)?,
        None => reference_parameters(),
    };
    let mut registry = Registry::with_presets(&params)?;
    if task.config.is_some() || task.preset.is_some() || policy.is_some() {
        let (config, params) = load_task(task)?;
        let name = task_label(task);
        registry.add_config(&name, config.clone())?;
        if let Some(path) = policy {
            let loaded = load_policy(&path)?;
            model_for_policy(&config, &params, &loaded)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom").to_string();
            registry.add_policy(&stem, loaded);
        }
    }
    let configs: Vec<_> = registry.config_names().map(str::to_string).collect();
    let policies: Vec<_> = registry.policy_names().map(str::to_string).collect();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("RUNTIME_ERROR", e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .map_err(|e| CliError::runtime("BIND_FAILED", format!("port {port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::runtime("BIND_FAILED", e.to_string()))?;
        eprintln!("{}", json!({"listening": addr.to_string(), "configs": configs, "policies": policies}));
        trust_session_server::serve(listener, AppState::with_log(registry, logs))
            .await
            .map_err(|e| CliError::runtime("SERVER_ERROR", e.to_string()))
    })
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::validation("MISSING_INPUT", format!("{flag} is required")))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::validation("UNREADABLE_INPUT", format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path) -> Result<Policy, CliError> {
    Policy::from_json(&read(path)?).map_err(|e| CliError::validation("INVALID_POLICY", format!("{}: {e}", path.display())))
}

fn task_label(task: &TaskArgs) -> String {
    match (&task.preset, &task.config) {
        (_, Some(path)) => path.file_stem().and_then(|s| s.to_str()).unwrap_or("config").to_string(),
        (Some(name), None) => name.clone(),
        (None, None) => "task".into(),
    }
}

/// Resolves the task from `--config` or `--preset`, with `--params`
/// replacing the parameter source.
fn load_task(task: &TaskArgs) -> Result<(TaskConfig, ParameterFile), CliError> {
    match (&task.preset, &task.config) {
        (Some(_), Some(_)) => Err(CliError::validation("CONFLICTING_INPUT", "give either --preset or --config, not both".into())),
        (None, None) => Err(CliError::validation("MISSING_INPUT", "--preset or --config is required".into())),
        (Some(name), None) => {
            let params = match &task.params {
                Some(path) => ParameterFile::load(path)?,
                None => reference_parameters(),
            };
            Ok((preset(name, &params)?, params))
        }
        (None, Some(path)) => {
            let mut file = TaskConfigFile::from_json(&read(path)?)?;
            if let Some(params) = &task.params {
                let absolute = std::path::absolute(params)
                    .map_err(|e| CliError::validation("UNREADABLE_INPUT", e.to_string()))?;
                file.parameters = Some(ParameterSource::Named(absolute.to_string_lossy().into_owned()));
            }
            Ok(file.resolve(path.parent())?)
        }
    }
}

fn model_for(config: &TaskConfig, params: &ParameterFile, objective: PolicyObjective) -> Result<TaskModel, CliError> {
    Ok(match objective {
        PolicyObjective::Performance => build_model(&config.clone().with_objective(Default::default()))?,
        PolicyObjective::TrustMaximizing => build_trust_max_model(config)?,
        PolicyObjective::Myopic => {
            let free = params.trust_free_behavior.clone().ok_or_else(|| {
                CliError::validation("INVALID_PARAMS", "the myopic objective needs trustFreeBehavior parameters".into())
            })?;
            build_myopic_model(&config.clone().with_human_model(free))?
        }
    })
}

/// The model among the task's variants that the policy was solved on.
fn model_for_policy(config: &TaskConfig, params: &ParameterFile, policy: &Policy) -> Result<TaskModel, CliError> {
    let mut objectives = vec![PolicyObjective::Performance, PolicyObjective::TrustMaximizing];
    if params.trust_free_behavior.is_some() {
        objectives.push(PolicyObjective::Myopic);
    }
    for objective in objectives {
        let model = model_for(config, params, objective)?;
        if model.digest() == policy.metadata.model_digest && model.hidden_count() == policy.hidden_count() {
            return Ok(model);
        }
    }
    Err(CliError::validation("POLICY_MISMATCH", "the policy was not solved for this task".into()))
}

struct Solved {
    policy: Policy,
    value: f64,
    iterations: Option<usize>,
    residual: Option<f64>,
    converged: bool,
}

fn solve(
    config: &TaskConfig,
    params: &ParameterFile,
    objective: PolicyObjective,
    opts: &SolveArgs,
    label: String,
) -> Result<(TaskModel, Solved), CliError> {
    if !(opts.tolerance > 0.0 && opts.tolerance.is_finite()) {
        return Err(CliError::validation("INVALID_ARGUMENTS", format!("tolerance {} must be positive", opts.tolerance)));
    }
    let model = model_for(config, params, objective)?;
    let mut solved = match opts.solver {
        Solver::Exact => {
            let plan = exact_plan(&model, ExactOptions::default())?;
            Solved { policy: plan.policy, value: plan.value, iterations: None, residual: None, converged: true }
        }
        Solver::Pbvi => {
            let report = pbvi_solve(&model, PbviOptions { tolerance: opts.tolerance, ..PbviOptions::default() })?;
            if let SolveStatus::NonConvergence { residual } = report.status {
                eprintln!("{}", json!({"code": "NON_CONVERGENCE", "message": format!("residual {residual:e} above tolerance")}));
            }
            Solved {
                converged: report.status == SolveStatus::Converged,
                policy: report.policy,
                value: report.value,
                iterations: Some(report.iterations),
                residual: Some(report.residual),
            }
        }
    };
    solved.policy.metadata.label = Some(label);
    Ok((model, solved))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", to_pretty(value));
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::runtime("WRITE_FAILED", format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    if !contents.ends_with('\n') {
        tmp.write_all(b"\n").map_err(fail)?;
    }
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
