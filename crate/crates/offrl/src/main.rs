use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use offrl::formats::{
    load_anchor, load_dataset, load_mdp, load_policy, load_rewards, save_dataset, save_mdp, save_policy,
    write_json, AnchorFile, ModelDump, PolicyFile,
};
use offrl::sweep::{
    fit_rate, read_csv, run_sweep, write_csv, AnchorSource, Metric, RewardFamily, SweepConfig,
};
use offrl_core::absorbing::{increment_gap, verify_singleton_identity, SingletonReport};
use offrl_core::anchor::{anchor_plan, AnchorModel};
use offrl_core::instance::{generate_anchor_instance, generate_instance, AnchorInstanceSpec, InstanceFamily, InstanceSpec};
use offrl_core::mdp::FiniteHorizon;
use offrl_core::multitask::{task_agnostic_learn, RewardSet};
use offrl_core::ope::{
    global_uniform_error, local_uniform_error, lower_bound_demo, sample_local_class, PolicyClassSpec,
    UniformErrorReport, DEFAULT_ENUMERATION_CAP,
};
use offrl_core::{fit_plugin, l1_row_error, plan_optimal, roll_episodes, Policy, RngStream, TabularMdp};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "offrl", version, about = "Offline tabular RL: plug-in models and uniform OPE error")]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sweep configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic MDP.
    Generate(GenerateArgs),
    /// Roll episodes of a behavior policy.
    Roll(RollArgs),
    /// Fit the plug-in model to a dataset.
    Fit(FitArgs),
    /// Optimal values and greedy policy of an MDP.
    Plan {
        #[arg(long)]
        mdp: PathBuf,
        /// Also write the greedy policy here.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Uniform off-policy evaluation error.
    #[command(subcommand)]
    Ope(OpeCommand),
    /// Absorbing-MDP checks.
    #[command(subcommand)]
    Absorbing(AbsorbingCommand),
    /// Plan several tasks on one shared model.
    Multitask(MultitaskArgs),
    /// Anchor-state linear MDPs.
    #[command(subcommand)]
    Anchor(AnchorCommand),
    /// Run a Monte Carlo sweep from `--config`, writing CSV.
    Sweep,
    /// Fit a log-log rate to one metric of a sweep CSV.
    Rate {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        metric: String,
        /// Exit with status 2 when the fitted slope exceeds this.
        #[arg(long, allow_hyphen_values = true)]
        max_slope: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    DirichletRandom,
    Chain,
    NearUniform,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "dirichlet-random")]
    family: FamilyArg,
    #[arg(long, short = 'S')]
    states: usize,
    #[arg(long, short = 'A')]
    actions: usize,
    #[arg(long, short = 'H')]
    horizon: usize,
    /// Also write the family's behavior policy here.
    #[arg(long)]
    behavior_out: Option<PathBuf>,
}

#[derive(Args)]
struct RollArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Behavior policy file; uniform when absent.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, short = 'n')]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Write counts and estimates as JSON here.
    #[arg(long)]
    dump_model: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum OpeCommand {
    /// Sup error over deterministic policies, exhaustive unless `--samples`.
    Global {
        #[command(flatten)]
        io: DataArgs,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
        #[arg(long)]
        per_policy: bool,
    },
    /// Sup error over a sample of the near-optimal class.
    Local {
        #[command(flatten)]
        io: DataArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        per_policy: bool,
    },
    /// Two-step reduction to row-wise density estimation (`H = 2`).
    LowerBoundDemo {
        #[command(flatten)]
        io: DataArgs,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
}

#[derive(Subcommand)]
enum AbsorbingCommand {
    /// Check the singleton-absorbing value identity.
    Verify {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, conflicts_with = "all_states")]
        state: Option<usize>,
        #[arg(long)]
        all_states: bool,
        /// Also check the fitted model and report `max_t |û⋆_t − u⋆_t|` per state.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MultitaskArgs {
    #[command(flatten)]
    io: DataArgs,
    /// A reward file, or `random:K:seed` for K uniform reward tables.
    #[arg(long)]
    rewards: String,
}

#[derive(Subcommand)]
enum AnchorCommand {
    /// Generate an anchor instance with planted near-ties.
    Generate {
        #[arg(long, short = 'S', default_value_t = AnchorInstanceSpec::default().num_states)]
        states: usize,
        #[arg(long, short = 'A', default_value_t = AnchorInstanceSpec::default().num_actions)]
        actions: usize,
        #[arg(long, short = 'H', default_value_t = AnchorInstanceSpec::default().horizon)]
        horizon: usize,
        #[arg(long, default_value_t = AnchorInstanceSpec::default().anchors)]
        anchors: usize,
    },
    /// Suboptimality of anchor plug-in planning at one or more sample sizes.
    Sweep {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
}

/// Command result; `Failed` maps to exit status 2.
enum Outcome {
    Passed,
    Failed,
}

fn emit(out: Option<&Path>, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn out_path<'a>(out: Option<&'a Path>, what: &str) -> Result<&'a Path> {
    out.with_context(|| format!("--out is required for {what}"))
}

fn report_json(r: &UniformErrorReport) -> Value {
    json!({
        "sup_error": r.sup_error,
        "class_size_examined": r.class_size_examined,
        "argmax_policy": PolicyFile::from_policy(&r.argmax_policy),
        "per_policy_errors": r.per_policy_errors,
        "flags": {
            "lower_bound": r.flags.lower_bound,
            "budget_exhausted": r.flags.budget_exhausted,
            "eps_outside_regime": r.flags.eps_outside_regime,
        },
    })
}

fn singleton_json(r: &SingletonReport) -> Value {
    json!({
        "state": r.state,
        "u": r.u,
        "monotone": r.monotone,
        "absorbing_value_deviation": r.absorbing_value_deviation,
        "max_deviation": r.max_deviation,
        "passed": r.passed,
    })
}

fn load_pair(io: &DataArgs) -> Result<(TabularMdp, offrl_core::EpisodeDataset)> {
    Ok((load_mdp(&io.mdp)?, load_dataset(&io.data)?))
}

fn reward_set(spec: &str, truth: &TabularMdp) -> Result<RewardSet> {
    let (s, a) = (truth.num_states(), truth.num_actions());
    if let Some(rest) = spec.strip_prefix("random:") {
        let (k, seed) = rest
            .split_once(':')
            .with_context(|| format!("expected random:K:seed, got {spec}"))?;
        let k: usize = k.parse().with_context(|| format!("bad task count in {spec}"))?;
        let seed: u64 = seed.parse().with_context(|| format!("bad seed in {spec}"))?;
        let tables = RewardFamily::Uniform.draw(RngStream::new(seed, 0), k, s, a);
        return Ok(RewardSet::new(s, a, tables, None)?);
    }
    Ok(load_rewards(Path::new(spec), s, a)?)
}

fn run(cli: Cli) -> Result<Outcome> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Generate(args) => {
            let family = match args.family {
                FamilyArg::DirichletRandom => InstanceFamily::DirichletRandom,
                FamilyArg::Chain => InstanceFamily::Chain,
                FamilyArg::NearUniform => InstanceFamily::NearUniform,
            };
            let (mdp, mu) = generate_instance(&InstanceSpec {
                num_states: args.states,
                num_actions: args.actions,
                horizon: args.horizon,
                seed: cli.seed,
                family,
            })?;
            save_mdp(out_path(out, "generate")?, &mdp)?;
            if let Some(path) = args.behavior_out {
                save_policy(&path, &mu)?;
            }
        }
        Command::Roll(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let mu = match &args.policy {
                Some(path) => load_policy(path)?,
                None => Policy::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions()),
            };
            let data = roll_episodes(&mdp, &mu, args.episodes, RngStream::new(cli.seed, args.stream))?;
            save_dataset(out_path(out, "roll")?, &data)?;
        }
        Command::Fit(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let model = fit_plugin(&load_dataset(&args.data)?, &mdp)?;
            let l1 = l1_row_error(&model, &mdp)?;
            if let Some(path) = &args.dump_model {
                write_json(path, &ModelDump::from_model(&model))?;
            }
            emit(
                out,
                &json!({
                    "episodes": model.episodes(),
                    "unvisited_pairs": model.unvisited_pairs(),
                    "l1_row_error": l1,
                    "l1_row_error_max": l1.iter().copied().fold(0.0, f64::max),
                }),
            )?;
        }
        Command::Plan { mdp, policy_out } => {
            let mdp = load_mdp(&mdp)?;
            let (values, pi) = plan_optimal(&mdp);
            if let Some(path) = policy_out {
                save_policy(&path, &pi)?;
            }
            let v0 = values.v(0);
            let start: f64 = mdp.initial().iter().zip(v0).map(|(d, v)| d * v).sum();
            emit(
                out,
                &json!({ "v0": v0, "q0": values.q(0), "start_value": start, "policy": PolicyFile::from_policy(&pi) }),
            )?;
        }
        Command::Ope(cmd) => match cmd {
            OpeCommand::Global {
                io,
                samples,
                cap,
                per_policy,
            } => {
                let (truth, data) = load_pair(&io)?;
                let model = fit_plugin(&data, &truth)?;
                let mut spec = match samples {
                    Some(m) => PolicyClassSpec::global_sampled(m),
                    None => PolicyClassSpec::global_exhaustive(),
                };
                spec.enumeration_cap = cap;
                spec.record_per_policy = per_policy;
                let report = global_uniform_error(&truth, &model, &spec, RngStream::new(cli.seed, 3))?;
                emit(out, &report_json(&report))?;
            }
            OpeCommand::Local {
                io,
                eps,
                samples,
                per_policy,
            } => {
                let (truth, data) = load_pair(&io)?;
                let model = fit_plugin(&data, &truth)?;
                let sample = sample_local_class(&model, eps, samples, RngStream::new(cli.seed, 1))?;
                let mut report = local_uniform_error(&truth, &model, &sample.policies, eps, per_policy)?;
                report.flags.budget_exhausted = sample.exhausted;
                let mut value = report_json(&report);
                value["drawn"] = json!(sample.drawn);
                value["accepted"] = json!(sample.accepted);
                emit(out, &value)?;
            }
            OpeCommand::LowerBoundDemo { io, cap } => {
                let (truth, data) = load_pair(&io)?;
                let model = fit_plugin(&data, &truth)?;
                let r = lower_bound_demo(&truth, &model, cap)?;
                emit(
                    out,
                    &json!({
                        "sup_error": r.sup_error,
                        "half_l1_sup": r.half_l1_sup,
                        "binary_sup": r.binary_sup,
                        "chain_holds": r.chain_holds,
                        "matches_binary": r.matches_binary,
                        "argmax_policy": PolicyFile::from_policy(&r.argmax_policy),
                    }),
                )?;
                if !(r.chain_holds && r.matches_binary) {
                    return Ok(Outcome::Failed);
                }
            }
        },
        Command::Absorbing(AbsorbingCommand::Verify {
            mdp,
            state,
            all_states,
            data,
        }) => {
            let mdp = load_mdp(&mdp)?;
            let states: Vec<usize> = match (state, all_states) {
                (Some(s), _) => vec![s],
                (None, true) => (0..mdp.num_states()).collect(),
                (None, false) => bail!("pass --state or --all-states"),
            };
            let empirical = match &data {
                Some(path) => Some(fit_plugin(&load_dataset(path)?, &mdp)?.to_mdp()?),
                None => None,
            };
            let mut passed = true;
            let mut rows = Vec::with_capacity(states.len());
            for s in states {
                let report = verify_singleton_identity(&mdp, s)?;
                passed &= report.passed;
                let mut row = singleton_json(&report);
                if let Some(emp) = &empirical {
                    let fitted = verify_singleton_identity(emp, s)?;
                    passed &= fitted.passed;
                    row["empirical"] = singleton_json(&fitted);
                    row["increment_gap"] = json!(increment_gap(&mdp, emp, s)?);
                }
                rows.push(row);
            }
            emit(out, &json!({ "passed": passed, "states": rows }))?;
            if !passed {
                return Ok(Outcome::Failed);
            }
        }
        Command::Multitask(args) => {
            let (truth, data) = load_pair(&args.io)?;
            let rewards = reward_set(&args.rewards, &truth)?;
            let outcomes = task_agnostic_learn(&data, &rewards, &truth)?;
            let tasks: Vec<Value> = outcomes
                .iter()
                .map(|o| {
                    json!({
                        "label": o.label,
                        "worst": o.worst(),
                        "suboptimality": o.suboptimality,
                        "policy": PolicyFile::from_policy(&o.policy),
                    })
                })
                .collect();
            let worst = outcomes.iter().map(|o| o.worst()).fold(0.0, f64::max);
            emit(out, &json!({ "max_suboptimality": worst, "tasks": tasks }))?;
        }
        Command::Anchor(AnchorCommand::Generate {
            states,
            actions,
            horizon,
            anchors,
        }) => {
            let mdp = generate_anchor_instance(&AnchorInstanceSpec {
                num_states: states,
                num_actions: actions,
                horizon,
                anchors,
                seed: cli.seed,
                ..AnchorInstanceSpec::default()
            })?;
            write_json(out_path(out, "anchor generate")?, &AnchorFile::from_mdp(&mdp))?;
        }
        Command::Anchor(AnchorCommand::Sweep {
            anchor,
            n_grid,
            replicates,
        }) => {
            if replicates == 1 && n_grid.len() == 1 {
                let mdp = load_anchor(&anchor)?;
                let mut model = AnchorModel::sample_anchors(&mdp, n_grid[0], RngStream::new(cli.seed, 4))?;
                model.resolve_lambdas(&mdp)?;
                let (pi, report) = anchor_plan(&model, &mdp)?;
                emit(
                    out,
                    &json!({
                        "n": n_grid[0],
                        "suboptimality": report.suboptimality,
                        "policy": PolicyFile::from_policy(&pi),
                    }),
                )?;
            } else {
                let cfg = SweepConfig {
                    mdp: None,
                    n_grid,
                    replicates,
                    metrics: vec![Metric::Anchor],
                    anchor: Some(AnchorSource::File { path: anchor }),
                    base_seed: cli.seed,
                    threads: cli.threads,
                    ..SweepConfig::default_rate_sweep(cli.seed, vec![])
                };
                write_rows(out, &run_sweep(&cfg)?)?;
            }
        }
        Command::Sweep => {
            let path = cli.config.as_deref().context("sweep needs --config")?;
            let mut cfg = SweepConfig::load(path)?;
            if cli.threads.is_some() {
                cfg.threads = cli.threads;
            }
            write_rows(out, &run_sweep(&cfg)?)?;
        }
        Command::Rate { csv, metric, max_slope } => {
            let file = fs::File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            let rows = read_csv(file)?;
            let fit = fit_rate(&rows, &metric)?;
            emit(
                out,
                &json!({ "metric": metric, "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared }),
            )?;
            if max_slope.is_some_and(|m| fit.slope > m) {
                return Ok(Outcome::Failed);
            }
        }
    }
    Ok(Outcome::Passed)
}

fn write_rows(out: Option<&Path>, rows: &[offrl::sweep::Row]) -> Result<()> {
    match out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(std::io::BufWriter::new(file), rows)
        }
        None => write_csv(std::io::stdout().lock(), rows),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
