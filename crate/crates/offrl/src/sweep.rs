//! Monte Carlo sweeps over sample sizes and replicates.
//!
//! Every `(n, replicate)` cell owns the stream
//! `RngStream::new(base_seed, 0).child(n_index).child(replicate)` for its
//! dataset and policy samples. Reward draws come from
//! `RngStream::new(base_seed, 1).child(replicate)`, so one replicate keeps the
//! same rewards across the whole `n` grid. Cells can run in any order on any
//! number of threads and the CSV comes out byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use offrl_core::anchor::{anchor_plan, resolve_all, AnchorLinearMdp, AnchorModel};
use offrl_core::instance::{
    generate_anchor_instance, generate_instance, log_gap_rewards, uniform_rewards, AnchorInstanceSpec,
    InstanceFamily, InstanceSpec, LOG_GAP_HI, LOG_GAP_LO,
};
use offrl_core::mdp::FiniteHorizon;
use offrl_core::multitask::{plan_and_score, task_agnostic_with_model, RewardSet};
use offrl_core::ope::{
    empirical_optimal, global_uniform_error, learning_suboptimality, local_uniform_error,
    lower_bound_demo, sample_local_class, PolicyClassSpec, DEFAULT_ENUMERATION_CAP,
};
use offrl_core::rate::{fit_groups, RateFit};
use offrl_core::{fit_plugin, l1_row_error, roll_episodes, EmpiricalModel, Policy, RngStream, TabularMdp};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats::{load_anchor, load_mdp, load_policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DirichletRandom,
    Chain,
    NearUniform,
}

impl From<Family> for InstanceFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::DirichletRandom => InstanceFamily::DirichletRandom,
            Family::Chain => InstanceFamily::Chain,
            Family::NearUniform => InstanceFamily::NearUniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MdpSource {
    File {
        path: PathBuf,
    },
    Generate {
        #[serde(rename = "S")]
        num_states: usize,
        #[serde(rename = "A")]
        num_actions: usize,
        #[serde(rename = "H")]
        horizon: usize,
        seed: u64,
        family: Family,
    },
}

/// Behavior policy. `instance` takes the generator's own policy, or the
/// uniform policy for an MDP read from a file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorSource {
    #[default]
    Instance,
    Uniform,
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnchorSource {
    File {
        path: PathBuf,
    },
    Generate {
        #[serde(rename = "S", default = "anchor_default_states")]
        num_states: usize,
        #[serde(rename = "A", default = "anchor_default_actions")]
        num_actions: usize,
        #[serde(rename = "H", default = "anchor_default_horizon")]
        horizon: usize,
        #[serde(default = "anchor_default_count")]
        anchors: usize,
        #[serde(default)]
        top_gap: Option<f64>,
        #[serde(default)]
        gap_ratio: Option<f64>,
        #[serde(default)]
        spread: Option<f64>,
        seed: u64,
    },
}

fn anchor_default_states() -> usize {
    AnchorInstanceSpec::default().num_states
}
fn anchor_default_actions() -> usize {
    AnchorInstanceSpec::default().num_actions
}
fn anchor_default_horizon() -> usize {
    AnchorInstanceSpec::default().horizon
}
fn anchor_default_count() -> usize {
    AnchorInstanceSpec::default().anchors
}

impl AnchorSource {
    pub fn load(&self) -> Result<AnchorLinearMdp> {
        self.load_with_seed(None)
    }

    /// Like [`load`](Self::load), with the generator seed replaced when given.
    pub fn load_with_seed(&self, seed_override: Option<u64>) -> Result<AnchorLinearMdp> {
        match self {
            AnchorSource::File { path } => {
                if seed_override.is_some() {
                    bail!("an anchor instance read from a file cannot be redrawn");
                }
                Ok(load_anchor(path)?)
            }
            AnchorSource::Generate {
                num_states,
                num_actions,
                horizon,
                anchors,
                top_gap,
                gap_ratio,
                spread,
                seed,
            } => {
                let d = AnchorInstanceSpec::default();
                Ok(generate_anchor_instance(&AnchorInstanceSpec {
                    num_states: *num_states,
                    num_actions: *num_actions,
                    horizon: *horizon,
                    anchors: *anchors,
                    top_gap: top_gap.unwrap_or(d.top_gap),
                    gap_ratio: gap_ratio.unwrap_or(d.gap_ratio),
                    spread: spread.unwrap_or(d.spread),
                    seed: seed_override.unwrap_or(*seed),
                })?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    GlobalOpe,
    LocalOpe,
    Suboptimality,
    L1Row,
    TaskAgnostic,
    RewardFree,
    LowerBoundDemo,
    Anchor,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::GlobalOpe => "global_ope",
            Metric::LocalOpe => "local_ope",
            Metric::Suboptimality => "suboptimality",
            Metric::L1Row => "l1_row",
            Metric::TaskAgnostic => "task_agnostic",
            Metric::RewardFree => "reward_free",
            Metric::LowerBoundDemo => "lower_bound_demo",
            Metric::Anchor => "anchor",
        }
    }

    fn needs_data(self) -> bool {
        self != Metric::Anchor
    }
}

/// Random reward family for the multi-task metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFamily {
    /// I.i.d. uniform entries.
    #[default]
    Uniform,
    /// Log-uniform action gaps, see [`log_gap_rewards`].
    LogGap,
}

impl RewardFamily {
    pub fn draw(self, stream: RngStream, count: usize, s_n: usize, a_n: usize) -> Vec<Vec<f64>> {
        let mut rng = stream.rng();
        (0..count)
            .map(|_| match self {
                RewardFamily::Uniform => uniform_rewards(&mut rng, s_n, a_n),
                RewardFamily::LogGap => log_gap_rewards(&mut rng, s_n, a_n, LOG_GAP_LO, LOG_GAP_HI),
            })
            .collect()
    }
}

fn default_eps_opt() -> f64 {
    0.1
}
fn default_local_samples() -> usize {
    200
}
fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}
fn default_tasks() -> usize {
    50
}
fn default_reward_draws() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Required unless `anchor` is the only metric.
    #[serde(default)]
    pub mdp: Option<MdpSource>,
    #[serde(default)]
    pub behavior: BehaviorSource,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub metrics: Vec<Metric>,
    #[serde(default = "default_eps_opt")]
    pub eps_opt: f64,
    #[serde(default = "default_local_samples")]
    pub local_samples: usize,
    /// Sampled global class of this size; exhaustive when absent.
    #[serde(default)]
    pub global_samples: Option<usize>,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
    #[serde(default = "default_tasks")]
    pub tasks: usize,
    #[serde(default = "default_reward_draws")]
    pub reward_free_draws: usize,
    #[serde(default)]
    pub task_rewards: RewardFamily,
    /// Give every replicate its own draw of the true reward from this family.
    #[serde(default)]
    pub reward_redraw: Option<RewardFamily>,
    #[serde(default)]
    pub anchor: Option<AnchorSource>,
    /// Give every replicate its own generated anchor instance.
    #[serde(default)]
    pub anchor_redraw: bool,
    /// Repeat the sweep at each horizon; metric names get an `@H<h>` suffix.
    #[serde(default)]
    pub h_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SweepConfig {
    /// The desk-scale rate sweep: `S=4, A=2, H=5`, `n ∈ {256, …, 16384}`, 100
    /// replicates on the near-uniform family, with log-gap rewards redrawn per
    /// replicate.
    pub fn default_rate_sweep(seed: u64, metrics: Vec<Metric>) -> Self {
        Self {
            mdp: Some(MdpSource::Generate {
                num_states: 4,
                num_actions: 2,
                horizon: 5,
                seed,
                family: Family::NearUniform,
            }),
            behavior: BehaviorSource::Instance,
            n_grid: vec![256, 1024, 4096, 16384],
            replicates: 100,
            metrics,
            eps_opt: default_eps_opt(),
            local_samples: default_local_samples(),
            global_samples: None,
            enumeration_cap: default_cap(),
            tasks: default_tasks(),
            reward_free_draws: default_reward_draws(),
            task_rewards: RewardFamily::LogGap,
            reward_redraw: Some(RewardFamily::LogGap),
            anchor: None,
            anchor_redraw: false,
            h_grid: None,
            base_seed: seed,
            threads: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            bail!("n_grid must not be empty");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            bail!("n_grid must be strictly increasing");
        }
        if self.n_grid[0] == 0 {
            bail!("n_grid entries must be positive");
        }
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.metrics.is_empty() {
            bail!("metrics must not be empty");
        }
        if self.mdp.is_none() && self.metrics.iter().any(|m| m.needs_data()) {
            bail!("tabular metrics need an mdp source");
        }
        if self.metrics.contains(&Metric::Anchor) && self.anchor.is_none() {
            bail!("metric anchor needs an anchor instance source");
        }
        if !(self.eps_opt.is_finite() && self.eps_opt >= 0.0) {
            bail!("eps_opt must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub metric: String,
    pub n: usize,
    pub replicate: usize,
    pub value: f64,
    pub flag: String,
}

impl Row {
    fn ok(metric: &str, n: usize, replicate: usize, value: f64) -> Self {
        Self {
            metric: metric.to_string(),
            n,
            replicate,
            value,
            flag: String::new(),
        }
    }

    fn flagged(metric: &str, n: usize, replicate: usize, value: f64, flags: &[(&str, bool)]) -> Self {
        let flag = flags
            .iter()
            .filter(|(_, on)| *on)
            .map(|(name, _)| *name)
            .collect::<Vec<_>>()
            .join(";");
        Self {
            flag,
            ..Self::ok(metric, n, replicate, value)
        }
    }

    fn error(metric: &str, n: usize, replicate: usize, err: impl std::fmt::Display) -> Self {
        Self {
            metric: metric.to_string(),
            n,
            replicate,
            value: f64::NAN,
            flag: format!("error: {err}"),
        }
    }
}

/// Everything shared by all cells of one horizon.
pub struct Prepared {
    pub tabular: Option<(TabularMdp, Policy)>,
    /// One instance, or one per replicate when redrawn, with resolved weights.
    pub anchor: Vec<(AnchorLinearMdp, Vec<Vec<f64>>)>,
}

pub fn load_truth(cfg: &SweepConfig, source: &MdpSource, horizon: Option<usize>) -> Result<(TabularMdp, Policy)> {
    let (mut truth, generated) = match source {
        MdpSource::File { path } => {
            let mdp = load_mdp(path)?;
            let mu = Policy::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions());
            (mdp, mu)
        }
        MdpSource::Generate {
            num_states,
            num_actions,
            horizon: h,
            seed,
            family,
        } => generate_instance(&InstanceSpec {
            num_states: *num_states,
            num_actions: *num_actions,
            horizon: horizon.unwrap_or(*h),
            seed: *seed,
            family: (*family).into(),
        })?,
    };
    if let Some(h) = horizon {
        truth = truth.with_horizon(h)?;
    }
    let (h, s, a) = (truth.horizon(), truth.num_states(), truth.num_actions());
    let behavior = match &cfg.behavior {
        BehaviorSource::Instance if generated.horizon() == h => generated,
        BehaviorSource::Instance | BehaviorSource::Uniform => Policy::uniform(h, s, a),
        BehaviorSource::File { path } => load_policy(path)?,
    };
    Ok((truth, behavior))
}

pub fn prepare(cfg: &SweepConfig, horizon: Option<usize>) -> Result<Prepared> {
    let tabular = match &cfg.mdp {
        Some(source) => Some(load_truth(cfg, source, horizon)?),
        None => None,
    };
    let anchor = match (&cfg.anchor, cfg.metrics.contains(&Metric::Anchor)) {
        (Some(source), true) => {
            let seeds: Vec<Option<u64>> = if cfg.anchor_redraw {
                (0..cfg.replicates)
                    .map(|r| Some(replicate_stream(cfg.base_seed, r).child(reward_purpose::ANCHOR_INSTANCE).rng().random()))
                    .collect()
            } else {
                vec![None]
            };
            seeds
                .into_par_iter()
                .map(|seed| {
                    let mdp = source.load_with_seed(seed)?;
                    let lambdas = resolve_all(&mdp)?;
                    Ok((mdp, lambdas))
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => Vec::new(),
    };
    Ok(Prepared { tabular, anchor })
}

/// Children of a cell stream, by purpose.
pub mod purpose {
    pub const DATASET: u64 = 0;
    pub const LOCAL_CLASS: u64 = 1;
    pub const GLOBAL_SAMPLES: u64 = 3;
    pub const ANCHOR_SAMPLES: u64 = 4;
}

/// Children of a replicate stream, by purpose. These draws are shared by
/// every `n` of one replicate.
pub mod reward_purpose {
    pub const TRUE_REWARD: u64 = 0;
    pub const TASK_REWARDS: u64 = 1;
    pub const FREE_REWARDS: u64 = 2;
    pub const ANCHOR_INSTANCE: u64 = 3;
}

pub fn cell_stream(base_seed: u64, n_index: usize, replicate: usize) -> RngStream {
    RngStream::new(base_seed, 0).child(n_index as u64).child(replicate as u64)
}

pub fn replicate_stream(base_seed: u64, replicate: usize) -> RngStream {
    RngStream::new(base_seed, 1).child(replicate as u64)
}

fn worst(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// All metric rows of one `(n, replicate)` cell, in configuration order.
pub fn run_cell(cfg: &SweepConfig, prep: &Prepared, n_index: usize, replicate: usize, suffix: &str) -> Vec<Row> {
    let n = cfg.n_grid[n_index];
    let cell = cell_stream(cfg.base_seed, n_index, replicate);
    let rewards_stream = replicate_stream(cfg.base_seed, replicate);
    let mut rows = Vec::new();
    let named = |m: Metric| format!("{}{suffix}", m.name());

    let redrawn = match (&prep.tabular, cfg.reward_redraw) {
        (Some((truth, _)), Some(family)) => {
            let (s_n, a_n) = (truth.num_states(), truth.num_actions());
            let reward = family.draw(rewards_stream.child(reward_purpose::TRUE_REWARD), 1, s_n, a_n).remove(0);
            Some(truth.with_reward(reward))
        }
        _ => None,
    };
    let truth = match redrawn {
        Some(Ok(m)) => Some(std::borrow::Cow::Owned(m)),
        Some(Err(e)) => {
            return cfg.metrics.iter().map(|&m| Row::error(&named(m), n, replicate, &e)).collect();
        }
        None => prep.tabular.as_ref().map(|t| std::borrow::Cow::Borrowed(&t.0)),
    };
    let truth = truth.as_deref();
    let model: Option<std::result::Result<EmpiricalModel, offrl_core::Error>> = truth
        .filter(|_| cfg.metrics.iter().any(|m| m.needs_data()))
        .map(|truth| {
            let behavior = &prep.tabular.as_ref().expect("tabular").1;
            let data = roll_episodes(truth, behavior, n, cell.child(purpose::DATASET))?;
            fit_plugin(&data, truth)
        });

    for &metric in &cfg.metrics {
        let name = named(metric);
        let model = match (&model, metric.needs_data()) {
            (Some(Ok(m)), true) => Some(m),
            (Some(Err(e)), true) => {
                rows.push(Row::error(&name, n, replicate, e));
                continue;
            }
            _ => None,
        };
        match metric {
            Metric::GlobalOpe => {
                let (model, truth) = (model.expect("fitted"), truth.expect("tabular"));
                let spec = match cfg.global_samples {
                    Some(m) => PolicyClassSpec::global_sampled(m),
                    None => PolicyClassSpec {
                        enumeration_cap: cfg.enumeration_cap,
                        ..PolicyClassSpec::global_exhaustive()
                    },
                };
                rows.push(match global_uniform_error(truth, model, &spec, cell.child(purpose::GLOBAL_SAMPLES)) {
                    Ok(r) => Row::flagged(&name, n, replicate, r.sup_error, &[("lower_bound", r.flags.lower_bound)]),
                    Err(e) => Row::error(&name, n, replicate, e),
                });
            }
            Metric::LocalOpe => {
                let (model, truth) = (model.expect("fitted"), truth.expect("tabular"));
                let result = sample_local_class(model, cfg.eps_opt, cfg.local_samples, cell.child(purpose::LOCAL_CLASS))
                    .and_then(|sample| {
                        local_uniform_error(truth, model, &sample.policies, cfg.eps_opt, false)
                            .map(|r| (r, sample.exhausted))
                    });
                rows.push(match result {
                    Ok((r, exhausted)) => Row::flagged(
                        &name,
                        n,
                        replicate,
                        r.sup_error,
                        &[
                            ("lower_bound", r.flags.lower_bound),
                            ("budget_exhausted", exhausted),
                            ("eps_outside_regime", r.flags.eps_outside_regime),
                        ],
                    ),
                    Err(e) => Row::error(&name, n, replicate, e),
                });
            }
            Metric::Suboptimality => {
                let (model, truth) = (model.expect("fitted"), truth.expect("tabular"));
                let result = empirical_optimal(model).and_then(|(pi, _)| learning_suboptimality(truth, &pi));
                rows.push(match result {
                    Ok(gaps) => Row::ok(&name, n, replicate, worst(&gaps)),
                    Err(e) => Row::error(&name, n, replicate, e),
                });
            }
            Metric::L1Row => {
                let (model, truth) = (model.expect("fitted"), truth.expect("tabular"));
                rows.push(match l1_row_error(model, truth) {
                    Ok(errs) => Row::ok(&name, n, replicate, worst(&errs)),
                    Err(e) => Row::error(&name, n, replicate, e),
                });
            }
            Metric::TaskAgnostic => {
                let (model, truth) = (model.expect("fitted"), truth.expect("tabular"));
                let (s_n, a_n) = (truth.num_states(), truth.num_actions());
                let rewards = cfg.task_rewards.draw(rewards_stream.child(reward_purpose::TASK_REWARDS), cfg.tasks, s_n, a_n);
                let result = RewardSet::new(s_n, a_n, rewards, None)
                    .and_then(|set| task_agnostic_with_model(model, &set, truth));
                rows.push(match result {
                    Ok(out) => Row::ok(&name, n, replicate, out.iter().map(|o| o.worst()).fold(0.0, f64::max)),
                    Err(e) => Row::error(&name, n, replicate, e),
                });
            }
            Metric::RewardFree => {
                let (model, truth) = (model.expect("fitted"), truth.expect("tabular"));
                let (s_n, a_n) = (truth.num_states(), truth.num_actions());
                let rewards = cfg
                    .task_rewards
                    .draw(rewards_stream.child(reward_purpose::FREE_REWARDS), cfg.reward_free_draws, s_n, a_n);
                let result: std::result::Result<Vec<Vec<f64>>, _> = rewards
                    .iter()
                    .map(|r| plan_and_score(model, truth, r).map(|(_, sub)| sub))
                    .collect();
                match result {
                    Ok(subs) => {
                        let per_reward: Vec<f64> = subs.iter().map(|s| worst(s)).collect();
                        let lowest = subs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
                        let mean = per_reward.iter().sum::<f64>() / per_reward.len() as f64;
                        rows.push(Row::ok(&name, n, replicate, worst(&per_reward)));
                        rows.push(Row::ok(&format!("reward_free_mean{suffix}"), n, replicate, mean));
                        rows.push(Row::ok(&format!("reward_free_min{suffix}"), n, replicate, lowest));
                    }
                    Err(e) => rows.push(Row::error(&name, n, replicate, e)),
                }
            }
            Metric::LowerBoundDemo => {
                let (model, truth) = (model.expect("fitted"), truth.expect("tabular"));
                rows.push(match lower_bound_demo(truth, model, cfg.enumeration_cap) {
                    Ok(r) => Row::flagged(
                        &name,
                        n,
                        replicate,
                        r.sup_error,
                        &[("chain_violated", !r.chain_holds), ("binary_mismatch", !r.matches_binary)],
                    ),
                    Err(e) => Row::error(&name, n, replicate, e),
                });
            }
            Metric::Anchor => {
                let (mdp, lambdas) = &prep.anchor[if cfg.anchor_redraw { replicate } else { 0 }];
                let result = AnchorModel::sample_anchors(mdp, n, cell.child(purpose::ANCHOR_SAMPLES))
                    .and_then(|mut model| {
                        model.set_lambdas(lambdas.clone())?;
                        anchor_plan(&model, mdp)
                    });
                rows.push(match result {
                    Ok((_, report)) => Row::ok(&name, n, replicate, report.suboptimality),
                    Err(e) => Row::error(&name, n, replicate, e),
                });
            }
        }
    }
    rows
}

fn sweep_rows(cfg: &SweepConfig) -> Result<Vec<Row>> {
    let horizons: Vec<Option<usize>> = match &cfg.h_grid {
        Some(hs) => hs.iter().map(|&h| Some(h)).collect(),
        None => vec![None],
    };
    let mut rows = Vec::new();
    for h in horizons {
        let prep = prepare(cfg, h)?;
        let suffix = h.map(|h| format!("@H{h}")).unwrap_or_default();
        let cells: Vec<(usize, usize)> = (0..cfg.n_grid.len())
            .flat_map(|i| (0..cfg.replicates).map(move |r| (i, r)))
            .collect();
        let per_cell: Vec<Vec<Row>> = cells
            .par_iter()
            .map(|&(i, r)| run_cell(cfg, &prep, i, r, &suffix))
            .collect();
        rows.extend(per_cell.into_iter().flatten());
    }
    Ok(rows)
}

/// Runs the whole sweep, on a dedicated pool when `threads` is set.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<Row>> {
    cfg.validate()?;
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .context("building thread pool")?
            .install(|| sweep_rows(cfg)),
        None => sweep_rows(cfg),
    }
}

/// 17 significant digits.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "n", "replicate", "value", "flag"])?;
    for r in rows {
        w.write_record([
            r.metric.as_str(),
            &r.n.to_string(),
            &r.replicate.to_string(),
            &format_value(r.value),
            r.flag.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_bytes(rows: &[Row]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(buf)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Per-`n` values of `metric`, in increasing `n`.
pub fn group_by_n(rows: &[Row], metric: &str) -> Vec<(u64, Vec<f64>)> {
    let mut groups: Vec<(u64, Vec<f64>)> = Vec::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        match groups.iter_mut().find(|(n, _)| *n == r.n as u64) {
            Some((_, v)) => v.push(r.value),
            None => groups.push((r.n as u64, vec![r.value])),
        }
    }
    groups.sort_by_key(|(n, _)| *n);
    groups
}

/// Log-log least squares of per-`n` means; needs three sample sizes with at
/// least ten replicates each.
pub fn fit_rate(rows: &[Row], metric: &str) -> Result<RateFit> {
    let groups = group_by_n(rows, metric);
    if groups.is_empty() {
        bail!("no rows for metric {metric}");
    }
    Ok(fit_groups(&groups, 10)?)
}
