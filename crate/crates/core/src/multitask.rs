//! Several tasks, one exploration dataset.
//!
//! The transition estimate is fitted once; each reward is planned against it
//! independently. Rewards are known and never read from the data.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{check_len, check_reward, plan_optimal, FiniteHorizon, Policy, TabularMdp};
use crate::ope::learning_suboptimality;
use crate::plugin::{fit_plugin, EmpiricalModel};
use crate::trajectory::EpisodeDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSet {
    num_states: usize,
    num_actions: usize,
    rewards: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl RewardSet {
    /// Each reward is a flat `[s][a]` table in `[0, 1]`. Labels default to
    /// `task{k}`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        rewards: Vec<Vec<f64>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Empty("reward set"));
        }
        for (k, r) in rewards.iter().enumerate() {
            check_len("reward entries", num_states * num_actions, r.len())?;
            check_reward(r, num_actions, 0.0, 1.0).map_err(|e| match e {
                Error::RewardOutOfRange { path, value, lo, hi } => Error::RewardOutOfRange {
                    path: alloc::format!("rewards[{k}].{path}"),
                    value,
                    lo,
                    hi,
                },
                other => other,
            })?;
        }
        let labels = match labels {
            Some(labels) => {
                check_len("reward labels", rewards.len(), labels.len())?;
                labels
            }
            None => (0..rewards.len()).map(|k| alloc::format!("task{k}")).collect(),
        };
        Ok(Self {
            num_states,
            num_actions,
            rewards,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub label: String,
    pub policy: Policy,
    /// `V⋆_0 − V^{π̂}_0` per state on the true MDP with this task's reward.
    pub suboptimality: Vec<f64>,
}

impl TaskOutcome {
    pub fn worst(&self) -> f64 {
        self.suboptimality.iter().copied().fold(0.0, f64::max)
    }
}

/// Greedy policy on `(P̂, r)`. The model is only read.
pub fn reward_free_plan(model: &EmpiricalModel, reward: &[f64]) -> Result<Policy> {
    let empirical = model.with_reward(reward.to_vec())?.to_mdp()?;
    Ok(plan_optimal(&empirical).1)
}

/// One task on an already-fitted model, scored on `truth` with the same reward.
pub fn plan_and_score(
    model: &EmpiricalModel,
    truth: &TabularMdp,
    reward: &[f64],
) -> Result<(Policy, Vec<f64>)> {
    let policy = reward_free_plan(model, reward)?;
    let suboptimality = learning_suboptimality(&truth.with_reward(reward.to_vec())?, &policy)?;
    Ok((policy, suboptimality))
}

/// Plans every task of `rewards` on a shared model and scores it on `truth`.
pub fn task_agnostic_with_model(
    model: &EmpiricalModel,
    rewards: &RewardSet,
    truth: &TabularMdp,
) -> Result<Vec<TaskOutcome>> {
    check_len("reward states", truth.num_states(), rewards.num_states)?;
    check_len("reward actions", truth.num_actions(), rewards.num_actions)?;
    rewards
        .rewards
        .iter()
        .zip(&rewards.labels)
        .map(|(r, label)| {
            let (policy, suboptimality) = plan_and_score(model, truth, r)?;
            Ok(TaskOutcome {
                label: label.clone(),
                policy,
                suboptimality,
            })
        })
        .collect()
}

/// Fits the plug-in model once from `data` and runs every task against it.
/// `truth` supplies the shape and is used only for scoring.
pub fn task_agnostic_learn(
    data: &EpisodeDataset,
    rewards: &RewardSet,
    truth: &TabularMdp,
) -> Result<Vec<TaskOutcome>> {
    let model = fit_plugin(data, truth)?;
    task_agnostic_with_model(&model, rewards, truth)
}
