//! The count-based plug-in estimator: `P̂(s'|s,a) = n_{s',s,a} / n_{s,a}`,
//! uniform rows for pairs never visited, and `d̂1(s) = n_s / n`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{check_len, FiniteHorizon, TabularMdp};
use crate::num::l1_distance;
use crate::trajectory::EpisodeDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    episodes: usize,
    /// `n_{s,a}`, flattened `[s][a]`.
    visits: Vec<u64>,
    /// `n_{s',s,a}`, flattened `[s][a][s']`.
    transitions: Vec<u64>,
    /// Initial-state counts `n_s`.
    initial_counts: Vec<u64>,
    p_hat: Vec<f64>,
    d1_hat: Vec<f64>,
    reward: Vec<f64>,
}

impl EmpiricalModel {
    /// Builds the estimator from raw counts; `P̂` and `d̂1` are derived.
    pub fn from_counts(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transitions: Vec<u64>,
        initial_counts: Vec<u64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let (s, a) = (num_states, num_actions);
        check_len("transition counts", s * a * s, transitions.len())?;
        check_len("initial counts", s, initial_counts.len())?;
        check_len("reward entries", s * a, reward.len())?;
        crate::mdp::check_reward(&reward, a, 0.0, 1.0)?;
        let visits: Vec<u64> = transitions.chunks(s).map(|row| row.iter().sum()).collect();
        let mut p_hat = vec![0.0; s * a * s];
        for (pair, &n_sa) in visits.iter().enumerate() {
            let row = &mut p_hat[pair * s..(pair + 1) * s];
            if n_sa == 0 {
                row.iter_mut().for_each(|p| *p = 1.0 / s as f64);
            } else {
                for (p, &c) in row.iter_mut().zip(&transitions[pair * s..(pair + 1) * s]) {
                    *p = c as f64 / n_sa as f64;
                }
            }
        }
        let episodes: u64 = initial_counts.iter().sum();
        let d1_hat = if episodes == 0 {
            vec![0.0; s]
        } else {
            initial_counts
                .iter()
                .map(|&c| c as f64 / episodes as f64)
                .collect()
        };
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            episodes: episodes as usize,
            visits,
            transitions,
            initial_counts,
            p_hat,
            d1_hat,
            reward,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn episodes(&self) -> usize {
        self.episodes
    }
    pub fn visits(&self) -> &[u64] {
        &self.visits
    }
    pub fn transition_counts(&self) -> &[u64] {
        &self.transitions
    }
    pub fn initial_counts(&self) -> &[u64] {
        &self.initial_counts
    }
    pub fn p_hat(&self) -> &[f64] {
        &self.p_hat
    }
    pub fn p_hat_row(&self, state: usize, action: usize) -> &[f64] {
        let s = self.num_states;
        let start = (state * self.num_actions + action) * s;
        &self.p_hat[start..start + s]
    }
    pub fn d1_hat(&self) -> &[f64] {
        &self.d1_hat
    }
    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    /// Pairs with `n_{s,a} = 0`, which fall back to the uniform row.
    pub fn unvisited_pairs(&self) -> usize {
        self.visits.iter().filter(|&&n| n == 0).count()
    }

    /// Same counts with a different known reward.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        check_len("reward entries", self.num_states * self.num_actions, reward.len())?;
        crate::mdp::check_reward(&reward, self.num_actions, 0.0, 1.0)?;
        Ok(Self {
            reward,
            ..self.clone()
        })
    }

    /// Associative merge of two count tables over the same shape.
    pub fn merge(&self, other: &EmpiricalModel) -> Result<Self> {
        check_len("number of states", self.num_states, other.num_states)?;
        check_len("number of actions", self.num_actions, other.num_actions)?;
        let add = |x: &[u64], y: &[u64]| x.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<_>>();
        Self::from_counts(
            self.num_states,
            self.num_actions,
            self.horizon,
            add(&self.transitions, &other.transitions),
            add(&self.initial_counts, &other.initial_counts),
            self.reward.clone(),
        )
    }

    /// The empirical MDP `(S, A, P̂, r, H, d̂1)`.
    pub fn to_mdp(&self) -> Result<TabularMdp> {
        if self.episodes == 0 {
            return Err(Error::NoEpisodes);
        }
        TabularMdp::new(
            self.num_states,
            self.num_actions,
            self.horizon,
            self.p_hat.clone(),
            self.reward.clone(),
            self.d1_hat.clone(),
        )
    }
}

/// Counts every `(s, a, s')` over all steps and episodes. The reward (and the
/// shape check) comes from `mdp_shape`; its transitions are not read.
pub fn fit_plugin(data: &EpisodeDataset, mdp_shape: &TabularMdp) -> Result<EmpiricalModel> {
    let meta = data.meta();
    let (s, a) = (mdp_shape.num_states(), mdp_shape.num_actions());
    check_len("dataset states", s, meta.num_states)?;
    check_len("dataset actions", a, meta.num_actions)?;
    check_len("dataset horizon", mdp_shape.horizon(), meta.horizon)?;
    let mut transitions = vec![0u64; s * a * s];
    let mut initial_counts = vec![0u64; s];
    for ep in data.episodes() {
        if let Some(first) = ep.first() {
            initial_counts[first.state] += 1;
        }
        for tr in ep {
            transitions[(tr.state * a + tr.action) * s + tr.next_state] += 1;
        }
    }
    EmpiricalModel::from_counts(
        s,
        a,
        mdp_shape.horizon(),
        transitions,
        initial_counts,
        mdp_shape.rewards().to_vec(),
    )
}

/// Per-pair `‖P̂(·|s,a) − P(·|s,a)‖_1`, flattened `[s][a]`.
pub fn l1_row_error(model: &EmpiricalModel, truth: &TabularMdp) -> Result<Vec<f64>> {
    check_len("number of states", truth.num_states(), model.num_states)?;
    check_len("number of actions", truth.num_actions(), model.num_actions)?;
    let mut out = Vec::with_capacity(model.num_states * model.num_actions);
    for s in 0..model.num_states {
        for a in 0..model.num_actions {
            out.push(l1_distance(model.p_hat_row(s, a), truth.transition(s, a)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::tests::random_mdp;
    use crate::mdp::Policy;
    use crate::rng::RngStream;
    use crate::trajectory::{roll_episodes, DatasetMeta, Transition};
    use approx::assert_abs_diff_eq;

    fn tr(state: usize, action: usize, next_state: usize) -> Transition {
        Transition {
            state,
            action,
            next_state,
        }
    }

    fn shape(s: usize, a: usize, h: usize) -> TabularMdp {
        TabularMdp::new(
            s,
            a,
            h,
            vec![1.0 / s as f64; s * a * s],
            vec![0.25; s * a],
            vec![1.0 / s as f64; s],
        )
        .unwrap()
    }

    #[test]
    fn hand_tally_on_two_states() {
        // two episodes of length 3 on S=2, A=1: 0->0->1->1 and 1->0->0->1
        let meta = DatasetMeta {
            num_states: 2,
            num_actions: 1,
            horizon: 3,
            base_seed: 0,
            stream_index: 0,
        };
        let data = EpisodeDataset::new(
            meta,
            vec![
                vec![tr(0, 0, 0), tr(0, 0, 1), tr(1, 0, 1)],
                vec![tr(1, 0, 0), tr(0, 0, 0), tr(0, 0, 1)],
            ],
        )
        .unwrap();
        let model = fit_plugin(&data, &shape(2, 1, 3)).unwrap();
        // from 0: ->0 twice, ->1 twice; from 1: ->1 once, ->0 once
        assert_eq!(model.visits(), &[4, 2]);
        assert_eq!(model.transition_counts(), &[2, 2, 1, 1]);
        assert_eq!(model.p_hat(), &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(model.initial_counts(), &[1, 1]);
        assert_eq!(model.d1_hat(), &[0.5, 0.5]);
        assert_eq!(model.visits().iter().sum::<u64>(), 2 * 3);
    }

    #[test]
    fn unvisited_rows_are_uniform() {
        let meta = DatasetMeta {
            num_states: 3,
            num_actions: 2,
            horizon: 1,
            base_seed: 0,
            stream_index: 0,
        };
        let data = EpisodeDataset::new(meta, vec![vec![tr(0, 0, 2)]]).unwrap();
        let model = fit_plugin(&data, &shape(3, 2, 1)).unwrap();
        assert_eq!(model.p_hat_row(0, 0), &[0.0, 0.0, 1.0]);
        for (s, a) in [(0, 1), (1, 0), (1, 1), (2, 0), (2, 1)] {
            assert!(model.p_hat_row(s, a).iter().all(|&p| p == 1.0 / 3.0));
        }
        assert_eq!(model.unvisited_pairs(), 5);
        model.to_mdp().unwrap();
    }

    #[test]
    fn no_episodes_means_no_mdp() {
        let model = EmpiricalModel::from_counts(2, 1, 1, vec![0; 4], vec![0; 2], vec![0.0; 2]).unwrap();
        assert_eq!(model.to_mdp().unwrap_err(), Error::NoEpisodes);
    }

    #[test]
    fn l1_extremes() {
        let truth = TabularMdp::new(2, 1, 1, vec![0.0, 1.0, 0.5, 0.5], vec![0.0; 2], vec![1.0, 0.0]).unwrap();
        let model = EmpiricalModel::from_counts(2, 1, 1, vec![3, 0, 1, 1], vec![1, 0], vec![0.0; 2]).unwrap();
        let err = l1_row_error(&model, &truth).unwrap();
        assert_eq!(err, vec![2.0, 0.0]);
    }

    #[test]
    fn large_sample_is_consistent() {
        let truth = random_mdp(21, 3, 2, 4);
        let data = roll_episodes(&truth, &Policy::uniform(4, 3, 2), 100_000, RngStream::new(8, 0)).unwrap();
        let model = fit_plugin(&data, &truth).unwrap();
        let worst = l1_row_error(&model, &truth).unwrap().into_iter().fold(0.0, f64::max);
        assert!(worst < 0.05, "max l1 row error {worst}");
        let sum: u64 = model.visits().iter().sum();
        assert_eq!(sum, 100_000 * 4);
        let emp = model.to_mdp().unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert_abs_diff_eq!(emp.transition(s, a).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn merge_is_count_addition() {
        let truth = random_mdp(3, 3, 2, 3);
        let mu = Policy::uniform(3, 3, 2);
        let full = roll_episodes(&truth, &mu, 40, RngStream::new(5, 0)).unwrap();
        let first = EpisodeDataset::new(*full.meta(), full.episodes()[..15].to_vec()).unwrap();
        let second = EpisodeDataset::new(*full.meta(), full.episodes()[15..].to_vec()).unwrap();
        let merged = fit_plugin(&first, &truth).unwrap().merge(&fit_plugin(&second, &truth).unwrap()).unwrap();
        assert_eq!(merged, fit_plugin(&full, &truth).unwrap());
    }
}
