//! Offline episode datasets rolled out under a behavior policy.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{FiniteHorizon, Policy, TabularMdp};
use crate::rng::{sample_categorical, RngStream};

/// One logged step `(s_t, a_t, s_{t+1})`. Rewards are not logged; the mean
/// reward is known to the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetMeta {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub base_seed: u64,
    pub stream_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeDataset {
    meta: DatasetMeta,
    episodes: Vec<Vec<Transition>>,
}

impl EpisodeDataset {
    /// Checks that every episode has `horizon` chained transitions with
    /// in-range indices.
    pub fn new(meta: DatasetMeta, episodes: Vec<Vec<Transition>>) -> Result<Self> {
        for (i, ep) in episodes.iter().enumerate() {
            if ep.len() != meta.horizon {
                return Err(Error::Dimension {
                    what: "episode length",
                    expected: meta.horizon,
                    found: ep.len(),
                });
            }
            for (t, tr) in ep.iter().enumerate() {
                for (name, idx, limit) in [
                    ("state", tr.state, meta.num_states),
                    ("action", tr.action, meta.num_actions),
                    ("next_state", tr.next_state, meta.num_states),
                ] {
                    if idx >= limit {
                        return Err(Error::IndexOutOfRange {
                            path: alloc::format!("episodes[{i}][{t}].{name}"),
                            index: idx,
                            limit,
                        });
                    }
                }
                if let Some(next) = ep.get(t + 1) {
                    if next.state != tr.next_state {
                        return Err(Error::BrokenChain {
                            episode: i,
                            step: t,
                            next: tr.next_state,
                            found: next.state,
                        });
                    }
                }
            }
        }
        Ok(Self { meta, episodes })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn episodes(&self) -> &[Vec<Transition>] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// The first `n` episodes, which is exactly what a run with `n` episodes
    /// and the same stream would have produced.
    pub fn prefix(&self, n: usize) -> EpisodeDataset {
        EpisodeDataset {
            meta: self.meta,
            episodes: self.episodes[..n.min(self.episodes.len())].to_vec(),
        }
    }
}

/// Rolls one episode: `s_0 ~ d1`, `a_t ~ μ_t(·|s_t)`, `s_{t+1} ~ P(·|s_t,a_t)`.
pub fn roll_episode(mdp: &TabularMdp, mu: &Policy, stream: RngStream) -> Vec<Transition> {
    let mut rng = stream.rng();
    let mut state = sample_categorical(&mut rng, mdp.initial());
    (0..mdp.horizon())
        .map(|t| {
            let action = sample_categorical(&mut rng, mu.row(t, state));
            let next_state = sample_categorical(&mut rng, mdp.transition(state, action));
            let tr = Transition {
                state,
                action,
                next_state,
            };
            state = next_state;
            tr
        })
        .collect()
}

/// `n` episodes; episode `i` draws from `stream.child(i)`, so the dataset is
/// a pure function of its inputs and prefix-stable in `n`.
pub fn roll_episodes(
    mdp: &TabularMdp,
    mu: &Policy,
    n: usize,
    stream: RngStream,
) -> Result<EpisodeDataset> {
    if n == 0 {
        return Err(Error::Empty("episode count"));
    }
    crate::mdp::check_len("behavior policy horizon", mdp.horizon(), mu.horizon())?;
    crate::mdp::check_len("behavior policy states", mdp.num_states(), mu.num_states())?;
    crate::mdp::check_len("behavior policy actions", mdp.num_actions(), mu.num_actions())?;
    let episodes = (0..n as u64)
        .map(|i| roll_episode(mdp, mu, stream.child(i)))
        .collect();
    Ok(EpisodeDataset {
        meta: DatasetMeta {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            base_seed: stream.base_seed,
            stream_index: stream.stream_index,
        },
        episodes,
    })
}
