//! Finite-horizon tabular MDPs with a stationary kernel, policies, and exact
//! dynamic programming (evaluation, planning, occupancy).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::DP_TOL;

/// Anything backward induction can run on: a stationary kernel plus a reward
/// that may depend on the step.
///
/// [`TabularMdp`] has a step-independent reward; absorbing constructions use a
/// step-dependent one (see [`crate::absorbing::StepRewardMdp`]).
pub trait FiniteHorizon {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Next-state distribution `P(·|s,a)`.
    fn transition(&self, state: usize, action: usize) -> &[f64];
    fn reward(&self, step: usize, state: usize, action: usize) -> f64;
}

pub(crate) fn check_distribution(path: &str, row: &[f64], tol: f64) -> Result<()> {
    for (i, &p) in row.iter().enumerate() {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidProbability {
                path: format!("{path}[{i}]"),
                value: p,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::NotNormalized {
            path: format!("{path}"),
            sum,
        });
    }
    Ok(())
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// `M = (S, A, P, r, H, d1)` with `P` shared by every step and `r ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial: Vec<f64>,
}

impl TabularMdp {
    /// Validates every invariant: rows of `transition` (`[s][a][s']`) and
    /// `initial` are distributions within 1e-12 and rewards lie in `[0, 1]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::Empty("number of states"));
        }
        if num_actions == 0 {
            return Err(Error::Empty("number of actions"));
        }
        if horizon == 0 {
            return Err(Error::Empty("horizon"));
        }
        let (s, a) = (num_states, num_actions);
        check_len("transition entries", s * a * s, transition.len())?;
        check_len("reward entries", s * a, reward.len())?;
        check_len("initial distribution entries", s, initial.len())?;
        for st in 0..s {
            for ac in 0..a {
                let row = &transition[(st * a + ac) * s..(st * a + ac + 1) * s];
                check_distribution(&format!("P[{st}][{ac}]"), row, DP_TOL)?;
            }
        }
        check_reward(&reward, a, 0.0, 1.0)?;
        check_distribution("d1", &initial, DP_TOL)?;
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transition,
            reward,
            initial,
        })
    }

    /// Same dynamics with a different reward table.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        check_len("reward entries", self.num_states * self.num_actions, reward.len())?;
        check_reward(&reward, self.num_actions, 0.0, 1.0)?;
        Ok(Self {
            reward,
            ..self.clone()
        })
    }

    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        check_len("initial distribution entries", self.num_states, initial.len())?;
        check_distribution("d1", &initial, DP_TOL)?;
        Ok(Self {
            initial,
            ..self.clone()
        })
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Empty("horizon"));
        }
        Ok(Self {
            horizon,
            ..self.clone()
        })
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn reward_of(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    pub(crate) fn same_shape(&self, other: &TabularMdp) -> Result<()> {
        check_len("number of states", self.num_states, other.num_states)?;
        check_len("number of actions", self.num_actions, other.num_actions)?;
        check_len("horizon", self.horizon, other.horizon)
    }
}

pub(crate) fn check_reward(reward: &[f64], num_actions: usize, lo: f64, hi: f64) -> Result<()> {
    for (i, &r) in reward.iter().enumerate() {
        if !(r >= lo && r <= hi) {
            return Err(Error::RewardOutOfRange {
                path: format!("r[{}][{}]", i / num_actions, i % num_actions),
                value: r,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

impl FiniteHorizon for TabularMdp {
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn transition(&self, state: usize, action: usize) -> &[f64] {
        let s = self.num_states;
        let start = (state * self.num_actions + action) * s;
        &self.transition[start..start + s]
    }
    fn reward(&self, _step: usize, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }
}

/// Non-stationary policy `π = (π_0, …, π_{H-1})`, stored as a full stochastic
/// table even when deterministic so both kinds share one evaluation path.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(Error::Empty("policy dimension"));
        }
        check_len("policy entries", horizon * num_states * num_actions, probs.len())?;
        for (i, row) in probs.chunks(num_actions).enumerate() {
            check_distribution(
                &format!("probs[{}][{}]", i / num_states, i % num_states),
                row,
                DP_TOL,
            )?;
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    /// One-hot policy from an `[h][s]` table of actions.
    pub fn deterministic(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: &[usize],
    ) -> Result<Self> {
        check_len("policy actions", horizon * num_states, actions.len())?;
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (i, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::IndexOutOfRange {
                    path: format!("actions[{}][{}]", i / num_states, i % num_states),
                    index: a,
                    limit: num_actions,
                });
            }
            probs[i * num_actions + a] = 1.0;
        }
        Self::new(horizon, num_states, num_actions, probs)
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            horizon,
            num_states,
            num_actions,
            probs: vec![p; horizon * num_states * num_actions],
        }
    }

    /// The `index`-th deterministic policy of the global class, decoding
    /// `index` in base `A` with one digit per `(h, s)`, `(0, 0)` least significant.
    pub fn enumerate(horizon: usize, num_states: usize, num_actions: usize, index: u128) -> Self {
        let mut actions = vec![0usize; horizon * num_states];
        let mut rest = index;
        let base = num_actions as u128;
        for slot in actions.iter_mut() {
            *slot = (rest % base) as usize;
            rest /= base;
        }
        Self::deterministic(horizon, num_states, num_actions, &actions)
            .expect("decoded actions are in range")
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Action distribution `π_h(·|s)`.
    pub fn row(&self, step: usize, state: usize) -> &[f64] {
        let start = (step * self.num_states + state) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    pub fn prob(&self, step: usize, state: usize, action: usize) -> f64 {
        self.row(step, state)[action]
    }

    /// The chosen action when `π_h(·|s)` is one-hot.
    pub fn action(&self, step: usize, state: usize) -> Option<usize> {
        let row = self.row(step, state);
        let mut chosen = None;
        for (a, &p) in row.iter().enumerate() {
            if p == 1.0 {
                chosen = Some(a);
            } else if p != 0.0 {
                return None;
            }
        }
        chosen
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.horizon).all(|h| (0..self.num_states).all(|s| self.action(h, s).is_some()))
    }

    pub(crate) fn from_raw(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            probs,
        }
    }

    fn fits<M: FiniteHorizon + ?Sized>(&self, mdp: &M) -> Result<()> {
        check_len("policy horizon", mdp.horizon(), self.horizon)?;
        check_len("policy states", mdp.num_states(), self.num_states)?;
        check_len("policy actions", mdp.num_actions(), self.num_actions)
    }
}

/// Number of deterministic non-stationary policies, `A^(S·H)`, or `None` on overflow.
pub fn global_class_size(num_states: usize, num_actions: usize, horizon: usize) -> Option<u128> {
    let digits = u32::try_from(num_states.checked_mul(horizon)?).ok()?;
    (num_actions as u128).checked_pow(digits)
}

/// Per-step `V` and `Q`; row `horizon` is the all-zero terminal row.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTable {
    fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            v: vec![0.0; (horizon + 1) * num_states],
            q: vec![0.0; (horizon + 1) * num_states * num_actions],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `V_h` over states, `h ∈ 0..=horizon`.
    pub fn v(&self, step: usize) -> &[f64] {
        &self.v[step * self.num_states..(step + 1) * self.num_states]
    }

    /// `Q_h` flattened as `[s][a]`.
    pub fn q(&self, step: usize) -> &[f64] {
        let w = self.num_states * self.num_actions;
        &self.q[step * w..(step + 1) * w]
    }

    pub fn value(&self, step: usize, state: usize) -> f64 {
        self.v[step * self.num_states + state]
    }

    pub fn q_value(&self, step: usize, state: usize, action: usize) -> f64 {
        self.q[(step * self.num_states + state) * self.num_actions + action]
    }
}

fn backup<M: FiniteHorizon + ?Sized>(mdp: &M, step: usize, next_v: &[f64], q_out: &mut [f64]) {
    let a_n = mdp.num_actions();
    for s in 0..mdp.num_states() {
        for a in 0..a_n {
            let expected: f64 = mdp
                .transition(s, a)
                .iter()
                .zip(next_v)
                .map(|(p, v)| p * v)
                .sum();
            q_out[s * a_n + a] = mdp.reward(step, s, a) + expected;
        }
    }
}

/// Backward induction for a fixed policy:
/// `Q_h(s,a) = r_h(s,a) + P(·|s,a)·V_{h+1}`, `V_h(s) = Σ_a π_h(a|s) Q_h(s,a)`.
pub fn evaluate_policy<M: FiniteHorizon + ?Sized>(mdp: &M, pi: &Policy) -> Result<ValueTable> {
    pi.fits(mdp)?;
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut table = ValueTable::zeros(h_n, s_n, a_n);
    let w = s_n * a_n;
    for h in (0..h_n).rev() {
        let (v_head, v_tail) = table.v.split_at_mut((h + 1) * s_n);
        let q_row = &mut table.q[h * w..(h + 1) * w];
        backup(mdp, h, &v_tail[..s_n], q_row);
        let v_row = &mut v_head[h * s_n..];
        for s in 0..s_n {
            v_row[s] = pi
                .row(h, s)
                .iter()
                .zip(&q_row[s * a_n..(s + 1) * a_n])
                .map(|(p, q)| p * q)
                .sum();
        }
    }
    Ok(table)
}

/// Optimal values and the greedy deterministic policy. Ties go to the
/// smallest action index.
pub fn plan_optimal<M: FiniteHorizon + ?Sized>(mdp: &M) -> (ValueTable, Policy) {
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut table = ValueTable::zeros(h_n, s_n, a_n);
    let mut probs = vec![0.0; h_n * s_n * a_n];
    let w = s_n * a_n;
    for h in (0..h_n).rev() {
        let (v_head, v_tail) = table.v.split_at_mut((h + 1) * s_n);
        let q_row = &mut table.q[h * w..(h + 1) * w];
        backup(mdp, h, &v_tail[..s_n], q_row);
        let v_row = &mut v_head[h * s_n..];
        for s in 0..s_n {
            let qs = &q_row[s * a_n..(s + 1) * a_n];
            let mut best = 0;
            for a in 1..a_n {
                if qs[a] > qs[best] {
                    best = a;
                }
            }
            v_row[s] = qs[best];
            probs[(h * s_n + s) * a_n + best] = 1.0;
        }
    }
    (table, Policy::from_raw(h_n, s_n, a_n, probs))
}

/// Per-step marginal state-action occupancy `d_t(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    d: Vec<f64>,
}

impl OccupancyTable {
    /// `d_t` flattened as `[s][a]`.
    pub fn step(&self, t: usize) -> &[f64] {
        let w = self.num_states * self.num_actions;
        &self.d[t * w..(t + 1) * w]
    }

    pub fn get(&self, t: usize, state: usize, action: usize) -> f64 {
        self.step(t)[state * self.num_actions + action]
    }

    /// State marginal `d_t(s) = Σ_a d_t(s,a)`.
    pub fn state_marginal(&self, t: usize) -> Vec<f64> {
        self.step(t)
            .chunks(self.num_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Forward recursion `d_0(s,a) = d1(s)·π_0(a|s)`,
/// `d_{t+1}(s',a') = (Σ_{s,a} d_t(s,a) P(s'|s,a))·π_{t+1}(a'|s')`.
pub fn occupancy(mdp: &TabularMdp, pi: &Policy) -> Result<OccupancyTable> {
    pi.fits(mdp)?;
    let (s_n, a_n, h_n) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let w = s_n * a_n;
    let mut d = vec![0.0; h_n * w];
    let mut marginal = mdp.initial.clone();
    for t in 0..h_n {
        for s in 0..s_n {
            for a in 0..a_n {
                d[t * w + s * a_n + a] = marginal[s] * pi.prob(t, s, a);
            }
        }
        if t + 1 < h_n {
            marginal.iter_mut().for_each(|m| *m = 0.0);
            for s in 0..s_n {
                for a in 0..a_n {
                    let mass = d[t * w + s * a_n + a];
                    if mass == 0.0 {
                        continue;
                    }
                    for (m, p) in marginal.iter_mut().zip(mdp.transition(s, a)) {
                        *m += mass * p;
                    }
                }
            }
        }
    }
    Ok(OccupancyTable {
        horizon: h_n,
        num_states: s_n,
        num_actions: a_n,
        d,
    })
}

/// Coverage of a behavior policy: `d_m = min { d_t(s,a) : d_t(s,a) > 0 }`
/// plus the states the behavior policy never reaches.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub d_m: f64,
    /// States with `d_t(s) = 0` at every step.
    pub unreached_states: Vec<usize>,
}

impl Coverage {
    pub fn has_unreached_state(&self) -> bool {
        !self.unreached_states.is_empty()
    }
}

pub fn minimal_occupancy(mdp: &TabularMdp, mu: &Policy) -> Result<Coverage> {
    let occ = occupancy(mdp, mu)?;
    let d_m = occ
        .d
        .iter()
        .copied()
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !d_m.is_finite() {
        return Err(Error::NoCoverage);
    }
    let unreached_states = (0..mdp.num_states)
        .filter(|&s| (0..mdp.horizon).all(|t| occ.state_marginal(t)[s] == 0.0))
        .collect();
    Ok(Coverage {
        d_m,
        unreached_states,
    })
}
