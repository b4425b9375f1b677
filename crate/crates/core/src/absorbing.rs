//! Absorbing-state constructions.
//!
//! `M_{s,u}` agrees with a base MDP except at state `s`, which becomes
//! absorbing (`P(s|s,a) = 1`) and pays the time-varying reward `u_t` under every
//! action. The singleton choice `u⋆_t = V⋆_t(s) − V⋆_{t+1}(s)` leaves every
//! optimal value of the base MDP unchanged.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{check_len, plan_optimal, FiniteHorizon, TabularMdp, ValueTable};
use crate::num::sup_distance;

/// Tabular MDP whose reward depends on the step, stored `[h][s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRewardMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl StepRewardMdp {
    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }
}

impl From<&TabularMdp> for StepRewardMdp {
    fn from(mdp: &TabularMdp) -> Self {
        let reward = (0..mdp.horizon()).flat_map(|_| mdp.rewards().iter().copied()).collect();
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            transition: mdp.transitions().to_vec(),
            reward,
        }
    }
}

impl FiniteHorizon for StepRewardMdp {
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
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }
    fn reward(&self, step: usize, state: usize, action: usize) -> f64 {
        self.reward[(step * self.num_states + state) * self.num_actions + action]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingSpec<'a> {
    pub base: &'a TabularMdp,
    pub state: usize,
    /// Per-step reward at the absorbing state, each in `[0, H]`.
    pub u: Vec<f64>,
}

/// Builds `M_{s,u}`. Rows of every other state are copied from the base.
pub fn build_absorbing(spec: &AbsorbingSpec<'_>) -> Result<StepRewardMdp> {
    let base = spec.base;
    let (s_n, a_n, h_n) = (base.num_states(), base.num_actions(), base.horizon());
    if spec.state >= s_n {
        return Err(Error::IndexOutOfRange {
            path: "absorbing state".into(),
            index: spec.state,
            limit: s_n,
        });
    }
    check_len("absorbing rewards", h_n, spec.u.len())?;
    for (step, &value) in spec.u.iter().enumerate() {
        if value < 0.0 || value.is_nan() {
            return Err(Error::NegativeIncrement { step, value });
        }
        if value > h_n as f64 {
            return Err(Error::RewardOutOfRange {
                path: alloc::format!("u[{step}]"),
                value,
                lo: 0.0,
                hi: h_n as f64,
            });
        }
    }
    let mut mdp = StepRewardMdp::from(base);
    let s = spec.state;
    for a in 0..a_n {
        let start = (s * a_n + a) * s_n;
        let row = &mut mdp.transition[start..start + s_n];
        row.iter_mut().for_each(|p| *p = 0.0);
        row[s] = 1.0;
        for (t, &value) in spec.u.iter().enumerate() {
            mdp.reward[(t * s_n + s) * a_n + a] = value;
        }
    }
    Ok(mdp)
}

/// `V⋆_h(s) ≥ V⋆_{h+1}(s)` for every `h` and `s`, up to `tol`.
pub fn values_monotone(values: &ValueTable, tol: f64) -> bool {
    (0..values.horizon()).all(|h| {
        values
            .v(h)
            .iter()
            .zip(values.v(h + 1))
            .all(|(now, next)| now + tol >= *next)
    })
}

fn increments(values: &ValueTable, state: usize) -> Result<Vec<f64>> {
    (0..values.horizon())
        .map(|t| {
            let u = values.value(t, state) - values.value(t + 1, state);
            if u < -crate::DP_TOL {
                Err(Error::NegativeIncrement { step: t, value: u })
            } else {
                Ok(u.max(0.0))
            }
        })
        .collect()
}

/// `u⋆_t = V⋆_t(s) − V⋆_{t+1}(s)`. Round-off negatives above `−1e-12` are
/// clamped to zero; anything lower is an error.
pub fn singleton_u(mdp: &TabularMdp, state: usize) -> Result<Vec<f64>> {
    if state >= mdp.num_states() {
        return Err(Error::IndexOutOfRange {
            path: "absorbing state".into(),
            index: state,
            limit: mdp.num_states(),
        });
    }
    increments(&plan_optimal(mdp).0, state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingletonReport {
    pub state: usize,
    pub u: Vec<f64>,
    /// `V⋆` of the base MDP is non-increasing in the step.
    pub monotone: bool,
    /// `max_h |V⋆_{h,{s,u}}(s) − Σ_{t≥h} u_t|`.
    pub absorbing_value_deviation: f64,
    /// `max_{h,s'} |V⋆_{h,{s,u}}(s') − V⋆_h(s')|`.
    pub max_deviation: f64,
    pub passed: bool,
}

/// Plans on `M_{s,u}` with the supplied `u` and compares against the base
/// MDP's optimal values. With `u = u⋆` the two agree exactly.
pub fn verify_identity_with(mdp: &TabularMdp, state: usize, u: Vec<f64>) -> Result<SingletonReport> {
    let (base_values, _) = plan_optimal(mdp);
    let monotone = values_monotone(&base_values, crate::DP_TOL);
    let absorbing = build_absorbing(&AbsorbingSpec {
        base: mdp,
        state,
        u: u.clone(),
    })?;
    let (values, _) = plan_optimal(&absorbing);
    let h_n = mdp.horizon();
    let mut absorbing_value_deviation: f64 = 0.0;
    let mut max_deviation: f64 = 0.0;
    for h in 0..=h_n {
        let tail: f64 = u[h..].iter().sum();
        absorbing_value_deviation = absorbing_value_deviation.max((values.value(h, state) - tail).abs());
        max_deviation = max_deviation.max(sup_distance(values.v(h), base_values.v(h)));
    }
    Ok(SingletonReport {
        state,
        u,
        monotone,
        absorbing_value_deviation,
        max_deviation,
        passed: monotone && max_deviation <= crate::ACCUM_TOL,
    })
}

/// Checks that the singleton-absorbing MDP at `state` has the same optimal
/// values as `mdp` everywhere.
pub fn verify_singleton_identity(mdp: &TabularMdp, state: usize) -> Result<SingletonReport> {
    let u = singleton_u(mdp, state)?;
    verify_identity_with(mdp, state, u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QDiffReport {
    /// `max_h ‖Q⋆_{h,{s,u}} − Q⋆_{h,{s,u'}}‖_∞`.
    pub lhs: f64,
    /// `H · max_t |u_t − u'_t|`.
    pub rhs: f64,
    /// `lhs / rhs`, or 0 when both vanish.
    pub ratio: f64,
    pub holds: bool,
}

/// Lipschitz dependence of the absorbing MDP's optimal `Q` on `u`.
pub fn q_diff_bound_check(mdp: &TabularMdp, state: usize, u: &[f64], u2: &[f64]) -> Result<QDiffReport> {
    let build = |u: &[f64]| {
        build_absorbing(&AbsorbingSpec {
            base: mdp,
            state,
            u: u.to_vec(),
        })
    };
    let (q1, _) = plan_optimal(&build(u)?);
    let (q2, _) = plan_optimal(&build(u2)?);
    let lhs = (0..mdp.horizon())
        .map(|h| sup_distance(q1.q(h), q2.q(h)))
        .fold(0.0, f64::max);
    let rhs = mdp.horizon() as f64 * sup_distance(u, u2);
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(QDiffReport {
        lhs,
        rhs,
        ratio,
        holds: lhs <= rhs + crate::ACCUM_TOL,
    })
}

/// `max_t |û⋆_t − u⋆_t|` between the singleton increments of an empirical
/// and a true MDP.
pub fn increment_gap(truth: &TabularMdp, empirical: &TabularMdp, state: usize) -> Result<f64> {
    truth.same_shape(empirical)?;
    let u = singleton_u(truth, state)?;
    let u_hat = singleton_u(empirical, state)?;
    Ok(sup_distance(&u, &u_hat))
}

/// Per-state singleton checks for every state of `mdp`.
pub fn verify_all_states(mdp: &TabularMdp) -> Result<Vec<SingletonReport>> {
    (0..mdp.num_states()).map(|s| verify_singleton_identity(mdp, s)).collect()
}
