//! Seeded instance generators for tests and sweeps.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::anchor::AnchorLinearMdp;
use crate::error::{Error, Result};
use crate::mdp::{plan_optimal, FiniteHorizon, Policy, TabularMdp};
use crate::num::{dot, exp, ln};
use crate::rng::{uniform_simplex, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceFamily {
    /// Dirichlet(1) rows and initial distribution, uniform `[0,1]` rewards,
    /// uniform behavior.
    DirichletRandom,
    /// Action `a` moves `s` to `(s + a) mod S`; reward `(s + 1)/S` depends on the
    /// state only. Uniform initial distribution and behavior.
    Chain,
    /// Rows close to uniform and shared across actions, rewards with a
    /// geometric ladder of action gaps, and a behavior policy within 10% of
    /// uniform. Occupancies stay near `1/(SA)`.
    NearUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub seed: u64,
    pub family: InstanceFamily,
}

/// Parameters of the near-uniform family.
pub const NEAR_UNIFORM_SPREAD: f64 = 0.3;
pub const NEAR_UNIFORM_TOP_GAP: f64 = 0.01;
pub const NEAR_UNIFORM_GAP_RATIO: f64 = 0.2;
pub const NEAR_UNIFORM_BEHAVIOR_JITTER: f64 = 0.1;

pub fn generate_instance(spec: &InstanceSpec) -> Result<(TabularMdp, Policy)> {
    let (s_n, a_n, h_n) = (spec.num_states, spec.num_actions, spec.horizon);
    if s_n == 0 || a_n == 0 || h_n == 0 {
        return Err(Error::Empty("instance dimension"));
    }
    let mut rng = RngStream::new(spec.seed, 0).rng();
    let uniform_d1 = vec![1.0 / s_n as f64; s_n];
    match spec.family {
        InstanceFamily::DirichletRandom => {
            let p = (0..s_n * a_n).flat_map(|_| uniform_simplex(&mut rng, s_n)).collect();
            let r = uniform_rewards(&mut rng, s_n, a_n);
            let d1 = uniform_simplex(&mut rng, s_n);
            Ok((TabularMdp::new(s_n, a_n, h_n, p, r, d1)?, Policy::uniform(h_n, s_n, a_n)))
        }
        InstanceFamily::Chain => {
            let mut p = vec![0.0; s_n * a_n * s_n];
            let mut r = vec![0.0; s_n * a_n];
            for s in 0..s_n {
                for a in 0..a_n {
                    p[(s * a_n + a) * s_n + (s + a) % s_n] = 1.0;
                    r[s * a_n + a] = (s + 1) as f64 / s_n as f64;
                }
            }
            Ok((TabularMdp::new(s_n, a_n, h_n, p, r, uniform_d1)?, Policy::uniform(h_n, s_n, a_n)))
        }
        InstanceFamily::NearUniform => {
            let u = 1.0 / s_n as f64;
            let mut p = Vec::with_capacity(s_n * a_n * s_n);
            for _ in 0..s_n {
                let row: Vec<f64> = uniform_simplex(&mut rng, s_n)
                    .into_iter()
                    .map(|x| u + NEAR_UNIFORM_SPREAD * (x - u))
                    .collect();
                for _ in 0..a_n {
                    p.extend_from_slice(&row);
                }
            }
            let r = ladder_rewards(&mut rng, s_n, a_n, NEAR_UNIFORM_TOP_GAP, NEAR_UNIFORM_GAP_RATIO);
            let mdp = TabularMdp::new(s_n, a_n, h_n, p, r, uniform_d1)?;
            let mu = jittered_uniform(&mut rng, h_n, s_n, a_n, NEAR_UNIFORM_BEHAVIOR_JITTER)?;
            Ok((mdp, mu))
        }
    }
}

/// Per-state base rewards in `[0.3, 0.7]`; action `a ≥ 1` adds
/// `top · ratio^i · a/(A−1)`, where `i` is the state's rank in a random order.
fn ladder_rewards<R: Rng + ?Sized>(rng: &mut R, s_n: usize, a_n: usize, top: f64, ratio: f64) -> Vec<f64> {
    let base: Vec<f64> = (0..s_n).map(|_| 0.3 + 0.4 * rng.random::<f64>()).collect();
    let mut order: Vec<usize> = (0..s_n).collect();
    order.shuffle(rng);
    let mut r = vec![0.0; s_n * a_n];
    let mut gap = top;
    for &s in &order {
        for a in 0..a_n {
            let step = if a_n > 1 { a as f64 / (a_n - 1) as f64 } else { 0.0 };
            r[s * a_n + a] = base[s] + gap * step;
        }
        gap *= ratio;
    }
    r
}

/// Every `π_h(·|s)` is uniform with each weight scaled by a factor in
/// `[1 − jitter, 1 + jitter]`, then renormalized.
pub fn jittered_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    h_n: usize,
    s_n: usize,
    a_n: usize,
    jitter: f64,
) -> Result<Policy> {
    let mut probs = Vec::with_capacity(h_n * s_n * a_n);
    for _ in 0..h_n * s_n {
        let w: Vec<f64> = (0..a_n)
            .map(|_| 1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let total: f64 = w.iter().sum();
        probs.extend(w.into_iter().map(|x| x / total));
    }
    Policy::new(h_n, s_n, a_n, probs)
}

/// I.i.d. uniform `[0, 1]` rewards, flat `[s][a]`.
pub fn uniform_rewards<R: Rng + ?Sized>(rng: &mut R, s_n: usize, a_n: usize) -> Vec<f64> {
    (0..s_n * a_n).map(|_| rng.random::<f64>()).collect()
}

/// Rewards whose action gaps are log-uniform: `r(s,0) = c_s ∈ [0.25, 0.75]`,
/// `r(s,a) = c_s ± exp(U[ln lo, ln hi])` for `a ≥ 1`. Gaps have no typical
/// scale, so planning errors shrink like `n^{-1/2}` at every sample size.
pub fn log_gap_rewards<R: Rng + ?Sized>(rng: &mut R, s_n: usize, a_n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut r = vec![0.0; s_n * a_n];
    for s in 0..s_n {
        let c = 0.25 + 0.5 * rng.random::<f64>();
        r[s * a_n] = c;
        for a in 1..a_n {
            let gap = exp(ln(lo) + (ln(hi) - ln(lo)) * rng.random::<f64>());
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            r[s * a_n + a] = c + sign * gap;
        }
    }
    r
}

pub const LOG_GAP_LO: f64 = 1e-4;
pub const LOG_GAP_HI: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorInstanceSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub anchors: usize,
    /// How far each pair's mixing weights stray from its state's base weights.
    pub spread: f64,
    /// Largest planted action gap at step 1; the rest follow a geometric ladder.
    pub top_gap: f64,
    pub gap_ratio: f64,
    pub seed: u64,
}

impl Default for AnchorInstanceSpec {
    fn default() -> Self {
        Self {
            num_states: 20,
            num_actions: 2,
            horizon: 3,
            anchors: 6,
            spread: 0.25,
            top_gap: 0.01,
            gap_ratio: 0.7,
            seed: 0,
        }
    }
}

/// Anchor MDP with planted near-ties.
///
/// Anchor features are `B_k = 0.6 e_k + 0.4 w_k` for random simplex `w_k`;
/// anchor `k` sits at `(k, 0)`. Every other feature mixes the anchors with
/// weights `(1 − spread)·base_s + spread·noise`. Rewards are solved so that
/// `Q⋆_1(s, ·)` has its top two actions separated by exactly `top_gap·ratio^i`
/// with `i` the state's rank in a random order.
pub fn generate_anchor_instance(spec: &AnchorInstanceSpec) -> Result<AnchorLinearMdp> {
    let (s_n, a_n, h_n, k_n) = (spec.num_states, spec.num_actions, spec.horizon, spec.anchors);
    if k_n == 0 || k_n > s_n || a_n < 2 || h_n < 2 {
        return Err(Error::Config(alloc::format!(
            "anchor instance needs 1 ≤ anchors ≤ S, A ≥ 2 and H ≥ 2 (got anchors={k_n}, S={s_n}, A={a_n}, H={h_n})"
        )));
    }
    let mut rng = RngStream::new(spec.seed, 0).rng();
    let basis: Vec<Vec<f64>> = (0..k_n)
        .map(|k| {
            let mut b: Vec<f64> = uniform_simplex(&mut rng, k_n).into_iter().map(|x| 0.4 * x).collect();
            b[k] += 0.6;
            b
        })
        .collect();
    let mut weights = vec![0.0; s_n * a_n * k_n];
    for s in 0..s_n {
        let base = if s < k_n {
            let mut e = vec![0.0; k_n];
            e[s] = 1.0;
            e
        } else {
            uniform_simplex(&mut rng, k_n)
        };
        for a in 0..a_n {
            let w: Vec<f64> = if s < k_n && a == 0 {
                base.clone()
            } else {
                let noise = uniform_simplex(&mut rng, k_n);
                base.iter()
                    .zip(&noise)
                    .map(|(b, n)| (1.0 - spec.spread) * b + spec.spread * n)
                    .collect()
            };
            weights[(s * a_n + a) * k_n..(s * a_n + a + 1) * k_n].copy_from_slice(&w);
        }
    }
    let mut phi = vec![0.0; s_n * a_n * k_n];
    for pair in 0..s_n * a_n {
        for (j, b) in basis.iter().enumerate() {
            let w = weights[pair * k_n + j];
            for (f, &x) in phi[pair * k_n..(pair + 1) * k_n].iter_mut().zip(b) {
                *f += w * x;
            }
        }
    }
    let psi: Vec<f64> = (0..k_n).flat_map(|_| uniform_simplex(&mut rng, s_n)).collect();
    let anchors: Vec<(usize, usize)> = (0..k_n).map(|k| (k, 0)).collect();

    // transitions are fixed by φψ; solve rewards for the planted gaps
    let probe = AnchorLinearMdp::new(s_n, a_n, h_n, k_n, phi.clone(), psi.clone(), anchors.clone(), vec![0.0; s_n * a_n])?;
    let base: Vec<f64> = (0..s_n).map(|_| 0.35 + 0.3 * rng.random::<f64>()).collect();
    let mut order: Vec<usize> = (0..s_n).collect();
    order.shuffle(&mut rng);
    let mut gaps = vec![0.0; s_n];
    let mut g = spec.top_gap;
    for &s in &order {
        gaps[s] = g;
        g *= spec.gap_ratio;
    }
    let winners: Vec<usize> = (0..s_n).map(|_| rng.random_range(0..2)).collect();
    let reward = plant_gaps(&probe, &base, &gaps, &winners)?;
    AnchorLinearMdp::new(s_n, a_n, h_n, k_n, phi, psi, anchors, reward)
}

/// Fixed-point solve for rewards with `Q⋆_{H−2}(s, w_s) − Q⋆_{H−2}(s, 1−w_s) = gap_s`
/// on actions 0 and 1. `r(s,0) = base_s` and `r(s,1) = base_s + d_s`; other
/// actions copy action 0 minus a margin so they never compete.
fn plant_gaps(mdp: &AnchorLinearMdp, base: &[f64], gaps: &[f64], winners: &[usize]) -> Result<Vec<f64>> {
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let mut d = vec![0.0; s_n];
    let build = |d: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; s_n * a_n];
        for s in 0..s_n {
            r[s * a_n] = base[s];
            r[s * a_n + 1] = base[s] + d[s];
            for a in 2..a_n {
                r[s * a_n + a] = (base[s] + d[s].min(0.0) - 0.3).max(0.0);
            }
        }
        r
    };
    for _ in 0..200 {
        let r = build(&d);
        // last-step values are the best immediate reward
        let v_last: Vec<f64> = (0..s_n)
            .map(|s| r[s * a_n..(s + 1) * a_n].iter().copied().fold(f64::MIN, f64::max))
            .collect();
        let mut change: f64 = 0.0;
        for s in 0..s_n {
            let drift = dot(mdp.transition(s, 0), &v_last) - dot(mdp.transition(s, 1), &v_last);
            // Q(s,0) − Q(s,1) = −d_s + drift
            let target = if winners[s] == 0 { gaps[s] } else { -gaps[s] };
            let next = drift - target;
            change = change.max((next - d[s]).abs());
            d[s] = next;
        }
        if change < 1e-15 {
            break;
        }
    }
    let r = build(&d);
    if let Some((i, &value)) = r.iter().enumerate().find(|(_, &x)| !(0.0..=1.0).contains(&x)) {
        return Err(Error::RewardOutOfRange {
            path: alloc::format!("r[{}][{}]", i / a_n, i % a_n),
            value,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let planted = mdp_with_reward(mdp, &r)?;
    let (values, _) = plan_optimal(&planted);
    let h = mdp.horizon() - 2;
    for s in 0..s_n {
        let got = values.q_value(h, s, winners[s]) - values.q_value(h, s, 1 - winners[s]);
        if (got - gaps[s]).abs() > 1e-12 {
            return Err(Error::Config(alloc::format!(
                "gap planting did not converge at state {s}: {got} vs {}",
                gaps[s]
            )));
        }
    }
    Ok(r)
}

fn mdp_with_reward(mdp: &AnchorLinearMdp, reward: &[f64]) -> Result<AnchorLinearMdp> {
    AnchorLinearMdp::new(
        mdp.num_states(),
        mdp.num_actions(),
        mdp.horizon(),
        mdp.feature_dim(),
        mdp.phi().to_vec(),
        mdp.psi().to_vec(),
        mdp.anchors().to_vec(),
        reward.to_vec(),
    )
}
