//! Uniform off-policy evaluation error over policy classes.
//!
//! The error of a policy is `‖Q̂^π_0 − Q^π_0‖_∞` over all `(s, a)` at the first
//! step, with `Q̂` computed on the empirical MDP and `Q` on the true one. The
//! global class is every deterministic non-stationary policy; the local class
//! is every policy whose empirical value stays within `eps_opt` of the
//! empirical optimum at every step.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{
    evaluate_policy, global_class_size, plan_optimal, FiniteHorizon, Policy, TabularMdp,
    ValueTable,
};
use crate::num::{l1_distance, sqrt, sup_distance};
use crate::plugin::EmpiricalModel;
use crate::rng::RngStream;

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Slack on the local-class value inequality, absorbing round-off in two
/// independent backward passes.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassKind {
    GlobalExhaustive,
    GlobalSampled,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyClassSpec {
    pub kind: ClassKind,
    /// Policies drawn in the sampled modes.
    pub samples: usize,
    /// Radius of the local class.
    pub eps_opt: f64,
    pub enumeration_cap: u64,
    /// Keep every examined policy's error in the report.
    pub record_per_policy: bool,
}

impl PolicyClassSpec {
    pub fn global_exhaustive() -> Self {
        Self {
            kind: ClassKind::GlobalExhaustive,
            samples: 0,
            eps_opt: 0.0,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            record_per_policy: false,
        }
    }

    pub fn global_sampled(samples: usize) -> Self {
        Self {
            kind: ClassKind::GlobalSampled,
            samples,
            ..Self::global_exhaustive()
        }
    }

    pub fn local(eps_opt: f64, samples: usize) -> Self {
        Self {
            kind: ClassKind::Local,
            samples,
            eps_opt,
            ..Self::global_exhaustive()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ClassKind::GlobalExhaustive => Ok(()),
            ClassKind::GlobalSampled if self.samples == 0 => Err(Error::Empty("policy samples")),
            ClassKind::GlobalSampled => Ok(()),
            ClassKind::Local => {
                if !(self.eps_opt.is_finite() && self.eps_opt >= 0.0) {
                    return Err(Error::InvalidRadius(self.eps_opt));
                }
                if self.samples == 0 {
                    return Err(Error::Empty("policy samples"));
                }
                Ok(())
            }
        }
    }
}

/// `eps_opt` beyond `√(H/S)` lies outside the regime where the local-class
/// rate is guaranteed.
pub fn eps_outside_regime(eps_opt: f64, num_states: usize, horizon: usize) -> bool {
    eps_opt > sqrt(horizon as f64 / num_states as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportFlags {
    /// The sup was taken over a sample, so it only bounds the class sup from below.
    pub lower_bound: bool,
    /// Local sampling ran out of candidate draws before reaching its target.
    pub budget_exhausted: bool,
    pub eps_outside_regime: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformErrorReport {
    pub sup_error: f64,
    pub argmax_policy: Policy,
    pub per_policy_errors: Option<Vec<f64>>,
    pub class_size_examined: u64,
    pub flags: ReportFlags,
}

impl UniformErrorReport {
    fn single(error: f64, pi: Policy, record: bool) -> Self {
        Self {
            sup_error: error,
            argmax_policy: pi,
            per_policy_errors: record.then(|| vec![error]),
            class_size_examined: 1,
            flags: ReportFlags::default(),
        }
    }

    fn push(&mut self, error: f64, pi: impl FnOnce() -> Policy) {
        if error > self.sup_error {
            self.sup_error = error;
            self.argmax_policy = pi();
        }
        if let Some(list) = self.per_policy_errors.as_mut() {
            list.push(error);
        }
        self.class_size_examined += 1;
    }

    /// Combines reports over consecutive chunks of one policy list. The
    /// earlier chunk wins ties, so the result matches a single sequential pass.
    pub fn merge(mut self, later: UniformErrorReport) -> UniformErrorReport {
        if later.sup_error > self.sup_error {
            self.sup_error = later.sup_error;
            self.argmax_policy = later.argmax_policy;
        }
        self.per_policy_errors = match (self.per_policy_errors, later.per_policy_errors) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        self.class_size_examined += later.class_size_examined;
        self.flags.lower_bound |= later.flags.lower_bound;
        self.flags.budget_exhausted |= later.flags.budget_exhausted;
        self.flags.eps_outside_regime |= later.flags.eps_outside_regime;
        self
    }
}

/// `‖Q̂^π_0 − Q^π_0‖_∞` for one policy.
pub fn policy_error(truth: &TabularMdp, empirical: &TabularMdp, pi: &Policy) -> Result<f64> {
    let q_true = evaluate_policy(truth, pi)?;
    let q_hat = evaluate_policy(empirical, pi)?;
    Ok(sup_distance(q_hat.q(0), q_true.q(0)))
}

fn check_pair(truth: &TabularMdp, model: &EmpiricalModel) -> Result<TabularMdp> {
    let empirical = model.to_mdp()?;
    truth.same_shape(&empirical)?;
    Ok(empirical)
}

/// Exhaustive sup over the enumeration indices in `range` of the global
/// class. Disjoint consecutive ranges merge into the full-class result.
pub fn global_error_range(
    truth: &TabularMdp,
    empirical: &TabularMdp,
    range: Range<u128>,
    record_per_policy: bool,
) -> Result<UniformErrorReport> {
    if range.is_empty() {
        return Err(Error::Empty("policy index range"));
    }
    let (s, a, h) = (truth.num_states(), truth.num_actions(), truth.horizon());
    let first = Policy::enumerate(h, s, a, range.start);
    let mut report =
        UniformErrorReport::single(policy_error(truth, empirical, &first)?, first, record_per_policy);
    for index in range.start + 1..range.end {
        let pi = Policy::enumerate(h, s, a, index);
        let err = policy_error(truth, empirical, &pi)?;
        report.push(err, || pi);
    }
    Ok(report)
}

/// Uniformly random deterministic policy.
pub fn random_deterministic<R: Rng + ?Sized>(
    rng: &mut R,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
) -> Policy {
    let actions: Vec<usize> = (0..horizon * num_states)
        .map(|_| rng.random_range(0..num_actions))
        .collect();
    Policy::deterministic(horizon, num_states, num_actions, &actions)
        .expect("sampled actions are in range")
}

/// Sup error over the global class, either enumerated exactly (refused above
/// `enumeration_cap`) or over `samples` uniformly drawn deterministic
/// policies, in which case the report is flagged as a lower bound.
pub fn global_uniform_error(
    truth: &TabularMdp,
    model: &EmpiricalModel,
    spec: &PolicyClassSpec,
    stream: RngStream,
) -> Result<UniformErrorReport> {
    spec.validate()?;
    let empirical = check_pair(truth, model)?;
    let (s, a, h) = (truth.num_states(), truth.num_actions(), truth.horizon());
    match spec.kind {
        ClassKind::GlobalExhaustive => {
            let size = global_class_size(s, a, h).unwrap_or(u128::MAX);
            if size > spec.enumeration_cap as u128 {
                return Err(Error::EnumerationCap {
                    size,
                    cap: spec.enumeration_cap,
                });
            }
            global_error_range(truth, &empirical, 0..size, spec.record_per_policy)
        }
        ClassKind::GlobalSampled => {
            let mut rng = stream.rng();
            let first = random_deterministic(&mut rng, h, s, a);
            let mut report = UniformErrorReport::single(
                policy_error(truth, &empirical, &first)?,
                first,
                spec.record_per_policy,
            );
            for _ in 1..spec.samples {
                let pi = random_deterministic(&mut rng, h, s, a);
                let err = policy_error(truth, &empirical, &pi)?;
                report.push(err, || pi);
            }
            report.flags.lower_bound = true;
            Ok(report)
        }
        ClassKind::Local => {
            let sample = sample_local_class(model, spec.eps_opt, spec.samples, stream)?;
            let mut report =
                local_uniform_error(truth, model, &sample.policies, spec.eps_opt, spec.record_per_policy)?;
            report.flags.budget_exhausted = sample.exhausted;
            Ok(report)
        }
    }
}

/// The empirical optimal policy `π̂⋆` and its empirical values.
pub fn empirical_optimal(model: &EmpiricalModel) -> Result<(Policy, ValueTable)> {
    let (values, pi) = plan_optimal(&model.to_mdp()?);
    Ok((pi, values))
}

/// Largest per-step gap `max_h ‖V̂^π_h − V̂^{π̂⋆}_h‖_∞`.
pub fn local_gap(empirical: &TabularMdp, optimal_values: &ValueTable, pi: &Policy) -> Result<f64> {
    let values = evaluate_policy(empirical, pi)?;
    Ok((0..empirical.horizon())
        .map(|h| sup_distance(values.v(h), optimal_values.v(h)))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSample {
    /// Accepted, pairwise distinct policies; `π̂⋆` comes first.
    pub policies: Vec<Policy>,
    pub drawn: usize,
    pub accepted: usize,
    pub exhausted: bool,
}

fn perturb<R: Rng + ?Sized>(rng: &mut R, base: &[usize], num_actions: usize) -> Vec<usize> {
    let mut actions = base.to_vec();
    // k ~ Geometric(1/2) on {1, 2, ...}, capped at the number of sites
    let mut k = 1;
    while k < actions.len() && rng.random::<bool>() {
        k += 1;
    }
    for _ in 0..k {
        let site = rng.random_range(0..actions.len());
        let shift = rng.random_range(1..num_actions);
        actions[site] = (actions[site] + shift) % num_actions;
    }
    actions
}

fn policy_key(pi: &Policy) -> Vec<u64> {
    pi.probs().iter().map(|p| p.to_bits()).collect()
}

/// Up to `count` distinct members of the local class around `π̂⋆`, found by
/// rejection sampling. Candidates are `k`-site action perturbations of `π̂⋆`
/// (deterministic) and mixtures of such a perturbation with the uniform
/// policy; at most `50·count` candidates are drawn.
pub fn sample_local_class(
    model: &EmpiricalModel,
    eps_opt: f64,
    count: usize,
    stream: RngStream,
) -> Result<LocalSample> {
    if !(eps_opt.is_finite() && eps_opt >= 0.0) {
        return Err(Error::InvalidRadius(eps_opt));
    }
    if count == 0 {
        return Err(Error::Empty("policy samples"));
    }
    let empirical = model.to_mdp()?;
    let (s, a, h) = (empirical.num_states(), empirical.num_actions(), empirical.horizon());
    let (optimal_values, star) = plan_optimal(&empirical);
    let base: Vec<usize> = (0..h)
        .flat_map(|t| (0..s).map(move |st| (t, st)))
        .map(|(t, st)| star.action(t, st).expect("greedy policy is deterministic"))
        .collect();
    let mut seen = BTreeSet::new();
    seen.insert(policy_key(&star));
    let mut policies = vec![star];
    let budget = 50 * count;
    let mut drawn = 0;
    let mut accepted = 0;
    if a > 1 {
        let mut rng = stream.rng();
        while policies.len() < count && drawn < budget {
            drawn += 1;
            let actions = perturb(&mut rng, &base, a);
            let det = Policy::deterministic(h, s, a, &actions)?;
            let candidate = if rng.random::<bool>() {
                det
            } else {
                let alpha: f64 = rng.random();
                let uniform = 1.0 / a as f64;
                let probs = det
                    .probs()
                    .iter()
                    .map(|&p| (1.0 - alpha) * p + alpha * uniform)
                    .collect();
                Policy::new(h, s, a, probs)?
            };
            if local_gap(&empirical, &optimal_values, &candidate)? > eps_opt + MEMBERSHIP_TOL {
                continue;
            }
            accepted += 1;
            if seen.insert(policy_key(&candidate)) {
                policies.push(candidate);
            }
        }
    }
    let exhausted = policies.len() < count;
    Ok(LocalSample {
        policies,
        drawn,
        accepted,
        exhausted,
    })
}

/// Sup error over a supplied local-class sample. Every policy is re-checked
/// against the class inequality first.
pub fn local_uniform_error(
    truth: &TabularMdp,
    model: &EmpiricalModel,
    policies: &[Policy],
    eps_opt: f64,
    record_per_policy: bool,
) -> Result<UniformErrorReport> {
    if !(eps_opt.is_finite() && eps_opt >= 0.0) {
        return Err(Error::InvalidRadius(eps_opt));
    }
    let empirical = check_pair(truth, model)?;
    let (optimal_values, _) = plan_optimal(&empirical);
    for (index, pi) in policies.iter().enumerate() {
        let gap = local_gap(&empirical, &optimal_values, pi)?;
        if gap > eps_opt + MEMBERSHIP_TOL {
            return Err(Error::NotInLocalClass {
                index,
                gap,
                eps_opt,
            });
        }
    }
    let (first, rest) = policies
        .split_first()
        .ok_or(Error::Empty("local policy list"))?;
    let mut report = UniformErrorReport::single(
        policy_error(truth, &empirical, first)?,
        first.clone(),
        record_per_policy,
    );
    for pi in rest {
        let err = policy_error(truth, &empirical, pi)?;
        report.push(err, || pi.clone());
    }
    report.flags.lower_bound = true;
    report.flags.eps_outside_regime =
        eps_outside_regime(eps_opt, truth.num_states(), truth.horizon());
    Ok(report)
}

/// `V⋆_0(s) − V^{π̂}_0(s)` on the true MDP.
pub fn learning_suboptimality(truth: &TabularMdp, pi_hat: &Policy) -> Result<Vec<f64>> {
    let (optimal, _) = plan_optimal(truth);
    let values = evaluate_policy(truth, pi_hat)?;
    Ok(optimal
        .v(0)
        .iter()
        .zip(values.v(0))
        .map(|(o, v)| o - v)
        .collect())
}

/// `sup_{r ∈ {0,1}^S} |(p − q)·r|`: the larger of the positive and negative
/// deviation masses. Never below `½‖p − q‖_1`.
pub fn binary_reward_sup(p: &[f64], q: &[f64]) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for (x, y) in p.iter().zip(q) {
        let d = x - y;
        if d > 0.0 {
            pos += d;
        } else {
            neg -= d;
        }
    }
    f64::max(pos, neg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    /// Exhaustive `sup_π ‖Q̂^π_0 − Q^π_0‖_∞` under the indicator reward.
    pub sup_error: f64,
    /// `sup_{s,a} ½‖P̂(·|s,a) − P(·|s,a)‖_1`.
    pub half_l1_sup: f64,
    /// `sup_{s,a}` of [`binary_reward_sup`] between the two rows.
    pub binary_sup: f64,
    /// `sup_error ≥ half_l1_sup` (up to round-off).
    pub chain_holds: bool,
    /// `sup_error = binary_sup` (up to round-off).
    pub matches_binary: bool,
    pub argmax_policy: Policy,
}

/// Two-step reduction to `ℓ1` density estimation. Installs the reward
/// `r(s, 0) = 1, r(s, a) = 0` otherwise, then enumerates the global class:
/// the first-step error is `(P̂ − P)(·|s,a)·v` where the second-step value `v`
/// ranges over all of `{0,1}^S`.
pub fn lower_bound_demo(
    truth: &TabularMdp,
    model: &EmpiricalModel,
    enumeration_cap: u64,
) -> Result<LowerBoundReport> {
    if truth.horizon() != 2 {
        return Err(Error::HorizonNotTwo(truth.horizon()));
    }
    let (s_n, a_n) = (truth.num_states(), truth.num_actions());
    if a_n < 2 {
        return Err(Error::TooFewActions {
            needed: 2,
            found: a_n,
        });
    }
    let mut indicator = vec![0.0; s_n * a_n];
    for s in 0..s_n {
        indicator[s * a_n] = 1.0;
    }
    let truth = truth.with_reward(indicator.clone())?;
    let model = model.with_reward(indicator)?;
    let spec = PolicyClassSpec {
        enumeration_cap,
        ..PolicyClassSpec::global_exhaustive()
    };
    let report = global_uniform_error(&truth, &model, &spec, RngStream::new(0, 0))?;
    let (mut half_l1_sup, mut binary_sup) = (0.0f64, 0.0f64);
    for s in 0..s_n {
        for a in 0..a_n {
            let (p_hat, p) = (model.p_hat_row(s, a), truth.transition(s, a));
            half_l1_sup = half_l1_sup.max(0.5 * l1_distance(p_hat, p));
            binary_sup = binary_sup.max(binary_reward_sup(p_hat, p));
        }
    }
    let tol = crate::ACCUM_TOL;
    Ok(LowerBoundReport {
        sup_error: report.sup_error,
        half_l1_sup,
        binary_sup,
        chain_holds: report.sup_error + tol >= half_l1_sup,
        matches_binary: (report.sup_error - binary_sup).abs() <= tol,
        argmax_policy: report.argmax_policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::tests::{random_mdp, random_policy};
    use crate::plugin::fit_plugin;
    use crate::trajectory::roll_episodes;
    use approx::assert_abs_diff_eq;

    fn fitted(seed: u64, s: usize, a: usize, h: usize, n: usize) -> (TabularMdp, EmpiricalModel) {
        let truth = random_mdp(seed, s, a, h);
        let mu = Policy::uniform(h, s, a);
        let data = roll_episodes(&truth, &mu, n, RngStream::new(seed, 1)).unwrap();
        let model = fit_plugin(&data, &truth).unwrap();
        (truth, model)
    }

    /// Counts that reproduce `truth` exactly: every row is a multiple of 1/8.
    fn exact_model(truth: &TabularMdp, scale: f64) -> EmpiricalModel {
        let counts = truth.transitions().iter().map(|p| (p * scale).round() as u64).collect();
        let init = truth.initial().iter().map(|p| (p * scale).round() as u64).collect();
        EmpiricalModel::from_counts(
            truth.num_states(),
            truth.num_actions(),
            truth.horizon(),
            counts,
            init,
            truth.rewards().to_vec(),
        )
        .unwrap()
    }

    fn dyadic_mdp() -> TabularMdp {
        let p = vec![0.25, 0.75, 0.5, 0.5, 0.125, 0.875, 1.0, 0.0];
        TabularMdp::new(2, 2, 2, p, vec![0.2, 0.9, 0.6, 0.1], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn exact_model_has_zero_error() {
        let truth = dyadic_mdp();
        let model = exact_model(&truth, 8.0);
        let r = global_uniform_error(&truth, &model, &PolicyClassSpec::global_exhaustive(), RngStream::new(0, 0))
            .unwrap();
        assert_eq!(r.sup_error, 0.0);
        assert_eq!(r.class_size_examined, 16);
        let demo = lower_bound_demo(&truth, &model, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!((demo.sup_error, demo.half_l1_sup, demo.binary_sup), (0.0, 0.0, 0.0));
    }

    #[test]
    fn exhaustive_matches_sixteen_individual_errors() {
        let (truth, model) = fitted(3, 2, 2, 2, 40);
        let spec = PolicyClassSpec {
            record_per_policy: true,
            ..PolicyClassSpec::global_exhaustive()
        };
        let r = global_uniform_error(&truth, &model, &spec, RngStream::new(0, 0)).unwrap();
        let empirical = model.to_mdp().unwrap();
        let mut brute = Vec::new();
        for b in 0..16usize {
            let actions: Vec<usize> = (0..4).map(|i| (b >> i) & 1).collect();
            // independent evaluation by explicit two-step sums
            let mut worst: f64 = 0.0;
            for s in 0..2 {
                for a in 0..2 {
                    let q = |m: &TabularMdp| {
                        m.reward_of(s, a)
                            + (0..2)
                                .map(|s2| m.transition(s, a)[s2] * m.reward_of(s2, actions[2 + s2]))
                                .sum::<f64>()
                    };
                    worst = worst.max((q(&empirical) - q(&truth)).abs());
                }
            }
            brute.push(worst);
        }
        let max = brute.iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(r.sup_error, max, epsilon = 1e-12);
        for (x, y) in r.per_policy_errors.unwrap().iter().zip(&brute) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn sampled_is_a_lower_bound() {
        let (truth, model) = fitted(5, 2, 2, 3, 30);
        let full = global_uniform_error(&truth, &model, &PolicyClassSpec::global_exhaustive(), RngStream::new(0, 0))
            .unwrap();
        for m in [1, 5, 20] {
            let r = global_uniform_error(&truth, &model, &PolicyClassSpec::global_sampled(m), RngStream::new(7, m as u64))
                .unwrap();
            assert!(r.flags.lower_bound);
            assert!(r.sup_error <= full.sup_error);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let (truth, model) = fitted(1, 3, 3, 3, 10);
        let spec = PolicyClassSpec {
            enumeration_cap: 1000,
            ..PolicyClassSpec::global_exhaustive()
        };
        assert_eq!(
            global_uniform_error(&truth, &model, &spec, RngStream::new(0, 0)).unwrap_err(),
            Error::EnumerationCap { size: 19683, cap: 1000 }
        );
    }

    #[test]
    fn range_chunks_merge_to_the_full_result() {
        let (truth, model) = fitted(8, 2, 2, 3, 25);
        let empirical = model.to_mdp().unwrap();
        let full = global_error_range(&truth, &empirical, 0..64, true).unwrap();
        let merged = global_error_range(&truth, &empirical, 0..10, true)
            .unwrap()
            .merge(global_error_range(&truth, &empirical, 10..40, true).unwrap())
            .merge(global_error_range(&truth, &empirical, 40..64, true).unwrap());
        assert_eq!(full, merged);
    }

    #[test]
    fn empirical_optimum_dominates_random_policies() {
        let (_, model) = fitted(11, 3, 2, 4, 60);
        let (star, values) = empirical_optimal(&model).unwrap();
        let empirical = model.to_mdp().unwrap();
        for seed in 0..500 {
            let sigma = random_policy(1000 + seed, 4, 3, 2);
            let v = evaluate_policy(&empirical, &sigma).unwrap();
            for h in 0..4 {
                for s in 0..3 {
                    assert!(values.value(h, s) >= v.value(h, s) - 1e-12);
                }
            }
        }
        assert!(star.is_deterministic());
    }

    #[test]
    fn exact_model_optimum_is_truly_optimal() {
        let truth = dyadic_mdp();
        let (star, _) = empirical_optimal(&exact_model(&truth, 8.0)).unwrap();
        assert!(learning_suboptimality(&truth, &star).unwrap().iter().all(|&x| x.abs() <= 1e-12));
    }

    #[test]
    fn single_action_has_one_policy() {
        let (truth, model) = fitted(2, 3, 1, 3, 20);
        let (star, _) = empirical_optimal(&model).unwrap();
        assert_eq!(star, Policy::uniform(3, 3, 1));
        let sample = sample_local_class(&model, 1.0, 10, RngStream::new(0, 0)).unwrap();
        assert_eq!(sample.policies, vec![star]);
        assert!(sample.exhausted);
        let r = global_uniform_error(&truth, &model, &PolicyClassSpec::global_exhaustive(), RngStream::new(0, 0))
            .unwrap();
        assert_eq!(r.class_size_examined, 1);
    }

    #[test]
    fn zero_radius_keeps_only_value_equivalent_policies() {
        let (_, model) = fitted(4, 3, 2, 3, 50);
        let sample = sample_local_class(&model, 0.0, 20, RngStream::new(3, 0)).unwrap();
        let (star, values) = empirical_optimal(&model).unwrap();
        assert_eq!(sample.policies[0], star);
        let empirical = model.to_mdp().unwrap();
        for pi in &sample.policies {
            assert!(local_gap(&empirical, &values, pi).unwrap() <= MEMBERSHIP_TOL);
        }
    }

    #[test]
    fn maximal_radius_accepts_everything() {
        let (truth, model) = fitted(6, 3, 2, 3, 50);
        let sample = sample_local_class(&model, 3.0, 40, RngStream::new(9, 0)).unwrap();
        assert_eq!(sample.accepted, sample.drawn);
        assert!(!sample.exhausted);
        assert_eq!(sample.policies.len(), 40);
        let r = local_uniform_error(&truth, &model, &sample.policies, 3.0, false).unwrap();
        assert!(r.flags.eps_outside_regime);
        assert_eq!(r.class_size_examined, 40);
    }

    #[test]
    fn returned_local_policies_re_verify() {
        let (truth, model) = fitted(12, 4, 3, 3, 80);
        let eps = 0.3;
        let sample = sample_local_class(&model, eps, 30, RngStream::new(1, 2)).unwrap();
        let again = local_uniform_error(&truth, &model, &sample.policies, eps, true).unwrap();
        assert_eq!(again.per_policy_errors.unwrap().len(), sample.policies.len());
        let keys: BTreeSet<_> = sample.policies.iter().map(policy_key).collect();
        assert_eq!(keys.len(), sample.policies.len());
    }

    #[test]
    fn local_membership_violation_is_reported() {
        let (truth, model) = fitted(13, 3, 2, 3, 50);
        let (star, values) = empirical_optimal(&model).unwrap();
        let empirical = model.to_mdp().unwrap();
        let worst = (0..64u128)
            .map(|i| Policy::enumerate(3, 3, 2, i))
            .max_by(|x, y| {
                let gx = local_gap(&empirical, &values, x).unwrap();
                let gy = local_gap(&empirical, &values, y).unwrap();
                gx.partial_cmp(&gy).unwrap()
            })
            .unwrap();
        let gap = local_gap(&empirical, &values, &worst).unwrap();
        assert!(gap > 0.0);
        let err = local_uniform_error(&truth, &model, &[star, worst], gap / 2.0, false).unwrap_err();
        assert!(matches!(err, Error::NotInLocalClass { index: 1, .. }));
    }

    #[test]
    fn singleton_local_list_is_pointwise_error() {
        let (truth, model) = fitted(14, 3, 2, 3, 50);
        let (star, _) = empirical_optimal(&model).unwrap();
        let r = local_uniform_error(&truth, &model, &[star.clone()], 0.0, false).unwrap();
        let direct = policy_error(&truth, &model.to_mdp().unwrap(), &star).unwrap();
        assert_eq!(r.sup_error, direct);
    }

    #[test]
    fn worst_bandit_action_costs_one() {
        let truth = TabularMdp::new(1, 2, 1, vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0]).unwrap();
        let optimal = Policy::deterministic(1, 1, 2, &[0]).unwrap();
        let bad = Policy::deterministic(1, 1, 2, &[1]).unwrap();
        assert_eq!(learning_suboptimality(&truth, &optimal).unwrap(), vec![0.0]);
        assert_eq!(learning_suboptimality(&truth, &bad).unwrap(), vec![1.0]);
    }

    fn binary_brute_force(p: &[f64], q: &[f64]) -> f64 {
        (0..1u32 << p.len())
            .map(|mask| {
                (0..p.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| p[i] - q[i])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn binary_sup_small_cases() {
        assert_eq!(binary_reward_sup(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        let (p, q) = ([0.7, 0.3], [0.5, 0.5]);
        assert_abs_diff_eq!(binary_reward_sup(&p, &q), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_brute_force(&p, &q), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(0.5 * l1_distance(&p, &q), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn binary_sup_matches_enumeration() {
        let mut rng = RngStream::new(42, 0).rng();
        for s in 1..=12 {
            for _ in 0..5 {
                let p = crate::rng::uniform_simplex(&mut rng, s);
                let q = crate::rng::uniform_simplex(&mut rng, s);
                assert_abs_diff_eq!(binary_reward_sup(&p, &q), binary_brute_force(&p, &q), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hand_set_lower_bound_chain() {
        // truth rows are dyadic; counts give P̂ with known deviations
        let truth = TabularMdp::new(
            2,
            2,
            2,
            vec![0.5, 0.5, 0.25, 0.75, 1.0, 0.0, 0.5, 0.5],
            vec![0.0; 4],
            vec![0.5, 0.5],
        )
        .unwrap();
        let model = EmpiricalModel::from_counts(2, 2, 2, vec![3, 1, 1, 3, 3, 1, 0, 4], vec![1, 1], vec![0.0; 4])
            .unwrap();
        let demo = lower_bound_demo(&truth, &model, DEFAULT_ENUMERATION_CAP).unwrap();
        // |P̂ − P| rows: 0.25, 0, 0.25, 0.5 in half-l1
        assert_abs_diff_eq!(demo.half_l1_sup, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(demo.binary_sup, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(demo.sup_error, 0.5, epsilon = 1e-12);
        assert!(demo.chain_holds && demo.matches_binary);
    }

    #[test]
    fn lower_bound_demo_needs_two_steps_and_two_actions() {
        let (truth, model) = fitted(1, 2, 2, 3, 10);
        assert_eq!(lower_bound_demo(&truth, &model, 100).unwrap_err(), Error::HorizonNotTwo(3));
        let (truth, model) = fitted(1, 2, 1, 2, 10);
        assert!(matches!(lower_bound_demo(&truth, &model, 100), Err(Error::TooFewActions { .. })));
    }

    #[test]
    fn sandwich_on_random_instances() {
        for seed in 0..20 {
            let (truth, model) = fitted(100 + seed, 2, 2, 3, 20);
            let (star, _) = empirical_optimal(&model).unwrap();
            let gap = learning_suboptimality(&truth, &star).unwrap().into_iter().fold(0.0, f64::max);
            let sup = global_uniform_error(&truth, &model, &PolicyClassSpec::global_exhaustive(), RngStream::new(0, 0))
                .unwrap()
                .sup_error;
            assert!(gap >= -1e-12 && gap <= 2.0 * sup + 1e-12, "seed {seed}: {gap} vs {sup}");
        }
    }
}
