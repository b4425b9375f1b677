//! Linear MDPs with anchor state-action pairs under a generative oracle.
//!
//! Transitions factor as `P(s'|s,a) = Σ_k φ_k(s,a) ψ_k(s')`, and every feature
//! `φ(s,a)` is a convex combination of the features of a few anchor pairs.
//! Sampling only the anchor rows and reusing the coefficients gives a
//! transition estimate for every pair.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{
    check_distribution, check_len, check_reward, evaluate_policy, plan_optimal, FiniteHorizon,
    Policy, TabularMdp,
};
use crate::num::{dot, sqrt, sup_distance, variance};
use crate::rng::{sample_categorical, RngStream};

/// Largest accepted `‖Σ_k λ_k φ_k − φ‖_2`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Row-sum tolerance for `φψ`.
pub const FACTOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLinearMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    feature_dim: usize,
    /// `[s][a][k]`.
    phi: Vec<f64>,
    /// `[k][s']`.
    psi: Vec<f64>,
    anchors: Vec<(usize, usize)>,
    reward: Vec<f64>,
    /// `φψ`, cached as `[s][a][s']`.
    transition: Vec<f64>,
}

impl AnchorLinearMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        feature_dim: usize,
        phi: Vec<f64>,
        psi: Vec<f64>,
        anchors: Vec<(usize, usize)>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 || feature_dim == 0 {
            return Err(Error::Empty("anchor MDP dimension"));
        }
        if anchors.is_empty() {
            return Err(Error::Empty("anchor count"));
        }
        let (s_n, a_n, d) = (num_states, num_actions, feature_dim);
        check_len("phi entries", s_n * a_n * d, phi.len())?;
        check_len("psi entries", d * s_n, psi.len())?;
        check_len("reward entries", s_n * a_n, reward.len())?;
        check_reward(&reward, a_n, 0.0, 1.0)?;
        for (i, &(s, a)) in anchors.iter().enumerate() {
            for (idx, limit, what) in [(s, s_n, "state"), (a, a_n, "action")] {
                if idx >= limit {
                    return Err(Error::IndexOutOfRange {
                        path: alloc::format!("anchors[{i}].{what}"),
                        index: idx,
                        limit,
                    });
                }
            }
        }
        let mut transition = vec![0.0; s_n * a_n * s_n];
        for pair in 0..s_n * a_n {
            let f = &phi[pair * d..(pair + 1) * d];
            let row = &mut transition[pair * s_n..(pair + 1) * s_n];
            for (k, &w) in f.iter().enumerate() {
                for (p, &q) in row.iter_mut().zip(&psi[k * s_n..(k + 1) * s_n]) {
                    *p += w * q;
                }
            }
            // tiny negatives from cancellation are clipped before validation
            row.iter_mut().for_each(|p| {
                if *p < 0.0 && *p > -FACTOR_TOL {
                    *p = 0.0
                }
            });
            check_distribution(
                &alloc::format!("phi·psi[{}][{}]", pair / a_n, pair % a_n),
                row,
                FACTOR_TOL,
            )?;
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            feature_dim,
            phi,
            psi,
            anchors,
            reward,
            transition,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
    pub fn anchors(&self) -> &[(usize, usize)] {
        &self.anchors
    }
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn feature(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.feature_dim;
        &self.phi[start..start + self.feature_dim]
    }

    pub fn anchor_features(&self) -> Vec<&[f64]> {
        self.anchors.iter().map(|&(s, a)| self.feature(s, a)).collect()
    }

    /// The true MDP with a uniform initial distribution (values are compared
    /// state-wise, so the initial distribution never matters here).
    pub fn to_tabular(&self) -> Result<TabularMdp> {
        let s_n = self.num_states;
        TabularMdp::new(
            s_n,
            self.num_actions,
            self.horizon,
            self.transition.clone(),
            self.reward.clone(),
            vec![1.0 / s_n as f64; s_n],
        )
    }
}

impl FiniteHorizon for AnchorLinearMdp {
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
    fn reward(&self, _step: usize, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }
}

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-14` relative to the matrix scale.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    Some(x)
}

/// Minimizes `½λᵀQλ − cᵀλ` over the affine hull of the anchors in `support`
/// (`Σλ = 1`). A tiny ridge is added when the anchors there are dependent.
fn equality_step(q: &[f64], c: &[f64], k: usize, support: &[usize]) -> Vec<f64> {
    let m = support.len();
    let build = |ridge: f64| {
        let n = m + 1;
        let mut mat = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for (i, &si) in support.iter().enumerate() {
            for (j, &sj) in support.iter().enumerate() {
                mat[i * n + j] = q[si * k + sj];
            }
            mat[i * n + i] += ridge;
            mat[i * n + m] = 1.0;
            mat[m * n + i] = 1.0;
            rhs[i] = c[si];
        }
        rhs[m] = 1.0;
        (mat, rhs)
    };
    let trace: f64 = support.iter().map(|&i| q[i * k + i]).sum::<f64>().max(1e-300);
    let mut ridge = 0.0;
    loop {
        let (mat, rhs) = build(ridge);
        if let Some(x) = solve_linear(mat, rhs) {
            return x[..m].to_vec();
        }
        ridge = if ridge == 0.0 { 1e-14 * trace } else { ridge * 100.0 };
    }
}

/// Simplex weights `λ` minimizing `‖Σ_k λ_k φ_k − target‖_2`, by a primal
/// active-set method. Fails with [`Error::NotRepresentable`] when the best
/// residual exceeds [`RESIDUAL_TOL`].
pub fn solve_lambda(anchors_phi: &[&[f64]], target: &[f64]) -> Result<Vec<f64>> {
    let (lambda, residual) = simplex_least_squares(anchors_phi, target)?;
    if residual > RESIDUAL_TOL {
        return Err(Error::NotRepresentable { residual });
    }
    Ok(lambda)
}

/// The unconstrained-acceptance core of [`solve_lambda`]: best simplex weights
/// and their residual norm.
pub fn simplex_least_squares(anchors_phi: &[&[f64]], target: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = anchors_phi.len();
    if k == 0 {
        return Err(Error::Empty("anchor count"));
    }
    for f in anchors_phi {
        check_len("anchor feature dimension", target.len(), f.len())?;
    }
    let mut q = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            q[i * k + j] = dot(anchors_phi[i], anchors_phi[j]);
        }
    }
    let c: Vec<f64> = anchors_phi.iter().map(|f| dot(f, target)).collect();
    let residual_of = |lambda: &[f64]| {
        let mut r: Vec<f64> = target.iter().map(|t| -t).collect();
        for (f, &w) in anchors_phi.iter().zip(lambda) {
            for (ri, fi) in r.iter_mut().zip(f.iter()) {
                *ri += w * fi;
            }
        }
        sqrt(dot(&r, &r))
    };

    // feasible start at the single best anchor
    let start = (0..k)
        .min_by(|&i, &j| {
            let mut ei = vec![0.0; k];
            ei[i] = 1.0;
            let mut ej = vec![0.0; k];
            ej[j] = 1.0;
            residual_of(&ei).total_cmp(&residual_of(&ej))
        })
        .expect("at least one anchor");
    let mut lambda = vec![0.0; k];
    lambda[start] = 1.0;
    let mut support = vec![start];
    let gradient = |lambda: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| dot(&q[i * k..(i + 1) * k], lambda) - c[i])
            .collect()
    };
    let scale = q.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let tol = 1e-13 * scale;

    for _ in 0..100 * (k + 1) {
        let z = equality_step(&q, &c, k, &support);
        if z.iter().all(|&v| v > 0.0) {
            for (&i, &v) in support.iter().zip(&z) {
                lambda[i] = v;
            }
            let g = gradient(&lambda);
            let level = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
            let entering = (0..k)
                .filter(|i| !support.contains(i))
                .map(|i| (i, g[i] - level))
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match entering {
                Some((i, m)) if m < -tol => support.push(i),
                _ => break,
            }
        } else {
            // move toward z until the first support weight hits zero
            let mut alpha: f64 = 1.0;
            for (&i, &v) in support.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(lambda[i] / (lambda[i] - v));
                }
            }
            for (&i, &v) in support.iter().zip(&z) {
                lambda[i] += alpha * (v - lambda[i]);
            }
            support.retain(|&i| lambda[i] > 1e-15);
            for i in 0..k {
                if !support.contains(&i) {
                    lambda[i] = 0.0;
                }
            }
            if support.is_empty() {
                support.push(start);
                lambda[start] = 1.0;
            }
        }
    }
    // renormalize away round-off so λ sits exactly on the simplex
    lambda.iter_mut().for_each(|w| *w = w.max(0.0));
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|w| *w /= total);
    let residual = residual_of(&lambda);
    Ok((lambda, residual))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorModel {
    num_states: usize,
    num_actions: usize,
    /// Empirical anchor rows `[k][s']`.
    anchor_rows: Vec<f64>,
    /// Draws per anchor; `None` for exact rows.
    samples_per_anchor: Option<usize>,
    /// Simplex weights per pair, `[s][a]`, once resolved.
    lambdas: Vec<Option<Vec<f64>>>,
}

impl AnchorModel {
    /// Draws `n` next states from each anchor row; anchor `k` uses
    /// `stream.child(k)`. Coefficients are left unresolved.
    pub fn sample_anchors(mdp: &AnchorLinearMdp, n: usize, stream: RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("samples per anchor"));
        }
        let s_n = mdp.num_states;
        let mut anchor_rows = vec![0.0; mdp.anchors.len() * s_n];
        for (k, &(s, a)) in mdp.anchors.iter().enumerate() {
            let mut rng = stream.child(k as u64).rng();
            let probs = mdp.transition(s, a);
            let mut counts = vec![0u64; s_n];
            for _ in 0..n {
                counts[sample_categorical(&mut rng, probs)] += 1;
            }
            for (p, c) in anchor_rows[k * s_n..(k + 1) * s_n].iter_mut().zip(counts) {
                *p = c as f64 / n as f64;
            }
        }
        Ok(Self {
            num_states: s_n,
            num_actions: mdp.num_actions,
            anchor_rows,
            samples_per_anchor: Some(n),
            lambdas: vec![None; s_n * mdp.num_actions],
        })
    }

    /// True anchor rows with every coefficient resolved.
    pub fn exact(mdp: &AnchorLinearMdp) -> Result<Self> {
        let anchor_rows = mdp
            .anchors
            .iter()
            .flat_map(|&(s, a)| mdp.transition(s, a).iter().copied())
            .collect();
        let mut model = Self {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            anchor_rows,
            samples_per_anchor: None,
            lambdas: vec![None; mdp.num_states * mdp.num_actions],
        };
        model.resolve_lambdas(mdp)?;
        Ok(model)
    }

    /// Solves for every pair's coefficients against the anchor features.
    pub fn resolve_lambdas(&mut self, mdp: &AnchorLinearMdp) -> Result<()> {
        self.lambdas = resolve_all(mdp)?.into_iter().map(Some).collect();
        Ok(())
    }

    /// Installs coefficients computed elsewhere (for instance, in parallel).
    pub fn set_lambdas(&mut self, lambdas: Vec<Vec<f64>>) -> Result<()> {
        check_len("coefficient pairs", self.num_states * self.num_actions, lambdas.len())?;
        let k = self.anchor_count();
        for l in &lambdas {
            check_len("coefficients per pair", k, l.len())?;
        }
        self.lambdas = lambdas.into_iter().map(Some).collect();
        Ok(())
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_rows.len() / self.num_states
    }

    pub fn anchor_row(&self, k: usize) -> &[f64] {
        &self.anchor_rows[k * self.num_states..(k + 1) * self.num_states]
    }

    pub fn samples_per_anchor(&self) -> Option<usize> {
        self.samples_per_anchor
    }

    pub fn lambda(&self, state: usize, action: usize) -> Option<&[f64]> {
        self.lambdas[state * self.num_actions + action].as_deref()
    }

    /// `P̂(·|s,a) = Σ_k λ_k^{s,a} P̂_k`.
    pub fn plugin_transition(&self, state: usize, action: usize) -> Result<Vec<f64>> {
        let lambda = self
            .lambda(state, action)
            .ok_or(Error::UnresolvedPair { state, action })?;
        let mut row = vec![0.0; self.num_states];
        for (k, &w) in lambda.iter().enumerate() {
            for (p, &q) in row.iter_mut().zip(self.anchor_row(k)) {
                *p += w * q;
            }
        }
        Ok(row)
    }

    /// The empirical MDP built from plug-in rows and the known reward.
    pub fn to_mdp(&self, mdp: &AnchorLinearMdp) -> Result<TabularMdp> {
        let mut transition = Vec::with_capacity(self.num_states * self.num_actions * self.num_states);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                transition.extend(self.plugin_transition(s, a)?);
            }
        }
        TabularMdp::new(
            self.num_states,
            self.num_actions,
            mdp.horizon,
            transition,
            mdp.reward.clone(),
            vec![1.0 / self.num_states as f64; self.num_states],
        )
    }
}

/// Coefficients for every pair, `[s][a]`.
pub fn resolve_all(mdp: &AnchorLinearMdp) -> Result<Vec<Vec<f64>>> {
    let anchors = mdp.anchor_features();
    let mut out = Vec::with_capacity(mdp.num_states * mdp.num_actions);
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            out.push(resolve_pair(mdp, &anchors, s, a)?);
        }
    }
    Ok(out)
}

/// Coefficients for one pair, with the pair named in the error.
pub fn resolve_pair(
    mdp: &AnchorLinearMdp,
    anchors: &[&[f64]],
    state: usize,
    action: usize,
) -> Result<Vec<f64>> {
    solve_lambda(anchors, mdp.feature(state, action)).map_err(|e| match e {
        Error::NotRepresentable { residual } => Error::UnrepresentablePair {
            state,
            action,
            residual,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPlanReport {
    /// `‖Q⋆_0 − Q^{π̂}_0‖_∞` on the true MDP.
    pub suboptimality: f64,
    pub samples_per_anchor: Option<usize>,
}

/// Plans on the plug-in MDP and scores the greedy policy on the truth.
pub fn anchor_plan(model: &AnchorModel, mdp: &AnchorLinearMdp) -> Result<(Policy, AnchorPlanReport)> {
    let empirical = model.to_mdp(mdp)?;
    let (_, pi_hat) = plan_optimal(&empirical);
    let (optimal, _) = plan_optimal(mdp);
    let achieved = evaluate_policy(mdp, &pi_hat)?;
    Ok((
        pi_hat,
        AnchorPlanReport {
            suboptimality: sup_distance(optimal.q(0), achieved.q(0)),
            samples_per_anchor: model.samples_per_anchor,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoverReport {
    /// `Σ_k λ_k √Var_{P_k}(V)`.
    pub lhs: f64,
    /// `√Var_{P(·|s,a)}(V)`.
    pub rhs: f64,
    pub holds: bool,
}

/// Mixing anchor rows cannot raise the averaged standard deviation above the
/// standard deviation of the mixture.
pub fn recover_lemma_check(
    mdp: &AnchorLinearMdp,
    state: usize,
    action: usize,
    values: &[f64],
) -> Result<RecoverReport> {
    check_len("value entries", mdp.num_states, values.len())?;
    let lambda = resolve_pair(mdp, &mdp.anchor_features(), state, action)?;
    let lhs = lambda
        .iter()
        .zip(&mdp.anchors)
        .map(|(w, &(s, a))| w * sqrt(variance(mdp.transition(s, a), values)))
        .sum();
    let rhs = sqrt(variance(mdp.transition(state, action), values));
    Ok(RecoverReport {
        lhs,
        rhs,
        holds: lhs <= rhs + crate::ACCUM_TOL,
    })
}
