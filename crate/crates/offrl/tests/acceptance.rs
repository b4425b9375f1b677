//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use offrl::sweep::{
    cell_stream, csv_bytes, fit_rate, group_by_n, purpose, replicate_stream, reward_purpose, run_sweep, AnchorSource,
    Metric, Row, SweepConfig,
};
use offrl_core::absorbing::{q_diff_bound_check, verify_singleton_identity};
use offrl_core::anchor::{recover_lemma_check, AnchorModel};
use offrl_core::instance::{generate_anchor_instance, generate_instance, AnchorInstanceSpec, InstanceFamily, InstanceSpec};
use offrl_core::mdp::FiniteHorizon;
use offrl_core::multitask::{task_agnostic_learn, RewardSet};
use offrl_core::ope::{binary_reward_sup, empirical_optimal, global_error_range, learning_suboptimality, lower_bound_demo};
use offrl_core::rate::RateFit;
use offrl_core::rng::uniform_simplex;
use offrl_core::{
    evaluate_policy, fit_plugin, plan_optimal, roll_episodes, Policy, RngStream, TabularMdp,
};
use rand::Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn random_mdp(seed: u64, s: usize, a: usize, h: usize) -> TabularMdp {
    generate_instance(&InstanceSpec {
        num_states: s,
        num_actions: a,
        horizon: h,
        seed,
        family: InstanceFamily::DirichletRandom,
    })
    .unwrap()
    .0
}

fn random_policy(seed: u64, h: usize, s: usize, a: usize) -> Policy {
    let mut rng = RngStream::new(seed, 99).rng();
    let probs = (0..h * s).flat_map(|_| uniform_simplex(&mut rng, a)).collect();
    Policy::new(h, s, a, probs).unwrap()
}

/// Expected return from `start` by summing probability × return over every
/// `(a_0, s_1, a_1, …, s_{H−1}, a_{H−1})` path.
fn path_enumeration_value(mdp: &TabularMdp, pi: &Policy, start: usize) -> f64 {
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let branches = a_n.pow(h_n as u32) * s_n.pow(h_n as u32 - 1);
    let mut total = 0.0;
    for code in 0..branches {
        let mut rest = code;
        let (mut state, mut prob, mut ret) = (start, 1.0, 0.0);
        for t in 0..h_n {
            let action = rest % a_n;
            rest /= a_n;
            prob *= pi.prob(t, state, action);
            ret += mdp.reward_of(state, action);
            if t + 1 < h_n {
                let next = rest % s_n;
                rest /= s_n;
                prob *= mdp.transition(state, action)[next];
                state = next;
            }
        }
        total += prob * ret;
    }
    total
}

fn criterion_1() -> Verdict {
    let shapes = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (1, 4), (3, 1), (4, 1)];
    let mut worst_eval: f64 = 0.0;
    let mut worst_plan: f64 = 0.0;
    for k in 0..20u64 {
        let (s, a) = shapes[k as usize % shapes.len()];
        let h = 1 + (k as usize % 3);
        let mdp = random_mdp(1000 + k, s, a, h);
        let pi = random_policy(k, h, s, a);
        let values = evaluate_policy(&mdp, &pi).unwrap();
        for st in 0..s {
            worst_eval = worst_eval.max((values.value(0, st) - path_enumeration_value(&mdp, &pi, st)).abs());
        }
        let (opt, _) = plan_optimal(&mdp);
        let count = (a as u128).pow((s * h) as u32);
        for st in 0..s {
            let best = (0..count)
                .map(|i| path_enumeration_value(&mdp, &Policy::enumerate(h, s, a, i), st))
                .fold(f64::NEG_INFINITY, f64::max);
            worst_plan = worst_plan.max((opt.value(0, st) - best).abs());
        }
    }
    Verdict::new(
        worst_eval <= 1e-12 && worst_plan <= 1e-12,
        format!("max |eval − paths| = {worst_eval:.2e}, max |plan − best policy| = {worst_plan:.2e}"),
    )
}

struct AbsorbingStats {
    worst_true: f64,
    worst_empirical: f64,
    all_monotone: bool,
    worst_absorbing_value: f64,
    states_checked: usize,
}

fn absorbing_instances() -> AbsorbingStats {
    let mut stats = AbsorbingStats {
        worst_true: 0.0,
        worst_empirical: 0.0,
        all_monotone: true,
        worst_absorbing_value: 0.0,
        states_checked: 0,
    };
    for k in 0..50u64 {
        let s = 1 + (k as usize % 6);
        let a = 1 + (k as usize / 6 % 3);
        let h = 1 + (k as usize * 7 % 8);
        let mdp = random_mdp(2000 + k, s, a, h);
        let mu = Policy::uniform(h, s, a);
        let data = roll_episodes(&mdp, &mu, 40, RngStream::new(k, 1)).unwrap();
        let empirical = fit_plugin(&data, &mdp).unwrap().to_mdp().unwrap();
        for st in 0..s {
            for (model, worst) in [(&mdp, &mut stats.worst_true), (&empirical, &mut stats.worst_empirical)] {
                let r = verify_singleton_identity(model, st).unwrap();
                *worst = worst.max(r.max_deviation);
                stats.all_monotone &= r.monotone;
                stats.worst_absorbing_value = stats.worst_absorbing_value.max(r.absorbing_value_deviation);
            }
            stats.states_checked += 1;
        }
    }
    stats
}

fn criterion_2(stats: &AbsorbingStats) -> Verdict {
    Verdict::new(
        stats.worst_true < 1e-10 && stats.worst_empirical < 1e-10,
        format!(
            "{} states; max deviation true {:.2e}, empirical {:.2e}",
            stats.states_checked, stats.worst_true, stats.worst_empirical
        ),
    )
}

fn criterion_3(stats: &AbsorbingStats) -> Verdict {
    let mut rng = RngStream::new(3, 0).rng();
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for k in 0..100u64 {
        let s = rng.random_range(1..=6);
        let a = rng.random_range(1..=3);
        let h = rng.random_range(1..=8);
        let mdp = random_mdp(3000 + k, s, a, h);
        let u: Vec<f64> = (0..h).map(|_| rng.random::<f64>()).collect();
        let u2: Vec<f64> = (0..h).map(|_| rng.random::<f64>()).collect();
        let r = q_diff_bound_check(&mdp, rng.random_range(0..s), &u, &u2).unwrap();
        violations += usize::from(!r.holds);
        tightest = tightest.max(r.ratio);
    }
    Verdict::new(
        stats.all_monotone && stats.worst_absorbing_value <= 1e-12 && violations == 0,
        format!(
            "monotone everywhere: {}; max absorbing-value deviation {:.2e}; Lipschitz violations {violations}/100 (tightest ratio {tightest:.3})",
            stats.all_monotone, stats.worst_absorbing_value
        ),
    )
}

fn binary_brute_force(p: &[f64], q: &[f64]) -> f64 {
    (0u32..1 << p.len())
        .map(|mask| {
            p.iter()
                .zip(q)
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, (x, y))| x - y)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

fn criterion_4() -> Verdict {
    let mut rng = RngStream::new(4, 0).rng();
    let mut worst_closed: f64 = 0.0;
    for k in 0..100 {
        let s = 1 + k % 12;
        let p = uniform_simplex(&mut rng, s);
        let q = uniform_simplex(&mut rng, s);
        worst_closed = worst_closed.max((binary_reward_sup(&p, &q) - binary_brute_force(&p, &q)).abs());
    }
    let (truth, mu) = generate_instance(&InstanceSpec {
        num_states: 4,
        num_actions: 2,
        horizon: 2,
        seed: 4,
        family: InstanceFamily::NearUniform,
    })
    .unwrap();
    let (mut demo_ok, mut worst_match, mut min_margin) = (0, 0.0f64, f64::INFINITY);
    for r in 0..20 {
        let data = roll_episodes(&truth, &mu, 200, RngStream::new(4, 1).child(r)).unwrap();
        let report = lower_bound_demo(&truth, &fit_plugin(&data, &truth).unwrap(), u64::MAX).unwrap();
        demo_ok += usize::from(report.chain_holds && report.matches_binary);
        worst_match = worst_match.max((report.sup_error - report.binary_sup).abs());
        min_margin = min_margin.min(report.sup_error - report.half_l1_sup);
    }
    Verdict::new(
        worst_closed <= 1e-12 && demo_ok == 20,
        format!(
            "closed form vs brute force max gap {worst_closed:.2e}; demo {demo_ok}/20 (max |sup − binary| {worst_match:.2e}, min sup − ½ℓ1 {min_margin:.2e})"
        ),
    )
}

fn slope_in(fit: &RateFit, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&fit.slope)
}

fn describe(name: &str, fit: &RateFit) -> String {
    format!("{name} slope {:.3} r² {:.3}", fit.slope, fit.r_squared)
}

fn default_sweep() -> SweepConfig {
    SweepConfig::default_rate_sweep(0, vec![Metric::LocalOpe, Metric::Suboptimality, Metric::L1Row])
}

fn criterion_5(rows: &[Row]) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for metric in ["local_ope", "suboptimality", "l1_row"] {
        match fit_rate(rows, metric) {
            Ok(fit) => {
                passed &= slope_in(&fit, -0.6, -0.4) && fit.r_squared >= 0.95;
                parts.push(describe(metric, &fit));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{metric}: {e}"));
            }
        }
    }
    Verdict::new(passed, parts.join("; "))
}

fn criterion_6() -> Verdict {
    // near ties, so the empirical optimum is often wrong and the bound is exercised
    let (truth, mu) = generate_instance(&InstanceSpec {
        num_states: 2,
        num_actions: 2,
        horizon: 3,
        seed: 6,
        family: InstanceFamily::NearUniform,
    })
    .unwrap();
    let grid = [8usize, 32, 128, 512];
    let (mut violations, mut replicates, mut tightest) = (0, 0, 0.0f64);
    for (i, &n) in grid.iter().enumerate() {
        for r in 0..100 {
            let data = roll_episodes(&truth, &mu, n, cell_stream(6, i, r).child(purpose::DATASET)).unwrap();
            let model = fit_plugin(&data, &truth).unwrap();
            let sup = global_error_range(&truth, &model.to_mdp().unwrap(), 0..64, false).unwrap().sup_error;
            let (pi_hat, _) = empirical_optimal(&model).unwrap();
            let gaps = learning_suboptimality(&truth, &pi_hat).unwrap();
            let worst = gaps.iter().copied().fold(0.0, f64::max);
            if gaps.iter().any(|&g| g < 0.0) || worst > 2.0 * sup {
                violations += 1;
            }
            if sup > 0.0 {
                tightest = tightest.max(worst / (2.0 * sup));
            }
            replicates += 1;
        }
    }
    Verdict::new(
        violations == 0 && replicates == 400,
        format!("{violations} violations over {replicates} replicates (largest suboptimality / 2·sup = {tightest:.3})"),
    )
}

fn multitask_sweep() -> SweepConfig {
    SweepConfig::default_rate_sweep(0, vec![Metric::TaskAgnostic, Metric::RewardFree])
}

fn criterion_7(cfg: &SweepConfig, rows: &[Row]) -> Verdict {
    // replay one replicate per n through K independent single-task pipelines
    let (truth, behavior) = offrl::sweep::load_truth(cfg, cfg.mdp.as_ref().unwrap(), None).unwrap();
    let (s_n, a_n) = (truth.num_states(), truth.num_actions());
    let mut identical = true;
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let data = roll_episodes(&truth, &behavior, n, cell_stream(cfg.base_seed, i, 0).child(purpose::DATASET)).unwrap();
        let rewards = cfg.task_rewards.draw(
            replicate_stream(cfg.base_seed, 0).child(reward_purpose::TASK_REWARDS),
            cfg.tasks,
            s_n,
            a_n,
        );
        let set = RewardSet::new(s_n, a_n, rewards.clone(), None).unwrap();
        let joint = task_agnostic_learn(&data, &set, &truth).unwrap();
        for (outcome, r) in joint.iter().zip(&rewards) {
            let task_truth = truth.with_reward(r.clone()).unwrap();
            let single = fit_plugin(&data, &task_truth).unwrap();
            let (pi, _) = empirical_optimal(&single).unwrap();
            let sub = learning_suboptimality(&task_truth, &pi).unwrap();
            identical &= outcome.policy == pi && outcome.suboptimality == sub;
        }
        let worst = joint.iter().map(|o| o.worst()).fold(0.0, f64::max);
        let row = rows.iter().find(|r| r.metric == "task_agnostic" && r.n == n && r.replicate == 0).unwrap();
        identical &= row.value.to_bits() == worst.to_bits();
    }
    match fit_rate(rows, "task_agnostic") {
        Ok(fit) => Verdict::new(
            identical && slope_in(&fit, -0.6, -0.4),
            format!("K = {}; per-task bit-identical: {identical}; {}", cfg.tasks, describe("max-over-k", &fit)),
        ),
        Err(e) => Verdict::new(false, format!("task_agnostic: {e}")),
    }
}

fn criterion_8(cfg: &SweepConfig, rows: &[Row]) -> Verdict {
    let lowest = group_by_n(rows, "reward_free_min")
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(f64::INFINITY, f64::min);
    match fit_rate(rows, "reward_free") {
        Ok(fit) => Verdict::new(
            slope_in(&fit, -0.65, -0.35) && lowest >= 0.0,
            format!(
                "{} rewards per model; {}; min suboptimality over all planned policies {lowest:.2e}",
                cfg.reward_free_draws,
                describe("worst-case", &fit)
            ),
        ),
        Err(e) => Verdict::new(false, format!("reward_free: {e}")),
    }
}

fn anchor_sweep() -> SweepConfig {
    SweepConfig {
        mdp: None,
        metrics: vec![Metric::Anchor],
        anchor: Some(AnchorSource::Generate {
            num_states: 20,
            num_actions: 2,
            horizon: 3,
            anchors: 6,
            top_gap: None,
            gap_ratio: None,
            spread: None,
            seed: 0,
        }),
        anchor_redraw: true,
        reward_redraw: None,
        ..SweepConfig::default_rate_sweep(0, vec![])
    }
}

fn criterion_9(rows: &[Row]) -> Verdict {
    let mdp = generate_anchor_instance(&AnchorInstanceSpec::default()).unwrap();
    let mut model = AnchorModel::sample_anchors(&mdp, 1000, RngStream::new(9, 0)).unwrap();
    model.resolve_lambdas(&mdp).unwrap();
    let mut worst_row: f64 = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let row = model.plugin_transition(s, a).unwrap();
            let negative = row.iter().any(|&p| p < 0.0);
            worst_row = worst_row.max(if negative { f64::INFINITY } else { (row.iter().sum::<f64>() - 1.0).abs() });
        }
    }
    let mut rng = RngStream::new(9, 1).rng();
    let mut violations = 0;
    for _ in 0..500 {
        let (s, a) = (rng.random_range(0..mdp.num_states()), rng.random_range(0..mdp.num_actions()));
        let values: Vec<f64> = (0..mdp.num_states())
            .map(|_| mdp.horizon() as f64 * rng.random::<f64>())
            .collect();
        violations += usize::from(!recover_lemma_check(&mdp, s, a, &values).unwrap().holds);
    }
    match fit_rate(rows, "anchor") {
        Ok(fit) => Verdict::new(
            worst_row <= 1e-9 && violations == 0 && slope_in(&fit, -0.6, -0.4),
            format!(
                "max |row sum − 1| {worst_row:.2e}; recover violations {violations}/500; {}",
                describe("N-sweep", &fit)
            ),
        ),
        Err(e) => Verdict::new(false, format!("anchor: {e}")),
    }
}

fn criterion_10(runs: &[(&str, &SweepConfig, &[Row])]) -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    for (name, cfg, first) in runs {
        let again = run_sweep(cfg).unwrap();
        let same = csv_bytes(first).unwrap() == csv_bytes(&again).unwrap();
        passed &= same;
        parts.push(format!("{name}: {}", if same { "identical" } else { "DIFFERENT" }));
    }
    Verdict::new(passed, parts.join(", "))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn report(id: u32, title: &str, budget: Option<Duration>, (verdict, took): (Verdict, Duration)) -> bool {
    let in_budget = budget.is_none_or(|b| took <= b);
    let passed = verdict.passed && in_budget;
    let budget_note = match budget {
        Some(b) if !in_budget => format!(", over budget {:.0} s", b.as_secs_f64()),
        _ => String::new(),
    };
    println!(
        "{} criterion {id:>2} {title}: {} [{:.1} s{budget_note}]",
        if passed { "PASS" } else { "FAIL" },
        verdict.detail,
        took.as_secs_f64()
    );
    passed
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut all = true;

    all &= report(1, "exact DP oracles", Some(secs(10)), timed(criterion_1));
    let (stats, absorbing_time) = timed(absorbing_instances);
    all &= report(2, "singleton-absorbing identity", Some(secs(60)), (criterion_2(&stats), absorbing_time));
    all &= report(3, "monotonicity, absorbing value, Lipschitz", None, timed(|| criterion_3(&stats)));
    all &= report(4, "binary-reward reduction", Some(secs(30)), timed(criterion_4));

    let rate_cfg = default_sweep();
    let (rate_rows, rate_time) = timed(|| run_sweep(&rate_cfg).unwrap());
    all &= report(5, "rate law in n", Some(secs(600)), (criterion_5(&rate_rows), rate_time));
    all &= report(6, "sandwich bound", None, timed(criterion_6));

    let multi_cfg = multitask_sweep();
    let (multi_rows, multi_time) = timed(|| run_sweep(&multi_cfg).unwrap());
    let (v7, t7) = timed(|| criterion_7(&multi_cfg, &multi_rows));
    all &= report(7, "task-agnostic", None, (v7, multi_time + t7));
    all &= report(8, "reward-free", None, timed(|| criterion_8(&multi_cfg, &multi_rows)));

    let anchor_cfg = anchor_sweep();
    let (anchor_rows, anchor_time) = timed(|| run_sweep(&anchor_cfg).unwrap());
    let (v9, t9) = timed(|| criterion_9(&anchor_rows));
    all &= report(9, "anchor module", Some(secs(300)), (v9, anchor_time + t9));

    let runs: [(&str, &SweepConfig, &[Row]); 3] = [
        ("rate sweep", &rate_cfg, &rate_rows),
        ("multitask sweep", &multi_cfg, &multi_rows),
        ("anchor sweep", &anchor_cfg, &anchor_rows),
    ];
    all &= report(10, "determinism", None, timed(|| criterion_10(&runs)));

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
