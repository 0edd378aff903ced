//! Acceptance criteria 1-8. Each test prints one PASS/FAIL line to stderr
//! (uncaptured) before asserting.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::time::{Duration, Instant};

use common::{fixture, scenario, scenario_sized, script, seeded, GOLDEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reflexive::gateway::CostUnits;
use reflexive::harness::bootstrap::bootstrap_ci;
use reflexive::harness::{robustness_stats, ActionStats, RunRecord};
use reflexive::kernel::trace::trace_text;
use reflexive::kernel::{
    AblationMask, Capability, EventFlags, EvolutionResult, TerminationReason, TraceEvent, TraceKind,
};
use reflexive::policies::{majority_vote, PolicyError};
use reflexive::registry::Registry;
use reflexive::tasks::game24::{all_hands, Hand};
use reflexive::tasks::{game24_solve_bruteforce, game24_verify, score_answer, Gold, Scorer};

fn report(n: u32, failures: &[String], summary: &str) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    let mut line = format!("criterion {n}: {status} ({summary})");
    for f in failures.iter().take(5) {
        line.push_str(&format!("\n    {f}"));
    }
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(failures.is_empty(), "criterion {n} failed: {failures:?}");
}

fn check(failures: &mut Vec<String>, ok: bool, what: impl Into<String>) {
    if !ok {
        failures.push(what.into());
    }
}

// Exact fractions for the independent enumerator.
#[derive(Clone, Copy)]
struct Q(i64, i64);

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Q {
    fn norm(n: i64, d: i64) -> Q {
        let g = gcd(n, d).max(1);
        let s = if d < 0 { -1 } else { 1 };
        Q(s * n / g, s * d / g)
    }
    fn op(self, o: usize, b: Q) -> Option<Q> {
        Some(match o {
            0 => Q::norm(self.0 * b.1 + b.0 * self.1, self.1 * b.1),
            1 => Q::norm(self.0 * b.1 - b.0 * self.1, self.1 * b.1),
            2 => Q::norm(self.0 * b.0, self.1 * b.1),
            _ if b.0 == 0 => return None,
            _ => Q::norm(self.0 * b.1, self.1 * b.0),
        })
    }
    fn is_24(self) -> bool {
        self.0 == 24 * self.1
    }
}

/// Every binary tree shape over four ordered leaves with every operator
/// assignment, for every ordering of the hand.
fn enumerator_solvable(hand: &Hand) -> bool {
    let perms: BTreeSet<[i64; 4]> = (0..24)
        .map(|mut k| {
            let mut pool: Vec<i64> = hand.iter().map(|&v| v as i64).collect();
            let mut out = [0; 4];
            for (slot, radix) in out.iter_mut().zip([6, 2, 1, 1]) {
                *slot = pool.remove(k / radix);
                k %= radix;
            }
            out
        })
        .collect();
    for p in perms {
        let [a, b, c, d] = p.map(|v| Q(v, 1));
        for o1 in 0..4 {
            for o2 in 0..4 {
                for o3 in 0..4 {
                    let shapes = [
                        // ((a b) c) d
                        a.op(o1, b)
                            .and_then(|x| x.op(o2, c))
                            .and_then(|x| x.op(o3, d)),
                        // (a (b c)) d
                        b.op(o2, c)
                            .and_then(|x| a.op(o1, x))
                            .and_then(|x| x.op(o3, d)),
                        // (a b) (c d)
                        a.op(o1, b).zip(c.op(o3, d)).and_then(|(x, y)| x.op(o2, y)),
                        // a ((b c) d)
                        b.op(o2, c)
                            .and_then(|x| x.op(o3, d))
                            .and_then(|x| a.op(o1, x)),
                        // a (b (c d))
                        c.op(o3, d)
                            .and_then(|x| b.op(o2, x))
                            .and_then(|x| a.op(o1, x)),
                    ];
                    if shapes.into_iter().flatten().any(Q::is_24) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[test]
fn criterion_1_game24_bruteforce_soundness() {
    let start = Instant::now();
    let hands = all_hands();
    let mut failures = Vec::new();
    check(
        &mut failures,
        hands.len() == 1820,
        format!("{} multisets, expected 1820", hands.len()),
    );
    let mut solved = 0;
    let mut oracle_solvable = 0;
    for hand in &hands {
        let truth = enumerator_solvable(hand);
        oracle_solvable += truth as usize;
        match game24_solve_bruteforce(hand) {
            Some(expr) => {
                solved += 1;
                let v = game24_verify(hand, &expr);
                check(
                    &mut failures,
                    v.valid,
                    format!("{hand:?}: {expr} failed verification"),
                );
                check(
                    &mut failures,
                    v.value.is_some_and(|x| (x - 24.0).abs() < 1e-6),
                    format!("{hand:?}: {expr} value {:?}", v.value),
                );
                check(
                    &mut failures,
                    truth,
                    format!("{hand:?}: solved but enumerator says unsolvable"),
                );
            }
            None => check(
                &mut failures,
                !truth,
                format!("{hand:?}: NoSolution but enumerator found one"),
            ),
        }
    }
    check(
        &mut failures,
        oracle_solvable == 1362,
        format!("enumerator found {oracle_solvable}, expected 1362"),
    );
    let elapsed = start.elapsed();
    check(
        &mut failures,
        elapsed <= Duration::from_secs(300),
        format!("took {elapsed:?}"),
    );
    report(
        1,
        &failures,
        &format!("{solved}/{oracle_solvable} solvable hands solved and verified, {elapsed:.1?}"),
    );
}

#[test]
fn criterion_2_scripted_evolution() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run = |i: usize| {
        let mut s = scenario_sized("game24_search", 128);
        s.config.trace_path = Some(dir.path().join(format!("trace{i}.jsonl")));
        s.run()
    };
    let a = run(0);
    let b = run(1);
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    let kinds: Vec<TraceKind> = a.trace.iter().map(|e| e.action_kind).collect();
    check(
        &mut failures,
        kinds
            == [
                TraceKind::Think,
                TraceKind::SelfInspect,
                TraceKind::SelfUpdate,
                TraceKind::Interact,
            ],
        format!("trace kinds {kinds:?}"),
    );
    check(
        &mut failures,
        a.validation_scores == [1.0],
        format!("validation scores {:?}", a.validation_scores),
    );
    check(
        &mut failures,
        a.best_snapshot.version == 1 && a.best_snapshot.score == 1.0,
        format!("best snapshot {:?}", a.best_snapshot),
    );
    check(
        &mut failures,
        !a.event_flags.optimization_failure,
        "optimization failure flagged",
    );
    check(
        &mut failures,
        a.final_score.mean_score == 1.0,
        format!("test score {}", a.final_score.mean_score),
    );
    check(
        &mut failures,
        trace_text(&a.trace) == trace_text(&b.trace),
        "traces differ between runs",
    );
    let f0 = std::fs::read(dir.path().join("trace0.jsonl")).unwrap();
    let f1 = std::fs::read(dir.path().join("trace1.jsonl")).unwrap();
    check(
        &mut failures,
        !f0.is_empty() && f0 == f1,
        "trace files differ between runs",
    );
    check(
        &mut failures,
        elapsed <= Duration::from_secs(30),
        format!("took {elapsed:?} for two runs"),
    );
    report(
        2,
        &failures,
        &format!(
            "validation {:.3}, best v{}, {} trace bytes identical, {elapsed:.1?} for two runs",
            a.final_validation_score(),
            a.best_snapshot.version,
            f0.len()
        ),
    );
}

#[test]
fn criterion_3_failed_patch_neutrality() {
    let mut failures = Vec::new();
    let s = scenario("broken_patch");
    let hash = s.registry.source_hash();
    let r = s.run();
    check(
        &mut failures,
        s.registry.source_hash() == hash,
        "source hash changed",
    );
    check(
        &mut failures,
        s.registry.version() == 0,
        format!("version {}", s.registry.version()),
    );
    check(
        &mut failures,
        s.registry.snapshots().len() == 1,
        "a rejected patch created a snapshot",
    );
    let err = r.trace.iter().find(|e| e.error_text.is_some());
    check(
        &mut failures,
        err.is_some_and(|e| {
            e.action_kind == TraceKind::SelfUpdate && e.unit_touched.as_deref() == Some("solver")
        }),
        format!("error event {err:?}"),
    );
    check(
        &mut failures,
        r.termination_reason == TerminationReason::Converged,
        format!("terminated with {}", r.termination_reason),
    );
    check(
        &mut failures,
        r.trace
            .last()
            .is_some_and(|e| e.action_kind == TraceKind::Think),
        "run did not continue",
    );

    let mut ablated = scenario("broken_patch");
    ablated.config.ablation = AblationMask::of([Capability::ErrorHandling]);
    let hash = ablated.registry.source_hash();
    let r2 = ablated.run();
    check(
        &mut failures,
        r2.termination_reason == TerminationReason::AccidentalTermination,
        format!("ablated run terminated with {}", r2.termination_reason),
    );
    check(
        &mut failures,
        ablated.registry.source_hash() == hash,
        "ablated run changed the hash",
    );
    check(
        &mut failures,
        r2.trace.last().is_some_and(|e| e.error_text.is_some()),
        "ablated run did not end on the error event",
    );
    report(
        3,
        &failures,
        &format!(
            "hash unchanged, error event recorded, {} vs {} without error handling",
            r.termination_reason, r2.termination_reason
        ),
    );
}

#[test]
fn criterion_4_self_inspection_fixpoint() {
    let mut failures = Vec::new();
    let original = scenario("game24_search");
    let a = original.run();
    let mut reloaded = scenario("game24_search");
    let fresh = seeded();
    reloaded.registry = Registry::from_source_map(fresh.self_inspect()).unwrap();
    check(
        &mut failures,
        reloaded.registry.self_inspect() == fresh.self_inspect(),
        "re-registered source map differs",
    );
    let b = reloaded.run();
    let (ta, tb) = (trace_text(&a.trace), trace_text(&b.trace));
    check(&mut failures, ta == tb, "traces differ");
    check(
        &mut failures,
        original.registry.source_hash() == reloaded.registry.source_hash(),
        "final source hashes differ",
    );
    report(4, &failures, &format!("{} trace bytes identical", ta.len()));
}

#[test]
fn criterion_5_bootstrap_ci() {
    let start = Instant::now();
    let mut failures = Vec::new();
    check(
        &mut failures,
        bootstrap_ci(&[0.0; 800], 0.95, 10_000, 1).unwrap() == (0.0, 0.0),
        "all-zero scores",
    );
    check(
        &mut failures,
        bootstrap_ci(&[1.0; 800], 0.95, 10_000, 1).unwrap() == (100.0, 100.0),
        "all-one scores",
    );
    // Normal approximation: 2 * 1.96 * sqrt(0.25 / 800) * 100 = 6.93 points.
    let oracle = 2.0 * 1.96 * (0.25f64 / 800.0).sqrt() * 100.0;
    check(
        &mut failures,
        (oracle - 6.9).abs() < 0.05,
        format!("oracle width {oracle}"),
    );
    let mut widths = Vec::new();
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let scores: Vec<f64> = (0..800).map(|_| rng.gen_bool(0.5) as u8 as f64).collect();
        let (lo, hi) = bootstrap_ci(&scores, 0.95, 10_000, trial).unwrap();
        if trial == 0 {
            let again = bootstrap_ci(&scores, 0.95, 10_000, trial).unwrap();
            check(
                &mut failures,
                (lo, hi) == again,
                "same seed gave different bounds",
            );
        }
        let w = hi - lo;
        check(
            &mut failures,
            (w - 6.9).abs() <= 1.2,
            format!("trial {trial} width {w:.3}"),
        );
        widths.push(w);
    }
    let mean = widths.iter().sum::<f64>() / widths.len() as f64;
    check(
        &mut failures,
        (mean - 6.9).abs() <= 1.2,
        format!("mean width {mean:.3}"),
    );
    let elapsed = start.elapsed();
    check(
        &mut failures,
        elapsed <= Duration::from_secs(10),
        format!("took {elapsed:?}"),
    );
    let (min, max) = widths
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &w| (a.min(w), b.max(w)));
    report(
        5,
        &failures,
        &format!("degenerate bounds exact, widths {min:.2}..{max:.2} mean {mean:.2} (oracle {oracle:.2}), {elapsed:.1?}"),
    );
}

fn oracle_majority(list: &[&str]) -> Option<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in list {
        *counts.entry(s).or_default() += 1;
    }
    let top = counts.values().copied().max()?;
    list.iter()
        .find(|s| counts[*s] == top)
        .map(|s| s.to_string())
}

#[derive(serde::Deserialize)]
struct Case {
    tag: String,
    scorer: Scorer,
    answer: String,
    gold: String,
    expected: String,
}

#[derive(serde::Deserialize)]
struct CaseFile {
    case: Vec<Case>,
}

fn fraction(s: &str) -> f64 {
    match s.split_once('/') {
        Some((n, d)) => n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap(),
        None => s.parse().unwrap(),
    }
}

#[test]
fn criterion_6_voting_and_scoring() {
    let mut failures = Vec::new();
    let symbols = ["x", "y", "z"];
    let mut lists = 0;
    for len in 0..=5u32 {
        for code in 0..3usize.pow(len) {
            let list: Vec<&str> = (0..len)
                .map(|i| symbols[code / 3usize.pow(i) % 3])
                .collect();
            let got = majority_vote(&list);
            match oracle_majority(&list) {
                Some(want) => check(
                    &mut failures,
                    got.as_ref() == Ok(&want),
                    format!("{list:?}: {got:?} vs {want}"),
                ),
                None => check(
                    &mut failures,
                    got == Err(PolicyError::EmptyVote),
                    format!("{list:?}: {got:?}"),
                ),
            }
            lists += 1;
        }
    }
    check(&mut failures, lists == 364, format!("{lists} lists"));

    let text = std::fs::read_to_string(fixture("scorer_cases.toml")).unwrap();
    let cases: CaseFile = toml::from_str(&text).unwrap();
    check(
        &mut failures,
        cases.case.len() == 30,
        format!("{} scorer cases", cases.case.len()),
    );
    for c in &cases.case {
        let gold = match c.scorer {
            Scorer::Numeric => Gold::Number(c.gold.parse().unwrap()),
            Scorer::Choice => Gold::Choice(c.gold.chars().next().unwrap()),
            _ => Gold::Text(c.gold.clone()),
        };
        let got = score_answer(c.scorer, &c.answer, &gold);
        let want = fraction(&c.expected);
        check(
            &mut failures,
            (got - want).abs() < 1e-12,
            format!("{}: got {got}, expected {want}", c.tag),
        );
    }
    report(
        6,
        &failures,
        &format!(
            "{lists} vote lists and {} scorer cases match",
            cases.case.len()
        ),
    );
}

fn synthetic(reason: TerminationReason, initial: f64, scores: &[f64]) -> RunRecord {
    RunRecord {
        run_id: String::new(),
        seed: 0,
        initial_score: initial,
        validation_scores: scores.to_vec(),
        final_test_score: 0.0,
        termination_reason: reason,
        event_flags: EventFlags::from_scores(initial, scores),
        spent_calls: 0,
        spent_cost: 0.0,
        actions: ActionStats::default(),
    }
}

/// Validation scores of the active policy, read back from trace events.
fn scores_from_trace(trace: &[TraceEvent]) -> Vec<f64> {
    trace
        .iter()
        .filter(|e| matches!(e.action_kind, TraceKind::Interact | TraceKind::Evaluate))
        .filter(|e| e.unit_touched.as_deref() == Some("solver") && e.score_before.is_some())
        .filter_map(|e| e.score_after)
        .collect()
}

fn oracle_flags(initial: f64, scores: &[f64]) -> (bool, bool) {
    let drop = std::iter::once(initial)
        .chain(scores.iter().copied())
        .collect::<Vec<_>>()
        .windows(2)
        .any(|w| w[1] < w[0]);
    let failure = scores.last().is_some_and(|&last| last < initial);
    (drop, failure)
}

#[test]
fn criterion_7_robustness_statistics() {
    let mut failures = Vec::new();
    // 100 runs: 4 terminate, 13 dip and recover, 2 end below their start.
    let mut runs = Vec::new();
    for i in 0..100 {
        runs.push(match i {
            0..4 => synthetic(TerminationReason::AccidentalTermination, 0.5, &[0.6]),
            4..17 => synthetic(TerminationReason::BudgetExhausted, 0.5, &[0.7, 0.6, 0.8]),
            17..19 => synthetic(TerminationReason::BudgetExhausted, 0.5, &[0.5, 0.5, 0.4]),
            _ => synthetic(TerminationReason::Converged, 0.5, &[0.6, 0.7]),
        });
    }
    let s = robustness_stats(&runs).unwrap();
    check(
        &mut failures,
        s.n_runs == 100,
        format!("n_runs {}", s.n_runs),
    );
    check(
        &mut failures,
        s.pct_accidental_termination == 4.0,
        format!("termination {}", s.pct_accidental_termination),
    );
    // The two failing runs also dip, so 15 runs dip in total.
    check(
        &mut failures,
        s.pct_temporary_drop == 15.0,
        format!("drop {}", s.pct_temporary_drop),
    );
    check(
        &mut failures,
        s.pct_optimization_failure == 2.0,
        format!("failure {}", s.pct_optimization_failure),
    );
    let six: Vec<RunRecord> = (0..6)
        .map(|i| {
            let reason = if i == 0 {
                TerminationReason::AccidentalTermination
            } else {
                TerminationReason::Converged
            };
            synthetic(reason, 0.5, &[0.5])
        })
        .collect();
    let s6 = robustness_stats(&six).unwrap();
    check(
        &mut failures,
        s6.pct_accidental_termination == 100.0 / 6.0,
        format!("1 of 6 gave {}", s6.pct_accidental_termination),
    );

    let mut flagged = [0usize; 2];
    for name in GOLDEN {
        let text = std::fs::read_to_string(fixture(&format!("golden/{name}.result.json"))).unwrap();
        let result: EvolutionResult = serde_json::from_str(&text).unwrap();
        let scores = scores_from_trace(&result.trace);
        check(
            &mut failures,
            scores == result.validation_scores,
            format!(
                "{name}: trace scores {scores:?} vs stored {:?}",
                result.validation_scores
            ),
        );
        let (drop, failure) = oracle_flags(result.initial_score.mean_score, &scores);
        check(
            &mut failures,
            (drop, failure)
                == (
                    result.event_flags.temporary_drop,
                    result.event_flags.optimization_failure,
                ),
            format!(
                "{name}: recomputed ({drop}, {failure}) vs stored {:?}",
                result.event_flags
            ),
        );
        flagged[0] += drop as usize;
        flagged[1] += failure as usize;
    }
    check(
        &mut failures,
        flagged[0] > 0 && flagged[1] > 0,
        "golden traces never raise both flags",
    );
    report(
        7,
        &failures,
        &format!(
            "100 runs with 4 terminations -> {:.1}%, flags agree on {} golden traces",
            s.pct_accidental_termination,
            GOLDEN.len()
        ),
    );
}

#[test]
fn criterion_8_budget_enforcement() {
    let mut failures = Vec::new();
    let costs: Vec<f64> = script("budget_cap")
        .decision
        .iter()
        .map(|e| e.cost.unwrap())
        .collect();
    check(
        &mut failures,
        costs.len() == 10,
        format!("script has {} calls", costs.len()),
    );

    // Uncapped, the script really asks for all ten decisions.
    let mut uncapped = scenario("budget_cap");
    uncapped.gateway = std::sync::Arc::new(reflexive::gateway::Gateway::scripted(
        script("budget_cap"),
        reflexive::gateway::Budget::new(CostUnits::from_f64(100.0), 100),
    ));
    let u = uncapped.run();
    check(
        &mut failures,
        u.spent_calls == 10,
        format!("uncapped run made {} calls", u.spent_calls),
    );

    let s = scenario("budget_cap");
    let r = s.run();
    let budget = s.gateway.budget();
    let expected = costs[..5]
        .iter()
        .fold(CostUnits::ZERO, |acc, &c| acc + CostUnits::from_f64(c));
    check(
        &mut failures,
        r.termination_reason == TerminationReason::BudgetExhausted,
        format!("terminated with {}", r.termination_reason),
    );
    check(
        &mut failures,
        budget.spent_calls == 5,
        format!("{} debits", budget.spent_calls),
    );
    check(
        &mut failures,
        r.spent_calls == 5,
        format!("result reports {} calls", r.spent_calls),
    );
    check(
        &mut failures,
        budget.spent_cost == expected,
        format!("spent {:?}, expected {expected:?}", budget.spent_cost),
    );
    check(
        &mut failures,
        r.spent_cost == expected.as_f64(),
        format!("result cost {}", r.spent_cost),
    );
    let thinks = r
        .trace
        .iter()
        .filter(|e| e.action_kind == TraceKind::Think)
        .count();
    check(
        &mut failures,
        thinks == 5,
        format!("{thinks} decisions executed"),
    );
    report(
        8,
        &failures,
        &format!(
            "{} after {} debits, spent {} = {}",
            r.termination_reason,
            budget.spent_calls,
            budget.spent_cost.as_f64(),
            costs[..5]
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" + ")
        ),
    );
}
