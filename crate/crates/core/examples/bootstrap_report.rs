//! Confidence intervals and robustness statistics over run records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reflexive::harness::bootstrap::{bootstrap_ci, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use reflexive::harness::{progression_from_scores, robustness_stats, ActionStats, RunRecord};
use reflexive::kernel::{EventFlags, TerminationReason};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scores: Vec<f64> = (0..800).map(|_| rng.gen_bool(0.5) as u8 as f64).collect();
    let (lo, hi) = bootstrap_ci(&scores, DEFAULT_LEVEL, DEFAULT_RESAMPLES, 0)?;
    println!(
        "Bernoulli(0.5), n=800: 95% CI ({lo:.1}, {hi:.1}), width {:.2}",
        hi - lo
    );

    let runs: Vec<RunRecord> = [
        (TerminationReason::Converged, vec![0.4, 0.6]),
        (TerminationReason::BudgetExhausted, vec![0.6, 0.3, 0.7]),
        (TerminationReason::AccidentalTermination, vec![0.45]),
        (TerminationReason::Converged, vec![0.5, 0.4]),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (reason, s))| RunRecord {
        run_id: format!("run-{i:02}"),
        seed: i as u64,
        initial_score: 0.5,
        event_flags: EventFlags::from_scores(0.5, &s),
        final_test_score: *s.last().unwrap(),
        validation_scores: s,
        termination_reason: reason,
        spent_calls: 0,
        spent_cost: 0.0,
        actions: ActionStats::default(),
    })
    .collect();
    println!("{:?}", robustness_stats(&runs)?);
    println!("{:?}", progression_from_scores(&runs[1].validation_scores));
    Ok(())
}
