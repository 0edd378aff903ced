//! Loading a JSONL dataset and scoring a policy on it with bootstrap bounds.

use reflexive::policies::SolverAnswer;
use reflexive::tasks::{evaluate_policy, load_dataset, Scorer, Split, SplitSpec};

fn main() -> anyhow::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/datasets/passages.jsonl"
    );
    let spec = SplitSpec {
        val_n: 4,
        test_n: 8,
        seed: 0,
    };
    let env = load_dataset(path.as_ref(), Scorer::F1, spec, 1)?;
    // Answers with the last four words of the passage sentence before the question.
    let solver = |input: &str| {
        let passage = input
            .split("Question:")
            .next()
            .unwrap_or("")
            .trim_end_matches(|c: char| c == '.' || c.is_whitespace());
        let words: Vec<&str> = passage.split_whitespace().collect();
        Ok(SolverAnswer::new(
            words[words.len().saturating_sub(4)..].join(" "),
        ))
    };
    let report = evaluate_policy(&env, &solver, Split::Test)?;
    println!(
        "token F1 {:.3}, 95% CI ({:.1}, {:.1})",
        report.mean_score, report.ci_low, report.ci_high
    );
    for o in report.worst(3) {
        println!("  {} scored {:.2}: {:?}", o.example_id, o.score, o.answer);
    }
    Ok(())
}
