//! Task environments and the utility function that scores a policy on them.

pub mod dataset;
pub mod game24;
pub mod scoring;

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::harness::bootstrap::{bootstrap_ci, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::policies::SolverAnswer;

pub use dataset::{load_dataset, SplitSpec, GPQA_EVAL_REPEATS};
pub use game24::{game24_generate, game24_solve_bruteforce, game24_verify};
pub use scoring::{score_exact_numeric, score_f1, score_multiple_choice};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("split {0} is empty")]
    EmptySplit(Split),
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("need {needed} examples, only {available} available")]
    InsufficientExamples { needed: usize, available: usize },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Numeric,
    Choice,
    F1,
    Game24,
}

impl FromStr for Scorer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numeric" => Ok(Scorer::Numeric),
            "choice" => Ok(Scorer::Choice),
            "f1" => Ok(Scorer::F1),
            "game24" => Ok(Scorer::Game24),
            other => Err(format!(
                "unknown scorer {other:?} (numeric, choice, f1, game24)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Number(f64),
    Choice(char),
    Text(String),
    Hand([u32; 4]),
}

impl Gold {
    fn matches(&self, scorer: Scorer) -> bool {
        matches!(
            (self, scorer),
            (Gold::Number(_), Scorer::Numeric)
                | (Gold::Choice('A'..='D'), Scorer::Choice)
                | (Gold::Text(_), Scorer::F1)
                | (Gold::Hand(_), Scorer::Game24)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskExample {
    pub id: String,
    pub input: String,
    pub gold: Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub task_id: String,
    pub validation: Vec<TaskExample>,
    pub test: Vec<TaskExample>,
    pub scorer: Scorer,
    pub eval_repeats: usize,
    /// Prepended to every input (one-shot exemplars for reading tasks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_prefix: Option<String>,
}

impl Environment {
    pub fn new(
        task_id: impl Into<String>,
        validation: Vec<TaskExample>,
        test: Vec<TaskExample>,
        scorer: Scorer,
        eval_repeats: usize,
    ) -> Result<Self, TaskError> {
        if eval_repeats == 0 {
            return Err(TaskError::InvalidEnvironment(
                "eval_repeats must be >= 1".into(),
            ));
        }
        let mut ids = BTreeSet::new();
        for ex in validation.iter().chain(test.iter()) {
            if !ids.insert(ex.id.as_str()) {
                return Err(TaskError::InvalidEnvironment(format!(
                    "example id {} appears twice",
                    ex.id
                )));
            }
            if !ex.gold.matches(scorer) {
                return Err(TaskError::InvalidEnvironment(format!(
                    "gold of {} does not fit scorer {scorer:?}",
                    ex.id
                )));
            }
        }
        Ok(Environment {
            task_id: task_id.into(),
            validation,
            test,
            scorer,
            eval_repeats,
            exemplar_prefix: None,
        })
    }

    /// Solvable Game-of-24 hands, split into validation and test.
    pub fn game24(seed: u64, val_n: usize, test_n: usize) -> Result<Self, TaskError> {
        let mut all = game24_generate(seed, val_n + test_n, true)?;
        let test = all.split_off(val_n);
        Environment::new("game24", all, test, Scorer::Game24, 1)
    }

    pub fn split(&self, split: Split) -> &[TaskExample] {
        match split {
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Scores one answer against its gold value.
pub fn score_answer(scorer: Scorer, answer: &str, gold: &Gold) -> f64 {
    match (scorer, gold) {
        (Scorer::Numeric, Gold::Number(g)) => score_exact_numeric(answer, *g),
        (Scorer::Choice, Gold::Choice(g)) => score_multiple_choice(answer, *g),
        (Scorer::F1, Gold::Text(g)) => score_f1(answer, g),
        (Scorer::Game24, Gold::Hand(h)) if game24_verify(h, answer).valid => 1.0,
        _ => 0.0,
    }
}

/// Anything that maps a task input to an answer.
pub trait Solver {
    fn solve(&self, input: &str) -> Result<SolverAnswer, String>;
}

impl<F> Solver for F
where
    F: Fn(&str) -> Result<SolverAnswer, String>,
{
    fn solve(&self, input: &str) -> Result<SolverAnswer, String> {
        self(input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub example_id: String,
    pub score: f64,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub mean_score: f64,
    /// Percent scale.
    pub ci_low: f64,
    pub ci_high: f64,
    pub per_example: Vec<ExampleOutcome>,
    pub split: Split,
    pub n: usize,
}

impl UtilityReport {
    pub fn from_outcomes(
        mut per_example: Vec<ExampleOutcome>,
        split: Split,
    ) -> Result<Self, TaskError> {
        if per_example.is_empty() {
            return Err(TaskError::EmptySplit(split));
        }
        per_example.sort_by(|a, b| a.example_id.cmp(&b.example_id));
        let scores: Vec<f64> = per_example.iter().map(|o| o.score).collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let (low, high) = bootstrap_ci(&scores, DEFAULT_LEVEL, DEFAULT_RESAMPLES, 0)
            .map_err(|e| TaskError::InvalidArgument(e.to_string()))?;
        // A percentile interval can miss the point estimate on tiny skewed samples.
        let pct = 100.0 * mean;
        Ok(UtilityReport {
            mean_score: mean,
            ci_low: low.min(pct),
            ci_high: high.max(pct),
            n: per_example.len(),
            per_example,
            split,
        })
    }

    /// The lowest-scoring examples, for feedback to the improvement loop.
    pub fn worst(&self, k: usize) -> Vec<&ExampleOutcome> {
        let mut v: Vec<_> = self.per_example.iter().filter(|o| o.score < 1.0).collect();
        v.sort_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(a.example_id.cmp(&b.example_id))
        });
        v.truncate(k);
        v
    }
}

/// Runs `solver` over a split and aggregates the scores.
///
/// A solver error scores that example 0 and is recorded; it never aborts
/// the evaluation.
pub fn evaluate_policy(
    env: &Environment,
    solver: &dyn Solver,
    split: Split,
) -> Result<UtilityReport, TaskError> {
    let examples = env.split(split);
    if examples.is_empty() {
        return Err(TaskError::EmptySplit(split));
    }
    let outcomes = examples
        .iter()
        .map(|ex| {
            let input = match &env.exemplar_prefix {
                Some(prefix) => format!("{prefix}{}", ex.input),
                None => ex.input.clone(),
            };
            let mut total = 0.0;
            let mut answer = String::new();
            let mut error = None;
            for _ in 0..env.eval_repeats {
                match solver.solve(&input) {
                    Ok(a) => {
                        total += score_answer(env.scorer, &a.answer, &ex.gold);
                        answer = a.answer;
                    }
                    Err(e) => error = Some(e),
                }
            }
            ExampleOutcome {
                example_id: ex.id.clone(),
                score: total / env.eval_repeats as f64,
                answer,
                error,
            }
        })
        .collect();
    UtilityReport::from_outcomes(outcomes, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_env(n: usize) -> Environment {
        let ex = |i: usize| TaskExample {
            id: format!("n{i:02}"),
            input: i.to_string(),
            gold: Gold::Number(i as f64),
        };
        Environment::new(
            "num",
            (0..n).map(ex).collect(),
            vec![ex(99)],
            Scorer::Numeric,
            1,
        )
        .unwrap()
    }

    #[test]
    fn echo_solver_scores_full_marks() {
        let env = numeric_env(10);
        let echo = |input: &str| Ok(SolverAnswer::new(input));
        let r = evaluate_policy(&env, &echo, Split::Validation).unwrap();
        assert_eq!(r.mean_score, 1.0);
        assert_eq!((r.ci_low, r.ci_high), (100.0, 100.0));
        assert_eq!(r.n, 10);
    }

    #[test]
    fn failing_solver_scores_zero_with_errors() {
        let env = numeric_env(4);
        let broken = |_: &str| -> Result<SolverAnswer, String> { Err("boom".into()) };
        let r = evaluate_policy(&env, &broken, Split::Validation).unwrap();
        assert_eq!(r.mean_score, 0.0);
        assert!(r
            .per_example
            .iter()
            .all(|o| o.error.as_deref() == Some("boom")));
    }

    #[test]
    fn empty_split_is_an_error() {
        let env = Environment::new("e", vec![], vec![], Scorer::F1, 1).unwrap();
        let echo = |input: &str| Ok(SolverAnswer::new(input));
        assert_eq!(
            evaluate_policy(&env, &echo, Split::Test).unwrap_err(),
            TaskError::EmptySplit(Split::Test)
        );
    }

    #[test]
    fn environment_rejects_overlapping_splits() {
        let ex = TaskExample {
            id: "x".into(),
            input: "1".into(),
            gold: Gold::Number(1.0),
        };
        assert!(Environment::new("e", vec![ex.clone()], vec![ex], Scorer::Numeric, 1).is_err());
    }

    #[test]
    fn repeats_average_scores() {
        use std::cell::Cell;
        let mut env = numeric_env(1);
        env.eval_repeats = 4;
        let calls = Cell::new(0);
        let alternating = |input: &str| {
            calls.set(calls.get() + 1);
            if calls.get() % 2 == 0 {
                Ok(SolverAnswer::new(input))
            } else {
                Ok(SolverAnswer::new("wrong"))
            }
        };
        let r = evaluate_policy(&env, &alternating, Split::Validation).unwrap();
        assert_eq!(r.mean_score, 0.5);
        assert_eq!(calls.get(), 4);
    }
}
