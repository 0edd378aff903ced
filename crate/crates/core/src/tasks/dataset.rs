use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

use super::{Environment, Gold, Scorer, TaskError, TaskExample};

/// Split sizes and the sampling seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub val_n: usize,
    pub test_n: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_n: 128,
            test_n: 800,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// Small science-QA sizing; pair with `GPQA_EVAL_REPEATS`.
    pub fn gpqa() -> Self {
        SplitSpec {
            val_n: 32,
            test_n: 166,
            seed: 0,
        }
    }
}

pub const GPQA_EVAL_REPEATS: usize = 5;

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Value,
    input: String,
    gold: Value,
}

fn gold_for(scorer: Scorer, gold: &Value) -> Result<Gold, String> {
    match scorer {
        Scorer::Numeric => match gold {
            Value::Number(n) => n
                .as_f64()
                .map(Gold::Number)
                .ok_or("gold is not finite".into()),
            Value::String(s) => s
                .replace(',', "")
                .trim()
                .parse::<f64>()
                .map(Gold::Number)
                .map_err(|_| format!("gold {s:?} is not a number")),
            other => Err(format!("numeric gold expected, got {other}")),
        },
        Scorer::Choice => match gold {
            Value::String(s) => match s.trim() {
                l @ ("A" | "B" | "C" | "D") => Ok(Gold::Choice(l.chars().next().unwrap_or('A'))),
                _ => Err(format!("choice gold must be A-D, got {s:?}")),
            },
            other => Err(format!("choice gold expected, got {other}")),
        },
        Scorer::F1 => match gold {
            Value::String(s) => Ok(Gold::Text(s.clone())),
            Value::Number(n) => Ok(Gold::Text(n.to_string())),
            other => Err(format!("text gold expected, got {other}")),
        },
        Scorer::Game24 => {
            let nums: Vec<u32> = serde_json::from_value(gold.clone())
                .map_err(|_| format!("gold must be a list of four integers, got {gold}"))?;
            let hand: [u32; 4] = nums
                .try_into()
                .map_err(|_| "gold must contain exactly four numbers".to_string())?;
            if hand.iter().any(|n| !(1..=13).contains(n)) {
                return Err("Game of 24 numbers must lie in 1..=13".into());
            }
            Ok(Gold::Hand(hand))
        }
    }
}

/// Parses line-delimited `{id, input, gold}` records.
pub fn parse_records(text: &str, scorer: Scorer) -> Result<Vec<TaskExample>, TaskError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| TaskError::MalformedRecord {
            line: idx + 1,
            message,
        };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let id = match raw.id {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            other => {
                return Err(malformed(format!(
                    "id must be a string or number, got {other}"
                )))
            }
        };
        let gold = gold_for(scorer, &raw.gold).map_err(malformed)?;
        out.push(TaskExample {
            id,
            input: raw.input,
            gold,
        });
    }
    Ok(out)
}

/// Loads a dataset and samples disjoint validation and test splits.
pub fn load_dataset(
    path: &Path,
    scorer: Scorer,
    split: SplitSpec,
    eval_repeats: usize,
) -> Result<Environment, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|e| TaskError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut records = parse_records(&text, scorer)?;
    let needed = split.val_n + split.test_n;
    if records.len() < needed {
        return Err(TaskError::InsufficientExamples {
            needed,
            available: records.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    records.shuffle(&mut rng);
    let test: Vec<_> = records.drain(split.val_n..needed).collect();
    records.truncate(split.val_n);
    let task_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Environment::new(task_id, records, test, scorer, eval_repeats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_records(n: usize) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..n {
            writeln!(
                f,
                r#"{{"id": "q{i}", "input": "what is {i}?", "gold": {i}}}"#
            )
            .unwrap();
        }
        f
    }

    #[test]
    fn default_split_of_928_records() {
        let f = write_records(928);
        let env = load_dataset(f.path(), Scorer::Numeric, SplitSpec::default(), 1).unwrap();
        assert_eq!(env.validation.len(), 128);
        assert_eq!(env.test.len(), 800);
        let again = load_dataset(f.path(), Scorer::Numeric, SplitSpec::default(), 1).unwrap();
        assert_eq!(env.validation, again.validation);
        assert_eq!(env.test, again.test);
    }

    #[test]
    fn too_few_records() {
        let f = write_records(100);
        let err = load_dataset(f.path(), Scorer::Numeric, SplitSpec::default(), 1).unwrap_err();
        assert_eq!(
            err,
            TaskError::InsufficientExamples {
                needed: 928,
                available: 100
            }
        );
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = "{\"id\": 1, \"input\": \"x\", \"gold\": 1}\n\nnot json\n";
        match parse_records(text, Scorer::Numeric) {
            Err(TaskError::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\"id\": 1, \"input\": \"x\", \"gold\": \"E\"}";
        assert!(parse_records(text, Scorer::Choice).is_err());
        let text = "{\"id\": 1, \"input\": \"x\", \"gold\": [1, 2, 3, 14]}";
        assert!(parse_records(text, Scorer::Game24).is_err());
    }
}
