//! Seed solver policies.
//!
//! Every policy is script source registered as a unit, so the improvement
//! loop can read and rewrite it. The Rust entry points below run the same
//! source through a private registry; there is no second implementation.

use rhai::{Array, Dynamic, Map};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;
use thiserror::Error;

use crate::registry::{LogicUnit, Registry, RoleTag};
use crate::runtime::{display, Agent};
use crate::tasks::scoring::extract_choice;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("cannot vote over an empty list")]
    EmptyVote,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverAnswer {
    pub answer: String,
    pub reasoning: String,
    /// Policy-specific extras such as the winning role.
    pub aux: BTreeMap<String, String>,
    /// The answer is empty or its key was missing from the response.
    pub flagged: bool,
}

impl SolverAnswer {
    pub fn new(answer: impl Into<String>) -> Self {
        let answer = answer.into();
        SolverAnswer {
            flagged: answer.trim().is_empty(),
            answer,
            ..Default::default()
        }
    }

    pub fn flagged(reason: impl Into<String>) -> Self {
        let mut a = SolverAnswer::new("");
        a.aux.insert("error".into(), reason.into());
        a
    }

    /// Reads a unit's return value: a bare string or a map with `answer`.
    pub fn from_dynamic(value: Dynamic) -> Self {
        if !value.is_map() {
            return SolverAnswer::new(display(&value));
        }
        let map = value.cast::<Map>();
        let mut out = SolverAnswer::default();
        let mut missing_answer = !map.contains_key("answer");
        for (k, v) in map {
            match k.as_str() {
                "answer" => out.answer = display(&v),
                "reasoning" => out.reasoning = display(&v),
                "_missing" => {
                    if let Some(arr) = v.try_cast::<Array>() {
                        missing_answer |= arr.iter().any(|m| display(m) == "answer");
                    }
                }
                other => {
                    out.aux.insert(other.to_string(), display(&v));
                }
            }
        }
        out.flagged = missing_answer || out.answer.trim().is_empty();
        out
    }
}

/// Modal element; ties go to the answer seen first.
pub fn majority_vote<S: AsRef<str>>(answers: &[S]) -> Result<String, PolicyError> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for a in answers {
        let a = a.as_ref().trim();
        match counts.iter_mut().find(|(k, _)| *k == a) {
            Some((_, n)) => *n += 1,
            None => counts.push((a, 1)),
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for (k, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((k, n));
        }
    }
    best.map(|(k, _)| k.to_string())
        .ok_or(PolicyError::EmptyVote)
}

/// Majority over the letters A-D found in each answer; others are ignored.
pub fn choice_vote<S: AsRef<str>>(answers: &[S]) -> Option<String> {
    let letters: Vec<String> = answers
        .iter()
        .filter_map(|a| extract_choice(a.as_ref()))
        .map(String::from)
        .collect();
    majority_vote(&letters).ok()
}

/// Worked examples shown before the task in few-shot prompting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
}

/// Synthetic exemplars written for this project.
pub fn synthetic_exemplars() -> Vec<Exemplar> {
    vec![
        Exemplar {
            question: "Which gas makes up most of Earth's atmosphere?\nA) Oxygen\nB) Nitrogen\nC) Argon\nD) Carbon dioxide".into(),
            answer: "Nitrogen is about 78% of dry air by volume. Answer: B".into(),
        },
        Exemplar {
            question: "What is the derivative of x^3?\nA) 3x^2\nB) x^2\nC) 3x\nD) x^4/4".into(),
            answer: "The power rule gives 3x^2. Answer: A".into(),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub samples: usize,
    pub cot_temperature: f64,
    pub sc_temperature: f64,
    pub role_temperature: f64,
    pub few_shot_temperature: f64,
    pub roles: Vec<String>,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            samples: 5,
            cot_temperature: 0.0,
            sc_temperature: 0.5,
            role_temperature: 0.5,
            few_shot_temperature: 0.8,
            roles: vec![
                "reasoning expert".into(),
                "meticulous checker".into(),
                "domain specialist".into(),
            ],
        }
    }
}

pub const COT_REQUIREMENTS: &str =
    "Lay out your reasoning one step at a time in \"reasoning\", then put only the final answer in \"answer\".";

const COT_SOURCE: &str = r#"fn cot(agent, task) {
    let records = agent.llm(#{
        prompt: task,
        role: "careful problem solver",
        return_keys: ["reasoning", "answer"],
        requirements: "Lay out your reasoning one step at a time in \"reasoning\", then put only the final answer in \"answer\".",
        temperature: TEMPERATURE
    });
    records[0]
}
"#;

const COT24_SOURCE: &str = r#"fn cot24(agent, task) {
    let records = agent.llm(#{
        prompt: task,
        role: "puzzle solver",
        return_keys: ["reasoning", "answer"],
        requirements: "Use each of the four numbers exactly once with + - * / and parentheses so the expression equals 24. Explain in \"reasoning\"; put only the expression in \"answer\".",
        temperature: 0.0
    });
    records[0]
}
"#;

const SC_VOTE_SOURCE: &str = r#"fn sc_vote(agent, task, k, temperature) {
    let records = agent.llm(#{
        prompt: task,
        role: "careful problem solver",
        return_keys: ["reasoning", "answer"],
        requirements: "Check every step before you commit. Put only the final answer in \"answer\".",
        temperature: temperature,
        n: k
    });
    let answers = [];
    for r in records { answers.push(r.answer); }
    let winner = agent.majority_vote(answers);
    for r in records {
        if r.answer.trim() == winner { return r; }
    }
    records[0]
}
"#;

const ROLE_VOTE_SOURCE: &str = r#"fn role_vote(agent, task, roles, k, temperature) {
    if roles.is_empty() { throw "role ensemble needs at least one role"; }
    let pooled = [];
    for role in roles {
        let records = agent.llm(#{
            prompt: task,
            role: role,
            return_keys: ["reasoning", "answer"],
            requirements: "Answer from the point of view of your role. Put only the final answer in \"answer\".",
            temperature: temperature,
            n: k
        });
        for r in records {
            r.role = role;
            pooled.push(r);
        }
    }
    let answers = [];
    for r in pooled { answers.push(r.answer); }
    let winner = agent.majority_vote(answers);
    for r in pooled {
        if r.answer.trim() == winner {
            r.votes = answers.len();
            return r;
        }
    }
    pooled[0]
}
"#;

const FEW_SHOT_VOTE_SOURCE: &str = r#"fn few_shot_vote(agent, task, exemplars, k, temperature) {
    let messages = [];
    for ex in exemplars {
        messages.push(#{ role: "user", content: ex.question });
        messages.push(#{ role: "assistant", content: ex.answer });
    }
    messages.push(#{ role: "user", content: task });
    let records = agent.llm(#{
        messages: messages,
        role: "expert test taker",
        return_keys: ["reasoning", "answer"],
        requirements: "Pick one option. Put only its letter (A, B, C or D) in \"answer\".",
        temperature: temperature,
        n: k
    });
    let answers = [];
    for r in records { answers.push(r.answer); }
    let letter = agent.choice_vote(answers);
    let reasoning = "";
    for r in records {
        if agent.choice_vote([r.answer]) == letter { reasoning = r.reasoning; break; }
    }
    #{ answer: letter, reasoning: reasoning }
}
"#;

/// A named seed policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Cot,
    Cot24,
    SelfConsistency,
    RoleEnsemble,
    FewShotSc,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Cot,
        Policy::Cot24,
        Policy::SelfConsistency,
        Policy::RoleEnsemble,
        Policy::FewShotSc,
    ];

    pub fn unit_name(self) -> &'static str {
        match self {
            Policy::Cot => "cot",
            Policy::Cot24 => "cot24",
            Policy::SelfConsistency => "self_consistency",
            Policy::RoleEnsemble => "role_ensemble",
            Policy::FewShotSc => "few_shot_sc",
        }
    }

    /// Gateway calls per invocation.
    pub fn calls(self, params: &PolicyParams) -> usize {
        match self {
            Policy::RoleEnsemble => params.roles.len(),
            _ => 1,
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.unit_name() == s)
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

fn rhai_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn rhai_float(x: f64) -> String {
    format!("{x:?}")
}

/// Solver units and their helpers, with `params` baked into the sources.
pub fn policy_units(params: &PolicyParams) -> Vec<LogicUnit> {
    let roles: Vec<String> = params.roles.iter().map(|r| rhai_string(r)).collect();
    let exemplars: Vec<String> = synthetic_exemplars()
        .iter()
        .map(|e| {
            format!(
                "#{{ question: {}, answer: {} }}",
                rhai_string(&e.question),
                rhai_string(&e.answer)
            )
        })
        .collect();
    let k = params.samples;
    vec![
        LogicUnit::new(
            "cot",
            RoleTag::Solver,
            COT_SOURCE.replace("TEMPERATURE", &rhai_float(params.cot_temperature)),
        ),
        LogicUnit::new("cot24", RoleTag::Solver, COT24_SOURCE),
        LogicUnit::new("sc_vote", RoleTag::Helper, SC_VOTE_SOURCE),
        LogicUnit::new("role_vote", RoleTag::Helper, ROLE_VOTE_SOURCE),
        LogicUnit::new("few_shot_vote", RoleTag::Helper, FEW_SHOT_VOTE_SOURCE),
        LogicUnit::new(
            "self_consistency",
            RoleTag::Solver,
            format!(
                "fn self_consistency(agent, task) {{\n    sc_vote(agent, task, {k}, {})\n}}\n",
                rhai_float(params.sc_temperature)
            ),
        ),
        LogicUnit::new(
            "role_ensemble",
            RoleTag::Solver,
            format!(
                "fn role_ensemble(agent, task) {{\n    role_vote(agent, task, [{}], {k}, {})\n}}\n",
                roles.join(", "),
                rhai_float(params.role_temperature)
            ),
        ),
        LogicUnit::new(
            "few_shot_sc",
            RoleTag::Solver,
            format!(
                "// synthetic exemplars written for this project\nfn few_shot_sc(agent, task) {{\n    let exemplars = [\n        {}\n    ];\n    few_shot_vote(agent, task, exemplars, {k}, {})\n}}\n",
                exemplars.join(",\n        "),
                rhai_float(params.few_shot_temperature)
            ),
        ),
    ]
}

/// The `solver` entry unit, delegating to the chosen initial policy.
pub fn solver_entry(initial: &str) -> LogicUnit {
    LogicUnit::new(
        "solver",
        RoleTag::Solver,
        format!("fn solver(agent, task) {{\n    {initial}(agent, task)\n}}\n"),
    )
}

fn library() -> &'static Registry {
    static LIB: OnceLock<Registry> = OnceLock::new();
    LIB.get_or_init(|| {
        Registry::new(policy_units(&PolicyParams::default())).expect("policy sources compile")
    })
}

fn run(unit: &str, result: Result<Dynamic, String>) -> SolverAnswer {
    match result {
        Ok(v) => SolverAnswer::from_dynamic(v),
        Err(e) => SolverAnswer::flagged(format!("{unit}: {e}")),
    }
}

/// One call asking for reasoning and an answer.
pub fn cot_solve(agent: &Agent, task: &str) -> SolverAnswer {
    run(
        "cot",
        library().call("cot", (agent.clone(), task.to_string())),
    )
}

/// `k` samples in one call; the first record with the modal answer wins.
pub fn sc_majority_solve(agent: &Agent, task: &str, k: usize) -> Result<SolverAnswer, PolicyError> {
    if k == 0 {
        return Err(PolicyError::InvalidArgument("k must be >= 1".into()));
    }
    let temp = PolicyParams::default().sc_temperature;
    Ok(run(
        "sc_vote",
        library().call("sc_vote", (agent.clone(), task.to_string(), k as i64, temp)),
    ))
}

/// One call per role; plurality vote over the pooled answers.
pub fn role_ensemble_solve(
    agent: &Agent,
    task: &str,
    roles: &[&str],
    k: usize,
) -> Result<SolverAnswer, PolicyError> {
    if roles.is_empty() {
        return Err(PolicyError::InvalidArgument(
            "roles must not be empty".into(),
        ));
    }
    if k == 0 {
        return Err(PolicyError::InvalidArgument("k must be >= 1".into()));
    }
    let roles: Array = roles.iter().map(|r| Dynamic::from(r.to_string())).collect();
    let temp = PolicyParams::default().role_temperature;
    Ok(run(
        "role_vote",
        library().call(
            "role_vote",
            (agent.clone(), task.to_string(), roles, k as i64, temp),
        ),
    ))
}

/// Exemplars as prior turns, then `k` samples voted by option letter.
pub fn few_shot_sc_solve(
    agent: &Agent,
    task: &str,
    exemplars: &[Exemplar],
    k: usize,
) -> SolverAnswer {
    let exemplars: Array = exemplars
        .iter()
        .map(|e| {
            let mut m = Map::new();
            m.insert("question".into(), e.question.clone().into());
            m.insert("answer".into(), e.answer.clone().into());
            Dynamic::from_map(m)
        })
        .collect();
    let temp = PolicyParams::default().few_shot_temperature;
    run(
        "few_shot_vote",
        library().call(
            "few_shot_vote",
            (
                agent.clone(),
                task.to_string(),
                exemplars,
                k.max(1) as i64,
                temp,
            ),
        ),
    )
}
