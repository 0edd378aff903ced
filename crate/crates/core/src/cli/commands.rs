use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::{RunConfig, TaskConfig};
use super::{io_err, CliError};
use crate::harness::plot::progression_svg;
use crate::harness::report::BatchReport;
use crate::harness::{progression_curve, run_ablation, AblationTable, RunRecord};
use crate::kernel::replay::render_replay;
use crate::kernel::seed::seed_units;
use crate::kernel::{
    read_trace, run_evolution, AblationMask, EvolutionResult, GoalPrompt, TerminationReason,
};
use crate::policies::{Policy, SolverAnswer};
use crate::registry::{snapshot, Registry, RoleTag};
use crate::runtime::{Agent, DecisionSettings};
use crate::tasks::game24::game24_solve_bruteforce;
use crate::tasks::{evaluate_policy, Split, UtilityReport};

/// Policies implemented natively rather than as units.
pub const BUILTIN_POLICIES: [&str; 2] = ["bruteforce24", "echo"];

pub struct EvolveOutcome {
    pub report: BatchReport,
    pub results: Vec<EvolutionResult>,
    /// 2 when any run lost its backend, else 0.
    pub exit_code: i32,
}

pub struct EvalOutcome {
    pub policy: String,
    pub report: UtilityReport,
}

impl EvalOutcome {
    pub fn render(&self) -> String {
        format!(
            "{} on {} split: {:.1} ({:.1}, {:.1}) n={}\n",
            self.policy,
            self.report.split,
            100.0 * self.report.mean_score,
            self.report.ci_low,
            self.report.ci_high,
            self.report.n
        )
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn task_note(task: &TaskConfig) -> String {
    match task {
        TaskConfig::Game24 { .. } => "Task: each input is four numbers between 1 and 13 separated by spaces. \
             A correct answer is one arithmetic expression that uses each number exactly once and equals 24."
            .into(),
        TaskConfig::Dataset { scorer, .. } => format!("Task: answers are scored with the {scorer:?} scorer."),
    }
}

fn check_initial_policy(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.initial_policy
        .parse::<Policy>()
        .map(|_| ())
        .map_err(|_| CliError::UnknownPolicy {
            name: cfg.initial_policy.clone(),
            available: Policy::ALL
                .iter()
                .map(|p| p.unit_name().to_string())
                .collect(),
        })
}

/// One evolution run. Artifacts go under `dir` when given.
pub fn evolve_run(
    cfg: &RunConfig,
    run_index: usize,
    dir: Option<&Path>,
) -> Result<(RunRecord, EvolutionResult), CliError> {
    let seed = cfg.seed + run_index as u64;
    let env = cfg.task.environment(seed)?;
    let registry = Registry::new(seed_units(&cfg.initial_policy, &cfg.policy))?;
    let gateway = cfg.gateway()?;
    let mut goal = GoalPrompt::default().with_ablation(cfg.ablation.clone());
    goal.capability_notes.push(task_note(&cfg.task));
    let mut evo = cfg.evolution();
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        evo.trace_path = Some(dir.join("trace.jsonl"));
    }
    let result = run_evolution(&env, &registry, gateway, &goal, &evo)?;
    if let Some(dir) = dir {
        snapshot::write_all(&registry, &dir.join("snapshots"))?;
        let lineage =
            serde_json::to_string_pretty(&registry.lineage()).expect("lineage serializes");
        write(&dir.join("lineage.json"), &(lineage + "\n"))?;
        let mut summary = result.clone();
        summary.trace.clear();
        let text = serde_json::to_string_pretty(&summary).expect("results serialize");
        write(&dir.join("result.json"), &(text + "\n"))?;
    }
    Ok((
        RunRecord::from_result(format!("run-{run_index:02}"), seed, &result),
        result,
    ))
}

/// Runs `jobs` on up to `workers` threads and returns results in job order.
fn parallel<T: Send>(jobs: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs {
                    break;
                }
                let out = f(i);
                slots.lock().expect("result slots poisoned")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}

fn write_batch(cfg: &RunConfig, report: &BatchReport, dir: &Path) -> Result<(), CliError> {
    write(&dir.join("results.json"), &report.to_json())?;
    write(&dir.join("report.txt"), &report.render_text())?;
    if cfg.plot {
        let series: Vec<_> = report
            .runs
            .iter()
            .map(|r| (r.run_id.clone(), progression_curve(r)))
            .collect();
        write(
            &dir.join("progression.svg"),
            &progression_svg(&format!("{} validation score", report.task), &series),
        )?;
    }
    Ok(())
}

/// Runs `budget.runs` independent evolutions and writes their artifacts.
pub fn cmd_evolve(cfg: &RunConfig) -> Result<EvolveOutcome, CliError> {
    cfg.validate()?;
    check_initial_policy(cfg)?;
    cfg.gateway()?;
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    write(&cfg.out.join("config.toml"), &cfg.to_toml())?;
    let outcomes = parallel(cfg.budget.runs, cfg.workers, |i| {
        evolve_run(cfg, i, Some(&cfg.out.join(format!("run-{i:02}"))))
    });
    let mut records = Vec::new();
    let mut results = Vec::new();
    for outcome in outcomes {
        let (record, result) = outcome?;
        records.push(record);
        results.push(result);
    }
    let report = BatchReport::new(cfg.hash(), cfg.task.name(), records)?;
    write_batch(cfg, &report, &cfg.out)?;
    let lost_backend = results
        .iter()
        .any(|r| r.termination_reason == TerminationReason::BackendUnavailable);
    Ok(EvolveOutcome {
        report,
        results,
        exit_code: if lost_backend { 2 } else { 0 },
    })
}

fn parse_hand(input: &str) -> Vec<u32> {
    input
        .split(|c: char| !c.is_ascii_digit())
        .filter_map(|p| p.parse().ok())
        .collect()
}

/// Scores one policy on one split.
pub fn cmd_eval(cfg: &RunConfig, policy: &str, split: Split) -> Result<EvalOutcome, CliError> {
    cfg.validate()?;
    let env = cfg.task.environment(cfg.seed)?;
    let report = match policy {
        "bruteforce24" => {
            let solve = |input: &str| {
                Ok(match game24_solve_bruteforce(&parse_hand(input)) {
                    Some(expr) => SolverAnswer::new(expr),
                    None => SolverAnswer::flagged("no solution"),
                })
            };
            evaluate_policy(&env, &solve, split)?
        }
        "echo" => {
            let solve = |input: &str| Ok(SolverAnswer::new(input));
            evaluate_policy(&env, &solve, split)?
        }
        name => {
            let initial = Policy::ALL
                .iter()
                .find(|p| p.unit_name() == name)
                .map_or(cfg.initial_policy.as_str(), |p| p.unit_name());
            let registry = Registry::new(seed_units(initial, &cfg.policy))?;
            let map = registry.self_inspect();
            if !map
                .units
                .get(name)
                .is_some_and(|u| u.role_tag == RoleTag::Solver)
            {
                let mut available: Vec<String> = map
                    .units
                    .values()
                    .filter(|u| u.role_tag == RoleTag::Solver)
                    .map(|u| u.name.clone())
                    .collect();
                available.extend(BUILTIN_POLICIES.iter().map(|s| s.to_string()));
                return Err(CliError::UnknownPolicy {
                    name: name.to_string(),
                    available,
                });
            }
            let agent = Agent::new(cfg.gateway()?, cfg.constrained, DecisionSettings::default());
            let solve = |input: &str| {
                registry
                    .call(name, (agent.clone(), input.to_string()))
                    .map(SolverAnswer::from_dynamic)
            };
            evaluate_policy(&env, &solve, split)?
        }
    };
    let outcome = EvalOutcome {
        policy: policy.to_string(),
        report,
    };
    let text = serde_json::to_string_pretty(&outcome.report).expect("reports serialize");
    write(
        &cfg.out.join(format!("eval-{policy}-{split}.json")),
        &(text + "\n"),
    )?;
    Ok(outcome)
}

/// Step-by-step rendering of a trace file with diffs of patched units.
pub fn cmd_replay(trace: &Path) -> Result<String, CliError> {
    let events = read_trace(trace)?;
    let mut out = render_replay(&events);
    out.push_str(&format!("{} steps\n", events.len()));
    Ok(out)
}

fn slug(mask: &AblationMask) -> String {
    if mask.0.is_empty() {
        "full".into()
    } else {
        format!(
            "without-{}",
            mask.0
                .iter()
                .map(|c| c.name())
                .collect::<Vec<_>>()
                .join("-")
        )
    }
}

/// One batch per mask over the same seeds.
pub fn cmd_ablate(cfg: &RunConfig, masks: &[AblationMask]) -> Result<AblationTable, CliError> {
    cfg.validate()?;
    check_initial_policy(cfg)?;
    cfg.gateway()?;
    let seeds: Vec<u64> = (0..cfg.budget.runs as u64).map(|i| cfg.seed + i).collect();
    let table = run_ablation(masks, &seeds, |mask, seed| {
        let mut run_cfg = cfg.clone();
        run_cfg.ablation = mask.clone();
        let index = (seed - cfg.seed) as usize;
        let dir = cfg
            .out
            .join("ablation")
            .join(slug(mask))
            .join(format!("run-{index:02}"));
        evolve_run(&run_cfg, index, Some(&dir))
            .map(|(record, _)| record)
            .map_err(|e| e.to_string())
    })?;
    let json = serde_json::to_string_pretty(&table).expect("tables serialize");
    write(&cfg.out.join("ablation.json"), &(json + "\n"))?;
    write(&cfg.out.join("ablation.txt"), &table.render())?;
    Ok(table)
}

/// Re-renders saved results files, optionally plotting them.
pub fn cmd_report(results: &[PathBuf], plot: Option<&Path>) -> Result<String, CliError> {
    if results.is_empty() {
        return Err(CliError::Config("no results files given".into()));
    }
    let mut out = String::new();
    let mut series = Vec::new();
    for path in results {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let report: BatchReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        out.push_str(&report.render_text());
        out.push('\n');
        for r in &report.runs {
            series.push((
                format!("{} {}", report.task, r.run_id),
                progression_curve(r),
            ));
        }
    }
    if let Some(svg) = plot {
        write(svg, &progression_svg("validation score by cycle", &series))?;
    }
    Ok(out)
}
