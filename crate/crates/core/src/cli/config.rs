use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use super::CliError;
use crate::gateway::live::LiveBackend;
use crate::gateway::{Budget, CostUnits, Gateway, ModelTiers, PriceTable, ScriptFile};
use crate::kernel::{AblationMask, Clock, EvolutionConfig};
use crate::policies::PolicyParams;
use crate::runtime::DecisionSettings;
use crate::sandbox::SandboxConfig;
use crate::tasks::{load_dataset, Environment, Scorer, SplitSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    /// Generated solvable hands.
    Game24 { val_n: usize, test_n: usize },
    /// Line-delimited `{id, input, gold}` records.
    Dataset {
        path: PathBuf,
        scorer: Scorer,
        val_n: usize,
        test_n: usize,
        #[serde(default = "one")]
        repeats: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Game24 {
            val_n: 128,
            test_n: 800,
        }
    }
}

impl TaskConfig {
    pub fn name(&self) -> String {
        match self {
            TaskConfig::Game24 { .. } => "game24".into(),
            TaskConfig::Dataset { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        }
    }

    /// Builds the environment; `seed` picks the hands or the shuffle.
    pub fn environment(&self, seed: u64) -> Result<Environment, CliError> {
        Ok(match self {
            TaskConfig::Game24 { val_n, test_n } => Environment::game24(seed, *val_n, *test_n)?,
            TaskConfig::Dataset {
                path,
                scorer,
                val_n,
                test_n,
                repeats,
            } => load_dataset(
                path,
                *scorer,
                SplitSpec {
                    val_n: *val_n,
                    test_n: *test_n,
                    seed,
                },
                *repeats,
            )?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Scripted {
        script: PathBuf,
    },
    /// OpenAI-compatible chat completions. The key is read from `api_key_env`.
    Live {
        base_url: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
        strong_model: String,
        weak_model: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        prices: PriceTable,
    },
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    60
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Live {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: default_key_env(),
            strong_model: "gpt-4o-mini".into(),
            weak_model: "gpt-4o-mini".into(),
            timeout_secs: default_timeout(),
            prices: PriceTable::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    /// Cost cap per run, in price-table units.
    pub max_cost: f64,
    pub max_calls: u64,
    pub max_cycles: usize,
    pub runs: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_cost: 15.0,
            max_calls: 100_000,
            max_cycles: 30,
            runs: 6,
        }
    }
}

/// Everything a batch needs. Precedence: command-line flags, then this
/// file, then defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub initial_policy: String,
    pub ablation: AblationMask,
    /// Solver calls pinned to the weak tier and no network for run_code.
    pub constrained: bool,
    pub out: PathBuf,
    pub workers: usize,
    pub plot: bool,
    pub history_window: usize,
    pub collapse_ratio: f64,
    pub decision_retries: usize,
    pub task: TaskConfig,
    pub backend: BackendConfig,
    pub budget: BudgetConfig,
    pub policy: PolicyParams,
    pub sandbox: SandboxConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            initial_policy: "cot".into(),
            ablation: AblationMask::none(),
            constrained: false,
            out: PathBuf::from("runs"),
            workers: 1,
            plot: false,
            history_window: 20,
            collapse_ratio: 0.5,
            decision_retries: 2,
            task: TaskConfig::default(),
            backend: BackendConfig::default(),
            budget: BudgetConfig::default(),
            policy: PolicyParams::default(),
            sandbox: SandboxConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a TOML config. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let TaskConfig::Dataset { path, .. } = &mut cfg.task {
            resolve(base, path);
        }
        if let BackendConfig::Scripted { script } = &mut cfg.backend {
            resolve(base, script);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        crate::harness::report::config_hash(&self.to_toml())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.budget.max_cost.is_finite() && self.budget.max_cost >= 0.0) {
            return bad(format!(
                "budget.max_cost must be >= 0, got {}",
                self.budget.max_cost
            ));
        }
        if self.budget.runs == 0 {
            return bad("budget.runs must be >= 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.initial_policy.trim().is_empty() {
            return bad("initial_policy is empty".into());
        }
        if !(0.0..=1.0).contains(&self.collapse_ratio) {
            return bad(format!(
                "collapse_ratio {} outside [0, 1]",
                self.collapse_ratio
            ));
        }
        if self.sandbox.timeout_secs <= 0.0 {
            return bad("sandbox.timeout_secs must be positive".into());
        }
        if self.policy.samples == 0 || self.policy.roles.is_empty() {
            return bad("policy.samples and policy.roles must be non-empty".into());
        }
        match &self.task {
            TaskConfig::Game24 { val_n, test_n } | TaskConfig::Dataset { val_n, test_n, .. }
                if *val_n == 0 || *test_n == 0 =>
            {
                return bad("task splits must be non-empty".into())
            }
            TaskConfig::Dataset { repeats: 0, .. } => {
                return bad("task.repeats must be >= 1".into())
            }
            _ => {}
        }
        Ok(())
    }

    pub fn evolution(&self) -> EvolutionConfig {
        let mut sandbox = self.sandbox.clone();
        if self.constrained {
            sandbox.allow_network = false;
        }
        EvolutionConfig {
            policy_unit: "solver".into(),
            max_cycles: self.budget.max_cycles,
            history_window: self.history_window,
            ablation: self.ablation.clone(),
            collapse_ratio: self.collapse_ratio,
            decision: DecisionSettings {
                retries: self.decision_retries,
                ..Default::default()
            },
            constrained: self.constrained,
            sandbox,
            clock: Clock::Logical,
            trace_path: None,
            stop: None,
        }
    }

    pub fn budget(&self) -> Budget {
        Budget::new(
            CostUnits::from_f64(self.budget.max_cost),
            self.budget.max_calls,
        )
    }

    /// A fresh gateway with a fresh budget; scripts restart from the top.
    pub fn gateway(&self) -> Result<Arc<Gateway>, CliError> {
        Ok(Arc::new(match &self.backend {
            BackendConfig::Scripted { script } => {
                Gateway::scripted(ScriptFile::load(script)?, self.budget())
            }
            BackendConfig::Live {
                base_url,
                api_key_env,
                strong_model,
                weak_model,
                timeout_secs,
                prices,
            } => {
                let key = std::env::var(api_key_env)
                    .ok()
                    .filter(|k| !k.trim().is_empty())
                    .ok_or_else(|| CliError::MissingKey(api_key_env.clone()))?;
                let timeout = Duration::from_secs(*timeout_secs);
                let backend = Arc::new(
                    LiveBackend::new(base_url, key, timeout)
                        .map_err(|e| CliError::Backend(e.to_string()))?,
                );
                Gateway::new(
                    backend.clone(),
                    backend,
                    ModelTiers {
                        strong: strong_model.clone(),
                        weak: weak_model.clone(),
                    },
                    prices.clone(),
                    self.budget(),
                )
            }
        }))
    }
}
