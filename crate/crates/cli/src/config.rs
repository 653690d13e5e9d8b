//! Experiment configuration read from TOML.

use std::path::{Path, PathBuf};

use indiff::bachelier::BachelierParams;
use indiff::expr::Expr;
use indiff::parallel::Execution;
use indiff::strategy::{PositionRule, Sampling, SimpleStrategy, Strategy};
use indiff::verify::Sabotage;
use indiff::{MakerPanel, Payoff, ScenarioTree, TreeSpec, UtilitySpec, WeightVector};
use serde::Deserialize;

/// Everything that can go wrong before any numerics run.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<indiff::Error> for ConfigError {
    fn from(e: indiff::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {msg}"))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub panel: Option<PanelBlock>,
    pub tree: Option<TreeBlock>,
    pub strategy: Option<StrategyBlock>,
    #[serde(default)]
    pub engine: EngineBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub bachelier: BachelierBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MakerBlock {
    Exponential { gamma: f64 },
    SumOfExponentials { weights: Vec<f64>, rates: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelBlock {
    pub makers: Vec<MakerBlock>,
    /// initial Pareto weights; uniform when absent
    pub weights: Option<Vec<f64>>,
    /// overrides the computed bound constant
    pub bound_constant: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeBlock {
    pub steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "half")]
    pub prob_up: f64,
    pub endowment: String,
    #[serde(default)]
    pub claims: Vec<String>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Zero,
    Constant,
    Expression,
    Table,
    Simple,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RebalanceBlock {
    pub positions: Option<Vec<f64>>,
    pub expressions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyBlock {
    #[serde(default)]
    pub kind: StrategyKind,
    pub positions: Option<Vec<f64>>,
    pub expressions: Option<Vec<String>>,
    pub table: Option<Vec<Vec<f64>>>,
    /// rebalance levels of a simple strategy
    pub levels: Option<Vec<usize>>,
    #[serde(default)]
    pub rebalance: Vec<RebalanceBlock>,
    pub trigger: Option<String>,
    /// sample a rule strategy on this many equally spaced dates
    pub dates: Option<usize>,
    #[serde(default)]
    pub sampling: SamplingName,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SamplingName {
    #[default]
    Midpoint,
    Left,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler scheme for the indirect utilities on sampled paths
    #[default]
    Euler,
    /// forward induction of a simple strategy along sampled paths
    Forward,
    /// forward induction over every rebalance history
    Exhaustive,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionName {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineBlock {
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub execution: ExecutionName,
    #[serde(default = "default_explode")]
    pub explode_factor: f64,
    #[serde(default = "default_saddle_tol")]
    pub saddle_tolerance: f64,
    #[serde(default = "default_max_regimes")]
    pub max_regimes: usize,
}

fn default_paths() -> usize {
    100
}

fn default_seed() -> u64 {
    1
}

fn default_explode() -> f64 {
    1e-10
}

fn default_saddle_tol() -> f64 {
    1e-10
}

fn default_max_regimes() -> usize {
    200_000
}

impl Default for EngineBlock {
    fn default() -> Self {
        EngineBlock {
            scheme: Scheme::default(),
            paths: default_paths(),
            seed: default_seed(),
            execution: ExecutionName::default(),
            explode_factor: default_explode(),
            saddle_tolerance: default_saddle_tol(),
            max_regimes: default_max_regimes(),
        }
    }
}

impl EngineBlock {
    pub fn execution(&self) -> Execution {
        match self.execution {
            ExecutionName::Parallel => Execution::Parallel,
            ExecutionName::Sequential => Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BachelierBlock {
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub q: f64,
    #[serde(default = "default_bachelier_steps")]
    pub steps: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
}

fn default_mu() -> f64 {
    0.1
}

fn default_sigma() -> f64 {
    0.2
}

fn default_s() -> f64 {
    10.0
}

fn default_bachelier_steps() -> usize {
    512
}

impl Default for BachelierBlock {
    fn default() -> Self {
        let p = BachelierParams::default();
        BachelierBlock {
            gamma: p.gamma,
            b: p.b,
            mu: p.mu,
            sigma: p.sigma,
            s: p.s,
            horizon: p.horizon,
            q: 1.0,
            steps: default_bachelier_steps(),
            paths: default_paths(),
        }
    }
}

impl BachelierBlock {
    pub fn params(&self) -> Result<BachelierParams, ConfigError> {
        let p = BachelierParams {
            gamma: self.gamma,
            b: self.b,
            mu: self.mu,
            sigma: self.sigma,
            s: self.s,
            horizon: self.horizon,
        };
        p.validate().map_err(|e| bad("bachelier", e))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SabotageName {
    #[default]
    None,
    TreeProbabilities,
    Signs,
    Tolerance,
}

impl From<SabotageName> for Sabotage {
    fn from(s: SabotageName) -> Self {
        match s {
            SabotageName::None => Sabotage::None,
            SabotageName::TreeProbabilities => Sabotage::TreeProbabilities,
            SabotageName::Signs => Sabotage::Signs,
            SabotageName::Tolerance => Sabotage::Tolerance,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub sabotage: SabotageName,
    /// paths for the Bachelier suite
    #[serde(default = "default_verify_paths")]
    pub paths: usize,
    /// paths for the convergence suite
    #[serde(default = "default_convergence_paths")]
    pub convergence_paths: usize,
    /// tree depth for the Bachelier suite
    #[serde(default = "default_verify_steps")]
    pub steps: usize,
    /// run on random scenarios even when the config has a panel and tree
    #[serde(default)]
    pub random: bool,
}

fn default_probes() -> usize {
    50
}

fn default_verify_paths() -> usize {
    200
}

fn default_convergence_paths() -> usize {
    16
}

fn default_verify_steps() -> usize {
    128
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            probes: default_probes(),
            seed: default_seed(),
            sabotage: SabotageName::None,
            paths: default_verify_paths(),
            convergence_paths: default_convergence_paths(),
            steps: default_verify_steps(),
            random: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(&path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let e = &self.engine;
        if !(e.explode_factor > 0.0) {
            return Err(bad("engine.explode_factor", "must be positive"));
        }
        if !(e.saddle_tolerance > 0.0) {
            return Err(bad("engine.saddle_tolerance", "must be positive"));
        }
        if e.paths == 0 {
            return Err(bad("engine.paths", "must be at least 1"));
        }
        if self.strategy.is_some() && (self.panel.is_none() || self.tree.is_none()) {
            return Err(bad("strategy", "needs [panel] and [tree] blocks"));
        }
        Ok(())
    }

    pub fn panel(&self) -> Result<MakerPanel, ConfigError> {
        let block = self.panel.as_ref().ok_or_else(|| bad("panel", "block missing"))?;
        if block.makers.is_empty() {
            return Err(bad("panel.makers", "at least one maker is required"));
        }
        let specs = block
            .makers
            .iter()
            .enumerate()
            .map(|(i, m)| {
                match m {
                    MakerBlock::Exponential { gamma } => UtilitySpec::exponential(*gamma),
                    MakerBlock::SumOfExponentials { weights, rates } => {
                        UtilitySpec::sum_of_exponentials(weights.clone(), rates.clone())
                    }
                }
                .map_err(|e| bad(&format!("panel.makers[{i}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let panel = match block.bound_constant {
            Some(c) => MakerPanel::with_bound_constant(specs, c),
            None => MakerPanel::new(specs),
        };
        panel.map_err(|e| bad("panel", e))
    }

    pub fn lambda0(&self, m: usize) -> Result<WeightVector, ConfigError> {
        match self.panel.as_ref().and_then(|p| p.weights.clone()) {
            None => Ok(WeightVector::uniform(m)),
            Some(w) if w.len() != m => Err(bad("panel.weights", format!("{} weights for {m} makers", w.len()))),
            Some(w) => Ok(WeightVector::new(w).map_err(|e| bad("panel.weights", e))?.normalized()),
        }
    }

    pub fn tree_spec(&self, steps: Option<usize>) -> Result<TreeSpec, ConfigError> {
        let t = self.tree.as_ref().ok_or_else(|| bad("tree", "block missing"))?;
        let endowment = Payoff::expression(&t.endowment).map_err(|e| bad("tree.endowment", e))?;
        let claims = t
            .claims
            .iter()
            .enumerate()
            .map(|(i, c)| Payoff::expression(c).map_err(|e| bad(&format!("tree.claims[{i}]"), e)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut spec = TreeSpec::new(steps.unwrap_or(t.steps), t.horizon, t.dim, endowment, claims);
        spec.prob_up = t.prob_up;
        Ok(spec)
    }

    pub fn tree(&self, steps: Option<usize>) -> Result<ScenarioTree, ConfigError> {
        self.tree_spec(steps)?.build().map_err(|e| bad("tree", e))
    }

    pub fn strategy(&self, tree: &ScenarioTree) -> Result<Strategy, ConfigError> {
        let j = tree.claims();
        let Some(s) = &self.strategy else {
            return Ok(Strategy::zero(j));
        };
        let exprs = |key: &str, v: &Option<Vec<String>>| -> Result<PositionRule, ConfigError> {
            let v = v.as_ref().ok_or_else(|| bad(key, "missing"))?;
            let refs: Vec<&str> = v.iter().map(|x| x.as_str()).collect();
            PositionRule::expressions(&refs).map_err(|e| bad(key, e))
        };
        let rule = match s.kind {
            StrategyKind::Zero => PositionRule::zero(j),
            StrategyKind::Constant => PositionRule::Constant(
                s.positions
                    .clone()
                    .ok_or_else(|| bad("strategy.positions", "missing"))?,
            ),
            StrategyKind::Expression => exprs("strategy.expressions", &s.expressions)?,
            StrategyKind::Table => {
                PositionRule::Table(s.table.clone().ok_or_else(|| bad("strategy.table", "missing"))?)
            }
            StrategyKind::Simple => {
                let levels = s.levels.clone().ok_or_else(|| bad("strategy.levels", "missing"))?;
                let positions = s
                    .rebalance
                    .iter()
                    .enumerate()
                    .map(|(i, r)| match (&r.positions, &r.expressions) {
                        (Some(p), None) => Ok(PositionRule::Constant(p.clone())),
                        (None, Some(_)) => exprs(&format!("strategy.rebalance[{i}].expressions"), &r.expressions),
                        _ => Err(bad(
                            &format!("strategy.rebalance[{i}]"),
                            "give exactly one of positions or expressions",
                        )),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let mut simple = SimpleStrategy::new(levels, positions, j).map_err(|e| bad("strategy", e))?;
                if let Some(t) = &s.trigger {
                    simple = simple.with_trigger(Expr::parse(t).map_err(|e| bad("strategy.trigger", e))?);
                }
                let strategy = Strategy::Simple(simple);
                strategy.validate(tree).map_err(|e| bad("strategy", e))?;
                return Ok(strategy);
            }
        };
        let strategy = Strategy::Rule(rule);
        strategy.validate(tree).map_err(|e| bad("strategy", e))?;
        match s.dates {
            None => Ok(strategy),
            Some(n) => {
                let sampling = match s.sampling {
                    SamplingName::Midpoint => Sampling::Midpoint,
                    SamplingName::Left => Sampling::Left,
                };
                let simple = strategy
                    .simple_approximation(tree, n, sampling)
                    .map_err(|e| bad("strategy.dates", e))?;
                Ok(Strategy::Simple(simple))
            }
        }
    }

    /// `--out`, then `INDIFF_OUTPUT_DIR`, then `[output] dir`, then `indiff-out`.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUTPUT_ENV) {
            return PathBuf::from(p);
        }
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("indiff-out"))
    }
}

pub const OUTPUT_ENV: &str = "INDIFF_OUTPUT_DIR";
