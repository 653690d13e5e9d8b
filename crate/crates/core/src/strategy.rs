//! Trading positions `Q`.
//!
//! Every strategy is evaluated the same way: at a node of level `k < N` it
//! yields the position held over the next step `(t_k, t_{k+1}]`. That makes
//! `Q` predictable by construction, since the value depends only on the node
//! where the decision is taken. Positions are expressed in claims held by
//! the makers, so the investor owns `-Q`.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::tree::{NodeId, ScenarioTree};

/// Positions as a function of the decision node.
#[derive(Debug, Clone, PartialEq)]
pub enum PositionRule {
    Constant(Vec<f64>),
    /// one expression in `(t, B)` per claim
    Expression(Vec<Expr>),
    /// one position vector per node id
    Table(Vec<Vec<f64>>),
}

impl PositionRule {
    pub fn zero(claims: usize) -> Self {
        PositionRule::Constant(vec![0.0; claims])
    }

    pub fn expressions(sources: &[&str]) -> Result<Self> {
        Ok(PositionRule::Expression(
            sources.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?,
        ))
    }

    pub fn claims(&self) -> Option<usize> {
        match self {
            PositionRule::Constant(q) => Some(q.len()),
            PositionRule::Expression(e) => Some(e.len()),
            PositionRule::Table(rows) => rows.first().map(|r| r.len()),
        }
    }

    /// Position at `node`, with expressions read at time `t`.
    pub fn eval_at(&self, tree: &ScenarioTree, node: NodeId, t: f64) -> Result<Vec<f64>> {
        match self {
            PositionRule::Constant(q) => Ok(q.clone()),
            PositionRule::Expression(exprs) => {
                let b = tree.brownian(node);
                exprs.iter().map(|e| e.eval(t, &b)).collect()
            }
            PositionRule::Table(rows) => rows
                .get(node.0)
                .cloned()
                .ok_or_else(|| Error::input(format!("position table has no row for node {}", node.0))),
        }
    }

    pub fn eval(&self, tree: &ScenarioTree, node: NodeId) -> Result<Vec<f64>> {
        self.eval_at(tree, node, tree.time(node))
    }
}

/// Piecewise-constant positions changed only at rebalance levels.
///
/// At rebalance level `k_n` the position `positions[n]` is taken and held
/// until the next rebalance (or maturity). Before the first rebalance the
/// position is zero. With a trigger, a rebalance only happens at nodes where
/// the trigger expression is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleStrategy {
    levels: Vec<usize>,
    positions: Vec<PositionRule>,
    trigger: Option<Expr>,
    /// time at which expression positions are read, per rebalance
    read_times: Vec<Option<f64>>,
    claims: usize,
}

impl SimpleStrategy {
    pub fn new(levels: Vec<usize>, positions: Vec<PositionRule>, claims: usize) -> Result<Self> {
        if levels.len() != positions.len() {
            return Err(Error::input(format!(
                "{} rebalance levels but {} positions",
                levels.len(),
                positions.len()
            )));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("rebalance levels must be strictly increasing"));
        }
        for p in &positions {
            if let Some(j) = p.claims() {
                if j != claims {
                    return Err(Error::input(format!(
                        "position has {j} entries, the tree has {claims} claims"
                    )));
                }
            }
        }
        let n = levels.len();
        Ok(SimpleStrategy {
            levels,
            positions,
            trigger: None,
            read_times: vec![None; n],
            claims,
        })
    }

    /// The zero strategy.
    pub fn zero(claims: usize) -> Self {
        SimpleStrategy {
            levels: Vec::new(),
            positions: Vec::new(),
            trigger: None,
            read_times: Vec::new(),
            claims,
        }
    }

    /// Buy `q` at time zero and hold to maturity.
    pub fn buy_and_hold(q: Vec<f64>) -> Self {
        let claims = q.len();
        SimpleStrategy::new(vec![0], vec![PositionRule::Constant(q)], claims).expect("one rebalance")
    }

    pub fn with_trigger(mut self, trigger: Expr) -> Self {
        self.trigger = Some(trigger);
        self
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn positions(&self) -> &[PositionRule] {
        &self.positions
    }

    pub fn claims(&self) -> usize {
        self.claims
    }

    pub fn is_zero(&self) -> bool {
        self.positions
            .iter()
            .all(|p| matches!(p, PositionRule::Constant(q) if q.iter().all(|x| *x == 0.0)))
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        if self.claims != tree.claims() {
            return Err(Error::input(format!(
                "strategy trades {} claims, the tree has {}",
                self.claims,
                tree.claims()
            )));
        }
        if let Some(k) = self.levels.iter().find(|k| **k >= tree.steps()) {
            return Err(Error::input(format!(
                "rebalance level {k} is not before maturity (tree has {} steps)",
                tree.steps()
            )));
        }
        Ok(())
    }

    /// Index of the rebalance scheduled at `level`.
    pub fn rebalance_index(&self, level: usize) -> Option<usize> {
        self.levels.binary_search(&level).ok()
    }

    /// New position if a rebalance fires at `node`.
    pub fn decision(&self, tree: &ScenarioTree, node: NodeId) -> Result<Option<Vec<f64>>> {
        let level = tree.level(node);
        let Some(n) = self.rebalance_index(level) else {
            return Ok(None);
        };
        if let Some(trigger) = &self.trigger {
            if trigger.eval(tree.time(node), &tree.brownian(node))? == 0.0 {
                return Ok(None);
            }
        }
        let t = self.read_times[n].unwrap_or(tree.time(node));
        self.positions[n].eval_at(tree, node, t).map(Some)
    }
}

/// How a general strategy is sampled onto a coarse rebalance grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// read the position at the start of each holding interval
    Left,
    /// read it at the middle of the interval, Brownian part at the start
    Midpoint,
}

/// A position process on the tree grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Simple(SimpleStrategy),
    /// evaluated at every node; constant, table or expression
    Rule(PositionRule),
}

impl Strategy {
    pub fn constant(q: Vec<f64>) -> Self {
        Strategy::Rule(PositionRule::Constant(q))
    }

    pub fn zero(claims: usize) -> Self {
        Strategy::constant(vec![0.0; claims])
    }

    pub fn as_simple(&self) -> Option<&SimpleStrategy> {
        match self {
            Strategy::Simple(s) => Some(s),
            Strategy::Rule(_) => None,
        }
    }

    /// Simple approximation with `dates` equally spaced rebalances.
    pub fn simple_approximation(
        &self,
        tree: &ScenarioTree,
        dates: usize,
        sampling: Sampling,
    ) -> Result<SimpleStrategy> {
        let Strategy::Rule(rule) = self else {
            return Err(Error::input("only rule strategies are approximated"));
        };
        let n = tree.steps();
        if dates == 0 || !n.is_multiple_of(dates) {
            return Err(Error::input(format!("{dates} rebalance dates do not divide {n} steps")));
        }
        let stride = n / dates;
        let levels: Vec<usize> = (0..dates).map(|i| i * stride).collect();
        let claims = rule.claims().unwrap_or(tree.claims());
        let mut s = SimpleStrategy::new(levels.clone(), vec![rule.clone(); dates], claims)?;
        if sampling == Sampling::Midpoint {
            s.read_times = levels
                .iter()
                .map(|k| Some(tree.time_of_level(*k) + 0.5 * stride as f64 * tree.dt()))
                .collect();
        }
        Ok(s)
    }

    /// Position decided at `node`, given the position held before it.
    pub fn step(&self, tree: &ScenarioTree, node: NodeId, held: &[f64]) -> Result<Vec<f64>> {
        match self {
            Strategy::Simple(s) => Ok(s.decision(tree, node)?.unwrap_or_else(|| held.to_vec())),
            Strategy::Rule(r) => r.eval(tree, node),
        }
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        match self {
            Strategy::Simple(s) => s.validate(tree),
            Strategy::Rule(r) => match r {
                PositionRule::Table(rows) if rows.len() < tree.node_count() => Err(Error::input(format!(
                    "position table has {} rows for {} nodes",
                    rows.len(),
                    tree.node_count()
                ))),
                _ => match r.claims() {
                    Some(j) if j != tree.claims() => Err(Error::input(format!(
                        "strategy trades {j} claims, the tree has {}",
                        tree.claims()
                    ))),
                    _ => Ok(()),
                },
            },
        }
    }
}
