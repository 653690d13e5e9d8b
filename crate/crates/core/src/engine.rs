//! Strategy engines.
//!
//! [`Engine::execute_simple`] runs a simple strategy by forward induction:
//! at each rebalance node the makers' indirect utilities `U = dF/dv(zeta)`
//! are frozen and the new weights and cash are read off the saddle point of
//! `G(U, 1, theta)`. Because the lattice recombines while the state does
//! not, the exhaustive run branches once per reachable rebalance node; each
//! branch is a [`Regime`] holding one primal point `zeta`.
//!
//! [`Engine::simulate_sde`] drives the indirect utilities directly with the
//! Euler scheme `U <- U + K(U, Q) dB` along sampled lattice paths, where
//! `K = dH/dv` at the saddle point of `G(U, 1, Q)`.
//!
//! State conventions along a path at level `k`: `Q_k` is the position
//! decided at the node and held over `(t_k, t_{k+1}]`, `X_k = G(U_k, 1, Q_k)`
//! and `V_k = -G(U_k, 1, 0)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conjugacy::{Conjugate, DualPoint, SaddleResult};
use crate::error::{Error, Result};
use crate::field::{Field, Order};
use crate::parallel::{try_map_range, Execution};
use crate::representative::{representative_utility, PrimalPoint, WeightVector};
use crate::strategy::{SimpleStrategy, Strategy};
use crate::tree::{NodeId, ScenarioTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub exec: Execution,
    /// explosion when `max U > -explode_factor * |U_0|_inf`
    pub explode_factor: f64,
    /// upper limit on regimes in an exhaustive run
    pub max_regimes: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            exec: Execution::Parallel,
            explode_factor: 1e-10,
            max_regimes: 200_000,
        }
    }
}

/// The market state at one node of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRecord {
    pub level: usize,
    pub node: NodeId,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub x: f64,
    pub v: f64,
    pub q: Vec<f64>,
}

/// A branch of an exhaustive simple-strategy run.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub parent: Option<usize>,
    /// index of the rebalance that opened the regime; `None` for the initial one
    pub rebalance: Option<usize>,
    pub node: NodeId,
    /// probability of the rebalance history that leads here
    pub prob: f64,
    pub zeta: PrimalPoint,
    /// indirect utilities at the opening node
    pub u: Vec<f64>,
    /// `|dF/dv(zeta, node) - dF/dv(zeta_prev, node)|_inf`
    pub preservation: f64,
    pub saddle_residual: f64,
    /// level of the next rebalance, or the number of steps
    pub end_level: usize,
}

/// One leaf of an exhaustive run.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalState {
    pub regime: usize,
    pub leaf: usize,
    pub prob: f64,
    /// `V_T = -(X_T + <Q_T, psi>)`
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleRun {
    pub lambda0: WeightVector,
    pub regimes: Vec<Regime>,
    pub terminal: Vec<TerminalState>,
}

impl SimpleRun {
    /// Largest utility-preservation residual over all rebalances.
    pub fn preservation_residual(&self) -> f64 {
        self.regimes.iter().map(|r| r.preservation).fold(0.0, f64::max)
    }

    pub fn initial(&self) -> &Regime {
        &self.regimes[0]
    }

    /// Regimes opened by an actual rebalance.
    pub fn rebalances(&self) -> impl Iterator<Item = &Regime> {
        self.regimes.iter().filter(|r| r.rebalance.is_some())
    }
}

/// Explosion of the indirect utilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExplosionReport {
    pub exploded: bool,
    pub level: Option<usize>,
    pub node: Option<NodeId>,
    pub max_u: f64,
}

/// One Euler path.
#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub id: usize,
    pub states: Vec<StateRecord>,
    pub explosion: ExplosionReport,
    /// `max |E[U_{k+1} | node] - U_k|` over the visited nodes
    pub one_step_mean: f64,
}

/// `(W, X, V)` recovered from `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredState {
    pub w: Vec<f64>,
    pub x: f64,
    pub v: f64,
    pub saddle: SaddleResult,
}

/// The sandwich of `G(-1, 1, Q) - X` between bounds built from `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CashBounds {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
}

impl CashBounds {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower - tol <= self.middle && self.middle <= self.upper + tol
    }

    /// How far outside the bounds `middle` sits; zero when inside.
    pub fn violation(&self) -> f64 {
        (self.lower - self.middle).max(self.middle - self.upper).max(0.0)
    }
}

/// Expected representative utility before and after trading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoArbitrage {
    /// `E[r(lambda_0, Sigma_0)]`
    pub before: f64,
    /// `E[r(lambda_0, Sigma_0 - V_T)]`
    pub after: f64,
}

impl NoArbitrage {
    pub fn gap(&self) -> f64 {
        self.after - self.before
    }
}

/// A random root-to-leaf walk with per-path reproducible randomness.
pub fn sample_path(tree: &ScenarioTree, seed: u64, path: usize) -> Vec<NodeId> {
    let mut rng = path_rng(seed, path);
    let mut node = tree.root();
    let mut out = vec![node];
    while !tree.is_leaf(node) {
        let u: f64 = rng.random();
        let kids = tree.children(node);
        let mut acc = 0.0;
        let mut next = kids[kids.len() - 1].child;
        for e in &kids {
            acc += e.prob;
            if u < acc {
                next = e.child;
                break;
            }
        }
        node = next;
        out.push(node);
    }
    out
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub struct Engine<'c, 'f, 'a> {
    conj: &'c Conjugate<'f, 'a>,
    opts: EngineOptions,
}

impl<'c, 'f, 'a> Engine<'c, 'f, 'a> {
    pub fn new(conj: &'c Conjugate<'f, 'a>) -> Self {
        Engine {
            conj,
            opts: EngineOptions::default(),
        }
    }

    pub fn with_options(mut self, opts: EngineOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn options(&self) -> EngineOptions {
        self.opts
    }

    fn field(&self) -> &'f Field<'a> {
        self.conj.field()
    }

    fn tree(&self) -> &'a ScenarioTree {
        self.field().tree()
    }

    fn check_lambda(&self, lambda0: &WeightVector) -> Result<()> {
        if lambda0.len() != self.field().panel().len() {
            return Err(Error::input(format!(
                "initial weights have {} entries for a panel of {}",
                lambda0.len(),
                self.field().panel().len()
            )));
        }
        if !lambda0.is_normalized(1e-12) {
            return Err(Error::input("initial weights must lie on the simplex"));
        }
        Ok(())
    }

    /// `U_0 = dF/dv(lambda_0, 0, 0)` at the root.
    pub fn initial_utilities(&self, lambda0: &WeightVector) -> Result<Vec<f64>> {
        self.check_lambda(lambda0)?;
        let z0 = PrimalPoint::initial(lambda0.clone(), self.tree().claims());
        Ok(self.field().at(&z0, self.tree().root(), Order::Gradient)?.grad_v)
    }

    fn rebalance(
        &self,
        zeta: &PrimalPoint,
        node: NodeId,
        theta: Vec<f64>,
        warm: Option<&SaddleResult>,
    ) -> Result<(PrimalPoint, Vec<f64>, f64, f64, SaddleResult)> {
        let u = self.field().at(zeta, node, Order::Gradient)?.grad_v;
        let b = DualPoint::new(u.clone(), 1.0, theta.clone())?;
        let s = self
            .conj
            .solve(&b, node, warm)
            .map_err(|e| e.context(format!("rebalance at node {}", node.0)))?;
        let next = PrimalPoint::new(s.v.clone(), s.x, theta);
        let after = self.field().at(&next, node, Order::Gradient)?.grad_v;
        let preservation = max_gap(&after, &u);
        Ok((next, u, preservation, s.residual, s))
    }

    /// Exhaustive forward induction over every reachable rebalance history.
    pub fn execute_simple(&self, strategy: &SimpleStrategy, lambda0: &WeightVector) -> Result<SimpleRun> {
        self.check_lambda(lambda0)?;
        let tree = self.tree();
        strategy.validate(tree)?;
        let levels = strategy.levels();
        let root = tree.root();
        let z0 = PrimalPoint::initial(lambda0.clone(), tree.claims());
        let u0 = self.field().at(&z0, root, Order::Gradient)?.grad_v;
        let mut regimes = vec![Regime {
            parent: None,
            rebalance: None,
            node: root,
            prob: 1.0,
            zeta: z0,
            u: u0,
            preservation: 0.0,
            saddle_residual: 0.0,
            end_level: levels.first().copied().unwrap_or(tree.steps()),
        }];
        let mut frontier = vec![0usize];
        for (n, &level) in levels.iter().enumerate() {
            let end_level = levels.get(n + 1).copied().unwrap_or(tree.steps());
            let mut jobs = Vec::new();
            for &r in &frontier {
                for (node, p) in tree.reachable_at_level(regimes[r].node, level) {
                    jobs.push((r, node, p));
                }
            }
            if regimes.len() + jobs.len() > self.opts.max_regimes {
                return Err(Error::input(format!(
                    "exhaustive run needs more than {} regimes; use path mode",
                    self.opts.max_regimes
                )));
            }
            let done = &regimes;
            let created = try_map_range(self.opts.exec, jobs.len(), |i| -> Result<Regime> {
                let (r, node, p) = jobs[i];
                let parent = &done[r];
                let base = Regime {
                    parent: Some(r),
                    rebalance: Some(n),
                    node,
                    prob: parent.prob * p,
                    zeta: parent.zeta.clone(),
                    u: Vec::new(),
                    preservation: 0.0,
                    saddle_residual: 0.0,
                    end_level,
                };
                match strategy.decision(tree, node)? {
                    None => {
                        let u = self.field().at(&parent.zeta, node, Order::Gradient)?.grad_v;
                        Ok(Regime { u, ..base })
                    }
                    Some(theta) => {
                        let (zeta, u, preservation, residual, _) = self.rebalance(&parent.zeta, node, theta, None)?;
                        Ok(Regime {
                            zeta,
                            u,
                            preservation,
                            saddle_residual: residual,
                            ..base
                        })
                    }
                }
            })?;
            let start = regimes.len();
            regimes.extend(created);
            frontier = (start..regimes.len()).collect();
        }
        let mut terminal = Vec::new();
        for &r in &frontier {
            let reg = &regimes[r];
            tree.for_each_leaf(reg.node, |leaf, p| {
                let psi = tree.leaf_claims(leaf);
                let gain = -(reg.zeta.x + reg.zeta.q.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>());
                terminal.push(TerminalState {
                    regime: r,
                    leaf,
                    prob: reg.prob * p,
                    gain,
                });
            });
        }
        Ok(SimpleRun {
            lambda0: lambda0.clone(),
            regimes,
            terminal,
        })
    }

    /// Regime of `run` in force at `node`, given the rebalance nodes visited
    /// by a path: the deepest regime whose opening node lies on the path at
    /// or before the node's level.
    pub fn regime_on_path(&self, run: &SimpleRun, path: &[NodeId], level: usize) -> usize {
        let mut current = 0;
        loop {
            let next = run.regimes.iter().enumerate().position(|(_, r)| {
                r.parent == Some(current) && {
                    let k = self.tree().level(r.node);
                    k <= level && path.get(k) == Some(&r.node)
                }
            });
            match next {
                Some(i) => current = i,
                None => return current,
            }
        }
    }

    /// State at `node` inside a regime.
    pub fn regime_state(&self, reg: &Regime, node: NodeId) -> Result<StateRecord> {
        let u = self.field().at(&reg.zeta, node, Order::Gradient)?.grad_v;
        let v = -self
            .conj
            .g(&DualPoint::new(u.clone(), 1.0, vec![0.0; reg.zeta.q.len()])?, node)?;
        Ok(StateRecord {
            level: self.tree().level(node),
            node,
            u,
            w: reg.zeta.v.as_slice().to_vec(),
            x: reg.zeta.x,
            v,
            q: reg.zeta.q.clone(),
        })
    }

    /// Forward induction along one lattice path.
    pub fn execute_simple_path(
        &self,
        strategy: &SimpleStrategy,
        lambda0: &WeightVector,
        path: &[NodeId],
    ) -> Result<Vec<StateRecord>> {
        self.check_lambda(lambda0)?;
        let tree = self.tree();
        strategy.validate(tree)?;
        let j = tree.claims();
        let mut zeta = PrimalPoint::initial(lambda0.clone(), j);
        let mut warm: Option<SaddleResult> = None;
        let mut warm_gain: Option<SaddleResult> = None;
        let mut out = Vec::with_capacity(path.len());
        for (k, &node) in path.iter().enumerate() {
            let u = self.field().at(&zeta, node, Order::Gradient)?.grad_v;
            if k < tree.steps() {
                if let Some(theta) = strategy.decision(tree, node)? {
                    let (next, _, _, _, s) = self.rebalance(&zeta, node, theta, warm.as_ref())?;
                    zeta = next;
                    warm = Some(s);
                }
            }
            let g0 = self
                .conj
                .solve(&DualPoint::new(u.clone(), 1.0, vec![0.0; j])?, node, warm_gain.as_ref())?;
            out.push(StateRecord {
                level: k,
                node,
                u,
                w: zeta.v.as_slice().to_vec(),
                x: zeta.x,
                v: -g0.g,
                q: zeta.q.clone(),
            });
            warm_gain = Some(g0);
        }
        Ok(out)
    }

    /// `K(u, q) = dH/dv` at the saddle point of `G(u, 1, q)`, row-major `M x d`.
    pub fn kernel_k(
        &self,
        u: &[f64],
        q: &[f64],
        node: NodeId,
        warm: Option<&SaddleResult>,
    ) -> Result<(Vec<f64>, SaddleResult)> {
        let b = DualPoint::new(u.to_vec(), 1.0, q.to_vec())?;
        let s = self.conj.solve(&b, node, warm)?;
        let h = self.field().integrand(&s.primal(q), node)?;
        Ok((h.dh_dv, s))
    }

    /// `W`, `X = G(U, 1, Q)` and `V = -G(U, 1, 0)` at `node`.
    pub fn state_from_u(&self, u: &[f64], q: &[f64], node: NodeId) -> Result<RecoveredState> {
        let s = self
            .conj
            .solve(&DualPoint::new(u.to_vec(), 1.0, q.to_vec())?, node, None)?;
        let g0 = self
            .conj
            .g(&DualPoint::new(u.to_vec(), 1.0, vec![0.0; q.len()])?, node)?;
        Ok(RecoveredState {
            w: s.v.as_slice().to_vec(),
            x: s.x,
            v: -g0,
            saddle: s,
        })
    }

    /// Euler scheme for the indirect utilities along the lattice path `path`.
    pub fn simulate_path(&self, strategy: &Strategy, u0: &[f64], path: &[NodeId], id: usize) -> Result<SdePath> {
        let tree = self.tree();
        let j = tree.claims();
        let d = tree.dim();
        let m = u0.len();
        let eps = self.opts.explode_factor * max_abs(u0);
        let mut u = u0.to_vec();
        let mut held = vec![0.0; j];
        let mut warm: Option<SaddleResult> = None;
        let mut warm_gain: Option<SaddleResult> = None;
        let mut states = Vec::with_capacity(path.len());
        let mut explosion = ExplosionReport {
            max_u: u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ..Default::default()
        };
        let mut one_step: f64 = 0.0;
        for (k, &node) in path.iter().enumerate() {
            let leaf = k == tree.steps();
            let q = if leaf {
                held.clone()
            } else {
                strategy.step(tree, node, &held)?
            };
            let ctx = |e: Error| e.context(format!("path {id}, level {k}, node {}", node.0));
            let b = DualPoint::new(u.clone(), 1.0, q.clone()).map_err(ctx)?;
            let s = self.conj.solve(&b, node, warm.as_ref()).map_err(ctx)?;
            let g0 = self
                .conj
                .solve(
                    &DualPoint::new(u.clone(), 1.0, vec![0.0; j]).map_err(ctx)?,
                    node,
                    warm_gain.as_ref(),
                )
                .map_err(ctx)?;
            states.push(StateRecord {
                level: k,
                node,
                u: u.clone(),
                w: s.v.as_slice().to_vec(),
                x: s.x,
                v: -g0.g,
                q: q.clone(),
            });
            if leaf {
                break;
            }
            let h = self.field().integrand(&s.primal(&q), node).map_err(ctx)?;
            let kids = tree.children(node);
            for r in 0..m {
                let row = h.dh_dv_row(r);
                let mean: f64 = kids
                    .iter()
                    .map(|e| e.prob * row.iter().zip(&e.db).map(|(a, b)| a * b).sum::<f64>())
                    .sum();
                one_step = one_step.max(mean.abs());
            }
            let next = path[k + 1];
            let edge = kids
                .iter()
                .find(|e| e.child == next)
                .ok_or_else(|| Error::input(format!("path {id} leaves the tree at level {k}")))?;
            for (r, ur) in u.iter_mut().enumerate() {
                *ur += h.dh_dv_row(r).iter().zip(&edge.db).map(|(a, b)| a * b).sum::<f64>();
            }
            debug_assert_eq!(h.h.len(), d);
            let top = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            explosion.max_u = explosion.max_u.max(top);
            if top > -eps {
                explosion.exploded = true;
                explosion.level = Some(k + 1);
                explosion.node = Some(next);
                break;
            }
            held = q;
            warm = Some(s);
            warm_gain = Some(g0);
        }
        Ok(SdePath {
            id,
            states,
            explosion,
            one_step_mean: one_step,
        })
    }

    /// Euler paths `0..paths`, each on its own random stream of `seed`.
    pub fn simulate_sde(
        &self,
        strategy: &Strategy,
        lambda0: &WeightVector,
        paths: usize,
        seed: u64,
    ) -> Result<Vec<SdePath>> {
        strategy.validate(self.tree())?;
        let u0 = self.initial_utilities(lambda0)?;
        try_map_range(self.opts.exec, paths, |i| {
            let path = sample_path(self.tree(), seed, i);
            self.simulate_path(strategy, &u0, &path, i)
        })
    }

    /// Sandwich bounds on `G(-1, 1, q) - x` in terms of `u` and the panel constant.
    pub fn cash_bounds(&self, u: &[f64], q: &[f64], x: f64, node: NodeId) -> Result<CashBounds> {
        let c = self.field().panel().bound_constant();
        let ones = vec![-1.0; u.len()];
        let g = self.conj.g(&DualPoint::new(ones, 1.0, q.to_vec())?, node)?;
        let mut lower = 0.0;
        let mut upper = 0.0;
        for um in u {
            let a = -um;
            lower += a.max(1.0).ln() / c + c * a.min(1.0).ln();
            upper += a.min(1.0).ln() / c + c * a.max(1.0).ln();
        }
        Ok(CashBounds {
            lower,
            middle: g - x,
            upper,
        })
    }

    /// Expected representative utility at `lambda_0` with and without the
    /// trader's terminal gain removed from the makers' endowment.
    pub fn no_arbitrage(&self, run: &SimpleRun) -> Result<NoArbitrage> {
        let tree = self.tree();
        let panel = self.field().panel();
        let z0 = PrimalPoint::initial(run.lambda0.clone(), tree.claims());
        let before = self.field().at(&z0, tree.root(), Order::Value)?.value;
        let mut after = 0.0;
        for t in &run.terminal {
            let s = tree.leaf_endowment(t.leaf) - t.gain;
            after += t.prob * representative_utility(panel, &run.lambda0, s)?.r;
        }
        Ok(NoArbitrage { before, after })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::PositionRule;
    use crate::tree::{Payoff, TreeSpec};
    use crate::utility::{MakerPanel, UtilitySpec};

    fn tree(steps: usize) -> ScenarioTree {
        TreeSpec::new(
            steps,
            1.0,
            1,
            Payoff::expression("0.4*B").unwrap(),
            vec![Payoff::expression("1 + 0.3*B").unwrap()],
        )
        .build()
        .unwrap()
    }

    fn mixed() -> MakerPanel {
        MakerPanel::new(vec![
            UtilitySpec::sum_of_exponentials(vec![1.0, 0.5], vec![1.0, 2.0]).unwrap(),
            UtilitySpec::exponential(1.5).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn zero_strategy_leaves_state_untouched() {
        let panel = mixed();
        let t = tree(4);
        let field = Field::new(&panel, &t);
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj);
        let lambda = WeightVector::new(vec![0.4, 0.6]).unwrap();
        let s = SimpleStrategy::new(vec![0, 2], vec![PositionRule::zero(1); 2], 1).unwrap();
        let run = eng.execute_simple(&s, &lambda).unwrap();
        for r in &run.regimes {
            assert!(r.zeta.x.abs() < 1e-9);
            assert!(max_gap(r.zeta.v.as_slice(), lambda.as_slice()) < 1e-9);
        }
        assert!(run.terminal.iter().all(|t| t.gain.abs() < 1e-9));
        let na = eng.no_arbitrage(&run).unwrap();
        assert!(na.gap().abs() < 1e-10);
    }

    #[test]
    fn round_trip_costs_the_trader() {
        let panel = mixed();
        let t = tree(4);
        let field = Field::new(&panel, &t);
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj);
        let lambda = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let s = SimpleStrategy::new(
            vec![0, 2],
            vec![PositionRule::Constant(vec![1.0]), PositionRule::zero(1)],
            1,
        )
        .unwrap();
        let run = eng.execute_simple(&s, &lambda).unwrap();
        assert!(run.preservation_residual() < 1e-9);
        let mean: f64 = run.terminal.iter().map(|t| t.prob * t.gain).sum();
        assert!(mean < 0.0);
        let na = eng.no_arbitrage(&run).unwrap();
        assert!(na.gap() > 1e-10);
    }

    #[test]
    fn path_mode_matches_exhaustive() {
        let panel = mixed();
        let t = tree(4);
        let field = Field::new(&panel, &t);
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj);
        let lambda = WeightVector::new(vec![0.3, 0.7]).unwrap();
        let s = SimpleStrategy::new(
            vec![1, 3],
            vec![
                PositionRule::expressions(&["B"]).unwrap(),
                PositionRule::Constant(vec![0.5]),
            ],
            1,
        )
        .unwrap();
        let run = eng.execute_simple(&s, &lambda).unwrap();
        let path = sample_path(&t, 7, 0);
        let states = eng.execute_simple_path(&s, &lambda, &path).unwrap();
        let r = eng.regime_on_path(&run, &path, 4);
        assert!((states[4].x - run.regimes[r].zeta.x).abs() < 1e-10);
        assert_eq!(states[4].q, run.regimes[r].zeta.q);
    }

    #[test]
    fn zero_position_euler_has_no_gain() {
        let panel = MakerPanel::exponential(&[1.0, 2.0]).unwrap();
        let t = tree(8);
        let field = Field::new(&panel, &t);
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj);
        let lambda = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let paths = eng.simulate_sde(&Strategy::zero(1), &lambda, 4, 1).unwrap();
        for p in paths {
            assert!(!p.explosion.exploded);
            assert!(p.one_step_mean < 1e-14);
            for s in &p.states {
                assert!(s.x.abs() < 1e-9 && s.v.abs() < 1e-9, "{s:?}");
            }
        }
    }

    #[test]
    fn paths_are_reproducible() {
        let t = tree(16);
        assert_eq!(sample_path(&t, 3, 5), sample_path(&t, 3, 5));
        assert_ne!(sample_path(&t, 3, 5), sample_path(&t, 3, 6));
    }
}
