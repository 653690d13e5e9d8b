//! Property suites over random or configured scenarios.
//!
//! Every suite returns a [`SuiteReport`] with the number of probes, the
//! largest deviation seen and the threshold it was held to. A [`Sabotage`]
//! deliberately breaks one ingredient so that each suite can be shown to
//! fail when it should.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bachelier::BachelierParams;
use crate::conjugacy::{identity_residuals, primal_matrices, state_identities, Conjugate, DualPoint, Probe};
use crate::engine::{sample_path, Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::field::{Field, FieldValue, Order};
use crate::parallel::{try_map_range, Execution};
use crate::representative::{PrimalPoint, WeightVector};
use crate::strategy::{PositionRule, Sampling, SimpleStrategy, Strategy};
use crate::tree::{NodeId, Payoff, ScenarioTree, TreeSpec};
use crate::utility::{MakerPanel, UtilitySpec};

/// A deliberate fault injected into a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sabotage {
    #[default]
    None,
    /// shift the up-probability of every edge
    TreeProbabilities,
    /// flip the sign of the quantity under test
    Signs,
    /// demand a zero deviation
    Tolerance,
}

impl Sabotage {
    fn sign(self) -> f64 {
        if self == Sabotage::Signs {
            -1.0
        } else {
            1.0
        }
    }

    fn threshold(self, t: f64) -> f64 {
        if self == Sabotage::Tolerance {
            0.0
        } else {
            t
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub probes: usize,
    pub max_deviation: f64,
    pub threshold: f64,
    pub passed: bool,
    /// free-form facts worth printing (eigenvalue range, error sequence...)
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str, probes: usize, max_deviation: f64, threshold: f64) -> Self {
        SuiteReport {
            name: name.to_string(),
            probes,
            max_deviation,
            threshold,
            passed: max_deviation < threshold,
            notes: Vec::new(),
        }
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub probes: usize,
    pub seed: u64,
    pub sabotage: Sabotage,
    pub exec: Execution,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            probes: 50,
            seed: 1,
            sabotage: Sabotage::None,
            exec: Execution::Parallel,
        }
    }
}

/// A panel, a tree and initial Pareto weights.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub panel: MakerPanel,
    pub tree: ScenarioTree,
    pub lambda0: WeightVector,
}

/// Where the probes' scenarios come from.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    Fixed(Scenario),
    Random(RandomShape),
}

/// Ranges for random scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomShape {
    pub makers: Vec<usize>,
    pub claims: Vec<usize>,
    pub steps: Vec<usize>,
    pub dims: Vec<usize>,
    pub exponential_only: bool,
    /// require at least one non-exponential maker
    pub mixed: bool,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            makers: vec![1, 2, 3],
            claims: vec![1, 2],
            steps: vec![2, 4],
            dims: vec![1, 2],
            exponential_only: false,
            mixed: false,
        }
    }
}

pub fn probe_rng(seed: u64, probe: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(probe as u64 + 1);
    rng
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

pub fn random_utility(rng: &mut ChaCha8Rng, exponential: bool) -> Result<UtilitySpec> {
    if exponential {
        return UtilitySpec::exponential(rng.random_range(0.5..2.0));
    }
    let terms = rng.random_range(2..=3);
    let weights = (0..terms).map(|_| rng.random_range(0.2..1.0)).collect();
    // keep the first two rates apart so the maker is far from exponential
    let rates = (0..terms)
        .map(|k| match k {
            0 => rng.random_range(0.4..0.9),
            1 => rng.random_range(1.6..2.6),
            _ => rng.random_range(0.5..2.5),
        })
        .collect();
    UtilitySpec::sum_of_exponentials(weights, rates)
}

pub fn random_panel(rng: &mut ChaCha8Rng, makers: usize, exponential_only: bool, mixed: bool) -> Result<MakerPanel> {
    let mut specs = Vec::with_capacity(makers);
    for m in 0..makers {
        let exp = if exponential_only {
            true
        } else if mixed && m == 0 {
            false
        } else {
            rng.random_bool(0.5)
        };
        specs.push(random_utility(rng, exp)?);
    }
    MakerPanel::new(specs)
}

fn coef(rng: &mut ChaCha8Rng, scale: f64) -> String {
    format!("({:.6})", rng.random_range(-scale..scale))
}

/// Affine-plus-quadratic payoff in the Brownian coordinates.
fn random_payoff(rng: &mut ChaCha8Rng, dim: usize, level: f64) -> Result<Payoff> {
    let mut s = coef(rng, level).to_string();
    for i in 1..=dim {
        s.push_str(&format!(" + {}*B{i}", coef(rng, 0.8)));
    }
    s.push_str(&format!(" + {}*B1^2", coef(rng, 0.2)));
    Payoff::expression(&s)
}

pub fn random_tree(rng: &mut ChaCha8Rng, steps: usize, dim: usize, claims: usize) -> Result<ScenarioTree> {
    let endowment = random_payoff(rng, dim, 0.5)?;
    let psi = (0..claims)
        .map(|_| random_payoff(rng, dim, 1.5))
        .collect::<Result<_>>()?;
    TreeSpec::new(steps, 1.0, dim, endowment, psi).build()
}

pub fn random_weights(rng: &mut ChaCha8Rng, m: usize) -> WeightVector {
    WeightVector::new((0..m).map(|_| rng.random_range(0.2..1.0)).collect())
        .expect("positive weights")
        .normalized()
}

impl RandomShape {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Scenario> {
        let m = pick(rng, &self.makers);
        let panel = random_panel(rng, m, self.exponential_only, self.mixed)?;
        let (n, d, j) = (pick(rng, &self.steps), pick(rng, &self.dims), pick(rng, &self.claims));
        let tree = random_tree(rng, n, d, j)?;
        Ok(Scenario {
            lambda0: random_weights(rng, m),
            panel,
            tree,
        })
    }
}

impl ScenarioSource {
    fn get(&self, rng: &mut ChaCha8Rng, sabotage: Sabotage) -> Result<Scenario> {
        let mut s = match self {
            ScenarioSource::Fixed(s) => s.clone(),
            ScenarioSource::Random(shape) => shape.sample(rng)?,
        };
        if sabotage == Sabotage::TreeProbabilities {
            s.tree.corrupt_probabilities(0.05);
        }
        Ok(s)
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, m: usize, j: usize) -> PrimalPoint {
    PrimalPoint::new(
        random_weights(rng, m),
        rng.random_range(-1.0..1.0),
        (0..j).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

fn random_node(rng: &mut ChaCha8Rng, tree: &ScenarioTree) -> NodeId {
    NodeId(rng.random_range(0..tree.node_count()))
}

/// A simple strategy with up to `max_rebalances` rebalances and at most
/// `max_regimes` rebalance histories on `tree`.
pub fn random_simple_strategy(
    rng: &mut ChaCha8Rng,
    tree: &ScenarioTree,
    max_rebalances: usize,
    max_regimes: usize,
) -> Result<SimpleStrategy> {
    let j = tree.claims();
    let n = tree.steps();
    if n == 0 {
        return Err(Error::input("random strategies need a tree with at least one step"));
    }
    loop {
        let count = rng.random_range(1..=max_rebalances.min(n));
        let mut levels: Vec<usize> = Vec::new();
        while levels.len() < count {
            let k = rng.random_range(0..n);
            if !levels.contains(&k) {
                levels.push(k);
            }
        }
        levels.sort_unstable();
        let mut regimes = 1usize;
        let mut total = 1usize;
        let mut prev = 0;
        for &k in &levels {
            regimes = regimes.saturating_mul((k - prev + 1).pow(tree.dim() as u32));
            total = total.saturating_add(regimes);
            prev = k;
        }
        if total > max_regimes {
            continue;
        }
        let positions = levels
            .iter()
            .enumerate()
            .map(|(i, _)| {
                if i + 1 == count && rng.random_bool(0.3) {
                    return Ok(PositionRule::zero(j));
                }
                if rng.random_bool(0.5) {
                    Ok(PositionRule::Constant(
                        (0..j).map(|_| rng.random_range(-1.5..1.5)).collect(),
                    ))
                } else {
                    let exprs: Vec<String> = (0..j)
                        .map(|_| format!("{} + {}*B1", coef(rng, 1.0), coef(rng, 1.0)))
                        .collect();
                    let refs: Vec<&str> = exprs.iter().map(|s| s.as_str()).collect();
                    PositionRule::expressions(&refs)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        return SimpleStrategy::new(levels, positions, j);
    }
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

/// `B A = I`, `E = -A^-1 C`, `H = C^T A^-1 C + D` and the row-sum identities.
pub fn conjugacy_suite(source: &ScenarioSource, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let devs = try_map_range(cfg.exec, cfg.probes, |i| -> Result<f64> {
        let mut rng = probe_rng(cfg.seed, i);
        let sc = source.get(&mut rng, cfg.sabotage)?;
        let field = Field::new(&sc.panel, &sc.tree);
        let conj = Conjugate::new(&field);
        let a = random_point(&mut rng, sc.panel.len(), sc.tree.claims());
        let node = random_node(&mut rng, &sc.tree);
        let u = field.at(&a, node, Order::Gradient)?.grad_v;
        let b = DualPoint::new(u, 1.0, a.q.clone())?;
        let s = conj.solve(&b, node, None)?;
        let mut dm = conj.dual_matrices(&b, node, Some(&s))?;
        dm.b *= cfg.sabotage.sign();
        let v = s.unnormalized();
        let at = PrimalPoint::new(WeightVector::new(v.clone())?, s.x, a.q.clone());
        let f = field.at(&at, node, Order::Hessian)?;
        let pm = primal_matrices(&f, &v)?;
        Ok(identity_residuals(&f, &v, &pm, &dm)?.max())
    })?;
    Ok(SuiteReport::new(
        "conjugacy",
        cfg.probes,
        max_of(devs),
        cfg.sabotage.threshold(1e-8),
    ))
}

/// Primal to dual to primal, and dual to primal to dual.
pub fn round_trip_suite(source: &ScenarioSource, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let devs = try_map_range(cfg.exec, cfg.probes, |i| -> Result<f64> {
        let mut rng = probe_rng(cfg.seed, i);
        let sc = source.get(&mut rng, cfg.sabotage)?;
        let field = Field::new(&sc.panel, &sc.tree);
        let conj = Conjugate::new(&field);
        let node = random_node(&mut rng, &sc.tree);
        let a = random_point(&mut rng, sc.panel.len(), sc.tree.claims());
        let u: Vec<f64> = (0..sc.panel.len()).map(|_| -rng.random_range(0.2..2.0)).collect();
        let q: Vec<f64> = (0..sc.tree.claims()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = DualPoint::new(u, 1.0, q)?;
        let mut worst: f64 = 0.0;
        for probe in [Probe::Primal(a), Probe::Dual(b)] {
            let probe = match (probe, cfg.sabotage) {
                (Probe::Primal(mut a), Sabotage::Signs) => {
                    a.x = -a.x - 0.5;
                    a.q.iter_mut().for_each(|x| *x = -*x);
                    // the sabotaged target is compared against the original below
                    let rt = state_identities(&conj, &Probe::Primal(a.clone()), node)?;
                    worst = worst.max(rt.max() + (2.0 * a.x + 0.5).abs());
                    continue;
                }
                (p, _) => p,
            };
            worst = worst.max(state_identities(&conj, &probe, node)?.max());
        }
        Ok(worst)
    })?;
    Ok(SuiteReport::new(
        "round-trip",
        cfg.probes,
        max_of(devs),
        cfg.sabotage.threshold(1e-8),
    ))
}

/// One-step conditional expectations of `F`, its derivatives, the Brownian
/// increments and the indirect utilities of both engines.
pub fn martingale_suite(source: &ScenarioSource, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let sign = cfg.sabotage.sign();
    let devs = try_map_range(cfg.exec, cfg.probes, |i| -> Result<[f64; 4]> {
        let mut rng = probe_rng(cfg.seed, i);
        let sc = source.get(&mut rng, cfg.sabotage)?;
        let tree = &sc.tree;
        let field = Field::new(&sc.panel, tree);
        let a = random_point(&mut rng, sc.panel.len(), tree.claims());
        let all = field.backward_all(&a, Order::Hessian, Execution::Sequential)?;
        let mut f_dev: f64 = 0.0;
        for (id, swept) in all.iter().enumerate() {
            let node = NodeId(id);
            let direct = field.at(&a, node, Order::Hessian)?;
            f_dev = f_dev.max(direct.max_relative_gap(swept));
            if tree.is_leaf(node) {
                continue;
            }
            let mut avg = FieldValue::zeros(sc.panel.len(), tree.claims(), Order::Hessian);
            for (e, f) in field.children(&a, node, Order::Hessian)? {
                avg.add_scaled(&f, sign * e.prob);
            }
            f_dev = f_dev.max(direct.max_relative_gap(&avg));
        }
        let b_dev = tree.moment_defects().max();

        // forward induction: U = dF/dv(zeta) between rebalances
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj).with_options(EngineOptions {
            exec: Execution::Sequential,
            ..Default::default()
        });
        let strategy = random_simple_strategy(&mut rng, tree, 3, 400)?;
        let run = eng.execute_simple(&strategy, &sc.lambda0)?;
        let mut u_dev: f64 = 0.0;
        for reg in &run.regimes {
            let start = tree.level(reg.node);
            for level in start..reg.end_level {
                for (node, _) in tree.reachable_at_level(reg.node, level) {
                    let here = field.at(&reg.zeta, node, Order::Gradient)?;
                    let mut avg = vec![0.0; sc.panel.len()];
                    for (e, f) in field.children(&reg.zeta, node, Order::Gradient)? {
                        for (s, g) in avg.iter_mut().zip(&f.grad_v) {
                            *s += sign * e.prob * g;
                        }
                    }
                    for (x, y) in here.grad_v.iter().zip(&avg) {
                        u_dev = u_dev.max((x - y).abs() / (1.0 + x.abs()));
                    }
                }
            }
        }
        // Euler: K dB has zero conditional mean
        let q: Vec<f64> = (0..tree.claims()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let paths = eng.simulate_sde(&Strategy::constant(q), &sc.lambda0, 2, cfg.seed ^ i as u64)?;
        let e_dev = max_of(paths.iter().map(|p| p.one_step_mean));
        Ok([f_dev, b_dev, u_dev, e_dev])
    })?;
    let worst = |k: usize| max_of(devs.iter().map(|d| d[k]));
    let dev = max_of((0..4).map(worst));
    Ok(
        SuiteReport::new("martingale", cfg.probes, dev, cfg.sabotage.threshold(1e-12))
            .note(format!("field {:.2e}", worst(0)))
            .note(format!("increments {:.2e}", worst(1)))
            .note(format!("forward induction {:.2e}", worst(2)))
            .note(format!("euler {:.2e}", worst(3))),
    )
}

/// Utility preservation at every rebalance of random simple strategies.
pub fn preservation_suite(source: &ScenarioSource, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let sign = cfg.sabotage.sign();
    let devs = try_map_range(cfg.exec, cfg.probes, |i| -> Result<f64> {
        let mut rng = probe_rng(cfg.seed, i);
        let sc = source.get(&mut rng, cfg.sabotage)?;
        let field = Field::new(&sc.panel, &sc.tree);
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj).with_options(EngineOptions {
            exec: Execution::Sequential,
            ..Default::default()
        });
        let strategy = random_simple_strategy(&mut rng, &sc.tree, 5, 2000)?;
        let run = eng.execute_simple(&strategy, &sc.lambda0)?;
        let mut worst: f64 = 0.0;
        for reg in run.rebalances() {
            let parent = &run.regimes[reg.parent.expect("rebalance has a parent")];
            let before = field.at(&parent.zeta, reg.node, Order::Gradient)?.grad_v;
            let after = field.at(&reg.zeta, reg.node, Order::Gradient)?.grad_v;
            for (a, b) in after.iter().zip(&before) {
                worst = worst.max((a - sign * b).abs());
            }
        }
        Ok(worst)
    })?;
    Ok(SuiteReport::new(
        "preservation",
        cfg.probes,
        max_of(devs),
        cfg.sabotage.threshold(1e-8),
    ))
}

/// Cash-balance sandwich along paths, and the spectrum of `A` within `[1/c, c]`.
pub fn bounds_suite(source: &ScenarioSource, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let sign = cfg.sabotage.sign();
    let out = try_map_range(cfg.exec, cfg.probes, |i| -> Result<(f64, f64, f64, f64)> {
        let mut rng = probe_rng(cfg.seed, i);
        let sc = source.get(&mut rng, cfg.sabotage)?;
        let c = sc.panel.bound_constant();
        let field = Field::new(&sc.panel, &sc.tree);
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj).with_options(EngineOptions {
            exec: Execution::Sequential,
            ..Default::default()
        });
        // spectrum of A at a random point
        let a = random_point(&mut rng, sc.panel.len(), sc.tree.claims());
        let node = random_node(&mut rng, &sc.tree);
        let f = field.at(&a, node, Order::Hessian)?;
        let pm = primal_matrices(&f, a.v.as_slice())?;
        let sym = (&pm.a + pm.a.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let eig_violation = (1.0 / c - lo).max(hi - c).max(0.0);
        // sandwich along one forward-induction path
        let strategy = random_simple_strategy(&mut rng, &sc.tree, 3, usize::MAX)?;
        let path = sample_path(&sc.tree, cfg.seed, i);
        let states = eng.execute_simple_path(&strategy, &sc.lambda0, &path)?;
        let mut sandwich: f64 = 0.0;
        for s in &states {
            let mut b = eng.cash_bounds(&s.u, &s.q, s.x, s.node)?;
            b.middle = sign * b.middle + (1.0 - sign) * (b.upper + 1.0);
            sandwich = sandwich.max(b.violation());
        }
        Ok((eig_violation, sandwich, lo * c, hi / c))
    })?;
    let eig = max_of(out.iter().map(|o| o.0));
    let sandwich = max_of(out.iter().map(|o| o.1));
    let lo = out.iter().map(|o| o.2).fold(f64::INFINITY, f64::min);
    let hi = out.iter().map(|o| o.3).fold(f64::NEG_INFINITY, f64::max);
    Ok(
        SuiteReport::new("bounds", cfg.probes, eig.max(sandwich), cfg.sabotage.threshold(1e-6))
            .note(format!(
                "eigenvalue range relative to [1/c, c]: c*min = {lo:.6}, max/c = {hi:.6}"
            ))
            .note(format!("sandwich violation {sandwich:.2e}")),
    )
}

/// Analytic first derivatives of `F` against finite differences.
pub fn gradient_suite(source: &ScenarioSource, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let sign = cfg.sabotage.sign();
    let devs = try_map_range(cfg.exec, cfg.probes, |i| -> Result<f64> {
        let mut rng = probe_rng(cfg.seed, i);
        let sc = source.get(&mut rng, cfg.sabotage)?;
        let field = Field::new(&sc.panel, &sc.tree).with_cache(false);
        let a = random_point(&mut rng, sc.panel.len(), sc.tree.claims());
        let node = random_node(&mut rng, &sc.tree);
        let g = field.at(&a, node, Order::Gradient)?.gradient();
        let m = sc.panel.len();
        let mut worst: f64 = 0.0;
        for (k, gk) in g.iter().enumerate() {
            let base = if k < m {
                a.v.as_slice()[k]
            } else if k == m {
                a.x
            } else {
                a.q[k - m - 1]
            };
            let h = 1e-3 * base.abs().max(if k < m { 0.0 } else { 1.0 });
            let eval = |delta: f64| -> Result<f64> {
                let mut p = a.clone();
                if k < m {
                    let mut v = p.v.as_slice().to_vec();
                    v[k] += delta;
                    p.v = WeightVector::new(v)?;
                } else if k == m {
                    p.x += delta;
                } else {
                    p.q[k - m - 1] += delta;
                }
                Ok(field.at(&p, node, Order::Value)?.value)
            };
            let fd = (-eval(2.0 * h)? + 8.0 * eval(h)? - 8.0 * eval(-h)? + eval(-2.0 * h)?) / (12.0 * h);
            let rel = (sign * gk - fd).abs() / gk.abs().max(1e-6);
            worst = worst.max(rel);
        }
        Ok(worst)
    })?;
    Ok(SuiteReport::new(
        "gradient",
        cfg.probes,
        max_of(devs),
        cfg.sabotage.threshold(1e-6),
    ))
}

/// Trading never raises the makers' expected representative utility above
/// what they keep after paying the trader's gain, and the zero strategy is
/// the only one with equality on panels whose weights can move.
pub fn no_arbitrage_suite(source: &ScenarioSource, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let sign = cfg.sabotage.sign();
    let out = try_map_range(cfg.exec, cfg.probes, |i| -> Result<(f64, usize, bool)> {
        let mut rng = probe_rng(cfg.seed, i);
        let sc = source.get(&mut rng, cfg.sabotage)?;
        let field = Field::new(&sc.panel, &sc.tree);
        let conj = Conjugate::new(&field);
        let eng = Engine::new(&conj).with_options(EngineOptions {
            exec: Execution::Sequential,
            ..Default::default()
        });
        let rigid = sc.panel.len() == 1 || sc.panel.all_exponential();
        let strategy = random_simple_strategy(&mut rng, &sc.tree, 4, 2000)?;
        let zero = SimpleStrategy::zero(sc.tree.claims());
        let mut dev: f64 = 0.0;
        let mut not_strict = 0;
        for (s, is_zero) in [(&zero, true), (&strategy, strategy.is_zero())] {
            let mut run = eng.execute_simple(s, &sc.lambda0)?;
            run.terminal.iter_mut().for_each(|t| t.gain *= sign);
            let na = eng.no_arbitrage(&run)?;
            let gap = na.gap();
            if is_zero || rigid {
                dev = dev.max(gap.abs().min(if is_zero { f64::INFINITY } else { (-gap).max(0.0) }));
            } else {
                dev = dev.max((-gap).max(0.0));
                if gap <= 1e-10 {
                    not_strict += 1;
                }
            }
        }
        Ok((dev, not_strict, rigid))
    })?;
    let dev = max_of(out.iter().map(|o| o.0));
    let not_strict: usize = out.iter().map(|o| o.1).sum();
    let rigid = out.iter().filter(|o| o.2).count();
    let mut r = SuiteReport::new("no-arbitrage", cfg.probes, dev, cfg.sabotage.threshold(1e-10))
        .note(format!("{not_strict} nonzero strategies without strict inequality"))
        .note(format!(
            "{rigid} probes on panels with fixed weights (equality expected)"
        ));
    r.passed = r.passed && not_strict == 0;
    Ok(r)
}

/// One Euler path against the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BachelierRow {
    pub path: usize,
    /// terminal Brownian level
    pub brownian: f64,
    pub engine: f64,
    pub closed: f64,
    pub exploded: bool,
}

/// Comparison of the tree engines with the Bachelier closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct BachelierComparison {
    pub rows: Vec<BachelierRow>,
    pub steps: usize,
    pub paths: usize,
    pub q: f64,
    /// per-path `|V_T(engine) - V_T(closed form)|`
    pub gain_errors: Vec<f64>,
    /// `(gamma sigma^2 / 2) T`
    pub impact: f64,
    pub xi_tree: f64,
    pub xi_closed: f64,
    pub max_kernel_error: f64,
    pub exploded: usize,
}

impl BachelierComparison {
    pub fn mean_gain_error(&self) -> f64 {
        self.gain_errors.iter().sum::<f64>() / self.gain_errors.len().max(1) as f64
    }

    pub fn xi_relative_error(&self) -> f64 {
        ((self.xi_tree - self.xi_closed) / self.xi_closed).abs()
    }
}

pub fn bachelier_comparison(
    p: &BachelierParams,
    steps: usize,
    paths: usize,
    q: f64,
    seed: u64,
    exec: Execution,
) -> Result<BachelierComparison> {
    let panel = p.panel()?;
    let tree = p.tree_spec(steps)?.build()?;
    let field = Field::new(&panel, &tree);
    let conj = Conjugate::new(&field);
    let eng = Engine::new(&conj).with_options(EngineOptions {
        exec,
        ..Default::default()
    });
    let lambda = WeightVector::uniform(1);
    let run = eng.execute_simple(&SimpleStrategy::buy_and_hold(vec![q]), &lambda)?;
    let xi_tree = run.regimes.last().expect("one rebalance").zeta.x;
    let sde = eng.simulate_sde(&Strategy::constant(vec![q]), &lambda, paths, seed)?;
    let mut gain_errors = Vec::with_capacity(paths);
    let mut rows = Vec::with_capacity(paths);
    let mut max_kernel_error: f64 = 0.0;
    let mut exploded = 0;
    for path in &sde {
        let last = path.states.last().expect("non-empty path");
        let bt = tree.brownian(last.node)[0];
        let closed = p.constant_gain(q, p.horizon, bt);
        rows.push(BachelierRow {
            path: path.id,
            brownian: bt,
            engine: last.v,
            closed,
            exploded: path.explosion.exploded,
        });
        if path.explosion.exploded {
            exploded += 1;
            continue;
        }
        gain_errors.push((last.v - closed).abs());
        // kernel at the root against -kappa u
        let first = &path.states[0];
        if path.id == 0 {
            let (k, _) = eng.kernel_k(&first.u, &first.q, first.node, None)?;
            max_kernel_error = max_kernel_error.max((k[0] - p.k(first.u[0], q)).abs() / p.k(first.u[0], q).abs());
        }
    }
    Ok(BachelierComparison {
        rows,
        steps,
        paths,
        q,
        gain_errors,
        impact: 0.5 * p.gamma * p.sigma * p.sigma * p.horizon,
        xi_tree,
        xi_closed: p.indifference_price(q),
        max_kernel_error,
        exploded,
    })
}

/// `|S_root - s|` on matched trees of increasing depth.
pub fn bachelier_price_errors(p: &BachelierParams, steps: &[usize]) -> Result<Vec<f64>> {
    let panel = p.panel()?;
    steps
        .iter()
        .map(|&n| {
            let tree = p.tree_spec(n)?.build()?;
            let field = Field::new(&panel, &tree);
            let a = PrimalPoint::initial(WeightVector::uniform(1), 1);
            let price = field.marginal_price(&a, tree.root())?;
            Ok((price.price[0] - p.s).abs())
        })
        .collect()
}

pub fn bachelier_suite(p: &BachelierParams, steps: usize, paths: usize, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut cmp = bachelier_comparison(p, steps, paths, 1.0, cfg.seed, cfg.exec)?;
    cmp.gain_errors.iter_mut().for_each(|e| *e *= cfg.sabotage.sign());
    if cfg.sabotage == Sabotage::Signs {
        cmp.xi_tree = -cmp.xi_tree;
    }
    let gain = cmp.mean_gain_error().abs() / (0.02 * cmp.impact);
    let xi = cmp.xi_relative_error() / 0.01;
    let dev = gain.max(xi);
    Ok(SuiteReport::new("bachelier", paths, dev, cfg.sabotage.threshold(1.0))
        .note(format!(
            "mean |dV_T| = {:.3e} (limit {:.3e})",
            cmp.mean_gain_error(),
            0.02 * cmp.impact
        ))
        .note(format!("xi tree {:.6} vs closed {:.6}", cmp.xi_tree, cmp.xi_closed))
        .note(format!(
            "kernel relative error at the root {:.2e}",
            cmp.max_kernel_error
        )))
}

/// Max over path nodes of `|X^N - X^ref|` for simple approximations of a
/// rule strategy on `dates[i]` rebalance dates.
#[allow(clippy::too_many_arguments)]
pub fn convergence_errors(
    sc: &Scenario,
    target: &Strategy,
    dates: &[usize],
    reference: usize,
    paths: usize,
    seed: u64,
    exec: Execution,
    sabotage: Sabotage,
) -> Result<Vec<f64>> {
    let field = Field::new(&sc.panel, &sc.tree);
    let conj = Conjugate::new(&field);
    let eng = Engine::new(&conj).with_options(EngineOptions {
        exec: Execution::Sequential,
        ..Default::default()
    });
    let reference_strategy = if sabotage == Sabotage::Signs {
        match target {
            Strategy::Rule(PositionRule::Expression(e)) => {
                let flipped: Vec<String> = e.iter().map(|x| format!("-({})", x.source())).collect();
                let refs: Vec<&str> = flipped.iter().map(|s| s.as_str()).collect();
                Strategy::Rule(PositionRule::expressions(&refs)?)
            }
            other => other.clone(),
        }
    } else {
        target.clone()
    };
    let reference = reference_strategy.simple_approximation(&sc.tree, reference, Sampling::Midpoint)?;
    let coarse = dates
        .iter()
        .map(|&n| target.simple_approximation(&sc.tree, n, Sampling::Midpoint))
        .collect::<Result<Vec<_>>>()?;
    let per_path = try_map_range(exec, paths, |i| -> Result<Vec<f64>> {
        let path = sample_path(&sc.tree, seed, i);
        let r = eng.execute_simple_path(&reference, &sc.lambda0, &path)?;
        coarse
            .iter()
            .map(|s| {
                let x = eng.execute_simple_path(s, &sc.lambda0, &path)?;
                Ok(max_of(x.iter().zip(&r).map(|(a, b)| (a.x - b.x).abs())))
            })
            .collect()
    })?;
    Ok((0..dates.len())
        .map(|k| max_of(per_path.iter().map(|p| p[k])))
        .collect())
}

pub fn convergence_suite(sc: &Scenario, target: &Strategy, paths: usize, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let dates = [2, 4, 8, 16];
    let steps = sc.tree.steps();
    if !steps.is_multiple_of(64) {
        return Err(Error::input(format!(
            "convergence needs a multiple of 64 steps, tree has {steps}"
        )));
    }
    let errs = convergence_errors(sc, target, &dates, 64, paths, cfg.seed, cfg.exec, cfg.sabotage)?;
    let needed = if cfg.sabotage == Sabotage::Tolerance { 1e6 } else { 1.0 };
    let worst_ratio = errs.windows(2).map(|w| w[1] * needed / w[0]).fold(0.0, f64::max);
    let mut r = SuiteReport::new("convergence", paths, worst_ratio, 1.0)
        .note(format!(
            "max |X^N - X^64| for N = 2,4,8,16: {}",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ))
        .note(format!(
            "improvement per doubling: {}",
            errs.windows(2)
                .map(|w| format!("{:.2}", w[0] / w[1]))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    r.passed = worst_ratio < 1.0;
    Ok(r)
}

/// The scenario used by the convergence check: two exponential makers on a
/// 64-step binomial tree with a Bachelier-type claim.
pub fn convergence_scenario(steps: usize) -> Result<Scenario> {
    let tree = TreeSpec::new(
        steps,
        1.0,
        1,
        Payoff::expression("0.5*B")?,
        vec![Payoff::expression("10 + 0.1 + 0.2*B")?],
    )
    .build()?;
    Ok(Scenario {
        panel: MakerPanel::new(vec![
            UtilitySpec::exponential(1.0)?,
            UtilitySpec::sum_of_exponentials(vec![0.5, 0.5], vec![0.8, 1.6])?,
        ])?,
        tree,
        lambda0: WeightVector::new(vec![0.5, 0.5])?,
    })
}
