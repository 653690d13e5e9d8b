//! Finite-state Brownian scenario trees.
//!
//! The tree is a recombining product lattice: in each of the `d` Brownian
//! coordinates a step moves up with probability `p` by
//! `sqrt(dt (1-p)/p)` or down with probability `1-p` by `-sqrt(dt p/(1-p))`,
//! which matches the first two moments of a Brownian increment exactly. A
//! node at level `k` is identified by its per-coordinate up-counts
//! `j in {0..k}^d`; it has `2^d` children. The total endowment `Sigma_0` and
//! the claims `psi` live on the leaves (level `N`).
//!
//! Conditional expectations from a node are sums over the reachable leaf
//! block weighted by products of binomial probabilities, precomputed as the
//! rows `rows[n][i] = P(i ups in n steps)`.

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Identifier of a lattice node; the root is `NodeId(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Terminal values as an expression of `B_T` or one value per leaf.
#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    Expression(Expr),
    Table(Vec<f64>),
}

impl Payoff {
    pub fn expression(src: &str) -> Result<Self> {
        Ok(Payoff::Expression(Expr::parse(src)?))
    }
}

#[derive(Debug, Clone)]
pub struct TreeSpec {
    pub steps: usize,
    pub horizon: f64,
    pub dim: usize,
    pub prob_up: f64,
    pub endowment: Payoff,
    pub claims: Vec<Payoff>,
}

impl TreeSpec {
    pub fn new(steps: usize, horizon: f64, dim: usize, endowment: Payoff, claims: Vec<Payoff>) -> Self {
        TreeSpec {
            steps,
            horizon,
            dim,
            prob_up: 0.5,
            endowment,
            claims,
        }
    }

    pub fn build(&self) -> Result<ScenarioTree> {
        ScenarioTree::build(self)
    }
}

/// One outgoing edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub child: NodeId,
    pub prob: f64,
    pub db: Vec<f64>,
}

/// Deviations of the tree from its structural invariants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentDefects {
    /// `max |sum_e p_e - 1|`
    pub probability: f64,
    /// `max |sum_e p_e dB_e|`
    pub mean: f64,
    /// `max |sum_e p_e dB_e dB_e^T - dt I|`
    pub covariance: f64,
}

impl MomentDefects {
    pub fn max(&self) -> f64 {
        self.probability.max(self.mean).max(self.covariance)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioTree {
    steps: usize,
    horizon: f64,
    dim: usize,
    dt: f64,
    prob: [f64; 2],
    incr: [f64; 2],
    rows: Vec<Vec<f64>>,
    level_offset: Vec<usize>,
    leaf_endowment: Vec<f64>,
    leaf_claims: Vec<f64>,
    claims: usize,
}

fn ipow(base: usize, exp: usize) -> usize {
    (0..exp).fold(1usize, |acc, _| acc * base)
}

impl ScenarioTree {
    pub fn build(spec: &TreeSpec) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::Tree("Brownian dimension must be at least 1".into()));
        }
        if !(spec.horizon.is_finite() && spec.horizon > 0.0) {
            return Err(Error::Tree(format!("horizon must be positive, got {}", spec.horizon)));
        }
        if !(spec.prob_up > 0.0 && spec.prob_up < 1.0) {
            return Err(Error::Tree(format!(
                "up probability must lie in (0,1), got {}",
                spec.prob_up
            )));
        }
        if spec.dim > 6 {
            return Err(Error::Tree(format!(
                "dimension {} is too large for a product lattice",
                spec.dim
            )));
        }
        let n = spec.steps;
        let dt = if n == 0 { 0.0 } else { spec.horizon / n as f64 };
        let p = spec.prob_up;
        let incr = [-(dt * p / (1.0 - p)).sqrt(), (dt * (1.0 - p) / p).sqrt()];
        let mut tree = ScenarioTree {
            steps: n,
            horizon: spec.horizon,
            dim: spec.dim,
            dt,
            prob: [1.0 - p, p],
            incr,
            rows: Vec::new(),
            level_offset: Vec::new(),
            leaf_endowment: Vec::new(),
            leaf_claims: Vec::new(),
            claims: spec.claims.len(),
        };
        tree.rebuild_rows();
        let mut off = 0;
        for k in 0..=n {
            tree.level_offset.push(off);
            off += ipow(k + 1, spec.dim);
        }
        tree.level_offset.push(off);

        let leaves = tree.leaf_count();
        let mut coords = vec![0usize; spec.dim];
        let mut b = vec![0.0; spec.dim];
        let eval_payoff = |payoff: &Payoff, leaf: usize, b: &[f64]| -> Result<f64> {
            match payoff {
                Payoff::Expression(e) => e.eval(spec.horizon, b),
                Payoff::Table(values) => values.get(leaf).copied().ok_or_else(|| {
                    Error::Tree(format!(
                        "payoff table has {} entries, the tree has {leaves} leaves",
                        values.len()
                    ))
                }),
            }
        };
        for payoff in std::iter::once(&spec.endowment).chain(&spec.claims) {
            if let Payoff::Table(values) = payoff {
                if values.len() != leaves {
                    return Err(Error::Tree(format!(
                        "payoff table has {} entries, the tree has {leaves} leaves",
                        values.len()
                    )));
                }
            }
        }
        tree.leaf_endowment.reserve(leaves);
        tree.leaf_claims.reserve(leaves * spec.claims.len());
        for leaf in 0..leaves {
            tree.unrank(leaf, n + 1, &mut coords);
            for (bd, j) in b.iter_mut().zip(&coords) {
                *bd = tree.position(n, *j);
            }
            tree.leaf_endowment.push(eval_payoff(&spec.endowment, leaf, &b)?);
            for c in &spec.claims {
                tree.leaf_claims.push(eval_payoff(c, leaf, &b)?);
            }
        }
        Ok(tree)
    }

    fn rebuild_rows(&mut self) {
        let [pd, pu] = self.prob;
        let mut rows = Vec::with_capacity(self.steps + 1);
        rows.push(vec![1.0]);
        for n in 1..=self.steps {
            let prev: &Vec<f64> = &rows[n - 1];
            let mut row = vec![0.0; n + 1];
            for (i, r) in row.iter_mut().enumerate() {
                let down = if i < n { pd * prev[i] } else { 0.0 };
                let up = if i > 0 { pu * prev[i - 1] } else { 0.0 };
                *r = down + up;
            }
            rows.push(row);
        }
        self.rows = rows;
    }

    /// Negative control: moves probability mass without touching the increments.
    pub fn corrupt_probabilities(&mut self, delta: f64) {
        self.prob[1] += delta;
        self.rebuild_rows();
    }

    fn unrank(&self, mut idx: usize, radix: usize, coords: &mut [usize]) {
        for c in coords.iter_mut() {
            *c = idx % radix;
            idx /= radix;
        }
    }

    fn rank(coords: &[usize], radix: usize) -> usize {
        coords.iter().rev().fold(0, |acc, c| acc * radix + c)
    }

    fn position(&self, level: usize, ups: usize) -> f64 {
        ups as f64 * self.incr[1] + (level - ups) as f64 * self.incr[0]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn claims(&self) -> usize {
        self.claims
    }

    pub fn up_probability(&self) -> f64 {
        self.prob[1]
    }

    pub fn node_count(&self) -> usize {
        self.level_offset[self.steps + 1]
    }

    pub fn leaf_count(&self) -> usize {
        ipow(self.steps + 1, self.dim)
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, level: usize, coords: &[usize]) -> Result<NodeId> {
        if level > self.steps || coords.len() != self.dim || coords.iter().any(|c| *c > level) {
            return Err(Error::input(format!(
                "no node at level {level} with coordinates {coords:?}"
            )));
        }
        Ok(NodeId(self.level_offset[level] + Self::rank(coords, level + 1)))
    }

    pub fn level(&self, node: NodeId) -> usize {
        match self.level_offset.binary_search(&node.0) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    pub fn coords(&self, node: NodeId) -> (usize, Vec<usize>) {
        let k = self.level(node);
        let mut c = vec![0; self.dim];
        self.unrank(node.0 - self.level_offset[k], k + 1, &mut c);
        (k, c)
    }

    pub fn nodes_at_level(&self, level: usize) -> impl Iterator<Item = NodeId> {
        (self.level_offset[level]..self.level_offset[level + 1]).map(NodeId)
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.level(node) == self.steps
    }

    pub fn time(&self, node: NodeId) -> f64 {
        self.level(node) as f64 * self.dt
    }

    pub fn time_of_level(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    /// Brownian position `B_t` at the node.
    pub fn brownian(&self, node: NodeId) -> Vec<f64> {
        let (k, c) = self.coords(node);
        c.iter().map(|j| self.position(k, *j)).collect()
    }

    /// Outgoing edges; empty at the leaves.
    pub fn children(&self, node: NodeId) -> Vec<Edge> {
        let (k, c) = self.coords(node);
        if k == self.steps {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        let mut child = vec![0; self.dim];
        for mask in 0..(1usize << self.dim) {
            let mut prob = 1.0;
            let mut db = Vec::with_capacity(self.dim);
            for i in 0..self.dim {
                let up = (mask >> i) & 1;
                child[i] = c[i] + up;
                prob *= self.prob[up];
                db.push(self.incr[up]);
            }
            out.push(Edge {
                child: NodeId(self.level_offset[k + 1] + Self::rank(&child, k + 2)),
                prob,
                db,
            });
        }
        out
    }

    /// Nodes at the previous level with an edge into `node`.
    pub fn parents(&self, node: NodeId) -> Vec<NodeId> {
        let (k, c) = self.coords(node);
        if k == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for mask in 0..(1usize << self.dim) {
            let mut parent = Vec::with_capacity(self.dim);
            let mut ok = true;
            for (i, ci) in c.iter().enumerate() {
                let up = (mask >> i) & 1;
                if up > *ci || ci - up > k - 1 {
                    ok = false;
                    break;
                }
                parent.push(ci - up);
            }
            if ok {
                out.push(NodeId(self.level_offset[k - 1] + Self::rank(&parent, k)));
            }
        }
        out
    }

    /// Probability of reaching `to` from `from` (zero when unreachable).
    pub fn transition_probability(&self, from: NodeId, to: NodeId) -> f64 {
        let (k1, c1) = self.coords(from);
        let (k2, c2) = self.coords(to);
        if k2 < k1 {
            return 0.0;
        }
        let n = k2 - k1;
        let row = &self.rows[n];
        c1.iter().zip(&c2).fold(
            1.0,
            |acc, (a, b)| {
                if b < a || b - a > n {
                    0.0
                } else {
                    acc * row[b - a]
                }
            },
        )
    }

    /// Nodes at `level` reachable from `from`, with their probabilities.
    pub fn reachable_at_level(&self, from: NodeId, level: usize) -> Vec<(NodeId, f64)> {
        let (k, c) = self.coords(from);
        assert!(level >= k && level <= self.steps);
        let n = level - k;
        let block = ipow(n + 1, self.dim);
        let mut off = vec![0; self.dim];
        let mut target = vec![0; self.dim];
        (0..block)
            .map(|i| {
                self.unrank(i, n + 1, &mut off);
                let mut p = 1.0;
                for d in 0..self.dim {
                    target[d] = c[d] + off[d];
                    p *= self.rows[n][off[d]];
                }
                (NodeId(self.level_offset[level] + Self::rank(&target, level + 1)), p)
            })
            .collect()
    }

    /// Calls `f(leaf, weight)` for every leaf reachable from `node`, in a
    /// fixed order: the reachable block is the product of `0..=n` offsets,
    /// first coordinate fastest.
    pub fn for_each_leaf(&self, node: NodeId, mut f: impl FnMut(usize, f64)) {
        let (k, c) = self.coords(node);
        let n = self.steps - k;
        let row = &self.rows[n];
        let radix = self.steps + 1;
        if self.dim == 1 {
            for (i, w) in row.iter().enumerate() {
                f(c[0] + i, *w);
            }
            return;
        }
        let block = ipow(n + 1, self.dim);
        let mut off = vec![0; self.dim];
        let mut leaf = vec![0; self.dim];
        for i in 0..block {
            self.unrank(i, n + 1, &mut off);
            let mut w = 1.0;
            for d in 0..self.dim {
                leaf[d] = c[d] + off[d];
                w *= row[off[d]];
            }
            f(Self::rank(&leaf, radix), w);
        }
    }

    /// Leaf index of a terminal node.
    pub fn leaf_index(&self, node: NodeId) -> usize {
        node.0 - self.level_offset[self.steps]
    }

    pub fn leaf_node(&self, leaf: usize) -> NodeId {
        NodeId(self.level_offset[self.steps] + leaf)
    }

    pub fn leaf_endowment(&self, leaf: usize) -> f64 {
        self.leaf_endowment[leaf]
    }

    pub fn leaf_claims(&self, leaf: usize) -> &[f64] {
        &self.leaf_claims[leaf * self.claims..(leaf + 1) * self.claims]
    }

    /// Conditional expectation of a per-leaf function from `node`.
    pub fn expect_leaves(&self, node: NodeId, mut g: impl FnMut(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_leaf(node, |leaf, w| acc += w * g(leaf));
        acc
    }

    /// Worst violation of the per-node moment conditions over all nodes.
    pub fn moment_defects(&self) -> MomentDefects {
        let mut out = MomentDefects::default();
        if self.steps == 0 {
            return out;
        }
        // every interior node has the same edge set up to relabeling
        let edges = self.children(self.root());
        let ps: f64 = edges.iter().map(|e| e.prob).sum();
        out.probability = (ps - 1.0).abs();
        for i in 0..self.dim {
            let mean: f64 = edges.iter().map(|e| e.prob * e.db[i]).sum();
            out.mean = out.mean.max(mean.abs());
            for j in 0..self.dim {
                let cov: f64 = edges.iter().map(|e| e.prob * e.db[i] * e.db[j]).sum();
                let target = if i == j { self.dt } else { 0.0 };
                out.covariance = out.covariance.max((cov - target).abs());
            }
        }
        out
    }

    /// Checks the structural invariants: probabilities in `(0,1)` summing
    /// to one, martingale increments, and variance matching.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.prob.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Tree(format!("edge probabilities {:?} leave (0,1)", self.prob)));
        }
        let d = self.moment_defects();
        if d.probability > tol {
            return Err(Error::Tree(format!(
                "outgoing probabilities sum off by {:e}",
                d.probability
            )));
        }
        if d.mean > tol {
            return Err(Error::Tree(format!("increments have nonzero mean {:e}", d.mean)));
        }
        if d.covariance > tol {
            return Err(Error::Tree(format!("increment covariance off by {:e}", d.covariance)));
        }
        if self.steps > 0 && (1usize << self.dim) < self.dim + 1 {
            return Err(Error::Tree("fewer than d+1 children per node".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(steps: usize, dim: usize) -> ScenarioTree {
        let claims = vec![Payoff::expression("1 + B1").unwrap()];
        TreeSpec::new(steps, 1.0, dim, Payoff::expression("0").unwrap(), claims)
            .build()
            .unwrap()
    }

    #[test]
    fn node_indexing_round_trips() {
        for dim in 1..=3 {
            let t = tree(5, dim);
            for id in 0..t.node_count() {
                let (k, c) = t.coords(NodeId(id));
                assert_eq!(t.node(k, &c).unwrap(), NodeId(id));
            }
            assert_eq!(t.leaf_count(), 6usize.pow(dim as u32));
        }
    }

    #[test]
    fn children_and_parents_agree() {
        let t = tree(4, 2);
        for id in 0..t.node_count() {
            let node = NodeId(id);
            for e in t.children(node) {
                assert!(t.parents(e.child).contains(&node));
            }
        }
    }

    #[test]
    fn moments_are_matched() {
        for &p in &[0.5, 0.3] {
            let mut spec = TreeSpec::new(8, 2.0, 2, Payoff::expression("0").unwrap(), vec![]);
            spec.prob_up = p;
            let t = spec.build().unwrap();
            assert!(t.moment_defects().max() < 1e-15);
            assert!(t.validate(1e-12).is_ok());
        }
    }

    #[test]
    fn corrupted_probabilities_fail_validation() {
        let mut t = tree(4, 1);
        t.corrupt_probabilities(0.05);
        assert!(t.validate(1e-12).is_err());
    }

    #[test]
    fn leaf_weights_sum_to_one() {
        let t = tree(7, 2);
        for id in 0..t.node_count() {
            let s = t.expect_leaves(NodeId(id), |_| 1.0);
            assert!((s - 1.0).abs() < 1e-14);
        }
        let r = t.reachable_at_level(t.root(), 3);
        assert!((r.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-15);
        for (n, p) in r {
            assert_eq!(t.transition_probability(t.root(), n), p);
        }
    }

    #[test]
    fn payoffs_evaluate_at_terminal_brownian() {
        let t = tree(4, 1);
        for leaf in 0..t.leaf_count() {
            let b = t.brownian(t.leaf_node(leaf));
            assert!((t.leaf_claims(leaf)[0] - (1.0 + b[0])).abs() < 1e-15);
        }
        // conditional mean of B_T is B_t
        for id in 0..t.node_count() {
            let node = NodeId(id);
            let m = t.expect_leaves(node, |leaf| t.brownian(t.leaf_node(leaf))[0]);
            assert!((m - t.brownian(node)[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        let spec = TreeSpec::new(2, 1.0, 1, Payoff::Table(vec![0.0; 2]), vec![]);
        assert!(spec.build().is_err());
        let spec = TreeSpec::new(2, 1.0, 1, Payoff::Table(vec![0.0, 1.0, 2.0]), vec![]);
        assert_eq!(spec.build().unwrap().leaf_endowment(2), 2.0);
    }

    #[test]
    fn zero_step_tree_is_a_single_leaf() {
        let t = tree(0, 1);
        assert_eq!(t.node_count(), 1);
        assert!(t.is_leaf(t.root()));
        assert!(t.children(t.root()).is_empty());
    }
}
