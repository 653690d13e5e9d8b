//! The primal field `F(a, node) = E[r(v, Sigma_0 + x + <q, psi>) | node]`.
//!
//! Values and derivatives at a node are probability-weighted sums over the
//! reachable leaves. [`Field::backward_all`] computes the same quantities by
//! one-step backward recursion, which is what the martingale checks compare
//! against.
//!
//! For panels of exponential makers the representative utility factorizes,
//! `r(v, s) = -tau * k(v) * exp(-s / tau)`, so every derivative of `F` is a
//! closed-form multiple of three leaf moments that depend only on
//! `(q, node)`. Those moments are memoized, which makes long Euler runs
//! cheap; general panels fall back to the leaf sum.

use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::parallel::{try_map_range, Execution};
use crate::representative::{representative_utility, PrimalPoint, Representative};
use crate::tree::{Edge, NodeId, ScenarioTree};
use crate::utility::{MakerPanel, UtilityKind};

/// How many derivatives to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// `F` and its derivatives at one point. The Hessian is stored row-major
/// over the coordinates `(v_1..v_M, x, q_1..q_J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValue {
    pub value: f64,
    pub grad_v: Vec<f64>,
    pub grad_x: f64,
    pub grad_q: Vec<f64>,
    pub hessian: Option<Vec<f64>>,
}

impl FieldValue {
    pub fn zeros(makers: usize, claims: usize, order: Order) -> Self {
        let n = makers + 1 + claims;
        FieldValue {
            value: 0.0,
            grad_v: vec![0.0; makers],
            grad_x: 0.0,
            grad_q: vec![0.0; claims],
            hessian: (order == Order::Hessian).then(|| vec![0.0; n * n]),
        }
    }

    pub fn makers(&self) -> usize {
        self.grad_v.len()
    }

    pub fn claims(&self) -> usize {
        self.grad_q.len()
    }

    pub fn dim(&self) -> usize {
        self.makers() + 1 + self.claims()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// Hessian entry; panics when the Hessian was not requested.
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let n = self.dim();
        self.hessian.as_ref().expect("Hessian was not evaluated")[i * n + j]
    }

    fn hess_mut(&mut self) -> &mut [f64] {
        self.hessian.as_mut().expect("Hessian was not evaluated")
    }

    pub fn h_vv(&self, l: usize, m: usize) -> f64 {
        self.hess(l, m)
    }

    pub fn h_vx(&self, m: usize) -> f64 {
        self.hess(m, self.makers())
    }

    pub fn h_xx(&self) -> f64 {
        let k = self.makers();
        self.hess(k, k)
    }

    pub fn h_vq(&self, m: usize, j: usize) -> f64 {
        self.hess(m, self.makers() + 1 + j)
    }

    pub fn h_xq(&self, j: usize) -> f64 {
        let k = self.makers();
        self.hess(k, k + 1 + j)
    }

    pub fn h_qq(&self, i: usize, j: usize) -> f64 {
        let k = self.makers() + 1;
        self.hess(k + i, k + j)
    }

    /// Full gradient in `(v, x, q)` order.
    pub fn gradient(&self) -> Vec<f64> {
        let mut g = self.grad_v.clone();
        g.push(self.grad_x);
        g.extend_from_slice(&self.grad_q);
        g
    }

    /// Every stored number: value, gradient, then the Hessian if present.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![self.value];
        out.extend(self.gradient());
        if let Some(h) = &self.hessian {
            out.extend_from_slice(h);
        }
        out
    }

    /// `self += w * other`
    pub fn add_scaled(&mut self, other: &FieldValue, w: f64) {
        self.value += w * other.value;
        for (a, b) in self.grad_v.iter_mut().zip(&other.grad_v) {
            *a += w * b;
        }
        self.grad_x += w * other.grad_x;
        for (a, b) in self.grad_q.iter_mut().zip(&other.grad_q) {
            *a += w * b;
        }
        if let (Some(a), Some(b)) = (self.hessian.as_mut(), other.hessian.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += w * y;
            }
        }
    }

    /// Largest entrywise gap, relative to `1 + |entry|`.
    pub fn max_relative_gap(&self, other: &FieldValue) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs().max(b.abs())))
            .fold(0.0, f64::max)
    }
}

/// Martingale integrand at a node: `F(child) - F(node) ~ <H, dB>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrand {
    /// `H`, one entry per Brownian coordinate
    pub h: Vec<f64>,
    /// `dH/dv`, row-major `M x d`
    pub dh_dv: Vec<f64>,
    /// largest per-edge misfit of the representation
    pub residual: f64,
}

impl Integrand {
    pub fn dh_dv_row(&self, m: usize) -> &[f64] {
        let d = self.h.len();
        &self.dh_dv[m * d..(m + 1) * d]
    }
}

/// Marginal prices computed both as `F_q / F_x` and from the pricing density.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalPrice {
    pub price: Vec<f64>,
    pub density_route: Vec<f64>,
    pub gap: f64,
}

/// Leaf moments for the exponential factorization, scaled by `exp(-shift)`.
#[derive(Debug, Clone)]
struct Moments {
    shift: f64,
    m0: f64,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ValueKey {
    node: usize,
    order: Order,
    bits: Vec<u64>,
}

#[derive(Debug, Default)]
struct Cache {
    moments: DashMap<(usize, Vec<u64>), Arc<Moments>>,
    values: DashMap<ValueKey, Arc<FieldValue>>,
}

fn bits(xs: impl IntoIterator<Item = f64>) -> Vec<u64> {
    xs.into_iter().map(f64::to_bits).collect()
}

/// Risk tolerances `1/gamma_m` when every maker is exponential.
fn exponential_tolerances(panel: &MakerPanel) -> Option<Vec<f64>> {
    panel
        .makers()
        .iter()
        .map(|u| match u.kind() {
            UtilityKind::Exponential { gamma } => Some(1.0 / gamma),
            UtilityKind::SumOfExponentials { .. } => None,
        })
        .collect()
}

/// Evaluator for `F` on a fixed panel and tree.
#[derive(Debug)]
pub struct Field<'a> {
    panel: &'a MakerPanel,
    tree: &'a ScenarioTree,
    tolerances: Option<Vec<f64>>,
    cache: Option<Cache>,
}

impl<'a> Field<'a> {
    pub fn new(panel: &'a MakerPanel, tree: &'a ScenarioTree) -> Self {
        Field {
            panel,
            tree,
            tolerances: exponential_tolerances(panel),
            cache: Some(Cache::default()),
        }
    }

    /// Turns memoization on or off.
    pub fn with_cache(mut self, on: bool) -> Self {
        self.cache = on.then(Cache::default);
        self
    }

    /// Forces the generic leaf-sum evaluation even for exponential panels.
    pub fn without_factorization(mut self) -> Self {
        self.tolerances = None;
        self
    }

    pub fn panel(&self) -> &'a MakerPanel {
        self.panel
    }

    pub fn tree(&self) -> &'a ScenarioTree {
        self.tree
    }

    pub fn is_factorized(&self) -> bool {
        self.tolerances.is_some()
    }

    pub fn clear_cache(&self) {
        if let Some(c) = &self.cache {
            c.moments.clear();
            c.values.clear();
        }
    }

    fn check_point(&self, a: &PrimalPoint) -> Result<()> {
        if a.v.len() != self.panel.len() {
            return Err(Error::input(format!(
                "point has {} weights for a panel of {}",
                a.v.len(),
                self.panel.len()
            )));
        }
        if a.q.len() != self.tree.claims() {
            return Err(Error::input(format!(
                "point has {} positions for a tree with {} claims",
                a.q.len(),
                self.tree.claims()
            )));
        }
        if !a.x.is_finite() || a.q.iter().any(|q| !q.is_finite()) {
            return Err(Error::input("point has non-finite cash or position"));
        }
        Ok(())
    }

    /// `F` at a leaf: the representative utility itself with the chain rule
    /// through `s = Sigma_0 + x + <q, psi>`.
    pub fn terminal(&self, a: &PrimalPoint, leaf: usize, order: Order) -> Result<FieldValue> {
        self.check_point(a)?;
        let psi = self.tree.leaf_claims(leaf);
        let s = a.total_endowment(self.tree.leaf_endowment(leaf), psi);
        let rep = representative_utility(self.panel, &a.v, s)?;
        Ok(leaf_value(&rep, a.v.as_slice(), psi, order))
    }

    /// `F` and the requested derivatives at `node`.
    pub fn at(&self, a: &PrimalPoint, node: NodeId, order: Order) -> Result<FieldValue> {
        self.check_point(a)?;
        if let Some(t) = &self.tolerances {
            let mom = self.moments(&a.q, node);
            return Ok(assemble(t, a, &mom, order));
        }
        let key = self.cache.as_ref().map(|_| ValueKey {
            node: node.0,
            order,
            bits: bits(a.v.as_slice().iter().copied().chain([a.x]).chain(a.q.iter().copied())),
        });
        if let (Some(c), Some(k)) = (&self.cache, &key) {
            if let Some(v) = c.values.get(k) {
                return Ok((**v).clone());
            }
        }
        let mut acc = FieldValue::zeros(self.panel.len(), self.tree.claims(), order);
        let mut err = None;
        self.tree.for_each_leaf(node, |leaf, w| {
            if err.is_some() {
                return;
            }
            let psi = self.tree.leaf_claims(leaf);
            let s = a.total_endowment(self.tree.leaf_endowment(leaf), psi);
            match representative_utility(self.panel, &a.v, s) {
                Ok(rep) => accumulate(&mut acc, &rep, a.v.as_slice(), psi, w),
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e.context(format!("field at node {}", node.0)));
        }
        if let (Some(c), Some(k)) = (&self.cache, key) {
            c.values.insert(k, Arc::new(acc.clone()));
        }
        Ok(acc)
    }

    /// `F` at every child of `node`, paired with its edge.
    pub fn children(&self, a: &PrimalPoint, node: NodeId, order: Order) -> Result<Vec<(Edge, FieldValue)>> {
        self.tree
            .children(node)
            .into_iter()
            .map(|e| {
                let f = self.at(a, e.child, order)?;
                Ok((e, f))
            })
            .collect()
    }

    /// All nodes by backward recursion from the leaves, indexed by node id.
    pub fn backward_all(&self, a: &PrimalPoint, order: Order, exec: Execution) -> Result<Vec<FieldValue>> {
        self.check_point(a)?;
        let tree = self.tree;
        let n = tree.steps();
        let mut out: Vec<Option<FieldValue>> = vec![None; tree.node_count()];
        let leaves = try_map_range(exec, tree.leaf_count(), |leaf| self.terminal(a, leaf, order))?;
        for (leaf, v) in leaves.into_iter().enumerate() {
            out[tree.leaf_node(leaf).0] = Some(v);
        }
        for level in (0..n).rev() {
            let nodes: Vec<NodeId> = tree.nodes_at_level(level).collect();
            let done = &out;
            let vals = try_map_range(exec, nodes.len(), |i| -> Result<FieldValue> {
                let mut acc = FieldValue::zeros(self.panel.len(), tree.claims(), order);
                for e in tree.children(nodes[i]) {
                    let child = done[e.child.0].as_ref().expect("children are filled first");
                    acc.add_scaled(child, e.prob);
                }
                Ok(acc)
            })?;
            for (node, v) in nodes.into_iter().zip(vals) {
                out[node.0] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every node visited")).collect())
    }

    /// Weighted least-squares `H` and `dH/dv` at a non-terminal node.
    pub fn integrand(&self, a: &PrimalPoint, node: NodeId) -> Result<Integrand> {
        if self.tree.is_leaf(node) {
            return Err(Error::input(format!("node {} is terminal", node.0)));
        }
        let d = self.tree.dim();
        let m = self.panel.len();
        let kids = self.children(a, node, Order::Gradient)?;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        for (e, _) in &kids {
            let db = DVector::from_column_slice(&e.db);
            gram += e.prob * &db * db.transpose();
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Tree(format!("increment matrix at node {} is rank deficient", node.0)))?;
        // node values as the tree average keeps the fit consistent with the recursion
        let mut base = FieldValue::zeros(m, self.tree.claims(), Order::Gradient);
        for (e, f) in &kids {
            base.add_scaled(f, e.prob);
        }
        let mut rhs = DMatrix::<f64>::zeros(d, 1 + m);
        for (e, f) in &kids {
            for i in 0..d {
                rhs[(i, 0)] += e.prob * (f.value - base.value) * e.db[i];
                for k in 0..m {
                    rhs[(i, 1 + k)] += e.prob * (f.grad_v[k] - base.grad_v[k]) * e.db[i];
                }
            }
        }
        let sol = chol.solve(&rhs);
        let h: Vec<f64> = (0..d).map(|i| sol[(i, 0)]).collect();
        let mut dh_dv = vec![0.0; m * d];
        for k in 0..m {
            for i in 0..d {
                dh_dv[k * d + i] = sol[(i, 1 + k)];
            }
        }
        let mut residual: f64 = 0.0;
        for (e, f) in &kids {
            let fit: f64 = h.iter().zip(&e.db).map(|(a, b)| a * b).sum();
            residual = residual.max((f.value - base.value - fit).abs());
        }
        Ok(Integrand { h, dh_dv, residual })
    }

    /// Marginal prices `F_q / F_x`, cross-checked against the expectation of
    /// `psi` under the density proportional to `u_1'(pi^1(a))`.
    pub fn marginal_price(&self, a: &PrimalPoint, node: NodeId) -> Result<MarginalPrice> {
        let f = self.at(a, node, Order::Gradient)?;
        let price: Vec<f64> = f.grad_q.iter().map(|g| g / f.grad_x).collect();
        let j = self.tree.claims();
        let first = &self.panel.makers()[0];
        let mut num = vec![0.0; j];
        let mut den = 0.0;
        let mut err = None;
        self.tree.for_each_leaf(node, |leaf, w| {
            if err.is_some() {
                return;
            }
            let psi = self.tree.leaf_claims(leaf);
            let s = a.total_endowment(self.tree.leaf_endowment(leaf), psi);
            match representative_utility(self.panel, &a.v, s) {
                Ok(rep) => {
                    let z = w * first.marginal(rep.split.0[0]);
                    den += z;
                    for (n, p) in num.iter_mut().zip(psi) {
                        *n += z * p;
                    }
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let density_route: Vec<f64> = num.iter().map(|n| n / den).collect();
        let gap = price
            .iter()
            .zip(&density_route)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(MarginalPrice {
            price,
            density_route,
            gap,
        })
    }

    fn moments(&self, q: &[f64], node: NodeId) -> Arc<Moments> {
        let key = self.cache.as_ref().map(|_| (node.0, bits(q.iter().copied())));
        if let (Some(c), Some(k)) = (&self.cache, &key) {
            if let Some(m) = c.moments.get(k) {
                return m.clone();
            }
        }
        let tau: f64 = self.tolerances.as_ref().expect("factorized panel").iter().sum();
        let tree = self.tree;
        let exponent = |leaf: usize| {
            let psi = tree.leaf_claims(leaf);
            -(tree.leaf_endowment(leaf) + q.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>()) / tau
        };
        let mut shift = f64::NEG_INFINITY;
        tree.for_each_leaf(node, |leaf, _| shift = shift.max(exponent(leaf)));
        let j = q.len();
        let mut m0 = 0.0;
        let mut m1 = vec![0.0; j];
        let mut m2 = vec![0.0; j * j];
        tree.for_each_leaf(node, |leaf, w| {
            let z = w * (exponent(leaf) - shift).exp();
            let psi = tree.leaf_claims(leaf);
            m0 += z;
            for a in 0..j {
                m1[a] += z * psi[a];
                for b in 0..j {
                    m2[a * j + b] += z * psi[a] * psi[b];
                }
            }
        });
        let mom = Arc::new(Moments { shift, m0, m1, m2 });
        if let (Some(c), Some(k)) = (&self.cache, key) {
            c.moments.insert(k, mom.clone());
        }
        mom
    }
}

/// Leaf contribution with weight one.
fn leaf_value(rep: &Representative, v: &[f64], psi: &[f64], order: Order) -> FieldValue {
    let mut out = FieldValue::zeros(v.len(), psi.len(), order);
    accumulate(&mut out, rep, v, psi, 1.0);
    out
}

fn accumulate(acc: &mut FieldValue, rep: &Representative, v: &[f64], psi: &[f64], w: f64) {
    acc.value += w * rep.r;
    for (g, u) in acc.grad_v.iter_mut().zip(&rep.utilities) {
        *g += w * u;
    }
    acc.grad_x += w * rep.y;
    for (g, p) in acc.grad_q.iter_mut().zip(psi) {
        *g += w * p * rep.y;
    }
    if acc.hessian.is_none() {
        return;
    }
    let m = v.len();
    let j = psi.len();
    let n = m + 1 + j;
    let rxx = rep.d2_xx();
    let rvx: Vec<f64> = (0..m).map(|k| rep.d2_vx(v, k)).collect();
    let h = acc.hess_mut();
    for l in 0..m {
        for k in 0..m {
            h[l * n + k] += w * rep.d2_vv(v, l, k);
        }
        h[l * n + m] += w * rvx[l];
        h[m * n + l] += w * rvx[l];
        for b in 0..j {
            let c = w * psi[b] * rvx[l];
            h[l * n + m + 1 + b] += c;
            h[(m + 1 + b) * n + l] += c;
        }
    }
    h[m * n + m] += w * rxx;
    for a in 0..j {
        let c = w * psi[a] * rxx;
        h[m * n + m + 1 + a] += c;
        h[(m + 1 + a) * n + m] += c;
        for b in 0..j {
            h[(m + 1 + a) * n + m + 1 + b] += w * psi[a] * psi[b] * rxx;
        }
    }
}

/// Closed-form derivatives for exponential panels from the leaf moments.
fn assemble(tol: &[f64], a: &PrimalPoint, mom: &Moments, order: Order) -> FieldValue {
    let v = a.v.as_slice();
    let m = v.len();
    let j = a.q.len();
    let tau: f64 = tol.iter().sum();
    let log_k = (v.iter().zip(tol).map(|(w, t)| t * w.ln()).sum::<f64>() - a.x) / tau + mom.shift;
    let k = log_k.exp();
    let ey = k * mom.m0;
    let eyp: Vec<f64> = mom.m1.iter().map(|z| k * z).collect();
    let mut out = FieldValue {
        value: -tau * ey,
        grad_v: v.iter().zip(tol).map(|(w, t)| -ey * t / w).collect(),
        grad_x: ey,
        grad_q: eyp.clone(),
        hessian: None,
    };
    if order == Order::Hessian {
        let n = m + 1 + j;
        let mut h = vec![0.0; n * n];
        for l in 0..m {
            for c in 0..m {
                let mut e = -tol[l] * tol[c] / (v[l] * v[c] * tau);
                if l == c {
                    e += tol[c] / (v[c] * v[c]);
                }
                h[l * n + c] = ey * e;
            }
            let vx = ey * tol[l] / (v[l] * tau);
            h[l * n + m] = vx;
            h[m * n + l] = vx;
            for b in 0..j {
                let vq = eyp[b] * tol[l] / (v[l] * tau);
                h[l * n + m + 1 + b] = vq;
                h[(m + 1 + b) * n + l] = vq;
            }
        }
        h[m * n + m] = -ey / tau;
        for b in 0..j {
            h[m * n + m + 1 + b] = -eyp[b] / tau;
            h[(m + 1 + b) * n + m] = -eyp[b] / tau;
            for c in 0..j {
                h[(m + 1 + b) * n + m + 1 + c] = -k * mom.m2[b * j + c] / tau;
            }
        }
        out.hessian = Some(h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representative::WeightVector;
    use crate::tree::{Payoff, TreeSpec};
    use crate::utility::UtilitySpec;

    fn one_period() -> ScenarioTree {
        TreeSpec::new(
            1,
            1.0,
            1,
            Payoff::expression("0").unwrap(),
            vec![Payoff::Table(vec![-1.0, 1.0])],
        )
        .build()
        .unwrap()
    }

    fn point(v: &[f64], x: f64, q: &[f64]) -> PrimalPoint {
        PrimalPoint::new(WeightVector::new(v.to_vec()).unwrap(), x, q.to_vec())
    }

    #[test]
    fn two_state_examples() {
        let panel = MakerPanel::exponential(&[1.0]).unwrap();
        let tree = one_period();
        let field = Field::new(&panel, &tree);
        let root = tree.root();
        let f0 = field.at(&point(&[1.0], 0.0, &[0.0]), root, Order::Value).unwrap();
        assert!((f0.value + 1.0).abs() < 1e-15);
        let f1 = field.at(&point(&[1.0], 0.0, &[1.0]), root, Order::Value).unwrap();
        assert!((f1.value + 1f64.cosh()).abs() < 1e-14);
    }

    #[test]
    fn terminal_examples() {
        let tree = TreeSpec::new(
            0,
            1.0,
            1,
            Payoff::expression("1").unwrap(),
            vec![Payoff::expression("1").unwrap()],
        )
        .build()
        .unwrap();
        let one = MakerPanel::exponential(&[1.0]).unwrap();
        let f = Field::new(&one, &tree);
        let v = f.terminal(&point(&[1.0], -1.0, &[0.0]), 0, Order::Value).unwrap();
        assert!((v.value + 1.0).abs() < 1e-15);
        let v = f.terminal(&point(&[1.0], -1.0, &[1.0]), 0, Order::Value).unwrap();
        assert!((v.value + (-1f64).exp()).abs() < 1e-15);
        let two = MakerPanel::exponential(&[1.0, 1.0]).unwrap();
        let f = Field::new(&two, &tree);
        let v = f.terminal(&point(&[1.0, 1.0], 0.0, &[0.0]), 0, Order::Value).unwrap();
        assert!((v.value + 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn factorized_matches_leaf_sum() {
        let panel = MakerPanel::exponential(&[0.5, 2.0, 1.5]).unwrap();
        let tree = TreeSpec::new(
            4,
            1.0,
            2,
            Payoff::expression("0.3*B1 - 0.2*B2").unwrap(),
            vec![
                Payoff::expression("1 + B1").unwrap(),
                Payoff::expression("B1*B2").unwrap(),
            ],
        )
        .build()
        .unwrap();
        let fast = Field::new(&panel, &tree);
        let slow = Field::new(&panel, &tree).without_factorization();
        let a = point(&[0.2, 0.5, 0.3], 0.4, &[0.7, -0.3]);
        for id in [0, 3, 7, 20] {
            let f = fast.at(&a, NodeId(id), Order::Hessian).unwrap();
            let s = slow.at(&a, NodeId(id), Order::Hessian).unwrap();
            assert!(f.max_relative_gap(&s) < 1e-12, "node {id}");
        }
    }

    #[test]
    fn single_leaf_price_is_the_claim() {
        let tree = TreeSpec::new(
            0,
            1.0,
            1,
            Payoff::expression("0").unwrap(),
            vec![Payoff::expression("3").unwrap()],
        )
        .build()
        .unwrap();
        let panel = MakerPanel::new(vec![
            UtilitySpec::sum_of_exponentials(vec![1.0, 1.0], vec![1.0, 2.0]).unwrap()
        ])
        .unwrap();
        let f = Field::new(&panel, &tree);
        let p = f.marginal_price(&point(&[1.0], 0.0, &[1.0]), tree.root()).unwrap();
        assert!((p.price[0] - 3.0).abs() < 1e-14);
        assert!(p.gap < 1e-14);
    }

    #[test]
    fn binomial_integrand_is_the_two_point_slope() {
        let panel = MakerPanel::exponential(&[1.0]).unwrap();
        let tree = one_period();
        let f = Field::new(&panel, &tree);
        let a = point(&[1.0], 0.0, &[0.5]);
        let kids = f.children(&a, tree.root(), Order::Value).unwrap();
        let (up, down) = if kids[0].0.db[0] > 0.0 {
            (&kids[0], &kids[1])
        } else {
            (&kids[1], &kids[0])
        };
        let h = f.integrand(&a, tree.root()).unwrap();
        let dt: f64 = tree.dt();
        assert!((h.h[0] - (up.1.value - down.1.value) / (2.0 * dt.sqrt())).abs() < 1e-14);
        assert!(h.residual < 1e-14);
        let flat = f.integrand(&point(&[1.0], 0.0, &[0.0]), tree.root()).unwrap();
        assert_eq!(flat.h[0], 0.0);
    }
}
