//! The conjugate field `G(u, y, q) = sup_v inf_x [<v, u> + x y - F(v, x, q)]`.
//!
//! `G` is evaluated by solving the first-order conditions of the saddle
//! point at `y = 1`: find simplex weights `w` and cash `x` with
//! `dF/dv(w, x, q) = u`. Weights are parametrized by logits relative to the
//! last maker so iterates stay inside the simplex. The residual is taken in
//! log form, `ln(-F_v) - ln(-u)`, which is exactly linear for exponential
//! panels. At the solution the unnormalized weights are `w / F_x(w, x, q)`
//! and `G(u, y, q) = y x`.
//!
//! Second derivatives of `G` come from implicit differentiation of the
//! saddle system, never from differencing `G` itself.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{Field, FieldValue, Order};
use crate::representative::{PrimalPoint, WeightVector};
use crate::tree::NodeId;

/// A point `b = (u, y, q)` of the dual domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub u: Vec<f64>,
    pub y: f64,
    pub q: Vec<f64>,
}

impl DualPoint {
    pub fn new(u: Vec<f64>, y: f64, q: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::input("indirect utilities must be non-empty"));
        }
        if let Some(bad) = u.iter().find(|x| !(**x < 0.0 && x.is_finite())) {
            return Err(Error::domain(format!("indirect utilities must be negative, got {bad}")));
        }
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::domain(format!("marginal scale must be positive, got {y}")));
        }
        Ok(DualPoint { u, y, q })
    }

    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleOptions {
    /// Accept when `max |F_v - u| <= tolerance * (1 + |u|_inf)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of restart seeds after Newton and the fixed-point fallback fail.
    pub seeds: usize,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            tolerance: 1e-10,
            max_iterations: 100,
            seeds: 8,
        }
    }
}

/// The saddle point behind one evaluation of `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleResult {
    /// `G(u, y, q)`
    pub g: f64,
    /// simplex-normalized saddle weights
    pub v: WeightVector,
    /// saddle cash, `G(u, 1, q)`
    pub x: f64,
    /// `F_x` at the normalized weights
    pub scale: f64,
    pub y: f64,
    /// `max |F_v - u|` at the returned point
    pub residual: f64,
    pub iterations: usize,
}

impl SaddleResult {
    /// `dG/du(b)`, the weights scaled so that `F_x = y`.
    pub fn unnormalized(&self) -> Vec<f64> {
        self.v.as_slice().iter().map(|w| self.y * w / self.scale).collect()
    }

    /// The primal point with normalized weights.
    pub fn primal(&self, q: &[f64]) -> PrimalPoint {
        PrimalPoint::new(self.v.clone(), self.x, q.to_vec())
    }

    fn state(&self) -> Vec<f64> {
        let w = self.v.as_slice();
        let last = w[w.len() - 1].ln();
        let mut z: Vec<f64> = w[..w.len() - 1].iter().map(|x| x.ln() - last).collect();
        z.push(self.x);
        z
    }
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let top = theta.iter().cloned().fold(0.0, f64::max);
    let mut w: Vec<f64> = theta.iter().map(|t| (t - top).exp()).collect();
    w.push((-top).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

struct Eval {
    w: Vec<f64>,
    f: FieldValue,
    log_res: Vec<f64>,
    abs_res: f64,
}

impl Eval {
    fn norm(&self) -> f64 {
        self.log_res.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

/// Saddle solver and the dual derivatives built on it.
#[derive(Debug)]
pub struct Conjugate<'f, 'a> {
    field: &'f Field<'a>,
    opts: SaddleOptions,
}

impl<'f, 'a> Conjugate<'f, 'a> {
    pub fn new(field: &'f Field<'a>) -> Self {
        Conjugate {
            field,
            opts: SaddleOptions::default(),
        }
    }

    pub fn with_options(mut self, opts: SaddleOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn field(&self) -> &'f Field<'a> {
        self.field
    }

    pub fn options(&self) -> SaddleOptions {
        self.opts
    }

    fn check(&self, b: &DualPoint) -> Result<()> {
        if b.u.len() != self.field.panel().len() {
            return Err(Error::input(format!(
                "dual point has {} utilities for a panel of {}",
                b.u.len(),
                self.field.panel().len()
            )));
        }
        if b.q.len() != self.field.tree().claims() {
            return Err(Error::input(format!(
                "dual point has {} positions for a tree with {} claims",
                b.q.len(),
                self.field.tree().claims()
            )));
        }
        if b.u.iter().any(|x| !(*x < 0.0)) {
            return Err(Error::domain("indirect utilities must be negative"));
        }
        if !(b.y > 0.0) {
            return Err(Error::domain("marginal scale must be positive"));
        }
        Ok(())
    }

    fn eval(&self, z: &[f64], b: &DualPoint, node: NodeId, order: Order) -> Result<Eval> {
        let m = b.u.len();
        let w = softmax(&z[..m - 1]);
        let x = z[m - 1];
        let a = PrimalPoint::new(WeightVector::new(w.clone())?, x, b.q.clone());
        let f = self.field.at(&a, node, order)?;
        let mut log_res = Vec::with_capacity(m);
        let mut abs_res: f64 = 0.0;
        for (fv, u) in f.grad_v.iter().zip(&b.u) {
            if !(*fv < 0.0) || !fv.is_finite() {
                return Err(Error::domain(format!("dF/dv = {fv} is not negative")));
            }
            log_res.push((-fv).ln() - (-u).ln());
            abs_res = abs_res.max((fv - u).abs());
        }
        Ok(Eval { w, f, log_res, abs_res })
    }

    fn newton_step(&self, e: &Eval) -> Option<Vec<f64>> {
        let m = e.w.len();
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for r in 0..m {
            let fv = e.f.grad_v[r];
            for k in 0..m - 1 {
                let mut s = 0.0;
                for l in 0..m {
                    let dw = e.w[l] * (if l == k { 1.0 } else { 0.0 } - e.w[k]);
                    s += e.f.h_vv(r, l) * dw;
                }
                jac[(r, k)] = s / fv;
            }
            jac[(r, m - 1)] = e.f.h_vx(r) / fv;
        }
        let rhs = -DVector::from_column_slice(&e.log_res);
        jac.lu().solve(&rhs).map(|s| s.iter().copied().collect())
    }

    /// Damped update that is exact for exponential panels: logits follow the
    /// residual differences, cash follows the mean residual scaled by the
    /// aggregate risk tolerance `-F_x / F_xx`.
    fn fixed_point_step(&self, e: &Eval, damping: f64) -> Vec<f64> {
        let m = e.w.len();
        let last = e.log_res[m - 1];
        let mut step: Vec<f64> = e.log_res[..m - 1].iter().map(|r| damping * (r - last)).collect();
        let tol = -e.f.grad_x / e.f.h_xx();
        let mean = e.log_res.iter().sum::<f64>() / m as f64;
        step.push(damping * tol * mean);
        step
    }

    fn run(&self, z0: Vec<f64>, b: &DualPoint, node: NodeId, fixed_point: bool) -> Result<(Vec<f64>, Eval, usize)> {
        let mut z = z0;
        let mut cur = self.eval(&z, b, node, Order::Hessian)?;
        let mut it = 0;
        while it < self.opts.max_iterations {
            it += 1;
            if cur.log_res.iter().all(|r| r.abs() <= 4.0 * f64::EPSILON) {
                break;
            }
            let step = if fixed_point {
                Some(self.fixed_point_step(&cur, 0.5))
            } else {
                self.newton_step(&cur)
            };
            let Some(step) = step else { break };
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = z.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
                if let Ok(e) = self.eval(&trial, b, node, Order::Hessian) {
                    if e.norm() < cur.norm() {
                        accepted = Some((trial, e));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((t, e)) => {
                    z = t;
                    cur = e;
                }
                None => break,
            }
        }
        Ok((z, cur, it))
    }

    fn seeds(&self, m: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; m]];
        for k in 0..self.opts.seeds {
            let mut z = vec![0.0; m];
            if m > 1 {
                let hot = k % m;
                let sign = if (k / m).is_multiple_of(2) { 1.0 } else { -1.0 };
                for (i, zi) in z[..m - 1].iter_mut().enumerate() {
                    *zi = if i == hot { 2.0 * sign } else { -0.5 * sign };
                }
            }
            z[m - 1] = (k as f64 - self.opts.seeds as f64 / 2.0) * 2.0;
            out.push(z);
        }
        out
    }

    /// Saddle point for `b` at `node`, optionally warm-started.
    pub fn solve(&self, b: &DualPoint, node: NodeId, warm: Option<&SaddleResult>) -> Result<SaddleResult> {
        self.check(b)?;
        let m = b.u.len();
        let tol = self.opts.tolerance * (1.0 + b.max_abs_u());
        let b1 = DualPoint {
            u: b.u.clone(),
            y: 1.0,
            q: b.q.clone(),
        };
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(w) = warm {
            if w.v.len() == m {
                starts.push(w.state());
            }
        }
        starts.extend(self.seeds(m));
        let mut best: Option<(f64, usize)> = None;
        let mut total = 0;
        for (i, z0) in starts.into_iter().enumerate() {
            for fixed_point in [false, true] {
                let Ok((z, e, it)) = self.run(z0.clone(), &b1, node, fixed_point) else {
                    continue;
                };
                total += it;
                if best.is_none_or(|(r, _)| e.abs_res < r) {
                    best = Some((e.abs_res, total));
                }
                if e.abs_res <= tol {
                    let scale = e.f.grad_x;
                    return Ok(SaddleResult {
                        g: b.y * z[m - 1],
                        v: WeightVector::new(e.w)?,
                        x: z[m - 1],
                        scale,
                        y: b.y,
                        residual: e.abs_res,
                        iterations: total,
                    });
                }
                if i > 0 && !fixed_point {
                    // restarts: Newton only, the fixed point is the first fallback
                    break;
                }
            }
        }
        let (residual, iterations) = best.unwrap_or((f64::INFINITY, total));
        Err(Error::Saddle {
            node: node.0,
            residual,
            iterations,
        })
    }

    /// `G(b)` alone.
    pub fn g(&self, b: &DualPoint, node: NodeId) -> Result<f64> {
        Ok(self.solve(b, node, None)?.g)
    }

    /// `B`, `E`, `H` and the first derivatives of `G` at `b`.
    pub fn dual_matrices(&self, b: &DualPoint, node: NodeId, saddle: Option<&SaddleResult>) -> Result<DualMatrices> {
        let owned;
        let s = match saddle {
            Some(s) => s,
            None => {
                owned = self.solve(b, node, None)?;
                &owned
            }
        };
        let m = b.u.len();
        let j = b.q.len();
        // derivatives are taken at y = 1, where B, E, H are defined
        let v: Vec<f64> = s.v.as_slice().iter().map(|w| w / s.scale).collect();
        let a = PrimalPoint::new(WeightVector::new(v.clone())?, s.x, b.q.clone());
        let f = self.field.at(&a, node, Order::Hessian)?;
        let mut jac = DMatrix::<f64>::zeros(m + 1, m + 1);
        for r in 0..=m {
            for c in 0..=m {
                jac[(r, c)] = f.hess(r, c);
            }
        }
        let inv = jac
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("saddle Jacobian at node {}", node.0)))?;
        let mut rq = DMatrix::<f64>::zeros(m + 1, j);
        for r in 0..=m {
            for c in 0..j {
                rq[(r, c)] = -f.hess(r, m + 1 + c);
            }
        }
        let dq = &inv * &rq;
        let mut bm = DMatrix::<f64>::zeros(m, m);
        for l in 0..m {
            for k in 0..m {
                bm[(l, k)] = inv[(l, k)] / (v[l] * v[k]);
            }
        }
        let mut em = DMatrix::<f64>::zeros(m, j);
        for k in 0..m {
            for c in 0..j {
                em[(k, c)] = dq[(k, c)] / v[k];
            }
        }
        let mut hm = DMatrix::<f64>::zeros(j, j);
        for r in 0..j {
            for c in 0..j {
                let mut g = -f.h_qq(r, c);
                for k in 0..m {
                    g -= f.h_vq(k, r) * dq[(k, c)];
                }
                g -= f.h_xq(r) * dq[(m, c)];
                hm[(r, c)] = g;
            }
        }
        Ok(DualMatrices {
            b: bm,
            e: em,
            h: hm,
            grad_u: v.iter().map(|x| x * b.y).collect(),
            grad_q: f.grad_q.iter().map(|x| -x * b.y).collect(),
        })
    }

    /// Largest gain in the saddle objective from nudging `(v, x)` by a
    /// relative `delta` in any single coordinate in the wrong direction.
    pub fn saddle_optimality(&self, b: &DualPoint, node: NodeId, s: &SaddleResult, delta: f64) -> Result<f64> {
        let v: Vec<f64> = s.unnormalized();
        let x = s.x;
        let objective = |v: &[f64], x: f64| -> Result<f64> {
            let a = PrimalPoint::new(WeightVector::new(v.to_vec())?, x, b.q.clone());
            let f = self.field.at(&a, node, Order::Value)?;
            Ok(v.iter().zip(&b.u).map(|(a, c)| a * c).sum::<f64>() + x * b.y - f.value)
        };
        let base = objective(&v, x)?;
        let mut worst: f64 = 0.0;
        let hx = delta * (1.0 + x.abs());
        for sign in [-1.0, 1.0] {
            // inf over x: moving x must not lower the objective
            worst = worst.max(base - objective(&v, x + sign * hx)?);
            for k in 0..v.len() {
                let mut p = v.clone();
                p[k] *= 1.0 + sign * delta;
                // sup over v: moving v must not raise the objective
                worst = worst.max(objective(&p, x)? - base);
            }
        }
        Ok(worst)
    }
}

/// `conjugate_g` as a free function with default options.
pub fn conjugate_g(field: &Field<'_>, b: &DualPoint, node: NodeId) -> Result<SaddleResult> {
    Conjugate::new(field).solve(b, node, None)
}

/// `A`, `C`, `D` built from the Hessian of `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalMatrices {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// `B`, `E`, `H` and the gradient of `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMatrices {
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub grad_u: Vec<f64>,
    pub grad_q: Vec<f64>,
}

pub fn primal_matrices(f: &FieldValue, v: &[f64]) -> Result<PrimalMatrices> {
    if !f.has_hessian() {
        return Err(Error::input("primal matrices need the Hessian of F"));
    }
    let m = f.makers();
    let j = f.claims();
    let fx = f.grad_x;
    let fxx = f.h_xx();
    if !(fxx < 0.0) || !fxx.is_finite() {
        return Err(Error::Singular(format!("d2F/dx2 = {fxx}")));
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    for l in 0..m {
        for k in 0..m {
            a[(l, k)] = v[l] * v[k] / fx * (f.h_vv(l, k) - f.h_vx(l) * f.h_vx(k) / fxx);
        }
    }
    let mut c = DMatrix::<f64>::zeros(m, j);
    for k in 0..m {
        for i in 0..j {
            c[(k, i)] = v[k] / fx * (f.h_vq(k, i) - f.h_vx(k) * f.h_xq(i) / fxx);
        }
    }
    let mut d = DMatrix::<f64>::zeros(j, j);
    for r in 0..j {
        for i in 0..j {
            d[(r, i)] = (-f.h_qq(r, i) + f.h_xq(r) * f.h_xq(i) / fxx) / fx;
        }
    }
    Ok(PrimalMatrices { a, c, d })
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Residuals of the exact relations between the primal and dual matrices.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IdentityResiduals {
    /// `|B A - I|`
    pub inverse: f64,
    /// `|E + A^-1 C|`
    pub cross: f64,
    /// `|H - (C^T A^-1 C + D)|`
    pub quadratic: f64,
    /// `|sum_m C^mj - (F_qj / F_x - F_qjx / F_xx)|`
    pub c_row_sum: f64,
    /// `|sum_m A^lm + v^l F_vlx / F_xx|` and `|sum A + F_x / F_xx|`
    pub a_row_sum: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [self.inverse, self.cross, self.quadratic, self.c_row_sum, self.a_row_sum]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn identity_residuals(
    f: &FieldValue,
    v: &[f64],
    p: &PrimalMatrices,
    d: &DualMatrices,
) -> Result<IdentityResiduals> {
    let m = p.a.nrows();
    let a_inv =
        p.a.clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("matrix A".into()))?;
    let inverse = inf_norm(&(&d.b * &p.a - DMatrix::<f64>::identity(m, m)));
    let cross = inf_norm(&(&d.e + &a_inv * &p.c));
    let quadratic = inf_norm(&(&d.h - (p.c.transpose() * &a_inv * &p.c + &p.d)));
    let fx = f.grad_x;
    let fxx = f.h_xx();
    let mut c_row_sum: f64 = 0.0;
    for j in 0..p.c.ncols() {
        let lhs: f64 = p.c.column(j).iter().sum();
        let rhs = f.grad_q[j] / fx - f.h_xq(j) / fxx;
        c_row_sum = c_row_sum.max((lhs - rhs).abs());
    }
    let mut a_row_sum: f64 = 0.0;
    for (l, vl) in v.iter().enumerate().take(m) {
        let lhs: f64 = p.a.row(l).iter().sum();
        a_row_sum = a_row_sum.max((lhs + vl * f.h_vx(l) / fxx).abs());
    }
    let total: f64 = p.a.iter().sum();
    a_row_sum = a_row_sum.max((total + fx / fxx).abs());
    Ok(IdentityResiduals {
        inverse,
        cross,
        quadratic,
        c_row_sum,
        a_row_sum,
    })
}

/// A probe for the primal/dual round trips.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Primal(PrimalPoint),
    Dual(DualPoint),
}

/// Deviations of the four round-trip identities between `F` and `G`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundTrip {
    /// normalized `dG/du` at `dF/dv(a)` versus `w`
    pub weights: f64,
    /// `G(dF/dv(a), 1, q)` versus `x`
    pub cash: f64,
    /// `dF/dv` at the unnormalized saddle versus `u`
    pub utilities: f64,
    /// `dF/dv` at the normalized saddle versus `u`
    pub utilities_normalized: f64,
}

impl RoundTrip {
    pub fn max(&self) -> f64 {
        self.weights
            .max(self.cash)
            .max(self.utilities)
            .max(self.utilities_normalized)
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn state_identities(conj: &Conjugate<'_, '_>, probe: &Probe, node: NodeId) -> Result<RoundTrip> {
    let field = conj.field();
    let grad_at = |v: Vec<f64>, x: f64, q: &[f64]| -> Result<Vec<f64>> {
        let a = PrimalPoint::new(WeightVector::new(v)?, x, q.to_vec());
        Ok(field.at(&a, node, Order::Gradient)?.grad_v)
    };
    match probe {
        Probe::Primal(a) => {
            if !a.v.is_normalized(1e-12) {
                return Err(Error::input("primal probe weights must lie on the simplex"));
            }
            let u = field.at(a, node, Order::Gradient)?.grad_v;
            let b = DualPoint::new(u.clone(), 1.0, a.q.clone())?;
            let s = conj.solve(&b, node, None)?;
            let back = grad_at(s.unnormalized(), s.x, &a.q)?;
            let back_n = grad_at(s.v.as_slice().to_vec(), s.x, &a.q)?;
            Ok(RoundTrip {
                weights: max_gap(s.v.as_slice(), a.v.as_slice()),
                cash: (s.x - a.x).abs(),
                utilities: max_gap(&back, &u),
                utilities_normalized: max_gap(&back_n, &u),
            })
        }
        Probe::Dual(b) => {
            let b1 = DualPoint::new(b.u.clone(), 1.0, b.q.clone())?;
            let s = conj.solve(&b1, node, None)?;
            let back = grad_at(s.unnormalized(), s.x, &b.q)?;
            let back_n = grad_at(s.v.as_slice().to_vec(), s.x, &b.q)?;
            // and once more around: the recovered utilities map to the same saddle
            let again = conj.solve(&DualPoint::new(back_n.clone(), 1.0, b.q.clone())?, node, Some(&s))?;
            Ok(RoundTrip {
                weights: max_gap(again.v.as_slice(), s.v.as_slice()),
                cash: (again.x - s.x).abs(),
                utilities: max_gap(&back, &b.u),
                utilities_normalized: max_gap(&back_n, &b.u),
            })
        }
    }
}

/// `min` and `max` over `m` of `-u^m dG/du^m(u, 1, q)`.
pub fn utility_elasticity_range(s: &SaddleResult, u: &[f64]) -> (f64, f64) {
    let g = s.unnormalized();
    let y = s.y;
    g.iter()
        .zip(u)
        .map(|(gm, um)| -um * gm / y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Payoff, ScenarioTree, TreeSpec};
    use crate::utility::{MakerPanel, UtilitySpec};

    fn flat_tree() -> ScenarioTree {
        TreeSpec::new(
            0,
            1.0,
            1,
            Payoff::expression("0").unwrap(),
            vec![Payoff::expression("1").unwrap()],
        )
        .build()
        .unwrap()
    }

    fn two_period() -> ScenarioTree {
        TreeSpec::new(
            2,
            1.0,
            1,
            Payoff::expression("0.5*B1").unwrap(),
            vec![Payoff::expression("1 + 0.3*B1").unwrap()],
        )
        .build()
        .unwrap()
    }

    #[test]
    fn single_maker_terminal_examples() {
        let panel = MakerPanel::exponential(&[1.0]).unwrap();
        let tree = flat_tree();
        let field = Field::new(&panel, &tree);
        let b = DualPoint::new(vec![-1.0], 1.0, vec![0.0]).unwrap();
        assert!(conjugate_g(&field, &b, tree.root()).unwrap().g.abs() < 1e-14);
        let b = DualPoint::new(vec![-std::f64::consts::E], 1.0, vec![0.0]).unwrap();
        assert!((conjugate_g(&field, &b, tree.root()).unwrap().g + 1.0).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_in_y() {
        let panel = MakerPanel::exponential(&[1.0, 2.0]).unwrap();
        let tree = two_period();
        let field = Field::new(&panel, &tree);
        let conj = Conjugate::new(&field);
        let g1 = conj
            .g(&DualPoint::new(vec![-0.7, -0.4], 1.0, vec![0.5]).unwrap(), tree.root())
            .unwrap();
        for y in [0.1, 7.0] {
            let gy = conj
                .g(&DualPoint::new(vec![-0.7, -0.4], y, vec![0.5]).unwrap(), tree.root())
                .unwrap();
            assert!((gy - y * g1).abs() < 1e-12 * (1.0 + gy.abs()));
        }
    }

    #[test]
    fn grid_sup_inf_oracle() {
        let panel = MakerPanel::exponential(&[1.0, 2.0]).unwrap();
        let tree = two_period();
        let field = Field::new(&panel, &tree);
        let b = DualPoint::new(vec![-0.6, -0.3], 1.0, vec![0.4]).unwrap();
        let s = conjugate_g(&field, &b, tree.root()).unwrap();
        // sup over v = t (1-w, w), inf over x on a grid around the solution
        let v_star = s.unnormalized();
        let total: f64 = v_star.iter().sum();
        let mut best = f64::NEG_INFINITY;
        for i in 1..200 {
            let w = i as f64 / 200.0;
            for k in 0..40 {
                let t = total * (0.8 + 0.4 * k as f64 / 40.0);
                let v = [t * (1.0 - w), t * w];
                let mut inner = f64::INFINITY;
                for xi in 0..200 {
                    let x = s.x - 1.0 + 2.0 * xi as f64 / 200.0;
                    let a = PrimalPoint::new(WeightVector::new(v.to_vec()).unwrap(), x, b.q.clone());
                    let f = field.at(&a, tree.root(), Order::Value).unwrap().value;
                    inner = inner.min(v[0] * b.u[0] + v[1] * b.u[1] + x - f);
                }
                best = best.max(inner);
            }
        }
        assert!((best - s.g).abs() < 2e-3, "grid {best} vs solver {}", s.g);
    }

    #[test]
    fn matrix_identities_for_mixed_panel() {
        let panel = MakerPanel::new(vec![
            UtilitySpec::sum_of_exponentials(vec![1.0, 0.5], vec![1.0, 2.0]).unwrap(),
            UtilitySpec::exponential(1.5).unwrap(),
            UtilitySpec::sum_of_exponentials(vec![0.3, 0.3, 0.3], vec![0.5, 1.0, 3.0]).unwrap(),
        ])
        .unwrap();
        let tree = two_period();
        let field = Field::new(&panel, &tree);
        let conj = Conjugate::new(&field);
        let b = DualPoint::new(vec![-0.8, -0.5, -1.1], 1.0, vec![0.3]).unwrap();
        let s = conj.solve(&b, tree.root(), None).unwrap();
        let dm = conj.dual_matrices(&b, tree.root(), Some(&s)).unwrap();
        let v = s.unnormalized();
        let a = PrimalPoint::new(WeightVector::new(v.clone()).unwrap(), s.x, b.q.clone());
        let f = field.at(&a, tree.root(), Order::Hessian).unwrap();
        let pm = primal_matrices(&f, &v).unwrap();
        let res = identity_residuals(&f, &v, &pm, &dm).unwrap();
        assert!(res.max() < 1e-8, "{res:?}");
        assert!(conj.saddle_optimality(&b, tree.root(), &s, 1e-3).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_nonnegative_utilities() {
        assert!(DualPoint::new(vec![-1.0, 0.0], 1.0, vec![]).is_err());
        assert!(DualPoint::new(vec![-1.0], 0.0, vec![]).is_err());
    }
}
