//! The representative market maker and the Pareto allocation field.
//!
//! `r(v, x) = sup { sum_m v^m u_m(x^m) : sum_m x^m = x }` is solved through
//! its first-order condition `v^m u_m'(x^m) = y`: the common marginal value
//! `y = dr/dx` is the root of the monotone scalar equation
//! `sum_m I_m(y / v^m) = x`, with `I_m` the inverse marginal of maker `m`.
//! Differentiating the same condition gives the second derivatives of `r`
//! in terms of the makers' risk tolerances `t_m = 1 / a_m` at the optimal
//! split.

use crate::error::{Error, Result};
use crate::utility::{MakerPanel, UtilityKind};

const MAX_ITER: usize = 200;
const REL_TOL: f64 = 1e-12;

/// Pareto weights, strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::input("weight vector is empty"));
        }
        if v.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::domain(format!("weights must be positive and finite: {v:?}")));
        }
        Ok(WeightVector(v))
    }

    /// Equal weights on the simplex.
    pub fn uniform(m: usize) -> Self {
        WeightVector(vec![1.0 / m as f64; m])
    }

    /// Rescales onto the interior of the simplex.
    pub fn normalized(&self) -> Self {
        let s: f64 = self.0.iter().sum();
        WeightVector(self.0.iter().map(|w| w / s).collect())
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-maker terminal wealth in one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation(pub Vec<f64>);

impl Allocation {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// A point `a = (v, x, q)`: weights, collective cash, collective stock position.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    pub v: WeightVector,
    pub x: f64,
    pub q: Vec<f64>,
}

impl PrimalPoint {
    pub fn new(v: WeightVector, x: f64, q: Vec<f64>) -> Self {
        PrimalPoint { v, x, q }
    }

    /// `(lambda, 0, 0)`, the point of the initial Pareto allocation.
    pub fn initial(lambda: WeightVector, claims: usize) -> Self {
        PrimalPoint {
            v: lambda,
            x: 0.0,
            q: vec![0.0; claims],
        }
    }

    /// Total endowment `sigma0 + x + <q, psi>` in one state.
    pub fn total_endowment(&self, sigma0: f64, psi: &[f64]) -> f64 {
        sigma0 + self.x + self.q.iter().zip(psi).map(|(q, p)| q * p).sum::<f64>()
    }
}

/// The representative maker evaluated at `(v, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    /// `r(v, x)`
    pub r: f64,
    /// `dr/dx`, the common value of `v^m u_m'(x^m)`
    pub y: f64,
    /// optimal split `x^m`
    pub split: Allocation,
    /// `u_m(x^m) = dr/dv^m`
    pub utilities: Vec<f64>,
    /// `t_m(x^m)`
    pub tolerances: Vec<f64>,
}

impl Representative {
    pub fn total_tolerance(&self) -> f64 {
        self.tolerances.iter().sum()
    }

    /// `d2r/dv^l dv^m`
    pub fn d2_vv(&self, v: &[f64], l: usize, m: usize) -> f64 {
        let ts = self.total_tolerance();
        let tl = self.tolerances[l];
        let tm = self.tolerances[m];
        let mut out = -tl * tm / (v[l] * v[m] * ts);
        if l == m {
            out += tm / (v[m] * v[m]);
        }
        self.y * out
    }

    /// `d2r/dv^m dx`
    pub fn d2_vx(&self, v: &[f64], m: usize) -> f64 {
        self.y * self.tolerances[m] / (v[m] * self.total_tolerance())
    }

    /// `d2r/dx2`
    pub fn d2_xx(&self) -> f64 {
        -self.y / self.total_tolerance()
    }
}

/// `r(v, x)` with its optimal split and marginal value.
pub fn representative_utility(panel: &MakerPanel, v: &WeightVector, x: f64) -> Result<Representative> {
    let v = v.as_slice();
    if v.len() != panel.len() {
        return Err(Error::input(format!(
            "weight vector has {} entries for a panel of {}",
            v.len(),
            panel.len()
        )));
    }
    if !x.is_finite() {
        return Err(Error::input(format!("wealth must be finite, got {x}")));
    }
    let makers = panel.makers();
    if makers.len() == 1 {
        let u = &makers[0];
        return Ok(Representative {
            r: v[0] * u.value(x),
            y: v[0] * u.marginal(x),
            split: Allocation(vec![x]),
            utilities: vec![u.value(x)],
            tolerances: vec![u.risk_tolerance(x)],
        });
    }
    if panel.all_exponential() {
        return Ok(exponential_panel(panel, v, x));
    }
    general_panel(panel, v, x)
}

/// Closed form: `ln y = (sum_m ln(v^m)/gamma_m - x) / tau` with `tau = sum 1/gamma_m`.
fn exponential_panel(panel: &MakerPanel, v: &[f64], x: f64) -> Representative {
    let gammas: Vec<f64> = panel
        .makers()
        .iter()
        .map(|u| match u.kind() {
            UtilityKind::Exponential { gamma } => *gamma,
            UtilityKind::SumOfExponentials { .. } => unreachable!(),
        })
        .collect();
    let tau: f64 = gammas.iter().map(|g| 1.0 / g).sum();
    let log_y = (v.iter().zip(&gammas).map(|(w, g)| w.ln() / g).sum::<f64>() - x) / tau;
    let y = log_y.exp();
    let split = v.iter().zip(&gammas).map(|(w, g)| -(log_y - w.ln()) / g).collect();
    let utilities = v.iter().zip(&gammas).map(|(w, g)| -y / (g * w)).collect();
    Representative {
        r: -tau * y,
        y,
        split: Allocation(split),
        utilities,
        tolerances: gammas.iter().map(|g| 1.0 / g).collect(),
    }
}

fn general_panel(panel: &MakerPanel, v: &[f64], x: f64) -> Result<Representative> {
    let makers = panel.makers();
    let m = makers.len();
    let log_v: Vec<f64> = v.iter().map(|w| w.ln()).collect();
    // h(l) = sum_m I_m(l - ln v^m) - x, decreasing in l = ln y with slope -sum t_m
    let h = |l: f64| -> Result<(f64, f64)> {
        let mut sum = 0.0;
        let mut slope = 0.0;
        for (u, lv) in makers.iter().zip(&log_v) {
            let xm = u.inverse_marginal_log(l - lv)?;
            sum += xm;
            slope -= u.risk_tolerance(xm);
        }
        Ok((sum - x, slope))
    };

    let y0 = makers
        .iter()
        .zip(v)
        .map(|(u, w)| w * u.marginal(x / m as f64))
        .sum::<f64>()
        / m as f64;
    let l0 = y0.ln();
    let mut log_kappa = std::f64::consts::LN_2;
    let (mut lo, mut hi);
    let mut expansions = 0;
    loop {
        lo = l0 - log_kappa;
        hi = l0 + log_kappa;
        let (h_lo, _) = h(lo)?;
        let (h_hi, _) = h(hi)?;
        if h_lo >= 0.0 && h_hi <= 0.0 {
            break;
        }
        log_kappa *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::RootFind {
                what: format!("representative marginal bracket at x = {x}"),
                residual: h_lo.min(-h_hi),
                iterations: expansions,
            });
        }
    }

    let mut l = 0.5 * (lo + hi);
    let mut converged = false;
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        let (hv, slope) = h(l)?;
        last = hv;
        if hv == 0.0 {
            converged = true;
            break;
        }
        if hv > 0.0 {
            lo = l;
        } else {
            hi = l;
        }
        let mut next = l - hv / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - l).abs();
        l = next;
        if step <= 4.0 * f64::EPSILON * (1.0 + l.abs()) {
            converged = true;
            break;
        }
        if step <= REL_TOL && hi - lo <= REL_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::RootFind {
            what: format!("representative marginal at x = {x}"),
            residual: last,
            iterations,
        });
    }

    let y = l.exp();
    let mut split = Vec::with_capacity(m);
    let mut utilities = Vec::with_capacity(m);
    let mut tolerances = Vec::with_capacity(m);
    let mut r = 0.0;
    for ((u, w), lv) in makers.iter().zip(v).zip(&log_v) {
        let xm = u.inverse_marginal_log(l - lv)?;
        let um = u.value(xm);
        r += w * um;
        split.push(xm);
        utilities.push(um);
        tolerances.push(u.risk_tolerance(xm));
    }
    // first-order correction for the residual budget violation
    let gap = x - split.iter().sum::<f64>();
    r += y * gap;
    Ok(Representative {
        r,
        y,
        split: Allocation(split),
        utilities,
        tolerances,
    })
}

/// `pi(a)` in a state where the total endowment `Sigma(x, q)` equals `sigma`.
pub fn pareto_allocation(panel: &MakerPanel, a: &PrimalPoint, sigma: f64) -> Result<Allocation> {
    Ok(representative_utility(panel, &a.v, sigma)?.split)
}

/// The simplex weights under which `alpha` is Pareto optimal:
/// `lambda^m` proportional to `1 / u_m'(alpha^m)`.
pub fn weights_from_allocation(panel: &MakerPanel, alpha: &Allocation) -> Result<WeightVector> {
    if alpha.0.len() != panel.len() {
        return Err(Error::input(format!(
            "allocation has {} entries for a panel of {}",
            alpha.0.len(),
            panel.len()
        )));
    }
    if alpha.0.iter().any(|a| !a.is_finite()) {
        return Err(Error::input("allocation entries must be finite"));
    }
    let logs: Vec<f64> = panel
        .makers()
        .iter()
        .zip(&alpha.0)
        .map(|(u, a)| -u.log_marginal(*a))
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    WeightVector::new(raw).map(|w| w.normalized())
}

/// `(dr/dv, dr/dx)` at `(v, x)`.
pub fn representative_gradient(panel: &MakerPanel, v: &WeightVector, x: f64) -> Result<(Vec<f64>, f64)> {
    let rep = representative_utility(panel, v, x)?;
    Ok((rep.utilities, rep.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilitySpec;
    use approx::assert_relative_eq;

    fn mixed_panel() -> MakerPanel {
        MakerPanel::new(vec![
            UtilitySpec::exponential(1.0).unwrap(),
            UtilitySpec::exponential(2.0).unwrap(),
        ])
        .unwrap()
    }

    fn general_panel_fixture() -> MakerPanel {
        MakerPanel::new(vec![
            UtilitySpec::sum_of_exponentials(vec![1.0, 0.5], vec![0.5, 2.0]).unwrap(),
            UtilitySpec::exponential(1.5).unwrap(),
            UtilitySpec::sum_of_exponentials(vec![0.3], vec![0.8]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn single_maker_is_degenerate() {
        let p = MakerPanel::exponential(&[1.0]).unwrap();
        let v = WeightVector::new(vec![2.5]).unwrap();
        let rep = representative_utility(&p, &v, 0.7).unwrap();
        assert_relative_eq!(rep.r, 2.5 * -(-0.7f64).exp(), max_relative = 1e-15);
        assert_eq!(rep.split.0, vec![0.7]);
        let (dv, dx) = representative_gradient(&p, &v, 0.7).unwrap();
        assert_relative_eq!(dv[0], -(-0.7f64).exp());
        assert_relative_eq!(dx, 2.5 * (-0.7f64).exp());
        let a = PrimalPoint::new(v, 0.0, vec![]);
        assert_eq!(pareto_allocation(&p, &a, 3.0).unwrap().0, vec![3.0]);
        assert_eq!(
            weights_from_allocation(&p, &Allocation(vec![4.0])).unwrap().as_slice(),
            &[1.0]
        );
    }

    #[test]
    fn symmetric_pair() {
        let p = MakerPanel::exponential(&[1.0, 1.0]).unwrap();
        let v = WeightVector::new(vec![1.0, 1.0]).unwrap();
        let rep = representative_utility(&p, &v, 0.0).unwrap();
        assert_relative_eq!(rep.r, -2.0, epsilon = 1e-15);
        assert_relative_eq!(rep.y, 1.0, epsilon = 1e-15);
        assert!(rep.split.0.iter().all(|x| x.abs() < 1e-15));
        let (dv, dx) = representative_gradient(&p, &v, 0.0).unwrap();
        assert_relative_eq!(dv[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(dv[1], -1.0, epsilon = 1e-15);
        assert_relative_eq!(dx, 1.0, epsilon = 1e-15);
        let a = PrimalPoint::new(v, 0.0, vec![]);
        let pi = pareto_allocation(&p, &a, 2.0).unwrap();
        assert_relative_eq!(pi.0[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(pi.0[1], 1.0, epsilon = 1e-14);
        let w = weights_from_allocation(&p, &Allocation(vec![0.0, 0.0])).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn unequal_weights_against_grid_search() {
        let p = MakerPanel::exponential(&[1.0, 1.0]).unwrap();
        let e = std::f64::consts::E;
        let v = WeightVector::new(vec![1.0, e]).unwrap();
        // grid-search oracle over x^1 in [-5, 5], step 1e-4
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=100_000 {
            let x1 = -5.0 + i as f64 * 1e-4;
            let val = -(-x1).exp() - e * (x1).exp();
            if val > best {
                best = val;
                arg = x1;
            }
        }
        let rep = representative_utility(&p, &v, 0.0).unwrap();
        assert_relative_eq!(arg, -0.5, epsilon = 1e-4);
        assert_relative_eq!(rep.r, best, max_relative = 1e-8);
        assert_relative_eq!(rep.r, -2.0 * e.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(rep.split.0[0], -0.5, epsilon = 1e-14);
        assert_relative_eq!(rep.split.0[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn unequal_risk_aversion_foc() {
        let p = mixed_panel();
        let v = WeightVector::new(vec![1.0, 1.0]).unwrap();
        let a = PrimalPoint::new(v, 0.0, vec![]);
        let pi = pareto_allocation(&p, &a, 0.0).unwrap();
        // bisection oracle on e^{-x} = e^{-2(-x)} with x^2 = -x^1
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid: f64 = 0.5 * (lo + hi);
            if (-mid).exp() - (2.0 * mid).exp() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(pi.0[0], 0.5 * (lo + hi), epsilon = 1e-13);
        let res = (-pi.0[0]).exp() - (-2.0 * pi.0[1]).exp();
        assert!(res.abs() < 1e-10);
        let w = weights_from_allocation(&p, &Allocation(vec![0.0, 0.0])).unwrap();
        assert_relative_eq!(w.as_slice()[0], 0.5);
        assert_relative_eq!(w.as_slice()[1], 0.5);
    }

    #[test]
    fn general_panel_matches_exponential_closed_form() {
        // a one-term sum-of-exponentials with weight 1/gamma is the exponential utility
        let general = MakerPanel::new(vec![
            UtilitySpec::sum_of_exponentials(vec![1.0], vec![1.0]).unwrap(),
            UtilitySpec::sum_of_exponentials(vec![0.5], vec![2.0]).unwrap(),
        ])
        .unwrap();
        let closed = mixed_panel();
        for &(w1, x) in &[(0.3, -2.0), (0.5, 0.0), (0.9, 4.0)] {
            let v = WeightVector::new(vec![w1, 1.0 - w1]).unwrap();
            let a = representative_utility(&general, &v, x).unwrap();
            let b = representative_utility(&closed, &v, x).unwrap();
            assert_relative_eq!(a.r, b.r, max_relative = 1e-14);
            assert_relative_eq!(a.y, b.y, max_relative = 1e-13);
            for m in 0..2 {
                assert_relative_eq!(a.split.0[m], b.split.0[m], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let p = general_panel_fixture();
        let v = vec![0.2, 0.5, 0.3];
        let x = 0.4;
        let rep = representative_utility(&p, &WeightVector::new(v.clone()).unwrap(), x).unwrap();
        let h = 1e-5;
        let grad = |v: &[f64], x: f64| {
            let r = representative_utility(&p, &WeightVector::new(v.to_vec()).unwrap(), x).unwrap();
            (r.utilities, r.y)
        };
        let (_, yp) = grad(&v, x + h);
        let (_, ym) = grad(&v, x - h);
        assert_relative_eq!(rep.d2_xx(), (yp - ym) / (2.0 * h), max_relative = 1e-7);
        for l in 0..3 {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[l] += h;
            vm[l] -= h;
            let (up, yvp) = grad(&vp, x);
            let (um, yvm) = grad(&vm, x);
            assert_relative_eq!(rep.d2_vx(&v, l), (yvp - yvm) / (2.0 * h), max_relative = 1e-7);
            for m in 0..3 {
                assert_relative_eq!(
                    rep.d2_vv(&v, m, l),
                    (up[m] - um[m]) / (2.0 * h),
                    max_relative = 1e-6,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn rejects_mismatched_weights() {
        let p = mixed_panel();
        assert!(representative_utility(&p, &WeightVector::new(vec![1.0]).unwrap(), 0.0).is_err());
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
    }
}
