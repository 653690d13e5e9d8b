//! Market-maker utility functions.
//!
//! Every admissible utility is strictly increasing, strictly concave,
//! negative, vanishes at `+inf`, and has absolute risk aversion confined to
//! `[1/c, c]`. Two families satisfy this exactly with a computable `c`:
//!
//! * exponential: `u(x) = -exp(-gamma x) / gamma`
//! * sum of exponentials: `u(x) = -sum_i w_i exp(-gamma_i x)`
//!
//! The exponential family is the sum family with the single weight
//! `1/gamma`; it is kept separate because its inverse marginal and the
//! representative utility of an all-exponential panel have closed forms.

use crate::error::{Error, Result};

const INVERSE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum UtilityKind {
    Exponential { gamma: f64 },
    SumOfExponentials { weights: Vec<f64>, rates: Vec<f64> },
}

/// One market maker's utility for terminal wealth.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    kind: UtilityKind,
    /// `ln(w_i gamma_i)`, cached for the log-sum-exp marginal.
    log_coef: Vec<f64>,
}

impl UtilitySpec {
    pub fn exponential(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!(
                "exponential risk aversion must be positive, got {gamma}"
            )));
        }
        Ok(UtilitySpec {
            kind: UtilityKind::Exponential { gamma },
            log_coef: vec![0.0],
        })
    }

    pub fn sum_of_exponentials(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != rates.len() {
            return Err(Error::input(format!(
                "sum-of-exponentials needs matching non-empty weights and rates ({} vs {})",
                weights.len(),
                rates.len()
            )));
        }
        if weights.iter().chain(rates.iter()).any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::input("sum-of-exponentials weights and rates must be positive"));
        }
        let log_coef = weights.iter().zip(&rates).map(|(w, g)| (w * g).ln()).collect();
        Ok(UtilitySpec {
            kind: UtilityKind::SumOfExponentials { weights, rates },
            log_coef,
        })
    }

    pub fn kind(&self) -> &UtilityKind {
        &self.kind
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.kind, UtilityKind::Exponential { .. })
    }

    /// Risk-aversion bound `c >= 1` with `1/c <= a(x) <= c` on the whole line.
    pub fn bound_constant(&self) -> f64 {
        let (lo, hi) = match &self.kind {
            UtilityKind::Exponential { gamma } => (*gamma, *gamma),
            UtilityKind::SumOfExponentials { rates, .. } => (
                rates.iter().cloned().fold(f64::INFINITY, f64::min),
                rates.iter().cloned().fold(0.0, f64::max),
            ),
        };
        hi.max(1.0 / lo).max(1.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            UtilityKind::Exponential { gamma } => -(-gamma * x).exp() / gamma,
            UtilityKind::SumOfExponentials { weights, rates } => {
                -weights.iter().zip(rates).map(|(w, g)| w * (-g * x).exp()).sum::<f64>()
            }
        }
    }

    pub fn marginal(&self, x: f64) -> f64 {
        match &self.kind {
            UtilityKind::Exponential { gamma } => (-gamma * x).exp(),
            UtilityKind::SumOfExponentials { weights, rates } => {
                weights.iter().zip(rates).map(|(w, g)| w * g * (-g * x).exp()).sum()
            }
        }
    }

    /// `ln u'(x)`, evaluated without overflow for the sum family.
    pub fn log_marginal(&self, x: f64) -> f64 {
        match &self.kind {
            UtilityKind::Exponential { gamma } => -gamma * x,
            UtilityKind::SumOfExponentials { rates, .. } => {
                let mut top = f64::NEG_INFINITY;
                for (lc, g) in self.log_coef.iter().zip(rates) {
                    top = top.max(lc - g * x);
                }
                let s: f64 = self
                    .log_coef
                    .iter()
                    .zip(rates)
                    .map(|(lc, g)| (lc - g * x - top).exp())
                    .sum();
                top + s.ln()
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.kind {
            UtilityKind::Exponential { gamma } => -gamma * (-gamma * x).exp(),
            UtilityKind::SumOfExponentials { weights, rates } => -weights
                .iter()
                .zip(rates)
                .map(|(w, g)| w * g * g * (-g * x).exp())
                .sum::<f64>(),
        }
    }

    /// Absolute risk aversion `-u''(x) / u'(x)`.
    pub fn risk_aversion(&self, x: f64) -> f64 {
        match &self.kind {
            UtilityKind::Exponential { gamma } => *gamma,
            UtilityKind::SumOfExponentials { rates, .. } => {
                // weighted mean of the rates under weights w_i g_i e^{-g_i x}
                let mut top = f64::NEG_INFINITY;
                for (lc, g) in self.log_coef.iter().zip(rates) {
                    top = top.max(lc - g * x);
                }
                let (mut num, mut den) = (0.0, 0.0);
                for (lc, g) in self.log_coef.iter().zip(rates) {
                    let e = (lc - g * x - top).exp();
                    num += g * e;
                    den += e;
                }
                num / den
            }
        }
    }

    /// Risk tolerance `1 / a(x)`.
    pub fn risk_tolerance(&self, x: f64) -> f64 {
        1.0 / self.risk_aversion(x)
    }

    /// Solves `u'(x) = y`.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::domain(format!(
                "inverse marginal requires a positive finite argument, got {y}"
            )));
        }
        match &self.kind {
            UtilityKind::Exponential { gamma } => Ok(-y.ln() / gamma),
            UtilityKind::SumOfExponentials { .. } => self.inverse_marginal_log(y.ln()),
        }
    }

    /// Solves `ln u'(x) = log_y`. `ln u'` is decreasing with slope `-a(x)`.
    pub(crate) fn inverse_marginal_log(&self, log_y: f64) -> Result<f64> {
        if let UtilityKind::Exponential { gamma } = self.kind {
            return Ok(-log_y / gamma);
        }
        let g = |x: f64| self.log_marginal(x) - log_y;
        let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
        let g0 = g(0.0);
        if g0 == 0.0 {
            return Ok(0.0);
        }
        let mut step = 1.0;
        let mut grown = 0;
        if g0 > 0.0 {
            // root to the right
            loop {
                hi = step;
                if g(hi) <= 0.0 {
                    break;
                }
                lo = hi;
                step *= 2.0;
                grown += 1;
                if grown > 1100 {
                    return Err(Error::RootFind {
                        what: "inverse marginal bracket".into(),
                        residual: g(hi),
                        iterations: grown,
                    });
                }
            }
        } else {
            loop {
                lo = -step;
                if g(lo) >= 0.0 {
                    break;
                }
                hi = lo;
                step *= 2.0;
                grown += 1;
                if grown > 1100 {
                    return Err(Error::RootFind {
                        what: "inverse marginal bracket".into(),
                        residual: g(lo),
                        iterations: grown,
                    });
                }
            }
        }
        // bisect until the bracket is narrow, then Newton polish inside it
        let mut iter = 0;
        while hi - lo > 1e-3 * (1.0 + lo.abs().max(hi.abs())) && iter < INVERSE_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iter += 1;
        }
        let mut x = 0.5 * (lo + hi);
        while iter < INVERSE_MAX_ITER {
            let gx = g(x);
            if gx == 0.0 {
                return Ok(x);
            }
            if gx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x + gx / self.risk_aversion(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let dx = (next - x).abs();
            x = next;
            iter += 1;
            if dx <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
                return Ok(x);
            }
        }
        let residual = g(x);
        if residual.abs() < 1e-12 {
            Ok(x)
        } else {
            Err(Error::RootFind {
                what: "inverse marginal".into(),
                residual,
                iterations: iter,
            })
        }
    }
}

/// The ordered list of market makers and their common risk-aversion bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MakerPanel {
    makers: Vec<UtilitySpec>,
    bound_constant: f64,
    all_exponential: bool,
}

impl MakerPanel {
    pub fn new(makers: Vec<UtilitySpec>) -> Result<Self> {
        if makers.is_empty() {
            return Err(Error::input("a panel needs at least one market maker"));
        }
        let c = makers.iter().map(UtilitySpec::bound_constant).fold(1.0, f64::max);
        let all_exponential = makers.iter().all(UtilitySpec::is_exponential);
        Ok(MakerPanel {
            makers,
            bound_constant: c,
            all_exponential,
        })
    }

    /// Panel with a declared constant; it must dominate every maker's own bound.
    pub fn with_bound_constant(makers: Vec<UtilitySpec>, c: f64) -> Result<Self> {
        let mut panel = Self::new(makers)?;
        let c = c.max(1.0 / c);
        if c < panel.bound_constant {
            return Err(Error::input(format!(
                "declared bound constant {c} is below the panel's own bound {}",
                panel.bound_constant
            )));
        }
        panel.bound_constant = c;
        Ok(panel)
    }

    /// Panel of exponential makers with the given risk aversions.
    pub fn exponential(gammas: &[f64]) -> Result<Self> {
        Self::new(
            gammas
                .iter()
                .map(|g| UtilitySpec::exponential(*g))
                .collect::<Result<_>>()?,
        )
    }

    pub fn makers(&self) -> &[UtilitySpec] {
        &self.makers
    }

    pub fn len(&self) -> usize {
        self.makers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.makers.is_empty()
    }

    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    pub fn all_exponential(&self) -> bool {
        self.all_exponential
    }
}
