//! Closed-form reference: one exponential maker and a Bachelier stock.
//!
//! The maker has risk aversion `gamma`, endowment
//! `Sigma_0 = b + mu/(gamma sigma) B_T` and trades the claim
//! `psi = s + mu T + sigma B_T`. Then `F(v, x, q, t) = v exp(-gamma x) N_t(q)`
//! with the log-normal martingale
//! `N_t(q) = N_0(q) exp(-kappa B_t - kappa^2 t / 2)`, `kappa = mu/sigma + gamma sigma q`,
//! pinned by `N_0(q) = -E[exp(-gamma (Sigma_0 + q psi))] / gamma`.

use crate::error::{Error, Result};
use crate::tree::{Payoff, TreeSpec};
use crate::utility::MakerPanel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BachelierParams {
    pub gamma: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
    pub s: f64,
    pub horizon: f64,
}

impl Default for BachelierParams {
    fn default() -> Self {
        BachelierParams {
            gamma: 1.0,
            b: 0.0,
            mu: 0.1,
            sigma: 0.2,
            s: 10.0,
            horizon: 1.0,
        }
    }
}

fn lit(x: f64) -> String {
    format!("({x})")
}

impl BachelierParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("sigma", self.sigma), ("horizon", self.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("b", self.b), ("mu", self.mu), ("s", self.s)] {
            if !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `mu/sigma + gamma sigma q`
    pub fn kappa(&self, q: f64) -> f64 {
        self.mu / self.sigma + self.gamma * self.sigma * q
    }

    /// `N_0(q)` by the Gaussian moment formula.
    pub fn n0(&self, q: f64) -> f64 {
        let k = self.kappa(q);
        let mean = self.b + q * (self.s + self.mu * self.horizon);
        -(-self.gamma * mean + 0.5 * k * k * self.horizon).exp() / self.gamma
    }

    /// `N_t(q)` at Brownian level `bt`.
    pub fn n(&self, q: f64, t: f64, bt: f64) -> f64 {
        let k = self.kappa(q);
        self.n0(q) * (-k * bt - 0.5 * k * k * t).exp()
    }

    /// `F(a, t) = v exp(-gamma x) N_t(q)`
    pub fn f(&self, v: f64, x: f64, q: f64, t: f64, bt: f64) -> f64 {
        v * (-self.gamma * x).exp() * self.n(q, t, bt)
    }

    /// Martingale integrand `H = -kappa F`.
    pub fn h(&self, v: f64, x: f64, q: f64, t: f64, bt: f64) -> f64 {
        -self.kappa(q) * self.f(v, x, q, t, bt)
    }

    /// `dH/dv = -kappa exp(-gamma x) N_t(q)`
    pub fn dh_dv(&self, x: f64, q: f64, t: f64, bt: f64) -> f64 {
        -self.kappa(q) * (-self.gamma * x).exp() * self.n(q, t, bt)
    }

    /// `K(u, q) = -kappa u`
    pub fn k(&self, u: f64, q: f64) -> f64 {
        -self.kappa(q) * u
    }

    /// Marginal stock price `s + mu t + sigma B_t`.
    pub fn price(&self, t: f64, bt: f64) -> f64 {
        self.s + self.mu * t + self.sigma * bt
    }

    /// `G(u, 1, q, t)`, solving `u = exp(-gamma G) N_t(q)`.
    pub fn g(&self, u: f64, q: f64, t: f64, bt: f64) -> Result<f64> {
        if !(u < 0.0) {
            return Err(Error::domain(format!("indirect utility must be negative, got {u}")));
        }
        Ok(-(u / self.n(q, t, bt)).ln() / self.gamma)
    }

    /// Cumulative gain read off the indirect utility: `U = exp(gamma V) N_t(0)`.
    pub fn gain_from_u(&self, u: f64, t: f64, bt: f64) -> f64 {
        (u / self.n(0.0, t, bt)).ln() / self.gamma
    }

    /// Cash `xi` with `E[u(Sigma_0 + xi + q psi)] = E[u(Sigma_0)]`:
    /// `xi(q) = -q s + gamma sigma^2 T q^2 / 2`.
    pub fn indifference_price(&self, q: f64) -> f64 {
        -q * self.s + 0.5 * self.gamma * self.sigma * self.sigma * self.horizon * q * q
    }

    /// Terminal gain `int -Q dS - gamma sigma^2 / 2 int Q^2 dt` by left-point
    /// sums. `times` and `b` have one more entry than `q`.
    pub fn gain(&self, times: &[f64], q: &[f64], b: &[f64]) -> Result<f64> {
        if times.len() != b.len() || times.len() != q.len() + 1 {
            return Err(Error::input(format!(
                "grid mismatch: {} times, {} Brownian values, {} positions",
                times.len(),
                b.len(),
                q.len()
            )));
        }
        let impact = 0.5 * self.gamma * self.sigma * self.sigma;
        let mut v = 0.0;
        for k in 0..q.len() {
            let dt = times[k + 1] - times[k];
            let ds = self.mu * dt + self.sigma * (b[k + 1] - b[k]);
            v += -q[k] * ds - impact * q[k] * q[k] * dt;
        }
        Ok(v)
    }

    /// Gain of a constant position over `[0, t]`.
    pub fn constant_gain(&self, q: f64, t: f64, bt: f64) -> f64 {
        -q * (self.price(t, bt) - self.s) - 0.5 * self.gamma * self.sigma * self.sigma * q * q * t
    }

    pub fn panel(&self) -> Result<MakerPanel> {
        MakerPanel::exponential(&[self.gamma])
    }

    /// Binomial tree spec carrying this model's endowment and claim.
    pub fn tree_spec(&self, steps: usize) -> Result<TreeSpec> {
        self.validate()?;
        let endowment = format!("{} + {}*B", lit(self.b), lit(self.mu / (self.gamma * self.sigma)));
        let claim = format!("{} + {}*B", lit(self.s + self.mu * self.horizon), lit(self.sigma));
        Ok(TreeSpec::new(
            steps,
            self.horizon,
            1,
            Payoff::expression(&endowment)?,
            vec![Payoff::expression(&claim)?],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn deterministic_endowment() {
        let p = BachelierParams {
            mu: 0.0,
            ..Default::default()
        };
        assert!((p.n0(0.0) + 1.0).abs() < 1e-15);
        assert!((p.n(0.0, 0.5, 0.3) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let p = BachelierParams::default();
        assert!((p.k(-1.0, 0.0) - p.mu / p.sigma).abs() < 1e-15);
        assert!((p.k(-2.0, 0.7) - 2.0 * p.k(-1.0, 0.7)).abs() < 1e-15);
    }

    #[test]
    fn log_increments_carry_kappa() {
        let p = BachelierParams::default();
        let q = 0.8;
        let (t, dt, b, db) = (0.3, 1e-3, 0.1, 0.02);
        let lr = (p.n(q, t + dt, b + db) / p.n(q, t, b)).ln();
        let k = p.kappa(q);
        assert!((lr - (-k * db - 0.5 * k * k * dt)).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_oracles() {
        let p = BachelierParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut e0 = Vec::with_capacity(n);
        let mut e1 = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let bt = z * p.horizon.sqrt();
            let sigma0 = p.b + p.mu / (p.gamma * p.sigma) * bt;
            let psi = p.s + p.mu * p.horizon + p.sigma * bt;
            let y = -(-p.gamma * (sigma0 + psi)).exp() / p.gamma;
            s1 += y;
            s2 += y * y;
            e0.push((-p.gamma * sigma0).exp());
            e1.push((-p.gamma * (sigma0 + psi)).exp());
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - p.n0(1.0)).abs() < 3.0 * se);
        // root of exp(-gamma xi) mean(e1) = mean(e0), with a delta-method error
        let m0 = e0.iter().sum::<f64>() / n as f64;
        let m1 = e1.iter().sum::<f64>() / n as f64;
        let xi = (m1 / m0).ln() / p.gamma;
        let var = e0.iter().zip(&e1).map(|(a, b)| (b / m1 - a / m0).powi(2)).sum::<f64>() / n as f64;
        let se_xi = (var / n as f64).sqrt() / p.gamma;
        assert!(
            (xi - p.indifference_price(1.0)).abs() < 3.0 * se_xi,
            "{xi} vs {}",
            p.indifference_price(1.0)
        );
    }

    #[test]
    fn gain_examples() {
        let p = BachelierParams::default();
        let times = [0.0, 0.25, 0.5, 0.75, 1.0];
        let b = [0.0, 0.1, -0.2, 0.05, 0.3];
        assert_eq!(p.gain(&times, &[0.0; 4], &b).unwrap(), 0.0);
        let v = p.gain(&times, &[2.0; 4], &b).unwrap();
        assert!((v - p.constant_gain(2.0, 1.0, 0.3)).abs() < 1e-14);
        let w = p.gain(&times, &[-2.0; 4], &b).unwrap();
        assert!((v + w + 2.0 * 0.5 * p.gamma * p.sigma * p.sigma * 4.0).abs() < 1e-14);
        assert!(p.gain(&times, &[0.0; 3], &b).is_err());
        assert_eq!(p.indifference_price(0.0), 0.0);
        let q = 1.3;
        assert!(p.indifference_price(q) + p.indifference_price(-q) > 0.0);
    }
}
