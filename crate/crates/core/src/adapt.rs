//! Exponential-forgetting memory regressor and the adaptive laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::dot;
use crate::wide::Wide;

/// Memory regressor `Υ = ∫e^{−στ}ΔY dτ`, `Ω = ∫e^{−στ}Δ² dτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    pub upsilon: Vec<f64>,
    pub omega: f64,
    pub sigma: f64,
}

impl MemoryState {
    pub fn new(dim: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Validation(format!(
                "forgetting rate σ = {sigma} must be > 0"
            )));
        }
        Ok(Self {
            upsilon: vec![0.0; dim],
            omega: 0.0,
            sigma,
        })
    }
}

/// Gain schedule parameters: `γ = (γ₀ λ_max(ωωᵀ) + γ₁) / Ω²` when `Ω ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub gamma0: f64,
    pub gamma1: f64,
    /// `|Ω| ≤ eps_omega` is treated as `Ω = 0`. The default 0 selects the
    /// exact-zero branch; `Ω` is carried with an extended exponent, so it
    /// never underflows to a spurious zero.
    #[serde(default)]
    pub eps_omega: f64,
}

impl Default for GainSchedule {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            gamma1: 0.0,
            eps_omega: 0.0,
        }
    }
}

impl GainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 1.0) {
            return Err(Error::Validation(format!(
                "γ₀ = {} must be ≥ 1",
                self.gamma0
            )));
        }
        if !(self.gamma1 >= 0.0) {
            return Err(Error::Validation(format!(
                "γ₁ = {} must be ≥ 0",
                self.gamma1
            )));
        }
        if !(self.eps_omega >= 0.0) {
            return Err(Error::Validation("eps_omega must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Numerator `γ₀‖ω‖² + γ₁`; `λ_max(ωωᵀ) = ωᵀω` for a rank-one product.
    pub fn numerator(&self, omega_reg: &[f64]) -> f64 {
        self.gamma0 * dot(omega_reg, omega_reg) + self.gamma1
    }

    /// `|Ω| ≤ eps_omega`, evaluated without leaving the log domain.
    pub fn is_zero(&self, big_omega: Wide) -> bool {
        big_omega.is_zero() || (self.eps_omega > 0.0 && big_omega.ln_abs() <= self.eps_omega.ln())
    }
}

/// Integrands of the memory regressor at time `t` (from start of data).
pub fn memory_rhs(delta: f64, y: &[f64], t: f64, sigma: f64) -> (Vec<f64>, f64) {
    let w = (-sigma * t).exp();
    let d_upsilon = y.iter().map(|v| w * delta * v).collect();
    (d_upsilon, w * delta * delta)
}

/// Time-varying adaptive gain.
pub fn gain(big_omega: f64, omega_reg: &[f64], sched: &GainSchedule) -> f64 {
    if sched.is_zero(Wide::from_f64(big_omega)) {
        0.0
    } else {
        sched.numerator(omega_reg) / (big_omega * big_omega)
    }
}

/// `θ̂̇ = −γΩ(Ωθ̂ − Υ)`.
pub fn memory_law_rhs(theta_hat: &[f64], big_omega: f64, upsilon: &[f64], gamma: f64) -> Vec<f64> {
    theta_hat
        .iter()
        .zip(upsilon)
        .map(|(th, up)| -gamma * big_omega * (big_omega * th - up))
        .collect()
}

/// Memory law with the gain schedule substituted:
/// `θ̂̇ = −(γ₀‖ω‖²+γ₁)/Ω · (Ωθ̂ − Υ)`.
///
/// `Ω = big_omega·2^scale2` and `Υ = upsilon·2^scale2`. Same vector field as
/// `memory_law_rhs(.., gain(..))`, evaluated without forming `Ω²`.
pub fn scheduled_memory_law_rhs(
    theta_hat: &[f64],
    big_omega: f64,
    upsilon: &[f64],
    scale2: i32,
    omega_reg: &[f64],
    sched: &GainSchedule,
) -> Vec<f64> {
    if sched.is_zero(Wide::new(big_omega, scale2)) {
        return vec![0.0; theta_hat.len()];
    }
    let c = sched.numerator(omega_reg);
    theta_hat
        .iter()
        .zip(upsilon)
        .map(|(th, up)| -c * (th - up / big_omega))
        .collect()
}

/// Baseline gradient law `θ̂̇ = −γΔ(Δθ̂ − Y)` with constant `γ > 0`.
pub fn baseline_law_rhs(theta_hat: &[f64], delta: f64, y: &[f64], gamma: f64) -> Vec<f64> {
    theta_hat
        .iter()
        .zip(y)
        .map(|(th, yi)| -gamma * delta * (delta * th - yi))
        .collect()
}

/// Which adaptive law drives `θ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    #[default]
    Memory,
    Baseline,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn memory_rhs_zero_delta() {
        let (du, dw) = memory_rhs(0.0, &[1.0, 2.0], 0.3, 5.0);
        assert_eq!(du, vec![0.0, 0.0]);
        assert_eq!(dw, 0.0);
    }

    #[test]
    fn memory_rhs_constant_delta_closed_form() {
        // Ω(t) = d²(1 − e^{−σt})/σ, Υ = Ωθ; integrate by fine trapezoid
        let (d, sigma, theta) = (0.7, 5.0, [1.5, -2.0]);
        let y: Vec<f64> = theta.iter().map(|t| d * t).collect();
        let (mut om, mut up) = (0.0, [0.0; 2]);
        let steps = 20000;
        let tf = 1.0;
        let h = tf / steps as f64;
        for i in 0..steps {
            let (du0, dw0) = memory_rhs(d, &y, i as f64 * h, sigma);
            let (du1, dw1) = memory_rhs(d, &y, (i + 1) as f64 * h, sigma);
            om += 0.5 * h * (dw0 + dw1);
            for j in 0..2 {
                up[j] += 0.5 * h * (du0[j] + du1[j]);
            }
        }
        let exact = d * d * (1.0 - (-sigma * tf).exp()) / sigma;
        assert_relative_eq!(om, exact, max_relative = 1e-8);
        for j in 0..2 {
            assert_relative_eq!(up[j], om * theta[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn gain_branches() {
        let s = GainSchedule {
            gamma0: 1.0,
            gamma1: 0.0,
            eps_omega: 1e-30,
        };
        assert_eq!(gain(0.0, &[1.0, 2.0, 3.0], &s), 0.0);
        assert_eq!(gain(1.0, &[0.0; 3], &s), 0.0);
        assert_eq!(gain(0.5, &[1.0, 2.5, 1.0], &s), 33.0);
    }

    #[test]
    fn memory_law_fixed_point_and_no_excitation() {
        let theta = [1.0, -2.0, 3.0];
        let om = 0.3;
        let ups: Vec<f64> = theta.iter().map(|t| om * t).collect();
        let d = memory_law_rhs(&theta, om, &ups, 5.0);
        assert!(d.iter().all(|v| v.abs() < 1e-15));
        let d = memory_law_rhs(&[4.0, 4.0, 4.0], 0.0, &ups, 5.0);
        assert_eq!(d, vec![0.0; 3]);
    }

    #[test]
    fn scheduled_law_is_diagonal_contraction() {
        let s = GainSchedule {
            gamma0: 2.0,
            gamma1: 0.5,
            eps_omega: 1e-30,
        };
        let theta = [11.25, -5.5, -2.0];
        let theta_hat = [0.0, 0.0, 2.0];
        let omega_reg = [1.0, 2.5, 1.0];
        let om = 0.25;
        let ups: Vec<f64> = theta.iter().map(|t| om * t).collect();
        let c = 2.0 * 8.25 + 0.5;
        let d = scheduled_memory_law_rhs(&theta_hat, om, &ups, 0, &omega_reg, &s);
        let direct = memory_law_rhs(&theta_hat, om, &ups, gain(om, &omega_reg, &s));
        for i in 0..3 {
            assert_relative_eq!(d[i], -c * (theta_hat[i] - theta[i]), max_relative = 1e-14);
            assert_relative_eq!(d[i], direct[i], max_relative = 1e-12);
        }
        // Ω = 0.25·2^-4000 is far outside f64 yet above the threshold test
        let s = GainSchedule {
            eps_omega: 0.0,
            ..s
        };
        let d = scheduled_memory_law_rhs(&theta_hat, om, &ups, -4000, &omega_reg, &s);
        for i in 0..3 {
            assert_relative_eq!(d[i], -c * (theta_hat[i] - theta[i]), max_relative = 1e-14);
        }
        let s = GainSchedule {
            eps_omega: 1e-30,
            ..s
        };
        let d = scheduled_memory_law_rhs(&theta_hat, om, &ups, -4000, &omega_reg, &s);
        assert_eq!(d, vec![0.0; 3]);
        let d = scheduled_memory_law_rhs(&theta_hat, om, &ups, -90, &omega_reg, &s);
        assert!(d[0] != 0.0);
    }

    #[test]
    fn baseline_law_scalar_decay() {
        // Δ = 1, Y = θ, γ = 1: θ̃̇ = −θ̃; integrate with RK4 and compare to e^{−t}
        let theta = 3.0;
        let mut th = 0.0;
        let h = 1e-3;
        for _ in 0..1000 {
            let f = |x: f64| baseline_law_rhs(&[x], 1.0, &[theta], 1.0)[0];
            let k1 = f(th);
            let k2 = f(th + 0.5 * h * k1);
            let k3 = f(th + 0.5 * h * k2);
            let k4 = f(th + h * k3);
            th += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert_relative_eq!(theta - th, theta * (-1.0_f64).exp(), max_relative = 1e-10);
        assert_eq!(baseline_law_rhs(&[1.0], 0.0, &[5.0], 1.0), vec![0.0]);
        assert_eq!(baseline_law_rhs(&[2.0], 1.5, &[3.0], 1.0), vec![0.0]);
    }

    #[test]
    fn schedule_validation() {
        assert!(GainSchedule {
            gamma0: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GainSchedule {
            gamma1: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MemoryState::new(3, 0.0).is_err());
    }
}
