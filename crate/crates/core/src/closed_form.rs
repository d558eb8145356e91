//! Closed-form end-to-end bounds for `(σ(θ), ρ(θ))` traffic crossing `n`
//! identical constant-rate servers with `(σ_c(θ), ρ_c(θ))` cross traffic.
//!
//! All results scale affinely in `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, CompensatedSum};

/// Which γ enters the `n ln γ` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// `γ + 1/(1 - q)`, the full geometric bracket.
    #[default]
    Bracket,
    /// The first fraction `γ` alone.
    FirstFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormInputs {
    pub n: u32,
    /// bits per slot
    pub capacity: f64,
    /// bits
    pub sigma: f64,
    /// bits per slot
    pub rho: f64,
    pub sigma_c: f64,
    pub rho_c: f64,
    /// per bit
    pub theta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub gamma_mode: GammaMode,
}

/// The constants shared by all closed forms at one θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaTerms {
    /// Cross-traffic latency in slots.
    pub t: f64,
    pub gamma: f64,
    pub gamma_bracket: f64,
    pub gamma_prime: f64,
    pub q: f64,
}

impl ClosedFormInputs {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("at least one server is required"));
        }
        let nonneg = [self.sigma, self.rho, self.sigma_c, self.rho_c];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::param("envelope parameters must be finite and >= 0"));
        }
        if !(self.capacity > 0.0 && self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::param("capacity and theta must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::param(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `C - ρ - ρ_c` after validation; an error unless positive.
    fn stable_margin(&self) -> Result<f64> {
        self.validate()?;
        let margin = self.capacity - self.rho - self.rho_c;
        if margin > 0.0 {
            Ok(margin)
        } else {
            Err(Error::Unstable {
                theta: self.theta,
                ratio: (-self.theta * margin).exp(),
            })
        }
    }

    pub fn gamma_terms(&self) -> Result<GammaTerms> {
        let margin = self.stable_margin()?;
        let t = latency_t(self)?;
        let x = self.theta * self.rho;
        // (1 - e^{-x(T+1)}) / (1 - e^{-x}), tending to T + 1 as x → 0
        let gamma = if x == 0.0 {
            t + 1.0
        } else {
            (-x * (t + 1.0)).exp_m1() / (-x).exp_m1()
        };
        let q = (-self.theta * margin).exp();
        let gamma_prime = -1.0 / (-self.theta * margin).exp_m1();
        Ok(GammaTerms {
            t,
            gamma,
            gamma_bracket: gamma + gamma_prime,
            gamma_prime,
            q,
        })
    }

    fn log_gamma(&self, g: &GammaTerms) -> f64 {
        match self.gamma_mode {
            GammaMode::Bracket => g.gamma_bracket.ln(),
            GammaMode::FirstFraction => g.gamma.ln(),
        }
    }
}

/// `σ_c / (C - ρ_c)` in slots.
pub fn latency_t(inputs: &ClosedFormInputs) -> Result<f64> {
    let r = inputs.capacity - inputs.rho_c;
    if r > 0.0 {
        Ok(inputs.sigma_c / r)
    } else {
        Err(Error::param(format!(
            "cross rate {} leaves no capacity out of {}",
            inputs.rho_c, inputs.capacity
        )))
    }
}

/// `σ + nρT + (n ln γ - ln ε)/θ` in bits.
pub fn backlog_closed_form(inputs: &ClosedFormInputs) -> Result<f64> {
    let g = inputs.gamma_terms()?;
    let n = inputs.n as f64;
    Ok(inputs.sigma
        + n * inputs.rho * g.t
        + (n * inputs.log_gamma(&g) - inputs.epsilon.ln()) / inputs.theta)
}

/// `σ/ρ + nT + (n ln γ - ln ε)/(θρ)` in slots.
pub fn delay_closed_form(inputs: &ClosedFormInputs) -> Result<f64> {
    let g = inputs.gamma_terms()?;
    if inputs.rho == 0.0 {
        return Err(Error::param("the delay closed form needs rho > 0"));
    }
    let n = inputs.n as f64;
    Ok(inputs.sigma / inputs.rho
        + n * g.t
        + (n * inputs.log_gamma(&g) - inputs.epsilon.ln()) / (inputs.theta * inputs.rho))
}

/// Single-server delay `(σ + σ_c)/(C - ρ_c) + (ln γ' - ln ε)/(θ(C - ρ_c))`.
pub fn delay_improved_n1(inputs: &ClosedFormInputs) -> Result<f64> {
    if inputs.n != 1 {
        return Err(Error::param("the single-server condition needs n = 1"));
    }
    let g = inputs.gamma_terms()?;
    let r = inputs.capacity - inputs.rho_c;
    Ok((inputs.sigma + inputs.sigma_c) / r
        + (g.gamma_prime.ln() - inputs.epsilon.ln()) / (inputs.theta * r))
}

/// `ln ζ(d, n)` with `ζ = (1 + d/n)^{1+d/n} / (d/n)^{d/n}`; `ζ(0) = 1`.
pub fn log_zeta(d: f64, n: u32) -> f64 {
    let x = d / n as f64;
    if x == 0.0 {
        0.0
    } else {
        (1.0 + x) * x.ln_1p() - x * x.ln()
    }
}

/// Smallest integer `d` satisfying both multi-server conditions, or `None`
/// if it exceeds `max_delay`.
///
/// The right side grows with `d`, so jumping to its ceiling never skips a
/// solution.
pub fn delay_improved_n2(inputs: &ClosedFormInputs, max_delay: u64) -> Result<Option<u64>> {
    if inputs.n < 2 {
        return Err(Error::param("the multi-server condition needs n >= 2"));
    }
    let g = inputs.gamma_terms()?;
    let n = inputs.n as f64;
    let r = inputs.capacity - inputs.rho_c;
    let base = (inputs.sigma + n * inputs.sigma_c) / r;
    let rhs =
        |d: f64| base + (n * log_zeta(d, inputs.n) - inputs.epsilon.ln()) / (inputs.theta * r);
    let side = (n * g.q / (1.0 - g.q)).ceil();
    let mut d = side.max(rhs(0.0).ceil()).max(0.0);
    loop {
        if d > max_delay as f64 {
            return Ok(None);
        }
        let need = rhs(d);
        if d >= need {
            return Ok(Some(d as u64));
        }
        d = need.ceil();
    }
}

/// `ln Σ_{τ=d..tau_max} C(τ+n-1, n-1) q^τ` using log-binomials.
///
/// Fails if the terms beyond `tau_max` could exceed `1e-14` of the sum.
pub fn negbin_tail_oracle_ln(n: u32, q: f64, d: u64, tau_max: u64) -> Result<f64> {
    if n == 0 || !(q > 0.0 && q < 1.0) {
        return Err(Error::param(format!(
            "need n >= 1 and q in (0, 1), got n={n}, q={q}"
        )));
    }
    if tau_max < d {
        return Err(Error::param("tau_max must be at least d"));
    }
    let m = (n - 1) as f64;
    let ln_q = q.ln();
    let log_term = |tau: u64| -> f64 {
        let t = tau as f64;
        ln_binomial(t + m, m) + t * ln_q
    };
    let terms: Vec<f64> = (d..=tau_max).map(log_term).collect();
    let log_sum = log_sum_exp(&terms);
    // term ratio (τ+n)/(τ+1)·q decreases in τ, so the remainder is a
    // geometric series with the ratio at tau_max
    let t = tau_max as f64;
    let ratio = (t + n as f64) / (t + 1.0) * q;
    if ratio >= 1.0 {
        return Err(Error::InsufficientTerms {
            tau_max,
            remainder: f64::INFINITY,
            sum: log_sum.exp(),
        });
    }
    let log_rest = log_term(tau_max) + ratio.ln() - (-ratio).ln_1p();
    if log_rest - log_sum > 1e-14f64.ln() {
        return Err(Error::InsufficientTerms {
            tau_max,
            remainder: log_rest.exp(),
            sum: log_sum.exp(),
        });
    }
    Ok(log_sum)
}

/// `Σ_{τ=d..tau_max} C(τ+n-1, n-1) q^τ`, which equals `(1-q)^{-n}` at `d = 0`.
pub fn negbin_tail_oracle(n: u32, q: f64, d: u64, tau_max: u64) -> Result<f64> {
    negbin_tail_oracle_ln(n, q, d, tau_max).map(f64::exp)
}

/// A `tau_max` comfortably large enough for [`negbin_tail_oracle`].
pub fn default_tau_max(n: u32, q: f64, d: u64) -> u64 {
    let mean = n as f64 * q / (1.0 - q);
    let spread = (n as f64).sqrt() / (1.0 - q);
    d + (mean + 40.0 * spread + 40.0 / (1.0 - q).max(1e-3)).ceil() as u64 + 64
}

/// Chernoff estimate `ζ^n q^d` of the same tail.
pub fn negbin_chernoff(n: u32, q: f64, d: u64) -> f64 {
    (n as f64 * log_zeta(d as f64, n) + d as f64 * q.ln()).exp()
}

/// `ln C(a, k)` for real `a >= k >= 0` with integer `k`.
fn ln_binomial(a: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    // Σ_{i=1..k} ln((a - k + i)/i); exact enough for the small k used here
    let mut s = CompensatedSum::new();
    let mut i = 1.0;
    while i <= k {
        s.add(((a - k + i) / i).ln());
        i += 1.0;
    }
    s.total()
}
