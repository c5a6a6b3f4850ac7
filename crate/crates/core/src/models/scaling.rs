use serde::{Deserialize, Serialize};

use super::{nearest_prime, ModConfig, TsConfig};
use crate::{Error, Result};

/// Continuum (`alpha`) and mean-field (`beta`) scaling factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingKnobs {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ScalingKnobs {
    fn default() -> Self {
        ScalingKnobs { alpha: 1.0, beta: 1.0 }
    }
}

impl ScalingKnobs {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let k = ScalingKnobs { alpha, beta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(Error::config("alpha", format!("must be finite and ≥ 1, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(Error::config("beta", format!("must be finite and ≥ 1, got {}", self.beta)));
        }
        Ok(())
    }
}

/// An integer parameter that had to be rounded while scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rounding {
    pub parameter: &'static str,
    pub exact: f64,
    pub rounded: usize,
}

impl Rounding {
    pub fn residual(&self) -> f64 {
        self.rounded as f64 - self.exact
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaled<C> {
    pub config: C,
    pub rounding: Rounding,
}

/// `N → βN`, `d → √β d`, `σ_a² → σ_a²/√β`, `σ² → σ²α/β`, `n → αn`.
pub fn apply_scaling_ts(cfg: &TsConfig, k: &ScalingKnobs) -> Scaled<TsConfig> {
    let sb = k.beta.sqrt();
    let d_exact = sb * cfg.d as f64;
    let config = TsConfig {
        n: (k.alpha * cfg.n as f64).round() as usize,
        d: d_exact.round() as usize,
        width: (k.beta * cfg.width as f64).round() as usize,
        sigma2: cfg.sigma2 * k.alpha / k.beta,
        sigma_a2: cfg.sigma_a2 / sb,
        ..*cfg
    };
    Scaled { config, rounding: Rounding { parameter: "d", exact: d_exact, rounded: config.d } }
}

/// `N → β²N`, `P → √β P` (nearest prime), `σ² → σ²/β`, `σ_a² → σ_a²/β`.
pub fn apply_scaling_mod(cfg: &ModConfig, beta: f64) -> Scaled<ModConfig> {
    let p_exact = beta.sqrt() * cfg.p as f64;
    let config = ModConfig {
        p: nearest_prime(p_exact),
        width: (beta * beta * cfg.width as f64).round() as usize,
        sigma2: cfg.sigma2 / beta,
        sigma_a2: cfg.sigma_a2 / beta,
        ..*cfg
    };
    Scaled { config, rounding: Rounding { parameter: "p", exact: p_exact, rounded: config.p } }
}
