//! Euler–Maruyama Langevin sampling of both networks and the estimators
//! compared against the mean-field theory.
//!
//! The sampler targets `exp(−(L + Σ_l (γ_l/2)‖θ_l‖²)/T)` with `T = 2σ²`,
//! `L = Σ_μ (f(x_μ) − y_μ)²` and `γ_l = T / v_l`, where `v_l` is the prior
//! variance of one weight of layer `l`. The data factor is then
//! `exp(−Σ_μ (f − y)²/(2σ²))`: the Bayesian posterior with noise variance `σ²`.

mod ensemble;
mod estimators;
mod grad;
mod model;

pub use ensemble::{
    run_ensemble_mod, run_ensemble_ts, run_member, DivergedMember, Ensemble, EnsembleSpec, LossPoint, MemberState,
    ModEnsemble, TsEnsemble, CHECKPOINT_VERSION,
};
pub use estimators::{
    equilibration_warnings, gaussian_tail, integrated_autocorr_time, loss_track, mod_overlap_spectrum,
    neuron_mode_power, output_projection, overlap_histogram, prior_moments, project_outputs, tail_mass,
    top_pair_fraction, Component, LayerMoment, ModeSpectrum, OverlapHistogram, ProjectionEstimate, HISTOGRAM_SUBSETS,
};
pub use grad::{mod_loss, mod_loss_grad, ts_loss, ts_loss_grad};
pub use model::{langevin_step, LangevinModel, ModModel, TsModel};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Divergence guard on any single weight.
pub const WEIGHT_GUARD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSettings {
    pub step_size: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Scale each layer's step by its prior variance `v_l`, so `step_size · T`
    /// is the per-step prior relaxation rate of every layer alike. The
    /// stationary density is unchanged.
    #[serde(default = "default_true")]
    pub precondition: bool,
    /// Multiplier on the noise amplitude; 0 gives deterministic gradient flow
    /// on the same energy.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_true() -> bool {
    true
}

fn default_noise() -> f64 {
    1.0
}

impl LangevinSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config("step_size", "must be positive and finite"));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::config("burn_in", format!("must be below n_steps = {}", self.n_steps)));
        }
        if self.thin == 0 {
            return Err(Error::config("thin", "must be at least 1"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::config("noise", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Effective step of a layer with prior variance `variance`.
    pub fn layer_step(&self, variance: f64) -> f64 {
        if self.precondition {
            self.step_size * variance
        } else {
            self.step_size
        }
    }

    /// Is `step` (1-based count of completed updates) a recorded sample.
    pub fn records(&self, step: usize) -> bool {
        step > self.burn_in && (step - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn n_records(&self) -> usize {
        (self.n_steps - self.burn_in) / self.thin
    }
}
