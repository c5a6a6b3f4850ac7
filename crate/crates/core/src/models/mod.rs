//! Model definitions: configurations, datasets, networks and scaling laws.

mod modular;
mod scaling;
mod ts;

pub use modular::{is_prime, mod_dataset, mod_forward, nearest_prime, ModConfig, ModDataset, ModNetwork};
pub use scaling::{apply_scaling_mod, apply_scaling_ts, Rounding, Scaled, ScalingKnobs};
pub use ts::{hermite1, hermite3, ts_forward, ts_sample_dataset, ts_target, TsConfig, TsDataset, TsNetwork};

/// The scale-invariant coupling that controls the transition.
pub trait EffectiveInteraction {
    fn effective_interaction(&self) -> f64;
}

pub(crate) fn check_positive(field: &'static str, v: f64) -> crate::Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(crate::Error::config(field, format!("must be positive and finite, got {v}")))
    }
}
