//! Fixtures shared by the benchmarks.

use phaselab_core::{ModConfig, TsConfig};

/// Teacher-student hyperparameters near the transition window.
pub fn ts_fixture() -> TsConfig {
    TsConfig::reference(0.18)
}

/// Desk-scale teacher-student network for sampler steps.
pub fn ts_desk() -> TsConfig {
    TsConfig { n: 600, d: 30, width: 112, sigma2: 1.25, sigma_a2: 0.055, sigma_w2: 0.5, eps: -1.2 }
}

pub fn mod_fixture() -> ModConfig {
    ModConfig::reference(0.2)
}

pub fn mod_desk() -> ModConfig {
    ModConfig { p: 23, width: 200, sigma2: 0.2, sigma_a2: 2e-6, gamma: 1e-4 }
}
