//! The run configuration file.
//!
//! One TOML document describes a run. Unknown keys are rejected at every
//! level, and every field can be overridden from the command line with
//! `--set section.field=value`. See `docs/config.md` for the full schema.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use phaselab_core::langevin::{EnsembleSpec, LangevinSettings};
use phaselab_core::mod_theory::ModSolverOptions;
use phaselab_core::models::{apply_scaling_mod, apply_scaling_ts, Rounding};
use phaselab_core::numerics::{FixedPointOptions, QuadOptions};
use phaselab_core::ts_theory::{QuadMode, ScanDirection, TsSolverOptions};
use phaselab_core::{ModConfig, ScalingKnobs, TsConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ts,
    Mod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    /// Run directory; relative paths are resolved against the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub ts: Option<TsConfig>,
    #[serde(default, rename = "mod")]
    pub modular: Option<ModConfig>,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub langevin: Option<LangevinSection>,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
}

impl Default for ScalingSection {
    fn default() -> Self {
        ScalingSection { alpha: 1.0, beta: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanVariable {
    Sigma2,
    Width,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default = "default_variable")]
    pub variable: ScanVariable,
    /// Explicit grid; takes precedence over `lo`/`hi`/`points`.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
    #[serde(default = "default_directions")]
    pub directions: Vec<ScanDirection>,
}

fn default_variable() -> ScanVariable {
    ScanVariable::Sigma2
}

fn default_directions() -> Vec<ScanDirection> {
    vec![ScanDirection::Decreasing]
}

impl ScanSection {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let grid = match (&self.values, self.lo, self.hi, self.points) {
            (Some(v), _, _, _) => v.clone(),
            (None, Some(lo), Some(hi), Some(n)) => {
                if n == 0 {
                    Vec::new()
                } else if n == 1 {
                    vec![lo]
                } else {
                    match self.spacing {
                        Spacing::Linear => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
                        Spacing::Geometric => {
                            if !(lo > 0.0 && hi > 0.0) {
                                bail!("scan.lo: geometric spacing needs positive bounds");
                            }
                            (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
                        }
                    }
                }
            }
            _ => bail!("scan.values: give either `values` or all of `lo`, `hi`, `points`"),
        };
        if grid.is_empty() {
            bail!("scan.values: the scan grid is empty");
        }
        if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            bail!("scan.values: grid values must be positive and finite, got {v}");
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSection {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_critical_steps")]
    pub steps: usize,
}

fn default_critical_steps() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Degeneracy window of the phase labels, in nats.
    #[serde(default = "one")]
    pub window: f64,
    #[serde(default)]
    pub quad_tol: Option<f64>,
    #[serde(default)]
    pub laplace: bool,
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub fp_tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub residual_tol: Option<f64>,
    /// Sign-change scan resolution of the modular self-consistency equation.
    #[serde(default)]
    pub n_scan: Option<usize>,
    /// Bisection width for modular phase boundaries.
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    /// Points per emitted action curve.
    #[serde(default = "default_action_points")]
    pub action_points: usize,
    /// Half-width of the emitted teacher-student action curves.
    #[serde(default = "default_q_max")]
    pub q_max: f64,
    /// Tolerance for flagging hysteresis between scan directions.
    #[serde(default = "default_hysteresis_tol")]
    pub hysteresis_tol: f64,
    #[serde(default)]
    pub critical: Option<CriticalSection>,
}

fn default_refine_tol() -> f64 {
    1e-5
}

fn default_action_points() -> usize {
    601
}

fn default_q_max() -> f64 {
    2.0
}

fn default_hysteresis_tol() -> f64 {
    1e-4
}

impl Default for SolverSection {
    fn default() -> Self {
        toml::from_str("").expect("every solver field has a default")
    }
}

impl SolverSection {
    pub fn ts_options(&self) -> TsSolverOptions {
        let base = TsSolverOptions::default();
        TsSolverOptions {
            quad: QuadOptions { tol: self.quad_tol.unwrap_or(base.quad.tol), ..base.quad },
            quad_mode: if self.laplace { QuadMode::Laplace } else { QuadMode::Direct },
            fixed_point: self.fixed_point(base.fixed_point),
            residual_tol: self.residual_tol.unwrap_or(base.residual_tol),
            window: self.window,
            ..base
        }
    }

    pub fn mod_options(&self) -> ModSolverOptions {
        let base = ModSolverOptions::default();
        ModSolverOptions { n_scan: self.n_scan.unwrap_or(base.n_scan), window: self.window, ..base }
    }

    fn fixed_point(&self, base: FixedPointOptions) -> FixedPointOptions {
        FixedPointOptions {
            damping: self.damping.unwrap_or(base.damping),
            tol: self.fp_tol.unwrap_or(base.tol),
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            ..base
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            bail!("solver.window: must be positive and finite, got {}", self.window);
        }
        if let Some(d) = self.damping {
            if !(d > 0.0 && d <= 1.0) {
                bail!("solver.damping: must lie in (0, 1], got {d}");
            }
        }
        for (name, v) in [
            ("solver.quad_tol", self.quad_tol),
            ("solver.fp_tol", self.fp_tol),
            ("solver.residual_tol", self.residual_tol),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    bail!("{name}: must be positive and finite, got {v}");
                }
            }
        }
        if self.action_points < 3 {
            bail!("solver.action_points: need at least 3 points, got {}", self.action_points);
        }
        if !(self.q_max.is_finite() && self.q_max > 0.0) {
            bail!("solver.q_max: must be positive and finite, got {}", self.q_max);
        }
        if let Some(c) = self.critical {
            if !(c.lo > 0.0 && c.lo < c.hi && c.steps >= 2) {
                bail!("solver.critical: need 0 < lo < hi and steps ≥ 2");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSection {
    pub step_size: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_true")]
    pub precondition: bool,
    #[serde(default = "one")]
    pub noise: f64,
    #[serde(default = "default_seeds")]
    pub init_seeds: usize,
    #[serde(default = "default_seeds")]
    pub data_seeds: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub keep_snapshots: bool,
    /// Modular model only: sample the prior instead of the posterior.
    #[serde(default)]
    pub prior_only: bool,
    /// Write a checkpoint every this many steps.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Stop early at this step, leaving a checkpoint to resume from.
    #[serde(default)]
    pub stop_at: Option<usize>,
    /// Estimated floating-point operations allowed without `--force`.
    #[serde(default = "default_flop_cap")]
    pub flop_cap: f64,
    /// Diverged-member fraction above which the run counts as partial.
    #[serde(default = "default_diverged")]
    pub max_diverged_fraction: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_half_range")]
    pub histogram_range: f64,
    #[serde(default = "default_tail")]
    pub tail_threshold: f64,
}

fn default_thin() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_seeds() -> usize {
    1
}

fn default_n_test() -> usize {
    3000
}

fn default_flop_cap() -> f64 {
    5e12
}

fn default_diverged() -> f64 {
    0.1
}

fn default_bins() -> usize {
    60
}

fn default_half_range() -> f64 {
    1.5
}

fn default_tail() -> f64 {
    0.5
}

impl LangevinSection {
    pub fn settings(&self, seed: u64) -> LangevinSettings {
        LangevinSettings {
            step_size: self.step_size,
            n_steps: self.n_steps,
            burn_in: self.burn_in,
            thin: self.thin,
            seed,
            precondition: self.precondition,
            noise: self.noise,
        }
    }

    pub fn spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            init_seeds: self.init_seeds,
            data_seeds: self.data_seeds,
            n_test: self.n_test,
            keep_snapshots: self.keep_snapshots,
        }
    }

    fn validate(&self, seed: u64) -> Result<()> {
        self.settings(seed).validate().map_err(|e| anyhow!("langevin.{}", strip_field(&e.to_string())))?;
        self.spec().validate().map_err(|e| anyhow!("langevin.{}", strip_field(&e.to_string())))?;
        if let Some(c) = self.checkpoint_every {
            if c == 0 {
                bail!("langevin.checkpoint_every: must be at least 1");
            }
        }
        if let Some(s) = self.stop_at {
            if s == 0 || s > self.n_steps {
                bail!("langevin.stop_at: must lie in [1, n_steps = {}], got {s}", self.n_steps);
            }
        }
        if self.flop_cap.is_nan() || self.flop_cap <= 0.0 {
            bail!("langevin.flop_cap: must be positive");
        }
        if !(0.0..=1.0).contains(&self.max_diverged_fraction) {
            bail!("langevin.max_diverged_fraction: must lie in [0, 1]");
        }
        if self.histogram_bins == 0 {
            bail!("langevin.histogram_bins: must be at least 1");
        }
        if !(self.histogram_range > 0.0 && self.tail_threshold > 0.0) {
            bail!("langevin.histogram_range: range and tail threshold must be positive");
        }
        Ok(())
    }
}

/// Core config errors read "invalid configuration: field: reason"; keep "field: reason".
fn strip_field(msg: &str) -> String {
    msg.strip_prefix("invalid configuration: ").unwrap_or(msg).to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_primes")]
    pub p_values: Vec<usize>,
    #[serde(default = "default_integral_points")]
    pub integral_points: usize,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_integral_tol")]
    pub integral_tol: f64,
    #[serde(default = "default_gradient_points")]
    pub gradient_points: usize,
    #[serde(default = "default_gradient_tol")]
    pub gradient_tol: f64,
    #[serde(default = "default_true")]
    pub prior_check: bool,
    /// Size of a symmetric perturbation added to one kernel entry (negative control).
    #[serde(default)]
    pub perturb_kernel: f64,
}

fn default_primes() -> Vec<usize> {
    vec![5, 7, 11]
}

fn default_integral_points() -> usize {
    10
}

fn default_mc() -> usize {
    10_000_000
}

fn default_integral_tol() -> f64 {
    0.01
}

fn default_gradient_points() -> usize {
    100
}

fn default_gradient_tol() -> f64 {
    1e-6
}

impl Default for VerifySection {
    fn default() -> Self {
        toml::from_str("").expect("every verify field has a default")
    }
}

/// Model configuration after the scaling knobs were applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedModel {
    Ts(TsConfig),
    Mod(ModConfig),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| anyhow!("config: {}", e.message().trim()).context(describe_span(text, &e)))?;
        Ok(cfg)
    }

    /// Parse with `--set key=value` overrides applied to the TOML tree first.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| anyhow!("config: {}", e.message().trim()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let patched = toml::to_string(&doc)?;
        Self::from_toml(&patched)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// Check every section the chosen model and command need.
    pub fn validate(&self) -> Result<()> {
        ScalingKnobs { alpha: self.scaling.alpha, beta: self.scaling.beta }
            .validate()
            .map_err(|e| anyhow!("scaling.{}", strip_field(&e.to_string())))?;
        match self.model {
            ModelKind::Ts => {
                let ts = self.ts.ok_or_else(|| anyhow!("ts: section required for model = \"ts\""))?;
                ts.validate().map_err(|e| anyhow!("ts.{}", strip_field(&e.to_string())))?;
            }
            ModelKind::Mod => {
                let m = self.modular.ok_or_else(|| anyhow!("mod: section required for model = \"mod\""))?;
                m.validate().map_err(|e| anyhow!("mod.{}", strip_field(&e.to_string())))?;
            }
        }
        if let Some(scan) = &self.scan {
            scan.grid()?;
            if scan.directions.is_empty() {
                bail!("scan.directions: at least one direction is required");
            }
        }
        self.solver.validate()?;
        if let Some(l) = &self.langevin {
            l.validate(self.seed)?;
        }
        Ok(())
    }

    /// The model configuration with the scaling knobs applied, and any
    /// rounding of integer parameters that scaling caused.
    pub fn resolved_model(&self) -> Result<(ResolvedModel, Option<Rounding>)> {
        let knobs = ScalingKnobs { alpha: self.scaling.alpha, beta: self.scaling.beta };
        let identity = knobs == ScalingKnobs::default();
        match self.model {
            ModelKind::Ts => {
                let ts = self.ts.ok_or_else(|| anyhow!("ts: section required for model = \"ts\""))?;
                if identity {
                    return Ok((ResolvedModel::Ts(ts), None));
                }
                let s = apply_scaling_ts(&ts, &knobs);
                Ok((ResolvedModel::Ts(s.config), Some(s.rounding)))
            }
            ModelKind::Mod => {
                let m = self.modular.ok_or_else(|| anyhow!("mod: section required for model = \"mod\""))?;
                if (self.scaling.alpha - 1.0).abs() > 0.0 {
                    bail!("scaling.alpha: the modular model has no continuum knob; leave alpha = 1");
                }
                if identity {
                    return Ok((ResolvedModel::Mod(m), None));
                }
                let s = apply_scaling_mod(&m, knobs.beta);
                Ok((ResolvedModel::Mod(s.config), Some(s.rounding)))
            }
        }
    }

    pub fn ts_config(&self) -> Result<TsConfig> {
        match self.resolved_model()?.0 {
            ResolvedModel::Ts(c) => Ok(c),
            ResolvedModel::Mod(_) => bail!("model: this command needs model = \"ts\""),
        }
    }

    pub fn mod_config(&self) -> Result<ModConfig> {
        match self.resolved_model()?.0 {
            ResolvedModel::Mod(c) => Ok(c),
            ResolvedModel::Ts(_) => bail!("model: this command needs model = \"mod\""),
        }
    }

    pub fn scan_section(&self) -> Result<&ScanSection> {
        self.scan.as_ref().ok_or_else(|| anyhow!("scan: section required for this command"))
    }

    pub fn langevin_section(&self) -> Result<&LangevinSection> {
        self.langevin.as_ref().ok_or_else(|| anyhow!("langevin: section required for this command"))
    }

    /// Canonical JSON; its hash identifies the run.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn describe_span(text: &str, e: &toml::de::Error) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("config line {line}")
        }
        None => "config".to_string(),
    }
}

/// Apply `a.b.c=value`; the value is parsed as a TOML value, falling back to
/// a bare string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("--set {spec}: expected key=value"))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("--set {spec}: `{p}` is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TS: &str = r#"
model = "ts"
seed = 3

[ts]
n = 3000
d = 150
N = 700
sigma2 = 0.2
sigma_a2 = 0.011428571428571429
sigma_w2 = 0.5
eps = -0.3

[scan]
values = [0.3, 0.25, 0.2]
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = RunConfig::from_toml(TS).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.ts.unwrap().width, 700);
        assert_eq!(cfg.scan_section().unwrap().grid().unwrap(), vec![0.3, 0.25, 0.2]);
        assert_eq!(cfg.solver.window, 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml(&TS.replace("seed = 3", "seed = 3\nseeed = 4")).unwrap_err();
        assert!(format!("{err:#}").contains("seeed"), "{err:#}");
        let err = RunConfig::from_toml(&TS.replace("eps = -0.3", "eps = -0.3\nepsilon = 1")).unwrap_err();
        assert!(format!("{err:#}").contains("epsilon"), "{err:#}");
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = RunConfig::from_toml(&TS.replace("sigma_w2 = 0.5", "sigma_w2 = -0.5")).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.starts_with("ts.sigma_w2"), "{err}");
        let cfg = RunConfig::from_toml(&TS.replace("values = [0.3, 0.25, 0.2]", "values = []")).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().starts_with("scan.values"));
    }

    #[test]
    fn overrides_patch_fields() {
        let cfg =
            RunConfig::from_toml_with_overrides(TS, &["ts.N=350".into(), "seed=9".into(), "solver.window=2.5".into()])
                .unwrap();
        assert_eq!(cfg.ts.unwrap().width, 350);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.solver.window, 2.5);
        assert!(RunConfig::from_toml_with_overrides(TS, &["ts.bogus=1".into()]).is_err());
    }

    #[test]
    fn generated_grids() {
        let s = ScanSection {
            variable: ScanVariable::Sigma2,
            values: None,
            lo: Some(0.1),
            hi: Some(1000.0),
            points: Some(5),
            spacing: Spacing::Geometric,
            directions: default_directions(),
        };
        let g = s.grid().unwrap();
        assert!((g[2] - 10.0).abs() < 1e-12 && (g[4] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn scaling_is_applied() {
        let cfg = RunConfig::from_toml(&format!("{TS}\n[scaling]\nbeta = 4.0\n")).unwrap();
        let (m, r) = cfg.resolved_model().unwrap();
        let ResolvedModel::Ts(ts) = m else { panic!() };
        assert_eq!(ts.width, 2800);
        assert_eq!(r.unwrap().rounded, 300);
    }
}
