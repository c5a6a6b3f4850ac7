use anyhow::{bail, Context, Result};
use phaselab_core::langevin::{
    equilibration_warnings, gaussian_tail, loss_track, mod_overlap_spectrum, output_projection, overlap_histogram,
    prior_moments, tail_mass, Component, Ensemble, LangevinModel, LayerMoment, ModEnsemble, ModModel,
    ProjectionEstimate, TsEnsemble, TsModel,
};
use phaselab_core::{ModConfig, TsConfig};
use serde::{Deserialize, Serialize};

use super::{Outcome, Status};
use crate::config::{LangevinSection, ResolvedModel, RunConfig, ScanVariable};
use crate::output::{f17, RunDir};

pub const CHECKPOINT: &str = "checkpoint.json";
pub const CONFIG: &str = "config.json";

/// Rough floating-point operation count of a sampling run.
pub fn estimated_flops(model: &ResolvedModel, l: &LangevinSection) -> f64 {
    let members = (l.init_seeds * l.data_seeds) as f64;
    let steps = l.n_steps as f64;
    let records = ((l.n_steps - l.burn_in.min(l.n_steps)) / l.thin.max(1)) as f64;
    let evals = steps / l.thin.max(1) as f64;
    let per_member = match model {
        ResolvedModel::Ts(c) => {
            let (n, nw, d, nt) = (c.n as f64, c.width as f64, c.d as f64, l.n_test as f64);
            steps * (6.0 * n * nw * d + 10.0 * nw * d)
                + (records + evals) * 2.0 * nt * nw * d
                + evals * 2.0 * n * nw * d
        }
        ResolvedModel::Mod(c) => {
            let (p, nw) = (c.p as f64, c.width as f64);
            let train = if l.prior_only { 0.0 } else { p * p * nw * (4.0 + 6.0 * p) };
            let table = p * p * nw * (2.0 + 2.0 * p);
            steps * (train + 10.0 * nw * 3.0 * p) + (records + 2.0 * evals) * table
        }
    };
    members * per_member
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsSampleSummary {
    pub members: usize,
    pub diverged: usize,
    pub step: usize,
    pub complete: bool,
    pub tail_threshold: f64,
    pub tail_mass: f64,
    pub tail_count: usize,
    pub prior_tail_mass: f64,
    pub h1: Option<ProjectionEstimate>,
    pub h3: Option<ProjectionEstimate>,
    pub moments: Option<[LayerMoment; 2]>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModSampleSummary {
    pub members: usize,
    pub diverged: usize,
    pub step: usize,
    pub complete: bool,
    /// Fraction of neurons whose strongest mode pair carries over half their power.
    pub condensed_fraction: f64,
    pub moments: Option<[LayerMoment; 2]>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSummary {
    Ts(TsSampleSummary),
    Mod(ModSampleSummary),
}

fn moments_if_recorded<N, C>(ens: &Ensemble<N, C>, expected: [f64; 2]) -> Option<[LayerMoment; 2]> {
    prior_moments(ens, expected).ok()
}

fn write_ts_outputs(ens: &TsEnsemble, l: &LangevinSection, run: &mut RunDir, prefix: &str) -> Result<TsSampleSummary> {
    let hist = overlap_histogram(ens, l.histogram_bins, Some(l.histogram_range))?;
    run.write(&format!("{prefix}histogram.csv"), hist.to_csv())?;
    let (mass, count) = tail_mass(ens, l.tail_threshold)?;
    let prior_var = ens.config.sigma_w2 / ens.config.d as f64;
    let h1 = output_projection(ens, Component::H1).ok();
    let h3 = output_projection(ens, Component::H3).ok();
    let mut proj = String::from("component,mean,stderr,members\n");
    for (name, p) in [("H1", h1), ("H3", h3)] {
        if let Some(p) = p {
            proj.push_str(&format!("{name},{},{},{}\n", f17(p.mean), f17(p.stderr), p.members));
        }
    }
    run.write(&format!("{prefix}projections.csv"), proj)?;
    run.write(&format!("{prefix}losses.csv"), loss_track(ens))?;
    let moments = moments_if_recorded(ens, TsModel(ens.config).prior_variances());
    Ok(TsSampleSummary {
        members: ens.members.len(),
        diverged: ens.diverged.len(),
        step: ens.step(),
        complete: ens.is_complete(),
        tail_threshold: l.tail_threshold,
        tail_mass: mass,
        tail_count: count,
        prior_tail_mass: gaussian_tail(l.tail_threshold, prior_var),
        h1,
        h3,
        moments,
        warnings: equilibration_warnings(ens),
    })
}

fn write_mod_outputs(ens: &ModEnsemble, run: &mut RunDir, prefix: &str) -> Result<ModSampleSummary> {
    let spec = mod_overlap_spectrum(ens)?;
    run.write(&format!("{prefix}spectrum.csv"), spec.to_csv())?;
    run.write(&format!("{prefix}losses.csv"), loss_track(ens))?;
    let moments = moments_if_recorded(ens, ModModel(ens.config).prior_variances());
    Ok(ModSampleSummary {
        members: ens.members.len(),
        diverged: ens.diverged.len(),
        step: ens.step(),
        complete: ens.is_complete(),
        condensed_fraction: spec.condensed_fraction(0.5),
        moments,
        warnings: equilibration_warnings(ens),
    })
}

/// Advance to `target`, writing a checkpoint every `checkpoint_every` steps.
fn drive<N, C>(
    ens: &mut Ensemble<N, C>,
    target: usize,
    every: Option<usize>,
    run: &mut RunDir,
    prefix: &str,
    mut advance: impl FnMut(&mut Ensemble<N, C>, usize) -> Result<()>,
) -> Result<()>
where
    N: Serialize,
    C: Serialize,
{
    let mut at = ens.step();
    while at < target && !ens.members.is_empty() {
        let next = match every {
            Some(e) => ((at / e + 1) * e).min(target),
            None => target,
        };
        advance(ens, next)?;
        at = next;
        if every.is_some() && at < target {
            run.write(&format!("{prefix}{CHECKPOINT}"), ens.to_json()?)?;
        }
    }
    run.write(&format!("{prefix}{CHECKPOINT}"), ens.to_json()?)?;
    Ok(())
}

fn status_for(summary_members: usize, diverged: usize, l: &LangevinSection) -> Status {
    let total = summary_members + diverged;
    if total == 0 || diverged as f64 > l.max_diverged_fraction * total as f64 {
        Status::Partial
    } else {
        Status::Clean
    }
}

/// Run (or continue) one ensemble and write its artifacts under `prefix`.
fn sample_one(
    model: ResolvedModel,
    cfg: &RunConfig,
    run: &mut RunDir,
    prefix: &str,
    resume: Option<String>,
) -> Result<(SampleSummary, Status)> {
    let l = *cfg.langevin_section()?;
    let settings = l.settings(cfg.seed);
    let target = if resume.is_some() { l.n_steps } else { l.stop_at.unwrap_or(l.n_steps) };
    match model {
        ResolvedModel::Ts(ts) => {
            let mut ens = match resume {
                Some(json) => TsEnsemble::from_json(&json)?,
                None => TsEnsemble::init(ts, settings, l.spec())?,
            };
            drive(&mut ens, target, l.checkpoint_every, run, prefix, |e, s| Ok(e.advance(s)?))?;
            for d in &ens.diverged {
                run.note(format!("{prefix}member {} diverged at step {}: {}", d.member, d.step, d.reason));
            }
            let s = write_ts_outputs(&ens, &l, run, prefix)?;
            let status = status_for(s.members, s.diverged, &l);
            Ok((SampleSummary::Ts(s), status))
        }
        ResolvedModel::Mod(m) => {
            let mut ens = match resume {
                Some(json) => ModEnsemble::from_json(&json)?,
                None => ModEnsemble::init(m, settings, l.spec(), l.prior_only)?,
            };
            drive(&mut ens, target, l.checkpoint_every, run, prefix, |e, s| Ok(e.advance(s)?))?;
            for d in &ens.diverged {
                run.note(format!("{prefix}member {} diverged at step {}: {}", d.member, d.step, d.reason));
            }
            let s = write_mod_outputs(&ens, run, prefix)?;
            let status = status_for(s.members, s.diverged, &l);
            Ok((SampleSummary::Mod(s), status))
        }
    }
}

fn guard(model: &ResolvedModel, l: &LangevinSection, force: bool) -> Result<()> {
    let flops = estimated_flops(model, l);
    if flops > l.flop_cap && !force {
        bail!(
            "langevin.flop_cap: estimated {flops:.2e} floating-point operations exceed the cap of {:.2e}; \
             raise the cap or pass --force",
            l.flop_cap
        );
    }
    Ok(())
}

fn finish_summary(run: &mut RunDir, rel: &str, summary: &SampleSummary) -> Result<()> {
    let warnings = match summary {
        SampleSummary::Ts(s) => &s.warnings,
        SampleSummary::Mod(s) => &s.warnings,
    };
    if !warnings.is_empty() {
        run.note(format!("{} members have short traces relative to their autocorrelation time", warnings.len()));
    }
    run.write_json(rel, summary)
}

/// One Langevin ensemble: histogram or spectrum, projections, losses,
/// moments, `summary.json` and a final checkpoint.
pub fn sample(cfg: &RunConfig, run: &mut RunDir, force: bool) -> Result<Outcome> {
    let (model, _) = cfg.resolved_model()?;
    let l = cfg.langevin_section()?;
    guard(&model, l, force)?;
    run.write(CONFIG, cfg.canonical_json()?)?;
    let (summary, status) = sample_one(model, cfg, run, "", None)?;
    if let Some(stop) = l.stop_at.filter(|&s| s < l.n_steps) {
        run.note(format!("stopped at step {stop} of {}; continue with `phaselab resume`", l.n_steps));
    }
    finish_summary(run, "summary.json", &summary)?;
    Ok(Outcome::new(status))
}

/// Continue a run directory from its checkpoint to `n_steps`.
pub fn resume(run: &mut RunDir, force: bool) -> Result<Outcome> {
    let dir = run.path().to_path_buf();
    let text = std::fs::read_to_string(dir.join(CONFIG)).with_context(|| format!("{}: no {CONFIG}", dir.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).context("config.json")?;
    cfg.validate()?;
    let (model, _) = cfg.resolved_model()?;
    guard(&model, cfg.langevin_section()?, force)?;
    if dir.join("sweep.csv").exists() {
        bail!("resume: {} holds a sweep; sweeps are rerun, not resumed", dir.display());
    }
    let ckpt =
        std::fs::read_to_string(dir.join(CHECKPOINT)).with_context(|| format!("{}: no {CHECKPOINT}", dir.display()))?;
    run.write(CONFIG, text)?;
    let (summary, status) = sample_one(model, &cfg, run, "", Some(ckpt))?;
    finish_summary(run, "summary.json", &summary)?;
    Ok(Outcome::new(status))
}

fn with_value(model: ResolvedModel, variable: ScanVariable, v: f64) -> Result<ResolvedModel> {
    let width = || -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            bail!("scan.values: widths must be positive integers, got {v}");
        }
        Ok(v as usize)
    };
    Ok(match (model, variable) {
        (ResolvedModel::Ts(c), ScanVariable::Sigma2) => ResolvedModel::Ts(TsConfig { sigma2: v, ..c }),
        (ResolvedModel::Ts(c), ScanVariable::Width) => ResolvedModel::Ts(TsConfig { width: width()?, ..c }),
        (ResolvedModel::Mod(c), ScanVariable::Sigma2) => ResolvedModel::Mod(ModConfig { sigma2: v, ..c }),
        (ResolvedModel::Mod(c), ScanVariable::Width) => ResolvedModel::Mod(ModConfig { width: width()?, ..c }),
    })
}

/// A Langevin sweep over `scan.variable`: one ensemble per grid value in
/// `point_XXX/`, plus `sweep.csv` comparing them.
pub fn sweep(cfg: &RunConfig, run: &mut RunDir, force: bool) -> Result<Outcome> {
    let (model, _) = cfg.resolved_model()?;
    let scan = cfg.scan_section()?;
    let grid = scan.grid()?;
    let l = cfg.langevin_section()?;
    let points: Vec<ResolvedModel> =
        grid.iter().map(|&v| with_value(model, scan.variable, v)).collect::<Result<_>>()?;
    let total: f64 = points.iter().map(|m| estimated_flops(m, l)).sum();
    if total > l.flop_cap && !force {
        bail!("langevin.flop_cap: estimated {total:.2e} floating-point operations for the sweep exceed the cap of {:.2e}; raise the cap or pass --force", l.flop_cap);
    }
    run.write(CONFIG, cfg.canonical_json()?)?;
    let mut worst = Status::Clean;
    let mut csv = match model {
        ResolvedModel::Ts(_) => {
            String::from("value,members,diverged,tail_mass,tail_count,prior_tail_mass,h1,h1_stderr,h3,h3_stderr\n")
        }
        ResolvedModel::Mod(_) => String::from("value,members,diverged,condensed_fraction\n"),
    };
    for (i, (m, v)) in points.into_iter().zip(&grid).enumerate() {
        let prefix = format!("point_{i:03}/");
        let (summary, status) = sample_one(m, cfg, run, &prefix, None)?;
        worst = worst.max(status);
        match &summary {
            SampleSummary::Ts(s) => {
                let p = |e: Option<ProjectionEstimate>| match e {
                    Some(e) => format!("{},{}", f17(e.mean), f17(e.stderr)),
                    None => ",".into(),
                };
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    f17(*v),
                    s.members,
                    s.diverged,
                    f17(s.tail_mass),
                    s.tail_count,
                    f17(s.prior_tail_mass),
                    p(s.h1),
                    p(s.h3)
                ));
            }
            SampleSummary::Mod(s) => {
                csv.push_str(&format!("{},{},{},{}\n", f17(*v), s.members, s.diverged, f17(s.condensed_fraction)));
            }
        }
        finish_summary(run, &format!("{prefix}summary.json"), &summary)?;
    }
    run.write("sweep.csv", csv)?;
    Ok(Outcome::new(worst))
}
