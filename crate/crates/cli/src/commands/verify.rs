use anyhow::Result;
use phaselab_core::langevin::{
    mod_loss, mod_loss_grad, prior_moments, run_ensemble_mod, run_ensemble_ts, ts_loss, ts_loss_grad, EnsembleSpec,
    LangevinModel, LangevinSettings, ModModel, TsModel,
};
use phaselab_core::mod_theory::{nngp_kernel, verify_symmetries};
use phaselab_core::models::{mod_dataset, ts_sample_dataset};
use phaselab_core::numerics::stream_rng;
use phaselab_core::ts_theory::{integral_i0, integral_i1};
use phaselab_core::{ModConfig, ModNetwork, TsConfig, TsNetwork};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{Outcome, Status};
use crate::config::RunConfig;
use crate::output::RunDir;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub group: String,
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn check(group: &str, name: String, residual: f64, tolerance: f64) -> Check {
    Check { group: group.into(), name, passed: residual <= tolerance, residual, tolerance }
}

/// Kernel symmetry suite for every configured prime.
pub fn symmetry_checks(p_values: &[usize], sigma_a2: f64, perturb: f64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &p in p_values {
        let mut k = nngp_kernel(p, sigma_a2)?;
        if perturb != 0.0 {
            k[(0, 1)] += perturb;
            k[(1, 0)] += perturb;
        }
        let report = verify_symmetries(&k, p)?;
        for c in report.checks {
            out.push(Check {
                group: "symmetry".into(),
                name: format!("P={p}: {}", c.name),
                passed: c.passed,
                residual: c.residual,
                tolerance: c.tolerance,
            });
        }
    }
    Ok(out)
}

/// Monte-Carlo estimates of `E[t erf(w·x)]` and `E[t³ erf(w·x)]` with
/// `t = w*·x`, using the two-dimensional reduction `w = q e₁ + r e₂`.
pub fn mc_integrals(q: f64, wnorm2: f64, samples: usize, seed: u64) -> (f64, f64) {
    let r = (wnorm2 - q * q).max(0.0).sqrt();
    let chunks = 64usize;
    let per = samples.div_ceil(chunks);
    let sums: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let n = per.min(samples.saturating_sub(c * per));
            let (mut s0, mut s1) = (0.0, 0.0);
            for _ in 0..n {
                let t: f64 = rng.sample(StandardNormal);
                let z: f64 = rng.sample(StandardNormal);
                let e = libm::erf(q * t + r * z);
                s0 += t * e;
                s1 += t * t * t * e;
            }
            (s0, s1, n)
        })
        .collect();
    let n: usize = sums.iter().map(|s| s.2).sum();
    let s0: f64 = sums.iter().map(|s| s.0).sum();
    let s1: f64 = sums.iter().map(|s| s.1).sum();
    (s0 / n as f64, s1 / n as f64)
}

pub fn integral_checks(points: usize, samples: usize, tol: f64, seed: u64) -> Vec<Check> {
    let mut rng = stream_rng(seed, 7);
    let mut out = Vec::new();
    for i in 0..points {
        let q: f64 = rng.random_range(0.2..1.5);
        let wnorm2 = q * q + rng.random_range(0.1..2.0);
        let (m0, m1) = mc_integrals(q, wnorm2, samples, seed.wrapping_add(1 + i as u64));
        let e0 = integral_i0(q, wnorm2);
        let e1 = integral_i1(q, wnorm2);
        out.push(check("integrals", format!("I0(q={q:.4}, |w|²={wnorm2:.4})"), ((m0 - e0) / e0).abs(), tol));
        out.push(check("integrals", format!("I1(q={q:.4}, |w|²={wnorm2:.4})"), ((m1 - e1) / e1).abs(), tol));
    }
    out
}

fn stencil(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Largest relative deviation between closed-form and finite-difference
/// gradients over `points` random parameter draws of each model.
pub fn gradient_checks(points: usize, tol: f64, seed: u64) -> Result<Vec<Check>> {
    let ts = TsConfig { n: 40, d: 5, width: 6, sigma2: 1.0, sigma_a2: 1.0, sigma_w2: 0.5, eps: -0.3 };
    let data = ts_sample_dataset(&ts, seed);
    let mut rng = stream_rng(seed, 11);
    let mut worst_ts: f64 = 0.0;
    for _ in 0..points {
        let mut net = TsNetwork::sample_prior(&ts, &mut rng);
        net.readout *= 10.0;
        let (_, g) = ts_loss_grad(&net, &data);
        for ((i, j), &gv) in g.input_weights.indexed_iter() {
            let fd = stencil(
                |t| {
                    let mut q = net.clone();
                    q.input_weights[[i, j]] += t;
                    ts_loss(&q, &data)
                },
                1e-4,
            );
            worst_ts = worst_ts.max(rel(fd, gv));
        }
        for (i, &gv) in g.readout.indexed_iter() {
            let fd = stencil(
                |t| {
                    let mut q = net.clone();
                    q.readout[i] += t;
                    ts_loss(&q, &data)
                },
                1e-4,
            );
            worst_ts = worst_ts.max(rel(fd, gv));
        }
    }
    let md = ModConfig { p: 5, width: 4, sigma2: 0.2, sigma_a2: 2e-6, gamma: 1e-4 };
    let table = mod_dataset(md.p)?;
    let mut worst_mod: f64 = 0.0;
    for _ in 0..points {
        let mut net = ModNetwork::sample_prior(&md, &mut rng);
        net.readout *= 30.0;
        let (_, g) = mod_loss_grad(&net, &table);
        for ((i, j), &gv) in g.input_weights.indexed_iter() {
            let fd = stencil(
                |t| {
                    let mut q = net.clone();
                    q.input_weights[[i, j]] += t;
                    mod_loss(&q, &table)
                },
                1e-3,
            );
            worst_mod = worst_mod.max(rel(fd, gv));
        }
        for ((i, j), &gv) in g.readout.indexed_iter() {
            let fd = stencil(
                |t| {
                    let mut q = net.clone();
                    q.readout[[i, j]] += t;
                    mod_loss(&q, &table)
                },
                1e-3,
            );
            worst_mod = worst_mod.max(rel(fd, gv));
        }
    }
    Ok(vec![
        check("gradients", format!("teacher-student, {points} draws"), worst_ts, tol),
        check("gradients", format!("modular, {points} draws"), worst_mod, tol),
    ])
}

/// Prior-only ensembles at desk scale; per-layer `|z|` against the declared
/// prior variance, required below 3.
pub fn prior_checks(seed: u64) -> Result<Vec<Check>> {
    let settings = LangevinSettings {
        step_size: 0.001,
        n_steps: 40_000,
        burn_in: 4_000,
        thin: 20,
        seed,
        precondition: true,
        noise: 1.0,
    };
    let ts = TsConfig { n: 0, d: 30, width: 100, sigma2: 0.5, sigma_a2: 1.0, sigma_w2: 0.5, eps: -0.3 };
    let ens = run_ensemble_ts(ts, settings, EnsembleSpec { n_test: 1, ..EnsembleSpec::new(16, 1) })?;
    let mut out = Vec::new();
    for m in prior_moments(&ens, TsModel(ts).prior_variances())? {
        out.push(check("prior", format!("teacher-student {} layer (|z|)", m.layer), m.z().abs(), 3.0));
    }
    let md = ModConfig { p: 11, width: 200, sigma2: 0.5, sigma_a2: 2e-6, gamma: 1e-4 };
    let ens = run_ensemble_mod(md, settings, EnsembleSpec::new(16, 1), true)?;
    for m in prior_moments(&ens, ModModel(md).prior_variances())? {
        out.push(check("prior", format!("modular {} layer (|z|)", m.layer), m.z().abs(), 3.0));
    }
    Ok(out)
}

pub fn run_checks(cfg: &RunConfig) -> Result<VerifyReport> {
    let v = &cfg.verify;
    let sigma_a2 = cfg.modular.map(|m| m.sigma_a2).unwrap_or(1.0);
    let mut checks = symmetry_checks(&v.p_values, sigma_a2, v.perturb_kernel)?;
    if v.integral_points > 0 {
        checks.extend(integral_checks(v.integral_points, v.mc_samples, v.integral_tol, cfg.seed));
    }
    if v.gradient_points > 0 {
        checks.extend(gradient_checks(v.gradient_points, v.gradient_tol, cfg.seed)?);
    }
    if v.prior_check {
        checks.extend(prior_checks(cfg.seed)?);
    }
    Ok(VerifyReport { passed: checks.iter().all(|c| c.passed), checks })
}

/// Every oracle check; `verify.json` lists residuals and the exit status is
/// 3 on any failure.
pub fn verify(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let report = run_checks(cfg)?;
    for f in report.failures() {
        run.note(format!("failed: {} / {} (residual {:e} > {:e})", f.group, f.name, f.residual, f.tolerance));
    }
    run.write_json("verify.json", &report)?;
    Ok(Outcome::new(if report.passed { Status::Clean } else { Status::VerifyFailed }))
}
