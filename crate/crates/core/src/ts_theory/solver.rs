use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::action::{action_with_u, denom, DiscrepancyTs};
use super::saddles::find_saddles_ts;
use crate::models::{EffectiveInteraction, TsConfig};
use crate::numerics::{fixed_point, integrate_weighted_many, FixedPointOptions, QuadOptions};
use crate::{Error, Result};

/// How the `Q̃` averages over `e^{-S}` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadMode {
    /// Adaptive quadrature of the full weight.
    #[default]
    Direct,
    /// Second-order Laplace expansion around every interior minimum.
    Laplace,
}

#[derive(Debug, Clone, Copy)]
pub struct TsSolverOptions {
    /// Tighter than the crate default so that finite-difference Jacobians of
    /// the self-consistency map are not dominated by quadrature noise.
    pub quad: QuadOptions,
    pub quad_mode: QuadMode,
    pub fixed_point: FixedPointOptions,
    /// Polish with Newton steps on `disc − map(disc)` after the damped iteration.
    pub newton: bool,
    /// Residual `‖disc − map(disc)‖∞` below which a solution counts as converged.
    pub residual_tol: f64,
    /// Degeneracy window of the phase classification, in nats.
    pub window: f64,
    /// Points used to tabulate the action when searching for minima.
    pub saddle_points: usize,
}

impl Default for TsSolverOptions {
    fn default() -> Self {
        TsSolverOptions {
            quad: QuadOptions { tol: 1e-11, initial_panels: 256, ..QuadOptions::default() },
            quad_mode: QuadMode::Direct,
            fixed_point: FixedPointOptions { adaptive: true, ..FixedPointOptions::default() },
            newton: true,
            residual_tol: 1e-8,
            window: 1.0,
            saddle_points: 2401,
        }
    }
}

fn kernel_terms(q: f64, sigma_w2: f64) -> [f64; 3] {
    let dd = denom(q, sigma_w2);
    let q2 = q * q;
    let r = q2 / dd;
    [4.0 * r / PI, -8.0 * r * r / (6f64.sqrt() * PI), 8.0 * r * r * r / (3.0 * PI)]
}

/// The 2×2 kernel in the normalized `(H₁, H₃/√6)` basis.
///
/// Entries are `σ_a²` times normalized `e^{-S}` averages of the squared and
/// mixed projections of `erf(w·x)`, with `|w|²` replaced by `q² + σ_w²`.
pub fn qtilde_matrix(disc: &DiscrepancyTs, cfg: &TsConfig, opts: &TsSolverOptions) -> Result<Matrix2<f64>> {
    let avg = match opts.quad_mode {
        QuadMode::Direct => direct_averages(disc, cfg, &opts.quad)?,
        QuadMode::Laplace => laplace_averages(disc, cfg, opts)?,
    };
    let s = cfg.sigma_a2;
    Ok(Matrix2::new(s * avg[0], s * avg[1], s * avg[1], s * avg[2]))
}

fn direct_averages(disc: &DiscrepancyTs, cfg: &TsConfig, quad: &QuadOptions) -> Result<[f64; 3]> {
    let u = cfg.effective_interaction();
    let logw = |q: f64| -action_with_u(q, disc, cfg, u);
    let f = |q: f64| {
        let t = kernel_terms(q, cfg.sigma_w2);
        [1.0, t[0], t[1], t[2]]
    };
    // every integrand and the weight are even, so integrate over q ≥ 0
    let mut hi = 5.0 * cfg.sigma_w2.sqrt() + 2.0;
    for _ in 0..12 {
        let r = integrate_weighted_many(f, logw, 0.0, hi, quad)?;
        if logw(hi) - r.log_shift < (1e-12f64).ln() {
            return Ok([r.ratio(1), r.ratio(2), r.ratio(3)]);
        }
        hi *= 1.5;
    }
    Err(Error::Quadrature { estimate: f64::NAN, error_bound: f64::INFINITY })
}

fn laplace_averages(disc: &DiscrepancyTs, cfg: &TsConfig, opts: &TsSolverOptions) -> Result<[f64; 3]> {
    let saddles = find_saddles_ts(disc, cfg, opts);
    let minima: Vec<_> = saddles.minima.iter().filter(|m| m.interior && m.curvature > 0.0).collect();
    if minima.is_empty() {
        return Err(Error::config("quad_mode", "Laplace mode needs at least one interior minimum"));
    }
    let s_min = minima.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut acc = [0.0; 3];
    for m in &minima {
        let mass = (-(m.value - s_min)).exp() / m.curvature.sqrt();
        let h = 1e-4 * (1.0 + m.location.abs());
        let f0 = kernel_terms(m.location, cfg.sigma_w2);
        let fp = kernel_terms(m.location + h, cfg.sigma_w2);
        let fm = kernel_terms(m.location - h, cfg.sigma_w2);
        for k in 0..3 {
            let f2 = (fp[k] - 2.0 * f0[k] + fm[k]) / (h * h);
            acc[k] += mass * (f0[k] + f2 / (2.0 * m.curvature));
        }
        z += mass;
    }
    Ok([acc[0] / z, acc[1] / z, acc[2] / z])
}

/// Solve `[b; √6 c] = (σ²/n) [Q̃ + (σ²/n) I]⁻¹ [1; √6 ε]`.
pub fn gpr_update(qtilde: &Matrix2<f64>, cfg: &TsConfig) -> Result<DiscrepancyTs> {
    if cfg.n == 0 {
        return Err(Error::config("n", "the discrepancy update needs n ≥ 1"));
    }
    let ridge = cfg.sigma2 / cfg.n as f64;
    let m = qtilde + Matrix2::identity() * ridge;
    let rhs = Vector2::new(1.0, 6f64.sqrt() * cfg.eps);
    let scale = m.abs().max();
    if !(m.determinant().abs() > 1e-14 * scale * scale) {
        return Err(Error::Singular(format!("Q̃ + (σ²/n)I = {m:?}")));
    }
    let x = m.lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("{m:?}")))? * ridge;
    Ok(DiscrepancyTs { b: x[0], c: x[1] / 6f64.sqrt() })
}

/// A self-consistent `(b, c)` and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcSolution {
    pub disc: DiscrepancyTs,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// `‖Δ‖∞` per damped iteration, then `‖disc − map(disc)‖∞` per Newton step.
    pub trace: Vec<f64>,
}

fn self_map(disc: &DiscrepancyTs, cfg: &TsConfig, opts: &TsSolverOptions) -> Result<DiscrepancyTs> {
    gpr_update(&qtilde_matrix(disc, cfg, opts)?, cfg)
}

fn residual_of(x: &DiscrepancyTs, cfg: &TsConfig, opts: &TsSolverOptions) -> Result<[f64; 2]> {
    let m = self_map(x, cfg, opts)?;
    Ok([m.b - x.b, m.c - x.c])
}

fn norm_inf(r: &[f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

/// Damped fixed-point iteration of `disc ↦ gpr_update(qtilde_matrix(disc))`,
/// optionally followed by Newton polishing.
pub fn solve_bc(cfg: &TsConfig, init: DiscrepancyTs, opts: &TsSolverOptions) -> Result<BcSolution> {
    cfg.validate()?;
    let map = |x: &[f64]| -> Result<Vec<f64>> {
        let m = self_map(&DiscrepancyTs { b: x[0], c: x[1] }, cfg, opts)?;
        Ok(vec![m.b, m.c])
    };
    let fp = fixed_point(map, &[init.b, init.c], &opts.fixed_point)?;
    let mut x = DiscrepancyTs { b: fp.x[0], c: fp.x[1] };
    let mut trace = fp.steps;
    let mut iterations = fp.iterations;
    let mut r = residual_of(&x, cfg, opts)?;
    if opts.newton {
        for _ in 0..50 {
            let rn = norm_inf(&r);
            trace.push(rn);
            if rn < 1e-13 {
                break;
            }
            iterations += 1;
            let h = 1e-7;
            let mut jac = Matrix2::zeros();
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                if j == 0 {
                    xp.b += h;
                    xm.b -= h;
                } else {
                    xp.c += h;
                    xm.c -= h;
                }
                let (rp, rm) = (residual_of(&xp, cfg, opts)?, residual_of(&xm, cfg, opts)?);
                jac[(0, j)] = (rp[0] - rm[0]) / (2.0 * h);
                jac[(1, j)] = (rp[1] - rm[1]) / (2.0 * h);
            }
            let Some(dx) = jac.lu().solve(&Vector2::new(-r[0], -r[1])) else { break };
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-4 {
                let trial = DiscrepancyTs { b: x.b + t * dx[0], c: x.c + t * dx[1] };
                if let Ok(rt) = residual_of(&trial, cfg, opts) {
                    if norm_inf(&rt) < rn * (1.0 - 0.1 * t) {
                        x = trial;
                        r = rt;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
    }
    let residual = norm_inf(&r);
    Ok(BcSolution { disc: x, converged: residual < opts.residual_tol, iterations, residual, trace })
}

/// Solutions reached from the GP-like start, the learned start and any extra
/// starts. Converged solutions are deduplicated; non-converged attempts are
/// kept only when nothing converged.
pub fn solve_bc_all(cfg: &TsConfig, extra: &[DiscrepancyTs], opts: &TsSolverOptions) -> Result<Vec<BcSolution>> {
    let mut starts = vec![DiscrepancyTs::gp_start(cfg.eps), DiscrepancyTs::learned_start(cfg.eps)];
    starts.extend_from_slice(extra);
    let mut converged: Vec<BcSolution> = Vec::new();
    let mut failed: Vec<BcSolution> = Vec::new();
    let mut first_err = None;
    for s in starts {
        match solve_bc(cfg, s, opts) {
            Ok(sol) if sol.converged => {
                if !converged.iter().any(|c| c.disc.max_diff(&sol.disc) < 1e-6) {
                    converged.push(sol);
                }
            }
            Ok(sol) => failed.push(sol),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if !converged.is_empty() {
        converged.sort_by(|a, b| b.disc.b.total_cmp(&a.disc.b));
        return Ok(converged);
    }
    if !failed.is_empty() {
        return Ok(failed);
    }
    Err(first_err.unwrap_or(Error::Singular("no start produced a solution".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cfg_with_ridge_one() -> TsConfig {
        TsConfig { n: 1, sigma2: 1.0, ..TsConfig::reference(1.0) }
    }

    #[test]
    fn zero_kernel_returns_target() {
        let cfg = cfg_with_ridge_one();
        let d = gpr_update(&Matrix2::zeros(), &cfg).unwrap();
        assert!((d.b - 1.0).abs() < 1e-15 && (d.c - cfg.eps).abs() < 1e-15);
    }

    #[test]
    fn ridge_kernel_halves() {
        let cfg = cfg_with_ridge_one();
        let d = gpr_update(&Matrix2::identity(), &cfg).unwrap();
        assert!((d.b - 0.5).abs() < 1e-15 && (d.c - cfg.eps / 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = stream_rng(5, 0);
        let cfg = TsConfig::reference(0.2);
        let ridge = cfg.sigma2 / cfg.n as f64;
        for _ in 0..50 {
            let a = Matrix2::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * 1e-3);
            let q = a * a.transpose();
            let d = gpr_update(&q, &cfg).unwrap();
            let x = Vector2::new(d.b, 6f64.sqrt() * d.c);
            let lhs = (q + Matrix2::identity() * ridge) * x / ridge;
            let rhs = Vector2::new(1.0, 6f64.sqrt() * cfg.eps);
            assert!((lhs - rhs).abs().max() < 1e-12);
        }
    }

    #[test]
    fn singular_system_reported() {
        let cfg = cfg_with_ridge_one();
        let q = Matrix2::new(-1.0, 0.0, 0.0, 0.5);
        assert!(matches!(gpr_update(&q, &cfg), Err(Error::Singular(_))));
    }

    #[test]
    fn qtilde_signs_and_symmetry() {
        let cfg = TsConfig::reference(0.2);
        let q = qtilde_matrix(&DiscrepancyTs { b: 0.4, c: -0.2 }, &cfg, &TsSolverOptions::default()).unwrap();
        assert_eq!(q[(0, 1)], q[(1, 0)]);
        assert!(q[(0, 1)] <= 0.0 && q[(0, 0)] > 0.0 && q[(1, 1)] > 0.0);
    }

    #[test]
    fn qtilde_stable_under_refinement() {
        let cfg = TsConfig::reference(0.16);
        let disc = DiscrepancyTs { b: 0.2, c: -0.28 };
        let base = TsSolverOptions::default();
        let fine =
            TsSolverOptions { quad: QuadOptions { initial_panels: 2 * base.quad.initial_panels, ..base.quad }, ..base };
        let a = qtilde_matrix(&disc, &cfg, &base).unwrap();
        let b = qtilde_matrix(&disc, &cfg, &fine).unwrap();
        for k in 0..4 {
            assert!((a[k] / b[k] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn laplace_mode_tracks_direct() {
        let cfg = TsConfig::reference(0.3);
        let disc = DiscrepancyTs { b: 0.5, c: -0.29 };
        let direct = qtilde_matrix(&disc, &cfg, &TsSolverOptions::default()).unwrap();
        let opts = TsSolverOptions { quad_mode: QuadMode::Laplace, ..TsSolverOptions::default() };
        let lap = qtilde_matrix(&disc, &cfg, &opts).unwrap();
        assert!((lap[(0, 0)] / direct[(0, 0)] - 1.0).abs() < 0.05);
    }

    #[test]
    fn prior_average_matches_monte_carlo() {
        // with b = c = 0 the weight is the Gaussian N(0, σ_w²/d)
        let cfg = TsConfig::reference(0.2);
        let q = qtilde_matrix(&DiscrepancyTs { b: 0.0, c: 0.0 }, &cfg, &TsSolverOptions::default()).unwrap();
        let sd = (cfg.sigma_w2 / cfg.d as f64).sqrt();
        let mut rng = stream_rng(17, 0);
        let draws = 2_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let x = sd * rng.sample::<f64, _>(StandardNormal);
            acc += 4.0 * x * x / (PI * denom(x, cfg.sigma_w2));
        }
        let mc = cfg.sigma_a2 * acc / draws as f64;
        assert!((q[(0, 0)] / mc - 1.0).abs() < 5e-3, "{} vs {mc}", q[(0, 0)]);
    }

    #[test]
    fn solution_is_a_fixed_point() {
        let cfg = TsConfig::reference(0.25);
        let opts = TsSolverOptions::default();
        let sol = solve_bc(&cfg, DiscrepancyTs::gp_start(cfg.eps), &opts).unwrap();
        assert!(sol.converged, "{sol:?}");
        assert!(sol.residual < 1e-8);
        let m = self_map(&sol.disc, &cfg, &opts).unwrap();
        assert!(m.max_diff(&sol.disc) < 1e-8);
        assert!(sol.disc.b > 0.0 && sol.disc.b < 1.0);
        assert!(sol.disc.c < 0.0 && sol.disc.c > cfg.eps);
    }
}
